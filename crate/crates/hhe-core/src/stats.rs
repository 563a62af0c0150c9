//! Estimators and goodness-of-fit statistics over batches of simulated
//! epidemics: major-outbreak classification, Wald and chi-square confidence
//! intervals, and the exact one-sample Kolmogorov-Smirnov distance to the
//! limiting normal law.

use serde::Serialize;
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};
use statrs::function::erf;

use crate::error::{Error, Result};
use crate::gontcharoff::Kahan;
use crate::simulator::EpidemicOutcome;

/// Rule deciding which runs count as major outbreaks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MajorCutoff {
    /// Major iff the infected fraction `Z / N` reaches the threshold.
    Fraction(f64),
    /// Major iff at least `floor(ln n)` households are infected. For n < 3
    /// the threshold is zero and every run is major; the rule is meant for
    /// populations with many households.
    Households,
}

impl Default for MajorCutoff {
    fn default() -> Self {
        MajorCutoff::Fraction(0.2)
    }
}

impl MajorCutoff {
    pub fn validate(&self) -> Result<()> {
        if let MajorCutoff::Fraction(f) = self {
            if !(*f > 0.0 && *f < 1.0) {
                return Err(Error::InvalidParameter(format!("fraction cutoff {f} outside (0,1)")));
            }
        }
        Ok(())
    }

    pub fn is_major(&self, outcome: &EpidemicOutcome, n_households: u32, population: u64) -> bool {
        match *self {
            MajorCutoff::Fraction(f) => f64::from(outcome.final_size) / population as f64 >= f,
            MajorCutoff::Households => {
                let threshold = f64::from(n_households).ln().floor() as u32;
                outcome.households_infected >= threshold
            }
        }
    }
}

/// Conditional estimates over one batch of runs. The `z`/`sigma` fields hold
/// statistics over major runs only and are absent when no run (or, for the
/// spread estimates, fewer than two runs) reached the cutoff.
#[derive(Debug, Clone, Serialize)]
pub struct BatchSummary {
    pub n_total: u64,
    pub n_major: u64,
    /// Fraction of runs that were major.
    pub pi_hat: f64,
    /// 95% Wald interval for `pi_hat`.
    pub pi_ci: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_ci: Option<[f64; 2]>,
    /// Scaled spread `sqrt(N) * sd(major fractions)`, the finite-N estimate
    /// of the limiting standard deviation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_hat: Option<f64>,
    /// 95% chi-square interval for `sigma_hat`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_ci: Option<[f64; 2]>,
    /// Filled in by callers that know the limiting law; see [`ks_statistic`].
    #[serde(rename = "ks_D", skip_serializing_if = "Option::is_none")]
    pub ks_d: Option<f64>,
    pub no_major_outbreaks: bool,
}

/// Classifies runs against `cutoff` and estimates the outbreak probability
/// and the conditional final-size law.
pub fn classify_and_estimate(
    outcomes: &[EpidemicOutcome],
    n_households: u32,
    h: u32,
    cutoff: MajorCutoff,
) -> Result<BatchSummary> {
    cutoff.validate()?;
    if outcomes.is_empty() {
        return Err(Error::InvalidParameter("empty outcome batch".into()));
    }
    let population = u64::from(n_households) * u64::from(h);
    let n_total = outcomes.len() as u64;

    let fractions = major_fractions(outcomes, n_households, h, cutoff);
    let n_major = fractions.len() as u64;

    let pi_hat = n_major as f64 / n_total as f64;
    let half = 1.96 * (pi_hat * (1.0 - pi_hat) / n_total as f64).sqrt();
    let pi_ci = [pi_hat - half, pi_hat + half];

    let mut summary = BatchSummary {
        n_total,
        n_major,
        pi_hat,
        pi_ci,
        z_hat: None,
        z_ci: None,
        sigma_hat: None,
        sigma_ci: None,
        ks_d: None,
        no_major_outbreaks: n_major == 0,
    };
    if n_major == 0 {
        return Ok(summary);
    }

    let (mean, sd) = mean_and_sample_sd(&fractions);
    summary.z_hat = Some(mean);
    if n_major >= 2 {
        let half = 1.96 * sd / (n_major as f64).sqrt();
        summary.z_ci = Some([mean - half, mean + half]);
        let sigma_hat = (population as f64).sqrt() * sd;
        let dof = n_major - 1;
        let q1 = chi2_quantile(0.025, dof)?;
        let q2 = chi2_quantile(0.975, dof)?;
        summary.sigma_hat = Some(sigma_hat);
        summary.sigma_ci =
            Some([sigma_hat * (dof as f64 / q2).sqrt(), sigma_hat * (dof as f64 / q1).sqrt()]);
    }
    Ok(summary)
}

/// Infected fractions of the major runs, in run order.
pub fn major_fractions(
    outcomes: &[EpidemicOutcome],
    n_households: u32,
    h: u32,
    cutoff: MajorCutoff,
) -> Vec<f64> {
    let population = u64::from(n_households) * u64::from(h);
    outcomes
        .iter()
        .filter(|o| cutoff.is_major(o, n_households, population))
        .map(|o| f64::from(o.final_size) / population as f64)
        .collect()
}

/// Two-pass compensated mean and sample standard deviation (n-1 divisor;
/// sd is 0 for a single observation). Permutation-stable to ~1e-15.
pub fn mean_and_sample_sd(xs: &[f64]) -> (f64, f64) {
    assert!(!xs.is_empty());
    let mut sum = Kahan::default();
    for &x in xs {
        sum.add(x);
    }
    let mean = sum.value() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let mut ss = Kahan::default();
    for &x in xs {
        let d = x - mean;
        ss.add(d * d);
    }
    (mean, (ss.value() / (xs.len() - 1) as f64).sqrt())
}

/// Exact sup-distance between the empirical cdf of `samples` and the normal
/// cdf with the given mean and variance `sigma2 / n_pop` (the limiting law of
/// the major-outbreak fraction at population size `n_pop`).
pub fn ks_statistic(samples: &[f64], z: f64, sigma2: f64, n_pop: u64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("empty sample for ks statistic".into()));
    }
    if !sigma2.is_finite() || sigma2 <= 0.0 || n_pop == 0 {
        return Err(Error::InvalidParameter(format!(
            "ks statistic needs sigma2 > 0 and a population, got {sigma2} and {n_pop}"
        )));
    }
    let var = sigma2 / n_pop as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal_cdf(x, z, var)?;
        let hi = (i + 1) as f64 / n;
        let lo = i as f64 / n;
        d = d.max((hi - f).abs()).max((lo - f).abs());
    }
    Ok(d)
}

/// Normal cdf at `x` for the given mean and variance.
pub fn normal_cdf(x: f64, mean: f64, var: f64) -> Result<f64> {
    if !var.is_finite() || var <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "normal cdf needs a positive finite variance, got {var}"
        )));
    }
    Ok(0.5 * erf::erfc(-(x - mean) / (2.0 * var).sqrt()))
}

/// Standard normal quantile, the inverse of [`normal_cdf`] at mean 0 and
/// variance 1.
pub fn normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level {q} outside (0,1)")));
    }
    Ok(std::f64::consts::SQRT_2 * erf::erf_inv(2.0 * q - 1.0))
}

/// Chi-square quantile. The library's generic inverse is a coarse bisection,
/// so its result is polished with Newton steps on the (accurate) cdf until
/// the iterate is stable to full precision.
pub fn chi2_quantile(q: f64, dof: u64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level {q} outside (0,1)")));
    }
    if dof == 0 {
        return Err(Error::InvalidParameter("chi-square needs dof >= 1".into()));
    }
    let law = ChiSquared::new(dof as f64)
        .map_err(|e| Error::InvalidParameter(format!("chi-square setup: {e}")))?;
    let mut x = law.inverse_cdf(q).max(f64::MIN_POSITIVE);
    for _ in 0..64 {
        let density = law.pdf(x);
        if !density.is_finite() || density <= 0.0 {
            break;
        }
        // Damped to stay on the positive axis; the cdf is strictly
        // increasing, so the step cannot cycle.
        let next = (x - (law.cdf(x) - q) / density).max(x * 0.0625);
        let done = (next - x).abs() <= 1e-14 * x;
        x = next;
        if done {
            break;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(final_size: u32, households_infected: u32) -> EpidemicOutcome {
        EpidemicOutcome { final_size, households_infected, global_contacts: 0 }
    }

    #[test]
    fn wald_interval_matches_hand_computation() {
        // 50 of 100 runs major in a population of 100: pi = 0.5 with half
        // width 1.96 * sqrt(0.25/100) = 0.098.
        let mut outcomes = vec![outcome(30, 10); 50];
        outcomes.extend(vec![outcome(5, 2); 50]);
        let s = classify_and_estimate(&outcomes, 50, 2, MajorCutoff::Fraction(0.2)).unwrap();
        assert_eq!(s.n_major, 50);
        assert!((s.pi_hat - 0.5).abs() < 1e-15);
        assert!((s.pi_ci[0] - 0.402).abs() < 1e-12);
        assert!((s.pi_ci[1] - 0.598).abs() < 1e-12);
        assert!(!s.no_major_outbreaks);
    }

    #[test]
    fn all_minor_sets_marker_and_omits_conditionals() {
        let outcomes = vec![outcome(3, 1); 20];
        let s = classify_and_estimate(&outcomes, 50, 2, MajorCutoff::Fraction(0.2)).unwrap();
        assert_eq!(s.n_major, 0);
        assert!(s.no_major_outbreaks);
        assert!(s.z_hat.is_none() && s.z_ci.is_none());
        assert!(s.sigma_hat.is_none() && s.sigma_ci.is_none());
        let json = serde_json::to_value(&s).unwrap();
        assert!(json.get("z_hat").is_none());
        assert_eq!(json["no_major_outbreaks"], serde_json::Value::Bool(true));
    }

    #[test]
    fn single_major_run_has_point_estimate_only() {
        let mut outcomes = vec![outcome(3, 1); 9];
        outcomes.push(outcome(60, 25));
        let s = classify_and_estimate(&outcomes, 50, 2, MajorCutoff::Fraction(0.2)).unwrap();
        assert_eq!(s.n_major, 1);
        assert_eq!(s.z_hat, Some(0.6));
        assert!(s.z_ci.is_none() && s.sigma_hat.is_none());
    }

    #[test]
    fn conditional_estimates_match_known_sample() {
        // Major fractions 0.4, 0.5, 0.6 over N = 100: mean 0.5, sd 0.1.
        let outcomes = vec![outcome(40, 20), outcome(50, 25), outcome(60, 30)];
        let s = classify_and_estimate(&outcomes, 50, 2, MajorCutoff::Fraction(0.2)).unwrap();
        let z = s.z_hat.unwrap();
        assert!((z - 0.5).abs() < 1e-15);
        let half = 1.96 * 0.1 / 3f64.sqrt();
        let ci = s.z_ci.unwrap();
        assert!((ci[0] - (0.5 - half)).abs() < 1e-12);
        assert!((ci[1] - (0.5 + half)).abs() < 1e-12);
        let sigma = s.sigma_hat.unwrap();
        assert!((sigma - 1.0).abs() < 1e-12, "sqrt(100) * 0.1 = 1");
        let sci = s.sigma_ci.unwrap();
        assert!(sci[0] < sigma && sigma < sci[1]);
    }

    #[test]
    fn households_rule_thresholds_at_floor_log_n() {
        // ln 100 = 4.60..., so the cutoff is 4 infected households.
        let hit = outcome(10, 4);
        let missed = outcome(10, 3);
        assert!(MajorCutoff::Households.is_major(&hit, 100, 200));
        assert!(!MajorCutoff::Households.is_major(&missed, 100, 200));
    }

    #[test]
    fn interval_width_shrinks_with_more_runs() {
        let make = |n: usize| {
            let mut v = vec![outcome(30, 10); n / 2];
            v.extend(vec![outcome(5, 2); n - n / 2]);
            v
        };
        let small = classify_and_estimate(&make(100), 50, 2, MajorCutoff::Fraction(0.2)).unwrap();
        let large =
            classify_and_estimate(&make(10_000), 50, 2, MajorCutoff::Fraction(0.2)).unwrap();
        assert!(large.pi_ci[1] - large.pi_ci[0] < small.pi_ci[1] - small.pi_ci[0]);
    }

    #[test]
    fn estimates_are_permutation_stable() {
        let mut outcomes: Vec<EpidemicOutcome> =
            (0..1000).map(|i| outcome(20 + (i * 37) % 80, 10)).collect();
        let fwd = classify_and_estimate(&outcomes, 50, 2, MajorCutoff::Fraction(0.2)).unwrap();
        outcomes.reverse();
        let rev = classify_and_estimate(&outcomes, 50, 2, MajorCutoff::Fraction(0.2)).unwrap();
        assert!((fwd.z_hat.unwrap() - rev.z_hat.unwrap()).abs() < 1e-14);
        assert!((fwd.sigma_hat.unwrap() - rev.sigma_hat.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_inverts_the_cdf() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        // The erf inverse is accurate to about 1e-9 in the tails.
        for &q in &[0.01, 0.2, 0.6, 0.99] {
            let x = normal_quantile(q).unwrap();
            assert!((normal_cdf(x, 0.0, 1.0).unwrap() - q).abs() < 2e-9);
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert_eq!(normal_cdf(0.0, 0.0, 1.0).unwrap(), 0.5);
        assert!((normal_cdf(1.96, 0.0, 1.0).unwrap() - 0.975_002_104_85).abs() < 1e-10);
        assert!((normal_cdf(1.0, 0.0, 1.0).unwrap() - 0.841_344_746_068_542_9).abs() < 1e-10);
        assert!((normal_cdf(2.0, 0.0, 1.0).unwrap() - 0.977_249_868_051_820_8).abs() < 1e-10);
        // Symmetry, and scaling by mean/variance.
        for &x in &[0.3, 1.7, 4.2] {
            let up = normal_cdf(x, 0.0, 1.0).unwrap();
            let dn = normal_cdf(-x, 0.0, 1.0).unwrap();
            assert!((up + dn - 1.0).abs() < 1e-14);
            let scaled = normal_cdf(2.0 + 3.0 * x, 2.0, 9.0).unwrap();
            assert!((scaled - up).abs() < 1e-14);
        }
        assert!(normal_cdf(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn chi2_quantile_reference_values() {
        // Standard table values at 2.5% / 97.5%.
        assert!((chi2_quantile(0.025, 1).unwrap() - 0.000_982_069_117_175).abs() < 1e-9);
        assert!((chi2_quantile(0.975, 1).unwrap() - 5.023_886_187_31).abs() < 1e-8);
        assert!((chi2_quantile(0.025, 9).unwrap() - 2.700_389_499_98).abs() < 1e-8);
        assert!((chi2_quantile(0.975, 9).unwrap() - 19.022_767_798_6).abs() < 1e-7);
        // The median of a chi-square with large dof approaches dof - 2/3.
        let dof = 100_000u64;
        let med = chi2_quantile(0.5, dof).unwrap();
        assert!((med - (dof as f64 - 2.0 / 3.0)).abs() < 0.01);
        let lo = chi2_quantile(0.025, dof).unwrap();
        let hi = chi2_quantile(0.975, dof).unwrap();
        assert!(lo < med && med < hi);
        assert!(chi2_quantile(0.0, 1).is_err());
        assert!(chi2_quantile(0.5, 0).is_err());
    }

    #[test]
    fn ks_single_sample_at_mean_is_half() {
        let d = ks_statistic(&[0.5], 0.5, 1.0, 100).unwrap();
        assert_eq!(d, 0.5);
    }

    #[test]
    fn ks_exact_quantile_sample_attains_floor() {
        // Samples at the (i - 1/2)/n quantiles give the smallest possible
        // sup-distance, 1/(2n).
        let n = 1000usize;
        let (z, sigma2, n_pop) = (0.6, 1.5, 2000u64);
        let sd = (sigma2 / n_pop as f64).sqrt();
        let samples: Vec<f64> = (1..=n)
            .map(|i| z + sd * normal_quantile((i as f64 - 0.5) / n as f64).unwrap())
            .collect();
        let d = ks_statistic(&samples, z, sigma2, n_pop).unwrap();
        assert!((d - 1.0 / (2.0 * n as f64)).abs() < 1e-9);
    }

    #[test]
    fn ks_is_shift_invariant() {
        let samples = vec![0.55, 0.61, 0.64, 0.58, 0.70];
        let base = ks_statistic(&samples, 0.6, 1.2, 500).unwrap();
        let shifted: Vec<f64> = samples.iter().map(|x| x + 0.25).collect();
        let moved = ks_statistic(&shifted, 0.85, 1.2, 500).unwrap();
        assert!((base - moved).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn ks_rejects_bad_inputs() {
        assert!(ks_statistic(&[], 0.5, 1.0, 100).is_err());
        assert!(ks_statistic(&[0.5], 0.5, 0.0, 100).is_err());
        assert!(ks_statistic(&[0.5], 0.5, 1.0, 0).is_err());
    }

    #[test]
    fn fraction_cutoff_validation() {
        assert!(MajorCutoff::Fraction(0.0).validate().is_err());
        assert!(MajorCutoff::Fraction(1.0).validate().is_err());
        assert!(MajorCutoff::Fraction(0.2).validate().is_ok());
        assert!(MajorCutoff::Households.validate().is_ok());
        let empty: Vec<EpidemicOutcome> = Vec::new();
        assert!(classify_and_estimate(&empty, 10, 2, MajorCutoff::default()).is_err());
    }
}
