//! Large-population limits of the household epidemic.
//!
//! As the number of households grows with the household size fixed, three
//! quantities characterize an epidemic started by `m` initial cases:
//!
//! * `R_*`: mean global contacts emanating from the within-household clump
//!   seeded by one global contact. Major outbreaks are possible iff `R_* > 1`.
//! * `pi = 1 - rho^m`: the major-outbreak probability, with `rho` the
//!   extinction probability of the clump-level branching process.
//! * `z`: the fraction ultimately infected by a major outbreak, the largest
//!   root of `z = 1 - f_S(exp(-mu_G_eff * z))` where `f_S` is the pgf of the
//!   susceptibility-set size.
//!
//! The final-size fluctuation around `z` is asymptotically normal with
//! variance `sigma^2 / N`; `sigma^2` is assembled from household moments at
//! exposure `tau = mu_G_eff * z` by two algebraically equivalent routes that
//! are cross-checked against each other.

use rayon::prelude::*;
use serde::Serialize;

use crate::contact::{ContactLaw, ContactModel, LocalMixing};
use crate::error::{Error, Result};
use crate::gontcharoff::{emanating_pgf, household_moments, pgf_from_pmf, susceptibility_pmf};

/// Convergence tolerance for the extinction-probability iteration.
pub const FIXED_POINT_TOL: f64 = 1e-12;
/// Iteration cap for the extinction-probability iteration.
pub const FIXED_POINT_MAX_ITERS: usize = 100_000;
/// `R_*` this close to 1 is treated as critical: `z = 0`, no variance.
pub const CRITICAL_BAND: f64 = 1e-9;
/// Grid step used to bracket the largest final-size root.
const GRID_STEP: f64 = 1e-3;

/// Reproduction number `R_* = mu_G_eff * E[S]` of the clump process.
pub fn r_star(model: &ContactModel, h: u32, p: f64, mode: LocalMixing) -> Result<f64> {
    let sw = model.with_swap(p)?;
    let mu_eff = sw.moments().mean_g;
    let pmf = susceptibility_pmf(&sw, h, mode)?;
    let mean_s: f64 = pmf.iter().enumerate().map(|(i, &w)| (i as f64 + 1.0) * w).sum();
    Ok(mu_eff * mean_s)
}

/// Extinction probability of the clump branching process and the resulting
/// major-outbreak probability for `m` initial cases.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OutbreakFixedPoint {
    /// Smallest fixed point of the emanating-contacts pgf in `[0, 1]`.
    pub rho: f64,
    /// `1 - rho^m`.
    pub pi: f64,
    /// False when the iteration hit its cap before the tolerance; `rho` is
    /// then the best iterate.
    pub converged: bool,
    pub iterations: usize,
}

/// Iterates `x <- f_C(x)` from 0 to the smallest fixed point of the
/// emanating-contacts pgf, then reports `pi = 1 - rho^m`.
pub fn outbreak_probability(
    model: &ContactModel,
    h: u32,
    p: f64,
    m: u32,
    mode: LocalMixing,
) -> Result<OutbreakFixedPoint> {
    if m == 0 {
        return Err(Error::InvalidParameter("m (initial cases) must be >= 1".into()));
    }
    let sw = model.with_swap(p)?;
    let mut x = 0.0f64;
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=FIXED_POINT_MAX_ITERS {
        let next = emanating_pgf(&sw, h, mode, x)?.clamp(0.0, 1.0);
        iterations = k;
        let done = (next - x).abs() < FIXED_POINT_TOL;
        x = next;
        if done {
            converged = true;
            break;
        }
    }
    Ok(OutbreakFixedPoint { rho: x, pi: 1.0 - x.powi(m as i32), converged, iterations })
}

/// Bisection for the largest root in `(0, 1]` of a function that is positive
/// just below the root and negative at 1.
///
/// Scans down from 1 in `GRID_STEP` increments for the largest grid point
/// where `g > 0`; when even the lowest grid point is non-positive, retries
/// from `1e-9` to catch barely-supercritical roots, and returns 0 when the
/// root is indistinguishable from criticality.
fn largest_root(g: impl Fn(f64) -> f64) -> f64 {
    let steps = (1.0 / GRID_STEP).round() as usize;
    let mut lo = None;
    for k in 0..steps {
        let z = 1.0 - k as f64 * GRID_STEP;
        if g(z) > 0.0 {
            lo = Some(z);
            break;
        }
    }
    match lo {
        Some(zl) => bisect(&g, zl, 1.0),
        None => {
            let floor = 1e-9;
            if g(floor) > 0.0 {
                bisect(&g, floor, GRID_STEP)
            } else {
                0.0
            }
        }
    }
}

/// Bisection on `[lo, hi]` with `g(lo) > 0 >= g(hi)`.
fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-15 {
            return mid;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Expected fraction infected and the matching exposure.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FinalSize {
    /// Largest root of `z = 1 - f_S(exp(-mu_G_eff z))`; 0 when subcritical.
    pub z: f64,
    /// `tau = mu_G_eff * z`, the per-individual external pressure.
    pub tau: f64,
}

/// Solves the final-size fixed-point equation.
pub fn final_size(model: &ContactModel, h: u32, p: f64, mode: LocalMixing) -> Result<FinalSize> {
    let r = r_star(model, h, p, mode)?;
    let sw = model.with_swap(p)?;
    let mu_eff = sw.moments().mean_g;
    if r <= 1.0 + 1e-12 {
        return Ok(FinalSize { z: 0.0, tau: 0.0 });
    }
    let pmf = susceptibility_pmf(&sw, h, mode)?;
    let g = |z: f64| 1.0 - pgf_from_pmf(&pmf, (-mu_eff * z).exp()) - z;
    let z = largest_root(g);
    Ok(FinalSize { z, tau: mu_eff * z })
}

/// Scaled final-size variance, computed two ways.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CltVariance {
    /// Variance of `sqrt(N) (Z/N - z)` from the household-moment assembly.
    pub sigma2: f64,
    /// The same quantity via the per-individual indicator decomposition;
    /// must agree with `sigma2` to within `1e-8` relative.
    pub sigma2_alt: f64,
}

/// Computes the scaled variance of the final-size CLT at the supercritical
/// fixed point. Errors when `R_* <= 1` (no major outbreak to speak of) and
/// when the two assembly routes disagree.
pub fn clt_variance(
    model: &ContactModel,
    h: u32,
    p: f64,
    mode: LocalMixing,
) -> Result<CltVariance> {
    let r = r_star(model, h, p, mode)?;
    if r <= 1.0 + CRITICAL_BAND {
        return Err(Error::InvalidParameter(format!("clt variance needs R_* > 1, got {r}")));
    }
    let fs = final_size(model, h, p, mode)?;
    let sw = model.with_swap(p)?;
    let mom = sw.moments();
    let (mu, var_g) = (mom.mean_g, mom.var_g);
    let hm = household_moments(&sw, h, mode, fs.tau)?;
    let hf = f64::from(h);

    let denom = 1.0 - mu * hm.nu_r_prime;
    if denom <= 0.0 {
        return Err(Error::NumericInstability(format!(
            "b(tau) denominator 1 - mu nu_R' = {denom} not positive"
        )));
    }
    let b = hm.nu_r_prime / denom;
    let one_bmu = 1.0 + b * mu;

    let sigma2 = (one_bmu * one_bmu * hm.var_r
        + b * b * hf * hm.nu_r * (var_g - mu)
        + 2.0 * b * one_bmu * (hm.cov_rg - mu * hm.var_r))
        / hf;

    // Alternative route through the per-individual indicators chi_ij: their
    // within-household covariances are recovered from var(R) and cov(R, G).
    let bern = hm.nu_r * (1.0 - hm.nu_r);
    let sigma2_alt = if h == 1 {
        one_bmu * one_bmu * bern + b * b * hm.nu_r * (var_g - mu)
    } else {
        let cov_chi_chi = (hm.var_r / hf - bern) / (hf - 1.0);
        let cov_chi_xg = (hm.cov_rg - mu * hm.var_r) / (hf * (hf - 1.0));
        one_bmu * one_bmu * bern
            + (hf - 1.0) * one_bmu * one_bmu * cov_chi_chi
            + b * b * hm.nu_r * (var_g - mu)
            + 2.0 * (hf - 1.0) * b * one_bmu * cov_chi_xg
    };

    if (sigma2 - sigma2_alt).abs() > 1e-8 * sigma2.abs().max(1.0) {
        return Err(Error::NumericInstability(format!(
            "variance routes disagree: {sigma2} vs {sigma2_alt}"
        )));
    }
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::NumericInstability(format!("scaled variance {sigma2} out of range")));
    }
    Ok(CltVariance { sigma2, sigma2_alt })
}

/// Final size of the homogeneously mixing epidemic with reproduction number
/// `alpha`: the root in `(0, 1)` of `1 - z = exp(-alpha z)`, or 0 when
/// `alpha <= 1`.
pub fn z_hom(alpha: f64) -> f64 {
    if alpha <= 1.0 {
        return 0.0;
    }
    largest_root(|z| 1.0 - z - (-alpha * z).exp())
}

/// Threshold of the final-size/swap interplay for local laws with
/// `sigma_L^2 <= mu_L`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ZStarThreshold {
    /// `1 - (mu_L - sigma_L^2) / (3 mu_L^2)`.
    pub value: f64,
    /// True on the boundary `sigma_L^2 = mu_L`, where the threshold
    /// degenerates to 1 and carries no information.
    pub degenerate: bool,
}

/// Computes the threshold `z*` against which `z_hom(mu_G + mu_L)` decides
/// whether the final size still increases in `p` near `p = 1`.
pub fn z_star_threshold(mu_l: f64, sigma2_l: f64) -> Result<ZStarThreshold> {
    if !(mu_l > 0.0 && mu_l.is_finite()) {
        return Err(Error::InvalidParameter(format!("z* threshold needs mu_L > 0, got {mu_l}")));
    }
    if !(0.0..=mu_l).contains(&sigma2_l) {
        return Err(Error::InvalidParameter(format!(
            "z* threshold needs 0 <= sigma_L^2 <= mu_L, got sigma_L^2 = {sigma2_l}"
        )));
    }
    let value = 1.0 - (mu_l - sigma2_l) / (3.0 * mu_l * mu_l);
    Ok(ZStarThreshold { value, degenerate: value >= 1.0 - 1e-12 })
}

/// Everything the analysis produces for one `(model, h, p, m)` cell.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AsymptoticSummary {
    pub h: u32,
    pub p: f64,
    pub m: u32,
    pub r_star: f64,
    pub rho: f64,
    pub pi: f64,
    pub z: f64,
    pub tau: f64,
    /// Absent when `R_*` is at or below criticality.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    /// `sqrt(sigma2)`, for direct comparison with reported tables.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

/// Runs the full asymptotic pipeline for one parameter cell.
pub fn summary(
    model: &ContactModel,
    h: u32,
    p: f64,
    m: u32,
    mode: LocalMixing,
) -> Result<AsymptoticSummary> {
    model.validate()?;
    let r = r_star(model, h, p, mode)?;
    let fp = outbreak_probability(model, h, p, m, mode)?;
    let (fs, sigma2) = if r > 1.0 + CRITICAL_BAND {
        (final_size(model, h, p, mode)?, Some(clt_variance(model, h, p, mode)?.sigma2))
    } else {
        (FinalSize { z: 0.0, tau: 0.0 }, None)
    };
    Ok(AsymptoticSummary {
        h,
        p,
        m,
        r_star: r,
        rho: fp.rho,
        pi: fp.pi,
        z: fs.z,
        tau: fs.tau,
        sigma2,
        sigma: sigma2.map(f64::sqrt),
    })
}

/// One grid cell of a parameter sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub h: u32,
    pub p: f64,
    pub r_star: f64,
    pub rho: f64,
    pub pi: f64,
    pub z: f64,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

/// Direction flags over a sweep grid, each true when the quantity never
/// drops by more than `MONOTONE_TOL` along the named axis.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonotonicityReport {
    pub pi_nondecreasing_in_h: bool,
    pub pi_nondecreasing_in_p: bool,
    pub z_nondecreasing_in_h: bool,
    pub z_nondecreasing_in_p: bool,
    pub sigma_nondecreasing_in_h: bool,
    pub sigma_nondecreasing_in_p: bool,
    /// `max_p |z(h_max, p) - z_hom(mu_G + mu_L)|`: how far the largest
    /// household size is from the homogeneous limit.
    pub max_z_gap_at_largest_h: f64,
}

/// Slack allowed before a decrease counts against monotonicity.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Evaluates the pipeline over `h_values x p_values` (in parallel; rows come
/// back in grid order) and summarizes directionality.
pub fn sweep(
    model: &ContactModel,
    h_values: &[u32],
    p_values: &[f64],
    m: u32,
    mode: LocalMixing,
) -> Result<(Vec<SweepRow>, MonotonicityReport)> {
    if h_values.is_empty() || p_values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one h and one p".into()));
    }
    let cells: Vec<(u32, f64)> =
        h_values.iter().flat_map(|&h| p_values.iter().map(move |&p| (h, p))).collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(h, p)| {
            summary(model, h, p, m, mode).map(|s| SweepRow {
                h,
                p,
                r_star: s.r_star,
                rho: s.rho,
                pi: s.pi,
                z: s.z,
                tau: s.tau,
                sigma: s.sigma,
            })
        })
        .collect::<Result<_>>()?;

    let np = p_values.len();
    let get = |hi: usize, pi_idx: usize| -> &SweepRow { &rows[hi * np + pi_idx] };
    let nondecr = |vals: &mut dyn Iterator<Item = Option<f64>>| -> bool {
        let mut prev: Option<f64> = None;
        for v in vals {
            let Some(v) = v else { continue };
            if let Some(pv) = prev {
                if v < pv - MONOTONE_TOL {
                    return false;
                }
            }
            prev = Some(v);
        }
        true
    };

    let mut report = MonotonicityReport {
        pi_nondecreasing_in_h: true,
        pi_nondecreasing_in_p: true,
        z_nondecreasing_in_h: true,
        z_nondecreasing_in_p: true,
        sigma_nondecreasing_in_h: true,
        sigma_nondecreasing_in_p: true,
        max_z_gap_at_largest_h: 0.0,
    };
    for pi_idx in 0..np {
        let col =
            |f: fn(&SweepRow) -> Option<f64>| (0..h_values.len()).map(move |hi| f(get(hi, pi_idx)));
        report.pi_nondecreasing_in_h &= nondecr(&mut col(|r| Some(r.pi)));
        report.z_nondecreasing_in_h &= nondecr(&mut col(|r| Some(r.z)));
        report.sigma_nondecreasing_in_h &= nondecr(&mut col(|r| r.sigma));
    }
    for hi in 0..h_values.len() {
        let row = |f: fn(&SweepRow) -> Option<f64>| (0..np).map(move |pj| f(get(hi, pj)));
        report.pi_nondecreasing_in_p &= nondecr(&mut row(|r| Some(r.pi)));
        report.z_nondecreasing_in_p &= nondecr(&mut row(|r| Some(r.z)));
        report.sigma_nondecreasing_in_p &= nondecr(&mut row(|r| r.sigma));
    }

    let base = model.moments();
    let target = z_hom(base.mean_g + base.mean_l);
    let hi_last = h_values.len() - 1;
    report.max_z_gap_at_largest_h =
        (0..np).map(|pj| (get(hi_last, pj).z - target).abs()).fold(0.0, f64::max);

    Ok((rows, report))
}

/// Writes sweep rows as `h,p,r_star,rho,pi,z,tau,sigma` CSV; the sigma cell
/// is empty at or below criticality.
pub fn write_sweep_csv<W: std::io::Write>(mut w: W, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(w, "h,p,r_star,rho,pi,z,tau,sigma")?;
    for r in rows {
        write!(w, "{},{},{},{},{},{},{},", r.h, r.p, r.r_star, r.rho, r.pi, r.z, r.tau)?;
        match r.sigma {
            Some(s) => writeln!(w, "{s}")?,
            None => writeln!(w)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::MixingLaw;
    use approx::assert_relative_eq;

    fn poisson11() -> ContactModel {
        ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 }
    }

    #[test]
    fn r_star_poisson_h2() {
        // E[S] = 2 - e^{-1} and mu_eff = 1.
        let r = r_star(&poisson11(), 2, 0.0, LocalMixing::WithReplacement).unwrap();
        assert_relative_eq!(r, 2.0 - (-1.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn constant_h2_goes_extinct_never() {
        // f_C(s) = s^2 has smallest fixed point 0, so an outbreak is certain.
        let m = ContactModel::Constant { g: 1, l: 1 };
        let fp = outbreak_probability(&m, 2, 0.0, 1, LocalMixing::WithReplacement).unwrap();
        assert!(fp.converged);
        assert_eq!(fp.rho, 0.0);
        assert_eq!(fp.pi, 1.0);
    }

    #[test]
    fn outbreak_rho_is_fixed_point() {
        for (m, h, p) in [
            (poisson11(), 2u32, 0.0),
            (poisson11(), 3, 0.4),
            (ContactModel::IndependentBinomial { n_g: 2, q_g: 0.5, n_l: 2, q_l: 0.5 }, 4, 0.2),
        ] {
            let sw = m.with_swap(p).unwrap();
            let fp = outbreak_probability(&m, h, p, 1, LocalMixing::WithReplacement).unwrap();
            assert!(fp.converged);
            let f_rho = emanating_pgf(&sw, h, LocalMixing::WithReplacement, fp.rho).unwrap();
            assert!((f_rho - fp.rho).abs() < 1e-10, "residual {}", f_rho - fp.rho);
        }
    }

    #[test]
    fn poisson_outbreak_equals_final_size() {
        // With independent Poisson counts the two fixed points coincide.
        for (h, p) in [(2u32, 0.0), (3, 0.0), (2, 0.3)] {
            let fp =
                outbreak_probability(&poisson11(), h, p, 1, LocalMixing::WithReplacement).unwrap();
            let fs = final_size(&poisson11(), h, p, LocalMixing::WithReplacement).unwrap();
            assert!((fp.pi - fs.z).abs() < 1e-6, "h={h} p={p}: pi={} z={}", fp.pi, fs.z);
        }
    }

    #[test]
    fn final_size_residual_is_tiny() {
        let m = poisson11();
        let sw = m.with_swap(0.0).unwrap();
        let fs = final_size(&m, 2, 0.0, LocalMixing::WithReplacement).unwrap();
        let pmf = susceptibility_pmf(&sw, 2, LocalMixing::WithReplacement).unwrap();
        let residual = 1.0 - pgf_from_pmf(&pmf, (-fs.tau).exp()) - fs.z;
        assert!(residual.abs() < 1e-12, "residual {residual}");
        assert!(fs.z > 0.6 && fs.z < 0.63);
    }

    #[test]
    fn subcritical_final_size_is_zero() {
        let m = ContactModel::IndependentPoisson { lambda_g: 0.3, lambda_l: 0.3 };
        let fs = final_size(&m, 2, 0.0, LocalMixing::WithReplacement).unwrap();
        assert_eq!(fs.z, 0.0);
        assert!(clt_variance(&m, 2, 0.0, LocalMixing::WithReplacement).is_err());
        let s = summary(&m, 2, 0.0, 1, LocalMixing::WithReplacement).unwrap();
        assert!(s.sigma2.is_none());
        assert!(s.pi < 1e-6);
    }

    #[test]
    fn constant_h2_matches_homogeneous_double_rate() {
        // Constant(2,1), h=2: the susceptibility set is the whole household,
        // so z solves 1 - z = e^{-4z}, exactly the homogeneous equation.
        let m = ContactModel::Constant { g: 2, l: 1 };
        let fs = final_size(&m, 2, 0.0, LocalMixing::WithReplacement).unwrap();
        assert_relative_eq!(fs.z, z_hom(4.0), epsilon = 1e-10);
    }

    #[test]
    fn z_hom_reference_points() {
        assert_eq!(z_hom(0.7), 0.0);
        assert_eq!(z_hom(1.0), 0.0);
        for (alpha, expect) in [(1.5, 0.5828), (2.0, 0.7968), (3.0, 0.9405), (4.0, 0.9802)] {
            let z = z_hom(alpha);
            assert!((z - expect).abs() < 5e-5, "z_hom({alpha}) = {z}");
            let residual = 1.0 - z - (-alpha * z).exp();
            assert!(residual.abs() < 1e-12);
        }
    }

    #[test]
    fn z_hom_barely_supercritical() {
        // Root ~ 2(alpha-1)/alpha^2 falls below the bracketing grid.
        let z = z_hom(1.0001);
        assert!(z > 0.0 && z < 1e-3, "z = {z}");
        let residual = 1.0 - z - (-1.0001 * z).exp();
        assert!(residual.abs() < 1e-12);
    }

    #[test]
    fn z_star_threshold_cases() {
        let t = z_star_threshold(1.0, 0.0).unwrap();
        assert_relative_eq!(t.value, 2.0 / 3.0, max_relative = 1e-14);
        assert!(!t.degenerate);
        let t = z_star_threshold(1.0, 1.0).unwrap();
        assert_eq!(t.value, 1.0);
        assert!(t.degenerate);
        assert!(z_star_threshold(0.0, 0.0).is_err());
        assert!(z_star_threshold(1.0, 1.5).is_err());
    }

    #[test]
    fn variance_routes_agree_and_match_homogeneous_closed_form() {
        // One-person households with constant global counts reduce to the
        // homogeneous model, whose scaled variance has a closed form in
        // xi = 1 - z.
        let m = ContactModel::Constant { g: 2, l: 0 };
        let fs = final_size(&m, 1, 0.0, LocalMixing::WithReplacement).unwrap();
        let v = clt_variance(&m, 1, 0.0, LocalMixing::WithReplacement).unwrap();
        let xi = 1.0 - fs.z;
        let (mu, var_g) = (2.0, 0.0);
        let closed =
            (xi * (1.0 - xi) + xi * xi * (1.0 - xi) * (var_g - mu)) / (1.0 - mu * xi).powi(2);
        assert_relative_eq!(v.sigma2, closed, max_relative = 1e-10);
        assert_relative_eq!(v.sigma2, v.sigma2_alt, max_relative = 1e-10);
        // And the reduction really is homogeneous: z matches z_hom(2).
        assert_relative_eq!(fs.z, z_hom(2.0), epsilon = 1e-10);
    }

    #[test]
    fn summary_fields_are_consistent() {
        let s = summary(&poisson11(), 3, 0.25, 2, LocalMixing::WithReplacement).unwrap();
        assert_relative_eq!(s.pi, 1.0 - s.rho * s.rho, max_relative = 1e-12);
        assert_relative_eq!(s.tau, (1.0 + 0.25) * s.z, max_relative = 1e-12);
        assert_eq!(s.sigma.unwrap(), s.sigma2.unwrap().sqrt());
        assert!(s.r_star > 1.0);
    }

    #[test]
    fn sweep_grid_order_and_monotonicity() {
        let (rows, report) =
            sweep(&poisson11(), &[2, 3, 4], &[0.0, 0.5, 1.0], 1, LocalMixing::WithReplacement)
                .unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!((rows[0].h, rows[0].p), (2, 0.0));
        assert_eq!((rows[1].h, rows[1].p), (2, 0.5));
        assert_eq!((rows[3].h, rows[3].p), (3, 0.0));
        assert!(report.pi_nondecreasing_in_h);
        assert!(report.pi_nondecreasing_in_p);
        assert!(report.z_nondecreasing_in_h);
        assert!(report.z_nondecreasing_in_p);
        // At p = 1 every row collapses to the homogeneous epidemic.
        let z2 = z_hom(2.0);
        for row in rows.iter().filter(|r| r.p == 1.0) {
            assert!((row.z - z2).abs() < 1e-9);
        }
        // The distance to the homogeneous limit shrinks with h, and the
        // reported gap is the worst case over p at the largest h (at p = 0,
        // where household structure matters most).
        let gap = |hi: usize| (rows[hi * 3].z - z2).abs();
        assert!(gap(2) < gap(1) && gap(1) < gap(0));
        assert_relative_eq!(report.max_z_gap_at_largest_h, gap(2), max_relative = 1e-9);
    }

    #[test]
    fn constant_sweep_shows_non_monotone_z_in_p() {
        let m = ContactModel::Constant { g: 1, l: 1 };
        let p_grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let (_, report) = sweep(&m, &[4], &p_grid, 1, LocalMixing::WithReplacement).unwrap();
        assert!(!report.z_nondecreasing_in_p, "z should dip for constant counts");
        assert!(report.pi_nondecreasing_in_p, "pi should still be monotone");
    }

    #[test]
    fn mixed_poisson_summary_runs_supercritical() {
        let m = ContactModel::MixedPoisson {
            beta_g: 1.0,
            beta_l: 1.0,
            mixing: MixingLaw::Gamma { shape: 0.5, rate: 0.5 },
        };
        let s = summary(&m, 2, 0.0, 1, LocalMixing::WithReplacement).unwrap();
        assert!(s.r_star > 1.0);
        assert!(s.sigma2.is_some());
        assert!(s.pi > 0.0 && s.pi < 1.0);
        assert!(s.z > 0.0 && s.z < 1.0);
    }
}
