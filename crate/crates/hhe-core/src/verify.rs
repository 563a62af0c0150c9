//! Built-in verification suite.
//!
//! Recomputes benchmark quantities and compares them against recorded
//! reference values, brute-force enumeration oracles, exact-rational
//! re-evaluations of the polynomial recursion, and Monte Carlo estimates.
//! Checks are grouped into named blocks (see [`BLOCKS`]) so callers can run
//! a subset; failures are report content rather than errors, and every
//! internal error is converted into a failing check.

use std::time::Instant;

use num::{BigRational, One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics::{clt_variance, final_size, summary, sweep, z_hom};
use crate::contact::{ContactLaw, ContactModel, GlobalMixing, LocalMixing, MixingLaw};
use crate::error::{Error, Result};
use crate::gontcharoff::{gont_polys, household_moments, susceptibility_pmf, QNodes};
use crate::simulator::{run_batch, run_until_majors, PopulationSpec};
use crate::stats::{classify_and_estimate, ks_statistic, major_fractions, MajorCutoff};

/// Check blocks in run order. `--full` adds the large finite-population
/// reproduction block on top.
pub const BLOCKS: &[&str] = &[
    "table1",
    "counterexamples",
    "monotonicity",
    "swapsign",
    "homogenization",
    "sigma",
    "oracles",
    "simulation",
    "ks",
];

pub fn is_known_block(name: &str) -> bool {
    BLOCKS.contains(&name) || name == "full"
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Block names to run; empty means all of [`BLOCKS`].
    pub only: Vec<String>,
    /// Also run the long finite-population reproduction block.
    pub full: bool,
}

/// One comparison in the report. Boolean checks encode pass/fail in
/// `got` as 1/0 with `expected` 1.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub block: &'static str,
    pub check: String,
    pub expected: f64,
    pub got: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckResult {
    fn within(
        block: &'static str,
        check: impl Into<String>,
        expected: f64,
        got: f64,
        tolerance: f64,
    ) -> Self {
        let pass = got.is_finite() && (got - expected).abs() <= tolerance;
        CheckResult { block, check: check.into(), expected, got, tolerance, pass, detail: None }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    /// Multiplicative band: passes when `got` is within `factor` of `expected`
    /// in ratio. `tolerance` stores the factor.
    fn within_factor(
        block: &'static str,
        check: impl Into<String>,
        expected: f64,
        got: f64,
        factor: f64,
    ) -> Self {
        let pass = got.is_finite() && got >= expected / factor && got <= expected * factor;
        CheckResult {
            block,
            check: check.into(),
            expected,
            got,
            tolerance: factor,
            pass,
            detail: Some("multiplicative band".into()),
        }
    }

    fn flag(
        block: &'static str,
        check: impl Into<String>,
        got: bool,
        detail: Option<String>,
    ) -> Self {
        CheckResult {
            block,
            check: check.into(),
            expected: 1.0,
            got: f64::from(u8::from(got)),
            tolerance: 0.0,
            pass: got,
            detail,
        }
    }

    fn below(block: &'static str, check: impl Into<String>, bound: f64, got: f64) -> Self {
        CheckResult {
            block,
            check: check.into(),
            expected: bound,
            got,
            tolerance: 0.0,
            pass: got.is_finite() && got < bound,
            detail: Some("upper bound".into()),
        }
    }

    fn error(block: &'static str, check: impl Into<String>, err: &Error) -> Self {
        CheckResult {
            block,
            check: check.into(),
            expected: f64::NAN,
            got: f64::NAN,
            tolerance: 0.0,
            pass: false,
            detail: Some(format!("error: {err}")),
        }
    }
}

pub fn all_passed(checks: &[CheckResult]) -> bool {
    !checks.is_empty() && checks.iter().all(|c| c.pass)
}

/// The six benchmark contact laws, all with unit mean global and local
/// counts, ordered by increasing global-count variance.
pub fn benchmark_models() -> Vec<(&'static str, ContactModel)> {
    vec![
        ("constant(1,1)", ContactModel::Constant { g: 1, l: 1 }),
        (
            "binomial(2,1/2)",
            ContactModel::IndependentBinomial { n_g: 2, q_g: 0.5, n_l: 2, q_l: 0.5 },
        ),
        ("poisson(1,1)", ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 }),
        (
            "mixed gamma(2,2)",
            ContactModel::MixedPoisson {
                beta_g: 1.0,
                beta_l: 1.0,
                mixing: MixingLaw::Gamma { shape: 2.0, rate: 2.0 },
            },
        ),
        (
            "mixed exp(1)",
            ContactModel::MixedPoisson {
                beta_g: 1.0,
                beta_l: 1.0,
                mixing: MixingLaw::Exponential { rate: 1.0 },
            },
        ),
        (
            "mixed gamma(1/2,1/2)",
            ContactModel::MixedPoisson {
                beta_g: 1.0,
                beta_l: 1.0,
                mixing: MixingLaw::Gamma { shape: 0.5, rate: 0.5 },
            },
        ),
    ]
}

/// Reference `(pi, z, sigma)` for the benchmark models at `h = 2`, `p = 0`,
/// one initial infective, rounded to four decimals.
const LIMIT_TRIPLES: [(f64, f64, f64); 6] = [
    (1.0, 0.7968, 0.7386),
    (0.8238, 0.6817, 1.0854),
    (0.6181, 0.6181, 1.4201),
    (0.4391, 0.5725, 1.8378),
    (0.3247, 0.5368, 2.2347),
    (0.2060, 0.4829, 2.9959),
];

/// Runs the selected blocks and returns every check result.
pub fn run_verify(opts: &VerifyOptions) -> Vec<CheckResult> {
    let wants = |name: &str| opts.only.is_empty() || opts.only.iter().any(|b| b == name);
    let mut out = Vec::new();
    if wants("table1") {
        block_table1(&mut out);
    }
    if wants("counterexamples") {
        block_counterexamples(&mut out);
    }
    if wants("monotonicity") {
        block_monotonicity(&mut out);
    }
    if wants("swapsign") {
        block_swap_sign(&mut out);
    }
    if wants("homogenization") {
        block_homogenization(&mut out);
    }
    if wants("sigma") {
        block_sigma(&mut out);
    }
    if wants("oracles") {
        block_oracles(&mut out);
    }
    if wants("simulation") {
        block_simulation(&mut out);
    }
    if wants("ks") {
        block_ks(&mut out);
    }
    if opts.full || opts.only.iter().any(|b| b == "full") {
        block_full(&mut out);
    }
    out
}

const MODE: LocalMixing = LocalMixing::WithReplacement;

fn block_table1(out: &mut Vec<CheckResult>) {
    let started = Instant::now();
    for ((name, model), (pi, z, sigma)) in benchmark_models().iter().zip(LIMIT_TRIPLES) {
        match summary(model, 2, 0.0, 1, MODE) {
            Ok(s) => {
                let mut pi_check =
                    CheckResult::within("table1", format!("{name} pi"), pi, s.pi, 5e-4);
                if *name == "mixed gamma(2,2)" {
                    pi_check = pi_check.with_detail(
                        "reference value 0.4391 is inconsistent with this model: a hand-derived \
                         pair-household fixed point (next check), a direct branching-process Monte \
                         Carlo (0.43419 +- 0.00050, one million ancestries), and the recorded \
                         finite-population interval (0.4319, 0.4381) all agree on 0.4339",
                    );
                }
                out.push(pi_check);
                out.push(CheckResult::within("table1", format!("{name} z"), z, s.z, 5e-4));
                out.push(CheckResult::within(
                    "table1",
                    format!("{name} sigma"),
                    sigma,
                    s.sigma.unwrap_or(f64::NAN),
                    5e-4,
                ));
                if *name == "mixed gamma(2,2)" {
                    out.push(CheckResult::within(
                        "table1",
                        format!("{name} pi vs hand-derived fixed point"),
                        gamma22_pair_fixed_point_pi(),
                        s.pi,
                        1e-9,
                    ));
                }
            }
            Err(e) => out.push(CheckResult::error("table1", *name, &e)),
        }
    }
    out.push(CheckResult::below("table1", "runtime seconds", 5.0, started.elapsed().as_secs_f64()));
}

/// Outbreak probability for the gamma(2,2) mixed model in pair households,
/// computed without the polynomial machinery. With joint contact pgf
/// f(s, t) = (1 - ((s - 1) + (t - 1)) / 2)^-2 a pair household emits
/// globally with pgf f_C(s) = f(s, 0) + (f(s, 1) - f(s, 0)) f(s, 1): the
/// first term covers local counts of zero (the partner escapes), the second
/// a hit partner who then emits independently. The minimal fixed point rho
/// of f_C gives pi = 1 - rho.
fn gamma22_pair_fixed_point_pi() -> f64 {
    let f = |s: f64, t: f64| (1.0 - ((s - 1.0) + (t - 1.0)) / 2.0).powi(-2);
    let mut rho = 0.0f64;
    for _ in 0..200 {
        let escape = f(rho, 0.0);
        let emit = f(rho, 1.0);
        let next = escape + (emit - escape) * emit;
        if (next - rho).abs() < 1e-15 {
            rho = next;
            break;
        }
        rho = next;
    }
    1.0 - rho
}

fn block_counterexamples(out: &mut Vec<CheckResult>) {
    let model = ContactModel::Constant { g: 2, l: 1 };
    for (h, p, expected) in [(2u32, 0.0, 0.980), (3, 0.0, 0.961), (2, 1.0, 0.941)] {
        let check = format!("constant(2,1) z at h={h} p={p}");
        match final_size(&model, h, p, MODE) {
            Ok(fs) => out.push(CheckResult::within("counterexamples", check, expected, fs.z, 1e-3)),
            Err(e) => out.push(CheckResult::error("counterexamples", check, &e)),
        }
    }
}

fn block_monotonicity(out: &mut Vec<CheckResult>) {
    let h_values = [2u32, 3, 4, 5, 6];
    let p_values: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
    // z is proved nondecreasing (in h and p) only under a log-convex local
    // pgf; the four Poisson-type models qualify.
    let log_convex = ["poisson(1,1)", "mixed gamma(2,2)", "mixed exp(1)", "mixed gamma(1/2,1/2)"];

    for (name, model) in benchmark_models() {
        let (rows, report) = match sweep(&model, &h_values, &p_values, 1, MODE) {
            Ok(v) => v,
            Err(e) => {
                out.push(CheckResult::error("monotonicity", name, &e));
                continue;
            }
        };
        out.push(CheckResult::flag(
            "monotonicity",
            format!("{name} pi nondecreasing in h"),
            report.pi_nondecreasing_in_h,
            None,
        ));
        out.push(CheckResult::flag(
            "monotonicity",
            format!("{name} pi nondecreasing in p"),
            report.pi_nondecreasing_in_p,
            None,
        ));
        if log_convex.contains(&name) {
            out.push(CheckResult::flag(
                "monotonicity",
                format!("{name} z nondecreasing in h"),
                report.z_nondecreasing_in_h,
                None,
            ));
            out.push(CheckResult::flag(
                "monotonicity",
                format!("{name} z nondecreasing in p"),
                report.z_nondecreasing_in_p,
                None,
            ));
        }
        if name == "constant(1,1)" {
            let np = p_values.len();
            let z_row = |hi: usize| -> Vec<f64> {
                rows[hi * np..(hi + 1) * np].iter().map(|r| r.z).collect()
            };
            // The deterministic law breaks the monotone-in-p pattern once
            // households have three or more members.
            for (hi, &h) in h_values.iter().enumerate().skip(1) {
                let z = z_row(hi);
                let drops = z.windows(2).any(|w| w[1] < w[0] - 1e-9);
                out.push(CheckResult::flag(
                    "monotonicity",
                    format!("{name} z decreases somewhere along p at h={h}"),
                    drops,
                    None,
                ));
            }
            // At h=2 the p=0 and p=1 ends coincide and the path between
            // them rises first.
            let z2 = z_row(0);
            out.push(CheckResult::within(
                "monotonicity",
                format!("{name} z(h=2) equal at p=0 and p=1"),
                z2[0],
                z2[np - 1],
                1e-9,
            ));
            let interior_max = z2[1..np - 1].iter().cloned().fold(f64::MIN, f64::max);
            out.push(CheckResult::flag(
                "monotonicity",
                format!("{name} z(h=2) rises above its endpoints"),
                interior_max > z2[0] + 1e-9,
                None,
            ));
        }
    }
}

fn block_swap_sign(out: &mut Vec<CheckResult>) {
    // Both laws have X_L = 1 always, so the swap threshold sits at
    // z* = 2/3; the sign of dz/dp at p=1 follows the comparison of the
    // homogeneous final size against z*.
    let half_mean = ContactModel::JointTable { entries: vec![(0, 1, 0.5), (1, 1, 0.5)] };
    let two_mean = ContactModel::Constant { g: 2, l: 1 };
    out.push(CheckResult::flag(
        "swapsign",
        "z_hom(1.5) below threshold 2/3",
        z_hom(1.5) < 2.0 / 3.0,
        Some(format!("z_hom(1.5) = {}", z_hom(1.5))),
    ));
    out.push(CheckResult::flag(
        "swapsign",
        "z_hom(3) above threshold 2/3",
        z_hom(3.0) > 2.0 / 3.0,
        Some(format!("z_hom(3) = {}", z_hom(3.0))),
    ));
    let diff_at_one = |model: &ContactModel| -> Result<f64> {
        Ok(final_size(model, 2, 1.0, MODE)?.z - final_size(model, 2, 0.99, MODE)?.z)
    };
    match diff_at_one(&half_mean) {
        Ok(d) => out.push(CheckResult::flag(
            "swapsign",
            "mean-1/2 global law: z rises into p=1",
            d > 0.0,
            Some(format!("z(2,1) - z(2,0.99) = {d:e}")),
        )),
        Err(e) => out.push(CheckResult::error("swapsign", "mean-1/2 global law", &e)),
    }
    match diff_at_one(&two_mean) {
        Ok(d) => out.push(CheckResult::flag(
            "swapsign",
            "mean-2 global law: z falls into p=1",
            d < 0.0,
            Some(format!("z(2,1) - z(2,0.99) = {d:e}")),
        )),
        Err(e) => out.push(CheckResult::error("swapsign", "mean-2 global law", &e)),
    }
}

fn block_homogenization(out: &mut Vec<CheckResult>) {
    let model = ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 };
    let limit = z_hom(2.0);
    let hs = [2u32, 5, 10, 20, 40];
    let mut gaps = Vec::new();
    for &h in &hs {
        match final_size(&model, h, 0.0, MODE) {
            Ok(fs) => gaps.push((fs.z - limit).abs()),
            Err(e) => {
                out.push(CheckResult::error("homogenization", format!("z at h={h}"), &e));
                return;
            }
        }
    }
    for (i, w) in gaps.windows(2).enumerate() {
        out.push(CheckResult::flag(
            "homogenization",
            format!("gap to homogeneous limit shrinks from h={} to h={}", hs[i], hs[i + 1]),
            w[1] < w[0],
            Some(format!("{} -> {}", w[0], w[1])),
        ));
    }
    out.push(CheckResult::below("homogenization", "gap at h=40", 0.01, gaps[hs.len() - 1]));
}

fn block_sigma(out: &mut Vec<CheckResult>) {
    let started = Instant::now();
    const SAMPLES: u64 = 1_000_000;
    for (i, (name, model)) in benchmark_models().into_iter().enumerate() {
        let run = || -> Result<(CheckResult, CheckResult)> {
            let cv = clt_variance(&model, 2, 0.0, MODE)?;
            let rel = (cv.sigma2 - cv.sigma2_alt).abs() / cv.sigma2.abs().max(1.0);
            let dual = CheckResult::within(
                "sigma",
                format!("{name} dual assembly relative gap"),
                0.0,
                rel,
                1e-8,
            );
            let fs = final_size(&model, 2, 0.0, MODE)?;
            let hm = household_moments(&model, 2, MODE, fs.tau)?;
            let mu = model.moments().mean_g;
            let b = hm.nu_r_prime / (1.0 - mu * hm.nu_r_prime);
            let law = EmbeddingLaw { model: &model, h: 2, p: 0.0, mode: MODE, tau: fs.tau, b };
            let (mc, se) = embedding_variance_mc(&law, SAMPLES, 777 + i as u64);
            let mc_check = CheckResult::within(
                "sigma",
                format!("{name} embedding monte carlo"),
                cv.sigma2,
                mc,
                3.0 * se,
            );
            Ok((dual, mc_check))
        };
        match run() {
            Ok((a, b)) => {
                out.push(a);
                out.push(b);
            }
            Err(e) => out.push(CheckResult::error("sigma", name, &e)),
        }
    }
    out.push(CheckResult::below("sigma", "runtime seconds", 30.0, started.elapsed().as_secs_f64()));
}

fn block_oracles(out: &mut Vec<CheckResult>) {
    let correlated = ContactModel::JointTable {
        entries: vec![(0, 0, 0.3), (1, 1, 0.25), (2, 1, 0.25), (0, 2, 0.2)],
    };
    let cases: Vec<(String, ContactModel, u32, f64, LocalMixing)> = vec![
        (
            "constant(1,1) h=2".into(),
            ContactModel::Constant { g: 1, l: 1 },
            2,
            0.0,
            LocalMixing::WithReplacement,
        ),
        (
            "constant(1,1) h=4".into(),
            ContactModel::Constant { g: 1, l: 1 },
            4,
            0.0,
            LocalMixing::WithReplacement,
        ),
        (
            "binomial h=3".into(),
            ContactModel::IndependentBinomial { n_g: 2, q_g: 0.5, n_l: 2, q_l: 0.5 },
            3,
            0.0,
            LocalMixing::WithReplacement,
        ),
        (
            "binomial h=3 without replacement".into(),
            ContactModel::IndependentBinomial { n_g: 2, q_g: 0.5, n_l: 2, q_l: 0.5 },
            3,
            0.0,
            LocalMixing::WithoutReplacement,
        ),
        (
            "binomial h=4 without replacement".into(),
            ContactModel::IndependentBinomial { n_g: 2, q_g: 0.5, n_l: 2, q_l: 0.5 },
            4,
            0.0,
            LocalMixing::WithoutReplacement,
        ),
        (
            "constant(2,1) h=3 swap 0.5".into(),
            ContactModel::Constant { g: 2, l: 1 },
            3,
            0.5,
            LocalMixing::WithReplacement,
        ),
        (
            "correlated table h=4 swap 0.35".into(),
            correlated,
            4,
            0.35,
            LocalMixing::WithReplacement,
        ),
    ];

    for (name, model, h, p, mode) in cases {
        let run = || -> Result<(f64, f64)> {
            let swapped;
            let law: &dyn ContactLaw = if p > 0.0 {
                swapped = model.with_swap(p)?;
                &swapped
            } else {
                &model
            };
            let pmf = susceptibility_pmf(law, h, mode)?;
            let pmf_oracle = enumerate_susceptibility_pmf(&model, h, p, mode)?;
            let pmf_gap =
                pmf.iter().zip(&pmf_oracle).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);

            let s_grid = [0.0, 0.3, 0.7, 1.0];
            let pgf_oracle = enumerate_emanating_pgf(&model, h, p, mode, &s_grid)?;
            let mut pgf_gap = 0.0f64;
            for (&s, oracle) in s_grid.iter().zip(pgf_oracle) {
                let got = crate::gontcharoff::emanating_pgf(law, h, mode, s)?;
                pgf_gap = pgf_gap.max((got - oracle).abs());
            }
            Ok((pmf_gap, pgf_gap))
        };
        match run() {
            Ok((pmf_gap, pgf_gap)) => {
                out.push(CheckResult::within(
                    "oracles",
                    format!("{name}: susceptibility pmf vs enumeration"),
                    0.0,
                    pmf_gap,
                    1e-12,
                ));
                out.push(CheckResult::within(
                    "oracles",
                    format!("{name}: emanating pgf vs enumeration"),
                    0.0,
                    pgf_gap,
                    1e-12,
                ));
            }
            Err(e) => out.push(CheckResult::error("oracles", name, &e)),
        }
    }

    // Polynomial recursion against exact rational arithmetic on the nodes
    // actually used at h = 12, plus a synthetic geometric ladder.
    let poisson = ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 };
    let rational_case = || -> Result<f64> {
        let q = QNodes::new(&poisson, 12, LocalMixing::WithReplacement)?;
        let nodes: Vec<f64> = (1..12).map(|k| q.q(k, 1.0)).collect();
        Ok(max_rel_gap_vs_exact(1.0, &nodes, 11))
    };
    match rational_case() {
        Ok(gap) => out.push(CheckResult::within(
            "oracles",
            "recursion vs exact rationals, h=12 avoidance nodes",
            0.0,
            gap,
            1e-10,
        )),
        Err(e) => out.push(CheckResult::error("oracles", "recursion vs exact rationals", &e)),
    }
    let geo: Vec<f64> = (0..12).map(|k| 0.85f64.powi(k + 1)).collect();
    out.push(CheckResult::within(
        "oracles",
        "recursion vs exact rationals, geometric nodes",
        0.0,
        max_rel_gap_vs_exact(0.4, &geo, 12),
        1e-10,
    ));
}

fn block_simulation(out: &mut Vec<CheckResult>) {
    let started = Instant::now();
    let spec = PopulationSpec {
        model: ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 },
        n: 1000,
        h: 2,
        p: 0.0,
        m: 1,
        local_mode: LocalMixing::WithReplacement,
        global_mode: GlobalMixing::WithReplacement,
        seed: 42,
    };
    let run = || -> Result<(f64, f64)> {
        let outcomes = run_batch(&spec, 10_000)?;
        let s = classify_and_estimate(&outcomes, spec.n, spec.h, MajorCutoff::Fraction(0.2))?;
        Ok((s.z_hat.unwrap_or(f64::NAN), s.pi_hat))
    };
    match run() {
        Ok((z_hat, pi_hat)) => {
            out.push(CheckResult::within(
                "simulation",
                "z_hat vs N=2000 reference",
                0.6170,
                z_hat,
                0.01,
            ));
            out.push(CheckResult::within(
                "simulation",
                "pi_hat vs N=2000 reference",
                0.6169,
                pi_hat,
                0.02,
            ));
        }
        Err(e) => out.push(CheckResult::error("simulation", "poisson batch", &e)),
    }
    out.push(CheckResult::below(
        "simulation",
        "runtime seconds",
        60.0,
        started.elapsed().as_secs_f64(),
    ));
}

fn block_ks(out: &mut Vec<CheckResult>) {
    let model = ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 };
    let limit = match summary(&model, 2, 0.0, 1, MODE) {
        Ok(s) => s,
        Err(e) => {
            out.push(CheckResult::error("ks", "asymptotic inputs", &e));
            return;
        }
    };
    let Some(sigma2) = limit.sigma2 else {
        out.push(CheckResult::flag("ks", "asymptotic variance available", false, None));
        return;
    };
    const TARGET: usize = 10_000;
    let cutoff = MajorCutoff::Fraction(0.2);
    let mut ds = Vec::new();
    for (n_households, expected_d) in [(125u32, 0.0414), (1000, 0.0154)] {
        let spec = PopulationSpec {
            model: model.clone(),
            n: n_households,
            h: 2,
            p: 0.0,
            m: 1,
            local_mode: LocalMixing::WithReplacement,
            global_mode: GlobalMixing::WithReplacement,
            seed: 4242 + u64::from(n_households),
        };
        let n_pop = spec.population();
        let run = || -> Result<f64> {
            let (outcomes, majors) = run_until_majors(&spec, TARGET, 200_000, |o| {
                cutoff.is_major(o, n_households, n_pop)
            })?;
            if majors < TARGET {
                return Err(Error::InvalidParameter(format!(
                    "only {majors} major runs found before the cap"
                )));
            }
            let fractions = major_fractions(&outcomes, n_households, 2, cutoff);
            ks_statistic(&fractions, limit.z, sigma2, n_pop)
        };
        match run() {
            Ok(d) => {
                out.push(CheckResult::within_factor(
                    "ks",
                    format!("D at N={n_pop}, {TARGET} major runs"),
                    expected_d,
                    d,
                    3.0,
                ));
                ds.push(d);
            }
            Err(e) => out.push(CheckResult::error("ks", format!("D at N={n_pop}"), &e)),
        }
    }
    if ds.len() == 2 {
        out.push(CheckResult::flag(
            "ks",
            "D decreases from N=250 to N=2000",
            ds[0] > ds[1],
            Some(format!("{} -> {}", ds[0], ds[1])),
        ));
    }
}

/// Reference `(pi_hat, z_hat, sigma_hat, ks_D)` at `N = 10,000` (`n = 5000`,
/// `h = 2`) from 100,000-major-outbreak experiments, rounded to four
/// decimals. The constant law's recorded pi_hat cell is blank (every run is
/// major); it is pinned at 1.
const FINITE_10K: [(f64, f64, f64, f64); 6] = [
    (1.0, 0.7968, 0.7367, 0.0083),
    (0.8238, 0.6816, 1.0852, 0.0048),
    (0.6179, 0.6179, 1.4196, 0.0076),
    (0.4350, 0.5722, 1.8461, 0.0102),
    (0.3274, 0.5363, 2.2453, 0.0110),
    (0.2044, 0.4819, 3.0495, 0.0134),
];

fn block_full(out: &mut Vec<CheckResult>) {
    const TARGET: usize = 100_000;
    let cutoff = MajorCutoff::Fraction(0.2);
    for (i, ((name, model), (ref_pi, ref_z, ref_sigma, ref_d))) in
        benchmark_models().into_iter().zip(FINITE_10K).enumerate()
    {
        let spec = PopulationSpec {
            model: model.clone(),
            n: 5000,
            h: 2,
            p: 0.0,
            m: 1,
            local_mode: LocalMixing::WithReplacement,
            global_mode: GlobalMixing::WithReplacement,
            seed: 2024 + i as u64,
        };
        let n_pop = spec.population();
        let run = || -> Result<(f64, f64, f64, f64)> {
            let limit = summary(&model, 2, 0.0, 1, MODE)?;
            let sigma2 = limit
                .sigma2
                .ok_or_else(|| Error::InvalidParameter("no variance at criticality".into()))?;
            let (outcomes, majors) =
                run_until_majors(&spec, TARGET, 1_500_000, |o| cutoff.is_major(o, spec.n, n_pop))?;
            if majors < TARGET {
                return Err(Error::InvalidParameter(format!(
                    "only {majors} major runs found before the cap"
                )));
            }
            let s = classify_and_estimate(&outcomes, spec.n, spec.h, cutoff)?;
            let fractions = major_fractions(&outcomes, spec.n, spec.h, cutoff);
            let d = ks_statistic(&fractions, limit.z, sigma2, n_pop)?;
            Ok((s.pi_hat, s.z_hat.unwrap_or(f64::NAN), s.sigma_hat.unwrap_or(f64::NAN), d))
        };
        match run() {
            Ok((pi_hat, z_hat, sigma_hat, d)) => {
                out.push(CheckResult::within(
                    "full",
                    format!("{name} pi_hat at N=10000"),
                    ref_pi,
                    pi_hat,
                    0.01,
                ));
                out.push(CheckResult::within(
                    "full",
                    format!("{name} z_hat at N=10000"),
                    ref_z,
                    z_hat,
                    1e-3,
                ));
                out.push(CheckResult::within(
                    "full",
                    format!("{name} sigma_hat at N=10000"),
                    ref_sigma,
                    sigma_hat,
                    0.02 * ref_sigma,
                ));
                out.push(CheckResult::within_factor(
                    "full",
                    format!("{name} ks D at N=10000"),
                    ref_d,
                    d,
                    2.0,
                ));
            }
            Err(e) => out.push(CheckResult::error("full", name, &e)),
        }
    }
}

/// One household under the embedding representation: external infectious
/// pressure `tau` on each member, and weight `b` on the excess of emitted
/// global contacts over received ones in the variance statistic.
struct EmbeddingLaw<'a> {
    model: &'a ContactModel,
    h: usize,
    p: f64,
    mode: LocalMixing,
    tau: f64,
    b: f64,
}

/// Monte Carlo estimate of the scaled variance via the embedded
/// single-household process: each member receives `Poisson(tau)` external
/// contacts, local spread runs to completion, and the statistic
/// `R + b (G - Y)` is averaged; its variance over `samples` replicates,
/// divided by `h`, estimates the limiting variance. Returns the estimate and
/// its standard error.
fn embedding_variance_mc(law: &EmbeddingLaw, samples: u64, seed: u64) -> (f64, f64) {
    let external = Poisson::new(law.tau).expect("tau > 0 in the supercritical regime");
    let qs: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            embedding_sample(law, &external, &mut rng)
        })
        .collect();
    let (mean, sd) = crate::stats::mean_and_sample_sd(&qs);
    let var = sd * sd;
    let n = qs.len() as f64;
    let m4 = qs.iter().map(|q| (q - mean).powi(4)).sum::<f64>() / n;
    let se_var = ((m4 - var * var).max(0.0) / n).sqrt();
    (var / law.h as f64, se_var / law.h as f64)
}

fn embedding_sample(law: &EmbeddingLaw, external: &Poisson<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let EmbeddingLaw { model, h, p, mode, b, .. } = *law;
    let mut infected = vec![false; h];
    let mut queue: Vec<usize> = Vec::with_capacity(h);
    let mut y = 0u64;
    for (j, slot) in infected.iter_mut().enumerate() {
        let hits = external.sample(rng) as u64;
        y += hits;
        if hits > 0 {
            *slot = true;
            queue.push(j);
        }
    }
    let mut r = 0u64;
    let mut g = 0u64;
    let mut head = 0;
    while head < queue.len() {
        let j = queue[head];
        head += 1;
        r += 1;
        let (x_g, x_l) = model.sample(rng);
        let mut swapped = 0u32;
        if p > 0.0 {
            for _ in 0..x_l {
                if rng.gen_bool(p) {
                    swapped += 1;
                }
            }
        }
        g += u64::from(x_g + swapped);
        let locals = x_l - swapped;
        if locals > 0 && h > 1 {
            match mode {
                LocalMixing::WithReplacement => {
                    for _ in 0..locals {
                        let mut off = rng.gen_range(0..h - 1);
                        if off >= j {
                            off += 1;
                        }
                        if !infected[off] {
                            infected[off] = true;
                            queue.push(off);
                        }
                    }
                }
                LocalMixing::WithoutReplacement => {
                    let mut others: Vec<usize> = (0..h).filter(|&k| k != j).collect();
                    for k in 0..locals as usize {
                        let pick = rng.gen_range(k..others.len());
                        others.swap(k, pick);
                        let t = others[k];
                        if !infected[t] {
                            infected[t] = true;
                            queue.push(t);
                        }
                    }
                }
            }
        }
    }
    r as f64 + b * (g as f64 - y as f64)
}

/// Compensated accumulator for the positive-term sums in the enumeration
/// oracles, so their own rounding stays far below the comparison tolerance.
#[derive(Default, Clone, Copy)]
struct Acc {
    sum: f64,
    carry: f64,
}

impl Acc {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

/// The post-swap joint pmf as a finite table; errors when the law has
/// unbounded support.
fn swapped_table(model: &ContactModel, p: f64) -> Result<Vec<(u32, u32, f64)>> {
    let table = if p > 0.0 { model.with_swap(p)?.joint_table() } else { model.joint_table() };
    table.ok_or(Error::UnboundedLocalSupport)
}

/// All realizations of one member's local target set: `(housemate bitmask,
/// probability)` given `count` local contacts under `mode`. For `h = 1` the
/// contacts have nowhere to land and are discarded.
fn target_choices(h: usize, self_idx: usize, count: u32, mode: LocalMixing) -> Vec<(u8, f64)> {
    debug_assert!(h <= 8, "bitmask enumeration caps at 8 members");
    let others: Vec<usize> = (0..h).filter(|&j| j != self_idx).collect();
    if others.is_empty() || count == 0 {
        return vec![(0u8, 1.0)];
    }
    let k = count as usize;
    match mode {
        LocalMixing::WithReplacement => {
            let m = others.len();
            let total = m.pow(count);
            (0..total)
                .map(|code| {
                    let mut mask = 0u8;
                    let mut c = code;
                    for _ in 0..k {
                        mask |= 1 << others[c % m];
                        c /= m;
                    }
                    (mask, 1.0 / total as f64)
                })
                .collect()
        }
        LocalMixing::WithoutReplacement => {
            let mut masks = Vec::new();
            let others_mask: u8 = others.iter().fold(0, |acc, &j| acc | 1 << j);
            for mask in 0u8..1 << h {
                if mask & !others_mask == 0 && mask.count_ones() as usize == k {
                    masks.push(mask);
                }
            }
            let prob = 1.0 / masks.len() as f64;
            masks.into_iter().map(|m| (m, prob)).collect()
        }
    }
}

/// Walks the cartesian product of per-member choice lists, calling `f` with
/// each joint assignment and its probability.
fn product_walk<T: Copy>(choices: &[Vec<(T, f64)>], f: &mut impl FnMut(&[T], f64)) {
    fn rec<T: Copy>(
        choices: &[Vec<(T, f64)>],
        depth: usize,
        picked: &mut Vec<T>,
        weight: f64,
        f: &mut impl FnMut(&[T], f64),
    ) {
        if depth == choices.len() {
            f(picked, weight);
            return;
        }
        for &(item, w) in &choices[depth] {
            picked.push(item);
            rec(choices, depth + 1, picked, weight * w, f);
            picked.pop();
        }
    }
    let mut picked = Vec::with_capacity(choices.len());
    rec(choices, 0, &mut picked, 1.0, f);
}

/// Brute-force law of the focal member's susceptibility-set size: enumerates
/// every joint local-contact realization of the other `h - 1` members and
/// follows chains back to the focal member. Exponential cost; intended for
/// `h <= 4` with local support `<= 2`.
pub fn enumerate_susceptibility_pmf(
    model: &ContactModel,
    h: u32,
    p: f64,
    mode: LocalMixing,
) -> Result<Vec<f64>> {
    let h = h as usize;
    if h == 1 {
        return Ok(vec![1.0]);
    }
    let table = swapped_table(model, p)?;
    let mut local_weights: Vec<(u32, f64)> = Vec::new();
    for &(_, xl, w) in &table {
        if w == 0.0 {
            continue;
        }
        match local_weights.iter_mut().find(|(l, _)| *l == xl) {
            Some((_, acc)) => *acc += w,
            None => local_weights.push((xl, w)),
        }
    }

    // Member 0 is focal; its own contacts never matter for who can reach it.
    let mut choices: Vec<Vec<(u8, f64)>> = Vec::with_capacity(h - 1);
    for j in 1..h {
        let mut v = Vec::new();
        for &(xl, w) in &local_weights {
            for (mask, tp) in target_choices(h, j, xl, mode) {
                v.push((mask, w * tp));
            }
        }
        choices.push(v);
    }

    let mut bins = vec![Acc::default(); h];
    product_walk(&choices, &mut |masks, weight| {
        // Grow the set of members with a chain to the focal member.
        let mut reach: u8 = 1;
        loop {
            let mut grew = false;
            for (j, &mask) in masks.iter().enumerate() {
                let bit = 1u8 << (j + 1);
                if reach & bit == 0 && mask & reach != 0 {
                    reach |= bit;
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        bins[reach.count_ones() as usize - 1].add(weight);
    });
    Ok(bins.into_iter().map(|b| b.sum).collect())
}

/// Brute-force pgf of the global-contact count emanating from a household
/// epidemic seeded by member 0, evaluated at each point of `s_grid`.
/// Exponential cost; intended for `h <= 4` with local support `<= 2`.
pub fn enumerate_emanating_pgf(
    model: &ContactModel,
    h: u32,
    p: f64,
    mode: LocalMixing,
    s_grid: &[f64],
) -> Result<Vec<f64>> {
    let h = h as usize;
    let table = swapped_table(model, p)?;

    let mut choices: Vec<Vec<((u32, u8), f64)>> = Vec::with_capacity(h);
    for j in 0..h {
        let mut v = Vec::new();
        for &(xg, xl, w) in &table {
            if w == 0.0 {
                continue;
            }
            for (mask, tp) in target_choices(h, j, xl, mode) {
                v.push(((xg, mask), w * tp));
            }
        }
        choices.push(v);
    }

    let mut sums = vec![Acc::default(); s_grid.len()];
    product_walk(&choices, &mut |draws, weight| {
        // Forward closure from the seed: infected members pass infection to
        // everyone they target.
        let mut infected: u8 = 1;
        loop {
            let mut grew = false;
            for (j, &(_, mask)) in draws.iter().enumerate() {
                if infected & (1 << j) != 0 && mask & !infected != 0 {
                    infected |= mask;
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        let mut c = 0u32;
        for (j, &(xg, _)) in draws.iter().enumerate() {
            if infected & (1 << j) != 0 {
                c += xg;
            }
        }
        for (acc, &s) in sums.iter_mut().zip(s_grid) {
            acc.add(weight * s.powi(c as i32));
        }
    });
    Ok(sums.into_iter().map(|a| a.sum).collect())
}

/// Evaluates the polynomial family in exact rational arithmetic (the f64
/// inputs convert losslessly) and reports the largest relative gap against
/// the floating-point recursion.
fn max_rel_gap_vs_exact(x: f64, nodes: &[f64], n_max: usize) -> f64 {
    let float = gont_polys(x, nodes, n_max);
    let exact = gont_polys_exact(x, nodes, n_max);
    float
        .iter()
        .zip(&exact)
        .map(|(f, e)| if e.abs() > 1e-200 { (f - e).abs() / e.abs() } else { (f - e).abs() })
        .fold(0.0f64, f64::max)
}

fn gont_polys_exact(x: f64, nodes: &[f64], n_max: usize) -> Vec<f64> {
    let rat = |v: f64| BigRational::from_float(v).expect("finite input");
    let rpow = |b: &BigRational, e: usize| -> BigRational {
        let mut acc = BigRational::one();
        for _ in 0..e {
            acc *= b;
        }
        acc
    };
    let xr = rat(x);
    let nr: Vec<BigRational> = nodes.iter().map(|&u| rat(u)).collect();
    let mut g: Vec<BigRational> = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut acc = rpow(&xr, n);
        let mut ff = BigRational::one();
        for (i, gi) in g.iter().enumerate() {
            if !gi.is_zero() {
                acc -= &ff * rpow(&nr[i], n - i) * gi;
            }
            ff *= BigRational::from_integer(((n - i) as i64).into());
        }
        // After the loop ff = n!, the coefficient of the new polynomial.
        g.push(acc / ff);
    }
    g.iter().map(|v| v.to_f64().expect("representable result")).collect()
}
