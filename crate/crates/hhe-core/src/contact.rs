//! Bivariate contact-count laws.
//!
//! An individual's infectious period generates a pair `(X_G, X_L)`: the
//! number of global contacts (aimed at the whole population) and the number
//! of local contacts (aimed at the individual's own household). Everything
//! downstream — susceptibility-set recursions, fixed points, the simulator —
//! consumes these laws only through the [`ContactLaw`] trait, which exposes
//! the joint probability generating function, its closed-form first partial
//! derivatives, exact moments, and (when the support is finite) the full
//! joint table.
//!
//! [`SwappedModel`] layers the "p-swap" on top of a base law: each local
//! contact is independently redirected to the population at large with
//! probability `p`. Analytically this is the substitution
//! `f'(s1, s2) = f(s1, p*s1 + (1-p)*s2)`; the simulator instead flips a coin
//! per local contact. Both views describe the same law.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::Deserialize;

use crate::error::{Error, Result};

/// How a local contact picks its target among the `h-1` housemates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalMixing {
    /// Each contact picks a uniform housemate, repeats allowed.
    #[default]
    WithReplacement,
    /// An infective's local contacts go to distinct housemates, so the
    /// local law must satisfy `X_L <= h-1` almost surely.
    WithoutReplacement,
}

/// How a global contact picks its target in the population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GlobalMixing {
    /// Uniform over the whole population, self-contacts allowed (they have
    /// no effect on the epidemic).
    #[default]
    WithReplacement,
    /// An infective's global contacts go to distinct individuals other than
    /// itself.
    WithoutReplacement,
}

/// First and second moments of a bivariate contact law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactMoments {
    pub mean_g: f64,
    pub mean_l: f64,
    pub var_g: f64,
    pub var_l: f64,
    pub cov_gl: f64,
}

/// Mixing law for the Poisson rates of a [`ContactModel::MixedPoisson`].
///
/// A single draw `I` scales both contact rates, so global and local counts
/// are conditionally independent Poissons with means `beta_g * I` and
/// `beta_l * I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixingLaw {
    Gamma { shape: f64, rate: f64 },
    Exponential { rate: f64 },
    PointMass { value: f64 },
}

impl MixingLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            MixingLaw::Gamma { shape, rate } => shape / rate,
            MixingLaw::Exponential { rate } => 1.0 / rate,
            MixingLaw::PointMass { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            MixingLaw::Gamma { shape, rate } => shape / (rate * rate),
            MixingLaw::Exponential { rate } => 1.0 / (rate * rate),
            MixingLaw::PointMass { .. } => 0.0,
        }
    }

    /// Moment generating function `E[exp(u I)]`.
    ///
    /// Finite for every `u <= 0`, which is the only regime the pgf evaluation
    /// visits when its arguments stay in `[0, 1]`.
    fn mgf(&self, u: f64) -> f64 {
        match *self {
            MixingLaw::Gamma { shape, rate } => (1.0 - u / rate).powf(-shape),
            MixingLaw::Exponential { rate } => (1.0 - u / rate).powf(-1.0),
            MixingLaw::PointMass { value } => (value * u).exp(),
        }
    }

    /// Derivative `d/du E[exp(u I)] = E[I exp(u I)]`.
    fn mgf_prime(&self, u: f64) -> f64 {
        match *self {
            MixingLaw::Gamma { shape, rate } => {
                (shape / rate) * (1.0 - u / rate).powf(-shape - 1.0)
            }
            MixingLaw::Exponential { rate } => (1.0 / rate) * (1.0 - u / rate).powf(-2.0),
            MixingLaw::PointMass { value } => value * (value * u).exp(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            // rand_distr parameterizes Gamma by (shape, scale); our rate is 1/scale.
            MixingLaw::Gamma { shape, rate } => {
                Gamma::new(shape, 1.0 / rate).expect("validated mixing parameters").sample(rng)
            }
            MixingLaw::Exponential { rate } => {
                rand_distr::Exp::new(rate).expect("validated mixing parameters").sample(rng)
            }
            MixingLaw::PointMass { value } => value,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            MixingLaw::Gamma { shape, rate } => {
                shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()
            }
            MixingLaw::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            MixingLaw::PointMass { value } => value >= 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("mixing law out of range: {self:?}")))
        }
    }
}

/// Joint law of `(X_G, X_L)`, the per-individual global and local contact counts.
#[derive(Debug, Clone, PartialEq)]
pub enum ContactModel {
    /// Deterministic counts: exactly `g` global and `l` local contacts.
    Constant { g: u32, l: u32 },
    /// Independent `Poisson(lambda_g)` and `Poisson(lambda_l)` counts.
    IndependentPoisson { lambda_g: f64, lambda_l: f64 },
    /// Independent `Binomial(n_g, q_g)` and `Binomial(n_l, q_l)` counts.
    IndependentBinomial { n_g: u32, q_g: f64, n_l: u32, q_l: f64 },
    /// Conditionally independent Poissons with a shared random rate multiplier.
    MixedPoisson { beta_g: f64, beta_l: f64, mixing: MixingLaw },
    /// Arbitrary finite joint pmf given as `(x_g, x_l, prob)` atoms.
    JointTable { entries: Vec<(u32, u32, f64)> },
}

/// Tolerance for a joint table's probabilities summing to one.
pub const TABLE_MASS_TOL: f64 = 1e-12;

impl ContactModel {
    /// Checks every parameter against its admissible range.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidModel(msg));
        match self {
            ContactModel::Constant { .. } => Ok(()),
            ContactModel::IndependentPoisson { lambda_g, lambda_l } => {
                if lambda_g.is_finite()
                    && lambda_l.is_finite()
                    && *lambda_g >= 0.0
                    && *lambda_l >= 0.0
                {
                    Ok(())
                } else {
                    fail(format!(
                        "Poisson rates must be finite and >= 0, got ({lambda_g}, {lambda_l})"
                    ))
                }
            }
            ContactModel::IndependentBinomial { q_g, q_l, .. } => {
                if (0.0..=1.0).contains(q_g) && (0.0..=1.0).contains(q_l) {
                    Ok(())
                } else {
                    fail(format!(
                        "binomial success probabilities must lie in [0,1], got ({q_g}, {q_l})"
                    ))
                }
            }
            ContactModel::MixedPoisson { beta_g, beta_l, mixing } => {
                if !(beta_g.is_finite() && beta_l.is_finite() && *beta_g >= 0.0 && *beta_l >= 0.0) {
                    return fail(format!(
                        "mixed-Poisson rates must be finite and >= 0, got ({beta_g}, {beta_l})"
                    ));
                }
                mixing.validate()
            }
            ContactModel::JointTable { entries } => {
                if entries.is_empty() {
                    return fail("joint table must have at least one atom".into());
                }
                let mut mass = 0.0;
                for &(_, _, prob) in entries {
                    if !(0.0..=1.0).contains(&prob) {
                        return fail(format!("joint table probability {prob} outside [0,1]"));
                    }
                    mass += prob;
                }
                if (mass - 1.0).abs() > TABLE_MASS_TOL {
                    return fail(format!(
                        "joint table mass {mass} differs from 1 by more than {TABLE_MASS_TOL}"
                    ));
                }
                Ok(())
            }
        }
    }

    /// Largest value `X_L` can take, or `None` when the local law is unbounded.
    pub fn local_support_max(&self) -> Option<u32> {
        match self {
            ContactModel::Constant { l, .. } => Some(*l),
            ContactModel::IndependentPoisson { lambda_l, .. } => {
                if *lambda_l == 0.0 {
                    Some(0)
                } else {
                    None
                }
            }
            ContactModel::IndependentBinomial { n_l, .. } => Some(*n_l),
            ContactModel::MixedPoisson { beta_l, .. } => {
                if *beta_l == 0.0 {
                    Some(0)
                } else {
                    None
                }
            }
            ContactModel::JointTable { entries } => entries.iter().map(|&(_, xl, _)| xl).max(),
        }
    }

    /// Draws one `(X_G, X_L)` pair.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (u32, u32) {
        match self {
            ContactModel::Constant { g, l } => (*g, *l),
            ContactModel::IndependentPoisson { lambda_g, lambda_l } => {
                (poisson_draw(rng, *lambda_g), poisson_draw(rng, *lambda_l))
            }
            ContactModel::IndependentBinomial { n_g, q_g, n_l, q_l } => {
                (binomial_draw(rng, *n_g, *q_g), binomial_draw(rng, *n_l, *q_l))
            }
            ContactModel::MixedPoisson { beta_g, beta_l, mixing } => {
                let i = mixing.sample(rng);
                (poisson_draw(rng, beta_g * i), poisson_draw(rng, beta_l * i))
            }
            ContactModel::JointTable { entries } => {
                let mut u: f64 = rng.gen();
                for &(xg, xl, prob) in entries {
                    if u < prob {
                        return (xg, xl);
                    }
                    u -= prob;
                }
                // Rounding can leave a sliver of mass past the last atom.
                let &(xg, xl, _) = entries.last().expect("validated non-empty table");
                (xg, xl)
            }
        }
    }

    /// Wraps the model with a p-swap, validating `p`.
    pub fn with_swap(&self, p: f64) -> Result<SwappedModel<'_>> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("swap probability {p} outside [0,1]")));
        }
        Ok(SwappedModel { base: self, p })
    }
}

fn poisson_draw<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    let x: f64 = rand_distr::Poisson::new(lambda).expect("positive rate").sample(rng);
    x as u32
}

fn binomial_draw<R: Rng + ?Sized>(rng: &mut R, n: u32, q: f64) -> u32 {
    rand_distr::Binomial::new(u64::from(n), q).expect("validated probability").sample(rng) as u32
}

/// What the analytic machinery needs from a contact law.
///
/// `s1` weights global contacts, `s2` local contacts. All evaluations the
/// recursions perform keep both arguments in `[0, 1]`; the closed forms also
/// hold in a neighbourhood of 1, which the moment cross-checks exploit.
pub trait ContactLaw {
    /// Joint pgf `E[s1^{X_G} s2^{X_L}]`.
    fn joint_pgf(&self, s1: f64, s2: f64) -> f64;

    /// Partial derivative of the joint pgf in its first argument.
    fn pgf_ds1(&self, s1: f64, s2: f64) -> f64;

    /// Partial derivative of the joint pgf in its second argument.
    fn pgf_ds2(&self, s1: f64, s2: f64) -> f64;

    /// Exact first and second moments.
    fn moments(&self) -> ContactMoments;

    /// Full joint pmf when the support is finite, `None` otherwise.
    fn joint_table(&self) -> Option<Vec<(u32, u32, f64)>>;

    /// Marginal local pgf `E[t^{X_L}]`.
    fn local_pgf(&self, t: f64) -> f64 {
        self.joint_pgf(1.0, t)
    }

    /// `E[X_G t^{X_L}]`, the local pgf weighted by the global count.
    fn weighted_local_pgf(&self, t: f64) -> f64 {
        self.pgf_ds1(1.0, t)
    }
}

impl ContactLaw for ContactModel {
    fn joint_pgf(&self, s1: f64, s2: f64) -> f64 {
        match self {
            ContactModel::Constant { g, l } => s1.powi(*g as i32) * s2.powi(*l as i32),
            ContactModel::IndependentPoisson { lambda_g, lambda_l } => {
                (lambda_g * (s1 - 1.0) + lambda_l * (s2 - 1.0)).exp()
            }
            ContactModel::IndependentBinomial { n_g, q_g, n_l, q_l } => {
                (1.0 - q_g + q_g * s1).powi(*n_g as i32) * (1.0 - q_l + q_l * s2).powi(*n_l as i32)
            }
            ContactModel::MixedPoisson { beta_g, beta_l, mixing } => {
                mixing.mgf(beta_g * (s1 - 1.0) + beta_l * (s2 - 1.0))
            }
            ContactModel::JointTable { entries } => entries
                .iter()
                .map(|&(xg, xl, prob)| prob * s1.powi(xg as i32) * s2.powi(xl as i32))
                .sum(),
        }
    }

    fn pgf_ds1(&self, s1: f64, s2: f64) -> f64 {
        match self {
            ContactModel::Constant { g, l } => {
                if *g == 0 {
                    0.0
                } else {
                    f64::from(*g) * s1.powi(*g as i32 - 1) * s2.powi(*l as i32)
                }
            }
            ContactModel::IndependentPoisson { lambda_g, .. } => lambda_g * self.joint_pgf(s1, s2),
            ContactModel::IndependentBinomial { n_g, q_g, n_l, q_l } => {
                if *n_g == 0 {
                    0.0
                } else {
                    f64::from(*n_g)
                        * q_g
                        * (1.0 - q_g + q_g * s1).powi(*n_g as i32 - 1)
                        * (1.0 - q_l + q_l * s2).powi(*n_l as i32)
                }
            }
            ContactModel::MixedPoisson { beta_g, beta_l, mixing } => {
                beta_g * mixing.mgf_prime(beta_g * (s1 - 1.0) + beta_l * (s2 - 1.0))
            }
            ContactModel::JointTable { entries } => entries
                .iter()
                .filter(|&&(xg, _, _)| xg > 0)
                .map(|&(xg, xl, prob)| {
                    prob * f64::from(xg) * s1.powi(xg as i32 - 1) * s2.powi(xl as i32)
                })
                .sum(),
        }
    }

    fn pgf_ds2(&self, s1: f64, s2: f64) -> f64 {
        match self {
            ContactModel::Constant { g, l } => {
                if *l == 0 {
                    0.0
                } else {
                    f64::from(*l) * s1.powi(*g as i32) * s2.powi(*l as i32 - 1)
                }
            }
            ContactModel::IndependentPoisson { lambda_l, .. } => lambda_l * self.joint_pgf(s1, s2),
            ContactModel::IndependentBinomial { n_g, q_g, n_l, q_l } => {
                if *n_l == 0 {
                    0.0
                } else {
                    f64::from(*n_l)
                        * q_l
                        * (1.0 - q_g + q_g * s1).powi(*n_g as i32)
                        * (1.0 - q_l + q_l * s2).powi(*n_l as i32 - 1)
                }
            }
            ContactModel::MixedPoisson { beta_g, beta_l, mixing } => {
                beta_l * mixing.mgf_prime(beta_g * (s1 - 1.0) + beta_l * (s2 - 1.0))
            }
            ContactModel::JointTable { entries } => entries
                .iter()
                .filter(|&&(_, xl, _)| xl > 0)
                .map(|&(xg, xl, prob)| {
                    prob * f64::from(xl) * s1.powi(xg as i32) * s2.powi(xl as i32 - 1)
                })
                .sum(),
        }
    }

    fn moments(&self) -> ContactMoments {
        match self {
            ContactModel::Constant { g, l } => ContactMoments {
                mean_g: f64::from(*g),
                mean_l: f64::from(*l),
                var_g: 0.0,
                var_l: 0.0,
                cov_gl: 0.0,
            },
            ContactModel::IndependentPoisson { lambda_g, lambda_l } => ContactMoments {
                mean_g: *lambda_g,
                mean_l: *lambda_l,
                var_g: *lambda_g,
                var_l: *lambda_l,
                cov_gl: 0.0,
            },
            ContactModel::IndependentBinomial { n_g, q_g, n_l, q_l } => ContactMoments {
                mean_g: f64::from(*n_g) * q_g,
                mean_l: f64::from(*n_l) * q_l,
                var_g: f64::from(*n_g) * q_g * (1.0 - q_g),
                var_l: f64::from(*n_l) * q_l * (1.0 - q_l),
                cov_gl: 0.0,
            },
            ContactModel::MixedPoisson { beta_g, beta_l, mixing } => {
                let m = mixing.mean();
                let v = mixing.variance();
                // Law of total (co)variance over the shared multiplier.
                ContactMoments {
                    mean_g: beta_g * m,
                    mean_l: beta_l * m,
                    var_g: beta_g * m + beta_g * beta_g * v,
                    var_l: beta_l * m + beta_l * beta_l * v,
                    cov_gl: beta_g * beta_l * v,
                }
            }
            ContactModel::JointTable { entries } => {
                let (mut mg, mut ml, mut egg, mut ell, mut egl) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for &(xg, xl, prob) in entries {
                    let (xg, xl) = (f64::from(xg), f64::from(xl));
                    mg += prob * xg;
                    ml += prob * xl;
                    egg += prob * xg * xg;
                    ell += prob * xl * xl;
                    egl += prob * xg * xl;
                }
                ContactMoments {
                    mean_g: mg,
                    mean_l: ml,
                    var_g: egg - mg * mg,
                    var_l: ell - ml * ml,
                    cov_gl: egl - mg * ml,
                }
            }
        }
    }

    fn joint_table(&self) -> Option<Vec<(u32, u32, f64)>> {
        match self {
            ContactModel::Constant { g, l } => Some(vec![(*g, *l, 1.0)]),
            ContactModel::IndependentBinomial { n_g, q_g, n_l, q_l } => {
                let pg = binomial_pmf(*n_g, *q_g);
                let pl = binomial_pmf(*n_l, *q_l);
                let mut entries = Vec::with_capacity(pg.len() * pl.len());
                for (xg, wg) in pg.iter().enumerate() {
                    for (xl, wl) in pl.iter().enumerate() {
                        entries.push((xg as u32, xl as u32, wg * wl));
                    }
                }
                Some(entries)
            }
            ContactModel::JointTable { entries } => Some(entries.clone()),
            ContactModel::IndependentPoisson { .. } | ContactModel::MixedPoisson { .. } => None,
        }
    }
}

fn binomial_pmf(n: u32, q: f64) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(n as usize + 1);
    for k in 0..=n {
        let mut coeff = 1.0;
        for i in 0..k {
            coeff *= f64::from(n - i) / f64::from(i + 1);
        }
        pmf.push(coeff * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32));
    }
    pmf
}

/// A base contact law with each local contact independently redirected to
/// the population at large with probability `p`.
///
/// Evaluated analytically through the pgf substitution
/// `f'(s1, s2) = f(s1, p*s1 + (1-p)*s2)`; never by resampling.
#[derive(Debug, Clone, Copy)]
pub struct SwappedModel<'a> {
    pub base: &'a ContactModel,
    pub p: f64,
}

impl ContactLaw for SwappedModel<'_> {
    fn joint_pgf(&self, s1: f64, s2: f64) -> f64 {
        self.base.joint_pgf(s1, self.p * s1 + (1.0 - self.p) * s2)
    }

    fn pgf_ds1(&self, s1: f64, s2: f64) -> f64 {
        let w = self.p * s1 + (1.0 - self.p) * s2;
        self.base.pgf_ds1(s1, w) + self.p * self.base.pgf_ds2(s1, w)
    }

    fn pgf_ds2(&self, s1: f64, s2: f64) -> f64 {
        let w = self.p * s1 + (1.0 - self.p) * s2;
        (1.0 - self.p) * self.base.pgf_ds2(s1, w)
    }

    fn moments(&self) -> ContactMoments {
        let m = self.base.moments();
        let p = self.p;
        // X_G' = X_G + Y, X_L' = X_L - Y with Y | X_L ~ Binomial(X_L, p).
        ContactMoments {
            mean_g: m.mean_g + p * m.mean_l,
            mean_l: (1.0 - p) * m.mean_l,
            var_g: m.var_g + 2.0 * p * m.cov_gl + p * p * m.var_l + p * (1.0 - p) * m.mean_l,
            var_l: (1.0 - p) * (1.0 - p) * m.var_l + p * (1.0 - p) * m.mean_l,
            cov_gl: (1.0 - p) * m.cov_gl + p * (1.0 - p) * (m.var_l - m.mean_l),
        }
    }

    fn joint_table(&self) -> Option<Vec<(u32, u32, f64)>> {
        let base = self.base.joint_table()?;
        if self.p == 0.0 {
            return Some(base);
        }
        // Exact binomial expansion of the per-contact redirection.
        let mut entries = Vec::new();
        for &(xg, xl, prob) in &base {
            let mut binom = 1.0;
            for j in 0..=xl {
                let w = binom * self.p.powi(j as i32) * (1.0 - self.p).powi((xl - j) as i32);
                entries.push((xg + j, xl - j, prob * w));
                binom *= f64::from(xl - j) / f64::from(j + 1);
            }
        }
        Some(entries)
    }
}

/// Outcome of probing the local pgf for log-convexity on a grid.
#[derive(Debug, Clone, Copy)]
pub struct LogConvexityReport {
    pub convex: bool,
    /// Smallest second central difference of `ln f_{X_L}` observed.
    pub min_second_diff: f64,
}

/// Tolerance below which a second difference counts as a convexity violation.
pub const LOG_CONVEXITY_TOL: f64 = 1e-9;

/// Probes `ln f_{X_L}` on a uniform grid over `[1e-6, 1]` and reports whether
/// it is convex there (second central differences all above
/// `-LOG_CONVEXITY_TOL`).
pub fn log_convexity_report(law: &dyn ContactLaw, grid_size: usize) -> LogConvexityReport {
    let n = grid_size.max(3);
    let lo = 1e-6;
    let step = (1.0 - lo) / (n - 1) as f64;
    let logs: Vec<f64> = (0..n).map(|j| law.local_pgf(lo + j as f64 * step).ln()).collect();
    let mut min_diff = f64::INFINITY;
    for j in 1..n - 1 {
        let d = logs[j - 1] - 2.0 * logs[j] + logs[j + 1];
        if d < min_diff {
            min_diff = d;
        }
    }
    LogConvexityReport { convex: min_diff >= -LOG_CONVEXITY_TOL, min_second_diff: min_diff }
}

/// Wire format for a model description, as accepted by `--model-file`.
#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MixingSpec {
    Gamma { shape: f64, rate: f64 },
    Exponential { rate: f64 },
    PointMass { value: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ModelKindSpec {
    Constant { g: u32, l: u32 },
    Poisson { lambda_g: f64, lambda_l: f64 },
    Binomial { n_g: u32, q_g: f64, n_l: u32, q_l: f64 },
    MixedPoisson { beta_g: f64, beta_l: f64, mixing: MixingSpec },
    JointTable { pmf: Vec<(u32, u32, f64)> },
}

#[derive(Debug, Deserialize)]
struct ModelSpec {
    #[serde(flatten)]
    kind: ModelKindSpec,
    #[serde(default)]
    swap_p: Option<f64>,
}

/// Parses a JSON model description, returning the validated model and the
/// optional top-level swap probability.
pub fn parse_model_spec(json: &str) -> Result<(ContactModel, Option<f64>)> {
    let spec: ModelSpec =
        serde_json::from_str(json).map_err(|e| Error::InvalidModel(format!("model spec: {e}")))?;
    let model = match spec.kind {
        ModelKindSpec::Constant { g, l } => ContactModel::Constant { g, l },
        ModelKindSpec::Poisson { lambda_g, lambda_l } => {
            ContactModel::IndependentPoisson { lambda_g, lambda_l }
        }
        ModelKindSpec::Binomial { n_g, q_g, n_l, q_l } => {
            ContactModel::IndependentBinomial { n_g, q_g, n_l, q_l }
        }
        ModelKindSpec::MixedPoisson { beta_g, beta_l, mixing } => ContactModel::MixedPoisson {
            beta_g,
            beta_l,
            mixing: match mixing {
                MixingSpec::Gamma { shape, rate } => MixingLaw::Gamma { shape, rate },
                MixingSpec::Exponential { rate } => MixingLaw::Exponential { rate },
                MixingSpec::PointMass { value } => MixingLaw::PointMass { value },
            },
        },
        ModelKindSpec::JointTable { pmf } => ContactModel::JointTable { entries: pmf },
    };
    model.validate()?;
    if let Some(p) = spec.swap_p {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidModel(format!("swap_p {p} outside [0,1]")));
        }
    }
    Ok((model, spec.swap_p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// The six laws used throughout the test suite, all with unit means.
    pub(crate) fn catalog() -> Vec<(&'static str, ContactModel)> {
        vec![
            ("constant", ContactModel::Constant { g: 1, l: 1 }),
            ("binomial", ContactModel::IndependentBinomial { n_g: 2, q_g: 0.5, n_l: 2, q_l: 0.5 }),
            ("poisson", ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 }),
            (
                "gamma22",
                ContactModel::MixedPoisson {
                    beta_g: 1.0,
                    beta_l: 1.0,
                    mixing: MixingLaw::Gamma { shape: 2.0, rate: 2.0 },
                },
            ),
            (
                "exp1",
                ContactModel::MixedPoisson {
                    beta_g: 1.0,
                    beta_l: 1.0,
                    mixing: MixingLaw::Exponential { rate: 1.0 },
                },
            ),
            (
                "gamma05",
                ContactModel::MixedPoisson {
                    beta_g: 1.0,
                    beta_l: 1.0,
                    mixing: MixingLaw::Gamma { shape: 0.5, rate: 0.5 },
                },
            ),
        ]
    }

    #[test]
    fn pgf_at_one_is_one() {
        for (name, m) in catalog() {
            assert_relative_eq!(m.joint_pgf(1.0, 1.0), 1.0, max_relative = 1e-12);
            assert!(m.validate().is_ok(), "{name} should validate");
        }
    }

    #[test]
    fn mixed_poisson_gamma_pgf_value() {
        // u = -2 at the origin, so the Gamma(2,2) mgf gives (1 + 1)^{-2}.
        let m = ContactModel::MixedPoisson {
            beta_g: 1.0,
            beta_l: 1.0,
            mixing: MixingLaw::Gamma { shape: 2.0, rate: 2.0 },
        };
        assert_relative_eq!(m.joint_pgf(0.0, 0.0), 0.25, max_relative = 1e-14);
    }

    #[test]
    fn weighted_local_pgf_poisson() {
        let m = ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 };
        assert_relative_eq!(m.weighted_local_pgf(0.5), (-0.5f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn moments_match_finite_differences_of_pgf() {
        let d = 1e-4;
        for p in [0.0, 0.3, 1.0] {
            for (name, m) in catalog() {
                let sw = m.with_swap(p).unwrap();
                let mom = sw.moments();
                let f = |s1: f64, s2: f64| sw.joint_pgf(s1, s2);
                let mean_g = (f(1.0 + d, 1.0) - f(1.0 - d, 1.0)) / (2.0 * d);
                let mean_l = (f(1.0, 1.0 + d) - f(1.0, 1.0 - d)) / (2.0 * d);
                let fgg = (f(1.0 + d, 1.0) - 2.0 * f(1.0, 1.0) + f(1.0 - d, 1.0)) / (d * d);
                let fll = (f(1.0, 1.0 + d) - 2.0 * f(1.0, 1.0) + f(1.0, 1.0 - d)) / (d * d);
                let fgl = (f(1.0 + d, 1.0 + d) - f(1.0 + d, 1.0 - d) - f(1.0 - d, 1.0 + d)
                    + f(1.0 - d, 1.0 - d))
                    / (4.0 * d * d);
                assert_relative_eq!(mom.mean_g, mean_g, epsilon = 1e-6, max_relative = 1e-6);
                assert_relative_eq!(mom.mean_l, mean_l, epsilon = 1e-6, max_relative = 1e-6);
                assert_relative_eq!(
                    mom.var_g,
                    fgg + mean_g - mean_g * mean_g,
                    epsilon = 1e-5,
                    max_relative = 1e-5
                );
                assert_relative_eq!(
                    mom.var_l,
                    fll + mean_l - mean_l * mean_l,
                    epsilon = 1e-5,
                    max_relative = 1e-5
                );
                assert_relative_eq!(
                    mom.cov_gl,
                    fgl - mean_g * mean_l,
                    epsilon = 1e-5,
                    max_relative = 1e-5
                );
                let _ = name;
            }
        }
    }

    #[test]
    fn swap_preserves_total_mean_and_pgf_diagonal() {
        for (_, m) in catalog() {
            let base = m.moments();
            for p in [0.0, 0.25, 0.7, 1.0] {
                let sw = m.with_swap(p).unwrap();
                let mom = sw.moments();
                assert_relative_eq!(
                    mom.mean_g + mom.mean_l,
                    base.mean_g + base.mean_l,
                    max_relative = 1e-12
                );
                // On the diagonal s1 = s2 the swap is invisible.
                for s in [0.0, 0.37, 0.82, 1.0] {
                    assert_relative_eq!(
                        sw.joint_pgf(s, s),
                        m.joint_pgf(s, s),
                        max_relative = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn swap_at_half_poisson_variance() {
        let m = ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 };
        let mom = m.with_swap(0.5).unwrap().moments();
        assert_relative_eq!(mom.var_g, 1.5, max_relative = 1e-12);
        assert_relative_eq!(mom.mean_g, 1.5, max_relative = 1e-12);
    }

    #[test]
    fn exponential_mixing_global_variance() {
        let m = ContactModel::MixedPoisson {
            beta_g: 1.0,
            beta_l: 1.0,
            mixing: MixingLaw::Exponential { rate: 1.0 },
        };
        assert_relative_eq!(m.moments().var_g, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn swapped_joint_table_matches_pgf_substitution() {
        let m = ContactModel::IndependentBinomial { n_g: 2, q_g: 0.5, n_l: 2, q_l: 0.5 };
        let sw = m.with_swap(0.3).unwrap();
        let table = sw.joint_table().unwrap();
        for (s1, s2) in [(0.2f64, 0.9f64), (1.0, 0.0), (0.5, 0.5)] {
            let direct: f64 = table
                .iter()
                .map(|&(xg, xl, prob)| prob * s1.powi(xg as i32) * s2.powi(xl as i32))
                .sum();
            assert_relative_eq!(direct, sw.joint_pgf(s1, s2), max_relative = 1e-12);
        }
    }

    #[test]
    fn log_convexity_classification() {
        let exp1 = ContactModel::MixedPoisson {
            beta_g: 1.0,
            beta_l: 1.0,
            mixing: MixingLaw::Exponential { rate: 1.0 },
        };
        assert!(log_convexity_report(&exp1, 512).convex);

        let poisson = ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 };
        assert!(log_convexity_report(&poisson, 512).convex, "linear counts as convex");

        // Constant local count 1 has ln f_{X_L}(t) = ln t, strictly concave.
        let constant = ContactModel::Constant { g: 1, l: 1 };
        let rep = log_convexity_report(&constant, 512);
        assert!(!rep.convex);
        assert!(rep.min_second_diff < -1e-9);
    }

    #[test]
    fn sampler_matches_table_pmf() {
        use rand::SeedableRng;
        let entries = vec![(0, 1, 0.5), (2, 0, 0.5)];
        let m = ContactModel::JointTable { entries: entries.clone() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000u32;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..n {
            *counts.entry(m.sample(&mut rng)).or_insert(0u32) += 1;
        }
        for &(xg, xl, prob) in &entries {
            let freq = f64::from(counts[&(xg, xl)]) / f64::from(n);
            let se = (prob * (1.0 - prob) / f64::from(n)).sqrt();
            assert!(
                (freq - prob).abs() <= 4.0 * se,
                "atom ({xg},{xl}): freq {freq} vs prob {prob}"
            );
        }
    }

    #[test]
    fn parse_all_wire_formats() {
        let (m, swap) =
            parse_model_spec(r#"{"type":"poisson","lambda_g":1,"lambda_l":1}"#).unwrap();
        assert_eq!(m, ContactModel::IndependentPoisson { lambda_g: 1.0, lambda_l: 1.0 });
        assert_eq!(swap, None);

        let (m, _) =
            parse_model_spec(r#"{"type":"binomial","n_g":2,"q_g":0.5,"n_l":2,"q_l":0.5}"#).unwrap();
        assert_eq!(m, ContactModel::IndependentBinomial { n_g: 2, q_g: 0.5, n_l: 2, q_l: 0.5 });

        let (m, swap) =
            parse_model_spec(r#"{"type":"constant","g":1,"l":1,"swap_p":0.3}"#).unwrap();
        assert_eq!(m, ContactModel::Constant { g: 1, l: 1 });
        assert_eq!(swap, Some(0.3));

        let (m, _) = parse_model_spec(
            r#"{"type":"mixed_poisson","beta_g":1,"beta_l":1,"mixing":{"gamma":{"shape":2,"rate":2}}}"#,
        )
        .unwrap();
        assert!(matches!(m, ContactModel::MixedPoisson { mixing: MixingLaw::Gamma { .. }, .. }));

        let (m, _) =
            parse_model_spec(r#"{"type":"joint_table","pmf":[[0,1,0.5],[2,0,0.5]]}"#).unwrap();
        assert_eq!(m, ContactModel::JointTable { entries: vec![(0, 1, 0.5), (2, 0, 0.5)] });
    }

    #[test]
    fn parse_rejects_bad_specs() {
        assert!(parse_model_spec(r#"{"type":"poisson","lambda_g":-1,"lambda_l":1}"#).is_err());
        assert!(parse_model_spec(r#"{"type":"joint_table","pmf":[[0,1,0.6],[2,0,0.5]]}"#).is_err());
        assert!(parse_model_spec(r#"{"type":"constant","g":1,"l":1,"swap_p":1.5}"#).is_err());
        assert!(parse_model_spec(r#"{"type":"nope"}"#).is_err());
    }
}
