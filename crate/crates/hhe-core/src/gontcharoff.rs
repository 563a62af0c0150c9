//! Gontcharoff polynomials and the within-household quantities built on them.
//!
//! The polynomials `G_i(x|U)` attached to a node sequence `U = u_0, u_1, ...`
//! are defined by
//!
//! ```text
//! sum_{i=0}^n  n_[i] * u_i^(n-i) * G_i(x|U)  =  x^n      (n = 0, 1, ...)
//! ```
//!
//! with `n_[i]` the falling factorial. Everything a single household
//! contributes to the population-level analysis is expressible through them:
//! the size distribution of an individual's susceptibility set, the pgf of
//! the global contacts emanating from a within-household epidemic, and the
//! joint moments of susceptibles and emanating contacts under external
//! pressure `t`. The node sequences are built from `q_k(s)`, the pgf-weighted
//! probability that one infective avoids a marked set of `k` housemates.

use crate::contact::{ContactLaw, LocalMixing};
use crate::error::{Error, Result, MAX_HOUSEHOLD_SIZE};

/// Negative pmf values above this magnitude are treated as rounding noise
/// and clamped to zero; anything more negative raises an instability error.
pub const PMF_CLAMP_TOL: f64 = 1e-12;

/// Compensated (Kahan) accumulator; the recursions subtract terms of very
/// different magnitude, and the compensation keeps the residual error at a
/// few ulps instead of growing with the term count.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub(crate) fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub(crate) fn value(self) -> f64 {
        self.sum
    }
}

/// Falling factorial `m * (m-1) * ... * (m-k+1)` with `m_[0] = 1`.
///
/// Zero whenever `k > m`, matching the combinatorial convention.
pub(crate) fn falling(m: u32, k: u32) -> f64 {
    if k > m {
        return 0.0;
    }
    let mut acc = 1.0;
    for j in 0..k {
        acc *= f64::from(m - j);
    }
    acc
}

/// Evaluates `G_0(x|U) ... G_{n_max}(x|U)` by the defining recursion.
///
/// `nodes` must supply at least `n_max` entries (`G_n` consumes
/// `u_0 ... u_{n-1}`). Callers are responsible for checking finiteness of
/// the results; the recursion itself never fails.
pub fn gont_polys(x: f64, nodes: &[f64], n_max: usize) -> Vec<f64> {
    assert!(nodes.len() >= n_max, "need {n_max} nodes, got {}", nodes.len());
    let mut g = Vec::with_capacity(n_max + 1);
    g.push(1.0);
    let mut factorial = 1.0;
    for n in 1..=n_max {
        factorial *= n as f64;
        let mut sum = Kahan::default();
        let mut ff = 1.0; // n_[i], updated incrementally
        for i in 0..n {
            sum.add(ff * nodes[i].powi((n - i) as i32) * g[i]);
            ff *= (n - i) as f64;
        }
        g.push((x.powi(n as i32) - sum.value()) / factorial);
    }
    g
}

/// Evaluates the pgf `sum_i pmf[i-1] * s^i` of a distribution on `1..=h`.
pub fn pgf_from_pmf(pmf: &[f64], s: f64) -> f64 {
    let mut acc = Kahan::default();
    for (idx, &p) in pmf.iter().enumerate() {
        acc.add(p * s.powi(idx as i32 + 1));
    }
    acc.value()
}

/// Evaluator for the avoidance probabilities `q_k(s)` of one
/// `(law, household size, local mixing)` triple.
///
/// `q_k(s) = E[s^{X_G} 1(avoid a marked set of k housemates)]`; under
/// with-replacement mixing this is the joint pgf at `(s, 1 - k/(h-1))`,
/// under without-replacement mixing an expectation of falling-factorial
/// ratios over the (finite) joint table.
pub(crate) struct QNodes<'a> {
    law: &'a dyn ContactLaw,
    h: u32,
    /// Post-swap joint pmf, present exactly in without-replacement mode.
    table: Option<Vec<(u32, u32, f64)>>,
}

impl<'a> QNodes<'a> {
    pub(crate) fn new(law: &'a dyn ContactLaw, h: u32, mode: LocalMixing) -> Result<Self> {
        if h == 0 || h > MAX_HOUSEHOLD_SIZE {
            return Err(Error::HouseholdSize { h, max: MAX_HOUSEHOLD_SIZE });
        }
        let table = match mode {
            LocalMixing::WithReplacement => None,
            LocalMixing::WithoutReplacement => {
                let table = law.joint_table().ok_or(Error::UnboundedLocalSupport)?;
                let support = table
                    .iter()
                    .filter(|&&(_, _, w)| w > 0.0)
                    .map(|&(_, xl, _)| xl)
                    .max()
                    .unwrap_or(0);
                if support > h - 1 {
                    return Err(Error::LocalSupport { support, limit: h - 1 });
                }
                Some(table)
            }
        };
        Ok(QNodes { law, h, table })
    }

    /// `q_k(s)` for `k = 0 ... h-1`.
    pub(crate) fn q(&self, k: u32, s: f64) -> f64 {
        debug_assert!(k < self.h || (k == 0 && self.h == 1));
        match &self.table {
            None => self.law.joint_pgf(s, self.arg(k)),
            Some(table) => {
                let denom = falling(self.h - 1, k);
                table
                    .iter()
                    .filter(|&&(_, xl, w)| w > 0.0 && xl < self.h)
                    .map(|&(xg, xl, w)| w * s.powi(xg as i32) * falling(self.h - 1 - xl, k))
                    .sum::<f64>()
                    / denom
            }
        }
    }

    /// `d/ds q_k(s)` at `s = 1`, i.e. `E[X_G 1(avoid the marked set)]`.
    pub(crate) fn q_weighted(&self, k: u32) -> f64 {
        match &self.table {
            None => self.law.pgf_ds1(1.0, self.arg(k)),
            Some(table) => {
                let denom = falling(self.h - 1, k);
                table
                    .iter()
                    .filter(|&&(_, xl, w)| w > 0.0 && xl < self.h)
                    .map(|&(xg, xl, w)| w * f64::from(xg) * falling(self.h - 1 - xl, k))
                    .sum::<f64>()
                    / denom
            }
        }
    }

    /// Local-pgf argument for a marked set of size `k`; `k = 0` means no
    /// constraint, so the argument is 1 even when `h = 1`.
    fn arg(&self, k: u32) -> f64 {
        if k == 0 {
            1.0
        } else {
            1.0 - f64::from(k) / f64::from(self.h - 1)
        }
    }
}

/// Builds a pmf on `1..=h` from raw recursion output: verifies finiteness,
/// clamps rounding-level negatives, and renormalizes.
fn finish_pmf(mut pmf: Vec<f64>) -> Result<Vec<f64>> {
    let mut sum = 0.0;
    for p in &mut pmf {
        if !p.is_finite() {
            return Err(Error::NumericInstability(
                "susceptibility pmf produced a non-finite value".into(),
            ));
        }
        if *p < 0.0 {
            if *p < -PMF_CLAMP_TOL {
                return Err(Error::NumericInstability(format!(
                    "susceptibility pmf entry {p} below clamp tolerance -{PMF_CLAMP_TOL}"
                )));
            }
            *p = 0.0;
        }
        sum += *p;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::NumericInstability(format!(
            "susceptibility pmf mass {sum} too far from 1"
        )));
    }
    for p in &mut pmf {
        *p /= sum;
    }
    Ok(pmf)
}

fn pmf_from_alpha(q1: &[f64], alpha: &[f64], h: u32) -> Result<Vec<f64>> {
    let mut pmf = Vec::with_capacity(h as usize);
    for i in 1..=h {
        let pow = if i < h { q1[i as usize].powi((h - i) as i32) } else { 1.0 };
        pmf.push(falling(h - 1, i - 1) * alpha[(i - 1) as usize] * pow);
    }
    finish_pmf(pmf)
}

/// Distribution of the susceptibility-set size of a typical household
/// member: entry `i-1` is `P(S = i)` for `i = 1 ..= h`.
///
/// The susceptibility set of `a` collects every housemate from which a chain
/// of local contacts reaches `a`, plus `a` itself; `a` ends the epidemic
/// susceptible exactly when nobody in the set is infected from outside.
pub fn susceptibility_pmf(law: &dyn ContactLaw, h: u32, mode: LocalMixing) -> Result<Vec<f64>> {
    let q = QNodes::new(law, h, mode)?;
    if h == 1 {
        return Ok(vec![1.0]);
    }
    let q1: Vec<f64> = (0..h).map(|k| q.q(k, 1.0)).collect();
    let alpha = gont_polys(1.0, &q1[1..], (h - 1) as usize);
    pmf_from_alpha(&q1, &alpha, h)
}

/// Pgf of the number of global contacts emanating from a within-household
/// epidemic started by one infected member, evaluated at `s`.
pub fn emanating_pgf(law: &dyn ContactLaw, h: u32, mode: LocalMixing, s: f64) -> Result<f64> {
    let q = QNodes::new(law, h, mode)?;
    if h == 1 {
        return Ok(law.joint_pgf(s, 1.0));
    }
    let qs: Vec<f64> = (0..h).map(|k| q.q(k, s)).collect();
    let g = gont_polys(1.0, &qs, (h - 1) as usize);
    let mut acc = Kahan::default();
    for i in 0..h {
        acc.add(falling(h - 1, i) * qs[i as usize].powi((h - i) as i32) * g[i as usize]);
    }
    let value = acc.value();
    if !value.is_finite() {
        return Err(Error::NumericInstability(
            "emanating-contacts pgf produced a non-finite value".into(),
        ));
    }
    Ok(value)
}

/// Joint moments of one household at the end of an epidemic with external
/// infection pressure `t` (each member is hit from outside by a
/// `Poisson(t)` count of contacts, then local spread runs to completion).
///
/// `S~` counts the members still susceptible, `G~` the global contacts
/// emanating from the infected members; `R = h - S~`.
#[derive(Debug, Clone, Copy)]
pub struct HouseholdMoments {
    pub h: u32,
    /// External pressure the moments were evaluated at.
    pub t: f64,
    /// `E[S~]`.
    pub mean_susceptible: f64,
    /// Second falling-factorial moment `E[S~ (S~ - 1)]`.
    pub fact2_susceptible: f64,
    /// Cross moment `E[S~ G~]`.
    pub cross_susceptible_global: f64,
    /// Expected fraction infected, `nu_R(t) = 1 - E[S~]/h`.
    pub nu_r: f64,
    /// Derivative `d/dt nu_R(t)`.
    pub nu_r_prime: f64,
    /// `var(R) = var(S~)`.
    pub var_r: f64,
    /// `cov(R, G~) = E[S~] E[G~] - E[S~ G~]`.
    pub cov_rg: f64,
}

/// Computes [`HouseholdMoments`] exactly via the polynomial recursions.
pub fn household_moments(
    law: &dyn ContactLaw,
    h: u32,
    mode: LocalMixing,
    t: f64,
) -> Result<HouseholdMoments> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "external pressure t must be finite and >= 0, got {t}"
        )));
    }
    let q = QNodes::new(law, h, mode)?;
    let pi = (-t).exp();
    let hf = f64::from(h);
    let mean_g = law.moments().mean_g;

    let q1: Vec<f64> = (0..h).map(|k| q.q(k, 1.0)).collect();
    let qw: Vec<f64> = (0..h).map(|k| q.q_weighted(k)).collect();
    // alpha[i] = G_i(1 | q_1, q_2, ...), shared by the pmf and both moment sums.
    let alpha = gont_polys(1.0, &q1[1..], (h - 1) as usize);
    let pmf = pmf_from_alpha(&q1, &alpha, h)?;

    let q_pow = |i: u32, e: u32| -> f64 {
        if e == 0 {
            1.0
        } else {
            q1[i as usize].powi(e as i32)
        }
    };

    // E[S~] = sum_{i=1}^h h_[i] q_i^{h-i} pi^i G_{i-1}(1 | q_1, q_2, ...).
    let mut mean_acc = Kahan::default();
    for i in 1..=h {
        mean_acc.add(falling(h, i) * q_pow(i, h - i) * pi.powi(i as i32) * alpha[(i - 1) as usize]);
    }
    let mean_susceptible = mean_acc.value();

    // E[S~(S~-1)] uses the twice-shifted node sequence q_2, q_3, ...
    let fact2_susceptible = if h >= 2 {
        let beta = gont_polys(1.0, &q1[2..], (h - 2) as usize);
        let mut acc = Kahan::default();
        for i in 2..=h {
            acc.add(falling(h, i) * q_pow(i, h - i) * pi.powi(i as i32) * beta[(i - 2) as usize]);
        }
        acc.value()
    } else {
        0.0
    };

    // alpha_d[i] = d/ds2 G_i(1 | q_1(s2), q_2(s2), ...) at s2 = 1, from the
    // differentiated defining identity.
    let mut alpha_d = vec![0.0f64; h as usize];
    let mut factorial = 1.0;
    for n in 1..h {
        factorial *= f64::from(n);
        let mut acc = Kahan::default();
        let mut ff_next = f64::from(n); // n_[i+1], updated incrementally
        let mut ff = 1.0; // n_[i]
        for i in 0..n {
            acc.add(ff_next * qw[(i + 1) as usize] * q_pow(i + 1, n - i - 1) * alpha[i as usize]);
            if i >= 1 {
                acc.add(ff * q_pow(i + 1, n - i) * alpha_d[i as usize]);
            }
            ff *= f64::from(n - i);
            ff_next *= f64::from(n - i - 1);
        }
        // The i = n term of the second sum is n! * alpha_d[n]; solve for it.
        alpha_d[n as usize] = -acc.value() / factorial;
    }

    // E[S~ G~] combines both alpha sequences.
    let mut cross_acc = Kahan::default();
    for i in 1..=h {
        cross_acc
            .add(falling(h, i) * q_pow(i, h - i) * pi.powi(i as i32) * alpha_d[(i - 1) as usize]);
    }
    for i in 1..h {
        cross_acc.add(
            falling(h, i + 1)
                * qw[i as usize]
                * q_pow(i, h - i - 1)
                * pi.powi(i as i32)
                * alpha[(i - 1) as usize],
        );
    }
    let cross_susceptible_global = cross_acc.value();

    // Two independent routes to E[S~]/h must agree; a gap means the
    // recursion lost precision.
    let f_s_pi = pgf_from_pmf(&pmf, pi);
    if (f_s_pi - mean_susceptible / hf).abs() > 1e-8 {
        return Err(Error::NumericInstability(format!(
            "household mean mismatch: pgf route {f_s_pi} vs factorial-moment route {}",
            mean_susceptible / hf
        )));
    }

    let nu_r = 1.0 - mean_susceptible / hf;
    let mut nu_prime_acc = Kahan::default();
    for (idx, &p) in pmf.iter().enumerate() {
        let i = idx as i32 + 1;
        nu_prime_acc.add(f64::from(i) * p * pi.powi(i));
    }
    let nu_r_prime = nu_prime_acc.value();

    let mut var_r = fact2_susceptible + mean_susceptible - mean_susceptible * mean_susceptible;
    if var_r < 0.0 {
        if var_r < -1e-9 {
            return Err(Error::NumericInstability(format!("negative household variance {var_r}")));
        }
        var_r = 0.0;
    }
    let mean_global = hf * mean_g * nu_r;
    let cov_rg = mean_susceptible * mean_global - cross_susceptible_global;

    Ok(HouseholdMoments {
        h,
        t,
        mean_susceptible,
        fact2_susceptible,
        cross_susceptible_global,
        nu_r,
        nu_r_prime,
        var_r,
        cov_rg,
    })
}
