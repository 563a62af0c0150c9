//! Exact event-driven simulation of the finite-population model.
//!
//! The population has `n` households of size `h`. Each individual, on
//! becoming infected, draws its contact pair `(X_G, X_L)` once; every local
//! contact independently turns global with probability `p`; remaining local
//! contacts pick housemates and global contacts pick individuals uniformly,
//! with or without replacement per the configured modes. Contacted
//! susceptibles become infected and join a FIFO queue; the final size does
//! not depend on the processing order.
//!
//! Runs are reproducible and embarrassingly parallel: run `i` uses a
//! dedicated ChaCha stream keyed by `(seed, i)`, so batch results are
//! identical regardless of thread count or chunking.

use std::collections::VecDeque;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::contact::{ContactModel, GlobalMixing, LocalMixing};
use crate::error::{Error, Result, MAX_HOUSEHOLD_SIZE};

/// Complete description of one simulated population.
#[derive(Debug, Clone)]
pub struct PopulationSpec {
    pub model: ContactModel,
    /// Number of households.
    pub n: u32,
    /// Household size.
    pub h: u32,
    /// Per-contact probability that a local contact is redirected globally.
    pub p: f64,
    /// Initial infectives, chosen uniformly without replacement.
    pub m: u32,
    pub local_mode: LocalMixing,
    pub global_mode: GlobalMixing,
    /// Base seed; run `i` derives its own independent stream from it.
    pub seed: u64,
}

impl PopulationSpec {
    /// Total population size `n * h`.
    pub fn population(&self) -> u64 {
        u64::from(self.n) * u64::from(self.h)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.h == 0 || self.h > MAX_HOUSEHOLD_SIZE {
            return Err(Error::HouseholdSize { h: self.h, max: MAX_HOUSEHOLD_SIZE });
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("need at least one household".into()));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!(
                "swap probability {} outside [0,1]",
                self.p
            )));
        }
        if self.m == 0 || u64::from(self.m) > self.population() {
            return Err(Error::InvalidParameter(format!(
                "initial infectives {} outside 1..={}",
                self.m,
                self.population()
            )));
        }
        if self.local_mode == LocalMixing::WithoutReplacement {
            let support = self.model.local_support_max().ok_or(Error::UnboundedLocalSupport)?;
            if support > self.h - 1 {
                return Err(Error::LocalSupport { support, limit: self.h - 1 });
            }
        }
        Ok(())
    }
}

/// What one realized epidemic produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpidemicOutcome {
    /// Individuals ever infected (includes the initial cases).
    pub final_size: u32,
    /// Households with at least one infection.
    pub households_infected: u32,
    /// Global contacts made by all infectives (swapped locals included).
    pub global_contacts: u64,
}

/// Runs a single epidemic on the stream keyed by `(spec.seed, run_index)`.
pub fn run_epidemic(spec: &PopulationSpec, run_index: u64) -> Result<EpidemicOutcome> {
    spec.validate()?;
    Ok(run_epidemic_unchecked(spec, run_index))
}

fn run_epidemic_unchecked(spec: &PopulationSpec, run_index: u64) -> EpidemicOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(run_index);

    let n_total = spec.population() as usize;
    let h = spec.h as usize;
    let mut infected = vec![false; n_total];
    let mut household_hit = vec![false; spec.n as usize];
    let mut queue: VecDeque<u32> = VecDeque::new();
    let mut outcome = EpidemicOutcome { final_size: 0, households_infected: 0, global_contacts: 0 };

    let infect = |idx: usize,
                  infected: &mut Vec<bool>,
                  household_hit: &mut Vec<bool>,
                  queue: &mut VecDeque<u32>,
                  outcome: &mut EpidemicOutcome| {
        if !infected[idx] {
            infected[idx] = true;
            queue.push_back(idx as u32);
            outcome.final_size += 1;
            let hh = idx / h;
            if !household_hit[hh] {
                household_hit[hh] = true;
                outcome.households_infected += 1;
            }
        }
    };

    for idx in choose_distinct(&mut rng, spec.m as usize, n_total) {
        infect(idx, &mut infected, &mut household_hit, &mut queue, &mut outcome);
    }

    let mut seen_globals: Vec<usize> = Vec::new();
    while let Some(current) = queue.pop_front() {
        let current = current as usize;
        let (x_g, x_l) = spec.model.sample(&mut rng);

        let mut swapped = 0u32;
        if spec.p > 0.0 {
            for _ in 0..x_l {
                if rng.gen_bool(spec.p) {
                    swapped += 1;
                }
            }
        }
        let locals = x_l - swapped;

        // Local contacts. For h = 1 there is nobody to contact, so the
        // remaining locals are discarded without touching the rng.
        if locals > 0 && h > 1 {
            let base = (current / h) * h;
            let self_off = current - base;
            match spec.local_mode {
                LocalMixing::WithReplacement => {
                    for _ in 0..locals {
                        let mut off = rng.gen_range(0..h - 1);
                        if off >= self_off {
                            off += 1;
                        }
                        infect(
                            base + off,
                            &mut infected,
                            &mut household_hit,
                            &mut queue,
                            &mut outcome,
                        );
                    }
                }
                LocalMixing::WithoutReplacement => {
                    debug_assert!((locals as usize) < h);
                    let mut others: Vec<usize> = (0..h).filter(|&off| off != self_off).collect();
                    for k in 0..locals as usize {
                        let j = rng.gen_range(k..others.len());
                        others.swap(k, j);
                        infect(
                            base + others[k],
                            &mut infected,
                            &mut household_hit,
                            &mut queue,
                            &mut outcome,
                        );
                    }
                }
            }
        }

        // Global contacts, including the swapped locals.
        let globals = u64::from(x_g) + u64::from(swapped);
        match spec.global_mode {
            GlobalMixing::WithReplacement => {
                for _ in 0..globals {
                    let target = rng.gen_range(0..n_total);
                    outcome.global_contacts += 1;
                    // Self-contacts land on an already-infected individual
                    // and change nothing.
                    infect(target, &mut infected, &mut household_hit, &mut queue, &mut outcome);
                }
            }
            GlobalMixing::WithoutReplacement => {
                // Distinct targets, self excluded; the law caps the count at
                // the other n_total - 1 individuals.
                let globals = globals.min(n_total as u64 - 1);
                seen_globals.clear();
                while (seen_globals.len() as u64) < globals {
                    let target = rng.gen_range(0..n_total);
                    if target == current || seen_globals.contains(&target) {
                        continue;
                    }
                    seen_globals.push(target);
                    outcome.global_contacts += 1;
                    infect(target, &mut infected, &mut household_hit, &mut queue, &mut outcome);
                }
            }
        }
    }
    outcome
}

/// Chooses `m` distinct indices uniformly from `0..n_total`.
fn choose_distinct<R: Rng + ?Sized>(rng: &mut R, m: usize, n_total: usize) -> Vec<usize> {
    if m * 2 <= n_total {
        // Rejection is cheap while the draw is sparse.
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        while chosen.len() < m {
            let idx = rng.gen_range(0..n_total);
            if !chosen.contains(&idx) {
                chosen.push(idx);
            }
        }
        chosen
    } else {
        // Dense draws use a partial Fisher-Yates shuffle instead.
        let mut pool: Vec<usize> = (0..n_total).collect();
        for k in 0..m {
            let j = rng.gen_range(k..n_total);
            pool.swap(k, j);
        }
        pool.truncate(m);
        pool
    }
}

/// Runs `n_runs` epidemics on per-run streams, in parallel, returning
/// outcomes in run order (identical for any thread count).
pub fn run_batch(spec: &PopulationSpec, n_runs: u64) -> Result<Vec<EpidemicOutcome>> {
    spec.validate()?;
    Ok((0..n_runs).into_par_iter().map(|i| run_epidemic_unchecked(spec, i)).collect())
}

/// Extends a batch run until `target` outcomes satisfy `is_major`, in chunks,
/// never exceeding `max_runs` total runs.
///
/// The returned vector is truncated immediately after the run that produced
/// the `target`-th major outbreak, so results are independent of chunking;
/// the second element counts the majors found (less than `target` only when
/// the cap was hit).
pub fn run_until_majors(
    spec: &PopulationSpec,
    target: usize,
    max_runs: u64,
    is_major: impl Fn(&EpidemicOutcome) -> bool + Sync,
) -> Result<(Vec<EpidemicOutcome>, usize)> {
    spec.validate()?;
    const CHUNK: u64 = 4096;
    let mut outcomes: Vec<EpidemicOutcome> = Vec::new();
    let mut majors = 0usize;
    let mut next = 0u64;
    while majors < target && next < max_runs {
        let hi = (next + CHUNK).min(max_runs);
        let chunk: Vec<EpidemicOutcome> =
            (next..hi).into_par_iter().map(|i| run_epidemic_unchecked(spec, i)).collect();
        for outcome in chunk {
            let was_major = is_major(&outcome);
            outcomes.push(outcome);
            if was_major {
                majors += 1;
                if majors == target {
                    break;
                }
            }
        }
        next = hi;
    }
    Ok((outcomes, majors))
}

/// Writes outcomes as `run,Z,V,global_contacts` CSV rows.
pub fn write_runs_csv<W: io::Write>(mut w: W, outcomes: &[EpidemicOutcome]) -> io::Result<()> {
    writeln!(w, "run,Z,V,global_contacts")?;
    for (i, o) in outcomes.iter().enumerate() {
        writeln!(w, "{},{},{},{}", i, o.final_size, o.households_infected, o.global_contacts)?;
    }
    Ok(())
}
