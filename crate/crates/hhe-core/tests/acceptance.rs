//! Release gate. Each test pins one acceptance criterion, prints a line per
//! underlying check, and fails when any pinned comparison fails. Tolerances
//! live with the checks in `hhe_core::verify`; this file decides which blocks
//! constitute the gate and under what threading they must pass.

use hhe_core::verify::{all_passed, run_verify, CheckResult, VerifyOptions};

fn run_block(name: &str) -> Vec<CheckResult> {
    let opts = VerifyOptions { only: vec![name.to_string()], full: false };
    let results = run_verify(&opts);
    for r in &results {
        let mark = if r.pass { "PASS" } else { "FAIL" };
        println!(
            "[{mark}] [{}] {}: expected {}, got {} (tol {})",
            r.block, r.check, r.expected, r.got, r.tolerance
        );
        if let Some(detail) = &r.detail {
            println!("       {detail}");
        }
    }
    let verdict = if all_passed(&results) { "PASS" } else { "FAIL" };
    println!("criterion [{name}]: {verdict}");
    results
}

fn assert_block(name: &str) {
    let results = run_block(name);
    assert!(!results.is_empty(), "block {name} produced no checks");
    let failures: Vec<String> = results
        .iter()
        .filter(|r| !r.pass)
        .map(|r| {
            let mut line = format!(
                "  [{}] {}: expected {}, got {} (tol {})",
                r.block, r.check, r.expected, r.got, r.tolerance
            );
            if let Some(detail) = &r.detail {
                line.push_str("\n      ");
                line.push_str(detail);
            }
            line
        })
        .collect();
    assert!(
        failures.is_empty(),
        "{} failing check(s) in block {name}:\n{}",
        failures.len(),
        failures.join("\n")
    );
}

/// (pi, z, sigma) for the six benchmark laws at h = 2, p = 0 must match the
/// recorded four-decimal values within 5e-4, in under five seconds.
///
/// Known discrepancy: the recorded outbreak probability 0.4391 for the
/// gamma(2,2) mixed law does not satisfy the model's own fixed-point
/// equation. A hand-derived pair-household oracle, an independent
/// branching-process Monte Carlo, and the recorded finite-population
/// interval (0.4319, 0.4381) all give 0.4339. The pinned value is kept as
/// recorded, so this test documents the inconsistency by failing.
#[test]
fn asymptotic_benchmark_table() {
    assert_block("table1");
}

/// Constant(2,1) final sizes 0.980 (h=2, p=0), 0.961 (h=3, p=0) and
/// 0.941 (h=2, p=1), each within 1e-3: more mixing can shrink the epidemic.
#[test]
fn decreasing_final_size_counterexamples() {
    assert_block("counterexamples");
}

/// Over h in 2..=6 and p in {0, 0.1, ..., 1}: pi nondecreasing in (h, p) for
/// all six benchmark laws; z nondecreasing for the four laws with log-convex
/// local pgf; z non-monotone in p for constant(1,1) at h in 3..=6, with the
/// p=0 and p=1 endpoints at h=2 equal to 1e-9.
#[test]
fn outbreak_and_final_size_monotonicity() {
    assert_block("monotonicity");
}

/// With one guaranteed local contact, making every contact global helps when
/// the global mean is 1/2 (homogeneous final size below 2/3) and hurts when
/// it is 2 (above 2/3): the z difference between p=1 and p=0.99 changes sign.
#[test]
fn full_swap_direction_depends_on_global_mean() {
    assert_block("swapsign");
}

/// For independent Poisson(1,1) contacts at p=0, |z(h) - z_hom(2)| strictly
/// decreases over h in {2, 5, 10, 20, 40} and is below 0.01 at h=40.
#[test]
fn large_households_approach_homogeneous_mixing() {
    assert_block("homogenization");
}

/// The two closed-form assemblies of the limiting variance agree to 1e-8
/// relative for every benchmark law, and each matches a one-million-sample
/// Monte Carlo of the embedded single-household statistic within three
/// standard errors, in under thirty seconds.
#[test]
fn variance_assemblies_agree_and_match_embedding() {
    assert_block("sigma");
}

/// Susceptibility pmf and emanating pgf match brute-force enumeration to
/// 1e-12 on small households; the polynomial recursion matches an
/// exact-rational re-evaluation to 1e-10 relative at h=12.
#[test]
fn enumeration_and_exact_rational_oracles() {
    assert_block("oracles");
}

/// Poisson(1,1), h=2, n=1000, one introduction, fraction-0.2 cutoff, 1e4
/// seeded runs: z_hat within 0.01 of 0.6170 and pi_hat within 0.02 of
/// 0.6169, in under sixty seconds on a single thread.
#[test]
fn finite_population_simulation_tracks_references() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("single-thread pool");
    pool.install(|| assert_block("simulation"));
}

/// The distance between the major-outbreak size distribution and its normal
/// limit falls from N=250 to N=2000 (1e4 major runs each) and lands within a
/// factor of three of the recorded values 0.0414 and 0.0154.
#[test]
fn ks_distance_shrinks_with_population() {
    assert_block("ks");
}
