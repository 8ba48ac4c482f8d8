//! Acceptance gate. Every criterion prints one `PASS`/`FAIL` line to stderr
//! (bypassing output capture) and then asserts its outcome.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ssnkit::catalog::TieRule;
use ssnkit::diagnostics::{error_bound_estimate, sc_check, smoothness_probe, smoothness_radius, SampleSpec, Tolerances};
use ssnkit::exec::Execution;
use ssnkit::experiments::{
    basis_pursuit_experiment, lasso_experiment, lasso_instance, lasso_solution, projected_experiment,
    projected_options, BasisPursuitRun, LassoRun, ProjectedRun, NEWTON_BUDGET,
};
use ssnkit::manifold::SupportManifold;
use ssnkit::problems::gen_no_sc_lasso;
use ssnkit::residual::ResidualKind;
use ssnkit::verify::{bd_comparisons, run_suite, Suite};
use ssnkit::Vector;

const SEEDS: u64 = 20;
const PROJECTED_N: usize = 40;

fn report(id: u32, name: &str, passed: bool, detail: String, elapsed: Duration) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let line = format!("criterion {id} [{name}]: {verdict} ({detail}; {:.2} s)\n", elapsed.as_secs_f64());
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "criterion {id} failed: {detail}");
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn lasso_runs() -> &'static (Vec<LassoRun>, Duration) {
    static CELL: OnceLock<(Vec<LassoRun>, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = Instant::now();
        let runs = lasso_experiment(&seeds(SEEDS), Execution::Parallel).expect("lasso experiment");
        (runs, t.elapsed())
    })
}

fn basis_pursuit_runs() -> &'static (Vec<BasisPursuitRun>, Duration) {
    static CELL: OnceLock<(Vec<BasisPursuitRun>, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = Instant::now();
        let runs = basis_pursuit_experiment(&seeds(SEEDS), Execution::Parallel).expect("basis pursuit experiment");
        (runs, t.elapsed())
    })
}

fn projected_runs() -> &'static (Vec<ProjectedRun>, Duration) {
    static CELL: OnceLock<(Vec<ProjectedRun>, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = Instant::now();
        let runs = projected_experiment(PROJECTED_N, &seeds(10), &projected_options(), Execution::Parallel)
            .expect("projected experiment");
        (runs, t.elapsed())
    })
}

#[test]
fn criterion_1_lasso_duplicated_column() {
    let (runs, elapsed) = lasso_runs();
    let converged = runs.iter().filter(|r| r.summary.converged_superlinearly()).count();
    let gram_ok = runs.iter().filter(|r| r.lambda_min_gram <= 1e-8).count();
    let both = runs.iter().filter(|r| r.both_duplicated_nonzero).count();
    let best = runs.iter().map(|r| r.summary.final_residual).fold(f64::INFINITY, f64::min);
    let passed = converged >= 18 && gram_ok == runs.len() && both >= 15 && elapsed.as_secs_f64() <= 60.0;
    report(
        1,
        "lasso",
        passed,
        format!(
            "{converged}/{} superlinear to 1e-10 within {NEWTON_BUDGET}; lambda_min(A_S^T A_S) <= 1e-8 in {gram_ok}/{}; \
             both duplicated nonzero {both}/{}; best final residual {best:.2e}",
            runs.len(),
            runs.len(),
            runs.len()
        ),
        *elapsed,
    );
}

#[test]
fn criterion_2_basis_pursuit() {
    let (runs, elapsed) = basis_pursuit_runs();
    let converged: Vec<&BasisPursuitRun> = runs.iter().filter(|r| r.summary.converged_superlinearly()).collect();
    let dual_ok = converged
        .iter()
        .filter(|r| r.dual.as_ref().is_some_and(|d| d.dual_inf_norm <= 1.0 + 1e-8 && d.pattern_holds))
        .count();
    let worst_dual = converged
        .iter()
        .filter_map(|r| r.dual.as_ref().map(|d| d.dual_inf_norm))
        .fold(0.0, f64::max);
    let passed = converged.len() >= 18 && dual_ok == converged.len() && elapsed.as_secs_f64() <= 120.0;
    report(
        2,
        "basis pursuit",
        passed,
        format!(
            "{}/{} superlinear to 1e-10 within {NEWTON_BUDGET}; dual conditions on {dual_ok}/{}; max |A^T y|_inf {worst_dual:.12}",
            converged.len(),
            runs.len(),
            converged.len()
        ),
        *elapsed,
    );
}

#[test]
fn criterion_3_bd_equivalence() {
    let t = Instant::now();
    let cmp = bd_comparisons(50, Execution::Parallel).expect("comparisons");
    let agree = cmp.iter().filter(|c| c.agree()).count();
    let elapsed = t.elapsed();
    report(
        3,
        "bd equivalence",
        agree == 50 && elapsed.as_secs_f64() <= 10.0,
        format!("{agree}/50 agree"),
        elapsed,
    );
}

fn suite_criterion(id: u32, suite: Suite) {
    let t = Instant::now();
    let r = run_suite(suite, Execution::Parallel).expect("suite");
    let worst = r
        .checks
        .iter()
        .map(|c| format!("{} {:.1e}/{:.0e}", c.name, c.worst, c.threshold))
        .collect::<Vec<_>>()
        .join(", ");
    report(id, suite.as_str(), r.passed, worst, t.elapsed());
}

#[test]
fn criterion_4_prox_oracles() {
    suite_criterion(4, Suite::ProxOracles);
}

#[test]
fn criterion_5_jacobians() {
    suite_criterion(5, Suite::Jacobians);
}

/// Smallest SC margin over the zero coordinates not listed as failing.
fn gap_off_failing(inst: &ssnkit::problems::ProblemInstance, x: &Vector, failing: &[usize], tol: &Tolerances) -> f64 {
    let q = inst.f.as_quadratic().expect("quadratic");
    let g = q.gradient(x);
    let lambda = inst.meta.lambda;
    (0..x.len())
        .filter(|&i| x[i].abs() <= tol.support_tol && !failing.contains(&i))
        .map(|i| lambda - g[i].abs())
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn criterion_6_local_smoothness() {
    let t = Instant::now();
    let tol = Tolerances::default();
    let spec = |radius: f64, seed: u64| SampleSpec { radius, samples: 64, seed };

    let mut sc_devs = Vec::new();
    let mut skipped = Vec::new();
    let mut seed = 0;
    while sc_devs.len() < 10 && seed < 40 {
        let inst = lasso_instance(seed).expect("instance");
        let x = lasso_solution(&inst).expect("solution");
        let sys = inst.residual_system(ResidualKind::Pgm, None).expect("system");
        match sc_check(&inst.f, &inst.h, &x, &tol) {
            Ok(sc) if sc.holds => {
                let q = inst.f.as_quadratic().expect("quadratic");
                let r = smoothness_radius(sc.gap, q.hessian());
                let res = smoothness_probe(&sys, &x, None, spec(r, seed), TieRule::ZeroOnBoundary, &tol, Execution::Parallel)
                    .expect("probe");
                sc_devs.push(res.deviation);
            }
            _ => skipped.push(seed),
        }
        seed += 1;
    }

    let mut full_devs = Vec::new();
    let mut restricted_devs = Vec::new();
    for seed in 0..10 {
        let inst = gen_no_sc_lasso(PROJECTED_N, seed).expect("instance");
        let x = inst.solution.clone().expect("solution");
        let sys = inst.residual_system(ResidualKind::Pgm, None).expect("system");
        let sc = sc_check(&inst.f, &inst.h, &x, &tol).expect("sc");
        let gap = gap_off_failing(&inst, &x, &sc.failing, &tol);
        let q = inst.f.as_quadratic().expect("quadratic");
        let r = smoothness_radius(gap, q.hessian());
        let manifold = SupportManifold::from_support_of(&x, tol.support_tol);
        let full = smoothness_probe(&sys, &x, None, spec(r, seed), TieRule::ZeroOnBoundary, &tol, Execution::Parallel)
            .expect("probe");
        let restricted =
            smoothness_probe(&sys, &x, Some(&manifold), spec(r, seed), TieRule::ZeroOnBoundary, &tol, Execution::Parallel)
                .expect("probe");
        full_devs.push(full.deviation);
        restricted_devs.push(restricted.deviation);
    }

    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let passed = sc_devs.len() == 10 && max(&sc_devs) <= 1e-10 && min(&full_devs) >= 0.1 && max(&restricted_devs) <= 1e-10;
    report(
        6,
        "local smoothness",
        passed,
        format!(
            "SC instances {} (skipped seeds {skipped:?}) max deviation {:.1e}; no-SC full-space min {:.3}, restricted max {:.1e}",
            sc_devs.len(),
            max(&sc_devs),
            min(&full_devs),
            max(&restricted_devs)
        ),
        t.elapsed(),
    );
}

#[test]
fn criterion_7_projected_ssn() {
    let (runs, elapsed) = projected_runs();
    let converged = runs.iter().filter(|r| r.summary.converged_superlinearly()).count();
    let on_manifold = runs.iter().filter(|r| r.on_manifold).count();
    let identical = runs.iter().filter(|r| r.full_support_identical).count();
    let passed = converged >= 9 && on_manifold == runs.len() && identical == runs.len();
    report(
        7,
        "projected ssn",
        passed,
        format!(
            "{converged}/{} superlinear to 1e-10; iterates on M {on_manifold}/{}; S = [n] bitwise identical {identical}/{}",
            runs.len(),
            runs.len(),
            runs.len()
        ),
        *elapsed,
    );
}

#[test]
fn criterion_8_invertibility() {
    let t = Instant::now();
    let slack = |v: &mut Vec<f64>, s: f64| v.push(s);
    let mut all = Vec::new();
    lasso_runs().0.iter().for_each(|r| slack(&mut all, r.summary.invertibility_slack));
    basis_pursuit_runs().0.iter().for_each(|r| slack(&mut all, r.summary.invertibility_slack));
    projected_runs().0.iter().for_each(|r| slack(&mut all, r.summary.invertibility_slack));
    let worst = all.iter().copied().fold(f64::INFINITY, f64::min);
    report(
        8,
        "invertibility",
        worst >= 0.0,
        format!("min slack sigma_min - (mu - 1e-10(1+mu)) over {} runs: {worst:.3e}", all.len()),
        t.elapsed(),
    );
}

#[test]
fn criterion_9_error_bound() {
    let t = Instant::now();
    let tol = Tolerances::default();
    let mut rows = Vec::new();
    let mut passed = true;
    for seed in 0..5 {
        let inst = lasso_instance(seed).expect("instance");
        let x = lasso_solution(&inst).expect("solution");
        let sys = inst.residual_system(ResidualKind::Pgm, None).expect("system");
        let oracle = inst.solution_set(&x).expect("segment oracle");
        let spec = SampleSpec { radius: 1e-4, samples: 200, seed };
        let full = SupportManifold::full(x.len());
        let eb = error_bound_estimate(&sys, &x, &full, Some(&oracle), spec, &tol, Execution::Parallel).expect("estimate");
        passed &= eb.gamma_hat > 0.0 && eb.gamma_hat <= eb.lipschitz_hat;
        rows.push(format!("{:.2e}<={:.2e}", eb.gamma_hat, eb.lipschitz_hat));
    }
    report(9, "error bound", passed, format!("gamma_hat <= L_hat: {}", rows.join(", ")), t.elapsed());
}
