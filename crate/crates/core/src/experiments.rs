//! End-to-end runs of the duplicated-column Lasso and basis-pursuit
//! experiments, and the no-SC projected-Newton study.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    bd_regularity_pgm, sc_check, sc_check_drs, BasisPursuitSc, BdResult, ScResult, Tolerances,
};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::linalg::{principal_submatrix, sym_lambda_min, Vector};
use crate::manifold::SupportManifold;
use crate::problems::{gen_basis_pursuit_dup, gen_lasso_dup, gen_no_sc_lasso, Generator, ProblemInstance};
use crate::residual::{ResidualKind, ResidualSystem};
use crate::solver::{
    projected_ssn_solve, rate_estimate, ssn_solve, Globalization, RateEstimate, SolveTrace, SolverConfig, StepKind,
};

/// Proximal-gradient warm-start length for the Lasso runs.
pub const LASSO_WARM_STEPS: usize = 200;
/// Basis-pursuit runs start from `z = 0`.
pub const BP_WARM_STEPS: usize = 0;
/// Projected runs warm-start with projected proximal-gradient steps until
/// `‖F‖` drops below this level (capped at `PROJECTED_WARM_CAP` steps).
pub const PROJECTED_WARM_TARGET: f64 = 1e-3;
pub const PROJECTED_WARM_CAP: usize = 100_000;
/// Newton budget for the acceptance criteria.
pub const NEWTON_BUDGET: usize = 60;
pub const TARGET_RESIDUAL: f64 = 1e-10;
/// Relative slack in the shifted-Jacobian invertibility test.
pub const INVERTIBILITY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOptions {
    /// Number of warm-start steps, or the cap when `warm_target` is set.
    pub warm_steps: usize,
    /// Stop the warm start once `‖F‖` reaches this level.
    pub warm_target: Option<f64>,
    pub solver: SolverConfig,
    pub tolerances: Tolerances,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            warm_steps: LASSO_WARM_STEPS,
            warm_target: None,
            solver: SolverConfig {
                track_invertibility: true,
                ..SolverConfig::default()
            },
            tolerances: Tolerances::default(),
        }
    }
}

/// Repeated fixed-point steps of the underlying splitting method from 0.
pub fn warm_start(sys: &ResidualSystem, steps: usize) -> Result<Vector> {
    let mut x = Vector::zeros(sys.dim());
    for _ in 0..steps {
        x = sys.fallback_step(&x)?;
    }
    Ok(x)
}

/// Fixed-point steps from 0, each followed by `P_M` when a manifold is
/// given, until `‖F‖ ≤ target` or `cap` steps. Returns the point and the
/// number of steps taken.
pub fn warm_start_until(
    sys: &ResidualSystem,
    manifold: Option<&SupportManifold>,
    target: f64,
    cap: usize,
) -> Result<(Vector, usize)> {
    let mut x = Vector::zeros(sys.dim());
    for k in 0..cap {
        if sys.eval(&x)?.norm() <= target {
            return Ok((x, k));
        }
        x = sys.fallback_step(&x)?;
        if let Some(m) = manifold {
            x = m.project(&x)?;
        }
    }
    Ok((x, cap))
}

/// Warm start under `opts`: run to `warm_target` when set, otherwise a
/// fixed number of steps followed by `P_M`.
pub fn warm_point(sys: &ResidualSystem, manifold: Option<&SupportManifold>, opts: &ExperimentOptions) -> Result<Vector> {
    match opts.warm_target {
        Some(target) => Ok(warm_start_until(sys, manifold, target, opts.warm_steps)?.0),
        None => {
            let x = warm_start(sys, opts.warm_steps)?;
            match manifold {
                Some(m) => m.project(&x),
                None => Ok(x),
            }
        }
    }
}

/// Smallest slack `σ_min − (μ − 1e-10·(1+μ))` over accepted Newton steps;
/// `+∞` when no step recorded it.
pub fn invertibility_slack(trace: &SolveTrace) -> f64 {
    trace
        .iterations
        .iter()
        .filter(|r| r.step_kind == Some(StepKind::Newton))
        .filter_map(|r| r.sigma_min_shifted.map(|s| s - (r.mu - INVERTIBILITY_SLACK * (1.0 + r.mu))))
        .fold(f64::INFINITY, f64::min)
}

/// Common per-run outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub residual: ResidualKind,
    pub warm_residual: f64,
    pub final_residual: f64,
    pub steps: usize,
    /// First iteration with `‖F_k‖ ≤ 1e-10`.
    pub reached_target_at: Option<usize>,
    pub rate: RateEstimate,
    pub invertibility_slack: f64,
    pub elapsed_ms: f64,
}

impl RunSummary {
    fn new(seed: u64, warm_residual: f64, trace: &SolveTrace, elapsed_ms: f64) -> Self {
        RunSummary {
            seed,
            residual: trace.residual,
            warm_residual,
            final_residual: trace.final_residual(),
            steps: trace.steps(),
            reached_target_at: trace.first_below(TARGET_RESIDUAL),
            rate: rate_estimate(trace),
            invertibility_slack: invertibility_slack(trace),
            elapsed_ms,
        }
    }

    /// Reached `1e-10` within the Newton budget with a superlinear tail.
    pub fn converged_superlinearly(&self) -> bool {
        self.reached_target_at.is_some_and(|k| k <= NEWTON_BUDGET) && self.rate.superlinear
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoRun {
    pub summary: RunSummary,
    pub duplicated: (usize, usize),
    /// `λ_min(A_Sᵀ A_S)` with `S = T1 ∪ T2` at the solution.
    pub lambda_min_gram: f64,
    pub both_duplicated_nonzero: bool,
    pub bd: BdResult,
    pub sc: Option<ScResult>,
    pub x: Vec<f64>,
    #[serde(skip)]
    pub trace: Option<SolveTrace>,
}

pub fn lasso_run(inst: &ProblemInstance, opts: &ExperimentOptions) -> Result<LassoRun> {
    let start = Instant::now();
    let sys = inst.residual_system(ResidualKind::Pgm, None)?;
    let ResidualSystem::Pgm(pgm) = &sys else { unreachable!() };
    let (i1, i2) = inst
        .meta
        .duplicated
        .ok_or_else(|| Error::UnsupportedInstance("lasso run needs a duplicated pair".into()))?;
    let x0 = warm_point(&sys, None, opts)?;
    let warm_residual = sys.eval(&x0)?.norm();
    let trace = ssn_solve(&sys, &x0, &opts.solver)?;
    let x = trace.x_final();
    let tol = &opts.tolerances;
    let bd = bd_regularity_pgm(pgm, &x, tol, Execution::Sequential)?;
    let s = bd.support.as_ref().map(|i| i.s()).unwrap_or_default();
    let lambda_min_gram = sym_lambda_min(&principal_submatrix(pgm.f().hessian(), &s));
    let sc = sc_check(&inst.f, &inst.h, &x, tol).ok();
    let summary = RunSummary::new(inst.seed, warm_residual, &trace, start.elapsed().as_secs_f64() * 1e3);
    Ok(LassoRun {
        summary,
        duplicated: (i1, i2),
        lambda_min_gram,
        both_duplicated_nonzero: x[i1].abs() > tol.support_tol && x[i2].abs() > tol.support_tol,
        bd,
        sc,
        x: x.as_slice().to_vec(),
        trace: Some(trace),
    })
}

pub fn run_lasso_experiment(
    generator: &Generator,
    seeds: &[u64],
    opts: &ExperimentOptions,
    exec: Execution,
) -> Result<Vec<LassoRun>> {
    map_indexed(exec, seeds.len(), |i| {
        let inst = generator.generate(seeds[i])?;
        lasso_run(&inst, opts)
    })
    .into_iter()
    .collect()
}

/// Default Lasso experiment over `seeds`.
pub fn lasso_experiment(seeds: &[u64], exec: Execution) -> Result<Vec<LassoRun>> {
    run_lasso_experiment(&Generator::lasso_dup_default(), seeds, &ExperimentOptions::default(), exec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisPursuitRun {
    pub summary: RunSummary,
    pub duplicated: (usize, usize),
    pub both_duplicated_nonzero: bool,
    pub dual: Option<BasisPursuitSc>,
    pub z: Vec<f64>,
    #[serde(skip)]
    pub trace: Option<SolveTrace>,
}

pub fn basis_pursuit_run(inst: &ProblemInstance, opts: &ExperimentOptions) -> Result<BasisPursuitRun> {
    let start = Instant::now();
    let sys = inst.residual_system(ResidualKind::Drs, None)?;
    let ResidualSystem::Drs(drs) = &sys else { unreachable!() };
    let (i1, i2) = inst
        .meta
        .duplicated
        .ok_or_else(|| Error::UnsupportedInstance("basis-pursuit run needs a duplicated pair".into()))?;
    let z0 = warm_point(&sys, None, opts)?;
    let warm_residual = sys.eval(&z0)?.norm();
    let trace = ssn_solve(&sys, &z0, &opts.solver)?;
    let z = trace.x_final();
    let x = drs.primal(&z)?;
    let tol = &opts.tolerances;
    let dual = sc_check_drs(drs, &z, tol).ok();
    let summary = RunSummary::new(inst.seed, warm_residual, &trace, start.elapsed().as_secs_f64() * 1e3);
    Ok(BasisPursuitRun {
        summary,
        duplicated: (i1, i2),
        both_duplicated_nonzero: x[i1].abs() > tol.support_tol && x[i2].abs() > tol.support_tol,
        dual,
        z: z.as_slice().to_vec(),
        trace: Some(trace),
    })
}

pub fn run_basis_pursuit_experiment(
    generator: &Generator,
    seeds: &[u64],
    opts: &ExperimentOptions,
    exec: Execution,
) -> Result<Vec<BasisPursuitRun>> {
    map_indexed(exec, seeds.len(), |i| {
        let inst = generator.generate(seeds[i])?;
        basis_pursuit_run(&inst, opts)
    })
    .into_iter()
    .collect()
}

/// Basis-pursuit options: cold start and no globalization. The
/// residual-decrease test rejects the unit-length steps that leave the
/// plateaus of the Douglas-Rachford residual, along which `F` is constant.
pub fn basis_pursuit_options() -> ExperimentOptions {
    let mut opts = ExperimentOptions {
        warm_steps: BP_WARM_STEPS,
        ..ExperimentOptions::default()
    };
    opts.solver.globalization = Globalization::None;
    opts
}

pub fn basis_pursuit_experiment(seeds: &[u64], exec: Execution) -> Result<Vec<BasisPursuitRun>> {
    run_basis_pursuit_experiment(&Generator::basis_pursuit_dup_default(), seeds, &basis_pursuit_options(), exec)
}

/// Projected-run options: projected proximal-gradient warm start down to
/// `PROJECTED_WARM_TARGET`.
pub fn projected_options() -> ExperimentOptions {
    ExperimentOptions {
        warm_steps: PROJECTED_WARM_CAP,
        warm_target: Some(PROJECTED_WARM_TARGET),
        ..ExperimentOptions::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedRun {
    pub summary: RunSummary,
    pub support: Vec<usize>,
    pub on_manifold: bool,
    pub distance_to_solution: f64,
    /// Same run with `S = [n]` compared with the unprojected solve.
    pub full_support_identical: bool,
    #[serde(skip)]
    pub trace: Option<SolveTrace>,
}

/// Projected SSN on the true support manifold of a no-SC instance. The
/// comparison with `S = [n]` starts both solvers from the same unprojected
/// warm start.
pub fn projected_run(n: usize, seed: u64, opts: &ExperimentOptions) -> Result<ProjectedRun> {
    let start = Instant::now();
    let inst = gen_no_sc_lasso(n, seed)?;
    let sys = inst.residual_system(ResidualKind::Pgm, None)?;
    let x_star = inst.solution.clone().expect("constructed solution");
    let manifold = SupportManifold::from_support_of(&x_star, 0.0);
    let x0 = warm_point(&sys, Some(&manifold), opts)?;
    let warm = warm_point(&sys, None, opts)?;
    let warm_residual = sys.eval(&x0)?.norm();
    let cfg = SolverConfig {
        store_iterates: true,
        ..opts.solver.clone()
    };
    let trace = projected_ssn_solve(&sys, &manifold, &x0, &cfg)?;
    let on_manifold = trace.warnings.is_empty()
        && trace
            .iterations
            .iter()
            .all(|r| r.x.as_ref().is_none_or(|x| manifold.contains(&Vector::from_column_slice(x))))
        && manifold.contains(&trace.x_final());

    let full = SupportManifold::full(n);
    let a = projected_ssn_solve(&sys, &full, &warm, &opts.solver)?;
    let b = ssn_solve(&sys, &warm, &opts.solver)?;
    let summary = RunSummary::new(seed, warm_residual, &trace, start.elapsed().as_secs_f64() * 1e3);
    Ok(ProjectedRun {
        summary,
        support: manifold.support().to_vec(),
        on_manifold,
        distance_to_solution: (trace.x_final() - &x_star).norm(),
        full_support_identical: a.same_numerics(&b),
        trace: Some(trace),
    })
}

pub fn projected_experiment(n: usize, seeds: &[u64], opts: &ExperimentOptions, exec: Execution) -> Result<Vec<ProjectedRun>> {
    map_indexed(exec, seeds.len(), |i| projected_run(n, seeds[i], opts))
        .into_iter()
        .collect()
}

/// Instances used by the acceptance runs.
pub fn lasso_instance(seed: u64) -> Result<ProblemInstance> {
    gen_lasso_dup(64, 128, 0.1, 1e-3, seed)
}

pub fn basis_pursuit_instance(seed: u64) -> Result<ProblemInstance> {
    gen_basis_pursuit_dup(64, 128, 0.1, seed)
}

/// Accelerated proximal-gradient iteration with objective-value restart,
/// run until `‖F_PGM‖ ≤ target` or `cap` steps.
pub fn accelerated_pgm(sys: &ResidualSystem, x0: &Vector, target: f64, cap: usize) -> Result<(Vector, usize)> {
    let f = sys
        .quadratic()
        .ok_or_else(|| Error::UnsupportedInstance("accelerated PGM needs a quadratic f".into()))?;
    let objective = |x: &Vector| f.value(x) + sys.h().value(x);
    let mut x = x0.clone();
    let mut y = x0.clone();
    let mut theta = 1.0f64;
    let mut obj = objective(&x);
    for k in 0..cap {
        if sys.eval(&x)?.norm() <= target {
            return Ok((x, k));
        }
        let next = sys.fallback_step(&y)?;
        let next_obj = objective(&next);
        if next_obj > obj {
            y = x.clone();
            theta = 1.0;
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        y = &next + (&next - &x) * ((theta - 1.0) / theta_next);
        x = next;
        theta = theta_next;
        obj = next_obj;
    }
    Ok((x, cap))
}

/// High-accuracy PGM-residual root of a quadratic + L1 instance: an
/// accelerated first-order solve down to `1e-9`, polished by SSN.
pub fn lasso_solution(inst: &ProblemInstance) -> Result<Vector> {
    let sys = inst.residual_system(ResidualKind::Pgm, None)?;
    let (x, _) = accelerated_pgm(&sys, &Vector::zeros(sys.dim()), 1e-9, 500_000)?;
    let trace = ssn_solve(&sys, &x, &SolverConfig::default())?;
    let polished = trace.x_final();
    if sys.eval(&polished)?.norm() <= sys.eval(&x)?.norm() {
        Ok(polished)
    } else {
        Ok(x)
    }
}
