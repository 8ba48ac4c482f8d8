//! Regularized inexact semismooth Newton iteration.
//!
//! Each step solves `(J_k P_k + μ_k I) d_k = -F(x_k) + r_k` with
//! `μ_k = ‖F(x_k)‖` and sets `x_{k+1} = P_M(x_k + d_k)`. Without a manifold,
//! `P_k = I` and `P_M` is the identity.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::catalog::TieRule;
use crate::error::{Error, Result};
use crate::linalg::{gmres, lu_solve, sigma_min, Matrix, Vector};
use crate::manifold::SupportManifold;
use crate::residual::{alm_outer_step, AlmOuterStep, AlmSystem, ResidualKind, ResidualSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Dense LU of the shifted system.
    #[default]
    Direct,
    /// GMRES stopped by the inexactness rule `‖r_k‖ ≤ L₃ μ_k ‖F_k‖^q`.
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Globalization {
    None,
    /// Accept the Newton step iff `‖F(x_k + d_k)‖ ≤ ν ‖F_k‖`, otherwise take
    /// one fallback step of the underlying splitting method.
    ResidualDecrease { nu: f64 },
}

impl Default for Globalization {
    fn default() -> Self {
        Globalization::ResidualDecrease { nu: 0.9 }
    }
}

/// Shift rule; `ResidualNorm` is `μ_k = ‖F_k‖`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shift {
    #[default]
    ResidualNorm,
    Fixed { mu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol_residual: f64,
    pub inexact_l3: f64,
    pub inexact_q: f64,
    pub linear_solver: LinearSolver,
    pub globalization: Globalization,
    pub shift: Shift,
    pub tie_rule: TieRule,
    pub seed: u64,
    /// Keep `x_k` in the trace.
    pub store_iterates: bool,
    /// Record wall time per iteration; when off, `time_ms` is 0.
    pub record_timing: bool,
    /// Record `σ_min(J_k P_k + μ_k I)` at every step.
    pub track_invertibility: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 100,
            tol_residual: 1e-12,
            inexact_l3: 1.0,
            inexact_q: 2.0,
            linear_solver: LinearSolver::Direct,
            globalization: Globalization::default(),
            shift: Shift::ResidualNorm,
            tie_rule: TieRule::ZeroOnBoundary,
            seed: 0,
            store_iterates: false,
            record_timing: true,
            track_invertibility: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.inexact_q > 1.0 && self.inexact_q <= 2.0) {
            return bad(format!("inexact_q must lie in (1,2], got {}", self.inexact_q));
        }
        if !(self.inexact_l3 >= 0.0 && self.inexact_l3.is_finite()) {
            return bad(format!("inexact_l3 must be nonnegative, got {}", self.inexact_l3));
        }
        if !(self.tol_residual > 0.0) {
            return bad(format!("tol_residual must be positive, got {}", self.tol_residual));
        }
        if let Globalization::ResidualDecrease { nu } = self.globalization {
            if !(nu > 0.0 && nu < 1.0) {
                return bad(format!("globalization nu must lie in (0,1), got {nu}"));
            }
        }
        if let Shift::Fixed { mu } = self.shift {
            if !(mu >= 0.0 && mu.is_finite()) {
                return bad(format!("fixed shift must be nonnegative, got {mu}"));
            }
        }
        if self.tie_rule == TieRule::Enumerate {
            return bad("tie_rule enumerate does not select a single element".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Newton,
    Fallback,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Newton => "newton",
            StepKind::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Converged,
    MaxIters,
    LinearSolveFailure,
}

/// State at `x_k` and the step taken from it (absent on the final record).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub res_norm: f64,
    pub mu: f64,
    pub d_norm: Option<f64>,
    pub r_norm: Option<f64>,
    /// `L₃ μ_k ‖F_k‖^q` at this step.
    pub r_bound: Option<f64>,
    pub step_kind: Option<StepKind>,
    pub sigma_min_shifted: Option<f64>,
    pub time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub x: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub residual: ResidualKind,
    pub iterations: Vec<IterationRecord>,
    pub status: TerminalStatus,
    pub x_final: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SolveTrace {
    pub fn final_residual(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |r| r.res_norm)
    }

    pub fn residual_norms(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.res_norm).collect()
    }

    pub fn x_final(&self) -> Vector {
        Vector::from_column_slice(&self.x_final)
    }

    /// Number of steps taken.
    pub fn steps(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }

    /// First iteration index with `‖F_k‖ ≤ tol`.
    pub fn first_below(&self, tol: f64) -> Option<usize> {
        self.iterations.iter().find(|r| r.res_norm <= tol).map(|r| r.k)
    }

    /// Equality ignoring wall-clock fields.
    pub fn same_numerics(&self, other: &SolveTrace) -> bool {
        let strip = |t: &SolveTrace| {
            let mut t = t.clone();
            for r in &mut t.iterations {
                r.time_ms = 0.0;
            }
            t
        };
        strip(self) == strip(other)
    }

    /// CSV with columns `k,resF,mu,dnorm,rnorm,step_kind,time_ms`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
        let mut out = String::from("k,resF,mu,dnorm,rnorm,step_kind,time_ms\n");
        for r in &self.iterations {
            out.push_str(&format!(
                "{},{:e},{:e},{},{},{},{}\n",
                r.k,
                r.res_norm,
                r.mu,
                opt(r.d_norm),
                opt(r.r_norm),
                r.step_kind.map_or("", |s| s.as_str()),
                r.time_ms
            ));
        }
        out
    }
}

/// Semismooth Newton on `F(x) = 0` in the full space.
pub fn ssn_solve(system: &ResidualSystem, x0: &Vector, cfg: &SolverConfig) -> Result<SolveTrace> {
    run(system, None, x0, cfg)
}

/// Projected semismooth Newton on `F(x) = 0, x ∈ M`.
pub fn projected_ssn_solve(
    system: &ResidualSystem,
    manifold: &SupportManifold,
    x0: &Vector,
    cfg: &SolverConfig,
) -> Result<SolveTrace> {
    if manifold.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: manifold.dim(),
        });
    }
    run(system, Some(manifold), x0, cfg)
}

fn run(
    system: &ResidualSystem,
    manifold: Option<&SupportManifold>,
    x0: &Vector,
    cfg: &SolverConfig,
) -> Result<SolveTrace> {
    cfg.validate()?;
    let n = system.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    let mut warnings = Vec::new();
    let project = |y: Vector| -> Result<Vector> {
        match manifold {
            Some(m) => m.project(&y),
            None => Ok(y),
        }
    };
    let mut x = x0.clone();
    if let Some(m) = manifold {
        if !m.contains(&x) {
            x = m.project(&x)?;
            warnings.push("x0 was not on the manifold; projected".to_string());
        }
    }

    let start = Instant::now();
    let elapsed = |start: &Instant| {
        if cfg.record_timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    };
    let mut iterations = Vec::new();
    let mut fx = system.eval(&x)?;
    let status = 'outer: loop {
        let k = iterations.len();
        let res_norm = fx.norm();
        let mu = match cfg.shift {
            Shift::ResidualNorm => res_norm,
            Shift::Fixed { mu } => mu,
        };
        let mut rec = IterationRecord {
            k,
            res_norm,
            mu,
            d_norm: None,
            r_norm: None,
            r_bound: None,
            step_kind: None,
            sigma_min_shifted: None,
            time_ms: 0.0,
            x: cfg.store_iterates.then(|| x.as_slice().to_vec()),
        };
        if !res_norm.is_finite() {
            rec.time_ms = elapsed(&start);
            iterations.push(rec);
            break TerminalStatus::LinearSolveFailure;
        }
        if res_norm <= cfg.tol_residual {
            rec.time_ms = elapsed(&start);
            iterations.push(rec);
            break TerminalStatus::Converged;
        }
        if k >= cfg.max_iters {
            rec.time_ms = elapsed(&start);
            iterations.push(rec);
            break TerminalStatus::MaxIters;
        }

        let j = system.bjacobian_element(&x, cfg.tie_rule)?.matrix;
        let mut shifted = match manifold {
            Some(m) => m.restrict_columns(&j),
            None => j,
        };
        for i in 0..n {
            shifted[(i, i)] += mu;
        }
        let rhs = -&fx;
        let r_bound = cfg.inexact_l3 * mu * res_norm.powf(cfg.inexact_q);
        let d = match solve_shifted(&shifted, &rhs, cfg.linear_solver, r_bound) {
            Some(d) => d,
            None => {
                rec.time_ms = elapsed(&start);
                iterations.push(rec);
                break 'outer TerminalStatus::LinearSolveFailure;
            }
        };
        let r_norm = (&shifted * &d - &rhs).norm();
        if cfg.track_invertibility {
            rec.sigma_min_shifted = Some(sigma_min(&shifted));
        }
        let d_norm = d.norm();
        let trial = project(&x + &d)?;
        let f_trial = system.eval(&trial)?;
        let accept = match cfg.globalization {
            Globalization::None => true,
            Globalization::ResidualDecrease { nu } => f_trial.norm() <= nu * res_norm,
        };
        rec.r_norm = Some(r_norm);
        rec.r_bound = Some(r_bound);
        if accept {
            rec.d_norm = Some(d_norm);
            rec.step_kind = Some(StepKind::Newton);
            x = trial;
            fx = f_trial;
        } else {
            let next = project(system.fallback_step(&x)?)?;
            rec.d_norm = Some((&next - &x).norm());
            rec.step_kind = Some(StepKind::Fallback);
            fx = system.eval(&next)?;
            x = next;
        }
        rec.time_ms = elapsed(&start);
        iterations.push(rec);
    };

    Ok(SolveTrace {
        residual: system.kind(),
        iterations,
        status,
        x_final: x.as_slice().to_vec(),
        warnings,
    })
}

fn solve_shifted(k: &Matrix, rhs: &Vector, mode: LinearSolver, r_bound: f64) -> Option<Vector> {
    match mode {
        LinearSolver::Direct => lu_solve(k, rhs),
        LinearSolver::Iterative => {
            let out = gmres(k, rhs, r_bound, rhs.len());
            if out.converged {
                Some(out.solution)
            } else {
                // GMRES stalled above the bound (finite precision); keep the
                // better of the Krylov and direct solutions.
                let direct = lu_solve(k, rhs)?;
                let direct_res = (k * &direct - rhs).norm();
                if direct_res < out.residual_norm {
                    Some(direct)
                } else {
                    Some(out.solution)
                }
            }
        }
    }
}

/// One outer augmented-Lagrangian iteration with the inner subproblem solved
/// by [`ssn_solve`].
pub fn alm_outer_step_ssn(
    system: &AlmSystem,
    x_start: &Vector,
    inner_tol: Option<f64>,
    cfg: &SolverConfig,
) -> Result<AlmOuterStep> {
    alm_outer_step(system, x_start, inner_tol, |residual, x0, tol| {
        let inner = SolverConfig {
            tol_residual: tol.max(f64::MIN_POSITIVE),
            ..cfg.clone()
        };
        let trace = ssn_solve(residual, x0, &inner)?;
        match trace.status {
            TerminalStatus::Converged => Ok(trace.x_final()),
            TerminalStatus::MaxIters => Err(Error::InvalidConfig(format!(
                "inner ALM solve stopped at max_iters with residual {:.3e} > {:.3e}",
                trace.final_residual(),
                tol
            ))),
            TerminalStatus::LinearSolveFailure => {
                Err(Error::InvalidConfig("inner ALM solve hit a linear solve failure".into()))
            }
        }
    })
}

/// Empirical convergence order from a residual history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// Median of `log‖F_{k+1}‖ / log‖F_k‖` over the uncensored tail pairs;
    /// `None` when the tail is too short.
    pub order: Option<f64>,
    pub superlinear: bool,
    pub determined: bool,
    /// `‖F_{k+1}‖/‖F_k‖` over the tail, in iteration order.
    pub tail_ratios: Vec<f64>,
    /// Per tail pair: the successor sits at or below the noise floor
    /// `TAIL_LO`, so its ratio is only an upper bound.
    pub censored: Vec<bool>,
}

/// Tail window `(TAIL_LO, TAIL_HI)` for `‖F_k‖`.
pub const TAIL_HI: f64 = 1e-2;
pub const TAIL_LO: f64 = 1e-14;
/// Minimum number of tail pairs (four iterates).
pub const MIN_TAIL_PAIRS: usize = 3;

pub fn rate_estimate(trace: &SolveTrace) -> RateEstimate {
    rate_estimate_from_norms(&trace.residual_norms())
}

/// A consecutive pair `(a, b)` belongs to the tail when it touches the window:
/// `TAIL_LO < a < 1` and `0 ≤ b < TAIL_HI`. Pairs with `b ≤ TAIL_LO` count
/// toward the tail length but are left out of the order median and the
/// monotonicity test.
pub fn rate_estimate_from_norms(norms: &[f64]) -> RateEstimate {
    let pairs: Vec<(f64, f64)> = norms
        .windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|&(a, b)| a > TAIL_LO && a < 1.0 && (0.0..TAIL_HI).contains(&b))
        .collect();
    let tail_ratios: Vec<f64> = pairs.iter().map(|(a, b)| b / a).collect();
    let censored: Vec<bool> = pairs.iter().map(|&(_, b)| b <= TAIL_LO).collect();
    let open: Vec<(f64, f64)> = pairs.iter().copied().filter(|&(_, b)| b > TAIL_LO).collect();
    if pairs.len() < MIN_TAIL_PAIRS || open.is_empty() {
        return RateEstimate {
            order: None,
            superlinear: false,
            determined: false,
            tail_ratios,
            censored,
        };
    }
    let mut orders: Vec<f64> = open.iter().map(|(a, b)| b.ln() / a.ln()).collect();
    orders.sort_by(|a, b| a.total_cmp(b));
    let mid = orders.len() / 2;
    let order = if orders.len() % 2 == 1 {
        orders[mid]
    } else {
        0.5 * (orders[mid - 1] + orders[mid])
    };
    let ratios: Vec<f64> = open.iter().map(|(a, b)| b / a).collect();
    let last = &ratios[ratios.len().saturating_sub(3)..];
    let decreasing = last.windows(2).all(|w| w[1] < w[0]);
    let superlinear = decreasing && *last.last().expect("nonempty") < 0.1;
    RateEstimate {
        order: Some(order),
        superlinear,
        determined: true,
        tail_ratios,
        censored,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ProxFn, QuadraticFn};
    use crate::residual::PgmSystem;
    use crate::rng::{randn_matrix, randn_vector, stream_rng};

    #[test]
    fn rejects_bad_q() {
        let cfg = SolverConfig { inexact_q: 3.0, ..Default::default() };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("(1,2]"), "{err}");
        assert!(SolverConfig { inexact_q: 1.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig {
            globalization: Globalization::ResidualDecrease { nu: 1.0 },
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn geometric_sequence_is_linear() {
        let norms: Vec<f64> = (0..60).map(|k| 0.5f64.powi(k)).collect();
        let r = rate_estimate_from_norms(&norms);
        assert!(r.determined);
        assert!((r.order.unwrap() - 1.0).abs() < 0.1, "{:?}", r.order);
        assert!(!r.superlinear);
    }

    #[test]
    fn doubly_exponential_sequence_is_quadratic() {
        let norms: Vec<f64> = (0..5).map(|k| 10f64.powi(-(1 << k))).collect();
        let r = rate_estimate_from_norms(&norms);
        assert!((r.order.unwrap() - 2.0).abs() < 1e-9);
        assert!(r.superlinear);
    }

    #[test]
    fn floor_limited_ratio_is_censored() {
        let r = rate_estimate_from_norms(&[3e-2, 1.5e-3, 3.5e-6, 2.1e-11, 4.2e-15]);
        assert!(r.determined);
        assert_eq!(r.censored, vec![false, false, false, true]);
        assert!(r.superlinear);
        let flat = rate_estimate_from_norms(&[1e-3, 1e-6, 1e-9, 1e-9, 1e-9]);
        assert!(!flat.superlinear);
    }

    #[test]
    fn short_tail_is_undetermined() {
        let r = rate_estimate_from_norms(&[1.0, 1e-3, 1e-9]);
        assert!(!r.determined);
        assert!(r.order.is_none());
    }

    #[test]
    fn zero_fn_quadratic_solves_in_one_unshifted_step() {
        let mut rng = stream_rng(11, 0);
        let a = randn_matrix(&mut rng, 8, 5);
        let b = randn_vector(&mut rng, 8);
        let f = QuadraticFn::least_squares(a.clone(), b.clone()).unwrap();
        let sys = ResidualSystem::Pgm(PgmSystem::with_default_step(f, ProxFn::Zero { dim: 5 }).unwrap());
        let exact = (a.transpose() * &a).lu().solve(&(a.transpose() * &b)).unwrap();
        let x0 = randn_vector(&mut rng, 5);

        let cfg = SolverConfig {
            shift: Shift::Fixed { mu: 0.0 },
            globalization: Globalization::None,
            tol_residual: 1e-10,
            ..Default::default()
        };
        let trace = ssn_solve(&sys, &x0, &cfg).unwrap();
        assert_eq!(trace.steps(), 1);
        assert!((trace.x_final() - &exact).norm() < 1e-9);

        let shifted = ssn_solve(&sys, &x0, &SolverConfig::default()).unwrap();
        assert_eq!(shifted.status, TerminalStatus::Converged);
        assert!(shifted.steps() <= 20, "{}", shifted.steps());
        assert!((shifted.x_final() - exact).norm() < 1e-9);
    }

    #[test]
    fn csv_has_fixed_columns() {
        let trace = SolveTrace {
            residual: ResidualKind::Pgm,
            iterations: vec![IterationRecord {
                k: 0,
                res_norm: 0.0,
                mu: 0.0,
                d_norm: None,
                r_norm: None,
                r_bound: None,
                step_kind: None,
                sigma_min_shifted: None,
                time_ms: 0.0,
                x: None,
            }],
            status: TerminalStatus::Converged,
            x_final: vec![],
            warnings: vec![],
        };
        let csv = trace.to_csv();
        assert!(csv.starts_with("k,resF,mu,dnorm,rnorm,step_kind,time_ms\n"));
        assert_eq!(csv.lines().count(), 2);
    }
}
