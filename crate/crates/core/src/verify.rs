//! Pinned-seed property suites comparing the library against [`crate::oracles`].
//! Each suite returns a machine-readable report of named checks.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{AffineConstraint, ProxFn, QuadraticFn, TieRule};
use crate::diagnostics::{bd_regularity_enumerate, bd_regularity_pgm, Tolerances, Verdict};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::linalg::{sym_lambda_max, sym_lambda_min, Matrix, Vector};
use crate::oracles;
use crate::problems::gen_small_enum;
use crate::residual::{AlmSystem, DrsSystem, PgmSystem, ResidualKind, ResidualSystem, DEFAULT_DRS_STEP};
use crate::rng::{randn_matrix, randn_vector, stream_rng, PRNG_ID};
use crate::solver::rate_estimate_from_norms;
use crate::TOOL_VERSION;

pub const SUITE_SEED: u64 = 2024;
pub const PROX_SAMPLES: usize = 200;
pub const PROX_TOL: f64 = 1e-8;
pub const JACOBIAN_POINTS: usize = 200;
pub const JACOBIAN_REL_TOL: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-6;
/// Sample points closer than this to a kink of a prox are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;
pub const BD_INSTANCES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    ProxOracles,
    Jacobians,
    BdEquivalence,
    Rates,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::ProxOracles, Suite::Jacobians, Suite::BdEquivalence, Suite::Rates];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::ProxOracles => "prox-oracles",
            Suite::Jacobians => "jacobians",
            Suite::BdEquivalence => "bd-equivalence",
            Suite::Rates => "rates",
        }
    }
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite {s:?}; expected prox-oracles, jacobians, bd-equivalence or rates")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    #[serde(with = "crate::linalg::serde_extended_f64")]
    pub worst: f64,
    pub threshold: f64,
    pub samples: usize,
    pub detail: Option<String>,
}

impl Check {
    fn at_most(name: impl Into<String>, worst: f64, threshold: f64, samples: usize) -> Self {
        Check {
            name: name.into(),
            passed: worst <= threshold,
            worst,
            threshold,
            samples,
            detail: None,
        }
    }

    fn flag(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Check {
            name: name.into(),
            passed,
            worst: if passed { 0.0 } else { 1.0 },
            threshold: 0.0,
            samples: 1,
            detail: Some(detail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub tool_version: String,
    pub prng: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

pub fn run_suite(suite: Suite, exec: Execution) -> Result<SuiteReport> {
    let checks = match suite {
        Suite::ProxOracles => prox_oracle_checks(SUITE_SEED, PROX_SAMPLES, exec)?,
        Suite::Jacobians => jacobian_checks(SUITE_SEED, JACOBIAN_POINTS, exec)?,
        Suite::BdEquivalence => bd_equivalence_checks(BD_INSTANCES, exec)?,
        Suite::Rates => rate_checks(),
    };
    Ok(SuiteReport {
        suite,
        tool_version: TOOL_VERSION.to_string(),
        prng: PRNG_ID.to_string(),
        seed: SUITE_SEED,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

fn log_uniform(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    (rng.random::<f64>() * (hi.ln() - lo.ln()) + lo.ln()).exp()
}

/// `m × n` matrix with orthonormal rows.
fn orthonormal_rows(rng: &mut ChaCha20Rng, m: usize, n: usize) -> Matrix {
    let g = randn_matrix(rng, n, m);
    g.qr().q().transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ProxKind {
    L1,
    L2,
    Nonneg,
    Affine,
    Zero,
}

const PROX_KINDS: [ProxKind; 5] = [ProxKind::L1, ProxKind::L2, ProxKind::Nonneg, ProxKind::Affine, ProxKind::Zero];

fn draw_prox(kind: ProxKind, rng: &mut ChaCha20Rng, n: usize) -> Result<ProxFn> {
    Ok(match kind {
        ProxKind::L1 => ProxFn::l1(log_uniform(rng, 1e-2, 10.0), n)?,
        ProxKind::L2 => ProxFn::L2Norm { dim: n },
        ProxKind::Nonneg => ProxFn::NonnegIndicator { dim: n },
        ProxKind::Affine => {
            let m = rng.random_range(1..n);
            let a = orthonormal_rows(rng, m, n);
            let b = randn_vector(rng, m);
            ProxFn::AffineIndicator(AffineConstraint::new(a, b)?)
        }
        ProxKind::Zero => ProxFn::Zero { dim: n },
    })
}

fn oracle_prox(h: &ProxFn, t: f64, y: &Vector) -> Vector {
    match h {
        ProxFn::L1 { lambda, .. } => oracles::prox_l1(*lambda, t, y),
        ProxFn::L2Norm { .. } => oracles::prox_l2(t, y),
        ProxFn::NonnegIndicator { .. } => oracles::prox_nonneg(y),
        ProxFn::AffineIndicator(c) => oracles::project_affine(c.a(), c.b(), y),
        ProxFn::Zero { .. } => y.clone(),
    }
}

struct ProxSample {
    deviation: f64,
    firm_violation: f64,
    jacobian_violation: f64,
}

fn prox_sample(kind: ProxKind, seed: u64, stream: u64) -> Result<ProxSample> {
    let mut rng = stream_rng(seed, stream);
    let n = rng.random_range(2..=8);
    let h = draw_prox(kind, &mut rng, n)?;
    let t = log_uniform(&mut rng, 1e-2, 10.0);
    let scale = log_uniform(&mut rng, 0.1, 10.0);
    let y1 = randn_vector(&mut rng, n) * scale;
    let y2 = randn_vector(&mut rng, n) * scale;

    let p1 = h.prox(t, &y1)?;
    let p2 = h.prox(t, &y2)?;
    let deviation = (&p1 - oracle_prox(&h, t, &y1)).amax();

    let dp = &p1 - &p2;
    let dy = &y1 - &y2;
    let firm_violation = (dp.norm_squared() - dp.dot(&dy)) / (1.0 + dy.norm_squared());

    let m = h.prox_jacobian(t, &y1, TieRule::ZeroOnBoundary)?.matrix;
    let asym = (&m - m.transpose()).amax();
    let sym = (&m + m.transpose()) * 0.5;
    let below = -sym_lambda_min(&sym);
    let above = sym_lambda_max(&sym) - 1.0;
    let jacobian_violation = asym.max(below).max(above);
    Ok(ProxSample {
        deviation,
        firm_violation,
        jacobian_violation,
    })
}

/// For each catalog kind: deviation from the oracle prox, firm
/// nonexpansiveness on a second draw, and `0 ⪯ M ⪯ I` for the selected
/// Jacobian element.
pub fn prox_oracle_checks(seed: u64, samples: usize, exec: Execution) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (k, kind) in PROX_KINDS.into_iter().enumerate() {
        let base = (k * samples) as u64;
        let results = map_indexed(exec, samples, |i| prox_sample(kind, seed, base + i as u64));
        let results: Vec<ProxSample> = results.into_iter().collect::<Result<_>>()?;
        let worst = |f: fn(&ProxSample) -> f64| results.iter().map(f).fold(0.0, f64::max);
        let name = format!("{kind:?}").to_lowercase();
        checks.push(Check::at_most(format!("{name}/oracle-deviation"), worst(|s| s.deviation), PROX_TOL, samples));
        checks.push(Check::at_most(format!("{name}/firm-nonexpansive"), worst(|s| s.firm_violation), 1e-12, samples));
        checks.push(Check::at_most(format!("{name}/jacobian-bounds"), worst(|s| s.jacobian_violation), 1e-12, samples));
    }
    Ok(checks)
}

/// Nonsmooth part cycled over sample points of the Jacobian suite.
fn jacobian_h(i: usize, n: usize, rng: &mut ChaCha20Rng) -> Result<ProxFn> {
    match i % 3 {
        0 => ProxFn::l1(log_uniform(rng, 0.05, 2.0), n),
        1 => Ok(ProxFn::NonnegIndicator { dim: n }),
        _ => Ok(ProxFn::L2Norm { dim: n }),
    }
}

fn jacobian_system(kind: ResidualKind, i: usize, rng: &mut ChaCha20Rng) -> Result<ResidualSystem> {
    let n = 6;
    let h = jacobian_h(i, n, rng)?;
    match kind {
        ResidualKind::Pgm | ResidualKind::Alm => {
            let a = randn_matrix(rng, 4, n);
            let b = randn_vector(rng, 4);
            let f = QuadraticFn::least_squares(a, b)?;
            if kind == ResidualKind::Pgm {
                Ok(ResidualSystem::Pgm(PgmSystem::with_default_step(f, h)?))
            } else {
                let t = log_uniform(rng, 0.1, 2.0);
                let z = randn_vector(rng, n);
                Ok(ResidualSystem::Alm(AlmSystem::new(f, h, t, z)?))
            }
        }
        ResidualKind::Drs => {
            let a = orthonormal_rows(rng, 3, n);
            let b = randn_vector(rng, 3);
            let f = ProxFn::AffineIndicator(AffineConstraint::new(a, b)?);
            Ok(ResidualSystem::Drs(DrsSystem::new(f, h, DEFAULT_DRS_STEP)?))
        }
    }
}

/// Whether every prox evaluated by `F` at `x` is at least `margin` from
/// its nondifferentiability set.
fn away_from_kinks(sys: &ResidualSystem, x: &Vector, margin: f64) -> Result<bool> {
    let w = sys.prox_argument(x);
    if sys.h().nondiff_set_member(sys.t(), &w, margin) {
        return Ok(false);
    }
    if let ResidualSystem::Drs(s) = sys {
        let p = s.h().prox(s.t(), x)?;
        if s.f().nondiff_set_member(s.t(), &(p * 2.0 - x), margin) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn jacobian_sample(kind: ResidualKind, seed: u64, i: usize) -> Result<f64> {
    let mut rng = stream_rng(seed, 10_000 + i as u64);
    let sys = jacobian_system(kind, i, &mut rng)?;
    let n = sys.dim();
    for _ in 0..1000 {
        let x = randn_vector(&mut rng, n) * 1.5;
        if !away_from_kinks(&sys, &x, KINK_MARGIN)? {
            continue;
        }
        let j = sys.bjacobian_element(&x, TieRule::ZeroOnBoundary)?.matrix;
        let fd = oracles::central_difference_jacobian(|v| sys.eval(v).expect("dimension checked"), &x, FD_STEP);
        return Ok((&j - &fd).norm() / fd.norm().max(1.0));
    }
    Err(Error::InvalidConfig(format!("no differentiable point found for {kind} sample {i}")))
}

/// `F_PGM` of the library against the oracle residual on Lasso samples.
fn pgm_residual_deviation(seed: u64, samples: usize) -> Result<f64> {
    let mut worst = 0.0_f64;
    for i in 0..samples {
        let mut rng = stream_rng(seed, 20_000 + i as u64);
        let a = randn_matrix(&mut rng, 4, 6);
        let b = randn_vector(&mut rng, 4);
        let lambda = log_uniform(&mut rng, 0.05, 2.0);
        let f = QuadraticFn::least_squares(a.clone(), b.clone())?;
        let sys = PgmSystem::with_default_step(f, ProxFn::l1(lambda, 6)?)?;
        let x = randn_vector(&mut rng, 6);
        let lib = ResidualSystem::Pgm(sys.clone()).eval(&x)?;
        let g0 = a.transpose() * b;
        let reference = oracles::pgm_l1_residual(&(a.transpose() * &a), &g0, lambda, sys.t(), &x);
        worst = worst.max((lib - reference).amax());
    }
    Ok(worst)
}

/// B-Jacobian elements against central differences of `F` at points away
/// from every kink, for each residual kind.
pub fn jacobian_checks(seed: u64, points: usize, exec: Execution) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for kind in [ResidualKind::Pgm, ResidualKind::Drs, ResidualKind::Alm] {
        let errs = map_indexed(exec, points, |i| jacobian_sample(kind, seed, i));
        let errs: Vec<f64> = errs.into_iter().collect::<Result<_>>()?;
        let worst = errs.iter().copied().fold(0.0, f64::max);
        checks.push(Check::at_most(format!("{kind}/fd-relative-error"), worst, JACOBIAN_REL_TOL, points));
    }
    checks.push(Check::at_most("pgm/l1-residual-vs-oracle", pgm_residual_deviation(seed, points)?, 1e-12, points));
    Ok(checks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdComparison {
    pub seed: u64,
    pub n: usize,
    pub characterization: Verdict,
    pub enumeration: Verdict,
    pub brute_force: bool,
    pub elements: usize,
}

impl BdComparison {
    pub fn agree(&self) -> bool {
        let c = self.characterization == Verdict::Regular;
        self.characterization != Verdict::Undetermined
            && self.enumeration != Verdict::Undetermined
            && c == (self.enumeration == Verdict::Regular)
            && c == self.brute_force
    }
}

pub fn small_enum_dim(seed: u64) -> usize {
    2 + (seed % 5) as usize
}

/// Characterization, library enumeration and oracle enumeration at the
/// certified stationary point of `gen_small_enum(n, seed)`.
pub fn bd_comparison(seed: u64, tol: &Tolerances) -> Result<BdComparison> {
    let n = small_enum_dim(seed);
    let inst = gen_small_enum(n, seed)?;
    let q = inst
        .f
        .as_quadratic()
        .ok_or(Error::NoSmoothStructure("small_enum smooth part"))?
        .clone();
    let lambda = inst.meta.lambda;
    let x = inst.solution.clone().expect("small_enum instances carry x*");
    let sys = PgmSystem::with_default_step(q.clone(), inst.h.clone())?;
    let characterization = bd_regularity_pgm(&sys, &x, tol, Execution::Sequential)?.verdict;
    let enumeration = bd_regularity_enumerate(&ResidualSystem::Pgm(sys.clone()), &x, tol, Execution::Sequential)?.verdict;
    let hess = q.a().transpose() * q.a();
    let g0 = q.a().transpose() * q.b() - q.c();
    let brute = oracles::bd_regular_by_enumeration(&hess, &g0, lambda, sys.t(), &x, tol.boundary_tol, tol.pd_tol);
    Ok(BdComparison {
        seed,
        n,
        characterization,
        enumeration,
        brute_force: brute.regular,
        elements: brute.elements,
    })
}

pub fn bd_comparisons(instances: usize, exec: Execution) -> Result<Vec<BdComparison>> {
    let tol = Tolerances::default();
    map_indexed(exec, instances, |i| bd_comparison(i as u64, &tol))
        .into_iter()
        .collect()
}

fn bd_equivalence_checks(instances: usize, exec: Execution) -> Result<Vec<Check>> {
    let cmp = bd_comparisons(instances, exec)?;
    let agreeing = cmp.iter().filter(|c| c.agree()).count();
    let regular = cmp.iter().filter(|c| c.characterization == Verdict::Regular).count();
    let tied = cmp.iter().filter(|c| c.elements > 1).count();
    let disagreeing: Vec<u64> = cmp.iter().filter(|c| !c.agree()).map(|c| c.seed).collect();
    Ok(vec![Check {
        name: "small-enum/verdicts-agree".into(),
        passed: agreeing == instances,
        worst: (instances - agreeing) as f64,
        threshold: 0.0,
        samples: instances,
        detail: Some(format!(
            "{agreeing}/{instances} agree ({regular} regular, {tied} with ties); disagreeing seeds {disagreeing:?}"
        )),
    }])
}

fn rate_checks() -> Vec<Check> {
    let geometric: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k)).collect();
    let quadratic: Vec<f64> = (0..6).map(|k| 10f64.powf(-(2f64.powi(k)))).collect();
    let mut three_halves = vec![1e-1];
    while *three_halves.last().unwrap() > 1e-13 {
        let e: f64 = *three_halves.last().unwrap();
        three_halves.push(e.powf(1.5));
    }
    let g = rate_estimate_from_norms(&geometric);
    let q = rate_estimate_from_norms(&quadratic);
    let s = rate_estimate_from_norms(&three_halves);
    let short = rate_estimate_from_norms(&[1.0, 1e-3, 1e-9]);
    let order = |r: &crate::solver::RateEstimate| r.order.unwrap_or(f64::NAN);
    vec![
        Check::flag("geometric/not-superlinear", g.determined && !g.superlinear, format!("order {:.3}", order(&g))),
        Check::flag(
            "quadratic/superlinear-order-2",
            q.superlinear && (order(&q) - 2.0).abs() < 0.05,
            format!("order {:.3}", order(&q)),
        ),
        Check::flag(
            "order-1.5/superlinear",
            s.superlinear && (order(&s) - 1.5).abs() < 0.05,
            format!("order {:.3}", order(&s)),
        ),
        Check::flag("short-tail/undetermined", !short.determined, format!("{} tail pairs", short.tail_ratios.len())),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.as_str()));
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn rate_suite_passes() {
        let r = run_suite(Suite::Rates, Execution::Sequential).unwrap();
        assert!(r.passed, "{:?}", r.checks);
    }
}
