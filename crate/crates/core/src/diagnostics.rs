//! Certificates for the regularity conditions behind local superlinear
//! convergence: BD-regularity, strict complementarity, invertibility of the
//! shifted Jacobian, the local error bound and local smoothness.

use serde::{Deserialize, Serialize};

use crate::catalog::{BoundaryOptions, ProxFn, SmoothFn, TieRule};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::linalg::{principal_submatrix, sigma_min, spectral_norm, sym_lambda_min, Matrix, Vector};
use crate::manifold::SupportManifold;
use crate::residual::{DrsSystem, PgmSystem, ResidualKind, ResidualSystem};
use crate::rng::{ball_sample, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `|x_i| ≤ support_tol` counts as zero.
    pub support_tol: f64,
    /// `||∇f(x)|_i − λ| ≤ sc_tol` puts a zero coordinate in `T2`.
    pub sc_tol: f64,
    /// Positive-definiteness and nonsingularity margin.
    pub pd_tol: f64,
    /// Prox kink detection in the argument space.
    pub boundary_tol: f64,
    pub enum_cap: usize,
    /// Stationarity required by the SC check.
    pub stationarity_tol: f64,
    /// Root accuracy required by the error-bound and smoothness probes.
    pub root_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            support_tol: 1e-7,
            sc_tol: 1e-6,
            pd_tol: 1e-10,
            boundary_tol: crate::catalog::DEFAULT_BOUNDARY_TOL,
            enum_cap: crate::catalog::DEFAULT_ENUM_CAP,
            stationarity_tol: 1e-8,
            root_tol: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn boundary_options(&self) -> BoundaryOptions {
        BoundaryOptions {
            boundary_tol: self.boundary_tol,
            enum_cap: self.enum_cap,
        }
    }
}

/// `T1` (support) and `T2` (zero coordinates at the subgradient boundary).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportInfo {
    pub t1: Vec<usize>,
    pub t2: Vec<usize>,
}

impl SupportInfo {
    pub fn new(x: &Vector, grad: &Vector, lambda: f64, tol: &Tolerances) -> Self {
        let mut t1 = Vec::new();
        let mut t2 = Vec::new();
        for i in 0..x.len() {
            if x[i].abs() > tol.support_tol {
                t1.push(i);
            } else if (grad[i].abs() - lambda).abs() <= tol.sc_tol {
                t2.push(i);
            }
        }
        SupportInfo { t1, t2 }
    }

    /// `S = T1 ∪ T2`, sorted.
    pub fn s(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.t1.iter().chain(&self.t2).copied().collect();
        s.sort_unstable();
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Regular,
    NotRegular,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BdMethod {
    /// `λ_min([∇²f]_TT)` for `h = λ‖·‖₁`.
    L1Characterization,
    /// `min σ_min(J)` over the enumerated elements of `∂_B F`.
    Enumeration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdResult {
    pub verdict: Verdict,
    pub method: BdMethod,
    #[serde(with = "crate::linalg::serde_extended_f64")]
    pub margin: f64,
    pub pd_tol: f64,
    /// Number of Jacobian elements tested (enumeration only).
    pub elements: usize,
    pub support: Option<SupportInfo>,
    pub note: Option<String>,
}

/// BD-regularity of `F_PGM` at `x`. For `h = λ‖·‖₁` this uses
/// `T = T1 ∪ T2` and `λ_min([∇²f]_TT) > pd_tol`; otherwise enumeration.
pub fn bd_regularity_pgm(sys: &PgmSystem, x: &Vector, tol: &Tolerances, exec: Execution) -> Result<BdResult> {
    match sys.h() {
        ProxFn::L1 { lambda, .. } => {
            let grad = sys.f().gradient(x);
            let info = SupportInfo::new(x, &grad, *lambda, tol);
            let s = info.s();
            let margin = sym_lambda_min(&principal_submatrix(sys.f().hessian(), &s));
            Ok(BdResult {
                verdict: if margin > tol.pd_tol {
                    Verdict::Regular
                } else {
                    Verdict::NotRegular
                },
                method: BdMethod::L1Characterization,
                margin,
                pd_tol: tol.pd_tol,
                elements: 0,
                support: Some(info),
                note: None,
            })
        }
        _ => bd_regularity_enumerate(&ResidualSystem::Pgm(sys.clone()), x, tol, exec),
    }
}

/// BD-regularity by testing `σ_min(J) > pd_tol` for every enumerated
/// element of `∂_B F(x)`.
pub fn bd_regularity_enumerate(
    sys: &ResidualSystem,
    x: &Vector,
    tol: &Tolerances,
    exec: Execution,
) -> Result<BdResult> {
    let undetermined = |note: String| BdResult {
        verdict: Verdict::Undetermined,
        method: BdMethod::Enumeration,
        margin: f64::NAN,
        pd_tol: tol.pd_tol,
        elements: 0,
        support: None,
        note: Some(note),
    };
    let elements = match sys.bjacobian_elements(x, tol.boundary_options()) {
        Ok(e) => e,
        Err(e @ Error::EnumerationCap { .. }) | Err(e @ Error::NonDifferentiable(_)) => {
            return Ok(undetermined(e.to_string()))
        }
        Err(e) => return Err(e),
    };
    let sigmas = map_indexed(exec, elements.len(), |i| sigma_min(&elements[i].matrix));
    let margin = sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(BdResult {
        verdict: if margin > tol.pd_tol {
            Verdict::Regular
        } else {
            Verdict::NotRegular
        },
        method: BdMethod::Enumeration,
        margin,
        pd_tol: tol.pd_tol,
        elements: elements.len(),
        support: None,
        note: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScResult {
    pub holds: bool,
    /// Distance of `0` to the relative boundary of `∂(f+h)(x*)`; `+∞` when
    /// the subdifferential is relatively open.
    #[serde(with = "crate::linalg::serde_extended_f64")]
    pub gap: f64,
    pub sc_tol: f64,
    pub stationarity: f64,
    /// Coordinates where complementarity fails.
    pub failing: Vec<usize>,
}

/// Strict complementarity at an approximately stationary `x` of `f + h` with
/// quadratic `f`.
pub fn sc_check(f: &SmoothFn, h: &ProxFn, x: &Vector, tol: &Tolerances) -> Result<ScResult> {
    let quad = f
        .as_quadratic()
        .ok_or(Error::NoSmoothStructure("sc_check needs a smooth f; use sc_check_drs"))?;
    let sys = PgmSystem::with_default_step(quad.clone(), h.clone())?;
    let stationarity = ResidualSystem::Pgm(sys).eval(x)?.norm();
    if !(stationarity <= tol.stationarity_tol) {
        return Err(Error::NotStationary {
            residual: stationarity,
            tol: tol.stationarity_tol,
        });
    }
    let v = -quad.gradient(x);
    let sub = h.subdiff_with_tol(x, tol.support_tol)?;
    let gap = sub.relint_margin(&v);
    let failing = match (h, &sub) {
        (ProxFn::L1 { .. }, crate::catalog::SubdiffSet::Box(iv)) => iv
            .iter()
            .zip(v.iter())
            .enumerate()
            .filter(|(_, (i, _))| !i.is_degenerate())
            .filter(|(_, (i, &g))| (g - i.lo).min(i.hi - g) <= tol.sc_tol)
            .map(|(k, _)| k)
            .collect(),
        _ => Vec::new(),
    };
    Ok(ScResult {
        holds: gap > tol.sc_tol,
        gap,
        sc_tol: tol.sc_tol,
        stationarity,
        failing,
    })
}

/// Strict complementarity for basis pursuit from a DRS root `z*`, using the
/// primal-dual pair `x* = prox_{th}(z*)`, `y* = A(x* − z*)/t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisPursuitSc {
    pub sc: ScResult,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `1 − |Aᵀy*|_i` per coordinate.
    pub dual_slack: Vec<f64>,
    pub dual_inf_norm: f64,
    pub feasibility: f64,
    /// For each `i`, exactly one of `x*_i` and `1 − |Aᵀy*|_i` is zero.
    pub pattern_holds: bool,
}

pub fn basis_pursuit_dual(sys: &DrsSystem, z: &Vector) -> Result<(Vector, Vector)> {
    let ProxFn::AffineIndicator(c) = sys.f() else {
        return Err(Error::UnsupportedInstance("dual recovery needs an affine-indicator f".into()));
    };
    let x = sys.primal(z)?;
    let y = c.a() * (&x - z) / sys.t();
    Ok((x, y))
}

pub fn sc_check_drs(sys: &DrsSystem, z: &Vector, tol: &Tolerances) -> Result<BasisPursuitSc> {
    let ProxFn::AffineIndicator(c) = sys.f() else {
        return Err(Error::UnsupportedInstance("sc_check_drs needs an affine-indicator f".into()));
    };
    let ProxFn::L1 { .. } = sys.h() else {
        return Err(Error::UnsupportedInstance("sc_check_drs needs h = ‖·‖₁".into()));
    };
    let stationarity = ResidualSystem::Drs(sys.clone()).eval(z)?.norm();
    if !(stationarity <= tol.stationarity_tol) {
        return Err(Error::NotStationary {
            residual: stationarity,
            tol: tol.stationarity_tol,
        });
    }
    let (x, y) = basis_pursuit_dual(sys, z)?;
    let aty = c.a().transpose() * &y;
    let slack: Vec<f64> = aty.iter().map(|v| 1.0 - v.abs()).collect();
    let mut gap = f64::INFINITY;
    let mut failing = Vec::new();
    let mut pattern = true;
    for i in 0..x.len() {
        let x_zero = x[i].abs() <= tol.support_tol;
        let s_zero = slack[i].abs() <= tol.sc_tol;
        if x_zero {
            gap = gap.min(slack[i]);
        }
        if x_zero == s_zero {
            pattern = false;
            failing.push(i);
        }
    }
    Ok(BasisPursuitSc {
        sc: ScResult {
            holds: pattern && gap > tol.sc_tol,
            gap,
            sc_tol: tol.sc_tol,
            stationarity,
            failing,
        },
        dual_inf_norm: aty.amax(),
        feasibility: c.violation(&x),
        x: x.as_slice().to_vec(),
        y: y.as_slice().to_vec(),
        dual_slack: slack,
        pattern_holds: pattern,
    })
}

/// `σ_min(J P + μ I) − μ` with `μ = ‖F(x)‖`; nonnegative when the shifted
/// inverse is bounded by `μ⁻¹` at `x`.
pub fn invertibility_check(
    sys: &ResidualSystem,
    x: &Vector,
    manifold: Option<&SupportManifold>,
    tie: TieRule,
) -> Result<f64> {
    let mu = sys.eval(x)?.norm();
    if mu == 0.0 {
        return Err(Error::UndefinedAtRoot);
    }
    let j = sys.bjacobian_element(x, tie)?.matrix;
    let mut k = match manifold {
        Some(m) => m.restrict_columns(&j),
        None => j,
    };
    for i in 0..k.nrows() {
        k[(i, i)] += mu;
    }
    Ok(sigma_min(&k) - mu)
}

/// Distance to a known solution set.
pub trait DistanceOracle: Sync {
    fn nearest(&self, x: &Vector) -> Vector;

    fn distance(&self, x: &Vector) -> f64 {
        (x - self.nearest(x)).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundResult {
    #[serde(with = "crate::linalg::serde_extended_f64")]
    pub gamma_hat: f64,
    pub lipschitz_hat: f64,
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
}

fn require_root(sys: &ResidualSystem, x: &Vector, tol: f64) -> Result<()> {
    let r = sys.eval(x)?.norm();
    if !(r <= tol) {
        return Err(Error::NotStationary { residual: r, tol });
    }
    Ok(())
}

/// Seeded points of `M ∩ B(x*, radius)`; stream `i` produces point `i`.
fn manifold_samples(x_star: &Vector, manifold: Option<&SupportManifold>, spec: &SampleSpec) -> Result<Vec<Vector>> {
    let n = x_star.len();
    let base = match manifold {
        Some(m) => m.project(x_star)?,
        None => x_star.clone(),
    };
    let all: Vec<usize> = (0..n).collect();
    let coords = manifold.map_or(&all[..], |m| m.support());
    Ok((0..spec.samples)
        .map(|i| {
            let mut rng = stream_rng(spec.seed, i as u64);
            &base + ball_sample(&mut rng, n, coords, spec.radius)
        })
        .collect())
}

struct SampleEval {
    x: Vector,
    f: Vector,
    dist: f64,
    nearest: Vector,
}

fn evaluate_samples(
    sys: &ResidualSystem,
    points: Vec<Vector>,
    oracle: &dyn DistanceOracle,
    exec: Execution,
) -> Result<Vec<SampleEval>> {
    map_indexed(exec, points.len(), |i| {
        let x = points[i].clone();
        let f = sys.eval(&x)?;
        let nearest = oracle.nearest(&x);
        let dist = (&x - &nearest).norm();
        Ok(SampleEval { x, f, dist, nearest })
    })
    .into_iter()
    .collect()
}

fn gamma_of(evals: &[SampleEval]) -> f64 {
    evals
        .iter()
        .filter(|e| e.dist > 0.0)
        .map(|e| e.f.norm() / e.dist)
        .fold(f64::INFINITY, f64::min)
}

fn lipschitz_of(sys: &ResidualSystem, x_star: &Vector, f_star: &Vector, evals: &[SampleEval]) -> Result<f64> {
    let ratio = |xa: &Vector, fa: &Vector, xb: &Vector, fb: &Vector| {
        let dx = (xa - xb).norm();
        if dx > 0.0 {
            (fa - fb).norm() / dx
        } else {
            0.0
        }
    };
    let mut best = 0.0_f64;
    for (i, a) in evals.iter().enumerate() {
        best = best.max(ratio(&a.x, &a.f, x_star, f_star));
        let f_near = sys.eval(&a.nearest)?;
        best = best.max(ratio(&a.x, &a.f, &a.nearest, &f_near));
        for b in &evals[i + 1..] {
            best = best.max(ratio(&a.x, &a.f, &b.x, &b.f));
        }
    }
    Ok(best)
}

/// `γ̂ = min ‖F(x)‖ / dist(x, X* ∩ M)` over seeded samples of
/// `M ∩ B(x*, radius)`, together with the largest observed difference
/// quotient of `F` over the same samples.
pub fn error_bound_estimate(
    sys: &ResidualSystem,
    x_star: &Vector,
    manifold: &SupportManifold,
    oracle: Option<&dyn DistanceOracle>,
    spec: SampleSpec,
    tol: &Tolerances,
    exec: Execution,
) -> Result<ErrorBoundResult> {
    let oracle = oracle.ok_or_else(|| Error::UnsupportedInstance("no distance oracle for this instance".into()))?;
    require_root(sys, x_star, tol.root_tol)?;
    let points = manifold_samples(x_star, Some(manifold), &spec)?;
    let evals = evaluate_samples(sys, points, oracle, exec)?;
    let f_star = sys.eval(x_star)?;
    Ok(ErrorBoundResult {
        gamma_hat: gamma_of(&evals),
        lipschitz_hat: lipschitz_of(sys, x_star, &f_star, &evals)?,
        radius: spec.radius,
        samples: spec.samples,
        seed: spec.seed,
    })
}

/// `γ̂` over nested radii (ascending). The sample set at each radius
/// includes the samples of all smaller radii, so the profile is an infimum
/// over growing sets.
pub fn error_bound_profile(
    sys: &ResidualSystem,
    x_star: &Vector,
    manifold: &SupportManifold,
    oracle: &dyn DistanceOracle,
    radii: &[f64],
    samples_per_radius: usize,
    seed: u64,
    tol: &Tolerances,
    exec: Execution,
) -> Result<Vec<f64>> {
    require_root(sys, x_star, tol.root_tol)?;
    let mut running = f64::INFINITY;
    let mut out = Vec::with_capacity(radii.len());
    for (j, &radius) in radii.iter().enumerate() {
        let spec = SampleSpec {
            radius,
            samples: samples_per_radius,
            seed: seed.wrapping_add(j as u64),
        };
        let points = manifold_samples(x_star, Some(manifold), &spec)?;
        let evals = evaluate_samples(sys, points, oracle, exec)?;
        running = running.min(gamma_of(&evals));
        out.push(running);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessResult {
    pub deviation: f64,
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
    pub restricted: bool,
    /// Number of distinct Jacobian elements seen.
    pub distinct: usize,
}

/// Largest pairwise spectral-norm difference between B-Jacobian elements at
/// `x*` and at seeded points of `B(x*, radius)` (intersected with `M`
/// when given).
pub fn smoothness_probe(
    sys: &ResidualSystem,
    x_star: &Vector,
    manifold: Option<&SupportManifold>,
    spec: SampleSpec,
    tie: TieRule,
    tol: &Tolerances,
    exec: Execution,
) -> Result<SmoothnessResult> {
    require_root(sys, x_star, tol.root_tol)?;
    let mut points = vec![match manifold {
        Some(m) => m.project(x_star)?,
        None => x_star.clone(),
    }];
    points.extend(manifold_samples(x_star, manifold, &spec)?);
    let jacobians: Vec<Matrix> = map_indexed(exec, points.len(), |i| {
        sys.bjacobian_element(&points[i], tie).map(|e| e.matrix)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut distinct: Vec<&Matrix> = Vec::new();
    for j in &jacobians {
        if !distinct.contains(&j) {
            distinct.push(j);
        }
    }
    let pairs: Vec<(usize, usize)> = (0..distinct.len())
        .flat_map(|a| (a + 1..distinct.len()).map(move |b| (a, b)))
        .collect();
    let deviation = map_indexed(exec, pairs.len(), |p| {
        let (a, b) = pairs[p];
        spectral_norm(&(distinct[a] - distinct[b]))
    })
    .into_iter()
    .fold(0.0, f64::max);
    Ok(SmoothnessResult {
        deviation,
        radius: spec.radius,
        samples: spec.samples,
        seed: spec.seed,
        restricted: manifold.is_some(),
        distinct: distinct.len(),
    })
}

/// Probe radius `0.1 · gap / (1 + ‖∇²f‖)` scaled from an SC gap.
pub fn smoothness_radius(gap: f64, hessian: &Matrix) -> f64 {
    0.1 * gap / (1.0 + spectral_norm(hessian))
}

/// All diagnostics at one candidate point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub residual: ResidualKind,
    pub tolerances: Tolerances,
    pub stationarity: f64,
    pub stationary: bool,
    pub bd: Option<BdResult>,
    pub sc: Option<ScResult>,
    pub basis_pursuit: Option<BasisPursuitSc>,
    /// Minimum of `σ_min(JP + μI) − μ` over probe points near `x`.
    pub invertibility_margin: Option<f64>,
    pub invertibility_probe: Option<SampleSpec>,
    pub error_bound: Option<ErrorBoundResult>,
    pub smoothness: Option<SmoothnessResult>,
    pub smoothness_restricted: Option<SmoothnessResult>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseOptions {
    pub bd: bool,
    pub sc: bool,
    pub invertibility: bool,
    pub error_bound: bool,
    pub smoothness: bool,
    pub samples: usize,
    /// Probe radius; `None` derives it from the SC gap.
    pub radius: Option<f64>,
    pub seed: u64,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        DiagnoseOptions {
            bd: true,
            sc: true,
            invertibility: true,
            error_bound: true,
            smoothness: true,
            samples: 32,
            radius: None,
            seed: 0,
        }
    }
}

/// Runs every enabled check at `x`. Precondition failures become notes and
/// absent fields rather than errors.
pub fn diagnose(
    sys: &ResidualSystem,
    x: &Vector,
    smooth: &SmoothFn,
    oracle: Option<&dyn DistanceOracle>,
    opts: &DiagnoseOptions,
    tol: &Tolerances,
    exec: Execution,
) -> Result<DiagnosticsReport> {
    let stationarity = sys.eval(x)?.norm();
    let mut report = DiagnosticsReport {
        residual: sys.kind(),
        tolerances: *tol,
        stationarity,
        stationary: stationarity <= tol.stationarity_tol,
        bd: None,
        sc: None,
        basis_pursuit: None,
        invertibility_margin: None,
        invertibility_probe: None,
        error_bound: None,
        smoothness: None,
        smoothness_restricted: None,
        notes: Vec::new(),
    };
    if !report.stationary {
        report
            .notes
            .push(format!("not stationary: residual {stationarity:.3e} > {:.1e}", tol.stationarity_tol));
    }

    if opts.bd {
        report.bd = Some(match sys {
            ResidualSystem::Pgm(p) => bd_regularity_pgm(p, x, tol, exec)?,
            _ => bd_regularity_enumerate(sys, x, tol, exec)?,
        });
    }

    let mut gap = None;
    if opts.sc && report.stationary {
        match sys {
            ResidualSystem::Drs(d) => match sc_check_drs(d, x, tol) {
                Ok(bp) => {
                    gap = Some(bp.sc.gap);
                    report.sc = Some(bp.sc.clone());
                    report.basis_pursuit = Some(bp);
                }
                Err(e) => report.notes.push(format!("sc: {e}")),
            },
            _ => match sc_check(smooth, sys.h(), x, tol) {
                Ok(sc) => {
                    gap = Some(sc.gap);
                    report.sc = Some(sc);
                }
                Err(e) => report.notes.push(format!("sc: {e}")),
            },
        }
    }

    let scale = sys.quadratic().map_or(1.0, |q| 1.0 + spectral_norm(q.hessian()));
    let radius = opts.radius.or_else(|| {
        gap.filter(|g| g.is_finite() && *g > 0.0)
            .map(|g| 0.1 * g / scale)
    });
    let manifold = SupportManifold::from_support_of(x, tol.support_tol);
    let is_root = stationarity <= tol.root_tol;

    if opts.invertibility {
        let r = radius.unwrap_or(1e-6);
        let spec = SampleSpec {
            radius: r,
            samples: opts.samples,
            seed: opts.seed,
        };
        let points = manifold_samples(x, None, &spec)?;
        let margins: Vec<Result<f64>> = map_indexed(exec, points.len(), |i| {
            invertibility_check(sys, &points[i], None, TieRule::ZeroOnBoundary)
        });
        let mut worst = f64::INFINITY;
        for m in margins {
            match m {
                Ok(v) => worst = worst.min(v),
                Err(Error::UndefinedAtRoot) => {}
                Err(e) => return Err(e),
            }
        }
        if worst.is_finite() {
            report.invertibility_margin = Some(worst);
            report.invertibility_probe = Some(spec);
        }
    }

    if opts.error_bound {
        match (oracle, is_root) {
            (Some(o), true) => {
                let spec = SampleSpec {
                    radius: radius.unwrap_or(1e-3),
                    samples: opts.samples,
                    seed: opts.seed,
                };
                report.error_bound = Some(error_bound_estimate(sys, x, &manifold, Some(o), spec, tol, exec)?);
            }
            (None, _) => report.notes.push("error bound: no distance oracle".into()),
            (_, false) => report.notes.push("error bound: candidate is not a root".into()),
        }
    }

    if opts.smoothness {
        match (radius, is_root) {
            (Some(r), true) => {
                let spec = SampleSpec {
                    radius: r,
                    samples: opts.samples,
                    seed: opts.seed,
                };
                report.smoothness =
                    Some(smoothness_probe(sys, x, None, spec, TieRule::ZeroOnBoundary, tol, exec)?);
                report.smoothness_restricted = Some(smoothness_probe(
                    sys,
                    x,
                    Some(&manifold),
                    spec,
                    TieRule::ZeroOnBoundary,
                    tol,
                    exec,
                )?);
            }
            (None, _) => report.notes.push("smoothness: no probe radius (set one or need SC gap)".into()),
            (_, false) => report.notes.push("smoothness: candidate is not a root".into()),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::QuadraticFn;
    use crate::rng::{randn_matrix, randn_vector};

    fn identity_lasso(n: usize, lambda: f64, seed: u64) -> (PgmSystem, Vector) {
        let mut rng = stream_rng(seed, 0);
        let b = randn_vector(&mut rng, n);
        let f = QuadraticFn::least_squares(Matrix::identity(n, n), b.clone()).unwrap();
        let sys = PgmSystem::with_default_step(f, ProxFn::l1(lambda, n).unwrap()).unwrap();
        let x = b.map(|v| crate::catalog::soft_threshold(v, lambda));
        (sys, x)
    }

    #[test]
    fn identity_hessian_is_regular_with_unit_margin() {
        let (sys, x) = identity_lasso(6, 0.3, 1);
        let tol = Tolerances::default();
        let bd = bd_regularity_pgm(&sys, &x, &tol, Execution::Sequential).unwrap();
        assert_eq!(bd.verdict, Verdict::Regular);
        assert!((bd.margin - 1.0).abs() < 1e-12);
        let en = bd_regularity_enumerate(&ResidualSystem::Pgm(sys), &x, &tol, Execution::Sequential).unwrap();
        assert_eq!(en.verdict, Verdict::Regular);
        assert_eq!(en.elements, 1);
    }

    #[test]
    fn zero_h_has_infinite_gap() {
        let mut rng = stream_rng(4, 0);
        let a = randn_matrix(&mut rng, 6, 4);
        let b = randn_vector(&mut rng, 6);
        let f = QuadraticFn::least_squares(a.clone(), b.clone()).unwrap();
        let x = (a.transpose() * &a).lu().solve(&(a.transpose() * b)).unwrap();
        let sc = sc_check(&SmoothFn::Quadratic(f), &ProxFn::Zero { dim: 4 }, &x, &Tolerances::default()).unwrap();
        assert!(sc.holds);
        assert_eq!(sc.gap, f64::INFINITY);
        assert_eq!(serde_json::to_value(&sc).unwrap()["gap"], serde_json::Value::Null);
    }

    #[test]
    fn sc_rejects_nonstationary_point() {
        let (sys, x) = identity_lasso(4, 0.3, 2);
        let off = x.add_scalar(1.0);
        let err = sc_check(&SmoothFn::Quadratic(sys.f().clone()), sys.h(), &off, &Tolerances::default());
        assert!(matches!(err, Err(Error::NotStationary { .. })));
    }

    #[test]
    fn invertibility_margin_nonnegative_for_psd_jacobian() {
        // Zero h: J = tH is PSD.
        let mut rng = stream_rng(5, 0);
        let a = randn_matrix(&mut rng, 7, 5);
        let f = QuadraticFn::least_squares(a, randn_vector(&mut rng, 7)).unwrap();
        let sys = ResidualSystem::Pgm(PgmSystem::with_default_step(f, ProxFn::Zero { dim: 5 }).unwrap());
        for _ in 0..20 {
            let x = randn_vector(&mut rng, 5);
            let m = invertibility_check(&sys, &x, None, TieRule::ZeroOnBoundary).unwrap();
            assert!(m >= -1e-12, "{m}");
        }
    }

    #[test]
    fn invertibility_undefined_at_root() {
        let (sys, x) = identity_lasso(4, 0.3, 3);
        let sys = ResidualSystem::Pgm(sys);
        // x is the exact prox fixed point up to rounding; force an exact root.
        let r = sys.eval(&x).unwrap();
        if r.norm() == 0.0 {
            assert!(matches!(
                invertibility_check(&sys, &x, None, TieRule::ZeroOnBoundary),
                Err(Error::UndefinedAtRoot)
            ));
        }
    }

    struct PointOracle(Vector);
    impl DistanceOracle for PointOracle {
        fn nearest(&self, _: &Vector) -> Vector {
            self.0.clone()
        }
    }

    #[test]
    fn zero_radius_probe_is_zero_and_profile_nonincreasing() {
        let (sys, x) = identity_lasso(5, 0.3, 6);
        let sys = ResidualSystem::Pgm(sys);
        let tol = Tolerances::default();
        let spec = SampleSpec { radius: 0.0, samples: 8, seed: 1 };
        let probe = smoothness_probe(&sys, &x, None, spec, TieRule::ZeroOnBoundary, &tol, Execution::Sequential).unwrap();
        assert_eq!(probe.deviation, 0.0);

        let m = SupportManifold::full(5);
        let oracle = PointOracle(x.clone());
        let prof = error_bound_profile(
            &sys,
            &x,
            &m,
            &oracle,
            &[1e-3, 1e-2, 1e-1, 1.0],
            16,
            3,
            &tol,
            Execution::Sequential,
        )
        .unwrap();
        assert!(prof.windows(2).all(|w| w[1] <= w[0]));
        assert!(prof[0] > 0.0);
    }

    #[test]
    fn error_bound_needs_oracle() {
        let (sys, x) = identity_lasso(3, 0.3, 7);
        let sys = ResidualSystem::Pgm(sys);
        let err = error_bound_estimate(
            &sys,
            &x,
            &SupportManifold::full(3),
            None,
            SampleSpec { radius: 0.1, samples: 4, seed: 0 },
            &Tolerances::default(),
            Execution::Sequential,
        );
        assert!(matches!(err, Err(Error::UnsupportedInstance(_))));
    }

    #[test]
    fn strongly_regular_error_bound_positive_and_below_lipschitz() {
        let (sys, x) = identity_lasso(6, 0.3, 8);
        let sys = ResidualSystem::Pgm(sys);
        let oracle = PointOracle(x.clone());
        let eb = error_bound_estimate(
            &sys,
            &x,
            &SupportManifold::full(6),
            Some(&oracle),
            SampleSpec { radius: 0.5, samples: 64, seed: 2 },
            &Tolerances::default(),
            Execution::Parallel,
        )
        .unwrap();
        assert!(eb.gamma_hat > 0.0);
        assert!(eb.gamma_hat <= eb.lipschitz_hat);
    }
}
