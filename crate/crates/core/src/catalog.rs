//! Smooth and nonsmooth building blocks of `min f(x) + h(x)`.
//!
//! [`SmoothFn`] provides value, gradient and Hessian of `f`. [`ProxFn`] is a
//! convex `h` with an exact proximal operator, B-Jacobian elements of that
//! operator, a structured subdifferential and a membership test for the set
//! where the operator fails to be differentiable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, orthonormal_rows_deviation, serde_dense, serde_vector, Matrix, Vector};

/// Tolerance for the orthonormal-rows check on affine constraints.
pub const ORTHONORMAL_TOL: f64 = 1e-12;
/// Absolute tolerance for deciding that a point sits on a kink of a prox.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;
/// Indicator domain membership slack used by [`ProxFn::subdiff`].
pub const DOMAIN_TOL: f64 = 1e-9;
/// Maximum number of boundary coordinates accepted by [`TieRule::Enumerate`].
pub const DEFAULT_ENUM_CAP: usize = 20;

/// The affine set `{x : Ax = b}` with orthonormal rows of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AffineRepr", into = "AffineRepr")]
pub struct AffineConstraint {
    a: Matrix,
    b: Vector,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineRepr {
    #[serde(with = "serde_dense")]
    a: Matrix,
    #[serde(with = "serde_vector")]
    b: Vector,
}

impl TryFrom<AffineRepr> for AffineConstraint {
    type Error = Error;
    fn try_from(r: AffineRepr) -> Result<Self> {
        AffineConstraint::new(r.a, r.b)
    }
}

impl From<AffineConstraint> for AffineRepr {
    fn from(c: AffineConstraint) -> Self {
        AffineRepr { a: c.a, b: c.b }
    }
}

impl AffineConstraint {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        let deviation = orthonormal_rows_deviation(&a);
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(AffineConstraint { a, b })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// ‖Ax - b‖.
    pub fn violation(&self, x: &Vector) -> f64 {
        (&self.a * x - &self.b).norm()
    }

    /// Orthogonal projection `y - Aᵀ(Ay - b)`.
    pub fn project(&self, y: &Vector) -> Vector {
        y - self.a.transpose() * (&self.a * y - &self.b)
    }

    /// `I - AᵀA`, the (constant) Jacobian of the projection.
    pub fn projection_jacobian(&self) -> Matrix {
        let n = self.dim();
        Matrix::identity(n, n) - self.a.transpose() * &self.a
    }
}

/// `f(x) = ½‖Ax - b‖² + cᵀx`; the Hessian `AᵀA` is cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuadraticRepr", into = "QuadraticRepr")]
pub struct QuadraticFn {
    a: Matrix,
    b: Vector,
    c: Vector,
    hessian: Matrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticRepr {
    #[serde(with = "serde_dense")]
    a: Matrix,
    #[serde(with = "serde_vector")]
    b: Vector,
    #[serde(with = "serde_vector")]
    c: Vector,
}

impl TryFrom<QuadraticRepr> for QuadraticFn {
    type Error = Error;
    fn try_from(r: QuadraticRepr) -> Result<Self> {
        QuadraticFn::new(r.a, r.b, r.c)
    }
}

impl From<QuadraticFn> for QuadraticRepr {
    fn from(q: QuadraticFn) -> Self {
        QuadraticRepr { a: q.a, b: q.b, c: q.c }
    }
}

impl QuadraticFn {
    pub fn new(a: Matrix, b: Vector, c: Vector) -> Result<Self> {
        check_dim(a.nrows(), b.len())?;
        check_dim(a.ncols(), c.len())?;
        let hessian = a.transpose() * &a;
        Ok(QuadraticFn { a, b, c, hessian })
    }

    /// Least-squares term only (`c = 0`).
    pub fn least_squares(a: Matrix, b: Vector) -> Result<Self> {
        let n = a.ncols();
        QuadraticFn::new(a, b, Vector::zeros(n))
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn hessian(&self) -> &Matrix {
        &self.hessian
    }

    pub fn value(&self, x: &Vector) -> f64 {
        0.5 * (&self.a * x - &self.b).norm_squared() + self.c.dot(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        self.a.transpose() * (&self.a * x - &self.b) + &self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothFn {
    Quadratic(QuadraticFn),
    AffineIndicator(AffineConstraint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothEval {
    pub value: f64,
    pub gradient: Vector,
    pub hessian: Matrix,
}

impl SmoothFn {
    pub fn dim(&self) -> usize {
        match self {
            SmoothFn::Quadratic(q) => q.dim(),
            SmoothFn::AffineIndicator(c) => c.dim(),
        }
    }

    pub fn smooth_eval(&self, x: &Vector) -> Result<SmoothEval> {
        match self {
            SmoothFn::Quadratic(q) => {
                check_dim(q.dim(), x.len())?;
                Ok(SmoothEval {
                    value: q.value(x),
                    gradient: q.gradient(x),
                    hessian: q.hessian().clone(),
                })
            }
            SmoothFn::AffineIndicator(_) => Err(Error::NoSmoothStructure("affine indicator")),
        }
    }

    /// The prox view of `f`, available for the affine indicator only.
    pub fn as_prox(&self) -> Result<ProxFn> {
        match self {
            SmoothFn::AffineIndicator(c) => Ok(ProxFn::AffineIndicator(c.clone())),
            SmoothFn::Quadratic(_) => Err(Error::NoProx("quadratic")),
        }
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticFn> {
        match self {
            SmoothFn::Quadratic(q) => Some(q),
            SmoothFn::AffineIndicator(_) => None,
        }
    }
}

/// How boundary (kink) coordinates are resolved when selecting B-Jacobian
/// elements of a prox.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Boundary coordinates are treated as inactive (`M_ii = 0`).
    #[default]
    ZeroOnBoundary,
    OneOnBoundary,
    /// Every combination; `2^#boundary` elements.
    Enumerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryOptions {
    pub boundary_tol: f64,
    pub enum_cap: usize,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        BoundaryOptions {
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            enum_cap: DEFAULT_ENUM_CAP,
        }
    }
}

/// Where a tie was broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Coordinate(usize),
    /// The sphere `‖y‖ = t` of the Euclidean-norm prox.
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieDecision {
    pub at: Boundary,
    /// Whether the active (outer) one-sided limit was chosen.
    pub active: bool,
}

/// One element of `∂_B prox_{tφ}(y)` together with the tie decisions that
/// selected it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxJacobian {
    pub matrix: Matrix,
    pub ties: Vec<TieDecision>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Inactive,
    Active,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxFn {
    /// `λ‖x‖₁`.
    L1 { lambda: f64, dim: usize },
    /// `‖x‖₂`.
    L2Norm { dim: usize },
    /// Indicator of the nonnegative orthant.
    NonnegIndicator { dim: usize },
    /// Indicator of `{x : Ax = b}`.
    AffineIndicator(AffineConstraint),
    /// `φ ≡ 0`.
    Zero { dim: usize },
}

impl ProxFn {
    pub fn l1(lambda: f64, dim: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "l1 weight must be positive and finite, got {lambda}"
            )));
        }
        Ok(ProxFn::L1 { lambda, dim })
    }

    /// Re-checks invariants of a value built from untrusted input.
    pub fn validate(&self) -> Result<()> {
        match self {
            ProxFn::L1 { lambda, dim } => ProxFn::l1(*lambda, *dim).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ProxFn::L1 { dim, .. }
            | ProxFn::L2Norm { dim }
            | ProxFn::NonnegIndicator { dim }
            | ProxFn::Zero { dim } => *dim,
            ProxFn::AffineIndicator(c) => c.dim(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProxFn::L1 { .. } => "l1",
            ProxFn::L2Norm { .. } => "l2_norm",
            ProxFn::NonnegIndicator { .. } => "nonneg_indicator",
            ProxFn::AffineIndicator(_) => "affine_indicator",
            ProxFn::Zero { .. } => "zero",
        }
    }

    /// Function value; `+∞` outside the domain of an indicator.
    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            ProxFn::L1 { lambda, .. } => lambda * x.lp_norm(1),
            ProxFn::L2Norm { .. } => x.norm(),
            ProxFn::NonnegIndicator { .. } => {
                if x.iter().all(|&v| v >= 0.0) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxFn::AffineIndicator(c) => {
                if c.violation(x) <= DOMAIN_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxFn::Zero { .. } => 0.0,
        }
    }

    fn check(&self, t: f64, y: &Vector) -> Result<()> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveStep(t));
        }
        check_dim(self.dim(), y.len())
    }

    /// `argmin_x φ(x) + ‖x - y‖²/(2t)`.
    pub fn prox(&self, t: f64, y: &Vector) -> Result<Vector> {
        self.check(t, y)?;
        Ok(match self {
            ProxFn::L1 { lambda, .. } => {
                let thr = t * lambda;
                y.map(|v| soft_threshold(v, thr))
            }
            ProxFn::L2Norm { .. } => {
                let r = y.norm();
                if r >= t {
                    y * (1.0 - t / r)
                } else {
                    Vector::zeros(y.len())
                }
            }
            ProxFn::NonnegIndicator { .. } => y.map(|v| v.max(0.0)),
            ProxFn::AffineIndicator(c) => c.project(y),
            ProxFn::Zero { .. } => y.clone(),
        })
    }

    fn coordinate_sides(&self, t: f64, y: &Vector, tol: f64) -> Option<Vec<Side>> {
        let classify = |v: f64, kink: f64| {
            if (v - kink).abs() <= tol {
                Side::Boundary
            } else if v > kink {
                Side::Active
            } else {
                Side::Inactive
            }
        };
        match self {
            ProxFn::L1 { lambda, .. } => {
                let thr = t * lambda;
                Some(y.iter().map(|v| classify(v.abs(), thr)).collect())
            }
            ProxFn::NonnegIndicator { .. } => Some(y.iter().map(|&v| classify(v, 0.0)).collect()),
            _ => None,
        }
    }

    /// Elements of `∂_B prox_{tφ}(y)` under `tie`: one element for the
    /// zero/one rules, all `2^#boundary` elements for `Enumerate`.
    pub fn prox_bjacobian(
        &self,
        t: f64,
        y: &Vector,
        tie: TieRule,
        opts: BoundaryOptions,
    ) -> Result<Vec<ProxJacobian>> {
        self.check(t, y)?;
        let n = y.len();
        match self {
            ProxFn::L1 { .. } | ProxFn::NonnegIndicator { .. } => {
                let sides = self
                    .coordinate_sides(t, y, opts.boundary_tol)
                    .expect("separable kind");
                let boundary: Vec<usize> = sides
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| **s == Side::Boundary)
                    .map(|(i, _)| i)
                    .collect();
                let base = Vector::from_iterator(
                    n,
                    sides.iter().map(|s| if *s == Side::Active { 1.0 } else { 0.0 }),
                );
                let choices = tie_choices(&boundary, tie, opts.enum_cap)?;
                Ok(choices
                    .into_iter()
                    .map(|active| {
                        let mut diag = base.clone();
                        let ties = boundary
                            .iter()
                            .zip(&active)
                            .map(|(&i, &a)| {
                                diag[i] = if a { 1.0 } else { 0.0 };
                                TieDecision {
                                    at: Boundary::Coordinate(i),
                                    active: a,
                                }
                            })
                            .collect();
                        ProxJacobian {
                            matrix: Matrix::from_diagonal(&diag),
                            ties,
                        }
                    })
                    .collect())
            }
            ProxFn::L2Norm { .. } => {
                let r = y.norm();
                let outer = |y: &Vector, r: f64| {
                    let mut m = Matrix::identity(n, n) * (1.0 - t / r);
                    m += (y * y.transpose()) * (t / (r * r * r));
                    m
                };
                if (r - t).abs() > opts.boundary_tol {
                    let matrix = if r > t { outer(y, r) } else { Matrix::zeros(n, n) };
                    return Ok(vec![ProxJacobian { matrix, ties: vec![] }]);
                }
                let choices = tie_choices(&[0], tie, opts.enum_cap)?;
                Ok(choices
                    .into_iter()
                    .map(|active| {
                        let active = active[0];
                        let matrix = if active { outer(y, r) } else { Matrix::zeros(n, n) };
                        ProxJacobian {
                            matrix,
                            ties: vec![TieDecision {
                                at: Boundary::Sphere,
                                active,
                            }],
                        }
                    })
                    .collect())
            }
            ProxFn::AffineIndicator(c) => Ok(vec![ProxJacobian {
                matrix: c.projection_jacobian(),
                ties: vec![],
            }]),
            ProxFn::Zero { .. } => Ok(vec![ProxJacobian {
                matrix: Matrix::identity(n, n),
                ties: vec![],
            }]),
        }
    }

    /// A single B-Jacobian element; `Enumerate` is not a single selection and
    /// falls back to the first enumerated element.
    pub fn prox_jacobian(&self, t: f64, y: &Vector, tie: TieRule) -> Result<ProxJacobian> {
        let mut all = self.prox_bjacobian(t, y, tie, BoundaryOptions::default())?;
        Ok(all.swap_remove(0))
    }

    /// Whether `y` lies within `tol` of the set where `prox_{tφ}` is not
    /// differentiable.
    pub fn nondiff_set_member(&self, t: f64, y: &Vector, tol: f64) -> bool {
        match self {
            ProxFn::L1 { lambda, .. } => y.iter().any(|v| (v.abs() - t * lambda).abs() <= tol),
            ProxFn::NonnegIndicator { .. } => y.iter().any(|v| v.abs() <= tol),
            ProxFn::L2Norm { .. } => (y.norm() - t).abs() <= tol,
            ProxFn::AffineIndicator(_) | ProxFn::Zero { .. } => false,
        }
    }

    /// `∂φ(x)` with exact zero tests.
    pub fn subdiff(&self, x: &Vector) -> Result<SubdiffSet> {
        self.subdiff_with_tol(x, 0.0)
    }

    /// `∂φ(x)`, where coordinates with `|x_i| ≤ zero_tol` count as zero.
    pub fn subdiff_with_tol(&self, x: &Vector, zero_tol: f64) -> Result<SubdiffSet> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            ProxFn::L1 { lambda, .. } => SubdiffSet::Box(
                x.iter()
                    .map(|&v| {
                        if v.abs() <= zero_tol {
                            Interval::new(-lambda, *lambda)
                        } else {
                            Interval::point(lambda * v.signum())
                        }
                    })
                    .collect(),
            ),
            ProxFn::L2Norm { .. } => {
                let r = x.norm();
                if r <= zero_tol {
                    SubdiffSet::Ball {
                        center: Vector::zeros(x.len()),
                        radius: 1.0,
                    }
                } else {
                    SubdiffSet::Box(x.iter().map(|v| Interval::point(v / r)).collect())
                }
            }
            ProxFn::NonnegIndicator { .. } => {
                let worst = x.iter().fold(0.0_f64, |w, &v| w.max(-v));
                if worst > DOMAIN_TOL.max(zero_tol) {
                    return Err(Error::DomainViolation {
                        what: "nonnegative orthant",
                        violation: worst,
                    });
                }
                SubdiffSet::Box(
                    x.iter()
                        .map(|&v| {
                            if v.abs() <= zero_tol || v <= 0.0 {
                                Interval::new(f64::NEG_INFINITY, 0.0)
                            } else {
                                Interval::point(0.0)
                            }
                        })
                        .collect(),
                )
            }
            ProxFn::AffineIndicator(c) => {
                let violation = c.violation(x);
                if violation > DOMAIN_TOL {
                    return Err(Error::DomainViolation {
                        what: "affine set",
                        violation,
                    });
                }
                SubdiffSet::RowSpace(c.a().clone())
            }
            ProxFn::Zero { .. } => SubdiffSet::Box(vec![Interval::point(0.0); x.len()]),
        })
    }
}

pub fn soft_threshold(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

fn tie_choices(boundary: &[usize], tie: TieRule, cap: usize) -> Result<Vec<Vec<bool>>> {
    let k = boundary.len();
    match tie {
        TieRule::ZeroOnBoundary => Ok(vec![vec![false; k]]),
        TieRule::OneOnBoundary => Ok(vec![vec![true; k]]),
        TieRule::Enumerate => {
            if k > cap {
                return Err(Error::EnumerationCap { boundary: k, cap });
            }
            Ok((0..1usize << k)
                .map(|mask| (0..k).map(|j| mask >> j & 1 == 1).collect())
                .collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    fn distance(&self, v: f64) -> f64 {
        if v < self.lo {
            self.lo - v
        } else if v > self.hi {
            v - self.hi
        } else {
            0.0
        }
    }
}

/// Structured description of a subdifferential `∂φ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum SubdiffSet {
    /// Cartesian product of intervals (points are degenerate intervals).
    Box(Vec<Interval>),
    Ball { center: Vector, radius: f64 },
    /// `Range(Aᵀ)` for `A` with orthonormal rows.
    RowSpace(Matrix),
}

impl SubdiffSet {
    /// Euclidean distance from `v` to the set.
    pub fn distance(&self, v: &Vector) -> f64 {
        match self {
            SubdiffSet::Box(iv) => iv
                .iter()
                .zip(v.iter())
                .map(|(i, &x)| i.distance(x).powi(2))
                .sum::<f64>()
                .sqrt(),
            SubdiffSet::Ball { center, radius } => ((v - center).norm() - radius).max(0.0),
            SubdiffSet::RowSpace(a) => (v - a.transpose() * (a * v)).norm(),
        }
    }

    pub fn contains(&self, v: &Vector, slack: f64) -> bool {
        self.distance(v) <= slack
    }

    /// Distance from `v` to the relative boundary, signed negative along a
    /// nondegenerate direction where `v` lies outside. `+∞` when the set is
    /// relatively open (subspaces, points, products of those).
    pub fn relint_margin(&self, v: &Vector) -> f64 {
        match self {
            SubdiffSet::Box(iv) => iv
                .iter()
                .zip(v.iter())
                .filter(|(i, _)| !i.is_degenerate())
                .map(|(i, &x)| (x - i.lo).min(i.hi - x))
                .fold(f64::INFINITY, f64::min),
            SubdiffSet::Ball { center, radius } => {
                if *radius > 0.0 {
                    radius - (v - center).norm()
                } else {
                    f64::INFINITY
                }
            }
            SubdiffSet::RowSpace(_) => f64::INFINITY,
        }
    }

    pub fn in_relative_interior(&self, v: &Vector, slack: f64) -> bool {
        self.contains(v, slack) && self.relint_margin(v) > slack
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{randn_matrix, randn_vector, stream_rng};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn orthonormal_affine(m: usize, n: usize, seed: u64) -> AffineConstraint {
        let mut rng = stream_rng(seed, 0);
        let a = randn_matrix(&mut rng, n, m);
        let q = a.qr().q().transpose();
        let b = randn_vector(&mut rng, m);
        AffineConstraint::new(q, b).unwrap()
    }

    #[test]
    fn l1_prox_soft_thresholds() {
        let h = ProxFn::l1(1.0, 3).unwrap();
        assert_eq!(h.prox(1.0, &v(&[2.0, -0.5, 0.0])).unwrap(), v(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn prox_rejects_bad_input() {
        let h = ProxFn::l1(1.0, 2).unwrap();
        assert!(matches!(h.prox(0.0, &v(&[1.0, 1.0])), Err(Error::NonPositiveStep(_))));
        assert!(matches!(h.prox(-1.0, &v(&[1.0, 1.0])), Err(Error::NonPositiveStep(_))));
        assert!(matches!(h.prox(1.0, &v(&[1.0])), Err(Error::DimensionMismatch { .. })));
        assert!(ProxFn::l1(0.0, 2).is_err());
    }

    #[test]
    fn affine_prox_fixes_feasible_points() {
        let c = orthonormal_affine(2, 5, 3);
        let h = ProxFn::AffineIndicator(c.clone());
        let mut rng = stream_rng(3, 9);
        let y = c.project(&randn_vector(&mut rng, 5));
        assert!((h.prox(0.7, &y).unwrap() - &y).norm() < 1e-14);
    }

    #[test]
    fn affine_constraint_requires_orthonormal_rows() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(matches!(
            AffineConstraint::new(a, v(&[0.0])),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn l1_jacobian_off_boundary() {
        let h = ProxFn::l1(1.0, 2).unwrap();
        let j = h.prox_jacobian(1.0, &v(&[2.0, 0.1]), TieRule::ZeroOnBoundary).unwrap();
        assert_eq!(j.matrix, Matrix::from_diagonal(&v(&[1.0, 0.0])));
        assert!(j.ties.is_empty());
    }

    #[test]
    fn l1_enumerate_on_boundary() {
        let h = ProxFn::l1(1.0, 2).unwrap();
        let all = h
            .prox_bjacobian(1.0, &v(&[1.0, 3.0]), TieRule::Enumerate, BoundaryOptions::default())
            .unwrap();
        let mats: Vec<Matrix> = all.iter().map(|j| j.matrix.clone()).collect();
        assert_eq!(mats.len(), 2);
        assert!(mats.contains(&Matrix::from_diagonal(&v(&[0.0, 1.0]))));
        assert!(mats.contains(&Matrix::from_diagonal(&v(&[1.0, 1.0]))));
    }

    #[test]
    fn tie_rules_pick_expected_side() {
        let h = ProxFn::NonnegIndicator { dim: 2 };
        let y = v(&[0.0, 2.0]);
        let zero = h.prox_jacobian(1.0, &y, TieRule::ZeroOnBoundary).unwrap();
        let one = h.prox_jacobian(1.0, &y, TieRule::OneOnBoundary).unwrap();
        assert_eq!(zero.matrix[(0, 0)], 0.0);
        assert_eq!(one.matrix[(0, 0)], 1.0);
        assert_eq!(one.ties, vec![TieDecision { at: Boundary::Coordinate(0), active: true }]);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let h = ProxFn::l1(1.0, 4).unwrap();
        let y = v(&[1.0, -1.0, 1.0, 5.0]);
        let opts = BoundaryOptions { enum_cap: 2, ..Default::default() };
        assert!(matches!(
            h.prox_bjacobian(1.0, &y, TieRule::Enumerate, opts),
            Err(Error::EnumerationCap { boundary: 3, cap: 2 })
        ));
    }

    #[test]
    fn l2_sphere_enumerates_both_limits() {
        let h = ProxFn::L2Norm { dim: 2 };
        let y = v(&[0.6, 0.8]);
        let all = h
            .prox_bjacobian(1.0, &y, TieRule::Enumerate, BoundaryOptions::default())
            .unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].matrix, Matrix::zeros(2, 2));
        let outer = &all[1].matrix;
        assert!((outer - &y * y.transpose()).norm() < 1e-15);
    }

    #[test]
    fn nondiff_sets() {
        let l1 = ProxFn::l1(1.0, 2).unwrap();
        assert!(l1.nondiff_set_member(1.0, &v(&[1.0, 5.0]), 0.0));
        assert!(!l1.nondiff_set_member(1.0, &v(&[0.5, 5.0]), 0.0));
        let c = orthonormal_affine(2, 4, 1);
        let aff = ProxFn::AffineIndicator(c);
        assert!(!aff.nondiff_set_member(1.0, &v(&[1.0, 1.0, 1.0, 1.0]), 1.0));
        let l2 = ProxFn::L2Norm { dim: 2 };
        assert!(l2.nondiff_set_member(1.0, &v(&[0.6, 0.8]), 1e-12));
        assert!(ProxFn::NonnegIndicator { dim: 2 }.nondiff_set_member(1.0, &v(&[0.0, 1.0]), 0.0));
        assert!(!ProxFn::Zero { dim: 1 }.nondiff_set_member(1.0, &v(&[0.0]), 1.0));
    }

    #[test]
    fn l1_subdiff_structure() {
        let h = ProxFn::l1(1.0, 2).unwrap();
        let s = h.subdiff(&v(&[0.0, 2.0])).unwrap();
        assert_eq!(
            s,
            SubdiffSet::Box(vec![Interval::new(-1.0, 1.0), Interval::point(1.0)])
        );
        assert!(s.contains(&v(&[0.3, 1.0]), 0.0));
        assert!(!s.contains(&v(&[0.3, 0.9]), 0.0));
        assert!(s.in_relative_interior(&v(&[0.3, 1.0]), 0.0));
        assert!(!s.in_relative_interior(&v(&[1.0, 1.0]), 0.0));
        assert!((s.distance(&v(&[1.5, 1.0])) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_fn_subdiff_is_origin() {
        let s = ProxFn::Zero { dim: 3 }.subdiff(&v(&[1.0, 2.0, 3.0])).unwrap();
        assert!(s.contains(&Vector::zeros(3), 0.0));
        assert!(!s.contains(&v(&[0.0, 1e-3, 0.0]), 1e-6));
    }

    #[test]
    fn affine_subdiff_is_row_space() {
        let c = orthonormal_affine(3, 6, 5);
        let h = ProxFn::AffineIndicator(c.clone());
        let mut rng = stream_rng(5, 2);
        let x = c.project(&randn_vector(&mut rng, 6));
        let s = h.subdiff(&x).unwrap();
        for _ in 0..20 {
            let w = randn_vector(&mut rng, 3);
            assert!(s.contains(&(c.a().transpose() * w), 1e-12));
        }
        let off = randn_vector(&mut rng, 6);
        assert!(!s.contains(&off, 1e-6));
        assert!(matches!(
            h.subdiff(&(x + Vector::from_element(6, 1.0))),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn nonneg_subdiff_domain() {
        let h = ProxFn::NonnegIndicator { dim: 2 };
        assert!(h.subdiff(&v(&[-1.0, 0.0])).is_err());
        let s = h.subdiff(&v(&[0.0, 2.0])).unwrap();
        assert!(s.contains(&v(&[-3.0, 0.0]), 0.0));
        assert!(!s.contains(&v(&[0.1, 0.0]), 0.0));
    }

    #[test]
    fn smooth_eval_identity_toy() {
        let f = SmoothFn::Quadratic(
            QuadraticFn::least_squares(Matrix::identity(2, 2), Vector::zeros(2)).unwrap(),
        );
        let e = f.smooth_eval(&v(&[1.0, 1.0])).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.gradient, v(&[1.0, 1.0]));
        assert_eq!(e.hessian, Matrix::identity(2, 2));
    }

    #[test]
    fn affine_smooth_fn_has_no_gradient() {
        let f = SmoothFn::AffineIndicator(orthonormal_affine(1, 3, 2));
        assert!(matches!(
            f.smooth_eval(&Vector::zeros(3)),
            Err(Error::NoSmoothStructure(_))
        ));
        assert!(f.as_prox().is_ok());
    }

    #[test]
    fn prox_fn_serde_round_trip() {
        let fns = vec![
            ProxFn::l1(0.5, 3).unwrap(),
            ProxFn::L2Norm { dim: 3 },
            ProxFn::AffineIndicator(orthonormal_affine(2, 3, 8)),
        ];
        for f in fns {
            let s = serde_json::to_string(&f).unwrap();
            let back: ProxFn = serde_json::from_str(&s).unwrap();
            assert_eq!(back, f);
        }
        let bad = r#"{"kind":"affine_indicator","a":{"rows":1,"cols":2,"data":[1.0,1.0]},"b":[0.0]}"#;
        assert!(serde_json::from_str::<ProxFn>(bad).is_err());
    }
}
