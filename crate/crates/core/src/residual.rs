//! Residual maps whose roots are stationary points of `f + h`.
//!
//! * natural residual `F(x) = x - prox_{th}(x - t∇f(x))`
//! * Douglas-Rachford residual `F(z) = prox_{th}(z) - prox_{tf}(2 prox_{th}(z) - z)`
//! * augmented-Lagrangian gradient map
//!   `F(x; z) = ∇f(x) + (x - tz - prox_{th}(x - tz)) / t`

use serde::{Deserialize, Serialize};

use crate::catalog::{BoundaryOptions, ProxFn, ProxJacobian, QuadraticFn, TieDecision, TieRule};
use crate::error::{Error, Result};
use crate::linalg::{check_dim, power_iteration_lambda_max, sym_lambda_max, Matrix, Vector};

/// Slack on the strict step-size bound `t < 1/λ_max(∇²f)`.
pub const STEP_SLACK: f64 = 1e-12;
pub const DEFAULT_STEP_FRACTION: f64 = 0.95;
pub const POWER_ITERATIONS: usize = 100;
pub const DEFAULT_DRS_STEP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    Pgm,
    Drs,
    Alm,
}

impl std::fmt::Display for ResidualKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResidualKind::Pgm => "pgm",
            ResidualKind::Drs => "drs",
            ResidualKind::Alm => "alm",
        })
    }
}

/// `0.95 / λ_max(AᵀA)` with λ_max from power iteration.
pub fn default_step(f: &QuadraticFn) -> f64 {
    let lmax = power_iteration_lambda_max(f.hessian(), POWER_ITERATIONS);
    if lmax > 0.0 {
        DEFAULT_STEP_FRACTION / lmax
    } else {
        1.0
    }
}

fn check_step(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveStep(t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgmSystem {
    f: QuadraticFn,
    h: ProxFn,
    t: f64,
    lambda_max: f64,
}

impl PgmSystem {
    pub fn new(f: QuadraticFn, h: ProxFn, t: f64) -> Result<Self> {
        check_dim(f.dim(), h.dim())?;
        check_step(t)?;
        let lambda_max = sym_lambda_max(f.hessian()).max(0.0);
        if t * lambda_max >= 1.0 - STEP_SLACK {
            return Err(Error::StepTooLarge {
                t,
                limit: 1.0 / lambda_max,
            });
        }
        Ok(PgmSystem { f, h, t, lambda_max })
    }

    pub fn with_default_step(f: QuadraticFn, h: ProxFn) -> Result<Self> {
        let t = default_step(&f);
        PgmSystem::new(f, h, t)
    }

    pub fn f(&self) -> &QuadraticFn {
        &self.f
    }

    pub fn h(&self) -> &ProxFn {
        &self.h
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `x - t∇f(x)`.
    pub fn prox_argument(&self, x: &Vector) -> Vector {
        x - self.f.gradient(x) * self.t
    }

    /// One proximal-gradient step `prox_{th}(x - t∇f(x))`.
    pub fn pgm_step(&self, x: &Vector) -> Result<Vector> {
        self.h.prox(self.t, &self.prox_argument(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrsSystem {
    f: ProxFn,
    h: ProxFn,
    t: f64,
}

/// One Douglas-Rachford iteration from `z_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrsStep {
    pub x: Vector,
    pub y: Vector,
    pub z: Vector,
}

impl DrsSystem {
    pub fn new(f: ProxFn, h: ProxFn, t: f64) -> Result<Self> {
        check_dim(f.dim(), h.dim())?;
        check_step(t)?;
        Ok(DrsSystem { f, h, t })
    }

    pub fn f(&self) -> &ProxFn {
        &self.f
    }

    pub fn h(&self) -> &ProxFn {
        &self.h
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `x = prox_{th}(z)`, `y = prox_{tf}(2x - z)`, `z⁺ = z + y - x`.
    pub fn drs_step(&self, z: &Vector) -> Result<DrsStep> {
        let x = self.h.prox(self.t, z)?;
        let y = self.f.prox(self.t, &(&x * 2.0 - z))?;
        let z_next = z + &y - &x;
        Ok(DrsStep { x, y, z: z_next })
    }

    /// Primal point `prox_{th}(z)`.
    pub fn primal(&self, z: &Vector) -> Result<Vector> {
        self.h.prox(self.t, z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlmSystem {
    f: QuadraticFn,
    h: ProxFn,
    t: f64,
    z: Vector,
    lambda_max: f64,
}

impl AlmSystem {
    pub fn new(f: QuadraticFn, h: ProxFn, t: f64, z: Vector) -> Result<Self> {
        check_dim(f.dim(), h.dim())?;
        check_dim(f.dim(), z.len())?;
        check_step(t)?;
        let lambda_max = sym_lambda_max(f.hessian()).max(0.0);
        Ok(AlmSystem { f, h, t, z, lambda_max })
    }

    pub fn f(&self) -> &QuadraticFn {
        &self.f
    }

    pub fn h(&self) -> &ProxFn {
        &self.h
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn z(&self) -> &Vector {
        &self.z
    }

    /// Same functions and step with a new dual parameter.
    pub fn with_dual(&self, z: Vector) -> Result<Self> {
        check_dim(self.f.dim(), z.len())?;
        Ok(AlmSystem { z, ..self.clone() })
    }

    /// `x - tz`.
    pub fn prox_argument(&self, x: &Vector) -> Vector {
        x - &self.z * self.t
    }

    /// `z + (prox_{th}(x - tz) - x) / t`.
    pub fn dual_update(&self, x: &Vector) -> Result<Vector> {
        let p = self.h.prox(self.t, &self.prox_argument(x))?;
        Ok(&self.z + (p - x) / self.t)
    }
}

/// Result of one augmented-Lagrangian outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmOuterStep {
    pub x: Vector,
    pub z: Vector,
    pub inner_tol: f64,
}

/// Fixed inner tolerance factor relative to `‖F_ALM‖` at the inner start.
pub const ALM_INNER_FACTOR: f64 = 1e-2;

/// Runs the `x`-subproblem solver on `F_ALM(·; z_k)` and applies the dual
/// update. `inner_tol` defaults to `1e-2 · ‖F_ALM(x_start; z_k)‖`.
pub fn alm_outer_step<S>(
    system: &AlmSystem,
    x_start: &Vector,
    inner_tol: Option<f64>,
    solve_inner: S,
) -> Result<AlmOuterStep>
where
    S: FnOnce(&ResidualSystem, &Vector, f64) -> Result<Vector>,
{
    let residual = ResidualSystem::Alm(system.clone());
    let inner_tol = match inner_tol {
        Some(tol) => tol,
        None => ALM_INNER_FACTOR * residual.eval(x_start)?.norm(),
    };
    let x = solve_inner(&residual, x_start, inner_tol)?;
    let z = system.dual_update(&x)?;
    Ok(AlmOuterStep { x, z, inner_tol })
}

/// A B-Jacobian element of a residual together with the prox tie decisions
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianElement {
    pub matrix: Matrix,
    pub ties: Vec<TieDecision>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResidualSystem {
    Pgm(PgmSystem),
    Drs(DrsSystem),
    Alm(AlmSystem),
}

impl ResidualSystem {
    pub fn kind(&self) -> ResidualKind {
        match self {
            ResidualSystem::Pgm(_) => ResidualKind::Pgm,
            ResidualSystem::Drs(_) => ResidualKind::Drs,
            ResidualSystem::Alm(_) => ResidualKind::Alm,
        }
    }

    pub fn dim(&self) -> usize {
        self.h().dim()
    }

    pub fn t(&self) -> f64 {
        match self {
            ResidualSystem::Pgm(s) => s.t,
            ResidualSystem::Drs(s) => s.t,
            ResidualSystem::Alm(s) => s.t,
        }
    }

    pub fn h(&self) -> &ProxFn {
        match self {
            ResidualSystem::Pgm(s) => &s.h,
            ResidualSystem::Drs(s) => &s.h,
            ResidualSystem::Alm(s) => &s.h,
        }
    }

    /// Smooth part, when `f` is a quadratic.
    pub fn quadratic(&self) -> Option<&QuadraticFn> {
        match self {
            ResidualSystem::Pgm(s) => Some(&s.f),
            ResidualSystem::Alm(s) => Some(&s.f),
            ResidualSystem::Drs(_) => None,
        }
    }

    /// The point at which `prox_{th}` is evaluated.
    pub fn prox_argument(&self, x: &Vector) -> Vector {
        match self {
            ResidualSystem::Pgm(s) => s.prox_argument(x),
            ResidualSystem::Drs(_) => x.clone(),
            ResidualSystem::Alm(s) => s.prox_argument(x),
        }
    }

    pub fn eval(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        match self {
            ResidualSystem::Pgm(s) => Ok(x - s.h.prox(s.t, &s.prox_argument(x))?),
            ResidualSystem::Drs(s) => {
                let p = s.h.prox(s.t, x)?;
                let q = s.f.prox(s.t, &(&p * 2.0 - x))?;
                Ok(p - q)
            }
            ResidualSystem::Alm(s) => {
                let w = s.prox_argument(x);
                let p = s.h.prox(s.t, &w)?;
                Ok(s.f.gradient(x) + (w - p) / s.t)
            }
        }
    }

    fn assemble(&self, x: &Vector, m: ProxJacobian) -> Result<JacobianElement> {
        let n = self.dim();
        let eye = Matrix::identity(n, n);
        let matrix = match self {
            ResidualSystem::Pgm(s) => {
                let inner = &eye - s.f.hessian() * s.t;
                &eye - &m.matrix * inner
            }
            ResidualSystem::Drs(s) => {
                let p = s.h.prox(s.t, x)?;
                let w = &p * 2.0 - x;
                let opts = BoundaryOptions::default();
                if s.f.nondiff_set_member(s.t, &w, opts.boundary_tol) {
                    return Err(Error::NonDifferentiable(s.f.name()));
                }
                let d = s.f.prox_jacobian(s.t, &w, TieRule::ZeroOnBoundary)?.matrix;
                &m.matrix - d * (&m.matrix * 2.0 - &eye)
            }
            ResidualSystem::Alm(s) => s.f.hessian() + (&eye - &m.matrix) / s.t,
        };
        Ok(JacobianElement {
            matrix,
            ties: m.ties,
        })
    }

    /// One element of `∂_B F(x)` selected by `tie`.
    pub fn bjacobian_element(&self, x: &Vector, tie: TieRule) -> Result<JacobianElement> {
        check_dim(self.dim(), x.len())?;
        let w = self.prox_argument(x);
        let m = self.h().prox_jacobian(self.t(), &w, tie)?;
        self.assemble(x, m)
    }

    /// Every element of `∂_B F(x)` obtained by enumerating boundary ties of
    /// `prox_{th}`.
    pub fn bjacobian_elements(&self, x: &Vector, opts: BoundaryOptions) -> Result<Vec<JacobianElement>> {
        check_dim(self.dim(), x.len())?;
        let w = self.prox_argument(x);
        self.h()
            .prox_bjacobian(self.t(), &w, TieRule::Enumerate, opts)?
            .into_iter()
            .map(|m| self.assemble(x, m))
            .collect()
    }

    /// Globalization step: a proximal-gradient step (natural residual), a
    /// Douglas-Rachford step, or a gradient step on the ALM subproblem.
    pub fn fallback_step(&self, x: &Vector) -> Result<Vector> {
        match self {
            ResidualSystem::Pgm(s) => s.pgm_step(x),
            ResidualSystem::Drs(s) => Ok(s.drs_step(x)?.z),
            ResidualSystem::Alm(s) => {
                let lip = s.lambda_max + 1.0 / s.t;
                Ok(x - self.eval(x)? / lip)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{AffineConstraint, SmoothFn};
    use crate::rng::{randn_matrix, randn_vector, stream_rng};

    fn lasso(m: usize, n: usize, seed: u64) -> (QuadraticFn, ProxFn) {
        let mut rng = stream_rng(seed, 0);
        let a = randn_matrix(&mut rng, m, n);
        let b = randn_vector(&mut rng, m);
        (QuadraticFn::least_squares(a, b).unwrap(), ProxFn::l1(0.5, n).unwrap())
    }

    #[test]
    fn pgm_rejects_large_step() {
        let (f, h) = lasso(4, 3, 1);
        let lmax = sym_lambda_max(f.hessian());
        assert!(matches!(
            PgmSystem::new(f.clone(), h.clone(), 1.0 / lmax),
            Err(Error::StepTooLarge { .. })
        ));
        assert!(PgmSystem::new(f.clone(), h.clone(), 0.9 / lmax).is_ok());
        assert!(PgmSystem::new(f, h, 0.0).is_err());
    }

    #[test]
    fn default_step_is_below_bound() {
        let (f, h) = lasso(6, 8, 2);
        let s = PgmSystem::with_default_step(f, h).unwrap();
        assert!(s.t() * s.lambda_max() < 1.0);
        assert!(s.t() * s.lambda_max() > 0.9);
    }

    #[test]
    fn pgm_jacobian_by_substitution() {
        // ∇²f = I, t = 0.5, M = diag(1, 0)
        let f = QuadraticFn::least_squares(Matrix::identity(2, 2), Vector::zeros(2)).unwrap();
        let h = ProxFn::l1(1.0, 2).unwrap();
        let s = ResidualSystem::Pgm(PgmSystem::new(f, h, 0.5).unwrap());
        // w = x - 0.5 x = 0.5 x; choose x so |w_0| > 0.5, |w_1| < 0.5
        let x = Vector::from_column_slice(&[4.0, 0.2]);
        let j = s.bjacobian_element(&x, TieRule::ZeroOnBoundary).unwrap();
        assert_eq!(j.matrix, Matrix::from_diagonal(&Vector::from_column_slice(&[0.5, 1.0])));
    }

    #[test]
    fn drs_with_affine_f_uses_projection() {
        let mut rng = stream_rng(4, 0);
        let a = randn_matrix(&mut rng, 5, 2).qr().q().transpose();
        let b = randn_vector(&mut rng, 2);
        let c = AffineConstraint::new(a.clone(), b.clone()).unwrap();
        let f = SmoothFn::AffineIndicator(c).as_prox().unwrap();
        let h = ProxFn::l1(1.0, 5).unwrap();
        let sys = DrsSystem::new(f.clone(), h.clone(), 1.0).unwrap();
        let z = randn_vector(&mut rng, 5);
        let p = h.prox(1.0, &z).unwrap();
        let w = &p * 2.0 - &z;
        let inner = &w - a.transpose() * (&a * &w - &b);
        assert_eq!(f.prox(1.0, &w).unwrap(), inner);
        let r = ResidualSystem::Drs(sys);
        assert!((r.eval(&z).unwrap() - (&p - inner)).norm() < 1e-14);

        let j = r.bjacobian_element(&z, TieRule::ZeroOnBoundary).unwrap();
        let m = h.prox_jacobian(1.0, &z, TieRule::ZeroOnBoundary).unwrap().matrix;
        let d = Matrix::identity(5, 5) - a.transpose() * &a;
        let expected = &m - d * (&m * 2.0 - Matrix::identity(5, 5));
        assert!((j.matrix - expected).norm() < 1e-14);
    }

    #[test]
    fn drs_rejects_nondifferentiable_inner_prox() {
        let f = ProxFn::l1(1.0, 2).unwrap();
        let h = ProxFn::Zero { dim: 2 };
        let r = ResidualSystem::Drs(DrsSystem::new(f, h, 1.0).unwrap());
        // prox_th = id, so 2p - z = z; |z_0| = t λ sits on the kink
        let z = Vector::from_column_slice(&[1.0, 3.0]);
        assert!(matches!(
            r.bjacobian_element(&z, TieRule::ZeroOnBoundary),
            Err(Error::NonDifferentiable(_))
        ));
    }

    #[test]
    fn drs_step_identity_on_random_points() {
        let mut rng = stream_rng(5, 0);
        let a = randn_matrix(&mut rng, 6, 3).qr().q().transpose();
        let b = randn_vector(&mut rng, 3);
        let f = ProxFn::AffineIndicator(AffineConstraint::new(a, b).unwrap());
        let sys = DrsSystem::new(f, ProxFn::l1(1.0, 6).unwrap(), 1.0).unwrap();
        let r = ResidualSystem::Drs(sys.clone());
        for _ in 0..100 {
            let z = randn_vector(&mut rng, 6) * 2.0;
            let step = sys.drs_step(&z).unwrap();
            let lhs = &step.z - &z;
            let rhs = -r.eval(&z).unwrap();
            assert!((lhs - rhs).norm() <= 1e-12);
        }
    }

    #[test]
    fn alm_matches_pgm_over_t_at_gradient_dual() {
        let (f, h) = lasso(5, 7, 9);
        let pgm = PgmSystem::with_default_step(f.clone(), h.clone()).unwrap();
        let t = pgm.t();
        let mut rng = stream_rng(9, 3);
        let pgm = ResidualSystem::Pgm(pgm);
        for _ in 0..20 {
            let x = randn_vector(&mut rng, 7);
            let alm = ResidualSystem::Alm(AlmSystem::new(f.clone(), h.clone(), t, f.gradient(&x)).unwrap());
            let diff = alm.eval(&x).unwrap() - pgm.eval(&x).unwrap() / t;
            assert!(diff.norm() <= 1e-12 * (1.0 + x.norm() / t));
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let (f, _) = lasso(3, 4, 1);
        assert!(matches!(
            PgmSystem::new(f, ProxFn::l1(1.0, 3).unwrap(), 1e-3),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
