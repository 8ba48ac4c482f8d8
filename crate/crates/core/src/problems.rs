//! Seeded instance generators with known solution-set structure, and the
//! instance file format.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{AffineConstraint, ProxFn, QuadraticFn, SmoothFn};
use crate::diagnostics::DistanceOracle;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::residual::{DrsSystem, PgmSystem, ResidualKind, ResidualSystem, DEFAULT_DRS_STEP};
use crate::rng::{randn, randn_matrix, stream_rng, PRNG_ID};

pub const INSTANCE_FORMAT: &str = "ssnkit-instance/1";
/// Entries above this count as positive when picking the duplicated pair.
pub const POSITIVE_TOL: f64 = 1e-7;
pub const MAX_RETRIES: u64 = 16;

/// Generator name and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Generator {
    LassoDup { m: usize, n: usize, density: f64, lambda: f64 },
    BasisPursuitDup { m: usize, n: usize, density: f64 },
    NoScLasso { n: usize },
    SmallEnum { n: usize },
    IdentityL1 { n: usize, lambda: f64 },
}

impl Generator {
    /// Experiment scale for the duplicated-column Lasso.
    pub fn lasso_dup_default() -> Self {
        Generator::LassoDup { m: 64, n: 128, density: 0.1, lambda: 1e-3 }
    }

    pub fn basis_pursuit_dup_default() -> Self {
        Generator::BasisPursuitDup { m: 64, n: 128, density: 0.1 }
    }

    pub fn generate(&self, seed: u64) -> Result<ProblemInstance> {
        match *self {
            Generator::LassoDup { m, n, density, lambda } => gen_lasso_dup(m, n, density, lambda, seed),
            Generator::BasisPursuitDup { m, n, density } => gen_basis_pursuit_dup(m, n, density, seed),
            Generator::NoScLasso { n } => gen_no_sc_lasso(n, seed),
            Generator::SmallEnum { n } => gen_small_enum(n, seed),
            Generator::IdentityL1 { n, lambda } => gen_identity_l1(n, lambda, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub m: usize,
    pub n: usize,
    pub lambda: f64,
    pub duplicated: Option<(usize, usize)>,
    /// Substream attempt that produced the instance.
    pub attempt: u64,
    /// Zero coordinate of the certified solution placed on the subgradient
    /// boundary, for constructed instances.
    pub boundary: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub generator: Generator,
    pub seed: u64,
    pub f: SmoothFn,
    pub h: ProxFn,
    pub meta: InstanceMeta,
    /// Sparse vector used to build `b`, when there is one.
    pub ground_truth: Option<Vector>,
    /// Certified stationary point, for constructed instances.
    pub solution: Option<Vector>,
}

impl ProblemInstance {
    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// Matrix `A` of the smooth part.
    pub fn a(&self) -> &Matrix {
        match &self.f {
            SmoothFn::Quadratic(q) => q.a(),
            SmoothFn::AffineIndicator(c) => c.a(),
        }
    }

    pub fn default_residual(&self) -> ResidualKind {
        match self.f {
            SmoothFn::Quadratic(_) => ResidualKind::Pgm,
            SmoothFn::AffineIndicator(_) => ResidualKind::Drs,
        }
    }

    /// Residual system of the requested kind; `t = None` picks the default
    /// step for that kind.
    pub fn residual_system(&self, kind: ResidualKind, t: Option<f64>) -> Result<ResidualSystem> {
        match (&self.f, kind) {
            (SmoothFn::Quadratic(q), ResidualKind::Pgm) => Ok(ResidualSystem::Pgm(match t {
                Some(t) => PgmSystem::new(q.clone(), self.h.clone(), t)?,
                None => PgmSystem::with_default_step(q.clone(), self.h.clone())?,
            })),
            (SmoothFn::Quadratic(q), ResidualKind::Alm) => {
                let t = t.unwrap_or(1.0);
                Ok(ResidualSystem::Alm(crate::residual::AlmSystem::new(
                    q.clone(),
                    self.h.clone(),
                    t,
                    Vector::zeros(self.dim()),
                )?))
            }
            (SmoothFn::AffineIndicator(c), ResidualKind::Drs) => Ok(ResidualSystem::Drs(DrsSystem::new(
                ProxFn::AffineIndicator(c.clone()),
                self.h.clone(),
                t.unwrap_or(DEFAULT_DRS_STEP),
            )?)),
            (SmoothFn::Quadratic(_), ResidualKind::Drs) => {
                Err(Error::NoProx("quadratic f has no cataloged prox; use pgm or alm"))
            }
            (SmoothFn::AffineIndicator(_), _) => {
                Err(Error::NoSmoothStructure("affine-indicator f supports only the drs residual"))
            }
        }
    }

    /// Solution-set oracle from a solved point `x*`.
    pub fn solution_set(&self, x_star: &Vector) -> Option<SolutionSet> {
        match (&self.generator, self.meta.duplicated) {
            (Generator::LassoDup { .. } | Generator::BasisPursuitDup { .. }, Some((i1, i2))) => {
                Some(SolutionSet::dup_segment(x_star, i1, i2))
            }
            (Generator::NoScLasso { .. }, _) | (Generator::IdentityL1 { .. }, _) => {
                self.solution.clone().map(SolutionSet::Point)
            }
            _ => None,
        }
    }
}

/// Known solution sets.
#[derive(Debug, Clone, PartialEq)]
pub enum SolutionSet {
    Point(Vector),
    /// `{v : v_{i1} + v_{i2} = s, |v_{i1}| + |v_{i2}| = a, v_i = x*_i otherwise}`.
    DupSegment { base: Vector, i1: usize, i2: usize, sum: f64, abs_sum: f64 },
}

impl SolutionSet {
    pub fn dup_segment(x_star: &Vector, i1: usize, i2: usize) -> Self {
        SolutionSet::DupSegment {
            base: x_star.clone(),
            i1,
            i2,
            sum: x_star[i1] + x_star[i2],
            abs_sum: x_star[i1].abs() + x_star[i2].abs(),
        }
    }

    /// The pair `(v_{i1}, v_{i2})` nearest to `(p1, p2)` on the set.
    fn nearest_pair(sum: f64, abs_sum: f64, p1: f64, p2: f64) -> (f64, f64) {
        if abs_sum - sum.abs() <= 1e-15 * abs_sum.max(1.0) {
            // Same signs: v1 ranges over [min(0,s), max(0,s)], v2 = s - v1.
            let (lo, hi) = if sum >= 0.0 { (0.0, sum) } else { (sum, 0.0) };
            let v1 = (0.5 * (p1 - p2 + sum)).clamp(lo, hi);
            (v1, sum - v1)
        } else {
            // Opposite signs: two isolated points.
            let a = 0.5 * (sum + abs_sum);
            let b = 0.5 * (sum - abs_sum);
            let d = |v: (f64, f64)| (v.0 - p1).powi(2) + (v.1 - p2).powi(2);
            if d((a, b)) <= d((b, a)) {
                (a, b)
            } else {
                (b, a)
            }
        }
    }

    /// Swaps the duplicated coordinates; another solution.
    pub fn swapped(&self) -> Option<Vector> {
        match self {
            SolutionSet::DupSegment { base, i1, i2, .. } => {
                let mut v = base.clone();
                v.swap_rows(*i1, *i2);
                Some(v)
            }
            SolutionSet::Point(_) => None,
        }
    }
}

impl DistanceOracle for SolutionSet {
    fn nearest(&self, x: &Vector) -> Vector {
        match self {
            SolutionSet::Point(p) => p.clone(),
            SolutionSet::DupSegment { base, i1, i2, sum, abs_sum } => {
                let (v1, v2) = Self::nearest_pair(*sum, *abs_sum, x[*i1], x[*i2]);
                let mut v = base.clone();
                v[*i1] = v1;
                v[*i2] = v2;
                v
            }
        }
    }
}

/// Standard-normal values on a uniformly chosen support of size
/// `round(density · n)`.
fn sparse_randn(rng: &mut rand_chacha::ChaCha20Rng, n: usize, density: f64) -> Vector {
    let k = ((density * n as f64).round() as usize).min(n);
    let mut idx = sample(rng, n, k).into_vec();
    idx.sort_unstable();
    let mut u = Vector::zeros(n);
    for i in idx {
        u[i] = randn(rng);
    }
    u
}

fn check_dup_params(m: usize, n: usize, density: f64) -> Result<()> {
    if m >= n {
        return Err(Error::InvalidConfig(format!("need m < n, got m={m}, n={n}")));
    }
    if !(density > 0.0 && density < 1.0) {
        return Err(Error::InvalidConfig(format!("density must lie in (0,1), got {density}")));
    }
    Ok(())
}

/// Draws `A`, `u` and the duplicated pair (the first two entries of `u`
/// above [`POSITIVE_TOL`]), retrying on fresh substreams.
fn draw_dup(m: usize, n: usize, density: f64, seed: u64) -> Result<(Matrix, Vector, (usize, usize), u64)> {
    check_dup_params(m, n, density)?;
    for attempt in 0..MAX_RETRIES {
        let mut rng = stream_rng(seed, attempt);
        let a = randn_matrix(&mut rng, m, n);
        let u = sparse_randn(&mut rng, n, density);
        let pos: Vec<usize> = (0..n).filter(|&i| u[i] > POSITIVE_TOL).take(2).collect();
        if let [i1, i2] = pos[..] {
            return Ok((a, u, (i1, i2), attempt));
        }
    }
    Err(Error::UnsupportedInstance(format!(
        "no draw with two positive entries after {MAX_RETRIES} attempts (density {density}, n {n})"
    )))
}

fn duplicate_column(a: &mut Matrix, i1: usize, i2: usize) {
    let src = a.column(i2).into_owned();
    a.set_column(i1, &src);
}

/// Lasso `½‖Ax − b‖² + λ‖x‖₁` with `A[:,i1] = A[:,i2]` and `b = A u`.
pub fn gen_lasso_dup(m: usize, n: usize, density: f64, lambda: f64, seed: u64) -> Result<ProblemInstance> {
    let h = ProxFn::l1(lambda, n)?;
    let (mut a, u, (i1, i2), attempt) = draw_dup(m, n, density, seed)?;
    duplicate_column(&mut a, i1, i2);
    let b = &a * &u;
    Ok(ProblemInstance {
        generator: Generator::LassoDup { m, n, density, lambda },
        seed,
        f: SmoothFn::Quadratic(QuadraticFn::least_squares(a, b)?),
        h,
        meta: InstanceMeta { m, n, lambda, duplicated: Some((i1, i2)), attempt, boundary: None },
        ground_truth: Some(u),
        solution: None,
    })
}

/// Basis pursuit `min ‖x‖₁ s.t. Ax = b` with orthonormalized rows and a
/// duplicated column.
pub fn gen_basis_pursuit_dup(m: usize, n: usize, density: f64, seed: u64) -> Result<ProblemInstance> {
    let (mut a, u, (i1, i2), attempt) = draw_dup(m, n, density, seed)?;
    duplicate_column(&mut a, i1, i2);
    let q = a.transpose().qr().q();
    let mut a = q.transpose();
    // Orthogonalization keeps the columns equal up to rounding; restore it exactly.
    duplicate_column(&mut a, i1, i2);
    let b = &a * &u;
    Ok(ProblemInstance {
        generator: Generator::BasisPursuitDup { m, n, density },
        seed,
        f: SmoothFn::AffineIndicator(AffineConstraint::new(a, b)?),
        h: ProxFn::l1(1.0, n)?,
        meta: InstanceMeta { m, n, lambda: 1.0, duplicated: Some((i1, i2)), attempt, boundary: None },
        ground_truth: Some(u),
        solution: None,
    })
}

const NO_SC_LAMBDA: f64 = 0.5;
const NO_SC_COLUMN_SCALE: f64 = 0.1;

/// Lasso-type instance `½‖Ax − b‖² + cᵀx + λ‖x‖₁` whose stationary point
/// `x*` has one zero coordinate `i0` with `|∇f(x*)_{i0}| = λ` exactly.
///
/// Column `i0` of `A` is orthogonal to the support columns (so `F_PGM` is
/// smooth on the support manifold) and short (so the prox coordinate at
/// `i0` switches the Jacobian by a fixed amount in the full space).
pub fn gen_no_sc_lasso(n: usize, seed: u64) -> Result<ProblemInstance> {
    if n < 3 {
        return Err(Error::InvalidConfig(format!("gen_no_sc_lasso needs n >= 3, got {n}")));
    }
    let lambda = NO_SC_LAMBDA;
    let mut rng = stream_rng(seed, 0);
    let k = (n / 4).max(1);
    let mut picks = sample(&mut rng, n, k + 1).into_vec();
    let i0 = picks.pop().expect("k + 1 picks");
    picks.sort_unstable();
    let support = picks;

    let mut a = randn_matrix(&mut rng, n, n);
    let a_s = Matrix::from_fn(n, support.len(), |r, c| a[(r, support[c])]);
    let q = a_s.qr().q();
    let mut col = a.column(i0).into_owned();
    col -= &q * (q.transpose() * &col);
    let norm = col.norm();
    a.set_column(i0, &(col * (NO_SC_COLUMN_SCALE / norm)));

    let mut x_star = Vector::zeros(n);
    for &i in &support {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        x_star[i] = s * (1.0 + randn(&mut rng).abs());
    }
    let mut g = Vector::zeros(n);
    for i in 0..n {
        g[i] = if x_star[i] != 0.0 {
            -lambda * x_star[i].signum()
        } else if i == i0 {
            lambda
        } else {
            lambda * (rng.random::<f64>() - 0.5)
        };
    }
    let b = &a * &x_star;
    // c = g − Aᵀ(Ax* − b) with Ax* = b.
    let c = g;
    let f = QuadraticFn::new(a, b, c)?;
    Ok(ProblemInstance {
        generator: Generator::NoScLasso { n },
        seed,
        f: SmoothFn::Quadratic(f),
        h: ProxFn::l1(lambda, n)?,
        meta: InstanceMeta { m: n, n, lambda, duplicated: None, attempt: 0, boundary: Some(i0) },
        ground_truth: None,
        solution: Some(x_star),
    })
}

pub const SMALL_ENUM_MAX_N: usize = 6;

/// Small dense quadratic plus `λ‖·‖₁` with a certified stationary point;
/// rank-deficient Hessian with probability ½ and a forced boundary
/// coordinate (`|∇f(x*)_i| = λ`) with probability ½.
pub fn gen_small_enum(n: usize, seed: u64) -> Result<ProblemInstance> {
    if n == 0 || n > SMALL_ENUM_MAX_N {
        return Err(Error::InvalidConfig(format!("gen_small_enum needs 1 <= n <= {SMALL_ENUM_MAX_N}, got {n}")));
    }
    let lambda = 1.0;
    let mut rng = stream_rng(seed, 0);
    let deficient = rng.random::<bool>();
    let m = if deficient { rng.random_range(1..=n.max(2) - 1) } else { n + 2 };
    let a = randn_matrix(&mut rng, m, n);

    let k = rng.random_range(1..=n);
    let mut support = sample(&mut rng, n, k).into_vec();
    support.sort_unstable();
    let mut x_star = Vector::zeros(n);
    for &i in &support {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        x_star[i] = s * (0.5 + randn(&mut rng).abs());
    }
    let zeros: Vec<usize> = (0..n).filter(|i| x_star[*i] == 0.0).collect();
    let boundary = if !zeros.is_empty() && rng.random::<bool>() {
        Some(zeros[rng.random_range(0..zeros.len())])
    } else {
        None
    };
    let mut g = Vector::zeros(n);
    for i in 0..n {
        g[i] = if x_star[i] != 0.0 {
            -lambda * x_star[i].signum()
        } else if Some(i) == boundary {
            if rng.random::<bool>() {
                lambda
            } else {
                -lambda
            }
        } else {
            lambda * (rng.random::<f64>() - 0.5)
        };
    }
    let b = &a * &x_star;
    let f = QuadraticFn::new(a, b, g)?;
    Ok(ProblemInstance {
        generator: Generator::SmallEnum { n },
        seed,
        f: SmoothFn::Quadratic(f),
        h: ProxFn::l1(lambda, n)?,
        meta: InstanceMeta { m, n, lambda, duplicated: None, attempt: 0, boundary },
        ground_truth: None,
        solution: Some(x_star),
    })
}

/// `½‖x − b‖² + λ‖x‖₁`, solved by soft-thresholding `b`.
pub fn gen_identity_l1(n: usize, lambda: f64, seed: u64) -> Result<ProblemInstance> {
    let h = ProxFn::l1(lambda, n)?;
    let mut rng = stream_rng(seed, 0);
    let b = crate::rng::randn_vector(&mut rng, n);
    let x = b.map(|v| crate::catalog::soft_threshold(v, lambda));
    Ok(ProblemInstance {
        generator: Generator::IdentityL1 { n, lambda },
        seed,
        f: SmoothFn::Quadratic(QuadraticFn::least_squares(Matrix::identity(n, n), b)?),
        h,
        meta: InstanceMeta { m: n, n, lambda, duplicated: None, attempt: 0, boundary: None },
        ground_truth: None,
        solution: Some(x),
    })
}

/// Base64 of little-endian `f64` values in column-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodedArray {
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

impl EncodedArray {
    fn from_slice(rows: usize, cols: usize, v: &[f64]) -> Self {
        let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
        EncodedArray { rows, cols, data: B64.encode(bytes) }
    }

    pub fn matrix(m: &Matrix) -> Self {
        Self::from_slice(m.nrows(), m.ncols(), m.as_slice())
    }

    pub fn vector(v: &Vector) -> Self {
        Self::from_slice(v.len(), 1, v.as_slice())
    }

    fn decode(&self) -> Result<Vec<f64>> {
        let bytes = B64.decode(&self.data).map_err(|e| Error::Format(format!("base64 payload: {e}")))?;
        if bytes.len() != 8 * self.rows * self.cols {
            return Err(Error::Format(format!(
                "payload has {} bytes, expected {} for {}x{}",
                bytes.len(),
                8 * self.rows * self.cols,
                self.rows,
                self.cols
            )));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        Ok(Matrix::from_vec(self.rows, self.cols, self.decode()?))
    }

    pub fn to_vector(&self) -> Result<Vector> {
        if self.cols != 1 {
            return Err(Error::Format(format!("expected a column vector, got {}x{}", self.rows, self.cols)));
        }
        Ok(Vector::from_vec(self.decode()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothKind {
    Quadratic,
    AffineIndicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payload {
    pub a: EncodedArray,
    pub b: EncodedArray,
    pub c: Option<EncodedArray>,
    pub ground_truth: Option<EncodedArray>,
    pub solution: Option<EncodedArray>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub format: String,
    pub tool_version: String,
    pub prng: String,
    pub seed: u64,
    pub generator: Generator,
    pub meta: InstanceMeta,
    pub smooth: SmoothKind,
    pub h: ProxFn,
    pub payload: Payload,
}

impl InstanceFile {
    pub fn from_instance(inst: &ProblemInstance) -> Self {
        let (smooth, a, b, c) = match &inst.f {
            SmoothFn::Quadratic(q) => (SmoothKind::Quadratic, q.a(), q.b(), Some(EncodedArray::vector(q.c()))),
            SmoothFn::AffineIndicator(k) => (SmoothKind::AffineIndicator, k.a(), k.b(), None),
        };
        InstanceFile {
            format: INSTANCE_FORMAT.into(),
            tool_version: crate::TOOL_VERSION.into(),
            prng: PRNG_ID.into(),
            seed: inst.seed,
            generator: inst.generator.clone(),
            meta: inst.meta.clone(),
            smooth,
            h: inst.h.clone(),
            payload: Payload {
                a: EncodedArray::matrix(a),
                b: EncodedArray::vector(b),
                c,
                ground_truth: inst.ground_truth.as_ref().map(EncodedArray::vector),
                solution: inst.solution.as_ref().map(EncodedArray::vector),
            },
        }
    }

    pub fn into_instance(self) -> Result<ProblemInstance> {
        if self.format != INSTANCE_FORMAT {
            return Err(Error::Format(format!("unknown instance format {:?}", self.format)));
        }
        let a = self.payload.a.to_matrix()?;
        let b = self.payload.b.to_vector()?;
        let f = match self.smooth {
            SmoothKind::Quadratic => {
                let c = match &self.payload.c {
                    Some(c) => c.to_vector()?,
                    None => Vector::zeros(a.ncols()),
                };
                SmoothFn::Quadratic(QuadraticFn::new(a, b, c)?)
            }
            SmoothKind::AffineIndicator => SmoothFn::AffineIndicator(AffineConstraint::new(a, b)?),
        };
        self.h.validate()?;
        if self.h.dim() != f.dim() {
            return Err(Error::DimensionMismatch { expected: f.dim(), got: self.h.dim() });
        }
        let decode = |e: &Option<EncodedArray>| e.as_ref().map(|v| v.to_vector()).transpose();
        Ok(ProblemInstance {
            generator: self.generator,
            seed: self.seed,
            f,
            h: self.h,
            meta: self.meta,
            ground_truth: decode(&self.payload.ground_truth)?,
            solution: decode(&self.payload.solution)?,
        })
    }
}

pub fn instance_to_json(inst: &ProblemInstance) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceFile::from_instance(inst))?)
}

pub fn instance_from_json(s: &str) -> Result<ProblemInstance> {
    serde_json::from_str::<InstanceFile>(s)?.into_instance()
}

pub fn save_instance(inst: &ProblemInstance, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, instance_to_json(inst)?)?;
    Ok(())
}

pub fn load_instance(path: &std::path::Path) -> Result<ProblemInstance> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormal_rows_deviation;

    #[test]
    fn dup_lasso_has_identical_columns_and_reproduces() {
        let inst = gen_lasso_dup(64, 128, 0.1, 1e-3, 5).unwrap();
        let (i1, i2) = inst.meta.duplicated.unwrap();
        assert!(i1 < i2);
        assert_eq!(inst.a().column(i1), inst.a().column(i2));
        let u = inst.ground_truth.as_ref().unwrap();
        assert!(u[i1] > POSITIVE_TOL && u[i2] > POSITIVE_TOL);
        assert_eq!(gen_lasso_dup(64, 128, 0.1, 1e-3, 5).unwrap(), inst);
        assert_ne!(gen_lasso_dup(64, 128, 0.1, 1e-3, 6).unwrap(), inst);
    }

    #[test]
    fn basis_pursuit_rows_are_orthonormal() {
        let inst = gen_basis_pursuit_dup(64, 128, 0.1, 3).unwrap();
        assert!(orthonormal_rows_deviation(inst.a()) <= 1e-12);
        let (i1, i2) = inst.meta.duplicated.unwrap();
        assert_eq!(inst.a().column(i1), inst.a().column(i2));
        let SmoothFn::AffineIndicator(c) = &inst.f else { panic!() };
        assert!(c.violation(inst.ground_truth.as_ref().unwrap()) < 1e-12);
    }

    #[test]
    fn too_sparse_density_fails_after_retries() {
        assert!(matches!(gen_lasso_dup(4, 10, 0.05, 1e-3, 0), Err(Error::UnsupportedInstance(_))));
        assert!(gen_lasso_dup(10, 10, 0.5, 1e-3, 0).is_err());
    }

    #[test]
    fn no_sc_point_is_stationary_with_failing_coordinate() {
        for seed in 0..5 {
            let inst = gen_no_sc_lasso(12, seed).unwrap();
            let x = inst.solution.clone().unwrap();
            let sys = inst.residual_system(ResidualKind::Pgm, None).unwrap();
            assert!(sys.eval(&x).unwrap().norm() <= 1e-12);
            let i0 = inst.meta.boundary.unwrap();
            assert_eq!(x[i0], 0.0);
        }
    }

    #[test]
    fn small_enum_points_are_stationary() {
        for seed in 0..30 {
            let inst = gen_small_enum(1 + (seed as usize % 6), seed).unwrap();
            let x = inst.solution.clone().unwrap();
            let sys = inst.residual_system(ResidualKind::Pgm, None).unwrap();
            assert!(sys.eval(&x).unwrap().norm() <= 1e-12, "seed {seed}");
        }
        assert!(gen_small_enum(7, 0).is_err());
    }

    #[test]
    fn segment_nearest_is_on_the_set() {
        let x = Vector::from_vec(vec![0.3, 0.5, 1.0]);
        let set = SolutionSet::dup_segment(&x, 0, 1);
        let p = Vector::from_vec(vec![2.0, -1.0, 1.0]);
        let v = set.nearest(&p);
        assert!((v[0] + v[1] - 0.8).abs() < 1e-15);
        assert!((v[0].abs() + v[1].abs() - 0.8).abs() < 1e-15);
        assert_eq!(v[0], 0.8);
        assert_eq!(set.swapped().unwrap()[0], 0.5);
    }

    #[test]
    fn opposite_sign_segment_is_two_points() {
        let x = Vector::from_vec(vec![0.3, -0.5]);
        let set = SolutionSet::dup_segment(&x, 0, 1);
        let v = set.nearest(&Vector::from_vec(vec![-1.0, 1.0]));
        assert!((v[0] + 0.5).abs() < 1e-15 && (v[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn instance_file_round_trip() {
        for inst in [
            gen_lasso_dup(8, 16, 0.3, 1e-2, 1).unwrap(),
            gen_basis_pursuit_dup(8, 16, 0.3, 1).unwrap(),
            gen_no_sc_lasso(6, 2).unwrap(),
            gen_small_enum(4, 3).unwrap(),
        ] {
            let json = instance_to_json(&inst).unwrap();
            let back = instance_from_json(&json).unwrap();
            assert_eq!(back, inst);
            assert_eq!(back.generator.generate(back.seed).unwrap(), inst);
        }
    }

    #[test]
    fn corrupted_payload_is_rejected() {
        let inst = gen_small_enum(3, 1).unwrap();
        let mut file = InstanceFile::from_instance(&inst);
        file.payload.a.rows += 1;
        assert!(matches!(file.into_instance(), Err(Error::Format(_))));
        let json = instance_to_json(&inst).unwrap().replace("\"seed\"", "\"seed\": 1, \"extra\"");
        assert!(instance_from_json(&json).is_err());
    }
}
