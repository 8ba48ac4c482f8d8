//! Dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration from the
/// normalized all-ones vector.
pub fn power_iteration_lambda_max(h: &Matrix, iters: usize) -> f64 {
    let n = h.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Vector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = h * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    // Rayleigh quotient at the final iterate
    let w = h * &v;
    lambda.max(v.dot(&w))
}

pub fn sym_lambda_min(h: &Matrix) -> f64 {
    if h.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(h.clone()).eigenvalues.min()
}

pub fn sym_lambda_max(h: &Matrix) -> f64 {
    if h.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(h.clone()).eigenvalues.max()
}

pub fn sigma_min(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone().svd(false, false).singular_values.min()
}

pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Principal submatrix on `idx` (rows and columns).
pub fn principal_submatrix(h: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(idx.len(), idx.len(), |i, j| h[(idx[i], idx[j])])
}

/// max |AAᵀ - I|.
pub fn orthonormal_rows_deviation(a: &Matrix) -> f64 {
    let g = a * a.transpose();
    let mut dev = 0.0_f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g[(i, j)] - target).abs());
        }
    }
    dev
}

/// Solves `k x = rhs` by dense LU with partial pivoting.
pub fn lu_solve(k: &Matrix, rhs: &Vector) -> Option<Vector> {
    let sol = k.clone().lu().solve(rhs)?;
    if sol.iter().all(|v| v.is_finite()) {
        Some(sol)
    } else {
        None
    }
}

/// Outcome of a GMRES solve.
#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub solution: Vector,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Unrestarted GMRES with modified Gram-Schmidt Arnoldi and Givens rotations,
/// started from zero. Stops once the true residual ‖k x - rhs‖ is at most `tol`.
pub fn gmres(k: &Matrix, rhs: &Vector, tol: f64, max_iters: usize) -> GmresOutcome {
    let n = rhs.len();
    let beta = rhs.norm();
    if beta <= tol || n == 0 {
        return GmresOutcome {
            solution: Vector::zeros(n),
            residual_norm: beta,
            iterations: 0,
            converged: true,
        };
    }
    let max_iters = max_iters.min(n).max(1);
    let mut basis: Vec<Vector> = Vec::with_capacity(max_iters + 1);
    basis.push(rhs / beta);
    let mut hess = Matrix::zeros(max_iters + 1, max_iters);
    let mut cs = vec![0.0; max_iters];
    let mut sn = vec![0.0; max_iters];
    let mut g = vec![0.0; max_iters + 1];
    g[0] = beta;

    let mut used = 0;
    for j in 0..max_iters {
        let mut w = k * &basis[j];
        for (i, v) in basis.iter().enumerate() {
            let hij = w.dot(v);
            hess[(i, j)] = hij;
            w.axpy(-hij, v, 1.0);
        }
        let wn = w.norm();
        hess[(j + 1, j)] = wn;
        for i in 0..j {
            let (a, b) = (hess[(i, j)], hess[(i + 1, j)]);
            hess[(i, j)] = cs[i] * a + sn[i] * b;
            hess[(i + 1, j)] = -sn[i] * a + cs[i] * b;
        }
        let (a, b) = (hess[(j, j)], hess[(j + 1, j)]);
        let r = a.hypot(b);
        if r == 0.0 {
            cs[j] = 1.0;
            sn[j] = 0.0;
        } else {
            cs[j] = a / r;
            sn[j] = b / r;
        }
        hess[(j, j)] = r;
        hess[(j + 1, j)] = 0.0;
        g[j + 1] = -sn[j] * g[j];
        g[j] *= cs[j];
        used = j + 1;
        if g[j + 1].abs() <= tol || wn == 0.0 {
            break;
        }
        basis.push(w / wn);
    }

    let mut y = vec![0.0; used];
    for i in (0..used).rev() {
        let mut s = g[i];
        for l in i + 1..used {
            s -= hess[(i, l)] * y[l];
        }
        y[i] = if hess[(i, i)] != 0.0 { s / hess[(i, i)] } else { 0.0 };
    }
    let mut x = Vector::zeros(n);
    for (i, yi) in y.iter().enumerate() {
        x.axpy(*yi, &basis[i], 1.0);
    }
    let residual_norm = (k * &x - rhs).norm();
    GmresOutcome {
        solution: x,
        residual_norm,
        iterations: used,
        converged: residual_norm <= tol,
    }
}


/// Serde representation of a dense matrix as `{rows, cols, data}` with
/// column-major `data`.
pub(crate) mod serde_dense {
    use super::Matrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Dense {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        Dense {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.as_slice().to_vec(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let dense = Dense::deserialize(d)?;
        if dense.data.len() != dense.rows * dense.cols {
            return Err(serde::de::Error::custom(format!(
                "matrix data has {} entries, expected {}x{}",
                dense.data.len(),
                dense.rows,
                dense.cols
            )));
        }
        Ok(Matrix::from_vec(dense.rows, dense.cols, dense.data))
    }
}

pub(crate) mod serde_vector {
    use super::Vector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
        Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Serializes non-finite floats as `null`; `null` reads back as +∞.
pub(crate) mod serde_extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
