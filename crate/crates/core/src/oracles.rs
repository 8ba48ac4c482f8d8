//! Reference computations that share no code with the catalog or the
//! residual assembly. The verification suites and the criterion tests
//! compare the library against these.

use crate::linalg::{Matrix, Vector};

/// `prox_{tλ|·|}` coordinatewise by comparing the objective at the three
/// candidates `{y − tλ, 0, y + tλ}`.
pub fn prox_l1(lambda: f64, t: f64, y: &Vector) -> Vector {
    y.map(|yi| {
        let obj = |x: f64| lambda * x.abs() + (x - yi) * (x - yi) / (2.0 * t);
        let mut best = 0.0;
        for c in [yi - t * lambda, yi + t * lambda] {
            if obj(c) < obj(best) {
                best = c;
            }
        }
        best
    })
}

/// Projection onto `x ≥ 0` coordinatewise by comparing the feasible
/// candidates `{0, y}`.
pub fn prox_nonneg(y: &Vector) -> Vector {
    // 0 is always feasible; y wins whenever it is feasible
    y.map(|yi| if yi >= 0.0 { yi } else { 0.0 })
}

/// `prox_{t‖·‖₂}`: the minimizer lies on the ray through `y`, at the root
/// of `s ↦ 1 + (s − ‖y‖)/t` on `[0, ‖y‖]`, found by bisection.
pub fn prox_l2(t: f64, y: &Vector) -> Vector {
    let r = y.norm();
    let slope = |s: f64| 1.0 + (s - r) / t;
    if r == 0.0 || slope(0.0) >= 0.0 {
        return Vector::zeros(y.len());
    }
    let (mut lo, mut hi) = (0.0, r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * r {
            break;
        }
    }
    y * (0.5 * (lo + hi) / r)
}

/// Projection onto `{x : Ax = b}` from the KKT system
/// `[I Aᵀ; A 0][x; ν] = [y; b]`, solved by LU without using any structure
/// of `A`.
pub fn project_affine(a: &Matrix, b: &Vector, y: &Vector) -> Vector {
    let (m, n) = a.shape();
    let mut k = Matrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).fill_with_identity();
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = Vector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(y);
    rhs.rows_mut(n, m).copy_from(b);
    let sol = k.lu().solve(&rhs).expect("KKT matrix is nonsingular for full-row-rank A");
    sol.rows(0, n).into_owned()
}

/// Central-difference Jacobian of `f` at `x` with step `h`.
pub fn central_difference_jacobian<F>(f: F, x: &Vector, h: f64) -> Matrix
where
    F: Fn(&Vector) -> Vector,
{
    let n = x.len();
    let m = f(x).len();
    let mut jac = Matrix::zeros(m, n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Residual `x − prox_{tλ‖·‖₁}(x − t(Hx − g₀))` for a quadratic with
/// Hessian `H` and gradient `Hx − g₀`, using [`prox_l1`].
pub fn pgm_l1_residual(h: &Matrix, g0: &Vector, lambda: f64, t: f64, x: &Vector) -> Vector {
    let grad = h * x - g0;
    x - prox_l1(lambda, t, &(x - grad * t))
}

/// Brute-force BD-regularity of the natural residual of
/// `½xᵀHx − g₀ᵀx + λ‖x‖₁` at `x`.
///
/// Each coordinate of `w = x − t∇f(x)` contributes derivative `1` when
/// `|w_i| > tλ`, `0` when `|w_i| < tλ` and both values when `|w_i| = tλ`
/// up to `tie_tol`. Every resulting `I − D(I − tH)` is formed and tested
/// for `σ_min > sing_tol`.
pub fn bd_regular_by_enumeration(
    h: &Matrix,
    g0: &Vector,
    lambda: f64,
    t: f64,
    x: &Vector,
    tie_tol: f64,
    sing_tol: f64,
) -> BruteBd {
    let n = x.len();
    let w = x - (h * x - g0) * t;
    let mut fixed = vec![0.0; n];
    let mut free = Vec::new();
    for i in 0..n {
        let gap = w[i].abs() - t * lambda;
        if gap.abs() <= tie_tol {
            free.push(i);
        } else if gap > 0.0 {
            fixed[i] = 1.0;
        }
    }
    let eye = Matrix::identity(n, n);
    let inner = &eye - h * t;
    let mut min_sigma = f64::INFINITY;
    for mask in 0u64..(1u64 << free.len()) {
        let mut d = fixed.clone();
        for (bit, &i) in free.iter().enumerate() {
            d[i] = ((mask >> bit) & 1) as f64;
        }
        let dm = Matrix::from_diagonal(&Vector::from_vec(d));
        let j = &eye - dm * &inner;
        let s = j.svd(false, false).singular_values.min();
        min_sigma = min_sigma.min(s);
    }
    BruteBd {
        regular: min_sigma > sing_tol,
        elements: 1usize << free.len(),
        min_sigma,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteBd {
    pub regular: bool,
    pub elements: usize,
    pub min_sigma: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_candidates_by_hand() {
        let y = Vector::from_vec(vec![2.0, -0.3, 0.5, -4.0]);
        let x = prox_l1(1.0, 0.5, &y);
        assert_eq!(x, Vector::from_vec(vec![1.5, 0.0, 0.0, -3.5]));
    }

    #[test]
    fn l2_bisection_by_hand() {
        let y = Vector::from_vec(vec![3.0, 4.0]);
        let x = prox_l2(1.0, &y);
        assert!((x - Vector::from_vec(vec![2.4, 3.2])).norm() < 1e-14);
        assert_eq!(prox_l2(6.0, &y), Vector::zeros(2));
    }

    #[test]
    fn affine_kkt_by_hand() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = Vector::from_vec(vec![1.0]);
        let x = project_affine(&a, &b, &Vector::from_vec(vec![1.0, 1.0]));
        assert!((x - Vector::from_vec(vec![0.5, 0.5])).norm() < 1e-15);
    }

    #[test]
    fn finite_differences_of_linear_map() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let j = central_difference_jacobian(|x| &a * x, &Vector::from_vec(vec![0.3, -1.0]), 1e-6);
        assert!((j - a).norm() < 1e-8);
    }

    #[test]
    fn enumeration_counts_ties() {
        // H = I, t = 1/2, λ = 1, x = 0, g₀ = (1, 0.5): w = (0.5, 0.25), tie on coordinate 0
        let h = Matrix::identity(2, 2);
        let g0 = Vector::from_vec(vec![1.0, 0.5]);
        let r = bd_regular_by_enumeration(&h, &g0, 1.0, 0.5, &Vector::zeros(2), 1e-9, 1e-10);
        assert_eq!(r.elements, 2);
        assert!(r.regular);
        // H = 0 makes the element with d_0 = 1 singular
        let r = bd_regular_by_enumeration(&Matrix::zeros(2, 2), &g0, 1.0, 0.5, &Vector::zeros(2), 1.5, 1e-10);
        assert!(!r.regular);
    }
}
