//! Fixed-support subspaces `M = {x : x_i = 0 for i ∉ S}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, Matrix, Vector};

/// Linear manifold of vectors supported on a fixed index set. Serializes as
/// `{"dim": n, "support": [sorted indices]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SupportRepr", into = "SupportRepr")]
pub struct SupportManifold {
    dim: usize,
    support: Vec<usize>,
    mask: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SupportRepr {
    dim: usize,
    support: Vec<usize>,
}

impl TryFrom<SupportRepr> for SupportManifold {
    type Error = Error;
    fn try_from(r: SupportRepr) -> Result<Self> {
        SupportManifold::new(r.dim, r.support)
    }
}

impl From<SupportManifold> for SupportRepr {
    fn from(m: SupportManifold) -> Self {
        SupportRepr {
            dim: m.dim,
            support: m.support,
        }
    }
}

impl SupportManifold {
    pub fn new(dim: usize, mut support: Vec<usize>) -> Result<Self> {
        support.sort_unstable();
        support.dedup();
        if let Some(&bad) = support.iter().find(|&&i| i >= dim) {
            return Err(Error::InvalidConfig(format!(
                "support index {bad} out of range for dimension {dim}"
            )));
        }
        let mut mask = vec![false; dim];
        for &i in &support {
            mask[i] = true;
        }
        Ok(SupportManifold { dim, support, mask })
    }

    pub fn full(dim: usize) -> Self {
        SupportManifold {
            dim,
            support: (0..dim).collect(),
            mask: vec![true; dim],
        }
    }

    /// Support of `x` with `|x_i| > tol`.
    pub fn from_support_of(x: &Vector, tol: f64) -> Self {
        let support = x
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > tol)
            .map(|(i, _)| i)
            .collect();
        SupportManifold::new(x.len(), support).expect("indices in range")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn is_full(&self) -> bool {
        self.support.len() == self.dim
    }

    pub fn contains_index(&self, i: usize) -> bool {
        self.mask[i]
    }

    /// Diagonal 0/1 matrix of the tangent projection (constant on `M`).
    pub fn tangent_projection(&self) -> Matrix {
        Matrix::from_diagonal(&Vector::from_iterator(
            self.dim,
            self.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }),
        ))
    }

    /// `P_M(y)`: zero out coordinates off the support.
    pub fn project(&self, y: &Vector) -> Result<Vector> {
        check_dim(self.dim, y.len())?;
        let mut out = y.clone();
        for (i, keep) in self.mask.iter().enumerate() {
            if !keep {
                out[i] = 0.0;
            }
        }
        Ok(out)
    }

    /// `J·P` formed by zeroing the columns of `j` off the support.
    pub fn restrict_columns(&self, j: &Matrix) -> Matrix {
        let mut out = j.clone();
        for (c, keep) in self.mask.iter().enumerate() {
            if !keep {
                out.column_mut(c).fill(0.0);
            }
        }
        out
    }

    pub fn contains(&self, x: &Vector) -> bool {
        x.len() == self.dim && x.iter().zip(&self.mask).all(|(v, &keep)| keep || *v == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{randn_vector, stream_rng};
    use proptest::prelude::*;

    #[test]
    fn full_and_empty_projections() {
        assert_eq!(SupportManifold::full(4).tangent_projection(), Matrix::identity(4, 4));
        let empty = SupportManifold::new(3, vec![]).unwrap();
        assert_eq!(empty.tangent_projection(), Matrix::zeros(3, 3));
    }

    #[test]
    fn rejects_out_of_range_index() {
        assert!(SupportManifold::new(3, vec![0, 3]).is_err());
    }

    #[test]
    fn support_serializes_sorted() {
        let m = SupportManifold::new(5, vec![3, 1, 3]).unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"dim":5,"support":[1,3]}"#);
    }

    #[test]
    fn restrict_columns_equals_product() {
        let mut rng = stream_rng(2, 0);
        let j = Matrix::from_fn(4, 4, |_, _| crate::rng::randn(&mut rng));
        let m = SupportManifold::new(4, vec![0, 2]).unwrap();
        assert_eq!(m.restrict_columns(&j), &j * m.tangent_projection());
    }

    #[test]
    fn projection_bound_against_manifold_points() {
        let mut rng = stream_rng(3, 0);
        let m = SupportManifold::new(6, vec![1, 2, 4]).unwrap();
        for _ in 0..200 {
            let x = m.project(&randn_vector(&mut rng, 6)).unwrap();
            let y = randn_vector(&mut rng, 6);
            let py = m.project(&y).unwrap();
            assert!((&py - &x).norm() <= 2.0 * (&x - &y).norm());
        }
    }

    fn arb_case() -> impl Strategy<Value = (Vec<bool>, Vec<f64>, Vec<f64>)> {
        (1usize..10).prop_flat_map(|n| {
            (
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(-10.0..10.0f64, n),
                prop::collection::vec(-10.0..10.0f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn projection_invariants((mask, xs, ds) in arb_case()) {
            let n = mask.len();
            let support: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
            let m = SupportManifold::new(n, support).unwrap();
            let p = m.tangent_projection();
            prop_assert_eq!(&p * &p, p.clone());
            prop_assert_eq!(p.transpose(), p.clone());

            let x = m.project(&Vector::from_vec(xs)).unwrap();
            let d = Vector::from_vec(ds);
            prop_assert!(m.contains(&x));
            // idempotence and exactness of the linear case
            let y = &x + &d;
            let py = m.project(&y).unwrap();
            prop_assert_eq!(m.project(&py).unwrap(), py.clone());
            prop_assert_eq!(py.clone(), &x + &p * &d);
            // 1-Lipschitz
            prop_assert!((py - &x).norm() <= d.norm() + 1e-12);
        }
    }
}
