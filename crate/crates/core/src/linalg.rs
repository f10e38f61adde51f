//! Dense symmetric eigensolver and small orthogonalization helpers.
//!
//! All spectral computations route through [`sym_eigen`], so the dense
//! decomposition can later be swapped for a Lanczos iteration without
//! touching callers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenpairs of a symmetric matrix, sorted by decreasing eigenvalue.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: DVector<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    /// Leading eigenvector, signed so its largest-magnitude entry is positive.
    pub fn leading_vector(&self) -> DVector<f64> {
        canonical_sign(self.vectors.column(0).into_owned())
    }
}

/// Symmetric eigendecomposition of `a` (only the symmetric part is used).
pub fn sym_eigen(a: &DMatrix<f64>) -> EigenPairs {
    let n = a.nrows();
    if n == 0 {
        return EigenPairs {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let sym = symmetrize(a);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    EigenPairs { values, vectors }
}

pub fn lambda_max(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    sym_eigen(a).max_value()
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Flip `v` so that its largest-magnitude entry is positive (first one on ties).
pub fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Trace inner product `<a, b> = trace(aᵀ b)`.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Modified Gram-Schmidt. Columns whose residual norm falls below
/// `drop_tol` after orthogonalization are discarded.
pub fn orthonormalize(cols: &[DVector<f64>], drop_tol: f64) -> DMatrix<f64> {
    let dim = cols.first().map_or(0, |c| c.len());
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cols.len());
    for c in cols {
        let mut v = c.clone();
        // two passes keep the basis orthonormal to working precision
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > drop_tol {
            basis.push(v / norm);
        }
    }
    let mut out = DMatrix::zeros(dim, basis.len());
    for (j, q) in basis.iter().enumerate() {
        out.set_column(j, q);
    }
    out
}

pub fn outer(u: &DVector<f64>) -> DMatrix<f64> {
    u * u.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, -2.0]));
        let e = sym_eigen(&a);
        assert_eq!(e.values.as_slice(), &[3.0, 1.0, -2.0]);
        let v = e.leading_vector();
        assert!((v[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sign_convention() {
        let v = canonical_sign(DVector::from_vec(vec![0.1, -0.9, 0.3]));
        assert!(v[1] > 0.0);
    }

    #[test]
    fn gram_schmidt_drops_dependent_columns() {
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 0.0, 0.0]);
        let c = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let q = orthonormalize(&[a, b, c], 1e-10);
        assert_eq!(q.ncols(), 2);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}
