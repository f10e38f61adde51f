//! Measurement operators `M` and their adjoints.
//!
//! Primal points are either plain vectors (sparse recovery) or dense
//! symmetric matrices (lifted phase retrieval). The matrix inner product is
//! the trace inner product throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{shape_err, Result};
use crate::linalg::frob_dot;

/// A point of the primal space.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
}

impl Point {
    pub fn dot(&self, other: &Point) -> Result<f64> {
        match (self, other) {
            (Point::Vector(a), Point::Vector(b)) if a.len() == b.len() => Ok(a.dot(b)),
            (Point::Matrix(a), Point::Matrix(b)) if a.shape() == b.shape() => Ok(frob_dot(a, b)),
            _ => Err(shape_err(self.describe(), other.describe())),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            Point::Vector(v) => v.norm(),
            Point::Matrix(m) => m.norm(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Point::Vector(v) => format!("vector of length {}", v.len()),
            Point::Matrix(m) => format!("{}x{} matrix", m.nrows(), m.ncols()),
        }
    }

    pub fn as_vector(&self) -> Result<&DVector<f64>> {
        match self {
            Point::Vector(v) => Ok(v),
            Point::Matrix(_) => Err(shape_err("vector", self.describe())),
        }
    }

    pub fn as_matrix(&self) -> Result<&DMatrix<f64>> {
        match self {
            Point::Matrix(m) => Ok(m),
            Point::Vector(_) => Err(shape_err("matrix", self.describe())),
        }
    }

    pub fn scale(&self, t: f64) -> Point {
        match self {
            Point::Vector(v) => Point::Vector(v * t),
            Point::Matrix(m) => Point::Matrix(m * t),
        }
    }
}

/// Dense `m x n` matrix acting on vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.cols() {
            return Err(shape_err(
                format!("vector of length {}", self.cols()),
                format!("vector of length {}", x.len()),
            ));
        }
        Ok(&self.matrix * x)
    }

    pub fn adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.rows() {
            return Err(shape_err(
                format!("vector of length {}", self.rows()),
                format!("vector of length {}", y.len()),
            ));
        }
        Ok(self.matrix.tr_mul(y))
    }
}

/// `X -> [<X, m_i m_iᵀ>]_i`, the lifted quadratic measurement map.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneOperator {
    /// Measurement vectors stored as the columns of an `n x m` matrix.
    vectors: DMatrix<f64>,
}

impl RankOneOperator {
    pub fn new(vectors: Vec<DVector<f64>>) -> Result<Self> {
        let n = vectors.first().map_or(0, |v| v.len());
        if let Some(bad) = vectors.iter().find(|v| v.len() != n) {
            return Err(shape_err(
                format!("measurement vector of length {n}"),
                format!("length {}", bad.len()),
            ));
        }
        Ok(Self {
            vectors: DMatrix::from_columns(&vectors),
        })
    }

    /// Builds the operator from an `n x m` matrix whose columns are the `m_i`.
    pub fn from_columns(vectors: DMatrix<f64>) -> Self {
        Self { vectors }
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn rows(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        if x.shape() != (n, n) {
            return Err(shape_err(
                format!("{n}x{n} matrix"),
                format!("{}x{} matrix", x.nrows(), x.ncols()),
            ));
        }
        let xm = x * &self.vectors;
        Ok(DVector::from_iterator(
            self.rows(),
            (0..self.rows()).map(|i| self.vectors.column(i).dot(&xm.column(i))),
        ))
    }

    /// `sum_i y_i m_i m_iᵀ`, exactly symmetric.
    pub fn adjoint(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        if y.len() != self.rows() {
            return Err(shape_err(
                format!("vector of length {}", self.rows()),
                format!("vector of length {}", y.len()),
            ));
        }
        let scaled = DMatrix::from_fn(self.dim(), self.rows(), |r, c| self.vectors[(r, c)] * y[c]);
        let out = scaled * self.vectors.transpose();
        Ok(crate::linalg::symmetrize(&out))
    }
}

/// Either operator family behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Dense(DenseOperator),
    RankOne(RankOneOperator),
}

impl Operator {
    /// Number of measurements `m`.
    pub fn rows(&self) -> usize {
        match self {
            Operator::Dense(op) => op.rows(),
            Operator::RankOne(op) => op.rows(),
        }
    }

    /// Ambient dimension `n` of the primal space (matrices are `n x n`).
    pub fn primal_dim(&self) -> usize {
        match self {
            Operator::Dense(op) => op.cols(),
            Operator::RankOne(op) => op.dim(),
        }
    }

    pub fn apply(&self, x: &Point) -> Result<DVector<f64>> {
        match (self, x) {
            (Operator::Dense(op), Point::Vector(v)) => op.apply(v),
            (Operator::RankOne(op), Point::Matrix(m)) => op.apply(m),
            (Operator::Dense(op), _) => Err(shape_err(format!("vector of length {}", op.cols()), x.describe())),
            (Operator::RankOne(op), _) => Err(shape_err(format!("{0}x{0} matrix", op.dim()), x.describe())),
        }
    }

    pub fn adjoint(&self, y: &DVector<f64>) -> Result<Point> {
        match self {
            Operator::Dense(op) => op.adjoint(y).map(Point::Vector),
            Operator::RankOne(op) => op.adjoint(y).map(Point::Matrix),
        }
    }

    /// Squared operator norm `||M||^2`, by power iteration on `M M*`.
    pub fn norm_squared_estimate(&self, iterations: usize) -> f64 {
        let m = self.rows();
        if m == 0 {
            return 0.0;
        }
        let mut y = DVector::from_fn(m, |i, _| 1.0 + 0.01 * (i as f64 + 1.0).sqrt());
        y /= y.norm();
        let mut est = 0.0;
        for _ in 0..iterations {
            let Ok(x) = self.adjoint(&y) else { return 0.0 };
            let Ok(w) = self.apply(&x) else { return 0.0 };
            let nw = w.norm();
            if nw == 0.0 {
                return 0.0;
            }
            est = nw;
            y = w / nw;
        }
        est
    }
}

impl From<DenseOperator> for Operator {
    fn from(op: DenseOperator) -> Self {
        Operator::Dense(op)
    }
}

impl From<RankOneOperator> for Operator {
    fn from(op: RankOneOperator) -> Self {
        Operator::RankOne(op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_apply_and_adjoint() {
        let op = DenseOperator::identity(2);
        let x = DVector::from_vec(vec![3.0, -1.0]);
        assert_eq!(op.apply(&x).unwrap(), x);
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(op.adjoint(&y).unwrap(), y);
    }

    #[test]
    fn rank_one_apply_diagonal() {
        let op = RankOneOperator::new(vec![DVector::from_vec(vec![1.0, 0.0])]).unwrap();
        let x = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 2.0]));
        assert_eq!(op.apply(&x).unwrap().as_slice(), &[5.0]);
    }

    #[test]
    fn rank_one_adjoint_outer_product() {
        let op = RankOneOperator::new(vec![DVector::from_vec(vec![1.0, 1.0])]).unwrap();
        let out = op.adjoint(&DVector::from_vec(vec![2.0])).unwrap();
        assert_eq!(out, DMatrix::from_element(2, 2, 2.0));
    }

    #[test]
    fn shape_errors() {
        let op = DenseOperator::identity(2);
        assert!(op.apply(&DVector::zeros(3)).is_err());
        assert!(op.adjoint(&DVector::zeros(1)).is_err());
        let r1 = RankOneOperator::new(vec![DVector::zeros(3)]).unwrap();
        assert!(r1.apply(&DMatrix::zeros(2, 2)).is_err());
        assert!(r1.adjoint(&DVector::zeros(2)).is_err());
        assert!(RankOneOperator::new(vec![DVector::zeros(3), DVector::zeros(2)]).is_err());
        let op: Operator = DenseOperator::identity(2).into();
        assert!(op.apply(&Point::Matrix(DMatrix::zeros(2, 2))).is_err());
    }

    #[test]
    fn operator_norm_of_identity() {
        let op: Operator = DenseOperator::identity(5).into();
        assert!((op.norm_squared_estimate(20) - 1.0).abs() < 1e-12);
    }
}
