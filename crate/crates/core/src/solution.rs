use nalgebra::{DMatrix, DVector};

use crate::atoms::PolyAtom;
use crate::linops::Point;

/// How a recovered point decomposes over the discovered atoms.
#[derive(Debug, Clone, PartialEq)]
pub enum Factors {
    /// `x = Σ c_j a_j` with `c_j > 0`.
    Atoms { atoms: Vec<PolyAtom>, weights: Vec<f64> },
    /// `x = s W + P S Pᵀ` with `s >= 0`, `S ⪰ 0`.
    Spectral {
        s: f64,
        w: DMatrix<f64>,
        basis: DMatrix<f64>,
        core: DMatrix<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub x: Point,
    pub factors: Factors,
    /// Gauge value of `x` over the discovered atoms.
    pub objective: f64,
    /// `||M x - b||`.
    pub residual: f64,
    pub iterations: usize,
}

impl PrimalSolution {
    /// Rebuilds `x` from its factors.
    pub fn reconstruct(&self) -> Point {
        match &self.factors {
            Factors::Atoms { atoms, weights } => {
                let n = match &self.x {
                    Point::Vector(v) => v.len(),
                    Point::Matrix(m) => m.nrows(),
                };
                let mut x = DVector::zeros(n);
                for (a, &c) in atoms.iter().zip(weights) {
                    x[a.index] += f64::from(a.sign) * c;
                }
                Point::Vector(x)
            }
            Factors::Spectral { s, w, basis, core } => Point::Matrix(w * *s + basis * core * basis.transpose()),
        }
    }
}
