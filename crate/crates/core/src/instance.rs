//! Problem instances and the synthetic generators for sparse recovery
//! (basis pursuit denoising) and lifted phase retrieval.
//!
//! Randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64`, with normals drawn by `rand_distr::StandardNormal`, so
//! instances are identical across platforms for a given seed. Draw order is
//! fixed and documented on each generator.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::atoms::{Antipolar, AtomFamily, AtomicSet};
use crate::error::{Error, Result};
use crate::linops::{DenseOperator, Operator, Point, RankOneOperator};

/// Data of `minimize γ_A(x) subject to M x ∈ B` with `B` the ball
/// `{u : ||u - b|| <= ε}` (a singleton when `ε = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub operator: Operator,
    pub atoms: AtomicSet,
    pub antipolar: Antipolar,
    pub ground_truth: Option<Point>,
    /// Optimal value of the gauge dual.
    pub d_star: f64,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn b(&self) -> &DVector<f64> {
        self.antipolar.b()
    }

    pub fn eps(&self) -> f64 {
        self.antipolar.eps()
    }

    /// Replaces `d*` (for experiments that deliberately misstate it).
    pub fn with_d_star(mut self, d_star: f64) -> Self {
        self.d_star = d_star;
        self
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    // row-major draw order
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
        .collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

pub fn gaussian_vector(rng: &mut impl Rng, len: usize) -> DVector<f64> {
    DVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Sparse recovery instance.
///
/// Draw order: the `m x n` matrix row by row (standard normal, scaled by
/// `1/√m`); then `k` distinct support positions; then one sign per
/// position (`±1` with equal probability); then, if `eps > 0`, an
/// `m`-vector of noise rescaled to norm `eps / 2`.
///
/// With `eps = 0`, `d* = 1/||x₀||₁ = 1/k` (strong duality with `x₀` as the
/// primal optimum). With `eps > 0` the normalization no longer holds and
/// `d*` comes from a reference primal solve over the full atomic set.
pub fn generate_bpdn(n: usize, m: usize, k: usize, eps: f64, seed: u64) -> Result<ProblemInstance> {
    if n == 0 || m == 0 || k == 0 {
        return Err(Error::Config(format!("dimensions must be positive (n={n}, m={m}, k={k})")));
    }
    if k > n {
        return Err(Error::Config(format!("sparsity {k} exceeds dimension {n}")));
    }
    if m > n {
        return Err(Error::Config(format!("measurement count {m} exceeds dimension {n}")));
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Config(format!("noise level must be finite and nonnegative, got {eps}")));
    }
    let mut rng = rng_from_seed(seed);
    let matrix = gaussian_matrix(&mut rng, m, n, 1.0 / (m as f64).sqrt());
    let positions = sample(&mut rng, n, k).into_vec();
    let mut x0 = DVector::zeros(n);
    for &p in &positions {
        x0[p] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    let mut b = &matrix * &x0;
    if eps > 0.0 {
        let noise = gaussian_vector(&mut rng, m);
        let nn = noise.norm();
        if nn > 0.0 {
            b += noise * (0.5 * eps / nn);
        }
    }
    let operator = Operator::Dense(DenseOperator::new(matrix));
    let antipolar = Antipolar::new(b, eps)?;
    let atoms = AtomicSet::new(AtomFamily::SignedBasis, n);
    let mut instance = ProblemInstance {
        operator,
        atoms,
        antipolar,
        ground_truth: Some(Point::Vector(x0.clone())),
        d_star: 1.0 / x0.lp_norm(1),
        seed,
    };
    if eps > 0.0 {
        let reference = crate::poly::reference_l1_solve(&instance)?;
        instance.d_star = 1.0 / reference.objective;
    }
    Ok(instance)
}

/// Lifted phase retrieval instance with `B = {b}`.
///
/// Draw order: the signal `x₀` (`n` normals, then normalized to unit
/// length), then the `m` measurement vectors one after another (`n`
/// normals each). `b_i = <x₀x₀ᵀ, m_i m_iᵀ>` and `d* = 1/trace(x₀x₀ᵀ) = 1`.
pub fn generate_phase(n: usize, m: usize, seed: u64) -> Result<ProblemInstance> {
    if n == 0 || m == 0 {
        return Err(Error::Config(format!("dimensions must be positive (n={n}, m={m})")));
    }
    let mut rng = rng_from_seed(seed);
    let mut x0 = gaussian_vector(&mut rng, n);
    x0 /= x0.norm();
    let vectors: Vec<DVector<f64>> = (0..m).map(|_| gaussian_vector(&mut rng, n)).collect();
    phase_instance(x0, vectors, seed)
}

/// Phase retrieval instance from an explicit signal and measurement vectors.
pub fn phase_instance(x0: DVector<f64>, vectors: Vec<DVector<f64>>, seed: u64) -> Result<ProblemInstance> {
    let n = x0.len();
    let op = RankOneOperator::new(vectors)?;
    if op.dim() != n {
        return Err(Error::Config(format!(
            "signal has length {n} but measurement vectors have length {}",
            op.dim()
        )));
    }
    let lifted = &x0 * x0.transpose();
    let b = op.apply(&lifted)?;
    let trace = lifted.trace();
    Ok(ProblemInstance {
        operator: Operator::RankOne(op),
        atoms: AtomicSet::spectral_psd(n),
        antipolar: Antipolar::new(b, 0.0)?,
        ground_truth: Some(Point::Matrix(lifted)),
        d_star: 1.0 / trace,
        seed,
    })
}
