//! Atomic sets: support functions, exposed atoms, gauges, and the antipolar
//! of the admissible measurement set.

use nalgebra::{DMatrix, DVector};

use crate::error::{shape_err, Error, Result};
use crate::linalg::{outer, sym_eigen};
use crate::linops::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AtomFamily {
    /// `{±e_1, ..., ±e_n}`, the cross-polytope.
    SignedBasis,
    /// `{e_1, ..., e_n}`.
    NonnegBasis,
    /// `{uuᵀ : ||u||_2 = 1}`.
    SpectralPsd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AtomicSet {
    pub family: AtomFamily,
    pub dim: usize,
}

/// `sign * e_index` (zero-based index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PolyAtom {
    pub index: usize,
    pub sign: i8,
}

impl PolyAtom {
    pub fn new(index: usize, sign: i8) -> Self {
        debug_assert!(sign == 1 || sign == -1);
        Self { index, sign }
    }

    pub fn positive(index: usize) -> Self {
        Self::new(index, 1)
    }

    pub fn negative(index: usize) -> Self {
        Self::new(index, -1)
    }

    /// `<sign * e_index, z>`.
    pub fn dot(&self, z: &DVector<f64>) -> f64 {
        f64::from(self.sign) * z[self.index]
    }

    pub fn to_vector(&self, n: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        v[self.index] = f64::from(self.sign);
        v
    }
}

/// `uuᵀ` for a unit vector `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralAtom {
    u: DVector<f64>,
}

impl SpectralAtom {
    /// Normalizes `u`; fails on the zero vector.
    pub fn new(u: DVector<f64>) -> Result<Self> {
        let norm = u.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Config("spectral atom needs a nonzero finite vector".into()));
        }
        Ok(Self { u: u / norm })
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        outer(&self.u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Poly(PolyAtom),
    Spectral(SpectralAtom),
}

impl Atom {
    pub fn to_point(&self, n: usize) -> Point {
        match self {
            Atom::Poly(a) => Point::Vector(a.to_vector(n)),
            Atom::Spectral(a) => Point::Matrix(a.to_matrix()),
        }
    }
}

impl AtomicSet {
    pub fn new(family: AtomFamily, dim: usize) -> Self {
        Self { family, dim }
    }

    pub fn signed_basis(dim: usize) -> Self {
        Self::new(AtomFamily::SignedBasis, dim)
    }

    pub fn nonneg_basis(dim: usize) -> Self {
        Self::new(AtomFamily::NonnegBasis, dim)
    }

    pub fn spectral_psd(dim: usize) -> Self {
        Self::new(AtomFamily::SpectralPsd, dim)
    }

    pub fn is_polyhedral(&self) -> bool {
        !matches!(self.family, AtomFamily::SpectralPsd)
    }

    fn check<'a>(&self, z: &'a Point) -> Result<Shaped<'a>> {
        match (self.family, z) {
            (AtomFamily::SpectralPsd, Point::Matrix(m)) if m.shape() == (self.dim, self.dim) => Ok(Shaped::Mat(m)),
            (AtomFamily::SignedBasis | AtomFamily::NonnegBasis, Point::Vector(v)) if v.len() == self.dim => {
                Ok(Shaped::Vec(v))
            }
            (AtomFamily::SpectralPsd, _) => Err(shape_err(format!("{0}x{0} matrix", self.dim), z.describe())),
            _ => Err(shape_err(format!("vector of length {}", self.dim), z.describe())),
        }
    }

    /// `σ_A(z) = sup_{a ∈ conv A} <a, z>`.
    pub fn support_value(&self, z: &Point) -> Result<f64> {
        Ok(match self.check(z)? {
            Shaped::Vec(v) => match self.family {
                AtomFamily::SignedBasis => v.amax(),
                _ => v.iter().copied().fold(0.0, f64::max),
            },
            Shaped::Mat(m) => {
                if self.dim == 0 {
                    0.0
                } else {
                    sym_eigen(m).max_value().max(0.0)
                }
            }
        })
    }

    /// One atom `a` with `<a, z> = σ_A(z)`.
    ///
    /// Ties go to the lowest index (polyhedral) or the eigensolver's leading
    /// vector with its largest-magnitude entry made positive (spectral).
    /// Returns [`Error::NoExposedAtom`] when `σ_A(z) = 0`.
    pub fn exposed_atom(&self, z: &Point) -> Result<Atom> {
        match self.check(z)? {
            Shaped::Vec(v) => {
                let mut best: Option<(PolyAtom, f64)> = None;
                for (i, &zi) in v.iter().enumerate() {
                    let cand = match self.family {
                        AtomFamily::SignedBasis => {
                            if zi >= 0.0 {
                                (PolyAtom::positive(i), zi)
                            } else {
                                (PolyAtom::negative(i), -zi)
                            }
                        }
                        _ => (PolyAtom::positive(i), zi),
                    };
                    if best.is_none_or(|(_, bv)| cand.1 > bv) {
                        best = Some(cand);
                    }
                }
                match best {
                    Some((atom, value)) if value > 0.0 => Ok(Atom::Poly(atom)),
                    other => Err(Error::NoExposedAtom {
                        support_value: other.map_or(0.0, |(_, v)| v.max(0.0)),
                    }),
                }
            }
            Shaped::Mat(m) => {
                if self.dim == 0 {
                    return Err(Error::NoExposedAtom { support_value: 0.0 });
                }
                let eig = sym_eigen(m);
                if eig.max_value() <= 0.0 {
                    return Err(Error::NoExposedAtom { support_value: 0.0 });
                }
                Ok(Atom::Spectral(SpectralAtom { u: eig.leading_vector() }))
            }
        }
    }

    /// Atoms of a polyhedral set with `<a, z> >= σ_A(z) - tol`, in index
    /// order. Empty when `σ_A(z) <= tol` or the set is spectral.
    pub fn exposed_face(&self, z: &DVector<f64>, tol: f64) -> Vec<PolyAtom> {
        if !self.is_polyhedral() || z.len() != self.dim {
            return Vec::new();
        }
        let sigma = match self.family {
            AtomFamily::SignedBasis => z.amax(),
            _ => z.iter().copied().fold(0.0, f64::max),
        };
        if sigma <= tol {
            return Vec::new();
        }
        let mut face = Vec::new();
        for (i, &zi) in z.iter().enumerate() {
            if zi >= sigma - tol {
                face.push(PolyAtom::positive(i));
            }
            if self.family == AtomFamily::SignedBasis && -zi >= sigma - tol {
                face.push(PolyAtom::negative(i));
            }
        }
        face
    }

    /// `γ_A(x)`; `+∞` when `x` is not in the cone generated by the atoms.
    pub fn gauge_value(&self, x: &Point) -> Result<f64> {
        Ok(match self.check(x)? {
            Shaped::Vec(v) => match self.family {
                AtomFamily::SignedBasis => v.lp_norm(1),
                _ => {
                    if v.iter().all(|&xi| xi >= 0.0) {
                        v.sum()
                    } else {
                        f64::INFINITY
                    }
                }
            },
            Shaped::Mat(m) => {
                if self.dim == 0 {
                    return Ok(0.0);
                }
                let eig = sym_eigen(m);
                let min = eig.values[eig.len() - 1];
                if min >= -PSD_TOLERANCE * m.norm().max(1.0) {
                    m.trace()
                } else {
                    f64::INFINITY
                }
            }
        })
    }
}

/// Relative eigenvalue slack for PSD membership in [`AtomicSet::gauge_value`].
pub const PSD_TOLERANCE: f64 = 1e-9;

enum Shaped<'a> {
    Vec(&'a DVector<f64>),
    Mat(&'a DMatrix<f64>),
}

/// Atoms `a` of `atoms` with `<a, z> >= model_value - delta`, in input order
/// with duplicates removed.
pub fn relaxed_exposed_face(atoms: &[PolyAtom], z: &DVector<f64>, model_value: f64, delta: f64) -> Vec<PolyAtom> {
    let threshold = model_value - delta;
    let mut out: Vec<PolyAtom> = Vec::with_capacity(atoms.len());
    for a in atoms {
        if a.dot(z) >= threshold && !out.contains(a) {
            out.push(*a);
        }
    }
    out
}

/// The antipolar `B' = {y : <b, y> - ε ||y||_2 >= 1}` of the ball
/// `{u : ||u - b||_2 <= ε}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Antipolar {
    b: DVector<f64>,
    eps: f64,
}

const BISECTION_MAX_ITERS: usize = 200;
const BISECTION_REL_TOL: f64 = 1e-10;

impl Antipolar {
    pub fn new(b: DVector<f64>, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::Config(format!("noise level must be finite and nonnegative, got {eps}")));
        }
        let nb = b.norm();
        if nb == 0.0 || nb <= eps {
            return Err(Error::Config(format!(
                "antipolar set is empty: ||b|| = {nb:e} must exceed eps = {eps:e}"
            )));
        }
        Ok(Self { b, eps })
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `<b, y> - ε ||y|| - 1`; nonnegative exactly on `B'`.
    pub fn residual(&self, y: &DVector<f64>) -> f64 {
        self.b.dot(y) - self.eps * y.norm() - 1.0
    }

    /// Default starting point: `b / <b, b>` (so `<b, y> = 1`), projected when `ε > 0`.
    pub fn default_start(&self) -> DVector<f64> {
        let y = &self.b / self.b.norm_squared();
        if self.eps > 0.0 {
            self.project(&y)
        } else {
            y
        }
    }

    /// Euclidean projection onto `B'`.
    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.residual(y) >= 0.0 {
            return y.clone();
        }
        if self.eps == 0.0 {
            let shift = (1.0 - self.b.dot(y)) / self.b.norm_squared();
            return y + &self.b * shift;
        }
        // Stationarity gives u(μ) ∥ y + μ b with ||u|| = ||y + μ b|| - μ ε;
        // bisect on the multiplier μ for <b, u> - ε ||u|| = 1.
        let candidate = |mu: f64| -> DVector<f64> {
            let w = y + &self.b * mu;
            let nw = w.norm();
            let len = nw - mu * self.eps;
            if len <= 0.0 || nw == 0.0 {
                DVector::zeros(y.len())
            } else {
                w * (len / nw)
            }
        };
        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut it = 0;
        while self.residual(&candidate(hi)) < 0.0 && it < BISECTION_MAX_ITERS {
            lo = hi;
            hi *= 2.0;
            it += 1;
        }
        while it < BISECTION_MAX_ITERS && hi - lo > BISECTION_REL_TOL * hi.max(1e-300) {
            let mid = 0.5 * (lo + hi);
            if self.residual(&candidate(mid)) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            it += 1;
        }
        candidate(hi)
    }

    /// Tangent halfspace `{u : <normal, u> <= offset}` containing `B'`,
    /// linearized at `y` (requires `y != 0` when `ε > 0`).
    pub fn linearization(&self, y: &DVector<f64>) -> (DVector<f64>, f64) {
        // g(u) = 1 - <b,u> + ε||u|| <= 0; g(y) + <∇g(y), u - y> <= 0
        let ny = y.norm();
        if self.eps == 0.0 || ny == 0.0 {
            return (-&self.b, -1.0);
        }
        let grad = -&self.b + y * (self.eps / ny);
        let g = 1.0 - self.b.dot(y) + self.eps * ny;
        let offset = grad.dot(y) - g;
        (grad, offset)
    }
}
