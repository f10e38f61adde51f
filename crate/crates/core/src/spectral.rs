//! Spectral bundle model for the PSD atomic set `{uuᵀ : ||u|| = 1}`.
//!
//! The inner approximation is
//!
//! ```text
//! A^(k) = { α W + P V Pᵀ : α + trace(V) <= 1, α >= 0, V ⪰ 0 }
//! ```
//!
//! with an aggregate `W ⪰ 0, trace(W) <= 1` and an orthonormal basis `P`.
//! Its support function has the closed form
//! `max{0, λ_max(Pᵀ Z P), <W, Z>}`.

use nalgebra::{DMatrix, DVector};

use crate::atoms::{Atom, AtomicSet};
use crate::bundle::{BundleModel, UpdateParams};
use crate::error::{shape_err, Error, Result};
use crate::instance::ProblemInstance;
use crate::linalg::{frob_dot, orthonormalize, outer, sym_eigen};
use crate::linops::{Operator, Point};
use crate::projection::Halfspace;
use crate::solution::{Factors, PrimalSolution};

pub const DEFAULT_MAX_RANK: usize = 10;
/// Residual norm below which Gram-Schmidt drops a column.
pub const ORTHOG_DROP_TOL: f64 = 1e-10;
/// Relative gap under which eigenvalues count as equal to the maximum.
pub const MULTIPLICITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBundle {
    w: DMatrix<f64>,
    p: DMatrix<f64>,
    max_rank: usize,
}

/// A maximizer `ᾱ W + P V̄ Pᵀ` of `<·, Z>` over the model set.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposedElement {
    pub alpha: f64,
    pub v: DMatrix<f64>,
}

impl SpectralBundle {
    /// Fails unless `w` is `n x n`, `p` is `n x r` and `max_rank >= 1`.
    pub fn new(w: DMatrix<f64>, p: DMatrix<f64>, max_rank: usize) -> Result<Self> {
        let n = w.nrows();
        if w.ncols() != n || p.nrows() != n {
            return Err(shape_err(
                format!("{n}x{n} aggregate and {n}-row basis"),
                format!("{}x{} aggregate, {}x{} basis", w.nrows(), w.ncols(), p.nrows(), p.ncols()),
            ));
        }
        if max_rank == 0 {
            return Err(Error::Config("maximum basis size must be positive".into()));
        }
        Ok(Self { w, p, max_rank })
    }

    /// Empty model in dimension `n` (`W = 0`, no basis columns).
    pub fn empty(n: usize, max_rank: usize) -> Self {
        Self {
            w: DMatrix::zeros(n, n),
            p: DMatrix::zeros(n, 0),
            max_rank: max_rank.max(1),
        }
    }

    pub fn aggregate(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn max_rank(&self) -> usize {
        self.max_rank
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn rank(&self) -> usize {
        self.p.ncols()
    }

    fn has_aggregate(&self) -> bool {
        self.w.iter().any(|&x| x != 0.0)
    }

    /// `Pᵀ Z P`.
    pub fn compress(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        self.p.tr_mul(&(z * &self.p))
    }

    pub fn invariants(&self) -> BundleInvariants {
        let n = self.dim();
        let min_eig_w = if n == 0 {
            0.0
        } else {
            let e = sym_eigen(&self.w);
            e.values[e.len() - 1]
        };
        let r = self.rank();
        let orth = (self.p.tr_mul(&self.p) - DMatrix::<f64>::identity(r, r)).amax();
        BundleInvariants {
            trace_w: self.w.trace(),
            min_eig_w,
            orthogonality_error: if r == 0 { 0.0 } else { orth },
            symmetry_error: (&self.w - self.w.transpose()).amax(),
        }
    }
}

/// Numerical health of a [`SpectralBundle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundleInvariants {
    pub trace_w: f64,
    pub min_eig_w: f64,
    /// `max |PᵀP - I|`.
    pub orthogonality_error: f64,
    pub symmetry_error: f64,
}

impl BundleInvariants {
    pub fn holds(&self) -> bool {
        self.trace_w <= 1.0 + 1e-9
            && self.min_eig_w >= -1e-9
            && self.orthogonality_error <= 1e-10
            && self.symmetry_error <= 1e-12
    }
}

fn check_square(bundle: &SpectralBundle, z: &DMatrix<f64>) -> Result<()> {
    let n = bundle.dim();
    if z.shape() != (n, n) {
        return Err(shape_err(format!("{n}x{n} matrix"), format!("{}x{} matrix", z.nrows(), z.ncols())));
    }
    Ok(())
}

/// `max{0, λ_max(Pᵀ Z P), <W, Z>}`.
pub fn spectral_model_value(bundle: &SpectralBundle, z: &DMatrix<f64>) -> Result<f64> {
    check_square(bundle, z)?;
    let mut value: f64 = 0.0;
    if bundle.rank() > 0 {
        value = value.max(sym_eigen(&bundle.compress(z)).max_value());
    }
    if bundle.has_aggregate() {
        value = value.max(frob_dot(&bundle.w, z));
    }
    Ok(value)
}

/// Maximizer of `<α W + P V Pᵀ, Z>` over the model set. Ties prefer the
/// eigenvalue branch, then the aggregate, then zero.
pub fn spectral_exposed_element(bundle: &SpectralBundle, z: &DMatrix<f64>) -> Result<ExposedElement> {
    check_square(bundle, z)?;
    let r = bundle.rank();
    let model = spectral_model_value(bundle, z)?;
    if r > 0 {
        let eig = sym_eigen(&bundle.compress(z));
        if eig.max_value() >= model {
            let q = eig.leading_vector();
            return Ok(ExposedElement {
                alpha: 0.0,
                v: outer(&q),
            });
        }
    }
    if bundle.has_aggregate() && frob_dot(&bundle.w, z) >= model {
        return Ok(ExposedElement {
            alpha: 1.0,
            v: DMatrix::zeros(r, r),
        });
    }
    Ok(ExposedElement {
        alpha: 0.0,
        v: DMatrix::zeros(r, r),
    })
}

type EigenColumn = (f64, DVector<f64>);

/// Aggregation update.
///
/// With `V̄ = Q Λ Qᵀ`, the top eigenspace `Q₁` of `V̄` stays in the basis
/// and the rest is folded into the aggregate:
///
/// ```text
/// W⁺ = (ᾱ W + P Q₂ Λ₂ Q₂ᵀ Pᵀ) / (ᾱ + trace Λ₂),   P⁺ = orthog[P Q₁, v]
/// ```
///
/// `W⁺ = 0` when the denominator vanishes. When `V̄ = 0` every direction of
/// `P` is kept, ordered by the eigenvalues of `Pᵀ z_next P`. If `P Q₁` would
/// leave no room for `v` within `max_rank` columns, its trailing columns
/// are folded into `W⁺` as well.
pub fn spectral_bundle_update(
    bundle: &SpectralBundle,
    exposed: &ExposedElement,
    z_next: &DMatrix<f64>,
    v: Option<&DVector<f64>>,
) -> Result<SpectralBundle> {
    check_square(bundle, z_next)?;
    let n = bundle.dim();
    let r = bundle.rank();
    if exposed.v.shape() != (r, r) {
        return Err(shape_err(
            format!("{r}x{r} exposed core"),
            format!("{}x{}", exposed.v.nrows(), exposed.v.ncols()),
        ));
    }
    let room = bundle.max_rank - usize::from(v.is_some());

    // (eigenvalue, column of Q) pairs, descending
    let (keep, fold): (Vec<EigenColumn>, Vec<EigenColumn>) = if r == 0 {
        (Vec::new(), Vec::new())
    } else if exposed.v.iter().all(|&x| x == 0.0) {
        let eig = sym_eigen(&bundle.compress(z_next));
        let all: Vec<_> = (0..r).map(|j| (0.0, eig.vectors.column(j).into_owned())).collect();
        (all, Vec::new())
    } else {
        let eig = sym_eigen(&exposed.v);
        let lead = eig.values[0];
        let mut keep = Vec::new();
        let mut fold = Vec::new();
        for j in 0..r {
            let lam = eig.values[j];
            let q = eig.vectors.column(j).into_owned();
            if lam >= lead - MULTIPLICITY_TOL * lead.abs() {
                keep.push((lam, q));
            } else {
                fold.push((lam.max(0.0), q));
            }
        }
        (keep, fold)
    };
    let (keep, overflow) = if keep.len() > room {
        let mut k = keep;
        let extra = k.split_off(room);
        (k, extra)
    } else {
        (keep, Vec::new())
    };

    let alpha = exposed.alpha.max(0.0);
    let mut numerator = &bundle.w * alpha;
    let mut denom = alpha;
    for (lam, q) in fold.iter().chain(overflow.iter()) {
        if *lam > 0.0 {
            let pq = &bundle.p * q;
            numerator += outer(&pq) * *lam;
            denom += *lam;
        }
    }
    let w = if denom > 0.0 {
        crate::linalg::symmetrize(&(numerator / denom))
    } else {
        DMatrix::zeros(n, n)
    };

    let mut cols: Vec<DVector<f64>> = keep.iter().map(|(_, q)| &bundle.p * q).collect();
    if let Some(v) = v {
        if v.len() != n {
            return Err(shape_err(format!("vector of length {n}"), format!("length {}", v.len())));
        }
        cols.push(v.clone());
    }
    let mut p = orthonormalize(&cols, ORTHOG_DROP_TOL);
    if p.ncols() > bundle.max_rank {
        p = p.columns(0, bundle.max_rank).into_owned();
    }
    Ok(SpectralBundle {
        w,
        p,
        max_rank: bundle.max_rank,
    })
}

impl BundleModel for SpectralBundle {
    fn value(&self, z: &Point) -> Result<f64> {
        spectral_model_value(self, z.as_matrix()?)
    }

    fn size(&self) -> usize {
        self.rank()
    }

    fn is_polyhedral(&self) -> bool {
        false
    }

    fn level_cuts(&self, op: &Operator, y: &DVector<f64>, level: f64) -> Result<Vec<Halfspace>> {
        let mut cuts = Vec::new();
        let z = op.adjoint(y)?;
        let z = z.as_matrix()?;
        if self.rank() > 0 {
            // λ_max(PᵀZP) >= qᵀ Pᵀ (M* y) P q = <M(P q qᵀ Pᵀ), y>
            let eig = sym_eigen(&self.compress(z));
            for j in 0..eig.len().min(3) {
                if j > 0 && eig.values[j] <= level {
                    break;
                }
                let pq = &self.p * eig.vectors.column(j);
                let normal = op.apply(&Point::Matrix(outer(&pq)))?;
                cuts.extend(Halfspace::new(normal, level));
            }
        }
        if self.has_aggregate() {
            let normal = op.apply(&Point::Matrix(self.w.clone()))?;
            cuts.extend(Halfspace::new(normal, level));
        }
        Ok(cuts)
    }

    fn reinitialize(&mut self, _set: &AtomicSet, z1: &Point) -> Result<()> {
        let z1 = z1.as_matrix()?;
        let n = self.dim();
        if z1.shape() != (n, n) {
            return Err(shape_err(format!("{n}x{n} matrix"), format!("{}x{} matrix", z1.nrows(), z1.ncols())));
        }
        let v = sym_eigen(z1).leading_vector();
        self.w = DMatrix::zeros(n, n);
        self.p = DMatrix::from_columns(&[v]);
        Ok(())
    }

    fn update(&mut self, _set: &AtomicSet, z_next: &Point, exposed: Option<&Atom>, _params: &UpdateParams) -> Result<()> {
        let z = z_next.as_matrix()?;
        let v = match exposed {
            Some(Atom::Spectral(a)) => Some(a.vector().clone()),
            Some(Atom::Poly(_)) => return Err(shape_err("spectral atom", "polyhedral atom")),
            None => None,
        };
        let element = spectral_exposed_element(self, z)?;
        *self = spectral_bundle_update(self, &element, z, v.as_ref())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRecoveryOptions {
    /// Stop when the projected-gradient norm (relative to `max(1, ||Gᵀb||)`)
    /// falls below this.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SpectralRecoveryOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iterations: 50_000,
        }
    }
}

/// Copy of `bundle` whose basis also spans the `extra` leading eigenvectors
/// of `M* y`. The basis may exceed the bundle's rank cap; it is meant for
/// recovery, not for further iterations.
pub fn enriched_bundle(bundle: &SpectralBundle, problem: &ProblemInstance, y: &DVector<f64>, extra: usize) -> Result<SpectralBundle> {
    let z = problem.operator.adjoint(y)?;
    let z = z.as_matrix()?;
    if z.nrows() != bundle.dim() {
        return Err(shape_err(format!("{0}x{0} matrix", bundle.dim()), format!("{}x{} matrix", z.nrows(), z.ncols())));
    }
    let eig = sym_eigen(z);
    let mut cols: Vec<DVector<f64>> = bundle.p.column_iter().map(|c| c.into_owned()).collect();
    cols.extend(eig.vectors.column_iter().take(extra).map(|c| c.into_owned()));
    let p = if cols.is_empty() { bundle.p.clone() } else { orthonormalize(&cols, ORTHOG_DROP_TOL) };
    Ok(SpectralBundle {
        w: bundle.w.clone(),
        max_rank: bundle.max_rank.max(p.ncols()),
        p,
    })
}

/// Least squares `min ½||M x - b||²` over `x = s W + P S Pᵀ`, `s >= 0`, `S ⪰ 0`.
pub fn recover_primal_spectral(bundle: &SpectralBundle, problem: &ProblemInstance, tol: f64) -> Result<PrimalSolution> {
    recover_primal_spectral_with(
        bundle,
        problem,
        &SpectralRecoveryOptions {
            tol,
            ..SpectralRecoveryOptions::default()
        },
    )
}

pub fn recover_primal_spectral_with(
    bundle: &SpectralBundle,
    problem: &ProblemInstance,
    opts: &SpectralRecoveryOptions,
) -> Result<PrimalSolution> {
    let op = &problem.operator;
    let n = bundle.dim();
    if op.primal_dim() != n || !matches!(op, Operator::RankOne(_)) {
        return Err(shape_err(
            format!("matrix-valued operator on {n}x{n}"),
            format!("operator with primal dimension {}", op.primal_dim()),
        ));
    }
    let b = problem.b();
    let r = bundle.rank();
    let use_w = bundle.has_aggregate();

    // Reduced operator G: parameters θ = (s, svec(S)) with svec scaled so
    // ||svec(S)|| = ||S||_F.
    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|i| (i..r).map(move |j| (i, j))).collect();
    let offset = usize::from(use_w);
    let dim = offset + pairs.len();
    let mut g = DMatrix::zeros(op.rows(), dim);
    if use_w {
        g.set_column(0, &op.apply(&Point::Matrix(bundle.w.clone()))?);
    }
    for (c, &(i, j)) in pairs.iter().enumerate() {
        let pi = bundle.p.column(i).into_owned();
        let pj = bundle.p.column(j).into_owned();
        let e = if i == j {
            outer(&pi)
        } else {
            (&pi * pj.transpose() + &pj * pi.transpose()) / std::f64::consts::SQRT_2
        };
        g.set_column(offset + c, &op.apply(&Point::Matrix(e))?);
    }

    let unpack = |theta: &DVector<f64>| -> (f64, DMatrix<f64>) {
        let s = if use_w { theta[0] } else { 0.0 };
        let mut core = DMatrix::zeros(r, r);
        for (c, &(i, j)) in pairs.iter().enumerate() {
            let v = theta[offset + c];
            if i == j {
                core[(i, i)] = v;
            } else {
                core[(i, j)] = v / std::f64::consts::SQRT_2;
                core[(j, i)] = v / std::f64::consts::SQRT_2;
            }
        }
        (s, core)
    };
    let pack = |s: f64, core: &DMatrix<f64>| -> DVector<f64> {
        let mut theta = DVector::zeros(dim);
        if use_w {
            theta[0] = s;
        }
        for (c, &(i, j)) in pairs.iter().enumerate() {
            theta[offset + c] = if i == j {
                core[(i, i)]
            } else {
                core[(i, j)] * std::f64::consts::SQRT_2
            };
        }
        theta
    };
    let project = |theta: &DVector<f64>| -> DVector<f64> {
        let (s, core) = unpack(theta);
        let clipped = if r == 0 {
            core
        } else {
            let eig = sym_eigen(&core);
            let mut out = DMatrix::zeros(r, r);
            for j in 0..r {
                let lam = eig.values[j];
                if lam > 0.0 {
                    let q = eig.vectors.column(j).into_owned();
                    out += outer(&q) * lam;
                }
            }
            out
        };
        pack(s.max(0.0), &clipped)
    };

    let gtb = g.tr_mul(b);
    let scale = gtb.norm().max(1.0);
    let gram = g.tr_mul(&g);
    let lipschitz = if dim == 0 { 0.0 } else { sym_eigen(&gram).max_value() };

    let mut theta = DVector::zeros(dim);
    let mut iterations = 0;
    if dim > 0 && lipschitz > 0.0 && b.norm() > 0.0 {
        // accelerated projected gradient with gradient-based restart
        let step = 1.0 / lipschitz;
        let mut extrap = theta.clone();
        let mut t: f64 = 1.0;
        let mut converged = false;
        while iterations < opts.max_iterations {
            iterations += 1;
            let grad = &gram * &extrap - &gtb;
            let next = project(&(&extrap - &grad * step));
            let pg = (&extrap - &next).norm() * lipschitz;
            // restart momentum when it points uphill
            if (&extrap - &next).dot(&(&next - &theta)) > 0.0 {
                t = 1.0;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            extrap = &next + (&next - &theta) * momentum;
            theta = next;
            t = t_next;
            if pg <= opts.tol * scale {
                // confirm at the iterate itself
                let grad = &gram * &theta - &gtb;
                let again = project(&(&theta - &grad * step));
                if (&theta - &again).norm() * lipschitz <= opts.tol * scale {
                    converged = true;
                    break;
                }
            }
        }
        if !converged {
            let grad = &gram * &theta - &gtb;
            let again = project(&(&theta - &grad * step));
            return Err(Error::ReducedSolveStalled {
                iterations,
                residual: (&theta - &again).norm() * lipschitz / scale,
            });
        }
    }

    let (s, core) = unpack(&theta);
    let x = &bundle.w * s + &bundle.p * &core * bundle.p.transpose();
    let x = crate::linalg::symmetrize(&x);
    let residual = (op.apply(&Point::Matrix(x.clone()))? - b).norm();
    Ok(PrimalSolution {
        objective: x.trace(),
        x: Point::Matrix(x),
        factors: Factors::Spectral {
            s,
            w: bundle.w.clone(),
            basis: bundle.p.clone(),
            core,
        },
        residual,
        iterations,
    })
}

/// Rank of the recovered point against the multiplicity of `λ_max(M* y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Complementarity {
    pub rank: usize,
    pub multiplicity: usize,
}

impl Complementarity {
    pub fn strict(&self) -> bool {
        self.rank == self.multiplicity
    }
}

/// Eigenvalues of `x` above `1e-6 λ_max(x)` count toward its rank;
/// eigenvalues of `z = M* y` within `1e-6` (relative) of `λ_max(z)` toward
/// the multiplicity.
pub fn complementarity(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Complementarity {
    let ex = sym_eigen(x);
    let top = ex.max_value().max(0.0);
    let rank = ex.values.iter().filter(|&&l| top > 0.0 && l > 1e-6 * top).count();
    let ez = sym_eigen(z);
    let lead = ez.max_value();
    let multiplicity = ez
        .values
        .iter()
        .filter(|&&l| l >= lead - 1e-6 * lead.abs().max(1e-300))
        .count();
    Complementarity { rank, multiplicity }
}
