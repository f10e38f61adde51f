//! Polyhedral bundle model for finite atomic sets.
//!
//! The cutting-plane model of a support function built from subgradients
//! `a¹, ..., aᵏ` is the support function of the finite set `{a¹, ..., aᵏ}`,
//! so the bundle is just a list of atoms. Updates keep the atoms within
//! `δ` of the model maximum at the new iterate plus one newly exposed atom
//! of the full set.
//!
//! Stage two solves the reduced problem
//!
//! ```text
//! minimize Σ c_j  subject to  ||Σ c_j M a_j - b|| <= ε,  c >= 0
//! ```
//!
//! over the bundle's atoms.

use nalgebra::{DMatrix, DVector};

use crate::atoms::{relaxed_exposed_face, Atom, AtomFamily, AtomicSet, PolyAtom};
use crate::bundle::{BundleModel, UpdateParams};
use crate::error::{shape_err, Error, Result};
use crate::instance::ProblemInstance;
use crate::linops::{Operator, Point};
use crate::projection::Halfspace;
use crate::solution::{Factors, PrimalSolution};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolyBundle {
    atoms: Vec<PolyAtom>,
}

impl PolyBundle {
    pub fn new(atoms: Vec<PolyAtom>) -> Self {
        let mut out = Self { atoms: Vec::with_capacity(atoms.len()) };
        for a in atoms {
            out.insert(a);
        }
        out
    }

    pub fn atoms(&self) -> &[PolyAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains(&self, atom: &PolyAtom) -> bool {
        self.atoms.contains(atom)
    }

    fn insert(&mut self, atom: PolyAtom) {
        if !self.atoms.contains(&atom) {
            self.atoms.push(atom);
        }
    }

    /// Whether every atom is a member of `set`.
    pub fn belongs_to(&self, set: &AtomicSet) -> bool {
        self.atoms.iter().all(|a| {
            a.index < set.dim
                && match set.family {
                    AtomFamily::SignedBasis => a.sign == 1 || a.sign == -1,
                    AtomFamily::NonnegBasis => a.sign == 1,
                    AtomFamily::SpectralPsd => false,
                }
        })
    }

    /// Atoms attaining the model value at `z` exactly.
    pub fn exact_face(&self, z: &DVector<f64>) -> Result<Vec<PolyAtom>> {
        let v = poly_model_value(self, z)?;
        Ok(relaxed_exposed_face(&self.atoms, z, v, 0.0))
    }
}

/// `max_j <a_j, z>` over the stored atoms.
pub fn poly_model_value(bundle: &PolyBundle, z: &DVector<f64>) -> Result<f64> {
    if bundle.is_empty() {
        return Err(Error::EmptyBundle);
    }
    if let Some(a) = bundle.atoms.iter().find(|a| a.index >= z.len()) {
        return Err(shape_err(format!("vector with index {}", a.index), format!("length {}", z.len())));
    }
    Ok(bundle.atoms.iter().map(|a| a.dot(z)).fold(f64::NEG_INFINITY, f64::max))
}

/// Relaxed-face update: keep stored atoms within `delta` of the model value
/// at `z_next`, then add the atom of `full_set` exposed by `z_next`.
///
/// When `z_next` exposes no atom the update keeps only the relaxed face.
pub fn poly_bundle_update(
    bundle: &PolyBundle,
    z_next: &DVector<f64>,
    delta: f64,
    full_set: &AtomicSet,
) -> Result<PolyBundle> {
    let exposed = match full_set.exposed_atom(&Point::Vector(z_next.clone())) {
        Ok(Atom::Poly(a)) => Some(a),
        Ok(Atom::Spectral(_)) => return Err(shape_err("polyhedral atomic set", "spectral atom")),
        Err(Error::NoExposedAtom { .. }) => None,
        Err(e) => return Err(e),
    };
    update_with(bundle, z_next, delta, exposed)
}

/// Like [`poly_bundle_update`], but adds every atom of `full_set` within
/// `face_tol` of `σ_A(z_next)` instead of a single exposed atom. The
/// result still contains the retained face and one exposed atom, and it
/// also picks up support atoms that tie with the chosen one up to rounding.
pub fn poly_bundle_update_with_face(
    bundle: &PolyBundle,
    z_next: &DVector<f64>,
    delta: f64,
    full_set: &AtomicSet,
    face_tol: f64,
) -> Result<PolyBundle> {
    let mut out = poly_bundle_update(bundle, z_next, delta, full_set)?;
    for a in full_set.exposed_face(z_next, face_tol) {
        out.insert(a);
    }
    Ok(out)
}

fn update_with(bundle: &PolyBundle, z_next: &DVector<f64>, delta: f64, exposed: Option<PolyAtom>) -> Result<PolyBundle> {
    let model = poly_model_value(bundle, z_next)?;
    let mut out = PolyBundle::new(relaxed_exposed_face(&bundle.atoms, z_next, model, delta));
    if let Some(a) = exposed {
        out.insert(a);
    }
    Ok(out)
}

impl BundleModel for PolyBundle {
    fn value(&self, z: &Point) -> Result<f64> {
        poly_model_value(self, z.as_vector()?)
    }

    fn size(&self) -> usize {
        self.len()
    }

    fn is_polyhedral(&self) -> bool {
        true
    }

    fn level_cuts(&self, op: &Operator, _y: &DVector<f64>, level: f64) -> Result<Vec<Halfspace>> {
        // <a, M* y> <= level  <=>  <M a, y> <= level
        let mut cuts = Vec::with_capacity(self.len());
        for a in &self.atoms {
            let normal = match op {
                Operator::Dense(d) => d.matrix().column(a.index) * f64::from(a.sign),
                _ => op.apply(&Point::Vector(a.to_vector(op.primal_dim())))?,
            };
            cuts.extend(Halfspace::new(normal, level));
        }
        Ok(cuts)
    }

    fn reinitialize(&mut self, set: &AtomicSet, z1: &Point) -> Result<()> {
        match set.exposed_atom(z1)? {
            Atom::Poly(a) => {
                self.atoms = vec![a];
                Ok(())
            }
            Atom::Spectral(_) => Err(shape_err("polyhedral atomic set", "spectral atom")),
        }
    }

    fn recoverable(&self, problem: &ProblemInstance) -> Result<bool> {
        if self.is_empty() {
            return Ok(false);
        }
        let opts = RecoveryOptions::default();
        let b = problem.b();
        let (_, residual) = restricted_least_squares(&self.atoms, problem)?;
        Ok(residual <= problem.eps() + opts.feasibility_tol * b.norm().max(1.0))
    }

    fn update(&mut self, set: &AtomicSet, z_next: &Point, exposed: Option<&Atom>, params: &UpdateParams) -> Result<()> {
        let exposed = match exposed {
            Some(Atom::Poly(a)) => Some(*a),
            Some(Atom::Spectral(_)) => return Err(shape_err("polyhedral atom", "spectral atom")),
            None => None,
        };
        let z = z_next.as_vector()?;
        let mut next = update_with(self, z, params.trim, exposed)?;
        for a in set.exposed_face(z, params.face_tol) {
            next.insert(a);
        }
        *self = next;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryOptions {
    /// Coefficients at or below this are dropped from the reported support.
    pub coefficient_tol: f64,
    /// Feasibility tolerance relative to `max(1, ||b||)`.
    pub feasibility_tol: f64,
    /// Relative duality gap accepted as optimal.
    pub gap_tol: f64,
    pub max_iterations: usize,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            coefficient_tol: 1e-10,
            feasibility_tol: 1e-8,
            gap_tol: 1e-8,
            max_iterations: 200_000,
        }
    }
}

/// Solves the reduced problem over the atoms of `bundle`.
pub fn recover_primal_poly(bundle: &PolyBundle, problem: &ProblemInstance, tol: f64) -> Result<PrimalSolution> {
    let opts = RecoveryOptions {
        coefficient_tol: tol,
        ..RecoveryOptions::default()
    };
    solve_restricted(bundle.atoms(), problem, &opts)
}

/// The full-dimensional problem `min ||x||₁ s.t. ||Mx - b|| <= ε` solved
/// over all `2n` signed atoms.
pub fn reference_l1_solve(problem: &ProblemInstance) -> Result<PrimalSolution> {
    let n = problem.atoms.dim;
    let atoms: Vec<PolyAtom> = (0..n).flat_map(|i| [PolyAtom::positive(i), PolyAtom::negative(i)]).collect();
    let opts = RecoveryOptions {
        coefficient_tol: 1e-12,
        ..RecoveryOptions::default()
    };
    solve_restricted(&atoms, problem, &opts)
}

fn atom_columns(atoms: &[PolyAtom], op: &Operator) -> Result<DMatrix<f64>> {
    let m = op.rows();
    let mut cols = DMatrix::zeros(m, atoms.len());
    for (j, a) in atoms.iter().enumerate() {
        let col = match op {
            Operator::Dense(d) => d.matrix().column(a.index) * f64::from(a.sign),
            _ => op.apply(&Point::Vector(a.to_vector(op.primal_dim())))?,
        };
        cols.set_column(j, &col);
    }
    Ok(cols)
}

fn project_ball(u: &DVector<f64>, b: &DVector<f64>, eps: f64) -> DVector<f64> {
    let d = u - b;
    let nd = d.norm();
    if nd <= eps {
        u.clone()
    } else {
        b + d * (eps / nd)
    }
}

struct Candidate {
    c: DVector<f64>,
    objective: f64,
    residual: f64,
}

/// `min 1ᵀc  s.t. ||A c - b|| <= ε, c >= 0`.
/// Nonnegative least squares over the atoms' images; returns the
/// coefficients and `||M x - b||`.
fn restricted_least_squares(atoms: &[PolyAtom], problem: &ProblemInstance) -> Result<(DVector<f64>, f64)> {
    let a = atom_columns(atoms, &problem.operator)?;
    let ls = nnls(&a, problem.b());
    let res = (&a * &ls - problem.b()).norm();
    Ok((ls, res))
}

fn solve_restricted(atoms: &[PolyAtom], problem: &ProblemInstance, opts: &RecoveryOptions) -> Result<PrimalSolution> {
    if atoms.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let a = atom_columns(atoms, &problem.operator)?;
    let b = problem.b();
    let eps = problem.eps();
    let feas = opts.feasibility_tol * b.norm().max(1.0);

    let ls = nnls(&a, b);
    let ls_res = (&a * &ls - b).norm();
    if ls_res > eps + feas {
        return Err(Error::RecoveryInfeasible {
            residual: ls_res,
            target: eps,
        });
    }

    let (best, iterations) = primal_dual(&a, b, eps, &ls, opts);
    let n = problem.atoms.dim;
    let mut x = DVector::zeros(n);
    let mut kept_atoms = Vec::new();
    let mut weights = Vec::new();
    for (j, atom) in atoms.iter().enumerate() {
        let cj = best.c[j];
        if cj > opts.coefficient_tol {
            x[atom.index] += f64::from(atom.sign) * cj;
            kept_atoms.push(*atom);
            weights.push(cj);
        }
    }
    let objective = weights.iter().sum();
    let residual = (problem.operator.apply(&Point::Vector(x.clone()))? - b).norm();
    Ok(PrimalSolution {
        x: Point::Vector(x),
        factors: Factors::Atoms {
            atoms: kept_atoms,
            weights,
        },
        objective,
        residual,
        iterations,
    })
}

/// Chambolle-Pock on `min 1ᵀc + ι_{c>=0} + ι_{||·-b||<=ε}(A c)`, polishing
/// on the detected support whenever it stabilizes.
fn primal_dual(a: &DMatrix<f64>, b: &DVector<f64>, eps: f64, start: &DVector<f64>, opts: &RecoveryOptions) -> (Candidate, usize) {
    let k = a.ncols();
    let feas = opts.feasibility_tol * b.norm().max(1.0);
    let op_norm = a.clone().singular_values().max().max(1e-12);
    let tau = 0.95 / op_norm;
    let sigma = 0.95 / op_norm;

    let mut c = start.clone();
    let mut c_bar = c.clone();
    let mut w = DVector::zeros(b.len());
    let mut best: Option<Candidate> = None;
    let mut last_support: Vec<usize> = Vec::new();
    let check_every = 50;

    let consider = |cand: Candidate, best: &mut Option<Candidate>| {
        if cand.residual <= eps + feas
            && cand.c.iter().all(|&v| v >= 0.0)
            && best.as_ref().is_none_or(|bst| cand.objective < bst.objective)
        {
            *best = Some(cand);
        }
    };

    // the starting point is feasible; it bounds the optimum from above
    consider(candidate(a, b, start.clone()), &mut best);
    if let Some(p) = polish(a, b, eps, &support_of(start)) {
        consider(p, &mut best);
    }

    let mut it = 0;
    while it < opts.max_iterations {
        it += 1;
        let v = &w + (a * &c_bar) * sigma;
        let w_next = &v - project_ball(&(&v / sigma), b, eps) * sigma;
        let grad = a.tr_mul(&w_next);
        let c_next = (&c - (grad + DVector::from_element(k, 1.0)) * tau).map(|t| t.max(0.0));
        c_bar = &c_next * 2.0 - &c;
        c = c_next;
        w = w_next;

        if it % check_every == 0 {
            let support = support_of(&c);
            if support != last_support && !support.is_empty() {
                if let Some(p) = polish(a, b, eps, &support) {
                    consider(p, &mut best);
                }
                last_support = support;
            }
            // dual certificate: y = -w scaled to satisfy Aᵀy <= 1
            let y = -&w;
            let worst = a.tr_mul(&y).max();
            if worst > 0.0 {
                let y = y / worst.max(1e-300);
                let dual = b.dot(&y) - eps * y.norm();
                if let Some(bst) = &best {
                    if bst.objective - dual <= opts.gap_tol * bst.objective.abs().max(1.0) {
                        return (best.unwrap(), it);
                    }
                }
            }
            consider(candidate(a, b, c.clone()), &mut best);
        }
    }
    (best.expect("feasible start is always a candidate"), it)
}

fn candidate(a: &DMatrix<f64>, b: &DVector<f64>, c: DVector<f64>) -> Candidate {
    let residual = (a * &c - b).norm();
    Candidate {
        objective: c.sum(),
        residual,
        c,
    }
}

fn support_of(c: &DVector<f64>) -> Vec<usize> {
    let scale = c.amax();
    if scale == 0.0 {
        return Vec::new();
    }
    (0..c.len()).filter(|&j| c[j] > 1e-7 * scale).collect()
}

/// Exact minimizer restricted to `support`, when it is nonnegative.
fn polish(a: &DMatrix<f64>, b: &DVector<f64>, eps: f64, support: &[usize]) -> Option<Candidate> {
    if support.is_empty() || support.len() > a.nrows() {
        return None;
    }
    let at = DMatrix::from_columns(&support.iter().map(|&j| a.column(j).into_owned()).collect::<Vec<_>>());
    let gram = at.tr_mul(&at);
    let chol = gram.cholesky()?;
    let c_ls = chol.solve(&at.tr_mul(b));
    let r0 = (&at * &c_ls - b).norm();
    let c_t = if eps == 0.0 {
        c_ls
    } else {
        if r0 > eps {
            return None;
        }
        let ones = DVector::from_element(support.len(), 1.0);
        let g1 = chol.solve(&ones);
        let denom = ones.dot(&g1);
        if denom <= 0.0 {
            return None;
        }
        let lambda = ((eps * eps - r0 * r0).max(0.0) / denom).sqrt();
        c_ls - g1 * lambda
    };
    if c_t.iter().any(|&v| v < 0.0) {
        return None;
    }
    let mut c = DVector::zeros(a.ncols());
    for (&j, &v) in support.iter().zip(c_t.iter()) {
        c[j] = v;
    }
    Some(candidate(a, b, c))
}

/// Lawson-Hanson nonnegative least squares `min_{c >= 0} ||A c - b||`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let k = a.ncols();
    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    let tol = 1e-12 * a.norm().max(1.0) * b.norm().max(1.0);
    let max_outer = 3 * k + 10;

    for _ in 0..max_outer {
        let w = a.tr_mul(&(b - a * &x));
        let mut pick: Option<(usize, f64)> = None;
        for j in 0..k {
            if !passive[j] && w[j] > tol && pick.is_none_or(|(_, v)| w[j] > v) {
                pick = Some((j, w[j]));
            }
        }
        let Some((j, _)) = pick else { break };
        passive[j] = true;

        loop {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let z_p = lstsq_columns(a, b, &idx);
            if idx.iter().zip(z_p.iter()).all(|(_, &v)| v > 0.0) {
                x.fill(0.0);
                for (&i, &v) in idx.iter().zip(z_p.iter()) {
                    x[i] = v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (&i, &zi) in idx.iter().zip(z_p.iter()) {
                if zi <= 0.0 {
                    let t = x[i] / (x[i] - zi);
                    alpha = alpha.min(t);
                }
            }
            let mut z = DVector::zeros(k);
            for (&i, &v) in idx.iter().zip(z_p.iter()) {
                z[i] = v;
            }
            x = &x + (z - &x) * alpha;
            for &i in &idx {
                if x[i] <= 1e-15 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    x
}

fn lstsq_columns(a: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let sub = DMatrix::from_columns(&idx.iter().map(|&j| a.column(j).into_owned()).collect::<Vec<_>>());
    let svd = sub.svd(true, true);
    svd.solve(b, 1e-13).unwrap_or_else(|_| DVector::zeros(idx.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::Antipolar;
    use crate::linops::DenseOperator;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn model_values() {
        let b1 = PolyBundle::new(vec![PolyAtom::positive(0)]);
        assert_eq!(poly_model_value(&b1, &v(&[3.0, -5.0])).unwrap(), 3.0);
        let b2 = PolyBundle::new(vec![PolyAtom::positive(0), PolyAtom::negative(1)]);
        assert_eq!(poly_model_value(&b2, &v(&[3.0, -5.0])).unwrap(), 5.0);
        assert!(matches!(
            poly_model_value(&PolyBundle::default(), &v(&[1.0])),
            Err(Error::EmptyBundle)
        ));
    }

    #[test]
    fn update_examples() {
        let set = AtomicSet::signed_basis(2);
        let bundle = PolyBundle::new(vec![PolyAtom::positive(0), PolyAtom::positive(1)]);
        let out = poly_bundle_update(&bundle, &v(&[1.0, 0.2]), 0.01, &set).unwrap();
        assert_eq!(out.atoms(), &[PolyAtom::positive(0)]);

        let bundle = PolyBundle::new(vec![PolyAtom::positive(0)]);
        let out = poly_bundle_update(&bundle, &v(&[0.5, 2.0]), 0.0, &set).unwrap();
        assert_eq!(out.atoms(), &[PolyAtom::positive(0), PolyAtom::positive(1)]);

        let bundle = PolyBundle::new(vec![PolyAtom::positive(0), PolyAtom::negative(1)]);
        let out = poly_bundle_update(&bundle, &v(&[0.1, 3.0]), 1e6, &set).unwrap();
        assert_eq!(
            out.atoms(),
            &[PolyAtom::positive(0), PolyAtom::negative(1), PolyAtom::positive(1)]
        );
    }

    #[test]
    fn degenerate_update_keeps_face() {
        let set = AtomicSet::signed_basis(2);
        let bundle = PolyBundle::new(vec![PolyAtom::positive(0)]);
        let out = poly_bundle_update(&bundle, &v(&[0.0, 0.0]), 0.0, &set).unwrap();
        assert_eq!(out.atoms(), &[PolyAtom::positive(0)]);
    }

    #[test]
    fn nnls_matches_known_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = v(&[1.0, -1.0, 0.0]);
        let x = nnls(&a, &b);
        // y-coordinate clamps to zero; x minimizes (x-1)^2 + x^2
        assert!((x - v(&[0.5, 0.0])).norm() < 1e-12);
    }

    fn identity_problem(x0: &[f64]) -> ProblemInstance {
        let n = x0.len();
        ProblemInstance {
            operator: Operator::Dense(DenseOperator::identity(n)),
            atoms: AtomicSet::signed_basis(n),
            antipolar: Antipolar::new(v(x0), 0.0).unwrap(),
            ground_truth: Some(Point::Vector(v(x0))),
            d_star: 1.0 / v(x0).lp_norm(1),
            seed: 0,
        }
    }

    #[test]
    fn identity_recovery_is_exact() {
        let problem = identity_problem(&[2.0, 0.0, -0.5]);
        let bundle = PolyBundle::new(vec![PolyAtom::positive(0), PolyAtom::negative(2)]);
        let sol = recover_primal_poly(&bundle, &problem, 1e-10).unwrap();
        assert!((sol.x.as_vector().unwrap() - v(&[2.0, 0.0, -0.5])).norm() < 1e-14);
        assert!((sol.objective - 2.5).abs() < 1e-12);
        assert_eq!(sol.reconstruct(), sol.x);
    }

    #[test]
    fn missing_atom_is_infeasible() {
        let problem = identity_problem(&[2.0, 0.0, -0.5]);
        let bundle = PolyBundle::new(vec![PolyAtom::positive(0)]);
        assert!(matches!(
            recover_primal_poly(&bundle, &problem, 1e-10),
            Err(Error::RecoveryInfeasible { .. })
        ));
    }

    #[test]
    fn noisy_identity_recovery_shrinks() {
        // min ||x||_1 s.t. ||x - b|| <= eps with b = (3, 0): x = (3 - eps, 0)
        let mut problem = identity_problem(&[3.0, 0.0]);
        problem.antipolar = Antipolar::new(v(&[3.0, 0.0]), 0.5).unwrap();
        let sol = reference_l1_solve(&problem).unwrap();
        assert!((sol.objective - 2.5).abs() < 1e-8, "{}", sol.objective);
    }
}
