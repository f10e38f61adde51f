//! Euclidean projections onto intersections of convex sets.
//!
//! Two routes are provided. [`project_polyhedron`] solves the projection
//! onto a finite intersection of halfspaces exactly with a dual active-set
//! method (Goldfarb-Idnani specialized to an identity Hessian).
//! [`dykstra`] runs Dykstra's alternating projections over any list of
//! [`ConvexSet`]s that each know their own projector.

use nalgebra::{DMatrix, DVector};

/// `{y : <normal, y> <= offset}`, stored with a unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    normal: DVector<f64>,
    offset: f64,
}

impl Halfspace {
    /// `None` when the normal vanishes (the set is all of space or empty).
    pub fn new(normal: DVector<f64>, offset: f64) -> Option<Self> {
        let norm = normal.norm();
        if !(norm > 1e-300) || !norm.is_finite() {
            return None;
        }
        Some(Self {
            normal: normal / norm,
            offset: offset / norm,
        })
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Signed distance `<normal, y> - offset`; positive when violated.
    pub fn violation(&self, y: &DVector<f64>) -> f64 {
        self.normal.dot(y) - self.offset
    }

    pub fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        let v = self.violation(y);
        if v <= 0.0 {
            y.clone()
        } else {
            y - &self.normal * v
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolyProjection {
    pub point: DVector<f64>,
    /// Multiplier for every input halfspace (zero when inactive).
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolyProjectionError {
    /// The halfspaces have empty intersection.
    Infeasible { violated: usize },
    IterationLimit { violation: f64 },
}

/// Projects `center` onto the intersection of `halfspaces`.
///
/// Constraints are added one at a time, most violated first, keeping the
/// working set linearly independent; the iterate stays dual feasible and
/// primal feasibility is reached in finitely many steps.
pub fn project_polyhedron(
    center: &DVector<f64>,
    halfspaces: &[Halfspace],
    tol: f64,
) -> Result<PolyProjection, PolyProjectionError> {
    let mut y = center.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let max_iters = 50 * (halfspaces.len() + 1) + 100;
    let mut iterations = 0;

    loop {
        // most violated constraint outside the working set
        let mut worst: Option<(usize, f64)> = None;
        for (i, h) in halfspaces.iter().enumerate() {
            if active.contains(&i) {
                continue;
            }
            let v = h.violation(&y);
            if v > tol && worst.is_none_or(|(_, wv)| v > wv) {
                worst = Some((i, v));
            }
        }
        let Some((p, _)) = worst else { break };
        let np = halfspaces[p].normal();
        let mut u_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iters {
                return Err(PolyProjectionError::IterationLimit {
                    violation: halfspaces[p].violation(&y),
                });
            }
            let (z, r) = step_direction(halfspaces, &active, np);
            let zz = z.norm_squared();
            let viol = halfspaces[p].violation(&y);

            // dual step bound: first working multiplier to hit zero
            let mut partial: Option<(usize, f64)> = None;
            for (j, &rj) in r.iter().enumerate() {
                if rj > 1e-14 {
                    let t = mult[j] / rj;
                    if partial.is_none_or(|(_, pt)| t < pt) {
                        partial = Some((j, t));
                    }
                }
            }
            let full = if zz > 1e-24 { Some(viol / zz) } else { None };

            match (full, partial) {
                (None, None) => return Err(PolyProjectionError::Infeasible { violated: p }),
                (None, Some((j, t))) => {
                    for (m, rj) in mult.iter_mut().zip(r.iter()) {
                        *m -= t * rj;
                    }
                    u_p += t;
                    active.remove(j);
                    mult.remove(j);
                }
                (Some(tf), partial) => {
                    let (t, drop) = match partial {
                        Some((j, tp)) if tp < tf => (tp, Some(j)),
                        _ => (tf, None),
                    };
                    y.axpy(-t, &z, 1.0);
                    for (m, rj) in mult.iter_mut().zip(r.iter()) {
                        *m -= t * rj;
                    }
                    u_p += t;
                    match drop {
                        Some(j) => {
                            active.remove(j);
                            mult.remove(j);
                        }
                        None => {
                            active.push(p);
                            mult.push(u_p);
                            break;
                        }
                    }
                }
            }
        }
    }

    let mut multipliers = vec![0.0; halfspaces.len()];
    for (&i, &m) in active.iter().zip(mult.iter()) {
        multipliers[i] = m.max(0.0);
    }
    Ok(PolyProjection {
        point: y,
        multipliers,
        iterations,
    })
}

/// Primal direction `z = (I - N (NᵀN)⁻¹ Nᵀ) n_p` and dual direction
/// `r = (NᵀN)⁻¹ Nᵀ n_p` for working-set normals `N`.
fn step_direction(halfspaces: &[Halfspace], active: &[usize], np: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    if active.is_empty() {
        return (np.clone(), DVector::zeros(0));
    }
    let n = DMatrix::from_columns(&active.iter().map(|&i| halfspaces[i].normal().clone()).collect::<Vec<_>>());
    let gram = n.tr_mul(&n);
    let rhs = n.tr_mul(np);
    let r = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .pseudo_inverse(1e-13)
            .map(|pinv| pinv * &rhs)
            .unwrap_or_else(|_| DVector::zeros(active.len())),
    };
    let z = np - &n * &r;
    (z, r)
}

/// A closed convex set with a Euclidean projector.
pub trait ConvexSet {
    fn project(&self, y: &DVector<f64>) -> DVector<f64>;

    /// Distance-like infeasibility; zero on the set.
    fn infeasibility(&self, y: &DVector<f64>) -> f64;
}

impl ConvexSet for Halfspace {
    fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        Halfspace::project(self, y)
    }

    fn infeasibility(&self, y: &DVector<f64>) -> f64 {
        self.violation(y).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DykstraResult {
    pub point: DVector<f64>,
    pub iterations: usize,
    /// Largest set infeasibility at the returned point.
    pub infeasibility: f64,
    pub converged: bool,
}

/// Dykstra's alternating projection of `center` onto `∩ sets`.
///
/// Stops when every set's infeasibility is at most `tol` and a full sweep
/// moves the iterate by at most `tol`, or after `max_sweeps` sweeps.
pub fn dykstra(center: &DVector<f64>, sets: &[&dyn ConvexSet], tol: f64, max_sweeps: usize) -> DykstraResult {
    let mut x = center.clone();
    if sets.is_empty() {
        return DykstraResult {
            point: x,
            iterations: 0,
            infeasibility: 0.0,
            converged: true,
        };
    }
    let mut increments: Vec<DVector<f64>> = vec![DVector::zeros(center.len()); sets.len()];
    let mut sweeps = 0;
    loop {
        let before = x.clone();
        for (set, inc) in sets.iter().zip(increments.iter_mut()) {
            let shifted = &x + &*inc;
            let projected = set.project(&shifted);
            *inc = shifted - &projected;
            x = projected;
        }
        sweeps += 1;
        let moved = (&x - &before).norm();
        let infeasibility = sets.iter().map(|s| s.infeasibility(&x)).fold(0.0, f64::max);
        if (infeasibility <= tol && moved <= tol) || sweeps >= max_sweeps {
            return DykstraResult {
                point: x,
                iterations: sweeps,
                infeasibility,
                converged: infeasibility <= tol && moved <= tol,
            };
        }
    }
}
