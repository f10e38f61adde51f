//! Level bundle method on the gauge dual
//!
//! ```text
//! minimize σ_A(M* y)  subject to  y ∈ B'
//! ```
//!
//! with a known optimal value `d*`. Each iterate is the projection of the
//! fixed center `ŷ = y¹` onto `L ∩ H ∩ B'`, where `L` is the `d*`-level set
//! of the current cutting-plane model and `H` is the halfspace
//! `{y : <y - yᵏ, ŷ - yᵏ> <= 0}`. The model itself is pluggable through
//! [`BundleModel`]; see [`crate::poly`] and [`crate::spectral`].

use web_time::Instant;

use nalgebra::DVector;

use crate::atoms::{Antipolar, Atom, AtomicSet};
use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::linops::{Operator, Point};
use crate::projection::{dykstra, project_polyhedron, ConvexSet, Halfspace, PolyProjectionError};

/// A cutting-plane model `σ_{A^(k)}` of the support function, built from an
/// inner approximation `A^(k) ⊆ conv A`.
pub trait BundleModel: Clone {
    /// `σ_{A^(k)}(z)`; never exceeds `σ_A(z)`.
    fn value(&self, z: &Point) -> Result<f64>;

    /// Number of stored atoms or basis columns.
    fn size(&self) -> usize;

    /// True when [`BundleModel::level_cuts`] returns the exact description
    /// of the level set regardless of the linearization point.
    fn is_polyhedral(&self) -> bool;

    /// Halfspaces in measurement space containing `{y : σ_{A^(k)}(M* y) <= level}`,
    /// tight at `y` (or the full description for polyhedral models).
    fn level_cuts(&self, op: &Operator, y: &DVector<f64>, level: f64) -> Result<Vec<Halfspace>>;

    /// Resets the bundle from the exposed face at the first iterate.
    fn reinitialize(&mut self, set: &AtomicSet, z1: &Point) -> Result<()>;

    /// Whether the reduced primal problem over this bundle is feasible.
    /// Only consulted when [`SolverConfig::require_recoverable`] is set.
    fn recoverable(&self, _problem: &ProblemInstance) -> Result<bool> {
        Ok(true)
    }

    /// Bundle update at `z_next = M* y^{k+1}`. `exposed` is an atom of the
    /// full set exposed by `z_next`, or `None` when none exists.
    fn update(&mut self, set: &AtomicSet, z_next: &Point, exposed: Option<&Atom>, params: &UpdateParams) -> Result<()>;
}

/// Tolerances handed to [`BundleModel::update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateParams {
    /// Relaxation `δ` of the retained model face.
    pub trim: f64,
    /// Atoms of the full set within this of `σ_A(z_next)` count as exposed.
    pub face_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMethod {
    /// Exact dual active-set projection onto the polyhedral part, with
    /// outer linearization of curved constraints.
    ActiveSet,
    /// Dykstra's alternating projections over `{H, B', L}`.
    Dykstra,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stopping tolerance on the gap `U - d*`.
    pub delta: f64,
    pub d_star: f64,
    pub max_iterations: usize,
    /// Constraint residual accepted from the level-set projection.
    pub projection_tol: f64,
    pub projection_max_iters: usize,
    /// Relaxation used when trimming the bundle; defaults to `delta`.
    pub trim_delta: Option<f64>,
    /// Floor (relative to `max(1, d*)`) applied to the trim relaxation, so
    /// atoms active at the projected iterate up to rounding are kept.
    pub face_tol: f64,
    pub projection: ProjectionMethod,
    /// Also require [`BundleModel::recoverable`] before stopping on the gap.
    pub require_recoverable: bool,
}

impl SolverConfig {
    pub fn new(delta: f64, d_star: f64) -> Self {
        Self {
            delta,
            d_star,
            max_iterations: 1000,
            projection_tol: 1e-9,
            projection_max_iters: 5000,
            trim_delta: None,
            face_tol: 1e-9,
            projection: ProjectionMethod::ActiveSet,
            require_recoverable: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(Error::Config(format!("delta must be nonnegative, got {}", self.delta)));
        }
        if !(self.d_star > 0.0) || !self.d_star.is_finite() {
            return Err(Error::Config(format!("d* must be positive, got {}", self.d_star)));
        }
        if self.d_star <= self.delta {
            return Err(Error::Config(format!(
                "d* = {} must exceed delta = {}",
                self.d_star, self.delta
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.projection_tol > 0.0) {
            return Err(Error::Config("projection tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_trim(&self) -> f64 {
        self.trim_delta
            .unwrap_or(self.delta)
            .max(self.face_tol * self.d_star.max(1.0))
    }

    /// Gap accepted as optimal: `delta`, but never below what the level-set
    /// projection can resolve.
    pub fn effective_gap_tol(&self) -> f64 {
        self.delta.max(10.0 * self.projection_tol * self.d_star.max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Model value `σ_{A^(k-1)}(M* yᵏ)` of the model that produced `yᵏ`.
    pub model_value: f64,
    /// True support value `σ_A(M* yᵏ)`.
    pub support_value: f64,
    pub upper_bound: f64,
    pub gap: f64,
    pub bundle_size: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelState {
    pub iterate: DVector<f64>,
    pub center: DVector<f64>,
    pub upper_bound: f64,
    pub gap: f64,
    pub iteration: usize,
    /// Iterate attaining the current upper bound.
    pub best_iterate: DVector<f64>,
    /// Whether the supplied starting point had to be projected onto `B'`.
    pub start_adjusted: bool,
    pub converged: bool,
    pub trace: Vec<TraceRecord>,
}

/// Callbacks emitted while a run progresses.
pub enum RunEvent<'a, B> {
    Trace(&'a TraceRecord),
    /// Bundle update from `before` to `after` at `z_next = M* y^{k+1}`.
    Update {
        iteration: usize,
        iterate: &'a DVector<f64>,
        z_next: &'a Point,
        exposed: Option<&'a Atom>,
        before: &'a B,
        after: &'a B,
    },
}

pub fn upper_bound_and_gap(upper_bound: f64, new_support_value: f64, d_star: f64) -> (f64, f64) {
    let u = upper_bound.min(new_support_value);
    (u, u - d_star)
}

/// Runs the level bundle method until the gap drops to `config.delta` or
/// the iteration budget runs out.
pub fn run<B: BundleModel>(
    problem: &ProblemInstance,
    model: B,
    config: &SolverConfig,
    y1: Option<DVector<f64>>,
) -> Result<(B, LevelState)> {
    run_with_observer(problem, model, config, y1, |_| {})
}

pub fn run_with_observer<B: BundleModel>(
    problem: &ProblemInstance,
    mut model: B,
    config: &SolverConfig,
    y1: Option<DVector<f64>>,
    mut observer: impl FnMut(RunEvent<'_, B>),
) -> Result<(B, LevelState)> {
    config.validate()?;
    let start = Instant::now();
    let op = &problem.operator;
    let set = &problem.atoms;
    let antipolar = &problem.antipolar;

    let mut start_adjusted = false;
    let y1 = match y1 {
        Some(y) => {
            if y.len() != op.rows() {
                return Err(crate::error::shape_err(
                    format!("vector of length {}", op.rows()),
                    format!("vector of length {}", y.len()),
                ));
            }
            if antipolar.residual(&y) < 0.0 {
                start_adjusted = true;
                antipolar.project(&y)
            } else {
                y
            }
        }
        None => antipolar.default_start(),
    };

    let z1 = op.adjoint(&y1)?;
    model.reinitialize(set, &z1)?;

    let gap_tol = config.effective_gap_tol();
    let params = UpdateParams {
        trim: config.effective_trim(),
        face_tol: config.face_tol * config.d_star.max(1.0),
    };
    let mut state = LevelState {
        iterate: y1.clone(),
        center: y1.clone(),
        upper_bound: f64::INFINITY,
        gap: f64::INFINITY,
        iteration: 1,
        best_iterate: y1.clone(),
        start_adjusted,
        converged: false,
        trace: Vec::new(),
    };
    let mut z = z1;
    let mut model_value = model.value(&z)?;

    loop {
        let support = set.support_value(&z)?;
        let (u, gap) = upper_bound_and_gap(state.upper_bound, support, config.d_star);
        if u < state.upper_bound {
            state.best_iterate = state.iterate.clone();
        }
        state.upper_bound = u;
        state.gap = gap;
        let record = TraceRecord {
            iteration: state.iteration,
            model_value,
            support_value: support,
            upper_bound: u,
            gap,
            bundle_size: model.size(),
            seconds: start.elapsed().as_secs_f64(),
        };
        observer(RunEvent::Trace(&record));
        state.trace.push(record);

        if gap <= gap_tol && (!config.require_recoverable || model.recoverable(problem)?) {
            state.converged = true;
            break;
        }
        if state.iteration >= config.max_iterations {
            break;
        }

        let next = project_onto_level_set(&state.center, &state.iterate, &model, antipolar, op, config.d_star, config)?;
        let z_next = op.adjoint(&next)?;
        model_value = model.value(&z_next)?;
        let exposed = match set.exposed_atom(&z_next) {
            Ok(a) => Some(a),
            Err(Error::NoExposedAtom { .. }) => None,
            Err(e) => return Err(e),
        };
        let before = model.clone();
        model.update(set, &z_next, exposed.as_ref(), &params)?;
        observer(RunEvent::Update {
            iteration: state.iteration,
            iterate: &next,
            z_next: &z_next,
            exposed: exposed.as_ref(),
            before: &before,
            after: &model,
        });
        state.iterate = next;
        state.iteration += 1;
        z = z_next;
    }
    Ok((model, state))
}

/// `H = {y : <y - current, center - current> <= 0}`; `None` when
/// `center == current` (then `H` is the whole space).
pub fn center_halfspace(center: &DVector<f64>, current: &DVector<f64>) -> Option<Halfspace> {
    let normal = center - current;
    let offset = normal.dot(current);
    Halfspace::new(normal, offset)
}

/// Projection of `center` onto `L ∩ H ∩ B'`, where `L = {y : σ_model(M* y) <= d*}`.
pub fn project_onto_level_set<B: BundleModel>(
    center: &DVector<f64>,
    current: &DVector<f64>,
    model: &B,
    antipolar: &Antipolar,
    op: &Operator,
    d_star: f64,
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    match config.projection {
        ProjectionMethod::ActiveSet => project_active_set(center, current, model, antipolar, op, d_star, config),
        ProjectionMethod::Dykstra => project_dykstra(center, current, model, antipolar, op, d_star, config),
    }
}

struct LevelProjector<'a, B> {
    model: &'a B,
    op: &'a Operator,
    antipolar: &'a Antipolar,
    d_star: f64,
    tol: f64,
    max_iters: usize,
}

impl<B: BundleModel> LevelProjector<'_, B> {
    fn level_residual(&self, y: &DVector<f64>) -> Result<f64> {
        Ok(self.model.value(&self.op.adjoint(y)?)? - self.d_star)
    }

    /// Projects onto `fixed ∩ L (∩ B' if include_antipolar)` by cutting planes
    /// over curved constraints.
    fn project(
        &self,
        center: &DVector<f64>,
        fixed: &[Halfspace],
        seed: &DVector<f64>,
        include_antipolar: bool,
    ) -> Result<DVector<f64>> {
        let scale = self.d_star.max(1.0);
        let curved_antipolar = include_antipolar && self.antipolar.eps() > 0.0;
        let mut cuts: Vec<Halfspace> = fixed.to_vec();
        if include_antipolar && self.antipolar.eps() == 0.0 {
            let (n, o) = self.antipolar.linearization(seed);
            cuts.extend(Halfspace::new(n, o));
        }
        cuts.extend(self.model.level_cuts(self.op, seed, self.d_star)?);
        if curved_antipolar {
            let anchor = self.antipolar.project(center);
            let (n, o) = self.antipolar.linearization(&anchor);
            cuts.extend(Halfspace::new(n, o));
        }

        let mut last_residual = f64::INFINITY;
        for it in 1..=self.max_iters {
            let y = match project_polyhedron(center, &cuts, 0.01 * self.tol) {
                Ok(p) => p.point,
                Err(PolyProjectionError::Infeasible { .. }) => {
                    return Err(Error::InfeasibleLevelSet {
                        iterations: it,
                        residual: last_residual,
                        reason: "polyhedral relaxation of the level set is empty".into(),
                    })
                }
                Err(PolyProjectionError::IterationLimit { violation }) => {
                    return Err(Error::InfeasibleLevelSet {
                        iterations: it,
                        residual: violation,
                        reason: "active-set projection hit its iteration limit".into(),
                    })
                }
            };
            let level_res = if self.model.is_polyhedral() {
                0.0
            } else {
                self.level_residual(&y)?
            };
            let anti_res = if curved_antipolar { -self.antipolar.residual(&y) } else { 0.0 };
            last_residual = level_res.max(anti_res);
            if level_res <= self.tol * scale && anti_res <= self.tol {
                return Ok(y);
            }
            if level_res > self.tol * scale {
                cuts.extend(self.model.level_cuts(self.op, &y, self.d_star)?);
            }
            if anti_res > self.tol {
                let (n, o) = self.antipolar.linearization(&y);
                cuts.extend(Halfspace::new(n, o));
            }
        }
        Err(Error::InfeasibleLevelSet {
            iterations: self.max_iters,
            residual: last_residual,
            reason: "outer linearization did not reach the residual tolerance".into(),
        })
    }
}

fn project_active_set<B: BundleModel>(
    center: &DVector<f64>,
    current: &DVector<f64>,
    model: &B,
    antipolar: &Antipolar,
    op: &Operator,
    d_star: f64,
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    let projector = LevelProjector {
        model,
        op,
        antipolar,
        d_star,
        tol: config.projection_tol,
        max_iters: config.projection_max_iters,
    };
    let fixed: Vec<Halfspace> = center_halfspace(center, current).into_iter().collect();
    projector.project(center, &fixed, current, true)
}

impl ConvexSet for Antipolar {
    fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        Antipolar::project(self, y)
    }

    fn infeasibility(&self, y: &DVector<f64>) -> f64 {
        (-self.residual(y)).max(0.0)
    }
}

struct LevelSet<'a, B> {
    projector: LevelProjector<'a, B>,
}

impl<B: BundleModel> ConvexSet for LevelSet<'_, B> {
    fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        // On failure keep the point; Dykstra then reports nonconvergence.
        self.projector.project(y, &[], y, false).unwrap_or_else(|_| y.clone())
    }

    fn infeasibility(&self, y: &DVector<f64>) -> f64 {
        self.projector
            .level_residual(y)
            .map(|r| r.max(0.0) / self.projector.d_star.max(1.0))
            .unwrap_or(f64::INFINITY)
    }
}

fn project_dykstra<B: BundleModel>(
    center: &DVector<f64>,
    current: &DVector<f64>,
    model: &B,
    antipolar: &Antipolar,
    op: &Operator,
    d_star: f64,
    config: &SolverConfig,
) -> Result<DVector<f64>> {
    let h = center_halfspace(center, current);
    let level_cuts;
    let level_set;
    let mut sets: Vec<&dyn ConvexSet> = Vec::new();
    if let Some(h) = h.as_ref() {
        sets.push(h);
    }
    sets.push(antipolar);
    if model.is_polyhedral() {
        level_cuts = model.level_cuts(op, current, d_star)?;
        sets.extend(level_cuts.iter().map(|c| c as &dyn ConvexSet));
    } else {
        level_set = LevelSet {
            projector: LevelProjector {
                model,
                op,
                antipolar,
                d_star,
                tol: 0.1 * config.projection_tol,
                max_iters: config.projection_max_iters,
            },
        };
        sets.push(&level_set);
    }
    let out = dykstra(center, &sets, config.projection_tol, config.projection_max_iters);
    if !out.converged {
        return Err(Error::InfeasibleLevelSet {
            iterations: out.iterations,
            residual: out.infeasibility,
            reason: "Dykstra iteration stalled".into(),
        });
    }
    Ok(out.point)
}
