use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use atomic_pursuit::poly::recover_primal_poly;
use atomic_pursuit::spectral::{complementarity, enriched_bundle, recover_primal_spectral};
use atomic_pursuit::{
    generate_bpdn, generate_phase, run, BundleModel, LevelState, Point, PolyBundle, PrimalSolution, ProblemInstance,
    SolverConfig, SpectralBundle, TraceRecord,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, Kind};

const SPECTRAL_MAX_RANK: usize = 10;
/// Leading eigenvectors of `M* y` added to the spectral basis before recovery.
const RECOVERY_EXTRA_DIRECTIONS: usize = 2;
const RECOVERY_TOL: f64 = 1e-10;

#[derive(Debug, Serialize)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub d_star: f64,
    pub converged: bool,
    pub final_gap: f64,
    pub upper_bound: f64,
    pub iterations: usize,
    pub bundle_size: usize,
    pub recovery: Option<Recovery>,
    pub duality: Option<Duality>,
    pub complementarity: Option<ComplementarityReport>,
    pub error: Option<String>,
    pub success: bool,
    pub timestamp: u64,
}

#[derive(Debug, Serialize)]
pub struct Recovery {
    pub objective: f64,
    pub residual: f64,
    pub atoms: usize,
    /// `||x - x0|| / ||x0||` when a ground truth is known.
    pub relative_error: Option<f64>,
}

/// Values of `1 <= <x, M* y> <= γ(x) σ(M* y)` at the best iterate.
#[derive(Debug, Serialize)]
pub struct Duality {
    pub inner_product: f64,
    pub gauge: f64,
    pub support: f64,
    pub product: f64,
}

#[derive(Debug, Serialize)]
pub struct ComplementarityReport {
    pub rank: usize,
    pub multiplicity: usize,
    pub strict: bool,
}

pub struct Outcome {
    pub dir: PathBuf,
    pub result: RunResult,
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<ProblemInstance> {
    let problem = match cfg.kind {
        Kind::Bpdn => generate_bpdn(cfg.n, cfg.m, cfg.sparsity, cfg.eps, cfg.seed)?,
        Kind::Phase => generate_phase(cfg.n, cfg.m, cfg.seed)?,
    };
    Ok(match cfg.d_star {
        Some(d) => problem.with_d_star(d),
        None => problem,
    })
}

/// Runs one experiment and writes `trace.csv` and `result.json` into
/// `dir`. Solver errors are recorded in the result file.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<Outcome> {
    cfg.validate()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let problem = build_instance(cfg)?;
    let mut solver = SolverConfig::new(cfg.delta, problem.d_star);
    solver.max_iterations = cfg.max_iters;
    solver.require_recoverable = cfg.stop_on_recoverable;

    let mut result = RunResult {
        config: cfg.clone(),
        d_star: problem.d_star,
        converged: false,
        final_gap: f64::NAN,
        upper_bound: f64::NAN,
        iterations: 0,
        bundle_size: 0,
        recovery: None,
        duality: None,
        complementarity: None,
        error: None,
        success: false,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };

    let outcome = match cfg.kind {
        Kind::Bpdn => solve(&problem, PolyBundle::default(), &solver, |b, _| recover_primal_poly(b, &problem, RECOVERY_TOL)),
        Kind::Phase => solve(&problem, SpectralBundle::empty(cfg.n, SPECTRAL_MAX_RANK), &solver, |b, state| {
            let rich = enriched_bundle(b, &problem, &state.best_iterate, RECOVERY_EXTRA_DIRECTIONS)?;
            recover_primal_spectral(&rich, &problem, 1e-9)
        }),
    };

    let mut trace: &[TraceRecord] = &[];
    match &outcome {
        Err(e) => result.error = Some(e.to_string()),
        Ok((size, state, recovered)) => {
            trace = &state.trace;
            result.converged = state.converged;
            result.final_gap = state.gap;
            result.upper_bound = state.upper_bound;
            result.iterations = state.iteration;
            result.bundle_size = *size;
            match recovered {
                Ok(sol) => {
                    let (recovery, duality, comp) = summarize(&problem, state, sol)?;
                    result.recovery = Some(recovery);
                    result.duality = Some(duality);
                    result.complementarity = comp;
                }
                Err(e) => result.error = Some(format!("recovery failed: {e}")),
            }
            if !state.converged && result.error.is_none() {
                result.error = Some(format!(
                    "gap {:e} above delta {:e} after {} iterations",
                    state.gap, cfg.delta, state.iteration
                ));
            }
        }
    }
    result.success = result.converged && result.recovery.is_some() && result.error.is_none();

    write_trace(&dir.join("trace.csv"), trace, cfg.no_timing)?;
    let json = serde_json::to_string_pretty(&result)?;
    fs::write(dir.join("result.json"), json + "\n").with_context(|| format!("writing {}", dir.display()))?;
    Ok(Outcome {
        dir: dir.to_path_buf(),
        result,
    })
}

type Solved = (usize, LevelState, atomic_pursuit::Result<PrimalSolution>);

fn solve<B: BundleModel>(
    problem: &ProblemInstance,
    model: B,
    solver: &SolverConfig,
    recover: impl FnOnce(&B, &LevelState) -> atomic_pursuit::Result<PrimalSolution>,
) -> atomic_pursuit::Result<Solved> {
    let (bundle, state) = run(problem, model, solver, None)?;
    let recovered = recover(&bundle, &state);
    Ok((bundle.size(), state, recovered))
}

fn summarize(
    problem: &ProblemInstance,
    state: &LevelState,
    sol: &PrimalSolution,
) -> Result<(Recovery, Duality, Option<ComplementarityReport>)> {
    let relative_error = problem.ground_truth.as_ref().map(|x0| {
        let diff = match (&sol.x, x0) {
            (Point::Vector(a), Point::Vector(b)) => (a - b).norm(),
            (Point::Matrix(a), Point::Matrix(b)) => (a - b).norm(),
            _ => f64::NAN,
        };
        diff / x0.norm()
    });
    let atoms = match &sol.factors {
        atomic_pursuit::Factors::Atoms { atoms, .. } => atoms.len(),
        atomic_pursuit::Factors::Spectral { basis, .. } => basis.ncols(),
    };
    let z = problem.operator.adjoint(&state.best_iterate)?;
    let inner = sol.x.dot(&z)?;
    let gauge = problem.atoms.gauge_value(&sol.x)?;
    let support = problem.atoms.support_value(&z)?;
    let comp = match (&sol.x, &z) {
        (Point::Matrix(x), Point::Matrix(zm)) => {
            let c = complementarity(x, zm);
            Some(ComplementarityReport {
                rank: c.rank,
                multiplicity: c.multiplicity,
                strict: c.strict(),
            })
        }
        _ => None,
    };
    Ok((
        Recovery {
            objective: sol.objective,
            residual: sol.residual,
            atoms,
            relative_error,
        },
        Duality {
            inner_product: inner,
            gauge,
            support,
            product: gauge * support,
        },
        comp,
    ))
}

#[derive(Serialize)]
struct TraceRow {
    iter: usize,
    model_value: f64,
    support_value: f64,
    upper_bound: f64,
    gap: f64,
    bundle_size: usize,
    seconds: f64,
}

pub fn write_trace(path: &Path, trace: &[TraceRecord], no_timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    if trace.is_empty() {
        w.write_record(["iter", "model_value", "support_value", "upper_bound", "gap", "bundle_size", "seconds"])?;
    }
    for r in trace {
        w.serialize(TraceRow {
            iter: r.iteration,
            model_value: r.model_value,
            support_value: r.support_value,
            upper_bound: r.upper_bound,
            gap: r.gap,
            bundle_size: r.bundle_size,
            seconds: if no_timing { 0.0 } else { r.seconds },
        })?;
    }
    w.flush()?;
    Ok(())
}
