//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON string; failures come back as
//! `{"error": "..."}` instead of a thrown exception.

use atomic_pursuit::linalg::sym_eigen;
use atomic_pursuit::poly::recover_primal_poly;
use atomic_pursuit::spectral::{complementarity, enriched_bundle, recover_primal_spectral};
use atomic_pursuit::{
    generate_bpdn, generate_phase, run, Antipolar, LevelState, PolyBundle, SolverConfig, SpectralBundle,
};
use nalgebra::DVector;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_BPDN_DIM: usize = 512;
const MAX_PHASE_DIM: usize = 32;

type Vec2 = [f64; 2];

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

#[derive(Serialize)]
struct TracePoint {
    iter: usize,
    upper_bound: f64,
    model_value: f64,
    support_value: f64,
    gap: f64,
    bundle_size: usize,
}

#[derive(Serialize)]
struct SignedIndex {
    index: usize,
    sign: i8,
}

#[derive(Serialize)]
pub struct BpdnReport {
    d_star: f64,
    converged: bool,
    iterations: usize,
    gap: f64,
    trace: Vec<TracePoint>,
    truth: Vec<f64>,
    recovered: Option<Vec<f64>>,
    bundle: Vec<SignedIndex>,
    relative_error: Option<f64>,
    recovery_error: Option<String>,
}

#[derive(Serialize)]
pub struct PhaseReport {
    converged: bool,
    iterations: usize,
    gap: f64,
    trace: Vec<TracePoint>,
    /// Unit ground-truth signal.
    truth: Vec<f64>,
    /// Leading eigenvector of the recovered matrix scaled by the square
    /// root of its eigenvalue, sign-matched to `truth`.
    recovered: Vec<f64>,
    relative_error: f64,
    rank: usize,
    multiplicity: usize,
    basis_size: usize,
}

#[derive(Serialize)]
pub struct ProjectionReport {
    point: Vec2,
    projected: Vec2,
    residual_before: f64,
    residual_after: f64,
}

fn trace_points(state: &LevelState) -> Vec<TracePoint> {
    state
        .trace
        .iter()
        .map(|r| TracePoint {
            iter: r.iteration,
            upper_bound: r.upper_bound,
            model_value: r.model_value,
            support_value: r.support_value,
            gap: r.gap,
            bundle_size: r.bundle_size,
        })
        .collect()
}

fn config(delta: f64, d_star: f64, max_iterations: usize) -> SolverConfig {
    let mut c = SolverConfig::new(delta, d_star);
    c.max_iterations = max_iterations;
    c
}

pub fn bpdn_report(n: usize, m: usize, k: usize, eps: f64, delta: f64, seed: u64) -> Result<BpdnReport, String> {
    if n > MAX_BPDN_DIM {
        return Err(format!("n is capped at {MAX_BPDN_DIM} in the demo"));
    }
    let problem = generate_bpdn(n, m, k, eps, seed).map_err(|e| e.to_string())?;
    let mut cfg = config(delta, problem.d_star, 2000);
    cfg.require_recoverable = true;
    let (bundle, state) = run(&problem, PolyBundle::default(), &cfg, None).map_err(|e| e.to_string())?;
    let truth = problem.ground_truth.as_ref().and_then(|p| p.as_vector().ok()).cloned().unwrap_or_default();
    let (recovered, relative_error, recovery_error) = match recover_primal_poly(&bundle, &problem, 1e-10) {
        Ok(sol) => {
            let x = sol.x.as_vector().map_err(|e| e.to_string())?.clone();
            let err = (&x - &truth).norm() / truth.norm();
            (Some(to_vec(&x)), Some(err), None)
        }
        Err(e) => (None, None, Some(e.to_string())),
    };
    Ok(BpdnReport {
        d_star: problem.d_star,
        converged: state.converged,
        iterations: state.iteration,
        gap: state.gap,
        trace: trace_points(&state),
        truth: to_vec(&truth),
        recovered,
        bundle: bundle
            .atoms()
            .iter()
            .map(|a| SignedIndex { index: a.index, sign: a.sign })
            .collect(),
        relative_error,
        recovery_error,
    })
}

pub fn phase_report(n: usize, m: usize, delta: f64, seed: u64) -> Result<PhaseReport, String> {
    if n > MAX_PHASE_DIM {
        return Err(format!("n is capped at {MAX_PHASE_DIM} in the demo"));
    }
    let problem = generate_phase(n, m, seed).map_err(|e| e.to_string())?;
    let cfg = config(delta, problem.d_star, 20_000);
    let (bundle, state) = run(&problem, SpectralBundle::empty(n, 10), &cfg, None).map_err(|e| e.to_string())?;
    let rich = enriched_bundle(&bundle, &problem, &state.best_iterate, 2).map_err(|e| e.to_string())?;
    let sol = recover_primal_spectral(&rich, &problem, 1e-9).map_err(|e| e.to_string())?;
    let x = sol.x.as_matrix().map_err(|e| e.to_string())?;
    let x0 = problem
        .ground_truth
        .as_ref()
        .and_then(|p| p.as_matrix().ok())
        .ok_or("phase instance without ground truth")?;
    let truth = sym_eigen(x0).leading_vector();
    let eig = sym_eigen(x);
    let mut lead = eig.leading_vector() * eig.max_value().max(0.0).sqrt();
    if lead.dot(&truth) < 0.0 {
        lead = -lead;
    }
    let z = problem.operator.adjoint(&state.best_iterate).map_err(|e| e.to_string())?;
    let comp = complementarity(x, z.as_matrix().map_err(|e| e.to_string())?);
    Ok(PhaseReport {
        converged: state.converged,
        iterations: state.iteration,
        gap: state.gap,
        trace: trace_points(&state),
        truth: to_vec(&truth),
        recovered: to_vec(&lead),
        relative_error: (x - x0).norm() / x0.norm(),
        rank: comp.rank,
        multiplicity: comp.multiplicity,
        basis_size: rich.rank(),
    })
}

/// Projection of `(px, py)` onto `{y : <b, y> - eps ||y|| >= 1}` in the plane.
pub fn projection_report(bx: f64, by: f64, eps: f64, px: f64, py: f64) -> Result<ProjectionReport, String> {
    let ap = Antipolar::new(DVector::from_vec(vec![bx, by]), eps).map_err(|e| e.to_string())?;
    let y = DVector::from_vec(vec![px, py]);
    let p = ap.project(&y);
    Ok(ProjectionReport {
        point: [px, py],
        projected: [p[0], p[1]],
        residual_before: ap.residual(&y),
        residual_after: ap.residual(&p),
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    let value = match r {
        Ok(v) => serde_json::to_value(v).map_err(|e| e.to_string()),
        Err(e) => Err(e),
    };
    match value {
        Ok(v) => v.to_string(),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[wasm_bindgen]
pub fn solve_bpdn(n: usize, m: usize, k: usize, eps: f64, delta: f64, seed: u32) -> String {
    to_json(bpdn_report(n, m, k, eps, delta, u64::from(seed)))
}

#[wasm_bindgen]
pub fn solve_phase(n: usize, m: usize, delta: f64, seed: u32) -> String {
    to_json(phase_report(n, m, delta, u64::from(seed)))
}

#[wasm_bindgen]
pub fn project_antipolar(bx: f64, by: f64, eps: f64, px: f64, py: f64) -> String {
    to_json(projection_report(bx, by, eps, px, py))
}
