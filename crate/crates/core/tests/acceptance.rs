//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

mod common;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use atomic_pursuit::atoms::relaxed_exposed_face;
use atomic_pursuit::bundle::project_onto_level_set;
use atomic_pursuit::poly::{poly_model_value, recover_primal_poly};
use atomic_pursuit::spectral::{enriched_bundle, recover_primal_spectral, spectral_exposed_element, spectral_model_value};
use atomic_pursuit::instance::{gaussian_matrix, gaussian_vector, rng_from_seed};
use atomic_pursuit::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const TRACE_TOL_FEAS: f64 = 1e-7;
const TRACE_TOL_MODEL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
    elapsed: Duration,
    limit: Duration,
}

impl Outcome {
    fn within_budget(&self) -> bool {
        self.elapsed <= self.limit
    }
}

/// Trace and bundle checks shared by criteria 7 and 9.
#[derive(Default)]
struct Audit {
    runs: usize,
    trace_failures: Vec<String>,
    spectral_bundles: usize,
    poly_bundles: usize,
    bundle_failures: Vec<String>,
}

impl Audit {
    fn record_state(&mut self, label: &str, problem: &ProblemInstance, state: &LevelState) {
        self.runs += 1;
        let mut prev = f64::INFINITY;
        for r in &state.trace {
            if r.upper_bound > prev {
                self.trace_failures.push(format!("{label}: U rose at iteration {}", r.iteration));
            }
            prev = r.upper_bound;
            if r.model_value > r.support_value + TRACE_TOL_MODEL {
                self.trace_failures.push(format!(
                    "{label}: model {} above support {} at iteration {}",
                    r.model_value, r.support_value, r.iteration
                ));
            }
        }
        for y in [&state.center, &state.iterate, &state.best_iterate] {
            self.check_feasible(label, problem, y);
        }
    }

    fn check_feasible(&mut self, label: &str, problem: &ProblemInstance, y: &DVector<f64>) {
        let res = problem.antipolar.residual(y);
        if res < -TRACE_TOL_FEAS {
            self.trace_failures.push(format!("{label}: antipolar residual {res}"));
        }
    }

    fn observe_poly(&mut self, label: &str, problem: &ProblemInstance, delta: f64, event: RunEvent<'_, PolyBundle>) {
        if let RunEvent::Update {
            iterate,
            z_next,
            exposed,
            before,
            after,
            ..
        } = event
        {
            self.check_feasible(label, problem, iterate);
            self.poly_bundles += 1;
            let z = z_next.as_vector().unwrap();
            let model = poly_model_value(before, z).unwrap();
            let mut required = relaxed_exposed_face(before.atoms(), z, model, delta);
            if let Some(Atom::Poly(a)) = exposed {
                required.push(*a);
            }
            if let Some(missing) = required.iter().find(|a| !after.contains(a)) {
                self.bundle_failures.push(format!("{label}: atom {missing:?} dropped"));
            }
            if !after.belongs_to(&problem.atoms) {
                self.bundle_failures.push(format!("{label}: atom outside the atomic set"));
            }
        }
    }

    fn observe_spectral(&mut self, label: &str, problem: &ProblemInstance, event: RunEvent<'_, SpectralBundle>) {
        if let RunEvent::Update { iterate, after, .. } = event {
            self.check_feasible(label, problem, iterate);
            self.spectral_bundles += 1;
            let inv = after.invariants();
            if !(inv.trace_w <= 1.0 + 1e-9 && inv.min_eig_w >= -1e-9 && inv.orthogonality_error <= 1e-10) {
                self.bundle_failures.push(format!("{label}: {inv:?}"));
            }
        }
    }
}

fn solve_poly(
    audit: &mut Audit,
    label: &str,
    problem: &ProblemInstance,
    delta: f64,
) -> (PolyBundle, LevelState) {
    solve_poly_with(audit, label, problem, delta, false)
}

fn solve_poly_with(
    audit: &mut Audit,
    label: &str,
    problem: &ProblemInstance,
    delta: f64,
    require_recoverable: bool,
) -> (PolyBundle, LevelState) {
    let mut cfg = SolverConfig::new(delta, problem.d_star);
    cfg.max_iterations = 5000;
    cfg.require_recoverable = require_recoverable;
    let (bundle, state) = run_with_observer(problem, PolyBundle::default(), &cfg, None, |e| {
        audit.observe_poly(label, problem, delta, e)
    })
    .unwrap_or_else(|e| panic!("{label}: {e}"));
    audit.record_state(label, problem, &state);
    (bundle, state)
}

fn solve_spectral(audit: &mut Audit, label: &str, problem: &ProblemInstance, delta: f64) -> (SpectralBundle, LevelState) {
    let mut cfg = SolverConfig::new(delta, problem.d_star);
    cfg.max_iterations = 20_000;
    let n = problem.atoms.dim;
    let (bundle, state) = run_with_observer(problem, SpectralBundle::empty(n, 10), &cfg, None, |e| {
        audit.observe_spectral(label, problem, e)
    })
    .unwrap_or_else(|e| panic!("{label}: {e}"));
    audit.record_state(label, problem, &state);
    (bundle, state)
}

fn dense(problem: &ProblemInstance) -> &DMatrix<f64> {
    match &problem.operator {
        Operator::Dense(d) => d.matrix(),
        Operator::RankOne(_) => panic!("expected a dense operator"),
    }
}

fn signed_support(x: &DVector<f64>, tol: f64) -> Vec<PolyAtom> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > tol)
        .map(|(i, &v)| if v > 0.0 { PolyAtom::positive(i) } else { PolyAtom::negative(i) })
        .collect()
}

fn timed(limit_secs: u64, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    Outcome {
        pass,
        detail,
        elapsed: start.elapsed(),
        limit: Duration::from_secs(limit_secs),
    }
}

fn criterion_sandwich(audit: &mut Audit) -> (bool, String) {
    let mut worst_lower: f64 = 0.0;
    let mut worst_upper: f64 = 0.0;
    let mut worst_eq: f64 = 0.0;
    for seed in 0..20 {
        let label = format!("sandwich seed {seed}");
        let problem = generate_bpdn(64, 32, 4, 0.0, seed).unwrap();
        let (bundle, state) = solve_poly(audit, &label, &problem, 1e-6);
        let sol = match recover_primal_poly(&bundle, &problem, 1e-10) {
            Ok(s) => s,
            Err(e) => return (false, format!("{label}: recovery failed: {e}")),
        };
        let y = &state.best_iterate;
        let z = problem.operator.adjoint(y).unwrap();
        let inner = sol.x.dot(&z).unwrap();
        let gauge = problem.atoms.gauge_value(&sol.x).unwrap();
        let support = problem.atoms.support_value(&z).unwrap();
        let product = gauge * support;
        worst_lower = worst_lower.max(1.0 - inner);
        worst_upper = worst_upper.max((inner - product) / product.abs().max(1.0));
        worst_eq = worst_eq.max((inner - 1.0).abs()).max((product - 1.0).abs());
    }
    let pass = worst_lower <= 1e-6 && worst_upper <= 1e-6 && worst_eq <= 1e-4;
    (
        pass,
        format!("20 runs; max(1-<x,M*y>) {worst_lower:.2e}, max upper violation {worst_upper:.2e}, max |·-1| {worst_eq:.2e}"),
    )
}

fn criterion_cutting_plane() -> (bool, String) {
    let mut rng = rng_from_seed(2);
    let n = 10;
    let mut mismatches = 0;
    for _ in 0..100 {
        let size = rng.random_range(1..=8);
        let atoms: Vec<PolyAtom> = (0..size)
            .map(|_| PolyAtom::new(rng.random_range(0..n), if rng.random_bool(0.5) { 1 } else { -1 }))
            .collect();
        let bundle = PolyBundle::new(atoms.clone());
        for _ in 0..100 {
            let z = gaussian_vector(&mut rng, n);
            let brute = atoms
                .iter()
                .map(|a| a.to_vector(n).dot(&z))
                .fold(f64::NEG_INFINITY, f64::max);
            if poly_model_value(&bundle, &z).unwrap() != brute {
                mismatches += 1;
            }
        }
    }
    (mismatches == 0, format!("10000 evaluations, {mismatches} mismatches"))
}

fn random_spectral_bundle(rng: &mut impl Rng, n: usize) -> SpectralBundle {
    let r = rng.random_range(0..=4);
    let p = if r == 0 {
        DMatrix::zeros(n, 0)
    } else {
        gaussian_matrix(rng, n, r, 1.0).qr().q().columns(0, r).into_owned()
    };
    let w = if rng.random_bool(0.3) {
        DMatrix::zeros(n, n)
    } else {
        let g = gaussian_matrix(rng, n, 3, 1.0);
        let w = &g * g.transpose();
        let t = w.trace();
        w * (rng.random_range(0.2..=1.0) / t)
    };
    SpectralBundle::new(w, p, 10).unwrap()
}

fn criterion_spectral_model() -> (bool, String) {
    let n = 12;
    let mut rng = rng_from_seed(3);
    let mut worst_slack = f64::INFINITY;
    let mut worst_attain: f64 = 0.0;
    for _ in 0..50 {
        let bundle = random_spectral_bundle(&mut rng, n);
        let r = bundle.rank();
        let g = gaussian_matrix(&mut rng, n, n, 1.0);
        let z = (&g + g.transpose()) * 0.5;
        let value = spectral_model_value(&bundle, &z).unwrap();
        let p = bundle.basis();
        let w = bundle.aggregate();
        for _ in 0..1000 {
            // α W + P S Pᵀ with α >= 0, S ⪰ 0, α + trace S <= 1
            let k = rng.random_range(1..=r.max(1));
            let h = gaussian_matrix(&mut rng, r, k, 1.0);
            let s = &h * h.transpose();
            let alpha: f64 = rng.random_range(0.0..1.0);
            let total = alpha + s.trace();
            let budget: f64 = rng.random_range(0.0..=1.0);
            let scale = if total > 0.0 { budget / total } else { 0.0 };
            let elem = w * (alpha * scale) + p * (s * scale) * p.transpose();
            let inner = elem.dot(&z);
            worst_slack = worst_slack.min(value - inner);
        }
        let exposed = spectral_exposed_element(&bundle, &z).unwrap();
        let elem = w * exposed.alpha + p * &exposed.v * p.transpose();
        worst_attain = worst_attain.max((elem.dot(&z) - value).abs());
    }
    let pass = worst_slack >= -1e-9 && worst_attain <= 1e-9;
    (
        pass,
        format!("50 bundles x 1000 samples; min slack {worst_slack:.2e}, attainment error {worst_attain:.2e}"),
    )
}

fn criterion_suboptimality(audit: &mut Audit) -> (bool, String) {
    let mut worst_margin = f64::INFINITY;
    let mut failures = Vec::new();
    let mut gap_only_infeasible = 0;
    for seed in 100..110 {
        let base = generate_bpdn(32, 16, 3, 0.0, seed).unwrap();
        let x_star = common::l1_simplex(dense(&base), base.b()).expect("oracle LP solve");
        let opt = x_star.lp_norm(1);
        let problem = base.with_d_star(1.0 / opt);
        let d = problem.d_star;
        for delta in [1e-2, 1e-3, 1e-4] {
            let label = format!("bound seed {seed} delta {delta:e}");
            let (gap_only, _) = solve_poly(audit, &label, &problem, delta);
            if recover_primal_poly(&gap_only, &problem, 1e-10).is_err() {
                gap_only_infeasible += 1;
            }
            let (bundle, _) = solve_poly_with(audit, &label, &problem, delta, true);
            match recover_primal_poly(&bundle, &problem, 1e-10) {
                Ok(sol) => {
                    let excess = problem.atoms.gauge_value(&sol.x).unwrap() - opt;
                    let bound = delta / (d * (d - delta));
                    let margin = bound + 1e-9 - excess;
                    worst_margin = worst_margin.min(margin);
                    if margin < 0.0 {
                        failures.push(format!("{label}: excess {excess:.3e} > bound {bound:.3e}"));
                    }
                }
                Err(e) => failures.push(format!("{label}: {e}")),
            }
        }
    }
    let detail = if failures.is_empty() {
        format!(
            "30 runs stopped on gap and recoverable bundle; min slack to bound {worst_margin:.3e} \
             ({gap_only_infeasible}/30 gap-only stops left an infeasible reduced problem)"
        )
    } else {
        failures.join("; ")
    };
    (failures.is_empty(), detail)
}

fn criterion_exact_support(audit: &mut Audit) -> (bool, String) {
    let mut failures = Vec::new();
    let mut supports = 0;
    for seed in 200..210 {
        let base = generate_bpdn(12, 8, 2, 0.0, seed).unwrap();
        let (opt, solutions) = common::l1_exhaustive(dense(&base), base.b());
        let problem = base.with_d_star(1.0 / opt);
        let label = format!("support seed {seed}");
        let (bundle, _) = solve_poly(audit, &label, &problem, 0.0);
        for x in &solutions {
            supports += 1;
            let s = signed_support(x, 1e-9);
            if let Some(a) = s.iter().find(|a| !bundle.contains(a)) {
                failures.push(format!("{label}: oracle atom {a:?} missing from {:?}", bundle.atoms()));
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("10 runs, {supports} oracle support sets contained")
    } else {
        failures.join("; ")
    };
    (failures.is_empty(), detail)
}

fn criterion_projection() -> (bool, String) {
    let mut rng = rng_from_seed(6);
    let mut worst: f64 = 0.0;
    let mut disagreements = Vec::new();
    let mut feasible = 0;
    for case in 0..50 {
        let m = rng.random_range(2..=4);
        let n = rng.random_range(2..=5);
        let mat = gaussian_matrix(&mut rng, m, n, 1.0);
        let b = gaussian_vector(&mut rng, m);
        let problem_atoms = AtomicSet::signed_basis(n);
        let antipolar = Antipolar::new(b.clone(), 0.0).unwrap();
        let op = Operator::Dense(DenseOperator::new(mat.clone()));
        let level = rng.random_range(0.2..1.5);
        // 1 or 2 model atoms; the centre halfspace is dropped half the time
        let size = rng.random_range(1..=2);
        let atoms: Vec<PolyAtom> = (0..size)
            .map(|_| PolyAtom::new(rng.random_range(0..n), if rng.random_bool(0.5) { 1 } else { -1 }))
            .collect();
        let model = PolyBundle::new(atoms.clone());
        let center = gaussian_vector(&mut rng, m);
        let current = if size == 2 || rng.random_bool(0.5) {
            center.clone()
        } else {
            gaussian_vector(&mut rng, m)
        };
        debug_assert!(problem_atoms.is_polyhedral());

        let mut g = vec![-b.clone()];
        let mut h = vec![-1.0];
        for a in model.atoms() {
            g.push(mat.column(a.index) * f64::from(a.sign));
            h.push(level);
        }
        if current != center {
            let normal = &center - &current;
            h.push(normal.dot(&current));
            g.push(normal);
        }
        let oracle = common::brute_force_projection(&center, &g, &h);
        let cfg = SolverConfig::new(0.0, level);
        let ours = project_onto_level_set(&center, &current, &model, &antipolar, &op, level, &cfg);
        match (oracle, ours) {
            (Some(o), Ok(y)) => {
                feasible += 1;
                worst = worst.max((o - y).norm());
            }
            (None, Err(_)) => {}
            (o, y) => disagreements.push(format!(
                "case {case}: oracle {} vs solver {}",
                if o.is_some() { "feasible" } else { "empty" },
                match y {
                    Ok(_) => "point".to_string(),
                    Err(e) => e.to_string(),
                }
            )),
        }
    }
    let pass = disagreements.is_empty() && worst <= 1e-6;
    let mut detail = format!("50 cases ({feasible} nonempty); max distance {worst:.2e}");
    if !disagreements.is_empty() {
        let _ = write!(detail, "; {}", disagreements.join("; "));
    }
    (pass, detail)
}

const PHASE_DELTAS: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];

fn phase_error(audit: &mut Audit, problem: &ProblemInstance, delta: f64) -> f64 {
    let label = format!("phase delta {delta:e}");
    let (bundle, state) = solve_spectral(audit, &label, problem, delta);
    let rich = enriched_bundle(&bundle, problem, &state.best_iterate, 2).unwrap();
    let sol = recover_primal_spectral(&rich, problem, 1e-9).unwrap();
    let x0 = problem.ground_truth.as_ref().unwrap().as_matrix().unwrap();
    (sol.x.as_matrix().unwrap() - x0).norm() / x0.norm()
}

fn criterion_spectral_scaling(audit: &mut Audit) -> (bool, String) {
    let problem = generate_phase(16, 96, 0).unwrap();
    let errors: Vec<f64> = PHASE_DELTAS.iter().map(|&d| phase_error(audit, &problem, d)).collect();
    let xs: Vec<f64> = PHASE_DELTAS.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let last = errors[errors.len() - 1];
    let pass = (0.3..=0.7).contains(&slope) && last <= 1e-2;
    let list: Vec<String> = errors.iter().map(|e| format!("{e:.3e}")).collect();
    (pass, format!("errors [{}], slope {slope:.3}", list.join(", ")))
}

fn trace_fingerprint(state: &LevelState) -> String {
    let mut out = String::new();
    for r in &state.trace {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{}",
            r.iteration, r.model_value, r.support_value, r.upper_bound, r.gap, r.bundle_size
        );
    }
    for v in state.iterate.iter() {
        let _ = write!(out, "{:016x}", v.to_bits());
    }
    out
}

fn criterion_reproducible() -> (bool, String) {
    let mut scratch = Audit::default();
    let mut mismatches = Vec::new();
    let mut compared = 0;
    let mut compare = |label: &str, a: String, b: String| {
        compared += 1;
        if a != b {
            mismatches.push(label.to_string());
        }
    };
    for seed in [0, 7] {
        let once = || {
            let p = generate_bpdn(64, 32, 4, 0.0, seed).unwrap();
            trace_fingerprint(&solve_poly(&mut Audit::default(), "repeat", &p, 1e-6).1)
        };
        compare(&format!("bpdn seed {seed}"), once(), once());
    }
    let once = || {
        let base = generate_bpdn(12, 8, 2, 0.0, 203).unwrap();
        let (opt, _) = common::l1_exhaustive(dense(&base), base.b());
        trace_fingerprint(&solve_poly(&mut Audit::default(), "repeat", &base.with_d_star(1.0 / opt), 0.0).1)
    };
    compare("support seed 203", once(), once());
    let noisy = || {
        let p = generate_bpdn(32, 16, 3, 0.05, 11).unwrap();
        trace_fingerprint(&solve_poly(&mut Audit::default(), "repeat", &p, 1e-4).1)
    };
    compare("noisy bpdn seed 11", noisy(), noisy());
    let mut phase = || {
        let p = generate_phase(16, 96, 0).unwrap();
        trace_fingerprint(&solve_spectral(&mut scratch, "repeat", &p, 1e-3).1)
    };
    let (a, b) = (phase(), phase());
    compare("phase delta 1e-3", a, b);
    let pass = mismatches.is_empty();
    let detail = if pass {
        format!("{compared} repeated runs identical")
    } else {
        format!("differing: {}", mismatches.join(", "))
    };
    (pass, detail)
}

fn main() {
    let mut audit = Audit::default();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 duality sandwich", timed(10, || criterion_sandwich(&mut audit))),
        ("2 cutting-plane identity", timed(1, criterion_cutting_plane)),
        ("3 spectral model formula", timed(5, criterion_spectral_model)),
        ("4 suboptimality bound", timed(30, || criterion_suboptimality(&mut audit))),
        ("5 support containment at delta=0", timed(30, || criterion_exact_support(&mut audit))),
        ("6 level-set projection", timed(10, criterion_projection)),
        ("8 spectral recovery scaling", timed(300, || criterion_spectral_scaling(&mut audit))),
    ];

    let trace_ok = audit.trace_failures.is_empty();
    results.push((
        "7 monotonicity and feasibility",
        Outcome {
            pass: trace_ok,
            detail: if trace_ok {
                format!("{} runs audited", audit.runs)
            } else {
                audit.trace_failures.iter().take(5).cloned().collect::<Vec<_>>().join("; ")
            },
            elapsed: Duration::ZERO,
            limit: Duration::MAX,
        },
    ));
    let bundle_ok = audit.bundle_failures.is_empty() && audit.poly_bundles > 0 && audit.spectral_bundles > 0;
    results.push((
        "9 bundle invariants",
        Outcome {
            pass: bundle_ok,
            detail: if audit.bundle_failures.is_empty() {
                format!("{} polyhedral and {} spectral updates checked", audit.poly_bundles, audit.spectral_bundles)
            } else {
                audit.bundle_failures.iter().take(5).cloned().collect::<Vec<_>>().join("; ")
            },
            elapsed: Duration::ZERO,
            limit: Duration::MAX,
        },
    ));
    results.push(("10 reproducibility", timed(300, criterion_reproducible)));
    results.sort_by_key(|(name, _)| name.split(' ').next().unwrap().parse::<u32>().unwrap());

    let mut all = true;
    println!();
    for (name, o) in &results {
        let ok = o.pass && o.within_budget();
        all &= ok;
        let budget = if o.limit == Duration::MAX {
            String::new()
        } else {
            format!(" [{:.2}s / {}s]", o.elapsed.as_secs_f64(), o.limit.as_secs())
        };
        let late = if o.pass && !o.within_budget() { " (over time budget)" } else { "" };
        println!("{} criterion {name}: {}{budget}{late}", if ok { "PASS" } else { "FAIL" }, o.detail);
    }
    if !all {
        std::process::exit(1);
    }
}
