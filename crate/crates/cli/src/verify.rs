//! Randomized invariant checks behind `atomic-pursuit verify`.

use anyhow::Result;
use atomic_pursuit::atoms::relaxed_exposed_face;
use atomic_pursuit::instance::{gaussian_matrix, gaussian_vector, rng_from_seed};
use atomic_pursuit::poly::{poly_model_value, recover_primal_poly};
use atomic_pursuit::spectral::{spectral_exposed_element, spectral_model_value};
use atomic_pursuit::{
    generate_bpdn, generate_phase, run_with_observer, Antipolar, Atom, AtomicSet, LevelState, Point, PolyAtom,
    PolyBundle, ProblemInstance, RunEvent, SolverConfig, SpectralBundle,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

pub struct Check {
    pub name: &'static str,
    pub failures: Vec<String>,
    pub cases: usize,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            failures: Vec::new(),
            cases: 0,
        }
    }

    fn expect(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures.push(msg());
        }
    }
}

pub fn run_all(trials: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng_from_seed(seed);
    Ok(vec![
        holder(&mut rng, trials),
        cutting_plane(&mut rng, trials),
        spectral_model(&mut rng, trials),
        antipolar(&mut rng, trials),
        solver_runs(seed, trials)?,
    ])
}

fn random_atoms(rng: &mut ChaCha20Rng, n: usize, max: usize) -> Vec<PolyAtom> {
    let k = rng.random_range(1..=max);
    (0..k)
        .map(|_| PolyAtom::new(rng.random_range(0..n), if rng.random_bool(0.5) { 1 } else { -1 }))
        .collect()
}

fn holder(rng: &mut ChaCha20Rng, trials: usize) -> Check {
    let mut c = Check::new("gauge/support inequality");
    let n = 8;
    let sb = AtomicSet::signed_basis(n);
    let psd = AtomicSet::spectral_psd(n);
    for _ in 0..trials {
        let x = Point::Vector(gaussian_vector(rng, n));
        let z = Point::Vector(gaussian_vector(rng, n));
        let lhs = x.dot(&z).unwrap();
        let rhs = sb.gauge_value(&x).unwrap() * sb.support_value(&z).unwrap();
        c.expect(lhs <= rhs + 1e-12, || format!("signed basis: {lhs} > {rhs}"));

        let f = gaussian_matrix(rng, n, 2, 1.0);
        let g = gaussian_matrix(rng, n, n, 1.0);
        let x = Point::Matrix(&f * f.transpose());
        let z = Point::Matrix((&g + g.transpose()) * 0.5);
        let lhs = x.dot(&z).unwrap();
        let rhs = psd.gauge_value(&x).unwrap() * psd.support_value(&z).unwrap();
        c.expect(lhs <= rhs + 1e-9 * rhs.abs().max(1.0), || format!("spectral: {lhs} > {rhs}"));
    }
    c
}

fn cutting_plane(rng: &mut ChaCha20Rng, trials: usize) -> Check {
    let mut c = Check::new("polyhedral model value");
    let n = 10;
    for _ in 0..trials {
        let atoms = random_atoms(rng, n, 8);
        let bundle = PolyBundle::new(atoms.clone());
        let z = gaussian_vector(rng, n);
        let brute = atoms.iter().map(|a| a.dot(&z)).fold(f64::NEG_INFINITY, f64::max);
        let value = poly_model_value(&bundle, &z).unwrap();
        c.expect(value == brute, || format!("{value} != {brute}"));
    }
    c
}

fn spectral_model(rng: &mut ChaCha20Rng, trials: usize) -> Check {
    let mut c = Check::new("spectral model value");
    let n = 8;
    for _ in 0..trials {
        let r = rng.random_range(1..=4);
        let p = gaussian_matrix(rng, n, r, 1.0).qr().q().columns(0, r).into_owned();
        let h = gaussian_matrix(rng, n, 2, 1.0);
        let w = &h * h.transpose();
        let w = &w / w.trace();
        let bundle = SpectralBundle::new(w.clone(), p.clone(), 10).unwrap();
        let g = gaussian_matrix(rng, n, n, 1.0);
        let z = (&g + g.transpose()) * 0.5;
        let value = spectral_model_value(&bundle, &z).unwrap();
        let e = spectral_exposed_element(&bundle, &z).unwrap();
        let attained = (&w * e.alpha + &p * &e.v * p.transpose()).dot(&z);
        c.expect((attained - value).abs() <= 1e-9, || format!("exposed element gives {attained}, model {value}"));
        for _ in 0..20 {
            let s = gaussian_matrix(rng, r, r, 1.0);
            let s = &s * s.transpose();
            let alpha: f64 = rng.random_range(0.0..1.0);
            let scale = rng.random_range(0.0..=1.0) / (alpha + s.trace());
            let elem: DMatrix<f64> = &w * (alpha * scale) + &p * (s * scale) * p.transpose();
            let inner = elem.dot(&z);
            c.expect(inner <= value + 1e-9, || format!("model element {inner} above model {value}"));
        }
    }
    c
}

fn antipolar(rng: &mut ChaCha20Rng, trials: usize) -> Check {
    let mut c = Check::new("antipolar projection");
    let m = 6;
    for _ in 0..trials {
        let b = gaussian_vector(rng, m);
        let eps = rng.random_range(0.0..0.9) * b.norm();
        let ap = Antipolar::new(b, eps).unwrap();
        let y = gaussian_vector(rng, m);
        let p = ap.project(&y);
        c.expect(ap.residual(&p) >= -1e-8, || format!("projection residual {}", ap.residual(&p)));
        let q = ap.project(&p);
        c.expect((&q - &p).norm() <= 1e-8 * (1.0 + p.norm()), || "projection not idempotent".into());
    }
    c
}

fn audit_trace(c: &mut Check, label: &str, problem: &ProblemInstance, state: &LevelState) {
    let mut prev = f64::INFINITY;
    for r in &state.trace {
        c.expect(r.upper_bound <= prev, || format!("{label}: upper bound rose at {}", r.iteration));
        c.expect(r.model_value <= r.support_value + 1e-9, || {
            format!("{label}: model above support at {}", r.iteration)
        });
        prev = r.upper_bound;
    }
    let res = problem.antipolar.residual(&state.iterate);
    c.expect(res >= -1e-7, || format!("{label}: final iterate residual {res}"));
}

fn solver_runs(seed: u64, trials: usize) -> Result<Check> {
    let mut c = Check::new("solver traces and bundle updates");
    let runs = trials.clamp(1, 10);
    for s in seed..seed + runs as u64 {
        let label = format!("bpdn seed {s}");
        let problem = generate_bpdn(32, 16, 3, 0.0, s)?;
        let delta = 1e-6;
        let cfg = SolverConfig::new(delta, problem.d_star);
        let mut failures = Vec::new();
        let (bundle, state) = run_with_observer(&problem, PolyBundle::default(), &cfg, None, |e| {
            if let RunEvent::Update {
                iterate,
                z_next,
                exposed,
                before,
                after,
                ..
            } = e
            {
                let z = z_next.as_vector().unwrap();
                let model = poly_model_value(before, z).unwrap();
                let mut need = relaxed_exposed_face(before.atoms(), z, model, delta);
                if let Some(Atom::Poly(a)) = exposed {
                    need.push(*a);
                }
                if need.iter().any(|a| !after.contains(a)) {
                    failures.push(format!("{label}: bundle update dropped a required atom"));
                }
                if problem.antipolar.residual(iterate) < -1e-7 {
                    failures.push(format!("{label}: infeasible iterate"));
                }
            }
        })?;
        for f in failures {
            c.expect(false, || f);
        }
        audit_trace(&mut c, &label, &problem, &state);
        c.expect(state.converged, || format!("{label}: did not converge"));
        match recover_primal_poly(&bundle, &problem, 1e-10) {
            Ok(sol) => {
                let z = problem.operator.adjoint(&state.best_iterate)?;
                let inner = sol.x.dot(&z)?;
                let product = problem.atoms.gauge_value(&sol.x)? * problem.atoms.support_value(&z)?;
                c.expect(inner >= 1.0 - 1e-6 && inner <= product * (1.0 + 1e-6), || {
                    format!("{label}: duality values {inner} / {product}")
                });
            }
            Err(e) => c.expect(false, || format!("{label}: recovery failed: {e}")),
        }
    }

    let problem = generate_phase(8, 48, seed)?;
    let label = format!("phase seed {seed}");
    let mut cfg = SolverConfig::new(1e-3, problem.d_star);
    cfg.max_iterations = 5000;
    let mut bad = Vec::new();
    let (_, state) = run_with_observer(&problem, SpectralBundle::empty(8, 10), &cfg, None, |e| {
        if let RunEvent::Update { after, .. } = e {
            let inv = after.invariants();
            if !inv.holds() {
                bad.push(format!("{label}: {inv:?}"));
            }
        }
    })?;
    for f in bad {
        c.expect(false, || f);
    }
    audit_trace(&mut c, &label, &problem, &state);
    Ok(c)
}
