#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiment;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Kind};

#[derive(Parser)]
#[command(name = "atomic-pursuit", version, about = "Level bundle solver for atomic pursuit via the gauge dual")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sparse recovery: minimize ||x||_1 subject to ||Mx - b|| <= eps.
    Bpdn(RunArgs),
    /// Phase retrieval through the trace-minimization lift.
    Phase(RunArgs),
    /// Problem kind taken from --kind or the configuration file.
    Run(RunArgs),
    /// Randomized invariant checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sparsity: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Override the optimal dual value supplied by the generator.
    #[arg(long = "d-star")]
    d_star: Option<f64>,
    /// Run seeds seed..seed+R in parallel, one output directory per seed.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Keep iterating until the bundle admits a feasible reduced problem.
    #[arg(long)]
    stop_on_recoverable: bool,
    /// Write zeros in the trace seconds column.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn resolve(args: &RunArgs, fixed: Option<Kind>) -> Result<ExperimentConfig> {
    let mut file_text = None;
    if let Some(path) = &args.config {
        file_text = Some(
            std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?,
        );
    }
    let kind_from_file = file_text.as_deref().and_then(|t| {
        t.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == "kind")
            .map(|(_, v)| v.trim().to_string())
    });
    let flag_kind = args.kind.as_deref().map(str::parse::<Kind>).transpose()?;
    let kind = match (fixed, flag_kind) {
        (Some(f), Some(k)) if f != k => bail!("--kind {k} conflicts with the {f} subcommand"),
        (Some(f), _) => f,
        (None, Some(k)) => k,
        (None, None) => match &kind_from_file {
            Some(k) => k.parse()?,
            None => bail!("no problem kind given; pass --kind or set kind in the configuration file"),
        },
    };

    let mut cfg = ExperimentConfig::defaults(kind);
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
        if cfg.kind != kind {
            bail!("configuration file sets kind = {} but {kind} was requested", cfg.kind);
        }
    }
    macro_rules! over {
        ($($field:ident),*) => { $( if let Some(v) = args.$field.clone() { cfg.$field = v; } )* };
    }
    over!(n, m, sparsity, eps, delta, max_iters, seed, out_dir);
    if args.d_star.is_some() {
        cfg.d_star = args.d_star;
    }
    cfg.stop_on_recoverable |= args.stop_on_recoverable;
    cfg.no_timing |= args.no_timing;
    cfg.validate()?;
    Ok(cfg)
}

fn run_command(args: &RunArgs, fixed: Option<Kind>) -> Result<bool> {
    let cfg = resolve(args, fixed)?;
    if args.repeat == 0 {
        bail!("--repeat must be positive");
    }
    let jobs: Vec<(ExperimentConfig, PathBuf)> = if args.repeat == 1 {
        vec![(cfg.clone(), cfg.out_dir.clone())]
    } else {
        (0..args.repeat as u64)
            .map(|i| {
                let mut c = cfg.clone();
                c.seed = cfg.seed + i;
                let dir = cfg.out_dir.join(format!("seed-{}", c.seed));
                (c, dir)
            })
            .collect()
    };

    let outcomes: Vec<Result<experiment::Outcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(c, dir)| scope.spawn(move || experiment::run_experiment(c, dir)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("worker panicked"))))
            .collect()
    });

    let mut all_ok = true;
    for outcome in outcomes {
        let o = outcome?;
        let r = &o.result;
        let err = r
            .recovery
            .as_ref()
            .and_then(|rec| rec.relative_error)
            .map_or_else(|| "n/a".to_string(), |e| format!("{e:.3e}"));
        println!(
            "{} seed {}: {} after {} iterations, gap {:.3e}, bundle {}, recovery error {} -> {}",
            r.config.kind,
            r.config.seed,
            if r.converged { "converged" } else { "stopped" },
            r.iterations,
            r.final_gap,
            r.bundle_size,
            err,
            o.dir.display()
        );
        if let Some(e) = &r.error {
            eprintln!("error: {e}");
        }
        all_ok &= r.success;
    }
    Ok(all_ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bpdn(a) => run_command(a, Some(Kind::Bpdn)),
        Command::Phase(a) => run_command(a, Some(Kind::Phase)),
        Command::Run(a) => run_command(a, None),
        Command::Verify(a) => verify::run_all(a.trials, a.seed).map(|checks| {
            let mut ok = true;
            for c in &checks {
                let pass = c.failures.is_empty();
                ok &= pass;
                println!("{} {} ({} checks)", if pass { "PASS" } else { "FAIL" }, c.name, c.cases);
                for f in c.failures.iter().take(5) {
                    println!("    {f}");
                }
            }
            ok
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
