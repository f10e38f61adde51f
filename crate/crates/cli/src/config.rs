use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Bpdn,
    Phase,
}

impl FromStr for Kind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bpdn" => Ok(Kind::Bpdn),
            "phase" => Ok(Kind::Phase),
            other => bail!("unknown problem kind {other:?} (expected bpdn or phase)"),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Bpdn => "bpdn",
            Kind::Phase => "phase",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub n: usize,
    pub m: usize,
    /// Nonzeros of the planted signal (bpdn only).
    pub sparsity: usize,
    pub eps: f64,
    pub delta: f64,
    pub max_iters: usize,
    pub seed: u64,
    #[serde(skip)]
    pub out_dir: PathBuf,
    /// Replaces the generator's optimal dual value.
    pub d_star: Option<f64>,
    /// Keep iterating past the gap test until the bundle admits a feasible
    /// reduced problem (polyhedral runs only).
    pub stop_on_recoverable: bool,
    /// Write zeros in the trace `seconds` column.
    #[serde(skip)]
    pub no_timing: bool,
}

impl ExperimentConfig {
    pub fn defaults(kind: Kind) -> Self {
        match kind {
            Kind::Bpdn => Self {
                kind,
                n: 64,
                m: 32,
                sparsity: 4,
                eps: 0.0,
                delta: 1e-6,
                max_iters: 1000,
                seed: 0,
                out_dir: PathBuf::from("out"),
                d_star: None,
                stop_on_recoverable: false,
                no_timing: false,
            },
            Kind::Phase => Self {
                kind,
                n: 16,
                m: 96,
                sparsity: 1,
                eps: 0.0,
                delta: 1e-4,
                max_iters: 20_000,
                seed: 0,
                out_dir: PathBuf::from("out"),
                d_star: None,
                stop_on_recoverable: false,
                no_timing: false,
            },
        }
    }

    /// Sets one `key = value` pair. Dashes and underscores in keys are
    /// interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let key = key.trim().replace('-', "_");
        let ctx = || format!("invalid value {value:?} for {key}");
        match key.as_str() {
            "kind" => self.kind = value.parse()?,
            "n" => self.n = value.parse().with_context(ctx)?,
            "m" => self.m = value.parse().with_context(ctx)?,
            "sparsity" | "k" => self.sparsity = value.parse().with_context(ctx)?,
            "eps" | "epsilon" => self.eps = value.parse().with_context(ctx)?,
            "delta" => self.delta = value.parse().with_context(ctx)?,
            "max_iters" | "max_iterations" => self.max_iters = value.parse().with_context(ctx)?,
            "seed" => self.seed = value.parse().with_context(ctx)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "d_star" => self.d_star = Some(value.parse().with_context(ctx)?),
            "stop_on_recoverable" => self.stop_on_recoverable = parse_bool(value).with_context(ctx)?,
            "no_timing" => self.no_timing = parse_bool(value).with_context(ctx)?,
            _ => bail!("unknown configuration key {key:?}"),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and lines starting
    /// with `#` are ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.apply_text(&text)
            .with_context(|| format!("in configuration file {}", path.display()))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("line {}: expected key = value", lineno + 1);
            };
            self.set(k, v).with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            bail!("dimensions must be positive (n = {}, m = {})", self.n, self.m);
        }
        if self.kind == Kind::Bpdn {
            if self.sparsity == 0 || self.sparsity > self.n {
                bail!("sparsity must lie in 1..={} (got {})", self.n, self.sparsity);
            }
            if self.m > self.n {
                bail!("bpdn needs m <= n (m = {}, n = {})", self.m, self.n);
            }
        }
        if self.kind == Kind::Phase && self.eps != 0.0 {
            bail!("phase retrieval uses exact measurements; eps must be 0");
        }
        if !(self.eps >= 0.0) || !(self.delta >= 0.0) {
            bail!("eps and delta must be nonnegative");
        }
        if self.max_iters == 0 {
            bail!("max_iters must be positive");
        }
        if let Some(d) = self.d_star {
            if !(d > 0.0) || !d.is_finite() {
                bail!("d_star must be positive (got {d})");
            }
        }
        Ok(())
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => bail!("expected a boolean"),
    }
}
