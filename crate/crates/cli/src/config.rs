//! Run configuration: flat `key = value` files merged with command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use normsolve::energy::{critical_exponent, EnergyParams};
use normsolve::grid::default_nodes;
use normsolve::thresholds::mu_from_rho;

use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format {s:?}; expected csv or json")),
        }
    }
}

/// Flags shared by every subcommand. Each may also be set in the file given
/// by `--config`; flags take precedence.
#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// Flat key = value file; `#` starts a comment.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Space dimension N ≥ 3.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Ball radius R.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Grid cells.
    #[arg(long)]
    pub n: Option<usize>,
    /// Coupling for the unit-mass problem.
    #[arg(long, conflicts_with = "rho")]
    pub mu: Option<f64>,
    /// Prescribed L² norm of the unit-coupling problem; sets mu = rho^(4/(N-2)).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Nonlinearity exponent; the critical exponent 2N/(N-2) by default.
    #[arg(long)]
    pub p: Option<f64>,
    /// Stopping tolerance of the gradient flow or the minimax iteration.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Points on the discrete mountain-pass path, endpoints included.
    #[arg(long = "path-points")]
    pub path_points: Option<usize>,
    /// k log-spaced coupling values from a to b inclusive, as a:b:k.
    #[arg(long = "mu-grid")]
    pub mu_grid: Option<String>,
    /// Directory for artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Format of the summary on standard output.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling {
    Mu(f64),
    Rho { rho: f64, mu: f64 },
}

impl Coupling {
    pub fn mu(self) -> f64 {
        match self {
            Coupling::Mu(m) | Coupling::Rho { mu: m, .. } => m,
        }
    }

    pub fn rho(self) -> Option<f64> {
        match self {
            Coupling::Mu(_) => None,
            Coupling::Rho { rho, .. } => Some(rho),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub radius: f64,
    pub n: usize,
    pub coupling: Option<Coupling>,
    pub exponent: f64,
    pub tol: Option<f64>,
    pub path_points: usize,
    pub mu_grid: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

pub const DEFAULT_PATH_POINTS: usize = 33;

const KEYS: [&str; 11] = [
    "dim",
    "radius",
    "n",
    "mu",
    "rho",
    "p",
    "tol",
    "path-points",
    "mu-grid",
    "out",
    "format",
];

/// Parses a flat `key = value` file. Blank lines and `#` comments are
/// ignored; `_` and `-` are interchangeable in keys.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, Failure> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(usage(format!("config line {}: unknown key {key:?}", i + 1)));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(usage(format!(
                "config line {}: duplicate key {key:?}",
                i + 1
            )));
        }
    }
    Ok(map)
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn value<T: FromStr>(
    flag: Option<T>,
    file: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        None => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("config key {key}: cannot parse {s:?}"))),
    }
}

/// `a:b:k` with `0 < a < b` and `k ≥ 2`, log-spaced and inclusive.
pub fn parse_mu_grid(s: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || {
        usage(format!(
            "mu grid {s:?} must read a:b:k with 0 < a < b and k >= 2"
        ))
    };
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let k: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(a > 0.0 && b > a && b.is_finite()) || k < 2 {
        return Err(bad());
    }
    let ratio = (b / a).ln();
    let mut grid: Vec<f64> = (0..k)
        .map(|i| a * (ratio * i as f64 / (k - 1) as f64).exp())
        .collect();
    grid[k - 1] = b;
    Ok(grid)
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, Failure> {
        let file = match &args.config {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        };
        let dim = value(args.dim, &file, "dim")?.unwrap_or(3);
        if dim < 3 {
            return Err(usage(format!("dimension must be at least 3, got {dim}")));
        }
        let radius = value(args.radius, &file, "radius")?.unwrap_or(1.0);
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(usage(format!("radius must be positive, got {radius}")));
        }
        let n = value(args.n, &file, "n")?.unwrap_or_else(|| default_nodes(dim));

        // a coupling flag replaces whatever the file says about the coupling
        let (mu, rho) = if args.mu.is_some() || args.rho.is_some() {
            (args.mu, args.rho)
        } else {
            (value(None, &file, "mu")?, value(None, &file, "rho")?)
        };
        let coupling = match (mu, rho) {
            (Some(_), Some(_)) => return Err(usage("give exactly one of mu and rho")),
            (Some(m), None) => {
                if !(m >= 0.0 && m.is_finite()) {
                    return Err(usage(format!("mu must be nonnegative, got {m}")));
                }
                Some(Coupling::Mu(m))
            }
            (None, Some(r)) => {
                let mu = mu_from_rho(r, dim).map_err(|e| usage(e.to_string()))?;
                Some(Coupling::Rho { rho: r, mu })
            }
            (None, None) => None,
        };
        let exponent = value(args.p, &file, "p")?.unwrap_or_else(|| critical_exponent(dim));
        EnergyParams::with_exponent(dim, 0.0, exponent).map_err(|e| usage(e.to_string()))?;
        let tol = value(args.tol, &file, "tol")?;
        if let Some(t) = tol {
            if !(t > 0.0) {
                return Err(usage(format!("tol must be positive, got {t}")));
            }
        }
        let path_points =
            value(args.path_points, &file, "path-points")?.unwrap_or(DEFAULT_PATH_POINTS);
        let mu_grid = match value(args.mu_grid.clone(), &file, "mu-grid")? {
            Some(s) => Some(parse_mu_grid(&s)?),
            None => None,
        };
        let out = value(args.out.clone(), &file, "out")?;
        let format = value(args.format, &file, "format")?;
        Ok(Self {
            dim,
            radius,
            n,
            coupling,
            exponent,
            tol,
            path_points,
            mu_grid,
            out,
            format,
        })
    }

    pub fn coupling(&self) -> Result<Coupling, Failure> {
        self.coupling
            .ok_or_else(|| usage("this command needs --mu or --rho"))
    }

    pub fn params(&self) -> Result<EnergyParams, Failure> {
        EnergyParams::with_exponent(self.dim, self.coupling()?.mu(), self.exponent)
            .map_err(|e| usage(e.to_string()))
    }

    pub fn is_critical(&self) -> bool {
        self.exponent == critical_exponent(self.dim)
    }
}
