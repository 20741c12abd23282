//! Subcommand implementations. Each returns `Ok(())` only when every
//! asserted invariant of the run holds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use normsolve::bubbles::{sobolev_constant, struwe_table, CutoffSpec};
use normsolve::diagnostics::{certify, CertReport};
use normsolve::exec::Exec;
use normsolve::grid::{principal_eigenpair, RadialGrid};
use normsolve::minimizer::{
    newton_refine, solve_local_min, FlowOptions, SolutionKind, SolutionRecord, NEWTON_TOL,
};
use normsolve::mountainpass::{cmu_curve, solve_mountain_pass, MinimaxStatus, MountainPassConfig};
use normsolve::snapshot;
use normsolve::thresholds::{frozen_g_constant, g_upper, ThresholdSet, G_FIT_SLACK};
use serde_json::{json, Value};

use crate::config::{CommonArgs, Format, RunConfig};
use crate::Failure;

/// Bubble concentrations for the Struwe table, as fractions of the radius.
const BUBBLE_EPS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
/// Smallest fraction of well-conditioned curve rows meeting the derivative bound.
const DERIVATIVE_FRACTION: f64 = 0.5;

fn grid(c: &RunConfig) -> Result<RadialGrid, Failure> {
    RadialGrid::new(c.dim, c.radius, c.n).map_err(|e| Failure::solver("grid", e))
}

fn thresholds_for(g: &RadialGrid) -> Result<ThresholdSet, Failure> {
    ThresholdSet::for_grid(g).map_err(|e| Failure::solver("thresholds", e))
}

/// The frozen constant in the upper bound applies to the unit ball only.
fn g_constant(c: &RunConfig) -> Option<f64> {
    if c.radius == 1.0 {
        frozen_g_constant(c.dim)
    } else {
        None
    }
}

fn out_dir(c: &RunConfig) -> Result<Option<&Path>, Failure> {
    match &c.out {
        None => Ok(None),
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| io_failure(d, e))?;
            Ok(Some(d.as_path()))
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Solver {
        stage: "output",
        message: format!("{}: {e}", path.display()),
    }
}

fn write(dir: Option<&Path>, name: &str, text: &str) -> Result<(), Failure> {
    if let Some(d) = dir {
        let path: PathBuf = d.join(name);
        fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_default();
    s.push('\n');
    s
}

/// Flat `key,value` rendering of a JSON object for `--format csv`.
fn key_value_csv(v: &Value) -> String {
    let mut s = String::from("key,value\n");
    fn walk(prefix: &str, v: &Value, s: &mut String) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, x, s);
                }
            }
            Value::Array(_) => {}
            Value::String(x) => {
                let _ = writeln!(s, "{prefix},{x}");
            }
            other => {
                let _ = writeln!(s, "{prefix},{other}");
            }
        }
    }
    walk("", v, &mut s);
    s
}

fn emit(summary: &Value, csv: Option<&str>, format: Format) {
    match (format, csv) {
        (Format::Json, _) => print!("{}", pretty(summary)),
        (Format::Csv, Some(t)) => print!("{t}"),
        (Format::Csv, None) => print!("{}", key_value_csv(summary)),
    }
}

fn finish(pass: bool) -> Result<(), Failure> {
    if pass {
        Ok(())
    } else {
        Err(Failure::Invariants)
    }
}

fn record_json(rec: &SolutionRecord) -> Value {
    json!({
        "kind": rec.kind.as_str(),
        "mu": rec.mu,
        "exponent": rec.exponent,
        "lambda": rec.lambda,
        "energy": rec.energy,
        "grad_norm_sq": rec.grad_norm_sq,
        "residual": rec.residual,
        "pohozaev_residual": rec.pohozaev_residual,
        "iterations": rec.iterations,
    })
}

/// Values in the unit-coupling variables `U = ρu` when `ρ` was given.
fn rescaled_json(rec: &SolutionRecord, rho: Option<f64>) -> Value {
    match rho {
        None => Value::Null,
        Some(r) => json!({
            "rho": r,
            "mass": r * r,
            "energy": r * r * rec.energy,
            "grad_norm_sq": r * r * rec.grad_norm_sq,
            "lambda": rec.lambda,
        }),
    }
}

fn profile_csv(g: &RadialGrid, rec: &SolutionRecord, rho: Option<f64>) -> String {
    let mut s = String::from(if rho.is_some() { "r,u,U\n" } else { "r,u\n" });
    for (r, u) in g.nodes().iter().zip(rec.u.values()) {
        match rho {
            Some(k) => {
                let _ = writeln!(s, "{r:.16e},{u:.16e},{:.16e}", k * u);
            }
            None => {
                let _ = writeln!(s, "{r:.16e},{u:.16e}");
            }
        }
    }
    s
}

fn save_snapshot(
    dir: Option<&Path>,
    name: &str,
    g: &RadialGrid,
    rec: &SolutionRecord,
) -> Result<(), Failure> {
    if let Some(d) = dir {
        snapshot::save(d.join(name), g, rec).map_err(|e| Failure::solver("snapshot", e))?;
    }
    Ok(())
}

fn cert_passed(rep: &CertReport) -> Value {
    json!({ "passed": rep.passed(), "report": rep })
}

pub fn thresholds(args: &CommonArgs) -> Result<(), Failure> {
    let c = RunConfig::resolve(args)?;
    let g = grid(&c)?;
    let t = thresholds_for(&g)?;
    let k = g_constant(&c);
    let mus: Vec<Option<f64>> = match (&c.mu_grid, c.coupling) {
        (Some(grid), _) => grid.iter().copied().map(Some).collect(),
        (None, Some(cp)) => vec![Some(cp.mu())],
        (None, None) => vec![None],
    };
    let rho = c.coupling.and_then(|cp| cp.rho());
    let nf = c.dim as f64;
    let consistent = (t.rho_star.powf(4.0 / (nf - 2.0)) / t.mu_star - 1.0).abs() < 1e-12;

    let mut rows = Vec::new();
    let mut csv = String::from(
        "dim,radius,n,sobolev,lambda1,mu_star,rho_star,mu_double_star,mu,alpha_bar,quantum,g_mu\n",
    );
    let opt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), |v| format!("{v:.16e}"));
    for mu in mus {
        let positive = mu.filter(|&m| m > 0.0);
        let alpha = positive.map(|m| t.alpha_bar(m));
        let quantum = positive.map(|m| t.quantum(m));
        let g_mu = match (positive, k) {
            (Some(m), Some(kc)) => g_upper(&t, m, kc).ok(),
            _ => None,
        };
        let _ = writeln!(
            csv,
            "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{}",
            c.dim,
            c.radius,
            c.n,
            t.sobolev,
            t.lambda1,
            t.mu_star,
            t.rho_star,
            t.mu_double_star(),
            opt(mu),
            opt(alpha),
            opt(quantum),
            opt(g_mu)
        );
        rows.push(json!({
            "mu": mu,
            "alpha_bar": alpha,
            "quantum": quantum,
            "g_mu": g_mu,
        }));
    }
    let summary = json!({
        "command": "thresholds",
        "dim": c.dim,
        "radius": c.radius,
        "n": c.n,
        "sobolev": t.sobolev,
        "lambda1": t.lambda1,
        "mu_star": t.mu_star,
        "rho_star": t.rho_star,
        "mu_double_star": t.mu_double_star(),
        "rho": rho,
        "g_constant": k,
        "rows": rows,
        "invariants": { "rho_star_mu_star_consistent": consistent },
    });
    let dir = out_dir(&c)?;
    write(dir, "thresholds.json", &pretty(&summary))?;
    write(dir, "thresholds.csv", &csv)?;
    emit(&summary, Some(&csv), c.format.unwrap_or(Format::Json));
    finish(consistent)
}

pub fn bubbles(args: &CommonArgs) -> Result<(), Failure> {
    let c = RunConfig::resolve(args)?;
    if !c.is_critical() {
        return Err(Failure::Usage("bubbles need the critical exponent".into()));
    }
    let g = grid(&c)?;
    let eps: Vec<f64> = BUBBLE_EPS.iter().map(|e| e * c.radius).collect();
    let table = struwe_table(
        &g,
        CutoffSpec::default_plateau(c.radius),
        &eps,
        Exec::Parallel,
    )
    .map_err(|e| Failure::solver("bubbles", e))?;
    let s = sobolev_constant(c.dim).map_err(|e| Failure::solver("bubbles", e))?;
    let p = c.exponent;
    // every competitor obeys the Sobolev inequality
    let sobolev_ok = table
        .records
        .iter()
        .all(|r| r.grad_norm_sq / r.crit_norm.powf(2.0 / p) >= s * (1.0 - 1e-9));
    let mass_ok = table
        .records
        .windows(2)
        .all(|w| w[1].mass_sq < w[0].mass_sq);
    let csv = table.to_csv();
    let summary = json!({
        "command": "bubbles",
        "dim": c.dim,
        "radius": c.radius,
        "n": c.n,
        "table": table,
        "invariants": { "sobolev_inequality": sobolev_ok, "mass_decreasing": mass_ok },
    });
    let dir = out_dir(&c)?;
    write(dir, "bubbles.csv", &csv)?;
    write(dir, "summary.json", &pretty(&summary))?;
    emit(&summary, Some(&csv), c.format.unwrap_or(Format::Csv));
    finish(sobolev_ok && mass_ok)
}

pub fn solve_min(args: &CommonArgs) -> Result<(), Failure> {
    let c = RunConfig::resolve(args)?;
    let coupling = c.coupling()?;
    let params = c.params()?;
    let g = grid(&c)?;
    let t = thresholds_for(&g)?;
    if c.is_critical() && !(params.mu < t.mu_star) {
        return Err(Failure::Usage(format!(
            "mu = {} is not below the threshold {}",
            params.mu, t.mu_star
        )));
    }
    let eig = principal_eigenpair(&g).map_err(|e| Failure::solver("eigenpair", e))?;
    let mut opts = if c.is_critical() {
        FlowOptions::for_mu(&t, params.mu)
    } else {
        FlowOptions::new(f64::INFINITY)
    };
    if let Some(tol) = c.tol {
        opts.tol = tol;
    }
    let flow =
        solve_local_min(&g, &params, &eig.phi1, &opts).map_err(|e| Failure::solver("flow", e))?;
    let newton = newton_refine(
        &g,
        &flow.record.u,
        flow.record.lambda,
        &params,
        SolutionKind::LocalMin,
    )
    .map_err(|e| Failure::solver("newton", e))?;
    let rec = newton.record;
    let converged = rec.residual < NEWTON_TOL;
    let cert = if c.is_critical() {
        Some(certify(&g, &rec, &t, None, G_FIT_SLACK).map_err(|e| Failure::solver("certify", e))?)
    } else {
        None
    };
    let pass = converged && rec.lambda > 0.0 && cert.as_ref().is_none_or(CertReport::passed);
    let rho = coupling.rho();
    let summary = json!({
        "command": "solve-min",
        "dim": c.dim,
        "radius": c.radius,
        "n": c.n,
        "mu": params.mu,
        "rho": rho,
        "mu_star": t.mu_star,
        "alpha_bar": c.is_critical().then(|| t.alpha_bar(params.mu)),
        "quantum": c.is_critical().then(|| t.quantum(params.mu)),
        "flow_iterations": flow.record.iterations,
        "flow_residual": flow.record.residual,
        "newton_residuals": newton.residuals,
        "solution": record_json(&rec),
        "rescaled": rescaled_json(&rec, rho),
        "certificate": cert.as_ref().map(cert_passed),
        "passed": pass,
    });
    let dir = out_dir(&c)?;
    save_snapshot(dir, "solution.snap", &g, &rec)?;
    write(dir, "profile.csv", &profile_csv(&g, &rec, rho))?;
    write(dir, "summary.json", &pretty(&summary))?;
    emit(&summary, None, c.format.unwrap_or(Format::Json));
    finish(pass)
}

pub fn solve_mp(args: &CommonArgs) -> Result<(), Failure> {
    let c = RunConfig::resolve(args)?;
    let coupling = c.coupling()?;
    let params = c.params()?;
    let g = grid(&c)?;
    let t = thresholds_for(&g)?;
    let k = g_constant(&c);
    let mut config = mountain_pass_config(&c)?;
    if let Some(tol) = c.tol {
        config.minimax.tol = tol;
    }
    let (ends, report) = solve_mountain_pass(&g, &params, &t, k, &config)
        .map_err(|e| Failure::solver("mountain pass", e))?;
    let concentration = match &report.status {
        MinimaxStatus::Converged => Value::Null,
        MinimaxStatus::Bubbling(r) => json!(r),
    };
    let cert = match &report.saddle {
        Some(s) => {
            Some(certify(&g, s, &t, k, G_FIT_SLACK).map_err(|e| Failure::solver("certify", e))?)
        }
        None => None,
    };
    let bounds = report.bound_checks;
    let pass = !report.bubbling()
        && cert.as_ref().is_some_and(CertReport::passed)
        && report
            .saddle
            .as_ref()
            .is_some_and(|s| s.residual < NEWTON_TOL)
        && bounds.lower_ok
        && bounds.upper_ok.unwrap_or(true)
        && ends.status.satisfied();
    let rho = coupling.rho();
    let path_energies = report.path.energies(&g, &params, Exec::Parallel);
    let summary = json!({
        "command": "solve-mp",
        "dim": c.dim,
        "radius": c.radius,
        "n": c.n,
        "mu": params.mu,
        "rho": rho,
        "g_constant": k,
        "path_points": config.segments + 1,
        "endpoints": {
            "eps1": ends.eps1,
            "mu0": ends.mu0,
            "status": ends.status,
            "satisfied": ends.status.satisfied(),
        },
        "status": if report.bubbling() { "bubbling" } else { "converged" },
        "concentration": concentration,
        "sweeps": report.history.len(),
        "initial_max": report.initial_max,
        "c_estimate": report.c_estimate,
        "level": report.level(),
        "bounds": bounds,
        "path_energies": path_energies,
        "newton_residuals": report.newton_residuals,
        "saddle": report.saddle.as_ref().map(record_json),
        "rescaled": report.saddle.as_ref().map(|s| rescaled_json(s, rho)),
        "certificate": cert.as_ref().map(cert_passed),
        "passed": pass,
    });
    let dir = out_dir(&c)?;
    if let Some(s) = &report.saddle {
        save_snapshot(dir, "saddle.snap", &g, s)?;
        write(dir, "profile.csv", &profile_csv(&g, s, rho))?;
    }
    write(dir, "summary.json", &pretty(&summary))?;
    emit(&summary, None, c.format.unwrap_or(Format::Json));
    finish(pass)
}

fn mountain_pass_config(c: &RunConfig) -> Result<MountainPassConfig, Failure> {
    if c.path_points < 3 {
        return Err(Failure::Usage(format!(
            "a path needs at least three points, got {}",
            c.path_points
        )));
    }
    Ok(MountainPassConfig {
        segments: c.path_points - 1,
        ..MountainPassConfig::default()
    })
}

pub fn curve(args: &CommonArgs) -> Result<(), Failure> {
    let c = RunConfig::resolve(args)?;
    let mus = c
        .mu_grid
        .clone()
        .ok_or_else(|| Failure::Usage("curve needs --mu-grid a:b:k".into()))?;
    if !c.is_critical() {
        return Err(Failure::Usage(
            "level curves need the critical exponent".into(),
        ));
    }
    let k = g_constant(&c).ok_or_else(|| {
        Failure::Usage("level curves need the unit ball, where the bound constant is known".into())
    })?;
    let g = grid(&c)?;
    let mut config = mountain_pass_config(&c)?;
    if let Some(tol) = c.tol {
        config.minimax.tol = tol;
    }
    let table =
        cmu_curve(&g, &mus, &config, k, Exec::Parallel).map_err(|e| Failure::solver("curve", e))?;
    let derivative_ok = table
        .derivative_fraction
        .is_none_or(|f| f >= DERIVATIVE_FRACTION);
    let pass = table.passed() && derivative_ok;
    let csv = table.to_csv();
    let summary = json!({
        "command": "curve",
        "dim": c.dim,
        "radius": c.radius,
        "n": c.n,
        "g_constant": k,
        "table": table,
        "passed": pass,
    });
    let dir = out_dir(&c)?;
    write(dir, "curve.csv", &csv)?;
    write(dir, "curve.json", &pretty(&summary))?;
    emit(&summary, Some(&csv), c.format.unwrap_or(Format::Csv));
    finish(pass)
}

pub fn check(path: &Path, args: &CommonArgs) -> Result<(), Failure> {
    let c = RunConfig::resolve(args)?;
    let snap = snapshot::load(path).map_err(|e| Failure::solver("snapshot", e))?;
    let (g, rec) = snap
        .into_record()
        .map_err(|e| Failure::solver("snapshot", e))?;
    let t = thresholds_for(&g)?;
    let k = if rec.kind == SolutionKind::MountainPass && g.radius() == 1.0 {
        frozen_g_constant(g.dim())
    } else {
        None
    };
    let rep = certify(&g, &rec, &t, k, G_FIT_SLACK).map_err(|e| Failure::solver("certify", e))?;
    let summary = json!({
        "command": "check",
        "snapshot": path.display().to_string(),
        "dim": g.dim(),
        "radius": g.radius(),
        "n": g.n(),
        "solution": record_json(&rec),
        "certificate": cert_passed(&rep),
        "passed": rep.passed(),
    });
    let dir = out_dir(&c)?;
    write(dir, "cert.json", &pretty(&summary))?;
    emit(&summary, None, c.format.unwrap_or(Format::Json));
    finish(rep.passed())
}
