//! Mountain-pass saddles on the mass sphere.
//!
//! The endpoints `w₀ = v₁` and `w₁ = v_{ε₁}` are normalized bubbles. The bubble
//! arc `t ↦ v_{1−(1−ε₁)t}` seeds a discrete path which is relaxed by a
//! climbing-image string method in the H¹₀ metric: interior images descend
//! with their component along the path removed, the highest image ascends
//! along the path and descends across it. The climbing image is then refined
//! by bordered Newton.

use serde::{Deserialize, Serialize};

use crate::bubbles::{bubble_arc_sup, normalized_bubble, CutoffSpec};
use crate::diagnostics::{detect_concentration, ConcentrationReport, LEVEL_TOL};
use crate::energy::{critical_exponent, require_unit, sobolev_gradient_raw, EnergyParams, Parts};
use crate::error::{invalid, Error, Result};
use crate::exec::{self, Exec};
use crate::grid::{principal_eigenpair, Field, RadialGrid};
use crate::minimizer::{newton_refine, solve_local_min, FlowOptions, SolutionKind, SolutionRecord};
use crate::thresholds::{
    classify_value, delta_mu, g_derivative, g_upper, h_term, Geometry, ThresholdSet, G_FIT_SLACK,
};

/// Fixed endpoints of the mountain-pass paths together with the checks
/// that make them admissible.
#[derive(Clone, Debug)]
pub struct Endpoints {
    pub w0: Field,
    pub w1: Field,
    pub eps1: f64,
    /// `min(2μ, μ**)`.
    pub mu0: f64,
    pub status: EndpointStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointStatus {
    pub w0_energy: f64,
    pub w1_energy: f64,
    pub w0_geometry: Geometry,
    pub w1_geometry: Geometry,
    pub quantum: f64,
}

impl EndpointStatus {
    /// `w₀ ∈ B_ᾱ` with `E(w₀) < quantum`, and `w₁ ∉ B_ᾱ` with `E(w₁) < 0`.
    pub fn satisfied(&self) -> bool {
        self.w0_geometry == Geometry::InsideB
            && self.w0_energy < self.quantum
            && self.w1_geometry == Geometry::Outside
            && self.w1_energy < 0.0
    }
}

fn mp_params(params: &EnergyParams, t: &ThresholdSet) -> Result<()> {
    if !(params.mu > 0.0) {
        return Err(invalid("mountain-pass solutions need mu > 0"));
    }
    if params.exponent != critical_exponent(t.dim) {
        return Err(invalid(
            "mountain-pass geometry needs the critical exponent",
        ));
    }
    Ok(())
}

/// Evaluates the endpoint conditions for the pair `(w₀, w₁)` at `μ`.
pub fn endpoint_status(
    g: &RadialGrid,
    params: &EnergyParams,
    t: &ThresholdSet,
    w0: &Field,
    w1: &Field,
) -> Result<EndpointStatus> {
    g.check(w0)?;
    g.check(w1)?;
    let alpha = t.alpha_bar(params.mu);
    let p0 = Parts::of(g, w0.values(), params.exponent);
    let p1 = Parts::of(g, w1.values(), params.exponent);
    Ok(EndpointStatus {
        w0_energy: p0.energy(params),
        w1_energy: p1.energy(params),
        w0_geometry: classify_value(p0.grad_sq, alpha),
        w1_geometry: classify_value(p1.grad_sq, alpha),
        quantum: t.quantum(params.mu),
    })
}

/// Builds `w₀ = v₁` and `w₁ = v_{ε₁}`, with `ε₁` the largest resolvable `ε`
/// such that `‖∇v_ε‖² > ᾱ(μ₀/2)` and `E(v_ε) < 0`.
pub fn build_endpoints(
    g: &RadialGrid,
    params: &EnergyParams,
    t: &ThresholdSet,
    mu_double_star: f64,
    cutoff: CutoffSpec,
) -> Result<Endpoints> {
    mp_params(params, t)?;
    let mu = params.mu;
    if !(mu < mu_double_star) {
        return Err(invalid(format!(
            "mu = {mu} is not below the mountain-pass range end {mu_double_star}"
        )));
    }
    cutoff.validate(g.dim(), g.radius())?;
    let mu0 = (2.0 * mu).min(mu_double_star);
    let alpha0 = t.alpha_bar(0.5 * mu0);
    let admissible = |eps: f64| -> Result<bool> {
        let v = normalized_bubble(g, eps, cutoff)?;
        let parts = Parts::of(g, v.values(), params.exponent);
        Ok(parts.grad_sq > alpha0 && parts.energy(params) < 0.0)
    };

    let eps_min = crate::bubbles::MIN_CELLS_PER_EPS * g.spacing();
    let too_coarse = || {
        Error::Endpoint(format!(
            "no resolvable eps1 at n = {} for mu = {mu}; refine the grid",
            g.n()
        ))
    };
    if eps_min >= 1.0 || !admissible(eps_min)? {
        return Err(too_coarse());
    }
    if admissible(1.0)? {
        return Err(Error::Endpoint(
            "v_1 already violates the low endpoint conditions".into(),
        ));
    }
    // bisection in ln ε between an admissible and an inadmissible value
    let (mut lo, mut hi) = (eps_min.ln(), 0.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if admissible(mid.exp())? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let eps1 = lo.exp();
    let w0 = normalized_bubble(g, 1.0, cutoff)?;
    let w1 = normalized_bubble(g, eps1, cutoff)?;
    let status = endpoint_status(g, params, t, &w0, &w1)?;
    if !status.satisfied() {
        return Err(Error::Endpoint(format!(
            "endpoint conditions fail at mu = {mu}: {status:?}"
        )));
    }
    Ok(Endpoints {
        w0,
        w1,
        eps1,
        mu0,
        status,
    })
}

/// A discrete path of unit-mass fields with fixed endpoints.
#[derive(Clone, Debug)]
pub struct PathOnSphere {
    points: Vec<Field>,
}

impl PathOnSphere {
    pub fn new(g: &RadialGrid, points: Vec<Field>) -> Result<Self> {
        if points.len() < 3 {
            return Err(invalid("a path needs at least three points"));
        }
        for u in &points {
            require_unit(g, u)?;
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Field] {
        &self.points
    }

    /// Number of segments `m`.
    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn energies(&self, g: &RadialGrid, params: &EnergyParams, exec: Exec) -> Vec<f64> {
        exec::map(exec, &self.points, |u| {
            Parts::of(g, u.values(), params.exponent).energy(params)
        })
    }

    /// Largest L² distance between consecutive points.
    pub fn max_gap(&self, g: &RadialGrid) -> f64 {
        self.points
            .windows(2)
            .map(|w| l2_dist(g, w[0].values(), w[1].values()))
            .fold(0.0, f64::max)
    }
}

fn l2_dist(g: &RadialGrid, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    g.dot_raw(&d, &d).sqrt()
}

/// Smallest accepted number of path segments.
pub const MIN_SEGMENTS: usize = 16;

/// Parameters `ε̂(k/m) = 1 − (1 − ε₁)k/m` of the bubble arc.
pub fn arc_parameters(eps1: f64, m: usize) -> Vec<f64> {
    (0..=m)
        .map(|k| {
            if k == m {
                eps1
            } else {
                1.0 - (1.0 - eps1) * (k as f64 / m as f64)
            }
        })
        .collect()
}

/// The bubble arc from `w₀` to `w₁` sampled at `m + 1` parameters.
pub fn initial_path(
    g: &RadialGrid,
    ends: &Endpoints,
    m: usize,
    cutoff: CutoffSpec,
    exec: Exec,
) -> Result<PathOnSphere> {
    if m < MIN_SEGMENTS {
        return Err(invalid(format!(
            "path needs at least {MIN_SEGMENTS} segments, got {m}"
        )));
    }
    let eps = arc_parameters(ends.eps1, m);
    let inner: Result<Vec<Field>> =
        exec::map(exec, &eps[1..m], |&e| normalized_bubble(g, e, cutoff))
            .into_iter()
            .collect();
    let mut points = Vec::with_capacity(m + 1);
    points.push(ends.w0.clone());
    points.extend(inner?);
    points.push(ends.w1.clone());
    PathOnSphere::new(g, points)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MinimaxOptions {
    /// Step length in the H¹₀ metric.
    pub step: f64,
    /// Stopping tolerance on the H¹₀ norm of the climbing image's gradient.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Largest H¹₀ displacement of one image in one sweep.
    pub max_move: f64,
    /// Largest admissible L² distance between consecutive path points.
    pub mesh_bound: f64,
    /// Sweeps between climbing-image samples for bubbling detection.
    pub sample_every: usize,
    /// Hand the climbing image to Newton at convergence.
    pub refine: bool,
    pub exec: Exec,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        Self {
            step: 0.5,
            tol: 1e-6,
            max_sweeps: 20_000,
            max_move: 0.5,
            mesh_bound: 0.5,
            sample_every: 50,
            refine: true,
            exec: Exec::Parallel,
        }
    }
}

impl MinimaxOptions {
    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.tol > 0.0 && self.max_move > 0.0 && self.mesh_bound > 0.0) {
            return Err(invalid(
                "step, tol, max_move and mesh_bound must be positive",
            ));
        }
        if self.max_sweeps == 0 || self.sample_every == 0 {
            return Err(invalid("max_sweeps and sample_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub sweep: usize,
    /// Largest energy on the path at the start of the sweep.
    pub max_energy: f64,
    pub climbing_index: usize,
    pub climbing_residual: f64,
    /// Largest consecutive L² distance after redistribution.
    pub max_gap: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundChecks {
    pub lower: f64,
    pub upper: Option<f64>,
    /// `c ≥ lower − 1e−6`.
    pub lower_ok: bool,
    /// `c ≤ upper + slack`.
    pub upper_ok: Option<bool>,
}

impl BoundChecks {
    pub fn evaluate(t: &ThresholdSet, mu: f64, c: f64, g_constant: Option<f64>) -> Result<Self> {
        let lower = t.quantum(mu);
        let upper = match g_constant {
            Some(k) => Some(g_upper(t, mu, k)?),
            None => None,
        };
        Ok(Self {
            lower,
            upper,
            lower_ok: c >= lower - LEVEL_TOL,
            upper_ok: upper.map(|u| c <= u + G_FIT_SLACK),
        })
    }
}

#[derive(Clone, Debug)]
pub enum MinimaxStatus {
    /// The climbing image reached the tolerance.
    Converged,
    /// The climbing image concentrated; no refinement was attempted.
    Bubbling(ConcentrationReport),
}

#[derive(Clone, Debug)]
pub struct MinimaxReport {
    pub status: MinimaxStatus,
    /// Largest energy on the final path.
    pub c_estimate: f64,
    /// Largest energy on the initial path.
    pub initial_max: f64,
    pub climbing_image: Field,
    /// Multiplier estimate `θ` at the climbing image.
    pub climbing_multiplier: f64,
    pub saddle: Option<SolutionRecord>,
    /// Newton residual history when refinement ran.
    pub newton_residuals: Vec<f64>,
    pub history: Vec<SweepSummary>,
    pub bound_checks: BoundChecks,
    pub path: PathOnSphere,
}

impl MinimaxReport {
    pub fn bubbling(&self) -> bool {
        matches!(self.status, MinimaxStatus::Bubbling(_))
    }

    /// Refined saddle energy when available, otherwise the path maximum.
    pub fn level(&self) -> f64 {
        self.saddle.as_ref().map_or(self.c_estimate, |s| s.energy)
    }
}

/// Number of climbing-image samples kept for bubbling detection.
const CONCENTRATION_WINDOW: usize = 8;

/// Relaxes `path` to a minimax path and extracts the saddle.
pub fn minimax_descent(
    g: &RadialGrid,
    path: &PathOnSphere,
    params: &EnergyParams,
    t: &ThresholdSet,
    g_constant: Option<f64>,
    opts: &MinimaxOptions,
) -> Result<MinimaxReport> {
    opts.validate()?;
    mp_params(params, t)?;
    for u in path.points() {
        g.check(u)?;
    }
    let m = path.segments();
    let mut u: Vec<Vec<f64>> = path.points.iter().map(|f| f.values().to_vec()).collect();
    let (w0, w1) = (path.points[0].clone(), path.points[m].clone());
    let p = params.exponent;
    let energy_of = |v: &[f64]| Parts::of(g, v, p).energy(params);
    let initial_max = path
        .energies(g, params, opts.exec)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);

    // equidistribute the seed path around its highest interior point
    let seed: Vec<f64> = u[1..m].iter().map(|v| energy_of(v)).collect();
    redistribute_around(g, &mut u, 1 + argmax(seed.into_iter()))?;

    let mut history = Vec::new();
    let mut samples: Vec<Field> = Vec::new();
    for sweep in 0..opts.max_sweeps {
        let ends = endpoint_status(g, params, t, &w0, &w1)?;
        if !ends.satisfied() {
            return Err(Error::Endpoint(format!(
                "endpoint conditions fail during descent: {ends:?}"
            )));
        }
        let evals: Vec<(f64, Vec<f64>, f64)> = exec::map_range(opts.exec, m - 1, |k| {
            let v = &u[k + 1];
            let (grad, theta) = sobolev_gradient_raw(g, v, params);
            (energy_of(v), grad, theta)
        });
        let ci = 1 + argmax(evals.iter().map(|e| e.0));
        let (ci_energy, ci_grad, ci_theta) = &evals[ci - 1];
        let ci_res = g.dirichlet_raw(ci_grad).sqrt();
        let max_energy = ci_energy.max(ends.w0_energy).max(ends.w1_energy);
        let last_gap = history.last().map_or(0.0, |h: &SweepSummary| h.max_gap);
        history.push(SweepSummary {
            sweep,
            max_energy,
            climbing_index: ci,
            climbing_residual: ci_res,
            max_gap: last_gap,
        });

        if ci_res < opts.tol {
            return finish(
                g,
                params,
                t,
                g_constant,
                opts,
                MinimaxStatus::Converged,
                u,
                ci,
                *ci_theta,
                max_energy,
                initial_max,
                history,
            );
        }

        if sweep % opts.sample_every == 0 {
            samples.push(Field::new(g.id(), u[ci].clone()));
            if samples.len() > CONCENTRATION_WINDOW {
                samples.remove(0);
            }
            if samples.len() >= 3 {
                let rep = detect_concentration(g, &samples, params, t)?;
                if rep.flagged {
                    return finish(
                        g,
                        params,
                        t,
                        g_constant,
                        opts,
                        MinimaxStatus::Bubbling(rep),
                        u,
                        ci,
                        *ci_theta,
                        max_energy,
                        initial_max,
                        history,
                    );
                }
            }
        }

        let mut e_full = Vec::with_capacity(m + 1);
        e_full.push(ends.w0_energy);
        e_full.extend(evals.iter().map(|e| e.0));
        e_full.push(ends.w1_energy);
        let moved: Vec<Result<Vec<f64>>> = exec::map_range(opts.exec, m - 1, |k| {
            let i = k + 1;
            let grad = &evals[k].1;
            let mut tau = upwind_tangent(&u[i - 1], &u[i], &u[i + 1], &e_full[i - 1..=i + 1]);
            let c = g.dot_raw(&tau, &u[i]);
            for (x, y) in tau.iter_mut().zip(&u[i]) {
                *x -= c * y;
            }
            let tn = g.dirichlet_raw(&tau).sqrt();
            let along = if tn > 0.0 {
                for x in tau.iter_mut() {
                    *x /= tn;
                }
                g.dirichlet_inner_raw(grad, &tau)
            } else {
                0.0
            };
            let factor = if i == ci { 2.0 } else { 1.0 };
            let dir: Vec<f64> = grad
                .iter()
                .zip(&tau)
                .map(|(gr, tv)| gr - factor * along * tv)
                .collect();
            let len = opts.step * g.dirichlet_raw(&dir).sqrt();
            let s = if len > opts.max_move {
                opts.step * opts.max_move / len
            } else {
                opts.step
            };
            let mut next: Vec<f64> = u[i]
                .iter()
                .zip(&dir)
                .map(|(x, d)| (x - s * d).abs())
                .collect();
            normalize(g, &mut next)?;
            Ok(next)
        });
        for (k, v) in moved.into_iter().enumerate() {
            u[k + 1] = v?;
        }
        redistribute_around(g, &mut u, ci)?;
        let gap = u
            .windows(2)
            .map(|w| l2_dist(g, &w[0], &w[1]))
            .fold(0.0, f64::max);
        if let Some(h) = history.last_mut() {
            h.max_gap = gap;
        }
        if gap > opts.mesh_bound {
            return Err(Error::PathDegenerate(format!(
                "consecutive L2 distance {gap} exceeds {} at sweep {sweep}",
                opts.mesh_bound
            )));
        }
    }
    let last = history.last().map_or(f64::NAN, |h| h.climbing_residual);
    Err(Error::NoConvergence {
        what: "climbing-image path descent",
        iterations: opts.max_sweeps,
        residual: last,
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    g: &RadialGrid,
    params: &EnergyParams,
    t: &ThresholdSet,
    g_constant: Option<f64>,
    opts: &MinimaxOptions,
    status: MinimaxStatus,
    u: Vec<Vec<f64>>,
    ci: usize,
    theta: f64,
    c_estimate: f64,
    initial_max: f64,
    history: Vec<SweepSummary>,
) -> Result<MinimaxReport> {
    let climbing_image = Field::new(g.id(), u[ci].clone());
    let points = u.into_iter().map(|v| Field::new(g.id(), v)).collect();
    let path = PathOnSphere { points };
    let mut saddle = None;
    let mut newton_residuals = Vec::new();
    if opts.refine && matches!(status, MinimaxStatus::Converged) {
        let out = newton_refine(
            g,
            &climbing_image,
            theta,
            params,
            SolutionKind::MountainPass,
        )?;
        newton_residuals = out.residuals;
        saddle = Some(out.record);
    }
    let level = saddle.as_ref().map_or(c_estimate, |s| s.energy);
    let bound_checks = BoundChecks::evaluate(t, params.mu, level, g_constant)?;
    Ok(MinimaxReport {
        status,
        c_estimate,
        initial_max,
        climbing_image,
        climbing_multiplier: theta,
        saddle,
        newton_residuals,
        history,
        bound_checks,
        path,
    })
}

/// Energy-weighted upwind tangent at the middle of three consecutive points.
fn upwind_tangent(prev: &[f64], cur: &[f64], next: &[f64], e: &[f64]) -> Vec<f64> {
    let (em, e0, ep) = (e[0], e[1], e[2]);
    let (wp, wm) = if ep > e0 && e0 > em {
        (1.0, 0.0)
    } else if ep < e0 && e0 < em {
        (0.0, 1.0)
    } else {
        let hi = (ep - e0).abs().max((em - e0).abs());
        let lo = (ep - e0).abs().min((em - e0).abs());
        if ep > em {
            (hi, lo)
        } else {
            (lo, hi)
        }
    };
    cur.iter()
        .zip(prev)
        .zip(next)
        .map(|((c, a), b)| wp * (b - c) + wm * (c - a))
        .collect()
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn normalize(g: &RadialGrid, u: &mut [f64]) -> Result<()> {
    let n = g.dot_raw(u, u).sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::ZeroField);
    }
    for x in u.iter_mut() {
        *x /= n;
    }
    Ok(())
}

/// Redistributes the whole path by L² arclength keeping the climbing image
/// as a node; each side receives segments in proportion to its length.
fn redistribute_around(g: &RadialGrid, u: &mut Vec<Vec<f64>>, ci: usize) -> Result<usize> {
    let m = u.len() - 1;
    let la: f64 = (0..ci).map(|k| l2_dist(g, &u[k], &u[k + 1])).sum();
    let lb: f64 = (ci..m).map(|k| l2_dist(g, &u[k], &u[k + 1])).sum();
    if !(la + lb > 0.0) {
        return Ok(ci);
    }
    let ka = ((m as f64 * la / (la + lb)).round() as usize).clamp(1, m - 1);
    let left = resample(g, &u[..=ci], ka)?;
    let right = resample(g, &u[ci..], m - ka)?;
    let mut out = left;
    out.extend(right.into_iter().skip(1));
    *u = out;
    Ok(ka)
}

/// `segs + 1` points equidistributed in L² arclength along the polyline
/// `pts`, first and last kept; interior points by linear interpolation
/// followed by retraction.
fn resample(g: &RadialGrid, pts: &[Vec<f64>], segs: usize) -> Result<Vec<Vec<f64>>> {
    let last = pts.len() - 1;
    let mut cum = vec![0.0];
    for k in 0..last {
        let d = l2_dist(g, &pts[k], &pts[k + 1]);
        cum.push(cum[k] + d);
    }
    let total = cum[last];
    let mut out = Vec::with_capacity(segs + 1);
    out.push(pts[0].clone());
    let mut k = 0;
    for j in 1..segs {
        let s = total * j as f64 / segs as f64;
        while k + 1 < last && cum[k + 1] < s {
            k += 1;
        }
        let len = cum[k + 1] - cum[k];
        let th = if len > 0.0 {
            ((s - cum[k]) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let mut v: Vec<f64> = pts[k]
            .iter()
            .zip(&pts[k + 1])
            .map(|(x, y)| ((1.0 - th) * x + th * y).abs())
            .collect();
        normalize(g, &mut v)?;
        out.push(v);
    }
    out.push(pts[last].clone());
    Ok(out)
}

/// Endpoints, bubble arc and minimax descent at one `μ`.
pub fn solve_mountain_pass(
    g: &RadialGrid,
    params: &EnergyParams,
    t: &ThresholdSet,
    g_constant: Option<f64>,
    config: &MountainPassConfig,
) -> Result<(Endpoints, MinimaxReport)> {
    let cutoff = config.cutoff_for(g);
    let mu_dd = config.mu_double_star.unwrap_or_else(|| t.mu_double_star());
    let ends = build_endpoints(g, params, t, mu_dd, cutoff)?;
    let path = initial_path(g, &ends, config.segments, cutoff, config.minimax.exec)?;
    let report = minimax_descent(g, &path, params, t, g_constant, &config.minimax)?;
    Ok((ends, report))
}

/// Settings shared by single mountain-pass runs and level curves.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MountainPassConfig {
    /// Path segments `m`; the path has `m + 1` points.
    pub segments: usize,
    /// Cutoff of the bubble family; the plateau cutoff with `a = R/2` when absent.
    pub cutoff: Option<CutoffSpec>,
    /// Upper end of the admissible `μ` range; `μ*/2` when absent.
    pub mu_double_star: Option<f64>,
    pub minimax: MinimaxOptions,
}

impl Default for MountainPassConfig {
    fn default() -> Self {
        Self {
            segments: 32,
            cutoff: None,
            mu_double_star: None,
            minimax: MinimaxOptions::default(),
        }
    }
}

impl MountainPassConfig {
    pub fn cutoff_for(&self, g: &RadialGrid) -> CutoffSpec {
        self.cutoff
            .unwrap_or_else(|| CutoffSpec::default_plateau(g.radius()))
    }
}

/// One row of a level curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveRow {
    pub mu: f64,
    pub m_mu: Option<f64>,
    pub c_mu: Option<f64>,
    pub quantum: f64,
    pub g_mu: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_mp: Option<f64>,
    /// `‖∇u‖²` at the refined saddle.
    pub grad_norm_sq_mp: Option<f64>,
    /// `m_μ < quantum ≤ c_μ ≤ g(μ)`, within the level tolerances.
    pub sandwich_ok: Option<bool>,
    /// Three-point estimate of `c′_μ`.
    pub slope: Option<f64>,
    /// Truncation error estimate of `slope`.
    pub slope_error: Option<f64>,
    /// `|Δc/Δμ| ≤ (1 + δ(μ))|g′(μ)|`, on well-conditioned rows only.
    pub derivative_ok: Option<bool>,
    /// `‖∇u‖² ≤ 2c − 2c′μ + 6μ + slack`, on well-conditioned rows only.
    pub ps_budget_ok: Option<bool>,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveTable {
    pub dim: usize,
    pub rows: Vec<CurveRow>,
    /// `c_{μ_{i+1}} ≤ c_{μ_i} + 1e−6` over consecutive computed rows.
    pub monotone: bool,
    /// Every row computed and sandwiched.
    pub sandwich_ok: bool,
    /// Rows with a well-conditioned central difference.
    pub derivative_rows: usize,
    /// Fraction of those satisfying the derivative bound.
    pub derivative_fraction: Option<f64>,
}

/// Smallest `|c_{i+1} − c_{i−1}|` treated as a well-conditioned difference.
pub const FD_MIN_DIFFERENCE: f64 = 1e-4;
/// Largest relative truncation error of a slope used in the curve checks.
pub const FD_MAX_REL_ERROR: f64 = 0.1;
/// Slack on the Palais–Smale gradient budget, on top of the slope error.
pub const PS_BUDGET_SLACK: f64 = 1e-3;

impl CurveTable {
    pub fn to_csv(&self) -> String {
        let fmt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), |v| format!("{v:.16e}"));
        let mut s = String::from("mu,m_mu,c_mu,quantum,g_mu,lambda_min,lambda_mp,flags\n");
        for r in &self.rows {
            let flags = if r.flags.is_empty() {
                "ok".to_string()
            } else {
                r.flags.join("|")
            };
            s.push_str(&format!(
                "{:.16e},{},{},{:.16e},{},{},{},{}\n",
                r.mu,
                fmt(r.m_mu),
                fmt(r.c_mu),
                r.quantum,
                fmt(r.g_mu),
                fmt(r.lambda_min),
                fmt(r.lambda_mp),
                flags
            ));
        }
        s
    }

    /// The monotonicity and sandwich assertions hold.
    pub fn passed(&self) -> bool {
        self.monotone && self.sandwich_ok
    }
}

/// Local-minimum and mountain-pass levels over an increasing `μ` grid.
///
/// Rows are independent and evaluated through `exec`; a failure in one row
/// is recorded in its flags.
pub fn cmu_curve(
    g: &RadialGrid,
    mu_grid: &[f64],
    config: &MountainPassConfig,
    g_constant: f64,
    exec: Exec,
) -> Result<CurveTable> {
    if mu_grid.len() < 3 {
        return Err(invalid("a level curve needs at least three mu values"));
    }
    if !mu_grid.windows(2).all(|w| w[1] > w[0]) || !(mu_grid[0] > 0.0) {
        return Err(invalid("mu grid must be positive and strictly increasing"));
    }
    let eig = principal_eigenpair(g)?;
    let mut t = ThresholdSet::new(g.dim(), eig.lambda1)?;
    if g.dim() == 3 {
        t.lambda1_inner_ball = Some(eig.lambda1);
    }
    let mu_dd = config.mu_double_star.unwrap_or_else(|| t.mu_double_star());
    if let Some(&last) = mu_grid.last() {
        if !(last < mu_dd) {
            return Err(invalid(format!(
                "mu grid must stay below {mu_dd}, got {last}"
            )));
        }
    }
    let dim = g.dim();
    let mut rows: Vec<CurveRow> = exec::map(exec, mu_grid, |&mu| {
        curve_row(g, &t, &eig.phi1, mu, config, g_constant)
    });

    let mut monotone = true;
    let mut prev: Option<f64> = None;
    for r in &rows {
        if let Some(c) = r.c_mu {
            if let Some(pc) = prev {
                if c > pc + LEVEL_TOL {
                    monotone = false;
                }
            }
            prev = Some(c);
        }
    }
    let sandwich_ok = rows.iter().all(|r| r.sandwich_ok == Some(true));

    let mut derivative_rows = 0;
    let mut satisfied = 0;
    for i in 1..rows.len() - 1 {
        let (Some(a), Some(c), Some(b)) = (rows[i - 1].c_mu, rows[i].c_mu, rows[i + 1].c_mu) else {
            continue;
        };
        let (m0, mu, m2) = (rows[i - 1].mu, rows[i].mu, rows[i + 1].mu);
        // second-order differences in ln μ and in μ; their spread estimates
        // the truncation error
        let in_log = three_point(m0.ln(), mu.ln(), m2.ln(), a, c, b) / mu;
        let in_lin = three_point(m0, mu, m2, a, c, b);
        let err = (in_log - in_lin).abs();
        rows[i].slope = Some(in_log);
        rows[i].slope_error = Some(err);
        if (b - a).abs() < FD_MIN_DIFFERENCE || err > FD_MAX_REL_ERROR * in_log.abs() {
            continue;
        }
        derivative_rows += 1;
        let bound = (1.0 + delta_mu(&t, mu)) * g_derivative(&t, mu, g_constant).abs();
        let ok = in_log.abs() <= bound;
        if ok {
            satisfied += 1;
        }
        rows[i].derivative_ok = Some(ok);
        if let Some(gn) = rows[i].grad_norm_sq_mp {
            let budget = 2.0 * c - 2.0 * in_log * mu + 6.0 * mu;
            rows[i].ps_budget_ok = Some(gn <= budget + 2.0 * mu * err + PS_BUDGET_SLACK);
        }
    }
    Ok(CurveTable {
        dim,
        rows,
        monotone,
        sandwich_ok,
        derivative_rows,
        derivative_fraction: (derivative_rows > 0)
            .then(|| satisfied as f64 / derivative_rows as f64),
    })
}

/// Derivative at `x1` of the parabola through three points.
fn three_point(x0: f64, x1: f64, x2: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let (h0, h1) = (x1 - x0, x2 - x1);
    -h1 / (h0 * (h0 + h1)) * f0 + (h1 - h0) / (h0 * h1) * f1 + h0 / (h1 * (h0 + h1)) * f2
}

fn curve_row(
    g: &RadialGrid,
    t: &ThresholdSet,
    phi1: &Field,
    mu: f64,
    config: &MountainPassConfig,
    g_constant: f64,
) -> CurveRow {
    let quantum = t.quantum(mu);
    let mut row = CurveRow {
        mu,
        m_mu: None,
        c_mu: None,
        quantum,
        g_mu: g_upper(t, mu, g_constant).ok(),
        lambda_min: None,
        lambda_mp: None,
        grad_norm_sq_mp: None,
        sandwich_ok: None,
        slope: None,
        slope_error: None,
        derivative_ok: None,
        ps_budget_ok: None,
        flags: Vec::new(),
    };
    let params = match EnergyParams::critical(g.dim(), mu) {
        Ok(p) => p,
        Err(e) => {
            row.flags.push(format!("params_error: {e}"));
            return row;
        }
    };
    match local_min_level(g, &params, t, phi1) {
        Ok(rec) => {
            row.m_mu = Some(rec.energy);
            row.lambda_min = Some(rec.lambda);
        }
        Err(e) => row.flags.push(format!("min_error: {e}")),
    }
    match solve_mountain_pass(g, &params, t, Some(g_constant), config) {
        Ok((_, rep)) => {
            if rep.bubbling() {
                row.flags.push("bubbling".into());
            }
            match &rep.saddle {
                Some(s) => {
                    row.c_mu = Some(s.energy);
                    row.lambda_mp = Some(s.lambda);
                    row.grad_norm_sq_mp = Some(s.grad_norm_sq);
                }
                None => row.flags.push("no_saddle".into()),
            }
        }
        Err(e) => row.flags.push(format!("mp_error: {e}")),
    }
    if let (Some(m), Some(c)) = (row.m_mu, row.c_mu) {
        let upper = row.g_mu.is_none_or(|gm| c <= gm + G_FIT_SLACK);
        let ok = m < quantum && c >= quantum - LEVEL_TOL && upper;
        row.sandwich_ok = Some(ok);
        if !ok {
            row.flags.push("sandwich_fail".into());
        }
    }
    row
}

/// Flow from `φ₁` followed by Newton.
pub fn local_min_level(
    g: &RadialGrid,
    params: &EnergyParams,
    t: &ThresholdSet,
    phi1: &Field,
) -> Result<SolutionRecord> {
    let flow = solve_local_min(g, params, phi1, &FlowOptions::for_mu(t, params.mu))?;
    let rec = flow.record;
    Ok(newton_refine(g, &rec.u, rec.lambda, params, SolutionKind::LocalMin)?.record)
}

/// One calibration sample for the constant in `h(μ)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub mu: f64,
    pub eps1: f64,
    /// `sup_{ε₁ ≤ ε ≤ 1} E(v_ε)`.
    pub arc_sup: f64,
    /// `(arc_sup − quantum − h|_{C=0}) / (∂h/∂C)`.
    pub required: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GCalibration {
    pub dim: usize,
    /// Largest required constant, floored at a small positive value.
    pub constant: f64,
    pub samples: Vec<CalibrationSample>,
}

/// Smallest constant returned by [`calibrate_g_constant`].
pub const G_CONSTANT_FLOOR: f64 = 1e-3;

/// Fits the constant `C` in `h(μ)` as the smallest value for which the
/// bubble arc stays below `g(μ)` at every `μ` in `mus`.
pub fn calibrate_g_constant(
    g: &RadialGrid,
    t: &ThresholdSet,
    mus: &[f64],
    cutoff: CutoffSpec,
    mu_double_star: f64,
    exec: Exec,
) -> Result<GCalibration> {
    if mus.is_empty() {
        return Err(invalid("calibration needs at least one mu"));
    }
    let samples: Result<Vec<CalibrationSample>> = exec::map(exec, mus, |&mu| {
        let params = EnergyParams::critical(g.dim(), mu)?;
        let ends = build_endpoints(g, &params, t, mu_double_star, cutoff)?;
        let (_, arc_sup) = bubble_arc_sup(g, &params, cutoff, ends.eps1, Exec::Sequential)?;
        let h0 = h_term(t.dim, mu, 0.0, t.lambda1_inner_ball)?;
        let unit = h_term(t.dim, mu, 1.0, t.lambda1_inner_ball)? - h0;
        Ok(CalibrationSample {
            mu,
            eps1: ends.eps1,
            arc_sup,
            required: (arc_sup - t.quantum(mu) - h0) / unit,
        })
    })
    .into_iter()
    .collect();
    let samples = samples?;
    let constant = samples
        .iter()
        .map(|s| s.required)
        .fold(G_CONSTANT_FLOOR, f64::max);
    Ok(GCalibration {
        dim: g.dim(),
        constant,
        samples,
    })
}
