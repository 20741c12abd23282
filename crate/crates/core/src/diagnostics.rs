//! Certification of computed solutions.
//!
//! On a ball every solution satisfies the Pohozaev identity
//! `2λ‖u‖₂² = ω R^N u′(R)²` (critical exponent), which forces `λ > 0`,
//! `E ≥ λ₁/N` and `‖∇u‖² ≤ N·E`. The concentration detector looks for the
//! loss of compactness that accompanies a bubble carrying one energy quantum.

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyParams, Parts};
use crate::error::{invalid, Error, Result};
use crate::grid::{Field, RadialGrid};
use crate::minimizer::{SolutionKind, SolutionRecord};
use crate::thresholds::{classify_value, h_term, Geometry, ThresholdSet};

/// `|λ|` below this is treated as zero by the Pohozaev normalization.
const LAMBDA_FLOOR: f64 = 1e-12;

/// Relative Pohozaev defect of `(u, λ)`.
///
/// For a general exponent the identity reads
/// `2λ‖u‖² = ω R^N u′(R)² + μ(N − 2 − 2N/p)‖u‖_p^p`; the last term vanishes at
/// the critical exponent. `u′(R)` is the flux through the boundary face of
/// the discretization.
pub fn pohozaev_relative(
    g: &RadialGrid,
    u: &Field,
    lambda: f64,
    params: &EnergyParams,
) -> Result<f64> {
    g.check(u)?;
    if lambda.abs() < LAMBDA_FLOOR {
        return Err(Error::Degenerate(format!(
            "lambda = {lambda:e} is too close to zero to normalize the Pohozaev defect"
        )));
    }
    let parts = Parts::of(g, u.values(), params.exponent);
    let nf = g.dim() as f64;
    let slope = g.boundary_slope(u)?;
    let flux = g.omega() * g.radius().powi(g.dim() as i32) * slope * slope;
    let extra = params.mu * (nf - 2.0 - 2.0 * nf / params.exponent) * parts.pow_p;
    let lhs = 2.0 * lambda * parts.mass;
    Ok((lhs - flux - extra).abs() / (2.0 * lambda.abs() * parts.mass + f64::MIN_POSITIVE))
}

pub fn pohozaev_residual(rec: &SolutionRecord, g: &RadialGrid) -> Result<f64> {
    pohozaev_relative(g, &rec.u, rec.lambda, &rec.params())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSign {
    Positive,
    Nonpositive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub kind: SolutionKind,
    pub pohozaev_residual_rel: f64,
    pub lambda_sign: LambdaSign,
    /// `E ≥ λ₁/N`.
    pub energy_floor_ok: bool,
    /// `‖∇u‖² ≤ N·E`.
    pub grad_cap_ok: bool,
    /// `E − quantum(μ)`.
    pub quantum_gap: f64,
    /// Local minimizers: `E < quantum(μ)`. Saddles: `E ≥ quantum(μ) − 1e−6`.
    pub level_ok: bool,
    /// Local minimizers only: `‖∇u‖² < ᾱ(μ)`.
    pub inside_trapping_ball: Option<bool>,
    /// Saddles only, when a constant for `h` is supplied: `E ≤ g(μ) + slack`.
    pub below_upper_bound: Option<bool>,
    /// Half of the Dirichlet energy sits within ten cells of the origin.
    pub concentration_flag: bool,
    pub half_gradient_radius: f64,
}

impl CertReport {
    /// All certified properties hold.
    pub fn passed(&self) -> bool {
        self.lambda_sign == LambdaSign::Positive
            && self.energy_floor_ok
            && self.grad_cap_ok
            && self.level_ok
            && self.inside_trapping_ball.unwrap_or(true)
            && self.below_upper_bound.unwrap_or(true)
            && !self.concentration_flag
    }
}

/// Lower-level tolerance for mountain-pass energies.
pub const LEVEL_TOL: f64 = 1e-6;

/// Evaluates the consequences of the Pohozaev identity and the level
/// ordering for a solution on a ball. `g_constant`, when given, adds the
/// upper-bound check for saddles.
pub fn certify(
    g: &RadialGrid,
    rec: &SolutionRecord,
    t: &ThresholdSet,
    g_constant: Option<f64>,
    slack: f64,
) -> Result<CertReport> {
    g.check(&rec.u)?;
    let nf = g.dim() as f64;
    let quantum = t.quantum(rec.mu);
    let pohozaev_residual_rel = match pohozaev_residual(rec, g) {
        Ok(r) => r,
        Err(Error::Degenerate(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let level_ok = match rec.kind {
        SolutionKind::LocalMin => rec.energy < quantum,
        SolutionKind::MountainPass => rec.energy >= quantum - LEVEL_TOL,
    };
    let inside_trapping_ball = match rec.kind {
        SolutionKind::LocalMin => {
            Some(classify_value(rec.grad_norm_sq, t.alpha_bar(rec.mu)) == Geometry::InsideB)
        }
        SolutionKind::MountainPass => None,
    };
    let below_upper_bound = match (rec.kind, g_constant) {
        (SolutionKind::MountainPass, Some(c)) if rec.mu > 0.0 => {
            let h = h_term(t.dim, rec.mu, c, t.lambda1_inner_ball)?;
            Some(rec.energy <= quantum + h + slack)
        }
        _ => None,
    };
    let half_gradient_radius = half_gradient_radius(g, &rec.u)?;
    Ok(CertReport {
        kind: rec.kind,
        pohozaev_residual_rel,
        lambda_sign: if rec.lambda > 0.0 {
            LambdaSign::Positive
        } else {
            LambdaSign::Nonpositive
        },
        energy_floor_ok: rec.energy >= t.lambda1 / nf,
        grad_cap_ok: rec.grad_norm_sq <= nf * rec.energy,
        quantum_gap: rec.energy - quantum,
        level_ok,
        inside_trapping_ball,
        below_upper_bound,
        concentration_flag: half_gradient_radius < 10.0 * g.spacing(),
        half_gradient_radius,
    })
}

/// Smallest face radius `r` such that the Dirichlet energy inside `B_r` is
/// at least half of the total.
pub fn half_gradient_radius(g: &RadialGrid, u: &Field) -> Result<f64> {
    g.check(u)?;
    let v = u.values();
    let n = v.len();
    let h = g.spacing();
    let total = g.dirichlet_raw(v);
    if total == 0.0 {
        return Ok(g.radius());
    }
    let mut acc = 0.0;
    for i in 0..n - 1 {
        let d = v[i + 1] - v[i];
        let r = (i + 1) as f64 * h;
        acc += g.omega() * r.powi(g.dim() as i32 - 1) * d * d / h;
        if acc >= 0.5 * total {
            return Ok(r);
        }
    }
    Ok(g.radius())
}

/// `∫_{B_r} u²` over the cells whose outer face lies inside `B_r`.
pub fn mass_within(g: &RadialGrid, u: &Field, r: f64) -> Result<f64> {
    g.check(u)?;
    let h = g.spacing();
    let cells = ((r / h).round() as usize).min(g.n());
    Ok(u.values()[..cells]
        .iter()
        .zip(g.weights())
        .map(|(x, w)| w * x * x)
        .sum())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub flagged: bool,
    /// `‖∇u_last‖² − ‖∇u_first‖²`.
    pub growth: f64,
    /// `0.8 · S^{N/2} μ^{1−N/2}`.
    pub threshold: f64,
    /// Half-gradient radius of each iterate.
    pub scales: Vec<f64>,
    /// Mass inside `B_{max(2·scale, 10h)}` for each iterate.
    pub core_masses: Vec<f64>,
    /// Multiplier of each (normalized) iterate.
    pub lambdas: Vec<f64>,
}

/// Flags bubbling along a sequence of iterates: the gradient norm grows by at
/// least 0.8 quantum-equivalents while the half-gradient radius shrinks and
/// the mass in the core ball around the origin decays monotonically.
pub fn detect_concentration(
    g: &RadialGrid,
    iterates: &[Field],
    params: &EnergyParams,
    t: &ThresholdSet,
) -> Result<ConcentrationReport> {
    if iterates.len() < 3 {
        return Err(invalid(
            "concentration detection needs at least three iterates",
        ));
    }
    if !(params.mu > 0.0) {
        return Err(invalid("concentration detection needs mu > 0"));
    }
    let mut grads = Vec::with_capacity(iterates.len());
    let mut scales = Vec::with_capacity(iterates.len());
    let mut core_masses = Vec::with_capacity(iterates.len());
    let mut lambdas = Vec::with_capacity(iterates.len());
    let floor = 10.0 * g.spacing();
    for u in iterates {
        g.check(u)?;
        let parts = Parts::of(g, u.values(), params.exponent);
        grads.push(parts.grad_sq);
        lambdas.push(parts.multiplier(params) / parts.mass.max(f64::MIN_POSITIVE));
        let s = half_gradient_radius(g, u)?;
        scales.push(s);
        core_masses.push(mass_within(g, u, (2.0 * s).max(floor))? / parts.mass);
    }
    let growth = grads[grads.len() - 1] - grads[0];
    let threshold = 0.8 * t.alpha_bar(params.mu);
    let shrinking = scales[scales.len() - 1] < scales[0];
    let leaking = core_masses.windows(2).all(|w| w[1] <= w[0])
        && core_masses[core_masses.len() - 1] < core_masses[0];
    Ok(ConcentrationReport {
        flagged: growth >= threshold && shrinking && leaking,
        growth,
        threshold,
        scales,
        core_masses,
        lambdas,
    })
}
