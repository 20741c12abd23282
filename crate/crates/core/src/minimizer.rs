//! Local minimizer inside the trapping ball and Newton refinement of
//! critical pairs `(u, λ)`.

use serde::{Deserialize, Serialize};

use crate::diagnostics::pohozaev_relative;
use crate::energy::{nonlinearity, require_unit, sobolev_gradient_raw, EnergyParams, Parts};
use crate::error::{invalid, Error, Result};
use crate::grid::{Field, RadialGrid};
use crate::thresholds::ThresholdSet;
use crate::tridiag::solve_pivoted;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    LocalMin,
    MountainPass,
}

impl SolutionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolutionKind::LocalMin => "local_min",
            SolutionKind::MountainPass => "mountain_pass",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "local_min" => Some(SolutionKind::LocalMin),
            "mountain_pass" => Some(SolutionKind::MountainPass),
            _ => None,
        }
    }
}

/// A computed critical point on the unit mass sphere.
#[derive(Clone, Debug)]
pub struct SolutionRecord {
    pub u: Field,
    pub mu: f64,
    pub exponent: f64,
    pub lambda: f64,
    pub energy: f64,
    /// Norm of the residual: H¹₀ norm of the Riemannian gradient for flow
    /// output, H⁻¹ norm of the bordered residual after Newton.
    pub residual: f64,
    pub kind: SolutionKind,
    pub grad_norm_sq: f64,
    pub pohozaev_residual: f64,
    pub iterations: usize,
}

impl SolutionRecord {
    /// Fills the derived quantities from `(u, λ)`.
    pub fn assemble(
        g: &RadialGrid,
        u: Field,
        lambda: f64,
        params: &EnergyParams,
        kind: SolutionKind,
        residual: f64,
        iterations: usize,
    ) -> Result<Self> {
        g.check(&u)?;
        let parts = Parts::of(g, u.values(), params.exponent);
        let pohozaev_residual = pohozaev_relative(g, &u, lambda, params)?;
        Ok(Self {
            mu: params.mu,
            exponent: params.exponent,
            lambda,
            energy: parts.energy(params),
            residual,
            kind,
            grad_norm_sq: parts.grad_sq,
            pohozaev_residual,
            iterations,
            u,
        })
    }

    pub fn params(&self) -> EnergyParams {
        EnergyParams {
            mu: self.mu,
            exponent: self.exponent,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Initial and maximal step length in the H¹₀ metric.
    pub step: f64,
    /// Stopping tolerance on the H¹₀ norm of the Riemannian gradient.
    pub tol: f64,
    pub max_iters: usize,
    /// Ceiling for `‖∇u‖²`; iterates never leave `{‖∇u‖² < trust_alpha}`.
    pub trust_alpha: f64,
}

impl FlowOptions {
    pub fn new(trust_alpha: f64) -> Self {
        Self {
            step: 1.0,
            tol: 1e-8,
            max_iters: 5000,
            trust_alpha,
        }
    }

    pub fn for_mu(t: &ThresholdSet, mu: f64) -> Self {
        Self::new(t.alpha_bar(mu))
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.tol > 0.0 && self.trust_alpha > 0.0) {
            return Err(invalid("step, tol and trust_alpha must be positive"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be positive"));
        }
        Ok(())
    }
}

/// Result of [`solve_local_min`].
#[derive(Clone, Debug)]
pub struct FlowOutcome {
    pub record: SolutionRecord,
    /// Energy of every accepted iterate, starting with the initial guess.
    pub energies: Vec<f64>,
    /// The last few accepted iterates, oldest first.
    pub tail: Vec<Field>,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 30;
const TAIL_LEN: usize = 8;
/// Below this many ulps of `|E|` an energy comparison is roundoff.
const ENERGY_ULPS: f64 = 64.0;

/// Minimizes the energy over `{u ∈ M : ‖∇u‖² < trust_alpha}`.
///
/// Each iteration steps against the H¹₀ Riemannian gradient, replaces the
/// iterate by its absolute value and renormalizes. Steps are halved until the
/// Armijo condition holds and the iterate stays inside the ball. Once the
/// predicted decrease is below floating-point resolution of `E` only
/// `E_new ≤ E_old + 64 ulp` is required.
pub fn solve_local_min(
    g: &RadialGrid,
    params: &EnergyParams,
    init: &Field,
    opts: &FlowOptions,
) -> Result<FlowOutcome> {
    opts.validate()?;
    require_unit(g, init)?;
    let mut u: Vec<f64> = init.values().iter().map(|x| x.abs()).collect();
    normalize(g, &mut u)?;
    let mut parts = Parts::of(g, &u, params.exponent);
    if parts.grad_sq >= opts.trust_alpha {
        return Err(invalid(format!(
            "initial guess has ||grad u||^2 = {} outside the ball of radius {}",
            parts.grad_sq, opts.trust_alpha
        )));
    }
    let mut e = parts.energy(params);
    let mut energies = vec![e];
    let mut tail = vec![Field::new(g.id(), u.clone())];
    let mut step = opts.step;

    for iter in 0..opts.max_iters {
        let (grad, _) = sobolev_gradient_raw(g, &u, params);
        let res_sq = g.dirichlet_raw(&grad);
        let res = res_sq.sqrt();
        if res < opts.tol {
            let lambda = parts.multiplier(params);
            let record = SolutionRecord::assemble(
                g,
                Field::new(g.id(), u),
                lambda,
                params,
                SolutionKind::LocalMin,
                res,
                iter,
            )?;
            return Ok(FlowOutcome {
                record,
                energies,
                tail,
            });
        }

        let mut halvings = 0;
        let mut barrier_hits = 0;
        loop {
            let mut trial: Vec<f64> = u
                .iter()
                .zip(&grad)
                .map(|(a, b)| (a - step * b).abs())
                .collect();
            normalize(g, &mut trial)?;
            let tp = Parts::of(g, &trial, params.exponent);
            let te = tp.energy(params);
            let predicted = ARMIJO * step * res_sq;
            let floor = ENERGY_ULPS * f64::EPSILON * e.abs().max(1.0);
            let decrease_ok = if predicted > floor {
                te <= e - predicted
            } else {
                te <= e + floor
            };
            let inside = tp.grad_sq < opts.trust_alpha;
            if decrease_ok && inside {
                u = trial;
                parts = tp;
                e = te;
                energies.push(e);
                tail.push(Field::new(g.id(), u.clone()));
                if tail.len() > TAIL_LEN {
                    tail.remove(0);
                }
                if halvings == 0 {
                    step = (2.0 * step).min(opts.step);
                }
                break;
            }
            if !inside {
                barrier_hits += 1;
            }
            halvings += 1;
            step *= 0.5;
            if halvings >= MAX_HALVINGS {
                if barrier_hits >= MAX_HALVINGS {
                    return Err(Error::BarrierStuck {
                        grad_norm_sq: parts.grad_sq,
                        ceiling: opts.trust_alpha,
                    });
                }
                return Err(Error::NoConvergence {
                    what: "projected gradient flow (line search)",
                    iterations: iter,
                    residual: res,
                });
            }
        }
    }
    let (grad, _) = sobolev_gradient_raw(g, &u, params);
    Err(Error::NoConvergence {
        what: "projected gradient flow",
        iterations: opts.max_iters,
        residual: g.dirichlet_raw(&grad).sqrt(),
    })
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

/// Target residual for [`newton_refine`].
pub const NEWTON_TOL: f64 = 1e-11;
const NEWTON_MAX_STEPS: usize = 25;

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub record: SolutionRecord,
    /// Residual before each step and after the last one.
    pub residuals: Vec<f64>,
    /// Condition estimates of the linearized operator at each step.
    pub conditions: Vec<f64>,
    /// `H¹₀` norm of each correction `δu`.
    pub corrections: Vec<f64>,
}

/// Bordered residual `(Ku − λWu − μW|u|^{p−2}u, (‖u‖² − 1)/2)` and its norm
/// `‖F₁‖_{H⁻¹} + |F₂|`.
fn bordered_residual(
    g: &RadialGrid,
    u: &[f64],
    lambda: f64,
    params: &EnergyParams,
) -> (Vec<f64>, f64, f64) {
    let ku = g.stiffness_apply(u);
    let f1: Vec<f64> = ku
        .iter()
        .zip(u)
        .zip(g.weights())
        .map(|((k, x), w)| k - w * (lambda * x + params.mu * nonlinearity(*x, params.exponent)))
        .collect();
    let f2 = 0.5 * (g.dot_raw(u, u) - 1.0);
    // ‖F₁‖_{H⁻¹}² = F₁ᵀK⁻¹F₁; reuse the Riesz solve with unit weights
    let y = solve_stiffness(g, &f1);
    let h1: f64 = f1.iter().zip(&y).map(|(a, b)| a * b).sum();
    let norm = h1.max(0.0).sqrt() + f2.abs();
    (f1, f2, norm)
}

fn solve_stiffness(g: &RadialGrid, rhs: &[f64]) -> Vec<f64> {
    // riesz_raw solves K y = W g, so pass g = W⁻¹ rhs
    let scaled: Vec<f64> = rhs.iter().zip(g.weights()).map(|(r, w)| r / w).collect();
    g.riesz_raw(&scaled)
}

/// Newton's method on the stationarity system with the mass constraint,
/// `F(u, λ) = (−Δu − λu − μ|u|^{p−2}u, (‖u‖₂² − 1)/2) = 0`.
pub fn newton_refine(
    g: &RadialGrid,
    u0: &Field,
    lambda0: f64,
    params: &EnergyParams,
    kind: SolutionKind,
) -> Result<NewtonOutcome> {
    g.check(u0)?;
    let n = g.n();
    let p = params.exponent;
    let mut u = u0.values().to_vec();
    let mut lambda = lambda0;
    let mut residuals = Vec::new();
    let mut conditions = Vec::new();
    let mut corrections = Vec::new();
    let off = &g.stiffness().off;

    for step in 0..=NEWTON_MAX_STEPS {
        let (f1, f2, res) = bordered_residual(g, &u, lambda, params);
        residuals.push(res);
        if !res.is_finite() {
            break;
        }
        if res < NEWTON_TOL {
            let record = SolutionRecord::assemble(
                g,
                Field::new(g.id(), u),
                lambda,
                params,
                kind,
                res,
                step,
            )?;
            return Ok(NewtonOutcome {
                record,
                residuals,
                conditions,
                corrections,
            });
        }
        if step == NEWTON_MAX_STEPS {
            break;
        }
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let w = g.weights()[i];
                let x = u[i];
                let dnl = if p == 6.0 {
                    5.0 * x.powi(4)
                } else if p == 4.0 {
                    3.0 * x * x
                } else {
                    (p - 1.0) * x.abs().powf(p - 2.0)
                };
                g.stiffness().diag[i] - w * (lambda + params.mu * dnl)
            })
            .collect();
        let wu: Vec<f64> = u.iter().zip(g.weights()).map(|(x, w)| x * w).collect();
        let mut rhs = vec![f1.iter().map(|x| -x).collect::<Vec<f64>>(), wu.clone()];
        let cond = solve_pivoted(off, &diag, off, &mut rhs)?;
        conditions.push(cond);
        let (x1, x2) = (&rhs[0], &rhs[1]);
        let denom: f64 = wu.iter().zip(x2).map(|(a, b)| a * b).sum();
        if denom.abs() < 1e-300 {
            return Err(Error::Singular {
                what: "bordered Newton system",
                condition: f64::INFINITY,
            });
        }
        let num = -f2 - wu.iter().zip(x1).map(|(a, b)| a * b).sum::<f64>();
        let dl = num / denom;
        let du: Vec<f64> = x1.iter().zip(x2).map(|(a, b)| a + dl * b).collect();
        corrections.push(g.dirichlet_raw(&du).sqrt());
        for (x, d) in u.iter_mut().zip(&du) {
            *x += d;
        }
        lambda += dl;
    }
    Err(Error::NoConvergence {
        what: "bordered Newton",
        iterations: residuals.len().saturating_sub(1),
        residual: *residuals.last().unwrap_or(&f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::multiplier;
    use crate::grid::principal_eigenpair;

    #[test]
    fn kind_round_trip() {
        for k in [SolutionKind::LocalMin, SolutionKind::MountainPass] {
            assert_eq!(SolutionKind::parse(k.as_str()), Some(k));
        }
        assert_eq!(SolutionKind::parse("saddle"), None);
    }

    #[test]
    fn linear_mode_converges_to_eigenfunction() {
        let g = RadialGrid::new(3, 1.0, 1024).unwrap();
        let e = principal_eigenpair(&g).unwrap();
        let params = EnergyParams::critical(3, 0.0).unwrap();
        let init = crate::energy::retract(&g, &g.sample(|r| (1.0 - r) * (1.0 + 3.0 * r))).unwrap();
        let out = solve_local_min(&g, &params, &init, &FlowOptions::new(1e6)).unwrap();
        assert!((out.record.lambda - e.lambda1).abs() < 1e-8);
        assert!((out.record.energy - 0.5 * e.lambda1).abs() < 1e-8);
    }

    #[test]
    fn newton_fixed_point_at_eigenpair() {
        let g = RadialGrid::new(3, 1.0, 1024).unwrap();
        let e = principal_eigenpair(&g).unwrap();
        let params = EnergyParams::critical(3, 0.0).unwrap();
        let out = newton_refine(&g, &e.phi1, e.lambda1, &params, SolutionKind::LocalMin).unwrap();
        assert!(out.residuals.len() <= 2);
        assert!(out.corrections.iter().all(|&c| c < 1e-8));
        assert!((out.record.lambda - e.lambda1).abs() < 1e-9);
    }

    #[test]
    fn flow_rejects_bad_inputs() {
        let g = RadialGrid::new(3, 1.0, 256).unwrap();
        let params = EnergyParams::critical(3, 1.0).unwrap();
        let u = crate::energy::retract(&g, &g.sample(|r| 1.0 - r)).unwrap();
        assert!(solve_local_min(&g, &params, &u.scale(2.0), &FlowOptions::new(100.0)).is_err());
        let mut bad = FlowOptions::new(100.0);
        bad.tol = 0.0;
        assert!(solve_local_min(&g, &params, &u, &bad).is_err());
        // ceiling below the initial gradient norm
        assert!(solve_local_min(&g, &params, &u, &FlowOptions::new(1.0)).is_err());
    }

    #[test]
    fn small_mu_minimizer_is_refined() {
        let g = RadialGrid::new(3, 1.0, 1024).unwrap();
        let t = ThresholdSet::for_grid(&g).unwrap();
        let mu = 0.25 * t.mu_star;
        let params = EnergyParams::critical(3, mu).unwrap();
        let e = principal_eigenpair(&g).unwrap();
        let flow = solve_local_min(&g, &params, &e.phi1, &FlowOptions::for_mu(&t, mu)).unwrap();
        let rec = &flow.record;
        assert!(rec.residual < 1e-8);
        let newton =
            newton_refine(&g, &rec.u, rec.lambda, &params, SolutionKind::LocalMin).unwrap();
        assert!(newton.record.residual < NEWTON_TOL);
        let lam = multiplier(&g, &newton.record.u, &params).unwrap();
        assert!((lam - newton.record.lambda).abs() < 1e-8);
    }
}
