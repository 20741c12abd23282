//! Truncated Aubin–Talenti bubbles and the Sobolev constant.
//!
//! `u_ε(r) = η(r) [N(N−2)ε²]^{(N−2)/4} / (ε² + r²)^{(N−2)/2}`, with a cutoff
//! `η` equal to one near the origin and vanishing at the boundary.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::energy::{critical_exponent, energy, EnergyParams};
use crate::error::{invalid, Error, Result};
use crate::exec::{self, Exec};
use crate::grid::{unit_sphere_area, Field, RadialGrid};
use crate::quadrature::GaussLegendre;

/// Smallest admissible `ε / h` for sampling a bubble on a grid.
pub const MIN_CELLS_PER_EPS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CutoffSpec {
    /// `η = 1` on `[0, a]`, quintic smoothstep down to `0` on `[a, R]`.
    SmoothPlateau { plateau_radius: f64 },
    /// `η = 1` on `[0, τ]`, `cos(π(r − τ)/(2(R − τ)))` on `[τ, R]`. Three dimensions only.
    CosineN3 { tau: f64 },
}

impl CutoffSpec {
    /// Plateau over the inner half of the ball.
    pub fn default_plateau(radius: f64) -> Self {
        CutoffSpec::SmoothPlateau {
            plateau_radius: 0.5 * radius,
        }
    }

    pub fn default_cosine(radius: f64) -> Self {
        CutoffSpec::CosineN3 {
            tau: radius / 100.0,
        }
    }

    pub fn validate(&self, dim: usize, radius: f64) -> Result<()> {
        match *self {
            CutoffSpec::SmoothPlateau { plateau_radius: a } => {
                if !(a > 0.0 && a < radius) {
                    return Err(invalid(format!(
                        "plateau radius {a} must lie in (0, {radius})"
                    )));
                }
            }
            CutoffSpec::CosineN3 { tau } => {
                if dim != 3 {
                    return Err(invalid("the cosine cutoff is defined for N = 3 only"));
                }
                if !(tau > 0.0 && tau < radius) {
                    return Err(invalid(format!("tau {tau} must lie in (0, {radius})")));
                }
            }
        }
        Ok(())
    }

    /// `(η(r), η′(r))` on a ball of the given radius.
    pub fn eval(&self, r: f64, radius: f64) -> (f64, f64) {
        if r >= radius {
            return (0.0, 0.0);
        }
        match *self {
            CutoffSpec::SmoothPlateau { plateau_radius: a } => {
                if r <= a {
                    return (1.0, 0.0);
                }
                let w = radius - a;
                let s = (r - a) / w;
                let step = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
                let dstep = 30.0 * s * s * (1.0 - s) * (1.0 - s) / w;
                (1.0 - step, -dstep)
            }
            CutoffSpec::CosineN3 { tau } => {
                if r <= tau {
                    return (1.0, 0.0);
                }
                let k = PI / (2.0 * (radius - tau));
                let x = k * (r - tau);
                (x.cos(), -k * x.sin())
            }
        }
    }
}

/// Analytic radial profile of `u_ε` on a ball.
#[derive(Clone, Copy, Debug)]
pub struct BubbleProfile {
    pub dim: usize,
    pub eps: f64,
    pub radius: f64,
    pub cutoff: CutoffSpec,
    amplitude: f64,
}

impl BubbleProfile {
    pub fn new(dim: usize, radius: f64, eps: f64, cutoff: CutoffSpec) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid(format!("eps must be positive, got {eps}")));
        }
        cutoff.validate(dim, radius)?;
        let nf = dim as f64;
        let amplitude = (nf * (nf - 2.0) * eps * eps).powf((nf - 2.0) / 4.0);
        Ok(Self {
            dim,
            eps,
            radius,
            cutoff,
            amplitude,
        })
    }

    /// Untruncated bubble `U_ε(r)` and its derivative.
    fn entire(&self, r: f64) -> (f64, f64) {
        let nf = self.dim as f64;
        let q = self.eps * self.eps + r * r;
        let u = self.amplitude * q.powf(-(nf - 2.0) / 2.0);
        (u, -(nf - 2.0) * r * u / q)
    }

    pub fn value(&self, r: f64) -> f64 {
        let (e, _) = self.cutoff.eval(r, self.radius);
        if e == 0.0 {
            return 0.0;
        }
        e * self.entire(r).0
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let (e, de) = self.cutoff.eval(r, self.radius);
        let (u, du) = self.entire(r);
        de * u + e * du
    }
}

fn check_resolved(g: &RadialGrid, eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    if eps < MIN_CELLS_PER_EPS * g.spacing() {
        return Err(Error::UnderResolved {
            eps,
            spacing: g.spacing(),
        });
    }
    Ok(())
}

/// `u_ε` sampled at the grid nodes; not normalized.
pub fn bubble(g: &RadialGrid, eps: f64, cutoff: CutoffSpec) -> Result<Field> {
    check_resolved(g, eps)?;
    let prof = BubbleProfile::new(g.dim(), g.radius(), eps, cutoff)?;
    Ok(g.sample(|r| prof.value(r)))
}

/// `v_ε = u_ε / ‖u_ε‖₂`.
pub fn normalized_bubble(g: &RadialGrid, eps: f64, cutoff: CutoffSpec) -> Result<Field> {
    let u = bubble(g, eps, cutoff)?;
    crate::energy::retract(g, &u)
}

const DEFAULT_TRUNCATION: f64 = 1e3;
/// Certified relative remainder of the tail series.
const TAIL_TOL: f64 = 1e-16;

/// Best constant `S` of `‖∇u‖₂² ≥ S‖u‖_{2*}²` in `R^dim`, cached per dimension.
pub fn sobolev_constant(dim: usize) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&s) = cache.lock().expect("cache poisoned").get(&dim) {
        return Ok(s);
    }
    let s = sobolev_quotient(dim, 1.0, DEFAULT_TRUNCATION)?;
    cache.lock().expect("cache poisoned").insert(dim, s);
    Ok(s)
}

/// Sobolev quotient `‖∇U‖₂² / ‖U‖_{2*}²` of the dilated bubble
/// `U(x) = (1 + |x/s|²)^{−(N−2)/2}`: Gauss–Legendre on `[0, T]` plus the
/// binomial series of the power-law tail on `[T, ∞)`.
pub fn sobolev_quotient(dim: usize, dilation: f64, truncation: f64) -> Result<f64> {
    if dim < 3 {
        return Err(invalid(format!("dimension must be at least 3, got {dim}")));
    }
    if !(dilation > 0.0) {
        return Err(invalid("dilation must be positive"));
    }
    let nf = dim as f64;
    let s = dilation;
    let x_max = truncation / s;
    let omega = unit_sphere_area(dim);

    // in the variable x = r/s both integrals scale by powers of s
    let grad_density =
        |x: f64| (nf - 2.0).powi(2) * x.powi(dim as i32 + 1) * (1.0 + x * x).powi(-(dim as i32));
    let pow_density = |x: f64| x.powi(dim as i32 - 1) * (1.0 + x * x).powi(-(dim as i32));
    let (grad_head, pow_head) = integrate_head(x_max, s, &grad_density, &pow_density);
    let grad_tail = (nf - 2.0).powi(2) * tail_series(dim, x_max, 2.0 - nf)?;
    let pow_tail = tail_series(dim, x_max, -nf)?;

    let grad = omega * s.powi(dim as i32 - 2) * (grad_head + grad_tail);
    let pow = omega * s.powi(dim as i32) * (pow_head + pow_tail);
    Ok(grad / pow.powf(2.0 / critical_exponent(dim)))
}

/// Integrals over `[0, x_max]` of both densities. Mesh points are laid out in
/// the physical variable `r = s x` so that the test of dilation invariance
/// exercises a genuinely different discretization.
fn integrate_head(
    x_max: f64,
    s: f64,
    f: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
) -> (f64, f64) {
    let rule = GaussLegendre::new(24);
    let r_max = x_max * s;
    let mut mesh = Vec::new();
    let core = 1.0f64.min(r_max);
    for k in 0..=16 {
        mesh.push(core * k as f64 / 16.0);
    }
    let mut r = core;
    while r < r_max {
        r = (r * 1.2).min(r_max);
        mesh.push(r);
    }
    let (mut a, mut b) = (0.0, 0.0);
    for w in mesh.windows(2) {
        let (x0, x1) = (w[0] / s, w[1] / s);
        if x1 > x0 {
            a += rule.integrate(x0, x1, f);
            b += rule.integrate(x0, x1, g);
        }
    }
    (a, b)
}

/// `∫_T^∞ x^{k0−1}(1 + x^{−2})^{−N} dx` as `Σ_j C(−N, j) T^{k0−2j}/(2j − k0)`,
/// where `k0 < 0`. Successive terms shrink at least by `q = N/T²`, so the
/// remainder after a term `t_j` is below `|t_j| q/(1 − q)`. Fails unless
/// `q ≤ 1/2` and that bound drops below the tail tolerance.
fn tail_series(dim: usize, t: f64, k0: f64) -> Result<f64> {
    let nf = dim as f64;
    let ratio = nf / (t * t);
    if !(t > 1.0) || ratio >= 0.5 {
        return Err(invalid(format!(
            "truncation radius {t} too small to certify the tail bound"
        )));
    }
    let mut sum = 0.0;
    let mut binom = 1.0; // C(−N, j)
    for j in 0..400 {
        let jf = j as f64;
        let term = binom * t.powf(k0 - 2.0 * jf) / (2.0 * jf - k0);
        sum += term;
        if term.abs() * ratio / (1.0 - ratio) <= TAIL_TOL * sum.abs() {
            return Ok(sum);
        }
        binom *= -(nf + jf) / (jf + 1.0);
    }
    Err(invalid(format!(
        "tail series at truncation radius {t} did not converge"
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleRecord {
    pub epsilon: f64,
    /// `‖∇u_ε‖₂²`.
    pub grad_norm_sq: f64,
    /// `‖u_ε‖_{2*}^{2*}`.
    pub crit_norm: f64,
    /// `‖u_ε‖₂²`.
    pub mass_sq: f64,
}

/// The three norms of `u_ε` from the analytic profile, integrated cell by
/// cell on the grid.
pub fn bubble_record(g: &RadialGrid, eps: f64, cutoff: CutoffSpec) -> Result<BubbleRecord> {
    let prof = BubbleProfile::new(g.dim(), g.radius(), eps, cutoff)?;
    let p = critical_exponent(g.dim());
    const ORDER: usize = 10;
    let grad_norm_sq = g.integrate_profile(ORDER, |r| prof.derivative(r).powi(2));
    let crit_norm = g.integrate_profile(ORDER, |r| prof.value(r).abs().powf(p));
    let mass_sq = g.integrate_profile(ORDER, |r| prof.value(r).powi(2));
    Ok(BubbleRecord {
        epsilon: eps,
        grad_norm_sq,
        crit_norm,
        mass_sq,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StruweSlopes {
    /// Slope of `log |‖∇u_ε‖² − S^{N/2}|` against `log ε`.
    pub grad: f64,
    /// Slope of `log |‖u_ε‖_{2*}^{2*} − S^{N/2}|`.
    pub crit: f64,
    /// Slope of `log ‖u_ε‖₂²`, divided by `|ln ε|` first when `N = 4`.
    pub mass: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StruweTable {
    pub dim: usize,
    pub sobolev_power: f64,
    pub records: Vec<BubbleRecord>,
    pub slopes: StruweSlopes,
}

impl StruweTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,grad_norm_sq,crit_norm,mass_sq\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                r.epsilon, r.grad_norm_sq, r.crit_norm, r.mass_sq
            );
        }
        s
    }
}

/// Norms of `u_ε` for every `ε` plus log–log slopes of the deviations.
pub fn struwe_table(
    g: &RadialGrid,
    cutoff: CutoffSpec,
    eps_list: &[f64],
    exec: Exec,
) -> Result<StruweTable> {
    if eps_list.len() < 4 {
        return Err(invalid("at least four eps values are needed to fit slopes"));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("eps values must be strictly decreasing"));
    }
    for &e in eps_list {
        check_resolved(g, e)?;
    }
    let dim = g.dim();
    let sn = sobolev_constant(dim)?.powf(dim as f64 / 2.0);
    let records = exec::map(exec, eps_list, |&e| bubble_record(g, e, cutoff))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let log_eps: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let fit = |ys: Vec<f64>| -> f64 {
        let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
        least_squares_slope(&log_eps, &ly)
    };
    let slopes = StruweSlopes {
        grad: fit(records
            .iter()
            .map(|r| (r.grad_norm_sq - sn).abs())
            .collect()),
        crit: fit(records.iter().map(|r| (r.crit_norm - sn).abs()).collect()),
        mass: fit(records
            .iter()
            .map(|r| {
                if dim == 4 {
                    r.mass_sq / r.epsilon.ln().abs()
                } else {
                    r.mass_sq
                }
            })
            .collect()),
    };
    Ok(StruweTable {
        dim,
        sobolev_power: sn,
        records,
        slopes,
    })
}

pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientRatio {
    /// Extrapolated ratio of the linear coefficients.
    pub ratio: f64,
    /// `π²/(4R²)`.
    pub target: f64,
    /// Raw per-ε ratios `(‖∇u_ε‖² − S^{3/2}) / ‖u_ε‖₂²`.
    pub raw: Vec<f64>,
}

/// In three dimensions `‖∇u_ε‖² = S^{3/2} + aε + O(ε²)` and
/// `‖u_ε‖₂² = bε + O(ε²)`. Estimates `a/b` from a halving sequence of ε by
/// one Richardson step on each coefficient.
pub fn linear_coefficient_ratio(
    g: &RadialGrid,
    cutoff: CutoffSpec,
    eps_list: &[f64],
) -> Result<CoefficientRatio> {
    if g.dim() != 3 {
        return Err(invalid("linear coefficients are defined for N = 3"));
    }
    if eps_list.len() < 2 {
        return Err(invalid("need at least two eps values"));
    }
    for w in eps_list.windows(2) {
        if (w[1] / w[0] - 0.5).abs() > 1e-12 {
            return Err(invalid("eps values must halve successively"));
        }
    }
    let sn = sobolev_constant(3)?.powf(1.5);
    let coeffs: Vec<(f64, f64)> = eps_list
        .iter()
        .map(|&e| {
            let r = bubble_record(g, e, cutoff)?;
            Ok(((r.grad_norm_sq - sn) / e, r.mass_sq / e))
        })
        .collect::<Result<_>>()?;
    let raw = coeffs.iter().map(|(a, b)| a / b).collect();
    let k = coeffs.len();
    let (a0, b0) = coeffs[k - 2];
    let (a1, b1) = coeffs[k - 1];
    let ratio = (2.0 * a1 - a0) / (2.0 * b1 - b0);
    let target = PI * PI / (4.0 * g.radius().powi(2));
    Ok(CoefficientRatio { ratio, target, raw })
}

/// Energies `E(v_ε)` along `ε ∈ eps`, on the grid.
pub fn arc_energies(
    g: &RadialGrid,
    params: &EnergyParams,
    cutoff: CutoffSpec,
    eps: &[f64],
    exec: Exec,
) -> Result<Vec<f64>> {
    exec::map(exec, eps, |&e| {
        let v = normalized_bubble(g, e, cutoff)?;
        energy(g, &v, params)
    })
    .into_iter()
    .collect()
}

/// `sup_{ε₁ ≤ ε ≤ 1} E(v_ε)` sampled on a geometric ε mesh, refined around
/// the discrete maximizer by golden-section search.
pub fn bubble_arc_sup(
    g: &RadialGrid,
    params: &EnergyParams,
    cutoff: CutoffSpec,
    eps1: f64,
    exec: Exec,
) -> Result<(f64, f64)> {
    check_resolved(g, eps1)?;
    let m = 96;
    let eps: Vec<f64> = (0..=m).map(|k| eps1.powf(k as f64 / m as f64)).collect();
    let vals = arc_energies(g, params, cutoff, &eps, exec)?;
    let (imax, _) =
        vals.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    let lo = eps[(imax + 1).min(m)].ln();
    let hi = eps[imax.saturating_sub(1)].ln();
    let f = |t: f64| -> Result<f64> {
        let v = normalized_bubble(g, t.exp(), cutoff)?;
        energy(g, &v, params)
    };
    let (t_best, v_best) = golden_max(lo, hi, 60, f)?;
    if v_best >= vals[imax] {
        Ok((t_best.exp(), v_best))
    } else {
        Ok((eps[imax], vals[imax]))
    }
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_max(
    mut a: f64,
    mut b: f64,
    iters: usize,
    f: impl Fn(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc > fd { (c, fc) } else { (d, fd) })
}
