//! Checks derived from the analysis of the system: boundary (Pohozaev)
//! residuals, concentration radii, phase-separation sweeps, energy budgets and
//! Brezis–Lieb splitting deficits for the mixed term.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::energy::{genus_init, PairState};
use crate::error::{domain, Error, Result};
use crate::flow::{flow_to_critical, FlowConfig, FlowReport};
use crate::grid::{laplace_apply, make_bump, Field, Grid, ReducedGeometry};
use crate::scalar::{energy_budget, sphere_area, BubbleSpec, OrbitMin, SystemParams};

/// Relative threshold defining supports in the separation sweep.
pub const SUPPORT_THRESHOLD: f64 = 1e-3;
/// Fraction of each extracted interval excluded at both ends when measuring
/// the limit-equation residual.
pub const SEPARATION_MARGIN: f64 = 0.1;
/// Number of samples of the spherical-cap table.
const CAP_TABLE: usize = 2001;

/// `ω_{N-1}[b^N(u'(b)² + v'(b)²) − a^N(u'(a)² + v'(a)²)] / ‖(u,v)‖²`, which
/// vanishes for solutions on annuli and is strictly positive on balls.
pub fn pohozaev_residual(state: &PairState, params: &SystemParams) -> Result<f64> {
    let grid = state.grid();
    let (a, b) = grid
        .geometry()
        .radial_bounds()
        .ok_or_else(|| Error::Unsupported("Pohozaev residual needs a radial grid".into()))?;
    if params.dim != grid.dim() {
        return domain("parameter dimension differs from the grid dimension");
    }
    let norm = state.norm_sq();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let h = grid.spacing();
    let n = grid.len();
    let d_end = |x: &[f64]| (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * h);
    let d_start = |x: &[f64]| (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * h);
    let (u, v) = (state.u().values(), state.v().values());
    let nn = grid.dim() as i32;
    let outer = b.powi(nn) * (d_end(u).powi(2) + d_end(v).powi(2));
    let inner = if a > 0.0 { a.powi(nn) * (d_start(u).powi(2) + d_start(v).powi(2)) } else { 0.0 };
    Ok(sphere_area(grid.dim()) * (outer - inner) / norm)
}

/// Smallest ball capturing a given amount of `f(u,v)`-mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub epsilon: f64,
    /// Distance of the best centre from the symmetry centre.
    pub center_radius: f64,
    /// Total mass `∫f(u,v)`.
    pub total_mass: f64,
}

/// Fraction of the unit sphere `S^{N-1}` within angle `acos(c)` of a pole,
/// tabulated in `c = cos θ`.
struct CapTable {
    values: Vec<f64>,
}

impl CapTable {
    fn new(dim: usize) -> Self {
        let a = (dim as f64 - 1.0) / 2.0;
        let values = (0..CAP_TABLE)
            .map(|k| {
                let c = -1.0 + 2.0 * k as f64 / (CAP_TABLE - 1) as f64;
                let s2 = (1.0 - c * c).clamp(0.0, 1.0);
                let half = 0.5 * beta_reg(a, 0.5, s2);
                if c >= 0.0 {
                    half
                } else {
                    1.0 - half
                }
            })
            .collect();
        Self { values }
    }

    fn fraction(&self, c: f64) -> f64 {
        if c >= 1.0 {
            return 0.0;
        }
        if c <= -1.0 {
            return 1.0;
        }
        let x = (c + 1.0) * 0.5 * (CAP_TABLE - 1) as f64;
        let k = (x.floor() as usize).min(CAP_TABLE - 2);
        let t = x - k as f64;
        self.values[k] * (1.0 - t) + self.values[k + 1] * t
    }
}

/// Node masses of `μ₁|u|^{2*} + μ₂|v|^{2*} + 2*λ⁺|u|^α|v|^β`.
fn mass_density(grid: &Grid, params: &SystemParams, u: &[f64], v: &[f64]) -> Vec<f64> {
    let lp = params.lambda.max(0.0);
    grid.weights()
        .iter()
        .zip(u.iter().zip(v))
        .map(|(w, (&a, &b))| {
            let (a, b) = (a.abs(), b.abs());
            let mut f = params.mu1 * a.powf(params.two_star) + params.mu2 * b.powf(params.two_star);
            if lp > 0.0 {
                f += params.two_star * lp * a.powf(params.alpha) * b.powf(params.beta);
            }
            w * f
        })
        .collect()
}

/// Mass inside `B_ε(x₀)` with `|x₀| = r0`, shells lumped at the nodes.
fn ball_mass(radii: &[f64], mass: &[f64], caps: &CapTable, r0: f64, eps: f64) -> f64 {
    let lo = radii.partition_point(|&r| r < r0 - eps);
    let hi = radii.partition_point(|&r| r <= r0 + eps);
    let mut acc = 0.0;
    for i in lo..hi {
        let r = radii[i];
        let frac = if r0 == 0.0 || r == 0.0 {
            if (r - r0).abs() <= eps {
                1.0
            } else {
                0.0
            }
        } else {
            caps.fraction((r * r + r0 * r0 - eps * eps) / (2.0 * r * r0))
        };
        acc += mass[i] * frac;
    }
    acc
}

pub(crate) fn concentration_radius(
    grid: &Grid,
    params: &SystemParams,
    u: &[f64],
    v: &[f64],
    fraction: f64,
) -> Result<(f64, f64)> {
    let c = concentration_raw(grid, params, u, v, None, Some(fraction))?;
    Ok((c.epsilon, c.center_radius))
}

fn concentration_raw(
    grid: &Grid,
    params: &SystemParams,
    u: &[f64],
    v: &[f64],
    delta: Option<f64>,
    fraction: Option<f64>,
) -> Result<Concentration> {
    let radii = grid
        .radii()
        .ok_or_else(|| Error::Unsupported("concentration function needs a radial grid".into()))?;
    let mass = mass_density(grid, params, u, v);
    let total: f64 = mass.iter().sum();
    let delta = delta.unwrap_or_else(|| fraction.unwrap_or(0.5) * total);
    if !(delta > 0.0 && delta < total) {
        return domain(format!("delta must lie in (0, {total:.6e}), got {delta:.6e}"));
    }
    let caps = CapTable::new(grid.dim());
    let outer = *radii.last().unwrap();
    let best = |eps: f64| -> (f64, f64) {
        radii.iter().fold((0.0, 0.0), |acc, &r0| {
            let m = ball_mass(radii, &mass, &caps, r0, eps);
            if m > acc.0 {
                (m, r0)
            } else {
                acc
            }
        })
    };
    let (mut lo, mut hi) = (0.0, 2.0 * outer);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if best(mid).0 >= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Concentration { epsilon: hi, center_radius: best(hi).1, total_mass: total })
}

/// The smallest `ε` for which some ball `B_ε(x)` holds `δ` of the
/// `f(u,v)`-mass, and where that ball sits.
pub fn concentration_function(state: &PairState, params: &SystemParams, delta: f64) -> Result<Concentration> {
    concentration_raw(state.grid(), params, state.u().values(), state.v().values(), Some(delta), None)
}

/// `true` iff `‖(u,v)‖²` at the end of the run is within the energy budget.
pub fn budget_check(report: &FlowReport, params: &SystemParams, orbit_min: OrbitMin) -> Result<bool> {
    Ok(report.final_norm_sq <= energy_budget(params, orbit_min)?)
}

/// One rung of the phase-separation ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationRecord {
    pub lambda: f64,
    pub converged: bool,
    /// `∫|u|^α|v|^β`.
    pub overlap: f64,
    pub energy: f64,
    /// Measure of `{|u| > θ_u} ∩ {|v| > θ_v}`, `θ = 10⁻³·max`.
    pub support_gap: f64,
    /// Radial extent of `{|u| > max(|v|, θ_u)}`.
    pub omega1: Option<(f64, f64)>,
    /// Radial extent of `{|v| > max(|u|, θ_v)}`.
    pub omega2: Option<(f64, f64)>,
    /// Measure of the nodes in neither set.
    pub coverage_gap: f64,
    /// Relative residual of `-Δu = μ₁|u|^{2*-2}u` inside `Ω₁`.
    pub residual1: f64,
    /// Relative residual of `-Δv = μ₂|v|^{2*-2}v` inside `Ω₂`.
    pub residual2: f64,
    pub iterations: usize,
}

/// Result of a λ ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub records: Vec<SeparationRecord>,
    pub overlap_decreasing: bool,
    /// Last overlap over first overlap.
    pub overlap_ratio: f64,
    pub domain_measure: f64,
    /// The runs are warm-started descents; they are not certified to be least-energy.
    pub caveat: String,
    /// Final state of the ladder.
    #[serde(skip)]
    pub final_state: Option<PairState>,
}

/// Runs the flow along a decreasing ladder of negative `λ`, each rung warm
/// started from the previous solution.
pub fn separation_sweep(
    grid: &Arc<Grid>,
    base: &SystemParams,
    lambdas: &[f64],
    cfg: &FlowConfig,
) -> Result<SweepOutcome> {
    if lambdas.is_empty() {
        return domain("empty lambda ladder");
    }
    if lambdas.iter().any(|&l| !(l < 0.0)) || lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return domain("lambdas must be negative and strictly decreasing");
    }
    if !grid.is_radial() {
        return Err(Error::Unsupported("separation sweep needs a radial grid".into()));
    }
    let mut records = Vec::with_capacity(lambdas.len());
    let mut warm: Option<PairState> = None;
    let mut last = None;
    for &lambda in lambdas {
        let params = base.with_lambda(lambda);
        let start = match warm.take() {
            Some(s) => PairState::new(s.u().clone(), s.v().clone(), &params)?,
            None => genus_init(grid, 1, &params)?.remove(0),
        };
        let (state, report) = match flow_to_critical(&start, &params, cfg) {
            Err(Error::Projection(_)) => flow_to_critical(&dominant_parts(&start, &params)?, &params, cfg)?,
            other => other?,
        };
        records.push(separation_record(&state, &params, &report)?);
        if report.converged {
            warm = Some(state.clone());
        }
        last = Some(state);
    }
    let overlap_decreasing = records.windows(2).all(|w| w[1].overlap < w[0].overlap);
    let overlap_ratio = records.last().unwrap().overlap / records[0].overlap;
    Ok(SweepOutcome {
        records,
        overlap_decreasing,
        overlap_ratio,
        domain_measure: grid.volume(),
        caveat: "warm-started descent minimizers; not certified least-energy".into(),
        final_state: last,
    })
}

/// Keeps each component only where it dominates the other, which removes the
/// overlap that can make the joint projection impossible at strong repulsion.
fn dominant_parts(state: &PairState, params: &SystemParams) -> Result<PairState> {
    let (u, v) = (state.u().values(), state.v().values());
    let cut = |a: &[f64], b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(&x, &y)| if x.abs() > y.abs() { x } else { 0.0 }).collect()
    };
    let grid = state.grid();
    PairState::new(Field::from_values(grid, cut(u, v))?, Field::from_values(grid, cut(v, u))?, params)
}

fn separation_record(state: &PairState, params: &SystemParams, report: &FlowReport) -> Result<SeparationRecord> {
    let grid = state.grid();
    let radii = grid.radii().expect("radial grid");
    let w = grid.weights();
    let u: Vec<f64> = state.u().values().iter().map(|x| x.abs()).collect();
    let v: Vec<f64> = state.v().values().iter().map(|x| x.abs()).collect();
    let tu = SUPPORT_THRESHOLD * u.iter().cloned().fold(0.0, f64::max);
    let tv = SUPPORT_THRESHOLD * v.iter().cloned().fold(0.0, f64::max);
    let mut support_gap = 0.0;
    let mut overlap = 0.0;
    let mut coverage_gap = 0.0;
    let mut in1 = vec![false; u.len()];
    let mut in2 = vec![false; u.len()];
    for i in 0..u.len() {
        overlap += w[i] * u[i].powf(params.alpha) * v[i].powf(params.beta);
        if u[i] > tu && v[i] > tv {
            support_gap += w[i];
        }
        in1[i] = u[i] > v[i].max(tu);
        in2[i] = v[i] > u[i].max(tv);
        if !in1[i] && !in2[i] {
            coverage_gap += w[i];
        }
    }
    let extent = |mask: &[bool]| -> Option<(usize, usize)> {
        let first = mask.iter().position(|&b| b)?;
        let last = mask.iter().rposition(|&b| b)?;
        Some((first, last))
    };
    let (e1, e2) = (extent(&in1), extent(&in2));
    let lap_u = laplace_apply(state.u());
    let lap_v = laplace_apply(state.v());
    let residual = |range: Option<(usize, usize)>, x: &Field, lap: &Field, mu: f64| -> f64 {
        let Some((lo, hi)) = range else { return f64::INFINITY };
        let margin = ((hi - lo) as f64 * SEPARATION_MARGIN).ceil() as usize;
        let (lo, hi) = (lo + margin, hi.saturating_sub(margin));
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in lo..=hi.max(lo) {
            if !grid.is_free(i) {
                continue;
            }
            let f = mu * crate::energy::signed_pow(x.values()[i], params.two_star);
            num = num.max((lap.values()[i] - f).abs());
            den = den.max(f.abs());
        }
        if den > 0.0 {
            num / den
        } else {
            f64::INFINITY
        }
    };
    Ok(SeparationRecord {
        lambda: params.lambda,
        converged: report.converged,
        overlap,
        energy: state.energy(),
        support_gap,
        omega1: e1.map(|(a, b)| (radii[a], radii[b])),
        omega2: e2.map(|(a, b)| (radii[a], radii[b])),
        coverage_gap,
        residual1: residual(e1, state.u(), &lap_u, params.mu1),
        residual2: residual(e2, state.v(), &lap_v, params.mu2),
        iterations: report.iterations,
    })
}

/// Result of the pointwise mixed-term probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedInequalityProbe {
    /// Empirical constant over `samples` tuples.
    pub c: f64,
    /// Empirical constant over `2·samples` tuples.
    pub c_doubled: f64,
    /// Doubling changed the constant by less than 10%.
    pub stable: bool,
}

/// Smallest `C` such that
/// `||a₁+b₁|^α|a₂+b₂|^β − |a₁|^α|a₂|^β| ≤ ε|a₁|^α|a₂|^β + C(|a₁|^α|b₂|^β + |b₁|^α|a₂|^β + |b₁|^α|b₂|^β)`
/// holds on uniform samples from `[-10, 10]⁴`.
pub fn bl_mixed_inequality_probe(alpha: f64, beta: f64, epsilon: f64, samples: usize, seed: u64) -> Result<MixedInequalityProbe> {
    if !(alpha >= 1.0 && beta >= 1.0) {
        return domain("alpha and beta must be at least 1");
    }
    if !(epsilon > 0.0) {
        return domain("epsilon must be positive");
    }
    if samples == 0 {
        return domain("need at least one sample");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = 0.0f64;
    let mut c_doubled = 0.0f64;
    for k in 0..2 * samples {
        let [a1, a2, b1, b2]: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-10.0..=10.0));
        let ratio = mixed_ratio(alpha, beta, epsilon, a1, a2, b1, b2);
        if k < samples {
            c = c.max(ratio);
        }
        c_doubled = c_doubled.max(ratio);
    }
    let stable = if c_doubled == 0.0 { true } else { (c_doubled - c) / c_doubled < 0.1 };
    Ok(MixedInequalityProbe { c, c_doubled, stable })
}

/// `(LHS − ε|a₁|^α|a₂|^β)⁺` over the bracket; zero when `b = 0`.
pub(crate) fn mixed_ratio(alpha: f64, beta: f64, eps: f64, a1: f64, a2: f64, b1: f64, b2: f64) -> f64 {
    if b1 == 0.0 && b2 == 0.0 {
        return 0.0;
    }
    let p = |x: f64, e: f64| x.abs().powf(e);
    let main = p(a1, alpha) * p(a2, beta);
    let lhs = (p(a1 + b1, alpha) * p(a2 + b2, beta) - main).abs();
    let excess = (lhs - eps * main).max(0.0);
    let bracket = p(a1, alpha) * p(b2, beta) + p(b1, alpha) * p(a2, beta) + p(b1, alpha) * p(b2, beta);
    if excess == 0.0 {
        0.0
    } else {
        excess / bracket
    }
}

/// Which splitting identity [`bl_deficit`] measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlKind {
    /// `∫|u_k|^α|v_k|^β − ∫|u_k−u|^α|v_k−v|^β − ∫|u|^α|v|^β`.
    Product,
    /// `∫|u_k|^{2*} − ∫|u_k−u|^{2*} − ∫|u|^{2*}`.
    Power,
    /// The same splitting for `|u|^{α-2}|v|^β u`, paired with a fixed bump
    /// covering the support of `u`.
    Derivative,
}

/// Deficits of the splitting identity along `u_k = u + U_{ε_k}`,
/// `v_k = v + U_{ε_k}`, with the bubbles centred at the origin of a ball.
pub fn bl_deficit(
    kind: BlKind,
    grid: &Arc<Grid>,
    base: &PairState,
    params: &SystemParams,
    bubble_scales: &[f64],
) -> Result<Vec<f64>> {
    let radius = match *grid.geometry() {
        ReducedGeometry::RadialBall { radius, .. } => radius,
        _ => return Err(Error::Unsupported("bubble sequences need a ball grid".into())),
    };
    if !Arc::ptr_eq(grid, base.grid()) {
        return domain("base state lives on a different grid");
    }
    if bubble_scales.is_empty()
        || bubble_scales.iter().any(|&e| !(e > 0.0))
        || bubble_scales.windows(2).any(|w| !(w[1] < w[0]))
    {
        return domain("bubble scales must be positive and strictly decreasing");
    }
    let core = 4.0 * bubble_scales[0];
    if core >= radius {
        return domain(format!("bubble core {core} leaves the domain of radius {radius}"));
    }
    let radii = grid.radii().unwrap();
    let (u, v) = (base.u().values(), base.v().values());
    let support: Vec<usize> = (0..u.len()).filter(|&i| u[i] != 0.0 || v[i] != 0.0).collect();
    if support.iter().any(|&i| radii[i] <= core) {
        return domain("base support overlaps the bubble core");
    }
    let probe = match kind {
        BlKind::Derivative => {
            let idx: Vec<usize> = (0..u.len()).filter(|&i| u[i] != 0.0).collect();
            if idx.is_empty() {
                vec![0.0; u.len()]
            } else {
                let (lo, hi) = (radii[idx[0]], radii[*idx.last().unwrap()]);
                let h = grid.spacing();
                make_bump(grid, &[0.5 * (lo + hi)], (hi - lo + 2.0 * h).min(2.0 * (radius - 0.5 * (lo + hi)) - h), 1.0)?
                    .into_values()
            }
        }
        _ => Vec::new(),
    };
    let w = grid.weights();
    let (a, b, ts) = (params.alpha, params.beta, params.two_star);
    let p = |x: f64, e: f64| x.abs().powf(e);
    let mut out = Vec::with_capacity(bubble_scales.len());
    for &eps in bubble_scales {
        let bub = BubbleSpec::centered(grid.dim(), eps)?;
        let mut acc = 0.0;
        for i in 0..u.len() {
            let bk = bub.radial_value(radii[i]);
            let (uk, vk) = (u[i] + bk, v[i] + bk);
            let term = match kind {
                BlKind::Product => p(uk, a) * p(vk, b) - p(bk, a) * p(bk, b) - p(u[i], a) * p(v[i], b),
                BlKind::Power => p(uk, ts) - p(bk, ts) - p(u[i], ts),
                BlKind::Derivative => {
                    let g = |x: f64, y: f64| crate::energy::signed_pow(x, a) * p(y, b);
                    (g(uk, vk) - g(bk, bk) - g(u[i], v[i])) * probe[i]
                }
            };
            acc += w[i] * term;
        }
        out.push(acc.abs());
    }
    Ok(out)
}
