//! Dimension constants, closed-form bubbles and the scalar algebra of
//! synchronized solutions. Nothing here touches a grid.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{domain, Error, Result};

/// Tolerance on `alpha + beta == 2*`.
pub const EXPONENT_SUM_TOL: f64 = 1e-12;

/// Number of scan points used by [`sync_roots`].
pub const SYNC_SCAN_POINTS: usize = 10_000;

/// Default upper end of the synchronized-ratio scan.
pub const DEFAULT_R_MAX: f64 = 1e3;

/// Parameters of the coupled critical system
///
/// ```text
/// -Δu = μ₁|u|^{2*-2}u + λα|u|^{α-2}|v|^β u
/// -Δv = μ₂|v|^{2*-2}v + λβ|u|^α|v|^{β-2} v
/// ```
///
/// with `α + β = 2* = 2N/(N-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub dim: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub two_star: f64,
}

impl SystemParams {
    pub fn new(dim: usize, mu1: f64, mu2: f64, lambda: f64, alpha: f64, beta: f64) -> Result<Self> {
        let two_star = critical_exponent(dim)?;
        if !(mu1 > 0.0 && mu1.is_finite()) || !(mu2 > 0.0 && mu2.is_finite()) {
            return domain(format!("mu1 and mu2 must be positive, got {mu1}, {mu2}"));
        }
        if !lambda.is_finite() {
            return domain("lambda must be finite");
        }
        if !(alpha > 1.0) || !(beta > 1.0) {
            return domain(format!("alpha and beta must exceed 1, got {alpha}, {beta}"));
        }
        if (alpha + beta - two_star).abs() > EXPONENT_SUM_TOL {
            return domain(format!(
                "alpha + beta = {} must equal 2* = {two_star}",
                alpha + beta
            ));
        }
        Ok(Self { dim, mu1, mu2, lambda, alpha, beta, two_star })
    }

    /// `α = β = 2*/2`.
    pub fn balanced(dim: usize, mu1: f64, mu2: f64, lambda: f64) -> Result<Self> {
        let half = critical_exponent(dim)? / 2.0;
        Self::new(dim, mu1, mu2, lambda, half, half)
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..*self }
    }

    /// Swaps the roles of the two components (μ₁↔μ₂, α↔β).
    pub fn swapped(&self) -> Self {
        Self {
            mu1: self.mu2,
            mu2: self.mu1,
            alpha: self.beta,
            beta: self.alpha,
            ..*self
        }
    }

    /// `μ₀ = max{μ₁, μ₂}`.
    pub fn mu0(&self) -> f64 {
        self.mu1.max(self.mu2)
    }
}

/// `2* = 2N/(N-2)`.
pub fn critical_exponent(dim: usize) -> Result<f64> {
    if dim < 3 {
        return domain(format!("dimension must be at least 3, got {dim}"));
    }
    let n = dim as f64;
    Ok(2.0 * n / (n - 2.0))
}

/// Area of the unit sphere `S^{k-1}` in `R^k`.
pub fn sphere_area(k: usize) -> f64 {
    let k = k as f64;
    2.0 * std::f64::consts::PI.powf(k / 2.0) / gamma(k / 2.0)
}

/// Best constant of `D^{1,2}(R^N) ↪ L^{2*}(R^N)` (Talenti closed form).
pub fn sobolev_constant(dim: usize) -> Result<f64> {
    critical_exponent(dim)?;
    let n = dim as f64;
    let ratio = gamma(n / 2.0) / gamma(n);
    Ok(std::f64::consts::PI * n * (n - 2.0) * ratio.powf(2.0 / n))
}

/// A dilated and translated standard bubble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleSpec {
    pub epsilon: f64,
    pub center: Vec<f64>,
    pub dim: usize,
}

impl BubbleSpec {
    pub fn new(dim: usize, epsilon: f64, center: Vec<f64>) -> Result<Self> {
        critical_exponent(dim)?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return domain(format!("bubble scale must be positive, got {epsilon}"));
        }
        Ok(Self { epsilon, center, dim })
    }

    /// Bubble centred at the origin, evaluated as a function of `|x|`.
    pub fn centered(dim: usize, epsilon: f64) -> Result<Self> {
        Self::new(dim, epsilon, Vec::new())
    }

    /// Value at a point given by its distance to the centre.
    pub fn radial_value(&self, dist: f64) -> f64 {
        let n = self.dim as f64;
        let rho = dist / self.epsilon;
        self.epsilon.powf((2.0 - n) / 2.0) * standard_bubble(self.dim, rho)
    }

    /// Radial derivative at distance `dist` from the centre.
    pub fn radial_derivative(&self, dist: f64) -> f64 {
        let n = self.dim as f64;
        let rho = dist / self.epsilon;
        let amp = (n * (n - 2.0)).powf((n - 2.0) / 4.0);
        let du = -amp * (n - 2.0) * rho * (1.0 + rho * rho).powf(-n / 2.0);
        self.epsilon.powf((2.0 - n) / 2.0) * du / self.epsilon
    }
}

/// `U(ρ) = [N(N-2)]^{(N-2)/4} (1+ρ²)^{-(N-2)/2}`.
pub fn standard_bubble(dim: usize, rho: f64) -> f64 {
    let n = dim as f64;
    (n * (n - 2.0)).powf((n - 2.0) / 4.0) * (1.0 + rho * rho).powf(-(n - 2.0) / 2.0)
}

/// `ε^{(2-N)/2} U((x-ξ)/ε)`. Missing centre coordinates are taken as zero.
pub fn bubble_value(spec: &BubbleSpec, x: &[f64]) -> f64 {
    let dist2: f64 = x
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            let c = spec.center.get(i).copied().unwrap_or(0.0);
            (xi - c) * (xi - c)
        })
        .sum();
    spec.radial_value(dist2.sqrt())
}

/// `h(r) = μ₁ r^{2*-2} + λα r^{α-2} − λβ r^α − μ₂`.
pub fn h_eval(p: &SystemParams, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return domain(format!("h is defined for r > 0, got {r}"));
    }
    Ok(h_unchecked(p, r))
}

fn h_unchecked(p: &SystemParams, r: f64) -> f64 {
    p.mu1 * r.powf(p.two_star - 2.0) + p.lambda * p.alpha * r.powf(p.alpha - 2.0)
        - p.lambda * p.beta * r.powf(p.alpha)
        - p.mu2
}

/// A positive pair `(s, t)` for which `(s w, t w)` solves the system whenever
/// `w` solves the scalar critical equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynchronizedSolution {
    pub r: f64,
    pub s: f64,
    pub t: f64,
    pub residual1: f64,
    pub residual2: f64,
}

/// Residuals of the two scaling equations
/// `μ₁ s^{2*-2} + λα s^{α-2} t^β = 1` and `μ₂ t^{2*-2} + λβ s^α t^{β-2} = 1`.
pub fn scaling_residuals(p: &SystemParams, s: f64, t: f64) -> (f64, f64) {
    let k = p.two_star - 2.0;
    let r1 = p.mu1 * s.powf(k) + p.lambda * p.alpha * s.powf(p.alpha - 2.0) * t.powf(p.beta) - 1.0;
    let r2 = p.mu2 * t.powf(k) + p.lambda * p.beta * s.powf(p.alpha) * t.powf(p.beta - 2.0) - 1.0;
    (r1, r2)
}

/// All admissible roots of `h` in `(0, r_max]`, sorted by `r`.
///
/// The scan is logarithmic over `[min(r_max·1e-10, 1/r_max), r_max]`; each sign change is
/// bisected in `ln r` down to machine resolution. Roots with
/// `μ₂ + λβ r^α ≤ 0` are discarded. An empty list is a valid answer.
pub fn sync_roots(p: &SystemParams, r_max: f64) -> Result<Vec<SynchronizedSolution>> {
    if !(r_max > 0.0 && r_max.is_finite()) {
        return domain(format!("r_max must be positive, got {r_max}"));
    }
    let lo = (r_max * 1e-10).min(1.0 / r_max).ln();
    let hi = r_max.ln();
    let n = SYNC_SCAN_POINTS;
    let mut samples = Vec::with_capacity(n);
    for j in 0..n {
        let y = lo + (hi - lo) * j as f64 / (n - 1) as f64;
        let r = if j == n - 1 { r_max } else { y.exp() };
        let h = h_unchecked(p, r);
        if !h.is_finite() {
            return Err(Error::Numeric(format!("h({r}) is not finite")));
        }
        samples.push((r, h));
    }

    let mut roots = Vec::new();
    for w in samples.windows(2) {
        let (ra, ha) = w[0];
        let (rb, hb) = w[1];
        if ha == 0.0 {
            roots.push(ra);
        } else if ha * hb < 0.0 {
            roots.push(bisect_log(p, ra, ha, rb));
        }
    }
    if let Some(&(r, h)) = samples.last() {
        if h == 0.0 {
            roots.push(r);
        }
    }

    let k = p.two_star - 2.0;
    let mut out = Vec::new();
    for r in roots {
        let denom = p.mu2 + p.lambda * p.beta * r.powf(p.alpha);
        if !(denom > 0.0) {
            continue;
        }
        let t = denom.powf(-1.0 / k);
        let s = r * t;
        let (residual1, residual2) = scaling_residuals(p, s, t);
        out.push(SynchronizedSolution { r, s, t, residual1, residual2 });
    }
    out.sort_by(|a, b| a.r.total_cmp(&b.r));
    Ok(out)
}

fn bisect_log(p: &SystemParams, mut a: f64, mut ha: f64, mut b: f64) -> f64 {
    let mut best = (a, ha.abs());
    for _ in 0..200 {
        let m = (a.ln() * 0.5 + b.ln() * 0.5).exp();
        if !(m > a && m < b) {
            break;
        }
        let hm = h_unchecked(p, m);
        if hm.abs() < best.1 {
            best = (m, hm.abs());
        }
        if hm == 0.0 || hm.abs() <= 1e-14 {
            return m;
        }
        if ha * hm < 0.0 {
            b = m;
        } else {
            a = m;
            ha = hm;
        }
    }
    let hb = h_unchecked(p, b).abs();
    if hb < best.1 {
        best = (b, hb);
    }
    best.0
}

/// Result of [`shat_lower_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShatBound {
    /// `m = min_{t≥0} (1+t²)/(1+t^{2*}+t^β)^{2/2*}`.
    pub min_ratio: f64,
    /// Where the minimum was found.
    pub argmin: f64,
    /// `S·m/μ̄` with `μ̄ = max{μ₁, μ₂, 2*λ}^{2/2*}`.
    pub bound: f64,
}

/// Lower bound for the coupled Sobolev quotient.
pub fn shat_lower_bound(p: &SystemParams) -> Result<ShatBound> {
    let ts = p.two_star;
    let q = |t: f64| (1.0 + t * t) / (1.0 + t.powf(ts) + t.powf(p.beta)).powf(2.0 / ts);

    const T_MAX: f64 = 100.0;
    const SCAN: usize = 4001;
    let mut best_i = 0;
    let mut best = q(0.0);
    for i in 1..SCAN {
        let t = T_MAX * i as f64 / (SCAN - 1) as f64;
        let v = q(t);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let step = T_MAX / (SCAN - 1) as f64;
    let (mut a, mut b) = (
        (best_i as f64 - 1.0).max(0.0) * step,
        ((best_i + 1) as f64 * step).min(T_MAX),
    );
    // golden section on the bracket around the best scan point
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (q(c), q(d));
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = q(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = q(d);
        }
    }
    let t_star = 0.5 * (a + b);
    let (argmin, min_ratio) = if q(t_star) < best {
        (t_star, q(t_star))
    } else {
        (best_i as f64 * step, best)
    };
    let floor = 2f64.powf(-2.0 / ts);
    if min_ratio < floor * (1.0 - 1e-12) {
        return Err(Error::Numeric(format!(
            "quotient minimum {min_ratio} fell below the proven floor {floor}"
        )));
    }
    let mu_bar = p.mu1.max(p.mu2).max(ts * p.lambda).powf(2.0 / ts);
    let s = sobolev_constant(p.dim)?;
    Ok(ShatBound { min_ratio, argmin, bound: s * min_ratio / mu_bar })
}

/// `(1/N)(μ₁^{-(N-2)/2} + μ₂^{-(N-2)/2}) S^{N/2}`, the unattained infimum of the
/// energy on the Nehari set in the competitive regime.
pub fn nehari_inf_value(p: &SystemParams) -> Result<f64> {
    if !(p.lambda < 0.0) {
        return domain(format!(
            "the Nehari infimum formula holds for lambda < 0, got {}",
            p.lambda
        ));
    }
    let n = p.dim as f64;
    let s = sobolev_constant(p.dim)?;
    let e = -(n - 2.0) / 2.0;
    Ok((p.mu1.powf(e) + p.mu2.powf(e)) * s.powf(n / 2.0) / n)
}

/// Minimal orbit cardinality of the symmetry group on the closed domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OrbitMin {
    Finite(u64),
    Infinite,
}

impl std::fmt::Display for OrbitMin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrbitMin::Finite(k) => write!(f, "{k}"),
            OrbitMin::Infinite => write!(f, "inf"),
        }
    }
}

/// `(1 + min #Gx) μ₀^{(2-N)/2} S^{N/2}`; infinite orbits give `+∞`.
pub fn energy_budget(p: &SystemParams, orbit_min: OrbitMin) -> Result<f64> {
    let k = match orbit_min {
        OrbitMin::Infinite => return Ok(f64::INFINITY),
        OrbitMin::Finite(0) => return domain("orbit_min must be at least 1"),
        OrbitMin::Finite(k) => k as f64,
    };
    let n = p.dim as f64;
    let s = sobolev_constant(p.dim)?;
    Ok((1.0 + k) * p.mu0().powf((2.0 - n) / 2.0) * s.powf(n / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sym(lambda: f64) -> SystemParams {
        SystemParams::balanced(4, 1.0, 1.0, lambda).unwrap()
    }

    #[test]
    fn critical_exponent_values() {
        assert_eq!(critical_exponent(3).unwrap(), 6.0);
        assert_eq!(critical_exponent(4).unwrap(), 4.0);
        assert_eq!(critical_exponent(6).unwrap(), 3.0);
        assert!(critical_exponent(2).is_err());
    }

    #[test]
    fn params_reject_invalid() {
        assert!(SystemParams::new(4, 1.0, 1.0, 0.0, 2.0, 2.5).is_err());
        assert!(SystemParams::new(4, 0.0, 1.0, 0.0, 2.0, 2.0).is_err());
        assert!(SystemParams::new(4, 1.0, 1.0, 0.0, 1.0, 3.0).is_err());
        assert!(SystemParams::new(2, 1.0, 1.0, 0.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn bubble_closed_form_values() {
        let b = BubbleSpec::centered(4, 1.0).unwrap();
        assert_relative_eq!(bubble_value(&b, &[0.0]), 8f64.sqrt(), epsilon = 1e-14);
        assert!(bubble_value(&b, &[1e6]) < 1e-11);
        let b3 = BubbleSpec::centered(3, 2.0).unwrap();
        let expected = 2f64.powf(-0.5) * 3f64.powf(0.25);
        assert_relative_eq!(bubble_value(&b3, &[0.0, 0.0, 0.0]), expected, epsilon = 1e-14);
        assert_relative_eq!(expected, 0.930605, epsilon = 1e-6);
    }

    #[test]
    fn bubble_solves_critical_equation_pointwise() {
        // -ΔU = U^{2*-1} checked with a fine central difference of U'' + (N-1)/r U'
        for dim in [3usize, 4, 5] {
            let b = BubbleSpec::centered(dim, 0.7).unwrap();
            let ts = critical_exponent(dim).unwrap();
            let h = 1e-4;
            for &r in &[0.3, 0.9, 2.5] {
                let d2 = (b.radial_value(r + h) - 2.0 * b.radial_value(r) + b.radial_value(r - h)) / (h * h);
                let d1 = (b.radial_value(r + h) - b.radial_value(r - h)) / (2.0 * h);
                let lap = d2 + (dim as f64 - 1.0) / r * d1;
                let rhs = b.radial_value(r).powf(ts - 1.0);
                assert_relative_eq!(-lap, rhs, max_relative = 1e-5);
                assert_relative_eq!(b.radial_derivative(r), d1, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn h_examples() {
        assert_eq!(h_eval(&sym(0.7), 1.0).unwrap(), 0.0);
        assert_relative_eq!(h_eval(&sym(0.25), 2.0).unwrap(), 1.5, epsilon = 1e-14);
        let p = SystemParams::balanced(4, 2.0, 1.0, 0.0).unwrap();
        assert_eq!(h_eval(&p, 1.0).unwrap(), 1.0);
        assert!(h_eval(&p, 0.0).is_err());
        assert!(h_eval(&p, -1.0).is_err());
    }

    #[test]
    fn h_at_one_identity() {
        let p = SystemParams::new(5, 1.3, 0.6, 0.8, 1.9, 10.0 / 3.0 - 1.9).unwrap();
        let expected = (p.mu1 - p.mu2) + p.lambda * (p.alpha - p.beta);
        assert_relative_eq!(h_eval(&p, 1.0).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn sync_roots_symmetric_cooperative() {
        let roots = sync_roots(&sym(0.25), DEFAULT_R_MAX).unwrap();
        assert_eq!(roots.len(), 1);
        let root = roots[0];
        assert_relative_eq!(root.r, 1.0, epsilon = 1e-12);
        let expected = (2.0f64 / 3.0).sqrt();
        assert_relative_eq!(root.s, expected, epsilon = 1e-10);
        assert_relative_eq!(root.t, expected, epsilon = 1e-10);
        assert!(root.residual1.abs() <= 1e-10 && root.residual2.abs() <= 1e-10);
    }

    #[test]
    fn sync_roots_competitive_rejected() {
        assert!(sync_roots(&sym(-1.0), DEFAULT_R_MAX).unwrap().is_empty());
    }

    #[test]
    fn sync_roots_decoupled() {
        let p = SystemParams::balanced(4, 3.0, 0.5, 0.0).unwrap();
        let roots = sync_roots(&p, DEFAULT_R_MAX).unwrap();
        assert_eq!(roots.len(), 1);
        assert_relative_eq!(roots[0].s, 3f64.powf(-0.5), max_relative = 1e-10);
        assert_relative_eq!(roots[0].t, 0.5f64.powf(-0.5), max_relative = 1e-10);
    }

    #[test]
    fn sobolev_constant_values() {
        assert_relative_eq!(sobolev_constant(4).unwrap(), 10.2591, max_relative = 5e-4);
        assert_relative_eq!(sobolev_constant(3).unwrap(), 5.4779, max_relative = 1e-4);
        assert_relative_eq!(sobolev_constant(6).unwrap(), 19.265, max_relative = 5e-4);
        assert!(sobolev_constant(2).is_err());
    }

    #[test]
    fn shat_examples() {
        let b = shat_lower_bound(&sym(0.1)).unwrap();
        assert_relative_eq!(b.min_ratio, 1.0, epsilon = 1e-10);
        // λ ≤ 1/2*, μ = 1 gives μ̄ = 1
        assert_relative_eq!(b.bound, sobolev_constant(4).unwrap() * b.min_ratio, epsilon = 1e-12);
        let p = SystemParams::new(3, 2.0, 1.0, 0.5, 1.5, 4.5).unwrap();
        let b = shat_lower_bound(&p).unwrap();
        assert!(b.min_ratio >= 2f64.powf(-2.0 / 6.0));
        assert!(b.min_ratio <= 1.0);
    }

    #[test]
    fn nehari_inf_examples() {
        let s = sobolev_constant(4).unwrap();
        let v = nehari_inf_value(&sym(-1.0)).unwrap();
        assert_relative_eq!(v, s * s / 2.0, max_relative = 1e-14);
        assert_relative_eq!(v, 52.625, max_relative = 5e-4);
        let p4 = SystemParams::balanced(4, 4.0, 4.0, -1.0).unwrap();
        assert_relative_eq!(nehari_inf_value(&p4).unwrap(), s * s / 8.0, max_relative = 1e-14);
        let big = SystemParams::balanced(4, 1e12, 1.0, -1.0).unwrap();
        assert_relative_eq!(nehari_inf_value(&big).unwrap(), s * s / 4.0, max_relative = 1e-10);
        assert!(nehari_inf_value(&sym(0.0)).is_err());
    }

    #[test]
    fn energy_budget_examples() {
        let s = sobolev_constant(4).unwrap();
        assert_relative_eq!(
            energy_budget(&sym(-1.0), OrbitMin::Finite(4)).unwrap(),
            5.0 * s * s,
            max_relative = 1e-14
        );
        assert_relative_eq!(5.0 * s * s, 526.25, max_relative = 5e-4);
        assert_eq!(energy_budget(&sym(-1.0), OrbitMin::Infinite).unwrap(), f64::INFINITY);
        let p = SystemParams::balanced(4, 4.0, 1.0, -1.0).unwrap();
        assert_relative_eq!(
            energy_budget(&p, OrbitMin::Finite(1)).unwrap(),
            s * s / 2.0,
            max_relative = 1e-14
        );
    }
}
