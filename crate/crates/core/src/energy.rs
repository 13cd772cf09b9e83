//! The coupled energy, its Sobolev gradient, Nehari-type constraints and the
//! projections onto them.
//!
//! Internally every functional is described by a [`Model`]: one or two
//! components, each with a power coefficient for its positive and negative
//! part, plus the coupling `λ∫|u|^α|v|^β` between two components. The coupled
//! system, the scalar critical equation and the segregated limit functional are
//! all instances.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{make_bump, masked_dot, Field, Grid, ReducedGeometry};
use crate::scalar::SystemParams;

/// Relative residual reached by the scaling projections.
pub const PROJECTION_TOL: f64 = 1e-12;

/// Two states closer than this (normalized H-distance) are equivalent.
pub const EQUIV_THRESHOLD: f64 = 1e-3;

/// Pieces whose peak is below this fraction of the component peak are merged
/// into a neighbouring lobe.
pub(crate) const LOBE_SIGNIFICANCE: f64 = 1e-3;

/// `|x|^{p-2} x`, with `0` at the origin.
#[inline]
pub(crate) fn signed_pow(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(p - 1.0)
    }
}

/// A functional `½Σ‖x_c‖² − (1/2*)Σ∫μ_c(x_c)|x_c|^{2*} − λ∫|x₀|^α|x₁|^β`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Model {
    /// `(μ on x > 0, μ on x < 0)` per component.
    pub mu: Vec<(f64, f64)>,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub two_star: f64,
}

impl Model {
    pub fn system(p: &SystemParams) -> Self {
        Self {
            mu: vec![(p.mu1, p.mu1), (p.mu2, p.mu2)],
            lambda: p.lambda,
            alpha: p.alpha,
            beta: p.beta,
            two_star: p.two_star,
        }
    }

    /// `J(w) = ½‖w‖² − (1/2*)∫(μ₁|w⁺|^{2*} + μ₂|w⁻|^{2*})`.
    pub fn segregated(p: &SystemParams) -> Self {
        Self { mu: vec![(p.mu1, p.mu2)], lambda: 0.0, ..Self::system(p) }
    }

    /// `½‖w‖² − (μ/2*)∫|w|^{2*}`.
    pub fn scalar(p: &SystemParams, mu: f64) -> Self {
        Self { mu: vec![(mu, mu)], lambda: 0.0, ..Self::system(p) }
    }

    fn coupled(&self) -> bool {
        self.mu.len() == 2 && self.lambda != 0.0
    }

    /// Exponent of component `c` in the coupling term.
    fn exponent(&self, c: usize) -> f64 {
        if c == 0 {
            self.alpha
        } else {
            self.beta
        }
    }

    #[inline]
    fn mu_at(&self, c: usize, x: f64) -> f64 {
        if x >= 0.0 {
            self.mu[c].0
        } else {
            self.mu[c].1
        }
    }

    /// Energy split into its Dirichlet, power and coupling parts.
    pub fn parts(&self, grid: &Grid, xs: &[Vec<f64>]) -> EnergyParts {
        let w = grid.weights();
        let dirichlet: Vec<f64> = xs
            .iter()
            .map(|x| masked_dot(grid, x, &grid.stiffness_apply(x)))
            .collect();
        let power: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(c, x)| {
                x.iter()
                    .zip(w)
                    .map(|(&v, wi)| wi * self.mu_at(c, v) * v.abs().powf(self.two_star))
                    .sum()
            })
            .collect();
        let coupling = if xs.len() == 2 {
            coupling_integral(w, &xs[0], &xs[1], self.alpha, self.beta)
        } else {
            0.0
        };
        EnergyParts { dirichlet, power, coupling }
    }

    pub fn energy(&self, grid: &Grid, xs: &[Vec<f64>]) -> f64 {
        self.parts(grid, xs).energy(self)
    }

    /// `K x_c − W f_c(x)` on free nodes (zero on the boundary): the derivative
    /// of the energy as a linear form.
    pub fn residuals(&self, grid: &Grid, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let w = grid.weights();
        let coupled = self.coupled() && xs.len() == 2;
        xs.iter()
            .enumerate()
            .map(|(c, x)| {
                let mut r = grid.stiffness_apply(x);
                let (own, other) = (self.exponent(c), self.exponent(1 - c));
                for i in 0..x.len() {
                    if !grid.is_free(i) {
                        r[i] = 0.0;
                        continue;
                    }
                    let v = x[i];
                    let mut f = self.mu_at(c, v) * signed_pow(v, self.two_star);
                    if coupled {
                        let y = xs[1 - c][i];
                        f += self.lambda * own * signed_pow(v, own) * y.abs().powf(other);
                    }
                    r[i] -= w[i] * f;
                }
                r
            })
            .collect()
    }

    /// Sobolev gradient `K⁻¹ r` per component and the squared H-norm `Σ r·K⁻¹r`.
    pub fn gradient(&self, grid: &Grid, xs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64)> {
        let res = self.residuals(grid, xs);
        let mut grads = Vec::with_capacity(res.len());
        let mut norm_sq = 0.0;
        for r in &res {
            let g = grid.stiffness_solve(r)?;
            norm_sq += masked_dot(grid, r, &g);
            grads.push(g);
        }
        Ok((grads, res, norm_sq.max(0.0)))
    }
}

fn coupling_integral(w: &[f64], x: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    w.iter()
        .zip(x.iter().zip(y))
        .map(|(wi, (&u, &v))| {
            if u == 0.0 || v == 0.0 {
                0.0
            } else {
                wi * u.abs().powf(a) * v.abs().powf(b)
            }
        })
        .sum()
}

/// Pieces of the energy of a state.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EnergyParts {
    /// `‖x_c‖²` per component.
    pub dirichlet: Vec<f64>,
    /// `∫μ_c|x_c|^{2*}` per component.
    pub power: Vec<f64>,
    /// `∫|x₀|^α|x₁|^β` (zero for one component).
    pub coupling: f64,
}

impl EnergyParts {
    pub fn energy(&self, m: &Model) -> f64 {
        0.5 * self.dirichlet.iter().sum::<f64>() - self.power.iter().sum::<f64>() / m.two_star
            - m.lambda * self.coupling
    }

    /// `∂_c E · x_c` per component.
    pub fn nehari(&self, m: &Model) -> Vec<f64> {
        (0..self.dirichlet.len())
            .map(|c| {
                let cpl = if self.dirichlet.len() == 2 {
                    m.lambda * m.exponent(c) * self.coupling
                } else {
                    0.0
                };
                self.dirichlet[c] - self.power[c] - cpl
            })
            .collect()
    }

    /// Nehari residuals divided by the component norms.
    pub fn relative_nehari(&self, m: &Model) -> f64 {
        self.nehari(m)
            .iter()
            .zip(&self.dirichlet)
            .map(|(f, q)| if *q > 0.0 { (f / q).abs() } else { f.abs() })
            .fold(0.0, f64::max)
    }
}

/// How a state is split into independently scaled pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// One scaling per component: the Nehari set.
    Joint,
    /// Positive and negative parts scaled separately.
    SignParts,
    /// Every nodal domain (same-sign connected component) scaled separately.
    Lobes,
}

/// Node sets of the pieces of one component.
pub(crate) fn split_component(grid: &Grid, x: &[f64], mode: Constraint) -> Result<Vec<Vec<usize>>> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) {
        return domain("component vanishes identically");
    }
    match mode {
        Constraint::Joint => Ok(vec![(0..x.len()).collect()]),
        Constraint::SignParts => {
            let pos: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
            let neg: Vec<usize> = (0..x.len()).filter(|&i| x[i] < 0.0).collect();
            if pos.is_empty() || neg.is_empty() {
                return Err(Error::Collapse("one sign part vanished".into()));
            }
            Ok(vec![pos, neg])
        }
        Constraint::Lobes => Ok(lobes(grid, x, peak)),
    }
}

/// Same-sign connected components; small ones and zero nodes join the
/// nearest significant component (breadth-first over the mesh).
fn lobes(grid: &Grid, x: &[f64], peak: f64) -> Vec<Vec<usize>> {
    let n = x.len();
    let mut label = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] || x[start] == 0.0 {
            continue;
        }
        let sign = x[start] > 0.0;
        let mut comp = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let i = comp[head];
            head += 1;
            for j in grid.neighbors(i) {
                if !seen[j] && x[j] != 0.0 && (x[j] > 0.0) == sign {
                    seen[j] = true;
                    comp.push(j);
                }
            }
        }
        let top = comp.iter().fold(0.0f64, |m, &i| m.max(x[i].abs()));
        if top >= LOBE_SIGNIFICANCE * peak {
            for &i in &comp {
                label[i] = groups.len();
            }
            groups.push(comp);
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| label[i] != usize::MAX).collect();
    while let Some(i) = queue.pop_front() {
        for j in grid.neighbors(i) {
            if label[j] == usize::MAX {
                label[j] = label[i];
                groups[label[i]].push(j);
                queue.push_back(j);
            }
        }
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

/// Scales every piece of `xs` so that each satisfies its own Nehari condition.
/// Returns the scalings (per piece, components in order) and the new state.
pub(crate) fn project(
    grid: &Grid,
    model: &Model,
    xs: &[Vec<f64>],
    mode: Constraint,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<usize>)> {
    let mut pieces: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut counts = Vec::with_capacity(xs.len());
    for (c, x) in xs.iter().enumerate() {
        let sets = split_component(grid, x, mode)?;
        counts.push(sets.len());
        for set in sets {
            let mut p = vec![0.0; x.len()];
            for i in set {
                p[i] = x[i];
            }
            pieces.push((c, p));
        }
    }
    let sigma = solve_scalings(grid, model, &pieces)?;
    let mut out = vec![vec![0.0; grid.len()]; xs.len()];
    for ((c, p), s) in pieces.iter().zip(&sigma) {
        for (o, v) in out[*c].iter_mut().zip(p) {
            *o += s * v;
        }
    }
    Ok((sigma, out, counts))
}

struct ScalingSystem<'a> {
    model: &'a Model,
    comp: Vec<usize>,
    q: DMatrix<f64>,
    b: Vec<f64>,
    c: DMatrix<f64>,
}

impl ScalingSystem<'_> {
    /// `G_k / (σ_k² Q_kk)` and its Jacobian with respect to `log σ`.
    fn eval(&self, y: &[f64], want_jac: bool) -> (DVector<f64>, Option<DMatrix<f64>>) {
        let n = y.len();
        let m = self.model;
        let sig: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let coupled = m.coupled();
        let mut g = DVector::zeros(n);
        let mut cpl = vec![0.0; n];
        for k in 0..n {
            let mut acc = 0.0;
            for l in 0..n {
                if self.comp[l] == self.comp[k] {
                    acc += sig[k] * sig[l] * self.q[(k, l)];
                } else if coupled {
                    cpl[k] += sig[l].powf(m.exponent(self.comp[l])) * self.c[(k, l)];
                }
            }
            let ek = m.exponent(self.comp[k]);
            acc -= sig[k].powf(m.two_star) * self.b[k];
            if coupled {
                acc -= m.lambda * ek * sig[k].powf(ek) * cpl[k];
            }
            g[k] = acc;
        }
        let scale: Vec<f64> = (0..n).map(|k| 1.0 / (sig[k] * sig[k] * self.q[(k, k)])).collect();
        let h = DVector::from_iterator(n, (0..n).map(|k| g[k] * scale[k]));
        if !want_jac {
            return (h, None);
        }
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let ek = m.exponent(self.comp[k]);
            for mm in 0..n {
                let d = if mm == k {
                    let same: f64 = (0..n)
                        .filter(|&l| self.comp[l] == self.comp[k])
                        .map(|l| sig[k] * sig[l] * self.q[(k, l)])
                        .sum();
                    let mut d = same + sig[k] * sig[k] * self.q[(k, k)]
                        - m.two_star * sig[k].powf(m.two_star) * self.b[k];
                    if coupled {
                        d -= m.lambda * ek * ek * sig[k].powf(ek) * cpl[k];
                    }
                    d - 2.0 * g[k]
                } else if self.comp[mm] == self.comp[k] {
                    sig[k] * sig[mm] * self.q[(k, mm)]
                } else if coupled {
                    let em = m.exponent(self.comp[mm]);
                    -m.lambda * ek * em * sig[k].powf(ek) * sig[mm].powf(em) * self.c[(k, mm)]
                } else {
                    0.0
                };
                jac[(k, mm)] = d * scale[k];
            }
        }
        (h, Some(jac))
    }
}

fn solve_scalings(grid: &Grid, model: &Model, pieces: &[(usize, Vec<f64>)]) -> Result<Vec<f64>> {
    let n = pieces.len();
    let w = grid.weights();
    let kp: Vec<Vec<f64>> = pieces.iter().map(|(_, p)| grid.stiffness_apply(p)).collect();
    let mut q = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(n, n);
    let mut b = vec![0.0; n];
    for k in 0..n {
        let (ck, pk) = (&pieces[k].0, &pieces[k].1);
        for l in 0..n {
            let (cl, pl) = (&pieces[l].0, &pieces[l].1);
            if ck == cl {
                q[(k, l)] = masked_dot(grid, pk, &kp[l]);
            } else if model.coupled() {
                c[(k, l)] = coupling_integral(w, pk, pl, model.exponent(*ck), model.exponent(*cl));
            }
        }
        b[k] = pk
            .iter()
            .zip(w)
            .map(|(&v, wi)| wi * model.mu_at(*ck, v) * v.abs().powf(model.two_star))
            .sum();
        if !(q[(k, k)] > 0.0) || !(b[k] > 0.0) {
            return domain("cannot scale a piece with zero norm");
        }
    }
    let sys = ScalingSystem {
        model,
        comp: pieces.iter().map(|(c, _)| *c).collect(),
        q,
        b,
        c,
    };
    let k2 = model.two_star - 2.0;
    let mut y: Vec<f64> = (0..n).map(|k| (sys.q[(k, k)] / sys.b[k]).ln() / k2).collect();
    if let Some(sol) = newton(&sys, &mut y) {
        return Ok(sol);
    }
    let mut y: Vec<f64> = (0..n).map(|k| (sys.q[(k, k)] / sys.b[k]).ln() / k2).collect();
    gauss_seidel(&sys, &mut y)
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x.abs()) })
}

fn newton(sys: &ScalingSystem, y: &mut [f64]) -> Option<Vec<f64>> {
    let (mut h, _) = sys.eval(y, false);
    let mut res = inf_norm(&h);
    for _ in 0..100 {
        if res <= PROJECTION_TOL {
            return Some(y.iter().map(|v| v.exp()).collect());
        }
        let (_, jac) = sys.eval(y, true);
        let step = jac?.lu().solve(&(-&h))?;
        let cap = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut t = if cap > 1.0 { 1.0 / cap } else { 1.0 };
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            let (ht, _) = sys.eval(&trial, false);
            let rt = inf_norm(&ht);
            if rt < res {
                y.copy_from_slice(&trial);
                h = ht;
                res = rt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (res <= PROJECTION_TOL).then(|| y.iter().map(|v| v.exp()).collect())
}

/// Coordinate-wise bisection in `log σ_k`, sweeping until all residuals vanish.
fn gauss_seidel(sys: &ScalingSystem, y: &mut [f64]) -> Result<Vec<f64>> {
    let n = y.len();
    let comp_k = |y: &[f64], k: usize| sys.eval(y, false).0[k];
    for _ in 0..500 {
        let (h, _) = sys.eval(y, false);
        if inf_norm(&h) <= PROJECTION_TOL {
            return Ok(y.iter().map(|v| v.exp()).collect());
        }
        for k in 0..n {
            let y0 = y[k];
            let mut lo = y0 - 1.0;
            let mut hi = y0 + 1.0;
            let mut found = false;
            for _ in 0..8 {
                y[k] = lo;
                let flo = comp_k(y, k);
                y[k] = hi;
                let fhi = comp_k(y, k);
                if flo > 0.0 && fhi < 0.0 {
                    found = true;
                    break;
                }
                lo -= 2.0 * (hi - lo);
                hi += 2.0 * (hi - lo);
            }
            if !found {
                return Err(Error::Projection("no positive scaling brackets the constraint".into()));
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                y[k] = mid;
                let f = comp_k(y, k);
                if f > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            y[k] = 0.5 * (lo + hi);
        }
    }
    let (h, _) = sys.eval(y, false);
    if inf_norm(&h) <= 1e-10 {
        Ok(y.iter().map(|v| v.exp()).collect())
    } else {
        Err(Error::Projection(format!(
            "scaling iteration stalled at residual {:.3e}",
            inf_norm(&h)
        )))
    }
}

/// A candidate `(u, v)` with its energy, Nehari residuals and gradient norm.
#[derive(Debug, Clone)]
pub struct PairState {
    u: Field,
    v: Field,
    energy: f64,
    residuals: (f64, f64),
    norms: (f64, f64),
    grad_norm: f64,
}

impl PairState {
    /// Builds a state (boundary values are zeroed) and evaluates its cache.
    pub fn new(u: Field, v: Field, params: &SystemParams) -> Result<Self> {
        if !u.same_grid(&v) {
            return domain("u and v must live on the same grid");
        }
        let grid = u.grid().clone();
        let xs = vec![u.with_dirichlet().into_values(), v.with_dirichlet().into_values()];
        Self::from_raw(&grid, xs, params)
    }

    pub(crate) fn from_raw(grid: &Arc<Grid>, xs: Vec<Vec<f64>>, params: &SystemParams) -> Result<Self> {
        let model = Model::system(params);
        let parts = model.parts(grid, &xs);
        let neh = parts.nehari(&model);
        let (_, _, gsq) = model.gradient(grid, &xs)?;
        let energy = parts.energy(&model);
        if !energy.is_finite() {
            return Err(Error::Numeric("energy is not finite".into()));
        }
        let mut it = xs.into_iter();
        let u = Field::from_values(grid, it.next().unwrap())?;
        let v = Field::from_values(grid, it.next().unwrap())?;
        Ok(Self {
            u,
            v,
            energy,
            residuals: (neh[0], neh[1]),
            norms: (parts.dirichlet[0], parts.dirichlet[1]),
            grad_norm: gsq.sqrt(),
        })
    }

    pub fn u(&self) -> &Field {
        &self.u
    }

    pub fn v(&self) -> &Field {
        &self.v
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `(∂_uE·u, ∂_vE·v)`.
    pub fn nehari_residuals(&self) -> (f64, f64) {
        self.residuals
    }

    /// Nehari residuals relative to `‖u‖²` and `‖v‖²`.
    pub fn relative_nehari(&self) -> f64 {
        let rel = |f: f64, q: f64| if q > 0.0 { (f / q).abs() } else { f.abs() };
        rel(self.residuals.0, self.norms.0).max(rel(self.residuals.1, self.norms.1))
    }

    /// `(‖u‖², ‖v‖²)`.
    pub fn norms_sq(&self) -> (f64, f64) {
        self.norms
    }

    /// `‖(u, v)‖² = ‖u‖² + ‖v‖²`.
    pub fn norm_sq(&self) -> f64 {
        self.norms.0 + self.norms.1
    }

    /// H-norm of the Sobolev gradient.
    pub fn grad_norm(&self) -> f64 {
        self.grad_norm
    }

    pub(crate) fn raw(&self) -> Vec<Vec<f64>> {
        vec![self.u.values().to_vec(), self.v.values().to_vec()]
    }

    /// `(|u|, |v|)`.
    pub fn abs(&self, params: &SystemParams) -> Result<Self> {
        Self::new(self.u.abs(), self.v.abs(), params)
    }
}

/// Scalings `(s, t)` applied to `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NehariScaling {
    pub s: f64,
    pub t: f64,
}

/// `E(u, v)`.
pub fn energy(state: &PairState, params: &SystemParams) -> f64 {
    Model::system(params).energy(state.grid(), &state.raw())
}

/// Sobolev gradient of `E` and its H-norm.
#[derive(Debug, Clone)]
pub struct PairGradient {
    pub gu: Field,
    pub gv: Field,
    pub norm: f64,
}

impl PairGradient {
    /// `⟨g, (φ, ψ)⟩_H`, the derivative of `E` in direction `(φ, ψ)`.
    pub fn pairing(&self, phi: &Field, psi: &Field) -> f64 {
        self.gu.dirichlet_inner(phi) + self.gv.dirichlet_inner(psi)
    }
}

/// The gradient of `E` in the `D^{1,2}_0` inner product.
pub fn grad(state: &PairState, params: &SystemParams) -> Result<PairGradient> {
    let grid = state.grid();
    let (g, _, nsq) = Model::system(params).gradient(grid, &state.raw())?;
    let mut it = g.into_iter();
    Ok(PairGradient {
        gu: Field::from_values(grid, it.next().unwrap())?,
        gv: Field::from_values(grid, it.next().unwrap())?,
        norm: nsq.sqrt(),
    })
}

/// `(∂_uE·u, ∂_vE·v)`.
pub fn nehari_residuals(state: &PairState, params: &SystemParams) -> (f64, f64) {
    let m = Model::system(params);
    let n = m.parts(state.grid(), &state.raw()).nehari(&m);
    (n[0], n[1])
}

/// Scales `(u, v)` onto the Nehari set.
pub fn nehari_project(state: &PairState, params: &SystemParams) -> Result<(NehariScaling, PairState)> {
    check_nontrivial(state)?;
    let grid = state.grid();
    let (sig, xs, _) = project(grid, &Model::system(params), &state.raw(), Constraint::Joint)?;
    let scaled = PairState::from_raw(grid, xs, params)?;
    Ok((NehariScaling { s: sig[0], t: sig[1] }, scaled))
}

/// Independent single-field Nehari scalings `(s_u u, t_v v)`.
pub fn rho_project(state: &PairState, params: &SystemParams) -> Result<PairState> {
    check_nontrivial(state)?;
    let grid = state.grid();
    let model = Model::system(params);
    let xs = state.raw();
    let parts = model.parts(grid, &xs);
    let k = params.two_star - 2.0;
    let scaled: Vec<Vec<f64>> = xs
        .into_iter()
        .enumerate()
        .map(|(c, x)| {
            let s = (parts.dirichlet[c] / parts.power[c]).powf(1.0 / k);
            x.into_iter().map(|v| s * v).collect()
        })
        .collect();
    PairState::from_raw(grid, scaled, params)
}

fn check_nontrivial(state: &PairState) -> Result<()> {
    if state.u.max_abs() == 0.0 || state.v.max_abs() == 0.0 {
        return domain("both components must be nonzero");
    }
    Ok(())
}

/// Window layout along the first reduced axis for `2n` disjoint bumps.
fn genus_windows(grid: &Grid, n: usize) -> Result<(f64, f64, Option<(f64, f64)>)> {
    if n == 0 {
        return domain("need at least one start");
    }
    let per_window = grid.resolution() / (2 * n);
    if per_window < 4 {
        return domain(format!(
            "{} windows need at least {} cells, grid has {}",
            2 * n,
            8 * n,
            grid.resolution()
        ));
    }
    Ok(match *grid.geometry() {
        ReducedGeometry::RadialAnnulus { inner, outer, .. } => (inner, outer, None),
        ReducedGeometry::RadialBall { radius, .. } => (0.0, radius, None),
        ReducedGeometry::Biradial { s, t, .. } => (s.0, s.1, Some(t)),
    })
}

/// The bumps `ψ(e_i) = (u_i, v_i)` before projection: `u_i` in window `i`,
/// `v_i` in window `n + i`.
pub(crate) fn genus_bumps(grid: &Arc<Grid>, n: usize) -> Result<Vec<(Field, Field)>> {
    let (lo, hi, t) = genus_windows(grid, n)?;
    let width = (hi - lo) / (2 * n) as f64;
    let bump = |k: usize| -> Result<Field> {
        let c = lo + width * (k as f64 + 0.5);
        match t {
            None => make_bump(grid, &[c], 0.9 * width, 1.0),
            Some((t0, t1)) => make_bump(grid, &[c, 0.5 * (t0 + t1)], 0.9 * width.min(t1 - t0), 1.0),
        }
    };
    (0..n).map(|i| Ok((bump(i)?, bump(n + i)?))).collect()
}

/// `n` segregated starting pairs on the Nehari set, pairwise disjoint.
pub fn genus_init(grid: &Arc<Grid>, n: usize, params: &SystemParams) -> Result<Vec<PairState>> {
    genus_bumps(grid, n)?
        .into_iter()
        .map(|(u, v)| rho_project(&PairState::new(u, v, params)?, params))
        .collect()
}

/// Normalized H-distance from `a` to the closest of the eight images
/// `±(u,v), ±(u,−v), ±(v,u), ±(v,−u)` of `b`.
pub fn equiv_distance(a: &PairState, b: &PairState) -> f64 {
    assert!(a.u.same_grid(&b.u), "states live on different grids");
    let scale = a.norm_sq().max(b.norm_sq()).sqrt();
    if scale == 0.0 {
        return 0.0;
    }
    let grid = a.grid();
    let bu = b.u.values();
    let bv = b.v.values();
    let mut best = f64::INFINITY;
    for swap in [false, true] {
        let (p, q) = if swap { (bv, bu) } else { (bu, bv) };
        for su in [1.0, -1.0] {
            for sv in [1.0, -1.0] {
                let du: Vec<f64> = a.u.values().iter().zip(p).map(|(x, y)| x - su * y).collect();
                let dv: Vec<f64> = a.v.values().iter().zip(q).map(|(x, y)| x - sv * y).collect();
                let d = masked_dot(grid, &du, &grid.stiffness_apply(&du))
                    + masked_dot(grid, &dv, &grid.stiffness_apply(&dv));
                best = best.min(d.max(0.0).sqrt());
            }
        }
    }
    best / scale
}
