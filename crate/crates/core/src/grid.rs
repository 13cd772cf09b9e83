//! Reduced discretizations of symmetric domains.
//!
//! Radial domains (balls and annuli in `R^N`) reduce to an interval in `r`;
//! `O(m)×O(n)`-invariant domains reduce to a rectangle in `(s, t) = (|x|, |y|)`.
//! Each axis is a vertex-centred finite-volume scheme for the orbit density
//! `σ r^{k-1}`: node masses are exact shell volumes of the control cells and
//! fluxes are evaluated at cell midpoints. The discrete `-Δ = M⁻¹K` is then
//! symmetric in the weighted inner product, exact on `r²`, and second-order
//! accurate up to and including a ball centre.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalar::{critical_exponent, sphere_area, OrbitMin};

/// Smallest accepted resolution (cells per axis).
pub const MIN_RESOLUTION: usize = 16;

/// The symmetry-reduced domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReducedGeometry {
    /// `{a < |x| < b}` in `R^dim`.
    RadialAnnulus { dim: usize, inner: f64, outer: f64 },
    /// `{|x| < radius}` in `R^dim`.
    RadialBall { dim: usize, radius: f64 },
    /// `{(x, y) ∈ R^m × R^n : s_lo < |x| < s_hi, t_lo < |y| < t_hi}`.
    Biradial { m: usize, n: usize, s: (f64, f64), t: (f64, f64) },
}

impl ReducedGeometry {
    pub fn annulus(dim: usize, inner: f64, outer: f64) -> Self {
        Self::RadialAnnulus { dim, inner, outer }
    }

    pub fn ball(dim: usize, radius: f64) -> Self {
        Self::RadialBall { dim, radius }
    }

    pub fn biradial(m: usize, n: usize, s: (f64, f64), t: (f64, f64)) -> Self {
        Self::Biradial { m, n, s, t }
    }

    /// Ambient dimension `N`.
    pub fn dim(&self) -> usize {
        match *self {
            Self::RadialAnnulus { dim, .. } | Self::RadialBall { dim, .. } => dim,
            Self::Biradial { m, n, .. } => m + n,
        }
    }

    pub fn is_radial(&self) -> bool {
        !matches!(self, Self::Biradial { .. })
    }

    /// Radial interval `(a, b)`; `None` for biradial domains.
    pub fn radial_bounds(&self) -> Option<(f64, f64)> {
        match *self {
            Self::RadialAnnulus { inner, outer, .. } => Some((inner, outer)),
            Self::RadialBall { radius, .. } => Some((0.0, radius)),
            Self::Biradial { .. } => None,
        }
    }

    /// Smallest orbit of the symmetry group on the closed domain: the ball
    /// contains the fixed centre, every other geometry only positive-dimensional
    /// orbits.
    pub fn orbit_min(&self) -> OrbitMin {
        match self {
            Self::RadialBall { .. } => OrbitMin::Finite(1),
            _ => OrbitMin::Infinite,
        }
    }

    pub fn validate(&self) -> Result<()> {
        critical_exponent(self.dim())?;
        let ok_interval = |a: f64, b: f64| a.is_finite() && b.is_finite() && a >= 0.0 && a < b;
        match *self {
            Self::RadialAnnulus { inner, outer, .. } => {
                if !ok_interval(inner, outer) || inner <= 0.0 {
                    return domain(format!("annulus needs 0 < a < b, got ({inner}, {outer})"));
                }
            }
            Self::RadialBall { radius, .. } => {
                if !ok_interval(0.0, radius) {
                    return domain(format!("ball radius must be positive, got {radius}"));
                }
            }
            Self::Biradial { m, n, s, t } => {
                if m < 2 || n < 2 {
                    return domain(format!("biradial blocks need m, n >= 2, got ({m}, {n})"));
                }
                if !ok_interval(s.0, s.1) || !ok_interval(t.0, t.1) || s.0 <= 0.0 || t.0 <= 0.0 {
                    return domain("biradial ranges need 0 < lo < hi in both variables");
                }
            }
        }
        Ok(())
    }
}

/// One reduced coordinate with its weighted mass and stiffness.
#[derive(Debug, Clone)]
struct Axis {
    nodes: Vec<f64>,
    h: f64,
    /// Control-volume measure per node.
    mass: Vec<f64>,
    /// Flux coefficient per cell, `σ r_{i+1/2}^{k-1} / h`.
    cell: Vec<f64>,
    /// First unknown node (0 when the axis starts at a symmetry centre).
    first_free: usize,
}

impl Axis {
    fn new(lo: f64, hi: f64, cells: usize, orbit_dim: usize) -> Self {
        let h = (hi - lo) / cells as f64;
        let nodes: Vec<f64> = (0..=cells).map(|i| lo + h * i as f64).collect();
        let sigma = sphere_area(orbit_dim);
        let k = orbit_dim as i32;
        // control volume of node i is [r_{i-1/2}, r_{i+1/2}] clipped to [lo, hi]
        let face = |i: usize| (lo + h * (i as f64 + 0.5)).min(hi);
        let shell = |a: f64, b: f64| sigma * (b.powi(k) - a.powi(k)) / k as f64;
        let cell: Vec<f64> = (0..cells)
            .map(|i| sigma * face(i).powi(k - 1) / h)
            .collect();
        let mass: Vec<f64> = (0..=cells)
            .map(|i| {
                let left = if i == 0 { lo } else { face(i - 1) };
                shell(left, face(i))
            })
            .collect();
        let first_free = if lo == 0.0 { 0 } else { 1 };
        Self { nodes, h, mass, cell, first_free }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn last_free(&self) -> usize {
        self.nodes.len() - 2
    }

    fn is_free(&self, i: usize) -> bool {
        i >= self.first_free && i <= self.last_free()
    }

    fn free_range(&self) -> std::ops::RangeInclusive<usize> {
        self.first_free..=self.last_free()
    }

    /// `(K u)_i` for a free node with Dirichlet data outside the free range.
    fn stiffness_row(&self, u: impl Fn(usize) -> f64, i: usize) -> f64 {
        let ui = u(i);
        let mut acc = 0.0;
        if i > 0 {
            let left = if self.is_free(i - 1) { u(i - 1) } else { 0.0 };
            acc += self.cell[i - 1] * (ui - left);
        }
        let right = if self.is_free(i + 1) { u(i + 1) } else { 0.0 };
        acc += self.cell[i] * (ui - right);
        acc
    }

    /// Symmetric eigen-decomposition of `M^{-1/2} K M^{-1/2}` on the free nodes.
    fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let idx: Vec<usize> = self.free_range().collect();
        let n = idx.len();
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (k, &i) in idx.iter().enumerate() {
            let left = if i > 0 { self.cell[i - 1] } else { 0.0 };
            a[(k, k)] = (left + self.cell[i]) / self.mass[i];
            if k + 1 < n {
                let off = -self.cell[i] / (self.mass[i] * self.mass[i + 1]).sqrt();
                a[(k, k + 1)] = off;
                a[(k + 1, k)] = off;
            }
        }
        let eig = SymmetricEigen::new(a);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    }
}

#[derive(Debug, Clone)]
struct TensorEigen {
    s_vals: Vec<f64>,
    s_vecs: DMatrix<f64>,
    t_vals: Vec<f64>,
    t_vecs: DMatrix<f64>,
}

/// A uniform reduced mesh with quadrature weights.
#[derive(Debug, Clone)]
pub struct Grid {
    geometry: ReducedGeometry,
    resolution: usize,
    axes: Vec<Axis>,
    weights: Vec<f64>,
    eigen: Option<TensorEigen>,
}

/// Builds the mesh with `resolution` cells per reduced axis.
pub fn build_grid(geometry: ReducedGeometry, resolution: usize) -> Result<Arc<Grid>> {
    Grid::new(geometry, resolution).map(Arc::new)
}

impl Grid {
    pub fn new(geometry: ReducedGeometry, resolution: usize) -> Result<Self> {
        geometry.validate()?;
        if resolution < MIN_RESOLUTION {
            return domain(format!(
                "resolution must be at least {MIN_RESOLUTION}, got {resolution}"
            ));
        }
        let axes = match geometry {
            ReducedGeometry::RadialAnnulus { dim, inner, outer } => {
                vec![Axis::new(inner, outer, resolution, dim)]
            }
            ReducedGeometry::RadialBall { dim, radius } => vec![Axis::new(0.0, radius, resolution, dim)],
            ReducedGeometry::Biradial { m, n, s, t } => vec![
                Axis::new(s.0, s.1, resolution, m),
                Axis::new(t.0, t.1, resolution, n),
            ],
        };
        let weights = if axes.len() == 1 {
            axes[0].mass.clone()
        } else {
            let (a, b) = (&axes[0], &axes[1]);
            a.mass
                .iter()
                .flat_map(|ms| b.mass.iter().map(move |mt| ms * mt))
                .collect()
        };
        let eigen = if axes.len() == 2 {
            let (s_vals, s_vecs) = axes[0].eigen();
            let (t_vals, t_vecs) = axes[1].eigen();
            Some(TensorEigen { s_vals, s_vecs, t_vals, t_vecs })
        } else {
            None
        };
        Ok(Self { geometry, resolution, axes, weights, eigen })
    }

    pub fn geometry(&self) -> &ReducedGeometry {
        &self.geometry
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn is_radial(&self) -> bool {
        self.axes.len() == 1
    }

    /// Number of nodes, boundary included.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Node counts along each reduced axis.
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    /// Mesh spacing (largest over the axes).
    pub fn spacing(&self) -> f64 {
        self.axes.iter().map(|a| a.h).fold(0.0, f64::max)
    }

    /// Quadrature weight of every node, orbit volume included.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sum of the weights, i.e. the volume of the full domain in `R^N`.
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Reduced coordinates of a node: `[r]` or `[s, t]`.
    pub fn coords(&self, idx: usize) -> Vec<f64> {
        match self.axes.as_slice() {
            [a] => vec![a.nodes[idx]],
            [a, b] => {
                let nt = b.len();
                vec![a.nodes[idx / nt], b.nodes[idx % nt]]
            }
            _ => unreachable!(),
        }
    }

    /// Radial node positions (radial grids only).
    pub fn radii(&self) -> Option<&[f64]> {
        self.is_radial().then(|| self.axes[0].nodes.as_slice())
    }

    /// Whether the node carries an unknown (not on the Dirichlet boundary).
    pub fn is_free(&self, idx: usize) -> bool {
        match self.axes.as_slice() {
            [a] => a.is_free(idx),
            [a, b] => {
                let nt = b.len();
                a.is_free(idx / nt) && b.is_free(idx % nt)
            }
            _ => unreachable!(),
        }
    }

    /// Mesh neighbours of a node (axis-aligned, boundary nodes included).
    pub(crate) fn neighbors(&self, idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(4);
        match self.axes.as_slice() {
            [a] => {
                if idx > 0 {
                    out.push(idx - 1);
                }
                if idx + 1 < a.len() {
                    out.push(idx + 1);
                }
            }
            [a, b] => {
                let nt = b.len();
                let (i, j) = (idx / nt, idx % nt);
                if i > 0 {
                    out.push(idx - nt);
                }
                if i + 1 < a.len() {
                    out.push(idx + nt);
                }
                if j > 0 {
                    out.push(idx - 1);
                }
                if j + 1 < nt {
                    out.push(idx + 1);
                }
            }
            _ => unreachable!(),
        }
        out
    }

    /// `K x` with the Dirichlet condition imposed; boundary entries of `x`
    /// are ignored and boundary rows of the result are zero.
    pub fn stiffness_apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.len());
        let mut out = vec![0.0; x.len()];
        match self.axes.as_slice() {
            [a] => {
                for i in a.free_range() {
                    out[i] = a.stiffness_row(|k| x[k], i);
                }
            }
            [a, b] => {
                let nt = b.len();
                for i in a.free_range() {
                    for j in b.free_range() {
                        let ks = a.stiffness_row(|k| x[k * nt + j], i);
                        let kt = b.stiffness_row(|k| x[i * nt + k], j);
                        out[i * nt + j] = ks * b.mass[j] + a.mass[i] * kt;
                    }
                }
            }
            _ => unreachable!(),
        }
        out
    }

    /// Solves `K w = b` on the free nodes (boundary entries of `b` ignored,
    /// boundary entries of `w` zero).
    pub fn stiffness_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.len());
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite right-hand side".into()));
        }
        let w = match self.axes.as_slice() {
            [a] => solve_axis(a, b, None)?,
            [a, bx] => self.solve_tensor(a, bx, b)?,
            _ => unreachable!(),
        };
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("singular discretization".into()));
        }
        Ok(w)
    }

    /// Solves `(K + diag(shift)) w = b` on a radial grid; `None` for tensor grids.
    pub(crate) fn shifted_solve(&self, b: &[f64], shift: &[f64]) -> Option<Result<Vec<f64>>> {
        match self.axes.as_slice() {
            [a] => Some(solve_axis(a, b, Some(shift))),
            _ => None,
        }
    }

    fn solve_tensor(&self, a: &Axis, b: &Axis, rhs: &[f64]) -> Result<Vec<f64>> {
        let eig = self.eigen.as_ref().expect("tensor grids carry an eigenbasis");
        let (fs, ft): (Vec<usize>, Vec<usize>) = (a.free_range().collect(), b.free_range().collect());
        let nt = b.len();
        let mut mat = DMatrix::<f64>::zeros(fs.len(), ft.len());
        for (p, &i) in fs.iter().enumerate() {
            for (q, &j) in ft.iter().enumerate() {
                mat[(p, q)] = rhs[i * nt + j] / (a.mass[i] * b.mass[j]).sqrt();
            }
        }
        let mut c = eig.s_vecs.transpose() * mat * &eig.t_vecs;
        for p in 0..fs.len() {
            for q in 0..ft.len() {
                let d = eig.s_vals[p] + eig.t_vals[q];
                if !(d > 0.0) {
                    return Err(Error::Numeric("non-positive tensor eigenvalue".into()));
                }
                c[(p, q)] /= d;
            }
        }
        let w = &eig.s_vecs * c * eig.t_vecs.transpose();
        let mut out = vec![0.0; self.len()];
        for (p, &i) in fs.iter().enumerate() {
            for (q, &j) in ft.iter().enumerate() {
                out[i * nt + j] = w[(p, q)] / (a.mass[i] * b.mass[j]).sqrt();
            }
        }
        Ok(out)
    }
}

/// Thomas algorithm for the symmetric positive definite tridiagonal `K + diag(shift)`.
fn solve_axis(a: &Axis, b: &[f64], shift: Option<&[f64]>) -> Result<Vec<f64>> {
    let idx: Vec<usize> = a.free_range().collect();
    let n = idx.len();
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n);
    for &i in &idx {
        let left = if i > 0 { a.cell[i - 1] } else { 0.0 };
        diag.push(left + a.cell[i] + shift.map_or(0.0, |d| d[i]));
        off.push(-a.cell[i]);
    }
    let mut rhs: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    for k in 1..n {
        let m = off[k - 1] / diag[k - 1];
        diag[k] -= m * off[k - 1];
        rhs[k] -= m * rhs[k - 1];
    }
    if diag.iter().any(|d| !(d.abs() > 0.0)) {
        return Err(Error::Numeric("zero pivot in tridiagonal solve".into()));
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = (rhs[k] - off[k] * x[k + 1]) / diag[k];
    }
    let mut out = vec![0.0; b.len()];
    for (k, &i) in idx.iter().enumerate() {
        out[i] = x[k];
    }
    Ok(out)
}

/// A discrete function on a grid. Values are stored on every node; the
/// Dirichlet operators treat boundary entries as zero.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) && self.values == other.values
    }
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return domain(format!("expected {} values, got {}", grid.len(), values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("field values must be finite".into()));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    /// Samples `f` at every node, boundary included.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self { grid: grid.clone(), values }
    }

    /// Samples `f` at free nodes and sets boundary nodes to zero.
    pub fn dirichlet_from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| if grid.is_free(i) { f(&grid.coords(i)) } else { 0.0 })
            .collect();
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { grid: self.grid.clone(), values }
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &Field) -> Self {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Field) -> Self {
        self.axpy(-1.0, other)
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &Field) -> Self {
        assert!(self.same_grid(other), "fields live on different grids");
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
        )
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Boundary entries forced to zero.
    pub fn with_dirichlet(&self) -> Self {
        let grid = &self.grid;
        self.with_values(
            self.values
                .iter()
                .enumerate()
                .map(|(i, &v)| if grid.is_free(i) { v } else { 0.0 })
                .collect(),
        )
    }

    /// `∫∇f·∇g` through the stiffness matrix.
    pub fn dirichlet_inner(&self, other: &Field) -> f64 {
        assert!(self.same_grid(other), "fields live on different grids");
        let kg = self.grid.stiffness_apply(&other.values);
        masked_dot(&self.grid, &self.values, &kg)
    }

    /// `‖f‖² = ∫|∇f|²`.
    pub fn dirichlet_norm_sq(&self) -> f64 {
        self.dirichlet_inner(self)
    }

    /// Weighted `L²` inner product `Σ wᵢ fᵢ gᵢ`.
    pub fn l2_inner(&self, other: &Field) -> f64 {
        assert!(self.same_grid(other), "fields live on different grids");
        self.grid
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }
}

pub(crate) fn masked_dot(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(i, _)| grid.is_free(*i))
        .map(|(_, (x, y))| x * y)
        .sum()
}

/// `-Δf` with zero Dirichlet data (zero on boundary nodes).
pub fn laplace_apply(f: &Field) -> Field {
    let grid = f.grid();
    let k = grid.stiffness_apply(f.values());
    let values = k
        .iter()
        .zip(grid.weights())
        .enumerate()
        .map(|(i, (kv, w))| if grid.is_free(i) { kv / w } else { 0.0 })
        .collect();
    f.with_values(values)
}

/// Solves `-Δw = rhs` with `w = 0` on the boundary.
pub fn inv_laplace_solve(rhs: &Field) -> Result<Field> {
    let grid = rhs.grid();
    let b: Vec<f64> = rhs
        .values()
        .iter()
        .zip(grid.weights())
        .map(|(v, w)| v * w)
        .collect();
    let w = grid.stiffness_solve(&b)?;
    Ok(rhs.with_values(w))
}

/// `∫ f`.
pub fn integrate(f: &Field) -> f64 {
    integrate_map(f, |v| v)
}

/// `∫ g(f)` for a pointwise map `g`.
pub fn integrate_map(f: &Field, g: impl Fn(f64) -> f64) -> f64 {
    f.grid()
        .weights()
        .iter()
        .zip(f.values())
        .map(|(w, &v)| w * g(v))
        .sum()
}

/// `∫ g(u, v)` for a pointwise map of two fields on the same grid.
pub fn integrate_pair(u: &Field, v: &Field, g: impl Fn(f64, f64) -> f64) -> f64 {
    assert!(u.same_grid(v), "fields live on different grids");
    u.grid()
        .weights()
        .iter()
        .zip(u.values().iter().zip(v.values()))
        .map(|(w, (&a, &b))| w * g(a, b))
        .sum()
}

/// Smooth compactly supported mollifier bump `height·exp(1 - 1/(1-ρ²))`,
/// `ρ = dist/(width/2)`. `width` is the diameter of the support; for biradial
/// grids the support is the product of two such windows.
pub fn make_bump(grid: &Arc<Grid>, center: &[f64], width: f64, height: f64) -> Result<Field> {
    if !(width > 0.0) || !height.is_finite() {
        return domain("bump width must be positive and height finite");
    }
    let half = 0.5 * width;
    let check = |c: f64, lo: f64, hi: f64, centre_ok: bool| -> Result<()> {
        let inside = c - half > lo && c + half < hi;
        let at_centre = centre_ok && lo == 0.0 && (c - half >= 0.0 || c == 0.0) && c + half < hi;
        if inside || at_centre {
            Ok(())
        } else {
            domain(format!(
                "bump support [{}, {}] is not strictly inside ({lo}, {hi})",
                c - half,
                c + half
            ))
        }
    };
    match *grid.geometry() {
        ReducedGeometry::RadialAnnulus { inner, outer, .. } => {
            check(*center.first().unwrap_or(&f64::NAN), inner, outer, false)?
        }
        ReducedGeometry::RadialBall { radius, .. } => {
            check(*center.first().unwrap_or(&f64::NAN), 0.0, radius, true)?
        }
        ReducedGeometry::Biradial { s, t, .. } => {
            if center.len() != 2 {
                return domain("biradial bumps need a centre (s, t)");
            }
            check(center[0], s.0, s.1, false)?;
            check(center[1], t.0, t.1, false)?;
        }
    }
    let profile = |x: f64, c: f64| {
        let rho = (x - c) / half;
        if rho.abs() < 1.0 {
            (1.0 - 1.0 / (1.0 - rho * rho)).exp()
        } else {
            0.0
        }
    };
    Ok(Field::dirichlet_from_fn(grid, |x| {
        height * x.iter().zip(center).map(|(&xi, &ci)| profile(xi, ci)).product::<f64>()
    }))
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn geometry() -> impl Strategy<Value = ReducedGeometry> {
        prop_oneof![
            (3usize..7, 0.2f64..2.0, 0.5f64..2.0).prop_map(|(n, a, w)| ReducedGeometry::annulus(n, a, a + w)),
            (3usize..7, 0.5f64..3.0).prop_map(|(n, r)| ReducedGeometry::ball(n, r)),
            (2usize..4, 2usize..4, 0.5f64..1.5).prop_map(|(m, n, a)| ReducedGeometry::biradial(m, n, (a, a + 1.0), (a, a + 1.0))),
        ]
    }

    fn field(g: &Arc<Grid>, c: &[f64]) -> Field {
        Field::dirichlet_from_fn(g, |x| {
            let y = x[0] + 0.7 * x.get(1).copied().unwrap_or(0.0);
            c.iter().enumerate().map(|(j, cj)| cj * ((j + 1) as f64 * 1.3 * y).sin()).sum()
        })
    }

    fn exact_volume(geom: &ReducedGeometry) -> f64 {
        use crate::scalar::sphere_area;
        match *geom {
            ReducedGeometry::RadialAnnulus { dim, inner, outer } => {
                sphere_area(dim) * (outer.powi(dim as i32) - inner.powi(dim as i32)) / dim as f64
            }
            ReducedGeometry::RadialBall { dim, radius } => sphere_area(dim) * radius.powi(dim as i32) / dim as f64,
            ReducedGeometry::Biradial { m, n, s, t } => {
                let shell = |k: usize, (a, b): (f64, f64)| sphere_area(k) * (b.powi(k as i32) - a.powi(k as i32)) / k as f64;
                shell(m, s) * shell(n, t)
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn laplacian_is_weighted_symmetric(geom in geometry(), c in prop::collection::vec(-1.0f64..1.0, 5)) {
            let res = if geom.is_radial() { 64 } else { 24 };
            let g = build_grid(geom, res).unwrap();
            let f = field(&g, &c);
            let h = field(&g, &[c[2], -c[0], c[4], c[1]]);
            let a = laplace_apply(&f).l2_inner(&h);
            let b = f.l2_inner(&laplace_apply(&h));
            let scale = f.dirichlet_norm_sq().sqrt() * h.dirichlet_norm_sq().sqrt();
            prop_assert!((a - b).abs() <= 1e-8 * scale.max(1e-300), "{} vs {}", a, b);
        }

        #[test]
        fn inverse_undoes_apply(geom in geometry(), c in prop::collection::vec(-1.0f64..1.0, 5)) {
            let res = if geom.is_radial() { 64 } else { 24 };
            let g = build_grid(geom, res).unwrap();
            let f = field(&g, &c);
            let back = inv_laplace_solve(&laplace_apply(&f)).unwrap();
            let err = back.sub(&f).max_abs();
            prop_assert!(err <= 1e-9 * f.max_abs().max(1e-300), "{}", err);
        }

        #[test]
        fn volume_is_exact(geom in geometry(), res in 16usize..80) {
            let g = build_grid(geom.clone(), res).unwrap();
            let want = exact_volume(&geom);
            prop_assert!((g.volume() - want).abs() <= 1e-12 * want, "{} vs {}", g.volume(), want);
        }
    }
}
