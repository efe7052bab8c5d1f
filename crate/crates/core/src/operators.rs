//! Semigroups, Hankel convolution, Poisson derivatives and Riesz transforms
//! applied to sampled functions, as dense kernel matrices.
//!
//! Matrix entry (i, j) is ∫ K(x_i, y) hat_j(y) dm(y), so applying a matrix
//! integrates the kernel against the grid interpolant exactly up to the
//! panel quadrature. Rows may sit at arbitrary points.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use crate::error::{require, Error, Result};
use crate::geometry::{BesselParam, RadialGrid};
use crate::kernels::{BumpProfile, Kernels, Profile};
use crate::quadrature::{
    gauss_jacobi, gauss_legendre, pv_extrapolate, richardson_weights, ExtrapolationLadder, GaussRule,
};

const PANEL_ORDER: usize = 10;
/// Heat kernels are cut where e^{−d²/(2σ²)} < e^{−45}.
const HEAT_REACH: f64 = 9.5;
/// Riesz points whose extrapolation error exceeds this (relative to ‖f‖_∞) are flagged.
pub const RIESZ_FLAG_TOL: f64 = 1e-4;

/// Values on a radial grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction1D {
    pub grid: Arc<RadialGrid>,
    pub values: Vec<f64>,
}

impl SampledFunction1D {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        require(values.iter().all(|v| v.is_finite()), || "values must be finite".into())?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self { grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Values on a product of radial grids; rows follow `grid1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction2D {
    pub grid1: Arc<RadialGrid>,
    pub grid2: Arc<RadialGrid>,
    pub values: Array2<f64>,
}

impl SampledFunction2D {
    pub fn new(grid1: Arc<RadialGrid>, grid2: Arc<RadialGrid>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != grid1.len() {
            return Err(Error::LengthMismatch { expected: grid1.len(), got: values.nrows() });
        }
        if values.ncols() != grid2.len() {
            return Err(Error::LengthMismatch { expected: grid2.len(), got: values.ncols() });
        }
        require(values.iter().all(|v| v.is_finite()), || "values must be finite".into())?;
        Ok(Self { grid1, grid2, values })
    }

    pub fn from_fn(grid1: Arc<RadialGrid>, grid2: Arc<RadialGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = Array2::from_shape_fn((grid1.len(), grid2.len()), |(i, j)| {
            f(grid1.nodes()[i], grid2.nodes()[j])
        });
        Self { grid1, grid2, values }
    }

    pub fn zeros_like(&self) -> Self {
        Self { grid1: self.grid1.clone(), grid2: self.grid2.clone(), values: Array2::zeros(self.values.dim()) }
    }

    pub fn with_values(&self, values: Array2<f64>) -> Self {
        Self { grid1: self.grid1.clone(), grid2: self.grid2.clone(), values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Outer product of the dm weights.
    pub fn weights(&self) -> Array2<f64> {
        let w1 = Array1::from(self.grid1.weights().to_vec());
        let w2 = Array1::from(self.grid2.weights().to_vec());
        outer(&w1, &w2)
    }

    pub fn transpose(&self) -> Self {
        Self {
            grid1: self.grid2.clone(),
            grid2: self.grid1.clone(),
            values: self.values.t().to_owned(),
        }
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

/// ‖f‖_p with respect to dm; p = ∞ gives the sup over nodes.
pub fn lp_norm_1d(f: &SampledFunction1D, p: f64) -> f64 {
    lp_norm_values(f.values.iter().copied(), f.grid.weights().iter().copied(), p)
}

/// ‖f‖_p with respect to dμ = dm ⊗ dm.
pub fn lp_norm(f: &SampledFunction2D, p: f64) -> f64 {
    let w = f.weights();
    lp_norm_values(f.values.iter().copied(), w.iter().copied(), p)
}

fn lp_norm_values(v: impl Iterator<Item = f64>, w: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p.is_infinite() {
        return v.fold(0.0, |m, x| m.max(x.abs()));
    }
    let s: f64 = v.zip(w).map(|(x, w)| x.abs().powf(p) * w).sum();
    s.powf(1.0 / p)
}

/// A point at which to evaluate a kernel row, with its time parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowSpec {
    pub x: f64,
    pub t: f64,
}

/// Where a kernel row lives: peak width, support half-width, extra kinks.
#[derive(Clone, Debug)]
struct RowShape {
    width: f64,
    reach: f64,
    breaks: Vec<f64>,
}

/// Integrate `eval(x, y, t)` against every hat function of `grid` for each row.
fn assemble_rows<const N: usize, F, S>(
    p: &BesselParam,
    grid: &RadialGrid,
    rows: &[RowSpec],
    shape: S,
    eval: F,
) -> [Array2<f64>; N]
where
    F: Fn(f64, f64, f64) -> [f64; N] + Sync,
    S: Fn(&RowSpec) -> RowShape + Sync,
{
    let n = grid.len();
    let gl = gauss_legendre(PANEL_ORDER);
    let head = gauss_jacobi(PANEL_ORDER, 0.0, 2.0 * p.lambda);
    let e = p.dim();
    let out: Vec<Vec<[f64; N]>> = rows
        .par_iter()
        .map(|row| {
            let mut acc = vec![[0.0; N]; n];
            let sh = shape(row);
            let panels = row_panels(grid, row.x, &sh);
            for (a, b) in panels {
                integrate_panel(grid, &gl, &head, e, p.lambda, a, b, |y| eval(row.x, y, row.t), &mut acc);
            }
            acc
        })
        .collect();
    std::array::from_fn(|k| {
        Array2::from_shape_fn((rows.len(), n), |(i, j)| out[i][j][k])
    })
}

/// Panel endpoints in y: grid cells, the head segment, and geometric grading about x.
fn row_panels(grid: &RadialGrid, x: f64, sh: &RowShape) -> Vec<(f64, f64)> {
    let nodes = grid.nodes();
    let xmax = *nodes.last().unwrap();
    let lo = (x - sh.reach).max(0.0);
    let hi = (x + sh.reach).min(xmax);
    if hi <= lo {
        return Vec::new();
    }
    let mut pts = vec![lo, hi];
    if nodes[0] > lo && nodes[0] < hi {
        pts.push(nodes[0]);
    }
    let start = nodes.partition_point(|&v| v <= lo);
    for &v in &nodes[start..] {
        if v >= hi {
            break;
        }
        pts.push(v);
    }
    let cell_width = |y: f64| {
        let j = nodes.partition_point(|&v| v < y).min(nodes.len() - 1);
        if j == 0 {
            nodes[0]
        } else {
            nodes[j] - nodes[j - 1]
        }
    };
    if x > lo && x < hi {
        pts.push(x);
    }
    for dir in [-1.0, 1.0] {
        let mut step = sh.width;
        loop {
            let y = x + dir * step;
            if y <= lo || y >= hi {
                break;
            }
            pts.push(y);
            if step > 2.0 * cell_width(y) {
                break;
            }
            step *= 2.0;
        }
    }
    for &b in &sh.breaks {
        if b > lo && b < hi {
            pts.push(b);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs().max(1e-300));
    pts.windows(2).map(|w| (w[0], w[1])).filter(|(a, b)| b > a).collect()
}

#[allow(clippy::too_many_arguments)]
fn integrate_panel<const N: usize>(
    grid: &RadialGrid,
    gl: &GaussRule,
    head: &GaussRule,
    e: f64,
    lambda: f64,
    a: f64,
    b: f64,
    k: impl Fn(f64) -> [f64; N],
    acc: &mut [[f64; N]],
) {
    let nodes = grid.nodes();
    let logs = grid.log_nodes();
    let x0 = nodes[0];
    let mut add = |j: usize, w: f64, v: &[f64; N]| {
        for (slot, val) in acc[j].iter_mut().zip(v) {
            *slot += w * val;
        }
    };
    if b <= x0 {
        // head segment: the interpolant is the constant value at node 0
        if a == 0.0 {
            let h = 0.5 * b;
            let scale = h.powf(2.0 * lambda + 1.0);
            for (xi, w) in head.nodes.iter().zip(&head.weights) {
                let y = h * (1.0 + xi);
                add(0, scale * w, &k(y));
            }
        } else {
            let h = 0.5 * (b - a);
            let c = 0.5 * (b + a);
            for (xi, w) in gl.nodes.iter().zip(&gl.weights) {
                let y = c + h * xi;
                add(0, h * w * y.powf(2.0 * lambda), &k(y));
            }
        }
        return;
    }
    // a, b lie in one cell [x_j, x_{j+1}]; integrate in s = ln y
    let mid = 0.5 * (a + b);
    let j = nodes.partition_point(|&v| v <= mid) - 1;
    let (sa, sb) = (logs[j], logs[j + 1]);
    let hcell = sb - sa;
    let (s1, s2) = (a.ln(), b.ln());
    let h = 0.5 * (s2 - s1);
    let c = 0.5 * (s2 + s1);
    for (xi, w) in gl.nodes.iter().zip(&gl.weights) {
        let s = c + h * xi;
        let y = s.exp();
        let th = (s - sa) / hcell;
        let g = h * w * (e * s).exp();
        let v = k(y);
        add(j, g * (1.0 - th), &v);
        add(j + 1, g * th, &v);
    }
}

/// Kernel families with their matrix members.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MatrixKind {
    Poisson,
    /// t∂_tP_t
    PoissonTDt,
    /// t∂_xP_t (derivative in the evaluation variable)
    PoissonTDx,
    ConjPoisson,
    /// e^{−sΔ} at heat time s
    Heat,
    /// s∂_s e^{−sΔ}
    HeatSDs,
    /// Bump-profile Hankel convolution φ_t♯
    BumpConvolution,
    /// f ↦ ψ(f)(t, ·)
    Psi,
    /// Riesz ladder level j, t = 4·spacing·2^{−j}
    RieszLevel(u8),
    /// Dyadic difference Q_k at t = 2^{−k} with the given refinement; built by the caller.
    DyadicDifference(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct MatrixKey {
    kind: MatrixKind,
    t: u64,
    grid: u64,
}

/// Kernel matrices keyed by (kind, t, grid identity); λ is part of the grid identity.
#[derive(Default, Debug)]
pub struct KernelCache {
    map: Mutex<HashMap<MatrixKey, Arc<Array2<f64>>>>,
}

impl KernelCache {
    fn get(&self, k: &MatrixKey) -> Option<Arc<Array2<f64>>> {
        self.map.lock().unwrap().get(k).cloned()
    }

    /// Insert unless already present; returns the stored matrix.
    fn insert(&self, k: MatrixKey, m: Arc<Array2<f64>>) -> Arc<Array2<f64>> {
        self.map.lock().unwrap().entry(k).or_insert(m).clone()
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.map.lock().unwrap().clear();
    }
}

/// One-dimensional linear operators on a radial grid.
#[derive(Clone, Debug)]
pub enum Op {
    Identity,
    Poisson(f64),
    PoissonTDt(f64),
    PoissonTDx(f64),
    ConjPoisson(f64),
    Heat(f64),
    HeatSDs(f64),
    BumpConvolution(f64),
    Psi(f64),
    /// Extrapolated boundary value of Q_t.
    Riesz,
    Matrix(Arc<Array2<f64>>),
}

/// The two semigroups of the toolkit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Semigroup {
    Poisson,
    Heat,
}

impl Semigroup {
    /// T_t as an operator; heat uses heat time t²/4 so both share spatial scale t.
    pub fn op(&self, t: f64) -> Op {
        match self {
            Self::Poisson => Op::Poisson(t),
            Self::Heat => Op::Heat(0.25 * t * t),
        }
    }

    /// t∂_tT_t.
    pub fn derivative_op(&self, t: f64) -> Op {
        match self {
            Self::Poisson => Op::PoissonTDt(t),
            Self::Heat => Op::HeatSDs(0.25 * t * t),
        }
    }

    /// d(ln s)/d(ln t) of the native time variable.
    pub fn log_measure_factor(&self) -> f64 {
        match self {
            Self::Poisson => 1.0,
            Self::Heat => 2.0,
        }
    }
}

/// Per-point output of the Riesz transform.
#[derive(Clone, Debug)]
pub struct RieszResult {
    pub values: SampledFunction1D,
    pub errors: Vec<f64>,
    /// Node indices whose extrapolation failed or exceeded the flag tolerance.
    pub flagged: Vec<usize>,
}

/// Operator application context: kernels at one λ plus the matrix cache.
#[derive(Debug)]
pub struct Operators {
    pub kernels: Kernels,
    pub bump: BumpProfile,
    cache: KernelCache,
    pub riesz_depth: usize,
}

fn check_t(t: f64) -> Result<()> {
    require(t.is_finite() && t > 0.0, || format!("time parameter must be positive, got {t}"))
}

impl Operators {
    pub fn new(param: BesselParam) -> Self {
        Self {
            kernels: Kernels::new(param),
            bump: BumpProfile::new(&param),
            cache: KernelCache::default(),
            riesz_depth: ExtrapolationLadder::DEFAULT_DEPTH,
        }
    }

    pub fn param(&self) -> &BesselParam {
        &self.kernels.param
    }

    pub fn cache(&self) -> &KernelCache {
        &self.cache
    }

    fn check_grid(&self, grid: &RadialGrid) -> Result<()> {
        require(grid.lambda() == self.param().lambda, || {
            format!("grid built for λ={} used with λ={}", grid.lambda(), self.param().lambda)
        })
    }

    /// Poisson-family rows [P, t∂_tP, t∂_xP, Q] at arbitrary (x, t).
    pub fn poisson_rows(&self, grid: &RadialGrid, rows: &[RowSpec]) -> [Array2<f64>; 4] {
        let k = &self.kernels;
        assemble_rows(
            self.param(),
            grid,
            rows,
            |r| RowShape { width: r.t, reach: f64::INFINITY, breaks: vec![] },
            |x, y, t| {
                let v = k.poisson_family(t, x, y);
                [v.p, t * v.dt, t * v.dx, v.q]
            },
        )
    }

    /// Heat rows [h_s, s∂_s h_s] at arbitrary (x, s).
    pub fn heat_rows(&self, grid: &RadialGrid, rows: &[RowSpec]) -> [Array2<f64>; 2] {
        let k = &self.kernels;
        assemble_rows(
            self.param(),
            grid,
            rows,
            |r| {
                let sigma = (2.0 * r.t).sqrt();
                RowShape { width: sigma, reach: HEAT_REACH * sigma, breaks: vec![] }
            },
            |x, y, s| {
                let v = k.heat_family(s, x, y);
                [v.h, v.s_ds]
            },
        )
    }

    /// Rows of y ↦ τ_xφ_t(y) for a profile.
    pub fn convolution_rows(&self, grid: &RadialGrid, phi: &dyn Profile, rows: &[RowSpec]) -> Array2<f64> {
        let k = &self.kernels;
        let [m] = assemble_rows(
            self.param(),
            grid,
            rows,
            |r| RowShape { width: 0.25 * r.t, reach: phi.reach() * r.t, breaks: vec![] },
            |x, y, t| [k.hankel_translation(phi, t, x, y).unwrap_or(0.0)],
        );
        m
    }

    /// Rows of y ↦ ψ(t, x, y) for the bump profile.
    pub fn psi_rows(&self, grid: &RadialGrid, rows: &[RowSpec]) -> Array2<f64> {
        let k = &self.kernels;
        let phi = self.bump;
        let [m] = assemble_rows(
            self.param(),
            grid,
            rows,
            |r| RowShape { width: 0.25 * r.t, reach: r.t, breaks: vec![r.t, r.x - r.t, r.x + r.t] },
            |x, y, t| [k.psi_kernel(&phi, t, x, y).unwrap_or(0.0)],
        );
        m
    }

    fn node_rows(grid: &RadialGrid, t: f64) -> Vec<RowSpec> {
        grid.nodes().iter().map(|&x| RowSpec { x, t }).collect()
    }

    fn key(kind: MatrixKind, t: f64, grid: &RadialGrid) -> MatrixKey {
        MatrixKey { kind, t: t.to_bits(), grid: grid.id() }
    }

    /// Square kernel matrix for a cached family member.
    pub fn matrix(&self, kind: MatrixKind, t: f64, grid: &RadialGrid) -> Result<Arc<Array2<f64>>> {
        self.check_grid(grid)?;
        if let Some(m) = self.cache.get(&Self::key(kind, t, grid)) {
            return Ok(m);
        }
        let rows = Self::node_rows(grid, t);
        match kind {
            MatrixKind::Poisson | MatrixKind::PoissonTDt | MatrixKind::PoissonTDx | MatrixKind::ConjPoisson => {
                check_t(t)?;
                let ms = self.poisson_rows(grid, &rows);
                let kinds = [MatrixKind::Poisson, MatrixKind::PoissonTDt, MatrixKind::PoissonTDx, MatrixKind::ConjPoisson];
                for (k, m) in kinds.into_iter().zip(ms) {
                    self.cache.insert(Self::key(k, t, grid), Arc::new(m));
                }
            }
            MatrixKind::Heat | MatrixKind::HeatSDs => {
                check_t(t)?;
                let [h, d] = self.heat_rows(grid, &rows);
                self.cache.insert(Self::key(MatrixKind::Heat, t, grid), Arc::new(h));
                self.cache.insert(Self::key(MatrixKind::HeatSDs, t, grid), Arc::new(d));
            }
            MatrixKind::BumpConvolution => {
                check_t(t)?;
                let m = self.convolution_rows(grid, &self.bump, &rows);
                self.cache.insert(Self::key(kind, t, grid), Arc::new(m));
            }
            MatrixKind::Psi => {
                check_t(t)?;
                let m = self.psi_rows(grid, &rows);
                self.cache.insert(Self::key(kind, t, grid), Arc::new(m));
            }
            MatrixKind::RieszLevel(j) => {
                let rows: Vec<RowSpec> = (0..grid.len())
                    .map(|i| RowSpec { x: grid.nodes()[i], t: riesz_t0(grid, i) * 0.5f64.powi(j as i32) })
                    .collect();
                let [_, _, _, q] = self.poisson_rows(grid, &rows);
                self.cache.insert(Self::key(kind, 0.0, grid), Arc::new(q));
            }
            MatrixKind::DyadicDifference(_) => {
                return Err(Error::InvalidParameter("dyadic difference matrices are built through cached_matrix".into()))
            }
        }
        let t_key = if matches!(kind, MatrixKind::RieszLevel(_)) { 0.0 } else { t };
        Ok(self.cache.get(&Self::key(kind, t_key, grid)).expect("just inserted"))
    }

    /// Cached matrix under (kind, t, grid), built by `build` on a miss.
    pub fn cached_matrix(
        &self,
        kind: MatrixKind,
        t: f64,
        grid: &RadialGrid,
        build: impl FnOnce() -> Result<Array2<f64>>,
    ) -> Result<Arc<Array2<f64>>> {
        self.check_grid(grid)?;
        let key = Self::key(kind, t, grid);
        if let Some(m) = self.cache.get(&key) {
            return Ok(m);
        }
        Ok(self.cache.insert(key, Arc::new(build()?)))
    }

    /// Matrix of a 1D operator (None for the identity).
    pub fn op_matrix(&self, op: &Op, grid: &RadialGrid) -> Result<Option<Arc<Array2<f64>>>> {
        let m = match *op {
            Op::Identity => return Ok(None),
            Op::Poisson(t) => self.matrix(MatrixKind::Poisson, t, grid)?,
            Op::PoissonTDt(t) => self.matrix(MatrixKind::PoissonTDt, t, grid)?,
            Op::PoissonTDx(t) => self.matrix(MatrixKind::PoissonTDx, t, grid)?,
            Op::ConjPoisson(t) => self.matrix(MatrixKind::ConjPoisson, t, grid)?,
            Op::Heat(s) => self.matrix(MatrixKind::Heat, s, grid)?,
            Op::HeatSDs(s) => self.matrix(MatrixKind::HeatSDs, s, grid)?,
            Op::BumpConvolution(t) => self.matrix(MatrixKind::BumpConvolution, t, grid)?,
            Op::Psi(t) => self.matrix(MatrixKind::Psi, t, grid)?,
            Op::Riesz => self.riesz_matrix(grid)?,
            Op::Matrix(ref m) => {
                if m.ncols() != grid.len() {
                    return Err(Error::LengthMismatch { expected: grid.len(), got: m.ncols() });
                }
                m.clone()
            }
        };
        Ok(Some(m))
    }

    /// Richardson combination of the Riesz ladder matrices.
    pub fn riesz_matrix(&self, grid: &RadialGrid) -> Result<Arc<Array2<f64>>> {
        let key = MatrixKey { kind: MatrixKind::RieszLevel(u8::MAX), t: 0, grid: grid.id() };
        if let Some(m) = self.cache.get(&key) {
            return Ok(m);
        }
        let w = richardson_weights(self.riesz_depth, ExtrapolationLadder::DEFAULT_RATIO);
        let mut acc = Array2::<f64>::zeros((grid.len(), grid.len()));
        for (j, c) in w.iter().enumerate() {
            let m = self.matrix(MatrixKind::RieszLevel(j as u8), 0.0, grid)?;
            acc.scaled_add(*c, &m);
        }
        Ok(self.cache.insert(key, Arc::new(acc)))
    }

    pub fn apply(&self, op: &Op, f: &SampledFunction1D) -> Result<SampledFunction1D> {
        match self.op_matrix(op, &f.grid)? {
            None => Ok(f.clone()),
            Some(m) => {
                if m.nrows() != f.grid.len() {
                    return Err(Error::LengthMismatch { expected: f.grid.len(), got: m.nrows() });
                }
                let v = m.dot(&Array1::from(f.values.clone()));
                Ok(SampledFunction1D { grid: f.grid.clone(), values: v.to_vec() })
            }
        }
    }

    pub fn apply_poisson(&self, t: f64, f: &SampledFunction1D) -> Result<SampledFunction1D> {
        check_t(t)?;
        self.apply(&Op::Poisson(t), f)
    }

    pub fn apply_conjugate_poisson(&self, t: f64, f: &SampledFunction1D) -> Result<SampledFunction1D> {
        check_t(t)?;
        self.apply(&Op::ConjPoisson(t), f)
    }

    /// e^{−sΔ}f at heat time s.
    pub fn apply_heat(&self, s: f64, f: &SampledFunction1D) -> Result<SampledFunction1D> {
        check_t(s)?;
        self.apply(&Op::Heat(s), f)
    }

    /// φ_t ♯ f for any profile.
    pub fn hankel_convolve(&self, phi: &dyn Profile, t: f64, f: &SampledFunction1D) -> Result<SampledFunction1D> {
        check_t(t)?;
        self.check_grid(&f.grid)?;
        let m = self.convolution_rows(&f.grid, phi, &Self::node_rows(&f.grid, t));
        let v = m.dot(&Array1::from(f.values.clone()));
        Ok(SampledFunction1D { grid: f.grid.clone(), values: v.to_vec() })
    }

    /// (∂_t u, ∂_x u) for u(t, x) = P_t f(x).
    pub fn poisson_gradient(&self, t: f64, f: &SampledFunction1D) -> Result<(SampledFunction1D, SampledFunction1D)> {
        check_t(t)?;
        let mut dt = self.apply(&Op::PoissonTDt(t), f)?;
        let mut dx = self.apply(&Op::PoissonTDx(t), f)?;
        dt.values.iter_mut().for_each(|v| *v /= t);
        dx.values.iter_mut().for_each(|v| *v /= t);
        Ok((dt, dx))
    }

    /// Row values at arbitrary points: P_t f(x) etc. for each (x, t).
    pub fn poisson_at(&self, f: &SampledFunction1D, rows: &[RowSpec]) -> Result<[Vec<f64>; 4]> {
        self.check_grid(&f.grid)?;
        let v = Array1::from(f.values.clone());
        let ms = self.poisson_rows(&f.grid, rows);
        Ok(ms.map(|m| m.dot(&v).to_vec()))
    }

    /// Riesz transform as the boundary limit of Q_t f, with per-point error estimates.
    pub fn riesz_transform(&self, f: &SampledFunction1D) -> Result<RieszResult> {
        self.check_grid(&f.grid)?;
        let n = f.grid.len();
        let v = Array1::from(f.values.clone());
        let levels: Vec<Array1<f64>> = (0..self.riesz_depth)
            .map(|j| Ok(self.matrix(MatrixKind::RieszLevel(j as u8), 0.0, &f.grid)?.dot(&v)))
            .collect::<Result<_>>()?;
        let scale = f.sup_norm().max(1e-300);
        let mut values = vec![0.0; n];
        let mut errors = vec![0.0; n];
        let mut flagged = Vec::new();
        for i in 0..n {
            let ladder = ExtrapolationLadder {
                t0: riesz_t0(&f.grid, i),
                ratio: ExtrapolationLadder::DEFAULT_RATIO,
                values: levels.iter().map(|l| l[i]).collect(),
            };
            let r = pv_extrapolate(&ladder);
            values[i] = r.limit;
            errors[i] = r.error;
            if !r.converged || r.error > RIESZ_FLAG_TOL * scale {
                flagged.push(i);
            }
        }
        Ok(RieszResult { values: SampledFunction1D { grid: f.grid.clone(), values }, errors, flagged })
    }

    /// Apply op1 along axis 1 and op2 along axis 2.
    pub fn tensor_apply(&self, op1: &Op, op2: &Op, f: &SampledFunction2D) -> Result<SampledFunction2D> {
        let m1 = self.op_matrix(op1, &f.grid1)?;
        let m2 = self.op_matrix(op2, &f.grid2)?;
        Ok(f.with_values(apply_matrices(m1.as_deref(), m2.as_deref(), &f.values)?))
    }

    /// Riesz transform along one axis (1 or 2) with the worst per-point error.
    pub fn riesz_axis(&self, f: &SampledFunction2D, axis: usize) -> Result<(SampledFunction2D, f64, usize)> {
        require(axis == 1 || axis == 2, || format!("axis must be 1 or 2, got {axis}"))?;
        let g = if axis == 1 { f.clone() } else { f.transpose() };
        let levels: Vec<Array2<f64>> = (0..self.riesz_depth)
            .map(|j| Ok(self.matrix(MatrixKind::RieszLevel(j as u8), 0.0, &g.grid1)?.dot(&g.values)))
            .collect::<Result<_>>()?;
        let scale = f.sup_norm().max(1e-300);
        let (n1, n2) = g.values.dim();
        let mut out = Array2::zeros((n1, n2));
        let mut worst = 0.0f64;
        let mut flagged = 0;
        for i in 0..n1 {
            for j in 0..n2 {
                let ladder = ExtrapolationLadder {
                    t0: 1.0,
                    ratio: ExtrapolationLadder::DEFAULT_RATIO,
                    values: levels.iter().map(|l| l[(i, j)]).collect(),
                };
                let r = pv_extrapolate(&ladder);
                out[(i, j)] = r.limit;
                worst = worst.max(r.error / scale);
                if !r.converged || r.error > RIESZ_FLAG_TOL * scale {
                    flagged += 1;
                }
            }
        }
        let res = g.with_values(out);
        Ok((if axis == 1 { res } else { res.transpose() }, worst, flagged))
    }
}

/// Starting scale of the Riesz ladder at node i: four local grid spacings.
pub fn riesz_t0(grid: &RadialGrid, i: usize) -> f64 {
    4.0 * grid.local_spacing(i)
}

/// Gauss points inside every cell of the grid (and the head segment), with dm weights.
pub fn fine_points(grid: &RadialGrid, lambda: f64, per_cell: usize) -> Vec<(f64, f64)> {
    let gl = gauss_legendre(per_cell);
    let e = 2.0 * lambda + 1.0;
    let mut out = Vec::new();
    let x0 = grid.nodes()[0];
    let h = 0.5 * x0;
    let head = gauss_jacobi(per_cell, 0.0, 2.0 * lambda);
    for (xi, w) in head.nodes.iter().zip(&head.weights) {
        out.push((h * (1.0 + xi), w * h.powf(e)));
    }
    for c in grid.log_nodes().windows(2) {
        let (h, m) = (0.5 * (c[1] - c[0]), 0.5 * (c[1] + c[0]));
        for (xi, w) in gl.nodes.iter().zip(&gl.weights) {
            let s = m + h * xi;
            out.push((s.exp(), w * h * (e * s).exp()));
        }
    }
    out
}

/// ‖f̃‖_p of the grid interpolant over (0, x_max), by Gauss points per cell.
pub fn interpolant_lp_norm(f: &SampledFunction1D, p: f64) -> f64 {
    let pts = fine_points(&f.grid, f.grid.lambda(), 12);
    if p.is_infinite() {
        return f.sup_norm();
    }
    let s: f64 = pts.iter().map(|&(x, w)| f.grid.interpolate(&f.values, x).abs().powf(p) * w).sum();
    s.powf(1.0 / p)
}

/// M1 · F · M2ᵀ with identities allowed.
pub fn apply_matrices(m1: Option<&Array2<f64>>, m2: Option<&Array2<f64>>, f: &Array2<f64>) -> Result<Array2<f64>> {
    let a = match m1 {
        Some(m) => {
            if m.ncols() != f.nrows() {
                return Err(Error::LengthMismatch { expected: f.nrows(), got: m.ncols() });
            }
            m.dot(f)
        }
        None => f.clone(),
    };
    Ok(match m2 {
        Some(m) => {
            if m.ncols() != a.ncols() {
                return Err(Error::LengthMismatch { expected: a.ncols(), got: m.ncols() });
            }
            a.dot(&m.t())
        }
        None => a,
    })
}

/// Row-wise sum of a matrix (the image of the constant function 1).
pub fn row_sums(m: &Array2<f64>) -> Vec<f64> {
    m.sum_axis(Axis(1)).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_log_grid, make_octave_grid};
    use crate::quadrature::integrate_adaptive;

    fn setup(l: f64, n: usize) -> (Operators, Arc<RadialGrid>) {
        let p = BesselParam::new(l).unwrap();
        let g = make_log_grid(&p, (2f64.powi(-6), 2f64.powi(6)), n).unwrap();
        (Operators::new(p), Arc::new(g))
    }

    fn bump(x: f64, c: f64, w: f64) -> f64 {
        let r = (x - c) / w;
        if r.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - r * r).powi(4)
        }
    }

    /// Grid reaching far enough that the Poisson tail mass beyond it is negligible.
    fn wide(l: f64, n: usize) -> (Operators, Arc<RadialGrid>) {
        let p = BesselParam::new(l).unwrap();
        let g = make_log_grid(&p, (2f64.powi(-6), 2f64.powi(26)), n).unwrap();
        (Operators::new(p), Arc::new(g))
    }

    #[test]
    fn conservation_in_interior() {
        let (ops, g) = wide(1.0, 320);
        let one = SampledFunction1D::from_fn(g.clone(), |_| 1.0);
        for &t in &[0.01, 0.1, 0.5] {
            let u = ops.apply_poisson(t, &one).unwrap();
            for (x, v) in g.nodes().iter().zip(&u.values) {
                if *x > 0.05 && *x < 4.0 {
                    assert!((v - 1.0).abs() < 1e-6, "t={t} x={x} {v}");
                }
            }
            let h = ops.apply_heat(t * t, &one).unwrap();
            for (x, v) in g.nodes().iter().zip(&h.values) {
                if *x > 0.05 && *x < 4.0 {
                    assert!((v - 1.0).abs() < 1e-6, "heat t={t} x={x} {v}");
                }
            }
        }
    }

    #[test]
    fn positivity_and_contraction() {
        let (ops, g) = setup(0.7, 160);
        let f = SampledFunction1D::from_fn(g.clone(), |x| bump(x, 1.0, 0.6) + 0.3 * bump(x, 3.0, 1.0));
        let pts = fine_points(&g, 0.7, 12);
        let rows_at = |t: f64| pts.iter().map(|&(x, _)| RowSpec { x, t }).collect::<Vec<_>>();
        for &t in &[0.03, 0.3, 3.0] {
            let u = ops.apply_poisson(t, &f).unwrap();
            assert!(u.values.iter().all(|v| *v >= 0.0));
            assert!(lp_norm_1d(&u, f64::INFINITY) <= (1.0 + 1e-6) * lp_norm_1d(&f, f64::INFINITY));
            // continuum norms of P_t f̃ against those of f̃
            let [fine, _, _, _] = ops.poisson_at(&f, &rows_at(t)).unwrap();
            for p in [1.0, 2.0] {
                let lhs: f64 = fine.iter().zip(&pts).map(|(v, (_, w))| v.abs().powf(p) * w).sum::<f64>().powf(1.0 / p);
                assert!(lhs <= (1.0 + 1e-6) * interpolant_lp_norm(&f, p), "t={t} p={p}");
            }
        }
        assert!(ops.apply_poisson(0.0, &f).is_err());
    }

    #[test]
    fn semigroup_property() {
        let (ops, g) = setup(1.0, 256);
        let f = SampledFunction1D::from_fn(g, |x| bump(x, 1.5, 0.8));
        let a = ops.apply_poisson(0.3, &ops.apply_poisson(0.7, &f).unwrap()).unwrap();
        let b = ops.apply_poisson(1.0, &f).unwrap();
        let d = a.values.iter().zip(&b.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(d <= 1e-4, "{d}");
    }

    #[test]
    fn poisson_matches_direct_quadrature_of_interpolant() {
        let (ops, g) = setup(1.0, 96);
        let f = SampledFunction1D::from_fn(g.clone(), |x| bump(x, 1.0, 0.7));
        let t = 0.05;
        let u = ops.apply_poisson(t, &f).unwrap();
        let k = &ops.kernels;
        for &i in &[30, 48, 60] {
            let x = g.nodes()[i];
            let o = integrate_adaptive(|y| k.poisson_family(t, x, y).p * g.interpolate(&f.values, y) * y * y, 0.2, 2.0, 1e-12);
            let tail = integrate_adaptive(|y| k.poisson_family(t, x, y).p * g.interpolate(&f.values, y) * y * y, 0.0, 0.2, 1e-12);
            assert!((u.values[i] - o - tail).abs() < 1e-9, "{} {}", u.values[i], o + tail);
        }
    }

    #[test]
    fn gradient_identities() {
        let (ops, g) = wide(1.0, 400);
        let one = SampledFunction1D::from_fn(g.clone(), |_| 1.0);
        let (dt, _) = ops.poisson_gradient(0.2, &one).unwrap();
        for (x, v) in g.nodes().iter().zip(&dt.values) {
            if *x > 0.05 && *x < 4.0 {
                assert!(v.abs() < 1e-7, "x={x} {v}");
            }
        }
        // analytic ∂_t against central differences of P_t f
        let f = SampledFunction1D::from_fn(g.clone(), |x| bump(x, 1.0, 0.5));
        let t = 0.3;
        let (dt, _) = ops.poisson_gradient(t, &f).unwrap();
        let err = |h: f64| {
            let a = ops.apply_poisson(t + h, &f).unwrap();
            let b = ops.apply_poisson(t - h, &f).unwrap();
            (0..g.len()).map(|i| ((a.values[i] - b.values[i]) / (2.0 * h) - dt.values[i]).abs()).fold(0.0, f64::max)
        };
        let (e1, e2, e3) = (err(0.04), err(0.02), err(0.01));
        assert!((e1 / e2).log2() >= 1.8 && (e2 / e3).log2() >= 1.8, "{e1} {e2} {e3}");
    }

    #[test]
    fn bessel_laplace_residual() {
        let (ops, g) = setup(1.0, 200);
        let f = SampledFunction1D::from_fn(g, |x| bump(x, 1.0, 0.5));
        let (t, x) = (0.5, 1.2);
        let res = |h: f64| {
            let pts = [(x, t), (x + h, t), (x - h, t), (x, t + h), (x, t - h)];
            let rows: Vec<RowSpec> = pts.iter().map(|&(x, t)| RowSpec { x, t }).collect();
            let [u, _, _, _] = ops.poisson_at(&f, &rows).unwrap();
            let uxx = (u[1] - 2.0 * u[0] + u[2]) / (h * h);
            let utt = (u[3] - 2.0 * u[0] + u[4]) / (h * h);
            let ux = (u[1] - u[2]) / (2.0 * h);
            (utt + uxx + 2.0 / x * ux).abs()
        };
        let (r1, r2, r3) = (res(0.1), res(0.05), res(0.025));
        assert!((r1 / r2).log2() >= 1.8 && (r2 / r3).log2() >= 1.8, "{r1} {r2} {r3}");
    }

    #[test]
    fn hankel_convolution_properties() {
        let (ops, g) = setup(1.0, 200);
        let one = SampledFunction1D::from_fn(g.clone(), |_| 1.0);
        let u = ops.hankel_convolve(&ops.bump, 0.3, &one).unwrap();
        for (x, v) in g.nodes().iter().zip(&u.values) {
            if *x > 0.05 && *x < 4.0 {
                assert!((v - 1.0).abs() < 1e-6, "x={x} {v}");
            }
        }
        let f = SampledFunction1D::from_fn(g.clone(), |x| bump(x, 1.0, 0.5));
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&t| {
                let c = ops.hankel_convolve(&ops.bump, t, &f).unwrap();
                assert!(c.values.iter().all(|v| *v >= -1e-14));
                c.values.iter().zip(&f.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .collect();
        assert!((errs[0] / errs[1]).log2() >= 1.0 && (errs[1] / errs[2]).log2() >= 1.0, "{errs:?}");
    }

    #[test]
    fn riesz_linearity_and_dilation() {
        let p = BesselParam::new(1.0).unwrap();
        let g = Arc::new(make_octave_grid(&p, -7, 7, 16).unwrap());
        let ops = Operators::new(p);
        let f = SampledFunction1D::from_fn(g.clone(), |x| bump(x, 1.0, 0.5));
        let h = SampledFunction1D::from_fn(g.clone(), |x| bump(x, 2.0, 0.7) - bump(x, 0.5, 0.3));
        let rf = ops.riesz_transform(&f).unwrap();
        let rh = ops.riesz_transform(&h).unwrap();
        let comb = SampledFunction1D::from_fn(g.clone(), |x| 2.0 * bump(x, 1.0, 0.5) - 3.0 * (bump(x, 2.0, 0.7) - bump(x, 0.5, 0.3)));
        let rc = ops.riesz_transform(&comb).unwrap();
        for i in 0..g.len() {
            let lin = 2.0 * rf.values.values[i] - 3.0 * rh.values.values[i];
            assert!((rc.values.values[i] - lin).abs() < 1e-10);
        }
        // f(·/2): node i+16 of the dilated function equals node i of the original
        let fd = SampledFunction1D::from_fn(g.clone(), |x| bump(x / 2.0, 1.0, 0.5));
        let rd = ops.riesz_transform(&fd).unwrap();
        for i in 0..g.len() - 16 {
            let a = rd.values.values[i + 16];
            let b = rf.values.values[i];
            assert!((a - b).abs() < 1e-6, "i={i} {a} {b}");
        }
    }

    #[test]
    fn tensor_identities_and_commutation() {
        let (ops, g) = setup(1.0, 64);
        let f = SampledFunction2D::from_fn(g.clone(), g.clone(), |x, y| bump(x, 1.0, 0.5) * bump(y, 2.0, 1.0));
        let id = ops.tensor_apply(&Op::Identity, &Op::Identity, &f).unwrap();
        assert_eq!(id, f);
        let a = ops.tensor_apply(&Op::Poisson(0.3), &Op::Identity, &ops.tensor_apply(&Op::Identity, &Op::Heat(0.1), &f).unwrap()).unwrap();
        let b = ops.tensor_apply(&Op::Identity, &Op::Heat(0.1), &ops.tensor_apply(&Op::Poisson(0.3), &Op::Identity, &f).unwrap()).unwrap();
        let d = (&a.values - &b.values).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(d <= 1e-9);
        let (ops, g) = wide(1.0, 120);
        let one = SampledFunction2D::from_fn(g.clone(), g.clone(), |_, _| 1.0);
        let u = ops.tensor_apply(&Op::Poisson(0.2), &Op::Poisson(0.4), &one).unwrap();
        for (i, x) in g.nodes().iter().enumerate() {
            for (j, y) in g.nodes().iter().enumerate() {
                if *x > 0.1 && *x < 3.0 && *y > 0.1 && *y < 3.0 {
                    assert!((u.values[(i, j)] - 1.0).abs() < 1e-5);
                }
            }
        }
        assert!(ops.cache().len() >= 4);
    }
}
