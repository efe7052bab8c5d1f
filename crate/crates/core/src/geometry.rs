//! The half-line with the measure dm(x) = x^{2λ} dx: intervals, measures,
//! radial grids, and dyadic intervals.

use std::hash::{Hash, Hasher};

use crate::error::{require, Error, Result};
use crate::quadrature::gauss_legendre;
use crate::special::gamma;

/// The Bessel parameter λ together with constants derived from it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BesselParam {
    pub lambda: f64,
    /// Γ(λ+½)/(Γ(λ)√π).
    pub c_lambda: f64,
    pub doubling_upper: f64,
    pub doubling_lower: f64,
}

impl BesselParam {
    pub fn new(lambda: f64) -> Result<Self> {
        require(lambda.is_finite() && lambda > 0.0, || {
            format!("lambda must be positive, got {lambda}")
        })?;
        let c_lambda = gamma(lambda + 0.5) / (gamma(lambda) * std::f64::consts::PI.sqrt());
        Ok(Self {
            lambda,
            c_lambda,
            doubling_upper: 2f64.powf(2.0 * lambda + 1.0),
            doubling_lower: 2f64.min(2f64.powf(2.0 * lambda)),
        })
    }

    /// Homogeneous dimension 2λ+1 of the measure.
    pub fn dim(&self) -> f64 {
        2.0 * self.lambda + 1.0
    }

    /// Lower end (2λ+1)/(2λ+2) of the Hardy-space exponent range.
    pub fn hardy_lower(&self) -> f64 {
        self.dim() / (self.dim() + 1.0)
    }

    /// m((0, b)).
    pub fn measure_below(&self, b: f64) -> f64 {
        b.max(0.0).powf(self.dim()) / self.dim()
    }

    /// m((a, b)) for 0 ≤ a ≤ b.
    pub fn measure_between(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(0.0), b.max(0.0));
        if b <= a {
            return 0.0;
        }
        self.measure_below(b) - self.measure_below(a)
    }
}

/// I(x, t) = (x − t, x + t) ∩ (0, ∞).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub x: f64,
    pub t: f64,
}

impl Interval {
    pub fn new(x: f64, t: f64) -> Result<Self> {
        require(x.is_finite() && x >= 0.0, || format!("center must be >= 0, got {x}"))?;
        require(t.is_finite() && t >= 0.0, || format!("radius must be >= 0, got {t}"))?;
        Ok(Self { x, t })
    }

    /// Interval with the given endpoints, 0 ≤ a < b.
    pub fn from_endpoints(a: f64, b: f64) -> Result<Self> {
        require(a >= 0.0 && b > a, || format!("bad endpoints ({a}, {b})"))?;
        Ok(Self { x: 0.5 * (a + b), t: 0.5 * (b - a) })
    }

    pub fn left(&self) -> f64 {
        (self.x - self.t).max(0.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.t
    }

    pub fn contains(&self, y: f64) -> bool {
        y > self.left() && y < self.right()
    }

    pub fn dilate(&self, factor: f64) -> Self {
        Self { x: self.x, t: self.t * factor }
    }
}

pub fn measure_of_interval(p: &BesselParam, i: &Interval) -> f64 {
    if i.t == 0.0 {
        return 0.0;
    }
    p.measure_between(i.left(), i.right())
}

/// m(2I)/m(I).
pub fn doubling_ratio(p: &BesselParam, i: &Interval) -> Result<f64> {
    if i.t <= 0.0 {
        return Err(Error::DegenerateInterval(i.t));
    }
    Ok(measure_of_interval(p, &i.dilate(2.0)) / measure_of_interval(p, i))
}

/// Positive nodes carrying dm-quadrature weights.
///
/// Samples are read as the function that is piecewise linear in ln x between
/// nodes, constant on (0, x₀], and zero beyond the last node. The weights are
/// the exact dm-integrals of the corresponding hat functions, so the grid
/// integrates that interpolant exactly.
#[derive(Clone, Debug)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    log_nodes: Vec<f64>,
    lambda: f64,
    id: u64,
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id && self.nodes == other.nodes && self.lambda == other.lambda
    }
}

const HAT_ORDER: usize = 8;

impl RadialGrid {
    pub fn from_nodes(p: &BesselParam, nodes: Vec<f64>) -> Result<Self> {
        require(!nodes.is_empty(), || "grid needs at least one node".into())?;
        require(nodes[0] > 0.0 && nodes.iter().all(|v| v.is_finite()), || {
            "grid nodes must be positive and finite".into()
        })?;
        require(nodes.windows(2).all(|w| w[1] > w[0]), || {
            "grid nodes must be strictly increasing".into()
        })?;
        let e = p.dim();
        let log_nodes: Vec<f64> = nodes.iter().map(|x| x.ln()).collect();
        let mut weights = vec![0.0; nodes.len()];
        weights[0] = p.measure_below(nodes[0]);
        for j in 0..nodes.len() - 1 {
            let (l, r) = hat_cell_weights(log_nodes[j], log_nodes[j + 1], e);
            weights[j] += l;
            weights[j + 1] += r;
        }
        let mut h = std::collections::hash_map::DefaultHasher::new();
        p.lambda.to_bits().hash(&mut h);
        for x in &nodes {
            x.to_bits().hash(&mut h);
        }
        Ok(Self { nodes, weights, log_nodes, lambda: p.lambda, id: h.finish() })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_nodes(&self) -> &[f64] {
        &self.log_nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn span(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    /// Stable identity of (λ, nodes), used as a cache key.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Half the distance between the neighbours of node i.
    pub fn local_spacing(&self, i: usize) -> f64 {
        let n = self.nodes.len();
        if n == 1 {
            return self.nodes[0];
        }
        let lo = if i == 0 { 0 } else { i - 1 };
        let hi = (i + 1).min(n - 1);
        (self.nodes[hi] - self.nodes[lo]) / (hi - lo) as f64
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Value of the interpolant at an arbitrary point.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let n = self.nodes.len();
        if x <= self.nodes[0] {
            return values[0];
        }
        if x > self.nodes[n - 1] {
            return 0.0;
        }
        let j = self.nodes.partition_point(|&v| v < x).max(1) - 1;
        let s = x.ln();
        let th = (s - self.log_nodes[j]) / (self.log_nodes[j + 1] - self.log_nodes[j]);
        values[j] * (1.0 - th) + values[j + 1] * th
    }

    /// ∫_a^b hat_j dm for every j whose hat meets (a, b), as (index, weight) pairs.
    pub fn hat_integrals(&self, p: &BesselParam, a: f64, b: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let (a, b) = (a.max(0.0), b.min(*self.nodes.last().unwrap()));
        if b <= a {
            return out;
        }
        let x0 = self.nodes[0];
        if a < x0 {
            out.push((0, p.measure_between(a, b.min(x0))));
        }
        let e = p.dim();
        let start = self.nodes.partition_point(|&v| v <= a).max(1) - 1;
        for j in start..self.nodes.len() - 1 {
            let (xl, xr) = (self.nodes[j], self.nodes[j + 1]);
            if xl >= b {
                break;
            }
            let lo = a.max(xl);
            let hi = b.min(xr);
            if hi <= lo {
                continue;
            }
            let (l, r) = hat_partial_weights(self.log_nodes[j], self.log_nodes[j + 1], lo.ln(), hi.ln(), e);
            push_weight(&mut out, j, l);
            push_weight(&mut out, j + 1, r);
        }
        out
    }
}

fn push_weight(out: &mut Vec<(usize, f64)>, j: usize, w: f64) {
    if let Some(last) = out.last_mut() {
        if last.0 == j {
            last.1 += w;
            return;
        }
    }
    out.push((j, w));
}

/// Exact (∫(1−θ)e^{es}ds, ∫θ e^{es}ds) over the cell [sa, sb], θ = (s−sa)/h.
fn hat_cell_weights(sa: f64, sb: f64, e: f64) -> (f64, f64) {
    let h = sb - sa;
    let z = e * h;
    let scale = (e * sa).exp() * h;
    // total = ∫₀¹ e^{zθ}dθ, right = ∫₀¹ θ e^{zθ}dθ
    let (total, right) = if z.abs() < 0.5 {
        // power series keeps full relative accuracy for small z
        let mut term = 1.0;
        let mut tot = 0.0;
        let mut rgt = 0.0;
        for k in 0..30 {
            tot += term / (k as f64 + 1.0);
            rgt += term / (k as f64 + 2.0);
            term *= z / (k as f64 + 1.0);
        }
        (tot, rgt)
    } else {
        let em1 = z.exp_m1();
        (em1 / z, (z * z.exp() - em1) / (z * z))
    };
    (scale * (total - right), scale * right)
}

/// Hat weights restricted to the sub-cell [s1, s2] ⊂ [sa, sb].
fn hat_partial_weights(sa: f64, sb: f64, s1: f64, s2: f64, e: f64) -> (f64, f64) {
    if s1 <= sa && s2 >= sb {
        return hat_cell_weights(sa, sb, e);
    }
    let rule = gauss_legendre(HAT_ORDER);
    let h = sb - sa;
    let half = 0.5 * (s2 - s1);
    let mid = 0.5 * (s2 + s1);
    let (mut l, mut r) = (0.0, 0.0);
    for (u, w) in rule.nodes.iter().zip(&rule.weights) {
        let s = mid + half * u;
        let th = (s - sa) / h;
        let g = w * half * (e * s).exp();
        l += g * (1.0 - th);
        r += g * th;
    }
    (l, r)
}

/// Log-uniform grid with `count` nodes spanning [a, b].
pub fn make_log_grid(p: &BesselParam, span: (f64, f64), count: usize) -> Result<RadialGrid> {
    let (a, b) = span;
    if !(a > 0.0 && b > a && b.is_finite()) {
        return Err(Error::EmptySpan(a, b));
    }
    require(count >= 2, || format!("grid needs at least 2 nodes, got {count}"))?;
    let (la, lb) = (a.ln(), b.ln());
    let step = (lb - la) / (count - 1) as f64;
    let mut nodes: Vec<f64> = (0..count).map(|i| (la + step * i as f64).exp()).collect();
    nodes[0] = a;
    nodes[count - 1] = b;
    RadialGrid::from_nodes(p, nodes)
}

/// Log-uniform grid whose ratio between consecutive nodes is exactly 2^{1/per_octave}.
pub fn make_octave_grid(p: &BesselParam, lo_exp: i32, hi_exp: i32, per_octave: usize) -> Result<RadialGrid> {
    require(hi_exp > lo_exp && per_octave >= 1, || "bad octave grid".into())?;
    let count = (hi_exp - lo_exp) as usize * per_octave + 1;
    let nodes = (0..count)
        .map(|i| 2f64.powf(lo_exp as f64 + i as f64 / per_octave as f64))
        .collect();
    RadialGrid::from_nodes(p, nodes)
}

/// Scale range and sub-grid refinement for the discrete square function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DyadicConfig {
    pub k_min: i32,
    pub k_max: i32,
    pub n1: u32,
    pub n2: u32,
}

impl DyadicConfig {
    pub fn new(k_min: i32, k_max: i32, n1: u32, n2: u32) -> Result<Self> {
        require(k_min <= k_max, || format!("k_min {k_min} > k_max {k_max}"))?;
        Ok(Self { k_min, k_max, n1, n2 })
    }
}

impl Default for DyadicConfig {
    fn default() -> Self {
        Self { k_min: -6, k_max: 6, n1: 2, n2: 2 }
    }
}

/// (τ2^k, (τ+1)2^k].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DyadicInterval {
    pub level: i32,
    pub tau: i64,
}

impl DyadicInterval {
    /// The level-k interval containing x > 0.
    pub fn containing(x: f64, level: i32) -> Self {
        let len = 2f64.powi(level);
        let tau = (x / len).ceil() as i64 - 1;
        Self { level, tau: tau.max(0) }
    }

    pub fn length(&self) -> f64 {
        2f64.powi(self.level)
    }

    pub fn left(&self) -> f64 {
        self.tau as f64 * self.length()
    }

    pub fn right(&self) -> f64 {
        (self.tau + 1) as f64 * self.length()
    }

    pub fn center(&self) -> f64 {
        (self.tau as f64 + 0.5) * self.length()
    }

    pub fn contains(&self, y: f64) -> bool {
        y > self.left() && y <= self.right()
    }

    pub fn interval(&self) -> Interval {
        Interval { x: self.center(), t: 0.5 * self.length() }
    }
}

/// Level-k dyadic intervals covering the span (a, b].
pub fn dyadic_intervals(span: (f64, f64), level: i32) -> Result<Vec<DyadicInterval>> {
    let (a, b) = span;
    if !(a >= 0.0 && b > a && b.is_finite()) {
        return Err(Error::EmptySpan(a, b));
    }
    let len = 2f64.powi(level);
    let first = (a / len).floor() as i64;
    let last = (b / len).ceil() as i64;
    require(last - first <= 1 << 24, || format!("level {level} too fine for span ({a}, {b})"))?;
    Ok((first..last).map(|tau| DyadicInterval { level, tau }).collect())
}
