//! Rectangular and composite atoms on dyadic rectangles, their verification,
//! and a seeded test corpus.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::geometry::{measure_of_interval, BesselParam, DyadicInterval, RadialGrid};
use crate::operators::{lp_norm, SampledFunction2D};

/// Support dilation constant for both axes.
pub const SUPPORT_DILATION: f64 = 8.0;
/// Minimum number of grid nodes inside each half of an atom interval.
pub const MIN_NODES_PER_HALF: usize = 4;
/// Relative tolerance for the cancellation and normalization clauses.
pub const ATOM_TOL: f64 = 1e-10;

/// Dyadic rectangle I × J.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicRect {
    pub i: (i32, i64),
    pub j: (i32, i64),
}

impl DyadicRect {
    pub fn new(i: DyadicInterval, j: DyadicInterval) -> Self {
        Self { i: (i.level, i.tau), j: (j.level, j.tau) }
    }

    pub fn first(&self) -> DyadicInterval {
        DyadicInterval { level: self.i.0, tau: self.i.1 }
    }

    pub fn second(&self) -> DyadicInterval {
        DyadicInterval { level: self.j.0, tau: self.j.1 }
    }

    pub fn measure(&self, p: &BesselParam) -> f64 {
        measure_of_interval(p, &self.first().interval()) * measure_of_interval(p, &self.second().interval())
    }

    /// Every dyadic interval contained in the other along both axes.
    pub fn within(&self, other: &Self) -> bool {
        fn inside(a: DyadicInterval, b: DyadicInterval) -> bool {
            a.left() >= b.left() && a.right() <= b.right()
        }
        inside(self.first(), other.first()) && inside(self.second(), other.second())
    }

    fn intersect(&self, other: &Self) -> Option<Self> {
        let pick = |a: DyadicInterval, b: DyadicInterval| {
            // Dyadic intervals are nested or disjoint.
            if a.left() >= b.left() && a.right() <= b.right() {
                Some(a)
            } else if b.left() >= a.left() && b.right() <= a.right() {
                Some(b)
            } else {
                None
            }
        };
        Some(Self::new(pick(self.first(), other.first())?, pick(self.second(), other.second())?))
    }
}

/// One-axis profile: bumps on the two halves of I with opposite signs,
/// the left one scaled so the dm quadrature of the profile vanishes.
fn axis_profile(grid: &RadialGrid, iv: DyadicInterval) -> Result<Vec<f64>> {
    let (a, b) = (iv.left(), iv.right());
    let m = 0.5 * (a + b);
    let nodes = grid.nodes();
    let (lo, hi) = grid.span();
    if a < 0.0 || b > hi || b <= lo {
        return Err(Error::Resolution(format!("interval ({a}, {b}] is outside the grid span")));
    }
    let half = |l: f64, r: f64| nodes.iter().filter(|&&x| x > l && x < r).count();
    let (nl, nr) = (half(a, m), half(m, b));
    if nl < MIN_NODES_PER_HALF || nr < MIN_NODES_PER_HALF {
        return Err(Error::Resolution(format!(
            "interval ({a}, {b}] is finer than the grid ({nl} and {nr} nodes per half)"
        )));
    }
    let bump = |x: f64, l: f64, r: f64| {
        let c = 0.5 * (l + r);
        let s = (x - c) / (0.5 * (r - l));
        if s.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - s * s).powi(4)
        }
    };
    let w = grid.weights();
    let right: Vec<f64> = nodes.iter().map(|&x| bump(x, m, b)).collect();
    let left: Vec<f64> = nodes.iter().map(|&x| bump(x, a, m)).collect();
    let mr: f64 = right.iter().zip(w).map(|(v, w)| v * w).sum();
    let ml: f64 = left.iter().zip(w).map(|(v, w)| v * w).sum();
    let alpha = mr / ml;
    Ok(right.iter().zip(&left).map(|(r, l)| r - alpha * l).collect())
}

/// L²-normalized, doubly cancellative function supported in I × J.
#[derive(Clone, Debug)]
pub struct RectangularAtom {
    pub rect: DyadicRect,
    pub values: SampledFunction2D,
    /// Declared ‖a‖₂.
    pub norm: f64,
    pub exponent: f64,
}

/// Atom on R normalized to ‖a‖₂ = μ(R)^{1/2−1/p}.
pub fn make_rectangular_atom(
    p: &BesselParam,
    grid1: Arc<RadialGrid>,
    grid2: Arc<RadialGrid>,
    rect: DyadicRect,
    exponent: f64,
) -> Result<RectangularAtom> {
    let norm = rect.measure(p).powf(0.5 - 1.0 / exponent);
    make_atom_with_norm(p, grid1, grid2, rect, exponent, norm)
}

fn check_exponent(p: &BesselParam, e: f64) -> Result<()> {
    require(e > p.hardy_lower() && e <= 1.0, || {
        format!("exponent {e} outside ({}, 1]", p.hardy_lower())
    })
}

fn make_atom_with_norm(
    p: &BesselParam,
    grid1: Arc<RadialGrid>,
    grid2: Arc<RadialGrid>,
    rect: DyadicRect,
    exponent: f64,
    norm: f64,
) -> Result<RectangularAtom> {
    check_exponent(p, exponent)?;
    let b1 = axis_profile(&grid1, rect.first())?;
    let b2 = axis_profile(&grid2, rect.second())?;
    let raw = Array2::from_shape_fn((b1.len(), b2.len()), |(i, j)| b1[i] * b2[j]);
    let f = SampledFunction2D::new(grid1, grid2, raw)?;
    let scale = norm / lp_norm(&f, 2.0);
    let values = f.with_values(f.values.mapv(|v| v * scale));
    Ok(RectangularAtom { rect, values, norm, exponent })
}

/// Outcome of checking the three atom clauses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AtomReport {
    /// Largest |a| outside C̄I × C̄J.
    pub support_violation: f64,
    /// Largest |∫a dm| over slices, per variable, absolute.
    pub cancellation: [f64; 2],
    /// The same relative to ∫|a| dm on the slice.
    pub cancellation_rel: [f64; 2],
    /// ‖a‖₂ / declared norm.
    pub norm_ratio: f64,
    pub support_ok: bool,
    pub cancellation_ok: bool,
    pub norm_ok: bool,
}

impl AtomReport {
    pub fn passed(&self) -> bool {
        self.support_ok && self.cancellation_ok && self.norm_ok
    }
}

/// Check support, cancellation and normalization; never fails.
pub fn verify_atom(a: &RectangularAtom) -> AtomReport {
    let f = &a.values;
    let (n1, n2) = f.values.dim();
    let (x1, x2) = (f.grid1.nodes(), f.grid2.nodes());
    let (w1, w2) = (f.grid1.weights(), f.grid2.weights());
    let big1 = a.rect.first().interval().dilate(SUPPORT_DILATION);
    let big2 = a.rect.second().interval().dilate(SUPPORT_DILATION);
    let mut support_violation = 0.0f64;
    for i in 0..n1 {
        for j in 0..n2 {
            let inside = x1[i] > big1.left() && x1[i] < big1.right() && x2[j] > big2.left() && x2[j] < big2.right();
            if !inside {
                support_violation = support_violation.max(f.values[(i, j)].abs());
            }
        }
    }
    let mut cancellation = [0.0f64; 2];
    let mut cancellation_rel = [0.0f64; 2];
    for j in 0..n2 {
        let (s, m) = (0..n1).fold((0.0, 0.0), |(s, m), i| (s + f.values[(i, j)] * w1[i], m + f.values[(i, j)].abs() * w1[i]));
        cancellation[0] = cancellation[0].max(s.abs());
        if m > 0.0 {
            cancellation_rel[0] = cancellation_rel[0].max(s.abs() / m);
        }
    }
    for i in 0..n1 {
        let (s, m) = (0..n2).fold((0.0, 0.0), |(s, m), j| (s + f.values[(i, j)] * w2[j], m + f.values[(i, j)].abs() * w2[j]));
        cancellation[1] = cancellation[1].max(s.abs());
        if m > 0.0 {
            cancellation_rel[1] = cancellation_rel[1].max(s.abs() / m);
        }
    }
    let norm_ratio = lp_norm(f, 2.0) / a.norm;
    AtomReport {
        support_violation,
        cancellation,
        cancellation_rel,
        norm_ratio,
        support_ok: support_violation == 0.0,
        cancellation_ok: cancellation_rel[0] <= ATOM_TOL && cancellation_rel[1] <= ATOM_TOL,
        norm_ok: (norm_ratio - 1.0).abs() <= ATOM_TOL,
    }
}

/// μ(∪ rects) by inclusion–exclusion; dyadic rectangles meet in dyadic rectangles.
pub fn union_measure(p: &BesselParam, rects: &[DyadicRect]) -> Result<f64> {
    require(rects.len() <= 20, || format!("inclusion–exclusion over {} rectangles is too large", rects.len()))?;
    fn rec(p: &BesselParam, rects: &[DyadicRect], start: usize, cur: Option<DyadicRect>, depth: usize) -> f64 {
        let mut total = 0.0;
        for k in start..rects.len() {
            let next = match cur {
                None => Some(rects[k]),
                Some(c) => c.intersect(&rects[k]),
            };
            if let Some(r) = next {
                let sign = if depth % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * r.measure(p) + rec(p, rects, k + 1, Some(r), depth + 1);
            }
        }
        total
    }
    Ok(rec(p, rects, 0, None, 0))
}

/// Lebesgue area of R ∩ ∪rects, by coordinate compression.
fn covered_area(r: &DyadicRect, rects: &[DyadicRect]) -> f64 {
    let (a1, b1) = (r.first().left(), r.first().right());
    let (a2, b2) = (r.second().left(), r.second().right());
    let cuts = |lo: f64, hi: f64, f: &dyn Fn(&DyadicRect) -> (f64, f64)| {
        let mut v = vec![lo, hi];
        for q in rects {
            let (l, h) = f(q);
            v.extend([l, h].into_iter().filter(|x| *x > lo && *x < hi));
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    };
    let c1 = cuts(a1, b1, &|q| (q.first().left(), q.first().right()));
    let c2 = cuts(a2, b2, &|q| (q.second().left(), q.second().right()));
    let mut area = 0.0;
    for u in c1.windows(2) {
        for v in c2.windows(2) {
            let (mx, my) = (0.5 * (u[0] + u[1]), 0.5 * (v[0] + v[1]));
            let hit = rects.iter().any(|q| q.first().contains(mx) && q.second().contains(my));
            if hit {
                area += (u[1] - u[0]) * (v[1] - v[0]);
            }
        }
    }
    area
}

/// Maximal dyadic rectangles contained in ∪rects, by brute force over all
/// dyadic rectangles between the finest member level and the union's extent.
pub fn maximal_rectangles(rects: &[DyadicRect]) -> Vec<DyadicRect> {
    if rects.is_empty() {
        return Vec::new();
    }
    let span = |f: &dyn Fn(&DyadicRect) -> DyadicInterval| {
        let lo = rects.iter().map(|r| f(r).left()).fold(f64::INFINITY, f64::min);
        let hi = rects.iter().map(|r| f(r).right()).fold(0.0, f64::max);
        let fine = rects.iter().map(|r| f(r).level).min().unwrap();
        let coarse = (hi - lo).log2().ceil() as i32;
        let mut out = Vec::new();
        for level in fine..=coarse.max(fine) {
            let len = 2f64.powi(level);
            let first = (lo / len).floor() as i64;
            let last = (hi / len).ceil() as i64;
            for tau in first..last {
                let d = DyadicInterval { level, tau };
                if d.left() >= lo && d.right() <= hi {
                    out.push(d);
                }
            }
        }
        out
    };
    let c1 = span(&|r| r.first());
    let c2 = span(&|r| r.second());
    let mut inside = Vec::new();
    for &i in &c1 {
        for &j in &c2 {
            let r = DyadicRect::new(i, j);
            let full = i.length() * j.length();
            if (covered_area(&r, rects) - full).abs() <= 1e-12 * full {
                inside.push(r);
            }
        }
    }
    inside
        .iter()
        .filter(|r| !inside.iter().any(|o| o != *r && r.within(o)))
        .copied()
        .collect()
}

/// Sum of rectangular atoms over the maximal rectangles of a finite union Ω.
#[derive(Clone, Debug)]
pub struct CompositeAtom {
    pub omega: Vec<DyadicRect>,
    pub omega_measure: f64,
    pub members: Vec<RectangularAtom>,
    pub values: SampledFunction2D,
    pub exponent: f64,
}

impl CompositeAtom {
    /// μ(Ω)^{1/2−1/p}.
    pub fn bound(&self) -> f64 {
        self.omega_measure.powf(0.5 - 1.0 / self.exponent)
    }

    /// (Σ‖a_R‖₂²)^{1/2}.
    pub fn member_norm(&self) -> f64 {
        self.members.iter().map(|a| lp_norm(&a.values, 2.0).powi(2)).sum::<f64>().sqrt()
    }
}

/// Composite atom on Ω = ∪rects with member norms ∝ μ(R)^{1/2}, rescaled if
/// overlaps push ‖a‖₂ above the bound. `signs` alternate member signs when set.
pub fn make_composite_atom(
    p: &BesselParam,
    grid1: Arc<RadialGrid>,
    grid2: Arc<RadialGrid>,
    rects: &[DyadicRect],
    exponent: f64,
    alternate: bool,
) -> Result<CompositeAtom> {
    check_exponent(p, exponent)?;
    require(!rects.is_empty(), || "composite atom needs at least one rectangle".into())?;
    let omega_measure = union_measure(p, rects)?;
    let bound = omega_measure.powf(0.5 - 1.0 / exponent);
    let maximal = maximal_rectangles(rects);
    let total: f64 = maximal.iter().map(|r| r.measure(p)).sum();
    let mut members = Vec::with_capacity(maximal.len());
    for (k, r) in maximal.iter().enumerate() {
        let sign = if alternate && k % 2 == 1 { -1.0 } else { 1.0 };
        let share = bound * (r.measure(p) / total).sqrt();
        let mut a = make_atom_with_norm(p, grid1.clone(), grid2.clone(), *r, exponent, share)?;
        a.values.values.mapv_inplace(|v| sign * v);
        members.push(a);
    }
    let mut sum = Array2::<f64>::zeros((grid1.len(), grid2.len()));
    for a in &members {
        sum += &a.values.values;
    }
    let values = SampledFunction2D::new(grid1, grid2, sum)?;
    let n = lp_norm(&values, 2.0);
    let shrink = if n > bound { bound / n } else { 1.0 };
    let values = values.with_values(values.values.mapv(|v| v * shrink));
    for a in members.iter_mut() {
        a.values.values.mapv_inplace(|v| v * shrink);
        a.norm *= shrink;
    }
    Ok(CompositeAtom { omega: rects.to_vec(), omega_measure, members, values, exponent })
}

/// What a corpus item is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    Bump,
    Atom,
    Oscillatory,
    Combination,
}

#[derive(Clone, Debug)]
pub struct CorpusItem {
    pub index: usize,
    pub kind: CorpusKind,
    pub label: String,
    pub function: SampledFunction2D,
    /// Rectangles of the atoms that make up the item, if any.
    pub rects: Vec<DyadicRect>,
    pub atoms: Vec<RectangularAtom>,
}

fn smooth_bump(x: f64, c: f64, w: f64) -> f64 {
    let r = (x - c) / w;
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - r * r).powi(4)
    }
}

/// Random dyadic interval with enough grid nodes, from octave-type (τ ∈ {0, 1}) candidates.
fn random_interval(rng: &mut ChaCha8Rng, grid: &RadialGrid) -> Result<DyadicInterval> {
    let (lo, hi) = grid.span();
    let top = hi.log2().floor() as i32 - 2;
    let bottom = (lo.log2().ceil() as i32 + 3).min(top);
    let fits = (bottom..=top).any(|level| (0..=1).any(|tau| axis_profile(grid, DyadicInterval { level, tau }).is_ok()));
    if !fits {
        return Err(Error::Resolution(format!(
            "no dyadic interval at levels {bottom}..={top} holds {MIN_NODES_PER_HALF} nodes per half on a {}-node grid",
            grid.len()
        )));
    }
    loop {
        let level = rng.gen_range(bottom..=top);
        let tau = rng.gen_range(0..=1);
        let d = DyadicInterval { level, tau };
        if axis_profile(grid, d).is_ok() {
            return Ok(d);
        }
    }
}

/// Deterministic mixture of bumps, atoms, modulated bumps and atom combinations.
pub fn corpus(
    p: &BesselParam,
    grid1: Arc<RadialGrid>,
    grid2: Arc<RadialGrid>,
    seed: u64,
    count: usize,
    exponent: f64,
) -> Result<Vec<CorpusItem>> {
    require(count >= 1, || "corpus count must be at least 1".into())?;
    check_exponent(p, exponent)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [CorpusKind::Bump, CorpusKind::Atom, CorpusKind::Oscillatory, CorpusKind::Combination];
    let mut out = Vec::with_capacity(count);
    let centre = |rng: &mut ChaCha8Rng| 2f64.powf(rng.gen_range(-2.0..2.5));
    for index in 0..count {
        let kind = kinds[index % kinds.len()];
        let item = match kind {
            CorpusKind::Bump | CorpusKind::Oscillatory => {
                let (c1, c2) = (centre(&mut rng), centre(&mut rng));
                let (w1, w2) = (c1 * rng.gen_range(0.3..0.8), c2 * rng.gen_range(0.3..0.8));
                let amp = 10f64.powf(rng.gen_range(-2.0..2.0));
                let freq = rng.gen_range(2.0..6.0);
                let osc = kind == CorpusKind::Oscillatory;
                let function = SampledFunction2D::from_fn(grid1.clone(), grid2.clone(), |x, y| {
                    let m = if osc { (freq * (x / c1).ln()).cos() * (freq * (y / c2).ln()).sin() } else { 1.0 };
                    amp * m * smooth_bump(x, c1, w1) * smooth_bump(y, c2, w2)
                });
                let label = format!("{kind:?} c=({c1:.3},{c2:.3}) w=({w1:.3},{w2:.3}) amp={amp:.3e}").to_lowercase();
                CorpusItem { index, kind, label, function, rects: vec![], atoms: vec![] }
            }
            CorpusKind::Atom => {
                let rect = DyadicRect::new(random_interval(&mut rng, &grid1)?, random_interval(&mut rng, &grid2)?);
                let atom = make_rectangular_atom(p, grid1.clone(), grid2.clone(), rect, exponent)?;
                let label = format!("atom I=(2^{},{}) J=(2^{},{})", rect.i.0, rect.i.1, rect.j.0, rect.j.1);
                CorpusItem { index, kind, label, function: atom.values.clone(), rects: vec![rect], atoms: vec![atom] }
            }
            CorpusKind::Combination => {
                let k = rng.gen_range(2..=3);
                let mut atoms = Vec::new();
                let mut sum = Array2::<f64>::zeros((grid1.len(), grid2.len()));
                for _ in 0..k {
                    let rect = DyadicRect::new(random_interval(&mut rng, &grid1)?, random_interval(&mut rng, &grid2)?);
                    let coef = rng.gen_range(-1.0..1.0);
                    let a = make_rectangular_atom(p, grid1.clone(), grid2.clone(), rect, exponent)?;
                    sum.scaled_add(coef, &a.values.values);
                    atoms.push(a);
                }
                let rects = atoms.iter().map(|a| a.rect).collect();
                let function = SampledFunction2D::new(grid1.clone(), grid2.clone(), sum)?;
                CorpusItem { index, kind, label: format!("combination of {k} atoms"), function, rects, atoms }
            }
        };
        out.push(item);
    }
    Ok(out)
}
