//! Radial, non-tangential, strong and one-parameter Hardy–Littlewood maximal
//! functions on finite scale lattices.

use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{require, Result};
use crate::geometry::{DyadicInterval, RadialGrid};
use crate::lp_analysis::ScaleSet;
use crate::operators::{Operators, RowSpec, SampledFunction2D, Semigroup};

/// Lattice point attaining a maximal value.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ArgMax {
    pub t1: f64,
    pub t2: f64,
    pub y1: f64,
    pub y2: f64,
    pub i1: usize,
    pub i2: usize,
    /// Positions of t1, t2 in the scale lattice (0 = largest t).
    pub level1: usize,
    pub level2: usize,
}

#[derive(Clone, Debug)]
pub struct MaximalResult {
    pub values: SampledFunction2D,
    pub argmax: Array2<ArgMax>,
    pub semigroup: Semigroup,
    pub levels: usize,
}

impl MaximalResult {
    /// Share of nodes whose sup is attained on the first or last scale.
    pub fn boundary_fraction(&self) -> f64 {
        let last = self.levels.saturating_sub(1);
        let hits = self
            .argmax
            .iter()
            .filter(|a| a.level1 == 0 || a.level2 == 0 || a.level1 == last || a.level2 == last)
            .count();
        hits as f64 / self.argmax.len().max(1) as f64
    }
}

/// Radial maximal function plus non-tangential ones for each requested aperture.
#[derive(Clone, Debug)]
pub struct MaximalSet {
    pub radial: MaximalResult,
    pub nontangential: Vec<(f64, MaximalResult)>,
}

/// Node windows [lo, hi] with |y − x_i| < r, always containing i.
pub fn cone_windows(grid: &RadialGrid, r: f64) -> Vec<(usize, usize)> {
    let nodes = grid.nodes();
    nodes
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let lo = nodes.partition_point(|&y| y <= x - r).min(i);
            let hi = (nodes.partition_point(|&y| y < x + r).max(i + 1) - 1).max(i);
            (lo, hi)
        })
        .collect()
}

/// Sliding maximum (value, index) over windows whose ends never move left.
fn window_max(v: impl Fn(usize) -> f64, windows: &[(usize, usize)]) -> Vec<(f64, usize)> {
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    windows
        .iter()
        .map(|&(lo, hi)| {
            debug_assert!(next <= hi + 1, "windows must be monotone");
            while next <= hi {
                let x = v(next);
                while dq.back().is_some_and(|&b| v(b) < x) {
                    dq.pop_back();
                }
                dq.push_back(next);
                next += 1;
            }
            while dq.front().is_some_and(|&f| f < lo) {
                dq.pop_front();
            }
            let k = dq[0];
            (v(k), k)
        })
        .collect()
}

#[derive(Clone)]
struct Acc {
    val: Array2<f64>,
    arg: Array2<ArgMax>,
}

impl Acc {
    fn new(dim: (usize, usize)) -> Self {
        Self { val: Array2::from_elem(dim, f64::NEG_INFINITY), arg: Array2::default(dim) }
    }

    /// Larger value wins; ties go to the earlier lattice point, so merging is order-free.
    fn offer(&mut self, i: usize, j: usize, v: f64, a: ArgMax) {
        let cur = self.val[(i, j)];
        let old = self.arg[(i, j)];
        if v > cur || (v == cur && (a.level1, a.level2) < (old.level1, old.level2)) {
            self.val[(i, j)] = v;
            self.arg[(i, j)] = a;
        }
    }

    fn merge(mut self, other: Self) -> Self {
        let (n1, n2) = self.val.dim();
        for i in 0..n1 {
            for j in 0..n2 {
                self.offer(i, j, other.val[(i, j)], other.arg[(i, j)]);
            }
        }
        self
    }
}

/// R and N^α for every α in `apertures`, in one pass over the (t₁, t₂) lattice.
pub fn semigroup_maximal(
    ops: &Operators,
    scales: &ScaleSet,
    f: &SampledFunction2D,
    semigroup: Semigroup,
    apertures: &[f64],
) -> Result<MaximalSet> {
    scales.validate()?;
    for &a in apertures {
        require(a > 0.0 && a.is_finite(), || format!("aperture must be positive, got {a}"))?;
    }
    let levels = scales.levels();
    let (g1, g2) = (&f.grid1, &f.grid2);
    let mats = |g: &RadialGrid| -> Result<Vec<_>> {
        levels
            .iter()
            .map(|&(t, _)| Ok(ops.op_matrix(&semigroup.op(t), g)?.expect("semigroup is not the identity")))
            .collect()
    };
    let (m1, m2) = (mats(g1)?, mats(g2)?);
    let win = |g: &RadialGrid| -> Vec<Vec<Vec<(usize, usize)>>> {
        apertures.iter().map(|&a| levels.iter().map(|&(t, _)| cone_windows(g, a * t)).collect()).collect()
    };
    let (w1, w2) = (win(g1), win(g2));
    let dim = f.values.dim();
    let (n1, n2) = dim;
    let fresh = || vec![Acc::new(dim); 1 + apertures.len()];

    let accs = (0..levels.len())
        .into_par_iter()
        .fold(fresh, |mut accs, l1| {
            let left = m1[l1].dot(&f.values);
            for l2 in 0..levels.len() {
                let u = left.dot(&m2[l2].t()).mapv(f64::abs);
                let at = |i1: usize, i2: usize| ArgMax {
                    t1: levels[l1].0,
                    t2: levels[l2].0,
                    y1: g1.nodes()[i1],
                    y2: g2.nodes()[i2],
                    i1,
                    i2,
                    level1: l1,
                    level2: l2,
                };
                for i in 0..n1 {
                    for j in 0..n2 {
                        accs[0].offer(i, j, u[(i, j)], at(i, j));
                    }
                }
                for (k, acc) in accs[1..].iter_mut().enumerate() {
                    let inner: Vec<Vec<(f64, usize)>> =
                        (0..n1).map(|i| window_max(|j| u[(i, j)], &w2[k][l2])).collect();
                    for j in 0..n2 {
                        for (i, (v, ii)) in window_max(|i| inner[i][j].0, &w1[k][l1]).into_iter().enumerate() {
                            acc.offer(i, j, v, at(ii, inner[ii][j].1));
                        }
                    }
                }
            }
            accs
        })
        .reduce(fresh, |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect());

    let mut it = accs.into_iter().map(|a| MaximalResult {
        values: f.with_values(a.val),
        argmax: a.arg,
        semigroup,
        levels: levels.len(),
    });
    let radial = it.next().expect("radial accumulator");
    let nontangential = apertures.iter().copied().zip(it).collect();
    Ok(MaximalSet { radial, nontangential })
}

/// R_T f: sup over the lattice of |T_{t₁}T_{t₂}f(x₁, x₂)|.
pub fn radial_maximal(ops: &Operators, scales: &ScaleSet, f: &SampledFunction2D, semigroup: Semigroup) -> Result<MaximalResult> {
    Ok(semigroup_maximal(ops, scales, f, semigroup, &[])?.radial)
}

/// N^α_T f: sup over the lattice and cone nodes |y_i − x_i| < αt_i.
pub fn nontangential_maximal(
    ops: &Operators,
    scales: &ScaleSet,
    aperture: f64,
    f: &SampledFunction2D,
    semigroup: Semigroup,
) -> Result<MaximalResult> {
    let mut s = semigroup_maximal(ops, scales, f, semigroup, &[aperture])?;
    Ok(s.nontangential.remove(0).1)
}

/// |T_{t₁}T_{t₂}f(y₁, y₂)| from freshly assembled rows at an arbitrary point.
pub fn extension_at(ops: &Operators, f: &SampledFunction2D, semigroup: Semigroup, a: &ArgMax) -> f64 {
    let row = |g: &RadialGrid, y: f64, t: f64| -> Array1<f64> {
        match semigroup {
            Semigroup::Poisson => {
                let [p, ..] = ops.poisson_rows(g, &[RowSpec { x: y, t }]);
                p.row(0).to_owned()
            }
            Semigroup::Heat => {
                let [h, _] = ops.heat_rows(g, &[RowSpec { x: y, t: 0.25 * t * t }]);
                h.row(0).to_owned()
            }
        }
    };
    let r1 = row(&f.grid1, a.y1, a.t1);
    let r2 = row(&f.grid2, a.y2, a.t2);
    r1.dot(&f.values.dot(&r2)).abs()
}

/// Node ranges of the dyadic intervals (τ2^k, (τ+1)2^k] met by the grid, one
/// list per level, from a single interval covering every node down to the
/// first level on which each interval holds at most one node.
pub fn dyadic_node_ranges(grid: &RadialGrid) -> Vec<Vec<(usize, usize)>> {
    let nodes = grid.nodes();
    let mut level = nodes[nodes.len() - 1].log2().floor() as i32 + 1;
    let mut out = Vec::new();
    loop {
        let mut ranges = Vec::new();
        let mut start = 0;
        for i in 1..=nodes.len() {
            if i == nodes.len()
                || DyadicInterval::containing(nodes[i], level) != DyadicInterval::containing(nodes[start], level)
            {
                ranges.push((start, i - 1));
                start = i;
            }
        }
        let done = ranges.len() == nodes.len();
        out.push(ranges);
        if done {
            return out;
        }
        level -= 1;
    }
}

/// Per-node group index on each level.
fn group_of(ranges: &[(usize, usize)], n: usize) -> Vec<usize> {
    let mut g = vec![0; n];
    for (k, &(lo, hi)) in ranges.iter().enumerate() {
        g[lo..=hi].iter_mut().for_each(|v| *v = k);
    }
    g
}

/// One-parameter dyadic maximal average of |f| along axis 1 or 2.
pub fn hl_maximal_axis(f: &SampledFunction2D, axis: usize) -> Result<SampledFunction2D> {
    require(axis == 1 || axis == 2, || format!("axis must be 1 or 2, got {axis}"))?;
    let g = if axis == 1 { f.clone() } else { f.transpose() };
    let w = g.grid1.weights();
    let (n1, n2) = g.values.dim();
    let mut out = Array2::<f64>::zeros((n1, n2));
    for ranges in dyadic_node_ranges(&g.grid1) {
        for &(lo, hi) in &ranges {
            let mass: f64 = w[lo..=hi].iter().sum();
            for j in 0..n2 {
                let s: f64 = (lo..=hi).map(|i| g.values[(i, j)].abs() * w[i]).sum();
                let avg = s / mass;
                for i in lo..=hi {
                    out[(i, j)] = out[(i, j)].max(avg);
                }
            }
        }
    }
    let r = g.with_values(out);
    Ok(if axis == 1 { r } else { r.transpose() })
}

/// M_S f: sup of dμ averages of |f| over dyadic rectangles containing the node.
pub fn strong_maximal(f: &SampledFunction2D) -> SampledFunction2D {
    let (n1, n2) = f.values.dim();
    let (w1, w2) = (f.grid1.weights(), f.grid2.weights());
    let abs = f.values.mapv(f64::abs);
    let r2: Vec<Vec<(usize, usize)>> = dyadic_node_ranges(&f.grid2);
    let r2_groups: Vec<Vec<usize>> = r2.iter().map(|r| group_of(r, n2)).collect();
    let parts: Vec<Array2<f64>> = dyadic_node_ranges(&f.grid1)
        .par_iter()
        .map(|ranges1| {
            let mut out = Array2::<f64>::zeros((n1, n2));
            // Row sums over each axis-1 group.
            let rows: Vec<(f64, Vec<f64>)> = ranges1
                .iter()
                .map(|&(lo, hi)| {
                    let m: f64 = w1[lo..=hi].iter().sum();
                    let s: Vec<f64> = (0..n2).map(|j| (lo..=hi).map(|i| abs[(i, j)] * w1[i]).sum()).collect();
                    (m, s)
                })
                .collect();
            for (ranges2, groups2) in r2.iter().zip(&r2_groups) {
                for (&(lo, hi), (m1, s)) in ranges1.iter().zip(&rows) {
                    let avgs: Vec<f64> = ranges2
                        .iter()
                        .map(|&(a, b)| {
                            let m2: f64 = w2[a..=b].iter().sum();
                            (a..=b).map(|j| s[j] * w2[j]).sum::<f64>() / (m1 * m2)
                        })
                        .collect();
                    for i in lo..=hi {
                        for j in 0..n2 {
                            let v = avgs[groups2[j]];
                            if v > out[(i, j)] {
                                out[(i, j)] = v;
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut out = Array2::<f64>::zeros((n1, n2));
    for p in parts {
        out.zip_mut_with(&p, |a, b| *a = a.max(*b));
    }
    f.with_values(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_log_grid, BesselParam};
    use ndarray::Zip;
    use std::sync::Arc;

    fn bump(x: f64, c: f64, w: f64) -> f64 {
        let r = (x - c) / w;
        if r.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - r * r).powi(4)
        }
    }

    fn setup(n: usize) -> (Operators, Arc<RadialGrid>) {
        let p = BesselParam::new(1.0).unwrap();
        (Operators::new(p), Arc::new(make_log_grid(&p, (2f64.powi(-5), 2f64.powi(5)), n).unwrap()))
    }

    fn signed(g: &Arc<RadialGrid>) -> SampledFunction2D {
        SampledFunction2D::from_fn(g.clone(), g.clone(), |x, y| {
            (bump(x, 1.0, 0.5) - 0.5 * bump(x, 3.0, 1.0)) * bump(y, 2.0, 1.5)
        })
    }

    #[test]
    fn window_max_matches_brute_force() {
        let v: Vec<f64> = (0..50).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let w: Vec<(usize, usize)> = (0..50).map(|i: usize| (i.saturating_sub(3), (i + i / 7).min(49))).collect();
        for ((val, k), &(lo, hi)) in window_max(|i| v[i], &w).into_iter().zip(&w) {
            let best = v[lo..=hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(val, best);
            assert_eq!(v[k], best);
            assert!(lo <= k && k <= hi);
        }
    }

    #[test]
    fn radial_nontangential_chain() {
        let (ops, g) = setup(40);
        let scales = ScaleSet::new(-3, 3, 2, 1.0).unwrap();
        let f = signed(&g);
        for sg in [Semigroup::Poisson, Semigroup::Heat] {
            let set = semigroup_maximal(&ops, &scales, &f, sg, &[0.5, 1.0, 2.0]).unwrap();
            let r = &set.radial.values.values;
            let mut prev = r.clone();
            for (_, n) in &set.nontangential {
                Zip::from(&prev).and(&n.values.values).for_each(|a, b| assert!(a <= b));
                prev = n.values.values.clone();
            }
            // Sup dominates every member of the lattice.
            for (t, _) in scales.levels() {
                let u = ops.tensor_apply(&sg.op(t), &sg.op(t), &f).unwrap();
                Zip::from(&u.values).and(r).for_each(|a, b| assert!(a.abs() <= *b));
            }
            // Argmax metadata reproduces the sup from independently assembled rows.
            for ((i, j), a) in set.nontangential[1].1.argmax.indexed_iter().step_by(7) {
                let v = set.nontangential[1].1.values.values[(i, j)];
                let e = extension_at(&ops, &f, sg, a);
                assert!((v - e).abs() <= 1e-12 * v.max(1e-300), "{sg:?} {v} {e}");
                assert!((a.y1 - g.nodes()[i]).abs() < 1.0 * a.t1 + 1e-15);
            }
        }
    }

    #[test]
    fn positivity_zero_and_monotonicity() {
        let (ops, g) = setup(32);
        let scales = ScaleSet::new(-2, 3, 2, 1.0).unwrap();
        let f = SampledFunction2D::from_fn(g.clone(), g.clone(), |x, y| bump(x, 1.0, 0.5) * bump(y, 1.0, 0.7));
        let big = f.with_values(f.values.mapv(|v| 1.5 * v + 0.1 * v.sqrt()));
        let z = f.zeros_like();
        let rz = radial_maximal(&ops, &scales, &z, Semigroup::Heat).unwrap();
        assert!(rz.values.values.iter().all(|v| *v == 0.0));
        let rh = radial_maximal(&ops, &scales, &f, Semigroup::Heat).unwrap();
        let n = g.len();
        for i in 4..n - 4 {
            for j in 4..n - 4 {
                assert!(rh.values.values[(i, j)] > 0.0);
            }
        }
        for sg in [Semigroup::Poisson, Semigroup::Heat] {
            let a = nontangential_maximal(&ops, &scales, 1.0, &f, sg).unwrap();
            let b = nontangential_maximal(&ops, &scales, 1.0, &big, sg).unwrap();
            Zip::from(&a.values.values).and(&b.values.values).for_each(|x, y| assert!(x <= y));
            // A larger lattice never lowers the sup.
            let c = nontangential_maximal(&ops, &scales.extended(1), 1.0, &f, sg).unwrap();
            Zip::from(&a.values.values).and(&c.values.values).for_each(|x, y| assert!(x <= y));
        }
        assert!(nontangential_maximal(&ops, &scales, 0.0, &f, Semigroup::Poisson).is_err());
        let m = strong_maximal(&f);
        let mb = strong_maximal(&big);
        Zip::from(&m.values).and(&mb.values).for_each(|x, y| assert!(x <= y));
    }

    #[test]
    fn subordination_domination_on_shared_lattice() {
        let (ops, g) = setup(40);
        let scales = ScaleSet::new(-3, 3, 2, 1.0).unwrap();
        let f = signed(&g);
        let rp = radial_maximal(&ops, &scales, &f, Semigroup::Poisson).unwrap();
        let rh = radial_maximal(&ops, &scales.extended(2), &f, Semigroup::Heat).unwrap();
        let slack = 1e-6 * f.sup_norm();
        Zip::from(&rp.values.values).and(&rh.values.values).for_each(|p, h| assert!(*p <= h + slack, "{p} {h}"));
    }

    /// All dyadic rectangles containing node (i, j), straight from the interval definition.
    fn brute_strong(f: &SampledFunction2D, i: usize, j: usize) -> f64 {
        let (x1, x2) = (f.grid1.nodes(), f.grid2.nodes());
        let (w1, w2) = (f.grid1.weights(), f.grid2.weights());
        let mut best = 0.0f64;
        for k1 in -20..8 {
            let a = DyadicInterval::containing(x1[i], k1);
            for k2 in -20..8 {
                let b = DyadicInterval::containing(x2[j], k2);
                let (mut s, mut m) = (0.0, 0.0);
                for (p, &y1) in x1.iter().enumerate() {
                    if !a.contains(y1) {
                        continue;
                    }
                    for (q, &y2) in x2.iter().enumerate() {
                        if b.contains(y2) {
                            s += f.values[(p, q)].abs() * w1[p] * w2[q];
                            m += w1[p] * w2[q];
                        }
                    }
                }
                best = best.max(s / m);
            }
        }
        best
    }

    #[test]
    fn strong_and_axis_maximal_on_indicators() {
        let p = BesselParam::new(1.0).unwrap();
        let g = Arc::new(make_log_grid(&p, (2f64.powi(-3), 2f64.powi(3)), 32).unwrap());
        let boxes = [
            ((0.5, 1.0), (0.5, 1.0)),
            ((1.0, 2.0), (0.25, 0.5)),
            ((0.25, 4.0), (2.0, 4.0)),
            ((2.0, 8.0), (2.0, 8.0)),
            ((0.125, 0.25), (1.0, 2.0)),
            ((0.3, 0.9), (0.6, 5.0)),
            ((1.5, 2.5), (1.5, 2.5)),
            ((0.2, 0.7), (3.0, 7.0)),
            ((4.0, 8.0), (0.125, 0.5)),
            ((0.1, 7.0), (0.9, 1.1)),
        ];
        for (bi, ((a1, b1), (a2, b2))) in boxes.into_iter().enumerate() {
            let inside = |x: f64, y: f64| x > a1 && x <= b1 && y > a2 && y <= b2;
            let f = SampledFunction2D::from_fn(g.clone(), g.clone(), |x, y| if inside(x, y) { 1.0 } else { 0.0 });
            let ms = strong_maximal(&f);
            let m12 = hl_maximal_axis(&hl_maximal_axis(&f, 2).unwrap(), 1).unwrap();
            let m1 = hl_maximal_axis(&f, 1).unwrap();
            for ((i, j), v) in f.values.indexed_iter() {
                let s = ms.values[(i, j)];
                assert!(s <= m12.values[(i, j)] * (1.0 + 1e-12) + 1e-15, "box {bi} ({i},{j})");
                assert!(s >= *v && m12.values[(i, j)] >= *v && m1.values[(i, j)] >= *v);
                if (i * 32 + j) % 5 == bi % 5 {
                    assert!((s - brute_strong(&f, i, j)).abs() < 1e-13, "box {bi} ({i},{j})");
                }
            }
        }
        // Dyadic product indicator: the rectangle itself gives average one.
        let f = SampledFunction2D::from_fn(g.clone(), g.clone(), |x, y| {
            if x > 0.5 && x <= 1.0 && y > 1.0 && y <= 2.0 {
                1.0
            } else {
                0.0
            }
        });
        let ms = strong_maximal(&f);
        let m1 = hl_maximal_axis(&f, 1).unwrap();
        for ((i, j), v) in f.values.indexed_iter() {
            if *v == 1.0 {
                assert!((ms.values[(i, j)] - 1.0).abs() < 1e-14);
                assert!((m1.values[(i, j)] - 1.0).abs() < 1e-14);
            }
        }
        assert!(hl_maximal_axis(&f, 3).is_err());
    }

    #[test]
    fn strong_maximal_dominates_signed_input() {
        let (_, g) = setup(24);
        let f = signed(&g);
        let m = strong_maximal(&f);
        Zip::from(&m.values).and(&f.values).for_each(|a, b| assert!(*a >= b.abs() * (1.0 - 1e-14)));
    }
}
