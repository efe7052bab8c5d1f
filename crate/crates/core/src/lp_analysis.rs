//! Littlewood–Paley functionals on the product space: the g-function, the
//! area functions S and S_u, and the discrete square function S_d.

use std::sync::Arc;

use ndarray::{Array1, Array2, Zip};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::geometry::{measure_of_interval, DyadicConfig, DyadicInterval, Interval, RadialGrid};
use crate::operators::{apply_matrices, MatrixKind, Op, Operators, RowSpec, SampledFunction1D, SampledFunction2D, Semigroup};

/// Dyadic scales t = 2^{−k}, k_min ≤ k ≤ k_max, with sub-samples per octave.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleSet {
    pub k_min: i32,
    pub k_max: i32,
    pub per_octave: u32,
    pub aperture: f64,
}

impl Default for ScaleSet {
    fn default() -> Self {
        Self { k_min: -6, k_max: 6, per_octave: 2, aperture: 1.0 }
    }
}

impl ScaleSet {
    pub fn new(k_min: i32, k_max: i32, per_octave: u32, aperture: f64) -> Result<Self> {
        let s = Self { k_min, k_max, per_octave, aperture };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.per_octave >= 1, || "per_octave must be >= 1".into())?;
        require(self.aperture > 0.0 && self.aperture.is_finite(), || "aperture must be positive".into())?;
        let n = self.count();
        if self.k_max < self.k_min || n < 3 {
            return Err(Error::TooFewScales(n.max(0) as usize));
        }
        Ok(())
    }

    fn count(&self) -> i64 {
        (self.k_max - self.k_min) as i64 * self.per_octave as i64 + 1
    }

    /// (t, Δln t) pairs, largest t first; trapezoid weights in ln t.
    pub fn levels(&self) -> Vec<(f64, f64)> {
        let n = self.count().max(0) as usize;
        let m = self.per_octave as i64;
        let step = std::f64::consts::LN_2 / m as f64;
        (0..n)
            .map(|i| {
                // Integer numerator keeps t bitwise identical across shifted sets.
                let t = 2f64.powf(-((self.k_min as i64 * m + i as i64) as f64) / m as f64);
                let w = if i == 0 || i + 1 == n { 0.5 * step } else { step };
                (t, w)
            })
            .collect()
    }

    /// The same set shifted by `octaves` coarser and finer on each side.
    pub fn extended(&self, octaves: i32) -> Self {
        Self { k_min: self.k_min - octaves, k_max: self.k_max + octaves, ..self.clone() }
    }

    /// Every scale multiplied by 2^j.
    pub fn dilated(&self, j: i32) -> Self {
        Self { k_min: self.k_min - j, k_max: self.k_max - j, ..self.clone() }
    }
}

/// Cone data at one scale on one axis.
#[derive(Clone, Debug)]
pub struct ConeSample {
    pub t: f64,
    /// Row i averages the interpolant over I(x_i, αt) against dm.
    pub average: Array2<f64>,
    /// Node index windows [lo, hi] with |y − x_i| < αt (always containing i).
    pub windows: Vec<(usize, usize)>,
}

pub fn cone_sample(grid: &RadialGrid, lambda_param: &crate::geometry::BesselParam, t: f64, aperture: f64) -> ConeSample {
    let n = grid.len();
    let r = aperture * t;
    let mut average = Array2::zeros((n, n));
    let nodes = grid.nodes();
    let mut windows = Vec::with_capacity(n);
    for (i, &x) in nodes.iter().enumerate() {
        let iv = Interval { x, t: r };
        let m = measure_of_interval(lambda_param, &iv);
        for (j, w) in grid.hat_integrals(lambda_param, iv.left(), iv.right()) {
            average[(i, j)] += w / m;
        }
        let lo = nodes.partition_point(|&y| y <= x - r).min(i);
        let hi = (nodes.partition_point(|&y| y < x + r).max(i + 1) - 1).max(i);
        windows.push((lo, hi));
    }
    ConeSample { t, average, windows }
}

/// Which Littlewood–Paley functionals to accumulate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Want {
    pub g: bool,
    pub s: bool,
    pub su: bool,
}

/// Squared-function accumulators (values are the square roots on output).
#[derive(Clone, Debug)]
pub struct SquareFunctions {
    pub g: Option<SampledFunction2D>,
    pub s: Option<SampledFunction2D>,
    pub su: Option<SampledFunction2D>,
}

struct AxisData {
    w: f64,
    d: Arc<Array2<f64>>,
    dx: Option<Arc<Array2<f64>>>,
    cone: Option<Array2<f64>>,
}

fn axis_data(
    ops: &Operators,
    grid: &RadialGrid,
    scales: &ScaleSet,
    semigroup: Semigroup,
    want: Want,
) -> Result<Vec<AxisData>> {
    let factor = semigroup.log_measure_factor();
    scales
        .levels()
        .into_iter()
        .map(|(t, w)| {
            let d = ops.op_matrix(&semigroup.derivative_op(t), grid)?.expect("not identity");
            let dx = if want.su { ops.op_matrix(&Op::PoissonTDx(t), grid)? } else { None };
            let cone = if want.s || want.su {
                Some(cone_sample(grid, ops.param(), t, scales.aperture).average)
            } else {
                None
            };
            Ok(AxisData { w: w * factor, d, dx, cone })
        })
        .collect()
}

/// g, S and S_u of f in one pass over the (t₁, t₂) lattice.
pub fn littlewood_paley(
    ops: &Operators,
    scales: &ScaleSet,
    f: &SampledFunction2D,
    semigroup: Semigroup,
    want: Want,
) -> Result<SquareFunctions> {
    scales.validate()?;
    if want.su && semigroup != Semigroup::Poisson {
        return Err(Error::InvalidParameter("S_u is defined for the Poisson semigroup only".into()));
    }
    let a1 = axis_data(ops, &f.grid1, scales, semigroup, want)?;
    let a2 = axis_data(ops, &f.grid2, scales, semigroup, want)?;
    let dim = f.values.dim();
    let zero = || Array2::<f64>::zeros(dim);
    let parts: Vec<(Array2<f64>, Array2<f64>, Array2<f64>)> = a1
        .par_iter()
        .map(|ax| {
            let (mut g, mut s_in, mut su_in) = (zero(), zero(), zero());
            let df = ax.d.dot(&f.values);
            let dxf = ax.dx.as_ref().map(|m| m.dot(&f.values));
            for ay in &a2 {
                let ut = df.dot(&ay.d.t());
                let sq = ut.mapv(|v| v * v);
                if want.g {
                    g.scaled_add(ax.w * ay.w, &sq);
                }
                if want.s {
                    s_in.scaled_add(ay.w, &sq.dot(&ay.cone.as_ref().unwrap().t()));
                }
                if want.su {
                    let bx = ay.dx.as_ref().unwrap();
                    let dxf = dxf.as_ref().unwrap();
                    let mut q = sq.clone();
                    for m in [df.dot(&bx.t()), dxf.dot(&ay.d.t()), dxf.dot(&bx.t())] {
                        Zip::from(&mut q).and(&m).for_each(|a, &b| *a += b * b);
                    }
                    su_in.scaled_add(ay.w, &q.dot(&ay.cone.as_ref().unwrap().t()));
                }
            }
            let cone = ax.cone.as_ref();
            let s = if want.s { cone.unwrap().dot(&s_in) * ax.w } else { s_in };
            let su = if want.su { cone.unwrap().dot(&su_in) * ax.w } else { su_in };
            (g, s, su)
        })
        .collect();
    let (mut g, mut s, mut su) = (zero(), zero(), zero());
    for (a, b, c) in parts {
        g += &a;
        s += &b;
        su += &c;
    }
    let finish = |m: Array2<f64>, on: bool| on.then(|| f.with_values(m.mapv(|v| v.max(0.0).sqrt())));
    Ok(SquareFunctions { g: finish(g, want.g), s: finish(s, want.s), su: finish(su, want.su) })
}

pub fn g_function(ops: &Operators, scales: &ScaleSet, f: &SampledFunction2D, semigroup: Semigroup) -> Result<SampledFunction2D> {
    Ok(littlewood_paley(ops, scales, f, semigroup, Want { g: true, ..Want::default() })?.g.unwrap())
}

pub fn area_function_s(ops: &Operators, scales: &ScaleSet, f: &SampledFunction2D, semigroup: Semigroup) -> Result<SampledFunction2D> {
    Ok(littlewood_paley(ops, scales, f, semigroup, Want { s: true, ..Want::default() })?.s.unwrap())
}

pub fn area_function_su(ops: &Operators, scales: &ScaleSet, f: &SampledFunction2D) -> Result<SampledFunction2D> {
    Ok(littlewood_paley(ops, scales, f, Semigroup::Poisson, Want { su: true, ..Want::default() })?.su.unwrap())
}

/// One-parameter g-function (Σ_t |t∂_tT_t f|² Δln t)^{1/2}.
pub fn g_function_1d(ops: &Operators, scales: &ScaleSet, f: &SampledFunction1D, semigroup: Semigroup) -> Result<SampledFunction1D> {
    scales.validate()?;
    let factor = semigroup.log_measure_factor();
    let mut acc = vec![0.0; f.grid.len()];
    for (t, w) in scales.levels() {
        let u = ops.apply(&semigroup.derivative_op(t), f)?;
        for (a, v) in acc.iter_mut().zip(&u.values) {
            *a += w * factor * v * v;
        }
    }
    Ok(SampledFunction1D { grid: f.grid.clone(), values: acc.into_iter().map(f64::sqrt).collect() })
}

/// Node-indexed matrix of Q_k = P_{2^{−k}} − P_{2^{−k+1}} evaluated at the centre
/// of the level −(k+N) dyadic interval containing each node.
pub fn dyadic_difference_matrix(ops: &Operators, grid: &RadialGrid, k: i32, refine: u32) -> Result<Array2<f64>> {
    let level = -(k + refine as i32);
    let t = 2f64.powi(-k);
    let mut centers: Vec<f64> = Vec::new();
    let mut idx = Vec::with_capacity(grid.len());
    for &x in grid.nodes() {
        let c = DyadicInterval::containing(x, level).center();
        if centers.last() != Some(&c) {
            centers.push(c);
        }
        idx.push(centers.len() - 1);
    }
    let rows: Vec<RowSpec> = centers
        .iter()
        .flat_map(|&x| [RowSpec { x, t }, RowSpec { x, t: 2.0 * t }])
        .collect();
    let [p, _, _, _] = ops.poisson_rows(grid, &rows);
    let n = grid.len();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        let r = 2 * idx[i];
        p[(r, j)] - p[(r + 1, j)]
    }))
}

/// S_d(f) at every node.
pub fn discrete_square_function(ops: &Operators, dyadic: &DyadicConfig, f: &SampledFunction2D) -> Result<SampledFunction2D> {
    let finest = 2f64.powi(-dyadic.k_max);
    for g in [&f.grid1, &f.grid2] {
        if finest < g.min_spacing() {
            return Err(Error::Resolution(format!(
                "scale 2^-{} is below the grid spacing {:.3e}",
                dyadic.k_max,
                g.min_spacing()
            )));
        }
    }
    let build = |grid: &RadialGrid, refine: u32| -> Result<Vec<Arc<Array2<f64>>>> {
        (dyadic.k_min..=dyadic.k_max)
            .map(|k| {
                let kind = MatrixKind::DyadicDifference(refine);
                ops.cached_matrix(kind, 2f64.powi(-k), grid, || dyadic_difference_matrix(ops, grid, k, refine))
            })
            .collect()
    };
    let q1 = build(&f.grid1, dyadic.n1)?;
    let q2 = build(&f.grid2, dyadic.n2)?;
    let parts: Vec<Array2<f64>> = q1
        .par_iter()
        .map(|a| {
            let af = a.dot(&f.values);
            let mut acc = Array2::<f64>::zeros(f.values.dim());
            for b in &q2 {
                let u = af.dot(&b.t());
                Zip::from(&mut acc).and(&u).for_each(|s, &v| *s += v * v);
            }
            acc
        })
        .collect();
    let mut acc = Array2::<f64>::zeros(f.values.dim());
    for p in parts {
        acc += &p;
    }
    Ok(f.with_values(acc.mapv(f64::sqrt)))
}

/// ∫ Q_k(x, y) dm(y) at every node, for the cancellation check.
pub fn dyadic_difference_mass(ops: &Operators, grid: &RadialGrid, k: i32, refine: u32) -> Result<Vec<f64>> {
    let q = dyadic_difference_matrix(ops, grid, k, refine)?;
    let one = Array1::from_elem(grid.len(), 1.0);
    Ok(q.dot(&one).to_vec())
}

/// Apply the same 1D operator family along both axes (helper for tests and harness).
pub fn tensor(ops: &Operators, a: &Op, b: &Op, f: &SampledFunction2D) -> Result<Array2<f64>> {
    let m1 = ops.op_matrix(a, &f.grid1)?;
    let m2 = ops.op_matrix(b, &f.grid2)?;
    apply_matrices(m1.as_deref(), m2.as_deref(), &f.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_log_grid, make_octave_grid, BesselParam};
    use crate::operators::{lp_norm, lp_norm_1d};

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
        (Operators::new(p), Arc::new(make_log_grid(&p, (2f64.powi(-6), 2f64.powi(6)), n).unwrap()))
    }

    #[test]
    fn scale_set_levels() {
        let s = ScaleSet::default();
        let l = s.levels();
        assert_eq!(l.len(), 25);
        assert_eq!(l[0].0, 64.0);
        assert!((l[24].0 - 1.0 / 64.0).abs() < 1e-15);
        let total: f64 = l.iter().map(|v| v.1).sum();
        assert!((total - 12.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!(ScaleSet::new(0, 0, 1, 1.0).is_err());
        assert!(ScaleSet::new(0, 1, 1, 0.0).is_err());
    }

    #[test]
    fn one_parameter_g_identity() {
        let p = BesselParam::new(1.0).unwrap();
        let g = Arc::new(make_log_grid(&p, (2f64.powi(-6), 2f64.powi(6)), 256).unwrap());
        let ops = Operators::new(p);
        let f = SampledFunction1D::from_fn(g, |x| bump(x, 1.0, 0.6));
        let scales = ScaleSet::new(-8, 8, 2, 1.0).unwrap();
        for sg in [Semigroup::Poisson, Semigroup::Heat] {
            let gf = g_function_1d(&ops, &scales, &f, sg).unwrap();
            let r = lp_norm_1d(&gf, 2.0).powi(2) / lp_norm_1d(&f, 2.0).powi(2);
            assert!((r / 0.25 - 1.0).abs() < 0.05, "{sg:?} {r}");
        }
    }

    #[test]
    fn zero_in_zero_out_and_dominations() {
        let (ops, g) = setup(48);
        let scales = ScaleSet::new(-3, 3, 2, 1.0).unwrap();
        let z = SampledFunction2D::from_fn(g.clone(), g.clone(), |_, _| 0.0);
        let all = Want { g: true, s: true, su: true };
        let r = littlewood_paley(&ops, &scales, &z, Semigroup::Poisson, all).unwrap();
        for m in [r.g.unwrap(), r.s.unwrap(), r.su.unwrap()] {
            assert!(m.values.iter().all(|v| *v == 0.0));
        }
        let f = SampledFunction2D::from_fn(g.clone(), g.clone(), |x, y| bump(x, 1.0, 0.5) * (bump(y, 2.0, 1.0) - bump(y, 0.5, 0.3)));
        let r = littlewood_paley(&ops, &scales, &f, Semigroup::Poisson, all).unwrap();
        let (s, su) = (r.s.unwrap(), r.su.unwrap());
        Zip::from(&s.values).and(&su.values).for_each(|a, b| assert!(*a <= *b * (1.0 + 1e-12)));
        assert!(s.values.iter().all(|v| *v >= 0.0));
        let sd = discrete_square_function(&ops, &DyadicConfig::new(-3, 3, 2, 2).unwrap(), &z).unwrap();
        assert!(sd.values.iter().all(|v| *v == 0.0));
        let h = area_function_s(&ops, &scales, &f, Semigroup::Heat).unwrap();
        assert!(h.values.iter().all(|v| v.is_finite()));
        assert!(area_function_su(&ops, &scales, &f).is_ok());
    }

    #[test]
    fn sublinearity() {
        let (ops, g) = setup(40);
        let scales = ScaleSet::new(-2, 3, 2, 1.0).unwrap();
        let a = SampledFunction2D::from_fn(g.clone(), g.clone(), |x, y| bump(x, 1.0, 0.5) * bump(y, 1.0, 0.5));
        let b = SampledFunction2D::from_fn(g.clone(), g.clone(), |x, y| bump(x, 2.0, 1.0) * bump(y, 0.5, 0.2));
        let ab = a.with_values(&a.values + &b.values);
        let all = Want { g: true, s: true, su: true };
        let fa = littlewood_paley(&ops, &scales, &a, Semigroup::Poisson, all).unwrap();
        let fb = littlewood_paley(&ops, &scales, &b, Semigroup::Poisson, all).unwrap();
        let fab = littlewood_paley(&ops, &scales, &ab, Semigroup::Poisson, all).unwrap();
        for (x, y, z) in [(fa.g, fb.g, fab.g), (fa.s, fb.s, fab.s), (fa.su, fb.su, fab.su)] {
            let (x, y, z) = (x.unwrap(), y.unwrap(), z.unwrap());
            Zip::from(&x.values).and(&y.values).and(&z.values).for_each(|p, q, r| assert!(*r <= p + q + 1e-12));
        }
        let d = DyadicConfig::new(-2, 3, 2, 2).unwrap();
        let (sa, sb, sab) = (
            discrete_square_function(&ops, &d, &a).unwrap(),
            discrete_square_function(&ops, &d, &b).unwrap(),
            discrete_square_function(&ops, &d, &ab).unwrap(),
        );
        Zip::from(&sa.values).and(&sb.values).and(&sab.values).for_each(|p, q, r| assert!(*r <= p + q + 1e-12));
    }

    #[test]
    fn dyadic_difference_cancels() {
        let p = BesselParam::new(1.0).unwrap();
        let g = make_log_grid(&p, (2f64.powi(-6), 2f64.powi(30)), 400).unwrap();
        let ops = Operators::new(p);
        for k in [-2, 0, 3] {
            let m = dyadic_difference_mass(&ops, &g, k, 2).unwrap();
            for (x, v) in g.nodes().iter().zip(&m) {
                if *x > 0.05 && *x < 8.0 {
                    assert!(v.abs() < 1e-7, "k={k} x={x} {v}");
                }
            }
        }
    }

    #[test]
    fn discrete_square_function_resolution_error() {
        let (ops, g) = setup(16);
        let f = SampledFunction2D::from_fn(g.clone(), g.clone(), |_, _| 1.0);
        assert!(matches!(
            discrete_square_function(&ops, &DyadicConfig::new(0, 12, 2, 2).unwrap(), &f),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn dilation_behaviour() {
        let p = BesselParam::new(1.0).unwrap();
        let g = Arc::new(make_octave_grid(&p, -7, 8, 4).unwrap());
        let ops = Operators::new(p);
        let scales = ScaleSet::new(-3, 3, 2, 1.0).unwrap();
        let f = SampledFunction2D::from_fn(g.clone(), g.clone(), |x, y| bump(x, 1.0, 0.5) * bump(y, 1.5, 0.8));
        let fd = SampledFunction2D::from_fn(g.clone(), g.clone(), |x, y| bump(x / 2.0, 1.0, 0.5) * bump(y / 2.0, 1.5, 0.8));
        let all = Want { g: true, s: true, su: true };
        let a = littlewood_paley(&ops, &scales, &f, Semigroup::Poisson, all).unwrap();
        let b = littlewood_paley(&ops, &scales.dilated(1), &fd, Semigroup::Poisson, all).unwrap();
        let n = g.len();
        for (x, y) in [(a.g, b.g), (a.s, b.s), (a.su, b.su)] {
            let (x, y) = (x.unwrap(), y.unwrap());
            for i in 8..n - 8 {
                for j in 8..n - 8 {
                    let (u, v) = (x.values[(i, j)], y.values[(i + 4, j + 4)]);
                    assert!((u - v).abs() <= 1e-4 * x.sup_norm(), "({i},{j}) {u} {v}");
                }
            }
        }
    }

    #[test]
    fn product_g_identity_small() {
        let (ops, g) = setup(96);
        let scales = ScaleSet::new(-7, 7, 2, 1.0).unwrap();
        let f = SampledFunction2D::from_fn(g.clone(), g.clone(), |x, y| bump(x, 1.0, 0.6) * bump(y, 1.2, 0.7));
        let gf = g_function(&ops, &scales, &f, Semigroup::Poisson).unwrap();
        let r = lp_norm(&gf, 2.0).powi(2) / lp_norm(&f, 2.0).powi(2);
        assert!((r * 16.0 - 1.0).abs() < 0.1, "{r}");
    }
}
