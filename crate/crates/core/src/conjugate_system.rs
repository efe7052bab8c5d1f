//! The conjugate quadruple (u, v, w, z) of mixed Poisson and conjugate Poisson
//! extensions, its Cauchy–Riemann residuals, the majorization of F^p by the
//! Poisson extension of its boundary values, and Riesz norm bundles.

use ndarray::{s, Array2, Array4, Zip};
use rayon::prelude::*;

use crate::error::{require, Error, Result};
use crate::operators::{lp_norm, Op, Operators, RowSpec, SampledFunction2D};

/// Evaluation points of a quadruple: times and positions along each axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

impl Lattice {
    /// Times as given, positions at the grid nodes of `f`.
    pub fn on_nodes(f: &SampledFunction2D, t1: Vec<f64>, t2: Vec<f64>) -> Self {
        Self { t1, t2, x1: f.grid1.nodes().to_vec(), x2: f.grid2.nodes().to_vec() }
    }

    /// Uniform three-point stencils about (t₁, t₂, x₁, x₂) with step h.
    pub fn stencil(center: [f64; 4], h: f64) -> Self {
        let axis = |c: f64| vec![c - h, c, c + h];
        Self { t1: axis(center[0]), t2: axis(center[1]), x1: axis(center[2]), x2: axis(center[3]) }
    }

    pub fn dim(&self) -> (usize, usize, usize, usize) {
        (self.t1.len(), self.t2.len(), self.x1.len(), self.x2.len())
    }
}

/// u = P⊗P f, v = Q⊗P f, w = P⊗Q f, z = Q⊗Q f, indexed [t₁, t₂, x₁, x₂].
#[derive(Clone, Debug)]
pub struct ConjugateQuadruple {
    pub lattice: Lattice,
    pub lambda: f64,
    pub u: Array4<f64>,
    pub v: Array4<f64>,
    pub w: Array4<f64>,
    pub z: Array4<f64>,
}

/// F = (u² + v² + w² + z²)^{1/2} on the quadruple lattice.
#[derive(Clone, Debug)]
pub struct FField {
    pub values: Array4<f64>,
}

impl FField {
    pub fn new(q: &ConjugateQuadruple) -> Self {
        let mut values = Array4::zeros(q.u.dim());
        Zip::from(&mut values).and(&q.u).and(&q.v).and(&q.w).and(&q.z).for_each(|f, a, b, c, d| {
            *f = (a * a + b * b + c * c + d * d).sqrt();
        });
        Self { values }
    }

    /// F^p with 0^p = 0.
    pub fn powered(&self, p: f64) -> Array4<f64> {
        self.values.mapv(|v| if v == 0.0 { 0.0 } else { v.powf(p) })
    }
}

fn poisson_pair(ops: &Operators, f: &SampledFunction2D, ts: &[f64], xs: &[f64], axis: usize) -> (Array2<f64>, Array2<f64>) {
    let grid = if axis == 1 { &f.grid1 } else { &f.grid2 };
    let rows: Vec<RowSpec> = ts.iter().flat_map(|&t| xs.iter().map(move |&x| RowSpec { x, t })).collect();
    let [p, _, _, q] = ops.poisson_rows(grid, &rows);
    (p, q)
}

/// Evaluate the quadruple of f on a lattice.
pub fn build_quadruple(ops: &Operators, f: &SampledFunction2D, lattice: &Lattice) -> Result<ConjugateQuadruple> {
    let (a1, a2, n1, n2) = lattice.dim();
    require(a1 > 0 && a2 > 0 && n1 > 0 && n2 > 0, || "lattice must be non-empty".into())?;
    for t in lattice.t1.iter().chain(&lattice.t2) {
        require(t.is_finite() && *t > 0.0, || format!("lattice time {t} must be positive"))?;
    }
    for (xs, g) in [(&lattice.x1, &f.grid1), (&lattice.x2, &f.grid2)] {
        let (_, hi) = g.span();
        if let Some(x) = xs.iter().find(|x| !(**x > 0.0 && **x <= hi)) {
            return Err(Error::InvalidParameter(format!("lattice point {x} outside the grid span (0, {hi}]")));
        }
    }
    let (p1, q1) = poisson_pair(ops, f, &lattice.t1, &lattice.x1, 1);
    let (p2, q2) = poisson_pair(ops, f, &lattice.t2, &lattice.x2, 2);
    let blocks: Vec<[Array2<f64>; 4]> = (0..a1)
        .into_par_iter()
        .flat_map_iter(|a| {
            let r = s![a * n1..(a + 1) * n1, ..];
            let pf = p1.slice(r).dot(&f.values);
            let qf = q1.slice(r).dot(&f.values);
            let (p2, q2) = (&p2, &q2);
            (0..a2).map(move |b| {
                let c = s![b * n2..(b + 1) * n2, ..];
                let (pb, qb) = (p2.slice(c), q2.slice(c));
                [pf.dot(&pb.t()), qf.dot(&pb.t()), pf.dot(&qb.t()), qf.dot(&qb.t())]
            })
        })
        .collect();
    let mut out: [Array4<f64>; 4] = std::array::from_fn(|_| Array4::zeros((a1, a2, n1, n2)));
    for (k, blk) in blocks.into_iter().enumerate() {
        let (a, b) = (k / a2, k % a2);
        for (o, m) in out.iter_mut().zip(blk) {
            o.slice_mut(s![a, b, .., ..]).assign(&m);
        }
    }
    let [u, v, w, z] = out;
    Ok(ConjugateQuadruple { lattice: lattice.clone(), lambda: ops.param().lambda, u, v, w, z })
}

/// Residual labels: pair, equation (x: ∂_x a + ∂_t b, t: ∂_t a − ∂_x b − 2λb/x), variable.
pub const CR_NAMES: [&str; 8] = [
    "uv_x1", "uv_t1", "wz_x1", "wz_t1", "uw_x2", "uw_t2", "vz_x2", "vz_t2",
];
pub const LAPLACE_NAMES: [&str; 2] = ["u_1", "u_2"];

/// Residual fields on the interior of the lattice and their max norms.
#[derive(Clone, Debug)]
pub struct CrResiduals {
    pub fields: Vec<Array4<f64>>,
    pub laplace: Vec<Array4<f64>>,
    pub max: [f64; 8],
    pub laplace_max: [f64; 2],
}

fn uniform_step(v: &[f64], name: &str) -> Result<f64> {
    if v.len() < 3 {
        return Err(Error::InsufficientLattice(format!("{name} needs at least 3 points, has {}", v.len())));
    }
    let h = v[1] - v[0];
    for w in v.windows(2) {
        if h <= 0.0 || ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(Error::InsufficientLattice(format!("{name} is not uniformly spaced")));
        }
    }
    Ok(h)
}

/// Interior block of `f` moved by `off` along axis k.
fn shifted(f: &Array4<f64>, dim: (usize, usize, usize, usize), k: usize, off: isize) -> Array4<f64> {
    let mut o = [1isize; 4];
    o[k] += off;
    f.slice(s![
        o[0]..o[0] + dim.0 as isize,
        o[1]..o[1] + dim.1 as isize,
        o[2]..o[2] + dim.2 as isize,
        o[3]..o[3] + dim.3 as isize
    ])
    .to_owned()
}

/// Central differences of the four Cauchy–Riemann systems and both
/// Bessel–Laplace equations for u.
pub fn cr_residuals(q: &ConjugateQuadruple) -> Result<CrResiduals> {
    let l = &q.lattice;
    let h = [
        uniform_step(&l.t1, "t1")?,
        uniform_step(&l.t2, "t2")?,
        uniform_step(&l.x1, "x1")?,
        uniform_step(&l.x2, "x2")?,
    ];
    let (a1, a2, n1, n2) = l.dim();
    let dim = (a1 - 2, a2 - 2, n1 - 2, n2 - 2);
    let sh = |f: &Array4<f64>, k: usize, off: isize| shifted(f, dim, k, off);
    // Central first and second differences along lattice axis k on the interior.
    let d = |f: &Array4<f64>, k: usize| (sh(f, k, 1) - sh(f, k, -1)) / (2.0 * h[k]);
    let d2 = |f: &Array4<f64>, k: usize| (sh(f, k, 1) - 2.0 * sh(f, k, 0) + sh(f, k, -1)) / (h[k] * h[k]);
    let inv_x = |axis: usize| -> Array4<f64> {
        let xs = if axis == 2 { &l.x1[1..n1 - 1] } else { &l.x2[1..n2 - 1] };
        Array4::from_shape_fn(dim, |(_, _, i, j)| 2.0 * q.lambda / xs[if axis == 2 { i } else { j }])
    };
    let (ix1, ix2) = (inv_x(2), inv_x(3));
    // (a, b) pairs per variable: lattice axes (t, x) and the 2λ/x factor.
    let systems = [
        (&q.u, &q.v, 0, 2, &ix1),
        (&q.w, &q.z, 0, 2, &ix1),
        (&q.u, &q.w, 1, 3, &ix2),
        (&q.v, &q.z, 1, 3, &ix2),
    ];
    let mut fields = Vec::with_capacity(8);
    for (a, b, kt, kx, ix) in systems {
        let b_in = sh(b, 0, 0);
        fields.push(d(a, kx) + d(b, kt));
        fields.push(d(a, kt) - d(b, kx) - ix * &b_in);
    }
    let laplace = vec![
        d2(&q.u, 0) + d2(&q.u, 2) + &ix1 * &d(&q.u, 2),
        d2(&q.u, 1) + d2(&q.u, 3) + &ix2 * &d(&q.u, 3),
    ];
    let norm = |f: &Array4<f64>| f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut max = [0.0; 8];
    for (m, f) in max.iter_mut().zip(&fields) {
        *m = norm(f);
    }
    let laplace_max = [norm(&laplace[0]), norm(&laplace[1])];
    Ok(CrResiduals { fields, laplace, max, laplace_max })
}

/// Max residuals at successively halved stencil steps and the observed orders.
#[derive(Clone, Debug)]
pub struct CrConvergence {
    pub steps: Vec<f64>,
    /// [level][residual]
    pub cr: Vec<[f64; 8]>,
    pub laplace: Vec<[f64; 2]>,
    /// Worst (smallest) order log₂(r_h / r_{h/2}) over consecutive levels.
    pub cr_order: [f64; 8],
    pub laplace_order: [f64; 2],
}

/// Residuals at the probe centres over steps h₀, h₀/2, …, h₀/2^{levels−1}.
pub fn cr_convergence(ops: &Operators, f: &SampledFunction2D, probes: &[[f64; 4]], h0: f64, levels: usize) -> Result<CrConvergence> {
    require(levels >= 2, || "need at least two refinement levels".into())?;
    require(!probes.is_empty(), || "need at least one probe".into())?;
    let mut steps = Vec::new();
    let mut cr = Vec::new();
    let mut laplace = Vec::new();
    for k in 0..levels {
        let h = h0 / 2f64.powi(k as i32);
        let mut m = [0.0f64; 8];
        let mut lm = [0.0f64; 2];
        for c in probes {
            let q = build_quadruple(ops, f, &Lattice::stencil(*c, h))?;
            let r = cr_residuals(&q)?;
            for i in 0..8 {
                m[i] = m[i].max(r.max[i]);
            }
            for i in 0..2 {
                lm[i] = lm[i].max(r.laplace_max[i]);
            }
        }
        steps.push(h);
        cr.push(m);
        laplace.push(lm);
    }
    let order = |a: f64, b: f64| if a == 0.0 && b == 0.0 { f64::INFINITY } else { (a / b).log2() };
    let mut cr_order = [f64::INFINITY; 8];
    let mut laplace_order = [f64::INFINITY; 2];
    for k in 1..levels {
        for i in 0..8 {
            cr_order[i] = cr_order[i].min(order(cr[k - 1][i], cr[k][i]));
        }
        for i in 0..2 {
            laplace_order[i] = laplace_order[i].min(order(laplace[k - 1][i], laplace[k][i]));
        }
    }
    Ok(CrConvergence { steps, cr, laplace, cr_order, laplace_order })
}

/// Outcome of the F^p majorization check.
#[derive(Clone, Debug)]
pub struct MajorizationReport {
    pub exponent: f64,
    pub offsets: (f64, f64),
    /// Smallest C with F^p(ε+t) ≤ C·P⊗P(F^p(ε)) over the checked nodes and times.
    pub constant: f64,
    /// (t₁, t₂, x₁, x₂) where the constant is attained.
    pub worst: [f64; 4],
    pub checked: usize,
}

/// Admissible exponents for the Hardy-space range below 1.
pub fn check_exponent(lambda: f64, p: f64) -> Result<()> {
    let lo = (2.0 * lambda + 1.0) / (2.0 * lambda + 2.0);
    require(p > lo && p < 1.0, || format!("exponent {p} outside ({lo}, 1)"))
}

/// Smallest C such that F^p(ε₁+t₁, ε₂+t₂, x) ≤ C·P_{t₁}P_{t₂}(F^p(ε₁, ε₂, ·))(x)
/// at grid nodes inside `window` (per axis) and every (t₁, t₂) in `times`.
pub fn check_poisson_majorization(
    ops: &Operators,
    f: &SampledFunction2D,
    p: f64,
    offsets: (f64, f64),
    times: &[(f64, f64)],
    window: (f64, f64),
) -> Result<MajorizationReport> {
    check_exponent(ops.param().lambda, p)?;
    let (e1, e2) = offsets;
    let base = build_quadruple(ops, f, &Lattice::on_nodes(f, vec![e1], vec![e2]))?;
    let gp = FField::new(&base).powered(p);
    let g = f.with_values(gp.slice(s![0, 0, .., ..]).to_owned());
    let sel = |xs: &[f64]| -> Vec<usize> {
        (0..xs.len()).filter(|&i| xs[i] >= window.0 && xs[i] <= window.1).collect()
    };
    let (s1, s2) = (sel(f.grid1.nodes()), sel(f.grid2.nodes()));
    let mut constant = 0.0f64;
    let mut worst = [0.0; 4];
    let mut checked = 0;
    for &(t1, t2) in times {
        let rhs = ops.tensor_apply(&Op::Poisson(t1), &Op::Poisson(t2), &g)?;
        let q = build_quadruple(ops, f, &Lattice::on_nodes(f, vec![e1 + t1], vec![e2 + t2]))?;
        let lhs = FField::new(&q).powered(p);
        for &i in &s1 {
            for &j in &s2 {
                let (l, r) = (lhs[(0, 0, i, j)], rhs.values[(i, j)]);
                checked += 1;
                if l == 0.0 {
                    continue;
                }
                let c = if r > 0.0 { l / r } else { f64::INFINITY };
                if c > constant {
                    constant = c;
                    worst = [t1, t2, f.grid1.nodes()[i], f.grid2.nodes()[j]];
                }
            }
        }
    }
    Ok(MajorizationReport { exponent: p, offsets, constant, worst, checked })
}

/// (‖g‖_p, ‖R₁g‖_p, ‖R₂g‖_p, ‖R₁R₂g‖_p) with g = P_{t₁}P_{t₂}f or g = f.
#[derive(Clone, Debug)]
pub struct RieszBundle {
    pub norms: [f64; 4],
    /// Largest extrapolation error relative to the input sup norm.
    pub worst_error: f64,
    /// Points flagged by the extrapolation across all three transforms.
    pub flagged: usize,
}

impl RieszBundle {
    pub fn sum(&self) -> f64 {
        self.norms.iter().sum()
    }
}

pub fn riesz_norm_bundle(ops: &Operators, f: &SampledFunction2D, p: f64, smoothing: Option<(f64, f64)>) -> Result<RieszBundle> {
    require(p > 0.0, || format!("exponent must be positive, got {p}"))?;
    let g = match smoothing {
        Some((t1, t2)) => {
            require(t1 > 0.0 && t2 > 0.0, || "smoothing times must be positive".into())?;
            ops.tensor_apply(&Op::Poisson(t1), &Op::Poisson(t2), f)?
        }
        None => {
            require(p >= 1.0, || "exponents below 1 need Poisson pre-smoothing".into())?;
            f.clone()
        }
    };
    let (r1, e1, n1) = ops.riesz_axis(&g, 1)?;
    let (r2, e2, n2) = ops.riesz_axis(&g, 2)?;
    let (r12, e12, n12) = ops.riesz_axis(&r2, 1)?;
    let norms = [lp_norm(&g, p), lp_norm(&r1, p), lp_norm(&r2, p), lp_norm(&r12, p)];
    if let Some(v) = norms.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { node: f64::NAN, value: *v });
    }
    Ok(RieszBundle { norms, worst_error: e1.max(e2).max(e12), flagged: n1 + n2 + n12 })
}

/// sup over the lattice times of ∬F dμ, using the grid weights (lattice on nodes).
pub fn f_l1_sup(q: &ConjugateQuadruple, f: &SampledFunction2D) -> f64 {
    let w = f.weights();
    let field = FField::new(q);
    let (a1, a2, _, _) = q.lattice.dim();
    let mut best = 0.0f64;
    for a in 0..a1 {
        for b in 0..a2 {
            let s: f64 = Zip::from(field.values.slice(s![a, b, .., ..])).and(&w).fold(0.0, |acc, v, w| acc + v * w);
            best = best.max(s);
        }
    }
    best
}
