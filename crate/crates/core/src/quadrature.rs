//! Gauss rules, the angular integral against (sin θ)^{2λ−1}, radial sums,
//! adaptive Gauss–Kronrod, and Richardson extrapolation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{require, Error, Result};
use crate::geometry::{BesselParam, RadialGrid};
use crate::special::ln_gamma;

/// Nodes and weights of an interpolatory rule on [−1, 1] (or [0, ∞) for Laguerre).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn sum<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

type RuleKey = (u8, usize, u64, u64);

fn rule_cache() -> &'static Mutex<HashMap<RuleKey, Arc<GaussRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Arc<GaussRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(key: RuleKey, build: impl FnOnce() -> GaussRule) -> Arc<GaussRule> {
    if let Some(r) = rule_cache().lock().unwrap().get(&key) {
        return r.clone();
    }
    let rule = Arc::new(build());
    rule_cache().lock().unwrap().entry(key).or_insert(rule).clone()
}

/// Eigen-decomposition of the Jacobi matrix (Golub–Welsch).
fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> GaussRule {
    let n = diag.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = off[i];
            m[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    GaussRule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// Jacobi polynomial P_n^{(a,b)}(x) and its derivative.
fn jacobi_eval(n: usize, a: f64, b: f64, x: f64) -> (f64, f64) {
    fn p(n: usize, a: f64, b: f64, x: f64) -> f64 {
        if n == 0 {
            return 1.0;
        }
        let mut p0 = 1.0;
        let mut p1 = (a + 1.0) + (a + b + 2.0) * (x - 1.0) / 2.0;
        for k in 1..n {
            let k = k as f64;
            let c = 2.0 * k + a + b;
            let a1 = 2.0 * (k + 1.0) * (k + a + b + 1.0) * c;
            let a2 = (c + 1.0) * (a * a - b * b);
            let a3 = c * (c + 1.0) * (c + 2.0);
            let a4 = 2.0 * (k + a) * (k + b) * (c + 2.0);
            let p2 = ((a2 + a3 * x) * p1 - a4 * p0) / a1;
            p0 = p1;
            p1 = p2;
        }
        p1
    }
    let v = p(n, a, b, x);
    let d = if n == 0 { 0.0 } else { 0.5 * (n as f64 + a + b + 1.0) * p(n - 1, a + 1.0, b + 1.0, x) };
    (v, d)
}

fn build_gauss_jacobi(n: usize, a: f64, b: f64) -> GaussRule {
    let ab = a + b;
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for (k, d) in diag.iter_mut().enumerate() {
        *d = if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            let kk = k as f64;
            (b * b - a * a) / ((2.0 * kk + ab) * (2.0 * kk + ab + 2.0))
        };
    }
    for (k, o) in off.iter_mut().enumerate() {
        let kk = (k + 1) as f64;
        let c = 2.0 * kk + ab;
        let v = if k == 0 {
            4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
        } else {
            4.0 * kk * (kk + a) * (kk + b) * (kk + ab) / (c * c * (c + 1.0) * (c - 1.0))
        };
        *o = v.sqrt();
    }
    let mu0 = ((ab + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
        - ln_gamma(ab + 2.0))
    .exp();
    let mut rule = golub_welsch(&diag, &off, mu0);
    // Newton polish, then weights from the closed form.
    let nf = n as f64;
    let log_c = ln_gamma(nf + a + 1.0) + ln_gamma(nf + b + 1.0)
        - ln_gamma(nf + ab + 1.0)
        - ln_gamma(nf + 1.0)
        + (ab + 1.0) * std::f64::consts::LN_2;
    for i in 0..n {
        let mut x = rule.nodes[i];
        for _ in 0..3 {
            let (v, d) = jacobi_eval(n, a, b, x);
            let dx = v / d;
            if !dx.is_finite() {
                break;
            }
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = jacobi_eval(n, a, b, x);
        let w = (log_c).exp() / ((1.0 - x * x) * d * d);
        if w.is_finite() && w > 0.0 && (x - rule.nodes[i]).abs() < 1e-8 {
            rule.nodes[i] = x;
            rule.weights[i] = w;
        }
    }
    rule
}

/// Gauss–Jacobi rule for ∫_{−1}^{1} f(x)(1−x)^a(1+x)^b dx, a, b > −1.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Arc<GaussRule> {
    assert!(n >= 1 && a > -1.0 && b > -1.0, "invalid Gauss–Jacobi request");
    cached((0, n, a.to_bits(), b.to_bits()), || build_gauss_jacobi(n, a, b))
}

pub fn gauss_legendre(n: usize) -> Arc<GaussRule> {
    gauss_jacobi(n, 0.0, 0.0)
}

/// Generalized Gauss–Laguerre rule for ∫₀^∞ f(u) u^a e^{−u} du.
pub fn gauss_laguerre(n: usize, a: f64) -> Arc<GaussRule> {
    assert!(n >= 1 && a > -1.0, "invalid Gauss–Laguerre request");
    cached((1, n, a.to_bits(), 0), || {
        let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + a + 1.0).collect();
        let off: Vec<f64> = (1..n).map(|k| (k as f64 * (k as f64 + a)).sqrt()).collect();
        golub_welsch(&diag, &off, ln_gamma(a + 1.0).exp())
    })
}

/// Gauss–Jacobi rule in u = cos θ with weight (1−u²)^{λ−1}.
#[derive(Clone, Debug)]
pub struct AngularRule {
    pub rule: Arc<GaussRule>,
    pub lambda: f64,
}

impl AngularRule {
    pub const DEFAULT_ORDER: usize = 64;

    pub fn new(p: &BesselParam, order: usize) -> Self {
        Self { rule: gauss_jacobi(order, p.lambda - 1.0, p.lambda - 1.0), lambda: p.lambda }
    }

    pub fn order(&self) -> usize {
        self.rule.order()
    }
}

/// ∫₀^π g(θ)(sin θ)^{2λ−1} dθ with the given rule.
pub fn angular_integral<G: FnMut(f64) -> f64>(rule: &AngularRule, mut g: G) -> Result<f64> {
    let mut acc = 0.0;
    for (u, w) in rule.rule.nodes.iter().zip(&rule.rule.weights) {
        let th = u.acos();
        let v = g(th);
        if !v.is_finite() {
            return Err(Error::NonFinite { node: th, value: v });
        }
        acc += w * v;
    }
    Ok(acc)
}

/// Σ f_i w_i over the grid's dm weights.
pub fn radial_integral(grid: &RadialGrid, f: &[f64]) -> Result<f64> {
    if f.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), got: f.len() });
    }
    Ok(f.iter().zip(grid.weights()).map(|(a, b)| a * b).sum())
}

/// Composite angular integrator in v = 1 − cos θ ∈ [0, 2], where
/// (sin θ)^{2λ−1} dθ = (v(2−v))^{λ−1} dv. Panels are graded geometrically
/// away from v = 0 down to a caller-supplied peak width.
#[derive(Clone, Debug)]
pub struct GradedAngular {
    lambda: f64,
    unit_weight: bool,
    left: Arc<GaussRule>,
    right: Arc<GaussRule>,
    mid: Arc<GaussRule>,
    mid_wide: Arc<GaussRule>,
}

impl GradedAngular {
    pub const PANEL_ORDER: usize = 10;

    pub fn new(p: &BesselParam) -> Self {
        let l = p.lambda;
        let n = Self::PANEL_ORDER;
        Self {
            lambda: l,
            unit_weight: l == 1.0,
            // v^{λ−1} at the left end ↔ (1+ξ)^{λ−1}; (2−v)^{λ−1} at the right end ↔ (1−ξ)^{λ−1}
            left: gauss_jacobi(n, 0.0, l - 1.0),
            right: gauss_jacobi(n, l - 1.0, 0.0),
            mid: gauss_legendre(n),
            // panels wider than a factor 2 see the v = 0 branch point closer in
            mid_wide: gauss_legendre(n + 4),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    fn weight(&self, v: f64) -> f64 {
        if self.unit_weight {
            1.0
        } else {
            (v * (2.0 - v)).powf(self.lambda - 1.0)
        }
    }

    /// ∫₀^{v_max} f(v)(v(2−v))^{λ−1} dv where f varies on the scale `width`
    /// near v = 0; panels grow by `ratio` beyond it. Accumulates into `acc`
    /// through a vector-valued integrand to share one pass across several kernels.
    pub fn integrate_into<const N: usize, F: FnMut(f64) -> [f64; N]>(
        &self,
        width: f64,
        v_max: f64,
        ratio: f64,
        mut f: F,
    ) -> [f64; N] {
        let mut acc = [0.0; N];
        let vmax = v_max.min(2.0);
        if vmax <= 0.0 {
            return acc;
        }
        let mut add = |acc: &mut [f64; N], v: f64, w: f64| {
            let val = f(v);
            for k in 0..N {
                acc[k] += w * val[k];
            }
        };
        let first = width.max(1e-14).min(1.0).min(vmax);
        // left panel [0, first] with weight v^{λ−1}
        {
            let h = 0.5 * first;
            let scale = h.powf(self.lambda);
            for (xi, w) in self.left.nodes.iter().zip(&self.left.weights) {
                let v = h * (1.0 + xi);
                let extra = if self.unit_weight { 1.0 } else { (2.0 - v).powf(self.lambda - 1.0) };
                add(&mut acc, v, scale * w * extra);
            }
        }
        let mid = if ratio > 2.0 { &self.mid_wide } else { &self.mid };
        let mut a = first;
        let upper = vmax.min(1.0);
        while a < upper {
            let b = (a * ratio).min(upper);
            let b = if upper - b < 0.25 * (b - a) { upper } else { b };
            let h = 0.5 * (b - a);
            let c = 0.5 * (a + b);
            for (xi, w) in mid.nodes.iter().zip(&mid.weights) {
                let v = c + h * xi;
                add(&mut acc, v, h * w * self.weight(v));
            }
            a = b;
        }
        if vmax > 1.0 {
            let lo = a.max(1.0);
            if vmax >= 2.0 {
                // right panel [lo, 2] with weight (2−v)^{λ−1}
                let h = 0.5 * (2.0 - lo);
                let scale = h.powf(self.lambda);
                for (xi, w) in self.right.nodes.iter().zip(&self.right.weights) {
                    let v = lo + h * (1.0 + xi);
                    let extra = if self.unit_weight { 1.0 } else { v.powf(self.lambda - 1.0) };
                    add(&mut acc, v, scale * w * extra);
                }
            } else if vmax > lo {
                let h = 0.5 * (vmax - lo);
                let c = 0.5 * (vmax + lo);
                for (xi, w) in self.mid.nodes.iter().zip(&self.mid.weights) {
                    let v = c + h * xi;
                    add(&mut acc, v, h * w * self.weight(v));
                }
            }
        }
        acc
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, width: f64, v_max: f64, ratio: f64, mut f: F) -> f64 {
        self.integrate_into::<1, _>(width, v_max, ratio, |v| [f(v)])[0]
    }
}

/// Adaptive Gauss–Kronrod (7/15) on [a, b] to absolute-or-relative tolerance `tol`.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    const XK: [f64; 8] = [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ];
    const WK: [f64; 8] = [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ];
    const WG: [f64; 4] = [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ];
    let mut gk = |lo: f64, hi: f64| -> (f64, f64) {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        let fc = f(c);
        let mut k = WK[7] * fc;
        let mut g = WG[3] * fc;
        for j in 0..7 {
            let x = h * XK[j];
            let s = f(c - x) + f(c + x);
            k += WK[j] * s;
            if j % 2 == 1 {
                g += WG[j / 2] * s;
            }
        }
        (k * h, ((k - g) * h).abs())
    };
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    let (whole, _) = gk(a, b);
    let scale = whole.abs().max(1e-300);
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, err) = gk(lo, hi);
        let local_tol = tol * scale.max(v.abs()) * ((hi - lo) / (b - a)).sqrt().max(1e-3);
        if err <= local_tol.max(tol * 1e-3 * (hi - lo) / (b - a)) || depth > 50 {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

/// ∫_a^∞ f via x = a + s/(1−s).
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(mut f: F, a: f64, tol: f64) -> f64 {
    integrate_adaptive(
        |s| {
            if s >= 1.0 {
                return 0.0;
            }
            let d = 1.0 - s;
            f(a + s / d) / (d * d)
        },
        0.0,
        1.0,
        tol,
    )
}

/// Values v(t₀ r^j), j = 0..depth, of a quantity whose limit at t → 0 is wanted.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtrapolationLadder {
    pub t0: f64,
    pub ratio: f64,
    pub values: Vec<f64>,
}

impl ExtrapolationLadder {
    pub const DEFAULT_DEPTH: usize = 4;
    pub const DEFAULT_RATIO: f64 = 0.5;

    pub fn new(t0: f64, ratio: f64, values: Vec<f64>) -> Result<Self> {
        require(values.len() >= 2, || "ladder depth must be at least 2".into())?;
        require(ratio > 0.0 && ratio < 1.0 && t0 > 0.0, || "ladder ratio must be in (0,1)".into())?;
        Ok(Self { t0, ratio, values })
    }

    pub fn scales(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |j| self.t0 * self.ratio.powi(j as i32))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrapolated {
    pub limit: f64,
    pub error: f64,
    /// False when successive diagonal differences grow.
    pub converged: bool,
}

/// Richardson extrapolation with error series t, t², t³, …
pub fn pv_extrapolate(ladder: &ExtrapolationLadder) -> Extrapolated {
    let n = ladder.values.len();
    let mut table = ladder.values.clone();
    let mut diag = vec![ladder.values[0]];
    let inv = 1.0 / ladder.ratio;
    // table[j] holds R_{j,k} after pass k
    for k in 1..n {
        let f = inv.powi(k as i32);
        for j in (k..n).rev() {
            table[j] = (f * table[j] - table[j - 1]) / (f - 1.0);
        }
        diag.push(table[k]);
    }
    let diffs: Vec<f64> = diag.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let error = *diffs.last().unwrap();
    let converged = diffs.len() < 2 || error <= diffs[diffs.len() - 2] || error <= 1e-14 * diag[n - 1].abs();
    Extrapolated { limit: diag[n - 1], error, converged }
}

/// Richardson coefficients c_j with limit = Σ c_j v_j for a ladder of given depth and ratio.
pub fn richardson_weights(depth: usize, ratio: f64) -> Vec<f64> {
    (0..depth)
        .map(|j| {
            let mut e = vec![0.0; depth];
            e[j] = 1.0;
            pv_extrapolate(&ExtrapolationLadder { t0: 1.0, ratio, values: e }).limit
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::beta;

    #[test]
    fn jacobi_moments_match_beta() {
        for &l in &[0.3, 0.5, 1.0, 1.7, 3.0] {
            let p = BesselParam::new(l).unwrap();
            let r = AngularRule::new(&p, 16);
            for k in 0..32 {
                let got = r.rule.sum(|u| u.powi(k));
                let exact = if k % 2 == 1 { 0.0 } else { beta((k as f64 + 1.0) / 2.0, l) };
                assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1e-3), "λ={l} k={k} {got} {exact}");
            }
        }
    }

    #[test]
    fn angular_examples() {
        let p = BesselParam::new(1.0).unwrap();
        let r = AngularRule::new(&p, AngularRule::DEFAULT_ORDER);
        assert!((angular_integral(&r, |_| 1.0).unwrap() - 2.0).abs() < 1e-13);
        for &l in &[0.25, 0.5, 2.0, 4.5] {
            let p = BesselParam::new(l).unwrap();
            let r = AngularRule::new(&p, 64);
            let v = angular_integral(&r, |_| 1.0).unwrap();
            assert!((v * p.c_lambda - 1.0).abs() < 1e-12);
            assert!(angular_integral(&r, f64::cos).unwrap().abs() < 1e-13);
        }
        assert!(matches!(angular_integral(&r, |_| f64::NAN), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn legendre_and_laguerre() {
        let g = gauss_legendre(10);
        assert!((g.sum(|x| x.powi(18)) - 2.0 / 19.0).abs() < 1e-14);
        let lg = gauss_laguerre(40, -0.5);
        let s: f64 = lg.weights.iter().sum();
        assert!((s / std::f64::consts::PI.sqrt() - 1.0).abs() < 1e-12);
        assert!((lg.sum(|u| u * u) - crate::special::gamma(2.5)).abs() < 1e-11);
    }

    #[test]
    fn graded_angular_matches_beta() {
        for &l in &[0.3, 1.0, 2.2] {
            let p = BesselParam::new(l).unwrap();
            let g = GradedAngular::new(&p);
            for &w in &[1e-9, 1e-3, 0.3, 5.0] {
                let full = g.integrate(w, 2.0, 4.0, |_| 1.0);
                assert!((full * p.c_lambda - 1.0).abs() < 1e-12, "λ={l} w={w}");
            }
            // ∫₀^{1} (v(2−v))^{λ−1} dv is half of the total
            let half = g.integrate(1e-4, 1.0, 4.0, |_| 1.0);
            assert!((2.0 * half * p.c_lambda - 1.0).abs() < 1e-12);
            // sharply peaked integrand 1/(w + v)²
            let w = 1e-5;
            let got = g.integrate(w, 2.0, 4.0, |v| 1.0 / (w + v).powi(2));
            let oracle = integrate_adaptive(|v| (v * (2.0 - v)).powf(l - 1.0) / (w + v).powi(2), 0.0, 2.0, 1e-12);
            if l >= 1.0 {
                assert!((got / oracle - 1.0).abs() < 1e-9, "λ={l} {got} {oracle}");
            }
        }
    }

    #[test]
    fn adaptive_and_infinite() {
        let v = integrate_adaptive(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
        let v = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-12);
        assert!((v - 1.0).abs() < 1e-11);
    }

    #[test]
    fn richardson_examples() {
        let lin = ExtrapolationLadder::new(1.0, 0.5, vec![4.0, 3.5, 3.25]).unwrap();
        let r = pv_extrapolate(&lin);
        assert!((r.limit - 3.0).abs() < 1e-12 && r.error <= 1e-12);
        let quad = ExtrapolationLadder::new(1.0, 0.5, vec![4.0, 3.25, 3.0625]).unwrap();
        let r = pv_extrapolate(&quad);
        assert!((r.limit - 3.0).abs() < 1e-3);
        let c = ExtrapolationLadder::new(1.0, 0.5, vec![2.0; 4]).unwrap();
        let r = pv_extrapolate(&c);
        assert_eq!((r.limit, r.error), (2.0, 0.0));
        assert!(ExtrapolationLadder::new(1.0, 0.5, vec![1.0]).is_err());
        let w = richardson_weights(4, 0.5);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }
}
