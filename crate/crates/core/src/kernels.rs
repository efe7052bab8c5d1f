//! Pointwise kernels: Poisson, conjugate Poisson, heat, Hankel translation,
//! the triangle density D, the conjugate kernel ψ, and checkers for the
//! size/smoothness/cancellation conditions.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{require, Error, Result};
use crate::geometry::{measure_of_interval, BesselParam, Interval};
use crate::quadrature::{gauss_jacobi, gauss_legendre, integrate_adaptive, integrate_to_infinity, GradedAngular};
use crate::special::{beta, gamma};

/// Panel growth for algebraically decaying angular integrands.
const RATIO_ALGEBRAIC: f64 = 4.0;
/// Panel growth for Gaussian angular integrands.
const RATIO_GAUSSIAN: f64 = 2.0;
/// e^{-HEAT_CUT} is treated as zero.
const HEAT_CUT: f64 = 40.0;
/// Gauss–Legendre order per w-piece in ψ.
const PSI_W_ORDER: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Poisson,
    ConjPoisson,
    Heat,
    Psi,
    Triangle,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "poisson" => Self::Poisson,
            "conj_poisson" | "conj-poisson" | "conjugate_poisson" => Self::ConjPoisson,
            "heat" => Self::Heat,
            "psi" => Self::Psi,
            "triangle" => Self::Triangle,
            other => return Err(Error::InvalidParameter(format!("unknown kernel kind '{other}'"))),
        })
    }
}

/// One kernel value with its arguments. For `Triangle`, `t` carries the third side z.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelEval {
    pub kind: KernelKind,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// A radial profile φ on (0, ∞) with unit dm-mass.
pub trait Profile: Sync + Send {
    fn value(&self, r: f64) -> f64;
    fn derivative(&self, r: f64) -> f64;
    /// Radius beyond which φ vanishes (exactly or below e^{-40} relative).
    fn reach(&self) -> f64;
    /// True when φ vanishes identically beyond `reach`.
    fn compact(&self) -> bool;
}

/// φ(r) = C (r(1−r))⁴ on (0, 1), C fixed by ∫φ dm = 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpProfile {
    pub lambda: f64,
    pub norm: f64,
}

impl BumpProfile {
    /// Profile vanishes to this order at both ends of its support.
    pub const SMOOTHNESS: u32 = 4;

    pub fn new(p: &BesselParam) -> Self {
        Self { lambda: p.lambda, norm: 1.0 / beta(2.0 * p.lambda + 5.0, 5.0) }
    }

    /// Samples (r, φ(r)) on a uniform mesh of (0, 1).
    pub fn samples(&self, count: usize) -> Vec<(f64, f64)> {
        (0..count)
            .map(|i| {
                let r = (i as f64 + 0.5) / count as f64;
                (r, self.value(r))
            })
            .collect()
    }
}

impl Profile for BumpProfile {
    fn value(&self, r: f64) -> f64 {
        if r <= 0.0 || r >= 1.0 {
            0.0
        } else {
            self.norm * (r * (1.0 - r)).powi(4)
        }
    }

    fn derivative(&self, r: f64) -> f64 {
        if r <= 0.0 || r >= 1.0 {
            0.0
        } else {
            self.norm * 4.0 * (r * (1.0 - r)).powi(3) * (1.0 - 2.0 * r)
        }
    }

    fn reach(&self) -> f64 {
        1.0
    }

    fn compact(&self) -> bool {
        true
    }
}

/// W(r) = 2^{(1−2λ)/2} e^{−r²/2} / Γ(λ+½); the heat semigroup is e^{−sΔ}f = W_{√(2s)} ♯ f.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianProfile {
    pub lambda: f64,
    pub norm: f64,
}

impl Profile for GaussianProfile {
    fn value(&self, r: f64) -> f64 {
        self.norm * (-0.5 * r * r).exp()
    }

    fn derivative(&self, r: f64) -> f64 {
        -r * self.value(r)
    }

    fn reach(&self) -> f64 {
        (2.0 * HEAT_CUT).sqrt() + 0.5
    }

    fn compact(&self) -> bool {
        false
    }
}

pub fn heat_profile(p: &BesselParam) -> GaussianProfile {
    GaussianProfile {
        lambda: p.lambda,
        norm: 2f64.powf(0.5 - p.lambda) / gamma(p.lambda + 0.5),
    }
}

/// P, ∂_tP, ∂_xP and Q at one (t, x, y).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonValues {
    pub p: f64,
    pub dt: f64,
    pub dx: f64,
    pub q: f64,
}

/// Heat kernel h_s and s∂_s h_s at heat time s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatValues {
    pub h: f64,
    pub s_ds: f64,
}

/// Evaluator for every kernel at a fixed λ.
#[derive(Clone, Debug)]
pub struct Kernels {
    pub param: BesselParam,
    graded: GradedAngular,
    int_power: Option<i32>,
    heat_norm: f64,
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    require(v.is_finite() && v > 0.0, || format!("{name} must be positive, got {v}"))
}

impl Kernels {
    pub fn new(param: BesselParam) -> Self {
        let l1 = param.lambda + 1.0;
        let int_power = if l1.fract() == 0.0 && l1 < 20.0 { Some(l1 as i32) } else { None };
        let w = heat_profile(&param);
        Self {
            param,
            graded: GradedAngular::new(&param),
            int_power,
            heat_norm: param.c_lambda * w.norm,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.param.lambda
    }

    pub fn graded(&self) -> &GradedAngular {
        &self.graded
    }

    #[inline]
    fn pow_neg_l1(&self, a: f64) -> f64 {
        match self.int_power {
            Some(k) => 1.0 / a.powi(k),
            None => a.powf(-(self.param.lambda + 1.0)),
        }
    }

    /// All Poisson-family values in one angular pass; t > 0.
    pub fn poisson_family(&self, t: f64, x: f64, y: f64) -> PoissonValues {
        let l = self.param.lambda;
        let a0 = (x - y) * (x - y) + t * t;
        let b = 2.0 * x * y;
        let width = if b > 0.0 { a0 / b } else { f64::INFINITY };
        let d = x - y;
        let j = self.graded.integrate_into::<4, _>(width, 2.0, RATIO_ALGEBRAIC, |v| {
            let a = a0 + b * v;
            let inv = 1.0 / a;
            let pw = self.pow_neg_l1(a);
            let c = d + y * v;
            [pw, pw * inv, c * pw, c * pw * inv]
        });
        let k = 2.0 * l / PI;
        PoissonValues {
            p: k * t * j[0],
            dt: k * (j[0] - 2.0 * (l + 1.0) * t * t * j[1]),
            dx: -k * t * 2.0 * (l + 1.0) * j[3],
            q: -k * j[2],
        }
    }

    pub fn poisson_kernel(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        check_pos("t", t)?;
        require(x >= 0.0 && y >= 0.0, || "x, y must be >= 0".into())?;
        Ok(self.poisson_family(t, x, y).p)
    }

    /// Q_t(x, y); t = 0 is allowed off the diagonal.
    pub fn conjugate_poisson_kernel(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        require(t >= 0.0 && x >= 0.0 && y >= 0.0, || "t, x, y must be >= 0".into())?;
        if t == 0.0 && x == y {
            return Err(Error::InvalidParameter("Q_0(x, x) is not integrable".into()));
        }
        Ok(self.poisson_family(t, x, y).q)
    }

    /// Heat kernel of e^{−sΔ} at heat time s > 0.
    pub fn heat_family(&self, s: f64, x: f64, y: f64) -> HeatValues {
        let l = self.param.lambda;
        let d2 = (x - y) * (x - y);
        let q = 0.25 / s;
        if d2 * q > 745.0 {
            return HeatValues { h: 0.0, s_ds: 0.0 };
        }
        let b = 2.0 * x * y;
        let width = if b > 0.0 { 2.0 * s / (x * y) } else { f64::INFINITY };
        let vmax = if b > 0.0 { (HEAT_CUT * width).min(2.0) } else { 2.0 };
        let j = self.graded.integrate_into::<2, _>(width, vmax, RATIO_GAUSSIAN, |v| {
            let a = (d2 + b * v) * q;
            let e = (-a).exp();
            [e, e * (a - (l + 0.5))]
        });
        let k = self.heat_norm * (2.0 * s).powf(-(l + 0.5));
        HeatValues { h: k * j[0], s_ds: k * j[1] }
    }

    pub fn heat_kernel(&self, s: f64, x: f64, y: f64) -> Result<f64> {
        check_pos("s", s)?;
        Ok(self.heat_family(s, x, y).h)
    }

    /// τ_x φ_t(y) = c_λ ∫₀^π φ_t(√(x²+y²−2xy cos θ)) (sin θ)^{2λ−1} dθ.
    pub fn hankel_translation(&self, phi: &dyn Profile, t: f64, x: f64, y: f64) -> Result<f64> {
        check_pos("t", t)?;
        let l = self.param.lambda;
        let d2 = (x - y) * (x - y);
        let b = 2.0 * x * y;
        let reach = phi.reach() * t;
        if d2 >= reach * reach {
            return Ok(0.0);
        }
        let scale = t.powf(-(2.0 * l + 1.0));
        let vmax = if b > 0.0 { ((reach * reach - d2) / b).min(2.0) } else { 2.0 };
        let (width, ratio) = if phi.compact() {
            (if b > 0.0 { (d2 / b).max(1e-8 * vmax) } else { f64::INFINITY }, RATIO_ALGEBRAIC)
        } else {
            (if b > 0.0 { t * t / b } else { f64::INFINITY }, RATIO_GAUSSIAN)
        };
        let j = self.graded.integrate(width, vmax, ratio, |v| phi.value((d2 + b * v).sqrt() / t));
        Ok(self.param.c_lambda * scale * j)
    }

    /// D(x, y, z): the Hankel-translation density on triangles with sides x, y, z.
    pub fn triangle_density(&self, x: f64, y: f64, z: f64) -> f64 {
        let area = triangle_area(x, y, z);
        if area <= 0.0 {
            return 0.0;
        }
        let l = self.param.lambda;
        self.param.c_lambda
            * 2f64.powf(2.0 * l - 2.0)
            * (x * y * z).powf(1.0 - 2.0 * l)
            * area.powf(2.0 * l - 2.0)
    }

    /// Φ(r) = (2λ+1)φ(r) + rφ′(r).
    fn psi_density(&self, phi: &BumpProfile, r: f64) -> f64 {
        (2.0 * self.param.lambda + 1.0) * phi.value(r) + r * phi.derivative(r)
    }

    /// Outer w-pieces of the ψ integral: [max(0,y−t), min(x,y+t)] split at y and t−y.
    fn psi_pieces(t: f64, x: f64, y: f64) -> Vec<(f64, f64)> {
        let lo = (y - t).max(0.0);
        let hi = x.min(y + t);
        if hi <= lo {
            return Vec::new();
        }
        let mut cuts = vec![lo, hi];
        for c in [y, t - y] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// ψ(t, x, y) from its defining angular form.
    pub fn psi_kernel(&self, phi: &BumpProfile, t: f64, x: f64, y: f64) -> Result<f64> {
        check_pos("t", t)?;
        check_pos("x", x)?;
        check_pos("y", y)?;
        let l = self.param.lambda;
        let gl = gauss_legendre(PSI_W_ORDER);
        let mut acc = 0.0;
        for (a, b) in Self::psi_pieces(t, x, y) {
            let h = 0.5 * (b - a);
            let c = 0.5 * (b + a);
            for (xi, w) in gl.nodes.iter().zip(&gl.weights) {
                let wv = c + h * xi;
                let d2 = (wv - y) * (wv - y);
                let bb = 2.0 * wv * y;
                let vmax = ((t * t - d2) / bb).min(2.0);
                if vmax <= 0.0 {
                    continue;
                }
                let width = (d2 / bb).max(1e-8 * vmax);
                let inner = self.graded.integrate(width, vmax, RATIO_ALGEBRAIC, |v| {
                    self.psi_density(phi, (d2 + bb * v).sqrt() / t)
                });
                acc += h * w * wv.powf(2.0 * l) * inner;
            }
        }
        let v = -self.param.c_lambda * t.powf(-2.0 * l - 2.0) * x.powf(-2.0 * l) * acc;
        if !v.is_finite() {
            return Err(Error::NonFinite { node: x, value: v });
        }
        Ok(v)
    }

    /// ψ(t, x, y) through the triangle density D(w, y, z), integrating in z.
    pub fn psi_kernel_triangle(&self, phi: &BumpProfile, t: f64, x: f64, y: f64) -> Result<f64> {
        check_pos("t", t)?;
        check_pos("x", x)?;
        check_pos("y", y)?;
        let l = self.param.lambda;
        let gl = gauss_legendre(PSI_W_ORDER);
        let both = gauss_jacobi(24, l - 1.0, l - 1.0);
        let left_only = gauss_jacobi(24, 0.0, l - 1.0);
        let mut acc = 0.0;
        for (a, b) in Self::psi_pieces(t, x, y) {
            let h = 0.5 * (b - a);
            let c = 0.5 * (b + a);
            for (xi, w) in gl.nodes.iter().zip(&gl.weights) {
                let wv = c + h * xi;
                let zl = (wv - y).abs();
                let zr_full = wv + y;
                let zr = zr_full.min(t);
                if zr <= zl {
                    continue;
                }
                // D(w,y,z) z^{2λ} = c 2^{2λ−2}(wy)^{1−2λ} z Δ^{2λ−2}, 16Δ² = (z²−zl²)(zr_full²−z²)
                let hz = 0.5 * (zr - zl);
                let cz = 0.5 * (zr + zl);
                let pref = self.param.c_lambda * 2f64.powf(2.0 * l - 2.0) * (wv * y).powf(1.0 - 2.0 * l)
                    * 16f64.powf(1.0 - l);
                let (rule, full) = if zr == zr_full { (&both, true) } else { (&left_only, false) };
                let mut inner = 0.0;
                for (u, wz) in rule.nodes.iter().zip(&rule.weights) {
                    let z = cz + hz * u;
                    // weight supplies (zr−z)^{λ−1}(z−zl)^{λ−1} scaled by hz^{…}
                    let rest = ((z + zl) * (zr_full + z)).powf(l - 1.0)
                        * if full { 1.0 } else { (zr_full - z).powf(l - 1.0) };
                    inner += wz * z * rest * self.psi_density(phi, z / t);
                }
                let jac = if full { hz.powf(2.0 * l - 1.0) } else { hz.powf(l) };
                acc += h * w * wv.powf(2.0 * l) * pref * jac * inner;
            }
        }
        Ok(-t.powf(-2.0 * l - 2.0) * x.powf(-2.0 * l) * acc)
    }

    /// Evaluate any kernel by kind. For `Triangle`, `t` is the third side z.
    pub fn evaluate(&self, kind: KernelKind, t: f64, x: f64, y: f64) -> Result<KernelEval> {
        let value = match kind {
            KernelKind::Poisson => self.poisson_kernel(t, x, y)?,
            KernelKind::ConjPoisson => self.conjugate_poisson_kernel(t, x, y)?,
            KernelKind::Heat => self.heat_kernel(t, x, y)?,
            KernelKind::Psi => self.psi_kernel(&BumpProfile::new(&self.param), t, x, y)?,
            KernelKind::Triangle => self.triangle_density(x, y, t),
        };
        Ok(KernelEval { kind, t, x, y, value })
    }
}

/// Area of the triangle with the given sides (Kahan's formula); 0 if none exists.
pub fn triangle_area(a: f64, b: f64, c: f64) -> f64 {
    let mut s = [a, b, c];
    s.sort_by(|p, q| q.partial_cmp(p).unwrap());
    let [a, b, c] = s;
    if c <= 0.0 || c - (a - b) <= 0.0 {
        return 0.0;
    }
    let prod = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c));
    if prod <= 0.0 {
        0.0
    } else {
        0.25 * prod.sqrt()
    }
}

/// Kernels subject to the size/smoothness/cancellation checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckedKernel {
    /// The Poisson kernel itself (expected to fail cancellation).
    Poisson,
    /// t∂_tP_t.
    PoissonTimeDerivative,
    /// s∂_s of the heat kernel at heat time s = t².
    HeatTimeDerivative,
    /// The heat kernel at heat time s = t² (no cancellation).
    Heat,
    Psi,
}

impl CheckedKernel {
    pub fn eval(&self, k: &Kernels, t: f64, x: f64, y: f64) -> Result<f64> {
        Ok(match self {
            Self::Poisson => k.poisson_family(t, x, y).p,
            Self::PoissonTimeDerivative => t * k.poisson_family(t, x, y).dt,
            Self::HeatTimeDerivative => k.heat_family(t * t, x, y).s_ds,
            Self::Heat => k.heat_family(t * t, x, y).h,
            Self::Psi => k.psi_kernel(&BumpProfile::new(&k.param), t, x, y)?,
        })
    }
}

/// Sample (t, x, y, ỹ) for the kernel checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub y_tilde: f64,
}

/// Log-uniform random samples with |y − ỹ| ≤ (t + |x − y|)/2.
pub fn kernel_samples(seed: u64, count: usize, near: bool) -> Vec<KernelSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = 2f64.powf(rng.gen_range(-4.0..3.0));
            let x = 2f64.powf(rng.gen_range(-4.0..4.0));
            let y = if near {
                (x + t * rng.gen_range(-0.99..0.99)).max(1e-3 * x)
            } else {
                2f64.powf(rng.gen_range(-4.0..4.0))
            };
            let r = 0.5 * (t + (x - y).abs());
            let y_tilde = (y + r * rng.gen_range(-1.0..1.0)).max(0.5 * y);
            KernelSample { t, x, y, y_tilde }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelConditionReport {
    pub kernel: CheckedKernel,
    /// Worst |K| / size-bound ratio.
    pub size_constant: f64,
    /// Worst |K(y) − K(ỹ)| / smoothness-bound ratio.
    pub smoothness_constant: f64,
    /// Worst |∫K dm| over the cancellation points.
    pub cancellation_abs: f64,
    /// Worst |∫K dm| / ∫|K| dm.
    pub cancellation_rel: f64,
    pub cancellation_tol: f64,
    pub cancellation_pass: bool,
    pub evaluated: usize,
    pub skipped: usize,
}

/// m(I(x,t)) + m(I(y,t)) + m(I(x,|x−y|)).
fn size_denominator(p: &BesselParam, t: f64, x: f64, y: f64) -> f64 {
    measure_of_interval(p, &Interval { x, t })
        + measure_of_interval(p, &Interval { x: y, t })
        + measure_of_interval(p, &Interval { x, t: (x - y).abs() })
}

/// (∫K(t,x,·) dm, ∫|K(t,x,·)| dm) by adaptive quadrature.
pub fn kernel_mass(k: &Kernels, kind: CheckedKernel, t: f64, x: f64, tol: f64) -> (f64, f64) {
    let l2 = 2.0 * k.param.lambda;
    let f = |y: f64| kind.eval(k, t, x, y).unwrap_or(f64::NAN) * y.powf(l2);
    let mut cuts = vec![0.0, x];
    for c in [x - t, x - 0.5 * t, x + 0.5 * t, x + t, x + 4.0 * t] {
        if c > 0.0 {
            cuts.push(c);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let (mut s, mut a) = (0.0, 0.0);
    for w in cuts.windows(2) {
        s += integrate_adaptive(f, w[0], w[1], tol);
        a += integrate_adaptive(|y| f(y).abs(), w[0], w[1], tol);
    }
    let last = *cuts.last().unwrap();
    if !matches!(kind, CheckedKernel::Psi) {
        s += integrate_to_infinity(f, last, tol);
        a += integrate_to_infinity(|y| f(y).abs(), last, tol);
    }
    (s, a)
}

/// Calibrate size and smoothness constants on `samples` and test cancellation
/// at `mass_points` (pairs (t, x)).
pub fn check_kernel_conditions(
    k: &Kernels,
    kind: CheckedKernel,
    samples: &[KernelSample],
    mass_points: &[(f64, f64)],
    cancellation_tol: f64,
) -> KernelConditionReport {
    let p = &k.param;
    let (mut size_c, mut smooth_c) = (0.0f64, 0.0f64);
    let (mut evaluated, mut skipped) = (0, 0);
    for s in samples {
        let admissible = s.t > 0.0
            && s.x > 0.0
            && s.y > 0.0
            && s.y_tilde > 0.0
            && (s.y - s.y_tilde).abs() <= 0.5 * (s.t + (s.x - s.y).abs()) * (1.0 + 1e-12);
        let vals = (kind.eval(k, s.t, s.x, s.y), kind.eval(k, s.t, s.x, s.y_tilde));
        let (Ok(ky), Ok(kt)) = vals else {
            skipped += 1;
            continue;
        };
        if !admissible {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        let d = (s.x - s.y).abs();
        let den = size_denominator(p, s.t, s.x, s.y);
        size_c = size_c.max(ky.abs() * den * (d + s.t) / s.t);
        let dy = (s.y - s.y_tilde).abs();
        if dy > 0.0 {
            smooth_c = smooth_c.max((ky - kt).abs() * den * (d + s.t).powi(2) / (s.t * dy));
        }
    }
    let (mut c_abs, mut c_rel) = (0.0f64, 0.0f64);
    for &(t, x) in mass_points {
        let (m, a) = kernel_mass(k, kind, t, x, 1e-12);
        c_abs = c_abs.max(m.abs());
        c_rel = c_rel.max(m.abs() / a.max(1e-300));
    }
    KernelConditionReport {
        kernel: kind,
        size_constant: size_c,
        smoothness_constant: smooth_c,
        cancellation_abs: c_abs,
        cancellation_rel: c_rel,
        cancellation_tol,
        cancellation_pass: c_rel <= cancellation_tol,
        evaluated,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{angular_integral, AngularRule};

    fn ker(l: f64) -> Kernels {
        Kernels::new(BesselParam::new(l).unwrap())
    }

    /// Independent Poisson value: adaptive quadrature of the θ-integral.
    fn poisson_oracle(l: f64, t: f64, x: f64, y: f64) -> f64 {
        let f = |th: f64| {
            th.sin().powf(2.0 * l - 1.0) / (x * x + y * y + t * t - 2.0 * x * y * th.cos()).powf(l + 1.0)
        };
        2.0 * l * t / PI * integrate_adaptive(f, 0.0, PI, 1e-13)
    }

    #[test]
    fn poisson_matches_oracle_and_is_symmetric() {
        for &l in &[0.5, 1.0, 2.0, 3.5] {
            let k = ker(l);
            for &(t, x, y) in &[(1.0, 2.0, 2.0), (0.01, 1.0, 1.003), (0.5, 0.1, 3.0), (2.0, 5.0, 0.2)] {
                let v = k.poisson_kernel(t, x, y).unwrap();
                let o = poisson_oracle(l, t, x, y);
                assert!((v / o - 1.0).abs() < 1e-10, "λ={l} ({t},{x},{y}) {v} {o}");
                assert_eq!(v, k.poisson_kernel(t, y, x).unwrap());
            }
        }
        assert!(ker(1.0).poisson_kernel(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn poisson_conservation() {
        let k = ker(1.0);
        let (m, _) = kernel_mass(&k, CheckedKernel::Poisson, 1.0, 2.0, 1e-12);
        assert!((m - 1.0).abs() < 1e-8, "{m}");
    }

    #[test]
    fn homogeneity() {
        let k = ker(1.0);
        let lhs = k.poisson_kernel(2.0, 1.0, 3.0).unwrap();
        let rhs = 2f64.powf(-3.0) * k.poisson_kernel(1.0, 0.5, 1.5).unwrap();
        assert!((lhs / rhs - 1.0).abs() < 1e-12);
        let lhs = k.conjugate_poisson_kernel(2.0, 1.0, 3.0).unwrap();
        let rhs = 2f64.powf(-3.0) * k.conjugate_poisson_kernel(1.0, 0.5, 1.5).unwrap();
        assert!((lhs / rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conjugate_oracle_and_cauchy_riemann() {
        let l = 1.5;
        let k = ker(l);
        let (t, x, y) = (0.3, 1.2, 0.9);
        let f = |th: f64| {
            (x - y * th.cos()) * th.sin().powf(2.0 * l - 1.0)
                / (x * x + y * y + t * t - 2.0 * x * y * th.cos()).powf(l + 1.0)
        };
        let o = -2.0 * l / PI * integrate_adaptive(f, 0.0, PI, 1e-13);
        let q = k.conjugate_poisson_kernel(t, x, y).unwrap();
        assert!((q / o - 1.0).abs() < 1e-10);
        // ∂_xP + ∂_tQ = 0 via central differences
        let res = |h: f64| {
            let dxp = (k.poisson_kernel(t, x + h, y).unwrap() - k.poisson_kernel(t, x - h, y).unwrap()) / (2.0 * h);
            let dtq = (k.conjugate_poisson_kernel(t + h, x, y).unwrap()
                - k.conjugate_poisson_kernel(t - h, x, y).unwrap())
                / (2.0 * h);
            (dxp + dtq).abs()
        };
        let (r1, r2, r3) = (res(0.02), res(0.01), res(0.005));
        assert!((r1 / r2).log2() >= 1.8 && (r2 / r3).log2() >= 1.8, "{r1} {r2} {r3}");
        // analytic derivatives against differences
        let pv = k.poisson_family(t, x, y);
        let h = 1e-4;
        let fd_t = (k.poisson_kernel(t + h, x, y).unwrap() - k.poisson_kernel(t - h, x, y).unwrap()) / (2.0 * h);
        let fd_x = (k.poisson_kernel(t, x + h, y).unwrap() - k.poisson_kernel(t, x - h, y).unwrap()) / (2.0 * h);
        assert!((pv.dt - fd_t).abs() < 1e-6 * pv.dt.abs().max(1.0));
        assert!((pv.dx - fd_x).abs() < 1e-6 * pv.dx.abs().max(1.0));
    }

    #[test]
    fn heat_profile_properties() {
        let p = BesselParam::new(1.0).unwrap();
        let w = heat_profile(&p);
        let m = integrate_to_infinity(|r| w.value(r) * r * r, 0.0, 1e-13);
        assert!((m - 1.0).abs() < 1e-8);
        let half = heat_profile(&BesselParam::new(0.5).unwrap());
        assert!((half.value(0.0) - 1.0).abs() < 1e-15);
        assert!(w.value(30.0) >= 0.0);
    }

    #[test]
    fn heat_kernel_matches_translation_and_mass() {
        let k = ker(1.3);
        let w = heat_profile(&k.param);
        let s = 0.2;
        let direct = k.heat_kernel(s, 1.0, 1.4).unwrap();
        let via = k.hankel_translation(&w, (2.0 * s).sqrt(), 1.0, 1.4).unwrap();
        assert!((direct / via - 1.0).abs() < 1e-10);
        let (m, _) = kernel_mass(&k, CheckedKernel::Heat, s.sqrt(), 1.0, 1e-12);
        assert!((m - 1.0).abs() < 1e-9, "{m}");
    }

    #[test]
    fn hankel_translation_examples() {
        let k = ker(1.0);
        let phi = BumpProfile::new(&k.param);
        // x → 0 reduces to φ_t(y)
        let t = 0.7;
        let y = 0.4;
        let v = k.hankel_translation(&phi, t, 1e-9, y).unwrap();
        let direct = t.powf(-3.0) * phi.value(y / t);
        assert!((v - direct).abs() < 1e-8 * direct);
        // symmetry in (x, y)
        let a = k.hankel_translation(&phi, 0.5, 0.8, 1.1).unwrap();
        let b = k.hankel_translation(&phi, 0.5, 1.1, 0.8).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        // unit mass
        let m = integrate_adaptive(|y| k.hankel_translation(&phi, 0.5, 0.8, y).unwrap() * y * y, 0.3, 1.3, 1e-12);
        assert!((m - 1.0).abs() < 1e-7, "{m}");
    }

    #[test]
    fn bump_has_unit_mass() {
        for &l in &[0.5, 1.0, 2.0] {
            let phi = BumpProfile::new(&BesselParam::new(l).unwrap());
            let m = integrate_adaptive(|r| phi.value(r) * r.powf(2.0 * l), 0.0, 1.0, 1e-13);
            assert!((m - 1.0).abs() < 1e-8);
            assert!(phi.samples(50).iter().all(|s| s.1 >= 0.0));
            assert_eq!(phi.value(1.2), 0.0);
        }
    }

    #[test]
    fn triangle_density_examples() {
        let k = ker(1.0);
        assert_eq!(k.triangle_density(1.0, 1.0, 2.5), 0.0);
        let d = k.triangle_density(1.0, 1.5, 2.0);
        for perm in [(1.5, 1.0, 2.0), (2.0, 1.5, 1.0), (1.0, 2.0, 1.5)] {
            assert!((k.triangle_density(perm.0, perm.1, perm.2) - d).abs() < 1e-15);
        }
        assert!((d - 0.5 / 3.0).abs() < 1e-14);
        let m = integrate_adaptive(|y| k.triangle_density(1.0, y, 2.0) * y * y, 1.0, 3.0, 1e-13);
        assert!((m - 1.0).abs() < 1e-6);
        // general λ: Jacobi rule in y absorbs the endpoint singularities
        for &l in &[0.3, 0.75, 2.5] {
            let k = ker(l);
            let (x, z) = (1.0, 2.0);
            let (a, b) = (1.0, 3.0);
            let r = gauss_jacobi(40, l - 1.0, l - 1.0);
            let h = 0.5 * (b - a);
            let m: f64 = r.nodes.iter().zip(&r.weights).map(|(u, w)| {
                let y: f64 = 2.0 + h * u;
                let sing = ((b - y) * (y - a)).powf(l - 1.0);
                w * h * k.triangle_density(x, y, z) * y.powf(2.0 * l) / sing
            }).sum();
            assert!((m - 1.0).abs() < 1e-6, "λ={l} {m}");
        }
    }

    #[test]
    fn needle_triangles_are_stable() {
        assert!(triangle_area(1.0, 1.0, 1e-9) > 0.0);
        assert_eq!(triangle_area(1.0, 2.0, 3.0), 0.0);
        assert!((triangle_area(3.0, 4.0, 5.0) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn psi_support_and_representations() {
        let k = ker(1.0);
        let phi = BumpProfile::new(&k.param);
        assert_eq!(k.psi_kernel(&phi, 1.0, 5.0, 7.0).unwrap(), 0.0);
        let far = k.psi_kernel(&phi, 1.0, 5.0, 1.0).unwrap();
        assert!(far.abs() < 1e-10, "{far}");
        for &(t, x, y) in &[(1.0, 1.2, 1.0), (0.5, 0.3, 0.6), (2.0, 1.0, 0.5)] {
            let a = k.psi_kernel(&phi, t, x, y).unwrap();
            let b = k.psi_kernel_triangle(&phi, t, x, y).unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "({t},{x},{y}) {a} {b}");
        }
        let k = ker(0.7);
        let phi = BumpProfile::new(&k.param);
        let a = k.psi_kernel(&phi, 0.8, 1.0, 0.9).unwrap();
        let b = k.psi_kernel_triangle(&phi, 0.8, 1.0, 0.9).unwrap();
        assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} {b}");
    }

    #[test]
    fn psi_cancellation() {
        let k = ker(1.0);
        let (m, a) = kernel_mass(&k, CheckedKernel::Psi, 0.5, 1.0, 1e-11);
        assert!(m.abs() < 1e-7, "{m} {a}");
    }

    #[test]
    fn kernel_condition_checker() {
        let k = ker(1.0);
        let samples = kernel_samples(7, 40, true);
        let pts = [(0.5, 1.0), (1.0, 2.0)];
        let r = check_kernel_conditions(&k, CheckedKernel::PoissonTimeDerivative, &samples, &pts, 1e-7);
        assert!(r.cancellation_pass && r.cancellation_abs < 1e-7, "{r:?}");
        assert!(r.size_constant.is_finite() && r.smoothness_constant.is_finite());
        let r = check_kernel_conditions(&k, CheckedKernel::Poisson, &samples[..5], &pts, 1e-7);
        assert!(!r.cancellation_pass);
        let bad = [KernelSample { t: 1.0, x: 1.0, y: 1.0, y_tilde: 9.0 }];
        let r = check_kernel_conditions(&k, CheckedKernel::Heat, &bad, &[], 1e-7);
        assert_eq!((r.evaluated, r.skipped), (0, 1));
    }

    #[test]
    fn angular_rule_wallis() {
        let p = BesselParam::new(2.3).unwrap();
        let r = AngularRule::new(&p, 64);
        assert!((p.c_lambda * angular_integral(&r, |_| 1.0).unwrap() - 1.0).abs() < 1e-10);
    }
}
