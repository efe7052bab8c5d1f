//! E2 to E5: semigroup axioms, Cauchy–Riemann systems, subordination and ψ.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::report::{Cmp, ExperimentReport, Reduce, Table, Verdict};
use crate::conjugate_system::{check_exponent, check_poisson_majorization, cr_convergence, CR_NAMES, LAPLACE_NAMES};
use crate::error::Result;
use crate::geometry::{make_log_grid, BesselParam, RadialGrid};
use crate::kernels::{check_kernel_conditions, kernel_mass, kernel_samples, CheckedKernel};
use crate::operators::{
    fine_points, interpolant_lp_norm, lp_norm_1d, Op, Operators, RowSpec, SampledFunction1D, SampledFunction2D,
};
use crate::special::gamma;

/// (1 − r²)⁴ on |r| < 1 with r = (x − c)/w.
pub fn bump(x: f64, c: f64, w: f64) -> f64 {
    let r = (x - c) / w;
    if r.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - r * r).powi(4)
    }
}

fn c(check: &str) -> Option<(&'static str, &str)> {
    Some(("check", check))
}

pub(crate) fn base_grid(cfg: &ExperimentConfig, p: &BesselParam) -> Result<Arc<RadialGrid>> {
    Ok(Arc::new(make_log_grid(p, cfg.span(), cfg.grid.nodes_1d)?))
}

fn fingerprint(cfg: &ExperimentConfig, extra: &[(&str, String)]) -> BTreeMap<String, String> {
    let mut m = BTreeMap::from([
        ("lambda".to_string(), cfg.lambda.to_string()),
        ("span".to_string(), format!("2^{}..2^{}", cfg.grid.lo_exp, cfg.grid.hi_exp)),
    ]);
    for (k, v) in extra {
        m.insert(k.to_string(), v.clone());
    }
    m
}

fn report(id: &str, title: &str, table: Table, verdicts: Vec<Verdict>, fp: BTreeMap<String, String>, errors: Vec<String>, start: Instant) -> ExperimentReport {
    ExperimentReport {
        id: id.into(),
        title: title.into(),
        table,
        verdicts,
        fingerprint: fp,
        errors,
        wall_clock_s: start.elapsed().as_secs_f64(),
    }
}

/// Row matrix applied to the node values of f.
fn rows_apply(m: &ndarray::Array2<f64>, f: &SampledFunction1D) -> Vec<f64> {
    m.dot(&Array1::from(f.values.clone())).to_vec()
}

pub fn e2_semigroup_axioms(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let p = cfg.param()?;
    let ops = Operators::new(p);
    let tol = &cfg.tolerances;
    let mut table = Table::new(&["check", "operator", "t", "p", "value", "error"]);
    let mut errors = Vec::new();

    // Conservation on a grid reaching 2^20 beyond the base span, at the base density.
    let octaves = (cfg.grid.hi_exp - cfg.grid.lo_exp) as usize;
    let wide_n = cfg.grid.nodes_1d * (octaves + 20) / octaves;
    let wide = Arc::new(make_log_grid(&p, (2f64.powi(cfg.grid.lo_exp), 2f64.powi(cfg.grid.hi_exp + 20)), wide_n)?);
    let window = (0.8 * 2f64.powi(cfg.grid.lo_exp + 2), 2f64.powi(cfg.grid.hi_exp - 4));
    let one = SampledFunction1D::from_fn(wide.clone(), |_| 1.0);
    for &t in &[0.01, 0.1, 0.5] {
        for (name, op) in [("poisson", Op::Poisson(t)), ("heat", Op::Heat(t * t)), ("bump_convolution", Op::BumpConvolution(t))] {
            match ops.apply(&op, &one) {
                Ok(u) => {
                    let dev = wide
                        .nodes()
                        .iter()
                        .zip(&u.values)
                        .filter(|(x, _)| **x > window.0 && **x < window.1)
                        .fold(0.0f64, |m, (_, v)| m.max((v - 1.0).abs()));
                    table.push(vec![("check", "conservation".into()), ("operator", name.into()), ("t", t.into()), ("value", dev.into())]);
                }
                Err(e) => {
                    errors.push(format!("conservation {name} t={t}: {e}"));
                    table.push(vec![("check", "conservation".into()), ("operator", name.into()), ("t", t.into()), ("error", e.to_string().into())]);
                }
            }
        }
    }

    let g = base_grid(cfg, &p)?;
    let f = SampledFunction1D::from_fn(g.clone(), |x| bump(x, 1.0, 0.6) + 0.3 * bump(x, 3.0, 1.0));
    let pts = fine_points(&g, p.lambda, 12);
    let fine_rows = |t: f64| pts.iter().map(|&(x, _)| RowSpec { x, t }).collect::<Vec<_>>();
    let sup = f.sup_norm();
    for &t in &[0.03, 0.3, 3.0] {
        let s = t * t;
        for (name, op) in [("poisson", Op::Poisson(t)), ("heat", Op::Heat(s))] {
            let u = ops.apply(&op, &f)?;
            let min = u.values.iter().copied().fold(f64::INFINITY, f64::min) / sup;
            table.push(vec![("check", "positivity".into()), ("operator", name.into()), ("t", t.into()), ("value", min.into())]);
            let fine = if name == "poisson" {
                let [m, _, _, _] = ops.poisson_rows(&g, &fine_rows(t));
                rows_apply(&m, &f)
            } else {
                let [m, _] = ops.heat_rows(&g, &fine_rows(s));
                rows_apply(&m, &f)
            };
            for q in [1.0, 2.0] {
                let lhs = fine.iter().zip(&pts).map(|(v, (_, w))| v.abs().powf(q) * w).sum::<f64>().powf(1.0 / q);
                let ratio = lhs / interpolant_lp_norm(&f, q);
                table.push(vec![
                    ("check", "contraction".into()),
                    ("operator", name.into()),
                    ("t", t.into()),
                    ("p", q.into()),
                    ("value", ratio.into()),
                ]);
            }
            let ratio = lp_norm_1d(&u, f64::INFINITY) / sup;
            table.push(vec![
                ("check", "contraction".into()),
                ("operator", name.into()),
                ("t", t.into()),
                ("p", f64::INFINITY.into()),
                ("value", ratio.into()),
            ]);
        }
    }
    let (a, b) = (0.3, 0.7);
    for (name, ta, tb, tab) in [
        ("poisson", Op::Poisson(a), Op::Poisson(b), Op::Poisson(a + b)),
        ("heat", Op::Heat(a), Op::Heat(b), Op::Heat(a + b)),
    ] {
        let lhs = ops.apply(&ta, &ops.apply(&tb, &f)?)?;
        let rhs = ops.apply(&tab, &f)?;
        let d = lhs.values.iter().zip(&rhs.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / sup;
        table.push(vec![("check", "composition".into()), ("operator", name.into()), ("t", (a + b).into()), ("value", d.into())]);
    }

    let verdicts = vec![
        Verdict::evaluate(&table, "conservation", "value", c("conservation"), Reduce::Max, Cmp::Le(tol.conservation), "conservation"),
        Verdict::evaluate(&table, "positivity", "value", c("positivity"), Reduce::Min, Cmp::Ge(0.0), "exact"),
        Verdict::evaluate(&table, "contraction", "value", c("contraction"), Reduce::Max, Cmp::Le(1.0 + tol.contraction), "contraction"),
        Verdict::evaluate(&table, "composition", "value", c("composition"), Reduce::Max, Cmp::Le(tol.composition), "composition"),
    ];
    let fp = fingerprint(
        cfg,
        &[
            ("nodes_1d", cfg.grid.nodes_1d.to_string()),
            ("wide_grid", format!("{} nodes to 2^{}", wide_n, cfg.grid.hi_exp + 20)),
            ("conservation_window", format!("{:?}", window)),
        ],
    );
    Ok(report("E2", "semigroup axioms", table, verdicts, fp, errors, start))
}

/// Smooth test function shared by E3.
fn cr_test_function(g: Arc<RadialGrid>) -> SampledFunction2D {
    SampledFunction2D::from_fn(g.clone(), g, |x, y| (bump(x, 1.0, 0.6) - 0.4 * bump(x, 2.0, 0.8)) * bump(y, 1.5, 1.0))
}

pub const CR_PROBES: [[f64; 4]; 2] = [[0.6, 0.8, 1.2, 1.0], [1.0, 0.5, 0.8, 2.0]];
pub const CR_H0: f64 = 0.2;
pub const CR_LEVELS: usize = 3;

pub fn e3_cauchy_riemann(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let p = cfg.param()?;
    let ops = Operators::new(p);
    let tol = &cfg.tolerances;
    let mut table = Table::new(&["check", "residual", "p", "nodes", "value", "order", "error"]);
    let mut errors = Vec::new();
    let g = cfg.grid_2d(&p, cfg.grid.nodes_2d)?;
    let f = cr_test_function(g);
    match cr_convergence(&ops, &f, &CR_PROBES, CR_H0, CR_LEVELS) {
        Ok(c) => {
            for (i, name) in CR_NAMES.iter().enumerate() {
                let worst = c.cr.iter().map(|l| l[i]).fold(0.0, f64::max);
                table.push(vec![("check", "cauchy_riemann".into()), ("residual", (*name).into()), ("value", worst.into()), ("order", c.cr_order[i].into())]);
            }
            for (i, name) in LAPLACE_NAMES.iter().enumerate() {
                let worst = c.laplace.iter().map(|l| l[i]).fold(0.0, f64::max);
                table.push(vec![("check", "laplace".into()), ("residual", (*name).into()), ("value", worst.into()), ("order", c.laplace_order[i].into())]);
            }
        }
        Err(e) => {
            errors.push(format!("cr_convergence: {e}"));
            table.push(vec![("check", "cauchy_riemann".into()), ("error", e.to_string().into())]);
        }
    }

    // Majorization constant of F^p under lattice refinement, and recorded over p.
    let lo = p.hardy_lower();
    let p_ref = if check_exponent(p.lambda, 0.9).is_ok() { 0.9 } else { 0.5 * (lo + 1.0) };
    let times = [(0.25, 0.25), (0.5, 1.0), (1.0, 0.5), (2.0, 2.0)];
    let (offsets, window) = ((0.25, 0.25), (0.125, 8.0));
    let mut ps = vec![p_ref];
    ps.extend((1..=4).map(|k| lo + (1.0 - lo) * k as f64 / 5.0).filter(|q| (q - p_ref).abs() > 1e-9));
    let mut at_ref = Vec::new();
    for n in [cfg.grid.nodes_2d / 2, cfg.grid.nodes_2d] {
        let ops_n = Operators::new(p);
        let g = cfg.grid_2d(&p, n)?;
        let h = SampledFunction2D::from_fn(g.clone(), g, |x, y| bump(x, 1.0, 0.6) * bump(y, 1.5, 0.8));
        for &q in &ps {
            if n != cfg.grid.nodes_2d && q != p_ref {
                continue;
            }
            match check_poisson_majorization(&ops_n, &h, q, offsets, &times, window) {
                Ok(r) => {
                    if q == p_ref {
                        at_ref.push(r.constant);
                    }
                    let check = if q == p_ref { "majorization" } else { "majorization_sweep" };
                    table.push(vec![("check", check.into()), ("p", q.into()), ("nodes", n.into()), ("value", r.constant.into())]);
                }
                Err(e) => {
                    errors.push(format!("majorization p={q} n={n}: {e}"));
                    table.push(vec![("check", "majorization".into()), ("p", q.into()), ("nodes", n.into()), ("error", e.to_string().into())]);
                }
            }
        }
    }
    let drift = if at_ref.len() == 2 { (at_ref[0] / at_ref[1] - 1.0).abs() } else { f64::NAN };
    table.push(vec![("check", "majorization_drift".into()), ("p", p_ref.into()), ("value", drift.into())]);

    let verdicts = vec![
        Verdict::evaluate(&table, "Cauchy-Riemann orders", "order", c("cauchy_riemann"), Reduce::Min, Cmp::Ge(tol.fd_order), "fd_order"),
        Verdict::evaluate(&table, "Bessel-Laplace orders", "order", c("laplace"), Reduce::Min, Cmp::Ge(tol.fd_order), "fd_order"),
        Verdict::evaluate(
            &table,
            "majorization constant stable under refinement",
            "value",
            c("majorization_drift"),
            Reduce::Max,
            Cmp::Le(tol.refinement_drift),
            "refinement_drift",
        ),
    ];
    let fp = fingerprint(
        cfg,
        &[
            ("nodes_2d", cfg.grid.nodes_2d.to_string()),
            ("probes", format!("{CR_PROBES:?}")),
            ("steps", format!("h0 = {CR_H0}, {CR_LEVELS} halvings")),
            ("majorization", format!("offsets {offsets:?}, times {times:?}, window {window:?}")),
        ],
    );
    Ok(report("E3", "Cauchy-Riemann systems of the conjugate quadruple", table, verdicts, fp, errors, start))
}

/// Trapezoid nodes (u, weight) in σ = ln u for P_t = ∫ e^{−u}(πu)^{−1/2} h_{t²/(4u)} du.
pub fn subordination_nodes(h: f64, sigma: (f64, f64)) -> Vec<(f64, f64)> {
    let n = ((sigma.1 - sigma.0) / h).round() as usize;
    (0..=n)
        .map(|k| {
            let s = sigma.0 + k as f64 * h;
            let u = s.exp();
            let end = if k == 0 || k == n { 0.5 } else { 1.0 };
            (u, end * h * (-u).exp() * u.sqrt() / PI.sqrt())
        })
        .collect()
}

pub const SUBORDINATION_STEP: f64 = 0.2;
pub const SUBORDINATION_RANGE: (f64, f64) = (-60.0, 5.0);
pub const SUBORDINATION_PROBES: [(f64, f64); 5] = [(0.1, 1.0), (0.5, 0.7), (1.0, 1.5), (2.0, 0.3), (0.05, 2.0)];

pub fn e4_subordination(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let p = cfg.param()?;
    let ops = Operators::new(p);
    let tol = &cfg.tolerances;
    let mut table = Table::new(&["check", "t", "x", "poisson", "subordinated", "value"]);
    let nodes = subordination_nodes(SUBORDINATION_STEP, SUBORDINATION_RANGE);
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    let oracle = gamma(0.5) / PI.sqrt();
    table.push(vec![("check", "weight".into()), ("value", (total - oracle).abs().into())]);

    let g = base_grid(cfg, &p)?;
    let f = SampledFunction1D::from_fn(g.clone(), |x| bump(x, 1.0, 0.6) - 0.5 * bump(x, 2.5, 1.2));
    let fv = Array1::from(f.values.clone());
    let sup = f.sup_norm();
    for &(t, x) in &SUBORDINATION_PROBES {
        let [pm, _, _, _] = ops.poisson_rows(&g, &[RowSpec { x, t }]);
        let direct = pm.dot(&fv)[0];
        let rows: Vec<RowSpec> = nodes.iter().map(|&(u, _)| RowSpec { x, t: t * t / (4.0 * u) }).collect();
        let [hm, _] = ops.heat_rows(&g, &rows);
        let heat = hm.dot(&fv);
        let sub: f64 = nodes.iter().zip(&heat).map(|((_, w), v)| w * v).sum();
        table.push(vec![
            ("check", "probe".into()),
            ("t", t.into()),
            ("x", x.into()),
            ("poisson", direct.into()),
            ("subordinated", sub.into()),
            ("value", ((direct - sub).abs() / sup).into()),
        ]);
    }
    let verdicts = vec![
        Verdict::evaluate(&table, "subordination weight mass", "value", c("weight"), Reduce::Max, Cmp::Le(tol.subordination_weight), "subordination_weight"),
        Verdict::evaluate(&table, "subordination error", "value", c("probe"), Reduce::Max, Cmp::Le(tol.subordination), "subordination"),
    ];
    let fp = fingerprint(
        cfg,
        &[
            ("nodes_1d", cfg.grid.nodes_1d.to_string()),
            ("rule", format!("trapezoid in ln u, step {SUBORDINATION_STEP}, range {SUBORDINATION_RANGE:?}")),
        ],
    );
    Ok(report("E4", "subordination of Poisson to heat", table, verdicts, fp, Vec::new(), start))
}

pub const PSI_PROBES: [(f64, f64); 3] = [(0.5, 1.0), (0.3, 1.5), (1.0, 2.0)];
pub const PSI_MASS_POINTS: [(f64, f64); 5] = [(0.5, 1.0), (1.0, 2.0), (0.25, 0.5), (2.0, 1.0), (1.0, 0.4)];
pub const PSI_H0: f64 = 0.08;

pub fn e5_psi_properties(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let p = cfg.param()?;
    let ops = Operators::new(p);
    let k = &ops.kernels;
    let tol = &cfg.tolerances;
    let mut table = Table::new(&["check", "t", "x", "y", "h", "value", "order", "error"]);
    let mut errors = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.corpus.seed);
    let mut n = 0;
    while n < 200 {
        let t = 2f64.powf(rng.gen_range(-3.0..2.0));
        let x = 2f64.powf(rng.gen_range(-3.0..3.0));
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let y = x + side * t * (1.0 + rng.gen_range(0.0..3.0));
        if y <= 0.0 {
            continue;
        }
        n += 1;
        match k.psi_kernel(&ops.bump, t, x, y) {
            Ok(v) => table.push(vec![("check", "support".into()), ("t", t.into()), ("x", x.into()), ("y", y.into()), ("value", v.abs().into())]),
            Err(e) => {
                errors.push(format!("psi({t},{x},{y}): {e}"));
                table.push(vec![("check", "support".into()), ("t", t.into()), ("x", x.into()), ("y", y.into()), ("error", e.to_string().into())]);
            }
        }
    }
    for &(t, x) in &PSI_MASS_POINTS {
        let (m, a) = kernel_mass(k, CheckedKernel::Psi, t, x, 1e-11);
        table.push(vec![("check", "cancellation".into()), ("t", t.into()), ("x", x.into()), ("value", m.abs().into())]);
        table.push(vec![("check", "cancellation_rel".into()), ("t", t.into()), ("x", x.into()), ("value", (m.abs() / a).into())]);
    }
    let kc = check_kernel_conditions(k, CheckedKernel::Psi, &kernel_samples(cfg.corpus.seed, 60, true), &[], tol.psi_cancellation);
    table.push(vec![("check", "size_constant".into()), ("value", kc.size_constant.into())]);
    table.push(vec![("check", "smoothness_constant".into()), ("value", kc.smoothness_constant.into())]);

    // ∂_t(φ_t♯f) = ∂_xψ(f) + (2λ/x)ψ(f) by central differences.
    let g = base_grid(cfg, &p)?;
    let f = SampledFunction1D::from_fn(g.clone(), |x| bump(x, 1.2, 0.7));
    let fv = Array1::from(f.values.clone());
    let l2 = 2.0 * p.lambda;
    for &(t, x) in &PSI_PROBES {
        let res: Vec<f64> = (0..3)
            .map(|j| {
                let h = PSI_H0 / 2f64.powi(j);
                let conv = ops.convolution_rows(&g, &ops.bump, &[RowSpec { x, t: t + h }, RowSpec { x, t: t - h }]).dot(&fv);
                let psi = ops.psi_rows(&g, &[RowSpec { x: x + h, t }, RowSpec { x: x - h, t }, RowSpec { x, t }]).dot(&fv);
                let lhs = (conv[0] - conv[1]) / (2.0 * h);
                let rhs = (psi[0] - psi[1]) / (2.0 * h) + l2 / x * psi[2];
                (lhs - rhs).abs()
            })
            .collect();
        let order = (res[0] / res[1]).log2().min((res[1] / res[2]).log2());
        for (j, r) in res.iter().enumerate() {
            table.push(vec![
                ("check", "conjugacy_residual".into()),
                ("t", t.into()),
                ("x", x.into()),
                ("h", (PSI_H0 / 2f64.powi(j as i32)).into()),
                ("value", (*r).into()),
            ]);
        }
        table.push(vec![("check", "conjugacy".into()), ("t", t.into()), ("x", x.into()), ("order", order.into())]);
    }
    let verdicts = vec![
        Verdict::evaluate(&table, "support", "value", c("support"), Reduce::Max, Cmp::Le(tol.psi_support), "psi_support"),
        Verdict::evaluate(&table, "cancellation", "value", c("cancellation"), Reduce::Max, Cmp::Le(tol.psi_cancellation), "psi_cancellation"),
        Verdict::evaluate(&table, "conjugacy order", "order", c("conjugacy"), Reduce::Min, Cmp::Ge(tol.fd_order), "fd_order"),
    ];
    let fp = fingerprint(
        cfg,
        &[
            ("nodes_1d", cfg.grid.nodes_1d.to_string()),
            ("conjugacy_steps", format!("h0 = {PSI_H0}, 2 halvings")),
            ("kernel_samples", format!("{} evaluated, {} skipped", kc.evaluated, kc.skipped)),
        ],
    );
    Ok(report("E5", "properties of the psi kernel", table, verdicts, fp, errors, start))
}
