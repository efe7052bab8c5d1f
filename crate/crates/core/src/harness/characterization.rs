//! E6 and E7: Riesz-transform characterization on atoms and atom tails.

use std::collections::BTreeMap;
use std::time::Instant;

use super::config::ExperimentConfig;
use super::equivalence::HEAT_EXTENSION;
use super::report::{loglog_svg, Cell, Cmp, ExperimentReport, Reduce, Table, Verdict};
use crate::atoms::{make_rectangular_atom, DyadicRect};
use crate::conjugate_system::{build_quadruple, f_l1_sup, riesz_norm_bundle, Lattice};
use crate::error::Result;
use crate::geometry::DyadicInterval;
use crate::maximal::semigroup_maximal;
use crate::operators::{lp_norm, Operators, Semigroup};

/// Octave interval (2^level, 2^{level+1}].
fn octave(level: i32) -> DyadicInterval {
    DyadicInterval { level, tau: 1 }
}

/// Level of the middle atom of the E6 sweep.
pub const RIESZ_BASE_LEVEL: i32 = -1;
pub const RIESZ_SHIFTS: std::ops::RangeInclusive<i32> = -3..=3;
/// Poisson pre-smoothing times for the p < 1 variant.
pub const SMOOTHING: [(f64, f64); 2] = [(0.25, 0.25), (1.0, 1.0)];

pub fn e6_riesz_characterization(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let p = cfg.param()?;
    let ops = Operators::new(p);
    let tol = &cfg.tolerances;
    let g = cfg.grid_2d(&p, cfg.grid.nodes_2d)?;
    let mut table = Table::new(&[
        "row_type", "shift", "level", "p", "smoothing", "norm_a", "norm_R1", "norm_R2", "norm_R12", "bundle", "norm_NP", "ratio",
        "f_l1_sup", "worst_error", "flagged", "error",
    ]);
    let mut errors = Vec::new();
    let p_low = 0.5 * (p.hardy_lower() + 1.0);
    let times = [0.0625, 0.25, 1.0, 4.0];
    for j in RIESZ_SHIFTS {
        let level = RIESZ_BASE_LEVEL + j;
        let rect = DyadicRect::new(octave(level), octave(level));
        let run = || -> Result<Vec<Vec<(&'static str, Cell)>>> {
            let a = make_rectangular_atom(&p, g.clone(), g.clone(), rect, 1.0)?.values;
            let b = riesz_norm_bundle(&ops, &a, 1.0, None)?;
            let np = semigroup_maximal(&ops, &cfg.scales, &a, Semigroup::Poisson, &[cfg.scales.aperture])?;
            let n_np = lp_norm(&np.nontangential[0].1.values, 1.0);
            let q = build_quadruple(&ops, &a, &Lattice::on_nodes(&a, times.to_vec(), times.to_vec()))?;
            let mut rows = vec![vec![
                ("row_type", "atom".into()),
                ("p", 1.0.into()),
                ("norm_a", b.norms[0].into()),
                ("norm_R1", b.norms[1].into()),
                ("norm_R2", b.norms[2].into()),
                ("norm_R12", b.norms[3].into()),
                ("bundle", b.sum().into()),
                ("norm_NP", n_np.into()),
                ("ratio", (b.sum() / n_np).into()),
                ("f_l1_sup", f_l1_sup(&q, &a).into()),
                ("worst_error", b.worst_error.into()),
                ("flagged", b.flagged.into()),
            ]];
            for (t1, t2) in SMOOTHING {
                let s = riesz_norm_bundle(&ops, &a, p_low, Some((t1, t2)))?;
                rows.push(vec![
                    ("row_type", "smoothed".into()),
                    ("p", p_low.into()),
                    ("smoothing", t1.into()),
                    ("norm_a", s.norms[0].into()),
                    ("norm_R1", s.norms[1].into()),
                    ("norm_R2", s.norms[2].into()),
                    ("norm_R12", s.norms[3].into()),
                    ("bundle", s.sum().into()),
                    ("worst_error", s.worst_error.into()),
                    ("flagged", s.flagged.into()),
                ]);
            }
            Ok(rows)
        };
        match run() {
            Ok(rows) => {
                for mut r in rows {
                    r.push(("shift", (j as f64).into()));
                    r.push(("level", (level as f64).into()));
                    table.push(r);
                }
            }
            Err(e) => {
                errors.push(format!("atom at level {level}: {e}"));
                table.push(vec![
                    ("row_type", "atom".into()),
                    ("shift", (j as f64).into()),
                    ("level", (level as f64).into()),
                    ("error", e.to_string().into()),
                ]);
            }
        }
    }
    let verdicts = vec![Verdict::evaluate(
        &table,
        "Riesz bundle over N_P band across scales",
        "ratio",
        Some(("row_type", "atom")),
        Reduce::Band,
        Cmp::Le(tol.riesz_band),
        "riesz_band",
    )];
    let fp = BTreeMap::from([
        ("lambda".into(), cfg.lambda.to_string()),
        ("nodes_2d".into(), cfg.grid.nodes_2d.to_string()),
        ("span".into(), format!("2^{}..2^{}", cfg.grid.lo_exp, cfg.grid.hi_exp)),
        ("scales".into(), format!("{:?}", cfg.scales)),
        ("atoms".into(), format!("octave squares at level {RIESZ_BASE_LEVEL}+j, j in {RIESZ_SHIFTS:?}")),
        ("riesz_depth".into(), ops.riesz_depth.to_string()),
        ("f_lattice".into(), format!("{times:?} on both axes")),
    ]);
    Ok(ExperimentReport {
        id: "E6".into(),
        title: "Riesz transform characterization on atoms".into(),
        table,
        verdicts,
        fingerprint: fp,
        errors,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// E7 atom: I = (4·2^{-3}, 5·2^{-3}] sits four lengths from the origin, so tails
/// up to 16I see the translation-like regime; J is an octave.
pub const TAIL_I: DyadicInterval = DyadicInterval { level: -3, tau: 4 };
pub const TAIL_J: DyadicInterval = DyadicInterval { level: -3, tau: 1 };
/// Axis-1 grid density relative to `nodes_2d`, needed to resolve I.
pub const TAIL_AXIS1_FACTOR: usize = 4;
pub const TAIL_DILATIONS: [f64; 4] = [2.0, 4.0, 8.0, 16.0];

/// Least-squares slope and intercept of y against x.
pub fn fit_line(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// ∫_{x₁∉γI} N_h(a)^p dμ for each γ, for the atom on I × J.
fn atom_tails(cfg: &ExperimentConfig, ops: &Operators, n1: usize, i: DyadicInterval, j: DyadicInterval) -> Result<Vec<(f64, f64)>> {
    let p = *ops.param();
    let e = cfg.exponent;
    let g1 = cfg.grid_2d(&p, n1)?;
    let g2 = cfg.grid_2d(&p, cfg.grid.nodes_2d)?;
    let a = make_rectangular_atom(&p, g1.clone(), g2, DyadicRect::new(i, j), e)?.values;
    let scales = cfg.scales.extended(HEAT_EXTENSION);
    let n = semigroup_maximal(ops, &scales, &a, Semigroup::Heat, &[cfg.scales.aperture])?;
    let nh = &n.nontangential[0].1.values.values;
    let w = a.weights();
    let (c, len) = (i.center(), i.length());
    Ok(TAIL_DILATIONS
        .iter()
        .map(|&gamma| {
            let mut tail = 0.0;
            for (k, &x1) in g1.nodes().iter().enumerate() {
                if (x1 - c).abs() > 0.5 * gamma * len {
                    tail += nh.row(k).iter().zip(w.row(k)).map(|(v, w)| v.powf(e) * w).sum::<f64>();
                }
            }
            (gamma, tail)
        })
        .collect())
}

pub fn e7_atom_tails(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let p = cfg.param()?;
    let ops = Operators::new(p);
    let tol = &cfg.tolerances;
    let mut table = Table::new(&["row_type", "atom", "gamma", "tail", "slope", "expected", "error"]);
    let mut errors = Vec::new();
    // The bound decays like γ^{-p}.
    let expected = -cfg.exponent;
    let near_origin = DyadicInterval { level: -3, tau: 1 };
    let runs = [
        ("tail", "fit", cfg.grid.nodes_2d * TAIL_AXIS1_FACTOR, TAIL_I),
        ("tail_origin", "fit_origin", cfg.grid.nodes_2d, near_origin),
    ];
    for (row, fit, n1, i) in runs {
        let label = format!("I=({},{}] J=({},{}]", i.left(), i.right(), TAIL_J.left(), TAIL_J.right());
        match atom_tails(cfg, &ops, n1, i, TAIL_J) {
            Ok(v) => {
                let mut pts = Vec::new();
                for &(gamma, tail) in &v {
                    table.push(vec![("row_type", row.into()), ("atom", label.as_str().into()), ("gamma", gamma.into()), ("tail", tail.into())]);
                    pts.push((gamma.ln(), tail.ln()));
                }
                let (slope, _) = fit_line(&pts);
                table.push(vec![("row_type", fit.into()), ("atom", label.as_str().into()), ("slope", slope.into()), ("expected", expected.into())]);
            }
            Err(err) => {
                errors.push(format!("atom tail {label}: {err}"));
                table.push(vec![("row_type", fit.into()), ("atom", label.as_str().into()), ("error", err.to_string().into())]);
            }
        }
    }
    let verdicts = vec![Verdict::evaluate(
        &table,
        "tail slope",
        "slope",
        Some(("row_type", "fit")),
        Reduce::Max,
        Cmp::Within(expected - tol.tail_slope_tol, expected + tol.tail_slope_tol),
        "tail_slope_tol",
    )];
    let fp = BTreeMap::from([
        ("lambda".into(), cfg.lambda.to_string()),
        ("exponent".into(), cfg.exponent.to_string()),
        ("nodes".into(), format!("{} x {}", cfg.grid.nodes_2d * TAIL_AXIS1_FACTOR, cfg.grid.nodes_2d)),
        ("span".into(), format!("2^{}..2^{}", cfg.grid.lo_exp, cfg.grid.hi_exp)),
        ("scales".into(), format!("{:?} extended by {HEAT_EXTENSION} octaves", cfg.scales)),
        ("atom".into(), format!("{TAIL_I:?} x {TAIL_J:?}")),
    ]);
    Ok(ExperimentReport {
        id: "E7".into(),
        title: "non-tangential heat maximal tails of an atom".into(),
        table,
        verdicts,
        fingerprint: fp,
        errors,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Tail integrals against γ with the fitted line.
pub fn e7_plot(r: &ExperimentReport) -> String {
    let series = |row: &str| -> Vec<(f64, f64)> {
        let f = ("row_type".to_string(), row.to_string());
        let g = r.table.values("gamma", Some(&f));
        let t = r.table.values("tail", Some(&f));
        g.iter().zip(&t).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect()
    };
    let pts = series("tail");
    let logs: Vec<(f64, f64)> = pts.iter().filter(|p| p.1 > 0.0).map(|p| (p.0.log10(), p.1.log10())).collect();
    let fit = (logs.len() >= 2).then(|| fit_line(&logs));
    loglog_svg("tail of N_h(a) outside gamma I", &[("off origin", pts), ("near origin", series("tail_origin"))], fit)
}
