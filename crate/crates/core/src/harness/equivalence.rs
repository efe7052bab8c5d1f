//! E1: the chain of square, area and maximal function norms over a corpus.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::report::{loglog_svg, Cell, Cmp, ExperimentReport, Reduce, Table, Verdict};
use crate::atoms::{corpus, CorpusItem};
use crate::error::Result;
use crate::geometry::{BesselParam, DyadicConfig};
use crate::lp_analysis::{discrete_square_function, littlewood_paley, ScaleSet, Want};
use crate::maximal::semigroup_maximal;
use crate::operators::{lp_norm, Operators, SampledFunction2D, Semigroup};

/// Norm labels in column order; the last one is reported but not banded.
pub const NORMS: [&str; 8] = ["S", "Su", "NP", "RP", "Nh", "Rh", "Sd", "g"];
const BANDED: usize = 7;
/// (smaller, larger) pairs of the exact pointwise dominations.
pub const DOMINATIONS: [(&str, &str); 4] = [("S", "Su"), ("RP", "NP"), ("Rh", "Nh"), ("RP", "Rh")];
/// Octaves added on each side of the heat lattice so that it brackets the
/// heat times that dominate each Poisson time.
pub const HEAT_EXTENSION: i32 = 2;
/// Values of N₁ = N₂ at which the S_d norm is recorded.
pub const SD_REFINEMENTS: [u32; 3] = [1, 2, 3];

pub fn pairs() -> Vec<(usize, usize)> {
    (0..BANDED).flat_map(|a| (a + 1..BANDED).map(move |b| (a, b))).collect()
}

pub fn ratio_column(a: usize, b: usize) -> String {
    format!("ratio_{}_{}", NORMS[a], NORMS[b])
}

/// Norms, domination violations and lattice-boundary shares for one function.
#[derive(Clone, Debug)]
pub struct ChainNorms {
    pub norms: [f64; 8],
    /// max over nodes of (smaller − larger)/‖f‖∞, floored at 0, per domination.
    pub violations: [f64; 4],
    /// Share of nodes whose N_P, N_h sup sits on a lattice end.
    pub boundary: [f64; 2],
}

pub struct ChainSetup<'a> {
    pub ops: &'a Operators,
    pub scales: &'a ScaleSet,
    pub dyadic: &'a DyadicConfig,
    pub exponent: f64,
}

pub fn chain_norms(c: &ChainSetup, f: &SampledFunction2D) -> Result<ChainNorms> {
    let ops = c.ops;
    let lp = littlewood_paley(ops, c.scales, f, Semigroup::Poisson, Want { g: true, s: true, su: true })?;
    let (g, s, su) = (lp.g.unwrap(), lp.s.unwrap(), lp.su.unwrap());
    let a = c.scales.aperture;
    let mp = semigroup_maximal(ops, c.scales, f, Semigroup::Poisson, &[a])?;
    let mh = semigroup_maximal(ops, &c.scales.extended(HEAT_EXTENSION), f, Semigroup::Heat, &[a])?;
    let sd = discrete_square_function(ops, c.dyadic, f)?;
    let (np, rp) = (&mp.nontangential[0].1.values, &mp.radial.values);
    let (nh, rh) = (&mh.nontangential[0].1.values, &mh.radial.values);
    let fields = [&s, &su, np, rp, nh, rh, &sd, &g];
    let p = c.exponent;
    let norms = fields.map(|h| lp_norm(h, p));
    let scale = f.sup_norm().max(f64::MIN_POSITIVE);
    let field = |name: &str| fields[NORMS.iter().position(|n| *n == name).unwrap()];
    let violations = DOMINATIONS.map(|(lo, hi)| {
        let (l, h) = (field(lo), field(hi));
        l.values.iter().zip(&h.values).fold(0.0f64, |m, (a, b)| m.max((a - b) / scale))
    });
    let boundary = [mp.nontangential[0].1.boundary_fraction(), mh.nontangential[0].1.boundary_fraction()];
    Ok(ChainNorms { norms, violations, boundary })
}

fn columns() -> Vec<String> {
    let mut c: Vec<String> = ["row_type", "lambda", "nodes", "index", "kind", "label"].map(String::from).to_vec();
    c.extend(NORMS.iter().map(|n| format!("norm_{n}")));
    c.extend(pairs().into_iter().map(|(a, b)| ratio_column(a, b)));
    c.extend(DOMINATIONS.iter().map(|(a, b)| format!("viol_{a}_{b}")));
    c.extend(["boundary_NP", "boundary_Nh", "pair", "band", "band_refined", "drift", "n_dyadic", "sd_change", "error"].map(String::from));
    c
}

struct Run {
    lambda: f64,
    nodes: usize,
    results: Vec<(usize, String, String, Result<ChainNorms>)>,
}

impl Run {
    fn band(&self, a: usize, b: usize) -> f64 {
        let r: Vec<f64> = self
            .results
            .iter()
            .map(|(_, _, _, res)| res.as_ref().map(|n| n.norms[a] / n.norms[b]).unwrap_or(f64::NAN))
            .collect();
        if r.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return f64::NAN;
        }
        r.iter().copied().fold(f64::NEG_INFINITY, f64::max) / r.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn run_corpus(cfg: &ExperimentConfig, p: BesselParam, nodes: usize, scales: &ScaleSet, count: usize) -> Result<Run> {
    let ops = Operators::new(p);
    let g = cfg.grid_2d(&p, nodes)?;
    let items: Vec<CorpusItem> = corpus(&p, g.clone(), Arc::clone(&g), cfg.corpus.seed, count, cfg.exponent)?;
    let setup = ChainSetup { ops: &ops, scales, dyadic: &cfg.dyadic, exponent: cfg.exponent };
    let results = items
        .par_iter()
        .map(|it| (it.index, format!("{:?}", it.kind).to_lowercase(), it.label.clone(), chain_norms(&setup, &it.function)))
        .collect();
    Ok(Run { lambda: p.lambda, nodes, results })
}

fn push_rows(t: &mut Table, run: &Run, row_type: &str, errors: &mut Vec<String>) {
    for (index, kind, label, res) in &run.results {
        let mut cells: Vec<(String, Cell)> = vec![
            ("row_type".into(), row_type.into()),
            ("lambda".into(), run.lambda.into()),
            ("nodes".into(), run.nodes.into()),
            ("index".into(), (*index).into()),
            ("kind".into(), kind.as_str().into()),
            ("label".into(), label.as_str().into()),
        ];
        match res {
            Ok(n) => {
                cells.extend(NORMS.iter().zip(n.norms).map(|(k, v)| (format!("norm_{k}"), v.into())));
                cells.extend(pairs().into_iter().map(|(a, b)| (ratio_column(a, b), (n.norms[a] / n.norms[b]).into())));
                cells.extend(DOMINATIONS.iter().zip(n.violations).map(|((a, b), v)| (format!("viol_{a}_{b}"), v.into())));
                cells.push(("boundary_NP".into(), n.boundary[0].into()));
                cells.push(("boundary_Nh".into(), n.boundary[1].into()));
            }
            Err(e) => {
                errors.push(format!("{row_type} λ={} function {index}: {e}", run.lambda));
                cells.push(("error".into(), e.to_string().into()));
            }
        }
        t.push(cells.iter().map(|(k, v)| (k.as_str(), v.clone())).collect());
    }
}

pub fn e1_equivalence_chain(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let p = cfg.param()?;
    let cols = columns();
    let mut table = Table::new(&cols.iter().map(String::as_str).collect::<Vec<_>>());
    let mut errors = Vec::new();

    let mut phases = Vec::new();
    let base = run_corpus(cfg, p, cfg.grid.nodes_2d, &cfg.scales, cfg.corpus.count)?;
    push_rows(&mut table, &base, "function", &mut errors);
    phases.push(("base_wall_clock_s", start.elapsed().as_secs_f64()));
    let refined = if cfg.refinement {
        let r = run_corpus(cfg, p, 2 * cfg.grid.nodes_2d, &cfg.scales.extended(1), cfg.corpus.count)?;
        push_rows(&mut table, &r, "refined", &mut errors);
        phases.push(("refined_wall_clock_s", start.elapsed().as_secs_f64()));
        Some(r)
    } else {
        None
    };
    for (a, b) in pairs() {
        let band = base.band(a, b);
        let mut cells = vec![("row_type", "band".into()), ("pair", ratio_column(a, b).into()), ("band", band.into())];
        if let Some(r) = &refined {
            let br = r.band(a, b);
            cells.push(("band_refined", br.into()));
            cells.push(("drift", (br / band - 1.0).abs().into()));
        }
        table.push(cells);
    }
    for &l in &cfg.sweep.lambdas {
        let q = BesselParam::new(l)?;
        let exponent = cfg.exponent.max(0.5 * (q.hardy_lower() + 1.0));
        let sub = ExperimentConfig { exponent, ..cfg.clone() };
        let run = run_corpus(&sub, q, cfg.sweep.nodes_2d, &cfg.scales, cfg.sweep.count)?;
        push_rows(&mut table, &run, "sweep", &mut errors);
        for (a, b) in pairs() {
            table.push(vec![
                ("row_type", "sweep_band".into()),
                ("lambda", l.into()),
                ("pair", ratio_column(a, b).into()),
                ("band", run.band(a, b).into()),
            ]);
        }
    }

    sd_sensitivity(cfg, p, &mut table)?;

    let tol = &cfg.tolerances;
    let mut verdicts = Vec::new();
    for (a, b) in DOMINATIONS {
        let col = format!("viol_{a}_{b}");
        verdicts.push(Verdict::evaluate(
            &table,
            &format!("{a} <= {b}"),
            &col,
            Some(("row_type", "function")),
            Reduce::Max,
            Cmp::Le(tol.domination_slack),
            "domination_slack",
        ));
    }
    for (a, b) in pairs() {
        let col = ratio_column(a, b);
        verdicts.push(Verdict::evaluate(
            &table,
            &format!("band {}/{}", NORMS[a], NORMS[b]),
            &col,
            Some(("row_type", "function")),
            Reduce::Band,
            Cmp::Le(tol.ratio_band),
            "ratio_band",
        ));
    }
    if refined.is_some() {
        verdicts.push(Verdict::evaluate(
            &table,
            "band drift under refinement",
            "drift",
            Some(("row_type", "band")),
            Reduce::Max,
            Cmp::Le(tol.refinement_drift),
            "refinement_drift",
        ));
    }

    let mut fingerprint = BTreeMap::from([
        ("lambda".into(), cfg.lambda.to_string()),
        ("exponent".into(), cfg.exponent.to_string()),
        ("nodes_2d".into(), cfg.grid.nodes_2d.to_string()),
        ("span".into(), format!("2^{}..2^{}", cfg.grid.lo_exp, cfg.grid.hi_exp)),
        ("scales".into(), format!("{:?}", cfg.scales)),
        ("heat_extension_octaves".into(), HEAT_EXTENSION.to_string()),
        ("dyadic".into(), format!("{:?}", cfg.dyadic)),
        ("corpus".into(), format!("seed {} count {}", cfg.corpus.seed, cfg.corpus.count)),
        ("refinement".into(), cfg.refinement.to_string()),
    ]);
    // Cumulative elapsed time at the end of each phase.
    for (k, v) in phases {
        fingerprint.insert(k.into(), format!("{v:.3}"));
    }
    Ok(ExperimentReport {
        id: "E1".into(),
        title: "equivalence chain of square, area and maximal norms".into(),
        table,
        verdicts,
        fingerprint,
        errors,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

/// Recorded only: ‖S_d f‖ for each N₁ = N₂ in `SD_REFINEMENTS` on the sweep
/// grid, relative to the configured (N₁, N₂).
fn sd_sensitivity(cfg: &ExperimentConfig, p: BesselParam, table: &mut Table) -> Result<()> {
    let ops = Operators::new(p);
    let g = cfg.grid_2d(&p, cfg.sweep.nodes_2d)?;
    let items = corpus(&p, g.clone(), Arc::clone(&g), cfg.corpus.seed, cfg.sweep.count, cfg.exponent)?;
    let norm = |d: &DyadicConfig, f: &SampledFunction2D| -> Result<f64> {
        Ok(lp_norm(&discrete_square_function(&ops, d, f)?, cfg.exponent))
    };
    for it in &items {
        let reference = norm(&cfg.dyadic, &it.function)?;
        for n in SD_REFINEMENTS {
            let d = DyadicConfig { n1: n, n2: n, ..cfg.dyadic };
            let v = norm(&d, &it.function)?;
            table.push(vec![
                ("row_type", "sd_sensitivity".into()),
                ("lambda", p.lambda.into()),
                ("nodes", cfg.sweep.nodes_2d.into()),
                ("index", it.index.into()),
                ("kind", format!("{:?}", it.kind).to_lowercase().into()),
                ("n_dyadic", (n as usize).into()),
                ("norm_Sd", v.into()),
                ("sd_change", (v / reference - 1.0).into()),
            ]);
        }
    }
    Ok(())
}

/// Every norm against ‖S f‖ per base corpus function.
pub fn e1_plot(r: &ExperimentReport) -> String {
    let s = r.table.values("norm_S", Some(&("row_type".into(), "function".into())));
    let series: Vec<(&str, Vec<(f64, f64)>)> = NORMS[1..]
        .iter()
        .map(|n| {
            let v = r.table.values(&format!("norm_{n}"), Some(&("row_type".into(), "function".into())));
            let pts = s.iter().zip(&v).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
            (*n, pts)
        })
        .collect();
    loglog_svg("norms against ||S f||", &series, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_banded_pair_once() {
        let p = pairs();
        assert_eq!(p.len(), BANDED * (BANDED - 1) / 2);
        assert!(p.iter().all(|&(a, b)| a < b && b < BANDED));
    }

    #[test]
    fn sd_sensitivity_is_relative_to_the_configured_refinement() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.nodes_2d = 64;
        cfg.sweep.count = 2;
        cfg.dyadic = DyadicConfig::new(-2, 2, 2, 2).unwrap();
        let mut t = Table::new(&columns().iter().map(String::as_str).collect::<Vec<_>>());
        sd_sensitivity(&cfg, cfg.param().unwrap(), &mut t).unwrap();
        let f = Some(("row_type".to_string(), "sd_sensitivity".to_string()));
        let n = t.values("n_dyadic", f.as_ref());
        let change = t.values("sd_change", f.as_ref());
        let norm = t.values("norm_Sd", f.as_ref());
        assert_eq!(n.len(), 2 * SD_REFINEMENTS.len());
        for ((n, c), v) in n.iter().zip(&change).zip(&norm) {
            let (n, c, v) = (n.unwrap(), c.unwrap(), v.unwrap());
            assert!(v > 0.0 && c.is_finite());
            if n == 2.0 {
                assert_eq!(c, 0.0);
            }
        }
    }
}
