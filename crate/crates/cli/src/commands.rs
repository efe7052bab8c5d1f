//! Subcommand bodies. Each returns the process exit code or an error that
//! `main` maps to one.

use std::path::{Path, PathBuf};

use hardy_bessel::geometry::BesselParam;
use hardy_bessel::harness::{self, ExperimentConfig, ExperimentReport};
use hardy_bessel::io::{format_function_1d, format_function_2d, read_function, write_text, Sampled};
use hardy_bessel::kernels::{KernelKind, Kernels};
use hardy_bessel::lp_analysis::{discrete_square_function, littlewood_paley, Want};
use hardy_bessel::maximal::semigroup_maximal;
use hardy_bessel::operators::{lp_norm, Op, Operators, SampledFunction2D};
use hardy_bessel::{Error, Result};

use crate::args::{
    Axis, ExperimentArgs, Functional, KernelArgs, KernelChoice, LpArgs, MaximalArgs, MaximalKind, ReportArgs, ScaleArgs,
    TransformArgs, TransformOp, OUTPUT_DIR_ENV,
};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Usage, input and configuration problems exit with 2; numerical failures with 1.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Resolution(_) | Error::NonFinite { .. } | Error::InsufficientLattice(_) => EXIT_FAIL,
        _ => EXIT_USAGE,
    }
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    }
}

fn rule_description(kind: KernelKind) -> &'static str {
    match kind {
        KernelKind::Poisson | KernelKind::ConjPoisson | KernelKind::Heat => {
            "angular integral in v = 1 - cos(theta) on geometrically graded panels, order-10 Gauss-Jacobi end panels and Gauss-Legendre interior panels"
        }
        KernelKind::Psi => {
            "order-64 Gauss-Legendre in w on pieces split at y and t - y, graded angular panels inside"
        }
        KernelKind::Triangle => "closed form via Kahan's triangle area",
    }
}

pub fn kernel(a: &KernelArgs) -> Result<u8> {
    let kind = match a.kind {
        KernelChoice::Poisson => KernelKind::Poisson,
        KernelChoice::ConjPoisson => KernelKind::ConjPoisson,
        KernelChoice::Heat => KernelKind::Heat,
        KernelChoice::Psi => KernelKind::Psi,
        KernelChoice::Triangle => KernelKind::Triangle,
    };
    let k = Kernels::new(BesselParam::new(a.lambda)?);
    let v = k.evaluate(kind, a.t, a.x, a.y)?;
    println!("{:e}", v.value);
    println!("# rule: {}", rule_description(kind));
    Ok(EXIT_PASS)
}

fn read_input(path: &Path, lambda: Option<f64>) -> Result<Sampled> {
    read_function(path, lambda).map_err(|e| with_path(path, e))
}

fn emit(output: Option<&PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn transform(a: &TransformArgs) -> Result<u8> {
    let need_t = || a.t.ok_or_else(|| Error::InvalidParameter(format!("--t is required for {:?}", a.op)));
    let op = match a.op {
        TransformOp::Identity => Op::Identity,
        TransformOp::Riesz => Op::Riesz,
        TransformOp::Poisson => Op::Poisson(need_t()?),
        TransformOp::ConjPoisson => Op::ConjPoisson(need_t()?),
        TransformOp::Heat => Op::Heat(need_t()?),
        TransformOp::Bump => Op::BumpConvolution(need_t()?),
        TransformOp::Psi => Op::Psi(need_t()?),
    };
    if let Some(t) = a.t {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("--t must be positive, got {t}")));
        }
    }
    let input = read_input(&a.input, a.lambda)?;
    let ops = Operators::new(BesselParam::new(input.lambda())?);
    let text = match input {
        Sampled::One(f) => format_function_1d(&ops.apply(&op, &f)?),
        Sampled::Two(f) => {
            let (o1, o2) = match a.axis {
                Axis::First => (op, Op::Identity),
                Axis::Second => (Op::Identity, op),
                Axis::Both => (op.clone(), op),
            };
            format_function_2d(&ops.tensor_apply(&o1, &o2, &f)?)
        }
    };
    emit(a.output.as_ref(), &text)?;
    Ok(EXIT_PASS)
}

struct Prepared {
    ops: Operators,
    cfg: ExperimentConfig,
    f: SampledFunction2D,
}

fn prepare(c: &ScaleArgs) -> Result<Prepared> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| with_path(p, e))?,
        None => ExperimentConfig::default(),
    };
    cfg.scales = c.apply(cfg.scales.clone());
    cfg.scales.validate()?;
    if let Some(v) = c.k_min {
        cfg.dyadic.k_min = v;
    }
    if let Some(v) = c.k_max {
        cfg.dyadic.k_max = v;
    }
    if !(c.p > 0.0 && c.p.is_finite()) {
        return Err(Error::InvalidParameter(format!("--p must be positive, got {}", c.p)));
    }
    let Sampled::Two(f) = read_input(&c.input, c.lambda)? else {
        return Err(Error::InvalidParameter(format!("{}: a 2D function file is required", c.input.display())));
    };
    let ops = Operators::new(BesselParam::new(f.grid1.lambda())?);
    Ok(Prepared { ops, cfg, f })
}

fn finish(c: &ScaleArgs, out: &SampledFunction2D) -> Result<()> {
    println!("norm {:e}", lp_norm(out, c.p));
    if let Some(p) = &c.output {
        write_text(p, &format_function_2d(out))?;
    }
    Ok(())
}

pub fn lp(a: &LpArgs) -> Result<u8> {
    let Prepared { ops, cfg, f } = prepare(&a.common)?;
    let semigroup = a.semigroup.into();
    let out = match a.functional {
        Functional::Sd => discrete_square_function(&ops, &cfg.dyadic, &f)?,
        which => {
            let want = Want { g: which == Functional::G, s: which == Functional::S, su: which == Functional::Su };
            let r = littlewood_paley(&ops, &cfg.scales, &f, semigroup, want)?;
            [r.g, r.s, r.su].into_iter().flatten().next().expect("requested functional")
        }
    };
    finish(&a.common, &out)?;
    Ok(EXIT_PASS)
}

pub fn maximal(a: &MaximalArgs) -> Result<u8> {
    let Prepared { ops, cfg, f } = prepare(&a.common)?;
    let apertures = match a.kind {
        MaximalKind::Radial => vec![],
        MaximalKind::Nontangential => vec![cfg.scales.aperture],
    };
    let mut set = semigroup_maximal(&ops, &cfg.scales, &f, a.semigroup.into(), &apertures)?;
    let r = match a.kind {
        MaximalKind::Radial => set.radial,
        MaximalKind::Nontangential => set.nontangential.remove(0).1,
    };
    finish(&a.common, &r.values)?;
    println!("boundary_fraction {:e}", r.boundary_fraction());
    Ok(EXIT_PASS)
}

fn experiment_ids(id: &str) -> Result<Vec<String>> {
    if id.eq_ignore_ascii_case("all") {
        return Ok(harness::EXPERIMENTS.iter().map(|s| s.to_string()).collect());
    }
    let up = id.to_uppercase();
    if !harness::EXPERIMENTS.contains(&up.as_str()) {
        return Err(Error::InvalidParameter(format!("unknown experiment '{id}' (expected E1..E7 or all)")));
    }
    Ok(vec![up])
}

pub fn experiment(a: &ExperimentArgs) -> Result<u8> {
    let ids = experiment_ids(&a.id)?;
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| with_path(p, e))?,
        None => ExperimentConfig::default(),
    };
    a.overrides.apply(&mut cfg, std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from));
    cfg.validate()?;
    let mut all = true;
    for id in ids {
        let r = harness::run(&id, &cfg)?;
        print!("{}", r.render());
        for p in r.write(&cfg.output_dir, harness::plot(&r))? {
            println!("  wrote {}", p.display());
        }
        all &= r.passed();
    }
    Ok(if all { EXIT_PASS } else { EXIT_FAIL })
}

fn found_ids(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let stem = name.strip_suffix(".json")?.to_uppercase();
            harness::EXPERIMENTS.contains(&stem.as_str()).then_some(stem)
        })
        .collect();
    ids.sort();
    Ok(ids)
}

pub fn report(a: &ReportArgs) -> Result<u8> {
    let ids = if a.ids.is_empty() {
        found_ids(&a.dir)?
    } else {
        a.ids.iter().map(|i| experiment_ids(i)).collect::<Result<Vec<_>>>()?.concat()
    };
    if ids.is_empty() {
        return Err(Error::Io(format!("{}: no experiment reports found", a.dir.display())));
    }
    let mut ok = true;
    for id in ids {
        let r = ExperimentReport::read(&a.dir, &id)?;
        print!("{}", r.render());
        let stale: Vec<&str> = r.verdicts.iter().filter(|v| !v.consistent_with(&r.table)).map(|v| v.name.as_str()).collect();
        let consistent = stale.is_empty();
        if consistent {
            println!("  verdicts recomputed from {} rows: consistent", r.table.rows.len());
        } else {
            println!("  verdicts recomputed from {} rows: MISMATCH in {}", r.table.rows.len(), stale.join(", "));
        }
        ok &= consistent && r.passed();
    }
    Ok(if ok { EXIT_PASS } else { EXIT_FAIL })
}
