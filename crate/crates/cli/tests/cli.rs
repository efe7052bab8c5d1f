use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::time::Instant;

use hardy_bessel::geometry::{make_log_grid, BesselParam};
use hardy_bessel::io::{format_function_1d, format_function_2d, parse_function, Sampled};
use hardy_bessel::operators::{SampledFunction1D, SampledFunction2D};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hardy-bessel"));
    c.env_remove("HARDY_BESSEL_OUTPUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("hb-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn first_number(text: &str) -> f64 {
    text.lines().next().unwrap().parse().unwrap()
}

fn named(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in {text}"));
    line[key.len()..].trim().parse().unwrap()
}

fn bump_file(dir: &Path, nodes: usize) -> PathBuf {
    let p = BesselParam::new(1.0).unwrap();
    let g = Arc::new(make_log_grid(&p, (2f64.powi(-4), 2f64.powi(4)), nodes).unwrap());
    let bump = |x: f64, c: f64| {
        let r = (x - c) / 0.5;
        if r.abs() < 1.0 { (1.0 - r * r).powi(4) } else { 0.0 }
    };
    let f = SampledFunction2D::from_fn(g.clone(), g, |x, y| (bump(x, 1.0) - bump(x, 2.2)) * (bump(y, 1.0) - bump(y, 2.2)));
    let path = dir.join("bump.txt");
    std::fs::write(&path, format_function_2d(&f)).unwrap();
    path
}

#[test]
fn poisson_kernel_value_is_positive_and_reproducible() {
    let args = ["kernel", "--kind", "poisson", "--lambda", "1", "--t", "1", "--x", "2", "--y", "2"];
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a.status.code(), Some(0));
    let v = first_number(&stdout(&a));
    assert!(v > 0.0 && v.is_finite());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).contains("# rule:"));
}

#[test]
fn psi_kernel_vanishes_off_its_support() {
    let o = run(&["kernel", "--kind", "psi", "--lambda", "1", "--t", "1", "--x", "5", "--y", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(first_number(&stdout(&o)).abs() <= 1e-10);
    let inside = run(&["kernel", "--kind", "psi", "--lambda", "1", "--t", "1", "--x", "1.5", "--y", "1"]);
    assert!(first_number(&stdout(&inside)).abs() > 1e-3);
}

#[test]
fn usage_errors_exit_with_two() {
    let missing = run(&["kernel", "--kind", "poisson", "--lambda", "1", "--t", "1", "--x", "2"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("Usage"));
    assert!(missing.stdout.is_empty());
    let bad_kind = run(&["kernel", "--kind", "gauss", "--lambda", "1", "--t", "1", "--x", "2", "--y", "1"]);
    assert_eq!(bad_kind.status.code(), Some(2));
    let bad_value = run(&["kernel", "--kind", "heat", "--lambda", "1", "--t", "-1", "--x", "2", "--y", "1"]);
    assert_eq!(bad_value.status.code(), Some(2));
    assert_eq!(run(&["experiment", "E9"]).status.code(), Some(2));
    assert_eq!(run(&["experiment", "E1", "--count", "0"]).status.code(), Some(2));
    assert_eq!(run(&["--threads", "0", "experiment", "E4"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_config_reports_its_line() {
    let d = scratch("config");
    let cfg = d.join("bad.toml");
    std::fs::write(&cfg, "lambda = 1.0\n[corpus]\nseed = \"seven\"\n").unwrap();
    let o = run(&["experiment", "E4", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn identity_transform_round_trips() {
    let d = scratch("identity");
    let input = bump_file(&d, 24);
    let out = d.join("out.txt");
    let o = run(&["transform", "--op", "identity", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(&input).unwrap(), std::fs::read_to_string(&out).unwrap());
}

#[test]
fn poisson_of_ones_is_one_in_the_interior() {
    let d = scratch("ones");
    let p = BesselParam::new(1.0).unwrap();
    // The Poisson tail beyond the grid end R carries mass of order t/R.
    let g = Arc::new(make_log_grid(&p, (2f64.powi(-6), 2f64.powi(12)), 384).unwrap());
    let input = d.join("ones.txt");
    std::fs::write(&input, format_function_1d(&SampledFunction1D::from_fn(g, |_| 1.0))).unwrap();
    let o = run(&["transform", "--op", "poisson", "--t", "0.05", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let Sampled::One(u) = parse_function(&stdout(&o), None).unwrap() else { panic!("1D output expected") };
    let worst = u
        .grid
        .nodes()
        .iter()
        .zip(&u.values)
        .filter(|(x, _)| **x > 0.05 && **x < 4.0)
        .map(|(_, v)| (v - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "interior deviation {worst}");
}

#[test]
fn malformed_function_file_reports_its_line() {
    let d = scratch("malformed");
    let input = d.join("bad.txt");
    std::fs::write(&input, "# lambda 1\n0.5 0.5 1\n0.5 1.0 oops\n").unwrap();
    let o = run(&["transform", "--op", "heat", "--t", "0.1", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    let no_t = run(&["transform", "--op", "heat", "--input", input.to_str().unwrap()]);
    assert_eq!(no_t.status.code(), Some(2));
}

#[test]
fn square_and_maximal_functions_of_a_file() {
    let d = scratch("lp");
    let input = bump_file(&d, 32);
    let inp = input.to_str().unwrap();
    let scale = ["--k-min", "-3", "--k-max", "3", "--per-octave", "1"];
    let s_out = d.join("s.txt");
    let mut args = vec!["lp", "--functional", "s", "--input", inp, "--output", s_out.to_str().unwrap()];
    args.extend(scale);
    let s = run(&args);
    assert_eq!(s.status.code(), Some(0), "{}", stderr(&s));
    let s_norm = named(&stdout(&s), "norm");
    assert!(s_norm > 0.0);
    assert!(matches!(parse_function(&std::fs::read_to_string(&s_out).unwrap(), None).unwrap(), Sampled::Two(_)));
    let mut args = vec!["lp", "--functional", "su", "--input", inp];
    args.extend(scale);
    let su_norm = named(&stdout(&run(&args)), "norm");
    assert!(su_norm >= s_norm * (1.0 - 1e-12));

    let norm_of = |kind: &str| {
        let mut args = vec!["maximal", "--kind", kind, "--semigroup", "heat", "--input", inp];
        args.extend(scale);
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        named(&stdout(&o), "norm")
    };
    let (r, n) = (norm_of("radial"), norm_of("nontangential"));
    assert!(r > 0.0 && n >= r * (1.0 - 1e-12), "radial {r}, non-tangential {n}");
}

#[test]
fn semigroup_experiment_passes_and_its_report_rechecks() {
    let d = scratch("e2");
    let start = Instant::now();
    let o = run(&["--threads", "1", "experiment", "E2", "--output-dir", d.to_str().unwrap()]);
    let secs = start.elapsed().as_secs_f64();
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(secs < 60.0, "E2 took {secs} s");
    for ext in ["csv", "json"] {
        assert!(d.join(format!("e2.{ext}")).exists());
    }
    let dir = d.to_str().unwrap();
    let r = run(&["report", "--dir", dir]);
    assert_eq!(r.status.code(), Some(0), "{}", stdout(&r));
    assert!(stdout(&r).contains("consistent"));

    // A tampered row no longer reproduces the stored verdicts.
    let csv = d.join("e2.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let k = lines.iter().position(|l| l.starts_with("conservation")).unwrap();
    let mut cells: Vec<String> = lines[k].split(',').map(str::to_string).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let c = header.iter().position(|h| *h == "value").unwrap();
    cells[c] = "1e3".into();
    lines[k] = cells.join(",");
    std::fs::write(&csv, lines.join("\n") + "\n").unwrap();
    let r = run(&["report", "--dir", dir, "E2"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(stdout(&r).contains("MISMATCH"));
    assert_eq!(run(&["report", "--dir", d.join("none").to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn output_dir_comes_from_the_environment_unless_flagged() {
    let d = scratch("env");
    let (env_dir, flag_dir) = (d.join("env"), d.join("flag"));
    let o = bin().args(["experiment", "E4"]).env("HARDY_BESSEL_OUTPUT_DIR", &env_dir).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(env_dir.join("e4.json").exists());
    let o = bin()
        .args(["experiment", "e4", "--output-dir", flag_dir.to_str().unwrap()])
        .env("HARDY_BESSEL_OUTPUT_DIR", &env_dir)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(flag_dir.join("e4.json").exists());
}
