//! Command-line grammar and the override layer on top of config files.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hardy_bessel::harness::ExperimentConfig;
use hardy_bessel::lp_analysis::ScaleSet;
use hardy_bessel::operators::Semigroup;

/// Environment variable that overrides the configured report directory.
pub const OUTPUT_DIR_ENV: &str = "HARDY_BESSEL_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "hardy-bessel", version, about = "Bessel-operator harmonic analysis toolkit")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one kernel value.
    Kernel(KernelArgs),
    /// Apply a one-dimensional operator to a function file (on both axes for 2D files).
    Transform(TransformArgs),
    /// Littlewood-Paley square functions of a 2D function file.
    Lp(LpArgs),
    /// Radial or non-tangential maximal function of a 2D function file.
    Maximal(MaximalArgs),
    /// Run named experiments and write their reports.
    Experiment(ExperimentArgs),
    /// Re-read written reports and recheck every verdict against its rows.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KernelChoice {
    Poisson,
    ConjPoisson,
    Heat,
    Psi,
    Triangle,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long, value_enum)]
    pub kind: KernelChoice,
    #[arg(long)]
    pub lambda: f64,
    /// Poisson time, heat time s, ψ scale, or the third side z for `triangle`.
    #[arg(long)]
    pub t: f64,
    #[arg(long)]
    pub x: f64,
    #[arg(long)]
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TransformOp {
    Identity,
    Poisson,
    ConjPoisson,
    /// e^{−tΔ} with t the heat time.
    Heat,
    Bump,
    Psi,
    Riesz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    #[value(name = "1")]
    First,
    #[value(name = "2")]
    Second,
    Both,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long, value_enum)]
    pub op: TransformOp,
    /// Operator scale; unused by `identity` and `riesz`.
    #[arg(long)]
    pub t: Option<f64>,
    /// Overrides the `# lambda` header of the input.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub input: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Axes of a 2D input the operator acts on.
    #[arg(long, value_enum, default_value = "both")]
    pub axis: Axis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SemigroupChoice {
    Poisson,
    Heat,
}

impl From<SemigroupChoice> for Semigroup {
    fn from(s: SemigroupChoice) -> Self {
        match s {
            SemigroupChoice::Poisson => Semigroup::Poisson,
            SemigroupChoice::Heat => Semigroup::Heat,
        }
    }
}

/// Scale-lattice flags shared by `lp` and `maximal`.
#[derive(Debug, Args)]
pub struct ScaleArgs {
    /// Config file supplying scales and dyadic settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub k_min: Option<i32>,
    #[arg(long, allow_hyphen_values = true)]
    pub k_max: Option<i32>,
    #[arg(long)]
    pub per_octave: Option<u32>,
    #[arg(long)]
    pub aperture: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Exponent of the printed L^p norm.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long)]
    pub input: PathBuf,
    /// Write the computed function here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl ScaleArgs {
    pub fn apply(&self, mut s: ScaleSet) -> ScaleSet {
        if let Some(v) = self.k_min {
            s.k_min = v;
        }
        if let Some(v) = self.k_max {
            s.k_max = v;
        }
        if let Some(v) = self.per_octave {
            s.per_octave = v;
        }
        if let Some(v) = self.aperture {
            s.aperture = v;
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Functional {
    G,
    S,
    Su,
    Sd,
}

#[derive(Debug, Args)]
pub struct LpArgs {
    #[arg(long, value_enum, default_value = "s")]
    pub functional: Functional,
    #[arg(long, value_enum, default_value = "poisson")]
    pub semigroup: SemigroupChoice,
    #[command(flatten)]
    pub common: ScaleArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MaximalKind {
    Radial,
    Nontangential,
}

#[derive(Debug, Args)]
pub struct MaximalArgs {
    #[arg(long, value_enum, default_value = "nontangential")]
    pub kind: MaximalKind,
    #[arg(long, value_enum, default_value = "poisson")]
    pub semigroup: SemigroupChoice,
    #[command(flatten)]
    pub common: ScaleArgs,
}

/// Values that win over the config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub lambda: Option<f64>,
    /// 2D grid nodes per axis.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub nodes_1d: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub k_min: Option<i32>,
    #[arg(long, allow_hyphen_values = true)]
    pub k_max: Option<i32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub count: Option<usize>,
    /// Hardy exponent p.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Skip the E1 refinement pass.
    #[arg(long)]
    pub no_refinement: bool,
    /// Skip the recorded λ sweep in E1.
    #[arg(long)]
    pub no_sweep: bool,
}

impl Overrides {
    /// Layer flags over `cfg`; `env_dir` sits between the file and the flag.
    pub fn apply(&self, cfg: &mut ExperimentConfig, env_dir: Option<PathBuf>) {
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.nodes {
            cfg.grid.nodes_2d = v;
        }
        if let Some(v) = self.nodes_1d {
            cfg.grid.nodes_1d = v;
        }
        if let Some(v) = self.k_min {
            cfg.scales.k_min = v;
            cfg.dyadic.k_min = v;
        }
        if let Some(v) = self.k_max {
            cfg.scales.k_max = v;
            cfg.dyadic.k_max = v;
        }
        if let Some(v) = self.seed {
            cfg.corpus.seed = v;
        }
        if let Some(v) = self.count {
            cfg.corpus.count = v;
        }
        if let Some(v) = self.p {
            cfg.exponent = v;
        }
        if let Some(d) = env_dir {
            cfg.output_dir = d;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if self.no_refinement {
            cfg.refinement = false;
        }
        if self.no_sweep {
            cfg.sweep.lambdas.clear();
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// E1 through E7, or `all`.
    pub id: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report directory.
    #[arg(long, default_value = "reports")]
    pub dir: PathBuf,
    /// Experiments to check; every report found in the directory when empty.
    pub ids: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_env_and_file() {
        let mut cfg = ExperimentConfig::from_toml("lambda = 2.0\noutput_dir = \"file\"\n[corpus]\nseed = 3\n").unwrap();
        let o = Overrides { seed: Some(11), output_dir: Some("flag".into()), ..Default::default() };
        o.apply(&mut cfg, Some("env".into()));
        assert_eq!((cfg.lambda, cfg.corpus.seed), (2.0, 11));
        assert_eq!(cfg.output_dir, PathBuf::from("flag"));
        let mut cfg = ExperimentConfig::default();
        Overrides::default().apply(&mut cfg, Some("env".into()));
        assert_eq!(cfg.output_dir, PathBuf::from("env"));
    }

    #[test]
    fn negative_scale_flags_parse() {
        let cli = Cli::try_parse_from(["hb", "experiment", "E2", "--k-min", "-3", "--threads", "2"]).unwrap();
        let Command::Experiment(a) = cli.command else { panic!() };
        assert_eq!((a.overrides.k_min, cli.threads), (Some(-3), Some(2)));
    }
}
