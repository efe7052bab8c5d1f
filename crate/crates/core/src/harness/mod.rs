//! Named experiments with machine-readable reports.

pub mod characterization;
pub mod checks;
pub mod config;
pub mod equivalence;
pub mod report;

pub use config::ExperimentConfig;
pub use report::{ExperimentReport, Summary, Verdict};

use crate::error::{Error, Result};

pub const EXPERIMENTS: [&str; 7] = ["E1", "E2", "E3", "E4", "E5", "E6", "E7"];

pub fn run(id: &str, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    match id.to_ascii_uppercase().as_str() {
        "E1" => equivalence::e1_equivalence_chain(cfg),
        "E2" => checks::e2_semigroup_axioms(cfg),
        "E3" => checks::e3_cauchy_riemann(cfg),
        "E4" => checks::e4_subordination(cfg),
        "E5" => checks::e5_psi_properties(cfg),
        "E6" => characterization::e6_riesz_characterization(cfg),
        "E7" => characterization::e7_atom_tails(cfg),
        other => Err(Error::InvalidParameter(format!("unknown experiment '{other}'"))),
    }
}

/// The optional plot for a report.
pub fn plot(r: &ExperimentReport) -> Option<String> {
    match r.id.as_str() {
        "E1" => Some(equivalence::e1_plot(r)),
        "E7" => Some(characterization::e7_plot(r)),
        _ => None,
    }
}
