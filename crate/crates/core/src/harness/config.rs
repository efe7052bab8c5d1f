//! Experiment configuration, loaded from TOML with every field defaulted.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::geometry::{make_log_grid, BesselParam, DyadicConfig, RadialGrid};
use crate::lp_analysis::ScaleSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// The 2D grids and the 1D base grid span [2^lo_exp, 2^hi_exp].
    pub lo_exp: i32,
    pub hi_exp: i32,
    pub nodes_1d: usize,
    pub nodes_2d: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { lo_exp: -6, hi_exp: 6, nodes_1d: 256, nodes_2d: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub seed: u64,
    pub count: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { seed: 7, count: 20 }
    }
}

/// Bounds used by asserted verdicts. Each verdict names the field it uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Pointwise domination slack, relative to ‖f‖∞.
    pub domination_slack: f64,
    pub ratio_band: f64,
    /// Allowed relative change of a band under one refinement.
    pub refinement_drift: f64,
    pub conservation: f64,
    pub contraction: f64,
    pub composition: f64,
    pub fd_order: f64,
    pub subordination: f64,
    pub subordination_weight: f64,
    pub psi_support: f64,
    pub psi_cancellation: f64,
    pub riesz_band: f64,
    pub tail_slope_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            domination_slack: 1e-6,
            ratio_band: 50.0,
            refinement_drift: 0.2,
            conservation: 1e-6,
            contraction: 1e-6,
            composition: 1e-4,
            fd_order: 1.8,
            subordination: 1e-3,
            subordination_weight: 1e-10,
            psi_support: 1e-10,
            psi_cancellation: 1e-7,
            riesz_band: 10.0,
            tail_slope_tol: 0.3,
        }
    }
}

impl Tolerances {
    fn fields(&self) -> [(&'static str, f64); 13] {
        [
            ("domination_slack", self.domination_slack),
            ("ratio_band", self.ratio_band),
            ("refinement_drift", self.refinement_drift),
            ("conservation", self.conservation),
            ("contraction", self.contraction),
            ("composition", self.composition),
            ("fd_order", self.fd_order),
            ("subordination", self.subordination),
            ("subordination_weight", self.subordination_weight),
            ("psi_support", self.psi_support),
            ("psi_cancellation", self.psi_cancellation),
            ("riesz_band", self.riesz_band),
            ("tail_slope_tol", self.tail_slope_tol),
        ]
    }
}

/// Recorded-only λ sweep of the E1 bands on a reduced corpus and grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub count: usize,
    pub nodes_2d: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { lambdas: vec![0.5, 1.0, 2.0], count: 8, nodes_2d: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lambda: f64,
    pub exponent: f64,
    pub output_dir: PathBuf,
    /// Run E1 a second time with doubled grids and two more scale levels.
    pub refinement: bool,
    pub grid: GridConfig,
    pub scales: ScaleSet,
    pub dyadic: DyadicConfig,
    pub corpus: CorpusConfig,
    pub tolerances: Tolerances,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            exponent: 1.0,
            output_dir: PathBuf::from("reports"),
            refinement: true,
            grid: GridConfig::default(),
            scales: ScaleSet::default(),
            dyadic: DyadicConfig::default(),
            corpus: CorpusConfig::default(),
            tolerances: Tolerances::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(1);
            Error::Parse { line, msg: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn param(&self) -> Result<BesselParam> {
        BesselParam::new(self.lambda)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.param()?;
        let lo = p.hardy_lower();
        require(self.exponent > lo && self.exponent <= 1.0, || {
            format!("exponent {} outside ({lo}, 1] for λ = {}", self.exponent, self.lambda)
        })?;
        for (name, v) in self.tolerances.fields() {
            require(v > 0.0 && v.is_finite(), || format!("tolerance {name} must be positive, got {v}"))?;
        }
        require(self.corpus.count >= 1, || "corpus count must be at least 1".into())?;
        require(self.grid.lo_exp < self.grid.hi_exp, || "grid lo_exp must be below hi_exp".into())?;
        require(self.grid.nodes_1d >= 16 && self.grid.nodes_2d >= 16, || "grids need at least 16 nodes".into())?;
        self.scales.validate()?;
        DyadicConfig::new(self.dyadic.k_min, self.dyadic.k_max, self.dyadic.n1, self.dyadic.n2)?;
        for &l in &self.sweep.lambdas {
            BesselParam::new(l)?;
        }
        Ok(())
    }

    pub fn span(&self) -> (f64, f64) {
        (2f64.powi(self.grid.lo_exp), 2f64.powi(self.grid.hi_exp))
    }

    pub fn grid_2d(&self, p: &BesselParam, nodes: usize) -> Result<Arc<RadialGrid>> {
        Ok(Arc::new(make_log_grid(p, self.span(), nodes)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_partial_files() {
        let d = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&d.to_toml()).unwrap(), d);
        let c = ExperimentConfig::from_toml("lambda = 2.0\n[corpus]\nseed = 3\n").unwrap();
        assert_eq!((c.lambda, c.corpus.seed, c.corpus.count), (2.0, 3, 20));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ExperimentConfig::from_toml("[corpus]\ncount = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("exponent = 0.5\n").is_err());
        assert!(ExperimentConfig::from_toml("[tolerances]\nratio_band = 0.0\n").is_err());
        let e = ExperimentConfig::from_toml("lambda = 1.0\n\nbogus = 2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
    }
}
