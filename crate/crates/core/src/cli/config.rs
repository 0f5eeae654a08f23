//! Run configuration, loaded from TOML and overridden by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{EffectKind, RegressionSpec, SeKind};
use crate::panel::{GrowthBase, Outcome};
use crate::scenario::{ExperimentDesign, Figure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    /// Headline standard errors; `fit` defaults to region-clustered, the
    /// simulation table and its event-study paths to classical.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<SeKind>,
    /// Dependent variable label; each command has its own default when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    pub design: ExperimentDesign,
    pub fit: FitConfig,
    pub table1: Table1Config,
    pub figures: FiguresConfig,
    pub summary: SummaryConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            se: None,
            outcome: None,
            design: ExperimentDesign::default(),
            fit: FitConfig::default(),
            table1: Table1Config::default(),
            figures: FiguresConfig::default(),
            summary: SummaryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub effect: EffectKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lags: Option<usize>,
    pub reference_period: i64,
    pub bin_endpoints: bool,
    pub covariates: Vec<String>,
    pub allow_unbalanced: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        let spec = RegressionSpec::default();
        Self {
            input: None,
            effect: spec.effect,
            leads: None,
            lags: None,
            reference_period: spec.reference_period,
            bin_endpoints: false,
            covariates: Vec::new(),
            allow_unbalanced: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Config {
    /// Number of consecutive master seeds to run, starting at the design's.
    pub sweep: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiguresConfig {
    pub which: Vec<Figure>,
    /// Also run the event studies of the simulation design for the appendix paths.
    pub appendix: bool,
}

impl Default for FiguresConfig {
    fn default() -> Self {
        Self { which: Figure::ALL.to_vec(), appendix: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryConfig {
    /// Panel to summarise; the design is simulated when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Cohort boundaries; weekly cohorts from the first adoption when empty.
    pub bounds: Vec<i64>,
    /// Evaluation period; six periods after the first adoption when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at: Option<i64>,
    pub window: i64,
    pub growth_base: GrowthBase,
    pub allow_unbalanced: bool,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self {
            input: None,
            bounds: Vec::new(),
            at: None,
            window: 7,
            growth_base: GrowthBase::NewCases,
            allow_unbalanced: false,
        }
    }
}

/// Parses `cumulative`, `log`, `delta-log` or any full outcome label.
pub fn parse_outcome(text: &str) -> Result<Outcome> {
    Outcome::from_label(&text.replace('-', "_")).map_err(|_| {
        Error::Config(format!("unknown outcome `{text}` (expected cumulative|log|delta-log or a full label)"))
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    pub fn outcome_or(&self, default: Outcome) -> Result<Outcome> {
        self.outcome.as_deref().map(parse_outcome).unwrap_or(Ok(default))
    }

    pub fn regression_spec(&self) -> Result<RegressionSpec> {
        let default = match self.fit.effect {
            EffectKind::Dynamic => Outcome::delta_log(),
            _ => Outcome::log(),
        };
        let spec = RegressionSpec {
            outcome: Some(self.outcome_or(default)?),
            effect: self.fit.effect,
            leads: self.fit.leads,
            lags: self.fit.lags,
            reference_period: self.fit.reference_period,
            bin_endpoints: self.fit.bin_endpoints,
            se_kind: self.se.unwrap_or(SeKind::Cluster),
            covariates: self.fit.covariates.clone(),
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(outcome) = &self.outcome {
            parse_outcome(outcome)?;
        }
        if self.table1.sweep == Some(0) {
            return Err(Error::Config("table1.sweep must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), config);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let config = RunConfig::from_toml("se = \"classical\"\n[design]\nn_regions = 10\n").unwrap();
        assert_eq!(config.se, Some(SeKind::Classical));
        assert_eq!(config.design.n_regions, 10);
        assert_eq!(config.design.horizon, 150);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[design]\nregions = 10\n").is_err());
    }

    #[test]
    fn outcome_flags_parse() {
        assert_eq!(parse_outcome("delta-log").unwrap(), Outcome::delta_log());
        assert_eq!(parse_outcome("cumulative_per_capita").unwrap(), Outcome::cumulative_per_capita());
        assert!(parse_outcome("levels").is_err());
    }
}
