//! The run configuration: one TOML (or `.json`) file whose values command
//! line flags may override.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mbmm::dataset::{LoadOptions, ThresholdRules};
use mbmm::model::Priors;
use mbmm::postprocess::PostprocessOptions;
use mbmm::regression::{CovariateSpec, LogisticConfig, PatientColumns, PointEstimate};
use mbmm::sampler::Mc3Config;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Top-level seed; copied into the sampler and regression settings.
    pub seed: u64,
    pub input: InputPaths,
    pub table: TableFormat,
    pub thresholds: ThresholdRules,
    pub priors: Priors,
    pub mcmc: Mc3Config,
    pub postprocess: PostprocessOptions,
    pub regression: RegressionSettings,
    pub geojson: GeoJsonSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("mbmm-out"),
            seed: 1,
            input: InputPaths::default(),
            table: TableFormat::default(),
            thresholds: ThresholdRules::default(),
            priors: Priors::default(),
            mcmc: Mc3Config::default(),
            postprocess: PostprocessOptions::default(),
            regression: RegressionSettings::default(),
            geojson: GeoJsonSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    /// Raw indicator table (proportions or counts).
    pub raw_table: Option<PathBuf>,
    /// Binary 0/1/NA matrix written by `binarize`.
    pub binary_matrix: Option<PathBuf>,
    pub patients: Option<PathBuf>,
    /// Assignments CSV written by `fit`.
    pub assignments: Option<PathBuf>,
    /// Profile summary JSON written by `fit`.
    pub profile_summary: Option<PathBuf>,
    pub geojson: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableFormat {
    pub delimiter: char,
    pub id_column: Option<String>,
    pub missing: Vec<String>,
}

impl Default for TableFormat {
    fn default() -> Self {
        let d = LoadOptions::default();
        Self {
            delimiter: char::from(d.delimiter),
            id_column: d.id_column,
            missing: d.missing,
        }
    }
}

impl TableFormat {
    pub fn load_options(&self) -> anyhow::Result<LoadOptions> {
        if !self.delimiter.is_ascii() {
            bail!("delimiter {:?} is not a single ASCII character", self.delimiter);
        }
        Ok(LoadOptions {
            delimiter: self.delimiter as u8,
            id_column: self.id_column.clone(),
            missing: self.missing.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSettings {
    pub columns: PatientColumns,
    /// Categorical covariates; the first listed level is the reference.
    pub covariates: Vec<CovariateSpec>,
    /// 1-based.
    pub reference_profile: usize,
    /// Number of profiles; the largest label in the assignments when unset.
    pub n_profiles: Option<usize>,
    pub prior_sd: f64,
    pub level: f64,
    pub point: PointEstimate,
    pub mcmc: LogisticConfig,
}

impl Default for RegressionSettings {
    fn default() -> Self {
        Self {
            columns: PatientColumns::default(),
            covariates: Vec::new(),
            reference_profile: 1,
            n_profiles: None,
            prior_sd: 5.0,
            level: 0.95,
            point: PointEstimate::Mean,
            mcmc: LogisticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoJsonSettings {
    /// Feature property holding the unit id.
    pub key_property: String,
}

impl Default for GeoJsonSettings {
    fn default() -> Self {
        Self {
            key_property: "GEOID".into(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .with_context(|| format!("invalid config {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?
        };
        Ok(config)
    }

    /// Propagates the top-level seed and checks every section.
    pub fn resolve(mut self) -> anyhow::Result<Self> {
        self.mcmc.seed = self.seed;
        self.regression.mcmc.seed = self.seed;
        self.priors.validate()?;
        self.mcmc.validate()?;
        self.regression.mcmc.validate()?;
        self.table.load_options()?;
        let f = self.postprocess.min_profile_fraction;
        if !(0.0..1.0).contains(&f) {
            bail!("postprocess.min_profile_fraction must lie in [0, 1), got {f}");
        }
        if self.postprocess.k_override == Some(0) {
            bail!("postprocess.k_override must be at least 1");
        }
        if self.regression.reference_profile == 0 {
            bail!("regression.reference_profile is 1-based");
        }
        if !(0.0 < self.regression.level && self.regression.level < 1.0) {
            bail!("regression.level must lie in (0, 1)");
        }
        if !(self.regression.prior_sd > 0.0) {
            bail!("regression.prior_sd must be positive");
        }
        Ok(self)
    }
}
