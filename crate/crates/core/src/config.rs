//! Pipeline configuration: one TOML file with a section per stage.
//!
//! Every key is optional; omitted keys take the module defaults. Keys can
//! also be overridden as `section.key=value` strings (values parsed as TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::DEFAULT_SLIDE_PERCENTILE;
use crate::cohort::SplitFractions;
use crate::error::{Error, Result};
use crate::metrics::{DEFAULT_N_BOOT, DEFAULT_SPEC_TARGETS};
use crate::nnet::NetConfig;
use crate::slide::SyntheticCohortSpec;
use crate::tiler::TilingConfig;
use crate::tissue::SegmentationConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PatientRule {
    #[default]
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AggregationConfig {
    /// Tile-to-slide percentile used when cross-validation does not pick one.
    pub slide_percentile: f64,
    pub patient_rule: PatientRule,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            slide_percentile: DEFAULT_SLIDE_PERCENTILE,
            patient_rule: PatientRule::Median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub targets: Vec<f64>,
    pub n_boot: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            targets: DEFAULT_SPEC_TARGETS.to_vec(),
            n_boot: DEFAULT_N_BOOT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    /// Highest-scoring test tiles rendered as heatmaps.
    pub max_tiles: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { max_tiles: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root of every random stream. Overrides `synth.seed`.
    pub seed: u64,
    pub synth: SyntheticCohortSpec,
    pub segmentation: SegmentationConfig,
    pub tiling: TilingConfig,
    pub split: SplitFractions,
    pub network: NetConfig,
    pub train: TrainConfig,
    pub aggregation: AggregationConfig,
    pub metrics: MetricsConfig,
    pub explain: ExplainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            synth: SyntheticCohortSpec::default(),
            segmentation: SegmentationConfig::default(),
            tiling: TilingConfig::default(),
            split: SplitFractions::default(),
            network: NetConfig::default(),
            train: TrainConfig::default(),
            aggregation: AggregationConfig::default(),
            metrics: MetricsConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `section.key=value` overrides, e.g. `train.batch_size=16`.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc: toml::Value = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
                Ok(mut t) => t.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(raw.to_string()),
            };
            let mut node = &mut doc;
            let parts: Vec<&str> = key.trim().split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let table = node
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("{key}: {part} is not a section")))?;
                if i + 1 == parts.len() {
                    if !table.contains_key(*part) {
                        return Err(Error::Config(format!("unknown key {key}")));
                    }
                    table.insert(part.to_string(), value.clone());
                    break;
                }
                node = table
                    .get_mut(*part)
                    .ok_or_else(|| Error::Config(format!("unknown section in {key}")))?;
            }
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.segmentation.validate().map_err(wrap)?;
        self.tiling.validate().map_err(wrap)?;
        self.network.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        let mut synth = self.synth.clone();
        synth.seed = self.seed;
        synth.validate().map_err(wrap)?;
        if self.tiling.out_size as usize != self.network.input_size {
            return Err(Error::Config(format!(
                "tile size {} differs from network input {}",
                self.tiling.out_size, self.network.input_size
            )));
        }
        if !(0.0..=100.0).contains(&self.aggregation.slide_percentile) {
            return Err(Error::Config("aggregation.slide_percentile outside [0, 100]".into()));
        }
        if self.metrics.n_boot == 0 || self.metrics.targets.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(Error::Config("metrics needs n_boot > 0 and targets in (0, 1]".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn synth_spec(&self) -> SyntheticCohortSpec {
        SyntheticCohortSpec {
            seed: self.seed,
            ..self.synth.clone()
        }
    }
}
