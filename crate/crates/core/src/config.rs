//! Run configuration: one TOML file with a section per module. Every key
//! has a default and unknown keys are rejected.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::antecedent_linker::LinkerConfig;
use crate::budget::TimingTable;
use crate::corpus::{
    generate_synthetic_corpus, parse_conll, parse_standoff, Corpus, Split, SyntheticSpec,
};
use crate::encoder::EncoderConfig;
use crate::experiment::{ExperimentData, ExperimentSettings, GridEntry};
use crate::mention_detector::DetectorConfig;
use crate::metrics::MetricSet;
use crate::model::{json_hash, ModelConfig};
use crate::training::TrainSchedule;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Corpus {
        path: String,
        source: crate::corpus::CorpusError,
    },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    /// Corpus files: `.jsonl` is read as standoff, anything else as CoNLL.
    pub source_train: Option<PathBuf>,
    pub source_dev: Option<PathBuf>,
    pub target_train: Option<PathBuf>,
    pub target_dev: Option<PathBuf>,
    pub target_test: Option<PathBuf>,
    /// Synthetic spec files; used for any split without a file.
    pub synthetic_source: Option<PathBuf>,
    pub synthetic_target: Option<PathBuf>,
    pub synthetic_seed: u64,
    pub dev_documents: usize,
    pub test_documents: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            source_train: None,
            source_dev: None,
            target_train: None,
            target_dev: None,
            target_test: None,
            synthetic_source: None,
            synthetic_target: None,
            synthetic_seed: 0,
            dev_documents: 20,
            test_documents: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub metric_set: MetricSet,
    pub bootstrap_iterations: usize,
    pub alpha: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            metric_set: MetricSet::All,
            bootstrap_iterations: 10_000,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Overrides the mention-count seed rule.
    pub seeds: Option<usize>,
    pub seed: u64,
    pub baseline: Option<String>,
    pub grid: Vec<GridEntry>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    pub encoder: EncoderConfig,
    pub mention_detector: DetectorConfig,
    pub antecedent_linker: LinkerConfig,
    pub training: TrainSchedule,
    pub metrics: MetricsSection,
    pub budget: TimingTable,
    pub experiment: ExperimentSection,
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative corpus paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        let c = &mut cfg.corpus;
        for p in [
            &mut c.source_train,
            &mut c.source_dev,
            &mut c.target_train,
            &mut c.target_dev,
            &mut c.target_test,
            &mut c.synthetic_source,
            &mut c.synthetic_target,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.encoder.validate().map_err(invalid)?;
        self.mention_detector.validate().map_err(invalid)?;
        self.antecedent_linker.validate().map_err(invalid)?;
        self.training.validate().map_err(invalid)?;
        self.budget.validate().map_err(invalid)?;
        if !(self.metrics.alpha > 0.0 && self.metrics.alpha < 1.0) {
            return Err(invalid("metrics.alpha must lie in (0, 1)"));
        }
        if self.experiment.seeds == Some(0) {
            return Err(invalid("experiment.seeds must be positive"));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder.clone(),
            detector: self.mention_detector.clone(),
            linker: self.antecedent_linker.clone(),
        }
    }

    /// SHA-1 of the canonical JSON form.
    pub fn hash(&self) -> String {
        json_hash(self)
    }

    pub fn experiment_settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            model: self.model_config(),
            schedule: self.training.clone(),
            metric_set: self.metrics.metric_set,
            timing: self.budget.clone(),
            seeds: self.experiment.seeds,
            base_seed: self.experiment.seed,
            baseline: self.experiment.baseline.clone(),
            bootstrap_iterations: self.metrics.bootstrap_iterations,
            alpha: self.metrics.alpha,
        }
    }

    /// Every corpus file and spec the config refers to.
    pub fn input_paths(&self) -> Vec<PathBuf> {
        let c = &self.corpus;
        [
            &c.source_train,
            &c.source_dev,
            &c.target_train,
            &c.target_dev,
            &c.target_test,
            &c.synthetic_source,
            &c.synthetic_target,
        ]
        .into_iter()
        .flatten()
        .cloned()
        .collect()
    }

    pub fn load_data(&self) -> Result<ExperimentData, ConfigError> {
        let c = &self.corpus;
        let source_spec = c.synthetic_source.as_deref().map(read_spec).transpose()?;
        let target_spec = c.synthetic_target.as_deref().map(read_spec).transpose()?;
        let split = |file: &Option<PathBuf>,
                     spec: &Option<SyntheticSpec>,
                     which: Split,
                     salt: u64|
         -> Result<Option<Corpus>, ConfigError> {
            if let Some(p) = file {
                return read_corpus(p).map(Some);
            }
            let Some(spec) = spec else { return Ok(None) };
            let mut s = spec.clone();
            s.split = which;
            match which {
                Split::Train => {}
                Split::Dev => s.documents = c.dev_documents,
                Split::Test => s.documents = c.test_documents,
            }
            if s.documents == 0 {
                return Ok(None);
            }
            generate_synthetic_corpus(&s, c.synthetic_seed.wrapping_add(salt))
                .map(Some)
                .map_err(|source| ConfigError::Corpus {
                    path: format!("synthetic {} {:?} split", s.domain, which).to_lowercase(),
                    source,
                })
        };
        let source_train = split(&c.source_train, &source_spec, Split::Train, 0)?;
        let source_dev = split(&c.source_dev, &source_spec, Split::Dev, 1)?;
        let target_train = split(&c.target_train, &target_spec, Split::Train, 2)?
            .ok_or_else(|| invalid("corpus.target_train (or synthetic_target) is required"))?;
        let target_dev = split(&c.target_dev, &target_spec, Split::Dev, 3)?;
        let target_test = split(&c.target_test, &target_spec, Split::Test, 4)?
            .ok_or_else(|| invalid("corpus.target_test (or synthetic_target) is required"))?;
        Ok(ExperimentData {
            source_train,
            source_dev,
            target_train,
            target_dev,
            target_test,
        })
    }
}

pub fn read_spec(path: &Path) -> Result<SyntheticSpec, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    SyntheticSpec::from_toml(&text).map_err(|source| ConfigError::Corpus {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a corpus file, choosing the format by extension.
pub fn read_corpus(path: &Path) -> Result<Corpus, ConfigError> {
    let file = File::open(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let standoff = matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl") | Some("json")
    );
    let parsed = if standoff {
        parse_standoff(reader)
    } else {
        parse_conll(reader)
    };
    parsed.map_err(|source| ConfigError::Corpus {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = RunConfig::from_toml("", "x").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.training.lr_encoder, 2e-5);
        assert_eq!(cfg.mention_detector.max_width, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[training]\nlearning_rate = 1.0\n", "x").is_err());
        assert!(RunConfig::from_toml("[nonsense]\n", "x").is_err());
    }

    #[test]
    fn ranges_are_checked() {
        assert!(RunConfig::from_toml("[mention_detector]\nq = 1.5\n", "x").is_err());
        assert!(RunConfig::from_toml("[encoder]\nmax_segment_length = 0\n", "x").is_err());
        assert!(RunConfig::from_toml("[training]\nlr_other = 0.0\n", "x").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.training.target_epochs = 3;
        assert_ne!(a.hash(), b.hash());
    }
}
