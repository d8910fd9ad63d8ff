//! Experiment grids: per seed, one source model shared by every grid entry,
//! entry-specific annotation subsets of the target training split, target
//! test evaluation under both singleton schemes, and a paired bootstrap
//! against a baseline entry.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::budget::{equivalent_fractions, TimingTable};
use crate::corpus::Corpus;
use crate::encoder::{mix_seed, Vocab};
use crate::mention_detector::tag_silver;
use crate::metrics::{paired_bootstrap, DocumentCounts, Metric, MetricSet, Scheme};
use crate::model::{CorefModel, ModelConfig};
use crate::training::{
    adapt, predict_corpus, seed_count, target_mention_count, train_source,
    FreezeConfig, ObjectiveConfig, RunSettings, TrainError, TrainSchedule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetMode {
    /// `fraction` of the target training documents, whatever is annotated.
    #[default]
    Count,
    /// `fraction` is a coreference-annotation time budget; mention-only
    /// entries get the time-equivalent document fraction.
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub name: String,
    /// Comma-separated objectives; empty means the unadapted source model.
    #[serde(default)]
    pub objectives: String,
    #[serde(default)]
    pub freeze: String,
    #[serde(default = "one")]
    pub fraction: f64,
    #[serde(default)]
    pub budget_mode: BudgetMode,
    #[serde(default)]
    pub q: f64,
    #[serde(default)]
    pub emit_singletons: Option<bool>,
    /// Adds silver mentions on the unannotated rest of the training split.
    #[serde(default)]
    pub silver: bool,
}

fn one() -> f64 {
    1.0
}

impl GridEntry {
    pub fn objectives(&self) -> Result<ObjectiveConfig, TrainError> {
        ObjectiveConfig::parse(&self.objectives)
    }

    pub fn freeze(&self) -> Result<FreezeConfig, TrainError> {
        FreezeConfig::parse(&self.freeze)
    }

    /// Fraction of target training documents this entry annotates.
    pub fn document_fraction(&self, timing: &TimingTable) -> Result<f64, TrainError> {
        let o = self.objectives()?;
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(TrainError::Config(format!(
                "{}: fraction {} outside [0, 1]",
                self.name, self.fraction
            )));
        }
        let mention_only = o.md_target && !o.cl_target;
        Ok(match self.budget_mode {
            BudgetMode::Time if mention_only => equivalent_fractions(self.fraction, timing)
                .map_err(|e| TrainError::Config(e.to_string()))?,
            _ => self.fraction,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub source_train: Option<Corpus>,
    pub source_dev: Option<Corpus>,
    pub target_train: Corpus,
    pub target_dev: Option<Corpus>,
    pub target_test: Corpus,
}

impl ExperimentData {
    /// Vocabulary over every split except the target test split.
    pub fn vocab(&self) -> Vocab {
        let mut parts: Vec<&Corpus> = vec![&self.target_train];
        parts.extend(self.source_train.iter());
        parts.extend(self.source_dev.iter());
        parts.extend(self.target_dev.iter());
        Vocab::from_corpora(&parts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub model: ModelConfig,
    pub schedule: TrainSchedule,
    pub metric_set: MetricSet,
    pub timing: TimingTable,
    /// Overrides the mention-count seed rule.
    pub seeds: Option<usize>,
    pub base_seed: u64,
    pub baseline: Option<String>,
    pub bootstrap_iterations: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub name: String,
    pub objectives: String,
    pub scheme: Scheme,
    pub seeds: usize,
    pub documents: usize,
    pub f1_mean: BTreeMap<Metric, f64>,
    pub f1_std: BTreeMap<Metric, f64>,
    pub avg_f1_mean: f64,
    pub avg_f1_std: f64,
    pub per_seed_avg_f1: Vec<f64>,
    pub baseline: Option<String>,
    pub p_value: Option<f64>,
    pub significant: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn row(&self, name: &str, scheme: Scheme) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.name == name && r.scheme == scheme)
    }

    pub fn jsonl(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
            .collect()
    }

    pub fn aligned(&self, metric_set: MetricSet) -> String {
        let metrics = metric_set.metrics();
        let mut out = format!("{:<24} {:<18} {:>5} {:>5}", "config", "scheme", "seeds", "docs");
        for m in metrics {
            out += &format!(" {:>15}", m.name());
        }
        out += &format!(" {:>15} {:>4}\n", "Avg", "sig");
        for r in &self.rows {
            out += &format!(
                "{:<24} {:<18} {:>5} {:>5}",
                r.name,
                r.scheme.to_string(),
                r.seeds,
                r.documents
            );
            for m in metrics {
                out += &format!(" {:>7.2} ±{:>6.2}", 100.0 * r.f1_mean[m], 100.0 * r.f1_std[m]);
            }
            let sig = match r.significant {
                Some(true) => "*",
                Some(false) => "",
                None => "-",
            };
            out += &format!(
                " {:>7.2} ±{:>6.2} {:>4}\n",
                100.0 * r.avg_f1_mean,
                100.0 * r.avg_f1_std,
                sig
            );
        }
        out
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

const SCHEMES: [Scheme; 2] = [Scheme::WithSingletons, Scheme::WithoutSingletons];

/// Checks the grid against the available corpora before any training.
pub fn validate_grid(
    grid: &[GridEntry],
    data: &ExperimentData,
    settings: &ExperimentSettings,
) -> Result<(), TrainError> {
    if grid.is_empty() {
        return Err(TrainError::Config("experiment grid is empty".into()));
    }
    let mut names = std::collections::BTreeSet::new();
    for e in grid {
        if !names.insert(e.name.as_str()) {
            return Err(TrainError::Config(format!("duplicate grid entry {:?}", e.name)));
        }
        let o = e.objectives()?;
        let f = e.freeze()?;
        e.document_fraction(&settings.timing)?;
        if !(0.0..=1.0).contains(&e.q) {
            return Err(TrainError::Config(format!("{}: q outside [0, 1]", e.name)));
        }
        if o.any() && f.all_frozen() {
            return Err(TrainError::Config(format!("{}: all components frozen", e.name)));
        }
        if o.cl_target && !data.target_train.has_coref() {
            return Err(TrainError::Config(format!(
                "{}: CL_T needs target coreference annotations",
                e.name
            )));
        }
        if e.silver && !o.md_target {
            return Err(TrainError::Config(format!("{}: silver mentions need MD_T", e.name)));
        }
    }
    // Every entry starts from a source-trained model.
    match &data.source_train {
        Some(s) if s.has_coref() => {}
        Some(_) => return Err(TrainError::Config("source corpus has no coreference annotations".into())),
        None => return Err(TrainError::Config("experiment needs a source training corpus".into())),
    }
    if !data.target_test.has_coref() {
        return Err(TrainError::Config("target test corpus has no coreference annotations".into()));
    }
    if let Some(b) = &settings.baseline {
        if !names.contains(b.as_str()) {
            return Err(TrainError::Config(format!("baseline {b:?} is not a grid entry")));
        }
    }
    Ok(())
}

/// The annotated subset an entry trains on, in shuffled order.
fn entry_corpus(
    entry: &GridEntry,
    objectives: &ObjectiveConfig,
    shuffled: &[String],
    data: &ExperimentData,
    timing: &TimingTable,
) -> Result<(Corpus, Corpus), TrainError> {
    let fraction = entry.document_fraction(timing)?;
    let n = ((fraction * shuffled.len() as f64) + 1e-9).round() as usize;
    let chosen = data.target_train.subset(shuffled[..n].iter().map(String::as_str));
    let rest = data.target_train.subset(shuffled[n..].iter().map(String::as_str));
    let annotated = if objectives.cl_target {
        chosen
    } else if objectives.md_target {
        chosen.mentions_only()
    } else {
        chosen.unlabeled()
    };
    Ok((annotated, rest.unlabeled()))
}

/// Output of one entry for one seed.
struct SeedOutcome {
    counts: BTreeMap<Scheme, DocumentCounts>,
    documents: usize,
}

fn run_entry(
    entry: &GridEntry,
    source_model: &CorefModel,
    shuffled: &[String],
    data: &ExperimentData,
    settings: &ExperimentSettings,
    seed: u64,
) -> Result<SeedOutcome, TrainError> {
    let objectives = entry.objectives()?;
    let freeze = entry.freeze()?;
    let run = RunSettings {
        q: entry.q,
        emit_singletons: entry
            .emit_singletons
            .unwrap_or_else(|| settings.model.linker.emit_singletons_for(entry.q)),
        metric_set: settings.metric_set,
    };
    let mut model = source_model.clone();
    let mut documents = 0;
    if objectives.any() {
        let (mut target, rest) = entry_corpus(entry, &objectives, shuffled, data, &settings.timing)?;
        documents = target.len();
        if entry.silver && !rest.is_empty() {
            let mut detector = source_model.clone();
            let md_only = ObjectiveConfig {
                md_target: true,
                ..Default::default()
            };
            let freeze_al = FreezeConfig {
                freeze_antecedent_linker: true,
                ..Default::default()
            };
            adapt(
                &mut detector,
                &target.mentions_only(),
                data.source_train.as_ref(),
                None,
                md_only,
                freeze_al,
                &settings.schedule,
                &run,
                mix_seed(seed, 0x5117),
            )?;
            let silver_q = if entry.q > 0.0 { entry.q } else { 0.5 };
            let silver = tag_silver(&rest, &detector, silver_q)?;
            for doc in &rest.documents {
                let m = silver[&doc.doc_id].clone();
                target
                    .push(doc.clone(), Some(m), None)
                    .map_err(|e| TrainError::Config(e.to_string()))?;
            }
        }
        adapt(
            &mut model,
            &target,
            data.source_train.as_ref(),
            data.target_dev.as_ref(),
            objectives,
            freeze,
            &settings.schedule,
            &run,
            seed,
        )?;
    }
    let sys = predict_corpus(&model, &data.target_test, run.q, run.emit_singletons)?;
    let mut counts = BTreeMap::new();
    for scheme in SCHEMES {
        counts.insert(
            scheme,
            DocumentCounts::collect(&data.target_test, &sys, scheme, settings.metric_set)?,
        );
    }
    Ok(SeedOutcome { counts, documents })
}

/// Number of seeds for a grid: the override, or the mention-count rule.
pub fn experiment_seeds(data: &ExperimentData, settings: &ExperimentSettings) -> Result<usize, TrainError> {
    match settings.seeds {
        Some(n) if n > 0 => Ok(n),
        Some(_) => Err(TrainError::Config("seeds must be positive".into())),
        None => seed_count(target_mention_count(&data.target_train) as i64),
    }
}

pub fn run_experiment(
    grid: &[GridEntry],
    data: &ExperimentData,
    settings: &ExperimentSettings,
    log: &mut dyn FnMut(&str),
) -> Result<ResultsTable, TrainError> {
    validate_grid(grid, data, settings)?;
    let seeds = experiment_seeds(data, settings)?;
    let vocab = data.vocab();
    let source = data.source_train.as_ref().expect("validated");
    // outcomes[entry][seed]
    let mut outcomes: Vec<Vec<SeedOutcome>> = grid.iter().map(|_| Vec::new()).collect();
    for s in 0..seeds {
        let seed = settings.base_seed + s as u64;
        log(&format!("seed {seed}: training source model"));
        let (source_model, _) = train_source(
            &settings.model,
            vocab.clone(),
            source,
            data.source_dev.as_ref(),
            &settings.schedule,
            settings.metric_set,
            seed,
        )?;
        let mut shuffled: Vec<String> = data
            .target_train
            .documents
            .iter()
            .map(|d| d.doc_id.clone())
            .collect();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5bff)));
        for (k, entry) in grid.iter().enumerate() {
            let out = run_entry(entry, &source_model, &shuffled, data, settings, seed)?;
            log(&format!(
                "seed {seed}: {} avg F1 with/without singletons {:.4}/{:.4}",
                entry.name,
                out.counts[&Scheme::WithSingletons].report().avg_f1,
                out.counts[&Scheme::WithoutSingletons].report().avg_f1
            ));
            outcomes[k].push(out);
        }
    }

    let pooled = |k: usize, scheme: Scheme| -> DocumentCounts {
        let mut acc = outcomes[k][0].counts[&scheme].clone();
        for o in &outcomes[k][1..] {
            acc.pool(&o.counts[&scheme]);
        }
        acc
    };
    let baseline_idx = settings
        .baseline
        .as_ref()
        .and_then(|b| grid.iter().position(|e| &e.name == b));
    let mut rows = Vec::new();
    for scheme in SCHEMES {
        for (k, entry) in grid.iter().enumerate() {
            let reports: Vec<_> = outcomes[k].iter().map(|o| o.counts[&scheme].report()).collect();
            let mut f1_mean = BTreeMap::new();
            let mut f1_std = BTreeMap::new();
            for m in settings.metric_set.metrics() {
                let xs: Vec<f64> = reports.iter().map(|r| r.scores[m].f1).collect();
                let (mu, sd) = mean_std(&xs);
                f1_mean.insert(*m, mu);
                f1_std.insert(*m, sd);
            }
            let per_seed: Vec<f64> = reports.iter().map(|r| r.avg_f1).collect();
            let (avg_mu, avg_sd) = mean_std(&per_seed);
            let p_value = match baseline_idx {
                Some(b) => {
                    let r = paired_bootstrap(
                        &pooled(k, scheme),
                        &pooled(b, scheme),
                        settings.bootstrap_iterations,
                        settings.base_seed,
                    )?;
                    Some(r.p_avg)
                }
                None => None,
            };
            rows.push(ResultRow {
                name: entry.name.clone(),
                objectives: entry.objectives()?.label(),
                scheme,
                seeds,
                documents: outcomes[k][0].documents,
                f1_mean,
                f1_std,
                avg_f1_mean: avg_mu,
                avg_f1_std: avg_sd,
                per_seed_avg_f1: per_seed,
                baseline: settings.baseline.clone(),
                p_value,
                significant: p_value.map(|p| p < settings.alpha),
            });
        }
    }
    Ok(ResultsTable { rows })
}
