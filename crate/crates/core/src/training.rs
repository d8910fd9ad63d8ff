//! Source training and target adaptation: per-document objective sums,
//! domain interleaving, component freezing, AdamW updates and dev-based
//! early stopping.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::antecedent_linker::coref_loss;
use crate::autodiff::{Component, Grads, Matrix, ParamId, ParamStore, Tape, Var};
use crate::corpus::{derive_mentions, ClusterSet, Corpus, Document, MentionAnnotation};
use crate::encoder::{make_masking_plan, mix_seed, Vocab};
use crate::mention_detector::md_loss;
use crate::metrics::{report, MetricReport, MetricSet, MetricsError, Scheme};
use crate::model::{CorefModel, ModelConfig, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, TrainError> {
    Err(TrainError::Config(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub cl_source: bool,
    pub cl_target: bool,
    pub md_target: bool,
    pub mlm_target: bool,
}

impl ObjectiveConfig {
    /// Parses a comma-separated list such as `cl_s,md_t,mlm_t`.
    pub fn parse(list: &str) -> Result<Self, TrainError> {
        let mut o = ObjectiveConfig::default();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.to_ascii_lowercase().as_str() {
                "cl_s" => o.cl_source = true,
                "cl_t" => o.cl_target = true,
                "md_t" => o.md_target = true,
                "mlm_t" => o.mlm_target = true,
                other => return config_err(format!("unknown objective {other:?}")),
            }
        }
        Ok(o)
    }

    pub fn any(&self) -> bool {
        self.cl_source || self.cl_target || self.md_target || self.mlm_target
    }

    pub fn label(&self) -> String {
        let names: Vec<&str> = [
            (self.cl_source, "CL_S"),
            (self.cl_target, "CL_T"),
            (self.md_target, "MD_T"),
            (self.mlm_target, "MLM_T"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        if names.is_empty() {
            "none".into()
        } else {
            names.join("+")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FreezeConfig {
    pub freeze_encoder: bool,
    pub freeze_mention_detector: bool,
    pub freeze_antecedent_linker: bool,
}

impl FreezeConfig {
    /// Parses a comma-separated list of `enc`, `md`, `al`.
    pub fn parse(list: &str) -> Result<Self, TrainError> {
        let mut f = FreezeConfig::default();
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.to_ascii_lowercase().as_str() {
                "enc" => f.freeze_encoder = true,
                "md" => f.freeze_mention_detector = true,
                "al" => f.freeze_antecedent_linker = true,
                other => return config_err(format!("unknown component {other:?}")),
            }
        }
        Ok(f)
    }

    pub fn is_frozen(&self, c: Component) -> bool {
        match c {
            Component::Encoder => self.freeze_encoder,
            Component::MentionDetector => self.freeze_mention_detector,
            Component::AntecedentLinker => self.freeze_antecedent_linker,
        }
    }

    pub fn all_frozen(&self) -> bool {
        self.freeze_encoder && self.freeze_mention_detector && self.freeze_antecedent_linker
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSchedule {
    pub source_epochs: usize,
    pub target_epochs: usize,
    pub early_stop_patience: usize,
    pub lr_encoder: f64,
    pub lr_other: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub interleave_threshold_mentions: usize,
    pub mask_rate: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            source_epochs: 20,
            target_epochs: 20,
            early_stop_patience: 2,
            lr_encoder: 2e-5,
            lr_other: 1e-4,
            weight_decay: 0.01,
            clip_norm: 1.0,
            interleave_threshold_mentions: 1000,
            mask_rate: 0.15,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr_encoder > 0.0 && self.lr_other > 0.0) {
            return config_err("learning rates must be positive");
        }
        if self.early_stop_patience == 0 {
            return config_err("early_stop_patience must be at least 1");
        }
        if !(self.clip_norm > 0.0) || self.weight_decay < 0.0 {
            return config_err("clip_norm must be positive and weight_decay nonnegative");
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return config_err("mask_rate must lie in [0, 1]");
        }
        Ok(())
    }
}

/// `min(max(6, floor(15000 / m)), 15)` seeds for `m` target mentions.
pub fn seed_count(m: i64) -> Result<usize, TrainError> {
    if m <= 0 {
        return config_err(format!("mention count must be positive, got {m}"));
    }
    Ok((15000 / m).clamp(6, 15) as usize)
}

/// Adam with decoupled weight decay and a learning rate per component.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr_encoder: f64,
    pub lr_other: f64,
    pub weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    moments: BTreeMap<ParamId, (Matrix, Matrix)>,
}

impl AdamW {
    pub fn new(lr_encoder: f64, lr_other: f64, weight_decay: f64) -> Self {
        AdamW {
            lr_encoder,
            lr_other,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Updates exactly the parameters present in `grads`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (id, g) in grads.iter() {
            let param = store.get_mut(id);
            let lr = match param.component {
                Component::Encoder => self.lr_encoder,
                _ => self.lr_other,
            };
            let (m, v) = self
                .moments
                .entry(id)
                .or_insert_with(|| (Matrix::zeros(g.raw_dim()), Matrix::zeros(g.raw_dim())));
            let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
            ndarray::Zip::from(&mut param.value)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    *w -= lr * (update + wd * *w);
                });
        }
    }
}

/// Which losses apply to one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DocObjectives {
    pub cl: bool,
    pub md: bool,
    pub mlm: bool,
}

impl DocObjectives {
    pub fn any(&self) -> bool {
        self.cl || self.md || self.mlm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossParts {
    pub cl: Option<f64>,
    pub md: Option<f64>,
    pub mlm: Option<f64>,
    pub skipped_gold: usize,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.cl.unwrap_or(0.0) + self.md.unwrap_or(0.0) + self.mlm.unwrap_or(0.0)
    }
}

/// Annotated document handed to the step function.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub doc: &'a Document,
    pub clusters: Option<&'a ClusterSet>,
    pub mentions: Option<&'a MentionAnnotation>,
}

/// Records the unweighted sum of the requested losses. Returns `None` as the
/// root when every requested loss is identically zero on this document.
pub fn document_loss<'s>(
    model: &'s CorefModel,
    tape: &mut Tape<'s>,
    ex: Example<'_>,
    which: DocObjectives,
    q: f64,
    mask_rate: f64,
    mask_seed: u64,
) -> Result<(Option<Var>, LossParts), ModelError> {
    let ids = model.ids(ex.doc);
    let mut parts = LossParts::default();
    let mut roots = Vec::new();
    if which.cl || which.md {
        let g = model.forward(tape, ex.doc, &ids, q)?;
        if which.cl {
            let gold = ex.clusters.expect("CL needs clusters");
            let l = coref_loss(tape, g.pair_scores, &g.pruned.kept, &g.antecedents, gold);
            parts.cl = Some(l.map_or(0.0, |v| tape.scalar(v)));
            roots.extend(l);
        }
        if which.md {
            let gold = ex.mentions.expect("MD needs mentions");
            let out = md_loss(tape, g.mention_logits, &g.candidates, gold);
            parts.md = Some(tape.scalar(out.loss));
            parts.skipped_gold = out.skipped_gold;
            roots.push(out.loss);
        }
    }
    if which.mlm {
        let plan = make_masking_plan(&ids, mask_rate, mask_seed);
        let l = model.encoder().mlm_loss(tape, &ids, &plan)?;
        parts.mlm = Some(l.map_or(0.0, |v| tape.scalar(v)));
        roots.extend(l);
    }
    let root = if roots.is_empty() {
        None
    } else {
        Some(tape.sum_scalars(&roots))
    };
    Ok((root, parts))
}

/// Predicted clusters for every document of a corpus.
pub fn predict_corpus(
    model: &CorefModel,
    corpus: &Corpus,
    q: f64,
    emit_singletons: bool,
) -> Result<BTreeMap<String, ClusterSet>, ModelError> {
    corpus
        .documents
        .iter()
        .map(|d| Ok((d.doc_id.clone(), model.predict(d, q, emit_singletons)?)))
        .collect()
}

pub fn evaluate(
    model: &CorefModel,
    corpus: &Corpus,
    q: f64,
    emit_singletons: bool,
    scheme: Scheme,
    metric_set: MetricSet,
) -> Result<MetricReport, TrainError> {
    let sys = predict_corpus(model, corpus, q, emit_singletons)?;
    Ok(report(corpus, &sys, scheme, metric_set)?)
}

/// Singleton scheme matching how a corpus was annotated.
pub fn scheme_for(corpus: &Corpus) -> Scheme {
    if corpus.style.singletons_annotated {
        Scheme::WithSingletons
    } else {
        Scheme::WithoutSingletons
    }
}

/// Inference and evaluation settings shared by a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub q: f64,
    pub emit_singletons: bool,
    pub metric_set: MetricSet,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub steps: usize,
    pub best_epoch: Option<usize>,
    pub dev_avg_f1: Vec<f64>,
    pub epoch_loss: Vec<f64>,
    pub stopped_early: bool,
    /// Gold mentions wider than `max_width`, counted once per document.
    pub skipped_gold: usize,
}

struct Stream<'a> {
    examples: Vec<(Example<'a>, DocObjectives)>,
}

fn examples<'a>(corpus: &'a Corpus, which: impl Fn(&Example) -> DocObjectives) -> Stream<'a> {
    let examples = corpus
        .documents
        .iter()
        .map(|doc| {
            let ex = Example {
                doc,
                clusters: corpus.coref_annotations.get(&doc.doc_id),
                mentions: corpus.mention_annotations.get(&doc.doc_id),
            };
            let w = which(&ex);
            (ex, w)
        })
        .filter(|(_, w)| w.any())
        .collect();
    Stream { examples }
}

/// Fills in mention annotations from clusters where a document has none.
fn with_derived_mentions(corpus: &Corpus) -> Corpus {
    let mut out = corpus.clone();
    for (id, c) in &corpus.coref_annotations {
        out.mention_annotations
            .entry(id.clone())
            .or_insert_with(|| derive_mentions(c));
    }
    out
}

struct Loop<'a> {
    primary: Stream<'a>,
    secondary: Option<Stream<'a>>,
    freeze: FreezeConfig,
    epochs: usize,
    dev: Option<&'a Corpus>,
    settings: &'a RunSettings,
}

fn run_loop(
    model: &mut CorefModel,
    lp: Loop,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<TrainReport, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x7261_696e));
    let mut opt = AdamW::new(schedule.lr_encoder, schedule.lr_other, schedule.weight_decay);
    let mut report = TrainReport::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut previous: Option<f64> = None;
    let mut degraded = 0;
    let mut secondary_order: Vec<usize> = Vec::new();
    let mut secondary_pos = 0;
    let frozen: Vec<bool> = model
        .store
        .iter()
        .map(|(_, p)| lp.freeze.is_frozen(p.component))
        .collect();

    for epoch in 0..lp.epochs {
        let mut order: Vec<usize> = (0..lp.primary.examples.len()).collect();
        order.shuffle(&mut rng);
        let mut schedule_items: Vec<(Example, DocObjectives)> = Vec::new();
        for &i in &order {
            schedule_items.push(lp.primary.examples[i]);
            if let Some(sec) = &lp.secondary {
                if sec.examples.is_empty() {
                    continue;
                }
                if secondary_pos == secondary_order.len() {
                    secondary_order = (0..sec.examples.len()).collect();
                    secondary_order.shuffle(&mut rng);
                    secondary_pos = 0;
                }
                schedule_items.push(sec.examples[secondary_order[secondary_pos]]);
                secondary_pos += 1;
            }
        }
        let mut epoch_loss = 0.0;
        for (ex, which) in schedule_items {
            report.steps += 1;
            let mask_seed = mix_seed(seed, report.steps as u64);
            let grads = {
                let mut tape = Tape::new(&model.store);
                let (root, parts) = document_loss(
                    model,
                    &mut tape,
                    ex,
                    which,
                    lp.settings.q,
                    schedule.mask_rate,
                    mask_seed,
                )?;
                epoch_loss += parts.total();
                if epoch == 0 {
                    report.skipped_gold += parts.skipped_gold;
                }
                match root {
                    Some(r) => tape.backward(r),
                    None => continue,
                }
            };
            let mut grads = grads;
            grads.retain(|id| !frozen[id.0]);
            if grads.is_empty() {
                continue;
            }
            let norm = grads.global_norm();
            if norm > schedule.clip_norm {
                grads.scale(schedule.clip_norm / norm);
            }
            opt.step(&mut model.store, &grads);
        }
        report.epoch_loss.push(epoch_loss);
        report.epochs_run = epoch + 1;

        if let Some(dev) = lp.dev {
            let score = evaluate(
                model,
                dev,
                lp.settings.q,
                lp.settings.emit_singletons,
                scheme_for(dev),
                lp.settings.metric_set,
            )?
            .avg_f1;
            report.dev_avg_f1.push(score);
            if best.as_ref().map_or(true, |(b, _)| score > *b) {
                best = Some((score, model.store.clone()));
                report.best_epoch = Some(epoch);
            }
            degraded = match previous {
                Some(p) if score < p => degraded + 1,
                _ => 0,
            };
            previous = Some(score);
            if degraded >= schedule.early_stop_patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, store)) = best {
        model.store = store;
    }
    Ok(report)
}

/// Trains a fresh model on source coreference annotations (CL only, no
/// high-precision threshold).
pub fn train_source(
    config: &ModelConfig,
    vocab: Vocab,
    source: &Corpus,
    dev: Option<&Corpus>,
    schedule: &TrainSchedule,
    metric_set: MetricSet,
    seed: u64,
) -> Result<(CorefModel, TrainReport), TrainError> {
    schedule.validate()?;
    if !source.has_coref() {
        return config_err("source corpus has no coreference annotations");
    }
    if let Some(d) = dev {
        if !d.has_coref() {
            return config_err("dev corpus has no coreference annotations");
        }
    }
    let mut model = CorefModel::new(config.clone(), vocab, seed);
    let settings = RunSettings {
        q: 0.0,
        emit_singletons: config.linker.emit_singletons_for(0.0),
        metric_set,
    };
    let primary = examples(source, |ex| DocObjectives {
        cl: ex.clusters.is_some(),
        ..Default::default()
    });
    let lp = Loop {
        primary,
        secondary: None,
        freeze: FreezeConfig::default(),
        epochs: schedule.source_epochs,
        dev,
        settings: &settings,
    };
    let report = run_loop(&mut model, lp, schedule, seed)?;
    Ok((model, report))
}

/// Whether source and target documents alternate for these objectives.
pub fn interleaves(objectives: &ObjectiveConfig, target_mentions: usize, schedule: &TrainSchedule) -> bool {
    objectives.cl_source
        || (objectives.cl_target && target_mentions < schedule.interleave_threshold_mentions)
}

/// Target mentions available for training: cluster members where clusters
/// exist, otherwise mention annotations.
pub fn target_mention_count(target: &Corpus) -> usize {
    target
        .documents
        .iter()
        .map(|d| match target.coref_annotations.get(&d.doc_id) {
            Some(c) => c.mention_count(),
            None => target.mention_annotations.get(&d.doc_id).map_or(0, |m| m.len()),
        })
        .sum()
}

/// Continued training from `model` on the target domain.
#[allow(clippy::too_many_arguments)]
pub fn adapt(
    model: &mut CorefModel,
    target: &Corpus,
    source: Option<&Corpus>,
    dev: Option<&Corpus>,
    objectives: ObjectiveConfig,
    freeze: FreezeConfig,
    schedule: &TrainSchedule,
    settings: &RunSettings,
    seed: u64,
) -> Result<TrainReport, TrainError> {
    schedule.validate()?;
    if !objectives.any() {
        return config_err("at least one objective must be enabled");
    }
    if freeze.all_frozen() {
        return config_err("all components are frozen but a loss is enabled");
    }
    if objectives.cl_target && !target.has_coref() {
        return config_err("CL_T needs coreference annotations on the target corpus");
    }
    let target = with_derived_mentions(target);
    if objectives.md_target && !target.has_mentions() {
        return config_err("MD_T needs mention annotations on the target corpus");
    }
    if let Some(d) = dev {
        if !d.has_coref() {
            return config_err("dev corpus has no coreference annotations");
        }
    }
    let interleave = interleaves(&objectives, target_mention_count(&target), schedule);
    let secondary = if interleave {
        match source {
            Some(s) if s.has_coref() => Some(examples(s, |ex| DocObjectives {
                cl: ex.clusters.is_some(),
                ..Default::default()
            })),
            _ => return config_err("interleaving needs a source corpus with coreference annotations"),
        }
    } else {
        None
    };
    let primary = examples(&target, |ex| DocObjectives {
        cl: objectives.cl_target && ex.clusters.is_some(),
        md: objectives.md_target && ex.mentions.is_some(),
        mlm: objectives.mlm_target,
    });
    let lp = Loop {
        primary,
        secondary,
        freeze,
        epochs: schedule.target_epochs,
        dev,
        settings,
    };
    run_loop(model, lp, schedule, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SyntheticSpec};

    #[test]
    fn seed_rule() {
        assert_eq!(seed_count(100).unwrap(), 15);
        assert_eq!(seed_count(15000).unwrap(), 6);
        assert_eq!(seed_count(3000).unwrap(), 6);
        assert_eq!(seed_count(1000).unwrap(), 15);
        assert_eq!(seed_count(2000).unwrap(), 7);
        assert!(seed_count(0).is_err());
        assert!(seed_count(-4).is_err());
    }

    #[test]
    fn parse_lists() {
        let o = ObjectiveConfig::parse("cl_s, md_t,MLM_T").unwrap();
        assert!(o.cl_source && o.md_target && o.mlm_target && !o.cl_target);
        assert_eq!(o.label(), "CL_S+MD_T+MLM_T");
        assert!(ObjectiveConfig::parse("xx").is_err());
        let f = FreezeConfig::parse("enc,al").unwrap();
        assert!(f.freeze_encoder && f.freeze_antecedent_linker && !f.freeze_mention_detector);
    }

    fn setup() -> (CorefModel, Corpus) {
        let spec = SyntheticSpec {
            documents: 3,
            min_length: 20,
            max_length: 30,
            entities_min: 2,
            entities_max: 3,
            mentions_min: 2,
            mentions_max: 3,
            ..Default::default()
        };
        let corpus = generate_synthetic_corpus(&spec, 2).unwrap();
        let mut config = ModelConfig::default();
        config.encoder.embedding_dim = 8;
        config.encoder.hidden_dim = 8;
        config.detector.hidden_dim = 8;
        config.linker.hidden_dim = 8;
        let model = CorefModel::new(config, Vocab::from_corpora(&[&corpus]), 1);
        (model, corpus)
    }

    #[test]
    fn total_is_sum_of_parts() {
        let (model, corpus) = setup();
        let doc = &corpus.documents[0];
        let ex = Example {
            doc,
            clusters: corpus.coref_annotations.get(&doc.doc_id),
            mentions: corpus.mention_annotations.get(&doc.doc_id),
        };
        let all = DocObjectives {
            cl: true,
            md: true,
            mlm: true,
        };
        let mut tape = Tape::new(&model.store);
        let (root, parts) = document_loss(&model, &mut tape, ex, all, 0.0, 0.15, 9).unwrap();
        let total = tape.scalar(root.unwrap());
        let mut separate = 0.0;
        for w in [
            DocObjectives { cl: true, ..Default::default() },
            DocObjectives { md: true, ..Default::default() },
            DocObjectives { mlm: true, ..Default::default() },
        ] {
            let mut t = Tape::new(&model.store);
            let (r, _) = document_loss(&model, &mut t, ex, w, 0.0, 0.15, 9).unwrap();
            separate += r.map_or(0.0, |v| t.scalar(v));
        }
        assert!((total - separate).abs() < 1e-9);
        assert!((total - parts.total()).abs() < 1e-9);
    }

    #[test]
    fn zero_epochs_keep_initialization() {
        let (model, corpus) = setup();
        let schedule = TrainSchedule {
            source_epochs: 0,
            ..Default::default()
        };
        let (trained, _) = train_source(
            &model.config,
            model.vocab.clone(),
            &corpus,
            None,
            &schedule,
            MetricSet::All,
            1,
        )
        .unwrap();
        assert_eq!(trained.parameters(), model.parameters());
    }

    #[test]
    fn frozen_components_do_not_move() {
        let (mut model, corpus) = setup();
        let before = model.store.clone();
        let schedule = TrainSchedule {
            target_epochs: 2,
            lr_encoder: 1e-2,
            lr_other: 1e-2,
            ..Default::default()
        };
        let settings = RunSettings {
            q: 0.0,
            emit_singletons: false,
            metric_set: MetricSet::All,
        };
        let objectives = ObjectiveConfig {
            md_target: true,
            ..Default::default()
        };
        let freeze = FreezeConfig {
            freeze_antecedent_linker: true,
            ..Default::default()
        };
        adapt(&mut model, &corpus.mentions_only(), None, None, objectives, freeze, &schedule, &settings, 3)
            .unwrap();
        for ((_, a), (_, b)) in before.iter().zip(model.store.iter()) {
            match a.component {
                Component::AntecedentLinker => assert_eq!(a.value, b.value, "{}", a.name),
                _ if a.name.starts_with("enc.mlm") => {}
                _ => assert_ne!(a.value, b.value, "{}", a.name),
            }
        }
        let all = FreezeConfig {
            freeze_encoder: true,
            freeze_mention_detector: true,
            freeze_antecedent_linker: true,
        };
        assert!(matches!(
            adapt(&mut model, &corpus, None, None, objectives, all, &schedule, &settings, 3),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn incompatible_objectives_are_rejected() {
        let (mut model, corpus) = setup();
        let settings = RunSettings {
            q: 0.0,
            emit_singletons: false,
            metric_set: MetricSet::All,
        };
        let schedule = TrainSchedule::default();
        let cl = ObjectiveConfig {
            cl_target: true,
            ..Default::default()
        };
        let res = adapt(
            &mut model,
            &corpus.mentions_only(),
            None,
            None,
            cl,
            FreezeConfig::default(),
            &schedule,
            &settings,
            0,
        );
        assert!(matches!(res, Err(TrainError::Config(_))));
        let md = ObjectiveConfig {
            md_target: true,
            ..Default::default()
        };
        let res = adapt(
            &mut model,
            &corpus.unlabeled(),
            None,
            None,
            md,
            FreezeConfig::default(),
            &schedule,
            &settings,
            0,
        );
        assert!(matches!(res, Err(TrainError::Config(_))));
    }
}
