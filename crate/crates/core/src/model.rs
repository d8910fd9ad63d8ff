//! The full span-ranking model: encoder, mention detector and antecedent
//! linker sharing one parameter store, plus versioned checkpoints.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::antecedent_linker::{
    decode, top_k_antecedents, AntecedentScores, Antecedents, LinkerConfig, LinkerParams,
};
use crate::autodiff::{Matrix, ParamStore, Tape, Var};
use crate::corpus::{ClusterSet, Document, MentionAnnotation, Span};
use crate::encoder::{EncoderConfig, EncoderError, EncoderParams, Vocab};
use crate::mention_detector::{
    enumerate_candidates, prune, CandidateSet, DetectorConfig, DetectorError, DetectorParams,
    MentionScores, PrunedCandidates,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Linker(#[from] crate::antecedent_linker::LinkerError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub detector: DetectorConfig,
    pub linker: LinkerConfig,
}

/// Hex SHA-1 of a value's canonical JSON.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha1::digest(&bytes))
}

#[derive(Debug, Clone)]
pub struct CorefModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub store: ParamStore,
    encoder: EncoderParams,
    detector: DetectorParams,
    linker: LinkerParams,
}

/// Recorded forward pass over one document.
pub struct DocGraph {
    pub candidates: CandidateSet,
    pub mention_logits: Var,
    pub scores: MentionScores,
    pub pruned: PrunedCandidates,
    pub antecedents: Antecedents,
    /// `None` when fewer than two spans survive pruning.
    pub pair_scores: Option<Var>,
}

impl CorefModel {
    pub fn new(mut config: ModelConfig, vocab: Vocab, seed: u64) -> Self {
        config.encoder.vocab_size = vocab.len();
        config.encoder.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = EncoderParams::init(&config.encoder, &mut store, &mut rng);
        let span_dim = config.encoder.span_dim();
        let detector = DetectorParams::init(span_dim, &config.detector, &mut store, &mut rng);
        let linker = LinkerParams::init(span_dim, &config.linker, &mut store, &mut rng);
        CorefModel {
            config,
            vocab,
            store,
            encoder,
            detector,
            linker,
        }
    }

    fn bind(config: ModelConfig, vocab: Vocab, store: ParamStore) -> Result<Self, ModelError> {
        let missing = || ModelError::Checkpoint("parameter set does not match config".into());
        let span_dim = config.encoder.span_dim();
        let encoder = EncoderParams::bind(&config.encoder, &store).ok_or_else(missing)?;
        let detector = DetectorParams::bind(span_dim, &store).ok_or_else(missing)?;
        let linker = LinkerParams::bind(span_dim, &store).ok_or_else(missing)?;
        Ok(CorefModel {
            config,
            vocab,
            store,
            encoder,
            detector,
            linker,
        })
    }

    pub fn encoder(&self) -> &EncoderParams {
        &self.encoder
    }

    pub fn detector(&self) -> &DetectorParams {
        &self.detector
    }

    pub fn linker(&self) -> &LinkerParams {
        &self.linker
    }

    pub fn ids(&self, doc: &Document) -> Vec<usize> {
        self.vocab.ids(doc)
    }

    /// Encodes, scores every candidate, prunes with threshold `q`, and
    /// scores antecedent pairs among the survivors.
    pub fn forward(
        &self,
        tape: &mut Tape,
        doc: &Document,
        ids: &[usize],
        q: f64,
    ) -> Result<DocGraph, ModelError> {
        let tokens = self.encoder.encode(tape, ids)?;
        let candidates = enumerate_candidates(doc.len(), self.config.detector.max_width);
        let reps = self.encoder.span_representations(tape, tokens, &candidates.spans)?;
        let mention_logits = self.detector.logits(tape, reps)?;
        let scores = MentionScores {
            spans: candidates.spans.clone(),
            logits: tape.value(mention_logits).iter().copied().collect(),
        };
        let pruned = prune(&scores, self.config.detector.lambda_keep, q, doc.len())?;
        let kept_reps = tape.gather_rows(reps, pruned.indices.clone());
        let kept_logits = tape.gather_rows(mention_logits, pruned.indices.clone());
        let coarse = self.linker.coarse_scores(&self.store, tape.value(kept_reps))?;
        let kept_values: Vec<f64> = pruned.indices.iter().map(|&i| scores.logits[i]).collect();
        let antecedents =
            top_k_antecedents(&kept_values, &coarse, self.config.linker.top_k_antecedents);
        let pair_scores = self.linker.pair_scores(tape, kept_reps, kept_logits, &antecedents)?;
        Ok(DocGraph {
            candidates,
            mention_logits,
            scores,
            pruned,
            antecedents,
            pair_scores,
        })
    }

    /// Predicted clusters for one document.
    pub fn predict(&self, doc: &Document, q: f64, emit_singletons: bool) -> Result<ClusterSet, ModelError> {
        let ids = self.ids(doc);
        let mut tape = Tape::new(&self.store);
        let g = self.forward(&mut tape, doc, &ids, q)?;
        let column: Vec<f64> = g
            .pair_scores
            .map(|v| tape.value(v).iter().copied().collect())
            .unwrap_or_default();
        let scores = AntecedentScores::from_column(g.antecedents, &column);
        Ok(decode(&g.pruned.kept, &scores, emit_singletons, &doc.doc_id))
    }

    /// Mention scores for every candidate, without the linker.
    pub fn mention_scores(&self, doc: &Document) -> Result<MentionScores, ModelError> {
        let ids = self.ids(doc);
        let mut tape = Tape::new(&self.store);
        let tokens = self.encoder.encode(&mut tape, &ids)?;
        let candidates = enumerate_candidates(doc.len(), self.config.detector.max_width);
        let reps = self.encoder.span_representations(&mut tape, tokens, &candidates.spans)?;
        let logits = self.detector.logits(&mut tape, reps)?;
        Ok(MentionScores {
            spans: candidates.spans,
            logits: tape.value(logits).iter().copied().collect(),
        })
    }

    /// Spans surviving top-M and the `q` threshold.
    pub fn detect(&self, doc: &Document, q: f64) -> Result<MentionAnnotation, ModelError> {
        let scores = self.mention_scores(doc)?;
        let kept = prune(&scores, self.config.detector.lambda_keep, q, doc.len())?;
        Ok(MentionAnnotation::new(doc.doc_id.clone(), kept.kept))
    }

    pub fn to_checkpoint(&self, config_hash: &str) -> Checkpoint {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config_hash: config_hash.to_string(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.store.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, ModelError> {
        if ckpt.format_version != FORMAT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                ckpt.format_version
            )));
        }
        let mut vocab = ckpt.vocab;
        vocab.reindex();
        if vocab.len() != ckpt.config.encoder.vocab_size {
            return Err(ModelError::Checkpoint("vocabulary size does not match config".into()));
        }
        Self::bind(ckpt.config, vocab, ckpt.params)
    }

    pub fn save(&self, path: &Path, config_hash: &str) -> Result<(), ModelError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        serde_json::to_writer(&mut w, &self.to_checkpoint(config_hash))
            .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, String), ModelError> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let hash = ckpt.config_hash.clone();
        Ok((Self::from_checkpoint(ckpt)?, hash))
    }

    /// Every parameter value, in store order; used for equality checks.
    pub fn parameters(&self) -> Vec<(&str, &Matrix)> {
        self.store.iter().map(|(_, p)| (p.name.as_str(), &p.value)).collect()
    }

    pub fn kept_spans(&self, doc: &Document, q: f64) -> Result<Vec<Span>, ModelError> {
        Ok(self.detect(doc, q)?.mentions.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SyntheticSpec};

    fn tiny() -> (CorefModel, Document) {
        let spec = SyntheticSpec {
            documents: 2,
            ..Default::default()
        };
        let corpus = generate_synthetic_corpus(&spec, 1).unwrap();
        let vocab = Vocab::from_corpora(&[&corpus]);
        let mut config = ModelConfig::default();
        config.encoder.embedding_dim = 8;
        let model = CorefModel::new(config, vocab, 4);
        (model, corpus.documents[0].clone())
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let (model, doc) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path, "abc").unwrap();
        let (back, hash) = CorefModel::load(&path).unwrap();
        assert_eq!(hash, "abc");
        assert_eq!(back.parameters(), model.parameters());
        assert_eq!(
            back.predict(&doc, 0.0, true).unwrap(),
            model.predict(&doc, 0.0, true).unwrap()
        );
    }

    #[test]
    fn wrong_version_is_rejected() {
        let (model, _) = tiny();
        let mut ckpt = model.to_checkpoint("x");
        ckpt.format_version = 99;
        assert!(matches!(
            CorefModel::from_checkpoint(ckpt),
            Err(ModelError::Checkpoint(_))
        ));
    }

    #[test]
    fn predictions_cover_only_kept_spans() {
        let (model, doc) = tiny();
        let kept = model.kept_spans(&doc, 0.0).unwrap();
        let pred = model.predict(&doc, 0.0, true).unwrap();
        let m = (model.config.detector.lambda_keep * doc.len() as f64).ceil() as usize;
        assert_eq!(pred.mention_count(), kept.len().min(m));
        for s in pred.clusters().iter().flatten() {
            assert!(kept.contains(s));
        }
    }
}
