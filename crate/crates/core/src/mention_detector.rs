//! Candidate spans, mention scoring, coarse-to-fine and high-precision
//! pruning, and the mention-detection loss.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Component, Matrix, ParamId, ParamStore, Tape, Var};
use crate::corpus::{Corpus, MentionAnnotation, Span};
use crate::model::{CorefModel, ModelError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DetectorError {
    #[error("span representations have {got} columns, scorer expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{got} representations for {expected} candidates")]
    CountMismatch { expected: usize, got: usize },
    #[error("threshold q={0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("lambda_keep={0} must be positive")]
    InvalidLambda(f64),
    #[error("max_width must be at least 1")]
    InvalidWidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub max_width: usize,
    pub lambda_keep: f64,
    /// High-precision threshold on mention probability; 0 disables it.
    pub q: f64,
    pub hidden_dim: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            max_width: 10,
            lambda_keep: 0.4,
            q: 0.5,
            hidden_dim: 32,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.max_width == 0 {
            return Err(DetectorError::InvalidWidth);
        }
        check_lambda(self.lambda_keep)?;
        check_q(self.q)?;
        if self.hidden_dim == 0 {
            return Err(DetectorError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(())
    }
}

fn check_q(q: f64) -> Result<(), DetectorError> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(DetectorError::InvalidThreshold(q))
    }
}

fn check_lambda(lambda: f64) -> Result<(), DetectorError> {
    if lambda > 0.0 {
        Ok(())
    } else {
        Err(DetectorError::InvalidLambda(lambda))
    }
}

/// All spans of width at most `max_width`, in document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub spans: Vec<Span>,
    pub max_width: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

pub fn enumerate_candidates(doc_len: usize, max_width: usize) -> CandidateSet {
    let mut spans = Vec::new();
    for start in 0..doc_len {
        for end in start..doc_len.min(start + max_width) {
            spans.push(Span::new(start, end));
        }
    }
    CandidateSet { spans, max_width }
}

/// Raw logits per candidate, aligned with the candidate order.
#[derive(Debug, Clone, PartialEq)]
pub struct MentionScores {
    pub spans: Vec<Span>,
    pub logits: Vec<f64>,
}

impl MentionScores {
    pub fn probability(&self, idx: usize) -> f64 {
        sigmoid(self.logits[idx])
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|&z| sigmoid(z)).collect()
    }
}

/// Output of pruning. `indices` point into the candidate list the scores
/// were computed for; `kept` and `indices` stay in document order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedCandidates {
    pub kept: Vec<Span>,
    pub indices: Vec<usize>,
    pub m: usize,
    pub q: f64,
}

/// Keeps the `ceil(lambda_keep * doc_len)` highest logits; ties go to the
/// earlier span.
pub fn c2f_prune(
    scores: &MentionScores,
    lambda_keep: f64,
    doc_len: usize,
) -> Result<PrunedCandidates, DetectorError> {
    check_lambda(lambda_keep)?;
    // Saturating cast: an infinite lambda keeps everything.
    let m = (lambda_keep * doc_len as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..scores.logits.len()).collect();
    order.sort_by(|&a, &b| {
        scores.logits[b]
            .total_cmp(&scores.logits[a])
            .then(a.cmp(&b))
    });
    order.truncate(m);
    order.sort_unstable();
    Ok(PrunedCandidates {
        kept: order.iter().map(|&i| scores.spans[i]).collect(),
        indices: order,
        m,
        q: 0.0,
    })
}

/// Keeps exactly the spans whose probability exceeds `q`. `q = 0` is the
/// identity, even for logits whose probability underflows to 0.
pub fn high_precision_prune(
    pruned: &PrunedCandidates,
    scores: &MentionScores,
    q: f64,
) -> Result<PrunedCandidates, DetectorError> {
    check_q(q)?;
    if q == 0.0 {
        return Ok(PrunedCandidates {
            q,
            ..pruned.clone()
        });
    }
    let (kept, indices) = pruned
        .kept
        .iter()
        .zip(&pruned.indices)
        .filter(|(_, &i)| scores.probability(i) > q)
        .map(|(s, &i)| (*s, i))
        .unzip();
    Ok(PrunedCandidates {
        kept,
        indices,
        m: pruned.m,
        q,
    })
}

/// `c2f_prune` followed by `high_precision_prune` when `q > 0`.
pub fn prune(
    scores: &MentionScores,
    lambda_keep: f64,
    q: f64,
    doc_len: usize,
) -> Result<PrunedCandidates, DetectorError> {
    let top = c2f_prune(scores, lambda_keep, doc_len)?;
    if q > 0.0 {
        high_precision_prune(&top, scores, q)
    } else {
        check_q(q)?;
        Ok(top)
    }
}

/// Feed-forward scorer `tanh(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone)]
pub struct DetectorParams {
    input_dim: usize,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl DetectorParams {
    pub fn init(
        input_dim: usize,
        config: &DetectorConfig,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let c = Component::MentionDetector;
        DetectorParams {
            input_dim,
            w1: store.glorot("md.w1", c, input_dim, config.hidden_dim, rng),
            b1: store.zeros("md.b1", c, 1, config.hidden_dim),
            w2: store.glorot("md.w2", c, config.hidden_dim, 1, rng),
            b2: store.zeros("md.b2", c, 1, 1),
        }
    }

    pub fn bind(input_dim: usize, store: &ParamStore) -> Option<Self> {
        Some(DetectorParams {
            input_dim,
            w1: store.id("md.w1")?,
            b1: store.id("md.b1")?,
            w2: store.id("md.w2")?,
            b2: store.id("md.b2")?,
        })
    }

    /// `N × 1` logits for `N × input_dim` representations.
    pub fn logits(&self, tape: &mut Tape, reps: Var) -> Result<Var, DetectorError> {
        let got = tape.value(reps).ncols();
        if got != self.input_dim {
            return Err(DetectorError::DimensionMismatch {
                expected: self.input_dim,
                got,
            });
        }
        let w1 = tape.param(self.w1);
        let b1 = tape.param(self.b1);
        let w2 = tape.param(self.w2);
        let b2 = tape.param(self.b2);
        let h = tape.matmul(reps, w1);
        let h = tape.add_row(h, b1);
        let h = tape.tanh(h);
        let z = tape.matmul(h, w2);
        Ok(tape.add_row(z, b2))
    }
}

/// Scores fixed representations without recording gradients.
pub fn mention_scores(
    candidates: &CandidateSet,
    reps: &Matrix,
    params: &DetectorParams,
    store: &ParamStore,
) -> Result<MentionScores, DetectorError> {
    if reps.nrows() != candidates.len() {
        return Err(DetectorError::CountMismatch {
            expected: candidates.len(),
            got: reps.nrows(),
        });
    }
    let mut tape = Tape::new(store);
    let x = tape.constant(reps.clone());
    let z = params.logits(&mut tape, x)?;
    Ok(MentionScores {
        spans: candidates.spans.clone(),
        logits: tape.value(z).iter().copied().collect(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MdLoss {
    pub loss: Var,
    /// Gold spans that could not be candidates (wider than `max_width`).
    pub skipped_gold: usize,
}

/// Summed binary cross-entropy over all candidates against gold membership.
pub fn md_loss(
    tape: &mut Tape,
    logits: Var,
    candidates: &CandidateSet,
    gold: &MentionAnnotation,
) -> MdLoss {
    let targets: Vec<f64> = candidates
        .spans
        .iter()
        .map(|s| if gold.mentions.contains(s) { 1.0 } else { 0.0 })
        .collect();
    let skipped_gold = gold
        .mentions
        .iter()
        .filter(|s| s.width() > candidates.max_width)
        .count();
    MdLoss {
        loss: tape.bce_with_logits(logits, targets),
        skipped_gold,
    }
}

/// Silver mentions per document: the spans surviving top-M and the `q`
/// threshold under the model's detector.
pub fn tag_silver(
    corpus: &Corpus,
    model: &CorefModel,
    q: f64,
) -> Result<BTreeMap<String, MentionAnnotation>, ModelError> {
    check_q(q)?;
    corpus
        .documents
        .iter()
        .map(|d| Ok((d.doc_id.clone(), model.detect(d, q)?)))
        .collect()
}
