//! Token encoder, span representations and the masked-token objective.
//!
//! The encoder is a token + position embedding followed by a stack of
//! context layers, each a residual self-attention sublayer and a residual
//! width-3 convolutional feed-forward sublayer. Documents longer than
//! `max_segment_length` are encoded as independent segments.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Component, Matrix, ParamId, ParamStore, Tape, Var};
use crate::corpus::{Corpus, Document, Span};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EncoderError {
    #[error("cannot encode an empty document")]
    EmptyDocument,
    #[error("span {span} out of bounds for {len} tokens")]
    SpanOutOfBounds { span: Span, len: usize },
    #[error("masked position {0} out of bounds")]
    BadMaskPosition(usize),
}

pub const UNK_ID: usize = 0;
pub const MASK_ID: usize = 1;
const UNK: &str = "<unk>";
const MASK: &str = "<mask>";

/// Closed whitespace-token vocabulary with reserved unknown and mask ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let unique: BTreeSet<&str> = words.into_iter().filter(|w| *w != UNK && *w != MASK).collect();
        let words: Vec<String> = [UNK, MASK]
            .into_iter()
            .chain(unique)
            .map(str::to_string)
            .collect();
        let mut v = Vocab {
            words,
            index: BTreeMap::new(),
        };
        v.reindex();
        v
    }

    pub fn from_corpora(corpora: &[&Corpus]) -> Self {
        Self::from_words(
            corpora
                .iter()
                .flat_map(|c| c.documents.iter())
                .flat_map(|d| d.tokens.iter().map(String::as_str)),
        )
    }

    pub(crate) fn reindex(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn ids(&self, doc: &Document) -> Vec<usize> {
        doc.tokens.iter().map(|t| self.id(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Filled from the vocabulary when a model is built.
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub context_layers: usize,
    pub hidden_dim: usize,
    pub max_segment_length: usize,
    pub width_buckets: usize,
    pub width_dim: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 0,
            embedding_dim: 24,
            context_layers: 1,
            hidden_dim: 32,
            max_segment_length: 512,
            width_buckets: 10,
            width_dim: 8,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn span_dim(&self) -> usize {
        3 * self.embedding_dim + self.width_dim
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.embedding_dim == 0 || self.hidden_dim == 0 || self.width_dim == 0 {
            return Err("encoder dimensions must be positive".into());
        }
        if self.max_segment_length == 0 {
            return Err("max_segment_length must be at least 1".into());
        }
        if self.width_buckets == 0 {
            return Err("width_buckets must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct LayerParams {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Handles to the encoder-owned parameters inside a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct EncoderParams {
    config: EncoderConfig,
    tokens: ParamId,
    positions: ParamId,
    layers: Vec<LayerParams>,
    span_attention: ParamId,
    width: ParamId,
    mlm_out: ParamId,
    mlm_bias: ParamId,
}

impl EncoderParams {
    pub fn init(config: &EncoderConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let c = Component::Encoder;
        let d = config.embedding_dim;
        let scale = 1.0 / (d as f64).sqrt();
        let tokens = store.normal("enc.tokens", c, config.vocab_size, d, scale, rng);
        let positions = store.normal("enc.positions", c, config.max_segment_length, d, 0.1 * scale, rng);
        let layers = (0..config.context_layers)
            .map(|l| LayerParams {
                wq: store.glorot(&format!("enc.l{l}.wq"), c, d, d, rng),
                wk: store.glorot(&format!("enc.l{l}.wk"), c, d, d, rng),
                wv: store.glorot(&format!("enc.l{l}.wv"), c, d, d, rng),
                wo: store.glorot(&format!("enc.l{l}.wo"), c, d, d, rng),
                w1: store.glorot(&format!("enc.l{l}.w1"), c, 3 * d, config.hidden_dim, rng),
                b1: store.zeros(&format!("enc.l{l}.b1"), c, 1, config.hidden_dim),
                w2: store.glorot(&format!("enc.l{l}.w2"), c, config.hidden_dim, d, rng),
                b2: store.zeros(&format!("enc.l{l}.b2"), c, 1, d),
            })
            .collect();
        let span_attention = store.glorot("enc.span_attention", c, d, 1, rng);
        let width = store.normal("enc.width", c, config.width_buckets, config.width_dim, 0.1, rng);
        let mlm_out = store.glorot("enc.mlm_out", c, d, config.vocab_size, rng);
        let mlm_bias = store.zeros("enc.mlm_bias", c, 1, config.vocab_size);
        EncoderParams {
            config: config.clone(),
            tokens,
            positions,
            layers,
            span_attention,
            width,
            mlm_out,
            mlm_bias,
        }
    }

    /// Re-resolves handles by name after a store was deserialized.
    pub fn bind(config: &EncoderConfig, store: &ParamStore) -> Option<Self> {
        let id = |n: &str| store.id(n);
        Some(EncoderParams {
            config: config.clone(),
            tokens: id("enc.tokens")?,
            positions: id("enc.positions")?,
            layers: (0..config.context_layers)
                .map(|l| {
                    Some(LayerParams {
                        wq: id(&format!("enc.l{l}.wq"))?,
                        wk: id(&format!("enc.l{l}.wk"))?,
                        wv: id(&format!("enc.l{l}.wv"))?,
                        wo: id(&format!("enc.l{l}.wo"))?,
                        w1: id(&format!("enc.l{l}.w1"))?,
                        b1: id(&format!("enc.l{l}.b1"))?,
                        w2: id(&format!("enc.l{l}.w2"))?,
                        b2: id(&format!("enc.l{l}.b2"))?,
                    })
                })
                .collect::<Option<Vec<_>>>()?,
            span_attention: id("enc.span_attention")?,
            width: id("enc.width")?,
            mlm_out: id("enc.mlm_out")?,
            mlm_bias: id("enc.mlm_bias")?,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn mlm_head(&self) -> (ParamId, ParamId) {
        (self.mlm_out, self.mlm_bias)
    }

    fn encode_segment(&self, tape: &mut Tape, ids: &[usize]) -> Var {
        let d = self.config.embedding_dim as f64;
        let table = tape.param(self.tokens);
        let pos_table = tape.param(self.positions);
        let tok = tape.gather_rows(table, ids.to_vec());
        let pos = tape.gather_rows(pos_table, (0..ids.len()).collect());
        let mut h = tape.add(tok, pos);
        for layer in &self.layers {
            let wq = tape.param(layer.wq);
            let wk = tape.param(layer.wk);
            let wv = tape.param(layer.wv);
            let wo = tape.param(layer.wo);
            let q = tape.matmul(h, wq);
            let k = tape.matmul(h, wk);
            let v = tape.matmul(h, wv);
            let logits = tape.matmul_bt(q, k);
            let logits = tape.scale(logits, 1.0 / d.sqrt());
            let attn = tape.softmax_rows(logits);
            let ctx = tape.matmul(attn, v);
            let ctx = tape.matmul(ctx, wo);
            h = tape.add(h, ctx);

            let w1 = tape.param(layer.w1);
            let b1 = tape.param(layer.b1);
            let w2 = tape.param(layer.w2);
            let b2 = tape.param(layer.b2);
            // Width-3 convolution: each row sees its neighbours, zero-padded
            // at the segment edges.
            let n = ids.len();
            let zero = tape.constant(Matrix::zeros((1, self.config.embedding_dim)));
            let padded = tape.vcat(vec![h, zero]);
            let left = tape.gather_rows(padded, std::iter::once(n).chain(0..n - 1).collect());
            let right = tape.gather_rows(padded, (1..=n).collect());
            let window = tape.hcat(vec![left, h, right]);
            let f = tape.matmul(window, w1);
            let f = tape.add_row(f, b1);
            let f = tape.tanh(f);
            let f = tape.matmul(f, w2);
            let f = tape.add_row(f, b2);
            h = tape.add(h, f);
        }
        h
    }

    /// One row per token; `T × embedding_dim`.
    pub fn encode(&self, tape: &mut Tape, ids: &[usize]) -> Result<Var, EncoderError> {
        if ids.is_empty() {
            return Err(EncoderError::EmptyDocument);
        }
        let segments: Vec<Var> = ids
            .chunks(self.config.max_segment_length)
            .map(|seg| self.encode_segment(tape, seg))
            .collect();
        Ok(if segments.len() == 1 {
            segments[0]
        } else {
            tape.vcat(segments)
        })
    }

    pub fn width_bucket(&self, span: &Span) -> usize {
        span.width().min(self.config.width_buckets) - 1
    }

    /// `N × span_dim` matrix: `[start, end, attended head, width embedding]`
    /// per span.
    pub fn span_representations(
        &self,
        tape: &mut Tape,
        tokens: Var,
        spans: &[Span],
    ) -> Result<Var, EncoderError> {
        let len = tape.value(tokens).nrows();
        if let Some(bad) = spans.iter().find(|s| !s.in_bounds(len)) {
            return Err(EncoderError::SpanOutOfBounds { span: *bad, len });
        }
        let starts = tape.gather_rows(tokens, spans.iter().map(|s| s.start).collect());
        let ends = tape.gather_rows(tokens, spans.iter().map(|s| s.end).collect());
        let w = tape.param(self.span_attention);
        let head_scores = tape.matmul(tokens, w);
        let heads = tape.span_attend(tokens, head_scores, spans.iter().map(|s| (s.start, s.end)).collect());
        let width_table = tape.param(self.width);
        let widths = tape.gather_rows(width_table, spans.iter().map(|s| self.width_bucket(s)).collect());
        Ok(tape.hcat(vec![starts, ends, heads, widths]))
    }

    /// Mean cross-entropy of predicting each masked token's original id.
    /// Returns `None` for an empty plan (zero loss, no graph).
    pub fn mlm_loss(
        &self,
        tape: &mut Tape,
        ids: &[usize],
        plan: &MaskingPlan,
    ) -> Result<Option<Var>, EncoderError> {
        if plan.is_empty() {
            return Ok(None);
        }
        let mut masked = ids.to_vec();
        for &p in &plan.masked_positions {
            *masked.get_mut(p).ok_or(EncoderError::BadMaskPosition(p))? = MASK_ID;
        }
        let h = self.encode(tape, &masked)?;
        let rows = tape.gather_rows(h, plan.masked_positions.clone());
        let out = tape.param(self.mlm_out);
        let bias = tape.param(self.mlm_bias);
        let logits = tape.matmul(rows, out);
        let logits = tape.add_row(logits, bias);
        let targets = plan
            .masked_positions
            .iter()
            .map(|p| plan.original_tokens[p])
            .collect();
        Ok(Some(tape.softmax_xent_mean(logits, targets)))
    }
}

/// Token vectors for a document under fixed parameters.
pub fn encode_document(
    params: &EncoderParams,
    store: &ParamStore,
    ids: &[usize],
) -> Result<Matrix, EncoderError> {
    let mut tape = Tape::new(store);
    let h = params.encode(&mut tape, ids)?;
    Ok(tape.value(h).clone())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MaskingPlan {
    pub masked_positions: Vec<usize>,
    pub original_tokens: BTreeMap<usize, usize>,
}

impl MaskingPlan {
    pub fn is_empty(&self) -> bool {
        self.masked_positions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.masked_positions.len()
    }
}

/// Round-half-up of `rate * n`.
pub fn masked_count(n: usize, rate: f64) -> usize {
    (rate * n as f64 + 0.5 + 1e-9).floor() as usize
}

pub fn make_masking_plan(ids: &[usize], rate: f64, seed: u64) -> MaskingPlan {
    let k = masked_count(ids.len(), rate).min(ids.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = rand::seq::index::sample(&mut rng, ids.len(), k).into_vec();
    positions.sort_unstable();
    let original_tokens = positions.iter().map(|&p| (p, ids[p])).collect();
    MaskingPlan {
        masked_positions: positions,
        original_tokens,
    }
}

/// Derives a per-use seed so masking differs across steps but stays
/// reproducible.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.gen()
}
