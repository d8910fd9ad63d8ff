//! Antecedent candidates, pairwise scoring, the marginal-likelihood
//! coreference loss and cluster decoding.
//!
//! Every anaphor also competes with the dummy antecedent, whose score is
//! fixed at 0 and is never stored explicitly.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    antecedent_probabilities, AntecedentGroup, Component, Matrix, ParamId, ParamStore, Tape, Var,
};
use crate::corpus::{ClusterSet, Span};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LinkerError {
    #[error("span representations have {got} columns, scorer expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("top_k_antecedents must be at least 1")]
    InvalidTopK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkerConfig {
    pub top_k_antecedents: usize,
    pub hidden_dim: usize,
    pub distance_dim: usize,
    /// Unset means: emit singletons exactly when high-precision pruning is on.
    pub emit_singletons: Option<bool>,
}

impl Default for LinkerConfig {
    fn default() -> Self {
        LinkerConfig {
            top_k_antecedents: 50,
            hidden_dim: 32,
            distance_dim: 8,
            emit_singletons: None,
        }
    }
}

impl LinkerConfig {
    pub fn validate(&self) -> Result<(), LinkerError> {
        if self.top_k_antecedents == 0 {
            return Err(LinkerError::InvalidTopK);
        }
        if self.hidden_dim == 0 || self.distance_dim == 0 {
            return Err(LinkerError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(())
    }

    pub fn emit_singletons_for(&self, q: f64) -> bool {
        self.emit_singletons.unwrap_or(q > 0.0)
    }
}

/// Upper bounds of the offset buckets 1, 2, 3, 4, 5-7, 8-15, 16-31, 32-63;
/// everything beyond goes to the last bucket.
const DISTANCE_BOUNDS: [usize; 8] = [1, 2, 3, 4, 7, 15, 31, 63];
pub const DISTANCE_BUCKETS: usize = DISTANCE_BOUNDS.len() + 1;

pub fn distance_bucket(offset: usize) -> usize {
    debug_assert!(offset >= 1);
    DISTANCE_BOUNDS
        .iter()
        .position(|&b| offset <= b)
        .unwrap_or(DISTANCE_BOUNDS.len())
}

#[derive(Debug, Clone)]
pub struct LinkerParams {
    span_dim: usize,
    coarse: ParamId,
    distance: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl LinkerParams {
    pub fn init(
        span_dim: usize,
        config: &LinkerConfig,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let c = Component::AntecedentLinker;
        let input = 3 * span_dim + config.distance_dim;
        LinkerParams {
            span_dim,
            // Starts at zero so truncation initially ranks by mention scores.
            coarse: store.zeros("al.coarse", c, span_dim, span_dim),
            distance: store.normal("al.distance", c, DISTANCE_BUCKETS, config.distance_dim, 0.1, rng),
            w1: store.glorot("al.w1", c, input, config.hidden_dim, rng),
            b1: store.zeros("al.b1", c, 1, config.hidden_dim),
            w2: store.glorot("al.w2", c, config.hidden_dim, 1, rng),
            b2: store.zeros("al.b2", c, 1, 1),
        }
    }

    pub fn bind(span_dim: usize, store: &ParamStore) -> Option<Self> {
        Some(LinkerParams {
            span_dim,
            coarse: store.id("al.coarse")?,
            distance: store.id("al.distance")?,
            w1: store.id("al.w1")?,
            b1: store.id("al.b1")?,
            w2: store.id("al.w2")?,
            b2: store.id("al.b2")?,
        })
    }

    pub fn coarse_id(&self) -> ParamId {
        self.coarse
    }

    /// Bilinear `X W Xᵀ` over kept-span representations.
    pub fn coarse_scores(&self, store: &ParamStore, reps: &Matrix) -> Result<Matrix, LinkerError> {
        self.check_dim(reps.ncols())?;
        Ok(coarse_scores(reps, &store.get(self.coarse).value))
    }

    fn check_dim(&self, got: usize) -> Result<(), LinkerError> {
        if got != self.span_dim {
            return Err(LinkerError::DimensionMismatch {
                expected: self.span_dim,
                got,
            });
        }
        Ok(())
    }

    /// Records `s(i,j) = m_i + m_j + s_a(i,j)` for every listed pair as one
    /// column, anaphor by anaphor. `None` when there are no pairs.
    pub fn pair_scores(
        &self,
        tape: &mut Tape,
        reps: Var,
        mention_logits: Var,
        antecedents: &Antecedents,
    ) -> Result<Option<Var>, LinkerError> {
        self.check_dim(tape.value(reps).ncols())?;
        let (anaphors, ants): (Vec<usize>, Vec<usize>) = antecedents
            .lists
            .iter()
            .enumerate()
            .flat_map(|(i, js)| js.iter().map(move |&j| (i, j)))
            .unzip();
        if anaphors.is_empty() {
            return Ok(None);
        }
        let buckets = anaphors
            .iter()
            .zip(&ants)
            .map(|(i, j)| distance_bucket(i - j))
            .collect();
        let xi = tape.gather_rows(reps, anaphors.clone());
        let xj = tape.gather_rows(reps, ants.clone());
        let prod = tape.mul(xi, xj);
        let table = tape.param(self.distance);
        let dist = tape.gather_rows(table, buckets);
        let features = tape.hcat(vec![xi, xj, prod, dist]);
        let w1 = tape.param(self.w1);
        let b1 = tape.param(self.b1);
        let w2 = tape.param(self.w2);
        let b2 = tape.param(self.b2);
        let h = tape.matmul(features, w1);
        let h = tape.add_row(h, b1);
        let h = tape.tanh(h);
        let sa = tape.matmul(h, w2);
        let sa = tape.add_row(sa, b2);
        let mi = tape.gather_rows(mention_logits, anaphors);
        let mj = tape.gather_rows(mention_logits, ants);
        let m = tape.add(mi, mj);
        Ok(Some(tape.add(m, sa)))
    }
}

pub fn coarse_scores(reps: &Matrix, w: &Matrix) -> Matrix {
    reps.dot(w).dot(&reps.t())
}

/// Per anaphor (index into the kept spans), its antecedent candidates in
/// ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Antecedents {
    pub lists: Vec<Vec<usize>>,
}

impl Antecedents {
    pub fn pair_count(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

/// For each anaphor keeps the `k` preceding spans with the highest
/// `m_i + m_j + coarse(i, j)`; ties go to the nearer antecedent.
pub fn top_k_antecedents(mention_logits: &[f64], coarse: &Matrix, k: usize) -> Antecedents {
    let lists = (0..mention_logits.len())
        .map(|i| {
            let mut js: Vec<usize> = (0..i).collect();
            if js.len() > k {
                let key = |j: usize| mention_logits[i] + mention_logits[j] + coarse[[i, j]];
                js.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(b.cmp(&a)));
                js.truncate(k);
                js.sort_unstable();
            }
            js
        })
        .collect();
    Antecedents { lists }
}

/// Score values for decoding: `scores[i][n]` belongs to `lists[i][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AntecedentScores {
    pub antecedents: Antecedents,
    pub scores: Vec<Vec<f64>>,
}

impl AntecedentScores {
    /// Splits the flat pair column produced by [`LinkerParams::pair_scores`].
    pub fn from_column(antecedents: Antecedents, column: &[f64]) -> Self {
        let mut offset = 0;
        let scores = antecedents
            .lists
            .iter()
            .map(|js| {
                let row = column[offset..offset + js.len()].to_vec();
                offset += js.len();
                row
            })
            .collect();
        AntecedentScores {
            antecedents,
            scores,
        }
    }

    /// Per anaphor: entry 0 is the dummy, then one per candidate.
    pub fn distributions(&self) -> Vec<Vec<f64>> {
        let (flat, groups) = self.groups(|_, _| false);
        antecedent_probabilities(&flat, &groups)
    }

    fn groups(&self, correct: impl Fn(usize, usize) -> bool) -> (Vec<f64>, Vec<AntecedentGroup>) {
        let flat: Vec<f64> = self.scores.iter().flatten().copied().collect();
        (flat, build_groups(&self.antecedents, correct))
    }
}

fn build_groups(
    antecedents: &Antecedents,
    correct: impl Fn(usize, usize) -> bool,
) -> Vec<AntecedentGroup> {
    let mut offset = 0;
    antecedents
        .lists
        .iter()
        .enumerate()
        .map(|(i, js)| {
            let mask: Vec<bool> = js.iter().map(|&j| correct(i, j)).collect();
            let dummy_correct = !mask.iter().any(|&c| c);
            let g = AntecedentGroup {
                pairs: offset..offset + js.len(),
                correct: mask,
                dummy_correct,
            };
            offset += js.len();
            g
        })
        .collect()
}

/// Negative marginal log-likelihood of the correct antecedents. Spans
/// outside the gold clusters, and first surviving mentions of a cluster,
/// are trained toward the dummy. `None` when no pairs exist, in which case
/// the loss is exactly 0.
pub fn coref_loss(
    tape: &mut Tape,
    pair_scores: Option<Var>,
    kept: &[Span],
    antecedents: &Antecedents,
    gold: &ClusterSet,
) -> Option<Var> {
    let scores = pair_scores?;
    let index = gold.cluster_index();
    let cluster = |n: usize| index.get(&kept[n]).copied();
    let groups = build_groups(antecedents, |i, j| {
        matches!((cluster(i), cluster(j)), (Some(a), Some(b)) if a == b)
    });
    Some(tape.antecedent_nll(scores, groups))
}

/// Links each span to its best candidate and closes the links into
/// clusters. Ties go to the dummy, then to the nearer antecedent.
pub fn decode(kept: &[Span], scores: &AntecedentScores, emit_singletons: bool, doc_id: &str) -> ClusterSet {
    decode_with_dummy(kept, scores, 0.0, emit_singletons, doc_id)
}

/// [`decode`] with an explicit dummy score; only score differences matter.
pub fn decode_with_dummy(
    kept: &[Span],
    scores: &AntecedentScores,
    dummy: f64,
    emit_singletons: bool,
    doc_id: &str,
) -> ClusterSet {
    let n = kept.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut linked = vec![false; n];
    for (i, (js, ss)) in scores.antecedents.lists.iter().zip(&scores.scores).enumerate() {
        let mut best: Option<usize> = None;
        let mut best_score = dummy;
        // Nearest first so later equal scores never displace it.
        for (&j, &s) in js.iter().zip(ss).rev() {
            if s > best_score {
                best = Some(j);
                best_score = s;
            }
        }
        if let Some(j) = best {
            linked[i] = true;
            linked[j] = true;
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut clusters: BTreeMap<usize, Vec<Span>> = BTreeMap::new();
    for i in 0..n {
        if linked[i] || emit_singletons {
            let root = find(&mut parent, i);
            clusters.entry(root).or_default().push(kept[i]);
        }
    }
    ClusterSet::new(doc_id, clusters.into_values().collect(), None)
        .expect("kept spans are distinct")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::gradcheck::max_relative_error;
    use rand::{Rng, SeedableRng};

    fn spans(n: usize) -> Vec<Span> {
        (0..n).map(|i| Span::new(i, i)).collect()
    }

    fn full(n: usize) -> Antecedents {
        Antecedents {
            lists: (0..n).map(|i| (0..i).collect()).collect(),
        }
    }

    #[test]
    fn distance_buckets() {
        let got: Vec<usize> = [1, 2, 3, 4, 5, 7, 8, 15, 16, 31, 32, 63, 64, 500]
            .iter()
            .map(|&d| distance_bucket(d))
            .collect();
        assert_eq!(got, vec![0, 1, 2, 3, 4, 4, 5, 5, 6, 6, 7, 7, 8, 8]);
    }

    #[test]
    fn no_truncation_when_k_is_large() {
        let m = [0.3, -0.2, 1.0, 0.0];
        let a = top_k_antecedents(&m, &Matrix::zeros((4, 4)), 10);
        assert_eq!(a, full(4));
    }

    #[test]
    fn zero_coarse_ranks_by_mention_logits() {
        let m = [0.5, 2.0, -1.0, 1.0, 0.0];
        let a = top_k_antecedents(&m, &Matrix::zeros((5, 5)), 2);
        assert_eq!(a.lists[4], vec![1, 3]);
        assert_eq!(a.lists[2], vec![0, 1]);
        // equal keys: nearer wins
        let flat = top_k_antecedents(&[0.0; 5], &Matrix::zeros((5, 5)), 2);
        assert_eq!(flat.lists[4], vec![2, 3]);
    }

    #[test]
    fn two_span_loss_is_ln2() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let kept = spans(2);
        let gold = ClusterSet::new("d", vec![kept.clone()], None).unwrap();
        let s = tape.constant(Matrix::zeros((1, 1)));
        let l = coref_loss(&mut tape, Some(s), &kept, &full(2), &gold).unwrap();
        assert!((tape.scalar(l) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn no_gold_and_dummy_mass_gives_zero_loss() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let kept = spans(3);
        let gold = ClusterSet::empty("d");
        let s = tape.constant(Matrix::from_elem((3, 1), -1e4));
        let l = coref_loss(&mut tape, Some(s), &kept, &full(3), &gold).unwrap();
        assert!(tape.scalar(l).abs() < 1e-12);
    }

    #[test]
    fn distributions_normalize() {
        let a = full(4);
        let s = AntecedentScores::from_column(a, &[0.3, -2.0, 1.5, 0.0, 4.0, -0.5]);
        for d in s.distributions() {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_chain_and_singletons() {
        let kept = spans(4);
        // 1 -> 0, 2 -> 1, 3 -> dummy
        let s = AntecedentScores::from_column(full(4), &[1.0, -1.0, 2.0, -1.0, -1.0, -1.0]);
        let c = decode(&kept, &s, false, "d");
        assert_eq!(c.clusters(), &[kept[..3].to_vec()]);
        let c = decode(&kept, &s, true, "d");
        assert_eq!(c.clusters(), &[kept[..3].to_vec(), vec![kept[3]]]);
        let none = AntecedentScores::from_column(full(4), &[-1.0; 6]);
        assert!(decode(&kept, &none, false, "d").is_empty());
        assert_eq!(decode(&kept, &none, true, "d").len(), 4);
    }

    #[test]
    fn decode_tie_prefers_dummy_then_nearer() {
        let kept = spans(3);
        let s = AntecedentScores::from_column(full(3), &[0.0, 0.0, 0.0]);
        assert!(decode(&kept, &s, false, "d").is_empty());
        let s = AntecedentScores::from_column(full(3), &[-1.0, 1.0, 1.0]);
        let c = decode(&kept, &s, false, "d");
        assert_eq!(c.clusters(), &[vec![kept[1], kept[2]]]);
    }

    #[test]
    fn coref_loss_gradient_matches_finite_differences() {
        let dim = 4;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = LinkerConfig {
            hidden_dim: 3,
            distance_dim: 2,
            ..Default::default()
        };
        let p = LinkerParams::init(dim, &cfg, &mut store, &mut rng);
        let reps = Matrix::from_shape_simple_fn((5, dim), || rng.gen_range(-1.0..1.0));
        let logits = Matrix::from_shape_simple_fn((5, 1), || rng.gen_range(-1.0..1.0));
        let kept = spans(5);
        let gold = ClusterSet::new(
            "d",
            vec![vec![kept[0], kept[2], kept[4]], vec![kept[1]]],
            None,
        )
        .unwrap();
        let ante = full(5);
        let ids: Vec<ParamId> = store
            .iter()
            .filter(|(_, par)| par.name != "al.coarse")
            .map(|(id, _)| id)
            .collect();
        let err = max_relative_error(&mut store, &ids, |st| {
            let mut tape = Tape::new(st);
            let x = tape.constant(reps.clone());
            let m = tape.constant(logits.clone());
            let s = p.pair_scores(&mut tape, x, m, &ante).unwrap();
            let l = coref_loss(&mut tape, s, &kept, &ante, &gold).unwrap();
            (tape.scalar(l), tape.backward(l))
        });
        assert!(err < 1e-4, "relative error {err}");
    }
}
