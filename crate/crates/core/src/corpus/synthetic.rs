//! Synthetic coreference corpora for desk-scale experiments.
//!
//! Every token slot is drawn either from a lexicon shared by all domains or,
//! with probability `lexicon_shift`, from a lexicon private to the domain.
//! A domain generated with shift `s` therefore has a token-level
//! out-of-vocabulary rate of about `s` against a shift-0 domain.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    derive_mentions, AnnotationStyle, ClusterSet, Corpus, CorpusError, Document, Result, Span,
    Split,
};

const DETERMINERS: usize = 4;
const MODIFIERS: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    /// Domain tag; also prefixes domain-private words.
    pub domain: String,
    pub documents: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub entities_min: usize,
    pub entities_max: usize,
    /// Mentions per non-singleton entity, inclusive range.
    pub mentions_min: usize,
    pub mentions_max: usize,
    /// Fraction of entities that are mentioned exactly once.
    pub singleton_rate: f64,
    pub shared_filler_vocab: usize,
    pub shared_entity_vocab: usize,
    pub domain_filler_vocab: usize,
    pub domain_entity_vocab: usize,
    pub lexicon_shift: f64,
    pub singletons_annotated: bool,
    pub split: Split,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            domain: "source".into(),
            documents: 50,
            min_length: 40,
            max_length: 60,
            entities_min: 3,
            entities_max: 5,
            mentions_min: 2,
            mentions_max: 4,
            singleton_rate: 0.2,
            shared_filler_vocab: 120,
            shared_entity_vocab: 120,
            domain_filler_vocab: 120,
            domain_entity_vocab: 120,
            lexicon_shift: 0.0,
            singletons_annotated: true,
            split: Split::Train,
        }
    }
}

impl SyntheticSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CorpusError::Spec(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(CorpusError::Spec(m.to_string()));
        if self.documents == 0 {
            return err("documents must be positive");
        }
        if self.min_length == 0 || self.min_length > self.max_length {
            return err("need 0 < min_length <= max_length");
        }
        if self.entities_min > self.entities_max {
            return err("entities_min exceeds entities_max");
        }
        if self.mentions_min < 2 || self.mentions_min > self.mentions_max {
            return err("need 2 <= mentions_min <= mentions_max");
        }
        if !(0.0..=1.0).contains(&self.singleton_rate) {
            return err("singleton_rate must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lexicon_shift) {
            return err("lexicon_shift must lie in [0, 1]");
        }
        if self.shared_filler_vocab == 0 || self.shared_entity_vocab == 0 {
            return err("shared vocabularies must be nonempty");
        }
        if self.lexicon_shift > 0.0 && (self.domain_filler_vocab == 0 || self.domain_entity_vocab == 0)
        {
            return err("domain vocabularies must be nonempty when lexicon_shift > 0");
        }
        // Each mention takes at most three tokens; the longest document must
        // be able to hold the largest entity draw.
        if self.entities_max * self.mentions_max * 3 > self.max_length {
            return err("entities_max * mentions_max * 3 exceeds max_length");
        }
        // Entities in one document need distinct head words.
        if self.entities_max > self.shared_entity_vocab
            || (self.lexicon_shift > 0.0 && self.entities_max > self.domain_entity_vocab)
        {
            return err("entity vocabularies smaller than entities_max");
        }
        Ok(())
    }
}

struct Lexicon<'a> {
    spec: &'a SyntheticSpec,
}

impl Lexicon<'_> {
    fn private(&self, rng: &mut ChaCha8Rng) -> bool {
        self.spec.lexicon_shift > 0.0 && rng.gen::<f64>() < self.spec.lexicon_shift
    }

    fn filler(&self, rng: &mut ChaCha8Rng) -> String {
        if self.private(rng) {
            format!("{}.f{}", self.spec.domain, rng.gen_range(0..self.spec.domain_filler_vocab))
        } else {
            format!("f{}", rng.gen_range(0..self.spec.shared_filler_vocab))
        }
    }

    fn determiner(&self, rng: &mut ChaCha8Rng) -> String {
        if self.private(rng) {
            format!("{}.d{}", self.spec.domain, rng.gen_range(0..DETERMINERS))
        } else {
            format!("d{}", rng.gen_range(0..DETERMINERS))
        }
    }

    fn modifier(&self, rng: &mut ChaCha8Rng) -> String {
        if self.private(rng) {
            format!("{}.m{}", self.spec.domain, rng.gen_range(0..MODIFIERS))
        } else {
            format!("m{}", rng.gen_range(0..MODIFIERS))
        }
    }

    fn head(&self, rng: &mut ChaCha8Rng, taken: &mut HashSet<String>) -> String {
        let private = self.private(rng);
        loop {
            let word = if private {
                format!("{}.e{}", self.spec.domain, rng.gen_range(0..self.spec.domain_entity_vocab))
            } else {
                format!("e{}", rng.gen_range(0..self.spec.shared_entity_vocab))
            };
            if taken.insert(word.clone()) {
                return word;
            }
        }
    }
}

/// Generates a corpus that is a pure function of `(spec, seed)`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = Lexicon { spec };
    let mut corpus = Corpus {
        style: AnnotationStyle {
            singletons_annotated: spec.singletons_annotated,
            entity_categories: None,
        },
        split: spec.split,
        ..Default::default()
    };
    // Global entity counter; singletons are spread with a low-discrepancy
    // rule so the realized rate tracks `singleton_rate` closely.
    let mut entity_counter = 0usize;
    for d in 0..spec.documents {
        let drawn_length = rng.gen_range(spec.min_length..=spec.max_length);
        let n_entities = rng.gen_range(spec.entities_min..=spec.entities_max);
        let mut taken = HashSet::new();
        // (entity, mention tokens)
        let mut mentions: Vec<(usize, Vec<String>)> = Vec::new();
        for e in 0..n_entities {
            let g = entity_counter as f64;
            entity_counter += 1;
            let singleton = ((g + 1.0) * spec.singleton_rate).floor() > (g * spec.singleton_rate).floor();
            let count = if singleton {
                1
            } else {
                rng.gen_range(spec.mentions_min..=spec.mentions_max)
            };
            let head = lex.head(&mut rng, &mut taken);
            for _ in 0..count {
                let form = rng.gen_range(0..3);
                let mut toks = Vec::with_capacity(3);
                if form >= 1 {
                    toks.push(lex.determiner(&mut rng));
                }
                if form == 2 {
                    toks.push(lex.modifier(&mut rng));
                }
                toks.push(head.clone());
                mentions.push((e, toks));
            }
        }
        mentions.shuffle(&mut rng);
        let mention_tokens: usize = mentions.iter().map(|(_, t)| t.len()).sum();
        // Documents stretch past the drawn length when the mentions need it.
        let length = drawn_length.max(mention_tokens);
        let fillers = length - mention_tokens;
        // Interleave: `true` marks a mention slot.
        let mut slots: Vec<bool> = std::iter::repeat(true)
            .take(mentions.len())
            .chain(std::iter::repeat(false).take(fillers))
            .collect();
        slots.shuffle(&mut rng);

        let mut tokens = Vec::with_capacity(length);
        let mut clusters: Vec<Vec<Span>> = vec![Vec::new(); n_entities];
        let mut next = mentions.into_iter();
        for slot in slots {
            if slot {
                let (entity, toks) = next.next().expect("slot count matches mentions");
                let start = tokens.len();
                tokens.extend(toks);
                clusters[entity].push(Span::new(start, tokens.len() - 1));
            } else {
                tokens.push(lex.filler(&mut rng));
            }
        }
        if !spec.singletons_annotated {
            clusters.retain(|c| c.len() > 1);
        }
        let doc_id = format!("{}-{}-{:04}", spec.domain, spec.split.as_str(), d);
        let clusters = ClusterSet::new(doc_id.clone(), clusters, Some(tokens.len()))?;
        let mentions = derive_mentions(&clusters);
        corpus.push(
            Document {
                doc_id,
                tokens,
                domain: spec.domain.clone(),
            },
            Some(mentions),
            Some(clusters),
        )?;
    }
    Ok(corpus)
}

/// Fraction of `target` tokens whose type never occurs in `reference`.
pub fn oov_rate(reference: &Corpus, target: &Corpus) -> f64 {
    let known: BTreeSet<&str> = reference
        .documents
        .iter()
        .flat_map(|d| d.tokens.iter().map(String::as_str))
        .collect();
    let (mut total, mut oov) = (0usize, 0usize);
    for tok in target.documents.iter().flat_map(|d| d.tokens.iter()) {
        total += 1;
        if !known.contains(tok.as_str()) {
            oov += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        oov as f64 / total as f64
    }
}
