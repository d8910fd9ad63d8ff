//! Documents, mention and coreference annotations, and their two on-disk
//! formats (CoNLL-2012 columns and line-delimited JSON standoff).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

mod synthetic;

pub use synthetic::{generate_synthetic_corpus, oov_rate, SyntheticSpec};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("document {doc_id}: {message}")]
    Validation { doc_id: String, message: String },
    #[error("synthetic spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Inclusive token range. Ordering is document order: by start, then end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn in_bounds(&self, len: usize) -> bool {
        self.start <= self.end && self.end < len
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span { start: v[0], end: v[1] }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub domain: String,
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MentionAnnotation {
    pub doc_id: String,
    pub mentions: BTreeSet<Span>,
}

impl MentionAnnotation {
    pub fn new(doc_id: impl Into<String>, mentions: impl IntoIterator<Item = Span>) -> Self {
        MentionAnnotation {
            doc_id: doc_id.into(),
            mentions: mentions.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.mentions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mentions.is_empty()
    }
}

/// Disjoint clusters of spans for one document.
///
/// Clusters are kept in a canonical order (spans sorted inside each cluster,
/// clusters sorted by their first span) so equality does not depend on the
/// order annotations were read in.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterSet {
    pub doc_id: String,
    clusters: Vec<Vec<Span>>,
}

impl ClusterSet {
    /// Validates disjointness and non-emptiness. `doc_len`, when given, is
    /// also used for a bounds check.
    pub fn new(
        doc_id: impl Into<String>,
        clusters: Vec<Vec<Span>>,
        doc_len: Option<usize>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(clusters.len());
        for mut cluster in clusters {
            if cluster.is_empty() {
                return Err(CorpusError::Validation {
                    doc_id,
                    message: "empty cluster".into(),
                });
            }
            for span in &cluster {
                if span.start > span.end {
                    return Err(CorpusError::Validation {
                        doc_id,
                        message: format!("span {span} has start after end"),
                    });
                }
                if let Some(len) = doc_len {
                    if !span.in_bounds(len) {
                        return Err(CorpusError::Validation {
                            doc_id,
                            message: format!("span {span} out of bounds for {len} tokens"),
                        });
                    }
                }
                if !seen.insert(*span) {
                    return Err(CorpusError::Validation {
                        doc_id,
                        message: format!("span {span} appears more than once"),
                    });
                }
            }
            cluster.sort();
            normalized.push(cluster);
        }
        normalized.sort();
        Ok(ClusterSet {
            doc_id,
            clusters: normalized,
        })
    }

    pub fn empty(doc_id: impl Into<String>) -> Self {
        ClusterSet {
            doc_id: doc_id.into(),
            clusters: Vec::new(),
        }
    }

    pub fn clusters(&self) -> &[Vec<Span>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn mention_count(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Map from span to the index of its cluster.
    pub fn cluster_index(&self) -> HashMap<Span, usize> {
        let mut map = HashMap::with_capacity(self.mention_count());
        for (ci, cluster) in self.clusters.iter().enumerate() {
            for span in cluster {
                map.insert(*span, ci);
            }
        }
        map
    }

    /// Copy with clusters of size 1 removed.
    pub fn without_singletons(&self) -> ClusterSet {
        ClusterSet {
            doc_id: self.doc_id.clone(),
            clusters: self
                .clusters
                .iter()
                .filter(|c| c.len() > 1)
                .cloned()
                .collect(),
        }
    }
}

/// Union of all cluster members.
pub fn derive_mentions(clusters: &ClusterSet) -> MentionAnnotation {
    MentionAnnotation::new(
        clusters.doc_id.clone(),
        clusters.clusters.iter().flatten().copied(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationStyle {
    pub singletons_annotated: bool,
    #[serde(default)]
    pub entity_categories: Option<BTreeSet<String>>,
}

impl Default for AnnotationStyle {
    fn default() -> Self {
        AnnotationStyle {
            singletons_annotated: false,
            entity_categories: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub mention_annotations: BTreeMap<String, MentionAnnotation>,
    pub coref_annotations: BTreeMap<String, ClusterSet>,
    pub style: AnnotationStyle,
    pub split: Split,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn has_coref(&self) -> bool {
        !self.coref_annotations.is_empty()
    }

    pub fn has_mentions(&self) -> bool {
        !self.mention_annotations.is_empty()
    }

    pub fn mention_count(&self) -> usize {
        self.mention_annotations.values().map(MentionAnnotation::len).sum()
    }

    /// Adds a document with optional annotations, checking id uniqueness and
    /// span bounds.
    pub fn push(
        &mut self,
        doc: Document,
        mentions: Option<MentionAnnotation>,
        clusters: Option<ClusterSet>,
    ) -> Result<()> {
        if doc.tokens.is_empty() {
            return Err(CorpusError::Validation {
                doc_id: doc.doc_id,
                message: "document has no tokens".into(),
            });
        }
        if self.documents.iter().any(|d| d.doc_id == doc.doc_id) {
            return Err(CorpusError::Validation {
                doc_id: doc.doc_id,
                message: "duplicate doc_id".into(),
            });
        }
        let len = doc.len();
        if let Some(m) = &mentions {
            if let Some(bad) = m.mentions.iter().find(|s| !s.in_bounds(len)) {
                return Err(CorpusError::Validation {
                    doc_id: doc.doc_id,
                    message: format!("mention {bad} out of bounds for {len} tokens"),
                });
            }
        }
        if let Some(c) = &clusters {
            if let Some(bad) = c.clusters().iter().flatten().find(|s| !s.in_bounds(len)) {
                return Err(CorpusError::Validation {
                    doc_id: doc.doc_id,
                    message: format!("span {bad} out of bounds for {len} tokens"),
                });
            }
        }
        if let Some(m) = mentions {
            self.mention_annotations.insert(doc.doc_id.clone(), m);
        }
        if let Some(c) = clusters {
            self.coref_annotations.insert(doc.doc_id.clone(), c);
        }
        self.documents.push(doc);
        Ok(())
    }

    /// New corpus holding only the listed documents (in the given order) and
    /// their annotations.
    pub fn subset<'a>(&self, doc_ids: impl IntoIterator<Item = &'a str>) -> Corpus {
        let mut out = Corpus {
            style: self.style.clone(),
            split: self.split,
            ..Default::default()
        };
        for id in doc_ids {
            if let Some(doc) = self.document(id) {
                out.documents.push(doc.clone());
                if let Some(m) = self.mention_annotations.get(id) {
                    out.mention_annotations.insert(id.to_string(), m.clone());
                }
                if let Some(c) = self.coref_annotations.get(id) {
                    out.coref_annotations.insert(id.to_string(), c.clone());
                }
            }
        }
        out
    }

    /// Drops coreference links, keeping mention annotations (derived from
    /// clusters where no explicit mention set exists).
    pub fn mentions_only(&self) -> Corpus {
        let mut out = self.clone();
        for (id, clusters) in &self.coref_annotations {
            out.mention_annotations
                .entry(id.clone())
                .or_insert_with(|| derive_mentions(clusters));
        }
        out.coref_annotations.clear();
        out
    }

    /// Drops all annotations.
    pub fn unlabeled(&self) -> Corpus {
        Corpus {
            documents: self.documents.clone(),
            style: self.style.clone(),
            split: self.split,
            ..Default::default()
        }
    }

    fn infer_style(&mut self) {
        self.style.singletons_annotated = self
            .coref_annotations
            .values()
            .any(|c| c.clusters().iter().any(|k| k.len() == 1));
    }
}

// ---------------------------------------------------------------------------
// CoNLL-2012

struct OpenDoc {
    doc_id: String,
    tokens: Vec<String>,
    /// cluster id -> stack of (start token, line of the opening bracket)
    open: BTreeMap<String, Vec<(usize, usize)>>,
    clusters: BTreeMap<String, Vec<Span>>,
}

impl OpenDoc {
    fn new(doc_id: String) -> Self {
        OpenDoc {
            doc_id,
            tokens: Vec::new(),
            open: BTreeMap::new(),
            clusters: BTreeMap::new(),
        }
    }

    fn apply_coref(&mut self, column: &str, line: usize) -> Result<()> {
        if column == "-" || column == "_" {
            return Ok(());
        }
        let pos = self.tokens.len() - 1;
        for part in column.split('|') {
            let err = |message: String| CorpusError::Format { line, message };
            let opens = part.starts_with('(');
            let closes = part.ends_with(')');
            let id = part.trim_start_matches('(').trim_end_matches(')');
            if id.is_empty() || (!opens && !closes) {
                return Err(err(format!("malformed coreference item {part:?}")));
            }
            match (opens, closes) {
                (true, true) => {
                    self.clusters
                        .entry(id.to_string())
                        .or_default()
                        .push(Span::new(pos, pos));
                }
                (true, false) => {
                    self.open.entry(id.to_string()).or_default().push((pos, line));
                }
                (false, true) => {
                    let start = self
                        .open
                        .get_mut(id)
                        .and_then(Vec::pop)
                        .ok_or_else(|| err(format!("cluster {id} closed without opening")))?;
                    self.clusters
                        .entry(id.to_string())
                        .or_default()
                        .push(Span::new(start.0, pos));
                }
                (false, false) => unreachable!(),
            }
        }
        Ok(())
    }

    fn finish(self, line: usize, corpus: &mut Corpus) -> Result<()> {
        if let Some((id, stack)) = self.open.iter().find(|(_, s)| !s.is_empty()) {
            return Err(CorpusError::Format {
                line,
                message: format!(
                    "document {} ended with cluster {id} still open (opened on line {})",
                    self.doc_id, stack[0].1
                ),
            });
        }
        if self.tokens.is_empty() {
            return Ok(());
        }
        let len = self.tokens.len();
        let clusters = ClusterSet::new(
            self.doc_id.clone(),
            self.clusters.into_values().collect(),
            Some(len),
        )
        .map_err(|e| CorpusError::Format {
            line,
            message: e.to_string(),
        })?;
        let mentions = derive_mentions(&clusters);
        let doc = Document {
            doc_id: self.doc_id,
            tokens: self.tokens,
            domain: String::new(),
        };
        corpus
            .push(doc, Some(mentions), Some(clusters))
            .map_err(|e| CorpusError::Format {
                line,
                message: e.to_string(),
            })
    }
}

fn parse_begin(line: &str) -> String {
    // "#begin document (name); part 000"
    let rest = line.trim_start_matches("#begin document").trim();
    let (name, part) = match rest.find(')') {
        Some(close) if rest.starts_with('(') => {
            let name = &rest[1..close];
            let part = rest[close + 1..]
                .trim_start_matches(';')
                .trim()
                .trim_start_matches("part")
                .trim();
            (name.to_string(), part.to_string())
        }
        _ => (rest.to_string(), String::new()),
    };
    if part.is_empty() || part.chars().all(|c| c == '0') {
        name
    } else {
        format!("{name}_part{part}")
    }
}

/// Reads CoNLL-2012 coreference columns. Lines with at least four columns
/// take the word from column 4 (the 2012 layout); two-column lines are
/// `word coref`. The coreference column is always the last one.
pub fn parse_conll<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    let mut current: Option<OpenDoc> = None;
    let mut implicit = 0usize;
    let mut last_line = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.starts_with("#begin document") {
            if let Some(doc) = current.take() {
                doc.finish(line_no, &mut corpus)?;
            }
            current = Some(OpenDoc::new(parse_begin(trimmed)));
            continue;
        }
        if trimmed.starts_with("#end document") {
            match current.take() {
                Some(doc) => doc.finish(line_no, &mut corpus)?,
                None => {
                    return Err(CorpusError::Format {
                        line: line_no,
                        message: "#end document without #begin document".into(),
                    })
                }
            }
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        let word = match cols.len() {
            2 | 3 => cols[0],
            n if n >= 4 => cols[3],
            _ => {
                return Err(CorpusError::Format {
                    line: line_no,
                    message: "expected word and coreference columns".into(),
                })
            }
        };
        let doc = current.get_or_insert_with(|| {
            implicit += 1;
            OpenDoc::new(format!("doc{}", implicit - 1))
        });
        doc.tokens.push(word.to_string());
        doc.apply_coref(cols[cols.len() - 1], line_no)?;
    }
    if let Some(doc) = current.take() {
        doc.finish(last_line, &mut corpus)?;
    }
    corpus.infer_style();
    Ok(corpus)
}

fn coref_column(pos: usize, opens: &[(usize, Span)], closes: &[(usize, Span)]) -> String {
    let mut items = Vec::new();
    for (id, _) in closes.iter().filter(|(_, s)| s.end == pos && s.start != pos) {
        items.push(format!("{id})"));
    }
    for (id, _) in opens.iter().filter(|(_, s)| s.start == pos && s.end == pos) {
        items.push(format!("({id})"));
    }
    for (id, _) in opens.iter().filter(|(_, s)| s.start == pos && s.end != pos) {
        items.push(format!("({id}"));
    }
    if items.is_empty() {
        "-".to_string()
    } else {
        items.join("|")
    }
}

/// Two spans of one cluster that overlap without nesting have no unambiguous
/// bracket encoding.
fn crossing_pair(cluster: &[Span]) -> Option<(Span, Span)> {
    // Sorted by (start, end): only later spans can cross an earlier one. A
    // span opening on the token where another closes is encodable, since
    // closings are written first.
    for (i, a) in cluster.iter().enumerate() {
        for b in &cluster[i + 1..] {
            if b.start >= a.end {
                break;
            }
            if b.start > a.start && b.end > a.end {
                return Some((*a, *b));
            }
        }
    }
    None
}

/// Writes documents that carry cluster annotations (documents without
/// clusters are written with an all-`-` coreference column). Crossing spans
/// within one cluster are rejected since bracket notation cannot express
/// them.
pub fn serialize_conll<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    for doc in &corpus.documents {
        let mut opens: Vec<(usize, Span)> = Vec::new();
        if let Some(clusters) = corpus.coref_annotations.get(&doc.doc_id) {
            for (id, cluster) in clusters.clusters().iter().enumerate() {
                if let Some((a, b)) = crossing_pair(cluster) {
                    return Err(CorpusError::Validation {
                        doc_id: doc.doc_id.clone(),
                        message: format!("spans {a} and {b} of one cluster cross; CoNLL cannot encode them"),
                    });
                }
                for span in cluster {
                    opens.push((id, *span));
                }
            }
        }
        writeln!(out, "#begin document ({}); part 000", doc.doc_id)?;
        // Longer spans open first so inner spans close before outer ones.
        opens.sort_by(|a, b| a.1.start.cmp(&b.1.start).then(b.1.end.cmp(&a.1.end)));
        let mut closes = opens.clone();
        closes.sort_by(|a, b| a.1.end.cmp(&b.1.end).then(b.1.start.cmp(&a.1.start)));
        for (pos, tok) in doc.tokens.iter().enumerate() {
            writeln!(
                out,
                "{}\t0\t{}\t{}\t{}",
                doc.doc_id,
                pos,
                tok,
                coref_column(pos, &opens, &closes)
            )?;
        }
        writeln!(out, "#end document")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Standoff JSON lines

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StandoffRecord {
    pub doc_id: String,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mentions: Option<Vec<Span>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<Vec<Vec<Span>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

/// Reads one JSON record per line. Mentions are derived from clusters when a
/// record has clusters but no explicit mention list.
pub fn parse_standoff<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut corpus = Corpus::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StandoffRecord =
            serde_json::from_str(&line).map_err(|e| CorpusError::Format {
                line: idx + 1,
                message: e.to_string(),
            })?;
        let len = rec.tokens.len();
        let doc_id = rec.doc_id.clone();
        let invalid = |message: String| CorpusError::Validation {
            doc_id: doc_id.clone(),
            message,
        };
        let mentions = match &rec.mentions {
            Some(list) => {
                let mut set = BTreeSet::new();
                for span in list {
                    if !span.in_bounds(len) {
                        return Err(invalid(format!(
                            "mention {span} out of bounds for {len} tokens"
                        )));
                    }
                    if !set.insert(*span) {
                        return Err(invalid(format!("duplicate mention {span}")));
                    }
                }
                Some(MentionAnnotation {
                    doc_id: doc_id.clone(),
                    mentions: set,
                })
            }
            None => None,
        };
        let clusters = match rec.clusters {
            Some(c) => Some(ClusterSet::new(doc_id.clone(), c, Some(len))?),
            None => None,
        };
        let mentions = mentions.or_else(|| clusters.as_ref().map(derive_mentions));
        let doc = Document {
            doc_id: rec.doc_id,
            tokens: rec.tokens,
            domain: rec.domain.unwrap_or_default(),
        };
        corpus.push(doc, mentions, clusters)?;
    }
    corpus.infer_style();
    Ok(corpus)
}

pub fn standoff_record(corpus: &Corpus, doc: &Document) -> StandoffRecord {
    StandoffRecord {
        doc_id: doc.doc_id.clone(),
        tokens: doc.tokens.clone(),
        mentions: corpus
            .mention_annotations
            .get(&doc.doc_id)
            .map(|m| m.mentions.iter().copied().collect()),
        clusters: corpus
            .coref_annotations
            .get(&doc.doc_id)
            .map(|c| c.clusters().to_vec()),
        domain: (!doc.domain.is_empty()).then(|| doc.domain.clone()),
        provenance: None,
    }
}

pub fn serialize_standoff<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    for doc in &corpus.documents {
        let rec = standoff_record(corpus, doc);
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(pairs: &[(usize, usize)]) -> Vec<Span> {
        pairs.iter().map(|&(s, e)| Span::new(s, e)).collect()
    }

    #[test]
    fn conll_two_column_document() {
        let text = "w0 (0\nw1 0)\nw2 (1)\nw3 -\n";
        let corpus = parse_conll(text.as_bytes()).unwrap();
        assert_eq!(corpus.len(), 1);
        let c = &corpus.coref_annotations["doc0"];
        assert_eq!(c.clusters(), &[spans(&[(0, 1)]), spans(&[(2, 2)])]);
        assert_eq!(corpus.mention_annotations["doc0"].len(), 2);
        assert!(corpus.style.singletons_annotated);
    }

    #[test]
    fn conll_2012_layout_with_header() {
        let text = "#begin document (bc/cctv/00/cctv_0000); part 000\n\
            bc/cctv 0 0 John NNP * - - - spk * (7\n\
            bc/cctv 0 1 Smith NNP * - - - spk * 7)\n\
            \n\
            bc/cctv 0 0 he PRP * - - - spk * (7)\n\
            #end document\n";
        let corpus = parse_conll(text.as_bytes()).unwrap();
        let c = &corpus.coref_annotations["bc/cctv/00/cctv_0000"];
        assert_eq!(c.clusters(), &[spans(&[(0, 1), (2, 2)])]);
        assert_eq!(corpus.documents[0].tokens, vec!["John", "Smith", "he"]);
    }

    #[test]
    fn conll_nested_mentions_are_kept() {
        let text = "a (0|(1\nb 1)\nc 0)\n";
        let corpus = parse_conll(text.as_bytes()).unwrap();
        let c = &corpus.coref_annotations["doc0"];
        assert_eq!(c.mention_count(), 2);
        assert_eq!(c.clusters(), &[spans(&[(0, 1)]), spans(&[(0, 2)])]);
    }

    #[test]
    fn conll_unclosed_bracket_is_reported_at_document_end() {
        let text = "#begin document (d); part 000\nw (0\nw -\n#end document\n";
        match parse_conll(text.as_bytes()) {
            Err(CorpusError::Format { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("still open"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn conll_close_without_open_names_line() {
        let text = "w -\nw 3)\n";
        match parse_conll(text.as_bytes()) {
            Err(CorpusError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_stream_is_empty_corpus() {
        let corpus = parse_conll("".as_bytes()).unwrap();
        assert!(corpus.is_empty());
        let corpus = parse_standoff("".as_bytes()).unwrap();
        assert!(corpus.is_empty());
    }

    #[test]
    fn conll_round_trip_keeps_adjacent_same_cluster_spans() {
        let text = "a (0\nb 0)|(0\nc -\nd 0)\n";
        let first = parse_conll(text.as_bytes()).unwrap();
        assert_eq!(
            first.coref_annotations["doc0"].clusters(),
            &[spans(&[(0, 1), (1, 3)])]
        );
        let mut buf = Vec::new();
        serialize_conll(&first, &mut buf).unwrap();
        let second = parse_conll(buf.as_slice()).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn standoff_mentions() {
        let line = r#"{"doc_id":"d","tokens":["a","b","c","d","e"],"mentions":[[0,1],[3,3]]}"#;
        let corpus = parse_standoff(line.as_bytes()).unwrap();
        assert_eq!(corpus.mention_annotations["d"].len(), 2);
        assert!(corpus.coref_annotations.is_empty());
    }

    #[test]
    fn standoff_clusters_derive_mentions() {
        let line = r#"{"doc_id":"d","tokens":["a","b","c","d","e"],"clusters":[[[0,1],[3,3]]]}"#;
        let corpus = parse_standoff(line.as_bytes()).unwrap();
        let c = &corpus.coref_annotations["d"];
        assert_eq!(c.len(), 1);
        assert_eq!(c.clusters()[0].len(), 2);
        let m: Vec<Span> = corpus.mention_annotations["d"].mentions.iter().copied().collect();
        assert_eq!(m, spans(&[(0, 1), (3, 3)]));
    }

    #[test]
    fn standoff_out_of_bounds_is_validation_error() {
        let line = r#"{"doc_id":"d7","tokens":["a","b","c","d","e"],"mentions":[[4,7]]}"#;
        match parse_standoff(line.as_bytes()) {
            Err(CorpusError::Validation { doc_id, .. }) => assert_eq!(doc_id, "d7"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn standoff_shared_span_across_clusters_rejected() {
        let line = r#"{"doc_id":"d","tokens":["a","b","c"],"clusters":[[[0,0],[1,1]],[[1,1],[2,2]]]}"#;
        assert!(matches!(
            parse_standoff(line.as_bytes()),
            Err(CorpusError::Validation { .. })
        ));
    }

    #[test]
    fn standoff_duplicate_doc_id_rejected() {
        let text = "{\"doc_id\":\"d\",\"tokens\":[\"a\"]}\n{\"doc_id\":\"d\",\"tokens\":[\"b\"]}\n";
        assert!(parse_standoff(text.as_bytes()).is_err());
    }

    #[test]
    fn derive_mentions_is_cluster_union() {
        let c = ClusterSet::new("d", vec![spans(&[(0, 0), (2, 3)]), spans(&[(5, 5)])], None).unwrap();
        let m = derive_mentions(&c);
        assert_eq!(m.len(), 3);
        assert_eq!(m.len(), c.mention_count());
        assert!(derive_mentions(&ClusterSet::empty("d")).is_empty());
    }

    #[test]
    fn cluster_set_rejects_overlapping_membership() {
        let err = ClusterSet::new("d", vec![spans(&[(0, 0)]), spans(&[(0, 0), (1, 1)])], None);
        assert!(err.is_err());
        let err = ClusterSet::new("d", vec![vec![]], None);
        assert!(err.is_err());
    }
}
