//! MUC, B³, CEAF-φ4 and LEA, pooled over documents, plus a paired
//! document-level bootstrap.
//!
//! Every metric reduces to four additive counts per document (precision
//! and recall numerators and denominators), so corpus scores and bootstrap
//! resamples are sums of per-document counts.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClusterSet, Corpus, Span};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("system output missing for documents: {}", .0.join(", "))]
    MissingDocuments(Vec<String>),
    #[error("bootstrap needs at least 2 documents, got {0}")]
    TooFewDocuments(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    WithSingletons,
    WithoutSingletons,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::WithSingletons => "with_singletons",
            Scheme::WithoutSingletons => "without_singletons",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Muc,
    B3,
    CeafPhi4,
    Lea,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Muc, Metric::B3, Metric::CeafPhi4, Metric::Lea];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Muc => "MUC",
            Metric::B3 => "B3",
            Metric::CeafPhi4 => "CEAF_phi4",
            Metric::Lea => "LEA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSet {
    #[default]
    All,
    /// MUC, B³ and CEAF-φ4 only.
    NoLea,
}

impl MetricSet {
    pub fn metrics(&self) -> &'static [Metric] {
        match self {
            MetricSet::All => &Metric::ALL,
            MetricSet::NoLea => &Metric::ALL[..3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

/// Additive precision/recall counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Counts {
    pub p_num: f64,
    pub p_den: f64,
    pub r_num: f64,
    pub r_den: f64,
}

impl Counts {
    pub fn prf(&self) -> Prf {
        let precision = ratio(self.p_num, self.p_den);
        let recall = ratio(self.r_num, self.r_den);
        Prf {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }

    fn add(&mut self, o: &Counts) {
        self.p_num += o.p_num;
        self.p_den += o.p_den;
        self.r_num += o.r_num;
        self.r_den += o.r_den;
    }
}

pub fn apply_scheme(gold: &ClusterSet, sys: &ClusterSet, scheme: Scheme) -> (ClusterSet, ClusterSet) {
    match scheme {
        Scheme::WithSingletons => (gold.clone(), sys.clone()),
        Scheme::WithoutSingletons => (gold.without_singletons(), sys.without_singletons()),
    }
}

type Clusters<'a> = &'a [Vec<Span>];

/// Recall-side numerator and denominator; precision swaps the roles.
fn muc_side(key: Clusters, response: Clusters) -> (f64, f64) {
    let index = index_of(response);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in key {
        // Spans missing from the response each form their own part.
        let mut parts = std::collections::HashSet::new();
        let mut unmatched = 0usize;
        for s in k {
            match index.get(s) {
                Some(c) => {
                    parts.insert(*c);
                }
                None => unmatched += 1,
            }
        }
        num += (k.len() - parts.len() - unmatched) as f64;
        den += (k.len() - 1) as f64;
    }
    (num, den)
}

fn index_of(clusters: Clusters) -> HashMap<Span, usize> {
    let mut map = HashMap::new();
    for (i, c) in clusters.iter().enumerate() {
        for s in c {
            map.insert(*s, i);
        }
    }
    map
}

fn both_sides(
    gold: Clusters,
    sys: Clusters,
    side: impl Fn(Clusters, Clusters) -> (f64, f64),
) -> Counts {
    let (r_num, r_den) = side(gold, sys);
    let (p_num, p_den) = side(sys, gold);
    Counts {
        p_num,
        p_den,
        r_num,
        r_den,
    }
}

pub fn muc_counts(gold: &ClusterSet, sys: &ClusterSet) -> Counts {
    both_sides(gold.clusters(), sys.clusters(), muc_side)
}

fn overlap(a: &[Span], b: &[Span]) -> usize {
    // Clusters are sorted, so a merge walk counts the intersection.
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn b3_side(key: Clusters, response: Clusters) -> (f64, f64) {
    let index = index_of(response);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in key {
        for s in k {
            den += 1.0;
            if let Some(&c) = index.get(s) {
                num += overlap(k, &response[c]) as f64 / k.len() as f64;
            }
        }
    }
    (num, den)
}

pub fn b3_counts(gold: &ClusterSet, sys: &ClusterSet) -> Counts {
    both_sides(gold.clusters(), sys.clusters(), b3_side)
}

fn phi4(a: &[Span], b: &[Span]) -> f64 {
    2.0 * overlap(a, b) as f64 / (a.len() + b.len()) as f64
}

pub fn ceaf_counts(gold: &ClusterSet, sys: &ClusterSet) -> Counts {
    let g = gold.clusters();
    let s = sys.clusters();
    let sim: Vec<Vec<f64>> = g.iter().map(|k| s.iter().map(|r| phi4(k, r)).collect()).collect();
    let total = max_assignment(&sim);
    Counts {
        p_num: total,
        p_den: s.len() as f64,
        r_num: total,
        r_den: g.len() as f64,
    }
}

/// Maximum total weight of a one-to-one assignment between rows and
/// columns of a rectangular nonnegative matrix (Hungarian method).
pub fn max_assignment(weights: &[Vec<f64>]) -> f64 {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return 0.0;
    }
    let max_w = weights.iter().flatten().copied().fold(0.0, f64::max);
    // Square cost matrix; padding cells cost as much as a zero-weight pair.
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            max_w - weights[i][j]
        } else {
            max_w
        }
    };
    // Potentials u (rows) and v (cols), 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut row_of = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    // Re-sum the original weights of the matched real pairs.
    (1..=n)
        .filter(|&j| row_of[j] != 0 && row_of[j] <= rows && j <= cols)
        .map(|j| weights[row_of[j] - 1][j - 1])
        .sum()
}

fn links(n: usize) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

fn lea_side(key: Clusters, response: Clusters) -> (f64, f64) {
    let index = index_of(response);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in key {
        den += k.len() as f64;
        if k.len() == 1 {
            // Self-link: credited when the mention appears in the response.
            if index.contains_key(&k[0]) {
                num += 1.0;
            }
            continue;
        }
        let mut per_response: HashMap<usize, usize> = HashMap::new();
        for s in k {
            if let Some(&c) = index.get(s) {
                *per_response.entry(c).or_default() += 1;
            }
        }
        let resolved: f64 = per_response.values().map(|&n| links(n)).sum();
        num += k.len() as f64 * resolved / links(k.len());
    }
    (num, den)
}

pub fn lea_counts(gold: &ClusterSet, sys: &ClusterSet) -> Counts {
    both_sides(gold.clusters(), sys.clusters(), lea_side)
}

pub fn counts(metric: Metric, gold: &ClusterSet, sys: &ClusterSet) -> Counts {
    match metric {
        Metric::Muc => muc_counts(gold, sys),
        Metric::B3 => b3_counts(gold, sys),
        Metric::CeafPhi4 => ceaf_counts(gold, sys),
        Metric::Lea => lea_counts(gold, sys),
    }
}

pub fn muc(gold: &ClusterSet, sys: &ClusterSet) -> Prf {
    muc_counts(gold, sys).prf()
}

pub fn b_cubed(gold: &ClusterSet, sys: &ClusterSet) -> Prf {
    b3_counts(gold, sys).prf()
}

pub fn ceaf_phi4(gold: &ClusterSet, sys: &ClusterSet) -> Prf {
    ceaf_counts(gold, sys).prf()
}

pub fn lea(gold: &ClusterSet, sys: &ClusterSet) -> Prf {
    lea_counts(gold, sys).prf()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scheme: Scheme,
    pub metric_set: MetricSet,
    pub scores: BTreeMap<Metric, Prf>,
    pub avg_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub scheme: Scheme,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    pub avg_f1: f64,
}

impl MetricReport {
    pub fn records(&self) -> Vec<MetricRecord> {
        self.scores
            .iter()
            .map(|(m, s)| MetricRecord {
                metric: m.name().to_string(),
                scheme: self.scheme,
                p: s.precision,
                r: s.recall,
                f1: s.f1,
                avg_f1: self.avg_f1,
            })
            .collect()
    }

    pub fn table(&self) -> String {
        let mut out = format!("scheme: {}\n{:<10} {:>8} {:>8} {:>8}\n", self.scheme, "metric", "P", "R", "F1");
        for (m, s) in &self.scores {
            out += &format!(
                "{:<10} {:>8.4} {:>8.4} {:>8.4}\n",
                m.name(),
                s.precision,
                s.recall,
                s.f1
            );
        }
        out += &format!("{:<10} {:>8} {:>8} {:>8.4}\n", "Avg", "", "", self.avg_f1);
        out
    }
}

/// Per-document counts for every metric in a set, after the scheme.
#[derive(Debug, Clone)]
pub struct DocumentCounts {
    pub metric_set: MetricSet,
    pub scheme: Scheme,
    pub doc_ids: Vec<String>,
    /// `per_doc[d][k]` is the counts of metric `metric_set.metrics()[k]`.
    pub per_doc: Vec<Vec<Counts>>,
}

impl DocumentCounts {
    pub fn collect(
        gold: &Corpus,
        sys: &BTreeMap<String, ClusterSet>,
        scheme: Scheme,
        metric_set: MetricSet,
    ) -> Result<Self, MetricsError> {
        let missing: Vec<String> = gold
            .documents
            .iter()
            .filter(|d| !sys.contains_key(&d.doc_id))
            .map(|d| d.doc_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(MetricsError::MissingDocuments(missing));
        }
        let mut doc_ids = Vec::with_capacity(gold.len());
        let mut per_doc = Vec::with_capacity(gold.len());
        for doc in &gold.documents {
            let empty = ClusterSet::empty(doc.doc_id.clone());
            let g = gold.coref_annotations.get(&doc.doc_id).unwrap_or(&empty);
            let (g, s) = apply_scheme(g, &sys[&doc.doc_id], scheme);
            per_doc.push(metric_set.metrics().iter().map(|m| counts(*m, &g, &s)).collect());
            doc_ids.push(doc.doc_id.clone());
        }
        Ok(DocumentCounts {
            metric_set,
            scheme,
            doc_ids,
            per_doc,
        })
    }

    /// Adds another run's counts document by document (same doc order).
    pub fn pool(&mut self, other: &DocumentCounts) {
        assert_eq!(self.doc_ids, other.doc_ids, "pooling needs identical documents");
        for (mine, theirs) in self.per_doc.iter_mut().zip(&other.per_doc) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                a.add(b);
            }
        }
    }

    fn report_over(&self, docs: impl Iterator<Item = usize>) -> MetricReport {
        let metrics = self.metric_set.metrics();
        let mut totals = vec![Counts::default(); metrics.len()];
        for d in docs {
            for (t, c) in totals.iter_mut().zip(&self.per_doc[d]) {
                t.add(c);
            }
        }
        let scores: BTreeMap<Metric, Prf> = metrics.iter().copied().zip(totals.iter().map(Counts::prf)).collect();
        let avg_f1 = scores.values().map(|s| s.f1).sum::<f64>() / metrics.len() as f64;
        MetricReport {
            scheme: self.scheme,
            metric_set: self.metric_set,
            scores,
            avg_f1,
        }
    }

    pub fn report(&self) -> MetricReport {
        self.report_over(0..self.per_doc.len())
    }
}

/// Corpus-level scores with counts pooled across documents.
pub fn report(
    gold: &Corpus,
    sys: &BTreeMap<String, ClusterSet>,
    scheme: Scheme,
    metric_set: MetricSet,
) -> Result<MetricReport, MetricsError> {
    Ok(DocumentCounts::collect(gold, sys, scheme, metric_set)?.report())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub iterations: usize,
    /// p-value per metric F1.
    pub p_values: BTreeMap<Metric, f64>,
    pub p_avg: f64,
}

/// Paired bootstrap over documents. For each statistic the p-value is the
/// fraction of resamples whose A−B difference does not keep the sign of
/// the full-sample difference; a zero full-sample difference gives 1.
pub fn paired_bootstrap(
    a: &DocumentCounts,
    b: &DocumentCounts,
    iterations: usize,
    seed: u64,
) -> Result<BootstrapResult, MetricsError> {
    assert_eq!(a.doc_ids, b.doc_ids, "paired bootstrap needs the same documents");
    let n = a.doc_ids.len();
    if n < 2 {
        return Err(MetricsError::TooFewDocuments(n));
    }
    let metrics = a.metric_set.metrics();
    let stats = |r: &MetricReport| -> Vec<f64> {
        metrics
            .iter()
            .map(|m| r.scores[m].f1)
            .chain(std::iter::once(r.avg_f1))
            .collect()
    };
    let full_a = stats(&a.report());
    let full_b = stats(&b.report());
    let full: Vec<f64> = full_a.iter().zip(&full_b).map(|(x, y)| x - y).collect();
    let mut flips = vec![0usize; full.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = vec![0usize; n];
    for _ in 0..iterations {
        for s in sample.iter_mut() {
            *s = rng.gen_range(0..n);
        }
        let ra = stats(&a.report_over(sample.iter().copied()));
        let rb = stats(&b.report_over(sample.iter().copied()));
        for (k, f) in flips.iter_mut().enumerate() {
            if (ra[k] - rb[k]) * full[k].signum() <= 0.0 {
                *f += 1;
            }
        }
    }
    let p: Vec<f64> = full
        .iter()
        .zip(&flips)
        .map(|(d, &f)| {
            if *d == 0.0 || iterations == 0 {
                1.0
            } else {
                f as f64 / iterations as f64
            }
        })
        .collect();
    Ok(BootstrapResult {
        iterations,
        p_values: metrics.iter().copied().zip(p.iter().copied()).collect(),
        p_avg: *p.last().expect("avg entry"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cs(clusters: &[&[usize]]) -> ClusterSet {
        ClusterSet::new(
            "d",
            clusters
                .iter()
                .map(|c| c.iter().map(|&i| Span::new(i, i)).collect())
                .collect(),
            None,
        )
        .unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    // a=0, b=1, c=2, d=3
    fn canonical() -> (ClusterSet, ClusterSet) {
        (cs(&[&[0, 1, 2], &[3]]), cs(&[&[0, 1], &[2, 3]]))
    }

    #[test]
    fn canonical_instance() {
        let (g, s) = canonical();
        let m = muc(&g, &s);
        assert!(close(m.precision, 0.5) && close(m.recall, 0.5) && close(m.f1, 0.5));
        let b = b_cubed(&g, &s);
        assert!(close(b.recall, 2.0 / 3.0) && close(b.precision, 0.75));
        let c = ceaf_phi4(&g, &s);
        let total = 0.8 + 2.0 / 3.0;
        assert!(close(c.precision, total / 2.0) && close(c.recall, total / 2.0));
        let l = lea(&g, &s);
        assert!(close(l.precision, 0.5) && close(l.recall, 0.5));
    }

    #[test]
    fn identical_is_perfect_and_empty_is_zero() {
        let (g, _) = canonical();
        for m in Metric::ALL {
            let p = counts(m, &g, &g).prf();
            assert!(close(p.f1, 1.0), "{m:?}");
            let z = counts(m, &g, &ClusterSet::empty("d")).prf();
            assert_eq!((z.precision, z.recall, z.f1), (0.0, 0.0, 0.0), "{m:?}");
        }
    }

    #[test]
    fn muc_all_singletons_is_zero() {
        let g = cs(&[&[0], &[1]]);
        let p = muc(&g, &g);
        assert_eq!((p.recall, p.f1), (0.0, 0.0));
    }

    #[test]
    fn scheme_drops_singletons_and_is_idempotent() {
        let g = cs(&[&[0, 1], &[2]]);
        let (g1, s1) = apply_scheme(&g, &g, Scheme::WithoutSingletons);
        assert_eq!(g1, cs(&[&[0, 1]]));
        let (g2, s2) = apply_scheme(&g1, &s1, Scheme::WithoutSingletons);
        assert_eq!((g1, s1), (g2, s2));
        assert_eq!(apply_scheme(&g, &g, Scheme::WithSingletons).0, g);
    }

    #[test]
    fn assignment_handles_rectangles() {
        let w = vec![vec![0.1, 0.9, 0.3], vec![0.8, 0.85, 0.0]];
        assert!(close(max_assignment(&w), 0.9 + 0.8));
        let t = vec![vec![0.1, 0.8], vec![0.9, 0.85], vec![0.3, 0.0]];
        assert!(close(max_assignment(&t), 0.9 + 0.8));
        assert_eq!(max_assignment(&[]), 0.0);
    }

    fn corpus(docs: &[(&str, ClusterSet)]) -> (Corpus, BTreeMap<String, ClusterSet>) {
        let mut c = Corpus::default();
        let mut sys = BTreeMap::new();
        for (id, g) in docs {
            let mut g = g.clone();
            g.doc_id = id.to_string();
            c.documents.push(crate::corpus::Document {
                doc_id: id.to_string(),
                tokens: vec!["w".into(); 30],
                domain: "t".into(),
            });
            c.coref_annotations.insert(id.to_string(), g.clone());
            sys.insert(id.to_string(), g);
        }
        (c, sys)
    }

    #[test]
    fn missing_documents_are_listed() {
        let (g, _) = canonical();
        let (c, mut sys) = corpus(&[("x", g.clone()), ("y", g)]);
        sys.remove("y");
        assert_eq!(
            report(&c, &sys, Scheme::WithSingletons, MetricSet::All),
            Err(MetricsError::MissingDocuments(vec!["y".into()]))
        );
    }

    #[test]
    fn bootstrap_self_comparison_is_one() {
        let (g, s) = canonical();
        let (c, _) = corpus(&[("x", g.clone()), ("y", g)]);
        let mut sys = BTreeMap::new();
        sys.insert("x".to_string(), s.clone());
        sys.insert("y".to_string(), s);
        let a = DocumentCounts::collect(&c, &sys, Scheme::WithSingletons, MetricSet::All).unwrap();
        let r = paired_bootstrap(&a, &a, 200, 1).unwrap();
        assert_eq!(r.p_avg, 1.0);
        assert!(r.p_values.values().all(|&p| p == 1.0));
        let one = DocumentCounts {
            doc_ids: vec!["x".into()],
            per_doc: vec![a.per_doc[0].clone()],
            ..a.clone()
        };
        assert_eq!(
            paired_bootstrap(&one, &one, 10, 1),
            Err(MetricsError::TooFewDocuments(1))
        );
    }
}
