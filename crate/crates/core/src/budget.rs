//! Annotation-time model for mention-only versus full coreference
//! annotation, and greedy document allocation under a time budget.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BudgetError {
    #[error("timing table: {0}")]
    InvalidTable(String),
    #[error("budget must be a finite nonnegative number of seconds, got {0}")]
    InvalidBudget(f64),
    #[error("fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mention,
    Coreference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTiming {
    pub coref_seconds: f64,
    pub mention_seconds: f64,
}

impl ClassTiming {
    pub fn seconds(&self, task: Task) -> f64 {
        match task {
            Task::Mention => self.mention_seconds,
            Task::Coreference => self.coref_seconds,
        }
    }

    pub fn speedup(&self) -> f64 {
        self.coref_seconds / self.mention_seconds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthClass {
    Short,
    Medium,
    Long,
}

/// Per-length-class times. Documents shorter than `medium_from` tokens are
/// short, shorter than `long_from` medium, the rest long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingTable {
    pub short: ClassTiming,
    pub medium: ClassTiming,
    pub long: ClassTiming,
    /// Averages over all timed documents.
    pub all: ClassTiming,
    /// Published coreference-to-mention time ratio used to convert
    /// fractions. Kept separate from `all` because some studies report only
    /// the ratio.
    pub speedup: f64,
    pub medium_from: usize,
    pub long_from: usize,
}

impl Default for TimingTable {
    fn default() -> Self {
        default_timing()
    }
}

pub fn default_timing() -> TimingTable {
    let t = |coref_seconds, mention_seconds| ClassTiming {
        coref_seconds,
        mention_seconds,
    };
    TimingTable {
        short: t(287.3, 186.1),
        medium: t(582.5, 408.8),
        long: t(1306.1, 649.5),
        all: t(881.2, 475.9),
        speedup: 1.85,
        medium_from: 350,
        long_from: 650,
    }
}

impl TimingTable {
    pub fn validate(&self) -> Result<(), BudgetError> {
        for (name, c) in [
            ("short", &self.short),
            ("medium", &self.medium),
            ("long", &self.long),
            ("all", &self.all),
        ] {
            if !(c.coref_seconds > 0.0 && c.mention_seconds > 0.0) || !c.coref_seconds.is_finite() {
                return Err(BudgetError::InvalidTable(format!("{name}: times must be positive")));
            }
            if c.mention_seconds > c.coref_seconds {
                return Err(BudgetError::InvalidTable(format!(
                    "{name}: mention time exceeds coreference time"
                )));
            }
        }
        if !(self.speedup >= 1.0 && self.speedup.is_finite()) {
            return Err(BudgetError::InvalidTable("speedup must be at least 1".into()));
        }
        if self.medium_from > self.long_from {
            return Err(BudgetError::InvalidTable("medium_from exceeds long_from".into()));
        }
        Ok(())
    }

    pub fn class_of(&self, tokens: usize) -> LengthClass {
        if tokens < self.medium_from {
            LengthClass::Short
        } else if tokens < self.long_from {
            LengthClass::Medium
        } else {
            LengthClass::Long
        }
    }

    pub fn class(&self, class: LengthClass) -> &ClassTiming {
        match class {
            LengthClass::Short => &self.short,
            LengthClass::Medium => &self.medium,
            LengthClass::Long => &self.long,
        }
    }

    /// Ratio of the all-document average times.
    pub fn overall_speedup(&self) -> f64 {
        self.all.speedup()
    }
}

pub fn estimate(doc: &Document, task: Task, table: &TimingTable) -> f64 {
    table.class(table.class_of(doc.len())).seconds(task)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub doc_id: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub task: Task,
    pub total_seconds: f64,
    pub allocation: Vec<Allocation>,
    pub residual_seconds: f64,
}

impl BudgetPlan {
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.allocation.iter().map(|a| a.doc_id.as_str())
    }
}

/// Takes documents in corpus order until the next one would not fit.
pub fn plan(
    corpus: &Corpus,
    task: Task,
    budget_seconds: f64,
    table: &TimingTable,
) -> Result<BudgetPlan, BudgetError> {
    if !(budget_seconds >= 0.0 && budget_seconds.is_finite()) {
        return Err(BudgetError::InvalidBudget(budget_seconds));
    }
    let mut spent = 0.0;
    let mut allocation = Vec::new();
    for doc in &corpus.documents {
        let cost = estimate(doc, task, table);
        // Absorbs summation rounding so an exact multiple of a class time fits.
        if spent + cost > budget_seconds + 1e-9 {
            break;
        }
        spent += cost;
        allocation.push(Allocation {
            doc_id: doc.doc_id.clone(),
            seconds: cost,
        });
    }
    Ok(BudgetPlan {
        task,
        total_seconds: budget_seconds,
        allocation,
        residual_seconds: (budget_seconds - spent).max(0.0),
    })
}

/// Fraction of documents that can be mention-annotated in the time a
/// `coref_fraction` of them takes for coreference.
pub fn equivalent_fractions(coref_fraction: f64, table: &TimingTable) -> Result<f64, BudgetError> {
    if !(0.0..=1.0).contains(&coref_fraction) {
        return Err(BudgetError::InvalidFraction(coref_fraction));
    }
    Ok((coref_fraction * table.speedup).min(1.0))
}
