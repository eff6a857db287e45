//! Information fusion over a series of classifier outcomes, and the three
//! baseline rules for combining per-step uncertainties.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::LabelId;
use crate::error::{domain, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusedOutcome {
    pub label: LabelId,
    pub vote_counts: BTreeMap<LabelId, usize>,
    /// Two or more labels shared the maximal count.
    pub tie_broken: bool,
}

/// Majority vote; ties go to the tied label seen most recently.
pub fn majority_vote(outcomes: &[LabelId]) -> Result<FusedOutcome> {
    if outcomes.is_empty() {
        return domain("majority vote over zero outcomes");
    }
    let mut vote_counts = BTreeMap::new();
    let mut last_seen = BTreeMap::new();
    for (pos, &label) in outcomes.iter().enumerate() {
        *vote_counts.entry(label).or_insert(0) += 1;
        last_seen.insert(label, pos);
    }
    let max = *vote_counts.values().max().expect("non-empty");
    let mut tied = vote_counts.iter().filter(|(_, &c)| c == max).map(|(&l, _)| l).peekable();
    let first = tied.next().expect("at least one label has the max");
    let tie_broken = tied.peek().is_some();
    let label = std::iter::once(first).chain(tied).max_by_key(|l| last_seen[l]).expect("non-empty");
    Ok(FusedOutcome { label, vote_counts, tie_broken })
}

/// Uncertainty fusion rule applied to the per-step uncertainties of a series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UfRule {
    /// Product; assumes independent errors.
    Naive,
    /// Minimum.
    Opportune,
    /// Maximum.
    WorstCase,
}

impl UfRule {
    pub fn apply(self, uncertainties: &[f64]) -> Result<f64> {
        match self {
            UfRule::Naive => naive_uf(uncertainties),
            UfRule::Opportune => opportune_uf(uncertainties),
            UfRule::WorstCase => worstcase_uf(uncertainties),
        }
    }
}

fn check_uncertainties(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return domain("uncertainty fusion over zero values");
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return domain(format!("uncertainty {v} outside [0, 1]"));
    }
    Ok(())
}

pub fn naive_uf(uncertainties: &[f64]) -> Result<f64> {
    check_uncertainties(uncertainties)?;
    Ok(uncertainties.iter().product())
}

pub fn opportune_uf(uncertainties: &[f64]) -> Result<f64> {
    check_uncertainties(uncertainties)?;
    Ok(uncertainties.iter().copied().fold(f64::INFINITY, f64::min))
}

pub fn worstcase_uf(uncertainties: &[f64]) -> Result<f64> {
    check_uncertainties(uncertainties)?;
    Ok(uncertainties.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}
