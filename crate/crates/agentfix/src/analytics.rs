//! Corpus statistics: fix-pattern distributions and Cohen's kappa.

use crate::model::AnnotatedFix;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;

#[derive(Debug, Clone, thiserror::Error)]
pub enum AnalyticsError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("label lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label lists are empty")]
    EmptyInput,
}

/// Grouping key for [`pattern_distribution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Source,
    Framework,
    Pattern,
    Component,
}

impl std::str::FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "source" => Ok(GroupBy::Source),
            "framework" => Ok(GroupBy::Framework),
            "pattern" => Ok(GroupBy::Pattern),
            "component" => Ok(GroupBy::Component),
            other => Err(format!("unknown group-by key: {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub key: String,
    pub count: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub rows: Vec<DistributionRow>,
    pub total: usize,
}

impl DistributionTable {
    /// `key,count,share` CSV with a header row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "key,count,share")?;
        for row in &self.rows {
            writeln!(out, "{},{},{:.6}", row.key, row.count, row.share)?;
        }
        Ok(())
    }
}

/// Counts corpus entries per group key, descending by count, ties by key.
pub fn pattern_distribution(
    corpus: &[AnnotatedFix],
    group_by: GroupBy,
) -> Result<DistributionTable, AnalyticsError> {
    if corpus.is_empty() {
        return Err(AnalyticsError::EmptyCorpus);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for fix in corpus {
        let key = match group_by {
            GroupBy::Source => fix.source.to_string(),
            GroupBy::Framework => fix.framework.clone(),
            GroupBy::Pattern => fix.pattern.abbrev().to_string(),
            GroupBy::Component => fix.component.as_str().to_string(),
        };
        *counts.entry(key).or_default() += 1;
    }
    let total = corpus.len();
    let mut rows: Vec<DistributionRow> = counts
        .into_iter()
        .map(|(key, count)| DistributionRow {
            key,
            count,
            share: count as f64 / total as f64,
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.key.cmp(&b.key)));
    Ok(DistributionTable { rows, total })
}

/// Cohen's kappa between two equal-length label sequences.
///
/// kappa = (p_o - p_e) / (1 - p_e), with p_o the observed agreement and p_e
/// the chance agreement from marginal frequencies. Degenerate p_e = 1 (both
/// marginals fully concentrated and in agreement) returns 1.0.
pub fn cohens_kappa(labels_a: &[String], labels_b: &[String]) -> Result<f64, AnalyticsError> {
    if labels_a.len() != labels_b.len() {
        return Err(AnalyticsError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(AnalyticsError::EmptyInput);
    }
    let n = labels_a.len() as f64;
    let observed = labels_a
        .iter()
        .zip(labels_b)
        .filter(|(a, b)| a == b)
        .count() as f64
        / n;

    let mut marg_a: HashMap<&str, usize> = HashMap::new();
    let mut marg_b: HashMap<&str, usize> = HashMap::new();
    for (a, b) in labels_a.iter().zip(labels_b) {
        *marg_a.entry(a).or_default() += 1;
        *marg_b.entry(b).or_default() += 1;
    }
    let expected: f64 = marg_a
        .iter()
        .map(|(label, &ca)| {
            let cb = marg_b.get(label.to_owned()).copied().unwrap_or(0);
            (ca as f64 / n) * (cb as f64 / n)
        })
        .sum();

    if (1.0 - expected).abs() < f64::EPSILON {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}
