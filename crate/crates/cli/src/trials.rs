//! Scoring design trials and picking the best.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use synthforge_core::checks::CheckReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: usize,
    /// Pipeline outcome, or the error that ended the trial.
    pub status: String,
    /// Passing automated metrics, 0..=5; absent when nothing was emitted.
    pub score: Option<usize>,
    pub findings: Option<usize>,
    pub approved: bool,
}

impl TrialResult {
    pub fn scored(index: usize, status: String, report: &CheckReport, approved: bool) -> Self {
        TrialResult {
            index,
            status,
            score: Some(report.score()),
            findings: Some(report.total_findings()),
            approved,
        }
    }

    pub fn failed(index: usize, status: String) -> Self {
        TrialResult { index, status, score: None, findings: None, approved: false }
    }
}

/// Better trials sort first: higher score, then fewer findings, then lower index.
pub fn compare(a: (usize, usize, usize), b: (usize, usize, usize)) -> Ordering {
    b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Index of the winning scored trial.
pub fn select_best(trials: &[TrialResult]) -> Option<usize> {
    trials
        .iter()
        .filter_map(|t| Some((t.score?, t.findings?, t.index)))
        .min_by(|a, b| compare(*a, *b))
        .map(|t| t.2)
}
