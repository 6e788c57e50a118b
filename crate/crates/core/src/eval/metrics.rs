use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::runtime::TrajectoryRecord;
use crate::tools::ErrorClass;

/// Per-task rollout outcomes; every row has the same length N.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    rows: Vec<Vec<bool>>,
}

impl OutcomeMatrix {
    pub fn new(rows: Vec<Vec<bool>>) -> Result<Self, EvalError> {
        let Some(first) = rows.first() else {
            return Err(EvalError::EmptyMatrix);
        };
        let n = first.len();
        if n == 0 {
            return Err(EvalError::EmptyMatrix);
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != n) {
            return Err(EvalError::RaggedMatrix { row: bad, expected: n, found: rows[bad].len() });
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows[0].len()
    }
}

/// Mean over tasks of the per-task success fraction.
pub fn average_at_n(m: &OutcomeMatrix) -> f64 {
    let n = m.n() as f64;
    let total: f64 = m.rows().iter().map(|r| r.iter().filter(|&&s| s).count() as f64 / n).sum();
    total / m.rows().len() as f64
}

/// Fraction of tasks with at least one successful rollout.
pub fn pass_at_n(m: &OutcomeMatrix) -> f64 {
    m.rows().iter().filter(|r| r.iter().any(|&s| s)).count() as f64 / m.rows().len() as f64
}

/// Share of tool calls per tool name. Empty when there are no calls.
pub fn tool_usage_distribution(records: &[TrajectoryRecord]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        for (call, _) in r.tool_calls() {
            *counts.entry(call.name.clone()).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(k, v)| (k, v as f64 / total as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub counts: BTreeMap<ErrorClass, usize>,
    pub total_calls: usize,
    /// Errors over tool calls; 0 when there are no calls.
    pub rate: f64,
    pub rate_by_class: BTreeMap<ErrorClass, f64>,
}

pub fn classify_errors(records: &[TrajectoryRecord]) -> ErrorBreakdown {
    let mut counts: BTreeMap<ErrorClass, usize> = BTreeMap::new();
    let mut total_calls = 0;
    for r in records {
        for (_, obs) in r.tool_calls() {
            total_calls += 1;
            if let Some(class) = obs.and_then(|o| o.error_class) {
                *counts.entry(class).or_default() += 1;
            }
        }
    }
    let errors: usize = counts.values().sum();
    let ratio = |x: usize| if total_calls == 0 { 0.0 } else { x as f64 / total_calls as f64 };
    ErrorBreakdown {
        rate: ratio(errors),
        rate_by_class: counts.iter().map(|(k, v)| (*k, ratio(*v))).collect(),
        counts,
        total_calls,
    }
}

/// Mean number of tool calls per trajectory.
pub fn mean_tool_calls(records: &[TrajectoryRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.tool_calls().count()).sum::<usize>() as f64 / records.len() as f64
}
