//! Grading, splits and benchmark metrics.

mod grade;
mod metrics;
mod split;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use grade::{grade, normalize, parse_verdict, Grade, GraderKind, Judge};
pub use metrics::{
    average_at_n, classify_errors, mean_tool_calls, pass_at_n, tool_usage_distribution, ErrorBreakdown,
    OutcomeMatrix,
};
pub use split::{shuffle, split_dataset, DatasetSplit, Lcg64};

use crate::runtime::TrajectoryRecord;
use crate::tools::ErrorClass;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("split needs {requested} items but only {available} are available")]
    InsufficientItems { requested: usize, available: usize },
    #[error("outcome matrix is empty")]
    EmptyMatrix,
    #[error("row {row} has {found} rollouts, expected {expected}")]
    RaggedMatrix { row: usize, expected: usize, found: usize },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tasks: usize,
    pub rollouts: usize,
    pub average_at_n: f64,
    pub pass_at_n: f64,
    pub tool_usage: BTreeMap<String, f64>,
    pub errors: ErrorBreakdown,
    pub mean_tool_calls: f64,
    /// Grades that defaulted to false because the grader could not decide.
    pub flagged_grades: usize,
}

impl MetricsReport {
    pub fn compute(matrix: &OutcomeMatrix, records: &[TrajectoryRecord], flagged_grades: usize) -> Self {
        Self {
            tasks: matrix.rows().len(),
            rollouts: matrix.n(),
            average_at_n: average_at_n(matrix),
            pass_at_n: pass_at_n(matrix),
            tool_usage: tool_usage_distribution(records),
            errors: classify_errors(records),
            mean_tool_calls: mean_tool_calls(records),
            flagged_grades,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| EvalError::Io(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))
    }

    pub fn table(&self) -> String {
        let pct = |x: f64| format!("{:.2}%", x * 100.0);
        let mut out = String::new();
        let mut row = |k: &str, v: String| out.push_str(&format!("{k:<28}{v}\n"));
        row("tasks", self.tasks.to_string());
        row("rollouts per task", self.rollouts.to_string());
        row(&format!("average@{}", self.rollouts), pct(self.average_at_n));
        row(&format!("pass@{}", self.rollouts), pct(self.pass_at_n));
        row("tool calls", self.errors.total_calls.to_string());
        row("mean tool calls", format!("{:.2}", self.mean_tool_calls));
        row("tool error rate", pct(self.errors.rate));
        for class in [ErrorClass::Syntax, ErrorClass::Runtime, ErrorClass::ToolName, ErrorClass::Transport] {
            let rate = self.errors.rate_by_class.get(&class).copied().unwrap_or(0.0);
            row(&format!("  {} errors", class.as_str()), pct(rate));
        }
        for (tool, share) in &self.tool_usage {
            row(&format!("  usage {tool}"), pct(*share));
        }
        if self.flagged_grades > 0 {
            row("flagged grades", self.flagged_grades.to_string());
        }
        out
    }
}
