//! Scoring of inference results against ground truth.

mod coerce;
mod metrics;
mod plots;
mod report;

pub use coerce::{coerce, coerce_with, AnswerType, Trend, TrendLexicon, TypedAnswer};
pub use metrics::{bleu, relative_error, text_similarity, Exclusion, RelativeError, DEFAULT_OUTLIER_PCT};
pub use plots::{bin_counts, histogram_svg, write_plots};
pub use report::{
    build_report, parse_jsonl, read_jsonl, EvalConfig, EvalError, EvalReport, Evaluation, Efficiency, NumericMetrics, ResultRecord, ScoredResult,
    SplitReport, TextMetrics, TraceSummary, TypeCounts,
};
