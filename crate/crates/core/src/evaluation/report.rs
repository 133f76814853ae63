use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{bleu, mean, median, relative_error, Exclusion, RelativeError};
use super::{coerce, AnswerType};
use crate::blanket::{Query, QueryKind};
use crate::inference::InferenceResult;
use crate::retrieval::{cosine, EmbeddingBackend, RetrievalError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("result `{0}` has no dataset entry")]
    JoinFailure(String),
    #[error("query `{0}` has more than one result")]
    DuplicateResult(String),
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("cannot read {0}")]
    Io(String),
    #[error(transparent)]
    Embedding(#[from] RetrievalError),
}

/// Step counters of one result line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    #[serde(default)]
    pub steps: usize,
    #[serde(default)]
    pub retries: usize,
    #[serde(default)]
    pub calls: usize,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
}

/// One line of a results file: `{query_id, target_value, trace}`, with
/// `error` in place of a value when inference failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub query_id: String,
    pub target_value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub trace: TraceSummary,
}

impl ResultRecord {
    pub fn from_result(r: &InferenceResult) -> Self {
        Self {
            query_id: r.query_id.clone(),
            target_value: Some(r.target_value.clone()),
            error: None,
            trace: TraceSummary {
                steps: r.trace.steps,
                retries: r.trace.retries,
                calls: r.trace.calls,
                input_tokens: r.trace.usage.input_tokens,
                output_tokens: r.trace.usage.output_tokens,
            },
        }
    }

    pub fn failure(query_id: impl Into<String>, error: impl Into<String>) -> Self {
        Self { query_id: query_id.into(), target_value: None, error: Some(error.into()), trace: TraceSummary::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub outlier_pct: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { outlier_pct: super::metrics::DEFAULT_OUTLIER_PCT }
    }
}

/// Per-result scores, kept for plots and audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResult {
    pub query_id: String,
    pub split: QueryKind,
    pub answer_type: AnswerType,
    pub failed: bool,
    pub correct: Option<bool>,
    pub relative_error: Option<RelativeError>,
    pub similarity: Option<f64>,
    pub bleu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub boolean: usize,
    pub trend: usize,
    pub number: usize,
    pub text: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NumericMetrics {
    /// Number answers with a usable relative error.
    pub scored: usize,
    pub median_relative_error: f64,
    pub mean_relative_error: f64,
    pub outlier_count: usize,
    /// Outliers over all number-typed results.
    pub outlier_fraction: f64,
    pub zero_ground_truth: usize,
    pub non_numeric: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TextMetrics {
    pub scored: usize,
    pub mean_similarity: f64,
    pub mean_bleu: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub mean_steps: f64,
    pub mean_retries: f64,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub count: usize,
    pub failed: usize,
    pub counts: TypeCounts,
    pub bool_accuracy: f64,
    pub trend_accuracy: f64,
    pub numeric: NumericMetrics,
    pub text: TextMetrics,
    pub efficiency: Efficiency,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub outlier_pct: f64,
    pub overall: SplitReport,
    pub observation: SplitReport,
    pub counterfactual: SplitReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: EvalReport,
    pub items: Vec<ScoredResult>,
}

fn accuracy(items: &[(&ScoredResult, &ResultRecord)], t: AnswerType) -> f64 {
    let xs: Vec<f64> = items.iter().filter(|(s, _)| s.answer_type == t).map(|(s, _)| f64::from(u8::from(s.correct == Some(true)))).collect();
    mean(&xs)
}

fn summarize(items: &[(&ScoredResult, &ResultRecord)]) -> SplitReport {
    let mut counts = TypeCounts::default();
    for (s, _) in items {
        match s.answer_type {
            AnswerType::Boolean => counts.boolean += 1,
            AnswerType::Trend => counts.trend += 1,
            AnswerType::Number => counts.number += 1,
            AnswerType::Text => counts.text += 1,
        }
    }
    let errors: Vec<f64> = items
        .iter()
        .filter_map(|(s, _)| match s.relative_error {
            Some(RelativeError::Percent(p)) => Some(p),
            _ => None,
        })
        .collect();
    let excluded = |e: Exclusion| items.iter().filter(|(s, _)| s.relative_error == Some(RelativeError::Excluded(e))).count();
    let outlier_count = excluded(Exclusion::Outlier);
    let sims: Vec<f64> = items.iter().filter_map(|(s, _)| s.similarity).collect();
    let bleus: Vec<f64> = items.iter().filter_map(|(s, _)| s.bleu).collect();
    let per = |f: fn(&ResultRecord) -> f64| mean(&items.iter().map(|(_, r)| f(r)).collect::<Vec<_>>());
    SplitReport {
        count: items.len(),
        failed: items.iter().filter(|(s, _)| s.failed).count(),
        bool_accuracy: accuracy(items, AnswerType::Boolean),
        trend_accuracy: accuracy(items, AnswerType::Trend),
        numeric: NumericMetrics {
            scored: errors.len(),
            median_relative_error: median(&errors),
            mean_relative_error: mean(&errors),
            outlier_count,
            outlier_fraction: if counts.number == 0 { 0.0 } else { outlier_count as f64 / counts.number as f64 },
            zero_ground_truth: excluded(Exclusion::ZeroGroundTruth),
            non_numeric: excluded(Exclusion::NonNumeric),
        },
        text: TextMetrics { scored: sims.len(), mean_similarity: mean(&sims), mean_bleu: mean(&bleus) },
        efficiency: Efficiency {
            mean_steps: per(|r| r.trace.steps as f64),
            mean_retries: per(|r| r.trace.retries as f64),
            mean_input_tokens: per(|r| r.trace.input_tokens as f64),
            mean_output_tokens: per(|r| r.trace.output_tokens as f64),
        },
        counts,
    }
}

/// Scores `results` against `dataset` by query id. Boolean and trend answers
/// are right or wrong after coercion, numbers get a relative error, text gets
/// embedding similarity and BLEU. Failed inferences count as wrong for
/// boolean and trend, as non-numeric for numbers, and are left out of the
/// text means.
pub fn build_report(
    results: &[ResultRecord],
    dataset: &[Query],
    embedder: &dyn EmbeddingBackend,
    config: &EvalConfig,
) -> Result<Evaluation, EvalError> {
    let by_id: BTreeMap<&str, &Query> = dataset.iter().map(|q| (q.id.as_str(), q)).collect();
    let mut seen = BTreeSet::new();
    for r in results {
        if !by_id.contains_key(r.query_id.as_str()) {
            return Err(EvalError::JoinFailure(r.query_id.clone()));
        }
        if !seen.insert(r.query_id.as_str()) {
            return Err(EvalError::DuplicateResult(r.query_id.clone()));
        }
    }

    // embed all text pairs in one batch
    let text_pairs: Vec<(usize, &str, &str)> = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let q = by_id[r.query_id.as_str()];
            (q.ground_truth_type == AnswerType::Text).then_some(())?;
            Some((i, q.ground_truth.as_str(), r.target_value.as_deref()?))
        })
        .collect();
    let texts: Vec<String> = text_pairs.iter().flat_map(|(_, g, p)| [g.to_string(), p.to_string()]).collect();
    let vectors = if texts.is_empty() { Vec::new() } else { embedder.embed(&texts)? };
    let similarity: BTreeMap<usize, f64> =
        text_pairs.iter().enumerate().map(|(k, (i, _, _))| (*i, cosine(&vectors[2 * k], &vectors[2 * k + 1]))).collect();

    let items: Vec<ScoredResult> = results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let q = by_id[r.query_id.as_str()];
            let gt = coerce(&q.ground_truth);
            let pred = r.target_value.as_deref().map(coerce);
            let mut s = ScoredResult {
                query_id: r.query_id.clone(),
                split: q.kind,
                answer_type: q.ground_truth_type,
                failed: r.target_value.is_none(),
                correct: None,
                relative_error: None,
                similarity: None,
                bleu: None,
            };
            match q.ground_truth_type {
                AnswerType::Boolean => s.correct = Some(pred.is_some_and(|p| p.bool_value.is_some() && p.bool_value == gt.bool_value)),
                AnswerType::Trend => s.correct = Some(pred.is_some_and(|p| p.trend_value.is_some() && p.trend_value == gt.trend_value)),
                AnswerType::Number => {
                    s.relative_error = Some(match (gt.number_value, pred.and_then(|p| p.number_value)) {
                        (Some(g), Some(p)) => relative_error(g, p, config.outlier_pct),
                        _ => RelativeError::Excluded(Exclusion::NonNumeric),
                    })
                }
                AnswerType::Text => {
                    if let Some(p) = &r.target_value {
                        s.similarity = similarity.get(&i).copied();
                        s.bleu = Some(bleu(&q.ground_truth, p));
                    }
                }
            }
            s
        })
        .collect();

    let joined: Vec<(&ScoredResult, &ResultRecord)> = items.iter().zip(results).collect();
    let split = |k: QueryKind| joined.iter().filter(|(s, _)| s.split == k).copied().collect::<Vec<_>>();
    let report = EvalReport {
        outlier_pct: config.outlier_pct,
        overall: summarize(&joined),
        observation: summarize(&split(QueryKind::Observation)),
        counterfactual: summarize(&split(QueryKind::Counterfactual)),
    };
    Ok(Evaluation { report, items })
}

/// Reads a JSONL file of `T`, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, EvalError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    parse_jsonl(&text, &path.display().to_string())
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, file: &str) -> Result<Vec<T>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Parse { file: file.to_string(), line: i + 1, message: e.to_string() }))
        .collect()
}
