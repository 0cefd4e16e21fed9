//! Corpus ingestion, batch scoring, quality classification, threshold
//! selection and ranking.
//!
//! Corpus files are JSONL, one record per line:
//!
//! ```text
//! {"id": "..", "task": "SA"|"NLI"|"SE", "original": "..", "generated": "..",
//!  "original_label": "..",
//!  "human": {"consistency": f, "naturalness": f, "human_label": "..", "difficulty": f}?,
//!  "predicted_label": ".."?}
//! ```

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backends::{EmbeddingProvider, MaskedLmProvider};
use crate::config::{ConfigError, RunConfig};
use crate::exec::{map_ordered, Execution};
use crate::semeval::{sem_score, SemError, SemScore};
use crate::syneval::{nat_score, NatError, NatScore};
use crate::text::TextPair;

/// Human scores below this are "inconsistent" / "unnatural".
pub const HUMAN_CUTOFF: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "SA")]
    Sa,
    #[serde(rename = "NLI")]
    Nli,
    #[serde(rename = "SE")]
    Se,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sa => "SA",
            Self::Nli => "NLI",
            Self::Se => "SE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "SA" => Some(Self::Sa),
            "NLI" => Some(Self::Nli),
            "SE" => Some(Self::Se),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Worker-mean human judgments on a 1-5 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanAnnotation {
    pub consistency: f64,
    pub naturalness: f64,
    pub human_label: String,
    pub difficulty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCaseRecord {
    pub id: String,
    pub task: TaskKind,
    pub original: String,
    pub generated: String,
    pub original_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human: Option<HumanAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticThresholds {
    #[serde(rename = "SA")]
    pub sa: f64,
    #[serde(rename = "NLI")]
    pub nli: f64,
    #[serde(rename = "SE")]
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityThresholds {
    pub semantic: SemanticThresholds,
    pub naturalness: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            semantic: SemanticThresholds {
                sa: 0.87,
                nli: 0.90,
                se: 0.91,
            },
            naturalness: 0.21,
        }
    }
}

impl QualityThresholds {
    pub fn semantic_for(&self, task: TaskKind) -> f64 {
        match task {
            TaskKind::Sa => self.semantic.sa,
            TaskKind::Nli => self.semantic.nli,
            TaskKind::Se => self.semantic.se,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = [
            ("SA", self.semantic.sa),
            ("NLI", self.semantic.nli),
            ("SE", self.semantic.se),
            ("naturalness", self.naturalness),
        ];
        for (name, value) in all {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::Threshold { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing field {field:?}")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: field {field:?} has the wrong type")]
    WrongType { line: usize, field: &'static str },
    #[error("line {line}: unknown task {task:?}")]
    UnknownTask { line: usize, task: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {field} = {value} outside [1, 5]")]
    OutOfRange {
        line: usize,
        field: &'static str,
        value: f64,
    },
    #[error("{0}")]
    Io(String),
}

impl CorpusError {
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Parse { line, .. }
            | Self::MissingField { line, .. }
            | Self::WrongType { line, .. }
            | Self::UnknownTask { line, .. }
            | Self::DuplicateId { line, .. }
            | Self::OutOfRange { line, .. } => Some(*line),
            Self::Io(_) => None,
        }
    }
}

const REQUIRED_STRINGS: [&str; 5] = ["id", "task", "original", "generated", "original_label"];

/// Validates and decodes one corpus line (1-based `line` for messages).
pub fn parse_record(line: usize, text: &str) -> Result<TestCaseRecord, CorpusError> {
    let value: Value = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
        line,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| CorpusError::Parse {
        line,
        message: "expected a JSON object".into(),
    })?;
    for field in REQUIRED_STRINGS {
        match obj.get(field) {
            None | Some(Value::Null) => return Err(CorpusError::MissingField { line, field }),
            Some(Value::String(_)) => {}
            Some(_) => return Err(CorpusError::WrongType { line, field }),
        }
    }
    let task = obj["task"].as_str().unwrap();
    if TaskKind::parse(task).is_none() {
        return Err(CorpusError::UnknownTask {
            line,
            task: task.to_string(),
        });
    }
    let record: TestCaseRecord = serde_json::from_value(value).map_err(|e| CorpusError::Parse {
        line,
        message: e.to_string(),
    })?;
    if let Some(h) = &record.human {
        for (field, v) in [
            ("consistency", h.consistency),
            ("naturalness", h.naturalness),
            ("difficulty", h.difficulty),
        ] {
            if !(1.0..=5.0).contains(&v) {
                return Err(CorpusError::OutOfRange {
                    line,
                    field,
                    value: v,
                });
            }
        }
    }
    Ok(record)
}

/// Result of a lenient read: good records plus per-line failures.
#[derive(Debug, Default)]
pub struct CorpusRead {
    pub records: Vec<TestCaseRecord>,
    pub errors: Vec<CorpusError>,
}

/// Reads every line, keeping going past bad ones. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> CorpusRead {
    let mut out = CorpusRead::default();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = match line {
            Ok(t) => t,
            Err(e) => {
                out.errors
                    .push(CorpusError::Io(format!("line {line_no}: {e}")));
                break;
            }
        };
        if text.trim().is_empty() {
            continue;
        }
        match parse_record(line_no, &text) {
            Ok(r) if !seen.insert(r.id.clone()) => out.errors.push(CorpusError::DuplicateId {
                line: line_no,
                id: r.id,
            }),
            Ok(r) => out.records.push(r),
            Err(e) => out.errors.push(e),
        }
    }
    out
}

/// Strict load: the first bad line is an error.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<TestCaseRecord>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CorpusError::Io(format!("{}: {e}", path.display())))?;
    let read = read_corpus(BufReader::new(file));
    match read.errors.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(read.records),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    #[serde(flatten)]
    pub record: TestCaseRecord,
    pub sem: SemScore,
    pub nat: NatScore,
}

/// One line of scored output: the input record, both scores, and the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLine {
    #[serde(flatten)]
    pub scored: ScoredRecord,
    pub config: RunConfig,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("semantic scoring failed: {0}")]
    Semantic(#[from] SemError),
    #[error("naturalness scoring failed: {0}")]
    Naturalness(#[from] NatError),
}

/// A record that could not be scored. The batch carries on without it.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordFailure {
    pub position: usize,
    pub id: String,
    pub error: ScoreError,
}

impl fmt::Display for RecordFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "record {:?} (#{}): {}",
            self.id, self.position, self.error
        )
    }
}

pub fn score_record<E, M>(
    record: &TestCaseRecord,
    embeddings: &E,
    mlm: &M,
    cfg: &RunConfig,
) -> Result<ScoredRecord, ScoreError>
where
    E: EmbeddingProvider + ?Sized,
    M: MaskedLmProvider + ?Sized,
{
    let pair = TextPair::new(&record.original, &record.generated);
    let sem = sem_score(&pair, embeddings, cfg.sem_params())?;
    let nat = nat_score(&pair.generated, mlm, cfg.phi, cfg.aggregation)?;
    Ok(ScoredRecord {
        record: record.clone(),
        sem,
        nat,
    })
}

/// Scores every record, in input order. Only an invalid configuration aborts.
pub fn score_corpus<E, M>(
    records: &[TestCaseRecord],
    embeddings: &E,
    mlm: &M,
    cfg: &RunConfig,
    exec: Execution,
) -> Result<Vec<Result<ScoredRecord, RecordFailure>>, ConfigError>
where
    E: EmbeddingProvider + ?Sized,
    M: MaskedLmProvider + ?Sized,
{
    cfg.validate()?;
    let indexed: Vec<(usize, &TestCaseRecord)> = records.iter().enumerate().collect();
    Ok(map_ordered(&indexed, exec, |&(position, record)| {
        score_record(record, embeddings, mlm, cfg).map_err(|error| RecordFailure {
            position,
            id: record.id.clone(),
            error,
        })
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Automatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityClassification {
    pub inconsistent: bool,
    pub unnatural: bool,
    /// Only defined for human-sourced classification.
    pub false_alarm: Option<bool>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("record {id:?} has no human annotation")]
pub struct MissingAnnotation {
    pub id: String,
}

/// Human source reads only the annotation and labels; automatic source reads
/// only the scores and thresholds.
pub fn classify(
    sr: &ScoredRecord,
    th: &QualityThresholds,
    source: Source,
) -> Result<QualityClassification, MissingAnnotation> {
    match source {
        Source::Human => classify_human(&sr.record),
        Source::Automatic => Ok(QualityClassification {
            inconsistent: sr.sem.value < th.semantic_for(sr.record.task),
            unnatural: sr.nat.value < th.naturalness,
            false_alarm: None,
        }),
    }
}

pub fn classify_human(record: &TestCaseRecord) -> Result<QualityClassification, MissingAnnotation> {
    let h = record.human.as_ref().ok_or_else(|| MissingAnnotation {
        id: record.id.clone(),
    })?;
    Ok(QualityClassification {
        inconsistent: h.consistency < HUMAN_CUTOFF,
        unnatural: h.naturalness < HUMAN_CUTOFF,
        false_alarm: Some(h.human_label != record.original_label),
    })
}

pub fn passes(sr: &ScoredRecord, th: &QualityThresholds) -> bool {
    sr.sem.value >= th.semantic_for(sr.record.task) && sr.nat.value >= th.naturalness
}

/// Records passing both thresholds, input order preserved.
pub fn select<'a>(scored: &'a [ScoredRecord], th: &QualityThresholds) -> Vec<&'a ScoredRecord> {
    scored.iter().filter(|sr| passes(sr, th)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankKey {
    Semantic,
    Naturalness,
    #[default]
    Mean,
}

impl RankKey {
    pub fn of(self, sr: &ScoredRecord) -> f64 {
        match self {
            Self::Semantic => sr.sem.value,
            Self::Naturalness => sr.nat.value,
            Self::Mean => (sr.sem.value + sr.nat.value) / 2.0,
        }
    }
}

impl std::str::FromStr for RankKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "semantic" => Ok(Self::Semantic),
            "naturalness" => Ok(Self::Naturalness),
            "mean" => Ok(Self::Mean),
            other => Err(format!("unknown rank key {other:?}")),
        }
    }
}

/// Stable descending sort by `key`.
pub fn rank(scored: &[ScoredRecord], key: RankKey) -> Vec<&ScoredRecord> {
    rank_indices(scored, key)
        .into_iter()
        .map(|i| &scored[i])
        .collect()
}

/// Positions of `scored` in [`rank`] order.
pub fn rank_indices(scored: &[ScoredRecord], key: RankKey) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| key.of(&scored[b]).total_cmp(&key.of(&scored[a])));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Proportion {
    pub count: usize,
    pub fraction: f64,
}

impl Proportion {
    fn of(count: usize, total: usize) -> Self {
        Self {
            count,
            fraction: if total == 0 {
                0.0
            } else {
                count as f64 / total as f64
            },
        }
    }
}

/// Breakdown of a classified set. An empty input yields all zeros.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProportionReport {
    pub total: usize,
    pub inconsistent: Proportion,
    pub unnatural: Proportion,
    pub both: Proportion,
    pub inconsistent_only: Proportion,
    pub unnatural_only: Proportion,
    pub neither: Proportion,
    /// Fraction among items whose false-alarm flag is defined.
    pub false_alarm: Proportion,
}

pub fn summarize(classified: &[QualityClassification]) -> ProportionReport {
    let total = classified.len();
    let count =
        |f: &dyn Fn(&QualityClassification) -> bool| classified.iter().filter(|c| f(c)).count();
    let defined = count(&|c| c.false_alarm.is_some());
    ProportionReport {
        total,
        inconsistent: Proportion::of(count(&|c| c.inconsistent), total),
        unnatural: Proportion::of(count(&|c| c.unnatural), total),
        both: Proportion::of(count(&|c| c.inconsistent && c.unnatural), total),
        inconsistent_only: Proportion::of(count(&|c| c.inconsistent && !c.unnatural), total),
        unnatural_only: Proportion::of(count(&|c| !c.inconsistent && c.unnatural), total),
        neither: Proportion::of(count(&|c| !c.inconsistent && !c.unnatural), total),
        false_alarm: Proportion::of(count(&|c| c.false_alarm == Some(true)), defined),
    }
}
