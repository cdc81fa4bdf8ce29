//! Scoring of response files against a QA set and the aggregate tables.
//!
//! Accuracy is the mean task reward: the exact-match rate for
//! multiple-choice items and the mean thresholded numerical reward otherwise.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::qa::{QAPair, TaskType};
use crate::reward::{score_response, RewardBreakdown, RewardConfig};
use crate::scene::SEQUENCE_LENGTHS;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("no responses to score")]
    Empty,
    #[error("responses reference unknown qa_ids: {}", .0.join(", "))]
    UnknownQaIds(Vec<String>),
    #[error("duplicate qa_id in QA set: {0}")]
    DuplicateQa(String),
}

/// Input line of a responses file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseLine {
    pub qa_id: String,
    pub raw: String,
}

/// Output line of a scored file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub qa_id: String,
    pub r_format: f64,
    pub r_task: f64,
    pub r_total: f64,
}

impl ScoredRecord {
    fn new(qa_id: &str, b: &RewardBreakdown) -> Self {
        Self {
            qa_id: qa_id.to_string(),
            r_format: b.r_format,
            r_task: b.r_task,
            r_total: b.r_total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cell {
    pub sum: f64,
    pub count: usize,
}

impl Cell {
    pub fn add(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub by_length: BTreeMap<usize, Cell>,
    pub by_task: BTreeMap<TaskType, Cell>,
    pub matrix: BTreeMap<(TaskType, usize), Cell>,
    pub multiple_choice: Cell,
    pub numerical: Cell,
    pub overall: Cell,
    pub mean_format: Cell,
}

impl BenchReport {
    pub fn add(&mut self, qa: &QAPair, b: &RewardBreakdown) {
        self.add_scores(qa, b.r_format, b.r_task);
    }

    pub fn add_scores(&mut self, qa: &QAPair, r_format: f64, r_task: f64) {
        let len = qa.frames.len();
        self.by_length.entry(len).or_default().add(r_task);
        self.by_task.entry(qa.task).or_default().add(r_task);
        self.matrix.entry((qa.task, len)).or_default().add(r_task);
        if qa.task.is_multiple_choice() {
            self.multiple_choice.add(r_task);
        } else {
            self.numerical.add(r_task);
        }
        self.overall.add(r_task);
        self.mean_format.add(r_format);
    }

    fn lengths(&self) -> Vec<usize> {
        let mut l: Vec<usize> = SEQUENCE_LENGTHS.to_vec();
        for k in self.by_length.keys() {
            if !l.contains(k) {
                l.push(*k);
            }
        }
        l.sort_unstable();
        l
    }

    /// Task × length accuracy table with overall row and column.
    pub fn to_csv(&self) -> String {
        let lengths = self.lengths();
        let mut out = String::from("task");
        for l in &lengths {
            let _ = write!(out, ",{l}");
        }
        out.push_str(",overall,count\n");
        let fmt = |c: Option<&Cell>| match c.and_then(Cell::mean) {
            Some(v) => format!("{v:.4}"),
            None => String::new(),
        };
        for task in TaskType::ALL {
            let _ = write!(out, "{task}");
            for l in &lengths {
                let _ = write!(out, ",{}", fmt(self.matrix.get(&(task, *l))));
            }
            let row = self.by_task.get(&task);
            let _ = writeln!(out, ",{},{}", fmt(row), row.map_or(0, |c| c.count));
        }
        out.push_str("overall");
        for l in &lengths {
            let _ = write!(out, ",{}", fmt(self.by_length.get(l)));
        }
        let _ = writeln!(out, ",{},{}", fmt(Some(&self.overall)), self.overall.count);
        out
    }

    /// Aligned plain-text rendering: per-length, per-task and split tables.
    pub fn to_text(&self) -> String {
        let lengths = self.lengths();
        let pct = |c: Option<&Cell>| match c.and_then(Cell::mean) {
            Some(v) => format!("{:>8.2}", v * 100.0),
            None => format!("{:>8}", "-"),
        };
        let mut out = String::new();
        out.push_str("Accuracy (%) by number of input frames\n");
        let _ = write!(out, "{:<22}", "frames");
        for l in &lengths {
            let _ = write!(out, "{l:>8}");
        }
        let _ = writeln!(out, "{:>9}", "Overall");
        for task in TaskType::ALL {
            let _ = write!(out, "{:<22}", task.as_str());
            for l in &lengths {
                out.push_str(&pct(self.matrix.get(&(task, *l))));
            }
            let _ = writeln!(out, " {}", pct(self.by_task.get(&task)));
        }
        let _ = write!(out, "{:<22}", "overall");
        for l in &lengths {
            out.push_str(&pct(self.by_length.get(l)));
        }
        let _ = writeln!(out, " {}", pct(Some(&self.overall)));
        let _ = writeln!(
            out,
            "\nmultiple-choice {} ({} items)  numerical {} ({} items)  format {}",
            pct(Some(&self.multiple_choice)).trim(),
            self.multiple_choice.count,
            pct(Some(&self.numerical)).trim(),
            self.numerical.count,
            pct(Some(&self.mean_format)).trim()
        );
        out
    }
}

/// Maps qa_id to position, checking that every id in `wanted` is known.
fn index_qas<'a, 'b>(
    qas: &'a [QAPair],
    wanted: impl Iterator<Item = &'b str>,
) -> Result<HashMap<&'a str, usize>, ScoreError> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, q) in qas.iter().enumerate() {
        if index.insert(q.qa_id.as_str(), i).is_some() {
            return Err(ScoreError::DuplicateQa(q.qa_id.clone()));
        }
    }
    let mut unknown: Vec<String> = wanted
        .filter(|id| !index.contains_key(id))
        .map(str::to_string)
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(ScoreError::UnknownQaIds(unknown));
    }
    Ok(index)
}

/// Rebuilds the aggregate tables from previously scored records.
pub fn report_from_scored(
    qas: &[QAPair],
    scored: &[ScoredRecord],
) -> Result<BenchReport, ScoreError> {
    if scored.is_empty() {
        return Err(ScoreError::Empty);
    }
    let index = index_qas(qas, scored.iter().map(|r| r.qa_id.as_str()))?;
    let mut report = BenchReport::default();
    for r in scored {
        report.add_scores(&qas[index[r.qa_id.as_str()]], r.r_format, r.r_task);
    }
    Ok(report)
}

/// Scores every response. Output records follow the QA set order, with
/// several responses to one item ordered by their text, so the result does
/// not depend on the order of `responses`.
pub fn score_all(
    qas: &[QAPair],
    responses: &[ResponseLine],
    cfg: &RewardConfig,
) -> Result<(Vec<ScoredRecord>, BenchReport), ScoreError> {
    if responses.is_empty() {
        return Err(ScoreError::Empty);
    }
    let index = index_qas(qas, responses.iter().map(|r| r.qa_id.as_str()))?;
    let mut ordered: Vec<(usize, &ResponseLine)> = responses
        .iter()
        .map(|r| (index[r.qa_id.as_str()], r))
        .collect();
    ordered.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.raw.cmp(&b.1.raw)));

    let mut report = BenchReport::default();
    let mut scored = Vec::with_capacity(ordered.len());
    for (i, r) in ordered {
        let qa = &qas[i];
        let b = score_response(qa, &r.raw, cfg);
        report.add(qa, &b);
        scored.push(ScoredRecord::new(&qa.qa_id, &b));
    }
    Ok((scored, report))
}
