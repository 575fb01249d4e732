//! JSONL dataset reading and writing.
//!
//! One record per line. The on-disk records carry labeled actions without
//! the terminal marker; parsing appends the END event with a zero interval
//! and maps labels to ids in first-occurrence order.

use crate::error::{Error, Result};
use crate::model::{ActionVocab, EventSequence, END_LABEL};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub actions: Vec<String>,
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_hint: Option<usize>,
    /// Optional latent stage annotation, 1-based, same length as `actions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_truth: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: ActionVocab,
    pub sequences: Vec<EventSequence>,
    pub ids: Vec<String>,
    pub class_hints: Vec<Option<usize>>,
    /// 0-based stage annotations covering the observed events (END excluded).
    pub stage_truth: Vec<Option<Vec<usize>>>,
}

impl Dataset {
    /// Class hints for every sequence, or None if any is missing.
    pub fn complete_hints(&self) -> Option<Vec<usize>> {
        self.class_hints.iter().copied().collect()
    }
}

fn parse_records(text: &str) -> Result<Vec<SequenceRecord>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SequenceRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        check_record(&rec, line_no)?;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::EmptyData("dataset contains no records".into()));
    }
    Ok(records)
}

fn check_record(rec: &SequenceRecord, line: usize) -> Result<()> {
    let fail = |msg: String| Error::Parse { line, msg };
    if rec.actions.is_empty() {
        return Err(fail("record has no actions".into()));
    }
    if rec.actions.len() != rec.times.len() {
        return Err(fail(format!(
            "{} actions but {} times",
            rec.actions.len(),
            rec.times.len()
        )));
    }
    if let Some(bad) = rec.actions.iter().find(|a| a.as_str() == END_LABEL) {
        return Err(fail(format!("reserved label '{bad}' in actions")));
    }
    if rec.times[0] != 0.0 {
        return Err(fail(format!("first interval must be 0, got {}", rec.times[0])));
    }
    if let Some(&t) = rec.times.iter().find(|&&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(fail(format!("invalid interval {t}")));
    }
    if let Some(st) = &rec.stage_truth {
        if st.len() != rec.actions.len() {
            return Err(fail("stage_truth length differs from actions".into()));
        }
        if st.iter().any(|&s| s == 0) {
            return Err(fail("stage_truth values are 1-based".into()));
        }
    }
    Ok(())
}

fn assemble(records: Vec<SequenceRecord>, vocab: ActionVocab) -> Result<Dataset> {
    let end = vocab.end_id();
    let mut sequences = Vec::with_capacity(records.len());
    let mut ids = Vec::with_capacity(records.len());
    let mut class_hints = Vec::with_capacity(records.len());
    let mut stage_truth = Vec::with_capacity(records.len());
    for rec in records {
        let mut actions = Vec::with_capacity(rec.actions.len() + 1);
        for label in &rec.actions {
            let id = vocab.id_of(label).ok_or_else(|| {
                Error::Data(format!(
                    "label '{label}' in record '{}' not in the model vocabulary",
                    rec.id
                ))
            })?;
            actions.push(id);
        }
        let mut times = rec.times;
        actions.push(end);
        times.push(0.0);
        sequences.push(EventSequence {
            actions,
            times,
            complete: rec.complete,
        });
        ids.push(rec.id);
        class_hints.push(rec.class_hint);
        stage_truth.push(rec.stage_truth.map(|st| st.iter().map(|&s| s - 1).collect()));
    }
    Ok(Dataset {
        vocab,
        sequences,
        ids,
        class_hints,
        stage_truth,
    })
}

/// Parse a JSONL dataset, building the vocabulary from the labels in
/// first-occurrence order (END last).
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let records = parse_records(text)?;
    let mut labels: Vec<&str> = Vec::new();
    for rec in &records {
        for a in &rec.actions {
            if !labels.contains(&a.as_str()) {
                labels.push(a);
            }
        }
    }
    let vocab = ActionVocab::from_labels(&labels)?;
    assemble(records, vocab)
}

/// Parse a JSONL dataset against an existing vocabulary (e.g. a held-out
/// set scored under a trained model). Unknown labels are an error.
pub fn parse_dataset_with_vocab(text: &str, vocab: &ActionVocab) -> Result<Dataset> {
    let records = parse_records(text)?;
    assemble(records, vocab.clone())
}

/// Serialize sequences back to JSONL, stripping the END event and emitting
/// 1-based stage annotations when given.
pub fn write_dataset(
    vocab: &ActionVocab,
    sequences: &[EventSequence],
    ids: &[String],
    class_hints: &[Option<usize>],
    stage_truth: &[Option<Vec<usize>>],
) -> String {
    let end = vocab.end_id();
    let mut out = String::new();
    for (i, seq) in sequences.iter().enumerate() {
        let n = seq
            .actions
            .iter()
            .position(|&a| a == end)
            .unwrap_or(seq.actions.len());
        let rec = SequenceRecord {
            id: ids[i].clone(),
            actions: seq.actions[..n].iter().map(|&a| vocab.label(a).to_string()).collect(),
            times: seq.times[..n].to_vec(),
            complete: seq.complete,
            class_hint: class_hints[i],
            stage_truth: stage_truth[i]
                .as_ref()
                .map(|st| st[..n.min(st.len())].iter().map(|&s| s + 1).collect()),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}
