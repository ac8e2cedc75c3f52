//! Exact Match, CodeBLEU and Execution Accuracy, per example and in
//! aggregate.

mod codebleu;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::aligner::WranglingExample;
use crate::parallel::map_ordered;
use crate::pyast::{tokenize, SyntaxError, TokenKind};
use crate::replay::{ExecStatus, Op, ReplayRequest, Replayer};

pub use codebleu::{
    ast_match, codebleu, dataflow_edges, dataflow_match, ngram_match, ngram_tokens, subtrees, weighted_ngram_match, CodeBleu,
    CodeBleuComponents, FlowEdge, GoldUnparseable, KEYWORD_WEIGHT,
};

/// Token stream EM compares: comments and blank lines gone, line structure
/// and indentation kept.
fn em_tokens(code: &str) -> Result<Vec<(TokenKind, String)>, SyntaxError> {
    Ok(tokenize(code)?.into_iter().map(|t| (t.kind, t.text)).collect())
}

/// 1 iff both sides lex to the same token sequence. A side that fails to
/// lex scores 0 and is reported as the error.
pub fn exact_match(pred: &str, gold: &str) -> Result<bool, SyntaxError> {
    Ok(em_tokens(pred)? == em_tokens(gold)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub id: String,
    pub em: u8,
    /// Absent when the gold does not parse.
    pub codebleu: Option<f64>,
    pub cb_components: Option<CodeBleuComponents>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ea: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ea_status: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub examples: usize,
    #[serde(rename = "EM%")]
    pub em_pct: f64,
    #[serde(rename = "CB")]
    pub cb_mean: f64,
    #[serde(rename = "CB_components")]
    pub cb_components: BTreeMap<String, f64>,
    #[serde(rename = "EA%", skip_serializing_if = "Option::is_none", default)]
    pub ea_pct: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub ea_status_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_example: Vec<MetricRow>,
    pub aggregate: Aggregate,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

/// EM and CodeBLEU for one pair.
pub fn surface_row(id: &str, pred: &str, gold: &str) -> MetricRow {
    let mut flags = Vec::new();
    let em = match exact_match(pred, gold) {
        Ok(m) => m as u8,
        Err(_) => {
            flags.push("unlexable_candidate".to_owned());
            0
        }
    };
    let (codebleu, cb_components) = match codebleu(pred, gold) {
        Ok(s) => (Some(s.score), Some(s.components)),
        Err(_) => {
            flags.push("gold_unparseable".to_owned());
            (None, None)
        }
    };
    MetricRow { id: id.to_owned(), em, codebleu, cb_components, ea: None, ea_status: None, flags }
}

/// Pairs every example with its prediction; an example with no prediction
/// is scored against the empty string and flagged.
pub fn score_surface(examples: &[WranglingExample], preds: &BTreeMap<String, String>) -> Vec<MetricRow> {
    map_ordered(examples, |e| {
        let (pred, missing) = match preds.get(&e.id) {
            Some(p) => (p.as_str(), false),
            None => ("", true),
        };
        let mut row = surface_row(&e.id, pred, &e.target_code);
        if missing {
            row.flags.push("missing_prediction".to_owned());
        }
        row
    })
}

/// Where the sandbox replays an example from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaySource {
    pub id: String,
    pub cells: Vec<String>,
    pub data_dir: PathBuf,
}

pub fn execute_request(e: &WranglingExample, src: &ReplaySource, candidate: &str, timeout_s: u64) -> ReplayRequest {
    ReplayRequest {
        op: Op::Execute,
        cells: src.cells.clone(),
        target: e.target_code.clone(),
        candidate: Some(candidate.to_owned()),
        target_var: e.provenance.target_var.clone(),
        data_dir: src.data_dir.clone(),
        timeout_s,
        max_rows: None,
    }
}

/// Fills `ea`/`ea_status` on rows. An empty candidate fails without a
/// sandbox round trip; a sandbox that cannot answer leaves the row alone
/// and is reported in the returned count.
pub fn execution_accuracy(
    rows: &mut [MetricRow],
    examples: &[WranglingExample],
    preds: &BTreeMap<String, String>,
    sources: &BTreeMap<String, ReplaySource>,
    replayer: &dyn Replayer,
    timeout_s: u64,
) -> usize {
    let verdicts: Vec<Option<ExecStatus>> = map_ordered(examples, |e| {
        let pred = preds.get(&e.id).map(String::as_str).unwrap_or("");
        if pred.trim().is_empty() {
            return Some(ExecStatus::Exception);
        }
        let src = sources.get(&e.id)?;
        replayer.run(&execute_request(e, src, pred, timeout_s)).ok().map(|r| r.status)
    });
    let mut unavailable = 0;
    for (row, v) in rows.iter_mut().zip(verdicts) {
        match v {
            Some(status) => {
                row.ea = Some((status == ExecStatus::Ok) as u8);
                row.ea_status = Some(status.as_str().to_owned());
            }
            None => unavailable += 1,
        }
    }
    unavailable
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Exact means over the rows that carry each value. EA is reported only when
/// every row has a verdict.
pub fn aggregate(rows: Vec<MetricRow>, metadata: BTreeMap<String, serde_json::Value>) -> MetricReport {
    let scored: Vec<&MetricRow> = rows.iter().filter(|r| r.codebleu.is_some()).collect();
    let mut cb_components = BTreeMap::new();
    let comps: Vec<CodeBleuComponents> = scored.iter().filter_map(|r| r.cb_components).collect();
    cb_components.insert("ngram".to_owned(), mean(comps.iter().map(|c| c.ngram)));
    cb_components.insert("weighted_ngram".to_owned(), mean(comps.iter().map(|c| c.weighted_ngram)));
    cb_components.insert("ast_match".to_owned(), mean(comps.iter().filter_map(|c| c.ast_match)));
    cb_components.insert("dataflow_match".to_owned(), mean(comps.iter().filter_map(|c| c.dataflow_match)));
    let ea_complete = !rows.is_empty() && rows.iter().all(|r| r.ea.is_some());
    let mut ea_status_counts = BTreeMap::new();
    for s in rows.iter().filter_map(|r| r.ea_status.as_ref()) {
        *ea_status_counts.entry(s.clone()).or_insert(0) += 1;
    }
    let aggregate = Aggregate {
        examples: rows.len(),
        em_pct: 100.0 * mean(rows.iter().map(|r| r.em as f64)),
        cb_mean: mean(scored.iter().filter_map(|r| r.codebleu)),
        cb_components,
        ea_pct: ea_complete.then(|| 100.0 * mean(rows.iter().filter_map(|r| r.ea).map(f64::from))),
        ea_status_counts,
    };
    MetricReport { per_example: rows, aggregate, metadata }
}

impl MetricReport {
    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let a = &self.aggregate;
        let mut s = format!("{:<16} {:>10}\n", "metric", "value");
        s += &format!("{:<16} {:>10}\n", "examples", a.examples);
        s += &format!("{:<16} {:>10.2}\n", "EM (%)", a.em_pct);
        s += &format!("{:<16} {:>10.4}\n", "CodeBLEU", a.cb_mean);
        for (k, v) in &a.cb_components {
            s += &format!("{:<16} {:>10.4}\n", format!("  {k}"), v);
        }
        match a.ea_pct {
            Some(ea) => s += &format!("{:<16} {:>10.2}\n", "EA (%)", ea),
            None => s += &format!("{:<16} {:>10}\n", "EA (%)", "n/a"),
        }
        for (k, v) in &a.ea_status_counts {
            s += &format!("{:<16} {:>10}\n", format!("  {k}"), v);
        }
        s
    }
}
