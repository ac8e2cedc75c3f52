use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::context::context_code_cells;
use super::{Split, WranglingExample};
use crate::pyast::surface_tokens;

pub const MAX_CONTEXT_CODE_CELLS: usize = 10;

/// Whitespace-insensitive form used for dedup and leakage checks: blank
/// lines dropped, runs of whitespace collapsed.
pub fn normalize_code(text: &str) -> String {
    text.lines().map(|l| l.split_whitespace().collect::<Vec<_>>().join(" ")).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("\n")
}

fn context_text(ex: &WranglingExample) -> String {
    normalize_code(&ex.context.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join("\n"))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalizeReport {
    pub candidates_in: usize,
    pub dropped_context_too_long: usize,
    pub dropped_identical_frames: usize,
    pub dropped_duplicate_example: usize,
    pub dropped_duplicate_target: usize,
    pub dropped_test_leakage: usize,
    pub examples_out: usize,
    pub per_split: BTreeMap<String, usize>,
}

/// Filters, de-duplicates and truncates a candidate pool. Output is sorted
/// by id; the first example by id wins every duplicate group.
pub fn finalize(mut candidates: Vec<WranglingExample>, max_rows: usize) -> (Vec<WranglingExample>, FinalizeReport) {
    let mut report = FinalizeReport { candidates_in: candidates.len(), ..Default::default() };
    candidates.sort_by(|a, b| a.id.cmp(&b.id));

    let before = candidates.len();
    candidates.retain(|e| context_code_cells(&e.context) <= MAX_CONTEXT_CODE_CELLS);
    report.dropped_context_too_long = before - candidates.len();

    let before = candidates.len();
    candidates.retain(|e| !e.input_frame.identical(&e.output_frame));
    report.dropped_identical_frames = before - candidates.len();

    let before = candidates.len();
    let mut seen = BTreeSet::new();
    candidates.retain(|e| {
        let key = serde_json::to_string(&(&e.context, &e.target_code, &e.input_frame, &e.output_frame)).unwrap_or_default();
        seen.insert(key)
    });
    report.dropped_duplicate_example = before - candidates.len();

    let before = candidates.len();
    let mut seen = BTreeSet::new();
    candidates.retain(|e| seen.insert(normalize_code(&e.target_code)));
    report.dropped_duplicate_target = before - candidates.len();

    let before = candidates.len();
    let seen_contexts: Vec<String> = candidates.iter().filter(|e| e.split != Split::Test).map(context_text).collect();
    candidates.retain(|e| {
        e.split != Split::Test || {
            let t = normalize_code(&e.target_code);
            !seen_contexts.iter().any(|c| c.contains(&t))
        }
    });
    report.dropped_test_leakage = before - candidates.len();

    for e in &mut candidates {
        if e.split != Split::Test {
            e.input_frame.truncate(max_rows);
            e.output_frame.truncate(max_rows);
        }
        *report.per_split.entry(e.split.as_str().to_owned()).or_default() += 1;
    }
    report.examples_out = candidates.len();
    (candidates, report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub id: String,
    pub rule: String,
    pub detail: String,
}

/// Checks every dataset-level invariant and reports each breach.
pub fn validate(examples: &[WranglingExample], max_rows: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |id: &str, rule: &str, detail: String| {
        out.push(Violation { id: id.to_owned(), rule: rule.to_owned(), detail });
    };
    let mut ids = BTreeSet::new();
    let mut targets: BTreeMap<String, &str> = BTreeMap::new();
    for e in examples {
        if !ids.insert(e.id.as_str()) {
            flag(&e.id, "unique_id", "id repeats".into());
        }
        let n = context_code_cells(&e.context);
        if n > MAX_CONTEXT_CODE_CELLS {
            flag(&e.id, "context_code_cells", format!("{n} code cells"));
        }
        if e.input_frame.identical(&e.output_frame) {
            flag(&e.id, "input_ne_output", "input and output frames are identical".into());
        }
        for (name, f) in [("input_frame", &e.input_frame), ("output_frame", &e.output_frame)] {
            if !f.is_well_formed() {
                flag(&e.id, "snapshot_shape", format!("{name} rows, columns and totals disagree"));
            }
            if e.split != Split::Test && f.rows.len() > max_rows {
                flag(&e.id, "row_limit", format!("{name} keeps {} rows", f.rows.len()));
            }
        }
        let norm = normalize_code(&e.target_code);
        if norm.is_empty() {
            flag(&e.id, "target_nonempty", "empty target".into());
        }
        if let Some(other) = targets.insert(norm, &e.id) {
            flag(&e.id, "unique_target", format!("same target as {other}"));
        }
        let mentions_var = surface_tokens(&e.target_code).map(|toks| toks.contains(&e.provenance.target_var)).unwrap_or(false);
        if !mentions_var {
            flag(&e.id, "target_references_var", format!("no token {}", e.provenance.target_var));
        }
        if e.provenance.context_sources.len() != e.context.len() {
            flag(&e.id, "context_sources", "one source entry per context cell required".into());
        }
        let order: Vec<usize> = e.provenance.context_sources.iter().flatten().copied().collect();
        if order.windows(2).any(|w| w[0] >= w[1]) {
            flag(&e.id, "context_order", "context cells out of notebook order".into());
        }
        if e.split != Split::for_notebook(&e.provenance.notebook) {
            flag(&e.id, "split", "split disagrees with notebook hash".into());
        }
    }
    let contexts: Vec<(&str, String)> =
        examples.iter().filter(|e| e.split != Split::Test).map(|e| (e.id.as_str(), context_text(e))).collect();
    for e in examples.iter().filter(|e| e.split == Split::Test) {
        let t = normalize_code(&e.target_code);
        if let Some((other, _)) = contexts.iter().find(|(_, c)| c.contains(&t)) {
            flag(&e.id, "test_leakage", format!("target appears in context of {other}"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aligner::{Column, ContextCell, ContextKind, DataframeSnapshot, Provenance, SegmentCoords};
    use crate::lifecycle::Coord;
    use serde_json::json;

    fn frame(vals: &[i64]) -> DataframeSnapshot {
        DataframeSnapshot {
            columns: vec![Column { name: "a".into(), dtype: "int64".into() }],
            rows: vals.iter().map(|v| vec![json!(v)]).collect(),
            total_rows: vals.len() as u64,
            truncated: false,
        }
    }

    fn notebook_in(split: Split) -> String {
        (0..).map(|i| format!("nb{i}")).find(|n| Split::for_notebook(n) == split).unwrap()
    }

    fn ex(id: &str, split: Split, context: &[&str], target: &str, input: &[i64], output: &[i64]) -> WranglingExample {
        WranglingExample {
            id: id.into(),
            split,
            context: context.iter().map(|t| ContextCell { kind: ContextKind::Code, text: t.to_string() }).collect(),
            target_code: target.into(),
            input_frame: frame(input),
            output_frame: frame(output),
            provenance: Provenance {
                notebook: notebook_in(split),
                span: "df@0.0".into(),
                segment: SegmentCoords { begin: Coord::new(1, 0), end: Coord::new(1, 0) },
                target_var: "df".into(),
                context_sources: context.iter().enumerate().map(|(i, _)| Some(i)).collect(),
                notes: vec![],
            },
        }
    }

    #[test]
    fn duplicate_targets_keep_first() {
        let (out, r) = finalize(
            vec![
                ex("b", Split::Train, &["x"], "df = df.dropna()", &[1], &[2]),
                ex("a", Split::Train, &["y"], "df  =  df.dropna()\n\n", &[1], &[3]),
            ],
            10,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "a");
        assert_eq!(r.dropped_duplicate_target, 1);
    }

    #[test]
    fn identical_frames_dropped() {
        let (out, r) = finalize(vec![ex("a", Split::Train, &["x"], "df = df", &[1, 2], &[1, 2])], 10);
        assert!(out.is_empty());
        assert_eq!(r.dropped_identical_frames, 1);
    }

    #[test]
    fn test_leakage_dropped() {
        let (out, r) = finalize(
            vec![
                ex("t", Split::Test, &["z"], "df['r'] = df.a / df.b", &[1], &[2]),
                ex("u", Split::Train, &["df['r']  =  df.a / df.b\nplt.plot(df)"], "df = df.head(3)", &[1], &[2]),
            ],
            10,
        );
        assert_eq!(out.iter().map(|e| e.id.as_str()).collect::<Vec<_>>(), vec!["u"]);
        assert_eq!(r.dropped_test_leakage, 1);
    }

    #[test]
    fn too_many_context_cells_dropped() {
        let ctx: Vec<String> = (0..11).map(|i| format!("x{i} = {i}")).collect();
        let ctx: Vec<&str> = ctx.iter().map(String::as_str).collect();
        let (out, r) = finalize(vec![ex("a", Split::Train, &ctx, "df = df.dropna()", &[1], &[2])], 10);
        assert!(out.is_empty());
        assert_eq!(r.dropped_context_too_long, 1);
        let (out, _) = finalize(vec![ex("a", Split::Train, &ctx[..10], "df = df.dropna()", &[1], &[2])], 10);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn truncation_only_outside_test() {
        let long: Vec<i64> = (0..30).collect();
        let longer: Vec<i64> = (0..31).collect();
        let (out, _) = finalize(
            vec![ex("a", Split::Train, &["x"], "df = df.a", &long, &longer), ex("b", Split::Test, &["x"], "df = df.b", &long, &longer)],
            10,
        );
        assert_eq!(out[0].input_frame.rows.len(), 10);
        assert_eq!(out[1].input_frame.rows.len(), 30);
        assert!(validate(&out, 10).is_empty());
    }

    #[test]
    fn validator_catches_each_rule() {
        let same = ex("a", Split::Train, &["x"], "y = 1", &[1], &[1]);
        let mut ragged = ex("b", Split::Train, &["x"], "df = df.x", &[1], &[2]);
        ragged.input_frame.rows.push(vec![]);
        let rules: BTreeSet<String> = validate(&[same, ragged], 10).into_iter().map(|v| v.rule).collect();
        for r in ["input_ne_output", "snapshot_shape", "target_references_var"] {
            assert!(rules.contains(r), "{r} missing from {rules:?}");
        }
    }
}
