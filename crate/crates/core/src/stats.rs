//! Dataset statistics in the row layout of the published dataset table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aligner::{ContextKind, Split, WranglingExample};

pub const ROW_NAMES: [&str; 7] = [
    "# examples",
    "avg # columns (input df)",
    "avg # rows (input df)",
    "avg # columns (output df)",
    "avg # rows (output df)",
    "avg # textual context tokens",
    "avg # target code tokens",
];

pub const SPLIT_HEADERS: [&str; 3] = ["train", "dev.", "test"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub examples: usize,
    pub input_columns: f64,
    pub input_rows: f64,
    pub output_columns: f64,
    pub output_rows: f64,
    pub text_tokens: f64,
    pub target_tokens: f64,
}

impl SplitStats {
    fn values(&self) -> [f64; 7] {
        [
            self.examples as f64,
            self.input_columns,
            self.input_rows,
            self.output_columns,
            self.output_rows,
            self.text_tokens,
            self.target_tokens,
        ]
    }
}

fn whitespace_tokens(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Textual context is the markdown cells; tokens are whitespace-separated
/// words. Row counts are the rows stored in the snapshot.
pub fn split_stats(examples: &[&WranglingExample]) -> SplitStats {
    let n = examples.len();
    if n == 0 {
        return SplitStats::default();
    }
    let avg = |f: &dyn Fn(&WranglingExample) -> usize| examples.iter().map(|e| f(e)).sum::<usize>() as f64 / n as f64;
    SplitStats {
        examples: n,
        input_columns: avg(&|e| e.input_frame.columns.len()),
        input_rows: avg(&|e| e.input_frame.rows.len()),
        output_columns: avg(&|e| e.output_frame.columns.len()),
        output_rows: avg(&|e| e.output_frame.rows.len()),
        text_tokens: avg(&|e| e.context.iter().filter(|c| c.kind == ContextKind::Markdown).map(|c| whitespace_tokens(&c.text)).sum()),
        target_tokens: avg(&|e| whitespace_tokens(&e.target_code)),
    }
}

pub fn dataset_stats(examples: &[WranglingExample]) -> BTreeMap<Split, SplitStats> {
    Split::ALL
        .iter()
        .map(|s| {
            let members: Vec<&WranglingExample> = examples.iter().filter(|e| e.split == *s).collect();
            (*s, split_stats(&members))
        })
        .collect()
}

pub fn render_table(stats: &BTreeMap<Split, SplitStats>) -> String {
    let width = ROW_NAMES.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut out = format!("{:<width$}", "");
    for h in SPLIT_HEADERS {
        out += &format!(" {h:>10}");
    }
    out.push('\n');
    let cols: Vec<[f64; 7]> = Split::ALL.iter().map(|s| stats.get(s).cloned().unwrap_or_default().values()).collect();
    for (i, name) in ROW_NAMES.iter().enumerate() {
        out += &format!("{name:<width$}");
        for c in &cols {
            if i == 0 {
                out += &format!(" {:>10}", c[i] as usize);
            } else {
                out += &format!(" {:>10.1}", c[i]);
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_is_zeros() {
        let s = dataset_stats(&[]);
        assert!(s.values().all(|v| *v == SplitStats::default()));
        let t = render_table(&s);
        for r in ROW_NAMES {
            assert!(t.contains(r));
        }
        assert!(t.lines().next().unwrap().contains("dev."));
    }
}
