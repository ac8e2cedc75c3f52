//! nbformat-4 notebook container parsing.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Code,
    Markdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub kind: CellKind,
    /// Verbatim cell text, joined from the nbformat line array.
    pub source: String,
    pub outputs_present: bool,
}

impl Cell {
    pub fn is_code(&self) -> bool {
        self.kind == CellKind::Code
    }
}

/// A parsed notebook. Cells keep document order; raw cells are dropped at
/// parse time so `cells[i].index == i` always holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Notebook {
    pub id: String,
    pub cells: Vec<Cell>,
    pub kernel_language_version: Option<String>,
    /// Original JSON document, kept so rewritten sources can be written back
    /// without losing metadata.
    raw: Value,
    /// Position of each kept cell inside the raw `cells` array.
    raw_positions: Vec<usize>,
}

impl Notebook {
    pub fn code_cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.is_code())
    }

    /// Replaces the source of cell `index`, keeping the raw document in sync.
    pub fn set_source(&mut self, index: usize, source: String) {
        let raw_pos = self.raw_positions[index];
        if let Some(cell) = self.raw.get_mut("cells").and_then(|c| c.get_mut(raw_pos)) {
            let as_array = cell.get("source").is_some_and(Value::is_array);
            let value = if as_array {
                Value::Array(split_lines_keepends(&source).into_iter().map(Value::String).collect())
            } else {
                Value::String(source.clone())
            };
            cell["source"] = value;
        }
        self.cells[index].source = source;
    }

    /// Serializes the (possibly rewritten) notebook in the one-space indented
    /// layout Jupyter itself writes.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let fmt = serde_json::ser::PrettyFormatter::with_indent(b" ");
        let mut ser = serde_json::Serializer::with_formatter(&mut out, fmt);
        self.raw.serialize(&mut ser).expect("serializing a JSON value cannot fail");
        out.push(b'\n');
        out
    }
}

fn split_lines_keepends(text: &str) -> Vec<String> {
    text.split_inclusive('\n').map(str::to_owned).collect()
}

fn source_text(value: Option<&Value>) -> Result<String, CorpusError> {
    match value {
        None | Some(Value::Null) => Ok(String::new()),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Array(parts)) => {
            parts.iter().map(|p| p.as_str().ok_or_else(|| CorpusError::MalformedNotebook("non-string source line".into()))).collect()
        }
        Some(_) => Err(CorpusError::MalformedNotebook("cell source is not text".into())),
    }
}

fn kernel_version(metadata: &Value) -> Option<String> {
    if let Some(v) = metadata.pointer("/language_info/version").and_then(Value::as_str) {
        return Some(v.to_owned());
    }
    let name = metadata.pointer("/kernelspec/name").and_then(Value::as_str)?;
    let lower = name.to_ascii_lowercase();
    if lower.contains("python2") {
        Some("2".into())
    } else if lower.contains("python3") {
        Some("3".into())
    } else {
        None
    }
}

/// Parses nbformat JSON. Cells of any kind other than code or markdown are
/// dropped with a warning.
pub fn parse_notebook(id: &str, raw_bytes: &[u8]) -> Result<Notebook, CorpusError> {
    let text = std::str::from_utf8(raw_bytes).map_err(|e| CorpusError::MalformedNotebook(format!("not UTF-8: {e}")))?;
    let raw: Value = serde_json::from_str(text).map_err(|e| CorpusError::MalformedNotebook(format!("invalid JSON: {e}")))?;
    let major = raw.get("nbformat").and_then(Value::as_u64);
    match major {
        Some(v) if v < 4 => return Err(CorpusError::UnsupportedFormat(v)),
        _ => {}
    }
    let raw_cells = raw.get("cells").and_then(Value::as_array).ok_or_else(|| CorpusError::MalformedNotebook("missing cell list".into()))?;

    let mut cells = Vec::with_capacity(raw_cells.len());
    let mut raw_positions = Vec::with_capacity(raw_cells.len());
    for (pos, cell) in raw_cells.iter().enumerate() {
        let kind = match cell.get("cell_type").and_then(Value::as_str) {
            Some("code") => CellKind::Code,
            Some("markdown") => CellKind::Markdown,
            other => {
                log::warn!("{id}: dropping cell {pos} of type {:?}", other.unwrap_or("<none>"));
                continue;
            }
        };
        let outputs_present = cell.get("outputs").and_then(Value::as_array).is_some_and(|o| !o.is_empty());
        cells.push(Cell { index: cells.len(), kind, source: source_text(cell.get("source"))?, outputs_present });
        raw_positions.push(pos);
    }

    let kernel_language_version = raw.get("metadata").and_then(kernel_version);
    Ok(Notebook { id: id.to_owned(), cells, kernel_language_version, raw, raw_positions })
}

/// Builds a minimal nbformat-4 document from `(kind, source)` pairs.
pub fn notebook_from_cells(id: &str, cells: &[(CellKind, &str)]) -> Notebook {
    let raw_cells: Vec<Value> = cells
        .iter()
        .map(|(kind, src)| {
            let mut cell = serde_json::json!({
                "cell_type": match kind { CellKind::Code => "code", CellKind::Markdown => "markdown" },
                "metadata": {},
                "source": split_lines_keepends(src),
            });
            if *kind == CellKind::Code {
                cell["outputs"] = Value::Array(vec![]);
                cell["execution_count"] = Value::Null;
            }
            cell
        })
        .collect();
    let doc = serde_json::json!({
        "nbformat": 4,
        "nbformat_minor": 5,
        "metadata": {"language_info": {"name": "python", "version": "3.10"}},
        "cells": raw_cells,
    });
    parse_notebook(id, doc.to_string().as_bytes()).expect("generated notebook is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markdown_then_code() {
        let doc = r##"{"nbformat":4,"nbformat_minor":2,"metadata":{},
            "cells":[{"cell_type":"markdown","metadata":{},"source":["Intro"]},
                     {"cell_type":"code","metadata":{},"outputs":[],"source":"x=1"}]}"##;
        let nb = parse_notebook("n", doc.as_bytes()).unwrap();
        let kinds: Vec<_> = nb.cells.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, vec![CellKind::Markdown, CellKind::Code]);
        assert_eq!(nb.cells[1].source, "x=1");
        assert_eq!(nb.kernel_language_version, None);
    }

    #[test]
    fn raw_cell_is_dropped_and_indices_stay_dense() {
        let doc = r#"{"nbformat":4,"nbformat_minor":2,"metadata":{},
            "cells":[{"cell_type":"code","source":"a=1","outputs":[]},
                     {"cell_type":"raw","source":"whatever"},
                     {"cell_type":"code","source":"b=2","outputs":[]}]}"#;
        let nb = parse_notebook("n", doc.as_bytes()).unwrap();
        assert_eq!(nb.cells.len(), 2);
        assert_eq!(nb.cells[0].index, 0);
        assert_eq!(nb.cells[1].index, 1);
        assert_eq!(nb.cells[1].source, "b=2");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(parse_notebook("n", b"{not json"), Err(CorpusError::MalformedNotebook(_))));
        assert!(matches!(parse_notebook("n", br#"{"nbformat":4,"metadata":{}}"#), Err(CorpusError::MalformedNotebook(_))));
        assert!(matches!(parse_notebook("n", br#"{"nbformat":3,"worksheets":[]}"#), Err(CorpusError::UnsupportedFormat(3))));
    }

    #[test]
    fn kernel_version_from_metadata() {
        let doc = r#"{"nbformat":4,"metadata":{"kernelspec":{"name":"python2"}},"cells":[]}"#;
        let nb = parse_notebook("n", doc.as_bytes()).unwrap();
        assert_eq!(nb.kernel_language_version.as_deref(), Some("2"));
        let doc = r#"{"nbformat":4,"metadata":{"language_info":{"version":"3.6.13"}},"cells":[]}"#;
        let nb = parse_notebook("n", doc.as_bytes()).unwrap();
        assert_eq!(nb.kernel_language_version.as_deref(), Some("3.6.13"));
    }

    #[test]
    fn set_source_round_trips_through_json() {
        let mut nb = notebook_from_cells("n", &[(CellKind::Code, "x = 1\ny = 2\n")]);
        nb.set_source(0, "x = 3\n".into());
        let again = parse_notebook("n", &nb.to_json_bytes()).unwrap();
        assert_eq!(again.cells[0].source, "x = 3\n");
    }
}
