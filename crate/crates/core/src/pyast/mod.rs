//! Python source analysis: parsing, call extraction, per-statement
//! definitions and uses, comments and tokens.

mod facts;
mod lex;
mod tree;

use rustpython_parser::{ast, Parse};
use thiserror::Error;

pub(crate) use facts::{calls_in_stmt, deep_free_names, fact_for_stmt, render_callee};
pub use facts::{defs_uses, extract_calls, ApiCall, DataflowFact, KwArg};
pub use lex::{collect_comments, is_keyword, sanitize_cell, surface_tokens, tokenize, CommentSpan, LineIndex, Token, TokenKind, KEYWORDS};
pub use tree::{Ctx, Literal, SyntaxNode};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxError {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl SyntaxError {
    pub(crate) fn new(source: &str, offset: usize, message: String) -> Self {
        let offset = offset.min(source.len());
        let (line, column) = LineIndex::new(source).position(offset);
        SyntaxError { offset, line: line + 1, column, message }
    }
}

/// A parsed cell (or any concatenation of cells).
#[derive(Debug, Clone)]
pub struct AstTree {
    pub cell_index: usize,
    /// Text as written, magics included.
    pub original: String,
    /// Text that was handed to the parser.
    pub source: String,
    /// `Module` node; its children are the top-level statements.
    pub root: SyntaxNode,
    lines: LineIndex,
    magic_lines: Vec<bool>,
}

/// Parses sanitized source.
pub fn parse_source(code: &str) -> Result<AstTree, SyntaxError> {
    parse_with_original(0, code, code)
}

/// Sanitizes then parses one notebook cell.
pub fn parse_cell(cell_index: usize, original: &str) -> Result<AstTree, SyntaxError> {
    parse_with_original(cell_index, original, &sanitize_cell(original))
}

fn parse_with_original(cell_index: usize, original: &str, code: &str) -> Result<AstTree, SyntaxError> {
    let body = ast::Suite::parse(code, "<cell>").map_err(|e| SyntaxError::new(code, e.offset.to_usize(), e.error.to_string()))?;
    let root = tree::module(&body);
    let magic_lines = original.split('\n').zip(code.split('\n')).map(|(o, c)| o != c).collect();
    Ok(AstTree { cell_index, original: original.to_owned(), source: code.to_owned(), root, lines: LineIndex::new(code), magic_lines })
}

impl AstTree {
    pub fn statements(&self) -> &[SyntaxNode] {
        &self.root.children
    }

    pub fn len(&self) -> usize {
        self.root.children.len()
    }

    pub fn is_empty(&self) -> bool {
        self.root.children.is_empty()
    }

    pub fn line_index(&self) -> &LineIndex {
        &self.lines
    }

    /// Byte span of top-level statement `i` in the parsed source.
    pub fn stmt_span(&self, i: usize) -> (usize, usize) {
        self.root.children[i].span.unwrap_or((0, 0))
    }

    /// Source of statements `first..=last`, taken from the original cell text
    /// with magic lines removed. Text starts at the beginning of the first
    /// statement's line and ends with the last statement.
    pub fn stmt_range_text(&self, first: usize, last: usize) -> String {
        let (start, _) = self.stmt_span(first);
        let (_, end) = self.stmt_span(last);
        let (l0, _) = self.lines.position(start);
        let (l1, c1) = self.lines.position(end);
        self.text_between((l0, 0), (l1, c1))
    }

    /// Original text between two (line, column) positions, skipping magics.
    pub fn text_between(&self, from: (usize, usize), to: (usize, usize)) -> String {
        let lines: Vec<&str> = self.original.split('\n').collect();
        let mut out: Vec<&str> = Vec::new();
        for line_no in from.0..=to.0.min(lines.len().saturating_sub(1)) {
            if self.magic_lines.get(line_no).copied().unwrap_or(false) {
                continue;
            }
            let line = lines[line_no];
            let begin = if line_no == from.0 { from.1.min(line.len()) } else { 0 };
            let end = if line_no == to.0 { to.1.min(line.len()) } else { line.len() };
            out.push(line.get(begin..end.max(begin)).unwrap_or(""));
        }
        out.join("\n")
    }

    /// `text_between` with comments removed. Lines that held only a comment
    /// are dropped.
    pub fn code_between(&self, from: (usize, usize), to: (usize, usize)) -> String {
        let comments = collect_comments(self.cell_index, &self.original);
        let lines: Vec<&str> = self.original.split('\n').collect();
        let mut out: Vec<&str> = Vec::new();
        for line_no in from.0..=to.0.min(lines.len().saturating_sub(1)) {
            if self.magic_lines.get(line_no).copied().unwrap_or(false) {
                continue;
            }
            let line = lines[line_no];
            let begin = if line_no == from.0 { from.1.min(line.len()) } else { 0 };
            let mut end = if line_no == to.0 { to.1.min(line.len()) } else { line.len() };
            let cut = comments.iter().find(|c| c.line == line_no).map(|c| c.column);
            if let Some(col) = cut {
                end = end.min(col);
            }
            let piece = line.get(begin..end.max(begin)).unwrap_or("");
            match cut {
                Some(_) if piece.trim().is_empty() => {}
                Some(_) => out.push(piece.trim_end()),
                None => out.push(piece),
            }
        }
        out.join("\n")
    }

    /// Statements `first..=last` without comments.
    pub fn stmt_range_code(&self, first: usize, last: usize) -> String {
        let (start, _) = self.stmt_span(first);
        let (_, end) = self.stmt_span(last);
        self.code_between(self.lines.position(start), self.lines.position(end))
    }

    /// The whole cell as written, minus magic lines.
    pub fn code_text(&self) -> String {
        self.original
            .split('\n')
            .enumerate()
            .filter(|(i, _)| !self.magic_lines.get(*i).copied().unwrap_or(false))
            .map(|(_, l)| l)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_assignment() {
        let t = parse_source("df = df.dropna()").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.statements()[0].kind, "Assign");
    }

    #[test]
    fn empty_source_has_no_statements() {
        assert!(parse_source("").unwrap().is_empty());
    }

    #[test]
    fn compound_statements_count_once() {
        let src = "try:\n    x = int(s)\nexcept ValueError:\n    x = 0\nfor c in cols:\n    df[c] = df[c].fillna(x)\nprint(x)\n";
        let t = parse_source(src).unwrap();
        let kinds: Vec<_> = t.statements().iter().map(|s| s.kind).collect();
        assert_eq!(kinds, vec!["Try", "For", "Expr"]);
    }

    #[test]
    fn python2_print_is_a_syntax_error() {
        let err = parse_source("print \"hello\"\n").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn magics_parse_after_sanitizing() {
        let t = parse_cell(4, "%matplotlib inline\nimport pandas as pd\n").unwrap();
        assert_eq!(t.cell_index, 4);
        assert_eq!(t.statements()[1].kind, "Import");
        assert_eq!(t.code_text(), "import pandas as pd\n");
    }

    #[test]
    fn spans_nest() {
        let t = parse_source("@dec\ndef f(a, b=1):\n    return [x + a for x in b]\n").unwrap();
        fn check(n: &SyntaxNode) {
            for c in &n.children {
                if let (Some((ps, pe)), Some((cs, ce))) = (n.span, c.span) {
                    assert!(ps <= cs && ce <= pe, "{} not inside {}", c.kind, n.kind);
                }
                check(c);
            }
        }
        check(&t.root);
    }

    #[test]
    fn stmt_range_code_drops_comments() {
        let src = "# lead\na = 1  # one\n%time x\nb = {  # open\n  'k': '#v',\n}\n";
        let t = parse_cell(0, src).unwrap();
        assert_eq!(t.stmt_range_code(0, 2), "a = 1\nb = {\n  'k': '#v',\n}");
    }

    #[test]
    fn stmt_range_text_uses_original_lines() {
        let src = "a = 1\n%time b = 2\nc = a  # note\nd = c\n";
        let t = parse_cell(0, src).unwrap();
        assert_eq!(t.stmt_range_text(0, 2), "a = 1\nc = a");
        assert_eq!(t.stmt_range_text(2, 3), "c = a  # note\nd = c");
    }
}
