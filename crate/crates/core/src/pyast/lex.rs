use rustpython_parser::{lexer, Mode, Tok};

use super::SyntaxError;

/// Python 3 hard keywords, in `keyword.kwlist` order.
pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del", "elif", "else", "except",
    "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
    "while", "with", "yield",
];

pub fn is_keyword(text: &str) -> bool {
    KEYWORDS.contains(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Name,
    Number,
    String,
    Operator,
    Keyword,
    Newline,
    Indent,
    Dedent,
}

impl TokenKind {
    /// Layout tokens carry structure but no surface text.
    pub fn is_layout(self) -> bool {
        matches!(self, TokenKind::Newline | TokenKind::Indent | TokenKind::Dedent)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Exact source slice (empty for dedents).
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommentSpan {
    pub cell_index: usize,
    /// Comment body with the leading `#` removed and surrounding blanks trimmed.
    pub text: String,
    pub inline: bool,
    /// 0-based line number in the cell source.
    pub line: usize,
    /// Byte column of the `#` within its line.
    pub column: usize,
}

fn is_magic_line(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with('%') || t.starts_with('!')
}

/// Neutralizes IPython magics and shell escapes line-by-line. The output has
/// exactly the same number of lines, and untouched lines keep their byte
/// offsets relative to their line start.
pub fn sanitize_cell(source: &str) -> String {
    let mut out = String::with_capacity(source.len());
    for piece in source.split_inclusive('\n') {
        let (line, nl) = match piece.strip_suffix('\n') {
            Some(l) => (l, "\n"),
            None => (piece, ""),
        };
        let (body, cr) = match line.strip_suffix('\r') {
            Some(b) => (b, "\r"),
            None => (line, ""),
        };
        if is_magic_line(body) {
            let indent = &body[..body.len() - body.trim_start().len()];
            out.push_str(indent);
            out.push_str("pass");
        } else {
            out.push_str(body);
        }
        out.push_str(cr);
        out.push_str(nl);
    }
    out
}

/// Byte offset of the start of each line.
#[derive(Debug, Clone)]
pub struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(text: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    /// (line, column) of a byte offset, both 0-based.
    pub fn position(&self, offset: usize) -> (usize, usize) {
        let line = match self.starts.binary_search(&offset) {
            Ok(l) => l,
            Err(l) => l - 1,
        };
        (line, offset - self.starts[line])
    }

    pub fn offset(&self, line: usize, column: usize) -> usize {
        self.starts[line] + column
    }

    pub fn line_start(&self, line: usize) -> usize {
        self.starts[line]
    }

    pub fn line_count(&self) -> usize {
        self.starts.len()
    }
}

fn classify(tok: &Tok) -> Option<TokenKind> {
    Some(match tok {
        Tok::Comment(_) | Tok::NonLogicalNewline | Tok::EndOfFile => return None,
        Tok::StartModule | Tok::StartInteractive | Tok::StartExpression => return None,
        Tok::Newline => TokenKind::Newline,
        Tok::Indent => TokenKind::Indent,
        Tok::Dedent => TokenKind::Dedent,
        Tok::Name { .. } => TokenKind::Name,
        Tok::Int { .. } | Tok::Float { .. } | Tok::Complex { .. } => TokenKind::Number,
        Tok::String { .. } => TokenKind::String,
        other => {
            let text = other.to_string();
            if is_keyword(&text) {
                TokenKind::Keyword
            } else if text.chars().all(|c| c.is_alphanumeric() || c == '_') {
                // soft keywords such as `match` lex as names elsewhere
                TokenKind::Name
            } else {
                TokenKind::Operator
            }
        }
    })
}

/// Lexes `source` (already sanitized) into significant tokens: comments and
/// non-logical newlines are dropped, layout tokens kept.
pub fn tokenize(source: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut out = Vec::new();
    for item in lexer::lex(source, Mode::Module) {
        let (tok, range) = item.map_err(|e| SyntaxError::new(source, e.location.to_usize(), e.error.to_string()))?;
        let Some(kind) = classify(&tok) else { continue };
        let (start, end) = (range.start().to_usize(), range.end().to_usize());
        out.push(Token { kind, text: source.get(start..end).unwrap_or_default().to_owned(), start, end });
    }
    // The lexer emits a trailing newline only when the source lacks one;
    // normalize so `x=1` and `x=1\n` lex identically.
    while matches!(out.last(), Some(t) if t.kind == TokenKind::Newline && t.text.trim().is_empty() && t.start == t.end) {
        out.pop();
    }
    if matches!(out.last(), Some(t) if t.kind != TokenKind::Newline && t.kind != TokenKind::Dedent) {
        let end = out.last().map_or(0, |t| t.end);
        out.push(Token { kind: TokenKind::Newline, text: String::new(), start: end, end });
    }
    for t in &mut out {
        if t.kind == TokenKind::Newline {
            t.text.clear();
        }
    }
    Ok(out)
}

/// Surface tokens only (no layout), used by the n-gram components.
pub fn surface_tokens(source: &str) -> Result<Vec<String>, SyntaxError> {
    Ok(tokenize(source)?.into_iter().filter(|t| !t.kind.is_layout()).map(|t| t.text).collect())
}

/// Every comment in a cell. Magic lines are neutralized first so the lexer
/// accepts the cell; positions refer to the original text.
pub fn collect_comments(cell_index: usize, source: &str) -> Vec<CommentSpan> {
    let clean = sanitize_cell(source);
    let index = LineIndex::new(&clean);
    let mut out = Vec::new();
    for item in lexer::lex(&clean, Mode::Module) {
        let Ok((Tok::Comment(raw), range)) = item else {
            if item.is_err() {
                break;
            }
            continue;
        };
        let start = range.start().to_usize();
        let (line, column) = index.position(start);
        let before = &clean[index.line_start(line)..start];
        out.push(CommentSpan {
            cell_index,
            text: raw.trim_start_matches('#').trim().to_owned(),
            inline: !before.trim().is_empty(),
            line,
            column,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitize_neutralizes_magics_and_keeps_line_count() {
        let src = "%matplotlib inline\nx=1";
        let s = sanitize_cell(src);
        assert_eq!(s, "pass\nx=1");
        assert_eq!(sanitize_cell("!pip install seaborn"), "pass");
        assert_eq!(sanitize_cell("y = 2\n"), "y = 2\n");
        assert_eq!(sanitize_cell("for i in r:\n    !echo hi\n"), "for i in r:\n    pass\n");
    }

    #[test]
    fn comments_inline_and_standalone() {
        let c = collect_comments(3, "x=1  # set x");
        assert_eq!(c.len(), 1);
        assert!(c[0].inline);
        assert_eq!(c[0].text, "set x");
        assert_eq!(c[0].cell_index, 3);
        let c = collect_comments(0, "# step 1\nx=1");
        assert_eq!(c.len(), 1);
        assert!(!c[0].inline);
        assert_eq!((c[0].line, c[0].column), (0, 0));
    }

    #[test]
    fn hash_inside_string_is_not_a_comment() {
        let c = collect_comments(0, "s = '# not a comment'  # real\n");
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].text, "real");
        assert_eq!(c[0].column, 23);
    }

    #[test]
    fn tokenize_ignores_blank_lines_and_comments() {
        let a = tokenize("x = 1\n\n\ny = x  # c\n").unwrap();
        let b = tokenize("x = 1\ny = x").unwrap();
        let texts = |v: &[Token]| v.iter().map(|t| (t.kind, t.text.clone())).collect::<Vec<_>>();
        assert_eq!(texts(&a), texts(&b));
    }

    #[test]
    fn surface_tokens_are_source_slices() {
        let t = surface_tokens("df = df[df['a'] != 0]").unwrap();
        assert_eq!(t, vec!["df", "=", "df", "[", "df", "[", "'a'", "]", "!=", "0", "]"]);
    }

    #[test]
    fn line_index_positions() {
        let idx = LineIndex::new("ab\ncd\n");
        assert_eq!(idx.position(0), (0, 0));
        assert_eq!(idx.position(4), (1, 1));
        assert_eq!(idx.offset(1, 1), 4);
        assert_eq!(idx.line_count(), 3);
    }
}
