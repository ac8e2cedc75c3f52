use std::collections::{BTreeSet, VecDeque};

use super::segment::TargetSegment;
use super::{ContextCell, ContextKind};
use crate::corpus::{CellKind, Notebook};
use crate::lifecycle::{Coord, LifecycleSpan, NotebookAnalysis};
use crate::pyast::deep_free_names;

/// Libraries whose imports always travel with the code context.
pub const DS_LIBRARIES: &[&str] = &[
    "pandas",
    "numpy",
    "matplotlib",
    "sklearn",
    "seaborn",
    "scipy",
    "nltk",
    "plotly",
    "statsmodels",
    "geopandas",
    "bokeh",
    "ggplot",
    "xgboost",
    "lightgbm",
    "patsy",
];

const BUILTINS: &[&str] = &[
    "ArithmeticError",
    "AssertionError",
    "AttributeError",
    "BaseException",
    "BlockingIOError",
    "BrokenPipeError",
    "BufferError",
    "BytesWarning",
    "ChildProcessError",
    "ConnectionAbortedError",
    "ConnectionError",
    "ConnectionRefusedError",
    "ConnectionResetError",
    "DeprecationWarning",
    "EOFError",
    "Ellipsis",
    "EncodingWarning",
    "EnvironmentError",
    "Exception",
    "False",
    "FileExistsError",
    "FileNotFoundError",
    "FloatingPointError",
    "FutureWarning",
    "GeneratorExit",
    "IOError",
    "ImportError",
    "ImportWarning",
    "IndentationError",
    "IndexError",
    "InterruptedError",
    "IsADirectoryError",
    "KeyError",
    "KeyboardInterrupt",
    "LookupError",
    "MemoryError",
    "ModuleNotFoundError",
    "NameError",
    "None",
    "NotADirectoryError",
    "NotImplemented",
    "NotImplementedError",
    "OSError",
    "OverflowError",
    "PendingDeprecationWarning",
    "PermissionError",
    "ProcessLookupError",
    "RecursionError",
    "ReferenceError",
    "ResourceWarning",
    "RuntimeError",
    "RuntimeWarning",
    "StopAsyncIteration",
    "StopIteration",
    "SyntaxError",
    "SyntaxWarning",
    "SystemError",
    "SystemExit",
    "TabError",
    "TimeoutError",
    "True",
    "TypeError",
    "UnboundLocalError",
    "UnicodeDecodeError",
    "UnicodeEncodeError",
    "UnicodeError",
    "UnicodeTranslateError",
    "UnicodeWarning",
    "UserWarning",
    "ValueError",
    "Warning",
    "ZeroDivisionError",
    "abs",
    "aiter",
    "all",
    "anext",
    "any",
    "ascii",
    "bin",
    "bool",
    "breakpoint",
    "bytearray",
    "bytes",
    "callable",
    "chr",
    "classmethod",
    "compile",
    "complex",
    "copyright",
    "credits",
    "delattr",
    "dict",
    "dir",
    "divmod",
    "enumerate",
    "eval",
    "exec",
    "exit",
    "filter",
    "float",
    "format",
    "frozenset",
    "getattr",
    "globals",
    "hasattr",
    "hash",
    "help",
    "hex",
    "id",
    "input",
    "int",
    "isinstance",
    "issubclass",
    "iter",
    "len",
    "license",
    "list",
    "locals",
    "map",
    "max",
    "memoryview",
    "min",
    "next",
    "object",
    "oct",
    "open",
    "ord",
    "pow",
    "print",
    "property",
    "quit",
    "range",
    "repr",
    "reversed",
    "round",
    "set",
    "setattr",
    "slice",
    "sorted",
    "staticmethod",
    "str",
    "sum",
    "super",
    "tuple",
    "type",
    "vars",
    "zip",
    "__name__",
    "__file__",
    // provided by the notebook kernel
    "display",
    "get_ipython",
    "In",
    "Out",
];

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeContext {
    /// Imports plus the latest prior definitions of free names, in notebook
    /// order. Empty when nothing is needed.
    pub deps: String,
    /// Span cells before the target, as (cell index, text).
    pub included: Vec<(usize, String)>,
    pub unresolved: Vec<String>,
    pub comment_lines: Vec<String>,
    pub replay_cells: Vec<String>,
}

fn needs_of(analysis: &NotebookAnalysis, at: Coord) -> BTreeSet<String> {
    let stmt = analysis.stmt(at);
    let mut names = analysis.fact(at).used_names.clone();
    if matches!(stmt.kind, "FunctionDef" | "AsyncFunctionDef" | "ClassDef") {
        names.extend(deep_free_names(stmt));
    }
    names.retain(|n| !is_builtin(n));
    names
}

fn is_ds_import(analysis: &NotebookAnalysis, at: Coord) -> bool {
    let stmt = analysis.stmt(at);
    let root_of = |m: &str| m.trim_start_matches('.').split('.').next().unwrap_or("").to_owned();
    match stmt.kind {
        "Import" => stmt.children.iter().any(|a| DS_LIBRARIES.contains(&root_of(a.ident.as_deref().unwrap_or("")).as_str())),
        "ImportFrom" => DS_LIBRARIES.contains(&root_of(stmt.ident.as_deref().unwrap_or("")).as_str()),
        _ => false,
    }
}

pub fn build_code_context(analysis: &NotebookAnalysis, seg: &TargetSegment, span: &LifecycleSpan) -> CodeContext {
    let included_cells: Vec<usize> = span.wrangling_cells.iter().copied().filter(|c| *c < seg.begin.cell).collect();
    let in_scope = |at: &Coord| included_cells.contains(&at.cell) || seg.statements.contains(at);

    let scope: Vec<Coord> = analysis.coords().filter(|c| included_cells.contains(&c.cell)).chain(seg.statements.iter().copied()).collect();
    let mut defined: BTreeSet<String> = BTreeSet::new();
    let mut queue: VecDeque<(String, Coord)> = VecDeque::new();
    for at in &scope {
        for name in needs_of(analysis, *at) {
            if !defined.contains(&name) {
                queue.push_back((name, *at));
            }
        }
        defined.extend(analysis.fact(*at).assigned_names.iter().cloned());
    }

    let all: Vec<Coord> = analysis.coords().collect();
    let mut chosen: BTreeSet<Coord> = BTreeSet::new();
    let mut unresolved: BTreeSet<String> = BTreeSet::new();
    let mut seen: BTreeSet<(String, Coord)> = BTreeSet::new();
    while let Some((name, before)) = queue.pop_front() {
        if !seen.insert((name.clone(), before)) {
            continue;
        }
        let def = all.iter().rev().filter(|c| **c < before).find(|c| analysis.fact(**c).assigned_names.contains(&name)).copied();
        match def {
            Some(at) if in_scope(&at) => {}
            Some(at) => {
                if chosen.insert(at) {
                    for n in needs_of(analysis, at) {
                        queue.push_back((n, at));
                    }
                }
            }
            None => {
                unresolved.insert(name);
            }
        }
    }
    for at in all.iter().filter(|c| **c < seg.begin && !in_scope(c)) {
        if is_ds_import(analysis, *at) {
            chosen.insert(*at);
        }
    }

    let stmt_text = |at: &Coord| analysis.cell(at.cell).expect("parsed").tree.stmt_range_text(at.stmt, at.stmt);
    let is_import = |at: &Coord| matches!(analysis.stmt(*at).kind, "Import" | "ImportFrom");
    let mut lines: Vec<String> = Vec::new();
    for at in chosen.iter().filter(|c| is_import(c)).chain(chosen.iter().filter(|c| !is_import(c))) {
        let text = stmt_text(at);
        if !lines.contains(&text) {
            lines.push(text);
        }
    }

    let included = included_cells
        .iter()
        .filter_map(|c| analysis.cell(*c))
        .map(|c| (c.index, c.tree.code_text().trim_end().to_owned()))
        .filter(|(_, t)| !t.trim().is_empty())
        .collect();
    let replay_cells = analysis.cells.iter().filter(|c| c.index < seg.begin.cell).map(|c| c.tree.source.clone()).collect();
    CodeContext {
        deps: lines.join("\n"),
        included,
        unresolved: unresolved.into_iter().collect(),
        comment_lines: seg.comments.iter().map(|c| format!("# {}", c.text)).collect(),
        replay_cells,
    }
}

/// Contiguous non-blank markdown cells directly above code cell `index`.
fn markdown_before(nb: &Notebook, index: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut i = index;
    while i > 0 {
        i -= 1;
        match nb.cells[i].kind {
            CellKind::Markdown => {
                if !nb.cells[i].source.trim().is_empty() {
                    out.push(i);
                }
            }
            CellKind::Code => break,
        }
    }
    out.reverse();
    out
}

/// Final context: deps cell, then included code cells with the markdown
/// that introduces them, then the markdown above the target cells, then the
/// target's own comments.
pub fn build_text_context(nb: &Notebook, code: &CodeContext, seg: &TargetSegment) -> (Vec<ContextCell>, Vec<Option<usize>>) {
    let mut cells = Vec::new();
    let mut sources = Vec::new();
    if !code.deps.is_empty() {
        cells.push(ContextCell { kind: ContextKind::Deps, text: code.deps.clone() });
        sources.push(None);
    }
    let push_markdown = |before: usize, cells: &mut Vec<ContextCell>, sources: &mut Vec<Option<usize>>| {
        for m in markdown_before(nb, before) {
            if !sources.contains(&Some(m)) {
                cells.push(ContextCell { kind: ContextKind::Markdown, text: nb.cells[m].source.trim_end().to_owned() });
                sources.push(Some(m));
            }
        }
    };
    for (index, text) in &code.included {
        push_markdown(*index, &mut cells, &mut sources);
        cells.push(ContextCell { kind: ContextKind::Code, text: text.clone() });
        sources.push(Some(*index));
    }
    for index in seg.cells() {
        push_markdown(index, &mut cells, &mut sources);
    }
    if !code.comment_lines.is_empty() {
        cells.push(ContextCell { kind: ContextKind::Code, text: code.comment_lines.join("\n") });
        sources.push(None);
    }
    (cells, sources)
}

fn has_code(text: &str) -> bool {
    text.lines().any(|l| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    })
}

/// Code cells in a context, the synthesized deps cell included and
/// comment-only cells excluded.
pub fn context_code_cells(context: &[ContextCell]) -> usize {
    context.iter().filter(|c| matches!(c.kind, ContextKind::Code | ContextKind::Deps) && has_code(&c.text)).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aligner::segment::{find_inspections, select_targets};
    use crate::corpus::notebook_from_cells;
    use crate::lifecycle::{extract_lifecycles, ApiCatalog};

    fn run(cells: &[(CellKind, &str)]) -> (Vec<ContextCell>, Vec<Option<usize>>, CodeContext, TargetSegment) {
        let nb = notebook_from_cells("t", cells);
        let a = NotebookAnalysis::new(&nb).unwrap();
        let c = ApiCatalog::default();
        let span = extract_lifecycles(&a, &c).remove(0);
        let seg = select_targets(&a, &span, &find_inspections(&a, &span, &c)).remove(0);
        let code = build_code_context(&a, &seg, &span);
        let (ctx, src) = build_text_context(&nb, &code, &seg);
        (ctx, src, code, seg)
    }

    use CellKind::{Code, Markdown};

    #[test]
    fn latest_prior_definition_lands_in_deps() {
        let (ctx, src, code, _) = run(&[
            (Code, "import pandas as pd\nimport os\nimport matplotlib.pyplot as plt"),
            (Code, "bins = [0, 1]\nlabels = ['a']"),
            (Code, "bins = [0, 5, 10]"),
            (Code, "df = pd.read_csv('a.csv')\ndf.head()"),
            (Markdown, "## Bucket ages"),
            (Code, "df['b'] = pd.cut(df['age'], bins)\ndf.head()"),
            (Code, "plt.hist(df['b'])"),
        ]);
        assert_eq!(code.deps, "import pandas as pd\nimport matplotlib.pyplot as plt\nbins = [0, 5, 10]");
        assert!(code.unresolved.is_empty());
        assert_eq!(ctx[0].kind, ContextKind::Deps);
        assert_eq!(ctx[1], ContextCell { kind: ContextKind::Code, text: "df = pd.read_csv('a.csv')\ndf.head()".into() });
        assert_eq!(ctx[2], ContextCell { kind: ContextKind::Markdown, text: "## Bucket ages".into() });
        assert_eq!(src, vec![None, Some(3), Some(4)]);
        assert_eq!(code.replay_cells.len(), 4);
    }

    #[test]
    fn only_target_var_means_imports_only() {
        let (_, _, code, _) = run(&[
            (Code, "import pandas as pd\nimport seaborn as sns"),
            (Code, "df = pd.read_csv('a.csv')\ndf"),
            (Code, "df = df.dropna()\ndf"),
            (Code, "sns.heatmap(df)"),
        ]);
        assert_eq!(code.deps, "import pandas as pd\nimport seaborn as sns");
    }

    #[test]
    fn closure_follows_helper_functions_and_flags_unknowns() {
        let (_, _, code, _) = run(&[
            (Code, "import pandas as pd\nscale = 2\ndef norm(s):\n    return s * scale"),
            (Code, "df = pd.read_csv('a.csv')\ndf.head()"),
            (Code, "df['n'] = norm(df['x']) + offset\ndf.head()"),
            (Code, "plt.plot(df['n'])"),
        ]);
        assert_eq!(code.deps, "import pandas as pd\nscale = 2\ndef norm(s):\n    return s * scale");
        assert_eq!(code.unresolved, vec!["offset"]);
    }

    #[test]
    fn target_comments_become_a_trailing_cell() {
        let (ctx, _, _, seg) = run(&[
            (Code, "df = pd.read_csv('a.csv')\ndf.head()"),
            (Markdown, "Drop missing"),
            (Code, "# remove nulls\ndf = df.dropna()  # all columns\ndf.head()"),
            (Code, "plt.plot(df)"),
        ]);
        assert_eq!(seg.merged_source, "df = df.dropna()");
        let last = ctx.last().unwrap();
        assert_eq!(last.text, "# remove nulls\n# all columns");
        assert_eq!(ctx[ctx.len() - 2].text, "Drop missing");
        assert_eq!(context_code_cells(&ctx), 1);
    }
}
