use crate::lifecycle::{ApiCatalog, Coord, LifecycleSpan, NotebookAnalysis};
use crate::pyast::{collect_comments, CommentSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSegment {
    pub span_id: String,
    pub begin: Coord,
    pub end: Coord,
    pub statements: Vec<Coord>,
    /// Statements merged across cells, comments removed.
    pub merged_source: String,
    /// Comments that sat on or directly above the statements.
    pub comments: Vec<CommentSpan>,
}

impl TargetSegment {
    pub fn cells(&self) -> Vec<usize> {
        let mut cells: Vec<usize> = self.statements.iter().map(|c| c.cell).collect();
        cells.dedup();
        cells
    }
}

/// A cell-final statement that displays `var`: the bare name, or a
/// `head`/`tail` call on it.
pub fn is_inspection(analysis: &NotebookAnalysis, at: Coord, var: &str, catalog: &ApiCatalog) -> bool {
    let Some(cell) = analysis.cell(at.cell) else { return false };
    if at.stmt + 1 != cell.tree.len() {
        return false;
    }
    let stmt = analysis.stmt(at);
    let Some(value) = stmt.first_field("value").filter(|_| stmt.kind == "Expr") else { return false };
    match value.kind {
        "Name" => catalog.bare_display && value.ident.as_deref() == Some(var),
        "Call" => {
            let Some(func) = value.first_field("func").filter(|f| f.kind == "Attribute") else { return false };
            let on_var = func.first_field("value").is_some_and(|v| v.is_name() && v.ident.as_deref() == Some(var));
            on_var && func.ident.as_ref().is_some_and(|m| catalog.inspection_methods.contains(m))
        }
        _ => false,
    }
}

/// Inspections of the span variable strictly between its initialization and
/// its utilization.
pub fn find_inspections(analysis: &NotebookAnalysis, span: &LifecycleSpan, catalog: &ApiCatalog) -> Vec<Coord> {
    analysis
        .coords()
        .filter(|c| span.wrangling_cells.contains(&c.cell) && *c > span.init && *c < span.utilization)
        .filter(|c| is_inspection(analysis, *c, &span.target_var, catalog))
        .collect()
}

/// One segment per consecutive pair of inspections with at least one
/// wrangling statement of the span in between.
pub fn select_targets(analysis: &NotebookAnalysis, span: &LifecycleSpan, inspections: &[Coord]) -> Vec<TargetSegment> {
    let mut out = Vec::new();
    for pair in inspections.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let statements: Vec<Coord> = analysis.coords().filter(|c| *c > a && *c < b).collect();
        if !statements.iter().any(|c| span.is_wrangling(*c)) {
            continue;
        }
        let mut pieces = Vec::new();
        let mut comments = Vec::new();
        let mut i = 0;
        while i < statements.len() {
            let cell_index = statements[i].cell;
            let mut j = i;
            while j + 1 < statements.len() && statements[j + 1].cell == cell_index {
                j += 1;
            }
            let cell = analysis.cell(cell_index).expect("statement cell is parsed");
            let tree = &cell.tree;
            let (first, last) = (statements[i].stmt, statements[j].stmt);
            let piece = tree.stmt_range_code(first, last);
            if !piece.trim().is_empty() {
                pieces.push(piece);
            }
            let lines = tree.line_index();
            let lo = match first {
                0 => 0,
                k => lines.position(tree.stmt_span(k - 1).1).0 + 1,
            };
            let hi = lines.position(tree.stmt_span(last).1).0;
            comments.extend(
                collect_comments(cell_index, &tree.original).into_iter().filter(|c| c.line >= lo && c.line <= hi && !c.text.is_empty()),
            );
            i = j + 1;
        }
        out.push(TargetSegment {
            span_id: span.id(),
            begin: statements[0],
            end: *statements.last().expect("non-empty"),
            statements,
            merged_source: pieces.join("\n"),
            comments,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{notebook_from_cells, CellKind};
    use crate::lifecycle::extract_lifecycles;

    fn setup(cells: &[&str]) -> (NotebookAnalysis, LifecycleSpan) {
        let cells: Vec<_> = cells.iter().map(|c| (CellKind::Code, *c)).collect();
        let a = NotebookAnalysis::new(&notebook_from_cells("t", &cells)).unwrap();
        let span = extract_lifecycles(&a, &ApiCatalog::default()).remove(0);
        (a, span)
    }

    #[test]
    fn inspection_forms() {
        let (a, span) = setup(&[
            "df = pd.read_csv('a.csv')\ndf.head()",
            "df",
            "x = df.head()",
            "df.tail(3)\ndf = df.dropna()",
            "df.head()",
            "plt.plot(df)",
        ]);
        let c = ApiCatalog::default();
        assert_eq!(find_inspections(&a, &span, &c), vec![Coord::new(0, 1), Coord::new(1, 0), Coord::new(4, 0)]);
        assert!(!is_inspection(&a, Coord::new(2, 0), "df", &c));
        assert!(!is_inspection(&a, Coord::new(3, 0), "df", &c));
    }

    #[test]
    fn segment_merges_across_cells() {
        let (a, span) = setup(&[
            "df = pd.read_csv('a.csv')\ndf.head()",
            "df = df.dropna()  # drop rows",
            "# add ratio\ndf['r'] = df['a'] / df['b']\ndf.head()",
            "sns.heatmap(df)",
        ]);
        let insp = find_inspections(&a, &span, &ApiCatalog::default());
        let segs = select_targets(&a, &span, &insp);
        assert_eq!(segs.len(), 1);
        let s = &segs[0];
        assert_eq!(s.merged_source, "df = df.dropna()\ndf['r'] = df['a'] / df['b']");
        assert_eq!((s.begin, s.end), (Coord::new(1, 0), Coord::new(2, 0)));
        let texts: Vec<_> = s.comments.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["drop rows", "add ratio"]);
        assert_eq!(s.cells(), vec![1, 2]);
    }

    #[test]
    fn pairs_without_wrangling_are_skipped() {
        let (a, span) = setup(&[
            "df = pd.read_csv('a.csv')\ndf.head()",
            "print(len(df))\ndf",
            "df = df.fillna(0)\ndf.head()",
            "df['z'] = 1\ndf.tail()",
            "plt.hist(df['z'])",
        ]);
        let insp = find_inspections(&a, &span, &ApiCatalog::default());
        assert_eq!(insp.len(), 4);
        let segs = select_targets(&a, &span, &insp);
        let srcs: Vec<_> = segs.iter().map(|s| s.merged_source.as_str()).collect();
        assert_eq!(srcs, vec!["df = df.fillna(0)", "df['z'] = 1"]);
    }
}
