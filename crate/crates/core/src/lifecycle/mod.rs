//! Dataframe lifecycles: initialization, wrangling and utilization of one
//! variable, located by (cell, statement) coordinates.

mod catalog;
mod resolve;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CellKind, Notebook};
use crate::pyast::{self, calls_in_stmt, fact_for_stmt, render_callee, ApiCall, AstTree, DataflowFact, SyntaxError, SyntaxNode};

pub use catalog::{expand_alias, ApiCatalog, ApiName, CatalogError, CatalogFile, FrameOp, InitCategory, CONVENTIONAL_ALIASES};
pub use resolve::{last_segment, resolve_callee, ImportTable, Origin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub cell: usize,
    pub stmt: usize,
}

impl Coord {
    pub fn new(cell: usize, stmt: usize) -> Self {
        Coord { cell, stmt }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.cell, self.stmt)
    }
}

#[derive(Debug, Error)]
#[error("code cell {cell} does not parse: {error}")]
pub struct UnparseableCell {
    pub cell: usize,
    pub error: SyntaxError,
}

#[derive(Debug, Clone)]
pub struct ParsedCell {
    pub index: usize,
    pub tree: AstTree,
    pub facts: Vec<DataflowFact>,
    pub calls: Vec<Vec<ApiCall>>,
}

/// Every code cell of a notebook parsed once, with per-statement facts.
#[derive(Debug, Clone)]
pub struct NotebookAnalysis {
    pub cells: Vec<ParsedCell>,
    pub imports: ImportTable,
    /// Names bound anywhere by something other than an import.
    pub locals: BTreeSet<String>,
}

impl NotebookAnalysis {
    pub fn new(nb: &Notebook) -> Result<Self, UnparseableCell> {
        let (analysis, mut failures) = Self::lenient(nb);
        match failures.is_empty() {
            true => Ok(analysis),
            false => Err(failures.swap_remove(0)),
        }
    }

    /// Parses what it can; unparseable cells are left out and reported.
    pub fn lenient(nb: &Notebook) -> (Self, Vec<UnparseableCell>) {
        let mut cells = Vec::new();
        let mut failures = Vec::new();
        for cell in nb.cells.iter().filter(|c| c.kind == CellKind::Code) {
            let tree = match pyast::parse_cell(cell.index, &cell.source) {
                Ok(t) => t,
                Err(error) => {
                    failures.push(UnparseableCell { cell: cell.index, error });
                    continue;
                }
            };
            let facts: Vec<_> = tree.statements().iter().enumerate().map(|(i, s)| fact_for_stmt(s, i)).collect();
            let calls = tree.statements().iter().enumerate().map(|(i, s)| calls_in_stmt(s, i, cell.index)).collect();
            cells.push(ParsedCell { index: cell.index, tree, facts, calls });
        }
        let mut imports = ImportTable::default();
        let mut locals = BTreeSet::new();
        for c in &cells {
            for (s, f) in c.tree.statements().iter().zip(&c.facts) {
                if matches!(s.kind, "Import" | "ImportFrom") {
                    imports.record(s);
                } else {
                    locals.extend(f.assigned_names.iter().cloned());
                }
            }
        }
        (NotebookAnalysis { cells, imports, locals }, failures)
    }

    pub fn cell(&self, index: usize) -> Option<&ParsedCell> {
        self.cells.iter().find(|c| c.index == index)
    }

    /// All statement coordinates in document order.
    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        self.cells.iter().flat_map(|c| (0..c.tree.len()).map(move |s| Coord::new(c.index, s)))
    }

    pub fn stmt(&self, at: Coord) -> &SyntaxNode {
        &self.cell(at.cell).expect("coordinate names a code cell").tree.statements()[at.stmt]
    }

    pub fn fact(&self, at: Coord) -> &DataflowFact {
        &self.cell(at.cell).expect("coordinate names a code cell").facts[at.stmt]
    }

    pub fn calls(&self, at: Coord) -> &[ApiCall] {
        &self.cell(at.cell).expect("coordinate names a code cell").calls[at.stmt]
    }

    pub fn origin(&self, qualified_name: &str) -> Origin {
        resolve_callee(qualified_name, &self.imports, &self.locals)
    }

    fn init_category_of_call(&self, call: &SyntaxNode, known: &BTreeSet<String>, catalog: &ApiCatalog) -> Option<InitCategory> {
        let func = call.first_field("func")?;
        let qualified = render_callee(func);
        match self.origin(&qualified) {
            Origin::Module(path) => {
                let root = path.split('.').next().unwrap_or(&path);
                catalog.category_of(root, last_segment(&path))
            }
            Origin::Object => {
                let on_frame = func.first_field("value").and_then(SyntaxNode::root_name).is_some_and(|r| known.contains(r));
                let name = func.ident.as_deref().filter(|_| func.kind == "Attribute")?;
                (on_frame && catalog.is_manipulation_method(name)).then_some(InitCategory::Manipulation)
            }
            _ => None,
        }
    }

    /// Catalog category of a call resolved to a module attribute.
    pub fn module_category(&self, call: &ApiCall, catalog: &ApiCatalog) -> Option<InitCategory> {
        match self.origin(&call.qualified_name) {
            Origin::Module(path) => catalog.category_of(path.split('.').next().unwrap_or(&path), last_segment(&path)),
            _ => None,
        }
    }

    pub fn is_loading_call(&self, call: &ApiCall, catalog: &ApiCatalog) -> bool {
        self.module_category(call, catalog) == Some(InitCategory::Loading)
    }

    /// Category under which `value` produces a fresh frame, if any.
    fn init_category(&self, value: &SyntaxNode, known: &BTreeSet<String>, catalog: &ApiCatalog) -> Option<InitCategory> {
        let mut node = value;
        loop {
            match node.kind {
                "Call" => {
                    if let Some(c) = self.init_category_of_call(node, known, catalog) {
                        return Some(c);
                    }
                    node = node.first_field("func")?;
                }
                "Attribute" | "Subscript" => node = node.first_field("value")?,
                _ => break,
            }
        }
        let is_known = |n: &SyntaxNode| n.root_name().is_some_and(|r| known.contains(r));
        match value.kind {
            "BinOp" => {
                let op = value.first_field("op").and_then(|o| FrameOp::from_binop(o.kind))?;
                let operands = value.field_children("left").chain(value.field_children("right"));
                let touches = operands.into_iter().any(is_known);
                (catalog.operations.contains(&op) && touches).then_some(InitCategory::Operation)
            }
            "Subscript" => {
                let base = value.first_field("value")?;
                let indexer = base.kind == "Attribute" && matches!(base.ident.as_deref(), Some("loc" | "iloc"));
                let frame = if indexer { base.first_field("value")? } else { base };
                (catalog.operations.contains(&FrameOp::Subscript) && frame.is_name() && is_known(frame)).then_some(InitCategory::Operation)
            }
            _ => None,
        }
    }
}

fn assignment_parts(stmt: &SyntaxNode) -> Option<(Vec<String>, &SyntaxNode)> {
    let (targets, value) = match stmt.kind {
        "Assign" => (stmt.field_children("targets").collect::<Vec<_>>(), stmt.first_field("value")?),
        "AnnAssign" => (stmt.field_children("target").collect(), stmt.first_field("value")?),
        _ => return None,
    };
    let names: Vec<String> = targets.iter().filter(|t| t.is_name()).filter_map(|t| t.ident.clone()).collect();
    (!names.is_empty() && names.len() == targets.len()).then_some((names, value))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Initialization {
    pub at: Coord,
    pub var: String,
    pub category: InitCategory,
    pub chained: bool,
}

/// Statements that bind a name to a fresh frame, in document order.
pub fn find_initializations(analysis: &NotebookAnalysis, catalog: &ApiCatalog) -> Vec<Initialization> {
    let mut known: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();
    for at in analysis.coords() {
        let stmt = analysis.stmt(at);
        let fact = analysis.fact(at);
        let mut initialized = BTreeSet::new();
        if let Some((names, value)) = assignment_parts(stmt) {
            if let Some(category) = analysis.init_category(value, &known, catalog) {
                for var in &names {
                    // `df = df.merge(x)` continues df's lifecycle
                    if known.contains(var) && fact.used_names.contains(var) {
                        continue;
                    }
                    out.push(Initialization { at, var: var.clone(), category, chained: names.len() > 1 });
                    initialized.insert(var.clone());
                }
            }
        }
        known.retain(|k| initialized.contains(k) || !fact.rebinds_fresh(k));
        known.extend(initialized);
    }
    out
}

/// Statements after `from` that modify `var` in place or reassign it from
/// itself, and the statement (if any) that rebinds it to something else.
pub fn track_wrangling(analysis: &NotebookAnalysis, var: &str, from: Coord) -> (Vec<Coord>, Option<Coord>) {
    let mut out = Vec::new();
    for at in analysis.coords().filter(|c| *c > from) {
        let fact = analysis.fact(at);
        if fact.self_references(var) {
            out.push(at);
        } else if fact.assigned_names.contains(var) {
            return (out, Some(at));
        }
    }
    (out, None)
}

pub fn is_utilization_call(analysis: &NotebookAnalysis, call: &ApiCall, var: &str, catalog: &ApiCatalog) -> bool {
    if call.deferred || !catalog.is_utilization_name(&call.method) {
        return false;
    }
    let involved = call.root.as_deref() == Some(var) || call.arg_roots.iter().any(|a| a == var);
    if !involved {
        return false;
    }
    match analysis.origin(&call.qualified_name) {
        Origin::Module(path) => {
            let root = path.split('.').next().unwrap_or(&path);
            catalog.utilization_packages().contains(root)
        }
        Origin::Object | Origin::Unknown => true,
        Origin::Local => false,
    }
}

/// First statement in `(after, before)` that hands `var` to a utilization API.
pub fn find_utilization(
    analysis: &NotebookAnalysis,
    var: &str,
    after: Coord,
    before: Option<Coord>,
    catalog: &ApiCatalog,
) -> Option<Coord> {
    analysis
        .coords()
        .filter(|c| *c > after && before.is_none_or(|b| *c < b))
        .find(|at| analysis.calls(*at).iter().any(|call| is_utilization_call(analysis, call, var, catalog)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleSpan {
    pub target_var: String,
    pub init: Coord,
    pub init_category: InitCategory,
    pub wrangling: Vec<Coord>,
    pub utilization: Coord,
    /// Code cells from the init cell to the utilization cell that mention
    /// the variable.
    pub wrangling_cells: Vec<usize>,
    pub notes: Vec<String>,
}

impl LifecycleSpan {
    pub fn id(&self) -> String {
        format!("{}@{}", self.target_var, self.init)
    }

    pub fn is_wrangling(&self, at: Coord) -> bool {
        self.wrangling.binary_search(&at).is_ok()
    }
}

fn mentions(fact: &DataflowFact, var: &str) -> bool {
    fact.used_names.contains(var) || fact.assigned_names.contains(var) || fact.inplace_names.contains(var)
}

pub fn extract_lifecycles(analysis: &NotebookAnalysis, catalog: &ApiCatalog) -> Vec<LifecycleSpan> {
    let inits = find_initializations(analysis, catalog);
    let mut spans = Vec::new();
    for init in &inits {
        let (wrangling, stop) = track_wrangling(analysis, &init.var, init.at);
        let Some(last) = wrangling.last().copied() else { continue };
        let Some(utilization) = find_utilization(analysis, &init.var, last, stop, catalog) else { continue };
        let wrangling_cells = analysis
            .cells
            .iter()
            .filter(|c| c.index >= init.at.cell && c.index <= utilization.cell)
            .filter(|c| c.facts.iter().any(|f| mentions(f, &init.var)))
            .map(|c| c.index)
            .collect();
        let mut notes = Vec::new();
        if init.chained {
            notes.push("chained_assignment".to_owned());
        }
        spans.push(LifecycleSpan {
            target_var: init.var.clone(),
            init: init.at,
            init_category: init.category,
            wrangling,
            utilization,
            wrangling_cells,
            notes,
        });
    }
    let vars: Vec<String> = spans.iter().map(|s| s.target_var.clone()).collect();
    for span in &mut spans {
        if vars.iter().filter(|v| **v == span.target_var).count() > 1 {
            span.notes.push("reinitialized".to_owned());
        }
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::notebook_from_cells;

    fn analyze(cells: &[&str]) -> NotebookAnalysis {
        let cells: Vec<_> = cells.iter().map(|c| (CellKind::Code, *c)).collect();
        NotebookAnalysis::new(&notebook_from_cells("t", &cells)).unwrap()
    }

    fn inits(src: &[&str]) -> Vec<(Coord, String, InitCategory)> {
        find_initializations(&analyze(src), &ApiCatalog::default()).into_iter().map(|i| (i.at, i.var, i.category)).collect()
    }

    #[test]
    fn definition_loading_manipulation_operation() {
        let got = inits(&[
            "import pandas as pd\ndf = pd.DataFrame()\nraw = pd.read_excel('a.xlsx')",
            "df = pd.merge([df1, df2])\nsub = raw[cols]\ntotal = raw + 1\nhalf = raw.iloc[:5]",
        ]);
        assert_eq!(
            got,
            vec![
                (Coord::new(0, 1), "df".into(), InitCategory::Definition),
                (Coord::new(0, 2), "raw".into(), InitCategory::Loading),
                (Coord::new(1, 0), "df".into(), InitCategory::Manipulation),
                (Coord::new(1, 1), "sub".into(), InitCategory::Operation),
                (Coord::new(1, 2), "total".into(), InitCategory::Operation),
                (Coord::new(1, 3), "half".into(), InitCategory::Operation),
            ]
        );
    }

    #[test]
    fn subscript_of_unknown_value_is_not_a_frame() {
        assert!(inits(&["x = cols[0]\ny = a + b"]).is_empty());
    }

    #[test]
    fn renamed_pandas_import_and_method_manipulation() {
        let got = inits(&["import pandas as P\nd = P.read_csv('x.csv')\ne = d.merge(other)\nf = d.dropna()"]);
        let vars: Vec<_> = got.iter().map(|(_, v, _)| v.as_str()).collect();
        assert_eq!(vars, vec!["d", "e"]);
    }

    #[test]
    fn self_reassign_through_catalog_call_is_not_a_new_frame() {
        let got = inits(&["df = pd.read_csv('a')\ndf = pd.concat([df, extra])"]);
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn rebinding_forgets_frames() {
        let got = inits(&["df = pd.read_csv('a')\ndf = 3\nsub = df[0]"]);
        assert_eq!(got.len(), 1);
    }

    #[test]
    fn wrangling_rules() {
        let a = analyze(&[
            "df = pd.read_csv('a.csv')",
            "df = df.dropna()\ndf.dropna(inplace=True)\ndf2 = df.dropna()\ndf['x'] = 1",
            "df = pd.read_csv('b.csv')\ndf = df.head()",
        ]);
        let (w, stop) = track_wrangling(&a, "df", Coord::new(0, 0));
        assert_eq!(w, vec![Coord::new(1, 0), Coord::new(1, 1), Coord::new(1, 3)]);
        assert_eq!(stop, Some(Coord::new(2, 0)));
    }

    #[test]
    fn utilization_via_argument_or_receiver() {
        let c = ApiCatalog::default();
        let a = analyze(&[
            "import seaborn as sns\nimport matplotlib.pyplot as plt\nsns.heatmap(df.corr())\nplt.plot(df['x'])\nplt.show()\ndf.hist()",
        ]);
        let hits: Vec<_> = a.coords().filter(|at| a.calls(*at).iter().any(|k| is_utilization_call(&a, k, "df", &c))).collect();
        assert_eq!(hits, vec![Coord::new(0, 2), Coord::new(0, 3), Coord::new(0, 5)]);
    }

    #[test]
    fn utilization_by_sklearn_and_scipy() {
        let c = ApiCatalog::default();
        let a = analyze(&[
            "from sklearn.metrics import r2_score\nfrom scipy import stats\nr2_score(df['y'], df['p'])\nstats.probplot(df['y'])\nnp.mean(df)",
        ]);
        let hits: Vec<_> = a.coords().filter(|at| a.calls(*at).iter().any(|k| is_utilization_call(&a, k, "df", &c))).collect();
        assert_eq!(hits, vec![Coord::new(0, 2), Coord::new(0, 3)]);
    }

    #[test]
    fn local_helper_named_like_an_api_is_not_utilization() {
        let c = ApiCatalog::default();
        let a = analyze(&["def heatmap(d):\n    pass\nheatmap(df)"]);
        assert!(!a.calls(Coord::new(0, 1)).iter().any(|k| is_utilization_call(&a, k, "df", &c)));
    }

    #[test]
    fn one_span_with_two_wrangling_statements() {
        let a = analyze(&[
            "import pandas as pd\nimport seaborn as sns",
            "df = pd.read_csv('a.csv')",
            "df = df.dropna()",
            "df['ratio'] = df['a'] / df['b']",
            "sns.heatmap(df.corr())",
        ]);
        let spans = extract_lifecycles(&a, &ApiCatalog::default());
        assert_eq!(spans.len(), 1);
        let s = &spans[0];
        assert_eq!(s.id(), "df@1.0");
        assert_eq!(s.wrangling, vec![Coord::new(2, 0), Coord::new(3, 0)]);
        assert_eq!(s.utilization, Coord::new(4, 0));
        assert_eq!(s.wrangling_cells, vec![1, 2, 3, 4]);
    }

    #[test]
    fn no_wrangling_no_span() {
        let a = analyze(&["df = pd.read_csv('a.csv')\nplt.plot(df['x'])"]);
        assert!(extract_lifecycles(&a, &ApiCatalog::default()).is_empty());
    }

    #[test]
    fn two_frames_two_spans() {
        let a = analyze(&[
            "a = pd.read_csv('a.csv')\nb = pd.read_json('b.json')",
            "a = a.fillna(0)\nb.drop(columns=['z'], inplace=True)",
            "plt.hist(a['x'])\nsns.boxplot(data=b)",
        ]);
        let spans = extract_lifecycles(&a, &ApiCatalog::default());
        let ids: Vec<_> = spans.iter().map(LifecycleSpan::id).collect();
        assert_eq!(ids, vec!["a@0.0", "b@0.1"]);
        assert_eq!(spans[1].utilization, Coord::new(2, 1));
    }

    #[test]
    fn reinitialized_variable_gets_two_noted_spans() {
        let a = analyze(&[
            "df = pd.read_csv('a.csv')\ndf = df.dropna()\nplt.plot(df['x'])",
            "df = pd.read_csv('b.csv')\ndf['y'] = 2\nplt.plot(df['y'])",
        ]);
        let spans = extract_lifecycles(&a, &ApiCatalog::default());
        assert_eq!(spans.len(), 2);
        assert!(spans.iter().all(|s| s.notes.contains(&"reinitialized".to_owned())));
        assert_eq!(spans[0].utilization, Coord::new(0, 2));
    }

    #[test]
    fn utilization_must_follow_last_wrangling() {
        let a = analyze(&["df = pd.read_csv('a.csv')\ndf = df.dropna()\nplt.plot(df['x'])\ndf['z'] = 0"]);
        assert!(extract_lifecycles(&a, &ApiCatalog::default()).is_empty());
    }

    #[test]
    fn chained_assignment_is_noted() {
        let a = analyze(&["a = b = pd.read_csv('x.csv')\na = a.dropna()\nplt.plot(a)"]);
        let spans = extract_lifecycles(&a, &ApiCatalog::default());
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].notes, vec!["chained_assignment"]);
    }

    #[test]
    fn unparseable_cell_is_reported() {
        let nb = notebook_from_cells("t", &[(CellKind::Code, "x = 1"), (CellKind::Code, "print 'hi'")]);
        assert_eq!(NotebookAnalysis::new(&nb).unwrap_err().cell, 1);
    }
}
