use std::collections::BTreeSet;

use super::tree::{Ctx, Literal, SyntaxNode};
use super::AstTree;

#[derive(Debug, Clone, PartialEq)]
pub struct KwArg {
    /// `None` for `**mapping`.
    pub name: Option<String>,
    /// Literal value, or `None` when the argument is an arbitrary expression.
    pub value: Option<Literal>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiCall {
    /// Callee as written: `pd.read_csv`, `df.dropna`, `pd.read_csv().dropna`,
    /// `df[].fillna`.
    pub qualified_name: String,
    /// Set iff the callee is a method looked up directly on a name.
    pub receiver: Option<String>,
    /// Identifier at the root of the callee chain.
    pub root: Option<String>,
    /// Last segment of the callee (`dropna` for `df.dropna`).
    pub method: String,
    pub is_method: bool,
    pub kwargs: Vec<KwArg>,
    /// Root identifiers of every positional and keyword argument expression.
    pub arg_roots: Vec<String>,
    pub stmt_index: usize,
    pub cell_index: usize,
    /// Call sits in a function, class or lambda body and does not run when
    /// the statement runs.
    pub deferred: bool,
}

impl ApiCall {
    pub fn kwarg(&self, name: &str) -> Option<&KwArg> {
        self.kwargs.iter().find(|k| k.name.as_deref() == Some(name))
    }

    pub fn is_inplace(&self) -> bool {
        matches!(self.kwarg("inplace"), Some(KwArg { value: Some(Literal::Bool(true)), .. }))
    }
}

pub(crate) fn render_callee(node: &SyntaxNode) -> String {
    match node.kind {
        "Name" => node.ident.clone().unwrap_or_default(),
        "Attribute" => {
            let base = node.first_field("value").map(render_callee).unwrap_or_default();
            format!("{base}.{}", node.ident.as_deref().unwrap_or(""))
        }
        "Call" => format!("{}()", node.first_field("func").map(render_callee).unwrap_or_default()),
        "Subscript" => format!("{}[]", node.first_field("value").map(render_callee).unwrap_or_default()),
        _ => "<expr>".to_owned(),
    }
}

fn make_call(call: &SyntaxNode, stmt_index: usize, cell_index: usize, deferred: bool) -> ApiCall {
    let func = call.first_field("func").expect("call has a callee");
    let (receiver, method, is_method) = match func.kind {
        "Attribute" => {
            let value = func.first_field("value");
            let receiver = value.filter(|v| v.is_name()).and_then(|v| v.ident.clone());
            (receiver, func.ident.clone().unwrap_or_default(), true)
        }
        "Name" => (None, func.ident.clone().unwrap_or_default(), false),
        _ => (None, String::new(), false),
    };
    let mut arg_roots = Vec::new();
    let mut kwargs = Vec::new();
    for c in &call.children {
        match c.field {
            "args" => arg_roots.extend(c.root_name().map(str::to_owned)),
            "keywords" => {
                let value = c.first_field("value");
                arg_roots.extend(value.and_then(|v| v.root_name()).map(str::to_owned));
                kwargs.push(KwArg { name: c.ident.clone(), value: value.filter(|v| v.kind == "Constant").and_then(|v| v.literal.clone()) });
            }
            _ => {}
        }
    }
    ApiCall {
        qualified_name: render_callee(func),
        receiver,
        root: func.root_name().map(str::to_owned),
        method,
        is_method,
        kwargs,
        arg_roots,
        stmt_index,
        cell_index,
        deferred,
    }
}

/// Calls inside one statement, innermost first.
pub(crate) fn calls_in_stmt(stmt: &SyntaxNode, stmt_index: usize, cell_index: usize) -> Vec<ApiCall> {
    fn visit(n: &SyntaxNode, deferred: bool, out: &mut Vec<ApiCall>, si: usize, ci: usize) {
        let defers_body = matches!(n.kind, "FunctionDef" | "AsyncFunctionDef" | "ClassDef" | "Lambda");
        for c in &n.children {
            let child_deferred = deferred || (defers_body && c.field == "body");
            visit(c, child_deferred, out, si, ci);
        }
        if n.kind == "Call" {
            out.push(make_call(n, si, ci, deferred));
        }
    }
    let mut out = Vec::new();
    visit(stmt, false, &mut out, stmt_index, cell_index);
    out
}

/// Every call in the tree, in statement order, nested calls before the call
/// that contains them.
pub fn extract_calls(tree: &AstTree) -> Vec<ApiCall> {
    tree.statements().iter().enumerate().flat_map(|(i, s)| calls_in_stmt(s, i, tree.cell_index)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataflowFact {
    pub stmt_index: usize,
    pub assigned_names: BTreeSet<String>,
    pub used_names: BTreeSet<String>,
    /// Names modified in place: augmented assignment, subscript or attribute
    /// store, or a method call carrying `inplace=True`.
    pub inplace_names: BTreeSet<String>,
    /// `a = b = value`
    pub chained: bool,
}

impl DataflowFact {
    pub fn is_aug_or_inplace_selfref(&self) -> bool {
        !self.inplace_names.is_empty()
    }

    /// Reassigned from itself, or modified in place.
    pub fn self_references(&self, name: &str) -> bool {
        (self.assigned_names.contains(name) && self.used_names.contains(name)) || self.inplace_names.contains(name)
    }

    /// Bound without reading its previous value.
    pub fn rebinds_fresh(&self, name: &str) -> bool {
        self.assigned_names.contains(name) && !self.self_references(name)
    }
}

fn store_names(target: &SyntaxNode, out: &mut Vec<String>) {
    target.walk(&mut |n| {
        if n.is_name() && n.ctx == Some(Ctx::Store) {
            out.extend(n.ident.clone());
        }
    });
}

fn arg_names(arguments: &SyntaxNode) -> Vec<String> {
    arguments.children.iter().filter(|c| c.kind == "arg").filter_map(|c| c.ident.clone()).collect()
}

struct Scanner<'a> {
    fact: &'a mut DataflowFact,
}

impl Scanner<'_> {
    fn scan(&mut self, n: &SyntaxNode, locals: &[String]) {
        let local = |name: &str| locals.iter().any(|l| l == name);
        match n.kind {
            "Name" => {
                let id = n.ident.as_deref().unwrap_or("");
                if local(id) {
                    return;
                }
                match n.ctx {
                    Some(Ctx::Store) => {
                        self.fact.assigned_names.insert(id.to_owned());
                    }
                    _ => {
                        self.fact.used_names.insert(id.to_owned());
                    }
                }
            }
            "FunctionDef" | "AsyncFunctionDef" | "ClassDef" => {
                self.fact.assigned_names.extend(n.ident.clone());
                for c in n.children.iter().filter(|c| c.field != "body") {
                    if c.kind == "arguments" {
                        // defaults and annotations run at definition time
                        for a in &c.children {
                            if a.kind == "arg" {
                                for ann in &a.children {
                                    self.scan(ann, locals);
                                }
                            } else {
                                self.scan(a, locals);
                            }
                        }
                    } else {
                        self.scan(c, locals);
                    }
                }
            }
            "Lambda" => {
                let mut inner = locals.to_vec();
                if let Some(args) = n.first_field("args") {
                    inner.extend(arg_names(args));
                    for d in args.children.iter().filter(|c| c.kind != "arg") {
                        self.scan(d, locals);
                    }
                }
                if let Some(body) = n.first_field("body") {
                    self.scan(body, &inner);
                }
            }
            "ListComp" | "SetComp" | "DictComp" | "GeneratorExp" => {
                let mut inner = locals.to_vec();
                for g in n.field_children("generators") {
                    if let Some(t) = g.first_field("target") {
                        store_names(t, &mut inner);
                    }
                }
                for (i, g) in n.field_children("generators").enumerate() {
                    for c in &g.children {
                        match c.field {
                            "target" => {}
                            // the outermost iterable is evaluated in the enclosing scope
                            "iter" if i == 0 => self.scan(c, locals),
                            _ => self.scan(c, &inner),
                        }
                    }
                }
                for c in n.children.iter().filter(|c| c.field != "generators") {
                    self.scan(c, &inner);
                }
            }
            "Import" | "ImportFrom" => {
                for a in &n.children {
                    let name = a.ident.as_deref().unwrap_or("");
                    if name == "*" {
                        continue;
                    }
                    let bound = match &a.asname {
                        Some(alias) => alias.clone(),
                        None if n.kind == "Import" => name.split('.').next().unwrap_or(name).to_owned(),
                        None => name.to_owned(),
                    };
                    self.fact.assigned_names.insert(bound);
                }
            }
            "ExceptHandler" | "MatchAs" | "MatchStar" => {
                self.fact.assigned_names.extend(n.ident.clone());
                for c in &n.children {
                    self.scan(c, locals);
                }
            }
            "Subscript" | "Attribute" if matches!(n.ctx, Some(Ctx::Store) | Some(Ctx::Del)) => {
                if let Some(base) = n.root_name().filter(|b| !local(b)) {
                    if n.ctx == Some(Ctx::Store) {
                        self.fact.assigned_names.insert(base.to_owned());
                    }
                    self.fact.inplace_names.insert(base.to_owned());
                }
                for c in &n.children {
                    self.scan(c, locals);
                }
            }
            "AugAssign" => {
                if let Some(t) = n.first_field("target") {
                    if let Some(base) = t.root_name().filter(|b| !local(b)) {
                        self.fact.assigned_names.insert(base.to_owned());
                        self.fact.used_names.insert(base.to_owned());
                        self.fact.inplace_names.insert(base.to_owned());
                    }
                }
                for c in &n.children {
                    self.scan(c, locals);
                }
            }
            "Call" => {
                let func = n.first_field("func");
                let inplace = n.field_children("keywords").any(|k| {
                    k.ident.as_deref() == Some("inplace")
                        && matches!(k.first_field("value").and_then(|v| v.literal.as_ref()), Some(Literal::Bool(true)))
                });
                if inplace {
                    if let Some(recv) = func
                        .filter(|f| f.kind == "Attribute")
                        .and_then(|f| f.first_field("value"))
                        .filter(|v| v.is_name())
                        .and_then(|v| v.ident.as_deref())
                        .filter(|r| !local(r))
                    {
                        self.fact.inplace_names.insert(recv.to_owned());
                    }
                }
                for c in &n.children {
                    self.scan(c, locals);
                }
            }
            _ => {
                for c in &n.children {
                    self.scan(c, locals);
                }
            }
        }
    }
}

pub(crate) fn fact_for_stmt(stmt: &SyntaxNode, stmt_index: usize) -> DataflowFact {
    let mut fact = DataflowFact { stmt_index, ..Default::default() };
    fact.chained = stmt.kind == "Assign" && stmt.field_children("targets").count() > 1;
    Scanner { fact: &mut fact }.scan(stmt, &[]);
    fact
}

/// One fact per top-level statement. Function and class bodies are not
/// scanned; they do not run when the statement runs.
pub fn defs_uses(tree: &AstTree) -> Vec<DataflowFact> {
    tree.statements().iter().enumerate().map(|(i, s)| fact_for_stmt(s, i)).collect()
}

/// Free names read anywhere inside `node`, function bodies included, minus
/// parameters and names the bodies bind themselves. Used for dependency
/// closure, where a called helper's globals matter.
pub(crate) fn deep_free_names(node: &SyntaxNode) -> BTreeSet<String> {
    let fact = fact_for_stmt(node, 0);
    let mut used = fact.used_names;
    node.walk(&mut |n| {
        if matches!(n.kind, "FunctionDef" | "AsyncFunctionDef") {
            let mut bound: BTreeSet<String> = BTreeSet::new();
            if let Some(args) = n.first_field("args") {
                bound.extend(arg_names(args));
            }
            let mut inner_used = BTreeSet::new();
            for b in n.field_children("body") {
                let f = fact_for_stmt(b, 0);
                bound.extend(f.assigned_names);
                inner_used.extend(deep_free_names(b));
            }
            used.extend(inner_used.into_iter().filter(|u| !bound.contains(u)));
        }
    });
    used
}

#[cfg(test)]
mod tests {
    use super::super::parse_source;
    use super::*;

    fn set(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn read_csv_call() {
        let t = parse_source("df = pd.read_csv(\"a.csv\")").unwrap();
        let calls = extract_calls(&t);
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].qualified_name, "pd.read_csv");
        assert_eq!(calls[0].receiver.as_deref(), Some("pd"));
    }

    #[test]
    fn inplace_kwarg_is_captured() {
        let t = parse_source("df.dropna(inplace=True)").unwrap();
        let c = &extract_calls(&t)[0];
        assert_eq!(c.qualified_name, "df.dropna");
        assert_eq!(c.receiver.as_deref(), Some("df"));
        assert_eq!(c.kwargs, vec![KwArg { name: Some("inplace".into()), value: Some(Literal::Bool(true)) }]);
        assert!(c.is_inplace());
    }

    #[test]
    fn nested_calls_come_inner_first() {
        let t = parse_source("sns.heatmap(df.corr())").unwrap();
        let names: Vec<_> = extract_calls(&t).into_iter().map(|c| c.qualified_name).collect();
        assert_eq!(names, vec!["df.corr", "sns.heatmap"]);
        let t = parse_source("x = pd.read_csv('a').dropna().head()").unwrap();
        let names: Vec<_> = extract_calls(&t).into_iter().map(|c| c.qualified_name).collect();
        assert_eq!(names, vec!["pd.read_csv", "pd.read_csv().dropna", "pd.read_csv().dropna().head"]);
    }

    #[test]
    fn receiver_only_for_plain_names() {
        let t = parse_source("df['a'].fillna(0, inplace=True)").unwrap();
        let c = &extract_calls(&t)[0];
        assert_eq!(c.receiver, None);
        assert_eq!(c.root.as_deref(), Some("df"));
        assert_eq!(c.qualified_name, "df[].fillna");
    }

    #[test]
    fn calls_in_function_bodies_are_deferred() {
        let t = parse_source("def f(d=g()):\n    return d.plot()\n").unwrap();
        let calls = extract_calls(&t);
        assert_eq!(calls.len(), 2);
        assert!(!calls[0].deferred);
        assert!(calls[1].deferred);
    }

    #[test]
    fn self_reassignment() {
        let t = parse_source("df = df.dropna()").unwrap();
        let f = &defs_uses(&t)[0];
        assert_eq!(f.assigned_names, set(&["df"]));
        assert_eq!(f.used_names, set(&["df"]));
        assert!(f.self_references("df"));
    }

    #[test]
    fn subscript_store_is_inplace() {
        let t = parse_source("df['x'] = 1").unwrap();
        let f = &defs_uses(&t)[0];
        assert!(f.assigned_names.contains("df"));
        assert!(f.inplace_names.contains("df"));
        assert!(f.is_aug_or_inplace_selfref());
        let t = parse_source("df.columns = cols").unwrap();
        assert!(defs_uses(&t)[0].inplace_names.contains("df"));
    }

    #[test]
    fn plain_call_assignment() {
        let t = parse_source("y = f(a, b)").unwrap();
        let f = &defs_uses(&t)[0];
        assert_eq!(f.assigned_names, set(&["y"]));
        assert_eq!(f.used_names, set(&["f", "a", "b"]));
        assert!(!f.is_aug_or_inplace_selfref());
    }

    #[test]
    fn augmented_and_tuple_targets() {
        let t = parse_source("a, b = x\nn += 1").unwrap();
        let f = defs_uses(&t);
        assert_eq!(f[0].assigned_names, set(&["a", "b"]));
        assert!(f[1].self_references("n"));
    }

    #[test]
    fn chained_assignment_flags() {
        let t = parse_source("a = b = df.dropna()").unwrap();
        let f = &defs_uses(&t)[0];
        assert!(f.chained);
        assert_eq!(f.assigned_names, set(&["a", "b"]));
    }

    #[test]
    fn comprehension_and_lambda_locals_do_not_leak() {
        let t = parse_source("out = [c.upper() for c in cols if c != skip]\nf = lambda v: v + k").unwrap();
        let f = defs_uses(&t);
        assert_eq!(f[0].assigned_names, set(&["out"]));
        assert_eq!(f[0].used_names, set(&["cols", "skip"]));
        assert_eq!(f[1].used_names, set(&["k"]));
    }

    #[test]
    fn function_body_ignored_but_defaults_scanned() {
        let t = parse_source("def clean(d, fill=default):\n    d['x'] = fill\n    return d\n").unwrap();
        let f = &defs_uses(&t)[0];
        assert_eq!(f.assigned_names, set(&["clean"]));
        assert_eq!(f.used_names, set(&["default"]));
        let deep = deep_free_names(&t.statements()[0]);
        assert!(deep.contains("default"));
        assert!(!deep.contains("d"));
    }

    #[test]
    fn imports_bind_names() {
        let t = parse_source("import pandas as pd\nimport matplotlib.pyplot\nfrom scipy import stats\n").unwrap();
        let f = defs_uses(&t);
        assert_eq!(f[0].assigned_names, set(&["pd"]));
        assert_eq!(f[1].assigned_names, set(&["matplotlib"]));
        assert_eq!(f[2].assigned_names, set(&["stats"]));
    }
}
