//! CodeBLEU over the crate's own token stream and syntax tree.
//!
//! * n-gram: BLEU-4, uniform weights, unigram precision unsmoothed, orders
//!   2..4 add-one smoothed, standard brevity penalty.
//! * weighted n-gram: as above but unigram matches of keywords count 5×.
//! * AST match: share of gold subtrees (root plus every inner node, rendered
//!   by node kind only) whose rendering occurs anywhere in the prediction.
//! * data-flow match: share of gold def-use edges, after renaming variables
//!   to `var_i` by first appearance, matched one-to-one against the
//!   prediction's edges.
//!
//! A component the gold leaves undefined (no subtrees, no edges) is dropped
//! and the rest re-averaged.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::pyast::{is_keyword, parse_source, surface_tokens, Ctx, SyntaxNode};

pub const KEYWORD_WEIGHT: f64 = 5.0;
const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleuComponents {
    pub ngram: f64,
    pub weighted_ngram: f64,
    /// `None` when the gold has no subtree to match.
    pub ast_match: Option<f64>,
    /// `None` when the gold has no data-flow edge.
    pub dataflow_match: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeBleu {
    pub score: f64,
    pub components: CodeBleuComponents,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("gold code does not parse: {0}")]
pub struct GoldUnparseable(pub String);

/// Surface tokens for n-gram scoring. Text the lexer rejects falls back to
/// whitespace splitting so gibberish still gets an n-gram score.
pub fn ngram_tokens(code: &str) -> Vec<String> {
    surface_tokens(code).unwrap_or_else(|_| code.split_whitespace().map(str::to_owned).collect())
}

fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

fn bleu(pred: &[String], gold: &[String], unigram_weight: impl Fn(&str) -> f64) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let p = ngrams(pred, n);
        let g = ngrams(gold, n);
        let p_n = if n == 1 {
            let (mut hit, mut total) = (0.0, 0.0);
            for (gram, &c) in &p {
                let w = unigram_weight(&gram[0]);
                hit += w * c.min(*g.get(gram).unwrap_or(&0)) as f64;
                total += w * c as f64;
            }
            if hit == 0.0 {
                return 0.0;
            }
            hit / total
        } else {
            let hit: usize = p.iter().map(|(gram, &c)| c.min(*g.get(gram).unwrap_or(&0))).sum();
            let total: usize = p.values().sum();
            (hit as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += p_n.ln() / MAX_ORDER as f64;
    }
    let (c, r) = (pred.len() as f64, gold.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_sum.exp()
}

pub fn ngram_match(pred: &[String], gold: &[String]) -> f64 {
    bleu(pred, gold, |_| 1.0)
}

pub fn weighted_ngram_match(pred: &[String], gold: &[String]) -> f64 {
    bleu(pred, gold, |t| if is_keyword(t) { KEYWORD_WEIGHT } else { 1.0 })
}

fn render(node: &SyntaxNode, out: &mut String) {
    if node.children.is_empty() {
        out.push_str(node.kind);
        return;
    }
    out.push('(');
    out.push_str(node.kind);
    for c in &node.children {
        out.push(' ');
        render(c, out);
    }
    out.push(')');
}

/// Kind-only renderings of the root and every node with children.
pub fn subtrees(root: &SyntaxNode) -> Vec<String> {
    let mut out = Vec::new();
    root.walk(&mut |n| {
        if !n.children.is_empty() {
            let mut s = String::new();
            render(n, &mut s);
            out.push(s);
        }
    });
    out
}

pub fn ast_match(pred: &[String], gold: &[String]) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    let have: BTreeSet<&str> = pred.iter().map(String::as_str).collect();
    Some(gold.iter().filter(|s| have.contains(s.as_str())).count() as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowEdge {
    pub var: String,
    pub relation: &'static str,
    pub parents: Vec<String>,
}

struct FlowWalker {
    defined: BTreeSet<String>,
    edges: Vec<FlowEdge>,
}

fn load_names(node: &SyntaxNode) -> Vec<String> {
    let mut set = BTreeSet::new();
    node.walk(&mut |n| {
        if n.kind == "Name" && n.ctx == Some(Ctx::Load) {
            if let Some(id) = &n.ident {
                set.insert(id.clone());
            }
        }
    });
    set.into_iter().collect()
}

impl FlowWalker {
    fn define(&mut self, name: &str) {
        self.defined.insert(name.to_owned());
    }

    fn edge(&mut self, var: &str, relation: &'static str, parents: Vec<String>) {
        self.edges.push(FlowEdge { var: var.to_owned(), relation, parents });
    }

    fn uses_all<'a>(&mut self, nodes: impl IntoIterator<Item = &'a SyntaxNode>) {
        for n in nodes {
            self.uses(n);
        }
    }

    /// Binds an assignment target to the names its value was computed from.
    fn bind(&mut self, target: &SyntaxNode, parents: &[String]) {
        match target.kind {
            "Name" => {
                let id = target.ident.as_deref().unwrap_or_default();
                self.edge(id, "computedFrom", parents.to_vec());
                self.define(id);
            }
            "Tuple" | "List" => {
                for c in &target.children {
                    self.bind(c, parents);
                }
            }
            "Starred" | "Attribute" => self.bind_children(target, parents),
            "Subscript" => {
                self.uses_all(target.field_children("slice"));
                self.bind_children(target, parents);
            }
            _ => self.uses(target),
        }
    }

    fn bind_children(&mut self, target: &SyntaxNode, parents: &[String]) {
        for v in target.field_children("value") {
            self.bind(v, parents);
        }
    }

    fn uses(&mut self, node: &SyntaxNode) {
        match node.kind {
            "Name" => {
                let id = node.ident.as_deref().unwrap_or_default();
                match node.ctx {
                    Some(Ctx::Load) if self.defined.contains(id) => self.edge(id, "comesFrom", vec![id.to_owned()]),
                    Some(Ctx::Store) => self.define(id),
                    _ => {}
                }
            }
            "Assign" => {
                let value = node.first_field("value").expect("assign value");
                self.uses(value);
                let parents = load_names(value);
                for t in node.field_children("targets") {
                    self.bind(t, &parents);
                }
            }
            "AugAssign" => {
                let value = node.first_field("value").expect("augassign value");
                let target = node.first_field("target").expect("augassign target");
                self.uses(value);
                let mut parents: BTreeSet<String> = load_names(value).into_iter().collect();
                parents.extend(load_names(target));
                if let Some(id) = target.root_name() {
                    parents.insert(id.to_owned());
                }
                self.bind(target, &parents.into_iter().collect::<Vec<_>>());
            }
            "AnnAssign" => {
                let target = node.first_field("target").expect("annassign target");
                match node.first_field("value") {
                    Some(value) => {
                        self.uses(value);
                        self.uses_all(node.field_children("annotation"));
                        self.bind(target, &load_names(value));
                    }
                    None => self.uses_all(node.field_children("annotation")),
                }
            }
            "NamedExpr" => {
                let value = node.first_field("value").expect("namedexpr value");
                self.uses(value);
                self.bind(node.first_field("target").expect("namedexpr target"), &load_names(value));
            }
            "For" | "AsyncFor" | "comprehension" => {
                let iter = node.first_field("iter").expect("iter");
                self.uses(iter);
                self.bind(node.first_field("target").expect("target"), &load_names(iter));
                for c in node.children.iter().filter(|c| c.field != "iter" && c.field != "target") {
                    self.uses(c);
                }
            }
            "withitem" => {
                let ctx = node.first_field("context_expr").expect("context_expr");
                self.uses(ctx);
                if let Some(v) = node.first_field("optional_vars") {
                    self.bind(v, &load_names(ctx));
                }
            }
            "alias" => {
                let name = node.asname.as_deref().or(node.ident.as_deref()).unwrap_or_default();
                self.define(name.split('.').next().unwrap_or_default());
            }
            _ => {
                self.uses_all(&node.children);
                match node.kind {
                    "FunctionDef" | "AsyncFunctionDef" | "ClassDef" | "arg" | "ExceptHandler" | "MatchAs" | "MatchStar" => {
                        if let Some(id) = &node.ident {
                            self.define(id);
                        }
                    }
                    _ => {}
                }
            }
        }
    }
}

/// Def-use edges in evaluation order, variables renamed to `var_i`.
pub fn dataflow_edges(root: &SyntaxNode) -> Vec<FlowEdge> {
    let mut w = FlowWalker { defined: BTreeSet::new(), edges: Vec::new() };
    w.uses(root);
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    let mut rename = |n: &str| -> String {
        let next = format!("var_{}", names.len());
        names.entry(n.to_owned()).or_insert(next).clone()
    };
    w.edges
        .into_iter()
        .map(|e| {
            let var = rename(&e.var);
            let parents = e.parents.iter().map(|p| rename(p)).collect();
            FlowEdge { var, relation: e.relation, parents }
        })
        .collect()
}

pub fn dataflow_match(pred: &[FlowEdge], gold: &[FlowEdge]) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    let mut pool: HashMap<&FlowEdge, usize> = HashMap::new();
    for e in pred {
        *pool.entry(e).or_insert(0) += 1;
    }
    let mut hit = 0usize;
    for e in gold {
        if let Some(c) = pool.get_mut(e).filter(|c| **c > 0) {
            *c -= 1;
            hit += 1;
        }
    }
    Some(hit as f64 / gold.len() as f64)
}

pub fn codebleu(pred: &str, gold: &str) -> Result<CodeBleu, GoldUnparseable> {
    let gold_tree = parse_source(gold).map_err(|e| GoldUnparseable(e.to_string()))?;
    let pred_tree = parse_source(pred).ok();
    let (pt, gt) = (ngram_tokens(pred), ngram_tokens(gold));
    let gold_subtrees = subtrees(&gold_tree.root);
    let gold_edges = dataflow_edges(&gold_tree.root);
    let (ast, flow) = match &pred_tree {
        Some(p) => (ast_match(&subtrees(&p.root), &gold_subtrees), dataflow_match(&dataflow_edges(&p.root), &gold_edges)),
        None => ((!gold_subtrees.is_empty()).then_some(0.0), (!gold_edges.is_empty()).then_some(0.0)),
    };
    let components = CodeBleuComponents {
        ngram: ngram_match(&pt, &gt),
        weighted_ngram: weighted_ngram_match(&pt, &gt),
        ast_match: ast,
        dataflow_match: flow,
    };
    let parts: Vec<f64> = [Some(components.ngram), Some(components.weighted_ngram), ast, flow].into_iter().flatten().collect();
    Ok(CodeBleu { score: parts.iter().sum::<f64>() / parts.len() as f64, components })
}
