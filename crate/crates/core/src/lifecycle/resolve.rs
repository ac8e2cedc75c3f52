use std::collections::{BTreeMap, BTreeSet};

use crate::pyast::SyntaxNode;

use super::catalog::expand_alias;

/// Names bound by import statements, mapped to the dotted module path
/// (or module attribute) they stand for.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImportTable {
    bindings: BTreeMap<String, String>,
}

impl ImportTable {
    pub fn record(&mut self, stmt: &SyntaxNode) {
        match stmt.kind {
            "Import" => {
                for a in &stmt.children {
                    let Some(path) = a.ident.as_deref() else { continue };
                    match &a.asname {
                        Some(alias) => self.bindings.insert(alias.clone(), path.to_owned()),
                        None => {
                            let head = path.split('.').next().unwrap_or(path);
                            self.bindings.insert(head.to_owned(), head.to_owned())
                        }
                    };
                }
            }
            "ImportFrom" => {
                let module = stmt.ident.as_deref().unwrap_or("").trim_start_matches('.');
                for a in &stmt.children {
                    let Some(name) = a.ident.as_deref().filter(|n| *n != "*") else { continue };
                    let bound = a.asname.clone().unwrap_or_else(|| name.to_owned());
                    let path = if module.is_empty() { name.to_owned() } else { format!("{module}.{name}") };
                    self.bindings.insert(bound, path);
                }
            }
            _ => {}
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.bindings.get(name).map(String::as_str)
    }

    /// Top-level packages imported anywhere.
    pub fn packages(&self) -> BTreeSet<&str> {
        self.bindings.values().map(|p| p.split('.').next().unwrap_or(p)).collect()
    }
}

/// What a callee refers to once aliases are expanded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    /// Fully qualified module attribute: `pandas.read_csv`.
    Module(String),
    /// Method on a value (`df.dropna`, `pd.read_csv().head`).
    Object,
    /// Bare name defined in the notebook itself.
    Local,
    /// Bare name bound nowhere we can see (star import, builtin).
    Unknown,
}

impl Origin {
    pub fn package_root(&self) -> Option<&str> {
        match self {
            Origin::Module(p) => p.split('.').next(),
            _ => None,
        }
    }
}

/// Resolves a rendered callee (`pd.read_csv`, `df[].fillna`) against the
/// import table. `locals` are names the notebook binds other than by import.
pub fn resolve_callee(qualified_name: &str, imports: &ImportTable, locals: &BTreeSet<String>) -> Origin {
    let segments: Vec<&str> = qualified_name.split('.').collect();
    if segments.iter().any(|s| s.contains("()") || s.contains("[]") || s.contains('<')) {
        return Origin::Object;
    }
    let head = segments[0];
    let tail = &segments[1..];
    let join = |base: &str| {
        let mut p = base.to_owned();
        for s in tail {
            p.push('.');
            p.push_str(s);
        }
        p
    };
    if let Some(path) = imports.get(head) {
        return Origin::Module(join(path));
    }
    if let Some(path) = expand_alias(head).filter(|_| !locals.contains(head)) {
        return Origin::Module(join(path));
    }
    match (tail.is_empty(), locals.contains(head)) {
        (true, true) => Origin::Local,
        (true, false) => Origin::Unknown,
        (false, _) => Origin::Object,
    }
}

pub fn last_segment(path: &str) -> &str {
    path.rsplit('.').next().unwrap_or(path)
}
