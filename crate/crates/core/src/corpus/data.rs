use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use super::{CorpusError, ExclusionReason, Notebook};
use crate::lifecycle::{ApiCatalog, NotebookAnalysis};
use crate::pyast::{LineIndex, SyntaxNode};

pub const DATA_EXTENSIONS: &[&str] = &["csv", "json", "xlsx", "pickle", "h5", "sql", "html", "tsv", "txt"];

/// Where a path expression sits in a cell's original text. `line`/columns
/// are 0-based; the span may cross lines.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathSite {
    pub cell: usize,
    pub start: (usize, usize),
    pub end: (usize, usize),
    /// The site is a whole argument expression (`os.path.join(d, 'x.csv')`),
    /// not a bare literal.
    pub composite: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataFileRef {
    pub raw_path: String,
    pub resolved_path: Option<PathBuf>,
    pub exists: bool,
    /// Appears as the path argument of a catalog loading call.
    pub loading: bool,
    pub sites: Vec<PathSite>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub refs: Vec<DataFileRef>,
    /// A loading call whose path argument contains no usable literal.
    pub non_literal_loads: usize,
}

pub fn is_candidate(nb: &Notebook, catalog: &ApiCatalog) -> bool {
    let python3 = match &nb.kernel_language_version {
        None => true,
        Some(v) => v.trim().starts_with('3'),
    };
    if !python3 {
        return false;
    }
    let (analysis, _) = NotebookAnalysis::lenient(nb);
    analysis.cells.iter().flat_map(|c| c.calls.iter().flatten()).any(|call| analysis.is_loading_call(call, catalog))
}

fn looks_like_data_file(s: &str) -> bool {
    if s.is_empty() || s.contains("://") || s.starts_with('/') || s.chars().any(char::is_whitespace) {
        return false;
    }
    let lower = s.to_ascii_lowercase();
    DATA_EXTENSIONS.iter().any(|e| lower.ends_with(&format!(".{e}")))
}

fn string_literals(node: &SyntaxNode) -> Vec<&SyntaxNode> {
    let mut out = Vec::new();
    collect_strings(node, &mut out);
    out
}

fn collect_strings<'a>(node: &'a SyntaxNode, out: &mut Vec<&'a SyntaxNode>) {
    if node.str_literal().is_some() {
        out.push(node);
    }
    for c in &node.children {
        collect_strings(c, out);
    }
}

const PATH_KEYWORDS: &[&str] = &["filepath_or_buffer", "io", "path", "path_or_buf", "path_or_buffer", "sql", "con"];

fn path_argument(call: &SyntaxNode) -> Option<&SyntaxNode> {
    call.field_children("args").next().or_else(|| {
        call.field_children("keywords")
            .find(|k| k.ident.as_deref().is_some_and(|n| PATH_KEYWORDS.contains(&n)))
            .and_then(|k| k.first_field("value"))
    })
}

struct Collector<'a> {
    cell: usize,
    lines: &'a LineIndex,
    found: BTreeMap<String, DataFileRef>,
    order: Vec<String>,
    non_literal_loads: usize,
}

impl Collector<'_> {
    fn site(&self, node: &SyntaxNode, composite: bool) -> Option<PathSite> {
        let (s, e) = node.span?;
        Some(PathSite { cell: self.cell, start: self.lines.position(s), end: self.lines.position(e), composite })
    }

    fn add(&mut self, raw: &str, site: Option<PathSite>, loading: bool) {
        let entry = self.found.entry(raw.to_owned()).or_insert_with(|| {
            self.order.push(raw.to_owned());
            DataFileRef { raw_path: raw.to_owned(), resolved_path: None, exists: false, loading, sites: Vec::new() }
        });
        entry.loading |= loading;
        if let Some(site) = site {
            if !entry.sites.contains(&site) {
                entry.sites.push(site);
            }
        }
    }
}

/// String literals handed to loading calls, plus any literal that looks like
/// a relative data-file path. Composite path expressions contribute their
/// innermost literal.
pub fn extract_data_paths(nb: &Notebook, catalog: &ApiCatalog) -> DataPaths {
    let (analysis, _) = NotebookAnalysis::lenient(nb);
    let mut found = BTreeMap::new();
    let mut order = Vec::new();
    let mut non_literal_loads = 0;
    for cell in &analysis.cells {
        let mut col = Collector {
            cell: cell.index,
            lines: cell.tree.line_index(),
            found: std::mem::take(&mut found),
            order: std::mem::take(&mut order),
            non_literal_loads,
        };
        let mut claimed: BTreeSet<(usize, usize)> = BTreeSet::new();
        for (si, stmt) in cell.tree.statements().iter().enumerate() {
            let mut loading_nodes = Vec::new();
            let calls = &cell.calls[si];
            let mut idx = 0;
            // calls_in_stmt is post-order over Call nodes; walk the same way
            post_order_calls(stmt, &mut |node| {
                if let Some(call) = calls.get(idx) {
                    if analysis.is_loading_call(call, catalog) {
                        loading_nodes.push(node);
                    }
                }
                idx += 1;
            });
            for node in loading_nodes {
                let Some(arg) = path_argument(node) else {
                    col.non_literal_loads += 1;
                    continue;
                };
                if let Some(s) = arg.str_literal() {
                    claimed.extend(arg.span);
                    let site = col.site(arg, false);
                    col.add(s, site, true);
                    continue;
                }
                let literals = string_literals(arg);
                let pick = literals
                    .iter()
                    .rev()
                    .find(|l| looks_like_data_file(l.str_literal().unwrap_or("").trim_start_matches('/')))
                    .or(literals.last());
                match pick {
                    Some(lit) => {
                        for l in &literals {
                            claimed.extend(l.span);
                        }
                        let raw = lit.str_literal().unwrap_or("").trim_start_matches('/');
                        let site = col.site(arg, true);
                        col.add(raw, site, true);
                    }
                    None => col.non_literal_loads += 1,
                }
            }
            for lit in string_literals(stmt) {
                let s = lit.str_literal().unwrap_or("");
                if looks_like_data_file(s) && !lit.span.is_some_and(|sp| claimed.contains(&sp)) {
                    let site = col.site(lit, false);
                    col.add(s, site, false);
                }
            }
        }
        found = col.found;
        order = col.order;
        non_literal_loads = col.non_literal_loads;
    }
    let refs = order.into_iter().filter_map(|k| found.remove(&k)).collect();
    DataPaths { refs, non_literal_loads }
}

fn post_order_calls<'a>(n: &'a SyntaxNode, f: &mut dyn FnMut(&'a SyntaxNode)) {
    for c in &n.children {
        post_order_calls(c, f);
    }
    if n.kind == "Call" {
        f(n);
    }
}

fn non_empty_file(p: &Path) -> bool {
    std::fs::metadata(p).map(|m| m.is_file() && m.len() > 0).unwrap_or(false)
}

/// Resolves each reference: first against `dirs` in order, then by a unique
/// basename match anywhere under `repo_root`.
pub fn resolve_data_paths(refs: &mut [DataFileRef], dirs: &[&Path], repo_root: Option<&Path>) {
    let mut by_name: Option<BTreeMap<String, Vec<PathBuf>>> = None;
    for r in refs.iter_mut() {
        let direct = dirs.iter().map(|d| d.join(&r.raw_path)).find(|p| non_empty_file(p));
        let resolved = direct.or_else(|| {
            let root = repo_root?;
            let index = by_name.get_or_insert_with(|| basename_index(root));
            let base = Path::new(&r.raw_path).file_name()?.to_str()?;
            match index.get(base).map(Vec::as_slice) {
                Some([only]) if non_empty_file(only) => Some(only.clone()),
                _ => None,
            }
        });
        r.exists = resolved.is_some();
        r.resolved_path = resolved;
    }
}

fn basename_index(root: &Path) -> BTreeMap<String, Vec<PathBuf>> {
    let mut out: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
    for entry in WalkDir::new(root).sort_by_file_name().into_iter().filter_map(Result::ok) {
        if entry.file_type().is_file() {
            if let Some(name) = entry.file_name().to_str() {
                out.entry(name.to_owned()).or_default().push(entry.path().to_path_buf());
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Consolidated {
    pub notebook: Notebook,
    /// (source file, flat name inside the data directory)
    pub files: Vec<(PathBuf, String)>,
    pub excluded: Option<ExclusionReason>,
}

fn short_hash(p: &Path) -> String {
    let digest = Sha256::digest(p.to_string_lossy().as_bytes());
    hex::encode(&digest[..4])
}

fn flat_names(paths: &BTreeSet<PathBuf>) -> Result<BTreeMap<PathBuf, String>, CorpusError> {
    let mut groups: BTreeMap<String, Vec<&PathBuf>> = BTreeMap::new();
    for p in paths {
        let base = p.file_name().map(|b| b.to_string_lossy().into_owned()).unwrap_or_default();
        groups.entry(base).or_default().push(p);
    }
    let mut out = BTreeMap::new();
    let mut taken = BTreeSet::new();
    for (base, members) in groups {
        for p in members.iter().copied() {
            let name = if members.len() == 1 {
                base.clone()
            } else {
                let path = Path::new(&base);
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                match path.extension() {
                    Some(ext) => format!("{stem}-{}.{}", short_hash(p), ext.to_string_lossy()),
                    None => format!("{stem}-{}", short_hash(p)),
                }
            };
            if !taken.insert(name.clone()) {
                return Err(CorpusError::FileCollision(name));
            }
            out.insert(p.clone(), name);
        }
    }
    Ok(out)
}

fn quote_like(original: &str, body: &str) -> String {
    let prefix: String = original.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    let rest = &original[prefix.len()..];
    let quote = if rest.starts_with("\"\"\"") {
        "\"\"\""
    } else if rest.starts_with("'''") {
        "'''"
    } else if rest.starts_with('"') {
        "\""
    } else {
        "'"
    };
    let keep_prefix: String = prefix.chars().filter(|c| matches!(c, 'r' | 'R' | 'u' | 'U')).collect();
    format!("{keep_prefix}{quote}{body}{quote}")
}

/// Rewrites every resolvable path site to the file's flat name and lists
/// the copies to make. Nothing is written to disk.
pub fn consolidate_files(nb: &Notebook, paths: &DataPaths) -> Result<Consolidated, CorpusError> {
    let resolved: BTreeSet<PathBuf> = paths.refs.iter().filter_map(|r| r.resolved_path.clone()).collect();
    let names = flat_names(&resolved)?;
    let excluded = if paths.non_literal_loads > 0 {
        Some(ExclusionReason::NonLiteralPath)
    } else if paths.refs.iter().any(|r| r.loading && !r.exists) {
        Some(ExclusionReason::MissingDataFile)
    } else if !paths.refs.iter().any(|r| r.exists) {
        Some(ExclusionReason::NoDataPaths)
    } else {
        None
    };

    let mut edits: BTreeMap<usize, Vec<(PathSite, String)>> = BTreeMap::new();
    for r in &paths.refs {
        let Some(name) = r.resolved_path.as_ref().and_then(|p| names.get(p)) else { continue };
        for site in &r.sites {
            edits.entry(site.cell).or_default().push((site.clone(), name.clone()));
        }
    }
    let mut notebook = nb.clone();
    for (cell, mut list) in edits {
        let source = nb.cells[cell].source.clone();
        let index = LineIndex::new(&source);
        list.sort_by(|a, b| b.0.start.cmp(&a.0.start));
        let mut text = source.clone();
        for (site, name) in list {
            let from = index.offset(site.start.0, site.start.1);
            let to = index.offset(site.end.0, site.end.1);
            let Some(original) = source.get(from..to) else { continue };
            let replacement = if site.composite { format!("'{name}'") } else { quote_like(original, &name) };
            text.replace_range(from..to, &replacement);
        }
        if text != source {
            notebook.set_source(cell, text);
        }
    }
    let files = names.into_iter().collect();
    Ok(Consolidated { notebook, files, excluded })
}
