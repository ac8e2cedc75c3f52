//! API databases that drive stage identification.
//!
//! The on-disk form is three flat arrays of qualified names. Initialization
//! entries are sorted into the four categories by shape: operator tokens, a
//! capitalized constructor (`pd.DataFrame`), a loader (`read_*`/`load_*`), or
//! otherwise a frame manipulation.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const DEFAULT_CATALOG: &str = include_str!("../../catalog/default.json");

/// Conventional import aliases and the package each one stands for.
pub const CONVENTIONAL_ALIASES: &[(&str, &str)] = &[
    ("pd", "pandas"),
    ("np", "numpy"),
    ("plt", "matplotlib.pyplot"),
    ("mpl", "matplotlib"),
    ("sns", "seaborn"),
    ("stats", "scipy.stats"),
    ("sp", "scipy"),
    ("sklearn", "sklearn"),
];

pub fn expand_alias(alias: &str) -> Option<&'static str> {
    CONVENTIONAL_ALIASES.iter().find(|(a, _)| *a == alias).map(|(_, p)| *p)
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid catalog JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("catalog entry {0:?} appears in more than one API set")]
    Overlap(String),
    #[error("catalog entry {0:?} is not a qualified name or operator token")]
    BadEntry(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub initialization: Vec<String>,
    pub utilization: Vec<String>,
    pub inspection: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ApiName {
    /// Alias or package as written in the catalog (`pd`, `sklearn`).
    pub prefix: String,
    pub name: String,
}

impl ApiName {
    fn parse(entry: &str) -> Option<Self> {
        let (prefix, name) = entry.rsplit_once('.')?;
        let ident = |s: &str| !s.is_empty() && s.split('.').all(|p| !p.is_empty() && p.chars().all(|c| c.is_alphanumeric() || c == '_'));
        (ident(prefix) && ident(name)).then(|| ApiName { prefix: prefix.to_owned(), name: name.to_owned() })
    }

    /// Top-level package the prefix refers to.
    pub fn package_root(&self) -> &str {
        let full = expand_alias(&self.prefix).unwrap_or(&self.prefix);
        full.split('.').next().unwrap_or(full)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitCategory {
    Definition,
    Loading,
    Manipulation,
    Operation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FrameOp {
    Add,
    Sub,
    Mult,
    Div,
    Subscript,
}

impl FrameOp {
    fn parse(token: &str) -> Option<Self> {
        Some(match token {
            "+" => FrameOp::Add,
            "-" => FrameOp::Sub,
            "*" => FrameOp::Mult,
            "/" => FrameOp::Div,
            "[]" => FrameOp::Subscript,
            _ => return None,
        })
    }

    pub fn from_binop(kind: &str) -> Option<Self> {
        Some(match kind {
            "Add" => FrameOp::Add,
            "Sub" => FrameOp::Sub,
            "Mult" => FrameOp::Mult,
            "Div" => FrameOp::Div,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiCatalog {
    pub definition: BTreeSet<ApiName>,
    pub loading: BTreeSet<ApiName>,
    pub manipulation: BTreeSet<ApiName>,
    pub operations: BTreeSet<FrameOp>,
    pub utilization: BTreeSet<ApiName>,
    /// Method names that display a frame (`head`, `tail`).
    pub inspection_methods: BTreeSet<String>,
    /// A cell-final bare name displays the frame.
    pub bare_display: bool,
}

impl Default for ApiCatalog {
    fn default() -> Self {
        ApiCatalog::from_json(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }
}

impl ApiCatalog {
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        Self::from_file_contents(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn default_json() -> &'static str {
        DEFAULT_CATALOG
    }

    pub fn from_file_contents(file: CatalogFile) -> Result<Self, CatalogError> {
        let mut seen = BTreeSet::new();
        for entry in file.initialization.iter().chain(&file.utilization).chain(&file.inspection) {
            let dup_in_same_list = |list: &Vec<String>| list.iter().filter(|e| *e == entry).count() > 1;
            if !seen.insert(entry.clone())
                && !(dup_in_same_list(&file.initialization) || dup_in_same_list(&file.utilization) || dup_in_same_list(&file.inspection))
            {
                return Err(CatalogError::Overlap(entry.clone()));
            }
        }

        let mut catalog = ApiCatalog {
            definition: BTreeSet::new(),
            loading: BTreeSet::new(),
            manipulation: BTreeSet::new(),
            operations: BTreeSet::new(),
            utilization: BTreeSet::new(),
            inspection_methods: BTreeSet::new(),
            bare_display: false,
        };
        for entry in &file.initialization {
            if let Some(op) = FrameOp::parse(entry) {
                catalog.operations.insert(op);
                continue;
            }
            let api = ApiName::parse(entry).ok_or_else(|| CatalogError::BadEntry(entry.clone()))?;
            let bucket = if api.name.starts_with(|c: char| c.is_ascii_uppercase()) {
                &mut catalog.definition
            } else if api.name.starts_with("read_") || api.name.starts_with("load_") {
                &mut catalog.loading
            } else {
                &mut catalog.manipulation
            };
            bucket.insert(api);
        }
        for entry in &file.utilization {
            let api = ApiName::parse(entry).ok_or_else(|| CatalogError::BadEntry(entry.clone()))?;
            catalog.utilization.insert(api);
        }
        for entry in &file.inspection {
            match entry.as_str() {
                "<display>" => catalog.bare_display = true,
                m if m.starts_with('.') && m.len() > 1 => {
                    catalog.inspection_methods.insert(m[1..].to_owned());
                }
                other => return Err(CatalogError::BadEntry(other.to_owned())),
            }
        }
        Ok(catalog)
    }

    pub fn category_of(&self, api_root: &str, name: &str) -> Option<InitCategory> {
        let hit = |set: &BTreeSet<ApiName>| set.iter().any(|a| a.name == name && a.package_root() == api_root);
        if hit(&self.definition) {
            Some(InitCategory::Definition)
        } else if hit(&self.loading) {
            Some(InitCategory::Loading)
        } else if hit(&self.manipulation) {
            Some(InitCategory::Manipulation)
        } else {
            None
        }
    }

    pub fn is_manipulation_method(&self, name: &str) -> bool {
        self.manipulation.iter().any(|a| a.name == name)
    }

    pub fn utilization_names(&self) -> impl Iterator<Item = &str> {
        self.utilization.iter().map(|a| a.name.as_str())
    }

    pub fn utilization_packages(&self) -> BTreeSet<&str> {
        self.utilization.iter().map(ApiName::package_root).collect()
    }

    pub fn is_utilization_name(&self, name: &str) -> bool {
        self.utilization.iter().any(|a| a.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalog_shape() {
        let c = ApiCatalog::default();
        assert_eq!(c.definition.len(), 2);
        assert_eq!(c.loading.len(), 8);
        assert_eq!(c.manipulation.len(), 11);
        assert_eq!(c.operations.len(), 5);
        assert_eq!(c.utilization.len(), 15 + 28 + 3 + 14);
        assert!(c.bare_display);
        assert_eq!(c.inspection_methods.iter().map(String::as_str).collect::<Vec<_>>(), vec!["head", "tail"]);
        assert_eq!(c.category_of("pandas", "read_excel"), Some(InitCategory::Loading));
        assert_eq!(c.category_of("pandas", "merge"), Some(InitCategory::Manipulation));
        assert_eq!(c.category_of("pandas", "DataFrame"), Some(InitCategory::Definition));
        assert_eq!(c.category_of("numpy", "merge"), None);
    }

    #[test]
    fn row_order_does_not_matter() {
        let mut file: CatalogFile = serde_json::from_str(DEFAULT_CATALOG).unwrap();
        file.initialization.reverse();
        file.utilization.reverse();
        file.inspection.reverse();
        assert_eq!(ApiCatalog::from_file_contents(file).unwrap(), ApiCatalog::default());
    }

    #[test]
    fn overlapping_sets_are_rejected() {
        let file = CatalogFile { initialization: vec!["pd.read_csv".into()], utilization: vec!["pd.read_csv".into()], inspection: vec![] };
        assert!(matches!(ApiCatalog::from_file_contents(file), Err(CatalogError::Overlap(_))));
    }

    #[test]
    fn bad_entries_are_rejected() {
        let file = CatalogFile { initialization: vec!["%".into()], utilization: vec![], inspection: vec![] };
        assert!(matches!(ApiCatalog::from_file_contents(file), Err(CatalogError::BadEntry(_))));
    }

    #[test]
    fn extension_with_other_libraries() {
        let file = CatalogFile { initialization: vec!["sns.load_dataset".into()], utilization: vec![], inspection: vec![] };
        let c = ApiCatalog::from_file_contents(file).unwrap();
        assert_eq!(c.category_of("seaborn", "load_dataset"), Some(InitCategory::Loading));
    }
}
