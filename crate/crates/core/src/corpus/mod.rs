//! Notebook ingestion, candidate filtering and data-file consolidation.

mod data;
mod fetch;
mod notebook;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

pub use data::{
    consolidate_files, extract_data_paths, is_candidate, resolve_data_paths, Consolidated, DataFileRef, DataPaths, PathSite,
    DATA_EXTENSIONS,
};
pub use fetch::fetch_remote;
pub use notebook::{notebook_from_cells, parse_notebook, Cell, CellKind, Notebook};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed notebook: {0}")]
    MalformedNotebook(String),
    #[error("unsupported nbformat major version {0}")]
    UnsupportedFormat(u64),
    #[error("two data files map to the flat name {0}")]
    FileCollision(String),
    #[error("network error: {0}")]
    NetworkError(String),
    #[error("archive error: {0}")]
    ArchiveError(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Malformed,
    UnsupportedFormat,
    NotCandidate,
    Unparseable,
    NonLiteralPath,
    MissingDataFile,
    NoDataPaths,
    NotSelfContained,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::Malformed => "malformed",
            ExclusionReason::UnsupportedFormat => "unsupported_format",
            ExclusionReason::NotCandidate => "not_candidate",
            ExclusionReason::Unparseable => "unparseable",
            ExclusionReason::NonLiteralPath => "non_literal_path",
            ExclusionReason::MissingDataFile => "missing_data_file",
            ExclusionReason::NoDataPaths => "no_data_paths",
            ExclusionReason::NotSelfContained => "not_self_contained",
        }
    }
}

/// One line of the corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    pub candidate: bool,
    pub excluded: Option<ExclusionReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// A notebook file found under the corpus root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NotebookFile {
    pub id: String,
    pub path: PathBuf,
    /// First path component under the corpus root.
    pub repo_root: PathBuf,
}

/// Stable id for a notebook: its path under the corpus root without the
/// extension, separators replaced by `__`.
pub fn notebook_id(corpus: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(corpus).unwrap_or(path).with_extension("");
    rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("__")
}

/// Every `.ipynb` under `corpus`, sorted by path. Checkpoint copies are skipped.
pub fn discover_notebooks(corpus: &Path) -> Vec<NotebookFile> {
    let mut out: Vec<NotebookFile> = WalkDir::new(corpus)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter(|e| e.path().extension().is_some_and(|x| x == "ipynb"))
        .filter(|e| !e.path().components().any(|c| c.as_os_str() == ".ipynb_checkpoints"))
        .map(|e| {
            let path = e.path().to_path_buf();
            let rel = path.strip_prefix(corpus).unwrap_or(&path);
            let repo_root = match rel.components().count() {
                0 | 1 => corpus.to_path_buf(),
                _ => corpus.join(rel.components().next().unwrap()),
            };
            NotebookFile { id: notebook_id(corpus, &path), path, repo_root }
        })
        .collect();
    out.sort_by(|a, b| a.path.cmp(&b.path));
    out
}
