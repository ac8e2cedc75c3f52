//! Client side of the sandbox: NDJSON requests to worker processes, a
//! content-addressed response cache, and the trait the pipeline calls.

mod cache;
mod pool;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aligner::DataframeSnapshot;

pub use cache::{CachedReplayer, ReplayCache};
pub use pool::SandboxPool;

pub const DEFAULT_TIMEOUT_S: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Replay,
    Execute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRequest {
    pub op: Op,
    pub cells: Vec<String>,
    pub target: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub candidate: Option<String>,
    pub target_var: String,
    pub data_dir: PathBuf,
    pub timeout_s: u64,
    pub max_rows: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    Exception,
    Timeout,
    FrameMismatch,
    MissingVariable,
    NotATable,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Ok => "ok",
            ExecStatus::Exception => "exception",
            ExecStatus::Timeout => "timeout",
            ExecStatus::FrameMismatch => "frame_mismatch",
            ExecStatus::MissingVariable => "missing_variable",
            ExecStatus::NotATable => "not_a_table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayResponse {
    pub status: ExecStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub input_frame: Option<DataframeSnapshot>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub output_frame: Option<DataframeSnapshot>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub detail: Option<String>,
}

impl ReplayResponse {
    pub fn status_only(status: ExecStatus, detail: impl Into<String>) -> Self {
        ReplayResponse { status, input_frame: None, output_frame: None, detail: Some(detail.into()) }
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("sandbox protocol error: {0}")]
    Protocol(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub trait Replayer: Send + Sync {
    fn run(&self, req: &ReplayRequest) -> Result<ReplayResponse, ReplayError>;
}

/// Stable key for a request: everything that can change the answer, with
/// the data directory replaced by the digests of the files inside it.
pub fn request_key(req: &ReplayRequest) -> String {
    #[derive(Serialize)]
    struct Keyed<'a> {
        op: Op,
        cells: &'a [String],
        target: &'a str,
        candidate: Option<&'a str>,
        target_var: &'a str,
        max_rows: Option<usize>,
        data: BTreeMap<String, String>,
    }
    let keyed = Keyed {
        op: req.op,
        cells: &req.cells,
        target: &req.target,
        candidate: req.candidate.as_deref(),
        target_var: &req.target_var,
        max_rows: req.max_rows,
        data: data_digests(&req.data_dir),
    };
    let canonical = serde_json::to_vec(&keyed).expect("serializable");
    hex::encode(Sha256::digest(&canonical))
}

fn data_digests(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let Ok(entries) = std::fs::read_dir(dir) else { return out };
    for entry in entries.filter_map(Result::ok) {
        let path = entry.path();
        if let (Some(name), Ok(bytes)) = (path.file_name().and_then(|n| n.to_str()), std::fs::read(&path)) {
            out.insert(name.to_owned(), hex::encode(Sha256::digest(&bytes)));
        }
    }
    out
}
