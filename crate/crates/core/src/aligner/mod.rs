//! Turns lifecycle spans into contextualized examples: target selection,
//! code and text context, data snapshots and dataset finalization.

mod context;
mod finalize;
mod segment;
mod snapshot;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Notebook;
use crate::lifecycle::{ApiCatalog, Coord, LifecycleSpan, NotebookAnalysis};

pub use context::{build_code_context, build_text_context, context_code_cells, is_builtin, CodeContext, DS_LIBRARIES};
pub use finalize::{finalize, normalize_code, validate, FinalizeReport, Violation};
pub use segment::{find_inspections, is_inspection, select_targets, TargetSegment};
pub use snapshot::{Column, DataframeSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContextKind {
    #[serde(rename = "code")]
    Code,
    #[serde(rename = "markdown")]
    Markdown,
    #[serde(rename = "synthesized-deps")]
    Deps,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextCell {
    pub kind: ContextKind,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    /// Fixed 94/3/3 assignment from a hash of the notebook id.
    pub fn for_notebook(notebook_id: &str) -> Split {
        let digest = Sha256::digest(notebook_id.as_bytes());
        let bucket = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes")) % 100;
        match bucket {
            0..=93 => Split::Train,
            94..=96 => Split::Dev,
            _ => Split::Test,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCoords {
    pub begin: Coord,
    pub end: Coord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub notebook: String,
    pub span: String,
    pub segment: SegmentCoords,
    pub target_var: String,
    /// Notebook cell index behind each context cell; null for synthesized
    /// cells.
    pub context_sources: Vec<Option<usize>>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WranglingExample {
    pub id: String,
    pub split: Split,
    pub context: Vec<ContextCell>,
    pub target_code: String,
    pub input_frame: DataframeSnapshot,
    pub output_frame: DataframeSnapshot,
    pub provenance: Provenance,
}

/// An example waiting for its data context.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingExample {
    pub id: String,
    pub split: Split,
    pub context: Vec<ContextCell>,
    pub target_code: String,
    pub provenance: Provenance,
    /// Sanitized code cells that run before the target during replay.
    pub replay_cells: Vec<String>,
}

impl PendingExample {
    pub fn with_frames(self, input_frame: DataframeSnapshot, output_frame: DataframeSnapshot) -> WranglingExample {
        WranglingExample {
            id: self.id,
            split: self.split,
            context: self.context,
            target_code: self.target_code,
            input_frame,
            output_frame,
            provenance: self.provenance,
        }
    }
}

/// Every example candidate a span yields, in segment order.
pub fn build_examples(nb: &Notebook, analysis: &NotebookAnalysis, span: &LifecycleSpan, catalog: &ApiCatalog) -> Vec<PendingExample> {
    let inspections = find_inspections(analysis, span, catalog);
    let split = Split::for_notebook(&nb.id);
    select_targets(analysis, span, &inspections)
        .into_iter()
        .map(|seg| {
            let code = build_code_context(analysis, &seg, span);
            let (context, context_sources) = build_text_context(nb, &code, &seg);
            let mut notes = span.notes.clone();
            if !code.unresolved.is_empty() {
                notes.push(format!("unresolved:{}", code.unresolved.join(",")));
            }
            PendingExample {
                id: format!("{}:{}:{}-{}", nb.id, span.id(), seg.begin, seg.end),
                split,
                context,
                target_code: seg.merged_source.clone(),
                provenance: Provenance {
                    notebook: nb.id.clone(),
                    span: span.id(),
                    segment: SegmentCoords { begin: seg.begin, end: seg.end },
                    target_var: span.target_var.clone(),
                    context_sources,
                    notes,
                },
                replay_cells: code.replay_cells,
            }
        })
        .collect()
}
