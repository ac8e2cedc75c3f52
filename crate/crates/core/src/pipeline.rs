//! End-to-end mining: corpus → analysis → examples → replay → finalize.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::aligner::{build_examples, finalize, FinalizeReport, PendingExample, WranglingExample};
use crate::corpus::{
    consolidate_files, discover_notebooks, extract_data_paths, is_candidate, parse_notebook, resolve_data_paths, CorpusError, CorpusRecord,
    ExclusionReason, Notebook, NotebookFile,
};
use crate::lifecycle::{extract_lifecycles, ApiCatalog, NotebookAnalysis};
use crate::metrics::ReplaySource;
use crate::parallel::map_ordered;
use crate::replay::{ExecStatus, Op, ReplayRequest, Replayer, DEFAULT_TIMEOUT_S};

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const CORPUS_MANIFEST_FILE: &str = "corpus_manifest.jsonl";
pub const REPLAY_INDEX_FILE: &str = "replay_index.jsonl";
pub const WORK_DIR: &str = "work";

#[derive(Debug, Clone)]
pub struct MineOptions {
    pub max_rows: usize,
    pub timeout_s: u64,
}

impl Default for MineOptions {
    fn default() -> Self {
        MineOptions { max_rows: 10, timeout_s: DEFAULT_TIMEOUT_S }
    }
}

/// What happened to one notebook before replay.
#[derive(Debug, Clone)]
pub struct NotebookOutcome {
    pub record: CorpusRecord,
    pub spans: usize,
    pub pending: Vec<PendingExample>,
    /// Failure as opposed to a by-design exclusion.
    pub failed: bool,
}

impl NotebookOutcome {
    fn excluded(id: &str, candidate: bool, reason: ExclusionReason, detail: Option<String>) -> Self {
        let failed = matches!(reason, ExclusionReason::Malformed | ExclusionReason::UnsupportedFormat | ExclusionReason::Unparseable);
        NotebookOutcome {
            record: CorpusRecord { id: id.to_owned(), candidate, excluded: Some(reason), detail },
            spans: 0,
            pending: Vec::new(),
            failed,
        }
    }
}

fn data_dir_rel(id: &str) -> PathBuf {
    Path::new(WORK_DIR).join(id).join("data")
}

fn write_work(out: &Path, nb: &Notebook, files: &[(PathBuf, String)]) -> Result<(), CorpusError> {
    let dir = out.join(WORK_DIR).join(&nb.id);
    let data = dir.join("data");
    std::fs::create_dir_all(&data)?;
    std::fs::write(dir.join("notebook.ipynb"), nb.to_json_bytes())?;
    for (src, name) in files {
        std::fs::copy(src, data.join(name))?;
    }
    Ok(())
}

/// Runs every pre-replay stage for one notebook and materializes its work
/// directory under `out`.
pub fn process_notebook(file: &NotebookFile, catalog: &ApiCatalog, out: &Path) -> NotebookOutcome {
    let id = file.id.as_str();
    let bytes = match std::fs::read(&file.path) {
        Ok(b) => b,
        Err(e) => return NotebookOutcome::excluded(id, false, ExclusionReason::Malformed, Some(e.to_string())),
    };
    let nb = match parse_notebook(id, &bytes) {
        Ok(nb) => nb,
        Err(CorpusError::UnsupportedFormat(v)) => {
            return NotebookOutcome::excluded(id, false, ExclusionReason::UnsupportedFormat, Some(format!("nbformat {v}")))
        }
        Err(e) => return NotebookOutcome::excluded(id, false, ExclusionReason::Malformed, Some(e.to_string())),
    };
    if !is_candidate(&nb, catalog) {
        return NotebookOutcome::excluded(id, false, ExclusionReason::NotCandidate, None);
    }
    let mut paths = extract_data_paths(&nb, catalog);
    let nb_dir = file.path.parent().unwrap_or(Path::new("."));
    resolve_data_paths(&mut paths.refs, &[nb_dir, &nb_dir.join("data")], Some(&file.repo_root));
    let consolidated = match consolidate_files(&nb, &paths) {
        Ok(c) => c,
        Err(e) => return NotebookOutcome::excluded(id, true, ExclusionReason::MissingDataFile, Some(e.to_string())),
    };
    if let Some(reason) = consolidated.excluded {
        let missing: Vec<&str> = paths.refs.iter().filter(|r| !r.exists).map(|r| r.raw_path.as_str()).collect();
        let detail = (!missing.is_empty()).then(|| missing.join(","));
        return NotebookOutcome::excluded(id, true, reason, detail);
    }
    let nb = consolidated.notebook;
    let analysis = match NotebookAnalysis::new(&nb) {
        Ok(a) => a,
        Err(e) => return NotebookOutcome::excluded(id, true, ExclusionReason::Unparseable, Some(format!("cell {}: {}", e.cell, e.error))),
    };
    let spans = extract_lifecycles(&analysis, catalog);
    if spans.is_empty() {
        return NotebookOutcome::excluded(id, true, ExclusionReason::NotSelfContained, None);
    }
    if let Err(e) = write_work(out, &nb, &consolidated.files) {
        return NotebookOutcome {
            record: CorpusRecord {
                id: id.to_owned(),
                candidate: true,
                excluded: Some(ExclusionReason::MissingDataFile),
                detail: Some(e.to_string()),
            },
            spans: spans.len(),
            pending: Vec::new(),
            failed: true,
        };
    }
    let pending = spans.iter().flat_map(|s| build_examples(&nb, &analysis, s, catalog)).collect();
    NotebookOutcome {
        record: CorpusRecord { id: id.to_owned(), candidate: true, excluded: None, detail: None },
        spans: spans.len(),
        pending,
        failed: false,
    }
}

pub fn replay_request(p: &PendingExample, out: &Path, opts: &MineOptions) -> ReplayRequest {
    ReplayRequest {
        op: Op::Replay,
        cells: p.replay_cells.clone(),
        target: p.target_code.clone(),
        candidate: None,
        target_var: p.provenance.target_var.clone(),
        data_dir: out.join(data_dir_rel(&p.provenance.notebook)),
        timeout_s: opts.timeout_s,
        max_rows: None,
    }
}

/// Counts for each notebook stage and each example stage. Both sequences
/// only ever shrink.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MineCounts {
    pub notebooks_found: usize,
    pub notebooks_parsed: usize,
    pub notebooks_candidate: usize,
    pub notebooks_data_consolidated: usize,
    pub notebooks_parseable: usize,
    pub notebooks_with_spans: usize,
    pub lifecycle_spans: usize,
    pub exclusions: BTreeMap<String, usize>,
    pub segments: usize,
    pub replayed_ok: usize,
    pub replay_status: BTreeMap<String, usize>,
    pub finalize: FinalizeReport,
}

#[derive(Debug)]
pub struct MineResult {
    pub records: Vec<CorpusRecord>,
    pub examples: Vec<WranglingExample>,
    pub sources: Vec<ReplaySource>,
    pub counts: MineCounts,
    /// Notebooks or examples lost to errors rather than to filters.
    pub failures: usize,
}

fn at_least(excl: &BTreeMap<String, usize>, reasons: &[ExclusionReason]) -> usize {
    reasons.iter().map(|r| excl.get(r.as_str()).copied().unwrap_or(0)).sum()
}

/// Mines `corpus` into memory, writing work directories under `out`.
pub fn mine(corpus: &Path, out: &Path, catalog: &ApiCatalog, replayer: &dyn Replayer, opts: &MineOptions) -> MineResult {
    let files = discover_notebooks(corpus);
    info!("{} notebooks under {}", files.len(), corpus.display());
    let outcomes = map_ordered(&files, |f| process_notebook(f, catalog, out));

    let mut counts = MineCounts { notebooks_found: files.len(), ..Default::default() };
    let mut failures = 0;
    for o in &outcomes {
        if let Some(r) = o.record.excluded {
            *counts.exclusions.entry(r.as_str().to_owned()).or_default() += 1;
        }
        failures += o.failed as usize;
        counts.lifecycle_spans += o.spans;
    }
    use ExclusionReason as R;
    let ex = &counts.exclusions;
    counts.notebooks_parsed = counts.notebooks_found - at_least(ex, &[R::Malformed, R::UnsupportedFormat]);
    counts.notebooks_candidate = counts.notebooks_parsed - at_least(ex, &[R::NotCandidate]);
    counts.notebooks_data_consolidated =
        counts.notebooks_candidate - at_least(ex, &[R::NonLiteralPath, R::MissingDataFile, R::NoDataPaths]);
    counts.notebooks_parseable = counts.notebooks_data_consolidated - at_least(ex, &[R::Unparseable]);
    counts.notebooks_with_spans = counts.notebooks_parseable - at_least(ex, &[R::NotSelfContained]);

    let pending: Vec<PendingExample> = outcomes.iter().flat_map(|o| o.pending.iter().cloned()).collect();
    counts.segments = pending.len();
    let replayed = map_ordered(&pending, |p| {
        let req = replay_request(p, out, opts);
        match replayer.run(&req) {
            Ok(resp) => match (resp.status, resp.input_frame, resp.output_frame) {
                (ExecStatus::Ok, Some(i), Some(o)) => Ok((p.clone().with_frames(i, o), p.replay_cells.clone())),
                (ExecStatus::Ok, _, _) => Err(("missing_frames".to_owned(), false)),
                (s, _, _) => Err((s.as_str().to_owned(), false)),
            },
            Err(e) => {
                warn!("replay of {} unavailable: {e}", p.id);
                Err(("replay_unavailable".to_owned(), true))
            }
        }
    });
    let mut candidates = Vec::new();
    let mut cells_by_id = BTreeMap::new();
    for r in replayed {
        match r {
            Ok((ex, cells)) => {
                *counts.replay_status.entry("ok".to_owned()).or_default() += 1;
                cells_by_id.insert(ex.id.clone(), cells);
                candidates.push(ex);
            }
            Err((status, failed)) => {
                *counts.replay_status.entry(status).or_default() += 1;
                failures += failed as usize;
            }
        }
    }
    counts.replayed_ok = candidates.len();
    let (examples, report) = finalize(candidates, opts.max_rows);
    counts.finalize = report;
    let sources = examples
        .iter()
        .map(|e| ReplaySource {
            id: e.id.clone(),
            cells: cells_by_id.remove(&e.id).unwrap_or_default(),
            data_dir: data_dir_rel(&e.provenance.notebook),
        })
        .collect();
    let mut records: Vec<CorpusRecord> = outcomes.into_iter().map(|o| o.record).collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    MineResult { records, examples, sources, counts, failures }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> std::io::Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Writes dataset, corpus manifest and replay index into `out`.
pub fn write_outputs(out: &Path, result: &MineResult) -> std::io::Result<()> {
    write_jsonl(&out.join(DATASET_FILE), &result.examples)?;
    write_jsonl(&out.join(CORPUS_MANIFEST_FILE), &result.records)?;
    write_jsonl(&out.join(REPLAY_INDEX_FILE), &result.sources)
}
