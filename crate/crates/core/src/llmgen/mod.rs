//! Few-shot prompts for code models, a small completion client and
//! clean-up of what comes back.

mod client;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aligner::{ContextKind, DataframeSnapshot, Split, WranglingExample};
use crate::pyast::sanitize_cell;

pub use client::{CompletionClient, LlmError, ENDPOINT_ENV, KEY_ENV};

pub const DEFAULT_INSTRUCTION: &str = "You are a data scientist working in a Jupyter notebook. Each example below shows \
notebook context, the input dataframe and the output dataframe. Write the Python code that transforms the input \
dataframe into the output dataframe.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSpec {
    pub instruction: String,
    pub k: usize,
    pub max_frame_rows: usize,
    pub max_generation_tokens: u32,
    pub model: String,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec {
            instruction: DEFAULT_INSTRUCTION.to_owned(),
            k: 2,
            max_frame_rows: 5,
            max_generation_tokens: 256,
            model: "gpt-4".to_owned(),
            temperature: 0.0,
            seed: 0,
        }
    }
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => "NaN".to_owned(),
        Value::Bool(true) => "True".to_owned(),
        Value::Bool(false) => "False".to_owned(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Header of column names, then up to `max_rows` rows, values separated by
/// single spaces.
pub fn flatten_snapshot(s: &DataframeSnapshot, max_rows: usize) -> String {
    let mut lines = vec![s.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join(" ")];
    for row in s.rows.iter().take(max_rows) {
        lines.push(row.iter().map(cell_text).collect::<Vec<_>>().join(" "));
    }
    lines.join("\n")
}

/// Wraps free text in a string block that cannot terminate early.
fn quoted(text: &str) -> String {
    let body = text.replace('\\', "\\\\").replace("\"\"\"", "\\\"\\\"\\\"");
    format!("\"\"\"\n{body}\n\"\"\"")
}

fn render_example(e: &WranglingExample, spec: &PromptSpec, out: &mut Vec<String>) {
    for cell in &e.context {
        match cell.kind {
            ContextKind::Markdown => out.push(quoted(&cell.text)),
            ContextKind::Code | ContextKind::Deps => {
                let code = sanitize_cell(&cell.text);
                if !code.trim().is_empty() {
                    out.push(code.trim_end().to_owned());
                }
            }
        }
    }
    out.push(quoted(&format!("input dataframe:\n{}", flatten_snapshot(&e.input_frame, spec.max_frame_rows))));
    out.push(quoted(&format!("output dataframe:\n{}", flatten_snapshot(&e.output_frame, spec.max_frame_rows))));
}

pub const GENERATION_CUE: &str = "# solution";

/// Instruction, each demonstration with its gold code, then the test
/// example ending in the generation cue. Appending code to the prompt gives
/// a valid module.
pub fn build_prompt(example: &WranglingExample, shots: &[&WranglingExample], spec: &PromptSpec) -> String {
    let mut blocks = vec![quoted(&spec.instruction)];
    for shot in shots {
        let mut parts = Vec::new();
        render_example(shot, spec, &mut parts);
        parts.push(GENERATION_CUE.to_owned());
        parts.push(shot.target_code.trim_end().to_owned());
        blocks.push(parts.join("\n\n"));
    }
    let mut parts = Vec::new();
    render_example(example, spec, &mut parts);
    parts.push(GENERATION_CUE.to_owned());
    blocks.push(parts.join("\n\n"));
    let mut prompt = blocks.join("\n\n\n");
    prompt.push('\n');
    prompt
}

/// Train examples only; the pool cannot hold anything else.
pub struct ShotPool<'a> {
    train: Vec<&'a WranglingExample>,
}

impl<'a> ShotPool<'a> {
    pub fn new(examples: &'a [WranglingExample]) -> Self {
        ShotPool { train: examples.iter().filter(|e| e.split == Split::Train).collect() }
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    /// `k` distinct shots for one example, fixed by `(seed, example id)` so
    /// the draw does not depend on processing order.
    pub fn draw(&self, seed: u64, example_id: &str, k: usize) -> Vec<&'a WranglingExample> {
        let candidates: Vec<&WranglingExample> = self.train.iter().copied().filter(|e| e.id != example_id).collect();
        let k = k.min(candidates.len());
        let digest = Sha256::digest(example_id.as_bytes());
        let salt = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
        let mut picked = sample(&mut rng, candidates.len(), k).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| candidates[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("generation is empty after clean-up")]
pub struct EmptyGeneration;

fn strip_fence(text: &str) -> &str {
    let Some(open) = text.find("```") else { return text };
    let after = &text[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// Candidate code out of raw model text: drops an echoed prompt, unwraps a
/// fenced block and stops at the first line opening a new quoted block.
pub fn postprocess(generation: &str, prompt: Option<&str>) -> Result<String, EmptyGeneration> {
    let mut text = generation;
    if let Some(p) = prompt.filter(|p| !p.is_empty()) {
        text = text.strip_prefix(p).unwrap_or(text);
    }
    let text = strip_fence(text);
    let mut kept = Vec::new();
    for line in text.lines() {
        let t = line.trim_start();
        if t.starts_with("\"\"\"") || t.starts_with("'''") || t.starts_with("```") {
            break;
        }
        kept.push(line.trim_end());
    }
    while kept.last().is_some_and(|l| l.is_empty()) {
        kept.pop();
    }
    let start = kept.iter().position(|l| !l.is_empty()).unwrap_or(kept.len());
    let out = kept[start..].join("\n");
    if out.is_empty() {
        Err(EmptyGeneration)
    } else {
        Ok(out)
    }
}
