use std::path::PathBuf;
use std::process::{Command, Stdio};

use proptest::prelude::*;
use serde_json::Value;
use wrangle_core::metrics::{codebleu, exact_match, ngram_match, ngram_tokens};

fn oracle_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/oracle")
}

fn read_json(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(oracle_dir().join(name)).unwrap()).unwrap()
}

fn snippets() -> Vec<String> {
    serde_json::from_value(read_json("snippets.json")).unwrap()
}

fn close(a: Option<f64>, b: &Value, what: &str) {
    match (a, b.as_f64()) {
        (None, None) => {}
        (Some(x), Some(y)) => assert!((x - y).abs() < 1e-6, "{what}: {x} vs {y}"),
        _ => panic!("{what}: {a:?} vs {b}"),
    }
}

fn check_against(pairs: &[Value], expected: &[Value]) {
    assert_eq!(pairs.len(), expected.len());
    for (p, e) in pairs.iter().zip(expected) {
        let (pred, gold) = (p["pred"].as_str().unwrap(), p["gold"].as_str().unwrap());
        let tag = format!("{pred:?} vs {gold:?}");
        match codebleu(pred, gold) {
            Ok(s) => {
                close(Some(s.score), &e["score"], &tag);
                close(Some(s.components.ngram), &e["ngram"], &tag);
                close(Some(s.components.weighted_ngram), &e["weighted_ngram"], &tag);
                close(s.components.ast_match, &e["ast_match"], &tag);
                close(s.components.dataflow_match, &e["dataflow_match"], &tag);
            }
            Err(_) => assert!(e["score"].is_null(), "{tag}"),
        }
    }
}

#[test]
fn curated_pairs_match_frozen_reference() {
    let pairs = read_json("pairs.json");
    let golden = read_json("codebleu_golden.json");
    assert_eq!(pairs.as_array().unwrap().len(), 10);
    check_against(pairs.as_array().unwrap(), golden.as_array().unwrap());
}

fn run_reference(pairs: &Value) -> Option<Value> {
    let mut child =
        Command::new("python3").arg(oracle_dir().join("codebleu_ref.py")).stdin(Stdio::piped()).stdout(Stdio::piped()).spawn().ok()?;
    use std::io::Write;
    child.stdin.take()?.write_all(pairs.to_string().as_bytes()).ok()?;
    let out = child.wait_with_output().ok()?;
    out.status.success().then(|| serde_json::from_slice(&out.stdout).ok()).flatten()
}

#[test]
fn snippet_cross_pairs_match_live_reference() {
    let s = snippets();
    let pairs: Vec<Value> = (0..s.len()).map(|i| serde_json::json!({"pred": s[i], "gold": s[(i * 7 + 3) % s.len()]})).collect();
    let pairs = Value::Array(pairs);
    let Some(expected) = run_reference(&pairs) else {
        eprintln!("python3 unavailable; live reference comparison skipped");
        return;
    };
    check_against(pairs.as_array().unwrap(), expected.as_array().unwrap());
}

#[test]
fn self_match_on_snippets() {
    let s = snippets();
    assert_eq!(s.len(), 100);
    for x in &s {
        assert!(exact_match(x, x).unwrap(), "{x}");
        let cb = codebleu(x, x).unwrap();
        assert!((cb.score - 1.0).abs() < 1e-9, "{x}: {cb:?}");
    }
}

#[test]
fn inserting_gold_lines_never_lowers_ngram() {
    for gold in snippets() {
        let gt = ngram_tokens(&gold);
        let lines: Vec<&str> = gold.lines().collect();
        let mut prev = 0.0;
        for k in 1..=lines.len() {
            let pred = lines[..k].join("\n");
            let now = ngram_match(&ngram_tokens(&pred), &gt);
            assert!(now + 1e-12 >= prev, "{gold:?}: {prev} -> {now}");
            prev = now;
        }
    }
}

/// Edits that keep the token stream: spacing, blank lines, comments.
fn mutate(src: &str, choices: &[u8]) -> String {
    let mut out = String::new();
    for (i, line) in src.lines().enumerate() {
        let c = choices.get(i % choices.len().max(1)).copied().unwrap_or(0);
        let mut l = line.to_owned();
        if c & 1 == 1 {
            l = l.replace(" = ", "   =  ").replace(", ", " ,  ");
        }
        if c & 2 == 2 {
            l.push_str("  # note");
        }
        if c & 4 == 4 {
            out.push_str("\n# heading\n\n");
        }
        if c & 8 == 8 {
            l = l.replace('(', "( ").replace(')', " )");
        }
        out.push_str(&l);
        out.push('\n');
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn exact_match_implies_full_codebleu(idx in 0usize..100, choices in proptest::collection::vec(0u8..16, 1..4), swap in 0usize..100) {
        let s = snippets();
        let gold = &s[idx];
        let pred = if swap % 5 == 0 { s[(idx + swap) % s.len()].clone() } else { mutate(gold, &choices) };
        if exact_match(&pred, gold).unwrap_or(false) {
            let cb = codebleu(&pred, gold).unwrap();
            prop_assert!((cb.score - 1.0).abs() < 1e-9, "{:?} vs {:?}: {:?}", pred, gold, cb);
        }
        let cb = codebleu(&pred, gold).unwrap();
        for v in [Some(cb.components.ngram), Some(cb.components.weighted_ngram), cb.components.ast_match, cb.components.dataflow_match].into_iter().flatten() {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }
}
