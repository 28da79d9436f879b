#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

pub fn xaieval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xaieval"))
        .args(args)
        .env("XAIEVAL_NO_COLOR", "1")
        // `--out -` writes its skip report into the working directory
        .current_dir(std::env::temp_dir())
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> String {
    path.display().to_string()
}

pub const EXAMPLE_TOKENS: [&str; 8] = ["The", "movie", "was", "absolutely", "fantastic,", "fascinating,", "and", "delightful."];
/// Chosen so the ranking is fantastic > fascinating > absolutely > movie > delightful.
pub const EXAMPLE_SCORES: [f64; 8] = [0.01, 0.40, 0.02, 0.55, 0.93, 0.81, 0.03, 0.35];
pub const EXAMPLE_HUMAN: [&str; 5] = ["fantastic", "fascinating", "absolutely", "delightful", "movie"];

/// Explanation and rationale files for the worked single-sentence example.
pub fn write_example_corpus(dir: &Path) {
    let tokens: Vec<String> = EXAMPLE_TOKENS.iter().map(|s| s.to_string()).collect();
    let e = serde_json::json!({
        "instance_id": "ex1", "dataset": "IMDB", "model": "TinyBERT", "method": "LIME",
        "variant": "original", "predicted_label": "pos", "target_label": "pos",
        "tokens": tokens, "scores": EXAMPLE_SCORES,
    });
    let r = serde_json::json!({"instance_id": "ex1", "dataset": "IMDB", "ranked_tokens": EXAMPLE_HUMAN});
    std::fs::write(dir.join("explanations.jsonl"), format!("{e}\n")).unwrap();
    std::fs::write(dir.join("rationales.jsonl"), format!("{r}\n")).unwrap();
}

/// Explanations with a length mismatch on line 2 and a NaN on line 3, and
/// attention with a ragged layer on line 2.
pub fn write_three_fault_corpus(dir: &Path) {
    let e = concat!(
        r#"{"instance_id":"a","dataset":"IMDB","model":"m","method":"LIME","variant":"original","predicted_label":"pos","target_label":"pos","tokens":["good","film"],"scores":[0.5,0.1]}"#,
        "\n",
        r#"{"instance_id":"b","dataset":"IMDB","model":"m","method":"LIME","variant":"original","predicted_label":"pos","target_label":"pos","tokens":["a","b","c"],"scores":[0.5,0.1]}"#,
        "\n",
        r#"{"instance_id":"c","dataset":"IMDB","model":"m","method":"LIME","variant":"original","predicted_label":"pos","target_label":"pos","tokens":["x","y"],"scores":[0.5,NaN]}"#,
        "\n",
    );
    let a = concat!(
        r#"{"instance_id":"a","model":"m","seed":1,"layers":[[0.2,0.8],[0.4,0.6]]}"#,
        "\n",
        r#"{"instance_id":"a","model":"m","seed":2,"layers":[[0.2,0.8],[0.4]]}"#,
        "\n",
    );
    std::fs::write(dir.join("explanations.jsonl"), e).unwrap();
    std::fs::write(dir.join("attention.jsonl"), a).unwrap();
}
