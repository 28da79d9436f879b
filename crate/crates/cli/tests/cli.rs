mod common;

use common::*;
use std::fs;

#[test]
fn validate_clean_corpus() {
    let dir = tempfile::tempdir().unwrap();
    write_example_corpus(dir.path());
    let o = xaieval(&[
        "validate",
        "--explanations",
        &p(&dir.path().join("explanations.jsonl")),
        "--rationales",
        &p(&dir.path().join("rationales.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "0 errors\n");
}

#[test]
fn validate_single_ragged_line() {
    let dir = tempfile::tempdir().unwrap();
    write_three_fault_corpus(dir.path());
    let att = p(&dir.path().join("attention.jsonl"));
    let o = xaieval(&["validate", "--attention", &att]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(
        stdout(&o),
        format!("{att}:2: ragged layers: row 1 has 1 values, expected 2\n1 errors\n")
    );
}

#[test]
fn validate_two_faults_in_order() {
    let dir = tempfile::tempdir().unwrap();
    write_three_fault_corpus(dir.path());
    let e = p(&dir.path().join("explanations.jsonl"));
    for _ in 0..2 {
        let o = xaieval(&["validate", "--explanations", &e]);
        assert_eq!(o.status.code(), Some(2));
        assert_eq!(
            stdout(&o),
            format!("{e}:2: length mismatch: 3 tokens, 2 scores\n{e}:3: non-finite score at index 1\n2 errors\n")
        );
    }
}

#[test]
fn validate_names_unreadable_file() {
    let o = xaieval(&["validate", "--explanations", "/no/such/explanations.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("/no/such/explanations.jsonl"));
}

#[test]
fn evaluate_writes_report_and_skips() {
    let dir = tempfile::tempdir().unwrap();
    write_example_corpus(dir.path());
    let syn = dir.path().join("c");
    let o = xaieval(&["synth", "--kind", "consistency", "--seed", "3", "--n-instances", "12", "--tokens", "4", "--out", &p(&syn)]);
    assert_eq!(o.status.code(), Some(0));
    let out = dir.path().join("report.md");
    let o = xaieval(&[
        "evaluate",
        "--explanations",
        &p(&dir.path().join("explanations.jsonl")),
        "--rationales",
        &p(&dir.path().join("rationales.jsonl")),
        "--attention",
        &p(&syn.join("attention.jsonl")),
        "--out",
        &p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let md = fs::read_to_string(&out).unwrap();
    assert!(md.contains("| IMDB | TinyBERT | LIME | 0.6000 |"), "{md}");
    assert!(md.contains("`config.distance`: cosine"));
    let skips = fs::read_to_string(dir.path().join("report.skips.jsonl")).unwrap();
    // a single original record has no perturbed, seed, or contrast partner
    for metric in ["robustness", "consistency", "contrastivity"] {
        assert!(skips.contains(&format!("\"metric\":\"{metric}\"")), "{skips}");
    }
}

#[test]
fn missing_input_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = xaieval(&["ha", "--explanations", "/no/such/e.jsonl", "--rationales", "/no/such/r.jsonl", "--out", &p(&dir.path().join("r.md"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/e.jsonl"));
}

#[test]
fn bad_weights_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_example_corpus(dir.path());
    let o = xaieval(&[
        "ha",
        "--explanations",
        &p(&dir.path().join("explanations.jsonl")),
        "--rationales",
        &p(&dir.path().join("rationales.jsonl")),
        "--weights",
        "ha=0.5,cn=0.5,ct=0.5,r=0.5",
        "--out",
        "-",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("weights must sum to 1"));
}

#[test]
fn unknown_format_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write_example_corpus(dir.path());
    let o = xaieval(&[
        "ha",
        "--explanations",
        &p(&dir.path().join("explanations.jsonl")),
        "--rationales",
        &p(&dir.path().join("rationales.jsonl")),
        "--format",
        "pdf",
        "--out",
        "-",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown report format"));
}

#[test]
fn invalid_input_lists_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    write_three_fault_corpus(dir.path());
    let e = p(&dir.path().join("explanations.jsonl"));
    let o = xaieval(&["contrastivity", "--explanations", &e, "--out", &p(&dir.path().join("r.md"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains(&format!("{e}:2: length mismatch")));
    assert!(err.contains(&format!("{e}:3: non-finite score")));
    assert!(!err.contains('\x1b'));
}

#[test]
fn stdout_only_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    write_example_corpus(dir.path());
    let args = [
        "ha",
        "--explanations",
        &p(&dir.path().join("explanations.jsonl")),
        "--rationales",
        &p(&dir.path().join("rationales.jsonl")),
        "--skips",
        &p(&dir.path().join("s.jsonl")),
    ];
    let o = xaieval(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).is_empty());

    let mut with_out = args.to_vec();
    with_out.extend(["--format", "csv", "--out", "-"]);
    let o = xaieval(&with_out);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o),
        "dataset,model,method,ha,robustness,consistency,contrastivity,cws\nIMDB,TinyBERT,LIME,0.6,,,,\n"
    );
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    write_example_corpus(dir.path());
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        format!(
            "explanations = {}\nrationales = {}\nformat = csv\nrank_by = abs\n",
            p(&dir.path().join("explanations.jsonl")),
            p(&dir.path().join("rationales.jsonl"))
        ),
    )
    .unwrap();
    let out = dir.path().join("r.out");
    let o = xaieval(&["ha", "--config", &p(&conf), "--format", "jsonl", "--out", &p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("{\"kind\":\"metadata\""));
    assert!(text.contains("\"config.rank_by\":\"abs\""));
}

#[test]
fn report_rerenders_saved_results() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("r");
    xaieval(&["synth", "--kind", "robustness", "--seed", "2", "--out", &p(&syn)]);
    let results = p(&dir.path().join("res.jsonl"));
    let explanations = p(&syn.join("explanations.jsonl"));
    let base = ["robustness", "--explanations", &explanations];
    let mut a = base.to_vec();
    a.extend(["--out", &results]);
    assert_eq!(xaieval(&a).status.code(), Some(0));
    let mut a = base.to_vec();
    a.extend(["--format", "csv", "--out", "-"]);
    let direct = stdout(&xaieval(&a));

    let o = xaieval(&["report", "--results", &results, "--format", "csv", "--out", "-"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), direct);

    let o = xaieval(&["report", "--results", &results, "--weights", "ha=1,cn=0,ct=0,r=0.5", "--out", "-"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_rejects_tampered_results() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t.jsonl");
    fs::write(
        &f,
        r#"{"kind":"cell","dataset":"d","model":"m","method":"x","ha":0.5,"robustness":0.5,"consistency":0.5,"contrastivity":0.5,"cws":0.9}"#,
    )
    .unwrap();
    let o = xaieval(&["report", "--results", &p(&f), "--out", "-"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":1: stored cws"));
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["ha", "robustness", "consistency"] {
        let a = dir.path().join(format!("{kind}-a"));
        let b = dir.path().join(format!("{kind}-b"));
        for d in [&a, &b] {
            let o = xaieval(&["synth", "--kind", kind, "--seed", "11", "--n-instances", "7", "--out", &p(d)]);
            assert_eq!(o.status.code(), Some(0));
        }
        for name in ["explanations.jsonl", "rationales.jsonl", "attention.jsonl"] {
            if a.join(name).exists() {
                assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap());
            }
        }
    }
    let o = xaieval(&["synth", "--kind", "contrast", "--out", &p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn perturb_masks_top_tokens() {
    let dir = tempfile::tempdir().unwrap();
    write_example_corpus(dir.path());
    let o = xaieval(&[
        "perturb",
        "--explanations",
        &p(&dir.path().join("explanations.jsonl")),
        "--strategy",
        "mask_top_k:2",
        "--seed",
        "5",
        "--out",
        "-",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(line["instance_id"], "ex1");
    assert_eq!(line["strategy"], "mask_top_k:2");
    assert_eq!(line["seed"], 5);
    assert_eq!(
        line["tokens"],
        serde_json::json!(["The", "movie", "was", "absolutely", "[MASK]", "[MASK]", "and", "delightful."])
    );

    let o = xaieval(&["perturb", "--explanations", &p(&dir.path().join("explanations.jsonl")), "--strategy", "synonym_replace:0.5", "--out", "-"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--lexicon"));
}

#[test]
fn html_report_renders() {
    let dir = tempfile::tempdir().unwrap();
    write_example_corpus(dir.path());
    let out = dir.path().join("r.html");
    let o = xaieval(&[
        "ha",
        "--explanations",
        &p(&dir.path().join("explanations.jsonl")),
        "--rationales",
        &p(&dir.path().join("rationales.jsonl")),
        "--out",
        &p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let html = fs::read_to_string(out).unwrap();
    assert!(html.starts_with("<!DOCTYPE html>"));
    assert!(html.contains("0.6000"));
}
