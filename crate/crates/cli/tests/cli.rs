use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use csq::{run, run_subcommand, sha256_hex, CliError, LOCK_FILE};

fn argv(stage: &str, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = vec!["csq".to_string(), stage.to_string(), "--out".into(), out.display().to_string()];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

const SMALL: &[&str] = &[
    "--preset",
    "desk",
    "--seed",
    "5",
    "--set",
    "synth_docs=60",
    "--set",
    "hidden=8",
    "--set",
    "attention_dim=8",
    "--epochs",
    "2",
];

fn stage(name: &str, out: &Path, extra: &[&str]) {
    let mut args: Vec<&str> = SMALL.to_vec();
    args.extend_from_slice(extra);
    if let Err(e) = run_subcommand(argv(name, out, &args)) {
        panic!("{name} failed: {e}");
    }
}

/// File name to SHA-256 for every file in `dir`.
fn digests(dir: &Path, skip_manifests: bool) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), p))
        .filter(|(n, _)| !(skip_manifests && n.starts_with("manifest.")))
        .map(|(n, p)| (n, sha256_hex(&fs::read(p).unwrap())))
        .collect()
}

#[test]
fn synth_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(argv("synth", &a, &["--seed", "7"])), 0);
    let first = digests(&a, false);
    assert_eq!(run(argv("synth", &a, &["--seed", "7"])), 0);
    assert_eq!(digests(&a, false), first);
    assert_eq!(run(argv("synth", &b, &["--seed", "7"])), 0);
    assert_eq!(digests(&b, true), digests(&a, true));
    assert!(!a.join(LOCK_FILE).exists());
}

#[test]
fn hcsd_without_enrich_names_the_missing_input() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for s in ["synth", "preprocess", "train-embed", "train-word"] {
        stage(s, d, &[]);
    }
    let mut args: Vec<&str> = SMALL.to_vec();
    args.extend(["--variant", "hcsd"]);
    match run_subcommand(argv("train-lm", d, &args)) {
        Err(CliError::Config(msg)) => assert!(msg.contains("concepts.enriched.vec") && msg.contains("enrich"), "{msg}"),
        other => panic!("expected a config error, got {other:?}"),
    }
    assert_eq!(run(argv("train-lm", d, &args)), 2);
}

#[test]
fn argument_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert!(matches!(run_subcommand(argv("train", d, &[])), Err(CliError::UnknownSubcommand(_))));
    assert_eq!(run(argv("train", d, &[])), 2);
    assert!(matches!(run_subcommand(argv("synth", d, &["--variant", "gan"])), Err(CliError::Config(_))));
    assert!(matches!(run_subcommand(argv("synth", d, &["--set", "colour=red"])), Err(CliError::Config(_))));
    assert!(matches!(run_subcommand(["csq", "synth"]), Err(CliError::Config(_))));
    assert!(matches!(run_subcommand(argv("synth", d, &["--set", "synth_sentences=5"])), Err(CliError::Stage(_))));
    assert!(matches!(run_subcommand(argv("preprocess", d, &[])), Err(CliError::Io { .. })));
    assert_eq!(run(["csq", "--help"]), 0);
}

#[test]
fn locked_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join(LOCK_FILE), "").unwrap();
    assert!(matches!(run_subcommand(argv("synth", tmp.path(), &[])), Err(CliError::Io { .. })));
    assert!(tmp.path().join(LOCK_FILE).exists());
}

#[test]
fn full_desk_pipeline_reports_finite_perplexity() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for s in ["synth", "preprocess", "train-embed", "enrich", "train-word"] {
        stage(s, d, &[]);
    }
    for v in ["baseline", "cs", "csd", "hcsd", "hcsd-t"] {
        stage("train-lm", d, &["--variant", v]);
        stage("generate", d, &["--variant", v, "--max-len", "12"]);
        stage("eval-ppl", d, &["--variant", v]);
        let line = fs::read_to_string(d.join(format!("ppl.{v}.test.txt"))).unwrap();
        let report: csq_core::eval::PerplexityReport = line.trim().parse().unwrap();
        assert!(report.perplexity.is_finite() && report.perplexity >= 1.0, "{v}: {line}");
        assert!(report.tokens > 0);
    }
    stage("export-questionnaire", d, &["--set", "questionnaire_items=2"]);
    let key = csq_core::eval::AnswerKey::from_csv(&fs::read_to_string(d.join("answer_key.csv")).unwrap()).unwrap();
    assert_eq!(key.human_positions().len(), 2);
    let doc = fs::read_to_string(d.join("questionnaire.md")).unwrap();
    assert!(!doc.contains("BASELINE") && !doc.contains("HCSD"));
}

#[test]
fn manifests_reproduce_outputs_and_inputs_stay_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for s in ["synth", "preprocess", "train-embed", "enrich", "train-word"] {
        stage(s, d, &[]);
    }
    stage("train-lm", d, &["--variant", "cs"]);
    let before = digests(d, false);
    for manifest in ["manifest.preprocess.cfg", "manifest.enrich.cfg", "manifest.train-lm.cs.cfg"] {
        let path = d.join(manifest);
        assert_eq!(run(["csq".to_string(), manifest_stage(&path), "--config".into(), path.display().to_string()]), 0);
    }
    assert_eq!(digests(d, false), before);

    fs::write(d.join("train.examples"), "id:x\nsrc:a b\nsrc_concepts:\ntgt:c\ntgt_concepts:\n").unwrap();
    let path = d.join("manifest.train-word.cfg");
    match run_subcommand(["csq".to_string(), "train-word".into(), "--config".into(), path.display().to_string()]) {
        Err(CliError::Config(msg)) => assert!(msg.contains("train.examples"), "{msg}"),
        other => panic!("expected digest mismatch, got {other:?}"),
    }
    let wrong = ["csq".to_string(), "enrich".into(), "--config".into(), path.display().to_string()];
    assert!(matches!(run_subcommand(wrong), Err(CliError::Config(_))));
}

fn manifest_stage(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    csq::parse_kv(&text).unwrap()["subcommand"].clone()
}
