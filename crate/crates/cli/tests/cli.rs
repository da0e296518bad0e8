use std::path::Path;
use std::process::{Command, Output};

fn ppi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppi"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const DATA: [&str; 4] = ["--proteins", "data/proteins.jsonl", "--ppi", "data/ppi.tsv"];
const SMALL: [&str; 9] = ["--desk", "--s1-epochs", "2", "--s2-epochs", "4", "--s1-hidden", "8", "--s2-hidden", "16"];

fn with(extra: &[&str]) -> Vec<String> {
    extra.iter().chain(&DATA).chain(&SMALL).map(|s| s.to_string()).collect()
}

fn run(args: Vec<String>, cwd: &Path) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ppi(&refs, cwd)
}

#[test]
fn train_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ppi(&["synth-data", "--out", "data", "--proteins", "10", "--pairs", "20", "--min-len", "12", "--max-len", "16"], dir.path()));
    for cmd in ["pretrain", "train", "ablate"] {
        let out = run(with(&[cmd, "--out", "x"]), dir.path());
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    }
}

#[test]
fn pretrain_train_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&ppi(&["synth-data", "--out", "data", "--proteins", "10", "--pairs", "20", "--min-len", "12", "--max-len", "16"], d));
    assert!(ok(&run(with(&["split", "--scheme", "dfs", "--out", "split.json"]), d)).contains("BS 0"));
    ok(&run(with(&["pretrain", "--seed", "3", "--split-file", "split.json", "--out", "pre"]), d));
    ok(&run(
        with(&["train", "--seed", "3", "--split-file", "split.json", "--embeddings", "pre/pooled_embeddings.tsv", "--out", "run"]),
        d,
    ));
    for f in ["config.toml", "model.json", "stage2_log.tsv", "test_report.json", "test_predictions.tsv"] {
        assert!(d.join("run").join(f).exists(), "missing {f}");
    }
    let log = std::fs::read_to_string(d.join("run/stage2_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 5);

    let eval = ok(&run(
        with(&[
            "evaluate", "--split-file", "split.json", "--model", "run/model.json", "--embeddings",
            "pre/pooled_embeddings.tsv", "--out", "eval",
        ]),
        d,
    ));
    let report = std::fs::read_to_string(d.join("eval/report.json")).unwrap();
    assert_eq!(report, std::fs::read_to_string(d.join("run/test_report.json")).unwrap());
    assert!(eval.starts_with("test:"));

    ok(&run(with(&["export-embeddings", "--checkpoint", "pre/stage1_checkpoint.json", "--out", "emb.tsv"]), d));
    assert_eq!(
        std::fs::read_to_string(d.join("emb.tsv")).unwrap(),
        std::fs::read_to_string(d.join("pre/pooled_embeddings.tsv")).unwrap()
    );
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&ppi(&["synth-data", "--out", "data", "--proteins", "10", "--pairs", "20", "--min-len", "12", "--max-len", "16"], d));
    std::fs::write(d.join("run.toml"), "seed = 5\n[stage2]\nepochs = 3\n[stage1]\nepochs = 1\n").unwrap();
    let args = ["ablate", "--config", "run.toml", "--seed", "5", "--cell", "no_recon", "--out", "abl", "--s2-epochs", "2"];
    let mut full: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    full.extend(DATA.iter().map(|s| s.to_string()));
    ok(&run(full, d));
    let cfg = std::fs::read_to_string(d.join("abl/config.toml")).unwrap();
    assert!(cfg.contains("epochs = 2"));
    let table = std::fs::read_to_string(d.join("abl/ablation.tsv")).unwrap();
    assert_eq!(table.lines().nth(1).unwrap().split('\t').next(), Some("no_recon"));
}
