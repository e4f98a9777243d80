use std::path::Path;
use std::process::{Command, Output};

use nastransfer::moea::RunArchive;

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nastransfer")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], cwd: &Path) -> String {
    let out = run(args, cwd);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

const FAMILY: [&str; 4] = ["--tasks", "2", "--num-ops", "3"];
const QUICK_TRAIN: [&str; 4] = ["--km-epochs", "3", "--gp-epochs", "2"];

fn with(base: &[&str], extra: &[&[&str]]) -> Vec<String> {
    base.iter().chain(extra.iter().flat_map(|e| e.iter())).map(|s| s.to_string()).collect()
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn pipeline_from_knowledge_base_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bench = with(&["bench-synth", "--runs", "1", "--budget", "60", "--out", "bench"], &[&FAMILY, &QUICK_TRAIN]);
    let table = ok(&refs(&bench), d);
    assert!(table.contains("kegnas") && table.contains("nsga2") && table.contains("rkegnas"));
    for f in ["kb.tsv", "target.tsv", "features.tsv", "summary.json", "summary.txt", "runs/kegnas_seed0.jsonl"] {
        assert!(d.join("bench").join(f).exists(), "missing {f}");
    }

    let kb = ["--kb", "bench/kb.tsv", "--features", "bench/features.tsv"];
    let out = ok(&refs(&with(&["build-data", "--out", "data"], &[&kb])), d);
    assert!(out.contains("total"));
    for f in ["corpus.tsv", "similarity_acc.tsv", "similarity_params.tsv", "similarity_overlap.tsv"] {
        assert!(d.join("data").join(f).exists(), "missing {f}");
    }

    let train = with(&["train", "--out", "models"], &[&kb, &QUICK_TRAIN]);
    assert!(ok(&refs(&train), d).contains("trained checkpoints"));
    assert!(ok(&refs(&train), d).contains("reused checkpoints"));

    let search = |out: &str| {
        let args = [
            "search", "--mode", "kegnas", "--kb", "bench/target.tsv", "--target", "task2", "--features",
            "bench/features.tsv", "--ckpt", "models", "--runs", "2", "--budget", "40", "--out", out,
        ];
        ok(&args, d)
    };
    let listing = search("runs_a");
    assert_eq!(listing.lines().count(), 3, "{listing}");
    search("runs_b");
    for seed in 0..2 {
        let name = format!("kegnas_seed{seed}.jsonl");
        let a = std::fs::read(d.join("runs_a").join(&name)).unwrap();
        assert_eq!(a, std::fs::read(d.join("runs_b").join(&name)).unwrap());
        let archive = RunArchive::from_jsonl(std::str::from_utf8(&a).unwrap()).unwrap();
        assert_eq!(archive.ledger.len(), 40);
        assert!(!archive.transfer.is_empty());
    }
    assert!(d.join("runs_a/kegnas_seed0.timing.json").exists());

    let nsga = ["search", "--mode", "nsga2", "--kb", "bench/target.tsv", "--target", "task2", "--runs", "2", "--budget", "40", "--out", "runs_a"];
    ok(&nsga, d);
    let summary = ok(&["report", "runs_a", "--out", "rep"], d);
    assert!(summary.contains("kegnas vs nsga2"), "{summary}");
    assert!(d.join("rep/summary.json").exists() && d.join("rep/summary.txt").exists());
}

#[test]
fn synthetic_oracle_search_needs_no_table() {
    let dir = tempfile::tempdir().unwrap();
    let args = with(&["search", "--mode", "nsga2", "--oracle", "synthetic", "--budget", "30", "--out", "runs"], &[&FAMILY]);
    let out = ok(&refs(&args), dir.path());
    assert!(out.starts_with("mode\tseed"));
    assert!(dir.path().join("runs/nsga2_seed0.jsonl").exists());
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(fails(&["train", "--kb", "missing.tsv", "--out", "m"], d).contains("missing.tsv"));
    let no_ckpt = with(&["search", "--mode", "kegnas", "--oracle", "synthetic", "--out", "r"], &[&FAMILY]);
    assert!(fails(&refs(&no_ckpt), d).contains("--ckpt"));
    fails(&["search", "--mode", "bogus", "--oracle", "synthetic", "--out", "r"], d);
    assert!(fails(&["search", "--mode", "nsga2", "--out", "r"], d).contains("--kb"));
    std::fs::create_dir(d.join("empty")).unwrap();
    assert!(fails(&["report", "empty"], d).contains("no archives"));
    std::fs::write(d.join("bad.jsonl"), "not json\n").unwrap();
    fails(&["report", "bad.jsonl"], d);
    fails(&["bench-synth", "--runs", "0"], d);
}
