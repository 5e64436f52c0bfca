use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn erc_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erc-lab"))
        .args(args)
        .env_remove("ERC_LAB_CACHE")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = erc_lab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    erc_lab(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Synth {
    _dir: tempfile::TempDir,
    root: PathBuf,
    corpus: PathBuf,
    emb: PathBuf,
}

fn context_data() -> Synth {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    ok(&[
        "synth",
        "--kind",
        "context",
        "--dialogues",
        "30",
        "--out",
        s(&root.join("ctx")),
    ]);
    Synth {
        corpus: root.join("ctx/corpus.jsonl"),
        emb: root.join("ctx/embeddings.emb1"),
        root,
        _dir: dir,
    }
}

fn config_hash(dir: &Path) -> String {
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    v["config_hash"].as_str().unwrap().to_owned()
}

fn csv_hash(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# "), "{first}");
    first
        .split_whitespace()
        .find_map(|t| t.strip_prefix("config_hash="))
        .unwrap()
        .to_owned()
}

const SMALL: [&str; 8] = [
    "--hidden",
    "16",
    "--max-epochs",
    "8",
    "--lr",
    "0.005",
    "--patience",
    "4",
];

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&["--no-such-flag"]), 1);
    assert_eq!(code(&["train"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["--help"]), 0);
    let out = erc_lab(&["sweep", "--bogus"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn data_errors_exit_2() {
    assert_eq!(
        code(&["validate-corpus", "--corpus", "/nonexistent/corpus.jsonl"]),
        2
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{not json}\n").unwrap();
    assert_eq!(code(&["validate-corpus", "--corpus", s(&bad)]), 2);
}

#[test]
fn numeric_failures_exit_3() {
    let d = context_data();
    let out = d.root.join("div");
    let args = [
        "train",
        "--corpus",
        s(&d.corpus),
        "--embeddings",
        s(&d.emb),
        "--lr",
        "1e300",
        "--out",
        s(&out),
    ];
    assert_eq!(code(&args), 3);
}

#[test]
fn gradcheck_and_selftest_pass() {
    assert!(ok(&["gradcheck"]).contains("all below 1e-4"));
    assert!(ok(&["stats", "selftest"]).contains("7 fixtures passed"));
}

#[test]
fn validate_and_corpus_stats() {
    let d = context_data();
    let text = ok(&[
        "validate-corpus",
        "--corpus",
        s(&d.corpus),
        "--embeddings",
        s(&d.emb),
    ]);
    assert!(text.contains("30 dialogues"));
    let out = d.root.join("stats");
    ok(&["corpus-stats", "--corpus", s(&d.corpus), "--out", s(&out)]);
    let hash = config_hash(&out);
    for f in ["dialogue_lengths.csv", "sentence_counts.csv"] {
        assert_eq!(csv_hash(&out.join(f)), hash);
    }
    let lengths = fs::read_to_string(out.join("dialogue_lengths.csv")).unwrap();
    let total: usize = lengths
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 30);
}

#[test]
fn train_is_byte_identical_on_rerun() {
    let d = context_data();
    let run = |name: &str| {
        let out = d.root.join(name);
        let mut args = vec![
            "train",
            "--corpus",
            s(&d.corpus),
            "--embeddings",
            s(&d.emb),
            "--k",
            "2",
            "--seed",
            "3",
        ];
        args.extend(SMALL);
        args.extend(["--out", s(&out)]);
        ok(&args);
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["result.json", "config.json", "checkpoint.bin"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    // A run's config.json can seed another run.
    let c = d.root.join("c");
    ok(&[
        "train",
        "--corpus",
        s(&d.corpus),
        "--embeddings",
        s(&d.emb),
        "--config",
        s(&a.join("config.json")),
        "--out",
        s(&c),
    ]);
    assert_eq!(
        fs::read(a.join("result.json")).unwrap(),
        fs::read(c.join("result.json")).unwrap()
    );
}

#[test]
fn sweep_outputs_are_consistent_and_reproducible() {
    let d = context_data();
    let run = |name: &str, extra: &[&str]| {
        let out = d.root.join(name);
        let mut args = vec![
            "sweep",
            "--corpus",
            s(&d.corpus),
            "--embeddings",
            s(&d.emb),
            "--grid",
            "0,1,3",
            "--seeds",
            "0,1",
            "--jobs",
            "2",
        ];
        args.extend(SMALL);
        args.extend(extra);
        args.extend(["--out", s(&out)]);
        ok(&args);
        out
    };
    let a = run("a", &[]);
    let fresh = fs::read(a.join("sweep.json")).unwrap();
    assert_eq!(a.join(".cache").read_dir().unwrap().count(), 6);
    let b = run("b", &["--no-cache"]);
    // Second run into `a` is served entirely from the cache.
    run("a", &[]);
    assert_eq!(fs::read(a.join("sweep.json")).unwrap(), fresh);
    for f in ["sweep.csv", "sweep.json", "saturation.json", "f1_vs_k.svg"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(csv_hash(&a.join("sweep.csv")), config_hash(&a));

    let md = ok(&["report", "--sweep", s(&a)]);
    assert!(md.contains("| Sweep | Taxonomy"));
    assert!(md.contains("Context improvement by emotion"));
    assert_eq!(
        code(&[
            "sweep",
            "--corpus",
            s(&d.corpus),
            "--embeddings",
            s(&d.emb),
            "--grid",
            "1,2",
            "--out",
            s(&d.root.join("x"))
        ]),
        1
    );
}

#[test]
fn cache_dir_comes_from_environment() {
    let d = context_data();
    let cache = d.root.join("shared-cache");
    let out = d.root.join("sw");
    let mut args = vec![
        "sweep",
        "--corpus",
        s(&d.corpus),
        "--embeddings",
        s(&d.emb),
        "--grid",
        "0,1",
        "--seeds",
        "0",
    ];
    args.extend(SMALL);
    args.extend(["--out", s(&out)]);
    let out_status = Command::new(env!("CARGO_BIN_EXE_erc-lab"))
        .args(&args)
        .env("ERC_LAB_CACHE", &cache)
        .output()
        .unwrap();
    assert!(out_status.status.success());
    assert_eq!(cache.read_dir().unwrap().count(), 2);
    assert!(!out.join(".cache").exists());
}

#[test]
fn pooling_ablation_writes_paired_report() {
    let d = context_data();
    let out = d.root.join("abl");
    let mut args = vec![
        "ablate",
        "--corpus",
        s(&d.corpus),
        "--embeddings",
        s(&d.emb),
        "--dimension",
        "pooling",
        "--variants",
        "mean,wmean_pos",
        "--seeds",
        "0,1",
        "--no-cache",
    ];
    args.extend(SMALL);
    args.extend(["--out", s(&out)]);
    let text = ok(&args);
    assert!(text.contains("paired_t"));
    assert_eq!(csv_hash(&out.join("ablation.csv")), config_hash(&out));
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 4);
    assert_eq!(
        code(&[
            "ablate",
            "--corpus",
            s(&d.corpus),
            "--embeddings",
            s(&d.emb),
            "--dimension",
            "fusion",
            "--variants",
            "none,concat",
            "--seeds",
            "0,1",
            "--out",
            s(&out)
        ]),
        1
    );
}

#[test]
fn dm_analyze_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("dm");
    ok(&[
        "synth",
        "--kind",
        "discourse",
        "--per-emotion",
        "60",
        "--medial",
        "sad",
        "--out",
        s(&data),
    ]);
    let out = dir.path().join("out");
    let corpus = data.join("corpus.jsonl");
    let text = ok(&["dm-analyze", "--corpus", s(&corpus), "--out", s(&out)]);
    assert!(text.contains("240 occurrences"), "{text}");
    assert_eq!(csv_hash(&out.join("dm_occurrences.csv")), config_hash(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("dm_report.json")).unwrap()).unwrap();
    assert!(report["association"]["p_value"].as_f64().unwrap() < 1e-6);
    let first = fs::read(out.join("dm_report.json")).unwrap();
    ok(&["dm-analyze", "--corpus", s(&corpus), "--out", s(&out)]);
    assert_eq!(first, fs::read(out.join("dm_report.json")).unwrap());

    let filtered = dir.path().join("filtered");
    let text = ok(&[
        "dm-analyze",
        "--corpus",
        s(&corpus),
        "--markers",
        "well",
        "--out",
        s(&filtered),
    ]);
    assert!(
        text.contains("240 occurrences") && !text.contains("240 analysed"),
        "{text}"
    );
    assert_eq!(
        code(&[
            "dm-analyze",
            "--corpus",
            s(&corpus),
            "--markers",
            "zzz",
            "--out",
            s(&filtered)
        ]),
        1
    );
}
