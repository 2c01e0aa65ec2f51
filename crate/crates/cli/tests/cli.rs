use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semid::data::EmbeddingMatrix;
use serde_json::Value;
use tempfile::TempDir;

fn semid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semid"))
        .current_dir(dir)
        .env_remove("RSID_THREADS")
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Small deterministic generator so fixtures need no extra dependencies.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 33
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    fn unit(&mut self) -> f32 {
        self.next() as f32 / (1u64 << 31) as f32 - 0.5
    }
}

fn write_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let mut rng = Lcg(7);
    let mut items = String::new();
    for i in 0..40 {
        items.push_str(&format!("item{i}\tcat{}\tbrand{}\n", i % 5, rng.below(4)));
    }
    let mut seqs = String::new();
    for u in 0..30 {
        let len = 5 + rng.below(4);
        let hist: Vec<String> = (0..len).map(|_| format!("item{}", rng.below(40))).collect();
        seqs.push_str(&format!("user{u}\t{}\n", hist.join(" ")));
    }
    let (ip, sp) = (dir.join("items.tsv"), dir.join("seqs.tsv"));
    fs::write(&ip, items).unwrap();
    fs::write(&sp, seqs).unwrap();
    (ip, sp)
}

fn write_embeddings(dir: &Path, rows: usize, dim: usize) -> PathBuf {
    let mut rng = Lcg(11);
    let values: Vec<f32> = (0..rows * dim).map(|_| rng.unit()).collect();
    let tokens = (0..rows).map(|i| format!("item{i}")).collect();
    let emb = EmbeddingMatrix::new(rows, dim, values, tokens).unwrap();
    let path = dir.join("emb.rsid");
    emb.write(&path).unwrap();
    path
}

const SMALL_MODEL: &[&str] = &[
    "--dim",
    "8",
    "--layers",
    "1",
    "--heads",
    "2",
    "--ffn",
    "16",
    "--negatives",
    "0",
    "--batch",
    "16",
    "--max-len",
    "8",
    "--seed",
    "3",
];

#[test]
fn missing_items_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = semid(
        dir.path(),
        &["train", "--sequences", "seqs.tsv", "--checkpoint", "m.ckpt"],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--items"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&semid(dir.path(), &["cost", "--bogus", "1"])), 2);
}

#[test]
fn zero_epochs_write_initial_parameters_and_an_empty_log() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    let mut args = vec![
        "train",
        "--items",
        "items.tsv",
        "--sequences",
        "seqs.tsv",
        "--checkpoint",
        "m.ckpt",
    ];
    args.extend(["--log", "metrics.jsonl", "--epochs", "0"]);
    args.extend(SMALL_MODEL);
    let summary = stdout_json(&semid(dir.path(), &args));
    assert_eq!(summary["epochs_run"], 0);
    assert_eq!(fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap(), "");
    assert!(dir.path().join("m.ckpt").metadata().unwrap().len() > 0);
}

#[test]
fn same_seed_gives_identical_metrics_logs() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    let mut logs = Vec::new();
    for run in ["a", "b"] {
        let (ckpt, log) = (format!("{run}.ckpt"), format!("{run}.jsonl"));
        let mut args = vec![
            "--threads",
            "1",
            "train",
            "--items",
            "items.tsv",
            "--sequences",
            "seqs.tsv",
        ];
        args.extend(["--checkpoint", &ckpt, "--log", &log, "--epochs", "2", "--patience", "5"]);
        args.extend(SMALL_MODEL);
        stdout_json(&semid(dir.path(), &args));
        logs.push(fs::read(dir.path().join(&log)).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
    let text = String::from_utf8(logs[0].clone()).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    for (i, line) in lines.iter().enumerate() {
        assert_eq!(line["epoch"], i + 1);
        assert!(line["loss"].as_f64().unwrap().is_finite());
        assert!(line["metric1"].is_number() && line["metric2"].is_number());
    }
    let ckpts: Vec<Vec<u8>> = ["a.ckpt", "b.ckpt"]
        .iter()
        .map(|f| fs::read(dir.path().join(f)).unwrap())
        .collect();
    assert_eq!(ckpts[0], ckpts[1]);
}

#[test]
fn diagnose_levels_match_codebook_levels() {
    let dir = TempDir::new().unwrap();
    write_embeddings(dir.path(), 60, 6);
    let args = [
        "quantize",
        "--method",
        "gaoq",
        "--branching",
        "4,3",
        "--seed",
        "5",
        "--in",
        "emb.rsid",
    ];
    let summary = stdout_json(&semid(
        dir.path(),
        &[&args[..], &["--out", "sids.tsv", "--codebook", "cb.json"]].concat(),
    ));
    assert_eq!(summary["items"], 60);
    let cb: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("cb.json")).unwrap()).unwrap();
    let cb_levels = cb["levels"].as_array().unwrap();

    let out = semid(
        dir.path(),
        &[
            "diagnose", "--sids", "sids.tsv", "--emb", "emb.rsid", "--report", "r.json",
        ],
    );
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    let levels = report["levels"].as_array().unwrap();
    assert_eq!(levels.len(), cb_levels.len());
    for (l, c) in levels.iter().zip(cb_levels) {
        assert_eq!(l["alphabet_size"], c["alphabet_size"]);
    }
    // Every SID is unique, so the joint entropy is ln N.
    assert!((report["joint_entropy"].as_f64().unwrap() - 60f64.ln()).abs() < 1e-12);
}

#[test]
fn aligned_and_local_indexing_share_first_level_entropy() {
    let dir = TempDir::new().unwrap();
    write_embeddings(dir.path(), 80, 5);
    let mut h1 = Vec::new();
    for method in ["gaoq", "hkmeans"] {
        let sids = format!("{method}.tsv");
        let args = [
            "quantize",
            "--method",
            method,
            "--branching",
            "5,4",
            "--seed",
            "9",
            "--in",
            "emb.rsid",
            "--out",
            &sids,
        ];
        stdout_json(&semid(dir.path(), &args));
        let report = stdout_json(&semid(dir.path(), &["diagnose", "--sids", &sids]));
        h1.push(report["levels"][0]["H_marginal"].as_f64().unwrap());
    }
    assert_eq!(h1[0], h1[1]);
}

#[test]
fn quantization_is_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    write_embeddings(dir.path(), 70, 4);
    for threads in ["1", "3"] {
        let out = format!("t{threads}.tsv");
        let args = [
            "--threads",
            threads,
            "quantize",
            "--branching",
            "4,4",
            "--in",
            "emb.rsid",
            "--out",
            &out,
        ];
        stdout_json(&semid(dir.path(), &args));
    }
    assert_eq!(
        fs::read(dir.path().join("t1.tsv")).unwrap(),
        fs::read(dir.path().join("t3.tsv")).unwrap()
    );
}

#[test]
fn cost_with_default_encoder_shape() {
    let dir = TempDir::new().unwrap();
    let report = stdout_json(&semid(dir.path(), &["cost"]));
    let (t, j, d, l) = (32u64, 5u64, 128u64, 2u64);
    let expected = t * j * d + l * (t * t * d + t * d * d);
    assert_eq!(expected, 1_331_200);
    assert_eq!(report["famae"].as_u64(), Some(expected));
    assert_eq!(report["total"].as_u64(), Some(expected));
    assert!(report["gaoq"].is_null());
}

#[test]
fn cost_rejects_a_partial_generator_shape() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&semid(dir.path(), &["cost", "--t5-dim", "512"])), 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        "threads = 1\n[cost]\nlayers = 4\ndim = 64\n",
    )
    .unwrap();
    let report = stdout_json(&semid(dir.path(), &["--config", "run.toml", "cost", "--dim", "128"]));
    let (t, j, d, l) = (32u64, 5u64, 128u64, 4u64);
    assert_eq!(report["famae"].as_u64(), Some(t * j * d + l * (t * t * d + t * d * d)));
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("a.toml"), "[cost]\nlayerz = 4\n").unwrap();
    fs::write(dir.path().join("b.toml"), "[costs]\nlayers = 4\n").unwrap();
    assert_eq!(code(&semid(dir.path(), &["--config", "a.toml", "cost"])), 2);
    assert_eq!(code(&semid(dir.path(), &["--config", "b.toml", "cost"])), 2);
}

#[test]
fn outputs_may_not_overwrite_inputs() {
    let dir = TempDir::new().unwrap();
    let emb = write_embeddings(dir.path(), 20, 3);
    let before = fs::read(&emb).unwrap();
    let out = semid(
        dir.path(),
        &[
            "quantize",
            "--branching",
            "2,2",
            "--in",
            "emb.rsid",
            "--out",
            "./emb.rsid",
        ],
    );
    assert_eq!(code(&out), 2);
    assert_eq!(fs::read(&emb).unwrap(), before);
}

#[test]
fn malformed_embedding_file_is_a_runtime_error_naming_the_file() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.rsid"), b"not an embedding file").unwrap();
    let out = semid(
        dir.path(),
        &["quantize", "--branching", "2,2", "--in", "bad.rsid", "--out", "s.tsv"],
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.rsid"));
    assert!(!dir.path().join("s.tsv").exists());
}

#[test]
fn bound_check_holds_on_random_instances() {
    let dir = TempDir::new().unwrap();
    let report = stdout_json(&semid(dir.path(), &["bound-check", "--instances", "20", "--seed", "4"]));
    assert_eq!(report["instances"], 20);
    assert_eq!(report["holds"], true);
    assert!(report["max_gap_kl_mismatch"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn logs_are_json_lines_and_echo_the_effective_config() {
    let dir = TempDir::new().unwrap();
    let out = semid(dir.path(), &["cost", "--layers", "3"]);
    assert_eq!(code(&out), 0);
    let stderr = String::from_utf8(out.stderr).unwrap();
    let records: Vec<Value> = stderr
        .lines()
        .map(|l| serde_json::from_str(l).expect("JSON log line"))
        .collect();
    assert!(records
        .iter()
        .any(|r| r["msg"].as_str().unwrap().contains("\"layers\":3")));
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    write_dataset(dir.path());
    let prep = [
        "prepare",
        "--items",
        "items.tsv",
        "--sequences",
        "seqs.tsv",
        "--fields",
        "id,category,brand",
    ];
    assert_eq!(
        code(&semid(
            dir.path(),
            &[&prep[..], &["--max-len", "8", "--out-dir", "prep"]].concat()
        )),
        0
    );
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("prep/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["vocab_sizes"][0], 40);
    assert_eq!(summary["windows"]["test"], 30);

    let mut train = vec![
        "--threads",
        "1",
        "train",
        "--items",
        "items.tsv",
        "--sequences",
        "seqs.tsv",
    ];
    train.extend(["--checkpoint", "m.ckpt", "--epochs", "2"]);
    train.extend(SMALL_MODEL);
    stdout_json(&semid(dir.path(), &train));

    let eval = [
        "eval",
        "--checkpoint",
        "m.ckpt",
        "--items",
        "items.tsv",
        "--sequences",
        "seqs.tsv",
        "--k",
        "40",
    ];
    let metrics = stdout_json(&semid(dir.path(), &eval));
    assert_eq!(metrics["windows"], 30);
    // k equal to the item count always recalls the target.
    assert_eq!(metrics["metric1"], 1.0);

    assert_eq!(
        code(&semid(
            dir.path(),
            &[
                "extract",
                "--checkpoint",
                "m.ckpt",
                "--items",
                "items.tsv",
                "--out",
                "e.rsid"
            ]
        )),
        0
    );
    let emb = EmbeddingMatrix::read(dir.path().join("e.rsid")).unwrap();
    assert_eq!((emb.rows(), emb.dim()), (40, 24));

    stdout_json(&semid(
        dir.path(),
        &["quantize", "--branching", "3,3", "--in", "e.rsid", "--out", "s.tsv"],
    ));
    let diag = [
        "diagnose",
        "--sids",
        "s.tsv",
        "--emb",
        "e.rsid",
        "--corpus",
        "prep/train.pairs.tsv",
        "--bits",
    ];
    let report = stdout_json(&semid(dir.path(), &diag));
    assert_eq!(report["units"], "bits");
    assert!(report["pairs_used"].as_u64().unwrap() > 0);
    assert!(report["levels"][0]["overlap"].is_number());
}
