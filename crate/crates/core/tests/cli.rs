use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spanprompt::data::load_jsonl;
use spanprompt::inference::{write_predictions, EventPrediction};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spanprompt"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic corpus in `dir/data`.
fn corpus(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let o = run(&[
        "gen-data",
        "--out",
        s(&data),
        "--seed",
        "3",
        "--set",
        "train_docs=16",
        "--set",
        "dev_docs=4",
        "--set",
        "test_docs=4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    data
}

fn train(dir: &Path, data: &Path, name: &str, extra: &[&str]) -> (PathBuf, Output) {
    let ckpt = dir.join(name);
    let mut args = vec![
        "train",
        "--train",
        s(&data.join("train.jsonl")).to_string().leak(),
        "--dev",
        s(&data.join("dev.jsonl")).to_string().leak(),
        "--templates",
        s(&data.join("templates.json")).to_string().leak(),
        "--checkpoint",
        s(&ckpt).to_string().leak(),
        "--set",
        "model.hidden=16",
        "--set",
        "model.ff_dim=32",
        "--set",
        "model.encoder_layers=1",
        "--set",
        "model.decoder_layers=1",
        "--batch-size",
        "2",
        "--eval-every",
        "2",
        "--lr",
        "1e-3",
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    (ckpt, o)
}

fn sidecar(ckpt: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", ckpt.display()))
}

#[test]
fn gen_data_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (da, db) = (corpus(a.path()), corpus(b.path()));
    for f in [
        "train.jsonl",
        "dev.jsonl",
        "test.jsonl",
        "ontology.json",
        "templates.json",
    ] {
        assert_eq!(
            fs::read(da.join(f)).unwrap(),
            fs::read(db.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn schema_reports_slot_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let o = run(&[
        "schema",
        "--train",
        s(&data.join("train.jsonl")),
        "--check",
        s(&data.join("dev.jsonl")),
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let slots: Vec<u64> = v["ontology"]["event_types"]["Attack"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["slot_count"].as_u64().unwrap())
        .collect();
    assert_eq!(slots.len(), 3);
    assert!(slots.contains(&2));
}

#[test]
fn zero_steps_emits_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let (ckpt, o) = train(dir.path(), &data, "m0.json", &["--steps", "0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ckpt.is_file());
    let log = fs::read_to_string(sidecar(&ckpt, ".metrics.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["step"], 0);
    assert!(first.get("loss").is_none());
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sidecar(&ckpt, ".manifest.json")).unwrap())
            .unwrap();
    for key in ["config_hash", "vocab_hash", "seed", "revision"] {
        assert!(!m[key].is_null(), "manifest lacks {key}");
    }
}

#[test]
fn training_predict_eval_bench_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let (a, o) = train(
        dir.path(),
        &data,
        "a.json",
        &["--steps", "4", "--format", "json"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (b, o) = train(dir.path(), &data, "b.json", &["--steps", "4"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(sidecar(&a, ".metrics.jsonl")).unwrap(),
        fs::read_to_string(sidecar(&b, ".metrics.jsonl")).unwrap()
    );

    let test = data.join("test.jsonl");
    let p1 = dir.path().join("p1.jsonl");
    let p2 = dir.path().join("p2.jsonl");
    for p in [&p1, &p2] {
        let o = run(&[
            "predict",
            "--checkpoint",
            s(&a),
            "--data",
            s(&test),
            "--out",
            s(p),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());

    let o = run(&[
        "eval",
        "--pred",
        s(&p1),
        "--gold",
        s(&test),
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["distance"].as_array().unwrap().len(), 5);

    let gold = load_jsonl(&test).unwrap();
    let as_pred: Vec<EventPrediction> = gold.iter().map(EventPrediction::from_gold).collect();
    let gp = dir.path().join("gold_pred.jsonl");
    write_predictions(&gp, &as_pred).unwrap();
    let o = run(&[
        "eval",
        "--pred",
        s(&gp),
        "--gold",
        s(&test),
        "--format",
        "json",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for m in ["arg_i", "arg_c", "head_c"] {
        assert_eq!(v["metrics"][m]["f1"], 1.0, "{m}");
    }
    for b in v["distance"]
        .as_array()
        .unwrap()
        .iter()
        .chain(v["argnum"].as_array().unwrap())
    {
        assert_eq!(b["score"]["f1"], 1.0);
    }
    let o = run(&["eval", "--pred", s(&gp), "--gold", s(&test)]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("head word = first token"));

    let o = run(&[
        "bench",
        "--checkpoint",
        s(&a),
        "--data",
        s(&test),
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["joint"]["prompt_passes"], v["events"]);
    assert_eq!(v["sequential"]["prompt_passes"], v["slots"]);
    assert_eq!(v["predictions_agree"], true);
}

#[test]
fn fixed_order_with_shuffled_gold_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let (ckpt, o) = train(
        dir.path(),
        &data,
        "f.json",
        &[
            "--steps",
            "2",
            "--loss-mode",
            "fixed_order",
            "--shuffle-gold",
            "--prompt-variant",
            "soft",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sidecar(&ckpt, ".manifest.json")).unwrap())
            .unwrap();
    let cfg = m["config"].as_str().unwrap();
    assert!(cfg.contains("loss_mode = \"fixed_order\""));
    assert!(cfg.contains("shuffle_gold = true"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[training]\nsteps = 50\nseeds = [1, 2]\n").unwrap();
    let (ckpt, o) = train(
        dir.path(),
        &data,
        "c.json",
        &["--config", s(&cfg), "--steps", "2"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sidecar(&ckpt, ".manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["runs"].as_array().unwrap().len(), 2);
    assert!(m["runs"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["best_step"].as_u64().unwrap() <= 2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = corpus(dir.path());
    // usage and validation problems
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(
        code(&run(&["eval", "--pred", "/no/such", "--gold", "/no/such"])),
        1
    );
    assert_eq!(code(&run(&["train", "--steps", "1"])), 1);
    let (_, o) = train(dir.path(), &data, "x.json", &["--set", "training.stepz=1"]);
    assert_eq!(code(&o), 1);
    let (_, o) = train(dir.path(), &data, "x.json", &["--ratio", "1.5"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(&["--help"])), 0);

    // checkpoint trained on another vocabulary
    let (ckpt, o) = train(dir.path(), &data, "v.json", &["--steps", "0"]);
    assert_eq!(code(&o), 0);
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&ckpt).unwrap()).unwrap();
    v["vocab_hash"] = "0000".into();
    fs::write(&ckpt, v.to_string()).unwrap();
    let o = run(&[
        "predict",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data.join("test.jsonl")),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("vocabulary hash mismatch"));

    // failure while running: output directory does not exist
    let (_, o) = train(dir.path(), &data, "missing/dir/m.json", &["--steps", "0"]);
    assert_eq!(code(&o), 2);
}
