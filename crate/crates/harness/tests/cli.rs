mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{read_tree, tiny_config};

fn hebb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hebb"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn path(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn train_evaluate_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config(3).to_toml());
    let out = dir.path().join("run");
    let o = hebb(&["train", "--config", &cfg, "--out-dir", &path(&out), "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("| hebbian rho=1 |"), "{stdout}");
    let tree = read_tree(&out);
    for f in [
        "config.toml",
        "history.jsonl",
        "history.csv",
        "checkpoint.bin",
        "results.json",
        "results.csv",
        "results.md",
    ] {
        assert!(tree.contains_key(f), "{f}");
    }
    // the frozen config reloads to the same experiment
    let frozen = hebb_harness::ExperimentConfig::parse(std::str::from_utf8(&tree["config.toml"]).unwrap()).unwrap();
    assert_eq!(frozen, tiny_config(3));

    let eval_dir = dir.path().join("eval");
    let o = hebb(&[
        "evaluate",
        "--config",
        &cfg,
        "--checkpoint",
        &path(&out.join("checkpoint.bin")),
        "--out-dir",
        &path(&eval_dir),
        "--workers",
        "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(eval_dir.join("results.json")).unwrap(),
        tree["results.json"]
    );

    let trace = dir.path().join("trace.jsonl");
    let o = hebb(&[
        "replay",
        "--config",
        &cfg,
        "--out-dir",
        &path(&out),
        "--variation",
        "2",
        "--episode",
        "1",
        "--trace",
        &path(&trace),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = std::fs::read_to_string(&trace).unwrap();
    let rewards: f64 = lines
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["reward"]
                .as_f64()
                .unwrap()
        })
        .sum();
    let stderr = String::from_utf8(o.stderr).unwrap();
    assert!(stderr.contains("2:friction-x2 episode 1"), "{stderr}");
    assert!(rewards > 0.0);
}

#[test]
fn overrides_apply_and_are_frozen() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &tiny_config(1).to_toml());
    let out = dir.path().join("run");
    let o = hebb(&[
        "train",
        "--config",
        &cfg,
        "--out-dir",
        &path(&out),
        "--seed",
        "77",
        "--held-out",
        "2",
        "--rho",
        "N",
        "--no-eval",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let frozen = std::fs::read_to_string(out.join("config.toml")).unwrap();
    let c = hebb_harness::ExperimentConfig::parse(&frozen).unwrap();
    assert_eq!((c.seed, c.held_out), (77, 2));
    assert_eq!(c.model.kind, hebb_core::ModelKind::SingleRule);
    assert!(!out.join("results.json").exists());

    let out = dir.path().join("static");
    let o = hebb(&[
        "train",
        "--config",
        &cfg,
        "--out-dir",
        &path(&out),
        "--baseline",
        "recurrent",
        "--no-eval",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let c = hebb_harness::ExperimentConfig::parse(&std::fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(c.baseline, hebb_harness::Baseline::Recurrent);
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(&dir.path().join("run"));
    let cases = [
        "task = \"cartpole-var\"\ngenerations = 1\nbogus = 3\n",
        "task = \"pendulum\"\ngenerations = 1\n",
        "task = \"cartpole-var\"\ngenerations = 1\nheld_out = 6\n",
        "task = \"cartpole-var\"\ngenerations = 1\n[model]\nkind = \"shared-gmm\"\nrho = 48\n",
        "task = \"cartpole-var\"\ngenerations = 1\n[es]\npopulation_size = 7\n",
        "task = \"cartpole-var\"\ngenerations = 1\nbaseline = \"static\"\n[model]\nkind = \"shared-gmm\"\nrho = 16\n",
        "not toml at all [",
        "task = \"cartpole-var\"\ngenerations = 1\nhidden_layers = [100000]\n",
        "task = \"cartpole-var\"\ngenerations = 1\nhidden_layers = [4096, 4096]\n",
    ];
    for text in cases {
        let cfg = write_config(dir.path(), text);
        let o = hebb(&["train", "--config", &cfg, "--out-dir", &out, "--workers", "1"]);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{text}\n{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let o = hebb(&[
        "train",
        "--config",
        &path(&dir.path().join("missing.toml")),
        "--out-dir",
        &out,
    ]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = write_config(dir.path(), &tiny_config(1).to_toml());
    let o = hebb(&["train", "--config", &cfg, "--out-dir", &out, "--workers", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = hebb(&["train", "--config", &cfg, "--rho", "seven"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_abort_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = tiny_config(20);
    c.es.learning_rate = f64::MAX;
    let cfg = write_config(dir.path(), &c.to_toml());
    let out = dir.path().join("run");
    let o = hebb(&["train", "--config", &cfg, "--out-dir", &path(&out), "--workers", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("diverged.bin").exists());
}

#[test]
fn verify_writes_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = hebb(&["verify", "--trials", "100", "--out-dir", &path(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("verify: PASS"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["gradients"].as_array().unwrap().len(), 5);
    for g in report["gradients"].as_array().unwrap() {
        assert_eq!(g["trials"], 100);
        assert!(g["max_rel_error"].as_f64().unwrap() < 1e-4);
    }
}

#[test]
fn shipped_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let c = hebb_harness::ExperimentConfig::load(&p).unwrap();
        hebb_harness::Experiment::resolve(c).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        seen += 1;
    }
    assert!(seen >= 4);
}
