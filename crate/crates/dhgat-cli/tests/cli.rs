//! End-to-end runs of the `dhgat` binary against a synthetic config.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dhgat")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("dhgat-cli-e2e").join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const TOY_CONFIG: &str = r#"
[data]
source = "synthetic"
nodes = 60
classes = 4
feature_dim = 8

[model]
hidden = [16, 8]
heads = [2, 1]
mlp_hidden = [8]

[train]
epochs = 6
dropout = 0.0
seed = 3
labeled_frac = 0.4
"#;

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("exp.toml");
    std::fs::write(&path, TOY_CONFIG).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("DHGAT_OUT_DIR")
        .env_remove("DHGAT_LIAR_DIR")
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn train_reruns_byte_identical_metrics() {
    let dir = scratch("train-determinism");
    let cfg = write_config(&dir);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    assert_ok(&run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]));
    assert_ok(&run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]));
    for name in ["metrics.json", "loss_curve.csv", "confusion.csv", "trace.csv", "checkpoint.bin", "config_echo.toml"]
    {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // run.json carries the wall clock and is allowed to differ.
    assert!(out_a.join("run.json").exists());
}

#[test]
fn evaluate_reproduces_the_training_confusion() {
    let dir = scratch("evaluate");
    let cfg = write_config(&dir);
    let out_t = dir.join("t");
    let out_e = dir.join("e");
    assert_ok(&run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_t.to_str().unwrap(),
    ]));
    assert_ok(&run(&[
        "evaluate",
        "--config",
        cfg.to_str().unwrap(),
        "--checkpoint",
        out_t.join("checkpoint.bin").to_str().unwrap(),
        "--out",
        out_e.to_str().unwrap(),
    ]));
    let a = std::fs::read(out_t.join("confusion.csv")).unwrap();
    let b = std::fs::read(out_e.join("confusion.csv")).unwrap();
    assert_eq!(a, b, "evaluation must reproduce the post-training confusion");

    // A different config must be refused.
    let cfg2 = dir.join("exp2.toml");
    std::fs::write(&cfg2, TOY_CONFIG.replace("epochs = 6", "epochs = 7")).unwrap();
    let out = run(&[
        "evaluate",
        "--config",
        cfg2.to_str().unwrap(),
        "--checkpoint",
        out_t.join("checkpoint.bin").to_str().unwrap(),
        "--out",
        out_e.to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("hash"), "stderr: {err}");
}

#[test]
fn build_graph_then_inspect_trace() {
    let dir = scratch("graph-trace");
    let cfg = write_config(&dir);
    let out_g = dir.join("g");
    let got = run(&[
        "build-graph",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_g.to_str().unwrap(),
    ]);
    assert_ok(&got);
    let stdout = String::from_utf8_lossy(&got.stdout);
    assert!(stdout.contains("nodes: 60"), "{stdout}");
    assert!(stdout.contains("relation kin"), "{stdout}");
    let graph_text = std::fs::read_to_string(out_g.join("graph.txt")).unwrap();
    assert!(graph_text.starts_with("n 60\n"), "graph export malformed");

    let out_t = dir.join("t");
    assert_ok(&run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_t.to_str().unwrap(),
    ]));
    let got = run(&[
        "inspect-trace",
        "--trace",
        out_t.join("trace.csv").to_str().unwrap(),
    ]);
    assert_ok(&got);
    let stdout = String::from_utf8_lossy(&got.stdout);
    assert!(stdout.contains("layer 0"), "{stdout}");
    assert!(stdout.contains("containing kin"), "{stdout}");
}

#[test]
fn sweep_writes_aggregated_cells() {
    let dir = scratch("sweep");
    let cfg_path = dir.join("exp.toml");
    let cfg = format!(
        "{TOY_CONFIG}\n[sweep]\nseeds = [1, 2]\nmodels = [\"dhgat\", \"gcn\"]\n"
    );
    std::fs::write(&cfg_path, cfg).unwrap();
    let out = dir.join("s");
    let got = run(&[
        "sweep",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&got);
    let cells: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("sweep.json")).unwrap())
            .unwrap();
    assert_eq!(cells.as_array().unwrap().len(), 2);
    let stdout = String::from_utf8_lossy(&got.stdout);
    assert!(stdout.contains("gcn"), "{stdout}");
}

#[test]
fn gradcheck_subcommand_exits_zero() {
    let got = run(&["gradcheck", "--seed", "5"]);
    assert_ok(&got);
    let stdout = String::from_utf8_lossy(&got.stdout);
    assert!(stdout.contains("PASS"), "{stdout}");
    assert!(stdout.contains("all gradient checks passed"), "{stdout}");
}

#[test]
fn config_errors_name_the_key_and_exit_nonzero() {
    let dir = scratch("bad-config");
    let path = dir.join("bad.toml");
    std::fs::write(&path, "[data]\nsource = \"synthetic\"\n[train]\nlr = -1.0\n").unwrap();
    let out = run(&["train", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train.lr"), "stderr: {err}");

    let out = run(&["train", "--config", dir.join("missing.toml").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn out_dir_env_overrides_the_flag() {
    let dir = scratch("env-out");
    let cfg = write_config(&dir);
    let flag_dir = dir.join("flag");
    let env_dir = dir.join("env");
    let out = Command::new(bin())
        .args(["train", "--config", cfg.to_str().unwrap(), "--out", flag_dir.to_str().unwrap()])
        .env("DHGAT_OUT_DIR", env_dir.to_str().unwrap())
        .env_remove("DHGAT_LIAR_DIR")
        .output()
        .unwrap();
    assert_ok(&out);
    assert!(env_dir.join("metrics.json").exists());
    assert!(!flag_dir.exists());
}
