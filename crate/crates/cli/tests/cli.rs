use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kbrn::cells::CellKind;
use kbrn::math::Rng;
use kbrn::model::{Model, ModelConfig};
use kbrn::params::{ParamKind, Parameters};
use kbrn_cli::ExperimentConfig;

fn kbrn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbrn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn small_config(dir: &Path, f: impl FnOnce(&mut ExperimentConfig)) -> PathBuf {
    let mut c = ExperimentConfig::default();
    c.out_dir = dir.join("runs");
    c.data.n_train = 60;
    c.data.n_test = 20;
    c.train.epochs = 2;
    c.train.batch_size = 16;
    c.model.hidden = 3;
    c.model.num_centers = 4;
    f(&mut c);
    let p = dir.join("config.json");
    fs::write(&p, c.to_pretty_json()).unwrap();
    p
}

fn only_subdir(root: &Path, prefix: &str) -> PathBuf {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

#[test]
fn print_default_round_trips() {
    let o = kbrn(&["--print-default"]);
    assert_eq!(code(&o), 0);
    let cfg = ExperimentConfig::parse(std::str::from_utf8(&o.stdout).unwrap(), "stdout").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn genbench_writes_default_sized_splits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), |c| {
        c.data.n_train = 2000;
        c.data.n_test = 500;
    });
    let o = kbrn(&["genbench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let printed: Vec<&str> = std::str::from_utf8(&o.stdout).unwrap().lines().collect();
    assert_eq!(printed.len(), 3);
    let dir = only_subdir(&tmp.path().join("runs"), "genbench-");
    let lines = |f: &str| fs::read_to_string(dir.join(f)).unwrap().lines().count();
    assert_eq!(lines("train.jsonl"), 2000);
    assert_eq!(lines("test.jsonl"), 500);
    assert!(dir.file_name().unwrap().to_string_lossy().ends_with("-s0"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), |c| c.data.alphabet = 1);
    for cmd in ["genbench", "train", "sweep"] {
        let o = kbrn(&[cmd, "--config", cfg.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{cmd}");
    }
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\n  \"seed\": 1,\n  \"modle\": {}\n}\n").unwrap();
    let o = kbrn(&["train", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");
}

#[test]
fn missing_dataset_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), |c| c.data.dir = Some(tmp.path().join("nowhere")));
    assert_eq!(code(&kbrn(&["train", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn divergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), |c| {
        c.train.lr = 1e308;
        c.train.epochs = 5;
    });
    let o = kbrn(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_epochs_writes_model_and_empty_history() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), |c| c.train.epochs = 0);
    assert_eq!(code(&kbrn(&["train", "--config", cfg.to_str().unwrap()])), 0);
    let dir = only_subdir(&tmp.path().join("runs"), "train-");
    Model::from_json(&fs::read_to_string(dir.join("model.json")).unwrap()).unwrap();
    assert_eq!(
        fs::read_to_string(dir.join("history.csv")).unwrap(),
        "epoch,train_loss,train_acc,val_acc,seconds\n"
    );
}

#[test]
fn train_uses_genbench_output_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), |_| {});
    assert_eq!(code(&kbrn(&["genbench", "--config", cfg.to_str().unwrap()])), 0);
    let data = only_subdir(&tmp.path().join("runs"), "genbench-");
    let cfg = small_config(tmp.path(), |c| c.data.dir = Some(data.clone()));
    let o = kbrn(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "7",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = only_subdir(&tmp.path().join("o"), "train-");
    assert!(dir.to_string_lossy().ends_with("-s7"));
    let history = fs::read_to_string(dir.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["epochs"], 2);
}

#[test]
fn gradcheck_passes_for_every_cell() {
    for cell in ["kbrn", "tanh", "lstm"] {
        let o = kbrn(&["gradcheck", "--cell", cell, "--seed", "3"]);
        assert_eq!(code(&o), 0, "{cell}: {}", String::from_utf8_lossy(&o.stdout));
    }
    assert_eq!(code(&kbrn(&["gradcheck", "--cell", "gru"])), 2);
}

#[test]
fn analyze_zero_coefficient_model() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ModelConfig::new(CellKind::Kbrn, 5, 3, 2);
    cfg.num_centers = 4;
    let mut m = Model::init(&cfg, &mut Rng::seed(2)).unwrap();
    for p in m.params_mut() {
        if p.kind == ParamKind::Coefficients {
            p.data.iter_mut().for_each(|x| *x = 0.0);
        }
    }
    let model = tmp.path().join("model.json");
    fs::write(&model, m.to_json()).unwrap();
    let data = tmp.path().join("test.jsonl");
    fs::write(
        &data,
        "{\"label\":0,\"symbols\":[0,3,4,1]}\n{\"label\":1,\"symbols\":[1,2,2,0]}\n",
    )
    .unwrap();
    let out = tmp.path().join("analysis");
    let o = kbrn(&[
        "analyze",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--grid-n",
        "11",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    let rows: Vec<Vec<f64>> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for r in &rows[..3] {
        assert_eq!(r[1], 0.0);
    }
    assert!(rows[3][1] > 0.0);
    let shapes = fs::read_to_string(out.join("shapes.csv")).unwrap();
    assert_eq!(shapes.lines().count(), 1 + 3 * 11);

    fs::write(&data, "{\"label\":0,\"symbols\":[0,3,9,1]}\n").unwrap();
    let o = kbrn(&[
        "analyze",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_rows_follow_grid_order_for_any_parallelism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), |c| c.sweep.seq_lens = vec![4, 6]);
    let mut bodies = Vec::new();
    for (i, par) in ["1", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("o{i}"));
        let o = kbrn(&[
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--parallel",
            par,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let dir = only_subdir(&out, "sweep-");
        bodies.push(fs::read_to_string(dir.join("results.csv")).unwrap());
        assert!(dir.join("history-T6-lstm.csv").exists());
    }
    assert_eq!(bodies[0], bodies[1]);
    let keys: Vec<String> = bodies[0]
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(keys, ["4,kbrn", "4,tanh", "4,lstm", "6,kbrn", "6,tanh", "6,lstm"]);
    assert!(bodies[0].lines().skip(1).all(|l| l.ends_with(',')));
}

#[test]
fn sweep_records_divergence_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), |c| {
        c.sweep.seq_lens = vec![5];
        c.sweep.cells = vec![CellKind::Tanh];
        c.train.lr = 1e308;
        c.train.epochs = 5;
    });
    let o = kbrn(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = only_subdir(&tmp.path().join("runs"), "sweep-");
    let body = fs::read_to_string(dir.join("results.csv")).unwrap();
    assert_eq!(body.lines().nth(1), Some("5,tanh,NaN,-1,"));
}

#[test]
fn timings_fill_seconds_column() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), |_| {});
    assert_eq!(
        code(&kbrn(&["train", "--config", cfg.to_str().unwrap(), "--timings"])),
        0
    );
    let dir = only_subdir(&tmp.path().join("runs"), "train-");
    let history = fs::read_to_string(dir.join("history.csv")).unwrap();
    assert!(history.lines().skip(1).all(|l| !l.ends_with(',')));
}

#[test]
fn default_kbrn_solves_short_sequences() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::default();
    c.out_dir = tmp.path().join("runs");
    c.train.target_accuracy = Some(0.95);
    let cfg = tmp.path().join("config.json");
    fs::write(&cfg, c.to_pretty_json()).unwrap();
    let o = kbrn(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = only_subdir(&tmp.path().join("runs"), "train-");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary["final_test_acc"].as_f64().unwrap() >= 0.95, "{summary}");
}
