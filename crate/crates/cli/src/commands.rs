use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use kbrn::analysis::{export_activation_shapes, gradient_norm_trace, mean_trace};
use kbrn::benchmarks::{gen_prefix_task, DatasetMeta, SequenceDataset, Split};
use kbrn::cells::CellKind;
use kbrn::model::Model;
use kbrn::training::{self, accuracy, gradcheck_suite, Sample, TrainHistory};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::csv::{history_csv, shapes_csv, sweep_csv, trace_csv, SweepRow};
use crate::error::CliError;

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Serialize, Deserialize)]
struct MetaDoc {
    train: DatasetMeta,
    test: DatasetMeta,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Writes `train.jsonl`, `test.jsonl` and `meta.json` into `dir`.
pub fn write_dataset(dir: &Path, train: &SequenceDataset, test: &SequenceDataset) -> Result<Vec<PathBuf>, CliError> {
    create_dir(dir)?;
    let mut paths = Vec::new();
    for (name, ds) in [(TRAIN_FILE, train), (TEST_FILE, test)] {
        let p = dir.join(name);
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf)?;
        fs::write(&p, buf).map_err(|e| io_err(&p, e))?;
        paths.push(p);
    }
    let meta = dir.join(META_FILE);
    let doc = MetaDoc {
        train: train.meta,
        test: test.meta,
    };
    write_file(&meta, &serde_json::to_string_pretty(&doc).expect("meta serializes"))?;
    paths.push(meta);
    Ok(paths)
}

/// Loads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<(SequenceDataset, SequenceDataset), CliError> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| io_err(&meta_path, e))?;
    let doc: MetaDoc = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}:{}:{}: {e}", meta_path.display(), e.line(), e.column())))?;
    let load = |name: &str, meta: DatasetMeta| -> Result<SequenceDataset, CliError> {
        let p = dir.join(name);
        let f = fs::File::open(&p).map_err(|e| io_err(&p, e))?;
        SequenceDataset::read_jsonl(meta, BufReader::new(f))
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
    };
    Ok((load(TRAIN_FILE, doc.train)?, load(TEST_FILE, doc.test)?))
}

/// Reads a lone JSON-lines file; `T` comes from the first record.
pub fn read_jsonl_file(path: &Path, alphabet: usize, num_classes: usize) -> Result<SequenceDataset, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| CliError::Input(format!("{}: no sequences", path.display())))?;
    let rec: kbrn::benchmarks::SequenceRecord = serde_json::from_str(first)
        .map_err(|e| CliError::Input(format!("{}:1:{}: {e}", path.display(), e.column())))?;
    let meta = DatasetMeta {
        seq_len: rec.symbols.len(),
        alphabet,
        prefix_len: 1,
        num_classes,
        noise: Default::default(),
        seed: 0,
        split: Split::Test,
    };
    SequenceDataset::read_jsonl(meta, text.as_bytes()).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn genbench(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let (train, test) = gen_prefix_task(&cfg.task_spec(cfg.data.seq_len), cfg.seed)?;
    for p in write_dataset(&cfg.run_dir("genbench"), &train, &test)? {
        writeln!(out, "{}", p.display())?;
    }
    Ok(())
}

fn dataset_for(cfg: &ExperimentConfig, seq_len: usize) -> Result<(Vec<Sample>, Vec<Sample>), CliError> {
    let (train, test) = match &cfg.data.dir {
        Some(dir) => {
            let (train, test) = read_dataset(dir)?;
            if train.meta.alphabet != cfg.data.alphabet || train.meta.num_classes != cfg.data.num_classes {
                return Err(CliError::Config(format!(
                    "{}: alphabet/classes ({}, {}) differ from the config ({}, {})",
                    dir.display(),
                    train.meta.alphabet,
                    train.meta.num_classes,
                    cfg.data.alphabet,
                    cfg.data.num_classes
                )));
            }
            (train, test)
        }
        None => gen_prefix_task(&cfg.task_spec(seq_len), cfg.seed)?,
    };
    Ok((train.to_samples(), test.to_samples()))
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    cell: CellKind,
    seq_len: usize,
    seed: u64,
    epochs: usize,
    final_train_acc: f64,
    final_test_acc: f64,
    best_test_acc: f64,
    epochs_to_95: i64,
    seconds: f64,
}

struct RunResult {
    model: Model,
    history: TrainHistory,
    final_test_acc: f64,
    seconds: f64,
}

fn train_once(cfg: &ExperimentConfig, cell: CellKind, seq_len: usize) -> Result<RunResult, CliError> {
    let (train_set, test_set) = dataset_for(cfg, seq_len)?;
    let start = Instant::now();
    let (model, history) = training::train(&cfg.model_config_for(cell), &train_set, &test_set, &cfg.train_config())?;
    let final_test_acc = accuracy(&model, &test_set)?;
    Ok(RunResult {
        model,
        history,
        final_test_acc,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn best(h: &TrainHistory) -> f64 {
    h.records.iter().map(|r| r.val_acc).fold(f64::NAN, f64::max)
}

pub fn train(cfg: &ExperimentConfig, timings: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = cfg.run_dir("train");
    create_dir(&dir)?;
    let r = train_once(cfg, cfg.model.cell, cfg.data.seq_len)?;
    write_file(&dir.join("model.json"), &r.model.to_json())?;
    write_file(&dir.join("history.csv"), &history_csv(&r.history, timings))?;
    let summary = TrainSummary {
        cell: cfg.model.cell,
        seq_len: cfg.data.seq_len,
        seed: cfg.seed,
        epochs: r.history.len(),
        final_train_acc: r.history.records.last().map_or(f64::NAN, |x| x.train_acc),
        final_test_acc: r.final_test_acc,
        best_test_acc: best(&r.history),
        epochs_to_95: r.history.epochs_to(cfg.sweep.threshold).map_or(-1, |e| e as i64),
        seconds: r.seconds,
    };
    write_file(&dir.join("summary.json"), &json_nan_safe(&summary))?;
    writeln!(out, "{}", dir.display())?;
    writeln!(out, "final test accuracy {}", crate::csv::fmt_g9(r.final_test_acc))?;
    Ok(())
}

/// serde_json refuses NaN; write it as null.
fn json_nan_safe<T: Serialize>(v: &T) -> String {
    let value = serde_json::to_value(v).unwrap_or(serde_json::Value::Null);
    serde_json::to_string_pretty(&value).expect("value serializes")
}

pub fn gradcheck(cell: CellKind, seed: u64, instances: usize, out: &mut dyn Write) -> Result<(), CliError> {
    let report = gradcheck_suite(cell, seed, instances)?;
    writeln!(
        out,
        "{cell}: max relative error {:.3e} over {} instances (tolerance {:.0e})",
        report.max_rel_error,
        report.instances.len(),
        report.tolerance
    )?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "{cell} gradient check failed: {:.3e} > {:.0e}",
            report.max_rel_error, report.tolerance
        )))
    }
}

pub fn analyze(
    model_path: &Path,
    data_path: &Path,
    out_dir: Option<&Path>,
    grid: (f64, f64, usize),
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let text = fs::read_to_string(model_path).map_err(|e| io_err(model_path, e))?;
    let model = Model::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", model_path.display())))?;
    let data = read_jsonl_file(data_path, model.config.input_size, model.num_classes())?;
    let traces = data
        .to_samples()
        .iter()
        .map(|s| gradient_norm_trace(&model, &s.inputs, s.label))
        .collect::<kbrn::Result<Vec<_>>>()?;
    let trace = mean_trace(&traces)?;
    let shapes = export_activation_shapes(&model, grid.0, grid.1, grid.2)?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => model_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    create_dir(&dir)?;
    let trace_path = dir.join("trace.csv");
    let shapes_path = dir.join("shapes.csv");
    write_file(&trace_path, &trace_csv(&trace))?;
    write_file(&shapes_path, &shapes_csv(&shapes))?;
    writeln!(out, "{}", trace_path.display())?;
    writeln!(out, "{}", shapes_path.display())?;
    Ok(())
}

/// Trains every `(T, cell)` grid point; rows come out in grid order
/// regardless of `parallel`.
pub fn sweep_rows(cfg: &ExperimentConfig, parallel: usize) -> Result<Vec<(SweepRow, Option<TrainHistory>)>, CliError> {
    let jobs: Vec<(usize, CellKind)> = cfg
        .sweep
        .seq_lens
        .iter()
        .flat_map(|&t| cfg.sweep.cells.iter().map(move |&c| (t, c)))
        .collect();
    let results: Mutex<Vec<Option<Result<(SweepRow, Option<TrainHistory>), CliError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(t, cell)) = jobs.get(i) else { break };
        let res = match train_once(cfg, cell, t) {
            Ok(r) => Ok((
                SweepRow {
                    seq_len: t,
                    cell,
                    final_test_acc: r.final_test_acc,
                    epochs_to_95: r.history.epochs_to(cfg.sweep.threshold).map_or(-1, |e| e as i64),
                    seconds: r.seconds,
                },
                Some(r.history),
            )),
            Err(CliError::Numerical(_)) => Ok((
                SweepRow {
                    seq_len: t,
                    cell,
                    final_test_acc: f64::NAN,
                    epochs_to_95: -1,
                    seconds: f64::NAN,
                },
                None,
            )),
            Err(e) => Err(e),
        };
        results.lock().expect("no poisoned lock")[i] = Some(res);
    };
    std::thread::scope(|s| {
        for _ in 0..parallel.max(1) {
            s.spawn(worker);
        }
    });
    results
        .into_inner()
        .expect("no poisoned lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

pub fn sweep(cfg: &ExperimentConfig, parallel: usize, timings: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = cfg.run_dir("sweep");
    create_dir(&dir)?;
    let rows = sweep_rows(cfg, parallel)?;
    for (row, hist) in &rows {
        if let Some(h) = hist {
            write_file(
                &dir.join(format!("history-T{}-{}.csv", row.seq_len, row.cell)),
                &history_csv(h, timings),
            )?;
        }
    }
    let table: Vec<SweepRow> = rows.into_iter().map(|(r, _)| r).collect();
    let path = dir.join("results.csv");
    write_file(&path, &sweep_csv(&table, timings))?;
    let seconds: Vec<_> = table
        .iter()
        .map(|r| serde_json::json!({"T": r.seq_len, "cell": r.cell, "seconds": r.seconds}))
        .collect();
    write_file(
        &dir.join("summary.json"),
        &json_nan_safe(&serde_json::json!({ "runs": seconds })),
    )?;
    writeln!(out, "{}", path.display())?;
    Ok(())
}
