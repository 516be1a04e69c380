//! Runs the ten acceptance criteria and prints one PASS/FAIL line each.
//! Exits nonzero if any criterion fails or exceeds its time budget.

// `ensure!(x < tol)` negates the comparison so that NaN fails.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use featureless::bench::{time_pipelines, BaselineModel, BenchOptions, BASELINE_NAME};
use featureless::dataset::{build_dataset, stratified_split, BuildOptions, DatasetFile, Sample, Task};
use featureless::dissect::dissect;
use featureless::metrics::{ConfusionMatrix, MetricsReport};
use featureless::nn::{Architecture, Checkpoint, Model, Pairing, Profile};
use featureless::synth::{synth_corpus, SynthSpec};
use featureless::train::{evaluate, predict_all, train, Examples, ModelConfig};
use featureless::views::{split_view, strip_headers, HeaderCategory, ViewKind};
use rand::Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion = (u8, &'static str, u64, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

fn shapes() -> Outcome {
    let mut seen = Vec::new();
    for (classes, head) in [(2, "2"), (12, "12")] {
        let arch = Architecture::default_for(classes);
        ensure!(arch.input_len == 115, "input length {}", arch.input_len);
        let got: Vec<String> = arch.shapes().map_err(|e| e.to_string())?.iter().map(|s| s.to_string()).collect();
        let want = ["18*64", "3*64", "1*64", "64", head];
        ensure!(got == want, "{classes} classes: {got:?}");
        seen.push(got.join(" "));
    }
    Ok(seen.join(" | "))
}

fn gradients() -> Outcome {
    let mut worst = 0.0f64;
    let mut draws = usize::MAX;
    for report in common::all_gradient_checks::<f32>(1) {
        ensure!(report.draws >= 100, "{} only {} draws", report.layer, report.draws);
        ensure!(report.worst < 1e-2, "{} relative error {:.3e}", report.layer, report.worst);
        worst = worst.max(report.worst);
        draws = draws.min(report.draws);
    }
    Ok(format!("9 checks x {draws} draws, worst relative error {worst:.2e}"))
}

fn session_examples(spec: &SynthSpec, dir: &Path) -> Result<Examples, String> {
    let out = synth_corpus(spec, dir).map_err(|e| e.to_string())?;
    let opts = BuildOptions::new(ViewKind::Session, HeaderCategory::NoHeaders, Task::Binary);
    let (ds, _) = build_dataset(&out.inputs, &opts).map_err(|e| e.to_string())?;
    Ok(Examples::from_dataset(&ds))
}

fn overfit() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ex = session_examples(&SynthSpec::two_class(20, 11), dir.path())?;
    ensure!(ex.len() == 40, "{} samples", ex.len());
    let config = ModelConfig::new(Profile::Wide, Pairing::Crossed, 2);
    ensure!(config.epochs == 50 && config.batch_size == 20, "regime {}x{}", config.epochs, config.batch_size);
    let (ck, h) = train(&config, &ex, &ex).map_err(|e| e.to_string())?;
    let first = h.epochs.iter().find(|e| e.val_accuracy == 1.0).map(|e| e.epoch);
    let acc = evaluate(&ck.model, &ex).map_err(|e| e.to_string())?.accuracy;
    ensure!(first.is_some() && acc == 1.0, "best accuracy {acc}");
    Ok(format!("accuracy 1.0 first at epoch {}", first.unwrap()))
}

fn separability() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = synth_corpus(&SynthSpec::two_class(200, 21), dir.path()).map_err(|e| e.to_string())?;
    let cells: Vec<(ViewKind, HeaderCategory)> =
        ViewKind::ALL.iter().flat_map(|&v| HeaderCategory::ALL.iter().map(move |&c| (v, c))).collect();
    let results: Vec<Result<(String, f64, f64), String>> = cells
        .par_iter()
        .map(|&(view, cat)| {
            let (ds, _) = build_dataset(&corpus.inputs, &BuildOptions::new(view, cat, Task::Binary)).map_err(|e| e.to_string())?;
            let sessions = if view == ViewKind::Session { ds.len() } else { 400 };
            ensure!(sessions >= 400, "{} sessions", sessions);
            // held-out test set, then a validation set carved from the rest for checkpoint selection
            let (rest, test) = stratified_split(&ds.labels(), 2, 0.2, 5);
            let rest_ds = ds.subset(&rest);
            let (tr, va) = stratified_split(&rest_ds.labels(), 2, 0.2, 6);
            let all = Examples::from_dataset(&rest_ds);
            let config = ModelConfig::new(Profile::Wide, Pairing::Crossed, 2);
            let (ck, _) = train(&config, &all.subset(&tr), &all.subset(&va)).map_err(|e| e.to_string())?;
            let report = evaluate(&ck.model, &Examples::from_dataset(&ds.subset(&test))).map_err(|e| e.to_string())?;
            Ok((format!("{}/{}", view.name(), cat.name()), report.accuracy, report.weighted_f1))
        })
        .collect();
    let mut worst = (String::new(), 1.0f64, 1.0f64);
    for r in results {
        let (cell, acc, f1) = r?;
        ensure!(acc >= 0.95 && f1 >= 0.95, "{cell}: accuracy {acc:.4} weighted f1 {f1:.4}");
        if acc.min(f1) < worst.1.min(worst.2) {
            worst = (cell, acc, f1);
        }
    }
    Ok(format!("12 cells, weakest {} accuracy {:.4} weighted f1 {:.4}", worst.0, worst.1, worst.2))
}

fn splitter() -> Outcome {
    let mut units = [0usize; 2];
    for seed in 1000..1050 {
        let packets = common::random_capture(seed);
        let tuples: Vec<_> = packets.iter().map(|(_, d)| d.tuple).collect();
        for (i, (view, bidirectional)) in [(ViewKind::Session, true), (ViewKind::Flow, false)].into_iter().enumerate() {
            let got: Vec<std::collections::BTreeSet<usize>> = split_view(&packets, view, false).into_iter().map(|u| u.members.into_iter().collect()).collect();
            ensure!(got == common::pairwise_groups(&tuples, bidirectional), "seed {seed} {} grouping differs", view.name());
            units[i] += got.len();
        }
    }
    Ok(format!("50 captures, {} sessions and {} flows match the oracle", units[0], units[1]))
}

fn categories() -> Outcome {
    let mut r = common::rng(66);
    for n in 0..10_000 {
        let f = common::random_frame(&mut r);
        let d = dissect(&f.bytes);
        let cut = |cat| strip_headers(&f.bytes, &d, cat);
        let all = cut(HeaderCategory::AllHeaders);
        let only_eth = cut(HeaderCategory::OnlyEthernet);
        let no_eth = cut(HeaderCategory::WithoutEthernet);
        let none = cut(HeaderCategory::NoHeaders);
        ensure!(all == f.bytes, "frame {n}: all_headers is not identity");
        ensure!(only_eth == [&f.bytes[..f.eth_end], &f.bytes[f.ip_end..]].concat(), "frame {n}: only_ethernet slice");
        ensure!(no_eth == f.bytes[f.eth_end..], "frame {n}: without_ethernet slice");
        ensure!(none == f.bytes[f.ip_end..], "frame {n}: no_headers slice");
        ensure!(none.len() <= only_eth.len() && only_eth.len() <= all.len(), "frame {n}: lengths");
        ensure!(none.len() <= no_eth.len() && no_eth.len() <= all.len(), "frame {n}: lengths");
    }
    Ok("10000 frames".into())
}

fn serialization() -> Outcome {
    let mut r = common::rng(77);
    for i in 0..200 {
        let task = if r.random_bool(0.5) { Task::Binary } else { Task::Multiclass };
        let n = r.random_range(1..200);
        let mut ds = DatasetFile::new(ViewKind::ALL[i % 3], HeaderCategory::ALL[i % 4], n, task.class_names());
        for _ in 0..r.random_range(0..40) {
            let bytes = (0..n).map(|_| r.random::<u8>()).collect();
            ds.samples.push(Sample::new(r.random_range(0..task.class_count() as u16), bytes));
        }
        let mut bytes = Vec::new();
        ds.write_to(&mut bytes).map_err(|e| e.to_string())?;
        let back = DatasetFile::read_from(&bytes[..]).map_err(|e| e.to_string())?;
        let mut again = Vec::new();
        back.write_to(&mut again).map_err(|e| e.to_string())?;
        ensure!(back == ds && again == bytes, "dataset {i} changed in a round trip");
    }
    let batch: Vec<Vec<f32>> = (0..64).map(|_| (0..115).map(|_| r.random_range(0..=255u8) as f32 / 255.0).collect()).collect();
    for classes in [2, 12] {
        for seed in 0..10 {
            let ck = Checkpoint { model: Model::init(Architecture::default_for(classes), seed).map_err(|e| e.to_string())?, best_epoch: 3, best_val_accuracy: 0.5 };
            let bytes = ck.encode().map_err(|e| e.to_string())?;
            let back = Checkpoint::decode(&bytes[..]).map_err(|e| e.to_string())?;
            ensure!(back.encode().map_err(|e| e.to_string())? == bytes, "weights changed in a round trip");
            let ex = Examples::from_rows(115, classes, &batch, &vec![0; batch.len()]);
            let bits = |m: &Model| -> Result<Vec<u32>, String> {
                Ok(predict_all(m, &ex).map_err(|e| e.to_string())?.into_iter().flatten().map(f32::to_bits).collect())
            };
            ensure!(bits(&ck.model)? == bits(&back.model)?, "predictions differ after a round trip");
        }
    }
    Ok("200 datasets, 20 checkpoints, 64-sample batch bit-identical".into())
}

fn metrics() -> Outcome {
    let mut r = common::rng(88);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = common::random_confusion(&mut r);
        let (acc, wf1) = common::hand_metrics(&m);
        let report = MetricsReport::from_confusion(ConfusionMatrix::from_counts(m));
        let err = (report.accuracy - acc).abs().max((report.weighted_f1 - wf1).abs());
        ensure!(err < 1e-9, "difference {err:.3e}");
        worst = worst.max(err);
    }
    Ok(format!("20 matrices, max difference {worst:.1e}"))
}

fn timing() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = synth_corpus(&SynthSpec::two_class(200, 31), dir.path()).map_err(|e| e.to_string())?;
    let mut opts = BenchOptions::new(Task::Binary, ModelConfig::new(Profile::Wide, Pairing::Crossed, 2));
    opts.views = vec![ViewKind::Session, ViewKind::Flow];
    let report = time_pipelines(&corpus.inputs, &opts).map_err(|e| e.to_string())?;
    let header = report.csv().lines().next().unwrap_or_default().to_string();
    for col in ["build_s", "train_s", "test_s", "accuracy"] {
        ensure!(header.split(',').any(|c| c == col), "csv header lacks {col}: {header}");
    }
    let base = report.row(BASELINE_NAME).ok_or("no baseline row")?.build_and_train();
    let mut shown = Vec::new();
    for view in ["session", "flow"] {
        let t = report.row(view).ok_or(format!("no {view} row"))?.build_and_train();
        ensure!(t < base, "{view} {t:.3}s is not below baseline {base:.3}s");
        shown.push(format!("{view} {t:.2}s"));
    }
    // for the record only: a one-layer classifier on the same features
    let dense = BenchOptions { views: Vec::new(), warmup: false, baseline: BaselineModel::DenseOnly, ..opts };
    let dense = time_pipelines(&corpus.inputs, &dense).map_err(|e| e.to_string())?;
    let dense = dense.row(BASELINE_NAME).ok_or("no baseline row")?.build_and_train();
    Ok(format!("{} < baseline {base:.2}s (dense-only baseline: {dense:.2}s)", shown.join(", ")))
}

fn cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_featureless")).args(args).env("RUST_LOG", "warn").output().map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let run = |dir: &Path| -> Result<Vec<(String, Vec<u8>)>, String> {
        let p = |name: &str| dir.join(name).display().to_string();
        let mut artifacts = vec![("synth".to_string(), cli(&["synth", "--out", &p("corpus"), "--sessions", "30", "--seed", "9"])?)];
        let labels = p("corpus/labels.csv");
        cli(&["build", "--labels", &labels, "--out", &p("grid"), "--all-views", "--all-categories"])?;
        cli(&["build", "--labels", &labels, "--out", &p("d.ftld"), "--view", "flow"])?;
        artifacts.push(("train".into(), cli(&["train", "--dataset", &p("d.ftld"), "--out", &p("w.ftlw"), "--epochs", "5", "--seed", "9", "--records"])?));
        artifacts.push(("eval".into(), cli(&["eval", "--dataset", &p("d.ftld"), "--weights", &p("w.ftlw"), "--confusion", "--seed", "9"])?));
        let mut files: Vec<_> = walk(dir);
        files.sort();
        for f in files {
            let bytes = std::fs::read(&f).map_err(|e| e.to_string())?;
            artifacts.push((f.strip_prefix(dir).unwrap().display().to_string(), bytes));
        }
        Ok(artifacts)
    };
    let (a, b) = (tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?);
    let (first, second) = (run(a.path())?, run(b.path())?);
    ensure!(first.len() == second.len(), "artifact counts differ");
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        // synth prints the output directory and train records carry wall-clock seconds
        let strip = |v: &[u8], d: &Path| String::from_utf8_lossy(v).replace(&d.display().to_string(), "");
        let untimed = |v: &[u8]| -> Vec<String> {
            String::from_utf8_lossy(v).lines().map(|l| l.split(' ').filter(|f| !f.starts_with("seconds=")).collect::<Vec<_>>().join(" ")).collect()
        };
        let same = match name.as_str() {
            "synth" => strip(x, a.path()) == strip(y, b.path()),
            "train" => untimed(x) == untimed(y),
            _ => x == y,
        };
        ensure!(same, "{name} differs between runs");
    }
    Ok(format!("{} artifacts byte-identical over two runs", first.len()))
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).into_iter().flatten().flatten() {
        let path = entry.path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else if path.file_name().is_some_and(|n| n != "labels.csv") {
            out.push(path);
        }
    }
    out
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "shape reproduction", 1, shapes),
        (2, "gradient correctness", 60, gradients),
        (3, "overfit check", 120, overfit),
        (4, "synthetic separability", 600, separability),
        (5, "splitter oracle", 60, splitter),
        (6, "header-category algebra", 10, categories),
        (7, "serialization round trips", 60, serialization),
        (8, "metrics oracle", 1, metrics),
        (9, "timing direction", 300, timing),
        (10, "determinism", 300, determinism),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > Duration::from_secs(budget) => Err(format!("over the {budget}s budget")),
            o => o,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {n:>2} {status} {name} ({:.2}s): {detail}", elapsed.as_secs_f64());
        failed += usize::from(outcome.is_err());
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
