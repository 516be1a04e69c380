use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use featureless::bench::{time_pipelines, BaselineModel, BenchOptions};
use featureless::config::RunConfig;
use featureless::dataset::{
    build_dataset, byte_distribution, check_existing_output, read_dataset, read_labels, stratified_split, write_dataset,
    BuildOptions, DatasetFile, LabeledInput, Task,
};
use featureless::dissect::dissect;
use featureless::nn::{load_weights, save_weights};
use featureless::pcap::PcapReader;
use featureless::synth::{synth_corpus, SynthSpec};
use featureless::train::{evaluate, train, Examples, ModelConfig};
use featureless::views::{unit_key, HeaderCategory, ViewKind};

#[derive(Parser)]
#[command(name = "featureless", version, about = "Traffic classification on raw packet bytes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled pcap corpus.
    Synth(SynthArgs),
    /// Build dataset file(s) from labeled pcaps.
    Build(BuildArgs),
    /// Packet, unit and byte statistics for a corpus or dataset.
    Inspect(InspectArgs),
    /// Train a model on a dataset file and save the best weights.
    Train(TrainArgs),
    /// Evaluate saved weights on a dataset file.
    Eval(EvalArgs),
    /// Time the raw-byte pipelines against the feature baseline
    /// (all_headers unless --category is given).
    Bench(BenchArgs),
}

#[derive(Args, Default)]
struct CommonArgs {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Default)]
struct DataArgs {
    /// Lines of `pcap-path,class-name`.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// packet, flow or session
    #[arg(long)]
    view: Option<ViewKind>,
    /// all, only-eth, no-eth or none
    #[arg(long)]
    category: Option<HeaderCategory>,
    /// Sample length in bytes.
    #[arg(long)]
    n: Option<usize>,
    /// binary or multi
    #[arg(long)]
    task: Option<Task>,
    /// Keep non-IP frames as their own units in the packet view.
    #[arg(long)]
    include_non_ip: bool,
    /// Drop units whose stripped bytes are all empty.
    #[arg(long)]
    drop_empty: bool,
}

#[derive(Args, Default)]
struct ModelArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// wide or narrow
    #[arg(long)]
    profile: Option<featureless::Profile>,
    /// crossed or standard
    #[arg(long)]
    pairing: Option<featureless::Pairing>,
    /// Stop after this many epochs without improvement (default 5).
    #[arg(long, num_args = 0..=1, default_missing_value = "5")]
    early_stop: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sessions per class.
    #[arg(long, default_value_t = 200)]
    sessions: usize,
    /// Capture files per class.
    #[arg(long, default_value_t = 1)]
    files: usize,
    /// binary writes benign plus one family; multi writes all twelve families.
    #[arg(long)]
    task: Option<Task>,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Build every view; --out names a directory.
    #[arg(long)]
    all_views: bool,
    /// Build every header category; --out names a directory.
    #[arg(long)]
    all_categories: bool,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Inspect a dataset file instead of pcaps.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Expected task; checked against the dataset's classes.
    #[arg(long)]
    task: Option<Task>,
    /// Print line records instead of a table.
    #[arg(long)]
    records: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Print the confusion matrix.
    #[arg(long)]
    confusion: bool,
    /// Only the validation split that `train` held out for the same seed.
    #[arg(long)]
    holdout: bool,
    #[arg(long)]
    records: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated views to time.
    #[arg(long, value_delimiter = ',', default_value = "session,flow,packet")]
    views: Vec<ViewKind>,
    /// Baseline classifier: `same` reuses the featureless layers, `dense` is
    /// a single dense layer.
    #[arg(long, default_value = "same")]
    baseline: BaselineModel,
    /// Print comma-separated records instead of a table.
    #[arg(long)]
    csv: bool,
    /// Skip the discarded warm-up run.
    #[arg(long)]
    no_warmup: bool,
}

fn usage_error(msg: &str) -> ! {
    Cli::command().error(clap::error::ErrorKind::MissingRequiredArgument, msg).exit()
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut c = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(o) = &common.out {
        c.out = Some(o.clone());
    }
    Ok(c)
}

fn apply_data(c: &mut RunConfig, d: &DataArgs) {
    if let Some(v) = &d.labels {
        c.labels = Some(v.clone());
    }
    if let Some(v) = d.view {
        c.view = v;
    }
    if let Some(v) = d.category {
        c.category = v;
    }
    if let Some(v) = d.n {
        c.n = v;
    }
    if let Some(v) = d.task {
        c.task = v;
    }
    c.include_non_ip |= d.include_non_ip;
    c.drop_empty |= d.drop_empty;
}

fn apply_model(c: &mut RunConfig, m: &ModelArgs) {
    if let Some(v) = m.epochs {
        c.epochs = v;
    }
    if let Some(v) = m.batch {
        c.batch = v;
    }
    if let Some(v) = m.profile {
        c.profile = v;
    }
    if let Some(v) = m.pairing {
        c.pairing = v;
    }
    if m.early_stop.is_some() {
        c.early_stop = m.early_stop;
    }
}

fn echo_config(command: &str, c: &RunConfig) {
    let mut s = format!("# effective config ({command})\n");
    s.push_str(&c.render());
    eprint!("{s}");
}

fn labels(c: &RunConfig) -> Result<Vec<LabeledInput>> {
    let Some(path) = &c.labels else { usage_error("--labels <path> is required") };
    read_labels(path).with_context(|| format!("reading labels {}", path.display()))
}

fn build_options(c: &RunConfig, view: ViewKind, category: HeaderCategory) -> BuildOptions {
    BuildOptions { sample_len: c.n, include_non_ip: c.include_non_ip, drop_empty: c.drop_empty, ..BuildOptions::new(view, category, c.task) }
}

fn model_config(c: &RunConfig, ds: &DatasetFile) -> Result<ModelConfig> {
    let mut m = ModelConfig::new(c.profile, c.pairing, ds.class_count());
    if ds.sample_len != m.arch.input_len {
        warn!("dataset sample length {} differs from the {} profile's {}", ds.sample_len, c.profile.name(), m.arch.input_len);
        m.arch.input_len = ds.sample_len;
    }
    m.arch.shapes().context("model does not fit the dataset's sample length")?;
    m.optimizer = c.adam();
    m.batch_size = c.batch;
    m.epochs = c.epochs;
    m.seed = c.seed;
    m.early_stop_patience = c.early_stop;
    Ok(m)
}

fn split(ds: &DatasetFile, c: &RunConfig) -> (Vec<usize>, Vec<usize>) {
    stratified_split(&ds.labels(), ds.class_count(), c.val_fraction, c.seed)
}

fn cmd_synth(args: SynthArgs) -> Result<String> {
    let c = load_config(&args.common)?;
    echo_config("synth", &c);
    let Some(out) = &c.out else { usage_error("--out <dir> is required") };
    let task = args.task.unwrap_or(c.task);
    let mut spec = match task {
        Task::Binary => SynthSpec::two_class(args.sessions, c.seed),
        Task::Multiclass => SynthSpec::all_families(args.sessions, c.seed),
    };
    spec.files_per_class = args.files.max(1);
    let written = synth_corpus(&spec, out).with_context(|| format!("writing corpus to {}", out.display()))?;
    let mut s = String::new();
    for input in &written.inputs {
        writeln!(s, "{},{}", input.path.display(), input.class)?;
    }
    info!("labels written to {}", written.labels_path.display());
    Ok(s)
}

fn cmd_build(args: BuildArgs) -> Result<String> {
    let mut c = load_config(&args.common)?;
    apply_data(&mut c, &args.data);
    echo_config("build", &c);
    let inputs = labels(&c)?;
    let Some(out) = c.out.clone() else { usage_error("--out <path> is required") };
    let grid = args.all_views || args.all_categories;
    let views = if args.all_views { ViewKind::ALL.to_vec() } else { vec![c.view] };
    let cats = if args.all_categories { HeaderCategory::ALL.to_vec() } else { vec![c.category] };
    let cells: Vec<(ViewKind, HeaderCategory, PathBuf)> = views
        .iter()
        .flat_map(|&v| cats.iter().map(move |&k| (v, k)))
        .map(|(v, k)| {
            let path = if grid { out.join(format!("{}_{}.ftld", v.name(), k.name())) } else { out.clone() };
            (v, k, path)
        })
        .collect();
    if grid {
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    }
    for (_, _, path) in &cells {
        check_existing_output(path, c.n)?;
    }
    let results: Vec<Result<String>> = cells
        .par_iter()
        .map(|(view, cat, path)| {
            let (ds, report) = build_dataset(&inputs, &build_options(&c, *view, *cat))?;
            write_dataset(path, &ds).with_context(|| format!("writing {}", path.display()))?;
            let counts: Vec<String> = report.class_counts.iter().map(|n| n.to_string()).collect();
            Ok(format!("{}\t{}\t{}\t{}\t{}", path.display(), view.name(), cat.name(), ds.len(), counts.join("/")))
        })
        .collect();
    let mut s = String::from("file\tview\tcategory\tsamples\tper_class\n");
    for r in results {
        writeln!(s, "{}", r?)?;
    }
    Ok(s)
}

fn cmd_inspect(args: InspectArgs) -> Result<String> {
    let mut c = load_config(&args.common)?;
    apply_data(&mut c, &args.data);
    echo_config("inspect", &c);
    let mut s = String::new();
    if let Some(path) = &args.dataset {
        let ds = read_dataset(path).with_context(|| format!("reading {}", path.display()))?;
        writeln!(s, "view {}  category {}  n {}  samples {}", ds.view.name(), ds.category.name(), ds.sample_len, ds.len())?;
        write_distribution(&mut s, &ds)?;
        return Ok(s);
    }
    let inputs = labels(&c)?;
    writeln!(s, "file\tclass\tpackets\tpacket_units\tflows\tsessions")?;
    for input in &inputs {
        let reader = PcapReader::open(&input.path).with_context(|| format!("reading {}", input.path.display()))?;
        let mut keys: [HashSet<_>; 3] = Default::default();
        let mut packets = 0u64;
        for record in reader {
            let record = record.with_context(|| format!("reading {}", input.path.display()))?;
            let d = dissect(&record.data);
            for (set, view) in keys.iter_mut().zip(ViewKind::ALL) {
                if let Some(k) = unit_key(view, record.index, &d, c.include_non_ip) {
                    set.insert(k);
                }
            }
            packets += 1;
        }
        writeln!(s, "{}\t{}\t{packets}\t{}\t{}\t{}", input.path.display(), input.class, keys[0].len(), keys[1].len(), keys[2].len())?;
    }
    if !inputs.is_empty() {
        let (ds, _) = build_dataset(&inputs, &build_options(&c, c.view, c.category))?;
        writeln!(s, "\nbyte distribution ({} view, {})", c.view.name(), c.category.name())?;
        write_distribution(&mut s, &ds)?;
    }
    Ok(s)
}

fn write_distribution(s: &mut String, ds: &DatasetFile) -> Result<()> {
    writeln!(s, "class\tname\tsamples\tbytes\tmean_bytes")?;
    for row in byte_distribution(ds) {
        writeln!(s, "{}\t{}\t{}\t{}\t{:.2}", row.class, row.name, row.samples, row.bytes, row.bytes as f64 / row.samples as f64)?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<String> {
    let mut c = load_config(&args.common)?;
    apply_model(&mut c, &args.model);
    if let Some(t) = args.task {
        c.task = t;
    }
    if let Some(d) = &args.dataset {
        c.dataset = Some(d.clone());
    }
    echo_config("train", &c);
    let Some(path) = c.dataset.clone() else { usage_error("--dataset <path> is required") };
    let Some(out) = c.out.clone() else { usage_error("--out <weights path> is required") };
    let ds = read_dataset(&path).with_context(|| format!("reading {}", path.display()))?;
    if args.task.is_some() && ds.class_count() != c.task.class_count() {
        bail!("dataset {} has {} classes but task {} needs {}", path.display(), ds.class_count(), c.task, c.task.class_count());
    }
    let config = model_config(&c, &ds)?;
    let (tr, va) = split(&ds, &c);
    let examples = Examples::from_dataset(&ds);
    let (checkpoint, history) = train(&config, &examples.subset(&tr), &examples.subset(&va))?;
    save_weights(&out, &checkpoint).with_context(|| format!("writing {}", out.display()))?;
    info!("best epoch {} (validation accuracy {:.4}) saved to {}", history.best_epoch, history.best().val_accuracy, out.display());
    Ok(if args.records { history.records() } else { history.table() })
}

fn cmd_eval(args: EvalArgs) -> Result<String> {
    let mut c = load_config(&args.common)?;
    if let Some(d) = &args.dataset {
        c.dataset = Some(d.clone());
    }
    if let Some(w) = &args.weights {
        c.weights = Some(w.clone());
    }
    echo_config("eval", &c);
    let Some(path) = c.dataset.clone() else { usage_error("--dataset <path> is required") };
    let Some(weights) = c.weights.clone() else { usage_error("--weights <path> is required") };
    let ds = read_dataset(&path).with_context(|| format!("reading {}", path.display()))?;
    let checkpoint = load_weights(&weights).with_context(|| format!("reading {}", weights.display()))?;
    if checkpoint.model.class_count() != ds.class_count() {
        bail!("weights have {} outputs but the dataset has {} classes", checkpoint.model.class_count(), ds.class_count());
    }
    let ds = if args.holdout { ds.subset(&split(&ds, &c).1) } else { ds };
    let report = evaluate(&checkpoint.model, &Examples::from_dataset(&ds))?;
    let mut s = if args.records { report.records(&ds.class_names) } else { report.table(&ds.class_names) };
    if args.confusion {
        s.push('\n');
        s.push_str(&report.confusion_table(&ds.class_names));
    }
    Ok(s)
}

fn cmd_bench(args: BenchArgs) -> Result<String> {
    let mut c = load_config(&args.common)?;
    apply_data(&mut c, &args.data);
    apply_model(&mut c, &args.model);
    // timed on complete packets unless a category is asked for
    c.category = args.data.category.unwrap_or(HeaderCategory::AllHeaders);
    echo_config("bench", &c);
    let inputs = labels(&c)?;
    let template = DatasetFile::new(c.view, c.category, c.n, c.task.class_names());
    let mut opts = BenchOptions::new(c.task, model_config(&c, &template)?);
    opts.views = args.views.clone();
    opts.baseline = args.baseline;
    opts.category = c.category;
    opts.sample_len = c.n;
    opts.include_non_ip = c.include_non_ip;
    opts.val_fraction = c.val_fraction;
    opts.warmup = !args.no_warmup;
    let report = time_pipelines(&inputs, &opts)?;
    Ok(if args.csv { report.csv() } else { report.table() })
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Build(a) => cmd_build(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
