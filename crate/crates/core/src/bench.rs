//! Wall-clock comparison of the raw-byte pipelines against a
//! feature-extraction baseline trained on the same traffic.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rayon::prelude::*;

use crate::dataset::{build_dataset, stratified_split, BuildOptions, DatasetError, LabeledInput, Task};
use crate::dissect::{dissect, Dissection, SessionKey, PROTO_TCP, PROTO_UDP};
use crate::nn::Architecture;
use crate::pcap::{PcapReader, TimestampResolution};
use crate::train::{evaluate, train, Examples, ModelConfig, TrainError};
use crate::views::{HeaderCategory, ViewKind};

pub const FEATURE_COUNT: usize = 115;
pub const BASELINE_NAME: &str = "stat-baseline";
/// Packets of session history each baseline vector summarises.
pub const DEFAULT_CONTEXT_WINDOW: usize = 10;

const HIST_BINS: usize = 22;
const SCALAR_FEATURES: usize = 27;

/// Classifier trained on the baseline's feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineModel {
    /// The featureless layer stack with a 115-value input, so both sides
    /// train the same architecture.
    SameLayers,
    /// One dense layer, 115 to the class count.
    DenseOnly,
}

impl BaselineModel {
    pub fn name(self) -> &'static str {
        match self {
            BaselineModel::SameLayers => "same",
            BaselineModel::DenseOnly => "dense",
        }
    }

    pub fn architecture(self, model: &ModelConfig) -> Architecture {
        match self {
            BaselineModel::SameLayers => Architecture { input_len: FEATURE_COUNT, ..model.arch.clone() },
            BaselineModel::DenseOnly => Architecture::dense_only(FEATURE_COUNT, model.class_count(), model.arch.output_activation()),
        }
    }
}

impl FromStr for BaselineModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "same" => Ok(BaselineModel::SameLayers),
            "dense" => Ok(BaselineModel::DenseOnly),
            other => Err(format!("unknown baseline model '{other}' (expected same or dense)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, Copy)]
pub struct TimedPacket<'a> {
    pub time: f64,
    pub data: &'a [u8],
    pub dissection: &'a Dissection,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

fn ttl(p: &TimedPacket) -> f64 {
    let d = p.dissection;
    let Some(start) = d.ip_start else { return 0.0 };
    let offset = match d.l3_kind {
        crate::dissect::L3Kind::Ipv4 => 8,
        crate::dissect::L3Kind::Ipv6 => 7,
        crate::dissect::L3Kind::NonIp => return 0.0,
    };
    p.data.get(start + offset).copied().unwrap_or(0) as f64
}

fn tcp_flags(p: &TimedPacket) -> u8 {
    match (p.dissection.proto, p.dissection.transport_start) {
        (Some(PROTO_TCP), Some(t)) if p.dissection.payload_start.is_some() => p.data.get(t + 13).copied().unwrap_or(0),
        _ => 0,
    }
}

fn payload<'a>(p: &TimedPacket<'a>) -> &'a [u8] {
    let start = p.dissection.payload_start.unwrap_or(p.data.len()).min(p.data.len());
    &p.data[start..]
}

/// Statistics over a group of packets, always `FEATURE_COUNT` values.
///
/// 0 count; 1-5 frame length total/mean/min/max/std; 6-9 inter-arrival
/// mean/min/max/std; 10 duration; 11-12 header length mean/std; 13-14
/// payload length mean/std; 15-16 TTL mean/std; 17-21 SYN/ACK/FIN/RST/PSH
/// fractions; 22 UDP fraction; 23 TCP fraction; 24 fraction sent in the
/// first packet's direction; 25-26 payload byte mean/std; then, for each
/// positional quarter of the payload, a 22-bin byte-value histogram as a
/// fraction of all payload bytes.
pub fn extract_stat_features(packets: &[TimedPacket]) -> [f32; FEATURE_COUNT] {
    let mut f = [0f32; FEATURE_COUNT];
    if packets.is_empty() {
        return f;
    }
    let n = packets.len() as f64;
    let lens = packets.iter().map(|p| p.data.len() as f64);
    let (len_mean, len_std) = mean_std(lens.clone());
    let iats: Vec<f64> = packets.windows(2).map(|w| (w[1].time - w[0].time).max(0.0)).collect();
    let (iat_mean, iat_std) = mean_std(iats.iter().copied());
    let headers = packets.iter().map(|p| p.dissection.payload_start.unwrap_or(p.data.len()) as f64);
    let payload_lens = packets.iter().map(|p| payload(p).len() as f64);
    let ttls = packets.iter().map(ttl);
    let flag_frac = |bit: u8| packets.iter().filter(|p| tcp_flags(p) & bit != 0).count() as f64 / n;
    let proto_frac = |proto: u8| packets.iter().filter(|p| p.dissection.proto == Some(proto)).count() as f64 / n;
    let first = packets[0].dissection.tuple;
    let forward = packets.iter().filter(|p| p.dissection.tuple == first).count() as f64 / n;
    let payload_bytes = packets.iter().flat_map(|p| payload(p).iter().map(|&b| b as f64));
    let (byte_mean, byte_std) = mean_std(payload_bytes);

    let scalars = [
        n,
        lens.clone().sum(),
        len_mean,
        lens.clone().fold(f64::INFINITY, f64::min),
        lens.fold(0.0, f64::max),
        len_std,
        iat_mean,
        if iats.is_empty() { 0.0 } else { iats.iter().copied().fold(f64::INFINITY, f64::min) },
        iats.iter().copied().fold(0.0, f64::max),
        iat_std,
        packets[packets.len() - 1].time - packets[0].time,
        mean_std(headers.clone()).0,
        mean_std(headers).1,
        mean_std(payload_lens.clone()).0,
        mean_std(payload_lens).1,
        mean_std(ttls.clone()).0,
        mean_std(ttls).1,
        flag_frac(0x02),
        flag_frac(0x10),
        flag_frac(0x01),
        flag_frac(0x04),
        flag_frac(0x08),
        proto_frac(PROTO_UDP),
        proto_frac(PROTO_TCP),
        forward,
        byte_mean,
        byte_std,
    ];
    debug_assert_eq!(scalars.len(), SCALAR_FEATURES);
    for (slot, v) in f.iter_mut().zip(scalars) {
        *slot = v as f32;
    }

    let hist = &mut f[SCALAR_FEATURES..];
    let mut total = 0usize;
    for p in packets {
        let body = payload(p);
        for (pos, &b) in body.iter().enumerate() {
            let quarter = pos * 4 / body.len();
            hist[quarter * HIST_BINS + b as usize * HIST_BINS / 256] += 1.0;
            total += 1;
        }
    }
    if total > 0 {
        hist.iter_mut().for_each(|h| *h /= total as f32);
    }
    f
}

fn file_features(path: &std::path::Path, window: usize, include_non_ip: bool) -> Result<Vec<[f32; FEATURE_COUNT]>, DatasetError> {
    let pcap_err = |source| DatasetError::Pcap { path: path.to_path_buf(), source };
    let reader = PcapReader::open(path).map_err(pcap_err)?;
    let resolution: TimestampResolution = reader.info().resolution;
    let mut records = Vec::new();
    for r in reader {
        let r = r.map_err(pcap_err)?;
        let d = dissect(&r.data);
        records.push((r.timestamp_secs(resolution), r.data, d));
    }
    let mut history: HashMap<SessionKey, VecDeque<usize>> = HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for (i, (_, _, d)) in records.iter().enumerate() {
        let members: Vec<usize> = match &d.tuple {
            Some(t) => {
                let recent = history.entry(SessionKey::from(t)).or_default();
                recent.push_back(i);
                if recent.len() > window {
                    recent.pop_front();
                }
                recent.iter().copied().collect()
            }
            None if include_non_ip => vec![i],
            None => continue,
        };
        let group: Vec<TimedPacket> =
            members.iter().map(|&j| TimedPacket { time: records[j].0, data: &records[j].1, dissection: &records[j].2 }).collect();
        out.push(extract_stat_features(&group));
    }
    Ok(out)
}

/// One feature vector per packet, summarising that packet and the packets
/// before it in its session (at most `window` in total).
pub fn baseline_features(
    inputs: &[LabeledInput],
    task: Task,
    window: usize,
    include_non_ip: bool,
) -> Result<(Vec<[f32; FEATURE_COUNT]>, Vec<usize>), DatasetError> {
    let labels = inputs.iter().map(|i| task.resolve(&i.class)).collect::<Result<Vec<_>, _>>()?;
    let per_file: Vec<Result<Vec<[f32; FEATURE_COUNT]>, DatasetError>> = inputs
        .par_iter()
        .zip(&labels)
        .map(|(input, label)| match label {
            Some(_) => file_features(&input.path, window.max(1), include_non_ip),
            None => Ok(Vec::new()),
        })
        .collect();
    let (mut rows, mut row_labels) = (Vec::new(), Vec::new());
    for (result, label) in per_file.into_iter().zip(&labels) {
        let file_rows = result?;
        row_labels.extend(std::iter::repeat_n(label.unwrap_or(0) as usize, file_rows.len()));
        rows.extend(file_rows);
    }
    Ok((rows, row_labels))
}

/// Rescales every feature to `[0, 1]` using the min and max over `fit_rows`.
pub fn min_max_normalise(rows: &mut [[f32; FEATURE_COUNT]], fit_rows: &[usize]) {
    let mut lo = [f32::INFINITY; FEATURE_COUNT];
    let mut hi = [f32::NEG_INFINITY; FEATURE_COUNT];
    for &i in fit_rows {
        for (k, &v) in rows[i].iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    for row in rows.iter_mut() {
        for (k, v) in row.iter_mut().enumerate() {
            let span = hi[k] - lo[k];
            *v = if span > 0.0 && span.is_finite() { ((*v - lo[k]) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
}

/// Runs `f` and returns its result with elapsed monotonic seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Mean cost of timing an empty phase.
pub fn timing_overhead(samples: usize) -> f64 {
    let (_, total) = timed(|| {
        for _ in 0..samples {
            std::hint::black_box(timed(|| ()));
        }
    });
    total / samples.max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub pipeline: String,
    pub samples: usize,
    pub build_s: f64,
    pub train_s: f64,
    pub test_s: f64,
    pub accuracy: f64,
}

impl TimingRow {
    pub fn build_and_train(&self) -> f64 {
        self.build_s + self.train_s
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn row(&self, pipeline: &str) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.pipeline == pipeline)
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<14}  {:>8}  {:>10}  {:>10}  {:>10}  {:>8}\n",
            "pipeline", "samples", "build_s", "train_s", "test_s", "accuracy"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<14}  {:>8}  {:>10.3}  {:>10.3}  {:>10.3}  {:>8.4}",
                r.pipeline, r.samples, r.build_s, r.train_s, r.test_s, r.accuracy
            );
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("pipeline,build_s,train_s,test_s,accuracy\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.6},{:.6},{:.6},{:.6}", r.pipeline, r.build_s, r.train_s, r.test_s, r.accuracy);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub views: Vec<ViewKind>,
    pub category: HeaderCategory,
    pub sample_len: usize,
    pub task: Task,
    pub include_non_ip: bool,
    /// Architecture, optimiser, epochs, batch and seed shared by every
    /// pipeline.
    pub model: ModelConfig,
    pub baseline: BaselineModel,
    pub val_fraction: f64,
    pub context_window: usize,
    pub warmup: bool,
}

impl BenchOptions {
    pub fn new(task: Task, model: ModelConfig) -> Self {
        BenchOptions {
            views: vec![ViewKind::Session, ViewKind::Flow, ViewKind::Packet],
            category: HeaderCategory::AllHeaders,
            sample_len: model.arch.input_len,
            task,
            include_non_ip: false,
            model,
            baseline: BaselineModel::SameLayers,
            val_fraction: 0.2,
            context_window: DEFAULT_CONTEXT_WINDOW,
            warmup: true,
        }
    }
}

fn split_examples(ex: &Examples, val_fraction: f64, seed: u64) -> (Examples, Examples) {
    let labels: Vec<u16> = ex.labels.iter().map(|&l| l as u16).collect();
    let (tr, va) = stratified_split(&labels, ex.class_count, val_fraction, seed);
    (ex.subset(&tr), ex.subset(&va))
}

fn featureless_row(inputs: &[LabeledInput], opts: &BenchOptions, view: ViewKind, model: &ModelConfig) -> Result<TimingRow, BenchError> {
    let mut build = BuildOptions::new(view, opts.category, opts.task);
    build.sample_len = opts.sample_len;
    build.include_non_ip = opts.include_non_ip;
    let (built, build_s) = timed(|| -> Result<_, BenchError> {
        let (ds, _) = build_dataset(inputs, &build)?;
        let ex = Examples::from_dataset(&ds);
        Ok(split_examples(&ex, opts.val_fraction, model.seed))
    });
    let (train_set, val_set) = built?;
    let (trained, train_s) = timed(|| train(model, &train_set, &val_set));
    let (checkpoint, _) = trained?;
    let (report, test_s) = timed(|| evaluate(&checkpoint.model, &val_set));
    Ok(TimingRow {
        pipeline: view.name().to_string(),
        samples: train_set.len() + val_set.len(),
        build_s,
        train_s,
        test_s,
        accuracy: report?.accuracy,
    })
}

fn baseline_row(inputs: &[LabeledInput], opts: &BenchOptions, model: &ModelConfig) -> Result<TimingRow, BenchError> {
    let model = ModelConfig { arch: opts.baseline.architecture(model), ..model.clone() };
    let classes = model.class_count();
    let (built, build_s) = timed(|| -> Result<_, BenchError> {
        let (mut rows, labels) = baseline_features(inputs, opts.task, opts.context_window, opts.include_non_ip)?;
        let labels16: Vec<u16> = labels.iter().map(|&l| l as u16).collect();
        let (tr, va) = stratified_split(&labels16, classes, opts.val_fraction, model.seed);
        min_max_normalise(&mut rows, &tr);
        let rows: Vec<Vec<f32>> = rows.iter().map(|r| r.to_vec()).collect();
        let ex = Examples::from_rows(FEATURE_COUNT, classes, &rows, &labels);
        Ok((ex.subset(&tr), ex.subset(&va)))
    });
    let (train_set, val_set) = built?;
    let (trained, train_s) = timed(|| train(&model, &train_set, &val_set));
    let (checkpoint, _) = trained?;
    let (report, test_s) = timed(|| evaluate(&checkpoint.model, &val_set));
    Ok(TimingRow {
        pipeline: BASELINE_NAME.to_string(),
        samples: train_set.len() + val_set.len(),
        build_s,
        train_s,
        test_s,
        accuracy: report?.accuracy,
    })
}

/// Times each requested view, then the baseline, one after another.
pub fn time_pipelines(inputs: &[LabeledInput], opts: &BenchOptions) -> Result<TimingReport, BenchError> {
    if opts.warmup {
        let mut short = opts.model.clone();
        short.epochs = 1;
        let view = opts.views.first().copied().unwrap_or(ViewKind::Session);
        let _ = featureless_row(inputs, opts, view, &short)?;
        info!("warm-up run discarded");
    }
    let mut report = TimingReport::default();
    for &view in &opts.views {
        let row = featureless_row(inputs, opts, view, &opts.model)?;
        info!("{}: build {:.3}s train {:.3}s test {:.3}s", row.pipeline, row.build_s, row.train_s, row.test_s);
        report.rows.push(row);
    }
    let row = baseline_row(inputs, opts, &opts.model)?;
    info!("{}: extract {:.3}s train {:.3}s test {:.3}s", row.pipeline, row.build_s, row.train_s, row.test_s);
    report.rows.push(row);
    Ok(report)
}
