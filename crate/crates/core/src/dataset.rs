//! Labeled fixed-length byte samples and their on-disk format.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! "FTLD" | version u16 | view u8 | category u8 | sample_len u32
//! class_count u16 | class_count x (name_len u16, utf-8 name)
//! sample_count u64 | sample_count x (label u16, sample_len bytes)
//! ```

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dissect::dissect;
use crate::pcap::{PcapError, PcapReader, LINKTYPE_ETHERNET};
use crate::views::{HeaderCategory, UnitAssembler, UnitKey, ViewKind};

pub const DATASET_MAGIC: &[u8; 4] = b"FTLD";
pub const DATASET_VERSION: u16 = 1;
pub const DEFAULT_SAMPLE_LEN: usize = 115;

/// The twelve botnet families, in catalog order.
pub const BOTNET_FAMILIES: [&str; 12] = [
    "Hide and Seek",
    "Muhstik",
    "Linux.Mirai",
    "Hakai",
    "Linux.Hajime",
    "Kenjiro",
    "Torii",
    "Mirai",
    "Okiru",
    "IRCBot",
    "Trojan",
    "Gagfyt",
];

pub const BENIGN: &str = "benign";
pub const MALICIOUS: &str = "malicious";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset format error: {0}")]
    Format(String),
    #[error("dataset file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("sample {index}: label {label} out of range for {class_count} classes")]
    LabelOutOfRange { index: u64, label: u16, class_count: usize },
    #[error("unknown class label '{label}' for {task} task")]
    UnknownLabel { label: String, task: Task },
    #[error("{path}: existing dataset has sample length {existing}, requested {requested}")]
    SampleLenMismatch { path: PathBuf, existing: usize, requested: usize },
    #[error("{path}: unsupported link type {link_type} (only Ethernet is supported)")]
    LinkType { path: PathBuf, link_type: u32 },
    #[error("{path}: {source}")]
    Pcap { path: PathBuf, source: PcapError },
    #[error("labels file line {line}: {msg}")]
    LabelsSyntax { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Binary,
    Multiclass,
}

impl Task {
    pub fn class_names(self) -> Vec<String> {
        match self {
            Task::Binary => vec![BENIGN.to_string(), MALICIOUS.to_string()],
            Task::Multiclass => BOTNET_FAMILIES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn class_count(self) -> usize {
        match self {
            Task::Binary => 2,
            Task::Multiclass => BOTNET_FAMILIES.len(),
        }
    }

    /// Maps a capture label to a class index. `Ok(None)` means the capture
    /// does not take part in this task (benign traffic in the multi-class task).
    pub fn resolve(self, label: &str) -> Result<Option<u16>, DatasetError> {
        let label = label.trim();
        let family = BOTNET_FAMILIES.iter().position(|f| f.eq_ignore_ascii_case(label));
        let benign = label.eq_ignore_ascii_case(BENIGN);
        match self {
            Task::Binary if benign => Ok(Some(0)),
            Task::Binary if family.is_some() || label.eq_ignore_ascii_case(MALICIOUS) => Ok(Some(1)),
            Task::Multiclass if benign => Ok(None),
            Task::Multiclass if family.is_some() => Ok(family.map(|i| i as u16)),
            _ => Err(DatasetError::UnknownLabel { label: label.to_string(), task: self }),
        }
    }

    pub fn for_class_count(count: usize) -> Option<Task> {
        [Task::Binary, Task::Multiclass].into_iter().find(|t| t.class_count() == count)
    }

    pub fn flag_name(self) -> &'static str {
        match self {
            Task::Binary => "binary",
            Task::Multiclass => "multi",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag_name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(Task::Binary),
            "multi" | "multiclass" => Ok(Task::Multiclass),
            other => Err(format!("unknown task '{other}' (expected binary or multi)")),
        }
    }
}

/// Where a sample came from; kept in memory only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub file: usize,
    pub unit: UnitKey,
    pub first_index: u64,
    pub packet_count: usize,
    /// Bytes before zero padding.
    pub real_len: usize,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub label: u16,
    pub bytes: Vec<u8>,
    pub provenance: Option<Provenance>,
}

impl Sample {
    pub fn new(label: u16, bytes: Vec<u8>) -> Self {
        Sample { label, bytes, provenance: None }
    }

    /// Count of real bytes; without provenance, everything up to the last
    /// non-zero byte.
    pub fn real_len(&self) -> usize {
        match &self.provenance {
            Some(p) => p.real_len,
            None => self.bytes.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1),
        }
    }
}

// Provenance is not serialized, so equality covers only what the file stores.
impl PartialEq for Sample {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label && self.bytes == other.bytes
    }
}

impl Eq for Sample {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFile {
    pub view: ViewKind,
    pub category: HeaderCategory,
    pub sample_len: usize,
    pub class_names: Vec<String>,
    pub samples: Vec<Sample>,
}

impl DatasetFile {
    pub fn new(view: ViewKind, category: HeaderCategory, sample_len: usize, class_names: Vec<String>) -> Self {
        DatasetFile { view, category, sample_len, class_names, samples: Vec::new() }
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for s in &self.samples {
            counts[s.label as usize] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<u16> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> DatasetFile {
        DatasetFile { samples: indices.iter().map(|&i| self.samples[i].clone()).collect(), ..self.header_clone() }
    }

    fn header_clone(&self) -> DatasetFile {
        DatasetFile::new(self.view, self.category, self.sample_len, self.class_names.clone())
    }

    fn validate(&self) -> Result<(), DatasetError> {
        if self.class_names.is_empty() {
            return Err(DatasetError::Format("class list is empty".into()));
        }
        if self.class_names.len() > u16::MAX as usize || self.sample_len > u32::MAX as usize {
            return Err(DatasetError::Format("class count or sample length exceeds format limits".into()));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.label as usize >= self.class_count() {
                return Err(DatasetError::LabelOutOfRange { index: i as u64, label: s.label, class_count: self.class_count() });
            }
            if s.bytes.len() != self.sample_len {
                return Err(DatasetError::Format(format!(
                    "sample {i} has {} bytes, expected {}",
                    s.bytes.len(),
                    self.sample_len
                )));
            }
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        let names: usize = self.class_names.iter().map(|n| 2 + n.len()).sum();
        4 + 2 + 1 + 1 + 4 + 2 + names + 8 + self.samples.len() * (2 + self.sample_len)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DatasetError> {
        self.validate()?;
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&[self.view.code(), self.category.code()])?;
        w.write_all(&(self.sample_len as u32).to_le_bytes())?;
        w.write_all(&(self.class_names.len() as u16).to_le_bytes())?;
        for name in &self.class_names {
            let len = u16::try_from(name.len()).map_err(|_| DatasetError::Format(format!("class name too long: {name}")))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(name.as_bytes())?;
        }
        w.write_all(&(self.samples.len() as u64).to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&s.label.to_le_bytes())?;
            w.write_all(&s.bytes)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<DatasetFile, DatasetError> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic, "magic")?;
        if &magic != DATASET_MAGIC {
            return Err(DatasetError::Format(format!("bad magic {magic:02X?}")));
        }
        let version = u16::from_le_bytes(read_array(&mut r, "version")?);
        if version != DATASET_VERSION {
            return Err(DatasetError::Format(format!("unsupported version {version}")));
        }
        let [view, category] = read_array(&mut r, "view/category")?;
        let view = ViewKind::from_code(view).ok_or_else(|| DatasetError::Format(format!("bad view code {view}")))?;
        let category = HeaderCategory::from_code(category)
            .ok_or_else(|| DatasetError::Format(format!("bad category code {category}")))?;
        let sample_len = u32::from_le_bytes(read_array(&mut r, "sample length")?) as usize;
        let class_count = u16::from_le_bytes(read_array(&mut r, "class count")?) as usize;
        if class_count == 0 {
            return Err(DatasetError::Format("class list is empty".into()));
        }
        let mut class_names = Vec::with_capacity(class_count);
        for _ in 0..class_count {
            let len = u16::from_le_bytes(read_array(&mut r, "class name")?) as usize;
            let mut name = vec![0u8; len];
            read_exact(&mut r, &mut name, "class name")?;
            class_names.push(String::from_utf8(name).map_err(|_| DatasetError::Format("class name is not UTF-8".into()))?);
        }
        let sample_count = u64::from_le_bytes(read_array(&mut r, "sample count")?);
        let mut samples = Vec::with_capacity(sample_count.min(1 << 16) as usize);
        for index in 0..sample_count {
            let label = u16::from_le_bytes(read_array(&mut r, "sample label")?);
            if label as usize >= class_count {
                return Err(DatasetError::LabelOutOfRange { index, label, class_count });
            }
            let mut bytes = vec![0u8; sample_len];
            read_exact(&mut r, &mut bytes, "sample bytes")?;
            samples.push(Sample::new(label, bytes));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(DatasetError::Format("trailing bytes after last sample".into()));
        }
        Ok(DatasetFile { view, category, sample_len, class_names, samples })
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &'static str) -> Result<(), DatasetError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => DatasetError::Truncated(what),
        _ => DatasetError::Io(e),
    })
}

fn read_array<const N: usize, R: Read>(r: &mut R, what: &'static str) -> Result<[u8; N], DatasetError> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf, what)?;
    Ok(buf)
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &DatasetFile) -> Result<(), DatasetError> {
    ds.write_to(BufWriter::new(File::create(path)?))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<DatasetFile, DatasetError> {
    DatasetFile::read_from(BufReader::new(File::open(path)?))
}

/// Refuses to overwrite an existing dataset built with a different sample length.
pub fn check_existing_output(path: &Path, sample_len: usize) -> Result<(), DatasetError> {
    if !path.exists() {
        return Ok(());
    }
    let mut header = [0u8; 12];
    let mut f = File::open(path)?;
    if f.read_exact(&mut header).is_err() || &header[..4] != DATASET_MAGIC {
        return Ok(());
    }
    let existing = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    if existing != sample_len {
        return Err(DatasetError::SampleLenMismatch { path: path.to_path_buf(), existing, requested: sample_len });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledInput {
    pub path: PathBuf,
    pub class: String,
}

/// Parses `pcap-path,class-name` lines. Relative paths are resolved
/// against `base`. Blank lines and `#` comments are skipped.
pub fn parse_labels(text: &str, base: &Path) -> Result<Vec<LabeledInput>, DatasetError> {
    let mut inputs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (path, class) = line
            .rsplit_once(',')
            .ok_or_else(|| DatasetError::LabelsSyntax { line: i + 1, msg: "expected 'path,class'".into() })?;
        let (path, class) = (path.trim(), class.trim());
        if path.is_empty() || class.is_empty() {
            return Err(DatasetError::LabelsSyntax { line: i + 1, msg: "empty path or class".into() });
        }
        let path = PathBuf::from(path);
        let path = if path.is_relative() { base.join(path) } else { path };
        inputs.push(LabeledInput { path, class: class.to_string() });
    }
    Ok(inputs)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabeledInput>, DatasetError> {
    let text = std::fs::read_to_string(path)?;
    parse_labels(&text, path.parent().unwrap_or(Path::new(".")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    pub view: ViewKind,
    pub category: HeaderCategory,
    pub sample_len: usize,
    pub task: Task,
    pub include_non_ip: bool,
    pub drop_empty: bool,
}

impl BuildOptions {
    pub fn new(view: ViewKind, category: HeaderCategory, task: Task) -> Self {
        BuildOptions { view, category, sample_len: DEFAULT_SAMPLE_LEN, task, include_non_ip: false, drop_empty: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileStats {
    pub path: PathBuf,
    pub packets: u64,
    pub retained: u64,
    pub units: usize,
    pub dropped_empty: usize,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildReport {
    pub files: Vec<FileStats>,
    pub class_counts: Vec<usize>,
}

fn build_one(
    file: usize,
    input: &LabeledInput,
    label: u16,
    opts: &BuildOptions,
) -> Result<(Vec<Sample>, FileStats), DatasetError> {
    let pcap_err = |source| DatasetError::Pcap { path: input.path.clone(), source };
    let reader = PcapReader::open(&input.path).map_err(pcap_err)?;
    let link_type = reader.info().link_type;
    if link_type != LINKTYPE_ETHERNET {
        return Err(DatasetError::LinkType { path: input.path.clone(), link_type });
    }
    let mut asm = UnitAssembler::new(opts.view, opts.category, opts.sample_len, opts.include_non_ip);
    let mut stats = FileStats { path: input.path.clone(), ..FileStats::default() };
    for record in reader {
        let record = record.map_err(pcap_err)?;
        stats.packets += 1;
        let d = dissect(&record.data);
        if asm.push(&record, &d) {
            stats.retained += 1;
        }
    }
    let units = asm.finish();
    stats.units = units.len();
    let mut samples = Vec::with_capacity(units.len());
    for unit in units {
        if unit.sample.real_len == 0 && opts.drop_empty {
            stats.dropped_empty += 1;
            continue;
        }
        samples.push(Sample {
            label,
            provenance: Some(Provenance {
                file,
                unit: unit.key,
                first_index: unit.first_index,
                packet_count: unit.packet_count,
                real_len: unit.sample.real_len,
            }),
            bytes: unit.sample.bytes,
        });
    }
    Ok((samples, stats))
}

/// Builds one dataset from labeled captures. Files are processed in
/// parallel; samples are ordered by input file, then by first packet.
pub fn build_dataset(inputs: &[LabeledInput], opts: &BuildOptions) -> Result<(DatasetFile, BuildReport), DatasetError> {
    if opts.sample_len == 0 {
        return Err(DatasetError::Format("sample length must be at least 1".into()));
    }
    let labels = inputs.iter().map(|i| opts.task.resolve(&i.class)).collect::<Result<Vec<_>, _>>()?;
    let per_file: Vec<Result<(Vec<Sample>, FileStats), DatasetError>> = inputs
        .par_iter()
        .zip(labels.par_iter())
        .enumerate()
        .map(|(file, (input, label))| match label {
            Some(label) => build_one(file, input, *label, opts),
            None => Ok((Vec::new(), FileStats { path: input.path.clone(), skipped: true, ..FileStats::default() })),
        })
        .collect();

    let mut ds = DatasetFile::new(opts.view, opts.category, opts.sample_len, opts.task.class_names());
    let mut files = Vec::with_capacity(inputs.len());
    for result in per_file {
        let (samples, stats) = result?;
        ds.samples.extend(samples);
        files.push(stats);
    }
    let class_counts = ds.class_counts();
    for (name, count) in ds.class_names.iter().zip(&class_counts) {
        if *count == 0 {
            warn!("class '{name}' has no samples");
        }
    }
    Ok((ds, BuildReport { files, class_counts }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteDistributionRow {
    pub class: usize,
    pub name: String,
    pub samples: usize,
    pub bytes: u64,
}

/// Per-class totals of real (pre-padding) sample bytes. Classes without
/// samples are omitted.
pub fn byte_distribution(ds: &DatasetFile) -> Vec<ByteDistributionRow> {
    let mut totals = vec![(0usize, 0u64); ds.class_count()];
    for s in &ds.samples {
        let t = &mut totals[s.label as usize];
        t.0 += 1;
        t.1 += s.real_len() as u64;
    }
    totals
        .into_iter()
        .enumerate()
        .filter(|(_, (n, _))| *n > 0)
        .map(|(class, (samples, bytes))| ByteDistributionRow { class, name: ds.class_names[class].clone(), samples, bytes })
        .collect()
}

/// Seeded per-class shuffle, holding out `val_fraction` of each class.
/// Returns `(train, validation)` index lists, each sorted ascending.
pub fn stratified_split(labels: &[u16], class_count: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for mut members in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let mut n_val = (n as f64 * val_fraction).round() as usize;
        if n >= 2 && n_val == 0 {
            n_val = 1;
        }
        if n_val >= n && n > 0 {
            n_val = n - 1;
        }
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}
