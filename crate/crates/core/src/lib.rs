//! Traffic classification on raw packet bytes.
//!
//! Captures are read from classic pcap files, cut into packet, flow or
//! session units, stripped of a chosen set of headers and turned into
//! fixed-length byte samples for a small 1D convolutional network.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod dissect;
pub mod frame;
pub mod metrics;
pub mod nn;
pub mod pcap;
pub mod synth;
pub mod train;
pub mod views;

pub use dataset::{build_dataset, read_dataset, write_dataset, BuildOptions, DatasetError, DatasetFile, Sample, Task};
pub use dissect::{dissect, Dissection, FiveTuple, FlowKey, SessionKey};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use nn::{Architecture, Checkpoint, Model, Pairing, Profile};
pub use pcap::{PcapError, PcapReader, PcapWriter};
pub use train::{evaluate, predict, train, Examples, ModelConfig, TrainHistory};
pub use views::{HeaderCategory, ViewKind};
