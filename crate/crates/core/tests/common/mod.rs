//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::Cursor;

use featureless::dissect::{dissect, Dissection, FiveTuple};
use featureless::frame::{build_frame, FrameSpec, Transport};
use featureless::nn::loss::loss_and_grad;
use featureless::nn::ops::{self, ConvGeometry};
use featureless::nn::{Activation, LossKind};
use featureless::pcap::{CaptureInfo, PacketRecord, PcapReader};
use featureless::synth::{synth_file_packets, write_synth_pcap, SynthSpec};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- frames

/// Random well-formed frame together with the offsets its spec implies.
pub struct RandomFrame {
    pub spec: FrameSpec,
    pub bytes: Vec<u8>,
    pub eth_end: usize,
    pub ip_end: usize,
    pub payload_start: usize,
}

pub fn random_frame(r: &mut ChaCha8Rng) -> RandomFrame {
    let ipv6 = r.random_bool(0.3);
    let transport = if r.random_bool(0.5) { Transport::Tcp } else { Transport::Udp };
    let spec = FrameSpec {
        src_mac: r.random(),
        dst_mac: r.random(),
        vlan_tags: r.random_range(0..=2),
        ipv6,
        src_ip: r.random(),
        dst_ip: r.random(),
        ttl: r.random(),
        ip_id: r.random(),
        ip_option_words: if ipv6 { 0 } else { r.random_range(0..=10) },
        transport,
        src_port: r.random(),
        dst_port: r.random(),
        tcp_seq: r.random(),
        tcp_ack: r.random(),
        tcp_flags: r.random(),
        tcp_option_words: r.random_range(0..=10),
        payload: (0..r.random_range(0..200)).map(|_| r.random()).collect(),
    };
    let eth_end = 14 + 4 * spec.vlan_tags;
    let ip_end = eth_end + if ipv6 { 40 } else { 20 + 4 * spec.ip_option_words };
    let transport_len = match transport {
        Transport::Tcp => 20 + 4 * spec.tcp_option_words,
        Transport::Udp => 8,
    };
    let bytes = build_frame(&spec);
    RandomFrame { payload_start: ip_end + transport_len, spec, bytes, eth_end, ip_end }
}

// ---------------------------------------------------------------- captures

/// Synthetic capture with colliding ports and a sprinkling of non-IP
/// frames, parsed back through the reader.
pub fn random_capture(seed: u64) -> Vec<(PacketRecord, Dissection)> {
    let mut r = rng(seed);
    let spec = SynthSpec {
        sessions_per_class: r.random_range(1..12),
        host_pool: r.random_range(1..4),
        port_pool: Some(r.random_range(1..6)),
        packets_per_session: (1, 5),
        payload_len: (0, 40),
        ..SynthSpec::two_class(1, seed)
    };
    let mut packets = synth_file_packets(&spec, r.random_range(0..2), 0);
    for _ in 0..r.random_range(0..4) {
        let at = r.random_range(0..=packets.len());
        let mut arp = vec![0xFFu8; 12];
        arp.extend_from_slice(&[0x08, 0x06]);
        arp.extend((0..28).map(|_| r.random::<u8>()));
        let micros = packets.get(at).map_or(0, |p| p.micros);
        packets.insert(at, featureless::synth::SynthPacket { micros, frame: arp });
    }
    let bytes = write_synth_pcap(Vec::new(), &packets).unwrap();
    PcapReader::new(Cursor::new(bytes))
        .unwrap()
        .map(|p| {
            let p = p.unwrap();
            let d = dissect(&p.data);
            (p, d)
        })
        .collect()
}

pub fn capture_info() -> CaptureInfo {
    CaptureInfo::ethernet(65535)
}

/// Packet groups found by comparing every packet with every earlier one.
pub fn pairwise_groups(tuples: &[Option<FiveTuple>], bidirectional: bool) -> Vec<BTreeSet<usize>> {
    let same = |a: &FiveTuple, b: &FiveTuple| {
        (a.src == b.src && a.dst == b.dst && a.proto == b.proto)
            || (bidirectional && a.src == b.dst && a.dst == b.src && a.proto == b.proto)
    };
    let mut group_of: Vec<Option<usize>> = vec![None; tuples.len()];
    let mut groups: Vec<BTreeSet<usize>> = Vec::new();
    for i in 0..tuples.len() {
        let Some(ti) = &tuples[i] else { continue };
        let mut found = None;
        for j in 0..i {
            if let Some(tj) = &tuples[j] {
                if same(ti, tj) {
                    found = group_of[j];
                    break;
                }
            }
        }
        let g = found.unwrap_or_else(|| {
            groups.push(BTreeSet::new());
            groups.len() - 1
        });
        groups[g].insert(i);
        group_of[i] = Some(g);
    }
    groups
}

// ---------------------------------------------------------------- metrics

/// Accuracy and support-weighted f1 written out from TP/FP/FN counts.
// Indexed on purpose: reads like the textbook formula.
#[allow(clippy::needless_range_loop)]
pub fn hand_metrics(m: &[Vec<u64>]) -> (f64, f64) {
    let k = m.len();
    let total: u64 = m.iter().flatten().sum();
    if total == 0 {
        return (0.0, 0.0);
    }
    let mut correct = 0u64;
    let mut weighted = 0.0;
    for c in 0..k {
        let tp = m[c][c];
        correct += tp;
        let fp: u64 = (0..k).filter(|&t| t != c).map(|t| m[t][c]).sum();
        let fn_: u64 = (0..k).filter(|&p| p != c).map(|p| m[c][p]).sum();
        let denom = 2 * tp + fp + fn_;
        let f1 = if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 };
        weighted += (tp + fn_) as f64 * f1;
    }
    (correct as f64 / total as f64, weighted / total as f64)
}

pub fn random_confusion(r: &mut ChaCha8Rng) -> Vec<Vec<u64>> {
    let k = r.random_range(2..=13);
    (0..k)
        .map(|_| (0..k).map(|_| if r.random_bool(0.3) { 0 } else { r.random_range(0..50) }).collect())
        .collect()
}

// ---------------------------------------------------------------- gradients

pub const DRAWS_PER_LAYER: usize = 100;

fn c<T: Float>(v: f64) -> T {
    T::from(v).unwrap()
}

fn uniform<T: Float>(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<T> {
    (0..n).map(|_| c(r.random_range(lo..hi))).collect()
}

fn dot<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)` over the whole gradient.
pub fn relative_error<T: Float>(analytic: &[T], numeric: &[T]) -> f64 {
    let norm = |v: &[T]| v.iter().map(|x| x.to_f64().unwrap().powi(2)).sum::<f64>().sqrt();
    let diff: Vec<T> = analytic.iter().zip(numeric).map(|(&a, &b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` with respect to each entry of `params`.
fn numeric_grad<T: Float>(params: &mut [T], h: T, mut f: impl FnMut(&[T]) -> T) -> Vec<T> {
    let two = T::one() + T::one();
    (0..params.len())
        .map(|i| {
            let orig = params[i];
            params[i] = orig + h;
            let up = f(params);
            params[i] = orig - h;
            let down = f(params);
            params[i] = orig;
            (up - down) / (two * h)
        })
        .collect()
}

pub struct GradReport {
    pub layer: &'static str,
    pub draws: usize,
    pub worst: f64,
}

pub fn step<T: Float>() -> T {
    c(1e-3)
}

/// Conv forward objective `r · act(conv(x))`, analytic against numeric over
/// inputs, weights and biases together.
pub fn check_conv<T: Float>(seed: u64, relu: bool) -> GradReport {
    let mut r = rng(seed);
    let h = step::<T>();
    let mut worst = 0.0f64;
    let mut draws = 0;
    while draws < DRAWS_PER_LAYER {
        let g = ConvGeometry {
            len: r.random_range(3..16),
            in_channels: r.random_range(1..4),
            filters: r.random_range(1..5),
            kernel: r.random_range(1..4),
            stride: r.random_range(1..4),
        };
        let mut x: Vec<T> = uniform(&mut r, g.len * g.in_channels, -1.0, 1.0);
        let mut w: Vec<T> = uniform(&mut r, g.weight_len(), -1.0, 1.0);
        let mut b: Vec<T> = uniform(&mut r, g.filters, -0.5, 0.5);
        let out_len = g.out_len().unwrap();
        let proj: Vec<T> = uniform(&mut r, out_len * g.filters, -1.0, 1.0);
        let pre = ops::conv1d_forward(&x, &w, &b, &g).unwrap();
        if relu && pre.iter().any(|v| v.abs() < c::<T>(10.0) * h) {
            continue; // finite differences straddle the kink
        }
        let forward = |x: &[T], w: &[T], b: &[T]| {
            let mut y = ops::conv1d_forward(x, w, b, &g).unwrap();
            if relu {
                ops::relu_in_place(&mut y);
            }
            dot(&y, &proj)
        };
        let mut out = pre.clone();
        let mut grad = proj.clone();
        if relu {
            ops::relu_in_place(&mut out);
            ops::relu_backward_in_place(&out, &mut grad);
        }
        let (gx, gw, gb) = ops::conv1d_backward(&x, &w, &grad, &g);
        let (w0, b0) = (w.clone(), b.clone());
        let nx = numeric_grad(&mut x, h, |x| forward(x, &w0, &b0));
        let x0 = x.clone();
        let nw = numeric_grad(&mut w, h, |w| forward(&x0, w, &b0));
        let nb = numeric_grad(&mut b, h, |b| forward(&x0, &w0, b));
        let analytic = [gx, gw, gb].concat();
        let numeric = [nx, nw, nb].concat();
        worst = worst.max(relative_error(&analytic, &numeric));
        draws += 1;
    }
    GradReport { layer: if relu { "conv1d+relu" } else { "conv1d" }, draws, worst }
}

pub fn check_maxpool<T: Float>(seed: u64) -> GradReport {
    let mut r = rng(seed);
    let h = step::<T>();
    let mut worst = 0.0f64;
    for _ in 0..DRAWS_PER_LAYER {
        let len = r.random_range(2..20);
        let channels = r.random_range(1..4);
        let pool = r.random_range(1..=len.min(5));
        let stride = r.random_range(1..=pool);
        // distinct values spaced far wider than the step, so no window ties
        let mut order: Vec<usize> = (0..len * channels).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, r.random_range(0..=i));
        }
        let mut x: Vec<T> = order.iter().map(|&k| c(k as f64 * 0.1 + r.random_range(0.0..0.01))).collect();
        let (out, arg) = ops::maxpool1d_forward(&x, len, channels, pool, stride).unwrap();
        let proj: Vec<T> = uniform(&mut r, out.len(), -1.0, 1.0);
        let gx = ops::maxpool1d_backward(&proj, &arg, len, channels);
        let nx = numeric_grad(&mut x, h, |x| dot(&ops::maxpool1d_forward(x, len, channels, pool, stride).unwrap().0, &proj));
        worst = worst.max(relative_error(&gx, &nx));
    }
    GradReport { layer: "max_pool1d", draws: DRAWS_PER_LAYER, worst }
}

pub fn check_gap<T: Float>(seed: u64) -> GradReport {
    let mut r = rng(seed);
    let h = step::<T>();
    let mut worst = 0.0f64;
    for _ in 0..DRAWS_PER_LAYER {
        let len = r.random_range(1..20);
        let channels = r.random_range(1..6);
        let mut x: Vec<T> = uniform(&mut r, len * channels, -1.0, 1.0);
        let proj: Vec<T> = uniform(&mut r, channels, -1.0, 1.0);
        let gx = ops::global_avg_pool_backward(&proj, len);
        let nx = numeric_grad(&mut x, h, |x| dot(&ops::global_avg_pool_forward(x, len, channels).unwrap(), &proj));
        worst = worst.max(relative_error(&gx, &nx));
    }
    GradReport { layer: "global_avg_pool1d", draws: DRAWS_PER_LAYER, worst }
}

pub fn check_dense<T: Float>(seed: u64) -> GradReport {
    let mut r = rng(seed);
    let h = step::<T>();
    let mut worst = 0.0f64;
    for _ in 0..DRAWS_PER_LAYER {
        let inputs = r.random_range(1..20);
        let units = r.random_range(1..13);
        let mut x: Vec<T> = uniform(&mut r, inputs, -1.0, 1.0);
        let mut w: Vec<T> = uniform(&mut r, inputs * units, -1.0, 1.0);
        let mut b: Vec<T> = uniform(&mut r, units, -0.5, 0.5);
        let proj: Vec<T> = uniform(&mut r, units, -1.0, 1.0);
        let (gx, gw, gb) = ops::dense_backward(&x, &w, &proj);
        let (w0, b0) = (w.clone(), b.clone());
        let nx = numeric_grad(&mut x, h, |x| dot(&ops::dense_forward(x, &w0, &b0), &proj));
        let x0 = x.clone();
        let nw = numeric_grad(&mut w, h, |w| dot(&ops::dense_forward(&x0, w, &b0), &proj));
        let nb = numeric_grad(&mut b, h, |b| dot(&ops::dense_forward(&x0, &w0, b), &proj));
        worst = worst.max(relative_error(&[gx, gw, gb].concat(), &[nx, nw, nb].concat()));
    }
    GradReport { layer: "dense", draws: DRAWS_PER_LAYER, worst }
}

fn activate<T: Float>(z: &[T], a: Activation) -> Vec<T> {
    match a {
        Activation::Softmax => ops::softmax(z),
        Activation::Sigmoid => ops::sigmoid(z),
        _ => unreachable!(),
    }
}

/// Loss gradient with respect to the logits feeding the output activation.
pub fn check_loss<T: Float>(seed: u64, loss: LossKind, activation: Activation) -> GradReport {
    let mut r = rng(seed);
    let h = step::<T>();
    let mut worst = 0.0f64;
    for _ in 0..DRAWS_PER_LAYER {
        let units = r.random_range(2..13);
        let label = r.random_range(0..units);
        let mut z: Vec<T> = uniform(&mut r, units, -3.0, 3.0);
        let (_, analytic) = loss_and_grad(&activate(&z, activation), label, loss, activation).unwrap();
        let numeric = numeric_grad(&mut z, h, |z| loss_and_grad(&activate(z, activation), label, loss, activation).unwrap().0);
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    let layer = match (loss, activation) {
        (LossKind::BinaryCrossEntropy, Activation::Softmax) => "bce+softmax",
        (LossKind::BinaryCrossEntropy, _) => "bce+sigmoid",
        (LossKind::CategoricalCrossEntropy, Activation::Softmax) => "cce+softmax",
        (LossKind::CategoricalCrossEntropy, _) => "cce+sigmoid",
    };
    GradReport { layer, draws: DRAWS_PER_LAYER, worst }
}

pub fn all_gradient_checks<T: Float>(seed: u64) -> Vec<GradReport> {
    vec![
        check_conv::<T>(seed, false),
        check_conv::<T>(seed + 1, true),
        check_maxpool::<T>(seed + 2),
        check_gap::<T>(seed + 3),
        check_dense::<T>(seed + 4),
        check_loss::<T>(seed + 5, LossKind::BinaryCrossEntropy, Activation::Softmax),
        check_loss::<T>(seed + 6, LossKind::BinaryCrossEntropy, Activation::Sigmoid),
        check_loss::<T>(seed + 7, LossKind::CategoricalCrossEntropy, Activation::Softmax),
        check_loss::<T>(seed + 8, LossKind::CategoricalCrossEntropy, Activation::Sigmoid),
    ]
}
