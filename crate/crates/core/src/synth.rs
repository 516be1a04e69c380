//! Seeded synthetic captures: per-class payload byte distributions carried
//! over well-formed Ethernet/IPv4/TCP and UDP sessions.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{LabeledInput, BENIGN, BOTNET_FAMILIES};
use crate::frame::{build_frame, FrameSpec, Transport};
use crate::pcap::{CaptureInfo, PcapWriter};

const SNAPLEN: u32 = 65535;
const BASE_EPOCH: u32 = 1_545_000_000;
const SERVER_PORTS: [u16; 8] = [80, 443, 23, 2323, 8080, 53, 123, 6667];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassProfile {
    pub name: String,
    /// Inclusive payload byte range.
    pub byte_lo: u8,
    pub byte_hi: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: Vec<ClassProfile>,
    pub sessions_per_class: usize,
    pub files_per_class: usize,
    /// Inclusive range of packets per session.
    pub packets_per_session: (usize, usize),
    /// Inclusive range of payload bytes per packet.
    pub payload_len: (usize, usize),
    pub udp_fraction: f64,
    /// Distinct client and server addresses per file.
    pub host_pool: u8,
    /// Draw client ports from this many values (collisions allowed); `None`
    /// gives every session its own port.
    pub port_pool: Option<u16>,
    pub seed: u64,
}

impl SynthSpec {
    /// Benign payloads in 0x00..=0x7F, malicious in 0x80..=0xFF.
    pub fn two_class(sessions_per_class: usize, seed: u64) -> Self {
        SynthSpec {
            classes: vec![
                ClassProfile { name: BENIGN.into(), byte_lo: 0x00, byte_hi: 0x7F },
                ClassProfile { name: "Mirai".into(), byte_lo: 0x80, byte_hi: 0xFF },
            ],
            sessions_per_class,
            files_per_class: 1,
            packets_per_session: (2, 6),
            payload_len: (64, 400),
            udp_fraction: 0.25,
            host_pool: 16,
            port_pool: None,
            seed,
        }
    }

    /// Benign plus the twelve botnet families, each in its own byte band.
    pub fn all_families(sessions_per_class: usize, seed: u64) -> Self {
        let names: Vec<&str> = std::iter::once(BENIGN).chain(BOTNET_FAMILIES).collect();
        let width = 256 / names.len();
        let classes = names
            .iter()
            .enumerate()
            .map(|(i, name)| ClassProfile {
                name: name.to_string(),
                byte_lo: (i * width) as u8,
                byte_hi: if i + 1 == names.len() { 0xFF } else { ((i + 1) * width - 1) as u8 },
            })
            .collect();
        SynthSpec { classes, ..SynthSpec::two_class(sessions_per_class, seed) }
    }
}

/// One frame with its capture time in microseconds from the file start.
#[derive(Debug, Clone)]
pub struct SynthPacket {
    pub micros: u64,
    pub frame: Vec<u8>,
}

fn file_rng(seed: u64, class: usize, file: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class as u64) << 32) | file as u64);
    rng
}

fn split_even(total: usize, parts: usize, part: usize) -> usize {
    total / parts + usize::from(part < total % parts)
}

/// Packets of one capture file, in capture order.
pub fn synth_file_packets(spec: &SynthSpec, class: usize, file: usize) -> Vec<SynthPacket> {
    let profile = &spec.classes[class];
    let mut rng = file_rng(spec.seed, class, file);
    let sessions = split_even(spec.sessions_per_class, spec.files_per_class.max(1), file);
    let pool = spec.host_pool.max(1);
    let mut next_port: u16 = rng.random_range(20000..30000);
    let mut packets = Vec::new();
    let span_micros = (sessions as u64).max(1) * 200_000;

    for _ in 0..sessions {
        let client_ip = [192, 168, 0, 1 + rng.random_range(0..pool)];
        let server_ip = [10, (file % 256) as u8, 0, 1 + rng.random_range(0..pool)];
        let client_port = match spec.port_pool {
            Some(k) => 40000 + rng.random_range(0..k.max(1)),
            None => {
                next_port = next_port.wrapping_add(1).max(1024);
                next_port
            }
        };
        let transport = if rng.random_bool(spec.udp_fraction) { Transport::Udp } else { Transport::Tcp };
        let server_port = SERVER_PORTS[rng.random_range(0..SERVER_PORTS.len())];
        let count = rng.random_range(spec.packets_per_session.0..=spec.packets_per_session.1.max(spec.packets_per_session.0));
        let mut t = rng.random_range(0..span_micros);
        let (mut seq_c, mut seq_s): (u32, u32) = (rng.random(), rng.random());
        for i in 0..count {
            let from_client = i == 0 || rng.random_bool(0.5);
            let len = rng.random_range(spec.payload_len.0..=spec.payload_len.1.max(spec.payload_len.0));
            let payload: Vec<u8> = (0..len).map(|_| rng.random_range(profile.byte_lo..=profile.byte_hi)).collect();
            let (src_ip, dst_ip, src_port, dst_port) = if from_client {
                (client_ip, server_ip, client_port, server_port)
            } else {
                (server_ip, client_ip, server_port, client_port)
            };
            let (seq, ack) = if from_client { (&mut seq_c, seq_s) } else { (&mut seq_s, seq_c) };
            let frame_spec = FrameSpec {
                src_mac: [0x02, 0, 0, 0, src_ip[2], src_ip[3]],
                dst_mac: [0x02, 0, 0, 0, dst_ip[2], dst_ip[3]],
                src_ip,
                dst_ip,
                ttl: if from_client { 64 } else { 128 },
                ip_id: rng.random(),
                transport,
                src_port,
                dst_port,
                tcp_seq: *seq,
                tcp_ack: ack,
                tcp_flags: 0x18,
                payload,
                ..FrameSpec::default()
            };
            *seq = seq.wrapping_add(len as u32);
            packets.push(SynthPacket { micros: t, frame: build_frame(&frame_spec) });
            t += rng.random_range(1_000..50_000);
        }
    }
    packets.sort_by_key(|p| p.micros);
    packets
}

pub fn write_synth_pcap<W: Write>(w: W, packets: &[SynthPacket]) -> io::Result<W> {
    let mut writer = PcapWriter::new(w, CaptureInfo::ethernet(SNAPLEN))?;
    for p in packets {
        let sec = BASE_EPOCH + (p.micros / 1_000_000) as u32;
        let usec = (p.micros % 1_000_000) as u32;
        writer.write_record(sec, usec, p.frame.len() as u32, &p.frame)?;
    }
    writer.finish()
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub inputs: Vec<LabeledInput>,
    pub labels_path: PathBuf,
}

/// Writes one or more pcaps per class into `out_dir`, plus `labels.csv`
/// mapping each file to its class.
pub fn synth_corpus(spec: &SynthSpec, out_dir: &Path) -> io::Result<SynthOutput> {
    assert!(spec.classes.len() >= 2, "synthetic corpus needs at least two classes");
    fs::create_dir_all(out_dir)?;
    let mut inputs = Vec::new();
    let mut labels = String::from("# path,class\n");
    for (class, profile) in spec.classes.iter().enumerate() {
        for file in 0..spec.files_per_class.max(1) {
            let name = format!("{:02}_{}_{file}.pcap", class, file_stem(&profile.name));
            let path = out_dir.join(&name);
            let packets = synth_file_packets(spec, class, file);
            write_synth_pcap(io::BufWriter::new(fs::File::create(&path)?), &packets)?.flush()?;
            labels.push_str(&format!("{name},{}\n", profile.name));
            inputs.push(LabeledInput { path, class: profile.name.clone() });
        }
    }
    let labels_path = out_dir.join("labels.csv");
    fs::write(&labels_path, labels)?;
    Ok(SynthOutput { inputs, labels_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissect::dissect;

    #[test]
    fn frames_are_fully_dissectable() {
        let spec = SynthSpec::two_class(20, 9);
        for class in 0..2 {
            for p in synth_file_packets(&spec, class, 0) {
                let d = dissect(&p.frame);
                assert!(d.payload_start.is_some());
                let payload = &p.frame[d.payload_start.unwrap()..];
                let profile = &spec.classes[class];
                assert!(payload.iter().all(|b| (profile.byte_lo..=profile.byte_hi).contains(b)));
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SynthSpec::two_class(10, 4);
        let a = write_synth_pcap(Vec::new(), &synth_file_packets(&spec, 1, 0)).unwrap();
        let b = write_synth_pcap(Vec::new(), &synth_file_packets(&spec, 1, 0)).unwrap();
        assert_eq!(a, b);
        let other = SynthSpec { seed: 5, ..spec };
        assert_ne!(a, write_synth_pcap(Vec::new(), &synth_file_packets(&other, 1, 0)).unwrap());
    }

    #[test]
    fn family_bands_cover_byte_range() {
        let spec = SynthSpec::all_families(1, 0);
        assert_eq!(spec.classes.len(), 13);
        assert_eq!(spec.classes[0].byte_lo, 0);
        assert_eq!(spec.classes[12].byte_hi, 0xFF);
        for w in spec.classes.windows(2) {
            assert_eq!(w[0].byte_hi as usize + 1, w[1].byte_lo as usize);
        }
    }
}
