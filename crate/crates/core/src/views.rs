//! Sampling units (packet, flow, session) and header-category excision.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::dissect::{keys, Dissection, FlowKey, SessionKey};
use crate::pcap::PacketRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViewKind {
    Packet,
    Flow,
    Session,
}

impl ViewKind {
    pub const ALL: [ViewKind; 3] = [ViewKind::Packet, ViewKind::Flow, ViewKind::Session];

    pub fn code(self) -> u8 {
        match self {
            ViewKind::Packet => 0,
            ViewKind::Flow => 1,
            ViewKind::Session => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        ViewKind::ALL.into_iter().find(|v| v.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewKind::Packet => "packet",
            ViewKind::Flow => "flow",
            ViewKind::Session => "session",
        }
    }
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ViewKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ViewKind::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown view '{s}' (expected packet, flow or session)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeaderCategory {
    AllHeaders,
    OnlyEthernet,
    WithoutEthernet,
    NoHeaders,
}

impl HeaderCategory {
    pub const ALL: [HeaderCategory; 4] = [
        HeaderCategory::AllHeaders,
        HeaderCategory::OnlyEthernet,
        HeaderCategory::WithoutEthernet,
        HeaderCategory::NoHeaders,
    ];

    pub fn code(self) -> u8 {
        match self {
            HeaderCategory::AllHeaders => 0,
            HeaderCategory::OnlyEthernet => 1,
            HeaderCategory::WithoutEthernet => 2,
            HeaderCategory::NoHeaders => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        HeaderCategory::ALL.into_iter().find(|c| c.code() == code)
    }

    /// Short command-line spelling.
    pub fn flag_name(self) -> &'static str {
        match self {
            HeaderCategory::AllHeaders => "all",
            HeaderCategory::OnlyEthernet => "only-eth",
            HeaderCategory::WithoutEthernet => "no-eth",
            HeaderCategory::NoHeaders => "none",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeaderCategory::AllHeaders => "all_headers",
            HeaderCategory::OnlyEthernet => "only_ethernet",
            HeaderCategory::WithoutEthernet => "without_ethernet",
            HeaderCategory::NoHeaders => "no_headers",
        }
    }
}

impl fmt::Display for HeaderCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeaderCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        HeaderCategory::ALL
            .into_iter()
            .find(|c| c.flag_name().eq_ignore_ascii_case(s) || c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category '{s}' (expected all, only-eth, no-eth or none)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnitKey {
    Packet(u64),
    Flow(FlowKey),
    Session(SessionKey),
}

impl fmt::Display for UnitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitKey::Packet(i) => write!(f, "packet #{i}"),
            UnitKey::Flow(k) => write!(f, "flow {k}"),
            UnitKey::Session(k) => write!(f, "session {k}"),
        }
    }
}

/// Key of the unit a packet belongs to, or `None` when the packet is not
/// retained in this view.
pub fn unit_key(view: ViewKind, record_index: u64, d: &Dissection, include_non_ip: bool) -> Option<UnitKey> {
    match (view, keys(d)) {
        (ViewKind::Packet, Ok(_)) => Some(UnitKey::Packet(record_index)),
        (ViewKind::Packet, Err(_)) if include_non_ip => Some(UnitKey::Packet(record_index)),
        (ViewKind::Flow, Ok((flow, _))) => Some(UnitKey::Flow(flow)),
        (ViewKind::Session, Ok((_, session))) => Some(UnitKey::Session(session)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub key: UnitKey,
    /// Positions into the input slice, in capture order.
    pub members: Vec<usize>,
}

/// Groups packets into units. Units are ordered by their first packet.
pub fn split_view(packets: &[(PacketRecord, Dissection)], view: ViewKind, include_non_ip: bool) -> Vec<Unit> {
    let mut slots: HashMap<UnitKey, usize> = HashMap::new();
    let mut units: Vec<Unit> = Vec::new();
    for (pos, (record, d)) in packets.iter().enumerate() {
        let Some(key) = unit_key(view, record.index, d, include_non_ip) else { continue };
        let slot = *slots.entry(key).or_insert_with(|| {
            units.push(Unit { key, members: Vec::new() });
            units.len() - 1
        });
        units[slot].members.push(pos);
    }
    units
}

/// The one or two byte ranges a category keeps, in order.
pub fn kept_ranges<'a>(data: &'a [u8], d: &Dissection, cat: HeaderCategory) -> (&'a [u8], &'a [u8]) {
    let len = data.len();
    let eth_end = d.eth_end.min(len);
    let ip_end = d.ip_end.map(|e| e.min(len));
    match (cat, ip_end) {
        (HeaderCategory::AllHeaders, _) => (data, &[]),
        (HeaderCategory::OnlyEthernet, Some(ip_end)) => (&data[..eth_end], &data[ip_end..]),
        (HeaderCategory::OnlyEthernet, None) => (data, &[]),
        (HeaderCategory::WithoutEthernet, _) => (&data[eth_end..], &[]),
        (HeaderCategory::NoHeaders, Some(ip_end)) => (&data[ip_end..], &[]),
        (HeaderCategory::NoHeaders, None) => (&data[eth_end..], &[]),
    }
}

pub fn strip_headers(data: &[u8], d: &Dissection, cat: HeaderCategory) -> Vec<u8> {
    let (head, tail) = kept_ranges(data, d, cat);
    [head, tail].concat()
}

/// Fixed-length sample bytes plus the count of real (non-padding) bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledBytes {
    pub bytes: Vec<u8>,
    pub real_len: usize,
}

/// Concatenates the stripped bytes of each packet, keeps the first `n`, and
/// zero-pads to `n`.
pub fn assemble_sample<'a, I>(packets: I, cat: HeaderCategory, n: usize) -> AssembledBytes
where
    I: IntoIterator<Item = (&'a [u8], &'a Dissection)>,
{
    let mut acc = SampleBuffer::new(n);
    for (data, d) in packets {
        if acc.is_full() {
            break;
        }
        acc.push(data, d, cat);
    }
    acc.finish()
}

#[derive(Debug, Clone)]
struct SampleBuffer {
    n: usize,
    bytes: Vec<u8>,
}

impl SampleBuffer {
    fn new(n: usize) -> Self {
        SampleBuffer { n, bytes: Vec::with_capacity(n) }
    }

    fn is_full(&self) -> bool {
        self.bytes.len() >= self.n
    }

    fn push(&mut self, data: &[u8], d: &Dissection, cat: HeaderCategory) {
        let (head, tail) = kept_ranges(data, d, cat);
        for part in [head, tail] {
            let room = self.n - self.bytes.len();
            self.bytes.extend_from_slice(&part[..part.len().min(room)]);
        }
    }

    fn finish(mut self) -> AssembledBytes {
        let real_len = self.bytes.len();
        self.bytes.resize(self.n, 0);
        AssembledBytes { bytes: self.bytes, real_len }
    }
}

#[derive(Debug, Clone)]
pub struct AssembledUnit {
    pub key: UnitKey,
    pub first_index: u64,
    pub packet_count: usize,
    pub sample: AssembledBytes,
}

/// Streaming equivalent of [`split_view`] followed by [`assemble_sample`]:
/// keeps at most `n` bytes per unit instead of whole packets.
pub struct UnitAssembler {
    view: ViewKind,
    cat: HeaderCategory,
    include_non_ip: bool,
    slots: HashMap<UnitKey, usize>,
    units: Vec<(UnitKey, u64, usize, SampleBuffer)>,
    n: usize,
}

impl UnitAssembler {
    pub fn new(view: ViewKind, cat: HeaderCategory, n: usize, include_non_ip: bool) -> Self {
        UnitAssembler { view, cat, include_non_ip, slots: HashMap::new(), units: Vec::new(), n }
    }

    /// Returns whether the packet was retained.
    pub fn push(&mut self, record: &PacketRecord, d: &Dissection) -> bool {
        let Some(key) = unit_key(self.view, record.index, d, self.include_non_ip) else { return false };
        let slot = match self.slots.get(&key) {
            Some(&slot) => slot,
            None => {
                self.units.push((key, record.index, 0, SampleBuffer::new(self.n)));
                self.slots.insert(key, self.units.len() - 1);
                self.units.len() - 1
            }
        };
        let (_, _, count, buf) = &mut self.units[slot];
        *count += 1;
        if !buf.is_full() {
            buf.push(&record.data, d, self.cat);
        }
        true
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    pub fn finish(self) -> Vec<AssembledUnit> {
        self.units
            .into_iter()
            .map(|(key, first_index, packet_count, buf)| AssembledUnit {
                key,
                first_index,
                packet_count,
                sample: buf.finish(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissect::dissect;
    use crate::frame::{build_frame, FrameSpec};

    fn record(index: u64, data: Vec<u8>) -> (PacketRecord, Dissection) {
        let d = dissect(&data);
        (PacketRecord { index, ts_sec: index as u32, ts_frac: 0, orig_len: data.len() as u32, data }, d)
    }

    fn four_packet_fixture() -> Vec<(PacketRecord, Dissection)> {
        let ab = FrameSpec { src_ip: [10, 0, 0, 1], dst_ip: [10, 0, 0, 2], src_port: 5000, dst_port: 80, ..FrameSpec::default() };
        let ba = FrameSpec { src_ip: ab.dst_ip, dst_ip: ab.src_ip, src_port: 80, dst_port: 5000, ..FrameSpec::default() };
        let cd = FrameSpec { src_ip: [10, 0, 0, 3], dst_ip: [10, 0, 0, 4], ..FrameSpec::default() };
        vec![
            record(0, build_frame(&ab)),
            record(1, build_frame(&ba)),
            record(2, build_frame(&ab)),
            record(3, build_frame(&cd)),
        ]
    }

    fn sizes(units: &[Unit]) -> Vec<usize> {
        units.iter().map(|u| u.members.len()).collect()
    }

    #[test]
    fn four_packet_fixture_per_view() {
        let packets = four_packet_fixture();
        assert_eq!(sizes(&split_view(&packets, ViewKind::Session, false)), vec![3, 1]);
        assert_eq!(sizes(&split_view(&packets, ViewKind::Flow, false)), vec![2, 1, 1]);
        assert_eq!(sizes(&split_view(&packets, ViewKind::Packet, false)), vec![1, 1, 1, 1]);
        assert_eq!(split_view(&packets, ViewKind::Session, false)[0].members, vec![0, 1, 2]);
    }

    #[test]
    fn non_ip_only_in_packet_view_when_enabled() {
        let mut packets = four_packet_fixture();
        let mut arp = vec![0u8; 12];
        arp.extend_from_slice(&0x0806u16.to_be_bytes());
        arp.extend_from_slice(&[0; 28]);
        packets.push(record(4, arp));
        assert_eq!(split_view(&packets, ViewKind::Packet, false).len(), 4);
        assert_eq!(split_view(&packets, ViewKind::Packet, true).len(), 5);
        assert_eq!(split_view(&packets, ViewKind::Session, true).len(), 2);
    }

    fn tcp54() -> (Vec<u8>, Dissection) {
        let mut spec = FrameSpec::default();
        spec.payload.clear();
        let data = build_frame(&spec);
        assert_eq!(data.len(), 54);
        let d = dissect(&data);
        (data, d)
    }

    #[test]
    fn category_slices_on_54_byte_frame() {
        let (data, d) = tcp54();
        assert_eq!(strip_headers(&data, &d, HeaderCategory::AllHeaders), data);
        assert_eq!(strip_headers(&data, &d, HeaderCategory::WithoutEthernet), data[14..54].to_vec());
        let only_eth = strip_headers(&data, &d, HeaderCategory::OnlyEthernet);
        assert_eq!(only_eth.len(), 34);
        assert_eq!(only_eth, [&data[0..14], &data[34..54]].concat());
        assert_eq!(strip_headers(&data, &d, HeaderCategory::NoHeaders), data[34..54].to_vec());
    }

    #[test]
    fn non_ip_fallbacks() {
        let mut data = vec![0u8; 12];
        data.extend_from_slice(&0x0806u16.to_be_bytes());
        data.extend_from_slice(&[9; 28]);
        let d = dissect(&data);
        assert_eq!(strip_headers(&data, &d, HeaderCategory::OnlyEthernet), data);
        assert_eq!(strip_headers(&data, &d, HeaderCategory::WithoutEthernet), data[14..].to_vec());
        assert_eq!(strip_headers(&data, &d, HeaderCategory::NoHeaders), data[14..].to_vec());
    }

    #[test]
    fn pad_truncate_and_degenerate_n() {
        // fake dissection on a non-IP payload so all_headers passes bytes verbatim
        let d = dissect(&[0x00, 0xFF]);
        let two = [0x00u8, 0xFF];
        let s = assemble_sample([(&two[..], &d)], HeaderCategory::AllHeaders, 4);
        assert_eq!(s.bytes, vec![0x00, 0xFF, 0x00, 0x00]);
        assert_eq!(s.real_len, 2);

        let p1: Vec<u8> = (0..100).collect();
        let p2: Vec<u8> = (100..200).collect();
        let d1 = dissect(&p1);
        let d2 = dissect(&p2);
        let s = assemble_sample([(&p1[..], &d1), (&p2[..], &d2)], HeaderCategory::AllHeaders, 115);
        let expected: Vec<u8> = (0..115).collect();
        assert_eq!(s.bytes, expected);

        let s = assemble_sample([(&p2[..], &d2)], HeaderCategory::AllHeaders, 1);
        assert_eq!(s.bytes, vec![100]);
        let empty: [(&[u8], &Dissection); 0] = [];
        assert_eq!(assemble_sample(empty, HeaderCategory::AllHeaders, 1).bytes, vec![0]);
    }

    #[test]
    fn streaming_assembler_matches_split_then_assemble() {
        let packets = four_packet_fixture();
        for view in ViewKind::ALL {
            for cat in HeaderCategory::ALL {
                let mut asm = UnitAssembler::new(view, cat, 60, false);
                for (r, d) in &packets {
                    asm.push(r, d);
                }
                let streamed = asm.finish();
                let units = split_view(&packets, view, false);
                assert_eq!(streamed.len(), units.len());
                for (s, u) in streamed.iter().zip(&units) {
                    let parts = u.members.iter().map(|&i| (&packets[i].0.data[..], &packets[i].1));
                    assert_eq!(s.sample, assemble_sample(parts, cat, 60));
                    assert_eq!(s.key, u.key);
                    assert_eq!(s.packet_count, u.members.len());
                }
            }
        }
    }

    #[test]
    fn names_parse() {
        assert_eq!("only-eth".parse::<HeaderCategory>().unwrap(), HeaderCategory::OnlyEthernet);
        assert_eq!("no_headers".parse::<HeaderCategory>().unwrap(), HeaderCategory::NoHeaders);
        assert_eq!("Session".parse::<ViewKind>().unwrap(), ViewKind::Session);
        assert!("bogus".parse::<ViewKind>().is_err());
        for v in ViewKind::ALL {
            assert_eq!(ViewKind::from_code(v.code()), Some(v));
        }
    }
}
