//! Builder for well-formed Ethernet frames, used by the synthetic corpus
//! generator and by tests.

use crate::dissect::{ETHERTYPE_IPV4, ETHERTYPE_IPV6, ETHERTYPE_VLAN, PROTO_TCP, PROTO_UDP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Tcp,
    Udp,
}

#[derive(Debug, Clone)]
pub struct FrameSpec {
    pub src_mac: [u8; 6],
    pub dst_mac: [u8; 6],
    pub vlan_tags: usize,
    pub ipv6: bool,
    /// IPv4 addresses; for IPv6 they are embedded as `::ffff:a.b.c.d`-style
    /// suffixes under a fixed documentation prefix.
    pub src_ip: [u8; 4],
    pub dst_ip: [u8; 4],
    pub ttl: u8,
    pub ip_id: u16,
    /// Extra IPv4 option words (each 4 bytes).
    pub ip_option_words: usize,
    pub transport: Transport,
    pub src_port: u16,
    pub dst_port: u16,
    pub tcp_seq: u32,
    pub tcp_ack: u32,
    pub tcp_flags: u8,
    pub tcp_option_words: usize,
    pub payload: Vec<u8>,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            src_mac: [0x02, 0x00, 0x00, 0x00, 0x00, 0x01],
            dst_mac: [0x02, 0x00, 0x00, 0x00, 0x00, 0x02],
            vlan_tags: 0,
            ipv6: false,
            src_ip: [10, 0, 0, 1],
            dst_ip: [10, 0, 0, 2],
            ttl: 64,
            ip_id: 0,
            ip_option_words: 0,
            transport: Transport::Tcp,
            src_port: 40000,
            dst_port: 80,
            tcp_seq: 1,
            tcp_ack: 0,
            tcp_flags: 0x18,
            tcp_option_words: 0,
            payload: Vec::new(),
        }
    }
}

fn ones_complement_sum(data: &[u8], mut sum: u32) -> u32 {
    let mut chunks = data.chunks_exact(2);
    for c in &mut chunks {
        sum += u16::from_be_bytes([c[0], c[1]]) as u32;
    }
    if let [last] = chunks.remainder() {
        sum += (*last as u32) << 8;
    }
    sum
}

fn fold_checksum(mut sum: u32) -> u16 {
    while sum > 0xFFFF {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

fn ipv6_addr(v4: [u8; 4]) -> [u8; 16] {
    let mut a = [0u8; 16];
    a[0] = 0x20;
    a[1] = 0x01;
    a[2] = 0x0d;
    a[3] = 0xb8;
    a[12..].copy_from_slice(&v4);
    a
}

pub fn build_frame(spec: &FrameSpec) -> Vec<u8> {
    let mut transport = Vec::new();
    let proto = match spec.transport {
        Transport::Tcp => {
            let header_len = 20 + 4 * spec.tcp_option_words;
            transport.extend_from_slice(&spec.src_port.to_be_bytes());
            transport.extend_from_slice(&spec.dst_port.to_be_bytes());
            transport.extend_from_slice(&spec.tcp_seq.to_be_bytes());
            transport.extend_from_slice(&spec.tcp_ack.to_be_bytes());
            transport.push(((header_len / 4) as u8) << 4);
            transport.push(spec.tcp_flags);
            transport.extend_from_slice(&64240u16.to_be_bytes());
            transport.extend_from_slice(&[0, 0, 0, 0]);
            // NOP padding
            transport.resize(header_len, 0x01);
            PROTO_TCP
        }
        Transport::Udp => {
            transport.extend_from_slice(&spec.src_port.to_be_bytes());
            transport.extend_from_slice(&spec.dst_port.to_be_bytes());
            transport.extend_from_slice(&((8 + spec.payload.len()) as u16).to_be_bytes());
            transport.extend_from_slice(&[0, 0]);
            PROTO_UDP
        }
    };
    transport.extend_from_slice(&spec.payload);

    let (src16, dst16) = (ipv6_addr(spec.src_ip), ipv6_addr(spec.dst_ip));
    // pseudo-header checksum over the transport segment
    let mut pseudo = Vec::new();
    if spec.ipv6 {
        pseudo.extend_from_slice(&src16);
        pseudo.extend_from_slice(&dst16);
        pseudo.extend_from_slice(&(transport.len() as u32).to_be_bytes());
        pseudo.extend_from_slice(&[0, 0, 0, proto]);
    } else {
        pseudo.extend_from_slice(&spec.src_ip);
        pseudo.extend_from_slice(&spec.dst_ip);
        pseudo.extend_from_slice(&[0, proto]);
        pseudo.extend_from_slice(&(transport.len() as u16).to_be_bytes());
    }
    let checksum = fold_checksum(ones_complement_sum(&transport, ones_complement_sum(&pseudo, 0)));
    let at = if spec.transport == Transport::Tcp { 16 } else { 6 };
    transport[at..at + 2].copy_from_slice(&checksum.to_be_bytes());

    let mut frame = Vec::with_capacity(64 + transport.len());
    frame.extend_from_slice(&spec.dst_mac);
    frame.extend_from_slice(&spec.src_mac);
    for i in 0..spec.vlan_tags {
        frame.extend_from_slice(&ETHERTYPE_VLAN.to_be_bytes());
        frame.extend_from_slice(&(100 + i as u16).to_be_bytes());
    }
    if spec.ipv6 {
        frame.extend_from_slice(&ETHERTYPE_IPV6.to_be_bytes());
        frame.extend_from_slice(&[0x60, 0, 0, 0]);
        frame.extend_from_slice(&(transport.len() as u16).to_be_bytes());
        frame.push(proto);
        frame.push(spec.ttl);
        frame.extend_from_slice(&src16);
        frame.extend_from_slice(&dst16);
    } else {
        frame.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
        let ihl = 5 + spec.ip_option_words;
        let mut ip = Vec::with_capacity(ihl * 4);
        ip.push(0x40 | ihl as u8);
        ip.push(0);
        ip.extend_from_slice(&((ihl * 4 + transport.len()) as u16).to_be_bytes());
        ip.extend_from_slice(&spec.ip_id.to_be_bytes());
        ip.extend_from_slice(&0x4000u16.to_be_bytes()); // don't fragment
        ip.push(spec.ttl);
        ip.push(proto);
        ip.extend_from_slice(&[0, 0]);
        ip.extend_from_slice(&spec.src_ip);
        ip.extend_from_slice(&spec.dst_ip);
        ip.resize(ihl * 4, 0x01);
        let checksum = fold_checksum(ones_complement_sum(&ip, 0));
        ip[10..12].copy_from_slice(&checksum.to_be_bytes());
        frame.extend_from_slice(&ip);
    }
    frame.extend_from_slice(&transport);
    frame
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ipv4_header_checksum_verifies() {
        let frame = build_frame(&FrameSpec { payload: vec![7; 33], ..FrameSpec::default() });
        let ip = &frame[14..34];
        assert_eq!(fold_checksum(ones_complement_sum(ip, 0)), 0);
        assert_eq!(frame.len(), 14 + 20 + 20 + 33);
    }

    #[test]
    fn option_words_extend_headers() {
        let frame = build_frame(&FrameSpec { ip_option_words: 2, tcp_option_words: 3, ..FrameSpec::default() });
        assert_eq!(frame[14] & 0x0F, 7);
        assert_eq!(frame[14 + 28 + 12] >> 4, 8);
        assert_eq!(frame.len(), 14 + 28 + 32);
    }
}
