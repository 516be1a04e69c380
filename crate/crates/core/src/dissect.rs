//! Header boundaries and 5-tuples for Ethernet frames.
//!
//! Dissection never fails. A layer whose header does not fit in the captured
//! bytes is treated as absent, along with everything beneath it.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use thiserror::Error;

pub const ETHERNET_HEADER_LEN: usize = 14;
pub const VLAN_TAG_LEN: usize = 4;
pub const IPV6_HEADER_LEN: usize = 40;
pub const UDP_HEADER_LEN: usize = 8;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_IPV6: u16 = 0x86DD;
pub const ETHERTYPE_VLAN: u16 = 0x8100;
pub const ETHERTYPE_QINQ: u16 = 0x88A8;

pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

const MAX_VLAN_TAGS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum L3Kind {
    Ipv4,
    Ipv6,
    NonIp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub ip: IpAddr,
    pub port: u16,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ip {
            IpAddr::V4(ip) => write!(f, "{ip}:{}", self.port),
            IpAddr::V6(ip) => write!(f, "[{ip}]:{}", self.port),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiveTuple {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub proto: u8,
}

impl FiveTuple {
    pub fn reversed(&self) -> FiveTuple {
        FiveTuple { src: self.dst, dst: self.src, proto: self.proto }
    }
}

impl fmt::Display for FiveTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} proto {}", self.src, self.dst, self.proto)
    }
}

/// Directed 5-tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey(pub FiveTuple);

/// Undirected 5-tuple: endpoints stored in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionKey {
    pub lo: Endpoint,
    pub hi: Endpoint,
    pub proto: u8,
}

impl From<&FiveTuple> for SessionKey {
    fn from(t: &FiveTuple) -> Self {
        let (lo, hi) = if t.src <= t.dst { (t.src, t.dst) } else { (t.dst, t.src) };
        SessionKey { lo, hi, proto: t.proto }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <-> {} proto {}", self.lo, self.hi, self.proto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dissection {
    pub cap_len: usize,
    pub eth_end: usize,
    pub ip_start: Option<usize>,
    pub ip_end: Option<usize>,
    pub transport_start: Option<usize>,
    pub payload_start: Option<usize>,
    pub l3_kind: L3Kind,
    pub proto: Option<u8>,
    pub tuple: Option<FiveTuple>,
}

impl Dissection {
    fn link_only(cap_len: usize, eth_end: usize) -> Self {
        Dissection {
            cap_len,
            eth_end,
            ip_start: None,
            ip_end: None,
            transport_start: None,
            payload_start: None,
            l3_kind: L3Kind::NonIp,
            proto: None,
            tuple: None,
        }
    }

    pub fn is_ip(&self) -> bool {
        self.l3_kind != L3Kind::NonIp
    }

    /// Present offsets in layer order.
    pub fn offsets(&self) -> Vec<usize> {
        [Some(self.eth_end), self.ip_start, self.ip_end, self.transport_start, self.payload_start]
            .into_iter()
            .flatten()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("packet has no IP layer, no 5-tuple can be formed")]
pub struct NoKeyError;

fn be16(data: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([data[at], data[at + 1]])
}

/// Computes layer boundaries of an Ethernet frame.
///
/// An empty frame yields `eth_end == 0`; otherwise `eth_end` is the Ethernet
/// header plus VLAN tags, clamped to the captured length.
pub fn dissect(data: &[u8]) -> Dissection {
    let cap_len = data.len();
    if cap_len < ETHERNET_HEADER_LEN {
        return Dissection::link_only(cap_len, cap_len);
    }
    let mut eth_end = ETHERNET_HEADER_LEN;
    let mut ethertype = be16(data, 12);
    let mut tags = 0;
    while matches!(ethertype, ETHERTYPE_VLAN | ETHERTYPE_QINQ) && tags < MAX_VLAN_TAGS {
        if eth_end + VLAN_TAG_LEN > cap_len {
            return Dissection::link_only(cap_len, cap_len);
        }
        ethertype = be16(data, eth_end + 2);
        eth_end += VLAN_TAG_LEN;
        tags += 1;
    }
    let ip_start = eth_end;
    let mut d = Dissection::link_only(cap_len, eth_end);

    let (l3_kind, ip_end, proto, src_ip, dst_ip, more_layers) = match ethertype {
        ETHERTYPE_IPV4 => {
            if ip_start + 20 > cap_len || data[ip_start] >> 4 != 4 {
                return d;
            }
            let ihl = (data[ip_start] & 0x0F) as usize * 4;
            if ihl < 20 || ip_start + ihl > cap_len {
                return d;
            }
            let frag_offset = be16(data, ip_start + 6) & 0x1FFF;
            let proto = data[ip_start + 9];
            let src = Ipv4Addr::new(data[ip_start + 12], data[ip_start + 13], data[ip_start + 14], data[ip_start + 15]);
            let dst = Ipv4Addr::new(data[ip_start + 16], data[ip_start + 17], data[ip_start + 18], data[ip_start + 19]);
            (L3Kind::Ipv4, ip_start + ihl, proto, IpAddr::V4(src), IpAddr::V4(dst), frag_offset == 0)
        }
        ETHERTYPE_IPV6 => {
            if ip_start + IPV6_HEADER_LEN > cap_len || data[ip_start] >> 4 != 6 {
                return d;
            }
            let octets = |at: usize| -> [u8; 16] { data[at..at + 16].try_into().expect("16-byte slice") };
            let proto = data[ip_start + 6];
            let src = Ipv6Addr::from(octets(ip_start + 8));
            let dst = Ipv6Addr::from(octets(ip_start + 24));
            (L3Kind::Ipv6, ip_start + IPV6_HEADER_LEN, proto, IpAddr::V6(src), IpAddr::V6(dst), true)
        }
        _ => return d,
    };

    d.l3_kind = l3_kind;
    d.ip_start = Some(ip_start);
    d.ip_end = Some(ip_end);
    d.proto = Some(proto);

    let mut ports = (0u16, 0u16);
    if more_layers {
        let transport_len = match proto {
            PROTO_TCP if ip_end + 20 <= cap_len => {
                let offset = (data[ip_end + 12] >> 4) as usize * 4;
                (offset >= 20 && ip_end + offset <= cap_len).then_some(offset)
            }
            PROTO_UDP if ip_end + UDP_HEADER_LEN <= cap_len => Some(UDP_HEADER_LEN),
            _ => None,
        };
        if let Some(len) = transport_len {
            d.transport_start = Some(ip_end);
            d.payload_start = Some(ip_end + len);
            ports = (be16(data, ip_end), be16(data, ip_end + 2));
        }
    }
    d.tuple = Some(FiveTuple {
        src: Endpoint { ip: src_ip, port: ports.0 },
        dst: Endpoint { ip: dst_ip, port: ports.1 },
        proto,
    });
    d
}

pub fn keys(d: &Dissection) -> Result<(FlowKey, SessionKey), NoKeyError> {
    let tuple = d.tuple.as_ref().ok_or(NoKeyError)?;
    Ok((FlowKey(*tuple), SessionKey::from(tuple)))
}
