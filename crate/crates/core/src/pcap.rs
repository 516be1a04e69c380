//! Classic libpcap capture files.
//!
//! A capture is a 24-byte global header followed by records, each a 16-byte
//! record header and `incl_len` bytes of frame data. The byte order of every
//! header field follows the magic number. [`PcapReader`] streams records one
//! at a time so memory stays bounded by the largest frame, not the file.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC_MICROS: u32 = 0xA1B2_C3D4;
pub const MAGIC_NANOS: u32 = 0xA1B2_3C4D;
pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;
pub const LINKTYPE_ETHERNET: u32 = 1;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("unsupported capture format: magic 0x{0:08X}")]
    UnsupportedFormat(u32),
    #[error("capture global header truncated ({0} of 24 bytes)")]
    TruncatedHeader(usize),
    #[error("capture truncated after record {last_good:?}")]
    Truncated {
        /// Index of the last fully read record, `None` if no record was complete.
        last_good: Option<u64>,
    },
    #[error("record {index}: incl_len {cap_len} exceeds {limit}")]
    OversizedRecord { index: u64, cap_len: u32, limit: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimestampResolution {
    Micro,
    Nano,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptureInfo {
    pub version_major: u16,
    pub version_minor: u16,
    pub thiszone: i32,
    pub sigfigs: u32,
    pub snaplen: u32,
    pub link_type: u32,
    pub resolution: TimestampResolution,
    pub endianness: Endianness,
}

impl CaptureInfo {
    pub fn ethernet(snaplen: u32) -> Self {
        CaptureInfo {
            version_major: 2,
            version_minor: 4,
            thiszone: 0,
            sigfigs: 0,
            snaplen,
            link_type: LINKTYPE_ETHERNET,
            resolution: TimestampResolution::Micro,
            endianness: Endianness::Little,
        }
    }

    fn magic(&self) -> u32 {
        match self.resolution {
            TimestampResolution::Micro => MAGIC_MICROS,
            TimestampResolution::Nano => MAGIC_NANOS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub index: u64,
    pub ts_sec: u32,
    /// Microseconds or nanoseconds, per [`CaptureInfo::resolution`].
    pub ts_frac: u32,
    pub orig_len: u32,
    pub data: Vec<u8>,
}

impl PacketRecord {
    pub fn cap_len(&self) -> usize {
        self.data.len()
    }

    pub fn timestamp_secs(&self, resolution: TimestampResolution) -> f64 {
        let scale = match resolution {
            TimestampResolution::Micro => 1e-6,
            TimestampResolution::Nano => 1e-9,
        };
        self.ts_sec as f64 + self.ts_frac as f64 * scale
    }
}

fn u16_at(buf: &[u8], endianness: Endianness) -> u16 {
    let b = [buf[0], buf[1]];
    match endianness {
        Endianness::Little => u16::from_le_bytes(b),
        Endianness::Big => u16::from_be_bytes(b),
    }
}

fn u32_at(buf: &[u8], endianness: Endianness) -> u32 {
    let b = [buf[0], buf[1], buf[2], buf[3]];
    match endianness {
        Endianness::Little => u32::from_le_bytes(b),
        Endianness::Big => u32::from_be_bytes(b),
    }
}

/// Reads until `buf` is full or EOF; returns the number of bytes read.
fn read_full<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Parses a global header. The magic is interpreted little-endian, so the
/// on-disk bytes `D4 C3 B2 A1` read as `0xA1B2C3D4`.
pub fn parse_global_header(buf: &[u8]) -> Result<CaptureInfo, PcapError> {
    if buf.len() < GLOBAL_HEADER_LEN {
        return Err(PcapError::TruncatedHeader(buf.len()));
    }
    let raw = u32_at(&buf[0..4], Endianness::Little);
    let (endianness, resolution) = match raw {
        MAGIC_MICROS => (Endianness::Little, TimestampResolution::Micro),
        MAGIC_NANOS => (Endianness::Little, TimestampResolution::Nano),
        m if m == MAGIC_MICROS.swap_bytes() => (Endianness::Big, TimestampResolution::Micro),
        m if m == MAGIC_NANOS.swap_bytes() => (Endianness::Big, TimestampResolution::Nano),
        other => return Err(PcapError::UnsupportedFormat(other)),
    };
    let e = endianness;
    Ok(CaptureInfo {
        version_major: u16_at(&buf[4..6], e),
        version_minor: u16_at(&buf[6..8], e),
        thiszone: u32_at(&buf[8..12], e) as i32,
        sigfigs: u32_at(&buf[12..16], e),
        snaplen: u32_at(&buf[16..20], e),
        link_type: u32_at(&buf[20..24], e),
        resolution,
        endianness,
    })
}

/// Streaming record reader over any byte source.
pub struct PcapReader<R> {
    inner: R,
    info: CaptureInfo,
    next_index: u64,
    done: bool,
}

impl PcapReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, PcapError> {
        let file = File::open(path)?;
        PcapReader::new(BufReader::new(file))
    }
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut header = [0u8; GLOBAL_HEADER_LEN];
        let got = read_full(&mut inner, &mut header)?;
        if got < GLOBAL_HEADER_LEN {
            // A short file with a bad magic is still a format error, not truncation.
            if got >= 4 {
                let magic = u32_at(&header[0..4], Endianness::Little);
                let known = [MAGIC_MICROS, MAGIC_NANOS, MAGIC_MICROS.swap_bytes(), MAGIC_NANOS.swap_bytes()];
                if !known.contains(&magic) {
                    return Err(PcapError::UnsupportedFormat(magic));
                }
            }
            return Err(PcapError::TruncatedHeader(got));
        }
        let info = parse_global_header(&header)?;
        Ok(PcapReader { inner, info, next_index: 0, done: false })
    }

    pub fn info(&self) -> &CaptureInfo {
        &self.info
    }

    fn last_good(&self) -> Option<u64> {
        self.next_index.checked_sub(1)
    }

    fn read_record(&mut self) -> Result<Option<PacketRecord>, PcapError> {
        let mut header = [0u8; RECORD_HEADER_LEN];
        let got = read_full(&mut self.inner, &mut header)?;
        if got == 0 {
            return Ok(None);
        }
        if got < RECORD_HEADER_LEN {
            return Err(PcapError::Truncated { last_good: self.last_good() });
        }
        let e = self.info.endianness;
        let ts_sec = u32_at(&header[0..4], e);
        let ts_frac = u32_at(&header[4..8], e);
        let incl_len = u32_at(&header[8..12], e);
        let orig_len = u32_at(&header[12..16], e);

        // snaplen 0 appears in some writers' output; cap allocations anyway.
        let limit = if self.info.snaplen == 0 { 0x0400_0000 } else { self.info.snaplen };
        if incl_len > limit {
            return Err(PcapError::OversizedRecord { index: self.next_index, cap_len: incl_len, limit });
        }
        let mut data = vec![0u8; incl_len as usize];
        if read_full(&mut self.inner, &mut data)? < data.len() {
            return Err(PcapError::Truncated { last_good: self.last_good() });
        }
        let record = PacketRecord { index: self.next_index, ts_sec, ts_frac, orig_len: orig_len.max(incl_len), data };
        self.next_index += 1;
        Ok(Some(record))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PacketRecord, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_record() {
            Ok(Some(record)) => Some(Ok(record)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Reads a whole capture into memory.
pub fn read_pcap(path: impl AsRef<Path>) -> Result<(CaptureInfo, Vec<PacketRecord>), PcapError> {
    let reader = PcapReader::open(path)?;
    let info = *reader.info();
    let records = reader.collect::<Result<Vec<_>, _>>()?;
    Ok((info, records))
}

pub struct PcapWriter<W: Write> {
    inner: W,
    info: CaptureInfo,
}

impl PcapWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, info: CaptureInfo) -> io::Result<Self> {
        PcapWriter::new(BufWriter::new(File::create(path)?), info)
    }
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W, info: CaptureInfo) -> io::Result<Self> {
        let mut header = Vec::with_capacity(GLOBAL_HEADER_LEN);
        header.extend_from_slice(&info.magic().to_le_bytes());
        match info.endianness {
            Endianness::Little => {
                header.extend_from_slice(&info.version_major.to_le_bytes());
                header.extend_from_slice(&info.version_minor.to_le_bytes());
                header.extend_from_slice(&info.thiszone.to_le_bytes());
                header.extend_from_slice(&info.sigfigs.to_le_bytes());
                header.extend_from_slice(&info.snaplen.to_le_bytes());
                header.extend_from_slice(&info.link_type.to_le_bytes());
            }
            Endianness::Big => {
                header[0..4].copy_from_slice(&info.magic().to_be_bytes());
                header.extend_from_slice(&info.version_major.to_be_bytes());
                header.extend_from_slice(&info.version_minor.to_be_bytes());
                header.extend_from_slice(&info.thiszone.to_be_bytes());
                header.extend_from_slice(&info.sigfigs.to_be_bytes());
                header.extend_from_slice(&info.snaplen.to_be_bytes());
                header.extend_from_slice(&info.link_type.to_be_bytes());
            }
        }
        inner.write_all(&header)?;
        Ok(PcapWriter { inner, info })
    }

    pub fn write_record(&mut self, ts_sec: u32, ts_frac: u32, orig_len: u32, data: &[u8]) -> io::Result<()> {
        let fields = [ts_sec, ts_frac, data.len() as u32, orig_len.max(data.len() as u32)];
        for field in fields {
            let bytes = match self.info.endianness {
                Endianness::Little => field.to_le_bytes(),
                Endianness::Big => field.to_be_bytes(),
            };
            self.inner.write_all(&bytes)?;
        }
        self.inner.write_all(data)
    }

    pub fn write_packet(&mut self, record: &PacketRecord) -> io::Result<()> {
        self.write_record(record.ts_sec, record.ts_frac, record.orig_len, &record.data)
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}
