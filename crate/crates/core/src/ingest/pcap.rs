//! Classic libpcap capture files (not pcapng).
//!
//! Both byte orders are accepted, with microsecond or nanosecond timestamps.
//! See <https://wiki.wireshark.org/Development/LibpcapFileFormat>.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC_MICROS: u32 = 0xa1b2_c3d4;
pub const MAGIC_NANOS: u32 = 0xa1b2_3c4d;
pub const LINKTYPE_ETHERNET: u32 = 1;

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;
// Larger records are treated as corruption rather than allocated.
const MAX_RECORD_LEN: u32 = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("bad pcap magic {magic:#010x} at offset 0")]
    BadMagic { magic: u32 },
    #[error("truncated global header ({got} of 24 bytes)")]
    TruncatedGlobalHeader { got: usize },
    #[error("truncated record header at offset {offset}")]
    TruncatedRecordHeader { offset: u64 },
    #[error("truncated packet body at offset {offset}: expected {expected} bytes, got {got}")]
    TruncatedBody {
        offset: u64,
        expected: u32,
        got: usize,
    },
    #[error("record at offset {offset} claims {len} bytes")]
    OversizedRecord { offset: u64, len: u32 },
    #[error("I/O error at offset {offset}: {source}")]
    Io { offset: u64, source: io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalHeader {
    pub endianness: Endianness,
    pub nanosecond: bool,
    pub version_major: u16,
    pub version_minor: u16,
    pub snaplen: u32,
    pub link_type: u32,
}

/// A captured frame as stored in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPacket {
    /// 1-based position within the capture.
    pub frame_number: u64,
    pub ts_sec: u32,
    /// Sub-second part, always normalized to nanoseconds.
    pub ts_nsec: u32,
    pub link_type: u32,
    pub orig_len: u32,
    pub data: Vec<u8>,
}

impl RawPacket {
    pub fn timestamp(&self) -> f64 {
        self.ts_sec as f64 + self.ts_nsec as f64 * 1e-9
    }
}

/// Streaming reader over the records of a capture.
pub struct PcapReader<R> {
    inner: R,
    header: GlobalHeader,
    offset: u64,
    next_frame: u64,
    done: bool,
}

/// Read until `buf` is full or EOF; returns the number of bytes read.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, PcapError> {
        let mut buf = [0u8; GLOBAL_HEADER_LEN];
        let got = read_full(&mut inner, &mut buf).map_err(|source| PcapError::Io { offset: 0, source })?;
        if got < 4 {
            return Err(PcapError::TruncatedGlobalHeader { got });
        }
        let le = u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]);
        let (endianness, nanosecond) = match le {
            MAGIC_MICROS => (Endianness::Little, false),
            MAGIC_NANOS => (Endianness::Little, true),
            m if m.swap_bytes() == MAGIC_MICROS => (Endianness::Big, false),
            m if m.swap_bytes() == MAGIC_NANOS => (Endianness::Big, true),
            magic => return Err(PcapError::BadMagic { magic }),
        };
        if got < GLOBAL_HEADER_LEN {
            return Err(PcapError::TruncatedGlobalHeader { got });
        }
        let u16_at = |i: usize| {
            let b = [buf[i], buf[i + 1]];
            match endianness {
                Endianness::Little => u16::from_le_bytes(b),
                Endianness::Big => u16::from_be_bytes(b),
            }
        };
        let u32_at = |i: usize| read_u32(&buf[i..i + 4], endianness);
        let header = GlobalHeader {
            endianness,
            nanosecond,
            version_major: u16_at(4),
            version_minor: u16_at(6),
            snaplen: u32_at(16),
            link_type: u32_at(20),
        };
        Ok(PcapReader {
            inner,
            header,
            offset: GLOBAL_HEADER_LEN as u64,
            next_frame: 1,
            done: false,
        })
    }

    pub fn header(&self) -> &GlobalHeader {
        &self.header
    }

    fn next_record(&mut self) -> Result<Option<RawPacket>, PcapError> {
        let mut rec = [0u8; RECORD_HEADER_LEN];
        let start = self.offset;
        let got = read_full(&mut self.inner, &mut rec).map_err(|source| PcapError::Io { offset: start, source })?;
        if got == 0 {
            return Ok(None);
        }
        if got < RECORD_HEADER_LEN {
            return Err(PcapError::TruncatedRecordHeader { offset: start });
        }
        let e = self.header.endianness;
        let ts_sec = read_u32(&rec[0..4], e);
        let ts_frac = read_u32(&rec[4..8], e);
        let incl_len = read_u32(&rec[8..12], e);
        let orig_len = read_u32(&rec[12..16], e);
        if incl_len > MAX_RECORD_LEN {
            return Err(PcapError::OversizedRecord { offset: start, len: incl_len });
        }
        let body_offset = start + RECORD_HEADER_LEN as u64;
        let mut data = vec![0u8; incl_len as usize];
        let got = read_full(&mut self.inner, &mut data).map_err(|source| PcapError::Io { offset: body_offset, source })?;
        if got < data.len() {
            return Err(PcapError::TruncatedBody {
                offset: body_offset,
                expected: incl_len,
                got,
            });
        }
        self.offset = body_offset + incl_len as u64;
        let frame_number = self.next_frame;
        self.next_frame += 1;
        Ok(Some(RawPacket {
            frame_number,
            ts_sec,
            ts_nsec: if self.header.nanosecond { ts_frac } else { ts_frac.saturating_mul(1000) },
            link_type: self.header.link_type,
            orig_len,
            data,
        }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<RawPacket, PcapError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(p)) => Some(Ok(p)),
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

fn read_u32(b: &[u8], e: Endianness) -> u32 {
    let b = [b[0], b[1], b[2], b[3]];
    match e {
        Endianness::Little => u32::from_le_bytes(b),
        Endianness::Big => u32::from_be_bytes(b),
    }
}

/// Read a whole capture into memory.
pub fn read_pcap<R: Read>(source: R) -> Result<Vec<RawPacket>, PcapError> {
    PcapReader::new(source)?.collect()
}

/// Writes classic pcap files; used for fixtures and synthetic corpora.
pub struct PcapWriter<W> {
    inner: W,
    endianness: Endianness,
    nanosecond: bool,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(inner: W, link_type: u32) -> io::Result<Self> {
        Self::with_format(inner, link_type, Endianness::Little, false)
    }

    pub fn with_format(
        mut inner: W,
        link_type: u32,
        endianness: Endianness,
        nanosecond: bool,
    ) -> io::Result<Self> {
        let magic = if nanosecond { MAGIC_NANOS } else { MAGIC_MICROS };
        let mut hdr = Vec::with_capacity(GLOBAL_HEADER_LEN);
        let put32 = |v: u32, out: &mut Vec<u8>| match endianness {
            Endianness::Little => out.extend_from_slice(&v.to_le_bytes()),
            Endianness::Big => out.extend_from_slice(&v.to_be_bytes()),
        };
        let put16 = |v: u16, out: &mut Vec<u8>| match endianness {
            Endianness::Little => out.extend_from_slice(&v.to_le_bytes()),
            Endianness::Big => out.extend_from_slice(&v.to_be_bytes()),
        };
        put32(magic, &mut hdr);
        put16(2, &mut hdr);
        put16(4, &mut hdr);
        put32(0, &mut hdr);
        put32(0, &mut hdr);
        put32(65_535, &mut hdr);
        put32(link_type, &mut hdr);
        inner.write_all(&hdr)?;
        Ok(PcapWriter {
            inner,
            endianness,
            nanosecond,
        })
    }

    /// Append one record; `ts_nsec` is converted to the file's resolution.
    pub fn write_packet(&mut self, ts_sec: u32, ts_nsec: u32, data: &[u8]) -> io::Result<()> {
        let frac = if self.nanosecond { ts_nsec } else { ts_nsec / 1000 };
        let len = data.len() as u32;
        for v in [ts_sec, frac, len, len] {
            let bytes = match self.endianness {
                Endianness::Little => v.to_le_bytes(),
                Endianness::Big => v.to_be_bytes(),
            };
            self.inner.write_all(&bytes)?;
        }
        self.inner.write_all(data)
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}
