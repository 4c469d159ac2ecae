//! Builders for Ethernet/IPv4/TCP/UDP frames.
//!
//! Used to produce fixture captures and synthetic device corpora; checksums
//! are computed unless overridden.

use std::net::Ipv4Addr;

use crate::model::MacAddr;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
pub const ETHERTYPE_VLAN: u16 = 0x8100;
pub const ETHERTYPE_IPV6: u16 = 0x86dd;

pub mod tcp_flags {
    pub const FIN: u8 = 0x01;
    pub const SYN: u8 = 0x02;
    pub const RST: u8 = 0x04;
    pub const PSH: u8 = 0x08;
    pub const ACK: u8 = 0x10;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcpOption {
    Nop,
    Mss(u16),
    WindowScale(u8),
    SackPermitted,
    Timestamp { tsval: u32, tsecr: u32 },
}

impl TcpOption {
    fn encode(self, out: &mut Vec<u8>) {
        match self {
            TcpOption::Nop => out.push(1),
            TcpOption::Mss(v) => {
                out.extend_from_slice(&[2, 4]);
                out.extend_from_slice(&v.to_be_bytes());
            }
            TcpOption::WindowScale(s) => out.extend_from_slice(&[3, 3, s]),
            TcpOption::SackPermitted => out.extend_from_slice(&[4, 2]),
            TcpOption::Timestamp { tsval, tsecr } => {
                out.extend_from_slice(&[8, 10]);
                out.extend_from_slice(&tsval.to_be_bytes());
                out.extend_from_slice(&tsecr.to_be_bytes());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpSegment {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
    pub window: u16,
    pub options: Vec<TcpOption>,
    pub payload: Vec<u8>,
}

impl TcpSegment {
    pub fn new(src_port: u16, dst_port: u16, flags: u8) -> Self {
        TcpSegment {
            src_port,
            dst_port,
            seq: 0,
            ack: 0,
            flags,
            window: 65_535,
            options: Vec::new(),
            payload: Vec::new(),
        }
    }

    pub fn seq(mut self, seq: u32) -> Self {
        self.seq = seq;
        self
    }

    pub fn ack(mut self, ack: u32) -> Self {
        self.ack = ack;
        self
    }

    pub fn window(mut self, window: u16) -> Self {
        self.window = window;
        self
    }

    pub fn option(mut self, option: TcpOption) -> Self {
        self.options.push(option);
        self
    }

    pub fn payload(mut self, payload: impl Into<Vec<u8>>) -> Self {
        self.payload = payload.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdpDatagram {
    pub src_port: u16,
    pub dst_port: u16,
    pub payload: Vec<u8>,
    /// Overrides the computed checksum (0 means "not computed").
    pub checksum: Option<u16>,
}

impl UdpDatagram {
    pub fn new(src_port: u16, dst_port: u16, payload: impl Into<Vec<u8>>) -> Self {
        UdpDatagram {
            src_port,
            dst_port,
            payload: payload.into(),
            checksum: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Tcp(TcpSegment),
    Udp(UdpDatagram),
    /// Any other IP protocol number with an opaque payload.
    Other { proto: u8, payload: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv4Frame {
    pub src_mac: MacAddr,
    pub dst_mac: MacAddr,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub ttl: u8,
    pub tos: u8,
    pub id: u16,
    pub dont_fragment: bool,
    /// Fragment offset in 8-byte units.
    pub fragment_offset: u16,
    /// Extra IPv4 option bytes (padded to a multiple of 4).
    pub ip_options: Vec<u8>,
    pub transport: Transport,
}

impl Ipv4Frame {
    pub fn new(src_mac: MacAddr, src_ip: Ipv4Addr, dst_ip: Ipv4Addr, transport: Transport) -> Self {
        Ipv4Frame {
            src_mac,
            dst_mac: MacAddr([0x02, 0, 0, 0, 0, 0xfe]),
            src_ip,
            dst_ip,
            ttl: 64,
            tos: 0,
            id: 0,
            dont_fragment: true,
            fragment_offset: 0,
            ip_options: Vec::new(),
            transport,
        }
    }

    pub fn ttl(mut self, ttl: u8) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn tos(mut self, tos: u8) -> Self {
        self.tos = tos;
        self
    }

    pub fn id(mut self, id: u16) -> Self {
        self.id = id;
        self
    }

    pub fn dst_mac(mut self, mac: MacAddr) -> Self {
        self.dst_mac = mac;
        self
    }

    /// Encode to Ethernet frame bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (proto, l4) = match &self.transport {
            Transport::Tcp(t) => (6u8, encode_tcp(t, self.src_ip, self.dst_ip)),
            Transport::Udp(u) => (17u8, encode_udp(u, self.src_ip, self.dst_ip)),
            Transport::Other { proto, payload } => (*proto, payload.clone()),
        };
        let mut opts = self.ip_options.clone();
        while !opts.len().is_multiple_of(4) {
            opts.push(0);
        }
        let ihl = 5 + opts.len() / 4;
        let total_len = (ihl * 4 + l4.len()) as u16;
        let mut ip = Vec::with_capacity(total_len as usize);
        ip.push(0x40 | ihl as u8);
        ip.push(self.tos);
        ip.extend_from_slice(&total_len.to_be_bytes());
        ip.extend_from_slice(&self.id.to_be_bytes());
        let frag = (if self.dont_fragment { 0x4000 } else { 0 }) | (self.fragment_offset & 0x1fff);
        ip.extend_from_slice(&frag.to_be_bytes());
        ip.push(self.ttl);
        ip.push(proto);
        ip.extend_from_slice(&[0, 0]);
        ip.extend_from_slice(&self.src_ip.octets());
        ip.extend_from_slice(&self.dst_ip.octets());
        ip.extend_from_slice(&opts);
        let csum = internet_checksum(&[&ip]);
        ip[10..12].copy_from_slice(&csum.to_be_bytes());
        ip.extend_from_slice(&l4);

        let mut frame = ethernet_header(self.dst_mac, self.src_mac, ETHERTYPE_IPV4);
        frame.extend_from_slice(&ip);
        frame
    }
}

pub fn ethernet_header(dst: MacAddr, src: MacAddr, ethertype: u16) -> Vec<u8> {
    let mut out = Vec::with_capacity(14);
    out.extend_from_slice(&dst.0);
    out.extend_from_slice(&src.0);
    out.extend_from_slice(&ethertype.to_be_bytes());
    out
}

fn pseudo_header(src: Ipv4Addr, dst: Ipv4Addr, proto: u8, len: usize) -> [u8; 12] {
    let mut p = [0u8; 12];
    p[0..4].copy_from_slice(&src.octets());
    p[4..8].copy_from_slice(&dst.octets());
    p[9] = proto;
    p[10..12].copy_from_slice(&(len as u16).to_be_bytes());
    p
}

fn encode_tcp(t: &TcpSegment, src: Ipv4Addr, dst: Ipv4Addr) -> Vec<u8> {
    let mut opts = Vec::new();
    for o in &t.options {
        o.encode(&mut opts);
    }
    while opts.len() % 4 != 0 {
        opts.push(0);
    }
    let offset = 5 + opts.len() / 4;
    let mut seg = Vec::with_capacity(offset * 4 + t.payload.len());
    seg.extend_from_slice(&t.src_port.to_be_bytes());
    seg.extend_from_slice(&t.dst_port.to_be_bytes());
    seg.extend_from_slice(&t.seq.to_be_bytes());
    seg.extend_from_slice(&t.ack.to_be_bytes());
    seg.push((offset as u8) << 4);
    seg.push(t.flags);
    seg.extend_from_slice(&t.window.to_be_bytes());
    seg.extend_from_slice(&[0, 0, 0, 0]);
    seg.extend_from_slice(&opts);
    seg.extend_from_slice(&t.payload);
    let csum = internet_checksum(&[&pseudo_header(src, dst, 6, seg.len()), &seg]);
    seg[16..18].copy_from_slice(&csum.to_be_bytes());
    seg
}

fn encode_udp(u: &UdpDatagram, src: Ipv4Addr, dst: Ipv4Addr) -> Vec<u8> {
    let len = 8 + u.payload.len();
    let mut seg = Vec::with_capacity(len);
    seg.extend_from_slice(&u.src_port.to_be_bytes());
    seg.extend_from_slice(&u.dst_port.to_be_bytes());
    seg.extend_from_slice(&(len as u16).to_be_bytes());
    seg.extend_from_slice(&[0, 0]);
    seg.extend_from_slice(&u.payload);
    let csum = match u.checksum {
        Some(c) => c,
        None => match internet_checksum(&[&pseudo_header(src, dst, 17, len), &seg]) {
            0 => 0xffff,
            c => c,
        },
    };
    seg[6..8].copy_from_slice(&csum.to_be_bytes());
    seg
}

/// RFC 1071 ones'-complement checksum over the concatenation of `parts`.
pub fn internet_checksum(parts: &[&[u8]]) -> u16 {
    let mut sum: u32 = 0;
    let mut pending: Option<u8> = None;
    for part in parts {
        for &b in part.iter() {
            match pending.take() {
                Some(hi) => sum += u32::from(u16::from_be_bytes([hi, b])),
                None => pending = Some(b),
            }
        }
    }
    if let Some(hi) = pending {
        sum += u32::from(u16::from_be_bytes([hi, 0]));
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}
