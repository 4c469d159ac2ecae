//! Ethernet/IPv4/TCP/UDP dissection into fingerprint fields.
//!
//! Stream indices, window-scale state and HTTP request counters depend on
//! what came earlier in the capture, so they live in a
//! [`ConversationTracker`] that must see packets in file order.

use std::collections::HashMap;
use std::net::Ipv4Addr;

use crate::model::{FeatureValue, MacAddr};

use super::craft::{tcp_flags, ETHERTYPE_IPV4, ETHERTYPE_IPV6, ETHERTYPE_VLAN};
use super::pcap::{RawPacket, LINKTYPE_ETHERNET};

/// Positions of the extracted fields; the order of the `full24` schema.
pub mod field {
    pub const HTTP_REQUEST_NUMBER: usize = 0;
    pub const HTTP_PREV_REQUEST_IN: usize = 1;
    pub const UDP_SRCPORT: usize = 2;
    pub const UDP_STREAM: usize = 3;
    pub const UDP_LENGTH: usize = 4;
    pub const UDP_DSTPORT: usize = 5;
    pub const UDP_CHECKSUM: usize = 6;
    pub const TCP_SRCPORT: usize = 7;
    pub const TCP_STREAM: usize = 8;
    pub const TCP_DSTPORT: usize = 9;
    pub const TCP_WINDOW_SIZE: usize = 10;
    pub const TCP_ACK: usize = 11;
    pub const TCP_WINDOW_SIZE_SCALEFACTOR: usize = 12;
    pub const TCP_WINDOW_SIZE_VALUE: usize = 13;
    pub const IP_LEN: usize = 14;
    pub const IP_DSFIELD_DSCP: usize = 15;
    pub const IP_HDR_LEN: usize = 16;
    pub const IP_DSFIELD: usize = 17;
    pub const IP_ID: usize = 18;
    pub const IP_TTL: usize = 19;
    pub const IP_PROTO: usize = 20;
    pub const TCP_TSVAL: usize = 21;
    pub const TCP_TSECR: usize = 22;

    pub const COUNT: usize = 23;
}

const MAX_WINDOW_SHIFT: u8 = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransportProto {
    Tcp,
    Udp,
}

pub type Endpoint = (Ipv4Addr, u16);

/// Direction-insensitive conversation key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct EndpointPair(Endpoint, Endpoint);

impl EndpointPair {
    fn new(a: Endpoint, b: Endpoint) -> Self {
        if a <= b {
            EndpointPair(a, b)
        } else {
            EndpointPair(b, a)
        }
    }

    /// 0 when `src` is the lower endpoint, 1 otherwise.
    fn direction(&self, src: Endpoint) -> usize {
        usize::from(src != self.0)
    }
}

/// Per-direction window scaling knowledge for a TCP stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowScale {
    /// No handshake observed yet.
    Unknown,
    /// Handshake observed; scaling not negotiated.
    NotUsed,
    Shift(u8),
}

impl WindowScale {
    /// Exported value: the multiplier, or the -1 / -2 sentinels.
    pub fn factor(self) -> i64 {
        match self {
            WindowScale::Unknown => -1,
            WindowScale::NotUsed => -2,
            WindowScale::Shift(s) => 1i64 << s,
        }
    }
}

#[derive(Debug, Clone)]
struct TcpStreamState {
    window_scale: [WindowScale; 2],
    request_count: u64,
    last_request_frame: Option<u64>,
}

impl Default for TcpStreamState {
    fn default() -> Self {
        TcpStreamState {
            window_scale: [WindowScale::Unknown; 2],
            request_count: 0,
            last_request_frame: None,
        }
    }
}

/// Conversation state for one capture.
#[derive(Debug, Default, Clone)]
pub struct ConversationTracker {
    tcp_index: HashMap<EndpointPair, u64>,
    udp_index: HashMap<EndpointPair, u64>,
    tcp_streams: Vec<TcpStreamState>,
}

impl ConversationTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// 0-based ordinal of the conversation, allocated on first sighting in
    /// either direction. TCP and UDP are numbered independently.
    pub fn stream_index(&mut self, proto: TransportProto, a: Endpoint, b: Endpoint) -> u64 {
        let key = EndpointPair::new(a, b);
        match proto {
            TransportProto::Tcp => {
                let next = self.tcp_index.len() as u64;
                let idx = *self.tcp_index.entry(key).or_insert(next);
                if idx as usize == self.tcp_streams.len() {
                    self.tcp_streams.push(TcpStreamState::default());
                }
                idx
            }
            TransportProto::Udp => {
                let next = self.udp_index.len() as u64;
                *self.udp_index.entry(key).or_insert(next)
            }
        }
    }

    pub fn tcp_stream_count(&self) -> usize {
        self.tcp_index.len()
    }

    pub fn udp_stream_count(&self) -> usize {
        self.udp_index.len()
    }

    fn tcp_state(&mut self, stream: u64) -> &mut TcpStreamState {
        let i = stream as usize;
        if i >= self.tcp_streams.len() {
            self.tcp_streams.resize_with(i + 1, TcpStreamState::default);
        }
        &mut self.tcp_streams[i]
    }

    /// Count an HTTP request in `payload`, if the segment starts with one.
    /// Returns (request number, frame of the previous request in the stream).
    pub fn http_state_update(
        &mut self,
        tcp_stream: u64,
        payload: &[u8],
        frame_number: u64,
    ) -> (FeatureValue, FeatureValue) {
        if !is_http_request(payload) {
            return (FeatureValue::Missing, FeatureValue::Missing);
        }
        let state = self.tcp_state(tcp_stream);
        state.request_count += 1;
        let prev = state.last_request_frame.replace(frame_number);
        (
            FeatureValue::Num(state.request_count as i64),
            prev.map_or(FeatureValue::Missing, |f| FeatureValue::Num(f as i64)),
        )
    }
}

const HTTP_METHODS: [&[u8]; 9] = [
    b"GET ",
    b"POST ",
    b"PUT ",
    b"DELETE ",
    b"HEAD ",
    b"OPTIONS ",
    b"PATCH ",
    b"CONNECT ",
    b"TRACE ",
];

/// Request line check: known method token, first line ending in HTTP/1.0 or 1.1.
pub fn is_http_request(payload: &[u8]) -> bool {
    if !HTTP_METHODS.iter().any(|m| payload.starts_with(m)) {
        return false;
    }
    let line_end = payload.iter().position(|&b| b == b'\n').unwrap_or(payload.len());
    let mut line = &payload[..line_end];
    if let Some(stripped) = line.strip_suffix(b"\r") {
        line = stripped;
    }
    line.ends_with(b" HTTP/1.0") || line.ends_with(b" HTTP/1.1")
}

/// Why a packet produced no fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SkipReason {
    /// Link type other than Ethernet.
    NonEthernet,
    /// 802.1Q tagged frame.
    Vlan,
    Ipv6,
    /// Any other EtherType, or an IP version other than 4.
    NotIpv4,
    /// IPv4 carrying neither TCP nor UDP.
    NotTcpUdp,
    /// Non-first IPv4 fragment (no transport header).
    Fragment,
    /// A header shorter than its declared length.
    Malformed,
}

/// Fields of one packet in `full24` schema order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketFields {
    pub frame_number: u64,
    pub src_mac: MacAddr,
    pub values: [FeatureValue; field::COUNT],
}

fn be16(b: &[u8], i: usize) -> u16 {
    u16::from_be_bytes([b[i], b[i + 1]])
}

fn be32(b: &[u8], i: usize) -> u32 {
    u32::from_be_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

#[derive(Debug, Default)]
struct TcpOptions {
    window_shift: Option<u8>,
    timestamp: Option<(u32, u32)>,
}

fn parse_tcp_options(mut opts: &[u8]) -> TcpOptions {
    let mut out = TcpOptions::default();
    while let Some(&kind) = opts.first() {
        match kind {
            0 => break,
            1 => opts = &opts[1..],
            _ => {
                let Some(&len) = opts.get(1) else { break };
                let len = len as usize;
                if len < 2 || len > opts.len() {
                    break;
                }
                let body = &opts[2..len];
                match (kind, body.len()) {
                    (3, 1) => out.window_shift = Some(body[0]),
                    (8, 8) => out.timestamp = Some((be32(body, 0), be32(body, 4))),
                    _ => {}
                }
                opts = &opts[len..];
            }
        }
    }
    out
}

/// Dissect one captured frame. The tracker is only touched for packets that
/// are emitted.
pub fn dissect_packet(
    pkt: &RawPacket,
    tracker: &mut ConversationTracker,
) -> Result<PacketFields, SkipReason> {
    use FeatureValue::{Missing, Num};

    if pkt.link_type != LINKTYPE_ETHERNET {
        return Err(SkipReason::NonEthernet);
    }
    let frame = &pkt.data;
    if frame.len() < 14 {
        return Err(SkipReason::Malformed);
    }
    let mut src_mac = [0u8; 6];
    src_mac.copy_from_slice(&frame[6..12]);
    match be16(frame, 12) {
        ETHERTYPE_IPV4 => {}
        ETHERTYPE_VLAN => return Err(SkipReason::Vlan),
        ETHERTYPE_IPV6 => return Err(SkipReason::Ipv6),
        _ => return Err(SkipReason::NotIpv4),
    }

    let ip = &frame[14..];
    if ip.is_empty() || ip[0] >> 4 != 4 {
        return Err(if ip.is_empty() { SkipReason::Malformed } else { SkipReason::NotIpv4 });
    }
    if ip.len() < 20 {
        return Err(SkipReason::Malformed);
    }
    let hdr_len = usize::from(ip[0] & 0x0f) * 4;
    let total_len = usize::from(be16(ip, 2));
    if hdr_len < 20 || hdr_len > total_len || total_len > ip.len() {
        return Err(SkipReason::Malformed);
    }
    // drop Ethernet trailer padding
    let ip = &ip[..total_len];
    if be16(ip, 6) & 0x1fff != 0 {
        return Err(SkipReason::Fragment);
    }
    let proto = ip[9];
    let src_ip = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_ip = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let l4 = &ip[hdr_len..];

    let mut values = [Missing; field::COUNT];
    values[field::IP_LEN] = Num(total_len as i64);
    values[field::IP_HDR_LEN] = Num(hdr_len as i64);
    values[field::IP_DSFIELD] = Num(i64::from(ip[1]));
    values[field::IP_DSFIELD_DSCP] = Num(i64::from(ip[1] >> 2));
    values[field::IP_ID] = Num(i64::from(be16(ip, 4)));
    values[field::IP_TTL] = Num(i64::from(ip[8]));
    values[field::IP_PROTO] = Num(i64::from(proto));

    match proto {
        6 => {
            if l4.len() < 20 {
                return Err(SkipReason::Malformed);
            }
            let data_offset = usize::from(l4[12] >> 4) * 4;
            if data_offset < 20 || data_offset > l4.len() {
                return Err(SkipReason::Malformed);
            }
            let src_port = be16(l4, 0);
            let dst_port = be16(l4, 2);
            let flags = l4[13];
            let raw_window = be16(l4, 14);
            let options = parse_tcp_options(&l4[20..data_offset]);
            let payload = &l4[data_offset..];

            let src = (src_ip, src_port);
            let dst = (dst_ip, dst_port);
            let stream = tracker.stream_index(TransportProto::Tcp, src, dst);
            let dir = EndpointPair::new(src, dst).direction(src);
            let is_syn = flags & tcp_flags::SYN != 0;
            let state = tracker.tcp_state(stream);
            if is_syn {
                if let Some(shift) = options.window_shift {
                    state.window_scale[dir] = WindowScale::Shift(shift.min(MAX_WINDOW_SHIFT));
                }
                let is_synack = flags & tcp_flags::ACK != 0;
                let peer = state.window_scale[1 - dir];
                // scaling is in effect only when both SYNs carry the option
                if (state.window_scale[dir] == WindowScale::Unknown && (is_synack || peer == WindowScale::Unknown))
                    || (is_synack && peer == WindowScale::NotUsed)
                {
                    state.window_scale = [WindowScale::NotUsed; 2];
                }
            }
            let scale = state.window_scale[dir];
            let window = match scale {
                WindowScale::Shift(s) if !is_syn => i64::from(raw_window) << s,
                _ => i64::from(raw_window),
            };

            values[field::TCP_SRCPORT] = Num(i64::from(src_port));
            values[field::TCP_DSTPORT] = Num(i64::from(dst_port));
            values[field::TCP_STREAM] = Num(stream as i64);
            values[field::TCP_ACK] = Num(i64::from(be32(l4, 8)));
            values[field::TCP_WINDOW_SIZE_VALUE] = Num(i64::from(raw_window));
            values[field::TCP_WINDOW_SIZE] = Num(window);
            values[field::TCP_WINDOW_SIZE_SCALEFACTOR] = Num(scale.factor());
            if let Some((tsval, tsecr)) = options.timestamp {
                values[field::TCP_TSVAL] = Num(i64::from(tsval));
                values[field::TCP_TSECR] = Num(i64::from(tsecr));
            }
            let (req, prev) = tracker.http_state_update(stream, payload, pkt.frame_number);
            values[field::HTTP_REQUEST_NUMBER] = req;
            values[field::HTTP_PREV_REQUEST_IN] = prev;
        }
        17 => {
            if l4.len() < 8 {
                return Err(SkipReason::Malformed);
            }
            let src_port = be16(l4, 0);
            let dst_port = be16(l4, 2);
            let stream = tracker.stream_index(TransportProto::Udp, (src_ip, src_port), (dst_ip, dst_port));
            values[field::UDP_SRCPORT] = Num(i64::from(src_port));
            values[field::UDP_DSTPORT] = Num(i64::from(dst_port));
            values[field::UDP_LENGTH] = Num(i64::from(be16(l4, 4)));
            values[field::UDP_CHECKSUM] = Num(i64::from(be16(l4, 6)));
            values[field::UDP_STREAM] = Num(stream as i64);
        }
        _ => return Err(SkipReason::NotTcpUdp),
    }

    Ok(PacketFields {
        frame_number: pkt.frame_number,
        src_mac: MacAddr(src_mac),
        values,
    })
}
