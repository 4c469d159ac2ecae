//! Reference dissector: header parsing by `etherparse`, conversation and
//! HTTP state kept here independently, output keyed by field name with
//! absent fields left out (as a field export would).

use std::collections::{BTreeMap, HashMap};
use std::net::Ipv4Addr;

use etherparse::{LinkSlice, NetSlice, SlicedPacket, TcpOptionElement, TransportSlice};

pub type Row = BTreeMap<&'static str, i64>;

/// Records of a little-endian microsecond pcap: (frame number, bytes).
pub fn read_records(file: &[u8]) -> Vec<(u64, Vec<u8>)> {
    assert_eq!(&file[..4], &0xa1b2c3d4u32.to_le_bytes(), "fixture is little-endian micro pcap");
    let mut out = Vec::new();
    let mut at = 24;
    while at < file.len() {
        let caplen = u32::from_le_bytes(file[at + 8..at + 12].try_into().unwrap()) as usize;
        out.push((out.len() as u64 + 1, file[at + 16..at + 16 + caplen].to_vec()));
        at += 16 + caplen;
    }
    out
}

#[derive(Default)]
struct Direction {
    /// -1 unknown, -2 handshake seen without scaling, otherwise the shift.
    win_scale: i64,
}

struct TcpConv {
    dirs: [Direction; 2],
    requests: i64,
    last_request: Option<i64>,
}

#[derive(Default)]
pub struct RefDissector {
    tcp: HashMap<[(Ipv4Addr, u16); 2], (usize, TcpConv)>,
    udp: HashMap<[(Ipv4Addr, u16); 2], usize>,
}

fn http_request_line(payload: &[u8]) -> bool {
    let first = payload.split(|&b| b == b'\n').next().unwrap_or(&[]);
    let Ok(line) = std::str::from_utf8(first) else { return false };
    let line = line.trim_end_matches('\r');
    let Some((method, _)) = line.split_once(' ') else { return false };
    matches!(method, "GET" | "POST" | "PUT" | "DELETE" | "HEAD" | "OPTIONS" | "PATCH" | "CONNECT" | "TRACE")
        && (line.ends_with(" HTTP/1.1") || line.ends_with(" HTTP/1.0"))
}

impl RefDissector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Source MAC and exported fields, or `None` for frames without
    /// IPv4 + TCP/UDP or that fail to parse.
    pub fn dissect(&mut self, frame_number: u64, frame: &[u8]) -> Option<([u8; 6], Row)> {
        let pkt = SlicedPacket::from_ethernet(frame).ok()?;
        let Some(LinkSlice::Ethernet2(eth)) = &pkt.link else { return None };
        if pkt.vlan.is_some() {
            return None;
        }
        let Some(NetSlice::Ipv4(ipv4)) = &pkt.net else { return None };
        let h = ipv4.header();
        if h.fragments_offset().value() != 0 {
            return None;
        }
        let mut row = Row::new();
        row.insert("ip.len", h.total_len().into());
        row.insert("ip.hdr_len", i64::from(h.ihl()) * 4);
        let ds = (u8::from(h.dcp()) << 2) | u8::from(h.ecn());
        row.insert("ip.dsfield", ds.into());
        row.insert("ip.dsfield.dscp", u8::from(h.dcp()).into());
        row.insert("ip.id", h.identification().into());
        row.insert("ip.ttl", h.ttl().into());
        row.insert("ip.proto", h.protocol().0.into());
        let (src, dst) = (h.source_addr(), h.destination_addr());

        match pkt.transport.as_ref()? {
            TransportSlice::Tcp(t) => {
                let a = (src, t.source_port());
                let b = (dst, t.destination_port());
                let mut key = [a, b];
                key.sort();
                let next = self.tcp.len();
                let (index, conv) = self.tcp.entry(key).or_insert_with(|| {
                    (next, TcpConv {
                        dirs: [Direction { win_scale: -1 }, Direction { win_scale: -1 }],
                        requests: 0,
                        last_request: None,
                    })
                });
                let fwd = usize::from(a != key[0]);
                let rev = 1 - fwd;
                if t.syn() {
                    let offered = t.options_iterator().flatten().find_map(|o| match o {
                        TcpOptionElement::WindowScale(s) => Some(i64::from(s.min(14))),
                        _ => None,
                    });
                    if t.ack() {
                        // the answer decides: both sides must have sent the option
                        match offered {
                            Some(s) if conv.dirs[rev].win_scale != -2 => conv.dirs[fwd].win_scale = s,
                            _ => {
                                conv.dirs[fwd].win_scale = -2;
                                conv.dirs[rev].win_scale = -2;
                            }
                        }
                    } else {
                        match offered {
                            Some(s) => conv.dirs[fwd].win_scale = s,
                            None if conv.dirs[fwd].win_scale == -1 && conv.dirs[rev].win_scale == -1 => {
                                conv.dirs[fwd].win_scale = -2;
                                conv.dirs[rev].win_scale = -2;
                            }
                            None => {}
                        }
                    }
                }
                let ws = conv.dirs[fwd].win_scale;
                let raw = i64::from(t.window_size());
                row.insert("tcp.srcport", t.source_port().into());
                row.insert("tcp.dstport", t.destination_port().into());
                row.insert("tcp.stream", *index as i64);
                row.insert("tcp.ack", t.acknowledgment_number().into());
                row.insert("tcp.window_size_value", raw);
                row.insert("tcp.window_size_scalefactor", if ws >= 0 { 1 << ws } else { ws });
                row.insert("tcp.window_size", if ws >= 0 && !t.syn() { raw * (1 << ws) } else { raw });
                for opt in t.options_iterator().flatten() {
                    if let TcpOptionElement::Timestamp(v, e) = opt {
                        row.insert("tcp.options.timestamp.tsval", v.into());
                        row.insert("tcp.options.timestamp.tsecr", e.into());
                    }
                }
                if http_request_line(t.payload()) {
                    conv.requests += 1;
                    row.insert("http.request_number", conv.requests);
                    if let Some(prev) = conv.last_request.replace(frame_number as i64) {
                        row.insert("http.prev_request_in", prev);
                    }
                }
            }
            TransportSlice::Udp(u) => {
                let mut key = [(src, u.source_port()), (dst, u.destination_port())];
                key.sort();
                let next = self.udp.len();
                let index = *self.udp.entry(key).or_insert(next);
                row.insert("udp.srcport", u.source_port().into());
                row.insert("udp.dstport", u.destination_port().into());
                row.insert("udp.length", u.length().into());
                row.insert("udp.checksum", u.checksum().into());
                row.insert("udp.stream", index as i64);
            }
            _ => return None,
        }
        Some((eth.source(), row))
    }
}
