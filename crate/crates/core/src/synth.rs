//! Synthetic device traffic for tests, demos and benchmarks.
//!
//! Every device has its own TTL, TCP window, DSCP and server port, so the
//! resulting dataset is separable on any of those features.

use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::craft::{tcp_flags, Ipv4Frame, TcpOption, TcpSegment, Transport, UdpDatagram};
use crate::ingest::pcap::{PcapWriter, LINKTYPE_ETHERNET};
use crate::model::{DeviceMap, MacAddr};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDevice {
    pub name: String,
    pub mac: MacAddr,
    pub ip: Ipv4Addr,
    pub ttl: u8,
    pub window: u16,
    /// Window-scale shift announced on SYN, if any.
    pub window_shift: Option<u8>,
    pub dscp: u8,
    pub server_port: u16,
    /// Sends HTTP requests over its TCP connections.
    pub http: bool,
}

pub const SERVER_MAC: MacAddr = MacAddr([0x02, 0xaa, 0, 0, 0, 0xfe]);

/// name, ttl, window, window shift, dscp, server port, speaks http
type DeviceSpec = (&'static str, u8, u16, Option<u8>, u8, u16, bool);

/// Five devices with pairwise-distinct signatures.
pub fn default_devices() -> Vec<SyntheticDevice> {
    let spec: [DeviceSpec; 5] = [
        ("camera", 64, 29_200, Some(7), 0, 554, false),
        ("plug", 128, 8_192, None, 8, 443, false),
        ("bulb", 255, 5_840, Some(2), 46, 1883, false),
        ("speaker", 32, 64_240, Some(8), 10, 80, true),
        ("hub", 100, 14_600, None, 26, 8883, false),
    ];
    spec.iter()
        .enumerate()
        .map(|(i, &(name, ttl, window, window_shift, dscp, server_port, http))| SyntheticDevice {
            name: name.to_string(),
            mac: MacAddr([0x02, 0x00, 0x5e, 0x10, 0x00, i as u8 + 1]),
            ip: Ipv4Addr::new(192, 168, 1, 10 + i as u8),
            ttl,
            window,
            window_shift,
            dscp,
            server_port,
            http,
        })
        .collect()
}

pub fn device_map(devices: &[SyntheticDevice]) -> DeviceMap {
    devices.iter().map(|d| (d.mac, d.name.clone())).collect()
}

/// One capture in which each device opens `connections` TCP connections and
/// sends some UDP datagrams; server replies use a MAC outside the device map.
pub fn synthetic_capture(devices: &[SyntheticDevice], connections: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let server_ip = Ipv4Addr::new(203, 0, 113, 5);
    let mut frames: Vec<(u64, Vec<u8>)> = Vec::new();

    for d in devices {
        let mut t: u64 = rng.gen_range(0..1_000_000);
        let mut next = |rng: &mut ChaCha8Rng| {
            t += rng.gen_range(100..50_000);
            t
        };
        let tos = d.dscp << 2;
        let out = |seg: TcpSegment, id: u16| {
            Ipv4Frame::new(d.mac, d.ip, server_ip, Transport::Tcp(seg))
                .ttl(d.ttl)
                .tos(tos)
                .id(id)
                .dst_mac(SERVER_MAC)
                .to_bytes()
        };
        let back = |seg: TcpSegment| {
            Ipv4Frame::new(SERVER_MAC, server_ip, d.ip, Transport::Tcp(seg))
                .ttl(57)
                .dst_mac(d.mac)
                .to_bytes()
        };
        for c in 0..connections {
            let port = 40_000 + rng.gen_range(0..20_000u16);
            let isn: u32 = rng.gen();
            let sisn: u32 = rng.gen();
            let ts: u32 = rng.gen();
            let mut syn = TcpSegment::new(port, d.server_port, tcp_flags::SYN)
                .seq(isn)
                .window(d.window)
                .option(TcpOption::Mss(1460));
            if let Some(s) = d.window_shift {
                syn = syn.option(TcpOption::Nop).option(TcpOption::WindowScale(s));
            }
            syn = syn.option(TcpOption::Timestamp { tsval: ts, tsecr: 0 });
            frames.push((next(&mut rng), out(syn, c as u16 * 8)));

            let mut synack = TcpSegment::new(d.server_port, port, tcp_flags::SYN | tcp_flags::ACK)
                .seq(sisn)
                .ack(isn.wrapping_add(1))
                .window(65_535);
            if d.window_shift.is_some() {
                synack = synack.option(TcpOption::Nop).option(TcpOption::WindowScale(7));
            }
            frames.push((next(&mut rng), back(synack)));

            let data_packets = rng.gen_range(2..6);
            let mut seq = isn.wrapping_add(1);
            for k in 0..data_packets {
                let payload: Vec<u8> = if d.http && k == 0 {
                    format!("GET /status/{c} HTTP/1.1\r\nHost: example.test\r\n\r\n").into_bytes()
                } else {
                    (0..rng.gen_range(1..200)).map(|_| rng.gen()).collect()
                };
                let len = payload.len() as u32;
                let seg = TcpSegment::new(port, d.server_port, tcp_flags::ACK | tcp_flags::PSH)
                    .seq(seq)
                    .ack(sisn.wrapping_add(1))
                    .window(d.window)
                    .option(TcpOption::Nop)
                    .option(TcpOption::Nop)
                    .option(TcpOption::Timestamp { tsval: ts.wrapping_add(k + 1), tsecr: 7 })
                    .payload(payload);
                frames.push((next(&mut rng), out(seg, c as u16 * 8 + 1 + k as u16)));
                seq = seq.wrapping_add(len);
            }
        }
        for _ in 0..connections {
            let payload: Vec<u8> = (0..rng.gen_range(8..64)).map(|_| rng.gen()).collect();
            let udp = UdpDatagram::new(50_000 + rng.gen_range(0..1000u16), d.server_port, payload);
            let frame = Ipv4Frame::new(d.mac, d.ip, server_ip, Transport::Udp(udp))
                .ttl(d.ttl)
                .tos(tos)
                .dst_mac(SERVER_MAC)
                .to_bytes();
            frames.push((next(&mut rng), frame));
        }
    }

    // stable on equal timestamps, so the order only depends on the seed
    frames.sort_by_key(|(t, _)| *t);
    let mut w = PcapWriter::new(Vec::new(), LINKTYPE_ETHERNET).expect("writing to memory");
    for (t, bytes) in frames {
        let sec = (1_600_000_000 + t / 1_000_000) as u32;
        let nsec = ((t % 1_000_000) * 1000) as u32;
        w.write_packet(sec, nsec, &bytes).expect("writing to memory");
    }
    w.into_inner()
}
