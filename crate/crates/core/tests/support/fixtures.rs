//! Toy datasets and a crafted capture corpus.

use std::net::Ipv4Addr;

use dfp_core::ingest::craft::{
    ethernet_header, tcp_flags, Ipv4Frame, TcpOption, TcpSegment, Transport, UdpDatagram, ETHERTYPE_IPV6,
    ETHERTYPE_VLAN,
};
use dfp_core::ingest::pcap::{PcapWriter, LINKTYPE_ETHERNET};
use dfp_core::model::{Dataset, FeatureSchema, FeatureValue, LabeledInstance, MacAddr};

pub fn dataset(cols: &[&str], rows: &[(Vec<Option<i64>>, &str)]) -> Dataset {
    let schema = FeatureSchema::from_names(cols.iter().copied()).unwrap();
    let instances = rows
        .iter()
        .map(|(v, l)| LabeledInstance::new(v.iter().map(|&x| FeatureValue::from(x)).collect(), *l))
        .collect();
    Dataset::new(schema, instances).unwrap()
}

/// The classic 14-day weather data; outlook coded sunny=0, overcast=1,
/// rainy=2 and windy as 0/1.
pub fn weather() -> Dataset {
    let rows: [(i64, i64, i64, i64, &str); 14] = [
        (0, 85, 85, 0, "no"),
        (0, 80, 90, 1, "no"),
        (1, 83, 86, 0, "yes"),
        (2, 70, 96, 0, "yes"),
        (2, 68, 80, 0, "yes"),
        (2, 65, 70, 1, "no"),
        (1, 64, 65, 1, "yes"),
        (0, 72, 95, 0, "no"),
        (0, 69, 70, 0, "yes"),
        (2, 75, 80, 0, "yes"),
        (0, 75, 70, 1, "yes"),
        (1, 72, 90, 1, "yes"),
        (1, 81, 75, 0, "yes"),
        (2, 71, 91, 1, "no"),
    ];
    let rows: Vec<_> = rows
        .iter()
        .map(|&(o, t, h, w, l)| (vec![Some(o), Some(t), Some(h), Some(w)], l))
        .collect();
    dataset(&["outlook", "temperature", "humidity", "windy"], &rows)
}

/// Weather with every attribute nominal (codes: outlook sunny 0, overcast
/// 1, rainy 2; temperature hot 0, mild 1, cool 2; humidity high 0, normal 1).
pub fn weather_nominal() -> Dataset {
    let rows: [(i64, i64, i64, i64, &str); 14] = [
        (0, 0, 0, 0, "no"),
        (0, 0, 0, 1, "no"),
        (1, 0, 0, 0, "yes"),
        (2, 1, 0, 0, "yes"),
        (2, 2, 1, 0, "yes"),
        (2, 2, 1, 1, "no"),
        (1, 2, 1, 1, "yes"),
        (0, 1, 0, 0, "no"),
        (0, 2, 1, 0, "yes"),
        (2, 1, 1, 0, "yes"),
        (0, 1, 1, 1, "yes"),
        (1, 1, 0, 1, "yes"),
        (1, 0, 1, 0, "yes"),
        (2, 1, 0, 1, "no"),
    ];
    let rows: Vec<_> = rows
        .iter()
        .map(|&(o, t, h, w, l)| (vec![Some(o), Some(t), Some(h), Some(w)], l))
        .collect();
    dataset(&["outlook", "temperature", "humidity", "windy"], &rows)
}

/// Weather with a few values knocked out.
pub fn weather_missing() -> Dataset {
    let base = weather();
    let holes = [(0, 0), (3, 2), (5, 1), (7, 3), (9, 0), (12, 2), (13, 1)];
    let instances = base
        .instances()
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut inst = inst.clone();
            for &(r, c) in &holes {
                if r == i {
                    inst.values[c] = FeatureValue::Missing;
                }
            }
            inst
        })
        .collect();
    Dataset::new(base.schema().clone(), instances).unwrap()
}

/// 18 instances, three classes, a little noise and missing data.
pub fn three_class() -> Dataset {
    let rows = vec![
        (vec![Some(1), Some(10), Some(5)], "alpha"),
        (vec![Some(2), Some(12), None], "alpha"),
        (vec![Some(1), Some(11), Some(7)], "alpha"),
        (vec![Some(3), Some(30), Some(5)], "alpha"),
        (vec![Some(2), Some(13), Some(6)], "alpha"),
        (vec![Some(2), Some(29), Some(6)], "beta"),
        (vec![Some(5), Some(31), Some(5)], "beta"),
        (vec![Some(6), Some(33), None], "beta"),
        (vec![Some(5), Some(35), Some(8)], "beta"),
        (vec![None, Some(32), Some(9)], "beta"),
        (vec![Some(6), Some(12), Some(9)], "beta"),
        (vec![Some(9), Some(50), Some(1)], "gamma"),
        (vec![Some(8), Some(52), Some(2)], "gamma"),
        (vec![Some(9), None, Some(1)], "gamma"),
        (vec![Some(7), Some(55), Some(2)], "gamma"),
        (vec![Some(8), Some(51), Some(9)], "gamma"),
        (vec![Some(9), Some(34), Some(2)], "gamma"),
        (vec![Some(5), Some(53), Some(1)], "beta"),
    ];
    dataset(&["a", "b", "c"], &rows)
}

pub const DEVICE_A: MacAddr = MacAddr([0x02, 0, 0, 0, 0, 0xa1]);
pub const DEVICE_B: MacAddr = MacAddr([0x02, 0, 0, 0, 0, 0xb2]);
pub const SERVER: MacAddr = MacAddr([0x02, 0, 0, 0, 0, 0xfe]);

fn ip(last: u8) -> Ipv4Addr {
    Ipv4Addr::new(10, 0, 0, last)
}

fn tcp(mac: MacAddr, src: Ipv4Addr, dst: Ipv4Addr, seg: TcpSegment) -> Ipv4Frame {
    Ipv4Frame::new(mac, src, dst, Transport::Tcp(seg))
}

/// Frames of the dissection fixture corpus, with a short description each.
#[allow(clippy::vec_init_then_push)]
pub fn fixture_frames() -> Vec<(&'static str, Vec<u8>)> {
    use tcp_flags::*;
    let (a, b, s) = (ip(1), ip(2), ip(100));
    let mut out: Vec<(&str, Vec<u8>)> = Vec::new();

    // stream with window scaling negotiated on both sides
    out.push((
        "syn ws=7",
        tcp(DEVICE_A, a, s, TcpSegment::new(40000, 80, SYN).seq(1000).window(64240)
            .option(TcpOption::Mss(1460)).option(TcpOption::Nop).option(TcpOption::WindowScale(7))
            .option(TcpOption::Timestamp { tsval: 111, tsecr: 0 }))
        .ttl(64).to_bytes(),
    ));
    out.push((
        "syn-ack ws=8",
        tcp(SERVER, s, a, TcpSegment::new(80, 40000, SYN | ACK).seq(5000).ack(1001).window(65160)
            .option(TcpOption::Mss(1460)).option(TcpOption::Nop).option(TcpOption::WindowScale(8)))
        .ttl(57).to_bytes(),
    ));
    out.push((
        "ack",
        tcp(DEVICE_A, a, s, TcpSegment::new(40000, 80, ACK).seq(1001).ack(5001).window(502)).to_bytes(),
    ));
    out.push((
        "http get #1",
        tcp(DEVICE_A, a, s, TcpSegment::new(40000, 80, ACK | PSH).seq(1001).ack(5001).window(502)
            .option(TcpOption::Nop).option(TcpOption::Nop).option(TcpOption::Timestamp { tsval: 112, tsecr: 9 })
            .payload(&b"GET /index.html HTTP/1.1\r\nHost: a\r\n\r\n"[..]))
        .tos(0xb8).to_bytes(),
    ));
    out.push((
        "server data",
        tcp(SERVER, s, a, TcpSegment::new(80, 40000, ACK | PSH).seq(5001).ack(1040).window(509)
            .payload(&b"HTTP/1.1 200 OK\r\n\r\n"[..]))
        .to_bytes(),
    ));
    out.push((
        "http post #2",
        tcp(DEVICE_A, a, s, TcpSegment::new(40000, 80, ACK | PSH).seq(1040).ack(5020).window(501)
            .payload(&b"POST /api HTTP/1.0\r\n\r\n"[..]))
        .to_bytes(),
    ));
    out.push((
        "not http",
        tcp(DEVICE_A, a, s, TcpSegment::new(40000, 80, ACK | PSH).seq(1062).ack(5020).window(501)
            .payload(&b"HELLO"[..]))
        .to_bytes(),
    ));
    out.push((
        "get without version",
        tcp(DEVICE_A, a, s, TcpSegment::new(40000, 80, ACK | PSH).seq(1067).ack(5020).window(501)
            .payload(&b"GET /x\r\n"[..]))
        .to_bytes(),
    ));

    // only the client offers scaling: neither side uses it
    out.push((
        "syn ws=2, one-sided",
        tcp(DEVICE_B, b, s, TcpSegment::new(41000, 443, SYN).seq(7).window(29200)
            .option(TcpOption::WindowScale(2)))
        .ttl(128).id(4242).to_bytes(),
    ));
    out.push((
        "syn-ack no ws",
        tcp(SERVER, s, b, TcpSegment::new(443, 41000, SYN | ACK).seq(9).ack(8).window(28960)).to_bytes(),
    ));
    out.push((
        "ack, scaling not used",
        tcp(DEVICE_B, b, s, TcpSegment::new(41000, 443, ACK).seq(8).ack(10).window(229)).ttl(128).to_bytes(),
    ));

    // no handshake in the capture
    out.push((
        "mid-stream",
        tcp(DEVICE_B, b, s, TcpSegment::new(41001, 8883, ACK).seq(123_456).ack(654_321).window(1024)).to_bytes(),
    ));
    out.push((
        "mid-stream reply",
        tcp(SERVER, s, b, TcpSegment::new(8883, 41001, ACK).seq(654_321).ack(123_456).window(2048)).to_bytes(),
    ));
    out.push((
        "oversized shift is capped",
        tcp(DEVICE_A, a, s, TcpSegment::new(40002, 80, SYN).window(1000).option(TcpOption::WindowScale(15))).to_bytes(),
    ));
    out.push((
        "syn-ack ws=0",
        tcp(SERVER, s, a, TcpSegment::new(80, 40002, SYN | ACK).window(1000).option(TcpOption::WindowScale(0))).to_bytes(),
    ));
    out.push((
        "after capped shift",
        tcp(DEVICE_A, a, s, TcpSegment::new(40002, 80, ACK).window(3)).to_bytes(),
    ));

    // UDP
    out.push((
        "dns query",
        Ipv4Frame::new(DEVICE_A, a, ip(53), Transport::Udp(UdpDatagram::new(53000, 53, vec![0xab; 29]))).to_bytes(),
    ));
    out.push((
        "dns reply",
        Ipv4Frame::new(SERVER, ip(53), a, Transport::Udp(UdpDatagram::new(53, 53000, vec![0xcd; 45]))).to_bytes(),
    ));
    let mut zero_sum = UdpDatagram::new(5353, 5353, vec![1, 2, 3]);
    zero_sum.checksum = Some(0);
    out.push((
        "udp checksum 0, padded frame",
        {
            let mut f = Ipv4Frame::new(DEVICE_B, b, ip(251), Transport::Udp(zero_sum)).ttl(255).tos(0x02).to_bytes();
            f.resize(60, 0);
            f
        },
    ));
    out.push((
        "ip options",
        {
            let mut f = Ipv4Frame::new(DEVICE_B, b, ip(9), Transport::Udp(UdpDatagram::new(6000, 6001, b"opt".to_vec())));
            f.ip_options = vec![1, 1, 1, 0];
            f.to_bytes()
        },
    ));

    // things that must not produce rows
    out.push((
        "truncated tcp header",
        {
            let mut f = tcp(DEVICE_A, a, s, TcpSegment::new(40000, 80, ACK).window(1)).to_bytes();
            let len = f.len();
            f.truncate(len - 8);
            f
        },
    ));
    out.push((
        "truncated ip payload",
        {
            let mut f = Ipv4Frame::new(DEVICE_A, a, s, Transport::Udp(UdpDatagram::new(1, 2, vec![0; 40]))).to_bytes();
            f.truncate(14 + 30);
            f
        },
    ));
    out.push(("runt frame", vec![0u8; 10]));
    out.push((
        "icmp",
        Ipv4Frame::new(DEVICE_A, a, s, Transport::Other { proto: 1, payload: vec![8, 0, 0, 0, 0, 1, 0, 1] }).to_bytes(),
    ));
    out.push((
        "ipv6",
        {
            let mut f = ethernet_header(SERVER, DEVICE_A, ETHERTYPE_IPV6);
            f.extend_from_slice(&[0x60, 0, 0, 0, 0, 8, 17, 64]);
            f.extend_from_slice(&[0u8; 32]);
            f.extend_from_slice(&[0, 1, 0, 2, 0, 8, 0, 0]);
            f
        },
    ));
    out.push((
        "vlan",
        {
            let inner = Ipv4Frame::new(DEVICE_A, a, s, Transport::Udp(UdpDatagram::new(1, 2, vec![]))).to_bytes();
            let mut f = ethernet_header(SERVER, DEVICE_A, ETHERTYPE_VLAN);
            f.extend_from_slice(&[0, 10, 0x08, 0x00]);
            f.extend_from_slice(&inner[14..]);
            f
        },
    ));
    out.push(("arp", {
        let mut f = ethernet_header(MacAddr([0xff; 6]), DEVICE_A, 0x0806);
        f.extend_from_slice(&[0u8; 28]);
        f
    }));
    // a second request on the first stream, after unrelated traffic
    out.push((
        "http get #3",
        tcp(DEVICE_A, a, s, TcpSegment::new(40000, 80, ACK | PSH).seq(1075).ack(5020).window(500)
            .payload(&b"GET /next HTTP/1.1\nHost: a\n\n"[..]))
        .to_bytes(),
    ));
    out
}

pub fn fixture_capture() -> Vec<u8> {
    let mut w = PcapWriter::new(Vec::new(), LINKTYPE_ETHERNET).unwrap();
    for (i, (_, bytes)) in fixture_frames().iter().enumerate() {
        w.write_packet(1_700_000_000 + i as u32, 1000 * i as u32, bytes).unwrap();
    }
    w.into_inner()
}
