//! Capture ingestion: pcap reading, header dissection and labeling by
//! source MAC.

pub mod craft;
pub mod dissect;
pub mod extract;
pub mod pcap;

pub use dissect::{dissect_packet, ConversationTracker, PacketFields, SkipReason, TransportProto};
pub use extract::{extract_capture, extract_dataset, extract_files, CaptureReport, Diagnostics, ExtractError, Extraction};
pub use pcap::{read_pcap, PcapError, PcapReader, PcapWriter, RawPacket};
