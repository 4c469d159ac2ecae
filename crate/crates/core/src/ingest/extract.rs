use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::PathBuf;

use log::{debug, warn};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{canonical_schema, Dataset, DeviceMap, FeatureSchema, FeatureValue, LabeledInstance, SchemaMode};

use super::dissect::{dissect_packet, ConversationTracker, SkipReason};
use super::pcap::{PcapError, PcapReader};

/// Per-capture (or merged) packet accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Diagnostics {
    pub packets: u64,
    pub emitted: u64,
    pub unknown_mac: u64,
    pub skipped: BTreeMap<String, u64>,
}

impl Diagnostics {
    fn skip(&mut self, reason: SkipReason) {
        *self.skipped.entry(format!("{reason:?}")).or_default() += 1;
    }

    pub fn skipped_total(&self) -> u64 {
        self.skipped.values().sum()
    }

    pub fn merge(&mut self, other: &Diagnostics) {
        self.packets += other.packets;
        self.emitted += other.emitted;
        self.unknown_mac += other.unknown_mac;
        for (k, v) in &other.skipped {
            *self.skipped.entry(k.clone()).or_default() += v;
        }
    }
}

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("{name}: {source}")]
    Capture { name: String, source: PcapError },
    #[error("{name}: {source}")]
    Open { name: String, source: std::io::Error },
}

#[derive(Debug, Serialize)]
pub struct CaptureReport {
    pub name: String,
    pub diagnostics: Diagnostics,
    pub error: Option<String>,
}

#[derive(Debug)]
pub struct Extraction {
    pub dataset: Dataset,
    /// Totals over the captures that were read successfully.
    pub diagnostics: Diagnostics,
    pub captures: Vec<CaptureReport>,
}

impl Extraction {
    pub fn failures(&self) -> impl Iterator<Item = &CaptureReport> {
        self.captures.iter().filter(|c| c.error.is_some())
    }
}

/// Maps each schema feature to its position among the extracted fields.
fn projection(schema: &FeatureSchema) -> Vec<Option<usize>> {
    let full = canonical_schema(SchemaMode::Full24);
    schema
        .names()
        .map(|n| {
            let idx = full.index_of(n);
            if idx.is_none() {
                warn!("feature `{n}` is not extracted from packets; it will be missing");
            }
            idx
        })
        .collect()
}

/// Dissect one capture with a fresh tracker.
pub fn extract_capture<R: Read>(
    source: R,
    devices: &DeviceMap,
    schema: &FeatureSchema,
) -> Result<(Vec<LabeledInstance>, Diagnostics), PcapError> {
    extract_projected(source, devices, &projection(schema))
}

fn extract_projected<R: Read>(
    source: R,
    devices: &DeviceMap,
    proj: &[Option<usize>],
) -> Result<(Vec<LabeledInstance>, Diagnostics), PcapError> {
    let mut tracker = ConversationTracker::new();
    let mut diag = Diagnostics::default();
    let mut out = Vec::new();
    for pkt in PcapReader::new(source)? {
        let pkt = pkt?;
        diag.packets += 1;
        let fields = match dissect_packet(&pkt, &mut tracker) {
            Ok(f) => f,
            Err(reason) => {
                debug!("frame {}: skipped ({reason:?})", pkt.frame_number);
                diag.skip(reason);
                continue;
            }
        };
        let Some(device) = devices.get(&fields.src_mac) else {
            diag.unknown_mac += 1;
            continue;
        };
        let values = proj
            .iter()
            .map(|i| i.map_or(FeatureValue::Missing, |i| fields.values[i]))
            .collect();
        out.push(LabeledInstance::new(values, device));
        diag.emitted += 1;
    }
    Ok((out, diag))
}

/// Build a labeled dataset from several captures. Each capture gets its own
/// tracker, so stream indices restart at 0 per file. Captures are processed
/// in parallel and concatenated in input order.
///
/// A capture that cannot be parsed is reported and left out, unless `strict`
/// is set, in which case the first failure is returned.
pub fn extract_dataset<R: Read + Send>(
    captures: Vec<(String, R)>,
    devices: &DeviceMap,
    schema: &FeatureSchema,
    strict: bool,
) -> Result<Extraction, ExtractError> {
    let inputs = captures.into_iter().map(|(n, r)| (n, Ok(r))).collect();
    extract_all(inputs, devices, schema, strict)
}

/// [`extract_dataset`] over files on disk. Unopenable files are handled
/// like unparsable ones.
pub fn extract_files(
    paths: &[PathBuf],
    devices: &DeviceMap,
    schema: &FeatureSchema,
    strict: bool,
) -> Result<Extraction, ExtractError> {
    let inputs = paths
        .iter()
        .map(|p| (p.display().to_string(), File::open(p).map(BufReader::new)))
        .collect();
    extract_all(inputs, devices, schema, strict)
}

fn extract_all<R: Read + Send>(
    inputs: Vec<(String, std::io::Result<R>)>,
    devices: &DeviceMap,
    schema: &FeatureSchema,
    strict: bool,
) -> Result<Extraction, ExtractError> {
    let proj = projection(schema);
    let results: Vec<_> = inputs
        .into_par_iter()
        .map(|(name, src)| {
            let r = match src {
                Ok(src) => extract_projected(src, devices, &proj).map_err(|source| ExtractError::Capture {
                    name: name.clone(),
                    source,
                }),
                Err(source) => Err(ExtractError::Open { name: name.clone(), source }),
            };
            (name, r)
        })
        .collect();

    let mut instances = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut reports = Vec::with_capacity(results.len());
    for (name, result) in results {
        match result {
            Ok((rows, diag)) => {
                instances.extend(rows);
                diagnostics.merge(&diag);
                reports.push(CaptureReport { name, diagnostics: diag, error: None });
            }
            Err(err) => {
                if strict {
                    return Err(err);
                }
                warn!("{err}; capture skipped");
                reports.push(CaptureReport {
                    name,
                    diagnostics: Diagnostics::default(),
                    error: Some(err.to_string()),
                });
            }
        }
    }
    let dataset = Dataset::new(schema.clone(), instances).expect("extracted rows match schema");
    Ok(Extraction { dataset, diagnostics, captures: reports })
}
