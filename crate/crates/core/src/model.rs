//! Fingerprint domain types: feature schema, feature values, labeled
//! instances, datasets and the MAC-to-device map, plus the dataset CSV format.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// CSV cell text used for a missing value.
pub const MISSING_MARKER: &str = "?";

/// Name of the class column in dataset CSV files.
pub const LABEL_COLUMN: &str = "label";

/// The two TCP timestamp-option features dropped from the fingerprint.
pub const TIMESTAMP_FEATURES: [&str; 2] = [
    "tcp.options.timestamp.tsval",
    "tcp.options.timestamp.tsecr",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "HTTP")]
    Http,
    #[serde(rename = "UDP")]
    Udp,
    #[serde(rename = "TCP")]
    Tcp,
    #[serde(rename = "IP")]
    Ip,
    /// Features of user-supplied schemas that belong to none of the above.
    #[serde(rename = "OTHER")]
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OsiLayer {
    Application,
    Transport,
    Network,
    Unspecified,
}

impl Protocol {
    pub fn layer(self) -> OsiLayer {
        match self {
            Protocol::Http => OsiLayer::Application,
            Protocol::Udp | Protocol::Tcp => OsiLayer::Transport,
            Protocol::Ip => OsiLayer::Network,
            Protocol::Other => OsiLayer::Unspecified,
        }
    }

    /// Guess the protocol from a dissector-style field name (`tcp.ack` -> TCP).
    pub fn from_field_name(name: &str) -> Protocol {
        match name.split('.').next().unwrap_or("") {
            "http" => Protocol::Http,
            "udp" => Protocol::Udp,
            "tcp" => Protocol::Tcp,
            "ip" => Protocol::Ip,
            _ => Protocol::Other,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("duplicate feature name `{0}`")]
    Duplicate(String),
    #[error("empty feature name")]
    EmptyName,
    #[error("feature `{name}`: protocol {protocol:?} does not belong to layer {layer:?}")]
    LayerMismatch {
        name: String,
        protocol: Protocol,
        layer: OsiLayer,
    },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown builtin schema `{0}` (expected full24 or reduced22)")]
    UnknownBuiltin(String),
    #[error("invalid schema document: {0}")]
    Json(String),
}

/// One packet-header feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub protocol: Protocol,
    pub osi_layer: OsiLayer,
}

impl FeatureDef {
    pub fn new(name: impl Into<String>, protocol: Protocol) -> Self {
        FeatureDef {
            name: name.into(),
            protocol,
            osi_layer: protocol.layer(),
        }
    }

    /// Infer protocol and layer from the name.
    pub fn inferred(name: impl Into<String>) -> Self {
        let name = name.into();
        let protocol = Protocol::from_field_name(&name);
        FeatureDef::new(name, protocol)
    }

    /// Inclusive numeric domain of the field, when it is one the dissector knows.
    pub fn domain(&self) -> Option<(i64, i64)> {
        let bounds = match self.name.as_str() {
            "udp.srcport" | "udp.dstport" | "tcp.srcport" | "tcp.dstport" => (0, 65_535),
            "udp.checksum" | "udp.length" | "ip.len" | "ip.id" | "tcp.window_size_value" => {
                (0, 65_535)
            }
            "ip.ttl" | "ip.proto" | "ip.dsfield" => (0, 255),
            "ip.dsfield.dscp" => (0, 63),
            "ip.hdr_len" => (20, 60),
            "tcp.ack" | "tcp.options.timestamp.tsval" | "tcp.options.timestamp.tsecr" => {
                (0, u32::MAX as i64)
            }
            // 65535 << 14
            "tcp.window_size" => (0, 1_073_725_440),
            // -1 and -2 are the "unknown" and "not used" sentinels
            "tcp.window_size_scalefactor" => (-2, 1 << 14),
            "tcp.stream" | "udp.stream" | "http.request_number" | "http.prev_request_in" => {
                (0, i64::MAX)
            }
            _ => return None,
        };
        Some(bounds)
    }
}

/// Ordered feature list; the dimensionality contract of a fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureDef>", into = "Vec<FeatureDef>")]
pub struct FeatureSchema {
    features: Vec<FeatureDef>,
}

impl TryFrom<Vec<FeatureDef>> for FeatureSchema {
    type Error = SchemaError;

    fn try_from(features: Vec<FeatureDef>) -> Result<Self, Self::Error> {
        FeatureSchema::new(features)
    }
}

impl From<FeatureSchema> for Vec<FeatureDef> {
    fn from(schema: FeatureSchema) -> Self {
        schema.features
    }
}

/// Which builtin schema to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaMode {
    /// Every extracted field including the two TCP timestamp options.
    Full24,
    /// The fingerprint feature set, without the timestamp options.
    Reduced22,
}

impl FromStr for SchemaMode {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full24" => Ok(SchemaMode::Full24),
            "reduced22" => Ok(SchemaMode::Reduced22),
            other => Err(SchemaError::UnknownBuiltin(other.to_string())),
        }
    }
}

// Listed in table order; ip.dsfield.dscp appears twice there and is kept once.
const FINGERPRINT_FIELDS: [(&str, Protocol); 21] = [
    ("http.request_number", Protocol::Http),
    ("http.prev_request_in", Protocol::Http),
    ("udp.srcport", Protocol::Udp),
    ("udp.stream", Protocol::Udp),
    ("udp.length", Protocol::Udp),
    ("udp.dstport", Protocol::Udp),
    ("udp.checksum", Protocol::Udp),
    ("tcp.srcport", Protocol::Tcp),
    ("tcp.stream", Protocol::Tcp),
    ("tcp.dstport", Protocol::Tcp),
    ("tcp.window_size", Protocol::Tcp),
    ("tcp.ack", Protocol::Tcp),
    ("tcp.window_size_scalefactor", Protocol::Tcp),
    ("tcp.window_size_value", Protocol::Tcp),
    ("ip.len", Protocol::Ip),
    ("ip.dsfield.dscp", Protocol::Ip),
    ("ip.hdr_len", Protocol::Ip),
    ("ip.dsfield", Protocol::Ip),
    ("ip.id", Protocol::Ip),
    ("ip.ttl", Protocol::Ip),
    ("ip.proto", Protocol::Ip),
];

/// Builtin schema. `reduced22` carries the distinct fingerprint fields (21
/// names, see README); `full24` appends the two timestamp options.
pub fn canonical_schema(mode: SchemaMode) -> FeatureSchema {
    let mut features: Vec<FeatureDef> = FINGERPRINT_FIELDS
        .iter()
        .map(|&(name, proto)| FeatureDef::new(name, proto))
        .collect();
    if mode == SchemaMode::Full24 {
        features.extend(
            TIMESTAMP_FEATURES
                .iter()
                .map(|name| FeatureDef::new(*name, Protocol::Tcp)),
        );
    }
    FeatureSchema { features }
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self, SchemaError> {
        let mut seen = HashSet::new();
        for f in &features {
            if f.name.is_empty() {
                return Err(SchemaError::EmptyName);
            }
            if f.protocol.layer() != f.osi_layer {
                return Err(SchemaError::LayerMismatch {
                    name: f.name.clone(),
                    protocol: f.protocol,
                    layer: f.osi_layer,
                });
            }
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError::Duplicate(f.name.clone()));
            }
        }
        Ok(FeatureSchema { features })
    }

    /// Schema from bare names, protocols inferred from the name prefix.
    pub fn from_names<I, S>(names: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        FeatureSchema::new(names.into_iter().map(FeatureDef::inferred).collect())
    }

    /// Parse a JSON schema document: an array of `{name, protocol, osi_layer}`.
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let features: Vec<FeatureDef> = serde_json::from_str(text).map_err(|e| SchemaError::Json(e.to_string()))?;
        FeatureSchema::new(features)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.features).expect("schema serializes")
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    /// Sub-schema with the given feature indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureSchema {
        FeatureSchema {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
        }
    }

    /// Hex SHA-256 over the ordered feature names; models record it to
    /// reject vectors from a different schema.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for name in self.names() {
            hasher.update(name.as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// A single feature value: a number, or absent for this packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Option<i64>", into = "Option<i64>")]
pub enum FeatureValue {
    Missing,
    Num(i64),
}

impl FeatureValue {
    pub fn as_f64(self) -> Option<f64> {
        match self {
            FeatureValue::Num(v) => Some(v as f64),
            FeatureValue::Missing => None,
        }
    }

    pub fn is_missing(self) -> bool {
        self == FeatureValue::Missing
    }
}

impl From<Option<i64>> for FeatureValue {
    fn from(v: Option<i64>) -> Self {
        v.map_or(FeatureValue::Missing, FeatureValue::Num)
    }
}

impl From<FeatureValue> for Option<i64> {
    fn from(v: FeatureValue) -> Self {
        match v {
            FeatureValue::Num(x) => Some(x),
            FeatureValue::Missing => None,
        }
    }
}

impl From<i64> for FeatureValue {
    fn from(v: i64) -> Self {
        FeatureValue::Num(v)
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureValue::Num(v) => write!(f, "{v}"),
            FeatureValue::Missing => f.write_str(MISSING_MARKER),
        }
    }
}

/// One packet fingerprint with its device label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub values: Vec<FeatureValue>,
    pub label: String,
    pub weight: f64,
}

impl LabeledInstance {
    pub fn new(values: Vec<FeatureValue>, label: impl Into<String>) -> Self {
        LabeledInstance {
            values,
            label: label.into(),
            weight: 1.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("instance {index} has {got} values, schema has {expected}")]
    Arity {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("instance {index} has non-positive weight {weight}")]
    Weight { index: usize, weight: f64 },
    #[error("instance {index} has an empty label")]
    EmptyLabel { index: usize },
}

/// Schema, instances and the sorted class catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    instances: Vec<LabeledInstance>,
    classes: Vec<String>,
}

impl Dataset {
    pub fn new(
        schema: FeatureSchema,
        instances: Vec<LabeledInstance>,
    ) -> Result<Self, DatasetError> {
        for (index, inst) in instances.iter().enumerate() {
            if inst.values.len() != schema.len() {
                return Err(DatasetError::Arity {
                    index,
                    got: inst.values.len(),
                    expected: schema.len(),
                });
            }
            if !(inst.weight > 0.0 && inst.weight.is_finite()) {
                return Err(DatasetError::Weight {
                    index,
                    weight: inst.weight,
                });
            }
            if inst.label.is_empty() {
                return Err(DatasetError::EmptyLabel { index });
            }
        }
        let classes = instances
            .iter()
            .map(|i| i.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(Dataset {
            schema,
            instances,
            classes,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn instances(&self) -> &[LabeledInstance] {
        &self.instances
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(label)).ok()
    }

    /// Class index of every instance, aligned with `instances()`.
    pub fn label_indices(&self) -> Vec<usize> {
        self.instances
            .iter()
            .map(|i| self.class_index(&i.label).expect("label in catalog"))
            .collect()
    }

    /// Dataset restricted to the given rows (in the given order).
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let instances = rows.iter().map(|&r| self.instances[r].clone()).collect();
        Dataset::new(self.schema.clone(), instances).expect("rows of a valid dataset")
    }

    /// Dataset projected onto a sub-schema; every name must exist.
    pub fn project(&self, schema: &FeatureSchema) -> Result<Dataset, SchemaError> {
        let idx = schema
            .names()
            .map(|n| {
                self.schema
                    .index_of(n)
                    .ok_or_else(|| SchemaError::UnknownFeature(n.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let instances = self
            .instances
            .iter()
            .map(|inst| LabeledInstance {
                values: idx.iter().map(|&i| inst.values[i]).collect(),
                label: inst.label.clone(),
                weight: inst.weight,
            })
            .collect();
        Ok(Dataset::new(schema.clone(), instances).expect("projection keeps validity"))
    }
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("missing `{0}` column in header")]
    MissingColumn(String),
    #[error("header does not match schema: expected `{expected}`, found `{found}`")]
    HeaderMismatch { expected: String, found: String },
    #[error("row {row}, column `{column}`: `{cell}` is not an integer")]
    BadCell {
        row: usize,
        column: String,
        cell: String,
    },
    #[error("row {row}: {source}")]
    Row { row: usize, source: csv::Error },
    #[error("row {row}: empty label")]
    EmptyLabel { row: usize },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Write the dataset as CSV: feature columns in schema order, then `label`.
pub fn write_csv<W: Write>(dataset: &Dataset, sink: W) -> Result<(), CsvError> {
    let mut w = csv::WriterBuilder::new().from_writer(sink);
    w.write_record(dataset.schema.names().chain(std::iter::once(LABEL_COLUMN)))?;
    let mut row: Vec<String> = Vec::with_capacity(dataset.schema.len() + 1);
    for inst in &dataset.instances {
        row.clear();
        row.extend(inst.values.iter().map(|v| v.to_string()));
        row.push(inst.label.clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset CSV. With `expected`, the header's feature columns must
/// equal the schema's names in order; otherwise the schema is inferred.
/// Row numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(source: R, expected: Option<&FeatureSchema>) -> Result<Dataset, CsvError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = r.headers()?.clone();
    let label_col = header
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .ok_or_else(|| CsvError::MissingColumn(LABEL_COLUMN.to_string()))?;
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&i| i != label_col).collect();
    let names: Vec<&str> = feature_cols.iter().map(|&i| &header[i]).collect();

    let schema = match expected {
        Some(schema) => {
            if !schema.names().eq(names.iter().copied()) {
                return Err(CsvError::HeaderMismatch {
                    expected: schema.names().collect::<Vec<_>>().join(","),
                    found: names.join(","),
                });
            }
            schema.clone()
        }
        None => {
            let full = canonical_schema(SchemaMode::Full24);
            let defs = names
                .iter()
                .map(|n| match full.index_of(n) {
                    Some(i) => full.features()[i].clone(),
                    None => FeatureDef::inferred(*n),
                })
                .collect();
            FeatureSchema::new(defs)?
        }
    };

    let mut instances = Vec::new();
    for (i, record) in r.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|source| CsvError::Row { row, source })?;
        let mut values = Vec::with_capacity(feature_cols.len());
        for (&col, name) in feature_cols.iter().zip(&names) {
            let cell = record.get(col).unwrap_or("").trim();
            let value = if cell == MISSING_MARKER {
                FeatureValue::Missing
            } else {
                cell.parse::<i64>()
                    .map(FeatureValue::Num)
                    .map_err(|_| CsvError::BadCell {
                        row,
                        column: name.to_string(),
                        cell: cell.to_string(),
                    })?
            };
            values.push(value);
        }
        let label = record.get(label_col).unwrap_or("").to_string();
        if label.is_empty() {
            return Err(CsvError::EmptyLabel { row });
        }
        instances.push(LabeledInstance::new(values, label));
    }
    Ok(Dataset::new(schema, instances).expect("rows validated while parsing"))
}

/// Ethernet MAC address; displayed as lowercase colon-separated hex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid MAC address `{0}`")]
pub struct MacParseError(pub String);

impl FromStr for MacAddr {
    type Err = MacParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || MacParseError(s.to_string());
        let mut out = [0u8; 6];
        let mut parts = s.split(':');
        for byte in out.iter_mut() {
            let part = parts.next().ok_or_else(err)?;
            if part.len() != 2 {
                return Err(err());
            }
            *byte = u8::from_str_radix(part, 16).map_err(|_| err())?;
        }
        if parts.next().is_some() {
            return Err(err());
        }
        Ok(MacAddr(out))
    }
}

#[derive(Debug, Error)]
pub enum DeviceMapError {
    #[error("line {line}: {source}")]
    Mac { line: usize, source: MacParseError },
    #[error("line {line}: expected `mac,device`")]
    Shape { line: usize },
    #[error("line {line}: empty device name")]
    EmptyName { line: usize },
    #[error("line {line}: MAC {mac} mapped twice")]
    Duplicate { line: usize, mac: MacAddr },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Which source MAC belongs to which device.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeviceMap {
    devices: BTreeMap<MacAddr, String>,
}

impl DeviceMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, mac: MacAddr, device: impl Into<String>) -> Option<String> {
        let device = device.into();
        assert!(!device.is_empty(), "device names must be non-empty");
        self.devices.insert(mac, device)
    }

    pub fn get(&self, mac: &MacAddr) -> Option<&str> {
        self.devices.get(mac).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MacAddr, &str)> {
        self.devices.iter().map(|(m, d)| (m, d.as_str()))
    }

    /// Parse `mac,device` rows. An optional `mac,device` header line is skipped.
    pub fn read_csv<R: Read>(source: R) -> Result<Self, DeviceMapError> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(source);
        let mut map = DeviceMap::new();
        for (i, record) in r.records().enumerate() {
            let line = i + 1;
            let record = record?;
            if record.len() == 1 && record[0].trim().is_empty() {
                continue;
            }
            if record.len() != 2 {
                return Err(DeviceMapError::Shape { line });
            }
            let (mac, device) = (record[0].trim(), record[1].trim());
            if line == 1 && mac.eq_ignore_ascii_case("mac") {
                continue;
            }
            let mac: MacAddr = mac
                .parse()
                .map_err(|source| DeviceMapError::Mac { line, source })?;
            if device.is_empty() {
                return Err(DeviceMapError::EmptyName { line });
            }
            if map.devices.insert(mac, device.to_string()).is_some() {
                return Err(DeviceMapError::Duplicate { line, mac });
            }
        }
        Ok(map)
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), DeviceMapError> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["mac", "device"])?;
        for (mac, device) in &self.devices {
            w.write_record([mac.to_string().as_str(), device.as_str()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

impl FromIterator<(MacAddr, String)> for DeviceMap {
    fn from_iter<T: IntoIterator<Item = (MacAddr, String)>>(iter: T) -> Self {
        let mut map = DeviceMap::new();
        for (mac, device) in iter {
            map.insert(mac, device);
        }
        map
    }
}
