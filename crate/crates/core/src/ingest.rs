//! Trajectory stream ingestion: CSV parsing, forward-filled snapshots,
//! ground-truth flow labels and the chronological dataset split.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{contains, AirspaceGeometry, GeoPoint};

/// Exact header of the trajectory CSV format.
pub const TRAJECTORY_HEADER: [&str; 12] = [
    "timestamp",
    "aircraft_id",
    "latitude",
    "longitude",
    "altitude_m",
    "ground_speed_mps",
    "vertical_speed_mps",
    "heading_deg",
    "dialed_speed_mps",
    "dialed_altitude_m",
    "origin",
    "destination",
];

pub const DEFAULT_STALENESS_S: i64 = 60;
pub const DEFAULT_SNAPSHOT_INTERVAL_S: i64 = 60;
pub const DEFAULT_HORIZON_S: i64 = 900;
/// Fraction of malformed rows tolerated before parsing fails.
pub const DEFAULT_ERROR_BUDGET: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("row {row}, column {column}: {reason}")]
pub struct RowError {
    /// 1-based data row index (the header is row 0).
    pub row: u64,
    pub column: String,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error(transparent)]
    Row(#[from] RowError),
    #[error("{malformed} of {total} rows malformed (budget {budget}); first: {first}")]
    ErrorBudgetExceeded {
        malformed: u64,
        total: u64,
        budget: f64,
        first: RowError,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("no records in ({start}, {end}] but later records exist")]
    InsufficientCoverage { start: i64, end: i64 },
    #[error("split needs a non-empty dataset")]
    EmptyDataset,
    #[error("invalid split ratios {0:?}")]
    InvalidRatios((f64, f64, f64)),
    #[error("invalid range: {0}")]
    InvalidRange(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub timestamp: i64,
    pub aircraft_id: String,
    pub position: GeoPoint,
    pub ground_speed: f64,
    pub vertical_speed: f64,
    pub heading: f64,
    pub dialed_speed: f64,
    pub dialed_altitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_airport: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination_airport: Option<String>,
}

impl TrajectoryRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.timestamp <= 0 {
            return Err(format!("timestamp {} must be positive", self.timestamp));
        }
        if self.aircraft_id.is_empty() {
            return Err("empty aircraft_id".into());
        }
        self.position.validate().map_err(|e| e.to_string())?;
        let finite = [
            self.ground_speed,
            self.vertical_speed,
            self.heading,
            self.dialed_speed,
            self.dialed_altitude,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err("non-finite kinematic value".into());
        }
        if self.ground_speed < 0.0 {
            return Err(format!("ground speed {} is negative", self.ground_speed));
        }
        if !(0.0..360.0).contains(&self.heading) {
            return Err(format!("heading {} outside [0, 360)", self.heading));
        }
        Ok(())
    }

    /// CSV fields in header order. Floats use the shortest round-trip form.
    pub fn to_csv_fields(&self) -> [String; 12] {
        [
            self.timestamp.to_string(),
            self.aircraft_id.clone(),
            self.position.latitude.to_string(),
            self.position.longitude.to_string(),
            self.position.altitude.to_string(),
            self.ground_speed.to_string(),
            self.vertical_speed.to_string(),
            self.heading.to_string(),
            self.dialed_speed.to_string(),
            self.dialed_altitude.to_string(),
            self.origin_airport.clone().unwrap_or_default(),
            self.destination_airport.clone().unwrap_or_default(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    /// Maximum tolerated fraction of malformed rows; 0 makes the first bad
    /// row an error.
    pub error_budget: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            error_budget: DEFAULT_ERROR_BUDGET,
        }
    }
}

impl ParseOptions {
    pub fn strict() -> Self {
        Self { error_budget: 0.0 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedStream {
    pub records: Vec<TrajectoryRecord>,
    /// Rows skipped within the error budget, with diagnostics.
    pub rejected: Vec<RowError>,
    pub total_rows: u64,
}

fn parse_row(row: u64, rec: &csv::StringRecord) -> Result<TrajectoryRecord, RowError> {
    let err = |column: &str, reason: String| RowError {
        row,
        column: column.to_string(),
        reason,
    };
    if rec.len() != TRAJECTORY_HEADER.len() {
        return Err(err(
            "*",
            format!("expected {} fields, found {}", TRAJECTORY_HEADER.len(), rec.len()),
        ));
    }
    let field = |i: usize| rec.get(i).unwrap_or("");
    let float = |i: usize| -> Result<f64, RowError> {
        let raw = field(i).trim();
        let v: f64 = raw
            .parse()
            .map_err(|_| err(TRAJECTORY_HEADER[i], format!("not a number: {raw:?}")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err(TRAJECTORY_HEADER[i], format!("non-finite value {raw:?}")))
        }
    };
    let optional_float = |i: usize| -> Result<Option<f64>, RowError> {
        if field(i).trim().is_empty() {
            Ok(None)
        } else {
            float(i).map(Some)
        }
    };
    let optional_text = |i: usize| {
        let s = field(i).trim();
        (!s.is_empty()).then(|| s.to_string())
    };

    let raw_ts = field(0).trim();
    let timestamp: i64 = raw_ts
        .parse()
        .map_err(|_| err("timestamp", format!("not an integer: {raw_ts:?}")))?;
    if timestamp <= 0 {
        return Err(err("timestamp", format!("{timestamp} must be positive")));
    }
    let aircraft_id = field(1).trim().to_string();
    if aircraft_id.is_empty() {
        return Err(err("aircraft_id", "empty".into()));
    }
    let position = GeoPoint {
        latitude: float(2)?,
        longitude: float(3)?,
        altitude: float(4)?,
    };
    if !(-90.0..=90.0).contains(&position.latitude) {
        return Err(err("latitude", format!("{} outside [-90, 90]", position.latitude)));
    }
    if !(-180.0..=180.0).contains(&position.longitude) {
        return Err(err("longitude", format!("{} outside [-180, 180]", position.longitude)));
    }
    if position.altitude < -500.0 {
        return Err(err("altitude_m", format!("{} below -500", position.altitude)));
    }
    let ground_speed = float(5)?;
    if ground_speed < 0.0 {
        return Err(err("ground_speed_mps", format!("{ground_speed} is negative")));
    }
    let vertical_speed = float(6)?;
    let heading = float(7)?;
    if !(0.0..360.0).contains(&heading) {
        return Err(err("heading_deg", format!("{heading} outside [0, 360)")));
    }
    // missing intent defaults to holding the current state
    let dialed_speed = optional_float(8)?.unwrap_or(ground_speed);
    let dialed_altitude = optional_float(9)?.unwrap_or(position.altitude);
    Ok(TrajectoryRecord {
        timestamp,
        aircraft_id,
        position,
        ground_speed,
        vertical_speed,
        heading,
        dialed_speed,
        dialed_altitude,
        origin_airport: optional_text(10),
        destination_airport: optional_text(11),
    })
}

/// Parse a trajectory CSV stream. Records come back sorted by
/// `(timestamp, aircraft_id)`; the sort is stable so the last of several
/// same-instant reports for one aircraft stays last.
pub fn parse_trajectory_stream<R: Read>(source: R, options: ParseOptions) -> Result<ParsedStream, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header = reader
        .headers()
        .map_err(|e| IngestError::MalformedHeader(e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != TRAJECTORY_HEADER {
        return Err(IngestError::MalformedHeader(format!(
            "expected {:?}, found {:?}",
            TRAJECTORY_HEADER.join(","),
            names.join(",")
        )));
    }

    let mut out = ParsedStream::default();
    let mut rec = csv::StringRecord::new();
    loop {
        let row = out.total_rows + 1;
        match reader.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                out.total_rows += 1;
                match parse_row(row, &rec) {
                    Ok(r) => out.records.push(r),
                    Err(e) if options.error_budget <= 0.0 => return Err(e.into()),
                    Err(e) => out.rejected.push(e),
                }
            }
            Err(e) => {
                if e.is_io_error() {
                    return Err(IngestError::Csv(e.to_string()));
                }
                out.total_rows += 1;
                let e = RowError {
                    row,
                    column: "*".into(),
                    reason: e.to_string(),
                };
                if options.error_budget <= 0.0 {
                    return Err(e.into());
                }
                out.rejected.push(e);
            }
        }
    }

    let malformed = out.rejected.len() as u64;
    if malformed > 0 && malformed as f64 > options.error_budget * out.total_rows as f64 {
        return Err(IngestError::ErrorBudgetExceeded {
            malformed,
            total: out.total_rows,
            budget: options.error_budget,
            first: out.rejected[0].clone(),
        });
    }
    sort_records(&mut out.records);
    Ok(out)
}

pub fn sort_records(records: &mut [TrajectoryRecord]) {
    records.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.aircraft_id.cmp(&b.aircraft_id))
    });
}

pub fn write_trajectory_csv<W: std::io::Write>(records: &[TrajectoryRecord], sink: W) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(TRAJECTORY_HEADER)
        .map_err(|e| IngestError::Csv(e.to_string()))?;
    for r in records {
        w.write_record(r.to_csv_fields())
            .map_err(|e| IngestError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| IngestError::Csv(e.to_string()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Snapshots

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub aircraft_id: String,
    pub record: TrajectoryRecord,
    /// Seconds between the snapshot time and the record timestamp.
    pub age: i64,
}

/// Forward-filled situation at one instant. Entries are ordered by aircraft id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: i64,
    pub aircraft: Vec<SnapshotEntry>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.aircraft.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aircraft.is_empty()
    }
}

fn upper_bound(records: &[TrajectoryRecord], t: i64) -> usize {
    records.partition_point(|r| r.timestamp <= t)
}

/// Latest record per aircraft at or before `t`, dropping aircraft whose
/// newest record is older than `staleness_limit` seconds.
pub fn build_snapshot(records: &[TrajectoryRecord], t: i64, staleness_limit: i64) -> Snapshot {
    let end = upper_bound(records, t);
    let start = records[..end].partition_point(|r| r.timestamp < t - staleness_limit);
    let mut latest: BTreeMap<&str, &TrajectoryRecord> = BTreeMap::new();
    for r in &records[start..end] {
        latest.insert(r.aircraft_id.as_str(), r);
    }
    Snapshot {
        time: t,
        aircraft: latest
            .into_values()
            .map(|r| SnapshotEntry {
                aircraft_id: r.aircraft_id.clone(),
                record: r.clone(),
                age: t - r.timestamp,
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Labels

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowLabel {
    pub query_time: i64,
    pub horizon: i64,
    pub y_ap: u32,
    pub y_ar: u32,
}

/// Count distinct aircraft observed inside AP and AR during `(t, t + horizon]`.
pub fn label_flow(
    records: &[TrajectoryRecord],
    geometry: &AirspaceGeometry,
    t: i64,
    horizon: i64,
) -> Result<FlowLabel, IngestError> {
    if horizon <= 0 {
        return Err(IngestError::InvalidRange(format!("horizon {horizon} must be positive")));
    }
    let lo = upper_bound(records, t);
    let hi = upper_bound(records, t + horizon);
    if lo == hi && hi < records.len() {
        return Err(IngestError::InsufficientCoverage {
            start: t,
            end: t + horizon,
        });
    }
    let mut ap: HashSet<&str> = HashSet::new();
    let mut ar: HashSet<&str> = HashSet::new();
    for r in &records[lo..hi] {
        let p = geometry.to_enu(&r.position);
        if contains(geometry.ap(), &p) {
            ap.insert(&r.aircraft_id);
        }
        if contains(geometry.ar(), &p) {
            ar.insert(&r.aircraft_id);
        }
    }
    Ok(FlowLabel {
        query_time: t,
        horizon,
        y_ap: ap.len() as u32,
        y_ar: ar.len() as u32,
    })
}

/// Precomputed region membership for a record list; answers many
/// [`label_flow`] queries without re-projecting every record.
pub struct FlowLabeler<'a> {
    records: &'a [TrajectoryRecord],
    in_ap: Vec<bool>,
    in_ar: Vec<bool>,
}

impl<'a> FlowLabeler<'a> {
    pub fn new(records: &'a [TrajectoryRecord], geometry: &AirspaceGeometry) -> Self {
        let (in_ap, in_ar) = records
            .iter()
            .map(|r| {
                let p = geometry.to_enu(&r.position);
                (contains(geometry.ap(), &p), contains(geometry.ar(), &p))
            })
            .unzip();
        Self { records, in_ap, in_ar }
    }

    pub fn label(&self, t: i64, horizon: i64) -> Result<FlowLabel, IngestError> {
        if horizon <= 0 {
            return Err(IngestError::InvalidRange(format!("horizon {horizon} must be positive")));
        }
        let lo = upper_bound(self.records, t);
        let hi = upper_bound(self.records, t + horizon);
        if lo == hi && hi < self.records.len() {
            return Err(IngestError::InsufficientCoverage {
                start: t,
                end: t + horizon,
            });
        }
        let mut ap: HashSet<&str> = HashSet::new();
        let mut ar: HashSet<&str> = HashSet::new();
        for i in lo..hi {
            if self.in_ap[i] {
                ap.insert(&self.records[i].aircraft_id);
            }
            if self.in_ar[i] {
                ar.insert(&self.records[i].aircraft_id);
            }
        }
        Ok(FlowLabel {
            query_time: t,
            horizon,
            y_ap: ap.len() as u32,
            y_ar: ar.len() as u32,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub snapshot: Snapshot,
    pub label: FlowLabel,
}

/// Snapshot query times `t_start, t_start + interval, …` with room for a full horizon.
pub fn enumerate_sample_times(t_start: i64, t_end: i64, interval: i64, horizon: i64) -> Result<Vec<i64>, IngestError> {
    if interval <= 0 {
        return Err(IngestError::InvalidRange(format!("interval {interval} must be positive")));
    }
    if t_start >= t_end {
        return Err(IngestError::InvalidRange(format!("start {t_start} not before end {t_end}")));
    }
    let last = t_end - horizon;
    let mut out = Vec::new();
    let mut t = t_start;
    while t <= last {
        out.push(t);
        t += interval;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingConfig {
    pub interval: i64,
    pub horizon: i64,
    pub staleness_limit: i64,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            interval: DEFAULT_SNAPSHOT_INTERVAL_S,
            horizon: DEFAULT_HORIZON_S,
            staleness_limit: DEFAULT_STALENESS_S,
        }
    }
}

/// Snapshot and label every grid time over the span of `records`.
pub fn build_labeled_samples(
    records: &[TrajectoryRecord],
    geometry: &AirspaceGeometry,
    config: &LabelingConfig,
) -> Result<Vec<LabeledSample>, IngestError> {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return Ok(Vec::new());
    };
    if first.timestamp >= last.timestamp {
        return Ok(Vec::new());
    }
    // align the grid to whole intervals
    let start = first.timestamp.div_euclid(config.interval) * config.interval + config.interval;
    if start >= last.timestamp {
        return Ok(Vec::new());
    }
    let times = enumerate_sample_times(start, last.timestamp, config.interval, config.horizon)?;
    let labeler = FlowLabeler::new(records, geometry);
    times
        .into_iter()
        .map(|t| {
            Ok(LabeledSample {
                snapshot: build_snapshot(records, t, config.staleness_limit),
                label: labeler.label(t, config.horizon)?,
            })
        })
        .collect()
}

/// Contiguous train/validation/test partitions by position. Sizes are
/// `⌊r_train·N⌋`, `⌊r_val·N⌋` and the remainder.
pub fn chronological_split<T: Clone>(
    samples: &[T],
    ratios: (f64, f64, f64),
) -> Result<(Vec<T>, Vec<T>, Vec<T>), IngestError> {
    let (a, b, c) = ratios;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(IngestError::InvalidRatios(ratios));
    }
    if samples.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let n = samples.len() as f64;
    let n_train = (a * n + 1e-9).floor() as usize;
    let n_val = (b * n + 1e-9).floor() as usize;
    let n_val = n_val.min(samples.len() - n_train);
    Ok((
        samples[..n_train].to_vec(),
        samples[n_train..n_train + n_val].to_vec(),
        samples[n_train + n_val..].to_vec(),
    ))
}

pub fn write_jsonl<T: Serialize, W: std::io::Write>(items: &[T], mut sink: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut sink, item)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()
}

/// Parse newline-delimited JSON; blank lines are skipped.
pub fn read_jsonl<T: serde::de::DeserializeOwned, R: std::io::BufRead>(source: R) -> Result<Vec<T>, String> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}

/// Decode labeled samples, re-checking the invariants a well-formed file holds.
pub fn parse_labeled_samples(text: &str) -> Result<Vec<LabeledSample>, String> {
    let samples: Vec<LabeledSample> = read_jsonl(text.as_bytes())?;
    for (i, s) in samples.iter().enumerate() {
        if s.snapshot.time != s.label.query_time {
            return Err(format!("sample {i}: snapshot time differs from label query time"));
        }
        if s.label.horizon <= 0 {
            return Err(format!("sample {i}: non-positive horizon"));
        }
        let mut seen = HashSet::new();
        for e in &s.snapshot.aircraft {
            e.record.validate().map_err(|r| format!("sample {i}: {r}"))?;
            if e.record.timestamp > s.snapshot.time || e.age != s.snapshot.time - e.record.timestamp {
                return Err(format!("sample {i}: inconsistent age for {}", e.aircraft_id));
            }
            if e.aircraft_id != e.record.aircraft_id || !seen.insert(e.aircraft_id.as_str()) {
                return Err(format!("sample {i}: duplicate or mismatched aircraft {}", e.aircraft_id));
            }
        }
    }
    Ok(samples)
}
