//! Per-aircraft state vectors and their z-score normalization.
//!
//! A state has five groups, flattened in this fixed order:
//!
//! | group      | dims | contents                                              |
//! |------------|------|-------------------------------------------------------|
//! | location   | 3    | latitude°, longitude°, altitude m                     |
//! | kinematic  | 3    | ground speed m/s, vertical speed m/s, heading°        |
//! | control    | 2    | dialed speed m/s, dialed altitude m                   |
//! | boundary   | 6    | d_AP km, d_AR km, α_AP, α_AR, I_AP, I_AR              |
//! | temporal   | 4    | sin/cos hour-of-day, sin/cos minute-of-hour           |
//!
//! Only location, kinematic and control are z-scored; boundary and temporal
//! values pass through untouched.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    approach_factor, boundary_distance, contains, in_combined_scope, interior_distance, AirspaceGeometry,
    EnuPoint, GeoPoint, RegionKind, DEFAULT_APPROACH_EPS,
};
use crate::ingest::{Snapshot, TrajectoryRecord};

pub const STATE_DIM: usize = 18;
pub const DEFAULT_STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("cannot fit a normalizer without any aircraft state")]
    EmptyTrainingSet,
    #[error("state vector has {found} dims, layout expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateGroup {
    Location,
    Kinematic,
    Control,
    Boundary,
    Temporal,
}

impl StateGroup {
    pub const ALL: [StateGroup; 5] = [
        StateGroup::Location,
        StateGroup::Kinematic,
        StateGroup::Control,
        StateGroup::Boundary,
        StateGroup::Temporal,
    ];

    pub fn is_normalized(self) -> bool {
        matches!(self, StateGroup::Location | StateGroup::Kinematic | StateGroup::Control)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StateGroup::Location => "location",
            StateGroup::Kinematic => "kinematic",
            StateGroup::Control => "control",
            StateGroup::Boundary => "boundary",
            StateGroup::Temporal => "temporal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingEncoding {
    /// Heading in degrees, z-scored like the other kinematic values.
    #[default]
    Raw,
    /// sin/cos of heading in place of the raw angle (one extra dim).
    Circular,
}

/// Which groups enter the model, and how heading is encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub groups: Vec<StateGroup>,
    #[serde(default)]
    pub heading: HeadingEncoding,
}

impl Default for FeatureLayout {
    fn default() -> Self {
        Self::full()
    }
}

impl FeatureLayout {
    pub fn full() -> Self {
        Self {
            groups: StateGroup::ALL.to_vec(),
            heading: HeadingEncoding::Raw,
        }
    }

    /// Location and kinematics only.
    pub fn minimal() -> Self {
        Self {
            groups: vec![StateGroup::Location, StateGroup::Kinematic],
            heading: HeadingEncoding::Raw,
        }
    }

    pub fn without(group: StateGroup) -> Self {
        Self {
            groups: StateGroup::ALL.into_iter().filter(|g| *g != group).collect(),
            heading: HeadingEncoding::Raw,
        }
    }

    fn includes(&self, g: StateGroup) -> bool {
        self.groups.contains(&g)
    }

    /// Included groups in canonical order.
    pub fn ordered_groups(&self) -> Vec<StateGroup> {
        StateGroup::ALL.into_iter().filter(|g| self.includes(*g)).collect()
    }

    pub fn group_dim(&self, g: StateGroup) -> usize {
        match g {
            StateGroup::Location => 3,
            StateGroup::Kinematic => match self.heading {
                HeadingEncoding::Raw => 3,
                HeadingEncoding::Circular => 4,
            },
            StateGroup::Control => 2,
            StateGroup::Boundary => 6,
            StateGroup::Temporal => 4,
        }
    }

    pub fn dim(&self) -> usize {
        self.ordered_groups().into_iter().map(|g| self.group_dim(g)).sum()
    }

    /// Length of the z-scored prefix.
    pub fn normalized_dims(&self) -> usize {
        self.ordered_groups()
            .into_iter()
            .filter(|g| g.is_normalized())
            .map(|g| self.group_dim(g))
            .sum()
    }

    /// Group of each flattened dimension.
    pub fn dim_groups(&self) -> Vec<StateGroup> {
        self.ordered_groups()
            .into_iter()
            .flat_map(|g| std::iter::repeat_n(g, self.group_dim(g)))
            .collect()
    }

    pub fn dim_names(&self) -> Vec<&'static str> {
        let mut names = Vec::with_capacity(self.dim());
        for g in self.ordered_groups() {
            match g {
                StateGroup::Location => names.extend(["latitude", "longitude", "altitude"]),
                StateGroup::Kinematic => match self.heading {
                    HeadingEncoding::Raw => names.extend(["ground_speed", "vertical_speed", "heading"]),
                    HeadingEncoding::Circular => {
                        names.extend(["ground_speed", "vertical_speed", "heading_sin", "heading_cos"])
                    }
                },
                StateGroup::Control => names.extend(["dialed_speed", "dialed_altitude"]),
                StateGroup::Boundary => names.extend(["d_ap", "d_ar", "alpha_ap", "alpha_ar", "i_ap", "i_ar"]),
                StateGroup::Temporal => names.extend(["hour_sin", "hour_cos", "minute_sin", "minute_cos"]),
            }
        }
        names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryDistanceMode {
    /// Distance to the region surface, inside or outside.
    #[default]
    Surface,
    /// Distance to the region as a solid: zero inside.
    Interior,
}

/// Unit of the two boundary distances. They bypass z-scoring, so the unit
/// sets their scale relative to the normalized groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceUnit {
    Meters,
    #[default]
    Kilometers,
}

impl DistanceUnit {
    pub fn meters(self) -> f64 {
        match self {
            DistanceUnit::Meters => 1.0,
            DistanceUnit::Kilometers => 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockPhase {
    /// Hour-of-day component plus fractional minute-of-hour.
    #[default]
    Component,
    /// Fractional hour-of-day plus fractional minute-of-hour.
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Local time offset from UTC, seconds.
    #[serde(default)]
    pub tz_offset: i64,
    #[serde(default)]
    pub layout: FeatureLayout,
    #[serde(default)]
    pub boundary_distance: BoundaryDistanceMode,
    #[serde(default)]
    pub distance_unit: DistanceUnit,
    #[serde(default)]
    pub clock: ClockPhase,
    #[serde(default = "default_eps")]
    pub approach_eps: f64,
}

fn default_eps() -> f64 {
    DEFAULT_APPROACH_EPS
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            tz_offset: 0,
            layout: FeatureLayout::full(),
            boundary_distance: BoundaryDistanceMode::Surface,
            distance_unit: DistanceUnit::Kilometers,
            clock: ClockPhase::Component,
            approach_eps: DEFAULT_APPROACH_EPS,
        }
    }
}

/// ENU velocity from ground speed, compass heading (0 = north, 90 = east)
/// and vertical speed.
pub fn velocity_vector(ground_speed: f64, heading_deg: f64, vertical_speed: f64) -> EnuPoint {
    let h = heading_deg.to_radians();
    EnuPoint::new(ground_speed * h.sin(), ground_speed * h.cos(), vertical_speed)
}

/// Local seconds into the day, in `[0, 86400)`.
pub fn local_seconds_of_day(t: i64, tz_offset: i64) -> i64 {
    (t + tz_offset).rem_euclid(86_400)
}

/// Cyclic hour/minute embedding of a timestamp.
pub fn temporal_state(t: i64, tz_offset: i64, clock: ClockPhase) -> [f64; 4] {
    let sod = local_seconds_of_day(t, tz_offset) as f64;
    let hour = match clock {
        ClockPhase::Component => (sod / 3600.0).floor(),
        ClockPhase::Continuous => sod / 3600.0,
    };
    let minute = (sod % 3600.0) / 60.0;
    let h = 2.0 * PI * hour / 24.0;
    let m = 2.0 * PI * minute / 60.0;
    [h.sin(), h.cos(), m.sin(), m.cos()]
}

/// Raw (unnormalized) state of one aircraft at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub aircraft_id: String,
    pub position: GeoPoint,
    pub location: [f64; 3],
    /// Ground speed, vertical speed, heading in degrees.
    pub kinematic: [f64; 3],
    pub control: [f64; 2],
    pub boundary: [f64; 6],
    pub temporal: [f64; 4],
}

impl AircraftState {
    /// Flattened vector in canonical group order.
    pub fn flatten(&self, layout: &FeatureLayout) -> Vec<f64> {
        let mut v = Vec::with_capacity(layout.dim());
        for g in layout.ordered_groups() {
            match g {
                StateGroup::Location => v.extend_from_slice(&self.location),
                StateGroup::Kinematic => match layout.heading {
                    HeadingEncoding::Raw => v.extend_from_slice(&self.kinematic),
                    HeadingEncoding::Circular => {
                        let h = self.kinematic[2].to_radians();
                        v.extend_from_slice(&[self.kinematic[0], self.kinematic[1], h.sin(), h.cos()]);
                    }
                },
                StateGroup::Control => v.extend_from_slice(&self.control),
                StateGroup::Boundary => v.extend_from_slice(&self.boundary),
                StateGroup::Temporal => v.extend_from_slice(&self.temporal),
            }
        }
        v
    }

    pub fn enu(&self, geometry: &AirspaceGeometry) -> EnuPoint {
        geometry.to_enu(&self.position)
    }
}

pub fn build_state(record: &TrajectoryRecord, t: i64, geometry: &AirspaceGeometry, config: &FeatureConfig) -> AircraftState {
    let p = geometry.to_enu(&record.position);
    let v = velocity_vector(record.ground_speed, record.heading, record.vertical_speed);
    let dist = |kind: RegionKind| {
        let region = geometry.region(kind);
        let d = match config.boundary_distance {
            BoundaryDistanceMode::Surface => boundary_distance(region, &p),
            BoundaryDistanceMode::Interior => interior_distance(region, &p),
        };
        d / config.distance_unit.meters()
    };
    let alpha = |kind: RegionKind| approach_factor(&p, &v, geometry.region(kind), config.approach_eps);
    let inside = |kind: RegionKind| if contains(geometry.region(kind), &p) { 1.0 } else { 0.0 };
    AircraftState {
        aircraft_id: record.aircraft_id.clone(),
        position: record.position,
        location: [record.position.latitude, record.position.longitude, record.position.altitude],
        kinematic: [record.ground_speed, record.vertical_speed, record.heading],
        control: [record.dialed_speed, record.dialed_altitude],
        boundary: [
            dist(RegionKind::Ap),
            dist(RegionKind::Ar),
            alpha(RegionKind::Ap),
            alpha(RegionKind::Ar),
            inside(RegionKind::Ap),
            inside(RegionKind::Ar),
        ],
        temporal: temporal_state(t, config.tz_offset, config.clock),
    }
}

/// The set of aircraft states inside the combined scope at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirspaceSituation {
    pub time: i64,
    pub states: Vec<AircraftState>,
}

impl AirspaceSituation {
    pub fn cardinality(&self) -> usize {
        self.states.len()
    }
}

/// Featurize the snapshot, keeping aircraft inside the combined scope.
/// States come out ordered by aircraft id regardless of snapshot order.
pub fn build_situation(snapshot: &Snapshot, geometry: &AirspaceGeometry, config: &FeatureConfig) -> AirspaceSituation {
    let mut states: Vec<AircraftState> = snapshot
        .aircraft
        .iter()
        .filter(|e| in_combined_scope(geometry, &geometry.to_enu(&e.record.position)))
        .map(|e| build_state(&e.record, snapshot.time, geometry, config))
        .collect();
    states.sort_by(|a, b| a.aircraft_id.cmp(&b.aircraft_id));
    AirspaceSituation {
        time: snapshot.time,
        states,
    }
}

/// Per-dimension z-score statistics over the normalized prefix of a layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub layout: FeatureLayout,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub std_floor: f64,
}

impl Normalizer {
    /// Population mean and standard deviation (Welford accumulation).
    pub fn fit<'a, I>(states: I, layout: &FeatureLayout) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = &'a AircraftState>,
    {
        let k = layout.normalized_dims();
        let mut count = 0u64;
        let mut mean = vec![0.0; k];
        let mut m2 = vec![0.0; k];
        for s in states {
            let v = s.flatten(layout);
            count += 1;
            let n = count as f64;
            for i in 0..k {
                let delta = v[i] - mean[i];
                mean[i] += delta / n;
                m2[i] += delta * (v[i] - mean[i]);
            }
        }
        if count == 0 {
            return Err(FeatureError::EmptyTrainingSet);
        }
        let std = m2
            .iter()
            .map(|s| (s / count as f64).sqrt().max(DEFAULT_STD_FLOOR))
            .collect();
        Ok(Self {
            layout: layout.clone(),
            mean,
            std,
            std_floor: DEFAULT_STD_FLOOR,
        })
    }

    pub fn fit_situations<'a, I>(situations: I, layout: &FeatureLayout) -> Result<Self, FeatureError>
    where
        I: IntoIterator<Item = &'a AirspaceSituation>,
    {
        Self::fit(situations.into_iter().flat_map(|s| s.states.iter()), layout)
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// z-score the normalized prefix of a flattened vector; the rest is copied.
    pub fn apply_vector(&self, raw: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if raw.len() != self.layout.dim() {
            return Err(FeatureError::DimensionMismatch {
                expected: self.layout.dim(),
                found: raw.len(),
            });
        }
        let mut out = raw.to_vec();
        for (i, x) in out.iter_mut().take(self.mean.len()).enumerate() {
            *x = (*x - self.mean[i]) / self.std[i];
        }
        Ok(out)
    }

    pub fn apply(&self, state: &AircraftState) -> Vec<f64> {
        self.apply_vector(&state.flatten(&self.layout))
            .expect("flatten matches the normalizer layout")
    }

    pub fn invert_vector(&self, normalized: &[f64]) -> Vec<f64> {
        let mut out = normalized.to_vec();
        for (i, x) in out.iter_mut().take(self.mean.len()).enumerate() {
            *x = *x * self.std[i] + self.mean[i];
        }
        out
    }
}
