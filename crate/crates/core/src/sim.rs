//! Synthetic terminal-area traffic.
//!
//! Flights spawn from a time-inhomogeneous Poisson process (sinusoidal daily
//! cycle plus Gaussian peak-hour boosts) and fly waypoint routes with bounded
//! turn rate, acceleration and vertical speed. Arrivals enter from beyond
//! the combined scope, cross AR and descend through AP to the airport at
//! the AP center; departures appear at the gate, hold, then climb out
//! through AP and AR; overflights cross the area on a chord.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{in_combined_scope, region_center, AirspaceGeometry, EnuPoint, RegionKind};
use crate::ingest::{build_labeled_samples, sort_records, IngestError, LabeledSample, LabelingConfig, TrajectoryRecord};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..self.max)
        } else {
            self.min
        }
    }

    fn valid(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Arrival,
    Departure,
    Overflight,
}

/// Relative shares of the three archetypes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeMix {
    pub arrival: f64,
    pub departure: f64,
    pub overflight: f64,
}

impl Default for ArchetypeMix {
    fn default() -> Self {
        Self {
            arrival: 0.65,
            departure: 0.25,
            overflight: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrivalEnvelope {
    pub cruise_speed: Range,
    pub cruise_altitude: Range,
    pub approach_speed: f64,
    pub landing_speed: f64,
    pub max_descent_rate: f64,
}

impl Default for ArrivalEnvelope {
    fn default() -> Self {
        Self {
            cruise_speed: Range::new(115.0, 140.0),
            cruise_altitude: Range::new(9000.0, 12000.0),
            approach_speed: 105.0,
            landing_speed: 75.0,
            max_descent_rate: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepartureEnvelope {
    /// Seconds at the gate before the takeoff roll.
    pub gate_hold: Range,
    pub climb_speed: f64,
    pub exit_speed: Range,
    pub exit_altitude: Range,
    pub max_climb_rate: f64,
}

impl Default for DepartureEnvelope {
    fn default() -> Self {
        Self {
            gate_hold: Range::new(480.0, 840.0),
            climb_speed: 130.0,
            exit_speed: Range::new(180.0, 220.0),
            exit_altitude: Range::new(9000.0, 12000.0),
            max_climb_rate: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverflightEnvelope {
    pub speed: Range,
    pub altitude: Range,
}

impl Default for OverflightEnvelope {
    fn default() -> Self {
        Self {
            speed: Range::new(200.0, 240.0),
            altitude: Range::new(7000.0, 13000.0),
        }
    }
}

/// Standard deviations of the reporting noise; draws are clamped to ±3σ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub position_m: f64,
    pub altitude_m: f64,
    pub speed_mps: f64,
    pub heading_deg: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            position_m: 30.0,
            altitude_m: 15.0,
            speed_mps: 1.5,
            heading_deg: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// UTC seconds of the first possible spawn.
    pub start_time: i64,
    pub duration: i64,
    pub record_interval: i64,
    /// Flights per hour before the daily modulation.
    pub base_rate: f64,
    /// Relative amplitude of the sinusoidal cycle, in `[0, 1)`.
    pub amplitude: f64,
    /// Local hour where the sinusoid peaks.
    pub cycle_peak_hour: f64,
    /// Local hours of additional Gaussian boosts.
    pub peak_hours: Vec<f64>,
    /// Boost height relative to the base rate.
    pub peak_boost: f64,
    /// Boost standard deviation, hours.
    pub peak_width: f64,
    pub tz_offset: i64,
    pub mix: ArchetypeMix,
    pub arrival: ArrivalEnvelope,
    pub departure: DepartureEnvelope,
    pub overflight: OverflightEnvelope,
    pub noise: NoiseConfig,
    /// Dialed settings equal the true state this many seconds ahead.
    pub anticipation_lag: i64,
    /// Probability that any single record is dropped.
    pub record_dropout: f64,
    /// Degrees per second.
    pub max_turn_rate: f64,
    /// m/s².
    pub max_acceleration: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            // 2024-01-01T00:00:00Z
            start_time: 1_704_067_200,
            duration: 86_400,
            record_interval: 4,
            base_rate: 20.0,
            amplitude: 0.5,
            cycle_peak_hour: 14.0,
            peak_hours: vec![8.5, 18.0],
            peak_boost: 1.0,
            peak_width: 1.25,
            tz_offset: 0,
            mix: ArchetypeMix::default(),
            arrival: ArrivalEnvelope::default(),
            departure: DepartureEnvelope::default(),
            overflight: OverflightEnvelope::default(),
            noise: NoiseConfig::default(),
            anticipation_lag: 120,
            record_dropout: 0.0,
            max_turn_rate: 3.0,
            max_acceleration: 1.5,
            seed: 0,
        }
    }
}

fn circular_hour_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(24.0);
    d.min(24.0 - d)
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.record_interval <= 0 {
            return bad("record_interval must be positive");
        }
        if self.duration <= 0 {
            return bad("duration must be positive");
        }
        if !(self.base_rate >= 0.0 && self.base_rate.is_finite()) {
            return bad("base_rate must be a non-negative number");
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            return bad("amplitude must lie in [0, 1)");
        }
        if !(self.peak_boost >= 0.0 && self.peak_boost.is_finite()) || !(self.peak_width > 0.0) {
            return bad("peak boost must be non-negative and width positive");
        }
        if self.peak_hours.iter().any(|h| !h.is_finite()) || !self.cycle_peak_hour.is_finite() {
            return bad("peak hours must be finite");
        }
        let m = self.mix;
        if [m.arrival, m.departure, m.overflight].iter().any(|x| !(*x >= 0.0 && x.is_finite()))
            || m.arrival + m.departure + m.overflight <= 0.0
        {
            return bad("archetype mix must be non-negative with a positive total");
        }
        let ranges = [
            self.arrival.cruise_speed,
            self.arrival.cruise_altitude,
            self.departure.gate_hold,
            self.departure.exit_speed,
            self.departure.exit_altitude,
            self.overflight.speed,
            self.overflight.altitude,
        ];
        if ranges.iter().any(|r| !r.valid() || r.min < 0.0) {
            return bad("envelope ranges must be finite, ordered and non-negative");
        }
        let speeds = [
            self.arrival.cruise_speed.min,
            self.arrival.approach_speed,
            self.arrival.landing_speed,
            self.departure.climb_speed,
            self.departure.exit_speed.min,
            self.overflight.speed.min,
        ];
        if speeds.iter().any(|s| !(*s > 0.0)) {
            return bad("speeds must be positive");
        }
        if !(self.arrival.max_descent_rate > 0.0 && self.departure.max_climb_rate > 0.0) {
            return bad("vertical rates must be positive");
        }
        let n = self.noise;
        if [n.position_m, n.altitude_m, n.speed_mps, n.heading_deg]
            .iter()
            .any(|x| !(*x >= 0.0 && x.is_finite()))
        {
            return bad("noise levels must be non-negative");
        }
        if self.anticipation_lag < 0 {
            return bad("anticipation_lag must be non-negative");
        }
        if !(0.0..1.0).contains(&self.record_dropout) {
            return bad("record_dropout must lie in [0, 1)");
        }
        if !(self.max_turn_rate > 0.0 && self.max_acceleration > 0.0) {
            return bad("turn rate and acceleration must be positive");
        }
        Ok(())
    }

    /// Relative shape of the daily cycle at a local hour; always ≥ 1 − amplitude.
    pub fn cycle_shape(&self, local_hour: f64) -> f64 {
        let sinusoid = self.amplitude * (TAU * (local_hour - self.cycle_peak_hour) / 24.0).cos();
        let boosts: f64 = self
            .peak_hours
            .iter()
            .map(|p| {
                let z = circular_hour_gap(local_hour, *p) / self.peak_width;
                self.peak_boost * (-0.5 * z * z).exp()
            })
            .sum();
        1.0 + sinusoid + boosts
    }

    /// Spawn intensity in flights per hour at UTC second `t`.
    pub fn intensity(&self, t: f64) -> f64 {
        let local = (t + self.tz_offset as f64).rem_euclid(86_400.0) / 3600.0;
        self.base_rate * self.cycle_shape(local)
    }

    fn max_intensity(&self) -> f64 {
        self.base_rate * (1.0 + self.amplitude + self.peak_boost * self.peak_hours.len() as f64)
    }

    pub fn with_days(mut self, days: u32) -> Self {
        self.duration = i64::from(days) * 86_400;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub east: f64,
    pub north: f64,
    pub up: f64,
    /// Target ground speed on the leg toward this waypoint.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightPlan {
    pub aircraft_id: String,
    pub archetype: Archetype,
    /// UTC seconds of the first record.
    pub spawn_time: i64,
    /// Seconds held stationary at the first waypoint.
    pub hold: f64,
    pub waypoints: Vec<Waypoint>,
}

/// Noise-free state along a flight.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TrueState {
    east: f64,
    north: f64,
    up: f64,
    speed: f64,
    /// Radians clockwise from north.
    heading: f64,
    vertical_speed: f64,
}

/// Airport reference: AP footprint centroid at the AP floor.
fn airport(geometry: &AirspaceGeometry) -> EnuPoint {
    let c = region_center(geometry.region(RegionKind::Ap));
    EnuPoint::new(c.east, c.north, geometry.ap().floor())
}

fn ap_radius(geometry: &AirspaceGeometry, at: EnuPoint) -> f64 {
    geometry
        .ap()
        .footprint()
        .iter()
        .map(|v| (v[0] - at.east).hypot(v[1] - at.north))
        .fold(0.0, f64::max)
}

/// Distance along bearing `theta` from `center` at which the combined scope
/// ends for altitude `up`.
fn scope_edge(geometry: &AirspaceGeometry, center: EnuPoint, theta: f64, up: f64) -> f64 {
    let at = |r: f64| EnuPoint::new(center.east + r * theta.sin(), center.north + r * theta.cos(), up);
    let (mut lo, mut hi) = (0.0, 1_000.0);
    while in_combined_scope(geometry, &at(hi)) {
        hi *= 2.0;
    }
    if !in_combined_scope(geometry, &at(lo)) {
        return lo;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if in_combined_scope(geometry, &at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1.0 {
            break;
        }
    }
    hi
}

fn polar(center: EnuPoint, r: f64, theta: f64, up: f64, speed: f64) -> Waypoint {
    Waypoint {
        east: center.east + r * theta.sin(),
        north: center.north + r * theta.cos(),
        up,
        speed,
    }
}

const SPAWN_OUTSIDE_M: f64 = 2_000.0;

/// Draw spawn times and routes. Deterministic per seed.
pub fn plan_flights(config: &SimConfig, geometry: &AirspaceGeometry) -> Result<Vec<FlightPlan>, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lambda_max = config.max_intensity() / 3600.0;
    let mut plans = Vec::new();
    if lambda_max <= 0.0 {
        return Ok(plans);
    }
    let gaps = Exp::new(lambda_max).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let t0 = config.start_time as f64;
    let end = t0 + config.duration as f64;
    let mix = config.mix;
    let total_mix = mix.arrival + mix.departure + mix.overflight;
    let field = airport(geometry);
    let r_ap = ap_radius(geometry, field);
    let mut t = t0;
    loop {
        t += gaps.sample(&mut rng);
        if t >= end {
            break;
        }
        // thinning
        let accept = rng.random::<f64>() * config.max_intensity() < config.intensity(t);
        if !accept {
            continue;
        }
        let u = rng.random::<f64>() * total_mix;
        let archetype = if u < mix.arrival {
            Archetype::Arrival
        } else if u < mix.arrival + mix.departure {
            Archetype::Departure
        } else {
            Archetype::Overflight
        };
        let k = plans.len();
        let theta = rng.random::<f64>() * TAU;
        let (prefix, hold, waypoints) = match archetype {
            Archetype::Arrival => {
                let env = &config.arrival;
                let alt = env.cruise_altitude.sample(&mut rng);
                let speed = env.cruise_speed.sample(&mut rng);
                let r0 = scope_edge(geometry, field, theta, alt) + SPAWN_OUTSIDE_M;
                let turn = rng.random_range(-0.35..0.35);
                let wps = vec![
                    polar(field, r0, theta, alt, speed),
                    polar(field, 1.2 * r_ap, theta + turn, geometry.ap().ceiling(), env.approach_speed),
                    Waypoint {
                        speed: env.landing_speed,
                        ..polar(field, 0.0, 0.0, field.up, 0.0)
                    },
                ];
                ("ARR", 0.0, wps)
            }
            Archetype::Departure => {
                let env = &config.departure;
                let alt = env.exit_altitude.sample(&mut rng);
                let speed = env.exit_speed.sample(&mut rng);
                let gate_r = rng.random_range(0.0..1_500.0);
                let gate_theta = rng.random::<f64>() * TAU;
                let r_exit = scope_edge(geometry, field, theta, alt) + 10_000.0;
                let turn = rng.random_range(-0.35..0.35);
                let wps = vec![
                    polar(field, gate_r, gate_theta, field.up, 0.0),
                    polar(field, 1.5 * r_ap, theta - turn, 0.5 * (geometry.ap().ceiling() + alt), env.climb_speed),
                    polar(field, r_exit, theta, alt, speed),
                ];
                ("DEP", env.gate_hold.sample(&mut rng), wps)
            }
            Archetype::Overflight => {
                let env = &config.overflight;
                let alt = env.altitude.sample(&mut rng);
                let speed = env.speed.sample(&mut rng);
                let exit_theta = theta + PI + rng.random_range(-1.0..1.0);
                let r0 = scope_edge(geometry, field, theta, alt) + SPAWN_OUTSIDE_M;
                let r1 = scope_edge(geometry, field, exit_theta, alt) + 10_000.0;
                let wps = vec![
                    polar(field, r0, theta, alt, speed),
                    polar(field, r1, exit_theta, alt, speed),
                ];
                ("OVF", 0.0, wps)
            }
        };
        plans.push(FlightPlan {
            aircraft_id: format!("{prefix}{k:06}"),
            archetype,
            spawn_time: t.ceil() as i64,
            hold,
            waypoints,
        });
    }
    Ok(plans)
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(TAU) - PI
}

/// Noise-free states at `record_interval` spacing from the spawn time.
fn fly(plan: &FlightPlan, config: &SimConfig, geometry: &AirspaceGeometry) -> Vec<TrueState> {
    let dt = config.record_interval as f64;
    let max_turn = config.max_turn_rate.to_radians() * dt;
    let (max_down, max_up) = match plan.archetype {
        Archetype::Arrival => (config.arrival.max_descent_rate, config.arrival.max_descent_rate),
        Archetype::Departure => (config.departure.max_climb_rate, config.departure.max_climb_rate),
        Archetype::Overflight => (5.0, 5.0),
    };
    let w0 = plan.waypoints[0];
    let first_target = plan.waypoints.get(1).copied().unwrap_or(w0);
    let mut s = TrueState {
        east: w0.east,
        north: w0.north,
        up: w0.up,
        speed: w0.speed,
        heading: (first_target.east - w0.east).atan2(first_target.north - w0.north),
        vertical_speed: 0.0,
    };
    let mut out = Vec::new();
    let hold_steps = (plan.hold / dt).round() as usize;
    for _ in 0..hold_steps {
        out.push(s);
    }
    let mut idx = 1;
    let mut was_in_scope = false;
    let max_steps = hold_steps + (4.0 * 3600.0 / dt) as usize;
    while idx < plan.waypoints.len() && out.len() < max_steps {
        let wp = plan.waypoints[idx];
        let (dx, dy) = (wp.east - s.east, wp.north - s.north);
        let dist = dx.hypot(dy);
        let turn_radius = s.speed.max(1.0) / config.max_turn_rate.to_radians();
        let capture = (1.5 * s.speed * dt).max(turn_radius + 500.0);
        if dist <= capture {
            idx += 1;
            continue;
        }
        let desired = dx.atan2(dy);
        s.heading = wrap_angle(s.heading + wrap_angle(desired - s.heading).clamp(-max_turn, max_turn));
        let dv = (wp.speed - s.speed).clamp(-config.max_acceleration * dt, config.max_acceleration * dt);
        s.speed = (s.speed + dv).max(0.0);
        let time_to_go = (dist / s.speed.max(1.0)).max(dt);
        s.vertical_speed = ((wp.up - s.up) / time_to_go).clamp(-max_down, max_up);
        s.east += s.speed * dt * s.heading.sin();
        s.north += s.speed * dt * s.heading.cos();
        s.up = (s.up + s.vertical_speed * dt).max(geometry.ap().floor());
        out.push(s);
        let inside = in_combined_scope(geometry, &EnuPoint::new(s.east, s.north, s.up));
        if inside {
            was_in_scope = true;
        } else if was_in_scope && plan.archetype != Archetype::Arrival {
            break;
        }
    }
    out
}

fn clamped<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let n = Normal::new(0.0, sigma).expect("sigma is positive");
    n.sample(rng).clamp(-3.0 * sigma, 3.0 * sigma)
}

/// Generate the record stream, sorted by `(timestamp, aircraft_id)`.
pub fn simulate(config: &SimConfig, geometry: &AirspaceGeometry) -> Result<Vec<TrajectoryRecord>, SimError> {
    let plans = plan_flights(config, geometry)?;
    Ok(records_for_plans(&plans, config, geometry))
}

pub fn records_for_plans(plans: &[FlightPlan], config: &SimConfig, geometry: &AirspaceGeometry) -> Vec<TrajectoryRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f0e_c0de);
    let lag = (config.anticipation_lag as f64 / config.record_interval as f64).round() as usize;
    let field = "HUB".to_string();
    let mut records = Vec::new();
    for plan in plans {
        let states = fly(plan, config, geometry);
        let (origin, destination) = match plan.archetype {
            Archetype::Arrival => (None, Some(field.clone())),
            Archetype::Departure => (Some(field.clone()), None),
            Archetype::Overflight => (None, None),
        };
        for (i, s) in states.iter().enumerate() {
            if config.record_dropout > 0.0 && rng.random::<f64>() < config.record_dropout {
                continue;
            }
            let ahead = states[(i + lag).min(states.len() - 1)];
            let n = &config.noise;
            let enu = EnuPoint::new(
                s.east + clamped(&mut rng, n.position_m),
                s.north + clamped(&mut rng, n.position_m),
                // never report below the field while on or above it
                (s.up + clamped(&mut rng, n.altitude_m)).max(geometry.ap().floor().min(s.up)),
            );
            let speed = (s.speed + if s.speed > 0.0 { clamped(&mut rng, n.speed_mps) } else { 0.0 }).max(0.0);
            let heading = (s.heading.to_degrees() + clamped(&mut rng, n.heading_deg)).rem_euclid(360.0);
            records.push(TrajectoryRecord {
                timestamp: plan.spawn_time + i as i64 * config.record_interval,
                aircraft_id: plan.aircraft_id.clone(),
                position: geometry.to_geo(&enu),
                ground_speed: speed,
                vertical_speed: s.vertical_speed,
                heading: if heading >= 360.0 { 0.0 } else { heading },
                dialed_speed: ahead.speed,
                dialed_altitude: geometry.origin().altitude + ahead.up,
                origin_airport: origin.clone(),
                destination_airport: destination.clone(),
            });
        }
    }
    sort_records(&mut records);
    records
}

/// Provenance written next to generated streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSidecar {
    pub config: SimConfig,
    pub geometry_fingerprint: String,
    pub flights: usize,
    pub records: usize,
}

/// `simulate` followed by snapshotting and labeling on the sample grid.
pub fn simulate_labeled_dataset(
    config: &SimConfig,
    geometry: &AirspaceGeometry,
    labeling: &LabelingConfig,
) -> Result<Vec<LabeledSample>, SimError> {
    let records = simulate(config, geometry)?;
    Ok(build_labeled_samples(&records, geometry, labeling)?)
}
