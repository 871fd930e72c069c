//! Brute-force flow counting and random record scenarios.

use std::collections::BTreeSet;

use aerosense::geometry::{AirspaceGeometry, EnuPoint, GeoPoint};
use aerosense::ingest::{label_flow, FlowLabeler, IngestError, TrajectoryRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geometry_oracle::prism_contains;

/// `None` when the window holds no records but later records exist.
pub fn brute_force_labels(records: &[TrajectoryRecord], g: &AirspaceGeometry, t: i64, horizon: i64) -> Option<(u32, u32)> {
    let mut ap = BTreeSet::new();
    let mut ar = BTreeSet::new();
    let mut any_in_window = false;
    let mut any_after = false;
    let ids: BTreeSet<&str> = records.iter().map(|r| r.aircraft_id.as_str()).collect();
    for id in ids {
        for r in records {
            if r.aircraft_id != id {
                continue;
            }
            if r.timestamp > t + horizon {
                any_after = true;
                continue;
            }
            if r.timestamp <= t {
                continue;
            }
            any_in_window = true;
            let p = g.to_enu(&r.position);
            if prism_contains(g.ap(), &p) {
                ap.insert(id);
            }
            if prism_contains(g.ar(), &p) {
                ar.insert(id);
            }
        }
    }
    if !any_in_window && any_after {
        return None;
    }
    Some((ap.len() as u32, ar.len() as u32))
}

/// A record at an ENU point of the geometry.
pub fn record_at(g: &AirspaceGeometry, id: &str, t: i64, p: EnuPoint, speed: f64, heading: f64) -> TrajectoryRecord {
    let geo: GeoPoint = g.to_geo(&p);
    TrajectoryRecord {
        timestamp: t,
        aircraft_id: id.to_string(),
        position: geo,
        ground_speed: speed,
        vertical_speed: 0.0,
        heading,
        dialed_speed: speed,
        dialed_altitude: geo.altitude,
        origin_airport: None,
        destination_airport: None,
    }
}

/// Random walk tracks for `aircraft` aircraft over one hour around the
/// default terminal, biased so many points fall inside AP or AR.
pub fn random_scenario(seed: u64, aircraft: usize, max_records: usize) -> Vec<TrajectoryRecord> {
    let g = AirspaceGeometry::default_terminal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = 1_700_000_000;
    let mut out = Vec::new();
    let per = (max_records / aircraft.max(1)).max(1);
    for a in 0..aircraft {
        let id = format!("T{a:03}");
        let r: f64 = rng.random_range(0.0..180_000.0);
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mut p = EnuPoint::new(r * th.cos(), r * th.sin(), rng.random_range(0.0..14_500.0));
        let mut t = t0 + rng.random_range(0..1800);
        let n = rng.random_range(1..=per);
        for _ in 0..n {
            out.push(record_at(&g, &id, t, p, 150.0, rng.random_range(0.0..360.0)));
            t += rng.random_range(1..90);
            p = EnuPoint::new(
                p.east + rng.random_range(-8_000.0..8_000.0),
                p.north + rng.random_range(-8_000.0..8_000.0),
                (p.up + rng.random_range(-800.0..800.0)).clamp(0.0, 15_000.0),
            );
        }
    }
    out.sort_by(|x, y| (x.timestamp, &x.aircraft_id).cmp(&(y.timestamp, &y.aircraft_id)));
    out
}

pub fn query_times(records: &[TrajectoryRecord], rng: &mut ChaCha8Rng, count: usize) -> Vec<i64> {
    let lo = records.first().unwrap().timestamp - 100;
    let hi = records.last().unwrap().timestamp + 100;
    let mut ts: Vec<i64> = (0..count).map(|_| rng.random_range(lo..hi)).collect();
    // record timestamps probe the half-open window edges
    ts.extend(records.iter().step_by(17).map(|r| r.timestamp));
    ts.extend(records.iter().step_by(23).map(|r| r.timestamp - 900));
    ts
}

/// Compare `label_flow` and `FlowLabeler` with the brute-force counter on
/// `scenarios` random scenarios. Returns `(checked, mismatches)`.
pub fn label_mismatches(scenarios: u64) -> (usize, usize) {
    let g = AirspaceGeometry::default_terminal();
    let mut mismatches = 0;
    let mut checked = 0;
    for seed in 0..scenarios {
        let records = random_scenario(seed, 12, 300);
        let labeler = FlowLabeler::new(&records, &g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        for t in query_times(&records, &mut rng, 20) {
            for horizon in [60, 900] {
                let expect = brute_force_labels(&records, &g, t, horizon);
                for got in [label_flow(&records, &g, t, horizon), labeler.label(t, horizon)] {
                    let ok = match (&got, expect) {
                        (Ok(l), Some((ap, ar))) => l.y_ap == ap && l.y_ar == ar && l.query_time == t,
                        (Err(IngestError::InsufficientCoverage { .. }), None) => true,
                        _ => false,
                    };
                    mismatches += usize::from(!ok);
                    checked += 1;
                }
            }
        }
    }
    (checked, mismatches)
}
