mod common;

use aerosense::features::{
    build_situation, build_state, temporal_state, velocity_vector, AircraftState, ClockPhase, DistanceUnit,
    FeatureConfig, FeatureLayout, Normalizer, StateGroup,
};
use aerosense::geometry::{AirspaceGeometry, EnuPoint};
use aerosense::ingest::{Snapshot, SnapshotEntry, TrajectoryRecord};
use common::geometry_oracle::oracle_signed_distance;
use common::label_oracle::record_at;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MIDNIGHT: i64 = 1_704_067_200;

fn random_record(g: &AirspaceGeometry, rng: &mut ChaCha8Rng, id: usize) -> TrajectoryRecord {
    let p = EnuPoint::new(
        rng.random_range(-260_000.0..260_000.0),
        rng.random_range(-260_000.0..260_000.0),
        rng.random_range(0.0..13_000.0),
    );
    let mut r = record_at(g, &format!("R{id:05}"), MIDNIGHT, p, rng.random_range(60.0..260.0), rng.random_range(0.0..360.0));
    r.vertical_speed = rng.random_range(-20.0..20.0);
    r.dialed_speed = r.ground_speed + rng.random_range(-30.0..30.0);
    r.dialed_altitude = (r.position.altitude + rng.random_range(-2_000.0..2_000.0)).max(0.0);
    r
}

fn random_states(count: usize, seed: u64) -> Vec<AircraftState> {
    let g = AirspaceGeometry::default_terminal();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let r = random_record(&g, &mut rng, i);
            build_state(&r, MIDNIGHT + rng.random_range(0..86_400), &g, &FeatureConfig::default())
        })
        .collect()
}

#[test]
fn normalizer_matches_two_pass_statistics() {
    let states = random_states(10_000, 3);
    let layout = FeatureLayout::full();
    let norm = Normalizer::fit(&states, &layout).unwrap();
    let rows: Vec<Vec<f64>> = states.iter().map(|s| s.flatten(&layout)).collect();
    let n = rows.len() as f64;
    assert_eq!(norm.mean.len(), 8);
    for d in 0..8 {
        let mean = rows.iter().map(|r| r[d]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
        assert!((norm.mean[d] - mean).abs() <= 1e-9 * mean.abs().max(1.0), "dim {d}");
        assert!((norm.std[d] - var.sqrt()).abs() <= 1e-9 * var.sqrt().max(1.0), "dim {d}");
    }
    let normalized: Vec<Vec<f64>> = states.iter().map(|s| norm.apply(s)).collect();
    for d in 0..8 {
        let mean = normalized.iter().map(|r| r[d]).sum::<f64>() / n;
        let var = normalized.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6 && (var.sqrt() - 1.0).abs() < 1e-6, "dim {d}");
    }
    for (raw, out) in rows.iter().zip(&normalized) {
        assert_eq!(out.len(), 18);
        for d in 8..18 {
            assert_eq!(raw[d].to_bits(), out[d].to_bits());
        }
        let back = norm.invert_vector(out);
        for d in 0..8 {
            assert!((back[d] - raw[d]).abs() <= 1e-9 * raw[d].abs().max(1.0));
        }
    }
}

#[test]
fn degenerate_and_two_point_statistics() {
    let states = random_states(2, 9);
    let layout = FeatureLayout::full();
    let single = Normalizer::fit(&states[..1], &layout).unwrap();
    assert!(single.std.iter().all(|s| *s == single.std_floor));
    assert!(single.apply(&states[0])[..8].iter().all(|x| *x == 0.0));

    let mut a = states[0].clone();
    let mut b = states[0].clone();
    a.kinematic[0] = 0.0;
    b.kinematic[0] = 2.0;
    let two = Normalizer::fit([&a, &b], &layout).unwrap();
    assert_eq!((two.mean[3], two.std[3]), (1.0, 1.0));
    assert_eq!((two.apply(&a)[3], two.apply(&b)[3]), (-1.0, 1.0));
    assert!(Normalizer::fit(std::iter::empty(), &layout).is_err());
}

#[test]
fn hand_computed_state() {
    let g = AirspaceGeometry::default_terminal();
    // 10 km east of the field at 3 km, flying west
    let mut r = record_at(&g, "HAND1", MIDNIGHT, EnuPoint::new(10_000.0, 0.0, 3_000.0), 100.0, 270.0);
    r.vertical_speed = 0.0;
    r.dialed_speed = 90.0;
    r.dialed_altitude = 2_500.0;
    let t = MIDNIGHT + 6 * 3600 + 15 * 60;
    let s = build_state(&r, t, &g, &FeatureConfig::default());
    assert_eq!(s.location, [r.position.latitude, r.position.longitude, r.position.altitude]);
    assert_eq!(s.kinematic, [100.0, 0.0, 270.0]);
    assert_eq!(s.control, [90.0, 2_500.0]);
    // AP: octagon with 36.96 km apothem over 0..6000 m; the floor and ceiling are nearest
    assert!((s.boundary[0] - 3.0).abs() < 1e-6);
    // AR floor sits at 6100 m straight above
    assert!((s.boundary[1] - 3.1).abs() < 1e-6);
    // AP center is the field at mid-band, dead ahead
    assert!((s.boundary[2] - 1.0).abs() < 1e-6);
    assert!(s.boundary[3] > 0.0 && s.boundary[3] < 1.0);
    assert_eq!([s.boundary[4], s.boundary[5]], [1.0, 0.0]);
    for (got, want) in s.temporal.iter().zip([1.0, 0.0, 1.0, 0.0]) {
        assert!((got - want).abs() < 1e-9);
    }
    let meters = FeatureConfig { distance_unit: DistanceUnit::Meters, ..FeatureConfig::default() };
    let m = build_state(&r, t, &g, &meters);
    assert!((m.boundary[0] - 3_000.0).abs() < 1e-3 && (m.boundary[1] - 3_100.0).abs() < 1e-3);
}

#[test]
fn temporal_quarter_points() {
    let component = [(0, [0.0, 1.0, 0.0, 1.0]), (6 * 3600 + 900, [1.0, 0.0, 1.0, 0.0]), (12 * 3600 + 1800, [0.0, -1.0, 0.0, -1.0])];
    // the continuous hour includes the minutes, so quarter points fall on whole hours
    let continuous = [(0, [0.0, 1.0, 0.0, 1.0]), (6 * 3600, [1.0, 0.0, 0.0, 1.0]), (18 * 3600, [-1.0, 0.0, 0.0, 1.0])];
    for (clock, cases) in [(ClockPhase::Component, component), (ClockPhase::Continuous, continuous)] {
        for (sod, want) in cases {
            let got = temporal_state(MIDNIGHT + sod, 0, clock);
            for (a, b) in got.iter().zip(want) {
                assert!((a - b).abs() < 1e-9, "{clock:?} {sod}: {got:?}");
            }
        }
    }
    // local time shifts the phase
    assert_eq!(temporal_state(MIDNIGHT, 6 * 3600 + 900, ClockPhase::Continuous), temporal_state(MIDNIGHT + 6 * 3600 + 900, 0, ClockPhase::Continuous));
}

#[test]
fn velocity_decomposition() {
    let v = velocity_vector(100.0, 90.0, 0.0);
    assert!((v.east - 100.0).abs() < 1e-12 && v.north.abs() < 1e-12);
    let v = velocity_vector(100.0, 0.0, -5.0);
    assert!(v.east.abs() < 1e-12 && (v.north - 100.0).abs() < 1e-12 && v.up == -5.0);
    assert_eq!(velocity_vector(0.0, 123.0, 0.0), EnuPoint::new(0.0, 0.0, 0.0));
}

fn snapshot(records: Vec<TrajectoryRecord>, t: i64) -> Snapshot {
    Snapshot {
        time: t,
        aircraft: records
            .into_iter()
            .map(|r| SnapshotEntry { aircraft_id: r.aircraft_id.clone(), age: t - r.timestamp, record: r })
            .collect(),
    }
}

#[test]
fn situation_membership_matches_filter_oracle() {
    let g = AirspaceGeometry::default_terminal();
    let config = FeatureConfig::default();
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records: Vec<TrajectoryRecord> = (0..60).map(|i| random_record(&g, &mut rng, i)).collect();
        let expect: Vec<String> = records
            .iter()
            .filter(|r| oracle_signed_distance(&g, &g.to_enu(&r.position)) <= g.scope_margin())
            .map(|r| r.aircraft_id.clone())
            .collect();
        let sit = build_situation(&snapshot(records.clone(), MIDNIGHT), &g, &config);
        let got: Vec<String> = sit.states.iter().map(|s| s.aircraft_id.clone()).collect();
        assert_eq!(got, expect);
        let mut shuffled = records;
        shuffled.shuffle(&mut rng);
        assert_eq!(build_situation(&snapshot(shuffled, MIDNIGHT), &g, &config), sit);
    }
    assert_eq!(build_situation(&snapshot(Vec::new(), MIDNIGHT), &g, &config).cardinality(), 0);
}

#[test]
fn layout_order_is_fixed() {
    let names = FeatureLayout::full().dim_names();
    assert_eq!(
        names,
        [
            "latitude", "longitude", "altitude", "ground_speed", "vertical_speed", "heading", "dialed_speed",
            "dialed_altitude", "d_ap", "d_ar", "alpha_ap", "alpha_ar", "i_ap", "i_ar", "hour_sin", "hour_cos",
            "minute_sin", "minute_cos",
        ]
    );
    assert_eq!(FeatureLayout::without(StateGroup::Temporal).dim(), 14);
}

proptest! {
    #[test]
    fn state_invariants(seed in 0u64..10_000, t in 0i64..4_000_000_000, tz in -50_400i64..50_400) {
        let g = AirspaceGeometry::default_terminal();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_record(&g, &mut rng, 0);
        for clock in [ClockPhase::Component, ClockPhase::Continuous] {
            let config = FeatureConfig { tz_offset: tz, clock, ..FeatureConfig::default() };
            let s = build_state(&r, t, &g, &config);
            prop_assert_eq!(s.flatten(&FeatureLayout::full()).len(), 18);
            prop_assert!((-1.0..=1.0).contains(&s.boundary[2]) && (-1.0..=1.0).contains(&s.boundary[3]));
            prop_assert!(s.boundary[4] == 0.0 || s.boundary[4] == 1.0);
            prop_assert!(s.boundary[5] == 0.0 || s.boundary[5] == 1.0);
            prop_assert!((s.temporal[0].powi(2) + s.temporal[1].powi(2) - 1.0).abs() < 1e-9);
            prop_assert!((s.temporal[2].powi(2) + s.temporal[3].powi(2) - 1.0).abs() < 1e-9);
        }
    }
}
