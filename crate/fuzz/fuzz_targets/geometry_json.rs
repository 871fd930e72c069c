#![no_main]
use aerosense::geometry::{signed_distance, AirspaceGeometry, EnuPoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(g) = AirspaceGeometry::from_json(data) {
        let d = signed_distance(&g, &EnuPoint::new(1_000.0, -2_000.0, 500.0));
        assert!(d.is_finite());
        let back = AirspaceGeometry::from_json(&g.to_json()).unwrap();
        assert_eq!(back.fingerprint(), g.fingerprint());
    }
});
