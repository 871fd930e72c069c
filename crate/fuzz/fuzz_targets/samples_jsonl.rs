#![no_main]
use aerosense::features::{build_situation, FeatureConfig};
use aerosense::geometry::AirspaceGeometry;
use aerosense::ingest::parse_labeled_samples;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(samples) = parse_labeled_samples(data) {
        let g = AirspaceGeometry::default_terminal();
        for s in samples.iter().take(4) {
            let _ = build_situation(&s.snapshot, &g, &FeatureConfig::default());
        }
    }
});
