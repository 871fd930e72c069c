//! Trajectory CSV parsing under both error budgets, plus a write/re-read round trip.
#![no_main]
use aerosense::ingest::{parse_trajectory_stream, write_trajectory_csv, ParseOptions};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_trajectory_stream(data, ParseOptions::strict());
    if let Ok(parsed) = parse_trajectory_stream(data, ParseOptions { error_budget: 1.0 }) {
        let mut out = Vec::new();
        write_trajectory_csv(&parsed.records, &mut out).unwrap();
        let again = parse_trajectory_stream(out.as_slice(), ParseOptions::strict()).unwrap();
        assert_eq!(again.records, parsed.records);
    }
});
