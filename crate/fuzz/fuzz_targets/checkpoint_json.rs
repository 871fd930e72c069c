//! A checkpoint that parses must rebuild a model without panicking.
#![no_main]
use aerosense::model::ModelCheckpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(ckpt) = ModelCheckpoint::from_json(data) {
        let _ = ckpt.model();
    }
});
