//! Run configuration sections: parse, then validate.
#![no_main]
use aerosense::features::FeatureConfig;
use aerosense::ingest::LabelingConfig;
use aerosense::model::ModelConfig;
use aerosense::sim::SimConfig;
use aerosense::training::TrainConfig;
use libfuzzer_sys::fuzz_target;
use serde::Deserialize;

#[derive(Deserialize)]
#[allow(dead_code)]
struct Sections {
    seed: Option<u64>,
    horizon_min: Option<i64>,
    sim: Option<SimConfig>,
    labeling: Option<LabelingConfig>,
    features: Option<FeatureConfig>,
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

fuzz_target!(|data: &str| {
    if let Ok(s) = toml::from_str::<Sections>(data) {
        if let Some(c) = s.sim {
            let _ = c.validate();
        }
        if let Some(c) = s.model {
            let _ = c.validate();
        }
        if let Some(c) = s.train {
            let _ = c.validate();
        }
    }
});
