//! Independent oracles shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

pub mod geometry_oracle;
pub mod gradcheck;
pub mod label_oracle;
pub mod reference_model;
pub mod set_invariants;
