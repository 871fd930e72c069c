pub mod autodiff;
pub mod features;
pub mod geometry;
pub mod ingest;
pub mod model;
pub mod sim;
pub mod training;
