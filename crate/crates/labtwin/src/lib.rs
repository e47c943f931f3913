//! Data pipeline, replay and HTTP service for point-cloud virtual laboratories.

pub mod cli;
pub mod cloud_io;
pub mod dataset;
pub mod replay;
pub mod scene_io;
pub mod server;
pub mod synth;
pub mod tour_report;
