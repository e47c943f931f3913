//! Interaction engine: walking, guided tours, hotspots, evacuation guidance
//! and measurement tools. Everything here is a pure function of its inputs.

use alloc::string::String;
use thiserror::Error;

mod kinematics;
mod measure;
mod pick;
mod session;
mod tour;

pub use kinematics::{advance_pose, CameraPose, FreeInput, KinematicsConfig};
pub use measure::{measure_area, measure_distance, query_coordinate, MeasureError, COORDINATE_PRECISION};
pub use pick::{pick_hotspot, ray_sphere, Ray};
pub use session::{
    exit_distance_key, guidance_to, nearest_exit, CategoryProgress, EngineEvent, GuidanceState, GuidanceUpdate, Mode,
    SessionState, ARRIVAL_THRESHOLD_M, EXIT_TIE_RESOLUTION_M,
};
pub use tour::TourPath;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("operation needs {expected} mode, session is in {actual} mode")]
    WrongMode { expected: &'static str, actual: &'static str },
    #[error("time step must be positive and finite, got {0}")]
    InvalidDt(f64),
    #[error("unknown waypoint {0:?}")]
    UnknownWaypoint(String),
    #[error("unknown hotspot {0:?}")]
    UnknownHotspot(String),
    #[error("unknown exit {0:?}")]
    UnknownExit(String),
    #[error("scene has no exits")]
    NoExits,
    #[error("a tour needs at least 2 waypoints, got {0}")]
    TourTooShort(usize),
    #[error("tour references a missing waypoint")]
    UnresolvedTour,
    #[error("non-finite coordinate")]
    NonFinite,
}
