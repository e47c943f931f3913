//! Headless guided-tour playback with per-step LOD accounting.

use std::collections::HashSet;
use std::io::Write;

use labtwin_core::camera::{CameraError, Lens};
use labtwin_core::octree::{select_nodes, LodHierarchy, NodeName, SelectError};
use labtwin_core::scene::SceneDefinition;
use labtwin_core::sim::{EngineError, Mode, SessionState, TourPath};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TourError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("time step must be positive and finite, got {0}")]
    Dt(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TourRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub nodes_selected: usize,
    pub points_selected: u64,
    /// Bytes of nodes selected for the first time in this tour.
    pub new_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TourSettings {
    pub dt: f64,
    pub budget: u64,
    pub min_pixels: f64,
    pub lens: Lens,
}

impl Default for TourSettings {
    fn default() -> Self {
        TourSettings { dt: 0.1, budget: 500_000, min_pixels: 0.0, lens: Lens::default() }
    }
}

/// Plays the scene's tour from start to finish, selecting nodes at every
/// step including t = 0.
pub fn run_tour(
    scene: &SceneDefinition,
    hierarchy: &LodHierarchy,
    settings: &TourSettings,
) -> Result<Vec<TourRow>, TourError> {
    if !(settings.dt > 0.0 && settings.dt.is_finite()) {
        return Err(TourError::Dt(settings.dt));
    }
    let path = TourPath::build(scene)?;
    let first = path.pose_at(0.0);
    let mut state = SessionState::new(first).start_tour(&path);
    let byte_size = |n: NodeName| hierarchy.get(n).map_or(0, |n| n.byte_size);
    let mut seen: HashSet<NodeName> = HashSet::new();
    let mut rows = Vec::new();
    loop {
        let view = state.pose.view(settings.lens)?;
        let sel = select_nodes(hierarchy, &view, settings.budget, settings.min_pixels)?;
        let new_bytes = sel.nodes.iter().filter(|&&n| seen.insert(n)).map(|&n| byte_size(n)).sum();
        let p = state.pose.position;
        rows.push(TourRow {
            t: state.clock,
            x: p.x,
            y: p.y,
            z: p.z,
            yaw: state.pose.yaw_deg,
            pitch: state.pose.pitch_deg,
            nodes_selected: sel.nodes.len(),
            points_selected: sel.total_points,
            new_bytes,
        });
        if state.mode != Mode::Tour {
            return Ok(rows);
        }
        state = state.step_tour(settings.dt, &path, scene.tour.speed_mps, false)?.0;
    }
}

pub fn write_report<W: Write>(rows: &[TourRow], out: W) -> Result<(), TourError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
