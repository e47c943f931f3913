//! `scene.json` interchange and the bundled demo scene.

use std::fs;
use std::path::{Path, PathBuf};

use labtwin_core::geom::Vec3;
use labtwin_core::scene::{
    structural_errors, ExitPoint, Hotspot, HotspotCategory, SceneDefinition, SceneIssue, TourSpec, Waypoint,
    DEFAULT_TRIGGER_RADIUS, SCENE_VERSION,
};
use thiserror::Error;

use crate::dataset::to_json;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {}", issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid { path: PathBuf, issues: Vec<SceneIssue> },
}

/// Parses and structurally validates a scene.
pub fn parse_scene(bytes: &[u8], path: &Path) -> Result<SceneDefinition, SceneError> {
    let scene: SceneDefinition = serde_json::from_slice(bytes)
        .map_err(|e| SceneError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    let issues = structural_errors(&scene);
    if !issues.is_empty() {
        return Err(SceneError::Invalid { path: path.to_path_buf(), issues });
    }
    Ok(scene)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<SceneDefinition, SceneError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| SceneError::Io { path: path.to_path_buf(), source })?;
    parse_scene(&bytes, path)
}

/// Canonical encoding: field order fixed by the types, shortest round-trip
/// number formatting, so a re-save is byte-identical.
pub fn scene_bytes(scene: &SceneDefinition) -> Vec<u8> {
    to_json(scene)
}

pub fn save_scene(scene: &SceneDefinition, path: impl AsRef<Path>) -> Result<(), SceneError> {
    let path = path.as_ref();
    fs::write(path, scene_bytes(scene)).map_err(|source| SceneError::Io { path: path.to_path_buf(), source })
}

/// Walking height of waypoints and exits in the demo scene.
pub const DEMO_EYE_HEIGHT: f64 = 1.7;
/// Aisle centerlines (x) of the synthetic room.
const AISLES: [f64; 3] = [10.0, 20.0, 30.0];
const STATIONS_Y: [f64; 7] = [6.0, 20.0, 34.0, 48.0, 62.0, 76.0, 90.0];
/// Equipment faces that border an aisle: (face x, direction into the aisle).
const FACES: [(f64, f64); 6] = [(8.0, 1.0), (12.0, -1.0), (17.0, 1.0), (23.0, -1.0), (28.0, 1.0), (32.0, -1.0)];
const INFO_COUNT: usize = 51;

/// Demo scene for the `room-with-aisles` synthetic hall: 22 waypoints
/// snaking through the aisles, 51 equipment info points, safety hotspots
/// and four exits.
pub fn demo_scene() -> SceneDefinition {
    let mut waypoints = vec![Waypoint {
        id: "wp01".into(),
        name: "Entrance".into(),
        position: Vec3::new(AISLES[0], 1.0, DEMO_EYE_HEIGHT),
        yaw_deg: 0.0,
        pitch_deg: 0.0,
        sequence: 0,
    }];
    for (a, &x) in AISLES.iter().enumerate() {
        let northward = a % 2 == 0;
        for k in 0..STATIONS_Y.len() {
            let y = if northward { STATIONS_Y[k] } else { STATIONS_Y[STATIONS_Y.len() - 1 - k] };
            let n = waypoints.len() + 1;
            waypoints.push(Waypoint {
                id: format!("wp{n:02}"),
                name: format!("Aisle {} station {}", a + 1, k + 1),
                position: Vec3::new(x, y, DEMO_EYE_HEIGHT),
                yaw_deg: if northward { 0.0 } else { 180.0 },
                pitch_deg: -5.0,
                sequence: (n - 1) as u32,
            });
        }
    }

    let mut hotspots = Vec::new();
    'rows: for row in 0..8 {
        let y0 = 4.0 + 12.0 * row as f64;
        for &(fx, dir) in &FACES {
            for dy in [2.0, 6.0] {
                if hotspots.len() == INFO_COUNT {
                    break 'rows;
                }
                let n = hotspots.len() + 1;
                hotspots.push(Hotspot {
                    id: format!("info-{n:02}"),
                    category: HotspotCategory::Info,
                    position: Vec3::new(fx + 0.4 * dir, y0 + dy, 1.2),
                    trigger_radius: DEFAULT_TRIGGER_RADIUS,
                    title: format!("Equipment {n:02}"),
                    body: format!("Test rig {n:02}, bay {}. Operating envelope and safety notes.", row + 1),
                    image_ref: Some(if n == 1 { "eq/press500t.jpg".into() } else { format!("eq/info-{n:02}.jpg") }),
                });
            }
        }
    }
    let safety: [(&str, HotspotCategory, [f64; 3], &str); 14] = [
        ("fire-01", HotspotCategory::FireExtinguisher, [0.3, 14.0, 1.0], "CO2 extinguisher"),
        ("fire-02", HotspotCategory::FireExtinguisher, [39.7, 14.0, 1.0], "Powder extinguisher"),
        ("fire-03", HotspotCategory::FireExtinguisher, [0.3, 38.0, 1.0], "CO2 extinguisher"),
        ("fire-04", HotspotCategory::FireExtinguisher, [39.7, 38.0, 1.0], "Powder extinguisher"),
        ("fire-05", HotspotCategory::FireExtinguisher, [0.3, 62.0, 1.0], "CO2 extinguisher"),
        ("fire-06", HotspotCategory::FireExtinguisher, [39.7, 62.0, 1.0], "Powder extinguisher"),
        ("fire-07", HotspotCategory::FireExtinguisher, [0.3, 86.0, 1.0], "CO2 extinguisher"),
        ("fire-08", HotspotCategory::FireExtinguisher, [39.7, 86.0, 1.0], "Powder extinguisher"),
        ("aid-01", HotspotCategory::FirstAid, [0.3, 26.0, 1.4], "First-aid kit"),
        ("aid-02", HotspotCategory::FirstAid, [39.7, 44.0, 1.4], "First-aid kit and eye wash"),
        ("aid-03", HotspotCategory::FirstAid, [0.3, 74.0, 1.4], "First-aid kit"),
        ("notice-01", HotspotCategory::HsNotice, [10.0, 14.0, 2.2], "Hearing protection required"),
        ("notice-02", HotspotCategory::HsNotice, [20.0, 38.0, 2.2], "Crane operating area"),
        ("notice-03", HotspotCategory::HsNotice, [30.0, 62.0, 2.2], "Hydraulic pressure hazard"),
    ];
    for (id, category, p, title) in safety {
        hotspots.push(Hotspot {
            id: id.into(),
            category,
            position: p.into(),
            trigger_radius: DEFAULT_TRIGGER_RADIUS,
            title: title.into(),
            body: format!("{title}. Report use to the lab technician."),
            image_ref: None,
        });
    }

    let exits = [
        ("exit-south", "Main entrance", [20.0, 0.3, DEMO_EYE_HEIGHT]),
        ("exit-north", "North loading door", [20.0, 99.7, DEMO_EYE_HEIGHT]),
        ("exit-west", "West fire door", [0.3, 50.0, DEMO_EYE_HEIGHT]),
        ("exit-east", "East fire door", [39.7, 50.0, DEMO_EYE_HEIGHT]),
    ]
    .map(|(id, name, p)| ExitPoint { id: id.into(), name: name.into(), position: p.into() })
    .to_vec();

    SceneDefinition {
        version: SCENE_VERSION,
        tour: TourSpec { waypoint_ids: waypoints.iter().map(|w| w.id.clone()).collect(), speed_mps: 1.4 },
        waypoints,
        hotspots,
        exits,
    }
}
