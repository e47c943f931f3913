//! Authored interaction layer: waypoints, the guided tour, hotspots and exits.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::geom::{Aabb, Vec3};

pub const SCENE_VERSION: u32 = 1;
pub const DEFAULT_TRIGGER_RADIUS: f64 = 0.75;
pub const MAX_PITCH_DEG: f64 = 89.0;
/// Tour legs longer than this draw a validation warning.
pub const LONG_TOUR_LEG_M: f64 = 50.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Waypoint {
    pub id: String,
    pub name: String,
    pub position: Vec3,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    pub sequence: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum HotspotCategory {
    Info,
    FireExtinguisher,
    FirstAid,
    HsNotice,
}

impl HotspotCategory {
    pub const ALL: [HotspotCategory; 4] =
        [HotspotCategory::Info, HotspotCategory::FireExtinguisher, HotspotCategory::FirstAid, HotspotCategory::HsNotice];

    pub fn as_str(self) -> &'static str {
        match self {
            HotspotCategory::Info => "info",
            HotspotCategory::FireExtinguisher => "fire_extinguisher",
            HotspotCategory::FirstAid => "first_aid",
            HotspotCategory::HsNotice => "hs_notice",
        }
    }
}

impl fmt::Display for HotspotCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(feature = "serde")]
fn default_trigger_radius() -> f64 {
    DEFAULT_TRIGGER_RADIUS
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Hotspot {
    pub id: String,
    pub category: HotspotCategory,
    pub position: Vec3,
    #[cfg_attr(feature = "serde", serde(default = "default_trigger_radius"))]
    pub trigger_radius: f64,
    pub title: String,
    pub body: String,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub image_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExitPoint {
    pub id: String,
    pub name: String,
    pub position: Vec3,
}

/// Ordered tour. An empty id list means the scene has no tour.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TourSpec {
    pub waypoint_ids: Vec<String>,
    pub speed_mps: f64,
}

impl Default for TourSpec {
    fn default() -> Self {
        TourSpec { waypoint_ids: Vec::new(), speed_mps: 1.4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneDefinition {
    pub version: u32,
    pub waypoints: Vec<Waypoint>,
    pub tour: TourSpec,
    pub hotspots: Vec<Hotspot>,
    pub exits: Vec<ExitPoint>,
}

impl SceneDefinition {
    pub fn waypoint(&self, id: &str) -> Option<&Waypoint> {
        self.waypoints.iter().find(|w| w.id == id)
    }

    pub fn hotspot(&self, id: &str) -> Option<&Hotspot> {
        self.hotspots.iter().find(|h| h.id == id)
    }

    pub fn exit(&self, id: &str) -> Option<&ExitPoint> {
        self.exits.iter().find(|e| e.id == id)
    }

    pub fn category_total(&self, category: HotspotCategory) -> usize {
        self.hotspots.iter().filter(|h| h.category == category).count()
    }

    /// Tour waypoints in tour order; `None` if any id is dangling.
    pub fn tour_waypoints(&self) -> Option<Vec<&Waypoint>> {
        self.tour.waypoint_ids.iter().map(|id| self.waypoint(id)).collect()
    }
}

/// One finding, naming the offending id or field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneIssue {
    pub subject: String,
    pub message: String,
}

impl SceneIssue {
    fn new(subject: impl Into<String>, message: impl Into<String>) -> Self {
        SceneIssue { subject: subject.into(), message: message.into() }
    }
}

impl fmt::Display for SceneIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub errors: Vec<SceneIssue>,
    pub warnings: Vec<SceneIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

fn check_position(subject: &str, p: Vec3, errors: &mut Vec<SceneIssue>) {
    if !p.is_finite() {
        errors.push(SceneIssue::new(subject, "position has a non-finite coordinate"));
    }
}

/// Invariant violations only. An empty result means the scene is usable.
pub fn structural_errors(scene: &SceneDefinition) -> Vec<SceneIssue> {
    let mut errors = Vec::new();
    if scene.version != SCENE_VERSION {
        errors.push(SceneIssue::new("version", format!("unsupported scene version {}", scene.version)));
    }

    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let ids = scene
        .waypoints
        .iter()
        .map(|w| w.id.as_str())
        .chain(scene.hotspots.iter().map(|h| h.id.as_str()))
        .chain(scene.exits.iter().map(|e| e.id.as_str()));
    for id in ids {
        if id.is_empty() {
            errors.push(SceneIssue::new("id", "empty id"));
            continue;
        }
        let n = seen.entry(id).or_insert(0);
        *n += 1;
        if *n == 2 {
            errors.push(SceneIssue::new(id, format!("duplicate id \"{id}\"")));
        }
    }

    for w in &scene.waypoints {
        check_position(&w.id, w.position, &mut errors);
        if !w.yaw_deg.is_finite() {
            errors.push(SceneIssue::new(&w.id, "yaw_deg is not finite"));
        }
        if !(w.pitch_deg >= -MAX_PITCH_DEG && w.pitch_deg <= MAX_PITCH_DEG) {
            errors.push(SceneIssue::new(&w.id, format!("pitch_deg {} outside [-89, 89]", w.pitch_deg)));
        }
    }
    for h in &scene.hotspots {
        check_position(&h.id, h.position, &mut errors);
        if !(h.trigger_radius > 0.0 && h.trigger_radius.is_finite()) {
            errors.push(SceneIssue::new(&h.id, format!("trigger_radius {} must be positive", h.trigger_radius)));
        }
    }
    for e in &scene.exits {
        check_position(&e.id, e.position, &mut errors);
    }

    let tour = &scene.tour;
    if !(tour.speed_mps > 0.0 && tour.speed_mps.is_finite()) {
        errors.push(SceneIssue::new("tour.speed_mps", format!("speed {} must be positive", tour.speed_mps)));
    }
    let mut prev: Option<(&str, u32)> = None;
    let mut sequences: BTreeMap<u32, &str> = BTreeMap::new();
    for id in &tour.waypoint_ids {
        let Some(w) = scene.waypoint(id) else {
            errors.push(SceneIssue::new(id.as_str(), format!("tour references unknown waypoint \"{id}\"")));
            continue;
        };
        if let Some(other) = sequences.insert(w.sequence, &w.id) {
            errors.push(SceneIssue::new(
                id.as_str(),
                format!("sequence {} already used by tour member \"{other}\"", w.sequence),
            ));
        } else if let Some((pid, pseq)) = prev {
            if w.sequence < pseq {
                errors.push(SceneIssue::new(
                    id.as_str(),
                    format!("tour order disagrees with sequence: \"{id}\" ({}) follows \"{pid}\" ({pseq})", w.sequence),
                ));
            }
        }
        prev = Some((&w.id, w.sequence));
    }
    errors
}

/// Full lint: structural errors plus authoring warnings.
///
/// Warnings cover positions outside `dataset_bounds` (when given), overlapping
/// hotspot trigger spheres, tour legs over 50 m, a one-stop tour and a scene
/// without exits.
pub fn validate_scene(scene: &SceneDefinition, dataset_bounds: Option<&Aabb>) -> ValidationReport {
    let errors = structural_errors(scene);
    let mut warnings = Vec::new();

    if let Some(b) = dataset_bounds {
        let positions = scene
            .waypoints
            .iter()
            .map(|w| (&w.id, w.position))
            .chain(scene.hotspots.iter().map(|h| (&h.id, h.position)))
            .chain(scene.exits.iter().map(|e| (&e.id, e.position)));
        for (id, p) in positions {
            if p.is_finite() && !b.contains(p) {
                warnings.push(SceneIssue::new(id.as_str(), "position lies outside the dataset bounds"));
            }
        }
    }

    for (i, a) in scene.hotspots.iter().enumerate() {
        for b in &scene.hotspots[i + 1..] {
            if a.position.distance(b.position) < a.trigger_radius + b.trigger_radius {
                warnings.push(SceneIssue::new(
                    a.id.as_str(),
                    format!("trigger sphere overlaps hotspot \"{}\"", b.id),
                ));
            }
        }
    }

    let stops: Vec<&Waypoint> = scene.tour.waypoint_ids.iter().filter_map(|id| scene.waypoint(id)).collect();
    for pair in stops.windows(2) {
        let len = pair[0].position.distance(pair[1].position);
        if len > LONG_TOUR_LEG_M {
            warnings.push(SceneIssue::new(
                pair[1].id.as_str(),
                format!("tour leg from \"{}\" is {len:.1} m long", pair[0].id),
            ));
        }
    }
    if scene.tour.waypoint_ids.len() == 1 {
        warnings.push(SceneIssue::new("tour", "a tour needs at least 2 waypoints to run"));
    }
    if scene.exits.is_empty() {
        warnings.push(SceneIssue::new("exits", "no exits defined; escape mode is unavailable"));
    }

    ValidationReport { errors, warnings }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}
