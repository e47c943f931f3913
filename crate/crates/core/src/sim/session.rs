use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use super::kinematics::{advance_pose, CameraPose, FreeInput, KinematicsConfig};
use super::tour::TourPath;
use super::EngineError;
use crate::math::{atan2, normalize_deg, round, to_degrees, wrap_signed_deg};
use crate::scene::{ExitPoint, HotspotCategory, SceneDefinition};

/// Escape episodes end once the walker is this close to the target exit.
pub const ARRIVAL_THRESHOLD_M: f64 = 1.0;
/// Exit distances are compared at this resolution; closer calls are ties.
pub const EXIT_TIE_RESOLUTION_M: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Free,
    Tour,
    Escape,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Free => "free",
            Mode::Tour => "tour",
            Mode::Escape => "escape",
        }
    }

    fn tag(self) -> u8 {
        match self {
            Mode::Free => 0,
            Mode::Tour => 1,
            Mode::Escape => 2,
        }
    }
}

/// Evacuation HUD payload.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceState {
    pub exit_id: String,
    /// Compass direction to the exit, `[0, 360)`.
    pub bearing_deg: f64,
    /// Bearing relative to the camera yaw, `(-180, 180]`.
    pub relative_bearing_deg: f64,
    pub distance_m: f64,
    pub arrived: bool,
}

/// Viewed / total counts for one hotspot category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CategoryProgress {
    pub category: HotspotCategory,
    pub viewed: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineEvent {
    EscapeCompleted { exit_id: String, clock: f64 },
    TourFinished { clock: f64 },
}

/// Result of a guidance refresh.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceUpdate {
    pub state: SessionState,
    pub guidance: GuidanceState,
    pub event: Option<EngineEvent>,
}

/// Live interaction state of one session. Every transition returns a new
/// value; none mutates in place, so a replayed input log reproduces the run.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub pose: CameraPose,
    pub mode: Mode,
    pub tour_progress: f64,
    pub viewed: BTreeSet<String>,
    pub guidance: Option<GuidanceState>,
    pub clock: f64,
}

fn check_dt(dt: f64) -> Result<(), EngineError> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(EngineError::InvalidDt(dt))
    }
}

/// Guidance from `pose` toward `exit`.
pub fn guidance_to(pose: &CameraPose, exit: &ExitPoint) -> GuidanceState {
    let d = exit.position - pose.position;
    let bearing = normalize_deg(to_degrees(atan2(d.x, d.y)));
    let distance = d.norm();
    GuidanceState {
        exit_id: exit.id.clone(),
        bearing_deg: bearing,
        relative_bearing_deg: wrap_signed_deg(bearing - pose.yaw_deg),
        distance_m: distance,
        arrived: distance <= ARRIVAL_THRESHOLD_M,
    }
}

/// Distance to an exit in whole multiples of [`EXIT_TIE_RESOLUTION_M`].
pub fn exit_distance_key(pose: &CameraPose, exit: &ExitPoint) -> f64 {
    round(exit.position.distance(pose.position) / EXIT_TIE_RESOLUTION_M)
}

/// Exit nearest to `pose` by 3D distance at millimeter resolution; ties go
/// to the smaller id.
pub fn nearest_exit<'s>(scene: &'s SceneDefinition, pose: &CameraPose) -> Option<&'s ExitPoint> {
    scene.exits.iter().min_by(|a, b| {
        exit_distance_key(pose, a).total_cmp(&exit_distance_key(pose, b)).then_with(|| a.id.cmp(&b.id))
    })
}

impl SessionState {
    pub fn new(pose: CameraPose) -> Self {
        SessionState {
            pose: CameraPose::new(pose.position, pose.yaw_deg, pose.pitch_deg),
            mode: Mode::Free,
            tour_progress: 0.0,
            viewed: BTreeSet::new(),
            guidance: None,
            clock: 0.0,
        }
    }

    /// Walking step. Allowed in free and escape mode; escape guidance is not
    /// refreshed here (see [`SessionState::update_guidance`]).
    pub fn step_free(&self, input: &FreeInput, dt: f64, cfg: &KinematicsConfig) -> Result<SessionState, EngineError> {
        check_dt(dt)?;
        if self.mode == Mode::Tour {
            return Err(EngineError::WrongMode { expected: "free", actual: self.mode.as_str() });
        }
        Ok(SessionState { pose: advance_pose(&self.pose, input, dt, cfg), clock: self.clock + dt, ..self.clone() })
    }

    /// Jumps to a waypoint and returns to free mode.
    pub fn teleport(&self, scene: &SceneDefinition, waypoint_id: &str) -> Result<SessionState, EngineError> {
        let w = scene.waypoint(waypoint_id).ok_or_else(|| EngineError::UnknownWaypoint(waypoint_id.into()))?;
        Ok(SessionState {
            pose: CameraPose::new(w.position, w.yaw_deg, w.pitch_deg),
            mode: Mode::Free,
            tour_progress: 0.0,
            guidance: None,
            ..self.clone()
        })
    }

    /// Enters tour mode at the start of `path`.
    pub fn start_tour(&self, path: &TourPath) -> SessionState {
        SessionState { pose: path.pose_at(0.0), mode: Mode::Tour, tour_progress: 0.0, guidance: None, ..self.clone() }
    }

    /// Advances along the tour at `speed_mps`. While `paused` only the clock
    /// moves. Reaching the end returns to free mode.
    pub fn step_tour(
        &self,
        dt: f64,
        path: &TourPath,
        speed_mps: f64,
        paused: bool,
    ) -> Result<(SessionState, Option<EngineEvent>), EngineError> {
        check_dt(dt)?;
        if self.mode != Mode::Tour {
            return Err(EngineError::WrongMode { expected: "tour", actual: self.mode.as_str() });
        }
        let clock = self.clock + dt;
        if paused {
            return Ok((SessionState { clock, ..self.clone() }, None));
        }
        let total = path.total_length();
        let progress = (self.tour_progress + speed_mps * dt).min(total);
        let mut next =
            SessionState { pose: path.pose_at(progress), tour_progress: progress, clock, ..self.clone() };
        let mut event = None;
        if progress >= total {
            next.mode = Mode::Free;
            event = Some(EngineEvent::TourFinished { clock });
        }
        Ok((next, event))
    }

    /// Records a hotspot as viewed and reports its category's progress.
    pub fn mark_viewed(
        &self,
        scene: &SceneDefinition,
        hotspot_id: &str,
    ) -> Result<(SessionState, CategoryProgress), EngineError> {
        let h = scene.hotspot(hotspot_id).ok_or_else(|| EngineError::UnknownHotspot(hotspot_id.into()))?;
        let mut next = self.clone();
        next.viewed.insert(h.id.clone());
        let progress = next.progress(scene, h.category);
        Ok((next, progress))
    }

    pub fn progress(&self, scene: &SceneDefinition, category: HotspotCategory) -> CategoryProgress {
        let in_cat = scene.hotspots.iter().filter(|h| h.category == category);
        let (mut viewed, mut total) = (0, 0);
        for h in in_cat {
            total += 1;
            if self.viewed.contains(&h.id) {
                viewed += 1;
            }
        }
        CategoryProgress { category, viewed, total }
    }

    /// Starts an evacuation episode toward the nearest exit. The target stays
    /// fixed for the whole episode.
    pub fn start_escape(&self, scene: &SceneDefinition) -> Result<SessionState, EngineError> {
        let exit = nearest_exit(scene, &self.pose).ok_or(EngineError::NoExits)?;
        Ok(SessionState { mode: Mode::Escape, guidance: Some(guidance_to(&self.pose, exit)), ..self.clone() })
    }

    /// Recomputes distance and bearing to the episode's exit. On arrival the
    /// session returns to free mode and an `EscapeCompleted` event is emitted.
    pub fn update_guidance(&self, scene: &SceneDefinition) -> Result<GuidanceUpdate, EngineError> {
        if self.mode != Mode::Escape {
            return Err(EngineError::WrongMode { expected: "escape", actual: self.mode.as_str() });
        }
        let target = self.guidance.as_ref().map(|g| g.exit_id.as_str()).unwrap_or_default();
        let exit = scene.exit(target).ok_or_else(|| EngineError::UnknownExit(target.into()))?;
        let guidance = guidance_to(&self.pose, exit);
        if guidance.arrived {
            let state = SessionState { mode: Mode::Free, guidance: None, ..self.clone() };
            let event = EngineEvent::EscapeCompleted { exit_id: exit.id.clone(), clock: self.clock };
            Ok(GuidanceUpdate { state, guidance, event: Some(event) })
        } else {
            let state = SessionState { guidance: Some(guidance.clone()), ..self.clone() };
            Ok(GuidanceUpdate { state, guidance, event: None })
        }
    }

    /// Stable little-endian encoding of the full state, for hashing.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(128);
        let f = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_bits().to_le_bytes());
        let s = |out: &mut Vec<u8>, v: &str| {
            out.extend_from_slice(&(v.len() as u32).to_le_bytes());
            out.extend_from_slice(v.as_bytes());
        };
        out.extend_from_slice(b"LTSS\x01");
        out.push(self.mode.tag());
        f(&mut out, self.pose.position.x);
        f(&mut out, self.pose.position.y);
        f(&mut out, self.pose.position.z);
        f(&mut out, self.pose.yaw_deg);
        f(&mut out, self.pose.pitch_deg);
        f(&mut out, self.tour_progress);
        f(&mut out, self.clock);
        out.extend_from_slice(&(self.viewed.len() as u32).to_le_bytes());
        for id in &self.viewed {
            s(&mut out, id);
        }
        match &self.guidance {
            None => out.push(0),
            Some(g) => {
                out.push(1);
                s(&mut out, &g.exit_id);
                f(&mut out, g.bearing_deg);
                f(&mut out, g.relative_bearing_deg);
                f(&mut out, g.distance_m);
                out.push(g.arrived as u8);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::scene::fixtures::{exit, hs, minimal, wp};
    use alloc::vec;

    fn at(x: f64, y: f64) -> SessionState {
        SessionState::new(CameraPose::new(Vec3::new(x, y, 1.7), 0.0, 0.0))
    }

    #[test]
    fn idle_step_only_advances_clock() {
        let s = at(1.0, 2.0);
        let n = s.step_free(&FreeInput::default(), 0.5, &KinematicsConfig::default()).unwrap();
        assert_eq!(n.pose, s.pose);
        assert_eq!(n.clock, 0.5);
        assert_eq!(s.step_free(&FreeInput::default(), 0.0, &KinematicsConfig::default()), Err(EngineError::InvalidDt(0.0)));
    }

    #[test]
    fn teleport_sets_pose_and_clears_escape() {
        let mut scene = minimal();
        scene.waypoints.push(Waypoint { yaw_deg: 90.0, ..wp("wp2", 1, [4.0, 5.0, 1.7]) });
        let s = at(0.5, 0.5).start_escape(&scene).unwrap();
        assert!(s.guidance.is_some());
        let t1 = s.teleport(&scene, "wp2").unwrap();
        let t2 = t1.teleport(&scene, "wp2").unwrap();
        assert_eq!(t1, t2);
        assert_eq!(t1.pose.yaw_deg, 90.0);
        assert_eq!(t1.pose.position, Vec3::new(4.0, 5.0, 1.7));
        assert_eq!(t1.mode, Mode::Free);
        assert_eq!(t1.guidance, None);
        assert_eq!(s.teleport(&scene, "nope"), Err(EngineError::UnknownWaypoint("nope".into())));
    }

    use crate::scene::Waypoint;

    #[test]
    fn mark_viewed_counts_per_category() {
        let mut scene = minimal();
        scene.hotspots = vec![
            hs("i1", HotspotCategory::Info, [0.0; 3]),
            hs("i2", HotspotCategory::Info, [5.0, 0.0, 0.0]),
            hs("f1", HotspotCategory::FireExtinguisher, [9.0, 0.0, 0.0]),
        ];
        let s = at(0.0, 0.0);
        let (s1, p1) = s.mark_viewed(&scene, "i2").unwrap();
        assert_eq!((p1.viewed, p1.total), (1, 2));
        let (s2, p2) = s1.mark_viewed(&scene, "i2").unwrap();
        assert_eq!(p2, p1);
        assert_eq!(s2, s1);
        assert_eq!(s2.progress(&scene, HotspotCategory::FireExtinguisher).viewed, 0);
        assert!(s.mark_viewed(&scene, "zz").is_err());
    }

    #[test]
    fn escape_picks_nearest_with_id_ties() {
        let mut scene = minimal();
        scene.exits = vec![exit("e2", [10.0, 0.0, 1.7]), exit("e1", [0.0, 0.0, 1.7])];
        let tie = at(5.0, 3.0).start_escape(&scene).unwrap();
        assert_eq!(tie.guidance.unwrap().exit_id, "e1");
        // 20 - 0.3 and 39.7 - 20 differ only by rounding noise.
        scene.exits = vec![exit("e2", [0.3, 50.0, 1.7]), exit("e1", [39.7, 50.0, 1.7])];
        let noisy = CameraPose::new(Vec3::new(20.0, 50.0, 1.7), 0.0, 0.0);
        assert_ne!(scene.exits[0].position.distance(noisy.position), scene.exits[1].position.distance(noisy.position));
        assert_eq!(nearest_exit(&scene, &noisy).unwrap().id, "e1");
        scene.exits = vec![exit("e1", [0.0, 40.0, 1.7]), exit("e2", [2.0, 0.0, 1.7])];
        let s = at(0.0, 0.0).start_escape(&scene).unwrap();
        assert_eq!(s.mode, Mode::Escape);
        assert_eq!(s.guidance.unwrap().exit_id, "e2");
        scene.exits.clear();
        assert_eq!(at(0.0, 0.0).start_escape(&scene), Err(EngineError::NoExits));
    }

    #[test]
    fn relative_bearing_for_north_exit_facing_east() {
        let mut scene = minimal();
        scene.exits = vec![exit("n", [0.0, 10.0, 1.7])];
        let s = SessionState::new(CameraPose::new(Vec3::new(0.0, 0.0, 1.7), 90.0, 0.0));
        let up = s.start_escape(&scene).unwrap().update_guidance(&scene).unwrap();
        assert_eq!(up.guidance.bearing_deg, 0.0);
        assert_eq!(up.guidance.relative_bearing_deg, -90.0);
        assert_eq!(up.guidance.distance_m, 10.0);
        assert!(!up.guidance.arrived);
    }

    #[test]
    fn arrival_returns_to_free_with_event() {
        let mut scene = minimal();
        scene.exits = vec![exit("e1", [3.0, 3.0, 1.7])];
        let s = at(3.0, 3.0).start_escape(&scene).unwrap();
        let up = s.update_guidance(&scene).unwrap();
        assert_eq!(up.guidance.distance_m, 0.0);
        assert!(up.guidance.arrived);
        assert_eq!(up.state.mode, Mode::Free);
        assert_eq!(up.state.guidance, None);
        assert!(matches!(up.event, Some(EngineEvent::EscapeCompleted { .. })));
    }

    #[test]
    fn tour_steps_and_finishes() {
        let path = TourPath::through(&[
            CameraPose::new(Vec3::new(0.0, 0.0, 1.7), 0.0, 0.0),
            CameraPose::new(Vec3::new(10.0, 0.0, 1.7), 0.0, 0.0),
        ])
        .unwrap();
        let s = at(0.0, 0.0).start_tour(&path);
        let (s1, ev) = s.step_tour(2.0, &path, 1.4, false).unwrap();
        assert!((s1.tour_progress - 2.8).abs() < 1e-12);
        assert!(ev.is_none());
        let (paused, _) = s1.step_tour(1.0, &path, 1.4, true).unwrap();
        assert_eq!(paused.tour_progress, s1.tour_progress);
        assert_eq!(paused.clock, 3.0);
        let (end, ev) = s1.step_tour(100.0, &path, 1.4, false).unwrap();
        assert_eq!(end.tour_progress, path.total_length());
        assert_eq!(end.mode, Mode::Free);
        assert!(matches!(ev, Some(EngineEvent::TourFinished { .. })));
        assert!(at(0.0, 0.0).step_tour(1.0, &path, 1.4, false).is_err());
    }

    #[test]
    fn canonical_bytes_distinguish_states() {
        let a = at(0.0, 0.0);
        let b = SessionState { clock: 1e-300, ..a.clone() };
        assert_ne!(a.canonical_bytes(), b.canonical_bytes());
        assert_eq!(a.canonical_bytes(), a.clone().canonical_bytes());
    }
}
