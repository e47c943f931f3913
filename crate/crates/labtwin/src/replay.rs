//! Deterministic replay of JSON-lines input logs.
//!
//! Line 1 is a header with the start pose and the expected final state hash;
//! every further line is one input frame. Frames are applied in order:
//! teleport, mode command, interaction, then a time step in the current mode.

use std::path::{Path, PathBuf};

use labtwin_core::geom::Vec3;
use labtwin_core::scene::SceneDefinition;
use labtwin_core::sim::{
    pick_hotspot, CameraPose, EngineError, EngineEvent, FreeInput, KinematicsConfig, Mode, Ray, SessionState,
    TourPath,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::sha256_tag;

pub const LOG_VERSION: u32 = 1;
/// Pick range used when a frame's interaction gives none.
pub const DEFAULT_PICK_RANGE_M: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartPose {
    pub position: Vec3,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub labtwin_log: u32,
    pub start: StartPose,
    /// `sha256:<hex>` of the final state's canonical bytes.
    pub final_state_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeCommand {
    Free,
    Tour,
    Escape,
    Pause,
    Resume,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub origin: Vec3,
    pub direction: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_range: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_cmd: Option<ModeCommand>,
    #[serde(rename = "move")]
    pub movement: [f64; 2],
    pub look: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interact: Option<Interaction>,
    /// Waypoint id to jump to before this frame's step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teleport: Option<String>,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputLog {
    pub header: LogHeader,
    pub entries: Vec<LogEntry>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log is empty; expected a header line")]
    MissingHeader,
    #[error("log version {0} is not supported")]
    Version(u32),
    #[error("line {line}: {source}")]
    Engine { line: usize, source: EngineError },
}

impl InputLog {
    pub fn parse(text: &str) -> Result<Self, ReplayError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(ReplayError::MissingHeader)?;
        let header: LogHeader =
            serde_json::from_str(first).map_err(|e| ReplayError::Parse { line: 1, message: e.to_string() })?;
        if header.labtwin_log != LOG_VERSION {
            return Err(ReplayError::Version(header.labtwin_log));
        }
        let entries = lines
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| ReplayError::Parse { line: i + 1, message: e.to_string() }))
            .collect::<Result<_, _>>()?;
        Ok(InputLog { header, entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ReplayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ReplayError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("serializable header");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("serializable entry"));
            out.push('\n');
        }
        out
    }

    /// Replays the log and stores the resulting hash in the header.
    pub fn seal(mut self, scene: &SceneDefinition, cfg: &KinematicsConfig) -> Result<Self, ReplayError> {
        self.header.final_state_hash = replay(self.start_state(), &self.entries, scene, cfg)?.hash;
        Ok(self)
    }

    pub fn start_state(&self) -> SessionState {
        let s = &self.header.start;
        SessionState::new(CameraPose::new(s.position, s.yaw_deg, s.pitch_deg))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub state: SessionState,
    pub events: Vec<EngineEvent>,
    pub hash: String,
    pub frames: usize,
}

impl ReplayOutcome {
    /// Exit reached by the last completed escape episode, if any.
    pub fn escaped_to(&self) -> Option<&str> {
        self.events.iter().rev().find_map(|e| match e {
            EngineEvent::EscapeCompleted { exit_id, .. } => Some(exit_id.as_str()),
            _ => None,
        })
    }
}

pub fn state_hash(state: &SessionState) -> String {
    sha256_tag(&state.canonical_bytes())
}

/// Applies `entries` to `state`. Pure: the same inputs give the same outcome.
pub fn replay(
    mut state: SessionState,
    entries: &[LogEntry],
    scene: &SceneDefinition,
    cfg: &KinematicsConfig,
) -> Result<ReplayOutcome, ReplayError> {
    let mut path: Option<TourPath> = None;
    let mut paused = false;
    let mut events = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        // Line numbers count the header.
        let line = i + 2;
        let fail = |source| ReplayError::Engine { line, source };
        if let Some(id) = &e.teleport {
            state = state.teleport(scene, id).map_err(fail)?;
        }
        match e.mode_cmd {
            None => {}
            Some(ModeCommand::Free) => {
                state.mode = Mode::Free;
                state.guidance = None;
            }
            Some(ModeCommand::Tour) => {
                if path.is_none() {
                    path = Some(TourPath::build(scene).map_err(fail)?);
                }
                state = state.start_tour(path.as_ref().unwrap());
                paused = false;
            }
            Some(ModeCommand::Escape) => state = state.start_escape(scene).map_err(fail)?,
            Some(ModeCommand::Pause) => paused = true,
            Some(ModeCommand::Resume) => paused = false,
        }
        if let Some(it) = &e.interact {
            let ray = Ray::new(it.origin, it.direction).ok_or(fail(EngineError::NonFinite))?;
            let range = it.max_range.unwrap_or(DEFAULT_PICK_RANGE_M);
            if let Some(h) = pick_hotspot(scene, &ray, range) {
                state = state.mark_viewed(scene, &h.id.clone()).map_err(fail)?.0;
            }
        }
        match state.mode {
            Mode::Tour => {
                let p = path.as_ref().expect("tour mode implies a built path");
                let (next, ev) = state.step_tour(e.dt, p, scene.tour.speed_mps, paused).map_err(fail)?;
                state = next;
                events.extend(ev);
            }
            Mode::Free | Mode::Escape => {
                let input = FreeInput { movement: e.movement, look: e.look };
                state = state.step_free(&input, e.dt, cfg).map_err(fail)?;
                if state.mode == Mode::Escape {
                    let up = state.update_guidance(scene).map_err(fail)?;
                    state = up.state;
                    events.extend(up.event);
                }
            }
        }
    }
    Ok(ReplayOutcome { hash: state_hash(&state), state, events, frames: entries.len() })
}

/// Replays a parsed log from its own start pose.
pub fn replay_log(log: &InputLog, scene: &SceneDefinition, cfg: &KinematicsConfig) -> Result<ReplayOutcome, ReplayError> {
    replay(log.start_state(), &log.entries, scene, cfg)
}

/// Builds a log that starts at `waypoint_id`, enters escape mode and walks
/// straight at the target exit, turning to face it each frame.
pub fn author_escape_log(
    scene: &SceneDefinition,
    waypoint_id: &str,
    dt: f64,
    cfg: &KinematicsConfig,
) -> Result<InputLog, ReplayError> {
    let w = scene
        .waypoint(waypoint_id)
        .ok_or(ReplayError::Engine { line: 1, source: EngineError::UnknownWaypoint(waypoint_id.into()) })?;
    let start = StartPose { position: w.position, yaw_deg: w.yaw_deg, pitch_deg: w.pitch_deg };
    let mut state = SessionState::new(CameraPose::new(start.position, start.yaw_deg, start.pitch_deg))
        .start_escape(scene)
        .map_err(|source| ReplayError::Engine { line: 2, source })?;
    let mut entries = Vec::new();
    let mut t = 0.0;
    while state.mode == Mode::Escape {
        let line = entries.len() + 2;
        let turn = state.guidance.as_ref().map_or(0.0, |g| g.relative_bearing_deg) / cfg.rotate_sensitivity;
        let entry = LogEntry {
            t,
            mode_cmd: entries.is_empty().then_some(ModeCommand::Escape),
            movement: [0.0, 1.0],
            look: [turn, 0.0],
            interact: None,
            teleport: None,
            dt,
        };
        let input = FreeInput { movement: entry.movement, look: entry.look };
        state = state.step_free(&input, dt, cfg).map_err(|source| ReplayError::Engine { line, source })?;
        state = state.update_guidance(scene).map_err(|source| ReplayError::Engine { line, source })?.state;
        entries.push(entry);
        t += dt;
    }
    let log = InputLog {
        header: LogHeader { labtwin_log: LOG_VERSION, start, final_state_hash: String::new() },
        entries,
    };
    log.seal(scene, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_io::demo_scene;
    use labtwin_core::sim::nearest_exit;

    #[test]
    fn authored_escape_arrives_at_nearest_exit() {
        let scene = demo_scene();
        let cfg = KinematicsConfig::default();
        let log = author_escape_log(&scene, "wp09", 0.1, &cfg).unwrap();
        let out = replay_log(&log, &scene, &cfg).unwrap();
        assert_eq!(out.hash, log.header.final_state_hash);
        let start = log.start_state().pose;
        assert_eq!(out.escaped_to(), Some(nearest_exit(&scene, &start).unwrap().id.as_str()));
        assert_eq!(out.state.mode, Mode::Free);
    }

    #[test]
    fn text_round_trip_and_tamper_detection() {
        let scene = demo_scene();
        let cfg = KinematicsConfig::default();
        let log = author_escape_log(&scene, "wp03", 0.1, &cfg).unwrap();
        let parsed = InputLog::parse(&log.to_jsonl()).unwrap();
        assert_eq!(parsed, log);
        let again = replay_log(&parsed, &scene, &cfg).unwrap();
        assert_eq!(again.hash, log.header.final_state_hash);
        let mut tampered = parsed.clone();
        tampered.entries[3].dt = 0.11;
        assert_ne!(replay_log(&tampered, &scene, &cfg).unwrap().hash, log.header.final_state_hash);
    }

    #[test]
    fn tour_interact_and_pause_frames() {
        let scene = demo_scene();
        let cfg = KinematicsConfig::default();
        let h = &scene.hotspots[0];
        let origin = h.position - Vec3::new(0.0, 3.0, 0.0);
        let mut entries = vec![LogEntry {
            t: 0.0,
            mode_cmd: None,
            movement: [0.0, 0.0],
            look: [0.0, 0.0],
            interact: Some(Interaction { origin, direction: Vec3::Y, max_range: None }),
            teleport: Some("wp01".into()),
            dt: 0.1,
        }];
        let frame = |cmd| LogEntry {
            t: 0.0,
            mode_cmd: cmd,
            movement: [0.0, 0.0],
            look: [0.0, 0.0],
            interact: None,
            teleport: None,
            dt: 0.5,
        };
        entries.push(frame(Some(ModeCommand::Tour)));
        entries.push(frame(Some(ModeCommand::Pause)));
        entries.push(frame(None));
        let start = StartPose { position: Vec3::new(5.0, 5.0, 1.7), yaw_deg: 0.0, pitch_deg: 0.0 };
        let log = InputLog {
            header: LogHeader { labtwin_log: 1, start, final_state_hash: String::new() },
            entries,
        };
        let out = replay_log(&log, &scene, &cfg).unwrap();
        assert!(out.state.viewed.contains(&h.id));
        assert_eq!(out.state.mode, Mode::Tour);
        // One unpaused half-second step at tour speed.
        assert!((out.state.tour_progress - 0.5 * scene.tour.speed_mps).abs() < 1e-12);
        assert!((out.state.clock - 1.6).abs() < 1e-12);
    }

    #[test]
    fn bad_lines_are_located() {
        let err = InputLog::parse("{\"labtwin_log\":1,\"start\":{\"position\":[0,0,0],\"yaw_deg\":0,\"pitch_deg\":0},\"final_state_hash\":\"\"}\n{\"t\":0}\n")
            .unwrap_err();
        assert!(matches!(err, ReplayError::Parse { line: 2, .. }), "{err}");
        assert!(matches!(InputLog::parse(""), Err(ReplayError::MissingHeader)));
    }
}
