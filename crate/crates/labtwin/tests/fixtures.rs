//! Checked-in data files stay in sync with the code that defines them.
//! Set `LABTWIN_BLESS=1` to rewrite them.

mod common;

use common::data_path;
use labtwin::replay::{
    author_escape_log, replay_log, InputLog, Interaction, LogEntry, LogHeader, ModeCommand, StartPose, LOG_VERSION,
};
use labtwin::scene_io::{demo_scene, load_scene, scene_bytes};
use labtwin_core::geom::Vec3;
use labtwin_core::scene::SceneDefinition;
use labtwin_core::sim::{KinematicsConfig, Mode};

fn check(name: &str, expected: &[u8]) {
    let path = data_path(name);
    if std::env::var_os("LABTWIN_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, expected).unwrap();
    }
    let actual = std::fs::read(&path).unwrap_or_default();
    assert!(actual == expected, "{} is stale; rerun with LABTWIN_BLESS=1", path.display());
}

/// A session touching every frame kind: teleport, pick, tour with pause,
/// a mode switch back to free, walking and an escape.
fn mixed_log(scene: &SceneDefinition, cfg: &KinematicsConfig) -> InputLog {
    let frame = |t: f64, dt: f64| LogEntry {
        t,
        mode_cmd: None,
        movement: [0.0, 0.0],
        look: [0.0, 0.0],
        interact: None,
        teleport: None,
        dt,
    };
    let target = scene.hotspot("info-02").unwrap().position;
    let from = scene.waypoint("wp02").unwrap().position;
    let mut entries = vec![LogEntry {
        teleport: Some("wp02".into()),
        interact: Some(Interaction { origin: from, direction: target - from, max_range: Some(15.0) }),
        ..frame(0.0, 0.05)
    }];
    let mut t = 0.05;
    entries.push(LogEntry { mode_cmd: Some(ModeCommand::Tour), ..frame(t, 0.1) });
    for i in 0..60 {
        t += 0.1;
        let cmd = match i {
            20 => Some(ModeCommand::Pause),
            25 => Some(ModeCommand::Resume),
            _ => None,
        };
        entries.push(LogEntry { mode_cmd: cmd, ..frame(t, 0.1) });
    }
    t += 0.1;
    entries.push(LogEntry { mode_cmd: Some(ModeCommand::Free), movement: [0.3, 1.0], look: [40.0, -12.0], ..frame(t, 1.0 / 60.0) });
    for _ in 0..30 {
        t += 1.0 / 60.0;
        entries.push(LogEntry { movement: [0.0, 1.0], look: [2.5, 0.5], ..frame(t, 1.0 / 60.0) });
    }
    t += 1.0 / 60.0;
    entries.push(LogEntry { mode_cmd: Some(ModeCommand::Escape), movement: [0.0, 1.0], ..frame(t, 0.1) });
    for _ in 0..20 {
        t += 0.1;
        entries.push(LogEntry { movement: [-0.5, 1.0], look: [-3.0, 0.0], ..frame(t, 0.1) });
    }
    let start = StartPose { position: Vec3::new(20.0, 3.0, 1.7), yaw_deg: 0.0, pitch_deg: 0.0 };
    InputLog { header: LogHeader { labtwin_log: LOG_VERSION, start, final_state_hash: String::new() }, entries }
        .seal(scene, cfg)
        .unwrap()
}

#[test]
fn demo_scene_file_is_current() {
    check("demo_scene.json", &scene_bytes(&demo_scene()));
    assert_eq!(load_scene(data_path("demo_scene.json")).unwrap(), demo_scene());
}

#[test]
fn escape_log_is_current_and_reaches_an_exit() {
    let scene = demo_scene();
    let cfg = KinematicsConfig::default();
    let log = author_escape_log(&scene, "wp09", 0.1, &cfg).unwrap();
    check("escape_session.jsonl", log.to_jsonl().as_bytes());
    let loaded = InputLog::load(data_path("escape_session.jsonl")).unwrap();
    let out = replay_log(&loaded, &scene, &cfg).unwrap();
    assert_eq!(out.hash, loaded.header.final_state_hash);
    let exit = scene.exit(out.escaped_to().unwrap()).unwrap();
    assert!(out.state.pose.position.distance(exit.position) <= 1.0);
    assert_eq!(out.state.mode, Mode::Free);
}

#[test]
fn mixed_log_is_current() {
    let scene = demo_scene();
    let cfg = KinematicsConfig::default();
    let log = mixed_log(&scene, &cfg);
    check("mixed_session.jsonl", log.to_jsonl().as_bytes());
    let out = replay_log(&InputLog::load(data_path("mixed_session.jsonl")).unwrap(), &scene, &cfg).unwrap();
    assert_eq!(out.hash, log.header.final_state_hash);
    assert!(out.state.viewed.contains("info-02"));
    assert_eq!(out.state.mode, Mode::Escape);
    assert!(out.state.guidance.is_some());
}
