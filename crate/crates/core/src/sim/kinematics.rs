use crate::camera::{CameraError, CameraView, Lens};
use crate::geom::Vec3;
use crate::math::{cos, normalize_deg, sin, to_radians};
use crate::scene::MAX_PITCH_DEG;

/// First-person walking parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicsConfig {
    pub eye_height: f64,
    pub walk_speed: f64,
    /// Degrees of rotation per look-input unit.
    pub rotate_sensitivity: f64,
    pub gravity_enabled: bool,
    /// Height of the flat floor the walker stands on.
    pub floor_z: f64,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        KinematicsConfig { eye_height: 1.70, walk_speed: 1.60, rotate_sensitivity: 0.15, gravity_enabled: true, floor_z: 0.0 }
    }
}

/// Camera position and orientation. Yaw is a compass angle: 0 faces +Y
/// ("north"), 90 faces +X. Positive pitch looks up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

impl CameraPose {
    /// Normalizes yaw to `[0, 360)` and clamps pitch to `[-89, 89]`.
    pub fn new(position: Vec3, yaw_deg: f64, pitch_deg: f64) -> Self {
        CameraPose {
            position,
            yaw_deg: normalize_deg(yaw_deg),
            pitch_deg: pitch_deg.clamp(-MAX_PITCH_DEG, MAX_PITCH_DEG),
        }
    }

    pub fn forward(&self) -> Vec3 {
        let (y, p) = (to_radians(self.yaw_deg), to_radians(self.pitch_deg));
        Vec3::new(sin(y) * cos(p), cos(y) * cos(p), sin(p))
    }

    /// Horizontal unit vector along the yaw direction.
    pub fn heading(&self) -> Vec3 {
        let y = to_radians(self.yaw_deg);
        Vec3::new(sin(y), cos(y), 0.0)
    }

    /// Horizontal unit vector to the right of the heading.
    pub fn right(&self) -> Vec3 {
        let y = to_radians(self.yaw_deg);
        Vec3::new(cos(y), -sin(y), 0.0)
    }

    pub fn view(&self, lens: Lens) -> Result<CameraView, CameraError> {
        CameraView::new(self.position, self.forward(), Vec3::Z, lens)
    }
}

/// One frame of walking input. `movement` is (strafe right, forward), each
/// clamped to `[-1, 1]`; `look` is (yaw, pitch) in input units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FreeInput {
    pub movement: [f64; 2],
    pub look: [f64; 2],
}

/// Advances a walking pose by `dt` seconds.
pub fn advance_pose(pose: &CameraPose, input: &FreeInput, dt: f64, cfg: &KinematicsConfig) -> CameraPose {
    let yaw = pose.yaw_deg + input.look[0] * cfg.rotate_sensitivity;
    let pitch = pose.pitch_deg + input.look[1] * cfg.rotate_sensitivity;
    let turned = CameraPose::new(pose.position, yaw, pitch);
    let mx = input.movement[0].clamp(-1.0, 1.0);
    let my = input.movement[1].clamp(-1.0, 1.0);
    let step = (turned.right() * mx + turned.heading() * my) * (cfg.walk_speed * dt);
    let mut position = pose.position + step;
    if cfg.gravity_enabled {
        position.z = cfg.floor_z + cfg.eye_height;
    }
    CameraPose { position, ..turned }
}
