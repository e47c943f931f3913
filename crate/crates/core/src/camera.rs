use thiserror::Error;

use crate::geom::{Aabb, Vec3};
use crate::math::{tan, to_radians};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CameraError {
    #[error("forward and up must be non-zero and not parallel")]
    DegenerateBasis,
    #[error("vertical field of view must lie in (0, 180) degrees, got {0}")]
    Fov(f64),
    #[error("near/far planes must satisfy 0 < near < far")]
    Planes,
    #[error("aspect ratio and viewport height must be positive")]
    Viewport,
}

/// A perspective camera. `forward` and `up` are orthonormal after construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraView {
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
    pub vertical_fov_deg: f64,
    pub aspect: f64,
    pub viewport_height: f64,
    pub near: f64,
    pub far: f64,
}

/// Lens and viewport parameters shared by every pose of a session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lens {
    pub vertical_fov_deg: f64,
    pub aspect: f64,
    pub viewport_height: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for Lens {
    fn default() -> Self {
        Lens { vertical_fov_deg: 60.0, aspect: 16.0 / 9.0, viewport_height: 1080.0, near: 0.1, far: 1000.0 }
    }
}

impl CameraView {
    pub fn new(position: Vec3, forward: Vec3, up: Vec3, lens: Lens) -> Result<Self, CameraError> {
        let f = forward.normalized().ok_or(CameraError::DegenerateBasis)?;
        let u = (up - f * up.dot(f)).normalized().ok_or(CameraError::DegenerateBasis)?;
        if !(lens.vertical_fov_deg > 0.0 && lens.vertical_fov_deg < 180.0) {
            return Err(CameraError::Fov(lens.vertical_fov_deg));
        }
        if !(lens.near > 0.0 && lens.near < lens.far) {
            return Err(CameraError::Planes);
        }
        if !(lens.aspect > 0.0 && lens.viewport_height > 0.0) {
            return Err(CameraError::Viewport);
        }
        Ok(CameraView {
            position,
            forward: f,
            up: u,
            vertical_fov_deg: lens.vertical_fov_deg,
            aspect: lens.aspect,
            viewport_height: lens.viewport_height,
            near: lens.near,
            far: lens.far,
        })
    }

    pub fn right(&self) -> Vec3 {
        self.forward.cross(self.up)
    }

    /// `tan(vertical_fov / 2)`.
    pub fn half_fov_tan(&self) -> f64 {
        tan(to_radians(self.vertical_fov_deg) * 0.5)
    }

    pub fn frustum(&self) -> Frustum {
        let f = self.forward;
        let u = self.up;
        let r = self.right();
        let th = self.half_fov_tan();
        let tw = th * self.aspect;
        let at = |n: Vec3, p: Vec3| {
            let n = n.normalized().unwrap_or(n);
            Plane { normal: n, offset: -n.dot(p) }
        };
        let eye = self.position;
        Frustum {
            planes: [
                at(f, eye + f * self.near),
                at(-f, eye + f * self.far),
                at(f * tw + r, eye),
                at(f * tw - r, eye),
                at(f * th + u, eye),
                at(f * th - u, eye),
            ],
        }
    }
}

/// Half-space `normal . x + offset >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.normal.x * p.x + self.normal.y * p.y + self.normal.z * p.z + self.offset
    }
}

/// Six inward-facing planes: near, far, left, right, bottom, top.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum {
    pub planes: [Plane; 6],
}

impl Frustum {
    /// Conservative box test: false only when the box lies entirely behind one plane.
    pub fn intersects(&self, b: &Aabb) -> bool {
        self.planes.iter().all(|pl| {
            let n = pl.normal;
            let pv = Vec3::new(
                if n.x >= 0.0 { b.max.x } else { b.min.x },
                if n.y >= 0.0 { b.max.y } else { b.min.y },
                if n.z >= 0.0 { b.max.z } else { b.min.z },
            );
            pl.signed_distance(pv) >= 0.0
        })
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.planes.iter().all(|pl| pl.signed_distance(p) >= 0.0)
    }
}
