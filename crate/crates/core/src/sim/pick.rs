use crate::geom::Vec3;
use crate::math::sqrt;
use crate::scene::{Hotspot, SceneDefinition};

/// A pick ray. `direction` is unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`; `None` if it is zero or non-finite.
    pub fn new(origin: Vec3, direction: Vec3) -> Option<Ray> {
        Some(Ray { origin, direction: direction.normalized()? })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Distance along `ray` to its first contact with a sphere; 0 when the origin
/// is already inside.
pub fn ray_sphere(ray: &Ray, center: Vec3, radius: f64) -> Option<f64> {
    let oc = ray.origin - center;
    let c = oc.norm_squared() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = oc.dot(ray.direction);
    if b >= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    Some(-b - sqrt(disc))
}

/// Nearest hotspot whose trigger sphere the ray enters within `max_range`;
/// equal distances resolve to the smaller id.
pub fn pick_hotspot<'s>(scene: &'s SceneDefinition, ray: &Ray, max_range: f64) -> Option<&'s Hotspot> {
    scene
        .hotspots
        .iter()
        .filter_map(|h| ray_sphere(ray, h.position, h.trigger_radius).map(|t| (t, h)))
        .filter(|(t, _)| *t <= max_range)
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)))
        .map(|(_, h)| h)
}
