use alloc::vec::Vec;

use crate::geom::{Aabb, BoundsAccumulator, Vec3};

/// A colored sample: world position in meters plus 8-bit RGB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl ColorPoint {
    pub const fn new(x: f64, y: f64, z: f64, r: u8, g: u8, b: u8) -> Self {
        ColorPoint { x, y, z, r, g, b }
    }

    pub fn at(position: Vec3, rgb: [u8; 3]) -> Self {
        ColorPoint::new(position.x, position.y, position.z, rgb[0], rgb[1], rgb[2])
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn rgb(&self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }

    pub fn is_finite(&self) -> bool {
        self.position().is_finite()
    }
}

/// An in-memory cloud with tight bounds. Bounds are `None` only when empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<ColorPoint>,
    bounds: Option<Aabb>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, p: ColorPoint) {
        match &mut self.bounds {
            Some(b) => b.extend(p.position()),
            None => self.bounds = Some(Aabb::from_point(p.position())),
        }
        self.points.push(p);
    }

    pub fn points(&self) -> &[ColorPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<ColorPoint> {
        self.points
    }

    pub fn bounds(&self) -> Option<Aabb> {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl FromIterator<ColorPoint> for PointCloud {
    fn from_iter<I: IntoIterator<Item = ColorPoint>>(iter: I) -> Self {
        let mut acc = BoundsAccumulator::new();
        let points: Vec<ColorPoint> = iter
            .into_iter()
            .inspect(|p| acc.add(p.position()))
            .collect();
        PointCloud { points, bounds: acc.bounds() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_bounds_are_tight() {
        let cloud: PointCloud = [
            ColorPoint::new(1.0, 2.0, 3.0, 255, 0, 0),
            ColorPoint::new(-1.0, 0.0, 5.0, 0, 255, 0),
        ]
        .into_iter()
        .collect();
        assert_eq!(cloud.len(), 2);
        let b = cloud.bounds().unwrap();
        assert_eq!(b.min, Vec3::new(-1.0, 0.0, 3.0));
        assert_eq!(b.max, Vec3::new(1.0, 2.0, 5.0));
        assert!(PointCloud::new().bounds().is_none());
    }
}
