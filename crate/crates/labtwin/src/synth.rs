//! Deterministic synthetic clouds standing in for a laboratory scan.

use std::fmt;
use std::str::FromStr;

use labtwin_core::geom::{Aabb, Vec3};
use labtwin_core::point::{ColorPoint, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Room envelope of the `room-with-aisles` generator, meters.
pub const ROOM_SIZE: [f64; 3] = [40.0, 100.0, 6.0];
/// Edge of the `box` generator's cube, meters.
pub const BOX_SIDE: f64 = 10.0;

/// Equipment rows run along y; x ranges of the blocks, with aisles between.
const BLOCK_COLUMNS: [(f64, f64); 4] = [(3.0, 8.0), (12.0, 17.0), (23.0, 28.0), (32.0, 37.0)];
const BLOCK_ROW_PITCH: f64 = 12.0;
const BLOCK_LENGTH: f64 = 8.0;
const BLOCK_ROWS: usize = 8;
const BLOCK_ROW_START: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthShape {
    /// Uniform volume fill of a [`BOX_SIDE`] cube at the origin.
    Box,
    /// Floor, walls, ceiling and equipment blocks in a 40 x 100 x 6 m hall.
    RoomWithAisles,
}

impl FromStr for SynthShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "box" => Ok(SynthShape::Box),
            "room-with-aisles" | "room" => Ok(SynthShape::RoomWithAisles),
            other => Err(format!("unknown shape {other:?} (expected box or room-with-aisles)")),
        }
    }
}

impl fmt::Display for SynthShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthShape::Box => "box",
            SynthShape::RoomWithAisles => "room-with-aisles",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub shape: SynthShape,
    pub count: u64,
    pub seed: u64,
}

impl SynthSpec {
    /// Envelope every generated point lies in.
    pub fn envelope(&self) -> Aabb {
        match self.shape {
            SynthShape::Box => Aabb::new(Vec3::ZERO, Vec3::new(BOX_SIDE, BOX_SIDE, BOX_SIDE)),
            SynthShape::RoomWithAisles => Aabb::new(Vec3::ZERO, ROOM_SIZE.into()),
        }
    }

    /// Lazily generated points; the same spec always yields the same sequence.
    pub fn points(&self) -> SynthPoints {
        SynthPoints { shape: self.shape, left: self.count, rng: ChaCha8Rng::seed_from_u64(self.seed) }
    }
}

/// Materialized synthetic cloud.
pub fn synth_cloud(spec: &SynthSpec) -> PointCloud {
    spec.points().collect()
}

#[derive(Debug, Clone)]
pub struct SynthPoints {
    shape: SynthShape,
    left: u64,
    rng: ChaCha8Rng,
}

impl Iterator for SynthPoints {
    type Item = ColorPoint;

    fn next(&mut self) -> Option<ColorPoint> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        Some(match self.shape {
            SynthShape::Box => box_point(&mut self.rng),
            SynthShape::RoomWithAisles => room_point(&mut self.rng),
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.left).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

fn box_point(rng: &mut ChaCha8Rng) -> ColorPoint {
    let p = Vec3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * BOX_SIDE;
    let c = |v: f64| (v / BOX_SIDE * 255.0) as u8;
    ColorPoint::new(p.x, p.y, p.z, c(p.x), c(p.y), c(p.z))
}

fn jitter(rng: &mut ChaCha8Rng, rgb: [u8; 3]) -> [u8; 3] {
    rgb.map(|c| c.saturating_add(rng.random_range(0..12)))
}

fn room_point(rng: &mut ChaCha8Rng) -> ColorPoint {
    let [w, l, h] = ROOM_SIZE;
    let u: f64 = rng.random();
    let (p, rgb) = if u < 0.35 {
        // Floor with painted aisle markings.
        let (x, y) = (rng.random::<f64>() * w, rng.random::<f64>() * l);
        let aisle = BLOCK_COLUMNS.windows(2).any(|c| x > c[0].1 && x < c[1].0);
        (Vec3::new(x, y, 0.0), if aisle { [170, 160, 60] } else { [110, 110, 115] })
    } else if u < 0.55 {
        // Four walls, perimeter-weighted.
        let s = rng.random::<f64>() * 2.0 * (w + l);
        let z = rng.random::<f64>() * h;
        let p = if s < w {
            Vec3::new(s, 0.0, z)
        } else if s < w + l {
            Vec3::new(w, s - w, z)
        } else if s < 2.0 * w + l {
            Vec3::new(2.0 * w + l - s, l, z)
        } else {
            Vec3::new(0.0, 2.0 * (w + l) - s, z)
        };
        (p, [200, 190, 170])
    } else if u < 0.65 {
        (Vec3::new(rng.random::<f64>() * w, rng.random::<f64>() * l, h), [235, 235, 230])
    } else {
        block_point(rng)
    };
    let p = p.max(Vec3::ZERO).min(ROOM_SIZE.into());
    let [r, g, b] = jitter(rng, rgb);
    ColorPoint::new(p.x, p.y, p.z, r, g, b)
}

/// Surface point on one of the equipment blocks.
fn block_point(rng: &mut ChaCha8Rng) -> (Vec3, [u8; 3]) {
    let col = rng.random_range(0..BLOCK_COLUMNS.len());
    let row = rng.random_range(0..BLOCK_ROWS);
    let (x0, x1) = BLOCK_COLUMNS[col];
    let y0 = BLOCK_ROW_START + row as f64 * BLOCK_ROW_PITCH;
    let y1 = y0 + BLOCK_LENGTH;
    // Block height varies per block but is fixed for it.
    let top = 1.0 + ((col * 7 + row * 3) % 5) as f64 * 0.4;
    let size = Vec3::new(x1 - x0, y1 - y0, top);
    let areas = [size.y * size.z, size.x * size.z, size.x * size.y];
    let total = 2.0 * (areas[0] + areas[1]) + areas[2];
    let pick = rng.random::<f64>() * total;
    let (a, b) = (rng.random::<f64>(), rng.random::<f64>());
    let p = if pick < 2.0 * areas[0] {
        let x = if pick < areas[0] { x0 } else { x1 };
        Vec3::new(x, y0 + a * size.y, b * size.z)
    } else if pick < 2.0 * (areas[0] + areas[1]) {
        let y = if pick < 2.0 * areas[0] + areas[1] { y0 } else { y1 };
        Vec3::new(x0 + a * size.x, y, b * size.z)
    } else {
        Vec3::new(x0 + a * size.x, y0 + b * size.y, top)
    };
    let palette = [[40, 90, 160], [180, 60, 40], [60, 140, 70], [90, 90, 90]];
    (p, palette[(col + row) % palette.len()])
}
