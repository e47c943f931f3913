//! Guided-tour path: a centripetal Catmull-Rom spline through the tour
//! waypoints, parameterized by arc length so playback moves at constant speed.

use alloc::vec::Vec;

use super::kinematics::CameraPose;
use super::EngineError;
use crate::geom::Vec3;
use crate::math::{normalize_deg, sqrt, wrap_signed_deg};
use crate::scene::SceneDefinition;

/// Per-parameter-unit tolerance on the arc-length estimate, meters.
const LENGTH_TOLERANCE: f64 = 1e-5;
/// Every segment is split into at least `2^MIN_DEPTH` pieces.
const MIN_DEPTH: u32 = 6;
const MAX_DEPTH: u32 = 24;
/// Largest allowed relative imbalance between the two halves of a table
/// interval; bounds the speed error of linear interpolation within it.
const SPEED_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Control {
    position: Vec3,
    yaw_deg: f64,
    pitch_deg: f64,
}

/// One spline span between consecutive waypoints, with its arc-length table.
#[derive(Debug, Clone, PartialEq)]
struct Span {
    points: [Vec3; 4],
    knots: [f64; 4],
    /// `(u, s)` samples, `u` in `[0, 1]`, `s` arc length from span start.
    table: Vec<(f64, f64)>,
}

fn lerp_knots(a: Vec3, b: Vec3, ta: f64, tb: f64, t: f64) -> Vec3 {
    if tb == ta {
        // Only happens for coincident controls, where a == b.
        return b;
    }
    a * ((tb - t) / (tb - ta)) + b * ((t - ta) / (tb - ta))
}

impl Span {
    fn new(points: [Vec3; 4]) -> Self {
        let mut knots = [0.0; 4];
        for i in 1..4 {
            knots[i] = knots[i - 1] + sqrt(points[i].distance(points[i - 1]));
        }
        let mut span = Span { points, knots, table: Vec::new() };
        span.table = span.measure();
        span
    }

    fn eval(&self, u: f64) -> Vec3 {
        let [p0, p1, p2, p3] = self.points;
        let [t0, t1, t2, t3] = self.knots;
        if t2 == t1 {
            return p1;
        }
        let t = t1 + (t2 - t1) * u;
        let a1 = lerp_knots(p0, p1, t0, t1, t);
        let a2 = lerp_knots(p1, p2, t1, t2, t);
        let a3 = lerp_knots(p2, p3, t2, t3, t);
        let b1 = lerp_knots(a1, a2, t0, t2, t);
        let b2 = lerp_knots(a2, a3, t1, t3, t);
        lerp_knots(b1, b2, t1, t2, t)
    }

    fn measure(&self) -> Vec<(f64, f64)> {
        let mut table = alloc::vec![(0.0, 0.0)];
        let start = self.eval(0.0);
        let end = self.eval(1.0);
        self.subdivide(0.0, 1.0, start, end, 0, &mut table);
        if let Some(last) = table.last_mut() {
            last.0 = 1.0;
        }
        table
    }

    fn subdivide(&self, u0: f64, u1: f64, a: Vec3, b: Vec3, depth: u32, table: &mut Vec<(f64, f64)>) {
        let um = 0.5 * (u0 + u1);
        let m = self.eval(um);
        let chord = a.distance(b);
        let (da, db) = (a.distance(m), m.distance(b));
        let halves = da + db;
        let bent = halves - chord > LENGTH_TOLERANCE * (u1 - u0);
        let uneven = (da - db).abs() > SPEED_TOLERANCE * halves && halves > 1e-9;
        let refine = depth < MIN_DEPTH || (depth < MAX_DEPTH && (bent || uneven));
        if refine {
            self.subdivide(u0, um, a, m, depth + 1, table);
            self.subdivide(um, u1, m, b, depth + 1, table);
        } else {
            let s = table.last().map_or(0.0, |e| e.1);
            let s_mid = s + a.distance(m);
            table.push((um, s_mid));
            table.push((u1, s_mid + m.distance(b)));
        }
    }

    fn length(&self) -> f64 {
        self.table.last().map_or(0.0, |e| e.1)
    }

    /// Spline parameter at arc length `s` into the span.
    fn param_at(&self, s: f64) -> f64 {
        let t = &self.table;
        let i = t.partition_point(|e| e.1 < s);
        if i == 0 {
            return 0.0;
        }
        if i >= t.len() {
            return 1.0;
        }
        let (ua, sa) = t[i - 1];
        let (ub, sb) = t[i];
        if sb == sa {
            return ub;
        }
        ua + (ub - ua) * ((s - sa) / (sb - sa))
    }
}

/// Arc-length-parameterized tour path.
#[derive(Debug, Clone, PartialEq)]
pub struct TourPath {
    controls: Vec<Control>,
    spans: Vec<Span>,
    /// Arc length at each control waypoint.
    stations: Vec<f64>,
}

impl TourPath {
    /// Path through the scene's tour waypoints in tour order.
    pub fn build(scene: &SceneDefinition) -> Result<Self, EngineError> {
        let stops = scene.tour_waypoints().ok_or(EngineError::UnresolvedTour)?;
        let poses: Vec<CameraPose> =
            stops.iter().map(|w| CameraPose::new(w.position, w.yaw_deg, w.pitch_deg)).collect();
        Self::through(&poses)
    }

    /// Path through explicit poses; needs at least two.
    pub fn through(poses: &[CameraPose]) -> Result<Self, EngineError> {
        if poses.len() < 2 {
            return Err(EngineError::TourTooShort(poses.len()));
        }
        if poses.iter().any(|p| !p.position.is_finite()) {
            return Err(EngineError::NonFinite);
        }
        let controls: Vec<Control> = poses
            .iter()
            .map(|p| Control { position: p.position, yaw_deg: p.yaw_deg, pitch_deg: p.pitch_deg })
            .collect();
        let n = controls.len();
        let at = |i: isize| controls[i.clamp(0, n as isize - 1) as usize].position;
        let mut spans = Vec::with_capacity(n - 1);
        let mut stations = Vec::with_capacity(n);
        stations.push(0.0);
        for i in 0..n as isize - 1 {
            let span = Span::new([at(i - 1), at(i), at(i + 1), at(i + 2)]);
            stations.push(stations[i as usize] + span.length());
            spans.push(span);
        }
        Ok(TourPath { controls, spans, stations })
    }

    pub fn total_length(&self) -> f64 {
        *self.stations.last().unwrap_or(&0.0)
    }

    /// Arc length at which the path passes control waypoint `i`.
    pub fn station(&self, i: usize) -> f64 {
        self.stations[i]
    }

    pub fn control_count(&self) -> usize {
        self.controls.len()
    }

    pub fn span_count(&self) -> usize {
        self.spans.len()
    }

    /// Point on span `span` at spline parameter `u` in `[0, 1]`.
    pub fn span_point(&self, span: usize, u: f64) -> Vec3 {
        self.spans[span].eval(u)
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.total_length());
        let i = self.stations.partition_point(|&st| st <= s).saturating_sub(1).min(self.spans.len() - 1);
        (i, s - self.stations[i])
    }

    pub fn position_at(&self, s: f64) -> Vec3 {
        let (i, local) = self.locate(s);
        let span = &self.spans[i];
        span.eval(span.param_at(local))
    }

    /// Pose at arc length `s` (clamped to the path). Orientation blends
    /// between the neighboring waypoints by arc fraction, yaw the short way round.
    pub fn pose_at(&self, s: f64) -> CameraPose {
        let (i, local) = self.locate(s);
        let span = &self.spans[i];
        let len = span.length();
        let f = if len > 0.0 { (local / len).clamp(0.0, 1.0) } else { 1.0 };
        let (a, b) = (&self.controls[i], &self.controls[i + 1]);
        let yaw = a.yaw_deg + f * wrap_signed_deg(b.yaw_deg - a.yaw_deg);
        let pitch = a.pitch_deg + f * (b.pitch_deg - a.pitch_deg);
        CameraPose::new(span.eval(span.param_at(local)), normalize_deg(yaw), pitch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose(x: f64, y: f64) -> CameraPose {
        CameraPose::new(Vec3::new(x, y, 1.7), 0.0, 0.0)
    }

    #[test]
    fn two_points_make_a_straight_segment() {
        let path = TourPath::through(&[pose(0.0, 0.0), pose(10.0, 0.0)]).unwrap();
        assert!((path.total_length() - 10.0).abs() < 1e-3);
        for k in 0..=20 {
            let p = path.position_at(k as f64 * 0.5);
            assert!(p.y.abs() < 1e-12 && (p.z - 1.7).abs() < 1e-12);
            assert!((p.x - k as f64 * 0.5).abs() < 1e-3, "{k}: {p:?}");
        }
    }

    #[test]
    fn too_short_rejected() {
        assert_eq!(TourPath::through(&[pose(0.0, 0.0)]), Err(EngineError::TourTooShort(1)));
    }

    #[test]
    fn passes_through_controls() {
        let poses = [pose(0.0, 0.0), pose(5.0, 1.0), pose(7.0, 8.0), pose(-3.0, 9.0)];
        let path = TourPath::through(&poses).unwrap();
        for (i, p) in poses.iter().enumerate() {
            let q = path.position_at(path.station(i));
            assert!(q.distance(p.position) < 1e-6, "{i}");
        }
    }

    #[test]
    fn coincident_waypoints_are_tolerated() {
        let path = TourPath::through(&[pose(0.0, 0.0), pose(0.0, 0.0), pose(4.0, 0.0)]).unwrap();
        assert!((path.total_length() - 4.0).abs() < 1e-3);
        assert!(path.position_at(2.0).is_finite());
    }

    #[test]
    fn yaw_blends_short_way() {
        let a = CameraPose::new(Vec3::ZERO, 350.0, 0.0);
        let b = CameraPose::new(Vec3::new(10.0, 0.0, 0.0), 10.0, 20.0);
        let path = TourPath::through(&[a, b]).unwrap();
        let mid = path.pose_at(path.total_length() * 0.5);
        assert!(mid.yaw_deg < 1e-9 || mid.yaw_deg > 360.0 - 1e-9, "{}", mid.yaw_deg);
        assert!((mid.pitch_deg - 10.0).abs() < 1e-9);
    }
}
