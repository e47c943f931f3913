//! Coordinate readout, distance and area tools.

use thiserror::Error;

use crate::geom::Vec3;
use crate::math::{floor, sqrt};

/// Precision of coordinate readouts, meters.
pub const COORDINATE_PRECISION: f64 = 0.001;

/// Relative eigenvalue floor below which a polygon counts as collinear.
const COLLINEAR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("an area needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("polygon points are collinear")]
    Collinear,
    #[error("polygon has a non-finite coordinate")]
    NonFinite,
}

pub fn measure_distance(a: Vec3, b: Vec3) -> f64 {
    a.distance(b)
}

/// Picked position rounded to [`COORDINATE_PRECISION`].
pub fn query_coordinate(picked: Vec3) -> [f64; 3] {
    let steps = 1.0 / COORDINATE_PRECISION;
    let round = |v: f64| floor(v * steps + 0.5) / steps;
    [round(picked.x), round(picked.y), round(picked.z)]
}

/// Area of a polygon after projecting it onto its least-squares plane.
pub fn measure_area(polygon: &[Vec3]) -> Result<f64, MeasureError> {
    if polygon.len() < 3 {
        return Err(MeasureError::TooFewPoints(polygon.len()));
    }
    if polygon.iter().any(|p| !p.is_finite()) {
        return Err(MeasureError::NonFinite);
    }
    let n = polygon.len() as f64;
    let centroid = polygon.iter().fold(Vec3::ZERO, |acc, &p| acc + p) / n;
    let mut cov = [[0.0f64; 3]; 3];
    for &p in polygon {
        let q = (p - centroid).to_array();
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += q[i] * q[j];
            }
        }
    }
    let (values, vectors) = symmetric_eigen(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let (smallest, middle, largest) = (order[0], order[1], order[2]);
    if values[largest] <= 0.0 || values[middle] <= COLLINEAR_TOLERANCE * values[largest] {
        return Err(MeasureError::Collinear);
    }
    let normal = Vec3::new(vectors[0][smallest], vectors[1][smallest], vectors[2][smallest]);
    let mut twice = Vec3::ZERO;
    for (i, &p) in polygon.iter().enumerate() {
        let q = polygon[(i + 1) % polygon.len()];
        twice += (p - centroid).cross(q - centroid);
    }
    Ok(0.5 * twice.dot(normal).abs())
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 3x3 matrix. Returns the
/// eigenvalues and a matrix whose columns are the matching unit eigenvectors.
fn symmetric_eigen(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off <= 1e-32 * diag || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + sqrt(theta * theta + 1.0));
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / sqrt(t * t + 1.0);
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}
