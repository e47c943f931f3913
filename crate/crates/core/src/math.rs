//! Float helpers routed through `libm` so results do not depend on the
//! platform's libm and the crate stays `no_std`.

pub(crate) use libm::{atan2, cos, floor, round, sin, sqrt, tan};

pub(crate) fn to_radians(deg: f64) -> f64 {
    deg * (core::f64::consts::PI / 180.0)
}

pub(crate) fn to_degrees(rad: f64) -> f64 {
    rad * (180.0 / core::f64::consts::PI)
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn normalize_deg(deg: f64) -> f64 {
    let mut r = deg - 360.0 * floor(deg / 360.0);
    // `floor` can leave 360.0 behind for tiny negative inputs.
    if r >= 360.0 {
        r -= 360.0;
    }
    if r < 0.0 {
        r += 360.0;
    }
    r
}

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn wrap_signed_deg(deg: f64) -> f64 {
    let r = normalize_deg(deg);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_deg(0.0), 0.0);
        assert_eq!(normalize_deg(360.0), 0.0);
        assert_eq!(normalize_deg(-90.0), 270.0);
        assert_eq!(normalize_deg(725.0), 5.0);
        let tiny = normalize_deg(-1e-18);
        assert!((0.0..360.0).contains(&tiny));
    }

    #[test]
    fn signed_range() {
        assert_eq!(wrap_signed_deg(180.0), 180.0);
        assert_eq!(wrap_signed_deg(-180.0), 180.0);
        assert_eq!(wrap_signed_deg(-90.0), -90.0);
        assert_eq!(wrap_signed_deg(270.0), -90.0);
    }
}
