//! Minimum-spacing subsampling.
//!
//! A point is kept iff no previously kept point lies strictly closer than
//! `spacing`. Acceptance is first-seen in stream order, so the result depends
//! on input order but always satisfies the spacing floor, and every dropped
//! point has a kept neighbor closer than `spacing`.

use alloc::vec::Vec;

use thiserror::Error;

use crate::grid::PoissonGrid;
use crate::point::ColorPoint;

/// Spacing used for the laboratory scan reduction: 5 mm.
pub const DEFAULT_SPACING: f64 = 0.005;

/// Default cap on occupied hash cells (roughly 3 GB of grid state).
pub const DEFAULT_CELL_BUDGET: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsampleConfig {
    pub spacing: f64,
    pub cell_hash_budget: usize,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig { spacing: DEFAULT_SPACING, cell_hash_budget: DEFAULT_CELL_BUDGET }
    }
}

impl SubsampleConfig {
    pub fn with_spacing(spacing: f64) -> Self {
        SubsampleConfig { spacing, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), SubsampleError> {
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(SubsampleError::InvalidSpacing(self.spacing));
        }
        if self.cell_hash_budget == 0 {
            return Err(SubsampleError::ZeroBudget);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubsampleError {
    #[error("spacing must be a positive finite number of meters, got {0}")]
    InvalidSpacing(f64),
    #[error("cell budget must be positive")]
    ZeroBudget,
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: u64 },
    #[error("occupancy grid exceeded its budget of {budget} cells at input point {index}")]
    BudgetExceeded { budget: usize, index: u64 },
}

/// Streaming subsampler. Feed points with [`Subsampler::offer`].
#[derive(Debug, Clone)]
pub struct Subsampler {
    grid: PoissonGrid,
    budget: usize,
    seen: u64,
    kept: u64,
}

impl Subsampler {
    pub fn new(cfg: SubsampleConfig) -> Result<Self, SubsampleError> {
        cfg.validate()?;
        Ok(Subsampler { grid: PoissonGrid::new(cfg.spacing), budget: cfg.cell_hash_budget, seen: 0, kept: 0 })
    }

    /// Decides whether `p` is kept. Decisions are final.
    pub fn offer(&mut self, p: &ColorPoint) -> Result<bool, SubsampleError> {
        let index = self.seen;
        if !p.is_finite() {
            return Err(SubsampleError::NonFinite { index });
        }
        self.seen += 1;
        let pos = p.position();
        if self.grid.conflicts(pos) {
            return Ok(false);
        }
        if self.grid.cell_count() >= self.budget && self.grid.would_open_cell(pos) {
            return Err(SubsampleError::BudgetExceeded { budget: self.budget, index });
        }
        self.grid.insert(pos);
        self.kept += 1;
        Ok(true)
    }

    pub fn kept(&self) -> u64 {
        self.kept
    }

    pub fn dropped(&self) -> u64 {
        self.seen - self.kept
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleOutput {
    pub points: Vec<ColorPoint>,
    pub kept: u64,
    pub dropped: u64,
}

/// Subsamples an in-memory sequence.
pub fn subsample<I>(input: I, cfg: SubsampleConfig) -> Result<SubsampleOutput, SubsampleError>
where
    I: IntoIterator<Item = ColorPoint>,
{
    let mut s = Subsampler::new(cfg)?;
    let mut points = Vec::new();
    for p in input {
        if s.offer(&p)? {
            points.push(p);
        }
    }
    Ok(SubsampleOutput { points, kept: s.kept(), dropped: s.dropped() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, y: f64, z: f64) -> ColorPoint {
        ColorPoint::new(x, y, z, 10, 20, 30)
    }

    #[test]
    fn single_point_kept() {
        let out = subsample([pt(1.0, 2.0, 3.0)], SubsampleConfig::with_spacing(10.0)).unwrap();
        assert_eq!(out.points, [pt(1.0, 2.0, 3.0)]);
        assert_eq!((out.kept, out.dropped), (1, 0));
    }

    #[test]
    fn three_mm_neighbor_dropped_at_default_spacing() {
        let cfg = SubsampleConfig::default();
        assert_eq!(cfg.spacing, 0.005);
        let out = subsample([pt(0.0, 0.0, 0.0), pt(0.003, 0.0, 0.0)], cfg).unwrap();
        assert_eq!(out.points, [pt(0.0, 0.0, 0.0)]);
        assert_eq!(out.dropped, 1);
    }

    #[test]
    fn rejects_bad_config() {
        assert_eq!(SubsampleConfig::with_spacing(0.0).validate(), Err(SubsampleError::InvalidSpacing(0.0)));
        assert!(SubsampleConfig::with_spacing(f64::NAN).validate().is_err());
        let cfg = SubsampleConfig { spacing: 1.0, cell_hash_budget: 0 };
        assert_eq!(cfg.validate(), Err(SubsampleError::ZeroBudget));
    }

    #[test]
    fn non_finite_point_reported_with_index() {
        let err = subsample([pt(0.0, 0.0, 0.0), pt(f64::INFINITY, 0.0, 0.0)], SubsampleConfig::default()).unwrap_err();
        assert_eq!(err, SubsampleError::NonFinite { index: 1 });
    }

    #[test]
    fn budget_exceeded_is_an_error() {
        let cfg = SubsampleConfig { spacing: 1.0, cell_hash_budget: 2 };
        let pts = [pt(0.0, 0.0, 0.0), pt(5.0, 0.0, 0.0), pt(5.2, 0.0, 0.0), pt(10.0, 0.0, 0.0)];
        let err = subsample(pts, cfg).unwrap_err();
        assert_eq!(err, SubsampleError::BudgetExceeded { budget: 2, index: 3 });
    }

    #[test]
    fn larger_spacing_can_keep_more_points() {
        // First-seen acceptance is greedy: growing the spacing can drop an
        // early point that would otherwise block two later ones.
        let raw = [
            (0.04116289873192036, 0.8850227545335742),
            (0.9570603514772482, 0.8771477407330481),
            (0.462643062872367, 1.2353324486777892),
            (0.9165455863080141, 1.5593996891398056),
            (0.44957107118546324, 2.463741404146414),
            (1.7471827801012132, 0.5700484887512014),
        ];
        let pts: Vec<_> = raw.iter().map(|&(x, y)| pt(x, y, 0.0)).collect();
        let small = subsample(pts.clone(), SubsampleConfig::with_spacing(0.8929813656354442)).unwrap();
        let large = subsample(pts, SubsampleConfig::with_spacing(0.9873744609444404)).unwrap();
        assert_eq!(small.kept, 3);
        assert_eq!(large.kept, 4);
    }
}
