//! Hashed occupancy grid answering "is any stored point closer than r?".
//!
//! Cells have edge `r`, so any point within `r` of a query lies in the 3x3x3
//! block around the query's cell. Points in a cell are chained through `next`.

use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::geom::Vec3;
use crate::math::floor;

const NIL: u32 = u32::MAX;

type CellKey = [i64; 3];

#[derive(Debug, Clone)]
pub struct PoissonGrid {
    radius: f64,
    radius_sq: f64,
    inv_edge: f64,
    heads: HashMap<CellKey, u32>,
    next: Vec<u32>,
    positions: Vec<Vec3>,
}

impl PoissonGrid {
    /// `radius` must be positive and finite.
    pub fn new(radius: f64) -> Self {
        debug_assert!(radius > 0.0 && radius.is_finite());
        PoissonGrid {
            radius,
            radius_sq: radius * radius,
            inv_edge: 1.0 / radius,
            heads: HashMap::new(),
            next: Vec::new(),
            positions: Vec::new(),
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn cell_count(&self) -> usize {
        self.heads.len()
    }

    fn key(&self, p: Vec3) -> CellKey {
        [
            floor(p.x * self.inv_edge) as i64,
            floor(p.y * self.inv_edge) as i64,
            floor(p.z * self.inv_edge) as i64,
        ]
    }

    fn cell_conflicts(&self, key: &CellKey, p: Vec3) -> bool {
        let mut cur = match self.heads.get(key) {
            Some(&h) => h,
            None => return false,
        };
        while cur != NIL {
            if self.positions[cur as usize].distance_squared(p) < self.radius_sq {
                return true;
            }
            cur = self.next[cur as usize];
        }
        false
    }

    /// True when some stored point lies strictly closer than the radius.
    pub fn conflicts(&self, p: Vec3) -> bool {
        let k = self.key(p);
        if self.cell_conflicts(&k, p) {
            return true;
        }
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let n = [k[0] + dx, k[1] + dy, k[2] + dz];
                    if self.cell_conflicts(&n, p) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Whether inserting `p` would occupy a new cell.
    pub fn would_open_cell(&self, p: Vec3) -> bool {
        !self.heads.contains_key(&self.key(p))
    }

    /// Stores `p` unconditionally and returns its insertion index.
    pub fn insert(&mut self, p: Vec3) -> u32 {
        let idx = self.positions.len() as u32;
        let key = self.key(p);
        let head = self.heads.entry(key).or_insert(NIL);
        self.next.push(*head);
        *head = idx;
        self.positions.push(p);
        idx
    }

    /// Inserts `p` if it keeps the Poisson property; returns whether it did.
    pub fn try_insert(&mut self, p: Vec3) -> bool {
        if self.conflicts(p) {
            false
        } else {
            self.insert(p);
            true
        }
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_within_radius_accepts_at_radius() {
        let mut g = PoissonGrid::new(1.0);
        assert!(g.try_insert(Vec3::ZERO));
        assert!(!g.try_insert(Vec3::new(0.999, 0.0, 0.0)));
        assert!(g.try_insert(Vec3::new(1.0, 0.0, 0.0)));
        assert!(!g.try_insert(Vec3::new(-0.5, -0.5, -0.5)));
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn neighbor_across_cell_boundary_is_found() {
        let mut g = PoissonGrid::new(0.5);
        g.insert(Vec3::new(0.99, 0.0, 0.0));
        assert!(g.conflicts(Vec3::new(1.01, 0.0, 0.0)));
        assert!(g.conflicts(Vec3::new(0.6, 0.2, -0.1)));
    }
}
