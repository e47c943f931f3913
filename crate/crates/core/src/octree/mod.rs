//! Multi-level octree LOD: node naming, record layout, geometry, building and
//! view-dependent node selection.
//!
//! Every node holds a Poisson-disk sample of the points that reached it: no
//! two stored points are closer than the node spacing, and the spacing halves
//! with each level. A point that does not fit in a node (too close to an
//! accepted point, or the node is full) moves to the child octant containing it.

mod build;
mod select;

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::geom::{Aabb, Vec3};
use crate::math::{floor, sqrt};
use crate::point::ColorPoint;

pub use build::{assemble_hierarchy, BYTES_PER_POINT, build_in_memory, BuiltNode, LodBuild, Placement, SubtreeBuilder};
pub use select::{adaptive_point_size, projected_extent, select_nodes, LodHierarchy, LodSelection, SelectError};

/// Deepest level a node may have. Grid coordinates at this depth fit in `u32`.
pub const MAX_LEVEL: u8 = 20;

/// Bytes per stored point: 3 x f32 offset, 3 x u8 color, 1 pad byte.
pub const RECORD_SIZE: u64 = 16;

/// Layout descriptor written into the manifest.
pub const RECORD_LAYOUT: &str = "f32x3_rel+u8rgb+pad";

/// Root spacing is the root cube diagonal divided by this in `Auto` mode.
pub const AUTO_SPACING_DIVISOR: f64 = 250.0;

/// Smallest root cube side, used when the input is a single point or flat.
pub const MIN_ROOT_SIDE: f64 = 1e-3;

/// Locational code of a node: `r` followed by one octant digit per level.
///
/// Ordering matches the lexicographic order of the textual names, which is a
/// depth-first pre-order of the tree.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeName {
    level: u8,
    code: u64,
}

impl NodeName {
    pub const ROOT: NodeName = NodeName { level: 0, code: 0 };

    pub fn level(self) -> u8 {
        self.level
    }

    /// Child in octant `index` (bit 2 = x, bit 1 = y, bit 0 = z).
    pub fn child(self, index: u8) -> NodeName {
        debug_assert!(index < 8 && self.level < 21);
        NodeName { level: self.level + 1, code: (self.code << 3) | index as u64 }
    }

    pub fn parent(self) -> Option<NodeName> {
        (self.level > 0).then(|| NodeName { level: self.level - 1, code: self.code >> 3 })
    }

    /// Octant of this node within its parent. Meaningless for the root.
    pub fn octant(self) -> u8 {
        (self.code & 7) as u8
    }

    pub fn is_ancestor_of(self, other: NodeName) -> bool {
        other.level > self.level && (other.code >> (3 * (other.level - self.level) as u32)) == self.code
    }

    /// Octant digits from the root downward.
    pub fn digits(self) -> impl Iterator<Item = u8> {
        let NodeName { level, code } = self;
        (0..level).map(move |i| ((code >> (3 * (level - 1 - i) as u32)) & 7) as u8)
    }

    /// Integer position of the node among the `2^level` cells per axis.
    pub fn cell(self) -> [u64; 3] {
        let mut c = [0u64; 3];
        for d in self.digits() {
            c[0] = (c[0] << 1) | ((d >> 2) & 1) as u64;
            c[1] = (c[1] << 1) | ((d >> 1) & 1) as u64;
            c[2] = (c[2] << 1) | (d & 1) as u64;
        }
        c
    }

    fn aligned(self) -> u64 {
        self.code << (3 * (21 - self.level as u32))
    }
}

impl Ord for NodeName {
    fn cmp(&self, other: &Self) -> Ordering {
        self.aligned().cmp(&other.aligned()).then(self.level.cmp(&other.level))
    }
}

impl PartialOrd for NodeName {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("r")?;
        for d in self.digits() {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for NodeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeName({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid node name {0:?}")]
pub struct ParseNodeNameError(pub String);

impl FromStr for NodeName {
    type Err = ParseNodeNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseNodeNameError(s.into());
        let digits = s.strip_prefix('r').ok_or_else(err)?;
        if digits.len() > MAX_LEVEL as usize {
            return Err(err());
        }
        let mut name = NodeName::ROOT;
        for b in digits.bytes() {
            match b {
                b'0'..=b'7' => name = name.child(b - b'0'),
                _ => return Err(err()),
            }
        }
        Ok(name)
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for NodeName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for NodeName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One stored point: position relative to the root cube minimum, plus color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointRecord {
    pub offset: [f32; 3],
    pub rgb: [u8; 3],
}

impl PointRecord {
    pub fn to_bytes(&self) -> [u8; RECORD_SIZE as usize] {
        let mut b = [0u8; RECORD_SIZE as usize];
        b[0..4].copy_from_slice(&self.offset[0].to_le_bytes());
        b[4..8].copy_from_slice(&self.offset[1].to_le_bytes());
        b[8..12].copy_from_slice(&self.offset[2].to_le_bytes());
        b[12..15].copy_from_slice(&self.rgb);
        b
    }

    pub fn from_bytes(b: &[u8; RECORD_SIZE as usize]) -> Self {
        let f = |i: usize| f32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
        PointRecord { offset: [f(0), f(4), f(8)], rgb: [b[12], b[13], b[14]] }
    }

    /// Offset as f64; the space in which node spacing is enforced.
    pub fn local(&self) -> Vec3 {
        Vec3::new(self.offset[0] as f64, self.offset[1] as f64, self.offset[2] as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootSpacing {
    /// Root cube diagonal / 250.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildConfig {
    pub root_spacing: RootSpacing,
    pub max_level: u8,
    pub leaf_capacity: u32,
    /// Bytes available to the out-of-core chunking stage.
    pub memory_budget: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig { root_spacing: RootSpacing::Auto, max_level: 12, leaf_capacity: 20_000, memory_budget: 1 << 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error("max_level {0} exceeds the supported maximum of {MAX_LEVEL}")]
    MaxLevel(u8),
    #[error("leaf_capacity must be at least 1")]
    LeafCapacity,
    #[error("root spacing must be positive and finite, got {0}")]
    RootSpacing(f64),
    #[error("bounds must be finite")]
    Bounds,
    #[error("input is empty")]
    EmptyInput,
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: u64 },
    #[error("point {index} lies outside the declared bounds")]
    OutsideBounds { index: u64 },
    #[error("memory budget of {budget} bytes is too small; the chunking stage needs at least {needed}")]
    MemoryBudget { budget: u64, needed: u64 },
    #[error("hierarchy entries are not strictly sorted at {0}")]
    Unsorted(NodeName),
    #[error("node {0} has no parent in the hierarchy")]
    Orphan(NodeName),
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), BuildError> {
        if self.max_level > MAX_LEVEL {
            return Err(BuildError::MaxLevel(self.max_level));
        }
        if self.leaf_capacity == 0 {
            return Err(BuildError::LeafCapacity);
        }
        if let RootSpacing::Fixed(s) = self.root_spacing {
            if !(s > 0.0 && s.is_finite()) {
                return Err(BuildError::RootSpacing(s));
            }
        }
        Ok(())
    }
}

/// The fixed frame of a build: root cube, root spacing and depth limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LodGeometry {
    cube: Aabb,
    root_spacing: f64,
    max_level: u8,
}

impl LodGeometry {
    /// Frame for points inside `tight` under `cfg`.
    pub fn new(tight: Aabb, cfg: &BuildConfig) -> Result<Self, BuildError> {
        cfg.validate()?;
        if !(tight.min.is_finite() && tight.max.is_finite()) {
            return Err(BuildError::Bounds);
        }
        let cube = tight.cubified(MIN_ROOT_SIDE);
        let root_spacing = match cfg.root_spacing {
            RootSpacing::Auto => cube.diagonal() / AUTO_SPACING_DIVISOR,
            RootSpacing::Fixed(s) => s,
        };
        Ok(LodGeometry { cube, root_spacing, max_level: cfg.max_level })
    }

    /// Rebuilds a frame from stored manifest values.
    pub fn from_parts(cube: Aabb, root_spacing: f64, max_level: u8) -> Self {
        LodGeometry { cube, root_spacing, max_level }
    }

    pub fn cube(&self) -> Aabb {
        self.cube
    }

    pub fn root_spacing(&self) -> f64 {
        self.root_spacing
    }

    pub fn max_level(&self) -> u8 {
        self.max_level
    }

    pub fn side(&self) -> f64 {
        self.cube.max.x - self.cube.min.x
    }

    pub fn spacing(&self, level: u8) -> f64 {
        self.root_spacing / (1u64 << level) as f64
    }

    pub fn node_side(&self, level: u8) -> f64 {
        self.side() / (1u64 << level) as f64
    }

    pub fn node_bounds(&self, name: NodeName) -> Aabb {
        let s = self.node_side(name.level());
        let c = name.cell();
        let min = self.cube.min + Vec3::new(c[0] as f64 * s, c[1] as f64 * s, c[2] as f64 * s);
        let max = self.cube.min + Vec3::new((c[0] + 1) as f64 * s, (c[1] + 1) as f64 * s, (c[2] + 1) as f64 * s);
        Aabb { min, max }
    }

    /// Half the diagonal of a node cube at `level`.
    pub fn node_radius(&self, level: u8) -> f64 {
        self.node_side(level) * (sqrt(3.0) * 0.5)
    }

    pub fn quantize(&self, p: &ColorPoint) -> PointRecord {
        let o = p.position() - self.cube.min;
        PointRecord { offset: [o.x as f32, o.y as f32, o.z as f32], rgb: p.rgb() }
    }

    pub fn to_world(&self, rec: &PointRecord) -> ColorPoint {
        ColorPoint::at(self.cube.min + rec.local(), rec.rgb)
    }

    /// Cell of `rec` among the `2^max_level` cells per axis.
    pub fn grid_coords(&self, rec: &PointRecord) -> [u32; 3] {
        let cells = (1u64 << self.max_level) as f64;
        let scale = cells / self.side();
        let hi = (1u64 << self.max_level) - 1;
        let q = |v: f32| -> u32 {
            let c = floor(v as f64 * scale);
            if c <= 0.0 {
                0
            } else {
                (c as u64).min(hi) as u32
            }
        };
        [q(rec.offset[0]), q(rec.offset[1]), q(rec.offset[2])]
    }

    /// Octant at `level + 1` containing a point with grid coordinates `coords`.
    pub fn child_octant(&self, coords: [u32; 3], level: u8) -> u8 {
        debug_assert!(level < self.max_level);
        let shift = (self.max_level - level - 1) as u32;
        let bit = |c: u32| ((c >> shift) & 1) as u8;
        (bit(coords[0]) << 2) | (bit(coords[1]) << 1) | bit(coords[2])
    }

    /// Node at `level` containing a point with grid coordinates `coords`.
    pub fn node_at(&self, coords: [u32; 3], level: u8) -> NodeName {
        let mut name = NodeName::ROOT;
        for l in 0..level {
            name = name.child(self.child_octant(coords, l));
        }
        name
    }
}

/// Hierarchy record of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct OctreeNode {
    pub name: NodeName,
    pub level: u8,
    pub bounds: Aabb,
    pub spacing: f64,
    pub num_points: u64,
    pub byte_offset: u64,
    pub byte_size: u64,
    pub child_mask: u8,
    /// Max-level node that also holds points violating its spacing.
    pub overflow: bool,
}

/// Dataset-level metadata written as `manifest.json`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LodManifest {
    pub version: u32,
    pub bounds: Aabb,
    pub root_spacing: f64,
    pub total_points: u64,
    pub record: String,
    pub hierarchy_digest: String,
    pub max_level: u8,
    pub overflow_nodes: Vec<NodeName>,
}
