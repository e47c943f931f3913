use alloc::vec::Vec;

use hashbrown::HashMap;

use super::{BuildConfig, BuildError, LodGeometry, NodeName, OctreeNode, PointRecord, RECORD_SIZE};
use crate::geom::Aabb;
use crate::grid::PoissonGrid;
use crate::point::ColorPoint;

/// Conservative in-memory cost of one stored point (record, grid entry, hash slot).
pub const BYTES_PER_POINT: u64 = 96;

#[derive(Debug)]
struct NodeState {
    grid: PoissonGrid,
    records: Vec<PointRecord>,
    overflow: bool,
}

/// Where [`SubtreeBuilder::insert`] put a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Stored(NodeName),
    /// The point descended to `spill_level`; the caller owns it from here.
    Spill(NodeName),
}

/// A finished node: records in acceptance order.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltNode {
    pub name: NodeName,
    pub records: Vec<PointRecord>,
    pub overflow: bool,
}

/// Incremental builder for the subtree under one node.
///
/// With a `spill_level`, points that would descend to that level are handed
/// back instead of stored, which lets a caller chunk a large build: the top
/// levels stay in memory while deeper points go to per-node spill files that
/// are later built by their own `SubtreeBuilder`. Because each node sees its
/// points in input order either way, chunked and single-pass builds agree.
#[derive(Debug)]
pub struct SubtreeBuilder<'g> {
    geom: &'g LodGeometry,
    capacity: usize,
    root: NodeName,
    spill_level: Option<u8>,
    nodes: HashMap<NodeName, NodeState>,
    stored: u64,
}

impl<'g> SubtreeBuilder<'g> {
    pub fn new(geom: &'g LodGeometry, leaf_capacity: u32, root: NodeName, spill_level: Option<u8>) -> Self {
        debug_assert!(spill_level.is_none_or(|l| l > root.level() && l <= geom.max_level()));
        SubtreeBuilder {
            geom,
            capacity: leaf_capacity.max(1) as usize,
            root,
            spill_level,
            nodes: HashMap::new(),
            stored: 0,
        }
    }

    pub fn root(&self) -> NodeName {
        self.root
    }

    /// Places one record. The record must lie inside the root node's cube.
    pub fn insert(&mut self, rec: PointRecord) -> Placement {
        let coords = self.geom.grid_coords(&rec);
        let pos = rec.local();
        let max_level = self.geom.max_level();
        let mut name = self.root;
        loop {
            let level = name.level();
            if self.spill_level == Some(level) {
                return Placement::Spill(name);
            }
            let geom = self.geom;
            let node = self.nodes.entry(name).or_insert_with(|| NodeState {
                grid: PoissonGrid::new(geom.spacing(level)),
                records: Vec::new(),
                overflow: false,
            });
            if node.grid.len() < self.capacity && !node.grid.conflicts(pos) {
                node.grid.insert(pos);
                node.records.push(rec);
                self.stored += 1;
                return Placement::Stored(name);
            }
            if level == max_level {
                node.overflow = true;
                node.records.push(rec);
                self.stored += 1;
                return Placement::Stored(name);
            }
            name = name.child(self.geom.child_octant(coords, level));
        }
    }

    pub fn stored_points(&self) -> u64 {
        self.stored
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Rough resident size of the builder.
    pub fn approx_bytes(&self) -> u64 {
        self.stored * BYTES_PER_POINT
    }

    /// Nodes sorted by name.
    pub fn finish(self) -> Vec<BuiltNode> {
        let mut out: Vec<BuiltNode> = self
            .nodes
            .into_iter()
            .map(|(name, s)| BuiltNode { name, records: s.records, overflow: s.overflow })
            .collect();
        out.sort_by_key(|n| n.name);
        out
    }
}

/// Computes hierarchy records for nodes given in name order.
///
/// Byte offsets follow the same order, so the node blobs concatenated in this
/// order form `octree.bin`.
pub fn assemble_hierarchy<I>(geom: &LodGeometry, entries: I) -> Result<Vec<OctreeNode>, BuildError>
where
    I: IntoIterator<Item = (NodeName, u64, bool)>,
{
    let mut nodes: Vec<OctreeNode> = Vec::new();
    let mut index: HashMap<NodeName, usize> = HashMap::new();
    let mut offset = 0u64;
    for (name, num_points, overflow) in entries {
        if let Some(prev) = nodes.last() {
            if prev.name >= name {
                return Err(BuildError::Unsorted(name));
            }
        }
        if let Some(parent) = name.parent() {
            let &pi = index.get(&parent).ok_or(BuildError::Orphan(name))?;
            nodes[pi].child_mask |= 1 << name.octant();
        }
        let byte_size = num_points * RECORD_SIZE;
        index.insert(name, nodes.len());
        nodes.push(OctreeNode {
            name,
            level: name.level(),
            bounds: geom.node_bounds(name),
            spacing: geom.spacing(name.level()),
            num_points,
            byte_offset: offset,
            byte_size,
            child_mask: 0,
            overflow,
        });
        offset += byte_size;
    }
    Ok(nodes)
}

/// A complete build held in memory; `blobs[i]` belongs to `nodes[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LodBuild {
    pub geometry: LodGeometry,
    pub nodes: Vec<OctreeNode>,
    pub blobs: Vec<Vec<PointRecord>>,
}

impl LodBuild {
    pub fn total_points(&self) -> u64 {
        self.nodes.iter().map(|n| n.num_points).sum()
    }
}

/// Single-pass build of the whole tree in memory.
pub fn build_in_memory<I>(points: I, bounds: Aabb, cfg: &BuildConfig) -> Result<LodBuild, BuildError>
where
    I: IntoIterator<Item = ColorPoint>,
{
    let geometry = LodGeometry::new(bounds, cfg)?;
    let mut builder = SubtreeBuilder::new(&geometry, cfg.leaf_capacity, NodeName::ROOT, None);
    let mut count = 0u64;
    for p in points {
        if !p.is_finite() {
            return Err(BuildError::NonFinite { index: count });
        }
        if !bounds.contains(p.position()) {
            return Err(BuildError::OutsideBounds { index: count });
        }
        builder.insert(geometry.quantize(&p));
        count += 1;
    }
    if count == 0 {
        return Err(BuildError::EmptyInput);
    }
    let built = builder.finish();
    let nodes = assemble_hierarchy(&geometry, built.iter().map(|n| (n.name, n.records.len() as u64, n.overflow)))?;
    let blobs = built.into_iter().map(|n| n.records).collect();
    Ok(LodBuild { geometry, nodes, blobs })
}
