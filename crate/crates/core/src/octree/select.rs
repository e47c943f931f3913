use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use hashbrown::HashMap;
use thiserror::Error;

use super::{NodeName, OctreeNode};
use crate::camera::CameraView;

const NIL: u32 = u32::MAX;

/// Nodes plus parent/child links, indexed for traversal.
#[derive(Debug, Clone)]
pub struct LodHierarchy {
    nodes: Vec<OctreeNode>,
    children: Vec<[u32; 8]>,
    by_name: HashMap<NodeName, u32>,
}

impl LodHierarchy {
    /// `nodes` must contain the root and be closed under parents.
    pub fn new(nodes: Vec<OctreeNode>) -> Self {
        let by_name: HashMap<NodeName, u32> = nodes.iter().enumerate().map(|(i, n)| (n.name, i as u32)).collect();
        let mut children = alloc::vec![[NIL; 8]; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            if let Some(&pi) = n.name.parent().and_then(|p| by_name.get(&p)) {
                children[pi as usize][n.name.octant() as usize] = i as u32;
            }
        }
        LodHierarchy { nodes, children, by_name }
    }

    pub fn nodes(&self) -> &[OctreeNode] {
        &self.nodes
    }

    pub fn get(&self, name: NodeName) -> Option<&OctreeNode> {
        self.by_name.get(&name).map(|&i| &self.nodes[i as usize])
    }

    pub fn root(&self) -> Option<&OctreeNode> {
        self.get(NodeName::ROOT)
    }

    pub fn children(&self, name: NodeName) -> impl Iterator<Item = &OctreeNode> {
        let slots = self.by_name.get(&name).map(|&i| self.children[i as usize]).unwrap_or([NIL; 8]);
        slots.into_iter().filter(|&c| c != NIL).map(move |c| &self.nodes[c as usize])
    }
}

/// On-screen size of a node in pixels: `h * r / (d * tan(fov/2))`, where `r` is
/// the node's bounding radius and `d` the camera distance to its box.
/// Infinite when the camera is inside the box.
pub fn projected_extent(node: &OctreeNode, view: &CameraView) -> f64 {
    let d = node.bounds.distance_to(view.position);
    if d == 0.0 {
        return f64::INFINITY;
    }
    let radius = node.bounds.size().norm() * 0.5;
    view.viewport_height * radius / (d * view.half_fov_tan())
}

/// Point sprite size in pixels such that a point roughly covers the node
/// spacing on screen, clamped to `[1, 16]`.
pub fn adaptive_point_size(node: &OctreeNode, view: &CameraView) -> f64 {
    let d = node.bounds.center().distance(view.position);
    let size = view.viewport_height * node.spacing / (d * 2.0 * view.half_fov_tan());
    if size.is_nan() {
        return 16.0;
    }
    size.clamp(1.0, 16.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectError {
    #[error("point budget must be positive")]
    ZeroBudget,
    #[error("budget below root size: root holds {root_points} points, budget is {budget}")]
    BudgetBelowRoot { root_points: u64, budget: u64 },
    #[error("hierarchy has no root node")]
    MissingRoot,
}

/// Nodes chosen for one view, in admission order. Always a rooted subtree.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LodSelection {
    pub nodes: Vec<NodeName>,
    pub total_points: u64,
    pub bytes: u64,
}

struct Candidate {
    extent: f64,
    name: NodeName,
    index: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl Ord for Candidate {
    // Max-heap order: larger extent first, then smaller name.
    fn cmp(&self, other: &Self) -> Ordering {
        self.extent.total_cmp(&other.extent).then_with(|| other.name.cmp(&self.name))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Chooses nodes to render under a point budget.
///
/// A non-root node is a candidate when its box intersects the view frustum
/// and its projected extent is at least `min_pixels`. Candidates are admitted
/// in order of decreasing projected extent (ties by name), each only after its
/// parent, until the next one would exceed the budget. Since a child never
/// outranks its parent, the result is the longest budget-feasible prefix of
/// the global ranking, which makes it monotone in the budget.
pub fn select_nodes(
    hierarchy: &LodHierarchy,
    view: &CameraView,
    point_budget: u64,
    min_pixels: f64,
) -> Result<LodSelection, SelectError> {
    if point_budget == 0 {
        return Err(SelectError::ZeroBudget);
    }
    let root_index = *hierarchy.by_name.get(&NodeName::ROOT).ok_or(SelectError::MissingRoot)?;
    let root = &hierarchy.nodes[root_index as usize];
    if root.num_points > point_budget {
        return Err(SelectError::BudgetBelowRoot { root_points: root.num_points, budget: point_budget });
    }
    let frustum = view.frustum();
    let mut heap = BinaryHeap::new();
    heap.push(Candidate { extent: projected_extent(root, view), name: root.name, index: root_index });
    let mut sel = LodSelection::default();
    while let Some(c) = heap.pop() {
        let node = &hierarchy.nodes[c.index as usize];
        if sel.total_points.saturating_add(node.num_points) > point_budget {
            break;
        }
        sel.total_points += node.num_points;
        sel.bytes += node.byte_size;
        sel.nodes.push(node.name);
        for &ci in hierarchy.children[c.index as usize].iter().filter(|&&ci| ci != NIL) {
            let child = &hierarchy.nodes[ci as usize];
            if !frustum.intersects(&child.bounds) {
                continue;
            }
            let extent = projected_extent(child, view);
            if extent >= min_pixels {
                heap.push(Candidate { extent, name: child.name, index: ci });
            }
        }
    }
    Ok(sel)
}
