//! Exact nearest-neighbor index over a point cloud.
//!
//! A k-d tree used for repeated queries (scoring a whole archive, label
//! propagation). The contract is exactness: results are bit-identical to a
//! linear scan, including the lowest-index tie rule, so callers may swap
//! the index for a scan without observable change.

use super::{GeometryError, Point3, PointCloud};

#[derive(Debug, Clone)]
struct Node {
    /// Index into the owning cloud.
    point: usize,
    axis: u8,
    left: i32,
    right: i32,
}

/// Spatial index answering exact nearest-point queries.
#[derive(Debug, Clone)]
pub struct NearestIndex {
    points: Vec<Point3>,
    nodes: Vec<Node>,
    root: i32,
}

impl NearestIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self, GeometryError> {
        if cloud.len() == 0 {
            return Err(GeometryError::EmptyCloud);
        }
        let points = cloud.points().to_vec();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_node(&points, &mut order, &mut nodes);
        Ok(Self {
            points,
            nodes,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Nearest point to `query`; ties broken by lowest point index.
    /// Returns (index, distance).
    pub fn nearest(&self, query: Point3) -> (usize, f64) {
        let mut best_idx = usize::MAX;
        let mut best_d2 = f64::INFINITY;
        self.search(self.root, query, &mut best_idx, &mut best_d2);
        (best_idx, best_d2.sqrt())
    }

    /// Minimum distance from `query` to any indexed point.
    pub fn nearest_distance(&self, query: Point3) -> f64 {
        self.nearest(query).1
    }

    fn search(&self, node: i32, query: Point3, best_idx: &mut usize, best_d2: &mut f64) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = self.points[n.point];
        let d2 = query.distance_sq(p);
        if d2 < *best_d2 || (d2 == *best_d2 && n.point < *best_idx) {
            *best_d2 = d2;
            *best_idx = n.point;
        }
        let qc = coord(query, n.axis);
        let pc = coord(p, n.axis);
        let diff = qc - pc;
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, query, best_idx, best_d2);
        // the far side may still hold an equal-distance, lower-index point,
        // so descend on <= rather than <
        if diff * diff <= *best_d2 {
            self.search(far, query, best_idx, best_d2);
        }
    }
}

fn coord(p: Point3, axis: u8) -> f64 {
    match axis {
        0 => p.x,
        1 => p.y,
        _ => p.z,
    }
}

fn build_node(points: &[Point3], order: &mut [usize], nodes: &mut Vec<Node>) -> i32 {
    if order.is_empty() {
        return -1;
    }
    // split on the axis with the largest extent; deterministic tie to x,y,z
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let a = points[i].to_array();
        for k in 0..3 {
            lo[k] = lo[k].min(a[k]);
            hi[k] = hi[k].max(a[k]);
        }
    }
    let mut axis = 0u8;
    let mut extent = hi[0] - lo[0];
    for k in 1..3 {
        if hi[k] - lo[k] > extent {
            extent = hi[k] - lo[k];
            axis = k as u8;
        }
    }
    order.sort_unstable_by(|&a, &b| {
        coord(points[a], axis)
            .total_cmp(&coord(points[b], axis))
            .then(a.cmp(&b))
    });
    let mid = order.len() / 2;
    let point = order[mid];
    let (left_slice, rest) = order.split_at_mut(mid);
    let right_slice = &mut rest[1..];
    let left = build_node(points, left_slice, nodes);
    let right = build_node(points, right_slice, nodes);
    nodes.push(Node {
        point,
        axis,
        left,
        right,
    });
    (nodes.len() - 1) as i32
}
