//! Core numeric primitives: points, clouds, PCA frames, and exact
//! nearest-neighbor queries.
//!
//! Point order is load order and is treated as identity everywhere
//! downstream — subpart membership, label propagation, and evaluation all
//! refer to points by index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod kdtree;
mod pca;
pub mod io;

pub use kdtree::NearestIndex;
pub use pca::{pca_frame, PcaFrame};

/// Errors from geometric primitives.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),
    #[error("non-finite coordinate at point {0}")]
    NonFinitePoint(usize),
}

pub(crate) mod vec3 {
    //! Small helpers on `[f64; 3]` unit vectors and offsets.

    pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    pub fn norm(a: [f64; 3]) -> f64 {
        dot(a, a).sqrt()
    }

    pub fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    pub fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    pub fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    pub fn normalize(a: [f64; 3]) -> [f64; 3] {
        let n = norm(a);
        scale(a, 1.0 / n)
    }
}

/// A 3D point in meters, object frame. Coordinates are always finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Offset from `other` to `self`.
    pub fn offset_from(self, other: Point3) -> [f64; 3] {
        [self.x - other.x, self.y - other.y, self.z - other.z]
    }

    /// Squared Euclidean distance. The canonical distance expression: every
    /// nearest-neighbor path (linear scan, k-d tree) uses this exact
    /// arithmetic so distances compare bit-equal across query paths.
    pub fn distance_sq(self, other: Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(self, other: Point3) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn translate(self, d: [f64; 3]) -> Point3 {
        Point3::new(self.x + d[0], self.y + d[1], self.z + d[2])
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        p.to_array()
    }
}

/// An ordered, non-empty list of points. The index of a point is its
/// identity: loaders preserve file order, and no operation reorders points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    frame_id: String,
}

impl PointCloud {
    /// Builds a cloud, rejecting empty input and non-finite coordinates.
    pub fn new(points: Vec<Point3>, frame_id: impl Into<String>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::EmptyCloud);
        }
        if let Some(bad) = points.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinitePoint(bad));
        }
        Ok(Self {
            points,
            frame_id: frame_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false: the empty cloud is unrepresentable.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn get(&self, index: usize) -> Option<Point3> {
        self.points.get(index).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = Point3> + '_ {
        self.points.iter().copied()
    }

    pub fn centroid(&self) -> Point3 {
        let n = self.points.len() as f64;
        let mut s = [0.0; 3];
        for p in &self.points {
            s[0] += p.x;
            s[1] += p.y;
            s[2] += p.z;
        }
        Point3::new(s[0] / n, s[1] / n, s[2] / n)
    }

    /// Exact nearest point by linear scan; ties broken by lowest index.
    pub fn nearest(&self, query: Point3) -> (usize, f64) {
        let mut best_idx = 0;
        let mut best_d2 = query.distance_sq(self.points[0]);
        for (i, p) in self.points.iter().enumerate().skip(1) {
            let d2 = query.distance_sq(*p);
            if d2 < best_d2 {
                best_d2 = d2;
                best_idx = i;
            }
        }
        (best_idx, best_d2.sqrt())
    }

    /// New cloud holding the points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, GeometryError> {
        let mut points = Vec::with_capacity(indices.len());
        for &i in indices {
            points.push(
                self.get(i)
                    .ok_or_else(|| GeometryError::DegenerateCloud(format!("index {i} out of range")))?,
            );
        }
        PointCloud::new(points, self.frame_id.clone())
    }
}

/// Minimum Euclidean distance from `query` to any cloud point. Exact.
pub fn nearest_distance(query: Point3, cloud: &PointCloud) -> f64 {
    cloud.nearest(query).1
}

/// Index of the cloud point closest to `query`; ties go to the lowest index.
pub fn nearest_index(query: Point3, cloud: &PointCloud) -> usize {
    cloud.nearest(query).0
}
