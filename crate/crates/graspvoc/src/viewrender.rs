//! Orthographic rendering of a point cloud along its PCA axes, with an
//! exact pixel ↔ point correspondence and 2D mask back-projection.
//!
//! The image plane is spanned by the two highest-variance PCA axes; the
//! camera looks along the least-variance axis. Back-projection is exact
//! because every visible point records the pixel it rasterized to.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{pca_frame, vec3, GeometryError, Point3, PointCloud};

#[derive(Debug, Error)]
pub enum ViewError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("resolution {0}x{1} below minimum 16x16")]
    ResolutionTooSmall(u32, u32),
    #[error("margin_fraction {0} outside [0, 0.5)")]
    BadMargin(f64),
    #[error("depth_quantile {0} outside [0, 1]")]
    BadQuantile(f64),
}

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask {id} is empty")]
    EmptyMask { id: u32 },
    #[error("mask {id} pixel ({x}, {y}) outside {width}x{height}")]
    OutOfBounds {
        id: u32,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("mask {id} run-length data overruns {width}x{height} image")]
    RleOverrun { id: u32, width: u32, height: u32 },
}

/// An image pixel. Ordered row-major (y, then x) so sorted pixel sets
/// serialize in raster order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pixel {
    pub x: u32,
    pub y: u32,
}

impl Pixel {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl Ord for Pixel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Pixel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Orthographic view: image-plane axes, view axis, the 3D point that maps
/// to the image center, and the pixels-per-meter scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewFrame {
    pub u_axis: [f64; 3],
    pub v_axis: [f64; 3],
    pub view_axis: [f64; 3],
    /// 3D point projecting to the image center at the mid depth.
    pub center: Point3,
    /// Pixels per meter.
    pub scale: f64,
    pub resolution: (u32, u32),
}

impl ViewFrame {
    /// Continuous image coordinates and depth of a point:
    /// (u pixels, v pixels, depth meters relative to the view center).
    pub fn project(&self, p: Point3) -> (f64, f64, f64) {
        let q = p.offset_from(self.center);
        let u = vec3::dot(q, self.u_axis) * self.scale + self.resolution.0 as f64 / 2.0;
        let v = vec3::dot(q, self.v_axis) * self.scale + self.resolution.1 as f64 / 2.0;
        let d = vec3::dot(q, self.view_axis);
        (u, v, d)
    }

    /// The pixel a point rasterizes to (round half up, clamped to bounds).
    pub fn pixel_of(&self, p: Point3) -> Pixel {
        let (u, v, _) = self.project(p);
        Pixel::new(
            round_clamp(u, self.resolution.0),
            round_clamp(v, self.resolution.1),
        )
    }
}

fn round_clamp(coord: f64, size: u32) -> u32 {
    let r = (coord + 0.5).floor();
    if r < 0.0 {
        0
    } else if r > (size - 1) as f64 {
        size - 1
    } else {
        r as u32
    }
}

/// Chooses the rendering view for a cloud: u, v along the two
/// highest-variance PCA axes, camera along the least-variance axis, scale
/// fitting the projected bounding box inside `margin_fraction` on all sides.
pub fn compute_view(
    cloud: &PointCloud,
    resolution: (u32, u32),
    margin_fraction: f64,
) -> Result<ViewFrame, ViewError> {
    if resolution.0 < 16 || resolution.1 < 16 {
        return Err(ViewError::ResolutionTooSmall(resolution.0, resolution.1));
    }
    if !(0.0..0.5).contains(&margin_fraction) {
        return Err(ViewError::BadMargin(margin_fraction));
    }
    let frame = pca_frame(cloud)?;
    let [u_axis, v_axis, view_axis] = frame.axes;

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in cloud.iter() {
        let q = p.offset_from(frame.centroid);
        for (k, axis) in [u_axis, v_axis, view_axis].iter().enumerate() {
            let c = vec3::dot(q, *axis);
            lo[k] = lo[k].min(c);
            hi[k] = hi[k].max(c);
        }
    }

    let usable = [
        resolution.0 as f64 * (1.0 - 2.0 * margin_fraction),
        resolution.1 as f64 * (1.0 - 2.0 * margin_fraction),
    ];
    let mut scale = f64::INFINITY;
    for k in 0..2 {
        let extent = hi[k] - lo[k];
        if extent > 0.0 {
            scale = scale.min(usable[k] / extent);
        }
    }
    debug_assert!(scale.is_finite(), "non-degenerate cloud has u extent > 0");

    // center of the projected bounding box (and mid depth), back in 3D
    let mid = [
        (lo[0] + hi[0]) / 2.0,
        (lo[1] + hi[1]) / 2.0,
        (lo[2] + hi[2]) / 2.0,
    ];
    let center = frame
        .centroid
        .translate(vec3::add(
            vec3::add(vec3::scale(u_axis, mid[0]), vec3::scale(v_axis, mid[1])),
            vec3::scale(view_axis, mid[2]),
        ));

    Ok(ViewFrame {
        u_axis,
        v_axis,
        view_axis,
        center,
        scale,
        resolution,
    })
}

/// Rasterization output: the normalized depth image plus the exact
/// pixel ↔ point correspondence for visible points.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderResult {
    pub width: u32,
    pub height: u32,
    /// Row-major normalized nearest depth: 0 = nearest, 255 = farthest,
    /// empty pixels are 255.
    pub image: Vec<u8>,
    /// Visible points grouped by the pixel they rasterize to; point lists
    /// are in ascending index order.
    pub pixel_points: BTreeMap<Pixel, Vec<usize>>,
    /// Pixel of each visible point, `None` for occluded points.
    pub point_pixel: Vec<Option<Pixel>>,
}

impl RenderResult {
    /// All visible point indices, ascending.
    pub fn visible_points(&self) -> BTreeSet<usize> {
        self.point_pixel
            .iter()
            .enumerate()
            .filter_map(|(i, px)| px.map(|_| i))
            .collect()
    }

    /// All pixels that received at least one visible point.
    pub fn occupied_pixels(&self) -> BTreeSet<Pixel> {
        self.pixel_points.keys().copied().collect()
    }

    /// Binary 8-bit PGM (P5) encoding of the depth image.
    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(self.width, self.height, &self.image)
    }
}

/// Binary 8-bit PGM (P5).
pub fn encode_pgm(width: u32, height: u32, gray: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

pub fn write_pgm(path: impl AsRef<Path>, rr: &RenderResult) -> std::io::Result<()> {
    fs::write(path, rr.to_pgm())
}

/// Rasterizes the cloud into the view.
///
/// Every point lands on one pixel (round half up). A point is *visible*
/// iff its depth lies within the front `depth_quantile` fraction of the
/// depth range observed in its neighborhood of Chebyshev radius
/// `splat_radius_px`; with quantile 0 only the locally nearest depth
/// survives, with 1 everything does. Rasterization order is point order,
/// so output is deterministic.
pub fn render(
    cloud: &PointCloud,
    view: &ViewFrame,
    splat_radius_px: u32,
    depth_quantile: f64,
) -> Result<RenderResult, ViewError> {
    if !(0.0..=1.0).contains(&depth_quantile) {
        return Err(ViewError::BadQuantile(depth_quantile));
    }
    let (width, height) = view.resolution;
    let (w, h) = (width as usize, height as usize);
    let n = cloud.len();

    let mut pixels: Vec<Pixel> = Vec::with_capacity(n);
    let mut depths: Vec<f64> = Vec::with_capacity(n);
    let mut min_depth = vec![f64::INFINITY; w * h];
    let mut max_depth = vec![f64::NEG_INFINITY; w * h];
    for p in cloud.iter() {
        let (u, v, d) = view.project(p);
        let px = Pixel::new(round_clamp(u, width), round_clamp(v, height));
        let lin = px.y as usize * w + px.x as usize;
        min_depth[lin] = min_depth[lin].min(d);
        max_depth[lin] = max_depth[lin].max(d);
        pixels.push(px);
        depths.push(d);
    }

    let r = splat_radius_px as i64;
    let mut pixel_points: BTreeMap<Pixel, Vec<usize>> = BTreeMap::new();
    let mut point_pixel: Vec<Option<Pixel>> = vec![None; n];
    for i in 0..n {
        let px = pixels[i];
        let mut near = f64::INFINITY;
        let mut far = f64::NEG_INFINITY;
        for dy in -r..=r {
            let y = px.y as i64 + dy;
            if y < 0 || y >= h as i64 {
                continue;
            }
            for dx in -r..=r {
                let x = px.x as i64 + dx;
                if x < 0 || x >= w as i64 {
                    continue;
                }
                let lin = y as usize * w + x as usize;
                if min_depth[lin].is_finite() {
                    near = near.min(min_depth[lin]);
                    far = far.max(max_depth[lin]);
                }
            }
        }
        // the point's own pixel is always occupied, so near/far are finite
        let cutoff = near + depth_quantile * (far - near);
        if depths[i] <= cutoff {
            pixel_points.entry(px).or_default().push(i);
            point_pixel[i] = Some(px);
        }
    }

    // normalized nearest-depth image over occupied pixels
    let mut gmin = f64::INFINITY;
    let mut gmax = f64::NEG_INFINITY;
    for lin in 0..w * h {
        if min_depth[lin].is_finite() {
            gmin = gmin.min(min_depth[lin]);
            gmax = gmax.max(min_depth[lin]);
        }
    }
    let range = gmax - gmin;
    let mut image = vec![255u8; w * h];
    for lin in 0..w * h {
        if min_depth[lin].is_finite() {
            image[lin] = if range > 0.0 {
                ((min_depth[lin] - gmin) / range * 255.0 + 0.5).floor() as u8
            } else {
                0
            };
        }
    }

    Ok(RenderResult {
        width,
        height,
        image,
        pixel_points,
        point_pixel,
    })
}

/// A 2D mask: a non-empty set of in-bounds pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask2D {
    id: u32,
    pixels: BTreeSet<Pixel>,
}

impl Mask2D {
    pub fn new(
        id: u32,
        pixels: BTreeSet<Pixel>,
        resolution: (u32, u32),
    ) -> Result<Self, MaskError> {
        if pixels.is_empty() {
            return Err(MaskError::EmptyMask { id });
        }
        if let Some(bad) = pixels
            .iter()
            .find(|p| p.x >= resolution.0 || p.y >= resolution.1)
        {
            return Err(MaskError::OutOfBounds {
                id,
                x: bad.x,
                y: bad.y,
                width: resolution.0,
                height: resolution.1,
            });
        }
        Ok(Self { id, pixels })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn pixels(&self) -> &BTreeSet<Pixel> {
        &self.pixels
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn contains(&self, px: Pixel) -> bool {
        self.pixels.contains(&px)
    }
}

/// Recovers the 3D point indices under a mask: the union of the visible
/// points of every mask pixel. A mask over background yields the empty set.
pub fn backproject(mask: &Mask2D, rr: &RenderResult) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for px in mask.pixels() {
        if let Some(points) = rr.pixel_points.get(px) {
            out.extend(points.iter().copied());
        }
    }
    out
}

/// Mask exchange file: `{"masks": [{"id", "rle"}]}` with row-major
/// run-length encoding, alternating skip/fill counts starting with skip.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct MaskFile {
    pub masks: Vec<MaskRle>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct MaskRle {
    pub id: u32,
    pub rle: Vec<u32>,
}

/// Decodes a mask file against an image resolution.
pub fn decode_masks(file: &MaskFile, resolution: (u32, u32)) -> Result<Vec<Mask2D>, MaskError> {
    file.masks
        .iter()
        .map(|m| decode_rle(m, resolution))
        .collect()
}

fn decode_rle(mask: &MaskRle, resolution: (u32, u32)) -> Result<Mask2D, MaskError> {
    let (width, height) = resolution;
    let total = width as u64 * height as u64;
    let mut pixels = BTreeSet::new();
    let mut cursor: u64 = 0;
    let mut fill = false;
    for &run in &mask.rle {
        let run = run as u64;
        if cursor + run > total {
            return Err(MaskError::RleOverrun {
                id: mask.id,
                width,
                height,
            });
        }
        if fill {
            for lin in cursor..cursor + run {
                pixels.insert(Pixel::new((lin % width as u64) as u32, (lin / width as u64) as u32));
            }
        }
        cursor += run;
        fill = !fill;
    }
    Mask2D::new(mask.id, pixels, resolution)
}

/// Encodes masks row-major as alternating skip/fill runs starting with
/// skip; the trailing skip is omitted.
pub fn encode_masks(masks: &[Mask2D], resolution: (u32, u32)) -> MaskFile {
    let (width, _) = resolution;
    let masks = masks
        .iter()
        .map(|m| {
            // BTreeSet<Pixel> iterates row-major, so linear indices ascend
            let linear: Vec<u64> = m
                .pixels()
                .iter()
                .map(|px| px.y as u64 * width as u64 + px.x as u64)
                .collect();
            let mut rle: Vec<u32> = Vec::new();
            let mut cursor: u64 = 0;
            let mut i = 0;
            while i < linear.len() {
                let start = linear[i];
                let mut end = start + 1;
                i += 1;
                while i < linear.len() && linear[i] == end {
                    end += 1;
                    i += 1;
                }
                rle.push((start - cursor) as u32);
                rle.push((end - start) as u32);
                cursor = end;
            }
            MaskRle { id: m.id(), rle }
        })
        .collect();
    MaskFile { masks }
}
