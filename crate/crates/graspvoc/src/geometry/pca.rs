//! PCA frame extraction via a cyclic Jacobi eigen-decomposition of the
//! 3×3 point covariance.

use super::{vec3, GeometryError, Point3, PointCloud};

/// Relative eigenvalue gap below which two eigenvalues are treated as a
/// degenerate cluster whose eigenvectors are rebuilt deterministically.
const DEGENERATE_GAP: f64 = 1e-12;

/// Jacobi convergence tolerance on the off-diagonal norm, relative to the
/// covariance trace.
const JACOBI_TOL: f64 = 1e-12;

/// Centroid plus an orthonormal, right-handed basis ordered by descending
/// explained variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaFrame {
    pub centroid: Point3,
    /// Unit axes, descending variance. `axes[2]` is the least-variance
    /// direction (the view axis for rendering).
    pub axes: [[f64; 3]; 3],
    /// Eigenvalues of the covariance (m²), sorted descending, clamped to 0.
    pub variances: [f64; 3],
}

/// Computes the PCA frame of a cloud.
///
/// Covariance uses the population (1/N) normalization. Axis signs are fixed
/// so each axis's largest-magnitude component is positive; if the resulting
/// basis is left-handed the third axis is negated. Near-equal eigenvalues
/// (gap below `1e-12 · trace`) have their eigenvectors rebuilt by
/// Gram-Schmidt against the world axes in (x, y, z) order so symmetric
/// objects get a reproducible frame.
pub fn pca_frame(cloud: &PointCloud) -> Result<PcaFrame, GeometryError> {
    if cloud.len() < 3 {
        return Err(GeometryError::DegenerateCloud(format!(
            "need at least 3 points, got {}",
            cloud.len()
        )));
    }
    let centroid = cloud.centroid();
    let n = cloud.len() as f64;

    let mut cov = [[0.0f64; 3]; 3];
    for p in cloud.iter() {
        let d = p.offset_from(centroid);
        for i in 0..3 {
            for j in i..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for i in 0..3 {
        for j in i..3 {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }

    let trace = cov[0][0] + cov[1][1] + cov[2][2];
    if trace <= 1e-24 {
        return Err(GeometryError::DegenerateCloud(
            "zero covariance (all points coincide)".to_string(),
        ));
    }

    let (values, vectors) = jacobi_eigen(cov, trace * JACOBI_TOL);

    // Sort eigenpairs by descending eigenvalue.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut vals = [0.0; 3];
    let mut axes = [[0.0; 3]; 3];
    for (slot, &src) in order.iter().enumerate() {
        vals[slot] = values[src].max(0.0);
        axes[slot] = [vectors[0][src], vectors[1][src], vectors[2][src]];
    }

    rebuild_degenerate_clusters(&mut axes, &vals, trace);

    for axis in axes.iter_mut() {
        fix_sign(axis);
    }
    // Right-handedness wins over the sign rule on the third axis.
    let det = vec3::dot(axes[0], vec3::cross(axes[1], axes[2]));
    if det < 0.0 {
        axes[2] = vec3::scale(axes[2], -1.0);
    }

    Ok(PcaFrame {
        centroid,
        axes,
        variances: vals,
    })
}

/// Cyclic Jacobi on a symmetric 3×3 matrix. Returns (eigenvalues,
/// eigenvector matrix with eigenvectors in columns).
fn jacobi_eigen(mut a: [[f64; 3]; 3], tol: f64) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _sweep in 0..64 {
        let off =
            (2.0 * (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2])).sqrt();
        if off <= tol {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = if theta >= 0.0 {
                1.0 / (theta + (theta * theta + 1.0).sqrt())
            } else {
                -1.0 / (-theta + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;

            // rotate rows/columns p and q of a
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
            // accumulate rotation into v
            for k in 0..3 {
                let vkp = v[k][p];
                let vkq = v[k][q];
                v[k][p] = c * vkp - s * vkq;
                v[k][q] = s * vkp + c * vkq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Rebuilds eigenvectors of near-equal eigenvalue clusters by Gram-Schmidt
/// of the world axes (x̂, ŷ, ẑ in order). Eigenvectors of isolated
/// eigenvalues are kept; only the degenerate subspace is re-based.
fn rebuild_degenerate_clusters(axes: &mut [[f64; 3]; 3], vals: &[f64; 3], trace: f64) {
    let gap_threshold = DEGENERATE_GAP * trace;
    // cluster[i] is the cluster id of sorted slot i
    let mut cluster = [0usize; 3];
    for i in 1..3 {
        cluster[i] = if vals[i - 1] - vals[i] < gap_threshold {
            cluster[i - 1]
        } else {
            cluster[i - 1] + 1
        };
    }
    if cluster[2] == 2 {
        return; // all eigenvalues well separated
    }
    let mut degenerate = [false; 3];
    for slot in 0..3 {
        let size = cluster.iter().filter(|&&c| c == cluster[slot]).count();
        degenerate[slot] = size >= 2;
    }

    let mut kept: Vec<[f64; 3]> = Vec::with_capacity(3);
    // isolated eigenvectors first: they are well defined and must survive
    for slot in 0..3 {
        if !degenerate[slot] {
            let mut axis = axes[slot];
            for k in &kept {
                axis = vec3::sub(axis, vec3::scale(*k, vec3::dot(axis, *k)));
            }
            axes[slot] = vec3::normalize(axis);
            kept.push(axes[slot]);
        }
    }
    // fill degenerate slots from world axes, in slot order
    let world = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut candidates = world.iter();
    for slot in 0..3 {
        if !degenerate[slot] {
            continue;
        }
        for w in candidates.by_ref() {
            let mut axis = *w;
            for k in &kept {
                axis = vec3::sub(axis, vec3::scale(*k, vec3::dot(axis, *k)));
            }
            let norm = vec3::norm(axis);
            if norm > 1e-6 {
                axes[slot] = vec3::scale(axis, 1.0 / norm);
                kept.push(axes[slot]);
                break;
            }
        }
    }
}

/// Flips the axis so its largest-magnitude component is positive.
fn fix_sign(axis: &mut [f64; 3]) {
    let mut arg = 0;
    for i in 1..3 {
        if axis[i].abs() > axis[arg].abs() {
            arg = i;
        }
    }
    if axis[arg] < 0.0 {
        *axis = vec3::scale(*axis, -1.0);
    }
}
