//! Pointcloud normals by local plane fitting.

use nalgebra::{Matrix3, Vector3};

use crate::corpus::Face;
use crate::error::{Error, Result};

/// Default neighbourhood size for normal estimation.
pub const DEFAULT_NEIGHBORS: usize = 12;

/// Components smaller than this are treated as round-off and zeroed.
const COMPONENT_EPS: f64 = 1e-12;

/// Indices of the `k` nearest other vertices of `points[i]`, ties broken by
/// index.
fn nearest(
    points: &[Vector3<f64>],
    i: usize,
    k: usize,
    scratch: &mut Vec<(f64, usize)>,
) -> Vec<usize> {
    scratch.clear();
    let p = points[i];
    scratch.extend(
        points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, q)| ((q - p).norm_squared(), j)),
    );
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    scratch.select_nth_unstable_by(k - 1, by_dist);
    let mut head = scratch[..k].to_vec();
    head.sort_by(by_dist);
    head.into_iter().map(|(_, j)| j).collect()
}

/// Unit normal per vertex: the least-variance direction of the vertex and
/// its `k` nearest neighbours, oriented so that `z ≥ 0`.
pub fn estimate_normals(face: &Face, k: usize) -> Result<Vec<Vector3<f64>>> {
    let n = face.vertex_count();
    if k < 3 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "neighbour count {k} must lie in 3..{n}"
        )));
    }
    let points: Vec<Vector3<f64>> = face.vertices().iter().map(|p| p.coords).collect();
    let mut scratch = Vec::with_capacity(n);
    (0..n)
        .map(|i| {
            let hood = nearest(&points, i, k, &mut scratch);
            let centroid = hood.iter().fold(points[i], |acc, &j| acc + points[j]) / (k + 1) as f64;
            let mut cov = Matrix3::zeros();
            for d in std::iter::once(i).chain(hood).map(|j| points[j] - centroid) {
                cov += d * d.transpose();
            }
            plane_normal(cov).ok_or(Error::DegenerateNeighborhood { vertex: i })
        })
        .collect()
}

fn plane_normal(cov: Matrix3<f64>) -> Option<Vector3<f64>> {
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, hi) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if hi <= 0.0 || mid <= 1e-12 * hi {
        return None;
    }
    let mut n: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    n.iter_mut().for_each(|c| {
        if c.abs() < COMPONENT_EPS {
            *c = 0.0;
        }
    });
    n.normalize_mut();
    if n.z < 0.0 {
        n = -n;
    }
    Some(n)
}

/// Azimuth `θ = atan2(n_y, n_x) ∈ (−π, π]` and elevation `φ = asin(n_z)`.
/// `θ` is 0 when the normal is within round-off of the pole.
pub fn to_spherical(normal: &Vector3<f64>) -> (f64, f64) {
    let elevation = normal.z.clamp(-1.0, 1.0).asin();
    if normal.x * normal.x + normal.y * normal.y < 1e-12 {
        return (0.0, elevation);
    }
    let mut azimuth = normal.y.atan2(normal.x);
    if azimuth <= -std::f64::consts::PI {
        azimuth = std::f64::consts::PI;
    }
    (azimuth, elevation)
}
