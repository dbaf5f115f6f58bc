//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use facegen::corpus::{ExpressionLabel, Face};
use facegen::tps::{tps_kernel, PairwiseEnergyTable};
use facegen::trio::{trio_score, TrioScore};
use nalgebra::{DMatrix, Matrix3, Point3, Vector3};
use rand::Rng;

/// Inverse by Gauss-Jordan elimination with full pivoting.
pub fn gauss_jordan_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = DMatrix::<f64>::identity(n, n);
    let mut col_perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for r in k..n {
            for c in k..n {
                if a[(r, c)].abs() > best {
                    best = a[(r, c)].abs();
                    (pr, pc) = (r, c);
                }
            }
        }
        assert!(best > 0.0, "singular matrix");
        a.swap_rows(k, pr);
        inv.swap_rows(k, pr);
        a.swap_columns(k, pc);
        col_perm.swap(k, pc);
        let p = a[(k, k)];
        for c in 0..n {
            a[(k, c)] /= p;
            inv[(k, c)] /= p;
        }
        for r in 0..n {
            if r != k {
                let f = a[(r, k)];
                if f != 0.0 {
                    for c in 0..n {
                        a[(r, c)] -= f * a[(k, c)];
                        inv[(r, c)] -= f * inv[(k, c)];
                    }
                }
            }
        }
    }
    // A·P = Q  ⇒  A⁻¹ = P·(row-reduced inverse)
    let mut out = DMatrix::zeros(n, n);
    for (k, &orig) in col_perm.iter().enumerate() {
        out.set_row(orig, &inv.row(k));
    }
    out
}

/// Upper-left `P × P` block of `[[K, S], [Sᵀ, 0]]⁻¹` with raw `S = [1, x, y, z]`.
pub fn oracle_bending_matrix(points: &[Point3<f64>]) -> DMatrix<f64> {
    let p = points.len();
    let mut l = DMatrix::zeros(p + 4, p + 4);
    for a in 0..p {
        for b in 0..p {
            l[(a, b)] = tps_kernel(&points[a], &points[b]);
        }
        let s = [1.0, points[a].x, points[a].y, points[a].z];
        for (c, v) in s.into_iter().enumerate() {
            l[(a, p + c)] = v;
            l[(p + c, a)] = v;
        }
    }
    gauss_jordan_inverse(&l).view((0, 0), (p, p)).into_owned()
}

/// `Σ_axis tᵀ B t` over raw (uncentred) target coordinates.
pub fn oracle_energy(b: &DMatrix<f64>, target: &[Point3<f64>]) -> f64 {
    (0..3)
        .map(|axis| {
            let t = nalgebra::DVector::from_iterator(target.len(), target.iter().map(|p| p[axis]));
            t.dot(&(b * &t))
        })
        .sum()
}

pub fn random_points(rng: &mut impl Rng, n: usize, spread: f64) -> Vec<Point3<f64>> {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
            )
        })
        .collect()
}

pub fn random_face(rng: &mut impl Rng, identity: u64, n: usize) -> Face {
    Face::new(
        identity,
        ExpressionLabel::neutral(),
        random_points(rng, n, 10.0),
    )
    .unwrap()
}

/// A random well-conditioned affine map `p ↦ A p + t`.
pub fn random_affine(rng: &mut impl Rng) -> (Matrix3<f64>, Vector3<f64>) {
    loop {
        let a = Matrix3::<f64>::from_fn(|_, _| rng.random_range(-2.0..2.0));
        if a.determinant().abs() > 0.2 {
            let t = Vector3::from_fn(|_, _| rng.random_range(-50.0..50.0));
            return (a, t);
        }
    }
}

pub fn apply_affine(face: &Face, identity: u64, (a, t): &(Matrix3<f64>, Vector3<f64>)) -> Face {
    let verts = face
        .vertices()
        .iter()
        .map(|p| Point3::from(a * p.coords + t))
        .collect();
    Face::new(identity, face.expression(), verts).unwrap()
}

/// Every trio of the table scored and fully sorted by the ranking order.
pub fn brute_force_ranking(table: &PairwiseEnergyTable) -> Vec<TrioScore> {
    let ids = table.face_ids();
    let mut all = Vec::new();
    for a in 0..ids.len() {
        for b in a + 1..ids.len() {
            for c in b + 1..ids.len() {
                all.push(trio_score(table, ids[a], ids[b], ids[c]).unwrap());
            }
        }
    }
    all.sort_by(|x, y| y.score.total_cmp(&x.score).then(x.ids.cmp(&y.ids)));
    all
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
