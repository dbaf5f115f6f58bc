//! New faces as the per-vertex centroid of a trio.

use nalgebra::Point3;
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, ExpressionLabel, Face};
use crate::error::{Error, Result};
use crate::trio::TrioScore;

/// Stable synthetic identity of the face generated from `ids` in `category`:
/// the first 8 bytes (big-endian) of SHA-256 over `"<category>|i|j|k"` with
/// sorted ids.
pub fn synthetic_identity(category: ExpressionLabel, ids: [u64; 3]) -> u64 {
    let mut ids = ids;
    ids.sort_unstable();
    let digest = Sha256::digest(format!(
        "{}|{}|{}|{}",
        category.key(),
        ids[0],
        ids[1],
        ids[2]
    ));
    u64::from_be_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

#[inline]
fn mean3(a: f64, b: f64, c: f64) -> f64 {
    // clamped so rounding can never leave the inputs' range
    ((a + b + c) / 3.0).clamp(a.min(b).min(c), a.max(b).max(c))
}

/// Per-vertex mean of the trio's three faces, labelled with the trio's
/// category.
pub fn synthesize_face(corpus: &Corpus, trio: &TrioScore) -> Result<Face> {
    let mut ids = trio.ids;
    ids.sort_unstable();
    let faces = ids.map(|id| corpus.face(trio.category, id));
    let [Some(a), Some(b), Some(c)] = faces else {
        let missing = ids
            .iter()
            .zip(faces)
            .find(|(_, f)| f.is_none())
            .map(|(id, _)| *id)
            .unwrap_or_default();
        return Err(Error::InvalidArgument(format!(
            "identity {missing} has no face in category {}",
            trio.category
        )));
    };
    let vertices: Vec<Point3<f64>> = a
        .vertices()
        .iter()
        .zip(b.vertices())
        .zip(c.vertices())
        .map(|((p, q), r)| {
            Point3::new(
                mean3(p.x, q.x, r.x),
                mean3(p.y, q.y, r.y),
                mean3(p.z, q.z, r.z),
            )
        })
        .collect();
    Face::new(
        synthetic_identity(trio.category, ids),
        trio.category,
        vertices,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trio(ids: [u64; 3]) -> TrioScore {
        TrioScore {
            category: ExpressionLabel::neutral(),
            ids,
            score: 0.0,
        }
    }

    fn face(id: u64, first: Point3<f64>) -> Face {
        let mut v: Vec<Point3<f64>> = (1..8)
            .map(|i| Point3::new(i as f64 * 10.0, (i * i) as f64, 5.0))
            .collect();
        v.insert(0, first);
        Face::new(id, ExpressionLabel::neutral(), v).unwrap()
    }

    #[test]
    fn centroid_of_three_points() {
        let corpus = Corpus::new(vec![
            face(0, Point3::new(0.0, 0.0, 0.0)),
            face(1, Point3::new(3.0, 0.0, 0.0)),
            face(2, Point3::new(0.0, 3.0, 0.0)),
        ])
        .unwrap();
        let out = synthesize_face(&corpus, &trio([2, 0, 1])).unwrap();
        assert_eq!(out.vertices()[0], Point3::new(1.0, 1.0, 0.0));
        assert_eq!(out.expression(), ExpressionLabel::neutral());
        assert_eq!(
            out.identity(),
            synthetic_identity(ExpressionLabel::neutral(), [0, 1, 2])
        );
    }

    #[test]
    fn identical_inputs_reproduce_the_face() {
        let values = [0.1, 1.0 / 3.0, 7.3, -2.2e-7, 1e300, 0.7];
        for v in values {
            assert_eq!(mean3(v, v, v), v);
        }
    }

    #[test]
    fn missing_identity_is_reported() {
        let corpus = Corpus::new(vec![
            face(0, Point3::origin()),
            face(1, Point3::new(1.0, 0.0, 0.0)),
        ])
        .unwrap();
        let err = synthesize_face(&corpus, &trio([0, 1, 9])).unwrap_err();
        assert!(err.to_string().contains("identity 9"), "{err}");
    }

    #[test]
    fn identity_hash_is_order_free() {
        let l = ExpressionLabel::neutral();
        assert_eq!(
            synthetic_identity(l, [3, 1, 2]),
            synthetic_identity(l, [1, 2, 3])
        );
        assert_ne!(
            synthetic_identity(l, [1, 2, 3]),
            synthetic_identity(l, [1, 2, 4])
        );
    }
}
