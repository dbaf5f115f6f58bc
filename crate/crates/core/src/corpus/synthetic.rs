//! Deterministic synthetic corpora of corresponded faces.
//!
//! A face is the height field `z = h(x, y)` sampled at a slightly warped
//! `x-y` lattice. `h` is a sum of fixed Gaussian bumps (dome, nose, cheeks,
//! brow, chin) with identity-specific amplitudes, a low-frequency
//! identity-specific wave term, and a named per-emotion deformation field
//! scaled by `level / 3`. Vertex `p` is always lattice node `p`, so faces are
//! in dense correspondence by construction.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Emotion, ExpressionLabel, Face, MIN_VERTICES};
use crate::error::{Error, Result};

const HALF_WIDTH: f64 = 70.0;
const HALF_HEIGHT: f64 = 90.0;

#[inline]
fn gauss(x: f64, y: f64, cx: f64, cy: f64, sx: f64, sy: f64) -> f64 {
    let dx = (x - cx) / sx;
    let dy = (y - cy) / sy;
    (-0.5 * (dx * dx + dy * dy)).exp()
}

/// Analytic model of one synthetic face.
#[derive(Debug, Clone)]
pub struct SyntheticFaceModel {
    dome: f64,
    nose_amp: f64,
    nose_sigma: f64,
    nose_y: f64,
    cheek_amp: f64,
    brow_amp: f64,
    chin_amp: f64,
    waves: [[f64; 4]; 3],
    warp: [[f64; 4]; 2],
    expression: ExpressionLabel,
}

fn identity_rng(seed: u64, identity: u64) -> ChaCha8Rng {
    let mut s = seed ^ identity.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    s = (s ^ (s >> 31)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    ChaCha8Rng::seed_from_u64(s ^ (s >> 29))
}

impl SyntheticFaceModel {
    pub fn new(seed: u64, identity: u64, expression: ExpressionLabel) -> Self {
        let mut rng = identity_rng(seed, identity);
        let wave = |rng: &mut ChaCha8Rng, amp: (f64, f64)| {
            let a = rng.random_range(amp.0..amp.1);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let wavelength = rng.random_range(90.0..220.0);
            let k = std::f64::consts::TAU / wavelength;
            [
                a,
                k * angle.cos(),
                k * angle.sin(),
                rng.random_range(0.0..std::f64::consts::TAU),
            ]
        };
        Self {
            dome: rng.random_range(15.0..21.0),
            nose_amp: rng.random_range(24.0..32.0),
            nose_sigma: rng.random_range(9.0..12.0),
            nose_y: rng.random_range(-3.0..3.0),
            cheek_amp: rng.random_range(5.0..9.0),
            brow_amp: rng.random_range(3.5..6.5),
            chin_amp: rng.random_range(3.5..6.5),
            waves: [
                wave(&mut rng, (0.5, 1.8)),
                wave(&mut rng, (0.5, 1.8)),
                wave(&mut rng, (0.5, 1.8)),
            ],
            warp: [wave(&mut rng, (0.3, 1.2)), wave(&mut rng, (0.3, 1.2))],
            expression,
        }
    }

    /// Identity-only part of the surface.
    fn base_height(&self, x: f64, y: f64) -> f64 {
        let mut z = self.dome * gauss(x, y, 0.0, 0.0, 45.0, 60.0)
            + self.nose_amp
                * gauss(
                    x,
                    y,
                    0.0,
                    self.nose_y,
                    self.nose_sigma,
                    1.3 * self.nose_sigma,
                )
            + self.cheek_amp
                * (gauss(x, y, -33.0, -8.0, 16.0, 16.0) + gauss(x, y, 33.0, -8.0, 16.0, 16.0))
            + self.brow_amp * gauss(x, y, 0.0, 38.0, 30.0, 7.0)
            + self.chin_amp * gauss(x, y, 0.0, -68.0, 14.0, 10.0);
        for [a, kx, ky, ph] in self.waves {
            z += a * (kx * x + ky * y + ph).sin();
        }
        z
    }

    /// Surface height at `(x, y)`, in millimetres.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.base_height(x, y) + expression_field(self.expression, x, y)
    }

    /// Location of the maximum of [`height`](Self::height) near the nose.
    pub fn nose_apex(&self) -> (f64, f64) {
        let mut best = (0.0, self.nose_y);
        let mut best_z = f64::NEG_INFINITY;
        for i in -40..=40 {
            for j in -40..=40 {
                let (x, y) = (i as f64 * 0.5, self.nose_y + j as f64 * 0.5);
                let z = self.height(x, y);
                if z > best_z {
                    best_z = z;
                    best = (x, y);
                }
            }
        }
        let mut step = 0.25;
        while step > 1e-7 {
            let mut moved = false;
            for (dx, dy) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                let z = self.height(best.0 + dx, best.1 + dy);
                if z > best_z {
                    best_z = z;
                    best = (best.0 + dx, best.1 + dy);
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best
    }

    /// Warped `x-y` position of lattice node `p` out of `n` nodes.
    pub fn lattice_xy(&self, p: usize, n: usize) -> (f64, f64) {
        let (u, v) = lattice_uv(p, n);
        let mut x = u;
        let mut y = v;
        let [ax, kx0, ky0, ph0] = self.warp[0];
        let [ay, kx1, ky1, ph1] = self.warp[1];
        x += ax * (kx0 * u + ky0 * v + ph0).sin();
        y += ay * (kx1 * u + ky1 * v + ph1).sin();
        (x, y)
    }

    pub fn face(&self, identity: u64, n_vertices: usize) -> Result<Face> {
        let vertices = (0..n_vertices)
            .map(|p| {
                let (x, y) = self.lattice_xy(p, n_vertices);
                Point3::new(x, y, self.height(x, y))
            })
            .collect();
        Face::new(identity, self.expression, vertices)
    }
}

fn lattice_dims(n: usize) -> (usize, usize) {
    let cols = ((n as f64 * HALF_WIDTH / HALF_HEIGHT).sqrt().round() as usize).max(2);
    let rows = n.div_ceil(cols).max(2);
    (rows, cols)
}

/// Un-warped lattice coordinates of node `p`.
pub fn lattice_uv(p: usize, n: usize) -> (f64, f64) {
    let (rows, cols) = lattice_dims(n);
    let (r, c) = (p / cols, p % cols);
    (
        -HALF_WIDTH + 2.0 * HALF_WIDTH * c as f64 / (cols - 1) as f64,
        -HALF_HEIGHT + 2.0 * HALF_HEIGHT * r as f64 / (rows - 1) as f64,
    )
}

/// Whether lattice node `p` lies on the outer boundary of the lattice.
pub fn is_border_node(p: usize, n: usize) -> bool {
    let (_, cols) = lattice_dims(n);
    let (r, c) = (p / cols, p % cols);
    let last_row = (n - 1) / cols;
    let exposed_by_partial_row = r + 1 == last_row && c > (n - 1) % cols;
    r == 0 || c == 0 || c == cols - 1 || r == last_row || exposed_by_partial_row
}

/// Additive `z` deformation of an expression; zero for neutral.
pub fn expression_field(label: ExpressionLabel, x: f64, y: f64) -> f64 {
    let scale = label.level().map_or(0.0, |l| l as f64 / 3.0);
    let pair = |amp: f64, cx: f64, cy: f64, sx: f64, sy: f64| {
        amp * (gauss(x, y, -cx, cy, sx, sy) + gauss(x, y, cx, cy, sx, sy))
    };
    let field = match label.emotion() {
        Emotion::Neutral => 0.0,
        Emotion::Happiness => pair(9.0, 26.0, -42.0, 9.0, 7.0) + pair(4.0, 35.0, -15.0, 14.0, 12.0),
        Emotion::Sadness => pair(-8.0, 24.0, -50.0, 9.0, 7.0) + pair(5.0, 12.0, 40.0, 8.0, 6.0),
        Emotion::Anger => {
            pair(-7.0, 14.0, 34.0, 9.0, 6.0) + 4.0 * gauss(x, y, 0.0, -45.0, 16.0, 5.0)
        }
        Emotion::Surprise => {
            8.0 * gauss(x, y, 0.0, 44.0, 36.0, 7.0) - 10.0 * gauss(x, y, 0.0, -52.0, 14.0, 12.0)
        }
        Emotion::Disgust => {
            pair(6.0, 13.0, 12.0, 6.0, 8.0) + 7.0 * gauss(x, y, 0.0, -32.0, 14.0, 5.0)
        }
        Emotion::Fear => {
            pair(6.0, 18.0, 42.0, 12.0, 6.0) - 7.0 * gauss(x, y, 0.0, -46.0, 26.0, 6.0)
        }
    };
    scale * field
}

/// Generates `n_identities` faces for each category, identities `0..n`.
pub fn generate_synthetic_corpus(
    seed: u64,
    n_identities: usize,
    n_vertices: usize,
    categories: &[ExpressionLabel],
) -> Result<Corpus> {
    if n_identities < 1 {
        return Err(Error::InvalidArgument("need at least one identity".into()));
    }
    if n_vertices < MIN_VERTICES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_VERTICES} vertices, got {n_vertices}"
        )));
    }
    let mut faces = Vec::with_capacity(n_identities * categories.len());
    for &category in categories {
        for identity in 0..n_identities as u64 {
            faces.push(
                SyntheticFaceModel::new(seed, identity, category).face(identity, n_vertices)?,
            );
        }
    }
    Corpus::new(faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cats() -> Vec<ExpressionLabel> {
        vec![
            ExpressionLabel::neutral(),
            ExpressionLabel::new(Emotion::Happiness, Some(3)).unwrap(),
        ]
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_synthetic_corpus(7, 3, 400, &cats()).unwrap();
        let b = generate_synthetic_corpus(7, 3, 400, &cats()).unwrap();
        assert_eq!(a.faces(), b.faces());
        let c = generate_synthetic_corpus(8, 3, 400, &cats()).unwrap();
        assert_ne!(a.faces()[0].vertices(), c.faces()[0].vertices());
    }

    #[test]
    fn faces_differ_across_identity_and_category() {
        let corpus = generate_synthetic_corpus(7, 2, 400, &cats()).unwrap();
        let [n, h] = [cats()[0], cats()[1]];
        assert_ne!(
            corpus.face(n, 0).unwrap().vertices(),
            corpus.face(n, 1).unwrap().vertices()
        );
        assert_ne!(
            corpus.face(n, 0).unwrap().vertices(),
            corpus.face(h, 0).unwrap().vertices()
        );
    }

    #[test]
    fn nose_stands_above_border() {
        // The apex height is the analytic maximum; every nose-region vertex
        // must still clear the highest border vertex.
        let n = 900;
        for category in ExpressionLabel::standard_categories() {
            for identity in 0..4 {
                let model = SyntheticFaceModel::new(3, identity, category);
                let face = model.face(identity, n).unwrap();
                let (ax, ay) = model.nose_apex();
                let border_max = (0..n)
                    .filter(|&p| is_border_node(p, n))
                    .map(|p| face.vertices()[p].z)
                    .fold(f64::NEG_INFINITY, f64::max);
                let nose: Vec<f64> = face
                    .vertices()
                    .iter()
                    .filter(|v| (v.x - ax).hypot(v.y - ay) < 10.0)
                    .map(|v| v.z)
                    .collect();
                assert!(!nose.is_empty());
                let nose_min = nose.iter().copied().fold(f64::INFINITY, f64::min);
                assert!(
                    nose_min > border_max,
                    "{category} {identity}: {nose_min} <= {border_max}"
                );
            }
        }
    }

    #[test]
    fn border_nodes_cover_lattice_edges() {
        let n = 400;
        let (rows, cols) = lattice_dims(n);
        assert!(rows * cols >= n);
        assert!(is_border_node(0, n));
        assert!(is_border_node(cols - 1, n));
        assert!(is_border_node(n - 1, n));
        assert!(!is_border_node(cols + 1, n));
    }
}
