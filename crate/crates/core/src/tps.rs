//! Thin-plate-spline bending energy between corresponded faces.
//!
//! For a source point set with kernel matrix `K` (`K[a][b] = r² log r`) and
//! affine basis `S = [1, x, y, z]`, the bending matrix `B` is the upper-left
//! block of the inverse of `[[K, S], [Sᵀ, 0]]`. The directed energy needed to
//! deform the source onto a target with sampled coordinates `x, y, z` is
//! `xᵀBx + yᵀBy + zᵀBz`.
//!
//! `B` is computed through the null space of `Sᵀ`: with `Z` an orthonormal
//! basis of that null space, `B = Z (Zᵀ K Z)⁻¹ Zᵀ`. This gives `B S = 0` to
//! round-off and a symmetric positive semidefinite `B`, since `r² log r` is
//! conditionally positive definite of order two.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Point3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Corpus, ExpressionLabel, Face, MIN_VERTICES};
use crate::error::{Error, Result};

/// Relative tolerance used to separate round-off from genuinely negative
/// energies.
pub const ENERGY_TOLERANCE: f64 = 1e-8;

/// Default number of sampled vertices per bending system.
pub const DEFAULT_SAMPLES: usize = 500;

/// `r² log r` with `r = |a - b|`; exactly 0 at `r = 0`.
pub fn tps_kernel(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let r2 = (a - b).norm_squared();
    if r2 == 0.0 {
        0.0
    } else {
        0.5 * r2 * r2.ln()
    }
}

/// Per-source-face TPS system and its dense bending matrix.
#[derive(Debug, Clone)]
pub struct BendingSystem {
    source_identity: u64,
    source_expression: ExpressionLabel,
    sample_indices: Vec<usize>,
    sample_points: Vec<Point3<f64>>,
    bending: DMatrix<f64>,
}

impl BendingSystem {
    pub fn build(face: &Face, sample_indices: &[usize]) -> Result<Self> {
        let n = sample_indices.len();
        if n < MIN_VERTICES {
            return Err(Error::InvalidArgument(format!(
                "bending system needs at least {MIN_VERTICES} samples, got {n}"
            )));
        }
        if let Some(&bad) = sample_indices.iter().find(|&&i| i >= face.vertex_count()) {
            return Err(Error::InvalidArgument(format!(
                "sample index {bad} out of range for {} vertices",
                face.vertex_count()
            )));
        }
        let points: Vec<Point3<f64>> = sample_indices.iter().map(|&i| face.vertices()[i]).collect();
        check_distinct(&points, sample_indices)?;

        let basis = affine_basis(&points)?;
        // Householder QR of the n×4 basis; applying Qᵀ to the identity yields
        // the full orthogonal factor, whose trailing n-4 rows span null(Sᵀ).
        let qr = basis.qr();
        let mut qt = DMatrix::<f64>::identity(n, n);
        qr.q_tr_mul(&mut qt);
        let zt = qt.rows(4, n - 4).into_owned();

        let kernel = DMatrix::from_fn(n, n, |a, b| tps_kernel(&points[a], &points[b]));
        let zt_k = &zt * &kernel;
        let mut projected = &zt_k * zt.transpose();
        symmetrize(&mut projected);

        let chol = projected.cholesky().ok_or_else(|| {
            Error::SingularSystem(format!(
                "projected TPS kernel of face {} ({}) is not positive definite",
                face.identity(),
                face.expression()
            ))
        })?;
        // B = Z L⁻ᵀ L⁻¹ Zᵀ = Wᵀ W with W = L⁻¹ Zᵀ
        let w = chol
            .l()
            .solve_lower_triangular(&zt)
            .ok_or_else(|| Error::SingularSystem("zero pivot in projected kernel".into()))?;
        let mut bending = w.tr_mul(&w);
        symmetrize(&mut bending);

        Ok(Self {
            source_identity: face.identity(),
            source_expression: face.expression(),
            sample_indices: sample_indices.to_vec(),
            sample_points: points,
            bending,
        })
    }

    pub fn source_identity(&self) -> u64 {
        self.source_identity
    }

    pub fn source_expression(&self) -> ExpressionLabel {
        self.source_expression
    }

    pub fn sample_indices(&self) -> &[usize] {
        &self.sample_indices
    }

    pub fn sample_points(&self) -> &[Point3<f64>] {
        &self.sample_points
    }

    /// The bending matrix `B`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.bending
    }

    /// Sampled, per-axis mean-centred target coordinates. Centring leaves the
    /// energy unchanged because `B` annihilates constants.
    fn target_coordinates(&self, target: &Face) -> Result<[DVector<f64>; 3]> {
        let verts = target.vertices();
        if let Some(&bad) = self.sample_indices.iter().find(|&&i| i >= verts.len()) {
            return Err(Error::InvalidArgument(format!(
                "sample index {bad} out of range for target with {} vertices",
                verts.len()
            )));
        }
        let n = self.sample_indices.len();
        Ok([0, 1, 2].map(|axis| {
            let mut v =
                DVector::from_iterator(n, self.sample_indices.iter().map(|&i| verts[i][axis]));
            let mean = v.mean();
            v.add_scalar_mut(-mean);
            v
        }))
    }

    /// Magnitude against which round-off in [`energy`](Self::energy) is
    /// measured: `Σ_axis |t|ᵀ |B| |t|` over centred target coordinates.
    pub fn energy_scale(&self, target: &Face) -> Result<f64> {
        let coords = self.target_coordinates(target)?;
        let abs_b = self.bending.abs();
        Ok(coords
            .iter()
            .map(|t| {
                let t = t.abs();
                t.dot(&(&abs_b * &t))
            })
            .sum())
    }

    /// Directed bending energy `xᵀBx + yᵀBy + zᵀBz` to `target`.
    ///
    /// Values in `[-tol, 0)` with `tol = 1e-8 · energy_scale` are clamped to
    /// zero; anything more negative is an error.
    pub fn energy(&self, target: &Face) -> Result<f64> {
        let coords = self.target_coordinates(target)?;
        let abs_b = self.bending.abs();
        let mut energy = 0.0;
        let mut scale = 0.0;
        for t in &coords {
            energy += t.dot(&(&self.bending * t));
            let t = t.abs();
            scale += t.dot(&(&abs_b * &t));
        }
        clamp_energy(energy, ENERGY_TOLERANCE * scale)
    }
}

/// Energy of deforming `system`'s source face onto `target`.
pub fn bending_energy(system: &BendingSystem, target: &Face) -> Result<f64> {
    system.energy(target)
}

fn clamp_energy(value: f64, tolerance: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::SingularSystem(format!(
            "non-finite bending energy {value}"
        )));
    }
    if value >= 0.0 {
        Ok(value)
    } else if value >= -tolerance {
        Ok(0.0)
    } else {
        Err(Error::NegativeEnergy { value, tolerance })
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_distinct(points: &[Point3<f64>], indices: &[usize]) -> Result<()> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    let key = |p: &Point3<f64>| [p.x, p.y, p.z].map(|c| if c == 0.0 { 0.0 } else { c });
    order.sort_by(|&a, &b| {
        let (ka, kb) = (key(&points[a]), key(&points[b]));
        ka.iter()
            .zip(&kb)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for w in order.windows(2) {
        if key(&points[w[0]]) == key(&points[w[1]]) {
            let (a, b) = (
                indices[w[0]].min(indices[w[1]]),
                indices[w[0]].max(indices[w[1]]),
            );
            return Err(Error::SingularSystem(format!(
                "sampled vertices {a} and {b} coincide; K has duplicate rows"
            )));
        }
    }
    Ok(())
}

/// `[1, x, y, z]` on centred, scaled coordinates. The column space is that of
/// the raw `[1, x, y, z]`, so `B` is unchanged.
fn affine_basis(points: &[Point3<f64>]) -> Result<DMatrix<f64>> {
    let n = points.len() as f64;
    let centroid = points
        .iter()
        .fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords)
        / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if hi <= 0.0 || lo <= 1e-12 * hi {
        return Err(Error::SingularSystem(
            "sampled points are coplanar; S lacks full column rank".into(),
        ));
    }
    let scale = (hi / n).sqrt();
    Ok(DMatrix::from_fn(points.len(), 4, |r, c| {
        if c == 0 {
            1.0
        } else {
            (points[r][c - 1] - centroid[c - 1]) / scale
        }
    }))
}

/// Deterministic sorted subset of `n_samples` vertex indices out of
/// `n_vertices`. Returns every index when the two are equal.
pub fn sample_indices(n_vertices: usize, n_samples: usize, seed: u64) -> Result<Vec<usize>> {
    if n_samples < MIN_VERTICES || n_samples > n_vertices {
        return Err(Error::InvalidArgument(format!(
            "sample count {n_samples} must lie in {MIN_VERTICES}..={n_vertices}"
        )));
    }
    if n_samples == n_vertices {
        return Ok((0..n_vertices).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n_vertices, n_samples).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Directed bending energies among the faces of one category.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseEnergyTable {
    category: ExpressionLabel,
    face_ids: Vec<u64>,
    gamma: Vec<f64>,
}

impl PairwiseEnergyTable {
    /// Builds a table from row-major energies, applying the table-level
    /// clamp: entries in `[-1e-8 · max, 0)` become 0, anything below is an
    /// error.
    pub fn from_rows(
        category: ExpressionLabel,
        face_ids: Vec<u64>,
        mut gamma: Vec<f64>,
    ) -> Result<Self> {
        let n = face_ids.len();
        if gamma.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "{} energies for {n} faces",
                gamma.len()
            )));
        }
        if face_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "face ids must be strictly increasing".into(),
            ));
        }
        let max = gamma.iter().copied().fold(0.0f64, f64::max);
        let tolerance = ENERGY_TOLERANCE * max;
        for g in gamma.iter_mut() {
            *g = clamp_energy(*g, tolerance)?;
        }
        Ok(Self {
            category,
            face_ids,
            gamma,
        })
    }

    pub fn category(&self) -> ExpressionLabel {
        self.category
    }

    /// Identity ids in row/column order (ascending).
    pub fn face_ids(&self) -> &[u64] {
        &self.face_ids
    }

    pub fn len(&self) -> usize {
        self.face_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.face_ids.is_empty()
    }

    /// `γ` from the face at row `i` to the face at column `j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.face_ids.len() + j]
    }

    pub fn position(&self, identity: u64) -> Option<usize> {
        self.face_ids.binary_search(&identity).ok()
    }

    /// Same table with every energy multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_rows(
            self.category,
            self.face_ids.clone(),
            self.gamma.iter().map(|g| g * factor).collect(),
        )
    }

    /// CSV dump: a header of identity ids, then one row of energies per
    /// source face.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let header: Vec<String> = self.face_ids.iter().map(u64::to_string).collect();
        writeln!(out, "{}", header.join(",")).map_err(io)?;
        for row in self.gamma.chunks(self.face_ids.len().max(1)) {
            let row: Vec<String> = row.iter().map(f64::to_string).collect();
            writeln!(out, "{}", row.join(",")).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Energies between every ordered pair of faces in `category`, using one
/// shared sample set of size `n_samples` drawn with `seed`.
///
/// One bending system is built per source face and reused for all targets.
/// Rows are computed in parallel on the current rayon pool; each entry is
/// independent, so the result does not depend on scheduling.
pub fn pairwise_energy_table(
    corpus: &Corpus,
    category: ExpressionLabel,
    n_samples: usize,
    seed: u64,
) -> Result<PairwiseEnergyTable> {
    let faces = corpus.category_faces(category);
    if faces.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "category {category} has {} face(s); need at least 2",
            faces.len()
        )));
    }
    let indices = sample_indices(corpus.vertex_count(), n_samples, seed)?;
    let rows: Vec<Vec<f64>> = faces
        .par_iter()
        .map(|source| {
            let with_face = |e: Error| Error::Face {
                identity: source.identity(),
                category,
                source: Box::new(e),
            };
            let system = BendingSystem::build(source, &indices).map_err(with_face)?;
            faces
                .iter()
                .map(|target| system.energy(target).map_err(with_face))
                .collect()
        })
        .collect::<Result<_>>()?;
    PairwiseEnergyTable::from_rows(
        category,
        faces.iter().map(|f| f.identity()).collect(),
        rows.concat(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_synthetic_corpus;

    #[test]
    fn kernel_values() {
        let o = Point3::origin();
        assert_eq!(tps_kernel(&o, &o), 0.0);
        assert_eq!(tps_kernel(&o, &Point3::new(0.0, 1.0, 0.0)), 0.0);
        let e = std::f64::consts::E;
        let k = tps_kernel(&o, &Point3::new(e, 0.0, 0.0));
        assert!((k - 7.38905609893065).abs() < 1e-12, "{k}");
    }

    #[test]
    fn duplicate_samples_are_singular() {
        let label = ExpressionLabel::neutral();
        let mut verts: Vec<Point3<f64>> = (0..10)
            .map(|i| {
                let t = i as f64;
                Point3::new(t.cos() * 5.0, t.sin() * 5.0, t * t * 0.1)
            })
            .collect();
        verts[9] = Point3::new(verts[2].x, verts[2].y, verts[2].z + 1e-9);
        let face = Face::new(0, label, verts.clone()).unwrap();
        // The face itself is valid; sampling vertex 2 twice is not.
        let err = BendingSystem::build(&face, &[0, 1, 2, 2, 3, 4, 5, 6, 7]).unwrap_err();
        assert!(err.to_string().contains("2 and 2"), "{err}");
    }

    #[test]
    fn coplanar_samples_are_singular() {
        let verts: Vec<Point3<f64>> = (0..12)
            .map(|i| Point3::new(i as f64, (i * i) as f64, 4.0))
            .collect();
        let face = Face::new(0, ExpressionLabel::neutral(), verts).unwrap();
        let idx: Vec<usize> = (0..12).collect();
        assert!(matches!(
            BendingSystem::build(&face, &idx),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        let corpus = generate_synthetic_corpus(1, 1, 64, &[ExpressionLabel::neutral()]).unwrap();
        assert!(BendingSystem::build(&corpus.faces()[0], &[0, 1, 2, 3, 4, 5, 6]).is_err());
        assert!(BendingSystem::build(&corpus.faces()[0], &[0, 1, 2, 3, 4, 5, 6, 64]).is_err());
    }

    #[test]
    fn clamp_rules() {
        assert_eq!(clamp_energy(-1e-9, 1e-8).unwrap(), 0.0);
        assert_eq!(clamp_energy(3.0, 1e-8).unwrap(), 3.0);
        assert!(matches!(
            clamp_energy(-1.0, 1e-8),
            Err(Error::NegativeEnergy { .. })
        ));
        assert!(clamp_energy(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn sample_indices_are_deterministic_and_sorted() {
        let a = sample_indices(1000, 50, 9).unwrap();
        assert_eq!(a, sample_indices(1000, 50, 9).unwrap());
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_ne!(a, sample_indices(1000, 50, 10).unwrap());
        assert_eq!(
            sample_indices(20, 20, 0).unwrap(),
            (0..20).collect::<Vec<_>>()
        );
        assert!(sample_indices(20, 21, 0).is_err());
        assert!(sample_indices(20, 7, 0).is_err());
    }

    #[test]
    fn table_of_two_is_directed() {
        let label = ExpressionLabel::neutral();
        let corpus = generate_synthetic_corpus(5, 2, 300, &[label]).unwrap();
        let t = pairwise_energy_table(&corpus, label, 60, 1).unwrap();
        assert_eq!(t.len(), 2);
        let off = t.get(0, 1).max(t.get(1, 0));
        assert!(t.get(0, 0) <= 1e-8 * off && t.get(1, 1) <= 1e-8 * off);
        assert!(t.get(0, 1) > 0.0 && t.get(1, 0) > 0.0);
        assert_ne!(t.get(0, 1), t.get(1, 0));
    }

    #[test]
    fn table_needs_two_faces() {
        let label = ExpressionLabel::neutral();
        let corpus = generate_synthetic_corpus(5, 1, 100, &[label]).unwrap();
        assert!(pairwise_energy_table(&corpus, label, 20, 1).is_err());
    }
}
