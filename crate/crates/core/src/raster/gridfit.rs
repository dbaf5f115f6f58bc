//! Regularized least-squares fitting of scattered `(x, y, v)` data onto a
//! regular grid.
//!
//! Node values minimize
//!
//! ```text
//! Σ_p (bilinear(grid, x_p, y_p) − v_p)² + λ · Σ_nodes dx·dy · [(Δ²_row v / dx²)² + (Δ²_col v / dy²)²]
//! ```
//!
//! where `Δ²` are second differences along grid rows and columns. Dividing by
//! the spacing squared turns them into second-derivative estimates and the
//! `dx·dy` cell area makes the penalty a quadrature of
//! `∫∫ (v_xx² + v_yy²) dx dy`, so `λ` means the same thing at any grid
//! resolution. The normal equations form one sparse symmetric
//! positive definite system, factored once with a sparse Cholesky and reused
//! for every value channel sampled at the same locations.

use faer::prelude::*;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Par, Side};
use nalgebra::Matrix4;

use crate::error::{Error, Result};

/// Default smoothing weight.
pub const DEFAULT_LAMBDA: f64 = 1e-5;

/// Grid geometry. Node `(r, c)` sits at `(x0 + c·dx, y0 + r·dy)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub origin: (f64, f64),
    pub spacing: (f64, f64),
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid must be at least 2×2, got {}×{}",
                self.rows, self.cols
            )));
        }
        let (dx, dy) = self.spacing;
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be positive, got ({dx}, {dy})"
            )));
        }
        if !(self.origin.0.is_finite() && self.origin.1.is_finite()) {
            return Err(Error::InvalidArgument("grid origin must be finite".into()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn node_xy(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin.0 + col as f64 * self.spacing.0,
            self.origin.1 + row as f64 * self.spacing.1,
        )
    }

    /// The four node indices and bilinear weights for `(x, y)`, clamped to
    /// the grid.
    fn stencil(&self, x: f64, y: f64) -> ([usize; 4], [f64; 4]) {
        let u = ((x - self.origin.0) / self.spacing.0).clamp(0.0, (self.cols - 1) as f64);
        let v = ((y - self.origin.1) / self.spacing.1).clamp(0.0, (self.rows - 1) as f64);
        let c = (u.floor() as usize).min(self.cols - 2);
        let r = (v.floor() as usize).min(self.rows - 2);
        let (fx, fy) = (u - c as f64, v - r as f64);
        let i = r * self.cols + c;
        (
            [i, i + 1, i + self.cols, i + self.cols + 1],
            [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
        )
    }
}

/// Node values over a [`GridSpec`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSurface {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridSurface {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.node_count() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "expected {} finite node values",
                spec.node_count()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.spec.cols + col]
    }

    /// Bilinear interpolation at `(x, y)`, clamped to the grid.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let (idx, w) = self.spec.stencil(x, y);
        idx.iter().zip(w).map(|(&i, w)| w * self.values[i]).sum()
    }
}

/// A factored gridfit system for a fixed set of data locations.
pub struct GridFit {
    spec: GridSpec,
    stencils: Vec<([usize; 4], [f64; 4])>,
    factor: Llt<usize, f64>,
}

impl std::fmt::Debug for GridFit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFit")
            .field("spec", &self.spec)
            .field("points", &self.stencils.len())
            .finish()
    }
}

impl GridFit {
    /// Assembles and factors the normal equations for data at `xy`.
    pub fn new(xy: &[(f64, f64)], spec: GridSpec, lambda: f64) -> Result<Self> {
        spec.validate()?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "smoothing must be positive, got {lambda}"
            )));
        }
        if xy.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
            return Err(Error::InvalidArgument("non-finite data location".into()));
        }
        check_pins_nullspace(xy, &spec)?;

        let n = spec.node_count();
        let cols = spec.cols;
        let stencils: Vec<_> = xy.iter().map(|&(x, y)| spec.stencil(x, y)).collect();

        let mut triplets = Vec::with_capacity(stencils.len() * 10 + n * 12);
        let mut push = |a: usize, b: usize, v: f64| {
            // lower triangle only
            if a >= b {
                triplets.push(Triplet::new(a, b, v));
            } else {
                triplets.push(Triplet::new(b, a, v));
            }
        };
        for (idx, w) in &stencils {
            for a in 0..4 {
                push(idx[a], idx[a], w[a] * w[a]);
                for b in (a + 1)..4 {
                    push(idx[a], idx[b], w[a] * w[b]);
                }
            }
        }
        let (dx, dy) = spec.spacing;
        let wx = lambda * dy / (dx * dx * dx);
        let wy = lambda * dx / (dy * dy * dy);
        let coef = [1.0, -2.0, 1.0];
        for r in 0..spec.rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c >= 1 && c + 1 < cols {
                    let idx = [i - 1, i, i + 1];
                    for a in 0..3 {
                        push(idx[a], idx[a], wx * coef[a] * coef[a]);
                        for b in (a + 1)..3 {
                            push(idx[a], idx[b], wx * coef[a] * coef[b]);
                        }
                    }
                }
                if r >= 1 && r + 1 < spec.rows {
                    let idx = [i - cols, i, i + cols];
                    for a in 0..3 {
                        push(idx[a], idx[a], wy * coef[a] * coef[a]);
                        for b in (a + 1)..3 {
                            push(idx[a], idx[b], wy * coef[a] * coef[b]);
                        }
                    }
                }
            }
        }

        faer::set_global_parallelism(Par::Seq);
        let matrix = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::SingularSystem(format!("gridfit assembly failed: {e:?}")))?;
        let factor = matrix.sp_cholesky(Side::Lower).map_err(|e| {
            Error::SingularSystem(format!("gridfit system is not positive definite: {e:?}"))
        })?;
        Ok(Self {
            spec,
            stencils,
            factor,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Fits one value channel; `values[p]` belongs to the `p`-th location
    /// passed to [`GridFit::new`].
    pub fn fit(&self, values: &[f64]) -> Result<GridSurface> {
        if values.len() != self.stencils.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} data locations",
                values.len(),
                self.stencils.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite data value".into()));
        }
        let mut rhs = Mat::<f64>::zeros(self.spec.node_count(), 1);
        for ((idx, w), v) in self.stencils.iter().zip(values) {
            for a in 0..4 {
                rhs[(idx[a], 0)] += w[a] * v;
            }
        }
        let sol = self.factor.solve(&rhs);
        let values: Vec<f64> = (0..self.spec.node_count()).map(|i| sol[(i, 0)]).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem(
                "gridfit produced non-finite node values".into(),
            ));
        }
        Ok(GridSurface {
            spec: self.spec,
            values,
        })
    }
}

/// Fits `v(x, y)` to `points` on `spec` with smoothing `lambda`.
pub fn gridfit(points: &[(f64, f64, f64)], spec: GridSpec, lambda: f64) -> Result<GridSurface> {
    let xy: Vec<_> = points.iter().map(|&(x, y, _)| (x, y)).collect();
    let v: Vec<_> = points.iter().map(|&(_, _, v)| v).collect();
    GridFit::new(&xy, spec, lambda)?.fit(&v)
}

/// Sum of squared differences between the fitted surface and the data.
pub fn data_residual(surface: &GridSurface, points: &[(f64, f64, f64)]) -> f64 {
    points
        .iter()
        .map(|&(x, y, v)| {
            let d = surface.interpolate(x, y) - v;
            d * d
        })
        .sum()
}

/// The regularizer vanishes on `a + b·u + c·v + d·u·v` over grid coordinates,
/// and bilinear interpolation reproduces those functions exactly, so the
/// system is singular iff the data cannot distinguish them.
fn check_pins_nullspace(xy: &[(f64, f64)], spec: &GridSpec) -> Result<()> {
    let uv: Vec<(f64, f64)> = xy
        .iter()
        .map(|&(x, y)| {
            (
                ((x - spec.origin.0) / spec.spacing.0).clamp(0.0, (spec.cols - 1) as f64),
                ((y - spec.origin.1) / spec.spacing.1).clamp(0.0, (spec.rows - 1) as f64),
            )
        })
        .collect();
    let (cu, cv) = ((spec.cols - 1) as f64 / 2.0, (spec.rows - 1) as f64 / 2.0);
    let mut gram = Matrix4::<f64>::zeros();
    for &(u, v) in &uv {
        let (a, b) = ((u - cu) / cu.max(1.0), (v - cv) / cv.max(1.0));
        let row = nalgebra::Vector4::new(1.0, a, b, a * b);
        gram += row * row.transpose();
    }
    let eig = gram.symmetric_eigenvalues();
    if xy.len() < 4 || eig.min() <= 1e-12 * eig.max().max(f64::MIN_POSITIVE) {
        return Err(Error::SingularSystem(format!(
            "{} data location(s) do not pin the bilinear null space of the smoothness term",
            xy.len()
        )));
    }
    Ok(())
}
