//! Three-channel rasterization of a face pointcloud.
//!
//! Depth `z(x, y)`, azimuth `θ(x, y)` and elevation `φ(x, y)` of the vertex
//! normals are each fitted onto one shared `x-y` grid, min-max normalized per
//! channel to `0..=255`, and cropped to a 224×224 window centred on the
//! nosetip (the grid node of maximum fitted depth).

pub mod gridfit;
pub mod normals;

use serde::{Deserialize, Serialize};

use crate::corpus::{Emotion, Face};
use crate::error::{Error, Result};

pub use gridfit::{data_residual, gridfit, GridFit, GridSpec, GridSurface, DEFAULT_LAMBDA};
pub use normals::{estimate_normals, to_spherical, DEFAULT_NEIGHBORS};

/// Side length of emitted images.
pub const IMAGE_SIZE: usize = 224;
/// Channel value assigned to a constant channel.
pub const CONSTANT_CHANNEL_VALUE: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Grid extent as a multiple of the face's `x-y` bounding box.
    pub margin: f64,
    pub lambda: f64,
    pub normal_neighbors: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            grid_rows: 320,
            grid_cols: 320,
            margin: 1.1,
            lambda: DEFAULT_LAMBDA,
            normal_neighbors: DEFAULT_NEIGHBORS,
        }
    }
}

/// A 224×224 image with channels (depth, azimuth, elevation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelImage {
    /// Row-major, interleaved RGB; row 0 is the largest `y`.
    pub pixels: Vec<u8>,
    /// Synthetic identity of the rasterized face.
    pub source: u64,
    pub label: Emotion,
    /// Grid `(row, col)` of the nosetip.
    pub nosetip: (usize, usize),
}

impl ChannelImage {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * IMAGE_SIZE + col);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// 8-bit RGB PNG, R=depth, G=azimuth, B=elevation.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        encode_png(&self.pixels)
    }
}

pub fn encode_png(pixels: &[u8]) -> Result<Vec<u8>> {
    use image::ImageEncoder;
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out).write_image(
        pixels,
        IMAGE_SIZE as u32,
        IMAGE_SIZE as u32,
        image::ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

/// Decodes a 224×224 RGB PNG into interleaved pixels.
pub fn decode_png(bytes: &[u8]) -> Result<Vec<u8>> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.into_rgb8();
    if img.width() as usize != IMAGE_SIZE || img.height() as usize != IMAGE_SIZE {
        return Err(Error::InvalidArgument(format!(
            "expected a {IMAGE_SIZE}×{IMAGE_SIZE} image, got {}×{}",
            img.width(),
            img.height()
        )));
    }
    Ok(img.into_raw())
}

/// The grid covering `margin ×` the face's `x-y` bounding box.
pub fn face_grid(face: &Face, config: &RasterConfig) -> Result<GridSpec> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in face.vertices() {
        for a in 0..2 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    let (w, h) = (hi[0] - lo[0], hi[1] - lo[1]);
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::InvalidArgument(
            "face has a degenerate x-y bounding box".into(),
        ));
    }
    if !(config.margin >= 1.0 && config.margin.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "margin {} must be at least 1",
            config.margin
        )));
    }
    let (ew, eh) = (w * config.margin, h * config.margin);
    let spec = GridSpec {
        rows: config.grid_rows,
        cols: config.grid_cols,
        origin: (
            0.5 * (lo[0] + hi[0]) - 0.5 * ew,
            0.5 * (lo[1] + hi[1]) - 0.5 * eh,
        ),
        spacing: (
            ew / (config.grid_cols.max(2) - 1) as f64,
            eh / (config.grid_rows.max(2) - 1) as f64,
        ),
    };
    spec.validate()?;
    Ok(spec)
}

/// Min-max scaling to `0..=255` with round-half-up. Channels whose range is
/// within round-off of zero map to 128.
pub fn normalize_channel(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let magnitude = lo.abs().max(hi.abs()).max(1.0);
    if (hi - lo).is_nan() || hi - lo <= 1e-9 * magnitude {
        return vec![CONSTANT_CHANNEL_VALUE; values.len()];
    }
    let span = hi - lo;
    values
        .iter()
        .map(|&v| ((v - lo) / span * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Node of maximum value; ties go to the node nearest the grid centre, then
/// to the first in row-major order.
pub fn find_nosetip(depth: &GridSurface) -> (usize, usize) {
    let spec = depth.spec();
    let (cr, cc) = ((spec.rows - 1) as f64 / 2.0, (spec.cols - 1) as f64 / 2.0);
    let dist = |i: usize| {
        let (r, c) = ((i / spec.cols) as f64, (i % spec.cols) as f64);
        (r - cr).powi(2) + (c - cc).powi(2)
    };
    let mut best = 0;
    for (i, &v) in depth.values().iter().enumerate().skip(1) {
        let b = depth.values()[best];
        if v > b || (v == b && dist(i) < dist(best)) {
            best = i;
        }
    }
    (best / spec.cols, best % spec.cols)
}

/// Top-left grid node of the crop window centred on `center`, shifted to
/// stay inside the grid.
pub fn crop_origin(center: (usize, usize), rows: usize, cols: usize) -> (usize, usize) {
    let half = IMAGE_SIZE / 2;
    (
        center.0.saturating_sub(half).min(rows - IMAGE_SIZE),
        center.1.saturating_sub(half).min(cols - IMAGE_SIZE),
    )
}

/// Rasterizes a face into a [`ChannelImage`].
pub fn rasterize_face(face: &Face, config: &RasterConfig) -> Result<ChannelImage> {
    if config.grid_rows < IMAGE_SIZE || config.grid_cols < IMAGE_SIZE {
        return Err(Error::InvalidArgument(format!(
            "grid {}×{} cannot host a {IMAGE_SIZE}×{IMAGE_SIZE} crop",
            config.grid_rows, config.grid_cols
        )));
    }
    let spec = face_grid(face, config)?;
    let xy: Vec<(f64, f64)> = face.vertices().iter().map(|v| (v.x, v.y)).collect();
    let fit = GridFit::new(&xy, spec, config.lambda)?;

    let z: Vec<f64> = face.vertices().iter().map(|v| v.z).collect();
    let depth = fit.fit(&z)?;
    let (azimuth, elevation): (Vec<f64>, Vec<f64>) =
        estimate_normals(face, config.normal_neighbors)?
            .iter()
            .map(to_spherical)
            .unzip();
    let azimuth = fit.fit(&azimuth)?;
    let elevation = fit.fit(&elevation)?;

    let channels = [
        normalize_channel(depth.values()),
        normalize_channel(azimuth.values()),
        normalize_channel(elevation.values()),
    ];
    let nosetip = find_nosetip(&depth);
    let (top, left) = crop_origin(nosetip, spec.rows, spec.cols);

    let mut pixels = Vec::with_capacity(IMAGE_SIZE * IMAGE_SIZE * 3);
    for img_row in 0..IMAGE_SIZE {
        let grid_row = top + IMAGE_SIZE - 1 - img_row;
        for col in 0..IMAGE_SIZE {
            let i = grid_row * spec.cols + left + col;
            pixels.extend(channels.iter().map(|ch| ch[i]));
        }
    }
    Ok(ChannelImage {
        pixels,
        source: face.identity(),
        label: face.expression().emotion(),
        nosetip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_channel(&[1.0, 2.0, 3.0]), vec![0, 128, 255]);
        assert_eq!(normalize_channel(&[5.0, 5.0 + 1e-12]), vec![128, 128]);
        // 0.5/255 of the range rounds up
        let v = normalize_channel(&[0.0, 0.5, 255.0]);
        assert_eq!(v, vec![0, 1, 255]);
    }

    #[test]
    fn crop_shifts_at_edges() {
        assert_eq!(crop_origin((0, 0), 320, 320), (0, 0));
        assert_eq!(crop_origin((319, 319), 320, 320), (96, 96));
        assert_eq!(crop_origin((160, 150), 320, 320), (48, 38));
        assert_eq!(crop_origin((10, 10), 224, 224), (0, 0));
    }

    #[test]
    fn nosetip_tie_prefers_centre() {
        let spec = GridSpec {
            rows: 5,
            cols: 5,
            origin: (0.0, 0.0),
            spacing: (1.0, 1.0),
        };
        let mut values = vec![0.0; 25];
        values[0] = 1.0;
        values[12] = 1.0;
        values[24] = 1.0;
        let surface = GridSurface::new(spec, values).unwrap();
        assert_eq!(find_nosetip(&surface), (2, 2));
    }

    #[test]
    fn small_grid_rejected() {
        let face = crate::corpus::generate_synthetic_corpus(
            1,
            1,
            100,
            &[crate::ExpressionLabel::neutral()],
        )
        .unwrap()
        .faces()[0]
            .clone();
        let cfg = RasterConfig {
            grid_rows: 200,
            ..RasterConfig::default()
        };
        assert!(rasterize_face(&face, &cfg).is_err());
    }
}
