//! Landmark rasters and nearest-neighbor resolution degradation.
//!
//! Rasters stand in for face crops in the low-resolution study: landmarks
//! are splatted as small Gaussian bumps, then blocks are destroyed by
//! down- and up-sampling.

use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

/// Standard deviation of a landmark splat, in pixels.
pub const SPLAT_SIGMA: f64 = 1.0;

/// Factors drawn by [`AugmentScheme::Set5`].
pub const SET5_FACTORS: [u32; 5] = [1, 6, 11, 16, 21];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RasterError {
    #[error("unknown augmentation scheme {0:?} (expected none, fixed10, uniform1to10 or set5)")]
    UnknownScheme(String),
    #[error("raster dimensions must be at least 1x1 (got {width}x{height})")]
    InvalidSize { width: usize, height: usize },
    #[error("resampling factor must be at least 1")]
    InvalidFactor,
}

/// Row-major grid of values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Raster {
    pub fn zeros(width: usize, height: usize) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidSize { width, height });
        }
        Ok(Self {
            width,
            height,
            values: vec![0.0; width * height],
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Wraps raw values, clamping them into `[0, 1]`.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self, RasterError> {
        let mut r = Self::zeros(width, height)?;
        if values.len() != r.values.len() {
            return Err(RasterError::InvalidSize { width, height });
        }
        r.values = values
            .into_iter()
            .map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        Ok(r)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Euclidean distance between pixel values of equally sized rasters.
    pub fn l2_distance(&self, other: &Raster) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// ASCII PGM (P2) with 8-bit levels.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.width, self.height);
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row
                .iter()
                .map(|v| ((v * 255.0).round() as u8).to_string())
                .collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }
}

/// Splats each point (pixel coordinates; pixel `(i, j)` covers
/// `[i, i+1) × [j, j+1)`) as a Gaussian bump, clamped at 1. Points outside
/// the grid are skipped.
pub fn rasterize(points: &[Point2<f64>], width: usize, height: usize) -> Result<Raster, RasterError> {
    let mut r = Raster::zeros(width, height)?;
    let reach = (3.0 * SPLAT_SIGMA).ceil() as isize;
    let inv = 1.0 / (2.0 * SPLAT_SIGMA * SPLAT_SIGMA);
    for p in points {
        let inside = p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64;
        if !inside {
            continue;
        }
        let (px, py) = (p.x.floor() as isize, p.y.floor() as isize);
        for y in (py - reach).max(0)..=(py + reach).min(height as isize - 1) {
            for x in (px - reach).max(0)..=(px + reach).min(width as isize - 1) {
                let dx = x as f64 + 0.5 - p.x;
                let dy = y as f64 + 0.5 - p.y;
                let v = &mut r.values[y as usize * width + x as usize];
                *v = (*v + (-(dx * dx + dy * dy) * inv).exp()).min(1.0);
            }
        }
    }
    Ok(r)
}

fn nearest_resample(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    // source index for destination i is floor((i + 0.5) * s / d)
    let map = |i: usize, s: usize, d: usize| (((2 * i + 1) * s) / (2 * d)).min(s - 1);
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let sy = map(y, sh, dh);
        for x in 0..dw {
            out.push(src[sy * sw + map(x, sw, dw)]);
        }
    }
    out
}

/// Nearest-neighbor downsample by `factor`, then nearest-neighbor upsample
/// back to the original size.
pub fn degrade(r: &Raster, factor: u32) -> Result<Raster, RasterError> {
    if factor == 0 {
        return Err(RasterError::InvalidFactor);
    }
    if factor == 1 {
        return Ok(r.clone());
    }
    let f = factor as usize;
    let (dw, dh) = (r.width.div_ceil(f), r.height.div_ceil(f));
    // downsample samples the centre of each f×f block
    let mut small = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let sy = (y * f + f / 2).min(r.height - 1);
        for x in 0..dw {
            let sx = (x * f + f / 2).min(r.width - 1);
            small.push(r.values[sy * r.width + sx]);
        }
    }
    // upsample replicates each sample back over its block
    let mut values = Vec::with_capacity(r.values.len());
    for y in 0..r.height {
        for x in 0..r.width {
            values.push(small[(y / f) * dw + x / f]);
        }
    }
    Ok(Raster {
        width: r.width,
        height: r.height,
        values,
    })
}

/// Resizes to `width × height` with nearest-neighbor sampling.
pub fn resize_nearest(r: &Raster, width: usize, height: usize) -> Result<Raster, RasterError> {
    if width == 0 || height == 0 {
        return Err(RasterError::InvalidSize { width, height });
    }
    Ok(Raster {
        width,
        height,
        values: nearest_resample(&r.values, r.width, r.height, width, height),
    })
}

/// How the training-time degradation factor is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentScheme {
    /// No augmentation (factor 1).
    None,
    Fixed10,
    Uniform1To10,
    Set5,
}

impl AugmentScheme {
    pub const ALL: [AugmentScheme; 4] = [
        AugmentScheme::None,
        AugmentScheme::Fixed10,
        AugmentScheme::Uniform1To10,
        AugmentScheme::Set5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentScheme::None => "none",
            AugmentScheme::Fixed10 => "fixed10",
            AugmentScheme::Uniform1To10 => "uniform1to10",
            AugmentScheme::Set5 => "set5",
        }
    }
}

impl FromStr for AugmentScheme {
    type Err = RasterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AugmentScheme::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| RasterError::UnknownScheme(s.to_string()))
    }
}

/// Draws a degradation factor; deterministic per seed.
pub fn augment_factor(scheme: AugmentScheme, seed: u64) -> u32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match scheme {
        AugmentScheme::None => 1,
        AugmentScheme::Fixed10 => 10,
        AugmentScheme::Uniform1To10 => rng.random_range(1..=10),
        AugmentScheme::Set5 => SET5_FACTORS[rng.random_range(0..SET5_FACTORS.len())],
    }
}
