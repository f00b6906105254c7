//! Domain types shared by every stage of the pipeline.
//!
//! Coordinates are in pixels. Pixel `(row r, col c)` has its center at the
//! continuous position `(x = c, y = r)`, so on-grid points have integer
//! coordinates. Channel values are normalized reals stored without any gamma
//! linearization.

use crate::error::{Error, Result};

/// A 2D position `[x, y]` in pixel units.
pub type Position = [f64; 2];

/// Unnormalized isotropic Gaussian weight `exp(-|q - mu|^2 / (2 sigma^2))`.
///
/// The `(2 pi sigma^2)^-1` density constant is omitted: every weight is
/// divided by the sum of weights at the same query, so it cancels.
#[inline]
pub fn gaussian_weight(q: Position, mu: Position, sigma: f64) -> f64 {
    (-squared_distance(q, mu) / (2.0 * sigma * sigma)).exp()
}

#[inline]
pub fn squared_distance(a: Position, b: Position) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Known points: positions plus per-channel colors.
///
/// Fields are public so that callers (and the optimizer) can edit points in
/// place; [`PointSet::validate`] checks the invariants and every engine entry
/// point calls it.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub positions: Vec<Position>,
    /// Row-major `N x channels` color table.
    pub colors: Vec<f64>,
    pub channels: usize,
}

impl PointSet {
    /// Builds a point set and validates it.
    pub fn new(positions: Vec<Position>, colors: Vec<f64>, channels: usize) -> Result<Self> {
        let ps = PointSet {
            positions,
            colors,
            channels,
        };
        ps.validate()?;
        Ok(ps)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    #[inline]
    pub fn color(&self, i: usize) -> &[f64] {
        &self.colors[i * self.channels..(i + 1) * self.channels]
    }

    /// Checks every invariant; the error names the first violation found.
    ///
    /// Points are scanned in index order, position before color, so the
    /// reported index is the smallest offending one.
    pub fn validate(&self) -> Result<()> {
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::ShapeMismatch(format!(
                "channel count must be 1 or 3, got {}",
                self.channels
            )));
        }
        if self.colors.len() != self.positions.len() * self.channels {
            return Err(Error::ShapeMismatch(format!(
                "{} positions but {} color values for {} channels",
                self.positions.len(),
                self.colors.len(),
                self.channels
            )));
        }
        if self.positions.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        for (index, p) in self.positions.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::NonFiniteValue { index });
            }
            for &v in self.color(index) {
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue { index });
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::ColorOutOfRange { index });
                }
            }
        }
        Ok(())
    }

    /// Largest pairwise extent of the positions (bounding-box diagonal).
    pub fn diameter(&self) -> f64 {
        let (lo, hi) = bounding_box(&self.positions);
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }
}

pub(crate) fn bounding_box(positions: &[Position]) -> (Position, Position) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in positions {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

/// Policy for output pixels with no known point inside the cutoff radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fallback {
    /// Copy the color of the nearest known point.
    #[default]
    NearestPoint,
    /// Emit zero in every channel.
    Zero,
}

impl std::str::FromStr for Fallback {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Fallback::NearestPoint),
            "zero" => Ok(Fallback::Zero),
            other => Err(Error::Parse(format!("unknown fallback policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpConfig {
    pub sigma: f64,
    /// Absolute truncation radius in pixels.
    pub cutoff_radius: f64,
    pub fallback: Fallback,
}

impl InterpConfig {
    /// Cutoff at `3 sigma`, nearest-point fallback.
    pub fn new(sigma: f64) -> Self {
        InterpConfig {
            sigma,
            cutoff_radius: 3.0 * sigma,
            fallback: Fallback::NearestPoint,
        }
    }

    pub fn with_radius(mut self, cutoff_radius: f64) -> Self {
        self.cutoff_radius = cutoff_radius;
        self
    }

    pub fn with_fallback(mut self, fallback: Fallback) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.cutoff_radius > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "cutoff radius must be positive, got {}",
                self.cutoff_radius
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CoordinateFrame {
    pub width: usize,
    pub height: usize,
}

impl CoordinateFrame {
    pub fn new(width: usize, height: usize) -> Self {
        CoordinateFrame { width, height }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidDimensions {
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Continuous position of the pixel center at `(row, col)`.
    #[inline]
    pub fn pixel_center(&self, row: usize, col: usize) -> Position {
        [col as f64, row as f64]
    }
}

/// `height x width x channels` raster, row-major with interleaved channels:
/// `index(r, c, ch) = (r * width + c) * channels + ch`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        ImageBuffer {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        ImageBuffer {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn frame(&self) -> CoordinateFrame {
        CoordinateFrame::new(self.width, self.height)
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize, ch: usize) -> usize {
        (r * self.width + c) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[self.index(r, c, ch)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, ch: usize, v: f64) {
        let i = self.index(r, c, ch);
        self.data[i] = v;
    }

    #[inline]
    pub fn pixel(&self, r: usize, c: usize) -> &[f64] {
        let i = self.index(r, c, 0);
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &ImageBuffer) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Per-point gradients of a scalar loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    /// `N x channels`, same layout as [`PointSet::colors`].
    pub d_colors: Vec<f64>,
    pub d_positions: Vec<[f64; 2]>,
    pub channels: usize,
}

impl GradientSet {
    pub fn zeros(num_points: usize, channels: usize) -> Self {
        GradientSet {
            d_colors: vec![0.0; num_points * channels],
            d_positions: vec![[0.0; 2]; num_points],
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.d_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_positions.is_empty()
    }

    pub fn d_color(&self, i: usize) -> &[f64] {
        &self.d_colors[i * self.channels..(i + 1) * self.channels]
    }

    /// Elementwise sum, used to reduce per-tile partials.
    pub(crate) fn accumulate(&mut self, other: &GradientSet) {
        for (a, b) in self.d_colors.iter_mut().zip(&other.d_colors) {
            *a += b;
        }
        for (a, b) in self.d_positions.iter_mut().zip(&other.d_positions) {
            a[0] += b[0];
            a[1] += b[1];
        }
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn weight_symmetric(qx in -50.0..50.0f64, qy in -50.0..50.0f64,
                            mx in -50.0..50.0f64, my in -50.0..50.0f64,
                            sigma in 0.1..10.0f64) {
            let w = gaussian_weight([qx, qy], [mx, my], sigma);
            prop_assert_eq!(w, gaussian_weight([mx, my], [qx, qy], sigma));
            prop_assert!((0.0..=1.0).contains(&w));
        }

        // Exact only when every coordinate difference is representable, so the
        // inputs are drawn on a dyadic lattice (multiples of 1/8) and shifted
        // by integers.
        #[test]
        fn weight_translation_invariant_on_dyadic_lattice(
            q in (-400i32..400, -400i32..400), mu in (-400i32..400, -400i32..400),
            t in (-1000i32..1000, -1000i32..1000), sigma in 0.5..8.0f64)
        {
            let q = [q.0 as f64 / 8.0, q.1 as f64 / 8.0];
            let mu = [mu.0 as f64 / 8.0, mu.1 as f64 / 8.0];
            let t = [t.0 as f64, t.1 as f64];
            let w = gaussian_weight(q, mu, sigma);
            let wt = gaussian_weight([q[0] + t[0], q[1] + t[1]], [mu[0] + t[0], mu[1] + t[1]], sigma);
            prop_assert_eq!(w.to_bits(), wt.to_bits());
        }

        #[test]
        fn weight_decreases_with_distance(d1 in 0.0..5.0f64, extra in 1e-3..5.0f64, sigma in 0.5..4.0f64) {
            let near = gaussian_weight([d1, 0.0], [0.0, 0.0], sigma);
            let far = gaussian_weight([d1 + extra, 0.0], [0.0, 0.0], sigma);
            prop_assert!(far < near);
        }
    }
}
