//! Turning rasters into point sets, plus the L1 metric and a synthetic
//! image generator.

use crate::error::{Error, Result};
use crate::model::{ImageBuffer, PointSet};
use crate::rng::SeededRng;

/// Box-averages each `factor x factor` block into one pixel of a
/// `ceil(H/f) x ceil(W/f)` image. Edge blocks are averaged over the pixels
/// they actually cover.
pub fn box_downsample(img: &ImageBuffer, factor: usize) -> Result<ImageBuffer> {
    if factor == 0 {
        return Err(Error::InvalidFactor(factor));
    }
    let h = img.height.div_ceil(factor);
    let w = img.width.div_ceil(factor);
    let ch = img.channels;
    let mut out = ImageBuffer::zeros(h, w, ch);
    let mut acc = vec![0.0; ch];
    for br in 0..h {
        let rows = br * factor..((br + 1) * factor).min(img.height);
        for bc in 0..w {
            let cols = bc * factor..((bc + 1) * factor).min(img.width);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for r in rows.clone() {
                for c in cols.clone() {
                    for (a, &v) in acc.iter_mut().zip(img.pixel(r, c)) {
                        *a += v;
                    }
                }
            }
            let count = (rows.len() * cols.len()) as f64;
            for (k, &a) in acc.iter().enumerate() {
                out.set(br, bc, k, a / count);
            }
        }
    }
    Ok(out)
}

/// One point per `factor x factor` block: the block's mean color, placed at
/// the center of the pixels the block covers.
///
/// For full blocks the center is `(bc * f + (f - 1) / 2, br * f + (f - 1) / 2)`.
pub fn grid_subsample(img: &ImageBuffer, factor: usize) -> Result<PointSet> {
    let small = box_downsample(img, factor)?;
    let center = |block: usize, extent: usize| {
        let start = block * factor;
        let end = ((block + 1) * factor).min(extent);
        start as f64 + (end - start - 1) as f64 / 2.0
    };
    let mut positions = Vec::with_capacity(small.width * small.height);
    for br in 0..small.height {
        for bc in 0..small.width {
            positions.push([center(bc, img.width), center(br, img.height)]);
        }
    }
    PointSet::new(positions, small.data, img.channels)
}

/// Points at the source positions of a small image's pixel centers when it
/// is treated as a center-aligned resampling of a `width x height` frame.
pub fn lattice_points(small: &ImageBuffer, width: usize, height: usize) -> Result<PointSet> {
    let sx = width as f64 / small.width as f64;
    let sy = height as f64 / small.height as f64;
    let mut positions = Vec::with_capacity(small.width * small.height);
    for r in 0..small.height {
        for c in 0..small.width {
            positions.push([(c as f64 + 0.5) * sx - 0.5, (r as f64 + 0.5) * sy - 0.5]);
        }
    }
    PointSet::new(positions, small.data.clone(), small.channels)
}

/// `n` points drawn uniformly over `[-0.5, W - 0.5) x [-0.5, H - 0.5)`, each
/// colored by the source pixel whose footprint contains it.
pub fn random_subsample(img: &ImageBuffer, n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::InvalidCount(n));
    }
    if img.width == 0 || img.height == 0 {
        return Err(Error::InvalidDimensions {
            width: img.width,
            height: img.height,
        });
    }
    let mut rng = SeededRng::new(seed);
    let mut positions = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n * img.channels);
    for _ in 0..n {
        let x = rng.uniform(-0.5, img.width as f64 - 0.5);
        let y = rng.uniform(-0.5, img.height as f64 - 0.5);
        let c = ((x + 0.5).floor() as usize).min(img.width - 1);
        let r = ((y + 0.5).floor() as usize).min(img.height - 1);
        positions.push([x, y]);
        colors.extend_from_slice(img.pixel(r, c));
    }
    PointSet::new(positions, colors, img.channels)
}

/// Mean absolute difference over all pixels and channels.
pub fn l1_metric(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.check_same_shape(b)?;
    if a.data.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.data.len() as f64)
}

/// A smooth test image: a flat background plus a seeded mixture of soft
/// Gaussian blobs, clamped to `[0, 1]`.
///
/// Blob widths scale with the image size, so a 128-pixel image has blobs
/// with standard deviations between 6 and 24 pixels.
pub fn synthetic_blobs(height: usize, width: usize, channels: usize, seed: u64) -> ImageBuffer {
    struct Blob {
        center: [f64; 2],
        inv_two_var: f64,
        amplitude: Vec<f64>,
    }
    let mut rng = SeededRng::new(seed);
    let background: Vec<f64> = (0..channels).map(|_| rng.uniform(0.25, 0.75)).collect();
    let scale = height.max(width) as f64 / 128.0;
    let blobs: Vec<Blob> = (0..rng.range_inclusive(4, 10))
        .map(|_| {
            let center = [
                rng.uniform(0.0, width as f64),
                rng.uniform(0.0, height as f64),
            ];
            let s = rng.uniform(6.0, 24.0) * scale;
            Blob {
                center,
                inv_two_var: 1.0 / (2.0 * s * s),
                amplitude: (0..channels).map(|_| rng.uniform(-0.5, 0.5)).collect(),
            }
        })
        .collect();
    ImageBuffer::from_fn(height, width, channels, |r, c, k| {
        let v = blobs.iter().fold(background[k], |acc, b| {
            let dx = c as f64 - b.center[0];
            let dy = r as f64 - b.center[1];
            acc + b.amplitude[k] * (-(dx * dx + dy * dy) * b.inv_two_var).exp()
        });
        v.clamp(0.0, 1.0)
    })
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn l1_is_a_symmetric_nonnegative_distance(seed_a in 0u64..500, seed_b in 0u64..500) {
            let a = synthetic_blobs(6, 5, 1, seed_a);
            let b = synthetic_blobs(6, 5, 1, seed_b);
            let ab = l1_metric(&a, &b).unwrap();
            prop_assert_eq!(ab, l1_metric(&b, &a).unwrap());
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(l1_metric(&a, &a).unwrap(), 0.0);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }
    }
}
