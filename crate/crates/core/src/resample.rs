//! Separable uniform-grid resamplers: nearest, box, bilinear, bicubic,
//! Hamming and Lanczos.
//!
//! Output pixel `j` maps to the source coordinate
//! `x_src = (j + 0.5) * (in / out) - 0.5`. When shrinking, the kernel is
//! stretched by the scale factor so it also acts as an anti-aliasing filter.
//! Taps that fall outside the source are clamped to the edge pixel, and each
//! output pixel's weights are renormalized to sum to one.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{CoordinateFrame, ImageBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Filter {
    Nearest,
    Box,
    Bilinear,
    Bicubic,
    Hamming,
    Lanczos,
}

impl Filter {
    pub const ALL: [Filter; 6] = [
        Filter::Nearest,
        Filter::Box,
        Filter::Bilinear,
        Filter::Bicubic,
        Filter::Hamming,
        Filter::Lanczos,
    ];

    /// Kernel half-width in source pixels at unit scale.
    pub fn support(self) -> f64 {
        match self {
            Filter::Nearest => 0.0,
            Filter::Box => 0.5,
            Filter::Bilinear | Filter::Hamming => 1.0,
            Filter::Bicubic => 2.0,
            Filter::Lanczos => 3.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Filter::Nearest => "nearest",
            Filter::Box => "box",
            Filter::Bilinear => "bilinear",
            Filter::Bicubic => "bicubic",
            Filter::Hamming => "hamming",
            Filter::Lanczos => "lanczos",
        }
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Filter::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown resampling method `{s}`")))
    }
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        let x = PI * t;
        x.sin() / x
    }
}

/// Keys cubic convolution kernel with `a = -0.5`.
fn keys_cubic(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t < 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Kernel value at offset `t` (in source pixels, unit scale).
///
/// `Nearest` is point sampling rather than a convolution; it is given the
/// box kernel here so that the function stays total.
pub fn kernel_eval(filter: Filter, t: f64) -> f64 {
    match filter {
        Filter::Nearest | Filter::Box => {
            if (-0.5..0.5).contains(&t) {
                1.0
            } else {
                0.0
            }
        }
        Filter::Bilinear => (1.0 - t.abs()).max(0.0),
        Filter::Hamming => {
            if t.abs() < 1.0 {
                (0.54 + 0.46 * (PI * t).cos()) * sinc(t)
            } else {
                0.0
            }
        }
        Filter::Bicubic => keys_cubic(t),
        Filter::Lanczos => {
            if t.abs() < 3.0 {
                sinc(t) * sinc(t / 3.0)
            } else {
                0.0
            }
        }
    }
}

/// Sparse weights for one output sample: `(source index, weight)` pairs.
type Taps = Vec<(usize, f64)>;

/// Precomputes normalized taps for every output position along one axis.
fn axis_taps(filter: Filter, n_in: usize, n_out: usize) -> Vec<Taps> {
    let scale = n_in as f64 / n_out as f64;
    let clamp = |i: i64| i.clamp(0, n_in as i64 - 1) as usize;

    if filter == Filter::Nearest {
        return (0..n_out)
            .map(|j| vec![(clamp(((j as f64 + 0.5) * scale).floor() as i64), 1.0)])
            .collect();
    }

    let stretch = scale.max(1.0);
    let support = filter.support() * stretch;
    (0..n_out)
        .map(|j| {
            let center = (j as f64 + 0.5) * scale - 0.5;
            let lo = (center - support).floor() as i64;
            let hi = (center + support).ceil() as i64;
            let mut taps: Taps = Vec::with_capacity((hi - lo + 1) as usize);
            let mut total = 0.0;
            for i in lo..=hi {
                let w = kernel_eval(filter, (i as f64 - center) / stretch);
                if w != 0.0 {
                    total += w;
                    taps.push((clamp(i), w));
                }
            }
            if total == 0.0 {
                return vec![(clamp(center.round() as i64), 1.0)];
            }
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

fn resample_rows(img: &ImageBuffer, width: usize, filter: Filter) -> ImageBuffer {
    let taps = axis_taps(filter, img.width, width);
    let ch = img.channels;
    let mut out = ImageBuffer::zeros(img.height, width, ch);
    for r in 0..img.height {
        for (j, t) in taps.iter().enumerate() {
            for k in 0..ch {
                let v = t.iter().map(|&(i, w)| w * img.get(r, i, k)).sum();
                out.set(r, j, k, v);
            }
        }
    }
    out
}

fn resample_cols(img: &ImageBuffer, height: usize, filter: Filter) -> ImageBuffer {
    let taps = axis_taps(filter, img.height, height);
    let ch = img.channels;
    let mut out = ImageBuffer::zeros(height, img.width, ch);
    for (j, t) in taps.iter().enumerate() {
        for c in 0..img.width {
            for k in 0..ch {
                let v = t.iter().map(|&(i, w)| w * img.get(i, c, k)).sum();
                out.set(j, c, k, v);
            }
        }
    }
    out
}

fn check_dims(img: &ImageBuffer, out: CoordinateFrame) -> Result<()> {
    if img.width == 0 || img.height == 0 || img.data.len() != img.width * img.height * img.channels
    {
        return Err(Error::InvalidDimensions {
            width: img.width,
            height: img.height,
        });
    }
    if out.width == 0 || out.height == 0 {
        return Err(Error::InvalidDimensions {
            width: out.width,
            height: out.height,
        });
    }
    Ok(())
}

/// Horizontal pass, vertical pass, no clamping. Exposed for the
/// separability checks.
pub fn resample_unclamped(
    img: &ImageBuffer,
    out: CoordinateFrame,
    filter: Filter,
    vertical_first: bool,
) -> Result<ImageBuffer> {
    check_dims(img, out)?;
    Ok(if vertical_first {
        resample_rows(&resample_cols(img, out.height, filter), out.width, filter)
    } else {
        resample_cols(&resample_rows(img, out.width, filter), out.height, filter)
    })
}

/// Resamples `img` to `out` and clamps the result to `[0, 1]`.
pub fn resample(img: &ImageBuffer, out: CoordinateFrame, filter: Filter) -> Result<ImageBuffer> {
    let mut res = resample_unclamped(img, out, filter, false)?;
    res.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok(res)
}

/// Sum of the normalized taps for every output sample along one axis.
pub fn tap_sums(filter: Filter, n_in: usize, n_out: usize) -> Vec<f64> {
    axis_taps(filter, n_in, n_out)
        .iter()
        .map(|t| t.iter().map(|&(_, w)| w).sum())
        .collect()
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn filter() -> impl Strategy<Value = Filter> {
        prop::sample::select(Filter::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn constant_image_is_preserved(f in filter(), v in 0.0..1.0f64,
                                       w_in in 1usize..24, h_in in 1usize..24,
                                       w_out in 1usize..40, h_out in 1usize..40) {
            let img = ImageBuffer::filled(h_in, w_in, 3, v);
            let out = resample(&img, CoordinateFrame::new(w_out, h_out), f).unwrap();
            prop_assert!(out.data.iter().all(|&x| (x - v).abs() <= 1e-12));
        }

        #[test]
        fn taps_sum_to_one(f in filter(), n_in in 1usize..64, n_out in 1usize..64) {
            prop_assert!(tap_sums(f, n_in, n_out).iter().all(|s| (s - 1.0).abs() <= 1e-12));
        }

        #[test]
        fn pass_order_does_not_matter(f in filter(), seed in 0u64..1000,
                                      w_out in 1usize..20, h_out in 1usize..20) {
            let img = ImageBuffer::from_fn(9, 11, 1, |r, c, _| {
                (((r * 31 + c * 17) as u64 ^ seed) % 97) as f64 / 96.0
            });
            let out = CoordinateFrame::new(w_out, h_out);
            let a = resample_unclamped(&img, out, f, false).unwrap();
            let b = resample_unclamped(&img, out, f, true).unwrap();
            for (x, y) in a.data.iter().zip(&b.data) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn nearest_integer_upsample_replicates(factor in 1usize..6, w in 1usize..8, h in 1usize..8) {
            let img = ImageBuffer::from_fn(h, w, 1, |r, c, _| (r * w + c) as f64 / (w * h) as f64);
            let out = resample(&img, CoordinateFrame::new(w * factor, h * factor), Filter::Nearest).unwrap();
            for r in 0..h * factor {
                for c in 0..w * factor {
                    prop_assert_eq!(out.get(r, c, 0), img.get(r / factor, c / factor, 0));
                }
            }
        }
    }
}
