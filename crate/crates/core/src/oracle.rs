//! Slow reference implementations used to validate the engine.
//!
//! Nothing here shares code with [`crate::engine`] or [`crate::spatial`]:
//! every pixel sums over every point in index order, and gradients come from
//! central finite differences rather than from any derivative formula.

use crate::error::Result;
use crate::model::{
    CoordinateFrame, Fallback, GradientSet, ImageBuffer, InterpConfig, PointSet, Position,
};

fn weight(q: Position, mu: Position, sigma: f64) -> f64 {
    let dx = q[0] - mu[0];
    let dy = q[1] - mu[1];
    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
}

fn dist2(q: Position, mu: Position) -> f64 {
    let dx = q[0] - mu[0];
    let dy = q[1] - mu[1];
    dx * dx + dy * dy
}

fn brute_nearest(ps: &PointSet, q: Position) -> usize {
    let mut best = 0;
    for i in 1..ps.len() {
        if dist2(q, ps.positions[i]) < dist2(q, ps.positions[best]) {
            best = i;
        }
    }
    best
}

/// Evaluates the mixture at every pixel center over all `N` points.
///
/// If every weight at a pixel underflows to zero the nearest point's color is
/// used, which is the limit of the mixture as the weights vanish.
pub fn oracle_forward(ps: &PointSet, sigma: f64, frame: CoordinateFrame) -> Result<ImageBuffer> {
    ps.validate()?;
    InterpConfig::new(sigma).validate()?;
    frame.validate()?;
    Ok(evaluate(ps, sigma, None, frame))
}

/// Like [`oracle_forward`] but drops points farther than `cfg.cutoff_radius`
/// from each pixel and applies `cfg.fallback` to empty neighborhoods.
///
/// The neighborhood is found by an exhaustive distance scan.
pub fn oracle_forward_truncated(
    ps: &PointSet,
    cfg: &InterpConfig,
    frame: CoordinateFrame,
) -> Result<ImageBuffer> {
    ps.validate()?;
    cfg.validate()?;
    frame.validate()?;
    Ok(evaluate(ps, cfg.sigma, Some(cfg), frame))
}

fn evaluate(
    ps: &PointSet,
    sigma: f64,
    truncation: Option<&InterpConfig>,
    frame: CoordinateFrame,
) -> ImageBuffer {
    let ch = ps.channels;
    let mut out = ImageBuffer::zeros(frame.height, frame.width, ch);
    for r in 0..frame.height {
        for c in 0..frame.width {
            let q = [c as f64, r as f64];
            let mut num = vec![0.0; ch];
            let mut den = 0.0;
            for i in 0..ps.len() {
                if let Some(cfg) = truncation {
                    if dist2(q, ps.positions[i]) > cfg.cutoff_radius * cfg.cutoff_radius {
                        continue;
                    }
                }
                let w = weight(q, ps.positions[i], sigma);
                den += w;
                for (n, &color) in num.iter_mut().zip(&ps.colors[i * ch..(i + 1) * ch]) {
                    *n += color * w;
                }
            }
            for (k, &n) in num.iter().enumerate() {
                let v = if den > 0.0 {
                    n / den
                } else if truncation.map(|t| t.fallback) == Some(Fallback::Zero) {
                    0.0
                } else {
                    ps.colors[brute_nearest(ps, q) * ch + k]
                };
                out.set(r, c, k, v);
            }
        }
    }
    out
}

fn inner(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Central-difference gradients of `<upstream, forward(ps)>` for an arbitrary
/// forward evaluator.
///
/// Only the points listed in `points` are perturbed (all points when
/// `None`); entries for the rest are left at zero. Color perturbations are
/// not clamped to `[0, 1]`, since the evaluator is a smooth function of them.
pub fn fd_gradients<F>(
    ps: &PointSet,
    upstream: &ImageBuffer,
    h: f64,
    points: Option<&[usize]>,
    mut eval: F,
) -> GradientSet
where
    F: FnMut(&PointSet) -> ImageBuffer,
{
    let ch = ps.channels;
    let mut grad = GradientSet::zeros(ps.len(), ch);
    let all: Vec<usize> = (0..ps.len()).collect();
    let points = points.unwrap_or(&all);
    let mut work = ps.clone();

    let mut central = |work: &mut PointSet, get: &dyn Fn(&mut PointSet) -> &mut f64| -> f64 {
        let orig = *get(work);
        *get(work) = orig + h;
        let plus = inner(upstream, &eval(work));
        *get(work) = orig - h;
        let minus = inner(upstream, &eval(work));
        *get(work) = orig;
        (plus - minus) / (2.0 * h)
    };

    for &i in points {
        for k in 0..ch {
            grad.d_colors[i * ch + k] = central(&mut work, &|p| &mut p.colors[i * ch + k]);
        }
        for axis in 0..2 {
            grad.d_positions[i][axis] = central(&mut work, &|p| &mut p.positions[i][axis]);
        }
    }
    grad
}

/// Finite-difference gradients through [`oracle_forward`].
pub fn oracle_gradients_fd(
    ps: &PointSet,
    sigma: f64,
    frame: CoordinateFrame,
    upstream: &ImageBuffer,
    h: f64,
) -> Result<GradientSet> {
    ps.validate()?;
    InterpConfig::new(sigma).validate()?;
    frame.validate()?;
    Ok(fd_gradients(ps, upstream, h, None, |p| {
        evaluate(p, sigma, None, frame)
    }))
}

/// Finite-difference gradients through [`oracle_forward_truncated`],
/// perturbing only `points` (all when `None`).
pub fn oracle_gradients_fd_truncated(
    ps: &PointSet,
    cfg: &InterpConfig,
    frame: CoordinateFrame,
    upstream: &ImageBuffer,
    h: f64,
    points: Option<&[usize]>,
) -> Result<GradientSet> {
    ps.validate()?;
    cfg.validate()?;
    frame.validate()?;
    Ok(fd_gradients(ps, upstream, h, points, |p| {
        evaluate(p, cfg.sigma, Some(cfg), frame)
    }))
}

/// Elementwise difference statistics between two buffers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferComparison {
    pub max_abs: f64,
    pub mean_abs: f64,
    /// `(row, col, channel)` of the largest difference.
    pub argmax: (usize, usize, usize),
}

pub fn compare_buffers(a: &ImageBuffer, b: &ImageBuffer) -> Result<BufferComparison> {
    a.check_same_shape(b)?;
    let mut max_abs = 0.0;
    let mut argmax = 0;
    let mut sum = 0.0;
    for (i, (x, y)) in a.data.iter().zip(&b.data).enumerate() {
        let d = (x - y).abs();
        sum += d;
        if d > max_abs {
            max_abs = d;
            argmax = i;
        }
    }
    let ch = a.channels.max(1);
    let pixel = argmax / ch;
    let width = a.width.max(1);
    Ok(BufferComparison {
        max_abs,
        mean_abs: if a.data.is_empty() {
            0.0
        } else {
            sum / a.data.len() as f64
        },
        argmax: (pixel / width, pixel % width, argmax % ch),
    })
}

/// Relative error `|a - b| / max(|a|, |b|)`, treated as zero when `|a - b|`
/// is below `abs_floor`.
pub fn relative_error(a: f64, b: f64, abs_floor: f64) -> f64 {
    let diff = (a - b).abs();
    if diff <= abs_floor {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

/// Worst [`relative_error`] over every gradient entry.
pub fn max_gradient_error(a: &GradientSet, b: &GradientSet, abs_floor: f64) -> f64 {
    let colors = a
        .d_colors
        .iter()
        .zip(&b.d_colors)
        .map(|(&x, &y)| relative_error(x, y, abs_floor));
    let positions = a.d_positions.iter().zip(&b.d_positions).flat_map(|(x, y)| {
        [
            relative_error(x[0], y[0], abs_floor),
            relative_error(x[1], y[1], abs_floor),
        ]
    });
    colors.chain(positions).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_constant() {
        let ps = PointSet::new(vec![[10.0, -3.0]], vec![0.1, 0.2, 0.3], 3).unwrap();
        let img = oracle_forward(&ps, 2.0, CoordinateFrame::new(4, 3)).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                for (v, want) in img.pixel(r, c).iter().zip([0.1, 0.2, 0.3]) {
                    assert!((v - want).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn three_point_value() {
        let ps = PointSet::new(
            vec![[-0.5, -0.5], [1.5, -0.5], [-0.5, 1.5]],
            vec![1.0, 0.0, 0.0],
            1,
        )
        .unwrap();
        let img = oracle_forward(&ps, 1.0, CoordinateFrame::new(1, 1)).unwrap();
        assert!((img.get(0, 0, 0) - 0.576_116_884_765_829_1).abs() < 1e-14);
    }

    #[test]
    fn compare_examples() {
        let a = ImageBuffer::from_fn(3, 4, 2, |r, c, ch| (r + c + ch) as f64 * 0.1);
        let same = compare_buffers(&a, &a).unwrap();
        assert_eq!(same.max_abs, 0.0);
        assert_eq!(same.mean_abs, 0.0);

        let mut b = a.clone();
        b.data.iter_mut().for_each(|v| *v += 0.5);
        let shifted = compare_buffers(&a, &b).unwrap();
        assert!((shifted.max_abs - 0.5).abs() < 1e-15);
        assert!((shifted.mean_abs - 0.5).abs() < 1e-15);

        let mut c = a.clone();
        c.set(2, 1, 1, 9.0);
        assert_eq!(compare_buffers(&a, &c).unwrap().argmax, (2, 1, 1));

        let wrong = ImageBuffer::zeros(3, 4, 1);
        assert!(compare_buffers(&a, &wrong).is_err());
    }

    #[test]
    fn fd_constant_colors_have_no_position_gradient() {
        let ps = PointSet::new(vec![[0.3, 0.2], [2.5, 1.1], [1.0, 2.9]], vec![0.4; 3], 1).unwrap();
        let frame = CoordinateFrame::new(4, 4);
        let up = ImageBuffer::from_fn(4, 4, 1, |r, c, _| (r * 4 + c) as f64 / 16.0 - 0.5);
        let g = oracle_gradients_fd(&ps, 1.0, frame, &up, 1e-5).unwrap();
        assert!(g.d_positions.iter().flatten().all(|d| d.abs() <= 1e-8));
    }

    #[test]
    fn fd_single_point_color_gradient_counts_pixels() {
        let ps = PointSet::new(vec![[1.0, 1.0]], vec![0.5], 1).unwrap();
        let frame = CoordinateFrame::new(5, 3);
        let up = ImageBuffer::filled(3, 5, 1, 1.0);
        let g = oracle_gradients_fd(&ps, 1.5, frame, &up, 1e-5).unwrap();
        assert!(relative_error(g.d_colors[0], 15.0, 0.0) <= 1e-6);
    }

    #[test]
    fn fd_step_halving_is_second_order() {
        // On a smooth instance the h and h/2 estimates differ by roughly the
        // h-step truncation error, which dominates the h/2 one fourfold.
        let ps = PointSet::new(
            vec![[0.2, 0.7], [2.6, 1.4], [1.1, 3.2]],
            vec![0.9, 0.1, 0.5],
            1,
        )
        .unwrap();
        let frame = CoordinateFrame::new(4, 4);
        let up = ImageBuffer::from_fn(4, 4, 1, |r, c, _| 1.0 + 0.1 * (r as f64) - 0.05 * c as f64);
        let coarse = oracle_gradients_fd(&ps, 1.0, frame, &up, 1e-2).unwrap();
        let fine = oracle_gradients_fd(&ps, 1.0, frame, &up, 5e-3).unwrap();
        let finer = oracle_gradients_fd(&ps, 1.0, frame, &up, 2.5e-3).unwrap();
        for i in 0..3 {
            for axis in 0..2 {
                let d1 = (coarse.d_positions[i][axis] - fine.d_positions[i][axis]).abs();
                let d2 = (fine.d_positions[i][axis] - finer.d_positions[i][axis]).abs();
                if d1 > 1e-9 {
                    let ratio = d1 / d2;
                    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
                }
            }
        }
    }

    #[test]
    fn truncated_oracle_applies_fallback() {
        let ps = PointSet::new(vec![[0.0, 0.0], [9.0, 0.0]], vec![0.25, 0.75], 1).unwrap();
        let frame = CoordinateFrame::new(10, 1);
        let cfg = InterpConfig::new(0.5).with_radius(1.0);
        let img = oracle_forward_truncated(&ps, &cfg, frame).unwrap();
        assert_eq!(img.get(0, 3, 0), 0.25);
        let img = oracle_forward_truncated(&ps, &cfg.with_fallback(Fallback::Zero), frame).unwrap();
        assert_eq!(img.get(0, 3, 0), 0.0);
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(1e-10, 3e-10, 1e-8), 0.0);
        assert!((relative_error(1.0, 1.000001, 1e-8) - 1e-6).abs() < 1e-11);
    }
}
