//! Forward and backward passes of Gaussian-mixture interpolation.
//!
//! Every output pixel center `q` gathers the known points within the cutoff
//! radius and takes the weighted mean of their colors:
//!
//! ```text
//! c(q) = sum_i c_i w_i(q) / W(q),   w_i(q) = exp(-|q - mu_i|^2 / (2 sigma^2)),   W(q) = sum_i w_i(q)
//! ```
//!
//! The backward pass differentiates that ratio:
//!
//! ```text
//! dc(q)/dc_i  = w_i / W
//! dc(q)/dmu_i = (w_i / W) (q - mu_i) / sigma^2 (c_i - c(q))
//! ```
//!
//! Both passes split the output into fixed tiles of [`TILE_ROWS`] rows. Tiles
//! are independent in the forward pass; in the backward pass each tile
//! produces a private partial gradient and partials are summed in tile order.
//! The tiling depends only on the image height, so results are bit-identical
//! for any number of workers.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    gaussian_weight, CoordinateFrame, Fallback, GradientSet, ImageBuffer, InterpConfig, PointSet,
};
use crate::spatial::BinGrid;

/// Rows per work item. Fixed so that reduction order never depends on the
/// worker count.
pub const TILE_ROWS: usize = 8;

/// How an output pixel obtained its color.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelSource {
    /// Weighted mean over at least one point with positive total weight.
    Mixture,
    /// No usable point in range; copied from this point.
    Nearest(u32),
    /// No usable point in range; zero emitted.
    Zero,
}

impl PixelSource {
    pub fn is_fallback(&self) -> bool {
        !matches!(self, PixelSource::Mixture)
    }
}

/// Per-pixel state recorded by [`Engine::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    frame: CoordinateFrame,
    num_points: usize,
    channels: usize,
    sigma: f64,
    /// CSR offsets into `indices`/`weights`, one entry per pixel plus one.
    offsets: Vec<usize>,
    indices: Vec<u32>,
    weights: Vec<f64>,
    normalizers: Vec<f64>,
    sources: Vec<PixelSource>,
    output: ImageBuffer,
}

impl ForwardCache {
    pub fn frame(&self) -> CoordinateFrame {
        self.frame
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn output(&self) -> &ImageBuffer {
        &self.output
    }

    fn pixel_index(&self, row: usize, col: usize) -> usize {
        row * self.frame.width + col
    }

    /// Contributing point indices and their unnormalized weights.
    pub fn contributions(&self, row: usize, col: usize) -> (&[u32], &[f64]) {
        let p = self.pixel_index(row, col);
        let span = self.offsets[p]..self.offsets[p + 1];
        (&self.indices[span.clone()], &self.weights[span])
    }

    /// The normalizer `W(q)`; zero at fallback pixels.
    pub fn normalizer(&self, row: usize, col: usize) -> f64 {
        self.normalizers[self.pixel_index(row, col)]
    }

    pub fn source(&self, row: usize, col: usize) -> PixelSource {
        self.sources[self.pixel_index(row, col)]
    }

    pub fn fallback_count(&self) -> usize {
        self.sources.iter().filter(|s| s.is_fallback()).count()
    }

    /// `sum_i w_i / W` at a mixture pixel, `None` at fallback pixels.
    pub fn normalized_weight_sum(&self, row: usize, col: usize) -> Option<f64> {
        if self.source(row, col).is_fallback() {
            return None;
        }
        let w = self.normalizer(row, col);
        let (_, weights) = self.contributions(row, col);
        Some(weights.iter().map(|&wi| wi / w).sum())
    }
}

/// Forward results for a contiguous range of output rows.
#[derive(Debug, Clone, Default)]
pub struct RowBlock {
    pub rows: Range<usize>,
    /// Output colors for the block, `rows.len() x width x channels`.
    pub colors: Vec<f64>,
    pub offsets: Vec<usize>,
    pub indices: Vec<u32>,
    pub weights: Vec<f64>,
    pub normalizers: Vec<f64>,
    pub sources: Vec<PixelSource>,
}

impl RowBlock {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Evaluates the forward pass over `rows` of `frame` only.
///
/// Concatenating the blocks for a partition of `0..height` reproduces the
/// full forward pass bit for bit.
pub fn forward_row_range(
    ps: &PointSet,
    grid: &BinGrid,
    cfg: &InterpConfig,
    frame: CoordinateFrame,
    rows: Range<usize>,
) -> RowBlock {
    let channels = ps.channels;
    let n_pix = rows.len() * frame.width;
    let mut block = RowBlock {
        rows: rows.clone(),
        colors: Vec::with_capacity(n_pix * channels),
        offsets: Vec::with_capacity(n_pix + 1),
        indices: Vec::new(),
        weights: Vec::new(),
        normalizers: Vec::with_capacity(n_pix),
        sources: Vec::with_capacity(n_pix),
    };
    block.offsets.push(0);
    let mut neighbors = Vec::new();
    let mut acc = vec![0.0f64; channels];

    for row in rows {
        for col in 0..frame.width {
            let q = frame.pixel_center(row, col);
            grid.query_radius_into(ps, q, cfg.cutoff_radius, &mut neighbors);

            acc.iter_mut().for_each(|a| *a = 0.0);
            let mut total = 0.0;
            let start = block.indices.len();
            for &i in &neighbors {
                let w = gaussian_weight(q, ps.positions[i as usize], cfg.sigma);
                total += w;
                for (a, &c) in acc.iter_mut().zip(ps.color(i as usize)) {
                    *a += c * w;
                }
                block.indices.push(i);
                block.weights.push(w);
            }

            // An empty neighborhood, or one whose weights all underflowed,
            // leaves the ratio undefined.
            if total > 0.0 {
                block.colors.extend(acc.iter().map(|&a| a / total));
                block.normalizers.push(total);
                block.sources.push(PixelSource::Mixture);
            } else {
                block.indices.truncate(start);
                block.weights.truncate(start);
                block.normalizers.push(0.0);
                match cfg.fallback {
                    Fallback::NearestPoint => {
                        let n = grid.nearest_point(ps, q);
                        block.colors.extend_from_slice(ps.color(n));
                        block.sources.push(PixelSource::Nearest(n as u32));
                    }
                    Fallback::Zero => {
                        block.colors.extend(std::iter::repeat(0.0).take(channels));
                        block.sources.push(PixelSource::Zero);
                    }
                }
            }
            block.offsets.push(block.indices.len());
        }
    }
    block
}

/// Accumulates the gradient contributions of `rows` into a fresh partial.
fn backward_row_range(
    ps: &PointSet,
    cfg: &InterpConfig,
    cache: &ForwardCache,
    upstream: &ImageBuffer,
    rows: Range<usize>,
) -> GradientSet {
    let channels = ps.channels;
    let inv_var = 1.0 / (cfg.sigma * cfg.sigma);
    let mut grad = GradientSet::zeros(ps.len(), channels);
    let mut offset = vec![0.0f64; channels];
    for row in rows {
        for col in 0..cache.frame.width {
            let up = upstream.pixel(row, col);
            match cache.source(row, col) {
                PixelSource::Zero => {}
                PixelSource::Nearest(n) => {
                    let n = n as usize;
                    for (ch, &u) in up.iter().enumerate() {
                        grad.d_colors[n * channels + ch] += u;
                    }
                }
                PixelSource::Mixture => {
                    let q = cache.frame.pixel_center(row, col);
                    let total = cache.normalizer(row, col);
                    let (indices, weights) = cache.contributions(row, col);
                    // c_i - c(q) is evaluated relative to the first
                    // contributor's color c_0, as (c_i - c_0) - offset with
                    // offset = sum_j w_j (c_j - c_0) / W. This is exactly zero
                    // whenever all contributing colors are equal.
                    let c0 = ps.color(indices[0] as usize);
                    offset.iter_mut().for_each(|o| *o = 0.0);
                    for (&j, &w) in indices.iter().zip(weights) {
                        for ((o, &cj), &c0) in offset.iter_mut().zip(ps.color(j as usize)).zip(c0) {
                            *o += w * (cj - c0);
                        }
                    }
                    offset.iter_mut().for_each(|o| *o /= total);

                    for (&i, &w) in indices.iter().zip(weights) {
                        let i = i as usize;
                        let ratio = w / total;
                        let ci = ps.color(i);
                        let mut s = 0.0;
                        for ch in 0..channels {
                            grad.d_colors[i * channels + ch] += up[ch] * ratio;
                            s += up[ch] * ((ci[ch] - c0[ch]) - offset[ch]);
                        }
                        let mu = ps.positions[i];
                        let scale = s * ratio * inv_var;
                        grad.d_positions[i][0] += scale * (q[0] - mu[0]);
                        grad.d_positions[i][1] += scale * (q[1] - mu[1]);
                    }
                }
            }
        }
    }
    grad
}

fn tiles(height: usize) -> Vec<Range<usize>> {
    (0..height)
        .step_by(TILE_ROWS)
        .map(|start| start..(start + TILE_ROWS).min(height))
        .collect()
}

/// Executes forward and backward passes with a fixed worker count.
#[derive(Clone, Default)]
pub struct Engine {
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("workers", &self.workers())
            .finish()
    }
}

impl Engine {
    /// Uses `workers` threads; `0` means the global rayon pool.
    pub fn new(workers: usize) -> Self {
        if workers == 0 {
            return Engine::default();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("failed to start worker threads");
        Engine {
            pool: Some(Arc::new(pool)),
        }
    }

    pub fn workers(&self) -> usize {
        match &self.pool {
            Some(p) => p.current_num_threads(),
            None => rayon::current_num_threads(),
        }
    }

    fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    pub fn forward(
        &self,
        ps: &PointSet,
        cfg: &InterpConfig,
        frame: CoordinateFrame,
    ) -> Result<(ImageBuffer, ForwardCache)> {
        ps.validate()?;
        cfg.validate()?;
        frame.validate()?;

        let cell_size = if cfg.cutoff_radius.is_finite() {
            cfg.cutoff_radius
        } else {
            ps.diameter().max(1.0)
        };
        let grid = BinGrid::build(ps, cell_size)?;

        let blocks: Vec<RowBlock> = self.run(|| {
            tiles(frame.height)
                .into_par_iter()
                .map(|rows| forward_row_range(ps, &grid, cfg, frame, rows))
                .collect()
        });

        let n_pix = frame.num_pixels();
        let mut output = Vec::with_capacity(n_pix * ps.channels);
        let mut offsets = Vec::with_capacity(n_pix + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        let mut normalizers = Vec::with_capacity(n_pix);
        let mut sources = Vec::with_capacity(n_pix);
        offsets.push(0);
        for block in blocks {
            let base = indices.len();
            output.extend(block.colors);
            offsets.extend(block.offsets[1..].iter().map(|o| o + base));
            indices.extend(block.indices);
            weights.extend(block.weights);
            normalizers.extend(block.normalizers);
            sources.extend(block.sources);
        }

        let image = ImageBuffer {
            height: frame.height,
            width: frame.width,
            channels: ps.channels,
            data: output,
        };
        let cache = ForwardCache {
            frame,
            num_points: ps.len(),
            channels: ps.channels,
            sigma: cfg.sigma,
            offsets,
            indices,
            weights,
            normalizers,
            sources,
            output: image.clone(),
        };
        Ok((image, cache))
    }

    /// Gradients of `sum_q sum_ch upstream[q][ch] * c(q)[ch]` with respect to
    /// point colors and positions.
    ///
    /// Pixels filled by the nearest-point fallback pass their upstream
    /// gradient to that point's color only; nearest-point selection is not
    /// differentiated.
    pub fn backward(
        &self,
        ps: &PointSet,
        cfg: &InterpConfig,
        cache: &ForwardCache,
        upstream: &ImageBuffer,
    ) -> Result<GradientSet> {
        if cache.num_points != ps.len() || cache.channels != ps.channels {
            return Err(Error::CacheMismatch(format!(
                "cache has {} points x {} channels, point set has {} x {}",
                cache.num_points,
                cache.channels,
                ps.len(),
                ps.channels
            )));
        }
        if cache.sigma != cfg.sigma {
            return Err(Error::CacheMismatch(format!(
                "cache built with sigma {}, config has {}",
                cache.sigma, cfg.sigma
            )));
        }
        if upstream.frame() != cache.frame || upstream.channels != cache.channels {
            return Err(Error::CacheMismatch(format!(
                "upstream is {}x{}x{}, forward output is {}x{}x{}",
                upstream.height,
                upstream.width,
                upstream.channels,
                cache.frame.height,
                cache.frame.width,
                cache.channels
            )));
        }

        let partials: Vec<GradientSet> = self.run(|| {
            tiles(cache.frame.height)
                .into_par_iter()
                .map(|rows| backward_row_range(ps, cfg, cache, upstream, rows))
                .collect()
        });
        let mut total = GradientSet::zeros(ps.len(), ps.channels);
        for partial in &partials {
            total.accumulate(partial);
        }
        Ok(total)
    }
}

/// [`Engine::forward`] on the global worker pool.
pub fn forward(
    ps: &PointSet,
    cfg: &InterpConfig,
    frame: CoordinateFrame,
) -> Result<(ImageBuffer, ForwardCache)> {
    Engine::default().forward(ps, cfg, frame)
}

/// [`Engine::backward`] on the global worker pool.
pub fn backward(
    ps: &PointSet,
    cfg: &InterpConfig,
    cache: &ForwardCache,
    upstream: &ImageBuffer,
) -> Result<GradientSet> {
    Engine::default().backward(ps, cfg, cache, upstream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_points() -> PointSet {
        PointSet::new(
            vec![[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]],
            vec![1.0, 0.0, 0.0],
            1,
        )
        .unwrap()
    }

    #[test]
    fn single_point_fills_everything() {
        let ps = PointSet::new(vec![[1.3, 2.7]], vec![0.7], 1).unwrap();
        let cfg = InterpConfig::new(1.0).with_radius(1e3);
        let (img, cache) = forward(&ps, &cfg, CoordinateFrame::new(5, 4)).unwrap();
        assert!(img.data.iter().all(|&v| (v - 0.7).abs() <= 1e-15));
        assert_eq!(cache.fallback_count(), 0);
    }

    #[test]
    fn equidistant_pair_averages() {
        let ps = PointSet::new(vec![[0.0, 1.0], [2.0, 1.0]], vec![0.2, 0.8], 1).unwrap();
        let cfg = InterpConfig::new(1.0);
        let (img, _) = forward(&ps, &cfg, CoordinateFrame::new(3, 3)).unwrap();
        assert!((img.get(1, 1, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_point_value() {
        // The query (0.5, 0.5) is not a pixel center, so shift the points by
        // (-0.5, -0.5) and read pixel (0, 0) instead; only differences matter.
        let mut ps = three_points();
        for p in &mut ps.positions {
            p[0] -= 0.5;
            p[1] -= 0.5;
        }
        let cfg = InterpConfig::new(1.0).with_radius(10.0);
        let (img, _) = forward(&ps, &cfg, CoordinateFrame::new(1, 1)).unwrap();
        // e^-0.25 / (e^-0.25 + 2 e^-1.25), 30-digit reference evaluation.
        assert!((img.get(0, 0, 0) - 0.576_116_884_765_829_1).abs() < 1e-14);
    }

    #[test]
    fn fallback_policies() {
        let ps = PointSet::new(vec![[0.0, 0.0], [9.0, 0.0]], vec![0.25, 0.75], 1).unwrap();
        let cfg = InterpConfig::new(0.5).with_radius(1.0);
        let frame = CoordinateFrame::new(10, 1);
        let (img, cache) = forward(&ps, &cfg, frame).unwrap();
        assert_eq!(img.get(0, 3, 0), 0.25);
        assert_eq!(img.get(0, 6, 0), 0.75);
        assert_eq!(cache.source(0, 3), PixelSource::Nearest(0));
        assert_eq!(cache.source(0, 0), PixelSource::Mixture);
        assert_eq!(cache.fallback_count(), 6);

        let cfg = cfg.with_fallback(Fallback::Zero);
        let (img, cache) = forward(&ps, &cfg, frame).unwrap();
        assert_eq!(img.get(0, 3, 0), 0.0);
        assert_eq!(cache.source(0, 3), PixelSource::Zero);
    }

    #[test]
    fn all_weights_underflowing_triggers_fallback() {
        let ps = PointSet::new(vec![[0.0, 0.0]], vec![0.4], 1).unwrap();
        let cfg = InterpConfig::new(0.01).with_radius(f64::INFINITY);
        let (img, cache) = forward(&ps, &cfg, CoordinateFrame::new(5, 1)).unwrap();
        assert_eq!(cache.source(0, 4), PixelSource::Nearest(0));
        assert_eq!(img.get(0, 4, 0), 0.4);
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let ps = three_points();
        let frame = CoordinateFrame::new(2, 2);
        assert!(matches!(
            forward(&ps, &InterpConfig::new(-1.0), frame),
            Err(Error::ConfigInvalid(_))
        ));
        assert!(matches!(
            forward(&ps, &InterpConfig::new(1.0), CoordinateFrame::new(0, 2)),
            Err(Error::InvalidDimensions { .. })
        ));
        let mut bad = ps.clone();
        bad.colors[1] = 2.0;
        assert!(matches!(
            forward(&bad, &InterpConfig::new(1.0), frame),
            Err(Error::ColorOutOfRange { index: 1 })
        ));
    }

    #[test]
    fn single_point_backward() {
        let ps = PointSet::new(vec![[1.5, 0.5]], vec![0.3], 1).unwrap();
        let cfg = InterpConfig::new(1.0).with_radius(100.0);
        let frame = CoordinateFrame::new(4, 3);
        let (_, cache) = forward(&ps, &cfg, frame).unwrap();
        let up = ImageBuffer::filled(3, 4, 1, 1.0);
        let g = backward(&ps, &cfg, &cache, &up).unwrap();
        assert!((g.d_colors[0] - 12.0).abs() < 1e-12);
        assert_eq!(g.d_positions[0], [0.0, 0.0]);
    }

    #[test]
    fn constant_colors_give_zero_position_gradient() {
        let ps = PointSet::new(
            vec![[0.2, 0.1], [3.1, 2.2], [1.7, 4.4], [4.0, 0.5]],
            vec![0.6; 12],
            3,
        )
        .unwrap();
        let cfg = InterpConfig::new(1.3);
        let frame = CoordinateFrame::new(5, 5);
        let (img, cache) = forward(&ps, &cfg, frame).unwrap();
        let up = ImageBuffer::from_fn(5, 5, 3, |r, c, ch| (r as f64 - c as f64) * 0.1 + ch as f64);
        let g = backward(&ps, &cfg, &cache, &up).unwrap();
        assert!(g.d_positions.iter().all(|d| d[0] == 0.0 && d[1] == 0.0));
        assert!(img.data.iter().all(|&v| (v - 0.6).abs() < 1e-12));
    }

    #[test]
    fn nearest_fallback_routes_color_gradient_only() {
        let ps = PointSet::new(vec![[0.0, 0.0], [9.0, 0.0]], vec![0.25, 0.75], 1).unwrap();
        let cfg = InterpConfig::new(0.5).with_radius(1.0);
        let frame = CoordinateFrame::new(10, 1);
        let (_, cache) = forward(&ps, &cfg, frame).unwrap();
        let mut up = ImageBuffer::zeros(1, 10, 1);
        up.set(0, 3, 0, 2.0);
        let g = backward(&ps, &cfg, &cache, &up).unwrap();
        assert_eq!(g.d_colors, vec![2.0, 0.0]);
        assert_eq!(g.d_positions, vec![[0.0, 0.0], [0.0, 0.0]]);
    }

    #[test]
    fn backward_detects_cache_mismatch() {
        let ps = three_points();
        let cfg = InterpConfig::new(1.0);
        let (_, cache) = forward(&ps, &cfg, CoordinateFrame::new(3, 3)).unwrap();
        let up = ImageBuffer::zeros(3, 4, 1);
        assert!(matches!(
            backward(&ps, &cfg, &cache, &up),
            Err(Error::CacheMismatch(_))
        ));
        let up = ImageBuffer::zeros(3, 3, 1);
        let fewer = PointSet::new(vec![[0.0, 0.0]], vec![0.0], 1).unwrap();
        assert!(matches!(
            backward(&fewer, &cfg, &cache, &up),
            Err(Error::CacheMismatch(_))
        ));
        assert!(matches!(
            backward(&ps, &InterpConfig::new(2.0), &cache, &up),
            Err(Error::CacheMismatch(_))
        ));
    }

    #[test]
    fn row_ranges_concatenate_to_full_forward() {
        let ps = three_points();
        let cfg = InterpConfig::new(0.8);
        let frame = CoordinateFrame::new(6, 5);
        let grid = BinGrid::build(&ps, cfg.cutoff_radius).unwrap();
        let (full, _) = forward(&ps, &cfg, frame).unwrap();

        let empty = forward_row_range(&ps, &grid, &cfg, frame, 2..2);
        assert!(empty.is_empty());
        assert!(empty.colors.is_empty());
        assert_eq!(empty.offsets, vec![0]);

        let mut joined = Vec::new();
        for rows in [0..1, 1..4, 4..4, 4..5] {
            joined.extend(forward_row_range(&ps, &grid, &cfg, frame, rows).colors);
        }
        assert_eq!(joined, full.data);
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let ps = PointSet::new(
            (0..40)
                .map(|i| [(i * 7 % 23) as f64 * 0.9, (i * 11 % 31) as f64 * 0.7])
                .collect(),
            (0..120).map(|i| (i * 37 % 101) as f64 / 100.0).collect(),
            3,
        )
        .unwrap();
        let cfg = InterpConfig::new(1.7);
        let frame = CoordinateFrame::new(21, 25);
        let up = ImageBuffer::from_fn(25, 21, 3, |r, c, ch| {
            ((r * 3 + c * 5 + ch) % 7) as f64 - 3.0
        });
        let run = |workers| {
            let engine = Engine::new(workers);
            let (img, cache) = engine.forward(&ps, &cfg, frame).unwrap();
            let g = engine.backward(&ps, &cfg, &cache, &up).unwrap();
            (img, g)
        };
        let (img1, g1) = run(1);
        for w in [2, 4, 8] {
            let (img, g) = run(w);
            assert_eq!(img, img1);
            assert_eq!(g, g1);
        }
    }
}
