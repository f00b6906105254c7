//! Randomized engine-versus-oracle checks.
//!
//! Each case draws a small random instance from its own seed and compares
//! the engine against the brute-force oracle: untruncated forward values,
//! analytic against finite-difference gradients, partition of unity,
//! constant-color reproduction and worker-count determinism. The error
//! introduced by the default `3 sigma` truncation is measured and reported
//! but not judged.

use std::fmt::Write as _;

use crate::engine::{Engine, ForwardCache};
use crate::error::Result;
use crate::model::{CoordinateFrame, GradientSet, ImageBuffer, InterpConfig, PointSet};
use crate::oracle::{compare_buffers, max_gradient_error, oracle_forward, oracle_gradients_fd};
use crate::rng::{derive_seed, SeededRng};

pub const FORWARD_REL_TOL: f64 = 1e-12;
pub const GRADIENT_REL_TOL: f64 = 1e-6;
pub const GRADIENT_ABS_FLOOR: f64 = 1e-8;
pub const PARTITION_TOL: f64 = 1e-12;
pub const CONSTANT_TOL: f64 = 1e-12;
pub const FD_STEP: f64 = 1e-5;
pub const SIGMA_RANGE: (f64, f64) = (0.5, 4.0);
pub const DETERMINISM_WORKERS: [usize; 4] = [1, 2, 4, 8];

/// A deliberately wrong result injected after the engine runs, used to check
/// that the harness notices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Forward,
    Gradient,
}

#[derive(Debug, Clone)]
pub struct ValidationConfig {
    pub seed: u64,
    pub cases: usize,
    pub grid_max: usize,
    pub points_max: usize,
    pub fault: Option<Fault>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            seed: 0,
            cases: 100,
            grid_max: 8,
            points_max: 20,
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub points: PointSet,
    pub frame: CoordinateFrame,
    pub sigma: f64,
    pub upstream: ImageBuffer,
}

impl Instance {
    /// Draws frame size, point count, channel count and sigma uniformly;
    /// positions are uniform over the frame's pixel footprint and colors and
    /// upstream gradients uniform in `[0, 1]` and `[-1, 1]`.
    pub fn random(seed: u64, grid_max: usize, points_max: usize) -> Self {
        let mut rng = SeededRng::new(seed);
        let width = rng.range_inclusive(1, grid_max.max(1));
        let height = rng.range_inclusive(1, grid_max.max(1));
        let n = rng.range_inclusive(1, points_max.max(1));
        let channels = if rng.unit() < 0.5 { 1 } else { 3 };
        let sigma = rng.uniform(SIGMA_RANGE.0, SIGMA_RANGE.1);
        let positions = (0..n)
            .map(|_| {
                [
                    rng.uniform(-0.5, width as f64 - 0.5),
                    rng.uniform(-0.5, height as f64 - 0.5),
                ]
            })
            .collect();
        let colors = (0..n * channels).map(|_| rng.unit()).collect();
        let upstream =
            ImageBuffer::from_fn(height, width, channels, |_, _, _| rng.uniform(-1.0, 1.0));
        Instance {
            seed,
            points: PointSet {
                positions,
                colors,
                channels,
            },
            frame: CoordinateFrame::new(width, height),
            sigma,
            upstream,
        }
    }

    /// A radius that covers every point from every pixel, so no point is
    /// ever truncated.
    pub fn untruncated_radius(&self) -> f64 {
        let mut pts = self.points.positions.clone();
        pts.push([0.0, 0.0]);
        pts.push([
            (self.frame.width - 1) as f64,
            (self.frame.height - 1) as f64,
        ]);
        let (lo, hi) = crate::model::bounding_box(&pts);
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt() + 1.0
    }

    pub fn with_constant_color(&self, value: f64) -> PointSet {
        let mut ps = self.points.clone();
        ps.colors.iter_mut().for_each(|c| *c = value);
        ps
    }
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub case: usize,
    pub seed: u64,
    pub num_points: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub sigma: f64,
    /// Worst per-pixel relative error, untruncated engine vs oracle.
    pub forward_rel_err: f64,
    /// Worst absolute error, `3 sigma` engine vs oracle.
    pub truncation_max_abs: f64,
    pub gradient_rel_err: f64,
    /// Worst `|sum_i w_i / W - 1|` over mixture pixels of both forward runs.
    pub partition_dev: f64,
    /// Worst deviation from the constant when all colors are equal.
    pub constant_dev: f64,
    pub deterministic: bool,
}

impl CaseResult {
    pub fn failed_checks(&self) -> Vec<&'static str> {
        let mut failed = Vec::new();
        if !(self.forward_rel_err <= FORWARD_REL_TOL) {
            failed.push("forward-equivalence");
        }
        if !(self.gradient_rel_err <= GRADIENT_REL_TOL) {
            failed.push("gradient");
        }
        if !(self.partition_dev <= PARTITION_TOL) {
            failed.push("partition-of-unity");
        }
        if !(self.constant_dev <= CONSTANT_TOL) {
            failed.push("constant-color");
        }
        if !self.deterministic {
            failed.push("determinism");
        }
        failed
    }
}

fn max_relative_pixel_error(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = (x - y).abs();
            if d == 0.0 {
                0.0
            } else {
                d / x.abs().max(y.abs())
            }
        })
        .fold(0.0, f64::max)
}

fn partition_deviation(cache: &ForwardCache) -> f64 {
    let frame = cache.frame();
    let mut worst = 0.0f64;
    for r in 0..frame.height {
        for c in 0..frame.width {
            if let Some(s) = cache.normalized_weight_sum(r, c) {
                worst = worst.max((s - 1.0).abs());
            }
        }
    }
    worst
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn gradient_bits_equal(a: &GradientSet, b: &GradientSet) -> bool {
    let flat = |g: &GradientSet| -> Vec<f64> {
        g.d_colors
            .iter()
            .copied()
            .chain(g.d_positions.iter().flatten().copied())
            .collect()
    };
    bits_equal(&flat(a), &flat(b))
}

/// Runs every check on one instance.
pub fn check_instance(
    case: usize,
    inst: &Instance,
    engine: &Engine,
    fault: Option<Fault>,
) -> Result<CaseResult> {
    let ps = &inst.points;
    let frame = inst.frame;
    let reference = oracle_forward(ps, inst.sigma, frame)?;

    let full = InterpConfig::new(inst.sigma).with_radius(inst.untruncated_radius());
    let (mut out, full_cache) = engine.forward(ps, &full, frame)?;
    if fault == Some(Fault::Forward) {
        out.data[0] += 1e-6;
    }
    let forward_rel_err = max_relative_pixel_error(&out, &reference);

    let truncated = InterpConfig::new(inst.sigma);
    let (trunc_out, trunc_cache) = engine.forward(ps, &truncated, frame)?;
    let truncation_max_abs = compare_buffers(&trunc_out, &reference)?.max_abs;

    let mut analytic = engine.backward(ps, &full, &full_cache, &inst.upstream)?;
    if fault == Some(Fault::Gradient) {
        analytic.d_positions[0][0] += 1e-3;
    }
    let numeric = oracle_gradients_fd(ps, inst.sigma, frame, &inst.upstream, FD_STEP)?;
    let gradient_rel_err = max_gradient_error(&analytic, &numeric, GRADIENT_ABS_FLOOR);

    let partition_dev = partition_deviation(&full_cache).max(partition_deviation(&trunc_cache));

    let kappa = ps.colors[0];
    let constant = inst.with_constant_color(kappa);
    let mut constant_dev = 0.0f64;
    for cfg in [&full, &truncated] {
        let (img, cache) = engine.forward(&constant, cfg, frame)?;
        for r in 0..frame.height {
            for c in 0..frame.width {
                if !cache.source(r, c).is_fallback() {
                    for &v in img.pixel(r, c) {
                        constant_dev = constant_dev.max((v - kappa).abs());
                    }
                }
            }
        }
    }

    let mut deterministic = true;
    let mut baseline: Option<(ImageBuffer, GradientSet)> = None;
    for workers in DETERMINISM_WORKERS {
        let e = Engine::new(workers);
        let (img, cache) = e.forward(ps, &truncated, frame)?;
        let grad = e.backward(ps, &truncated, &cache, &inst.upstream)?;
        match &baseline {
            None => baseline = Some((img, grad)),
            Some((bi, bg)) => {
                deterministic &= bits_equal(&bi.data, &img.data) && gradient_bits_equal(bg, &grad);
            }
        }
    }

    Ok(CaseResult {
        case,
        seed: inst.seed,
        num_points: ps.len(),
        width: frame.width,
        height: frame.height,
        channels: ps.channels,
        sigma: inst.sigma,
        forward_rel_err,
        truncation_max_abs,
        gradient_rel_err,
        partition_dev,
        constant_dev,
        deterministic,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub cases: Vec<CaseResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.failed_checks().is_empty())
    }

    /// `(check name, case index, instance seed)` for every failure.
    pub fn failures(&self) -> Vec<(&'static str, usize, u64)> {
        self.cases
            .iter()
            .flat_map(|c| {
                c.failed_checks()
                    .into_iter()
                    .map(move |f| (f, c.case, c.seed))
            })
            .collect()
    }

    pub fn worst<F: Fn(&CaseResult) -> f64>(&self, f: F) -> f64 {
        self.cases.iter().map(f).fold(0.0, f64::max)
    }

    /// Per-case table followed by one summary line per check.
    pub fn summary(&self) -> String {
        let mut out = String::from(
            "case,seed,points,width,height,channels,sigma,forward_rel_err,truncation_max_abs,gradient_rel_err,partition_dev,constant_dev,deterministic\n",
        );
        for c in &self.cases {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.4},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{}",
                c.case,
                c.seed,
                c.num_points,
                c.width,
                c.height,
                c.channels,
                c.sigma,
                c.forward_rel_err,
                c.truncation_max_abs,
                c.gradient_rel_err,
                c.partition_dev,
                c.constant_dev,
                c.deterministic
            );
        }
        let line = |out: &mut String, name: &str, worst: f64, tol: Option<f64>| {
            let verdict = match tol {
                Some(t) if worst <= t => format!("PASS (<= {t:e})"),
                Some(t) => format!("FAIL (> {t:e})"),
                None => "measured".to_owned(),
            };
            let _ = writeln!(out, "{name:<22} worst {worst:.3e}  {verdict}");
        };
        out.push('\n');
        line(
            &mut out,
            "forward-equivalence",
            self.worst(|c| c.forward_rel_err),
            Some(FORWARD_REL_TOL),
        );
        line(
            &mut out,
            "gradient",
            self.worst(|c| c.gradient_rel_err),
            Some(GRADIENT_REL_TOL),
        );
        line(
            &mut out,
            "partition-of-unity",
            self.worst(|c| c.partition_dev),
            Some(PARTITION_TOL),
        );
        line(
            &mut out,
            "constant-color",
            self.worst(|c| c.constant_dev),
            Some(CONSTANT_TOL),
        );
        line(
            &mut out,
            "truncation-3sigma",
            self.worst(|c| c.truncation_max_abs),
            None,
        );
        let nondet = self.cases.iter().filter(|c| !c.deterministic).count();
        let _ = writeln!(
            out,
            "{:<22} {} of {} cases differ  {}",
            "determinism",
            nondet,
            self.cases.len(),
            if nondet == 0 { "PASS" } else { "FAIL" }
        );
        out
    }
}

/// Seed of case `index` under base seed `seed`.
pub fn case_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, index as u64)
}

pub fn run_validation(cfg: &ValidationConfig) -> Result<ValidationReport> {
    let engine = Engine::default();
    let cases = (0..cfg.cases)
        .map(|i| {
            let inst = Instance::random(case_seed(cfg.seed, i), cfg.grid_max, cfg.points_max);
            check_instance(i, &inst, &engine, cfg.fault)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport { cases })
}
