//! Gradient descent on point positions (and optionally colors) under an L1
//! reconstruction loss.

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::imaging::{TrajectoryLog, TrajectoryRow};
use crate::model::{GradientSet, ImageBuffer, InterpConfig, PointSet};

/// Update rule. Only plain gradient descent is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Descent {
    #[default]
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub steps: usize,
    /// Pixels moved per unit of gradient.
    pub learning_rate: f64,
    pub optimize_positions: bool,
    pub optimize_colors: bool,
    pub log_every: usize,
    pub seed: u64,
    pub descent: Descent,
    /// Worker threads for the engine; `0` uses the global pool.
    pub workers: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            steps: 100,
            learning_rate: 0.5,
            optimize_positions: true,
            optimize_colors: false,
            log_every: 10,
            seed: 0,
            descent: Descent::Plain,
            workers: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::ConfigInvalid("steps must be at least 1".into()));
        }
        // A zero rate is allowed; it turns the loop into repeated evaluation.
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.log_every == 0 {
            return Err(Error::ConfigInvalid("log_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean absolute error and its subgradient with respect to `pred`.
///
/// The subgradient of `|x|` at zero is taken as zero.
pub fn l1_loss_and_grad(pred: &ImageBuffer, target: &ImageBuffer) -> Result<(f64, ImageBuffer)> {
    pred.check_same_shape(target)?;
    let n = pred.data.len().max(1) as f64;
    let mut loss = 0.0;
    let mut upstream = ImageBuffer::zeros(pred.height, pred.width, pred.channels);
    for ((g, p), t) in upstream.data.iter_mut().zip(&pred.data).zip(&target.data) {
        let d = p - t;
        loss += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((loss / n, upstream))
}

/// One descent step: `mu -= lr * d_mu`, and `c = clamp(c - lr * d_c, 0, 1)`
/// when colors are enabled.
pub fn apply_step(ps: &mut PointSet, grad: &GradientSet, lr: f64, cfg: &OptimConfig) {
    match cfg.descent {
        Descent::Plain => {
            if cfg.optimize_positions {
                for (p, g) in ps.positions.iter_mut().zip(&grad.d_positions) {
                    p[0] -= lr * g[0];
                    p[1] -= lr * g[1];
                }
            }
            if cfg.optimize_colors {
                for (c, g) in ps.colors.iter_mut().zip(&grad.d_colors) {
                    *c = (*c - lr * g).clamp(0.0, 1.0);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub points: PointSet,
    pub trajectory: TrajectoryLog,
    /// Loss of the configuration at the start of each step, followed by the
    /// loss of the final configuration at step `steps`.
    pub loss_curve: Vec<(usize, f64)>,
    /// Gradient computed at step 0.
    pub initial_gradient: GradientSet,
    /// Upstream image gradient at step 0.
    pub initial_upstream: ImageBuffer,
}

/// Runs `ocfg.steps` iterations of forward, L1 loss, backward, update,
/// rendering in the target's frame.
///
/// Positions are logged at step 0, every `log_every` steps and after the
/// final update. Points are never clamped to the image; the bin grid is
/// rebuilt from scratch at every step.
pub fn optimize_points(
    ps: &PointSet,
    target: &ImageBuffer,
    icfg: &InterpConfig,
    ocfg: &OptimConfig,
) -> Result<OptimResult> {
    ocfg.validate()?;
    if target.channels != ps.channels {
        return Err(Error::ShapeMismatch(format!(
            "target has {} channels, points have {}",
            target.channels, ps.channels
        )));
    }
    let engine = Engine::new(ocfg.workers);
    let frame = target.frame();
    let mut points = ps.clone();
    let mut trajectory = TrajectoryLog::default();
    let mut loss_curve = Vec::with_capacity(ocfg.steps + 1);
    let mut initial = None;

    for step in 0..ocfg.steps {
        let (pred, cache) = engine.forward(&points, icfg, frame)?;
        let (loss, upstream) = l1_loss_and_grad(&pred, target)?;
        loss_curve.push((step, loss));
        if step % ocfg.log_every == 0 {
            trajectory.record(step, &points.positions, loss);
        }
        let grad = engine.backward(&points, icfg, &cache, &upstream)?;
        apply_step(&mut points, &grad, ocfg.learning_rate, ocfg);
        if initial.is_none() {
            initial = Some((grad, upstream));
        }
    }

    let (pred, _) = engine.forward(&points, icfg, frame)?;
    let final_loss = crate::imaging::l1_metric(&pred, target)?;
    loss_curve.push((ocfg.steps, final_loss));
    trajectory.record(ocfg.steps, &points.positions, final_loss);

    let (initial_gradient, initial_upstream) = initial.expect("at least one step");
    Ok(OptimResult {
        points,
        trajectory,
        loss_curve,
        initial_gradient,
        initial_upstream,
    })
}

/// Start/end positions of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointDisplacement {
    pub point: usize,
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementReport {
    pub first_step: usize,
    pub last_step: usize,
    pub mean: f64,
    pub max: f64,
    pub points: Vec<PointDisplacement>,
}

impl DisplacementReport {
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("point_index,x_start,y_start,x_end,y_end,displacement\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.point, p.start[0], p.start[1], p.end[0], p.end[1], p.distance
            );
        }
        out
    }
}

/// Euclidean displacement of each point between the first and last logged
/// steps.
pub fn displacement_report(log: &TrajectoryLog) -> Result<DisplacementReport> {
    let (Some(first), Some(last)) = (log.rows.first(), log.rows.last()) else {
        return Err(Error::EmptyLog);
    };
    let (first_step, last_step) = (first.step, last.step);
    let start: Vec<TrajectoryRow> = log.at_step(first_step);
    let end: Vec<TrajectoryRow> = log.at_step(last_step);
    if start.len() != end.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} points logged at step {first_step}, {} at step {last_step}",
            start.len(),
            end.len()
        )));
    }
    let points: Vec<PointDisplacement> = start
        .iter()
        .zip(&end)
        .map(|(s, e)| PointDisplacement {
            point: s.point,
            start: [s.x, s.y],
            end: [e.x, e.y],
            distance: (e.x - s.x).hypot(e.y - s.y),
        })
        .collect();
    let max = points.iter().map(|p| p.distance).fold(0.0, f64::max);
    let mean = if points.is_empty() {
        0.0
    } else {
        points.iter().map(|p| p.distance).sum::<f64>() / points.len() as f64
    };
    Ok(DisplacementReport {
        first_step,
        last_step,
        mean,
        max,
        points,
    })
}
