//! Differentiable image interpolation from scattered points.
//!
//! Every known pixel is treated as an isotropic 2D Gaussian centered at its
//! position; an output pixel takes the expected color under the mixture of
//! all known points, truncated to the points within a cutoff radius. The
//! crate provides the forward pass and its analytic gradients with respect
//! to point colors and positions ([`engine`]), a brute-force reference for
//! checking them ([`oracle`]), six classical uniform-grid resamplers for
//! comparison ([`resample`]), image and point-table I/O ([`imaging`]), a
//! point-position optimizer ([`optim`]), and the reconstruction benchmark and
//! randomized validation harnesses used by the command-line tool.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod engine;
mod error;
pub mod imaging;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod resample;
pub mod rng;
pub mod spatial;
pub mod validate;

pub use engine::{backward, forward, Engine, ForwardCache, PixelSource};
pub use error::{Error, Result};
pub use model::{
    gaussian_weight, CoordinateFrame, Fallback, GradientSet, ImageBuffer, InterpConfig, PointSet,
    Position,
};
pub use resample::Filter;
pub use spatial::BinGrid;
