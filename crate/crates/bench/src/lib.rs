//! Fixtures shared by the criterion benches.

use gmix_core::imaging::{random_subsample, synthetic_blobs};
use gmix_core::{ImageBuffer, PointSet};

/// A seeded RGB test image.
pub fn image(size: usize) -> ImageBuffer {
    synthetic_blobs(size, size, 3, 11)
}

/// `n` points sampled from [`image`].
pub fn points(size: usize, n: usize) -> (ImageBuffer, PointSet) {
    let img = image(size);
    let ps = random_subsample(&img, n, 5).expect("valid sampling parameters");
    (img, ps)
}
