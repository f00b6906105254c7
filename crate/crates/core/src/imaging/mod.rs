//! Image I/O, point extraction and metrics.

mod io;
mod sampling;
mod tables;

pub use io::{
    decode_pnm, decode_u8, encode_pnm, encode_u8, from_bytes, load_image, save_image, to_bytes,
};
pub use sampling::{
    box_downsample, grid_subsample, l1_metric, lattice_points, random_subsample, synthetic_blobs,
};
pub use tables::{
    loss_curve_from_csv, loss_curve_to_csv, points_from_str, points_to_string, read_points,
    write_points, TrajectoryLog, TrajectoryRow,
};
