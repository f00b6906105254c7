//! Downsample-then-upsample reconstruction benchmark.
//!
//! Each image is reduced by an integer factor, then brought back to its
//! original size by every requested method, and the L1 distance to the
//! original is recorded. The Gaussian-mixture method treats the reduced
//! pixels as known points placed at their block centers in the full-size
//! frame.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::engine;
use crate::error::{Error, Result};
use crate::imaging::{box_downsample, grid_subsample, l1_metric, lattice_points, load_image};
use crate::model::{CoordinateFrame, ImageBuffer, InterpConfig, PointSet};
use crate::resample::{resample, Filter};

/// Fractions of the downsampling factor tried by the automatic sigma sweep.
pub const AUTO_SIGMA_FRACTIONS: [f64; 3] = [0.4, 0.5, 0.6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Classical(Filter),
    Gmm,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Classical(Filter::Nearest),
        Method::Classical(Filter::Box),
        Method::Classical(Filter::Bilinear),
        Method::Classical(Filter::Bicubic),
        Method::Classical(Filter::Hamming),
        Method::Classical(Filter::Lanczos),
        Method::Gmm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Classical(f) => f.name(),
            Method::Gmm => "gmm",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "gmm" {
            Ok(Method::Gmm)
        } else {
            s.parse().map(Method::Classical)
        }
    }
}

/// Parses a comma-separated method list, or `all`.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    if list.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    list.split(',').map(|s| s.trim().parse()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaChoice {
    Fixed(f64),
    /// Best of `AUTO_SIGMA_FRACTIONS * factor` per image.
    Auto,
}

impl FromStr for SigmaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(SigmaChoice::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(SigmaChoice::Fixed(v)),
            _ => Err(Error::Parse(format!(
                "sigma must be a positive number or `auto`, got `{s}`"
            ))),
        }
    }
}

/// How the low-resolution input is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Downsample {
    /// Mean of each `factor x factor` block.
    #[default]
    Box,
    /// Anti-aliased bicubic resampling to `ceil(H/f) x ceil(W/f)`.
    Bicubic,
}

impl FromStr for Downsample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(Downsample::Box),
            "bicubic" => Ok(Downsample::Bicubic),
            _ => Err(Error::Parse(format!("unknown downsampling `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub factors: Vec<usize>,
    pub methods: Vec<Method>,
    pub sigma: SigmaChoice,
    pub downsample: Downsample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub image_id: String,
    pub factor: usize,
    pub method: String,
    /// Only set for the Gaussian-mixture method.
    pub sigma_used: Option<f64>,
    pub l1: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub factor: usize,
    pub method: String,
    pub mean_l1: f64,
    pub images: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    /// Mean L1 per `(factor, method)`, in order of first appearance.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut out: Vec<AggregateRow> = Vec::new();
        let mut sums: Vec<f64> = Vec::new();
        for row in &self.rows {
            match out
                .iter()
                .position(|a| a.factor == row.factor && a.method == row.method)
            {
                Some(i) => {
                    sums[i] += row.l1;
                    out[i].images += 1;
                }
                None => {
                    out.push(AggregateRow {
                        factor: row.factor,
                        method: row.method.clone(),
                        mean_l1: 0.0,
                        images: 1,
                    });
                    sums.push(row.l1);
                }
            }
        }
        for (a, s) in out.iter_mut().zip(sums) {
            a.mean_l1 = s / a.images as f64;
        }
        out
    }

    pub fn mean_l1(&self, factor: usize, method: &str) -> Option<f64> {
        self.aggregate()
            .into_iter()
            .find(|a| a.factor == factor && a.method == method)
            .map(|a| a.mean_l1)
    }

    /// Per-image rows, a blank line, then the per-`(factor, method)` means.
    ///
    /// With `include_timing == false` the timing column is written as `0`
    /// so that the file is reproducible byte for byte.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::from("image_id,factor,method,sigma_used,l1,wall_time_ms\n");
        for r in &self.rows {
            let sigma = r.sigma_used.map(|s| s.to_string()).unwrap_or_default();
            let time = if include_timing { r.wall_time_ms } else { 0.0 };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.3}",
                r.image_id, r.factor, r.method, sigma, r.l1, time
            );
        }
        out.push_str("\nfactor,method,mean_l1,images\n");
        for a in self.aggregate() {
            let _ = writeln!(out, "{},{},{},{}", a.factor, a.method, a.mean_l1, a.images);
        }
        out
    }

    /// Parses the per-image block of [`BenchmarkReport::to_csv`] output and
    /// returns it together with the aggregate block as written.
    pub fn from_csv(text: &str) -> Result<(Self, Vec<AggregateRow>)> {
        let (rows_text, agg_text) = text
            .split_once("\n\n")
            .ok_or_else(|| Error::Parse("missing aggregate block".into()))?;
        let parse_err = |what: &str, line: &str| Error::Parse(format!("bad {what} row `{line}`"));

        let mut rows = Vec::new();
        for line in rows_text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(parse_err("report", line));
            }
            rows.push(BenchmarkRow {
                image_id: f[0].to_owned(),
                factor: f[1].parse().map_err(|_| parse_err("report", line))?,
                method: f[2].to_owned(),
                sigma_used: if f[3].is_empty() {
                    None
                } else {
                    Some(f[3].parse().map_err(|_| parse_err("report", line))?)
                },
                l1: f[4].parse().map_err(|_| parse_err("report", line))?,
                wall_time_ms: f[5].parse().map_err(|_| parse_err("report", line))?,
            });
        }
        let mut aggregate = Vec::new();
        for line in agg_text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(parse_err("aggregate", line));
            }
            aggregate.push(AggregateRow {
                factor: f[0].parse().map_err(|_| parse_err("aggregate", line))?,
                method: f[1].to_owned(),
                mean_l1: f[2].parse().map_err(|_| parse_err("aggregate", line))?,
                images: f[3].parse().map_err(|_| parse_err("aggregate", line))?,
            });
        }
        Ok((BenchmarkReport { rows }, aggregate))
    }
}

fn low_res(img: &ImageBuffer, factor: usize, downsample: Downsample) -> Result<ImageBuffer> {
    match downsample {
        Downsample::Box => box_downsample(img, factor),
        Downsample::Bicubic => resample(
            img,
            CoordinateFrame::new(img.width.div_ceil(factor), img.height.div_ceil(factor)),
            Filter::Bicubic,
        ),
    }
}

fn known_points(
    img: &ImageBuffer,
    small: &ImageBuffer,
    factor: usize,
    downsample: Downsample,
) -> Result<PointSet> {
    match downsample {
        Downsample::Box => grid_subsample(img, factor),
        Downsample::Bicubic => lattice_points(small, img.width, img.height),
    }
}

/// Reconstructs `img` from `points` at the given sigma and returns the L1
/// error and the elapsed milliseconds.
pub fn gmm_reconstruction_error(
    img: &ImageBuffer,
    points: &PointSet,
    sigma: f64,
) -> Result<(f64, f64)> {
    let start = Instant::now();
    let (out, _) = engine::forward(points, &InterpConfig::new(sigma), img.frame())?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((l1_metric(&out, img)?, ms))
}

/// Runs every `(factor, method)` combination on one image.
pub fn benchmark_image(
    id: &str,
    img: &ImageBuffer,
    opts: &BenchmarkOptions,
) -> Result<Vec<BenchmarkRow>> {
    let mut rows = Vec::with_capacity(opts.factors.len() * opts.methods.len());
    for &factor in &opts.factors {
        if factor == 0 {
            return Err(Error::InvalidFactor(factor));
        }
        let small = low_res(img, factor, opts.downsample)?;
        for &method in &opts.methods {
            let (l1, ms, sigma_used) = match method {
                Method::Classical(filter) => {
                    let start = Instant::now();
                    let up = resample(&small, img.frame(), filter)?;
                    let ms = start.elapsed().as_secs_f64() * 1e3;
                    (l1_metric(&up, img)?, ms, None)
                }
                Method::Gmm => {
                    let points = known_points(img, &small, factor, opts.downsample)?;
                    let candidates: Vec<f64> = match opts.sigma {
                        SigmaChoice::Fixed(s) => vec![s],
                        SigmaChoice::Auto => AUTO_SIGMA_FRACTIONS
                            .iter()
                            .map(|fr| fr * factor as f64)
                            .collect(),
                    };
                    let mut best: Option<(f64, f64, f64)> = None;
                    for sigma in candidates {
                        let (l1, ms) = gmm_reconstruction_error(img, &points, sigma)?;
                        if best.map_or(true, |b| l1 < b.0) {
                            best = Some((l1, ms, sigma));
                        }
                    }
                    let (l1, ms, sigma) = best.expect("at least one sigma candidate");
                    (l1, ms, Some(sigma))
                }
            };
            rows.push(BenchmarkRow {
                image_id: id.to_owned(),
                factor,
                method: method.name().to_owned(),
                sigma_used,
                l1,
                wall_time_ms: ms,
            });
        }
    }
    Ok(rows)
}

/// Benchmarks every image concurrently; rows come back in input order.
pub fn run_benchmark(
    images: &[(String, ImageBuffer)],
    opts: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    let per_image: Vec<Vec<BenchmarkRow>> = images
        .par_iter()
        .map(|(id, img)| benchmark_image(id, img, opts))
        .collect::<Result<_>>()?;
    Ok(BenchmarkReport {
        rows: per_image.into_iter().flatten().collect(),
    })
}

/// A loaded corpus and the files that could not be read.
#[derive(Debug, Default)]
pub struct Corpus {
    pub images: Vec<(String, ImageBuffer)>,
    pub skipped: Vec<(PathBuf, Error)>,
}

/// Loads every regular file in `dir` as an image, sorted by file name. Files
/// that fail to load are collected in [`Corpus::skipped`].
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut corpus = Corpus::default();
    for path in paths {
        match load_image(&path) {
            Ok(img) => {
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                corpus.images.push((id, img));
            }
            Err(e) => corpus.skipped.push((path, e)),
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::synthetic_blobs;

    fn opts(factors: Vec<usize>) -> BenchmarkOptions {
        BenchmarkOptions {
            factors,
            methods: Method::ALL.to_vec(),
            sigma: SigmaChoice::Auto,
            downsample: Downsample::Box,
        }
    }

    #[test]
    fn parse_lists() {
        assert_eq!(parse_methods("all").unwrap().len(), 7);
        assert_eq!(
            parse_methods("gmm, nearest").unwrap(),
            vec![Method::Gmm, Method::Classical(Filter::Nearest)]
        );
        assert!(parse_methods("gmm,cubic").is_err());
        assert_eq!("auto".parse::<SigmaChoice>().unwrap(), SigmaChoice::Auto);
        assert_eq!(
            "1.5".parse::<SigmaChoice>().unwrap(),
            SigmaChoice::Fixed(1.5)
        );
        assert!("-1".parse::<SigmaChoice>().is_err());
    }

    #[test]
    fn constant_images_reconstruct_exactly() {
        let img = ImageBuffer::filled(16, 16, 3, 100.0 / 255.0);
        let report = run_benchmark(&[("c".into(), img)], &opts(vec![2, 4])).unwrap();
        assert_eq!(report.rows.len(), 14);
        assert!(report.rows.iter().all(|r| r.l1 <= 1e-6), "{report:?}");
    }

    #[test]
    fn single_block_downsample_gives_constant_upsample() {
        let img = synthetic_blobs(16, 16, 1, 5);
        let mean = img.mean();
        let dev = img.data.iter().map(|v| (v - mean).abs()).sum::<f64>() / img.data.len() as f64;
        let report = run_benchmark(&[("s".into(), img)], &opts(vec![16])).unwrap();
        for r in &report.rows {
            assert!(
                (r.l1 - dev).abs() < 1e-12,
                "{}: {} vs {dev}",
                r.method,
                r.l1
            );
        }
    }

    #[test]
    fn aggregate_means_and_csv_round_trip() {
        let images: Vec<(String, ImageBuffer)> = (0..3)
            .map(|i| (format!("img{i}"), synthetic_blobs(16, 24, 3, i)))
            .collect();
        let report = run_benchmark(&images, &opts(vec![2, 4])).unwrap();
        assert_eq!(report.rows.len(), 3 * 2 * 7);
        assert_eq!(report.rows[0].image_id, "img0");

        let agg = report.aggregate();
        assert_eq!(agg.len(), 14);
        for a in &agg {
            let mean = report
                .rows
                .iter()
                .filter(|r| r.factor == a.factor && r.method == a.method)
                .map(|r| r.l1)
                .sum::<f64>()
                / 3.0;
            assert!((a.mean_l1 - mean).abs() <= 1e-12);
        }

        let text = report.to_csv(false);
        let (parsed, parsed_agg) = BenchmarkReport::from_csv(&text).unwrap();
        assert_eq!(parsed_agg, agg);
        assert!(parsed
            .rows
            .iter()
            .zip(&report.rows)
            .all(|(a, b)| a.l1 == b.l1 && a.sigma_used == b.sigma_used && a.method == b.method));
        assert_eq!(text, report.to_csv(false));
    }

    #[test]
    fn auto_sigma_picks_from_the_sweep() {
        let img = synthetic_blobs(32, 32, 1, 8);
        let o = BenchmarkOptions {
            methods: vec![Method::Gmm],
            ..opts(vec![4])
        };
        let rows = benchmark_image("x", &img, &o).unwrap();
        let sigma = rows[0].sigma_used.unwrap();
        assert!([1.6, 2.0, 2.4].iter().any(|s| (s - sigma).abs() < 1e-12));
        let points = grid_subsample(&img, 4).unwrap();
        for s in [1.6, 2.0, 2.4] {
            assert!(rows[0].l1 <= gmm_reconstruction_error(&img, &points, s).unwrap().0);
        }
    }

    #[test]
    fn bicubic_downsampling_also_runs() {
        let img = synthetic_blobs(20, 20, 3, 2);
        let o = BenchmarkOptions {
            downsample: Downsample::Bicubic,
            ..opts(vec![3])
        };
        let rows = benchmark_image("b", &img, &o).unwrap();
        assert_eq!(rows.len(), 7);
        assert!(rows.iter().all(|r| r.l1.is_finite() && r.l1 < 0.5));
    }

    #[test]
    fn corpus_loading_skips_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        crate::imaging::save_image(&synthetic_blobs(4, 4, 3, 1), dir.path().join("b.ppm")).unwrap();
        crate::imaging::save_image(&synthetic_blobs(4, 4, 1, 2), dir.path().join("a.png")).unwrap();
        std::fs::write(dir.path().join("c.txt"), "not an image").unwrap();
        let corpus = load_corpus(dir.path()).unwrap();
        let ids: Vec<&str> = corpus.images.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
        assert_eq!(corpus.skipped.len(), 1);
    }
}
