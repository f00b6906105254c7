use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use gmix_core::benchmark::{
    load_corpus, parse_methods, run_benchmark, BenchmarkOptions, Downsample, SigmaChoice,
};
use gmix_core::imaging::{
    load_image, loss_curve_to_csv, random_subsample, read_points, save_image,
};
use gmix_core::optim::{displacement_report, optimize_points, OptimConfig};
use gmix_core::resample::resample;
use gmix_core::validate::{
    check_instance, run_validation, Fault, Instance, ValidationConfig, ValidationReport,
};
use gmix_core::{CoordinateFrame, Engine, Fallback, Filter, InterpConfig};

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_EMPTY_CORPUS: u8 = 3;

#[derive(Parser)]
#[command(
    name = "gmix",
    version,
    about = "Gaussian-mixture interpolation of scattered image points"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a point file to an image.
    Forward(ForwardArgs),
    /// Compare upsampling methods on a directory of images.
    Benchmark(BenchmarkArgs),
    /// Optimize point positions against an image.
    Optimize(OptimizeArgs),
    /// Check the engine against the reference implementation on random instances.
    Validate(ValidateArgs),
    /// Resize an image with a classical filter.
    Resample(ResampleArgs),
}

#[derive(clap::Args)]
struct ForwardArgs {
    /// CSV point file with header `x,y,r,g,b` or `x,y,v`.
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    sigma: f64,
    /// Cutoff radius in pixels [default: 3 * sigma].
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value = "nearest")]
    fallback: FallbackArg,
    /// Output image (.ppm, .pgm or .png).
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum FallbackArg {
    Nearest,
    Zero,
}

impl From<FallbackArg> for Fallback {
    fn from(f: FallbackArg) -> Self {
        match f {
            FallbackArg::Nearest => Fallback::NearestPoint,
            FallbackArg::Zero => Fallback::Zero,
        }
    }
}

#[derive(clap::Args)]
struct BenchmarkArgs {
    /// Directory of .ppm/.pgm/.png images.
    #[arg(long)]
    images: PathBuf,
    /// Comma-separated downsample factors.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    factors: Vec<usize>,
    /// Comma-separated method names, or `all`.
    #[arg(long, default_value = "all")]
    methods: String,
    /// Fixed sigma in pixels, or `auto`.
    #[arg(long, default_value = "auto")]
    sigma: String,
    /// How the low-resolution input is made: `box` or `bicubic`.
    #[arg(long, default_value = "box")]
    downsample: String,
    /// Write 0 for every wall time so reports are byte-reproducible.
    #[arg(long)]
    omit_timing: bool,
    /// CSV report path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct OptimizeArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    num_points: usize,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trajectory CSV.
    #[arg(long)]
    log: PathBuf,
    /// Loss curve CSV.
    #[arg(long)]
    loss_out: PathBuf,
    /// Final reconstruction image.
    #[arg(long)]
    recon_out: Option<PathBuf>,
    /// Displacement report CSV.
    #[arg(long)]
    displacement_out: Option<PathBuf>,
    /// Log positions every this many steps.
    #[arg(long, default_value_t = 10)]
    log_every: usize,
    /// Also update point colors.
    #[arg(long)]
    optimize_colors: bool,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(clap::Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    cases: usize,
    #[arg(long, default_value_t = 8)]
    grid_max: usize,
    #[arg(long, default_value_t = 20)]
    points_max: usize,
    /// Re-run the single instance with this instance seed.
    #[arg(long)]
    replay: Option<u64>,
    #[arg(long, hide = true)]
    inject_fault: Option<FaultArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    Forward,
    Gradient,
}

impl From<FaultArg> for Fault {
    fn from(f: FaultArg) -> Self {
        match f {
            FaultArg::Forward => Fault::Forward,
            FaultArg::Gradient => Fault::Gradient,
        }
    }
}

#[derive(clap::Args)]
struct ResampleArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    /// nearest, box, bilinear, bicubic, hamming or lanczos.
    #[arg(long)]
    method: String,
}

/// An error carrying the process exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: EXIT_USAGE,
            error: e.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Forward(a) => cmd_forward(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Resample(a) => cmd_resample(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_forward(a: ForwardArgs) -> CmdResult {
    let ps = read_points(&a.points)?;
    let mut cfg = InterpConfig::new(a.sigma).with_fallback(a.fallback.into());
    if let Some(r) = a.radius {
        cfg = cfg.with_radius(r);
    }
    let (img, cache) =
        Engine::new(a.workers).forward(&ps, &cfg, CoordinateFrame::new(a.width, a.height))?;
    save_image(&img, &a.out)?;
    eprintln!("fallback pixels: {}", cache.fallback_count());
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> CmdResult {
    let opts = BenchmarkOptions {
        factors: a.factors,
        methods: parse_methods(&a.methods)?,
        sigma: a.sigma.parse::<SigmaChoice>()?,
        downsample: a.downsample.parse::<Downsample>()?,
    };
    let corpus = load_corpus(&a.images)?;
    for (path, err) in &corpus.skipped {
        eprintln!("warning: skipping {}: {err}", path.display());
    }
    if corpus.images.is_empty() {
        return Err(Failure {
            code: EXIT_EMPTY_CORPUS,
            error: anyhow!("no readable images in {}", a.images.display()),
        });
    }
    let report = run_benchmark(&corpus.images, &opts)?;
    write_text(&a.out, &report.to_csv(!a.omit_timing))?;
    println!("factor,method,mean_l1,images");
    for row in report.aggregate() {
        println!(
            "{},{},{},{}",
            row.factor, row.method, row.mean_l1, row.images
        );
    }
    Ok(())
}

fn cmd_optimize(a: OptimizeArgs) -> CmdResult {
    let target = load_image(&a.image)?;
    let points = random_subsample(&target, a.num_points, a.seed)?;
    let icfg = InterpConfig::new(a.sigma);
    let ocfg = OptimConfig {
        steps: a.steps,
        learning_rate: a.lr,
        optimize_colors: a.optimize_colors,
        log_every: a.log_every,
        seed: a.seed,
        workers: a.workers,
        ..OptimConfig::default()
    };
    let result = optimize_points(&points, &target, &icfg, &ocfg)?;
    result.trajectory.write(&a.log)?;
    write_text(&a.loss_out, &loss_curve_to_csv(&result.loss_curve))?;
    let report = displacement_report(&result.trajectory)?;
    if let Some(path) = &a.displacement_out {
        write_text(path, &report.to_csv())?;
    }
    if let Some(path) = &a.recon_out {
        let (img, _) = Engine::new(a.workers).forward(&result.points, &icfg, target.frame())?;
        save_image(&img, path)?;
    }
    let first = result.loss_curve.first().map_or(f64::NAN, |l| l.1);
    let last = result.loss_curve.last().map_or(f64::NAN, |l| l.1);
    println!("loss {first} -> {last}");
    println!("displacement mean {} max {}", report.mean, report.max);
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> CmdResult {
    let fault = a.inject_fault.map(Fault::from);
    let report = match a.replay {
        Some(seed) => {
            let inst = Instance::random(seed, a.grid_max, a.points_max);
            ValidationReport {
                cases: vec![check_instance(0, &inst, &Engine::default(), fault)?],
            }
        }
        None => run_validation(&ValidationConfig {
            seed: a.seed,
            cases: a.cases,
            grid_max: a.grid_max,
            points_max: a.points_max,
            fault,
        })?,
    };
    print!("{}", report.summary());
    if report.passed() {
        return Ok(());
    }
    for (check, case, seed) in report.failures() {
        eprintln!("FAILED {check}: case {case}, replay with --replay {seed}");
    }
    Err(Failure {
        code: EXIT_VALIDATION,
        error: anyhow!("{} failed check(s)", report.failures().len()),
    })
}

fn cmd_resample(a: ResampleArgs) -> CmdResult {
    let filter: Filter = a.method.parse()?;
    let img = load_image(&a.input)?;
    let out = resample(&img, CoordinateFrame::new(a.width, a.height), filter)?;
    save_image(&out, &a.out)?;
    Ok(())
}
