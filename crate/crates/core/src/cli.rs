//! Command-line front end: pooling, importance-driven compression, grid
//! visualization, the training demo, and the gradient check.
//!
//! All subcommands are deterministic: outputs depend only on argv (and the
//! seed flags), so a rerun writes byte-identical files.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::grid::PoolGrid;
use crate::importance::{build_map, compress, ImportanceMap, RoiSpec};
use crate::io::{load_image, read_text, save_image, write_text};
use crate::pool::pool_forward;
use crate::render::{render_grid, upscale_with_grid};
use crate::train::{gradcheck, train_demo, GridMode, LrPolicy, ToyTask, TrainConfig};

#[derive(Parser)]
#[command(
    name = "adaptive-pool",
    about = "Average pooling over learnable non-uniform grids",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Downsample with a uniform grid (plain average pooling).
    Pool(PoolArgs),
    /// Downsample with an importance-weighted grid.
    Compress(CompressArgs),
    /// Render a grid's cells by area (small cells bright).
    GridViz(GridVizArgs),
    /// Train the synthetic demo end to end and report.
    TrainDemo(TrainDemoArgs),
    /// Check the backward path against brute force on random instances.
    Gradcheck(GradcheckArgs),
}

#[derive(clap::Args)]
struct PoolArgs {
    /// Input image (.pgm or .png).
    #[arg(long)]
    input: PathBuf,
    /// Output image; written at KxK resolution unless --upscale.
    #[arg(long)]
    output: PathBuf,
    /// Cells per axis.
    #[arg(long, default_value_t = 30)]
    k: usize,
    /// Override the column count (defaults to --k).
    #[arg(long)]
    k_cols: Option<usize>,
    /// Override the row count (defaults to --k).
    #[arg(long)]
    k_rows: Option<usize>,
    /// Expand the result back to source resolution, one value per cell.
    #[arg(long)]
    upscale: bool,
}

#[derive(clap::Args)]
#[command(group(ArgGroup::new("weights").required(true).args(["rois", "map"])))]
struct CompressArgs {
    /// Input image (.pgm or .png).
    #[arg(long)]
    input: PathBuf,
    /// Output image; written at KxK resolution unless --upscale.
    #[arg(long)]
    output: PathBuf,
    /// Regions of interest as JSON ({"rois":[{"x","y","w","h"}],...}).
    #[arg(long)]
    rois: Option<PathBuf>,
    /// Importance map as a grayscale image instead of ROI JSON.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Cells per axis.
    #[arg(long, default_value_t = 30)]
    k: usize,
    /// Override the column count (defaults to --k).
    #[arg(long)]
    k_cols: Option<usize>,
    /// Override the row count (defaults to --k).
    #[arg(long)]
    k_rows: Option<usize>,
    /// Write the constructed grid as JSON.
    #[arg(long)]
    grid_out: Option<PathBuf>,
    /// Expand the result back to source resolution, one value per cell.
    #[arg(long)]
    upscale: bool,
}

#[derive(clap::Args)]
struct GridVizArgs {
    /// Grid JSON produced by compress/train-demo.
    #[arg(long)]
    grid: PathBuf,
    /// Output image (.pgm or .png).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Learned,
    Uniform,
    Importance,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PolicyArg {
    Dynamic,
    Static,
}

#[derive(clap::Args)]
struct TrainDemoArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    /// Cells per axis of the square pooling grid.
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Which grid the run trains or freezes.
    #[arg(long, value_enum, default_value_t = ModeArg::Learned)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = PolicyArg::Dynamic)]
    lr_policy: PolicyArg,
    /// Offset-head learning rate (start value under the dynamic policy).
    #[arg(long, default_value_t = 0.01)]
    base_lr: f64,
    /// Write the full report (loss/lr/overpass traces, final grid) as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the final grid alone as JSON.
    #[arg(long)]
    grid_out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    instances: usize,
}

/// Parses argv and runs one subcommand. Returns the process exit code:
/// 0 on success, 1 on runtime failure (one-line diagnostic on stderr),
/// 2 on usage errors (clap prints the usage text).
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    init_thread_pool()?;
    match cli.command {
        Command::Pool(args) => run_pool(args),
        Command::Compress(args) => run_compress(args),
        Command::GridViz(args) => run_grid_viz(args),
        Command::TrainDemo(args) => run_train_demo(args),
        Command::Gradcheck(args) => run_gradcheck(args),
    }
}

/// ADAPTIVE_POOL_THREADS caps internal parallelism; 0 or unset means auto.
fn init_thread_pool() -> Result<()> {
    match std::env::var("ADAPTIVE_POOL_THREADS") {
        Err(_) => Ok(()),
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| {
                Error::InvalidParam(format!(
                    "ADAPTIVE_POOL_THREADS must be a number of threads, got {v:?}"
                ))
            })?;
            if n > 0 {
                // The global pool can be set only once per process; a lost
                // race just keeps the earlier (equally valid) pool.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            Ok(())
        }
    }
}

fn k_axes(k: usize, k_cols: Option<usize>, k_rows: Option<usize>) -> Result<(usize, usize)> {
    let kc = k_cols.unwrap_or(k);
    let kr = k_rows.unwrap_or(k);
    if kc == 0 || kr == 0 {
        return Err(Error::InvalidParam("cell counts must be at least 1".into()));
    }
    Ok((kc, kr))
}

fn run_pool(args: PoolArgs) -> Result<i32> {
    let (kc, kr) = k_axes(args.k, args.k_cols, args.k_rows)?;
    let img = load_image(&args.input)?;
    let grid = PoolGrid::uniform(img.width(), img.height(), kc, kr)?.discretize();
    let pooled = pool_forward(&img, &grid)?;
    let out = if args.upscale {
        upscale_with_grid(&pooled, &grid)?
    } else {
        pooled.to_image()
    };
    save_image(&args.output, &out)?;
    Ok(0)
}

fn run_compress(args: CompressArgs) -> Result<i32> {
    let (kc, kr) = k_axes(args.k, args.k_cols, args.k_rows)?;
    let img = load_image(&args.input)?;
    let map = match (&args.rois, &args.map) {
        (Some(rois_path), None) => {
            let spec = RoiSpec::from_json(&read_text(rois_path)?)?;
            build_map(img.width(), img.height(), &spec)?
        }
        (None, Some(map_path)) => ImportanceMap::from_image(&load_image(map_path)?)?,
        // clap's arg group enforces exactly one.
        _ => unreachable!("argument group guarantees one weight source"),
    };
    let (pooled, grid) = compress(&img, &map, kc, kr)?;
    let out = if args.upscale {
        upscale_with_grid(&pooled, &grid)?
    } else {
        pooled.to_image()
    };
    save_image(&args.output, &out)?;
    if let Some(grid_path) = &args.grid_out {
        write_text(grid_path, &grid.to_json())?;
    }
    Ok(0)
}

fn run_grid_viz(args: GridVizArgs) -> Result<i32> {
    let grid = PoolGrid::from_json(&read_text(&args.grid)?)?.discretize();
    let img = render_grid(&grid)?;
    save_image(&args.output, &img)?;
    Ok(0)
}

fn run_train_demo(args: TrainDemoArgs) -> Result<i32> {
    let cfg = TrainConfig {
        grid_mode: match args.mode {
            ModeArg::Learned => GridMode::Learned,
            ModeArg::Uniform => GridMode::FixedUniform,
            ModeArg::Importance => GridMode::FixedImportance,
        },
        lr_policy: match args.lr_policy {
            PolicyArg::Dynamic => LrPolicy::Dynamic,
            PolicyArg::Static => LrPolicy::Static,
        },
        k: args.k,
        iters: args.iters,
        batch_size: args.batch,
        base_lr: args.base_lr,
        seed: args.seed,
        probe_h: 1,
    };
    let task = ToyTask::canonical();
    let report = train_demo(&task, &cfg)?;
    println!(
        "mode={:?} lr_policy={:?} k={} iters={} batch={} seed={}",
        args.mode, args.lr_policy, cfg.k, cfg.iters, cfg.batch_size, cfg.seed
    );
    println!("final_loss {}", report.final_loss);
    println!("final_lr {}", report.final_lr);
    println!("roi_mean_cell_area {}", report.roi_mean_cell_area);
    println!("background_mean_cell_area {}", report.background_mean_cell_area);
    if let Some(path) = &args.report {
        write_text(path, &report.to_json())?;
    }
    if let Some(path) = &args.grid_out {
        write_text(path, &report.final_grid.to_json())?;
    }
    Ok(0)
}

fn run_gradcheck(args: GradcheckArgs) -> Result<i32> {
    if args.instances == 0 {
        return Err(Error::InvalidParam("need at least one instance".into()));
    }
    let report = gradcheck(args.seed, args.instances)?;
    println!("{}/{} pass", report.passed, report.instances);
    if report.all_passed() {
        Ok(0)
    } else {
        eprintln!(
            "error: {} instance(s) failed (max finite-difference error {})",
            report.instances - report.passed,
            report.max_fd_error
        );
        Ok(1)
    }
}
