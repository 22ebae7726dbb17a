use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use semocc::dynamic::DynamicConfig;
use semocc::pipeline::{self, InitSource, Stage};
use semocc::scene::ClassId;

#[derive(Parser)]
#[command(name = "semocc", version, about = "Semantic voxel occupancy from semantic Gaussian fields")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene: frames and ground-truth grids.
    Synth { spec: PathBuf, out_dir: PathBuf },
    /// Run the whole pipeline from a config file.
    Pipeline {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "eval")]
        stop_after: Stage,
        #[arg(long, value_enum)]
        init_source: Option<InitSource>,
    },
    /// Ingest, initialize and fit; writes field.json and train_log.csv.
    Fit {
        config: PathBuf,
        #[arg(long, value_enum)]
        init_source: Option<InitSource>,
    },
    /// Cluster movable Gaussians across frames and consolidate moving objects.
    Cluster {
        field: PathBuf,
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        tracks: Option<PathBuf>,
        #[arg(long, default_value_t = 4.0)]
        rho: f64,
        #[arg(long, default_value_t = 12.0)]
        pair_gate: f64,
    },
    /// Splat a field onto the grid of a config file.
    Splat {
        field: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        logits: Option<PathBuf>,
    },
    /// Remove voxels far from every same-class anchor.
    Filter {
        grid: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// IoU and per-class mIoU of a predicted grid against ground truth.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ignore: Vec<ClassId>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> semocc::Result<()> {
    match cli.command {
        Command::Synth { spec, out_dir } => {
            for w in pipeline::cmd_synth(&spec, &out_dir)? {
                eprintln!("warning: {w}");
            }
        }
        Command::Pipeline { config, stop_after, init_source } => {
            let out = pipeline::cmd_pipeline(&config, stop_after, init_source)?;
            if let Some(m) = out.metrics {
                println!("mIoU {:.4}  IoU {:.4}", m.report.mean, m.iou);
            }
        }
        Command::Fit { config, init_source } => {
            let out = pipeline::cmd_fit(&config, init_source)?;
            if let Some(last) = out.train_log.last() {
                println!("step {}  loss {:.6}  gaussians {}", last.step, last.losses.total, last.gaussian_count);
            }
        }
        Command::Cluster { field, taxonomy, out, tracks, rho, pair_gate } => {
            let n = pipeline::cmd_cluster(&field, &taxonomy, &DynamicConfig { rho, pair_gate }, &out, tracks.as_deref())?;
            println!("{n} tracks");
        }
        Command::Splat { field, config, out, logits } => {
            let grid = pipeline::cmd_splat(&config, &field, &out, logits.as_deref())?;
            println!("{} occupied voxels", grid.occupied_count());
        }
        Command::Filter { grid, config, out } => {
            let g = pipeline::cmd_filter(&config, &grid, &out)?;
            println!("{} occupied voxels", g.occupied_count());
        }
        Command::Eval { pred, gt, taxonomy, ignore, out } => {
            print!("{}", pipeline::cmd_eval(&pred, &gt, &taxonomy, &ignore, out.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
