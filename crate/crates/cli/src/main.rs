use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bayesdepth_core::config::{ExperimentConfig, Overrides};
use bayesdepth_core::experiment::{self, EvalInputs, ExperimentError};
use bayesdepth_core::geometry::Pose;
use bayesdepth_core::metrics::EdgeParams;

/// Refine monocular depth by Bayesian fusion with volume-rendered depth.
#[derive(Parser)]
#[command(name = "bayesdepth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Ablation switch; repeatable. `fixed_prior_variance=<m²>` takes a value.
    #[arg(long = "ablate", value_name = "NAME")]
    ablate: Vec<String>,
    /// Synthetic views per iteration.
    #[arg(long)]
    views: Option<usize>,
    /// Samples per ray.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes gt_depth.pfm and mono_depth.pfm.
    Simulate(Common),
    /// Writes refined_depth.pfm, refined_variance.pfm and diagnostics.json.
    Refine {
        #[command(flatten)]
        common: Common,
        /// Monocular depth; defaults to <out_dir>/mono_depth.pfm.
        #[arg(long)]
        mono: Option<PathBuf>,
    },
    /// Writes metrics.json and curve.csv.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "var")]
        variance: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Edge settings are read from this config when given.
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
    /// Writes render_depth.pfm and render_variance.pfm at one pose.
    Render {
        #[command(flatten)]
        common: Common,
        /// Pose JSON; defaults to the camera pose.
        #[arg(long)]
        pose: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    let overrides = Overrides {
        seed: common.seed,
        iterations: common.iterations,
        ablate: common.ablate.clone(),
        views: common.views,
        samples: common.samples,
    };
    cfg.apply(&overrides, &common.config)?;
    if let Some(dir) = &common.out_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn read_pose(path: &Path) -> Result<Pose, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, ExperimentError> {
    match cli.command {
        Command::Simulate(common) => experiment::cmd_simulate(&load(&common)?),
        Command::Refine { common, mono } => {
            experiment::cmd_refine(&load(&common)?, mono.as_deref())
        }
        Command::Eval {
            pred,
            variance,
            gt,
            baseline,
            out_dir,
            config,
        } => {
            let edges = match &config {
                Some(path) => ExperimentConfig::load(path)?.edges,
                None => EdgeParams::default(),
            };
            let inputs = EvalInputs {
                pred: &pred,
                variance: &variance,
                gt: &gt,
                baseline: &baseline,
            };
            let (report, written) = experiment::cmd_eval(&inputs, &edges, &out_dir)?;
            println!(
                "{}",
                serde_json::to_string(&report).expect("report serializes")
            );
            Ok(written)
        }
        Command::Render { common, pose } => {
            let cfg = load(&common)?;
            let pose = pose.as_deref().map(read_pose).transpose()?;
            experiment::cmd_render(&cfg, pose.as_ref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(written) => {
            for path in written {
                eprintln!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
