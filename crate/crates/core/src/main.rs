use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use modfield::bench::{
    cmd_compare_alt, cmd_convergence, cmd_efficiency, cmd_field_error_map, cmd_generate, cmd_invariant_drift,
    cmd_param_study, cmd_train, cmd_train_alt, EfficiencyOptions, FieldErrorMapOptions, ModelChoice, ParamStudyOptions,
    TrajectoryOptions,
};
use modfield::error::{Error, Result};
use modfield::training::TrainConfig;

/// Learned modified fields for one-step ODE integrators.
#[derive(Parser)]
#[command(name = "modfield", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value config file applied on top of the preset
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Named base configuration (e.g. desk-pendulum-euler)
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Args)]
struct Trajectory {
    /// Initial value, comma separated (default depends on the system)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1,0.05,0.025")]
    hs: Vec<f64>,
}

impl Trajectory {
    fn options(self) -> TrajectoryOptions {
        TrajectoryOptions {
            y0: self.y0,
            t_end: self.t_end,
            hs: self.hs,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Writes dataset.csv
    Generate,
    /// Trains a model with the one-step loss
    Train {
        /// Dataset CSV to train on instead of generating one
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Trains a model term by term from least-squares targets
    TrainAlt,
    /// Scaled distance between a field and the analytic modified field
    FieldErrorMap {
        /// Checkpoint path, `exact:K` or `bare`
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 0.1)]
        h: f64,
        #[arg(long, default_value_t = 41)]
        grid_n: usize,
        #[arg(long, default_value_t = 15)]
        n_steps: usize,
    },
    /// Global errors against the step size
    Convergence {
        #[arg(long)]
        model: String,
        #[command(flatten)]
        trajectory: Trajectory,
    },
    /// Run time against accuracy, including the adaptive solver
    Efficiency {
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        trajectory: Trajectory,
        #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-6,1e-8")]
        tols: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Truncation orders of analytic modified fields to include
        #[arg(long, value_delimiter = ',')]
        exact: Vec<usize>,
    },
    /// Drift of the system invariants along trajectories
    InvariantDrift {
        #[arg(long)]
        model: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y0: Option<Vec<f64>>,
        #[arg(long, default_value_t = 20.0)]
        t_end: f64,
        #[arg(long, default_value_t = 0.25)]
        h: f64,
    },
    /// Learning error against network size and data volume
    ParamStudy {
        #[arg(long, value_delimiter = ',', default_value = "10,50")]
        widths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        depths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "100000")]
        data_k: Vec<usize>,
        #[arg(long, default_value_t = 41)]
        grid_n: usize,
        #[arg(long, default_value_t = 15)]
        n_steps: usize,
    },
    /// Standard against alternative training (trains both unless given)
    CompareAlt {
        #[arg(long, requires = "alt")]
        std: Option<String>,
        #[arg(long, requires = "std")]
        alt: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y0: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.005,0.01,0.02,0.05,0.1,0.2,0.5")]
        hs: Vec<f64>,
    },
}

fn load_config(common: &Common) -> Result<TrainConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(path), preset) => TrainConfig::load(path, preset.as_deref())?,
        (None, Some(preset)) => TrainConfig::preset(preset)?,
        (None, None) => TrainConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    let manifest = match cli.command {
        Command::Generate => cmd_generate(&cfg, out)?.1,
        Command::Train { data } => cmd_train(&cfg, data.as_deref(), out)?.manifest,
        Command::TrainAlt => cmd_train_alt(&cfg, out)?.manifest,
        Command::FieldErrorMap {
            model,
            k,
            h,
            grid_n,
            n_steps,
        } => {
            let opts = FieldErrorMapOptions { k, h, grid_n, n_steps };
            cmd_field_error_map(&cfg, &ModelChoice::parse(&model)?, &opts, out)?.manifest
        }
        Command::Convergence { model, trajectory } => {
            cmd_convergence(&cfg, &ModelChoice::parse(&model)?, &trajectory.options(), out)?.manifest
        }
        Command::Efficiency {
            model,
            trajectory,
            tols,
            repeats,
            exact,
        } => {
            let model = model.as_deref().map(ModelChoice::parse).transpose()?;
            let opts = EfficiencyOptions {
                trajectory: trajectory.options(),
                tols,
                repeats,
                exact_orders: exact,
            };
            cmd_efficiency(&cfg, model.as_ref(), &opts, out)?.1
        }
        Command::InvariantDrift { model, y0, t_end, h } => {
            cmd_invariant_drift(&cfg, &ModelChoice::parse(&model)?, y0, t_end, h, out)?.manifest
        }
        Command::ParamStudy {
            widths,
            depths,
            data_k,
            grid_n,
            n_steps,
        } => {
            let opts = ParamStudyOptions {
                widths,
                depths,
                data_sizes: data_k,
                grid_n,
                n_steps,
            };
            cmd_param_study(&cfg, &opts, out)?.1
        }
        Command::CompareAlt { std, alt, y0, t_end, hs } => {
            let models = match (std, alt) {
                (Some(a), Some(b)) => Some((ModelChoice::parse(&a)?, ModelChoice::parse(&b)?)),
                _ => None,
            };
            let opts = TrajectoryOptions { y0, t_end, hs };
            cmd_compare_alt(&cfg, models.as_ref().map(|(a, b)| (a, b)), &opts, out)?.1
        }
    };
    for a in &manifest.outputs {
        println!("{}  {}", a.sha256, a.path.display());
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        match e {
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(n) = std::env::var("MODFIELD_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not size the worker pool: {e}");
                }
            }
            _ => {
                eprintln!("error: MODFIELD_THREADS must be a positive integer, got '{n}'");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
