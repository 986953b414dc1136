//! Command-line front end for the sensor-fault pipeline. Subcommands cover
//! the whole workflow: generate or load data, export reference images,
//! train and score single models, and run the full evaluation grids.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{cmd_encode, cmd_eval, cmd_reproduce, cmd_synth, cmd_train, Subset};
use config::{resolve_out_dir, Dataset, RunConfig, DEFAULT_SAMPLES_PER_NODE};

#[derive(Parser)]
#[command(
    name = "wsn-anomaly",
    version,
    about = "Inject faults into sensor streams, encode windows as gray images, \
             and train CNN/CART classifiers to detect them"
)]
struct Cli {
    /// JSON run configuration; unset fields use their defaults
    #[arg(long, value_name = "FILE", global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides config and the WSN_ANOMALY_OUT variable)
    #[arg(long, value_name = "DIR", global = true)]
    out_dir: Option<PathBuf>,

    /// Master seed override; every derived seed follows from it
    #[arg(long, value_name = "N", global = true)]
    seed: Option<u64>,

    /// Cap on parallel grid workers
    #[arg(long, value_name = "N", global = true)]
    jobs: Option<usize>,

    /// Read this IBRL-format sensor log instead of the configured dataset
    #[arg(long, value_name = "FILE", global = true, conflicts_with = "synthetic")]
    dataset: Option<PathBuf>,

    /// Generate the dataset instead of reading a file
    #[arg(long, global = true)]
    synthetic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic sensor log in the IBRL text format
    Synth {
        /// Samples per node (default: the configured synthetic size)
        #[arg(long, value_name = "N")]
        samples: Option<usize>,
        /// Output file (default: <out-dir>/synthetic_ibrl.txt)
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Export the seven reference PGM images: normal plus six fault categories
    Encode,
    /// Train one classifier on one fault recipe and save it with its metadata
    Train {
        /// M1, M2, M3 or CART
        #[arg(long, value_name = "NAME")]
        model: String,
        /// noise, short, fixed, noise+fixed, noise+short or short+fixed
        #[arg(long, value_name = "KIND")]
        fault: String,
        /// Intensity (r, f or G) for a single fault; mixed faults use the config
        #[arg(long, value_name = "X")]
        intensity: Option<f64>,
        /// Model file to write (default: <out-dir>/models/<name>.<ext>)
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Score a saved model on a corpus rebuilt from the config, print metrics
    Eval {
        /// Saved model file (WSNM or wsn-cart)
        #[arg(long, value_name = "FILE")]
        model_file: PathBuf,
        /// Expected model name; mismatch with the file is an error
        #[arg(long, value_name = "NAME")]
        model: Option<String>,
        /// Fault recipe the corpus is built with (same names as train)
        #[arg(long, value_name = "KIND")]
        fault: String,
        #[arg(long, value_name = "X")]
        intensity: Option<f64>,
        /// Score the whole test split or only one class
        #[arg(long, value_enum, default_value_t = Subset::All)]
        subset: Subset,
    },
    /// Run the single-fault grids and the mixed suite, writing report CSVs
    Reproduce,
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(path) = &cli.dataset {
        config.dataset = Dataset::File { path: path.clone() };
    } else if cli.synthetic && !config.synthetic() {
        config.dataset = Dataset::Synthetic { samples_per_node: DEFAULT_SAMPLES_PER_NODE };
    }
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        config.jobs = Some(jobs);
    }
    if let Some(dir) = &cli.out_dir {
        config.out_dir = Some(dir.clone());
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    let config = effective_config(cli)?;
    let env_out = std::env::var("WSN_ANOMALY_OUT").ok();
    let out_dir = resolve_out_dir(cli.out_dir.as_deref(), &config, env_out.as_deref());
    match &cli.command {
        Command::Synth { samples, output } => {
            cmd_synth(&config, &out_dir, *samples, output.clone())
        }
        Command::Encode => cmd_encode(&config, &out_dir),
        Command::Train { model, fault, intensity, output } => {
            cmd_train(&config, &out_dir, model, fault, *intensity, output.clone())
        }
        Command::Eval { model_file, model, fault, intensity, subset } => {
            cmd_eval(&config, model_file, model.as_deref(), fault, *intensity, *subset)
        }
        Command::Reproduce => cmd_reproduce(&config, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
