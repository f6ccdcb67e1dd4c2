use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use semnoma::cli::{self, DetectorChoice, Overrides};
use semnoma::config::ExperimentConfig;
use semnoma::Error;

#[derive(Parser)]
#[command(name = "semnoma", version, about = "Two-user downlink NOMA semantic link simulator")]
struct Args {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    Neural,
    Sic,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Train the near/far modem pair; writes both models and the loss trace.
    TrainModem,
    /// Link reports over the test SNR grids.
    Sweep {
        #[arg(long, value_enum, default_value = "both")]
        detector: DetectorArg,
        #[arg(long)]
        grid_step_db: Option<f64>,
        /// Channel estimation error; replaces the configured list.
        #[arg(long)]
        delta: Option<f64>,
        /// Directory holding the trained models; defaults to the output directory.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Rate and power regions for NOMA and OMA.
    Regions,
    /// MAC counts per message length.
    Macs {
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

fn load(args: &Args, ov: Overrides) -> Result<ExperimentConfig, ExitCode> {
    cli::resolve_config(args.config.as_deref(), &ov).map_err(|e| {
        let file = args.config.as_ref().map_or("<defaults>".into(), |p| p.display().to_string());
        match &e {
            Error::Json(j) => eprintln!("config error in {file} at line {}, column {}: {j}", j.line(), j.column()),
            _ => eprintln!("config error in {file}: {e}"),
        }
        ExitCode::from(EXIT_CONFIG)
    })
}

fn run(args: Args) -> anyhow::Result<ExitCode> {
    let base = Overrides {
        seed: args.seed,
        out: args.out.clone(),
        ..Overrides::default()
    };
    match &args.command {
        Command::TrainModem => {
            let cfg = match load(&args, base) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let a = cli::cmd_train_modem(&cfg).context("training failed")?;
            println!("{}", a.near_model.display());
            println!("{}", a.far_model.display());
            println!("{}", a.loss_trace.display());
        }
        Command::Sweep {
            detector,
            grid_step_db,
            delta,
            models,
        } => {
            let ov = Overrides {
                grid_step_db: *grid_step_db,
                delta: *delta,
                ..base
            };
            let cfg = match load(&args, ov) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let choice = match detector {
                DetectorArg::Neural => DetectorChoice::Neural,
                DetectorArg::Sic => DetectorChoice::Sic,
                DetectorArg::Both => DetectorChoice::Both,
            };
            let dir = models.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let path = cli::cmd_sweep(&cfg, &dir, choice).context("sweep failed")?;
            println!("{}", path.display());
        }
        Command::Regions => {
            let cfg = match load(&args, base) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let a = cli::cmd_regions(&cfg).context("region search failed")?;
            for c in &a.report.curves {
                if !c.curve.feasible {
                    eprintln!("{} {:?}: infeasible", c.name, c.curve.scheme);
                }
            }
            println!("{}", a.csv.display());
            println!("{}", a.json.display());
            if a.report.all_empty() {
                return Ok(ExitCode::from(EXIT_INFEASIBLE));
            }
        }
        Command::Macs { models, lengths } => {
            let cfg = match load(&args, base) {
                Ok(c) => c,
                Err(code) => return Ok(code),
            };
            let dir = models.clone().unwrap_or_else(|| cfg.output_dir.clone());
            let lengths = lengths.clone().unwrap_or_else(|| cli::DEFAULT_MESSAGE_LENGTHS.to_vec());
            let path = cli::cmd_macs(&cfg, &dir, &lengths).context("MAC accounting failed")?;
            println!("{}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
