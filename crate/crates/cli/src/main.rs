use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gradflow_cli::plot::{cmd_plot, PlotOptions};
use gradflow_cli::predict::cmd_predict;
use gradflow_cli::runner::{cmd_run, RunOptions};
use gradflow_cli::{CliError, ExperimentConfig};
use log::warn;

/// Gradient flows of the KL divergence on the circle.
#[derive(Parser)]
#[command(name = "gradflow", version)]
struct Cli {
    /// Output directory (overrides `output_dir` from the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of runs integrated concurrently.
    #[arg(long, global = true, default_value_t = default_workers())]
    workers: usize,
    /// Accept W/WFR stepsizes above the explicit-Euler diffusion limit.
    #[arg(long, global = true)]
    force_cfl: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate every (flow, initialization) pair and write traces, slopes and a manifest.
    Run {
        /// Config file, or a bundled name (paper_pi1, paper_pi2).
        #[arg(long)]
        config: String,
    },
    /// Cumulants of log(rho0/pi) and the predicted large-time KL decay.
    Predict {
        #[arg(long)]
        config: String,
    },
    /// Render SVG figures from run directories or trace CSVs.
    Plot {
        /// Run output directories (with manifest.json) or trace CSV files.
        inputs: Vec<PathBuf>,
        /// Also plot the energies of this config.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 720)]
        width: u32,
        #[arg(long, default_value_t = 480)]
        height: u32,
        /// Linear instead of logarithmic divergence axis.
        #[arg(long)]
        linear: bool,
        /// Skip the dotted leading-order curves.
        #[arg(long)]
        no_overlay: bool,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if std::env::var_os("GRADFLOW_SEED").is_some() {
        warn!("GRADFLOW_SEED is ignored: every computation is deterministic");
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let plan = cfg.validate(cli.force_cfl)?;
            let out = cli.out.unwrap_or_else(|| cfg.output_dir.clone());
            let summary = cmd_run(&plan, &RunOptions { out: out.clone(), workers: cli.workers })?;
            print!("{}", std::fs::read_to_string(out.join("slopes.txt"))?);
            println!("\nartifacts in {} (config hash {})", out.display(), summary.manifest.config_hash);
            if !summary.failures.is_empty() {
                return Err(CliError::Runtime(format!(
                    "{} run(s) diverged; partial traces kept:\n  {}",
                    summary.failures.len(),
                    summary.failures.join("\n  ")
                )));
            }
            Ok(())
        }
        Command::Predict { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let plan = cfg.validate(cli.force_cfl)?;
            let out = cli.out.unwrap_or_else(|| cfg.output_dir.clone());
            for d in cmd_predict(&plan, &out)? {
                println!(
                    "{} / {}: kappa_2 = {:.6e}, KL(t) ~ {:.6e} e^(-2t); M = {:.4}",
                    d.target,
                    d.init,
                    d.kappa2,
                    d.kappa2 / 2.0,
                    d.assumptions.m_constant
                );
            }
            println!("predictions in {}", out.join("predict").display());
            Ok(())
        }
        Command::Plot { inputs, config, width, height, linear, no_overlay } => {
            let cfg = config.as_deref().map(ExperimentConfig::load).transpose()?;
            let opts = PlotOptions {
                out: cli.out.unwrap_or_else(|| PathBuf::from("out/plots")),
                width,
                height,
                linear,
                overlay: !no_overlay,
            };
            for p in cmd_plot(&inputs, cfg.as_ref(), &opts)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}
