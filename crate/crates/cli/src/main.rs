use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use latent_langevin::samplers::SamplerKind;
use latent_langevin_cli::commands;
use latent_langevin_cli::error::{config, Result};
use latent_langevin_cli::{ExperimentConfig, Overrides};

/// Proximal Langevin sampling for TV-regularised deblurring and inpainting.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Debug)]
struct Opts {
    /// Experiment config (TOML), or a run manifest (JSON) to repeat.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; each command writes into a subdirectory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Retained samples kept for the slowest-component analysis.
    #[arg(long, global = true)]
    keep_samples: Option<usize>,
    /// Sampler override. Config entries the new sampler does not take
    /// (`s`, `rho2`) are dropped.
    #[arg(long, global = true, value_parser = parse_sampler)]
    sampler: Option<SamplerKind>,
    /// Chebyshev stages for skrock and ls-skrock.
    #[arg(long, global = true)]
    s: Option<usize>,
    /// Step size as a fraction of the sampler's maximal step.
    #[arg(long, global = true)]
    delta_frac: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Blur or mask the image and add noise at the configured SNR.
    Simulate,
    /// Estimate theta and rho2 by stochastic approximation.
    Sapg,
    /// Run the configured sampler and write traces, images and ESS.
    Sample,
    /// ACF and ESS of the traces of sample runs (directories or manifests);
    /// defaults to the configured sampler's run.
    Diagnose { runs: Vec<PathBuf> },
    /// Compare two or more sample runs of the same observation.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
    },
}

fn parse_sampler(s: &str) -> std::result::Result<SamplerKind, String> {
    s.parse().map_err(|e: latent_langevin::Error| e.to_string())
}

fn load(opts: &Opts) -> Result<ExperimentConfig> {
    let path = opts.config.as_ref().ok_or_else(|| config("--config is required"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(&Overrides {
        seed: opts.seed,
        out: opts.out.clone(),
        keep_samples: opts.keep_samples,
        sampler: opts.sampler,
        s: opts.s,
        delta_frac: opts.delta_frac,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate => {
            let m = commands::simulate(&load(&cli.opts)?)?;
            println!("wrote {}", m.display());
        }
        Command::Sapg => {
            let m = commands::sapg(&load(&cli.opts)?)?;
            println!("wrote {}", m.display());
        }
        Command::Sample => {
            let m = commands::sample(&load(&cli.opts)?)?;
            println!("wrote {}", m.display());
        }
        Command::Diagnose { runs } => {
            let runs = if runs.is_empty() { vec![load(&cli.opts)?.sample_dir()] } else { runs };
            for r in runs {
                println!("wrote {}", commands::diagnose(&r)?.display());
            }
        }
        Command::Compare { runs } => {
            let root = match (&cli.opts.out, &cli.opts.config) {
                (Some(out), _) => out.clone(),
                (None, Some(_)) => load(&cli.opts)?.output,
                (None, None) => PathBuf::from("."),
            };
            println!("wrote {}", commands::compare(&runs, &root.join("compare"))?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
