use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hcr::commands;
use hcr::config::RunConfig;
use hcr::data::{BlurSpec, InkPolarity};
use hcr::Error;
use serde::Serialize;

/// Offline handwritten character recognition with brick-structured CNNs.
#[derive(Parser)]
#[command(name = "hcr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model from a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Main-head top-1 accuracy of a checkpoint on a GNT file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        blur_side: usize,
        #[arg(long, default_value_t = 1.0)]
        blur_sigma: f64,
        /// Images store light ink on a dark background.
        #[arg(long)]
        light_on_dark: bool,
        #[arg(long, default_value_t = 64)]
        batch_size: usize,
    },
    /// Five-crop ensemble prediction for one PGM image.
    Predict {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Train once per focal gamma and tabulate accuracy.
    SweepGamma {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,4")]
        gammas: Vec<f32>,
    },
    /// Train once per brick count and tabulate size and accuracy.
    SweepBricks {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
        bricks: Vec<usize>,
    },
    /// Summarise a GNT file as JSON.
    GntInspect { path: PathBuf },
    /// Write a synthetic glyph dataset in GNT format.
    MakeSynth {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json(value: &impl Serialize) -> hcr::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(command: Command) -> hcr::Result<()> {
    match command {
        Command::Train { config } => {
            print_json(&commands::cmd_train(&RunConfig::from_file(config)?)?)
        }
        Command::Eval {
            checkpoint,
            data,
            blur_side,
            blur_sigma,
            light_on_dark,
            batch_size,
        } => {
            let blur = BlurSpec {
                kernel_side: blur_side,
                sigma: blur_sigma,
            };
            let polarity = if light_on_dark {
                InkPolarity::LightOnDark
            } else {
                InkPolarity::DarkOnLight
            };
            print_json(&commands::cmd_eval(
                &checkpoint,
                &data,
                &blur,
                polarity,
                batch_size,
            )?)
        }
        Command::Predict { ensemble, image } => {
            print_json(&commands::cmd_predict(&ensemble, &image)?)
        }
        Command::SweepGamma { config, gammas } => {
            let path = commands::cmd_sweep_gamma(&RunConfig::from_file(config)?, &gammas)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::SweepBricks { config, bricks } => {
            let path = commands::cmd_sweep_bricks(&RunConfig::from_file(config)?, &bricks)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::GntInspect { path } => print_json(&commands::cmd_gnt_inspect(&path)?),
        Command::MakeSynth {
            classes,
            per_class,
            side,
            seed,
            out,
        } => {
            let n = commands::cmd_make_synth(classes, per_class, side, seed, &out)?;
            print_json(&serde_json::json!({ "samples": n, "path": out }))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Json(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = match exit_code(&err) {
                1 => "config",
                _ => "runtime",
            };
            eprintln!(
                "{}",
                serde_json::json!({ "error": kind, "message": err.to_string() })
            );
            ExitCode::from(exit_code(&err))
        }
    }
}
