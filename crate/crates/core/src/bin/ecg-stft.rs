use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecg_stft::dataset::all_records;
use ecg_stft::pipeline::{self, PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(
    name = "ecg-stft",
    version,
    about = "MIT-BIH heartbeat classification from STFT spectrograms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON pipeline configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated record subset, e.g. 100,101
    #[arg(long, value_delimiter = ',')]
    records: Option<Vec<u32>>,
    /// Seed applied to every randomized stage
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-class beat counts for the full set, DS1, DS2 and the intra split
    Census(Common),
    /// Preprocess, split, transform, train and evaluate
    Run(Common),
    /// Train under both split paradigms and report side by side
    CompareSplits(Common),
    /// Write grey-scale PGM spectrograms for a range of beats
    ExportSpectrograms {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        record: u32,
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Exclusive end of the beat range
        #[arg(long)]
        end: usize,
    },
    /// Print download URLs and checksum locations
    Fetch {
        #[arg(long, value_delimiter = ',')]
        records: Option<Vec<u32>>,
    },
}

fn load(c: &Common) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&c.config)?;
    cfg.apply_overrides(c.records.clone(), c.seed, c.output.clone());
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Census(c) => {
            let path = pipeline::cmd_census(&load(&c)?)?;
            print!("{}", std::fs::read_to_string(&path)?);
        }
        Command::Run(c) => {
            let out = pipeline::cmd_run(&load(&c)?)?;
            for s in &out.log.stages {
                eprintln!(
                    "{:<12} {} {}",
                    s.stage,
                    &s.key[..12],
                    if s.cache_hit { "cached" } else { "built" }
                );
            }
            print!("{}", std::fs::read_to_string(&out.report_txt)?);
        }
        Command::CompareSplits(c) => {
            let cfg = load(&c)?;
            pipeline::cmd_compare_splits(&cfg)?;
            print!(
                "{}",
                std::fs::read_to_string(cfg.output_dir.join("comparison.txt"))?
            );
        }
        Command::ExportSpectrograms {
            common,
            record,
            start,
            end,
        } => {
            for p in pipeline::cmd_export_spectrograms(&load(&common)?, record, start, end)? {
                println!("{}", p.display());
            }
        }
        Command::Fetch { records } => {
            print!(
                "{}",
                pipeline::fetch_instructions(&records.unwrap_or_else(all_records))
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
