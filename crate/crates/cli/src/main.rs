use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use polypos_cli::grid::{run_cells, select_cells};
use polypos_cli::{analyze, evaluate, prepare, report, train, ExperimentConfig};

#[derive(Parser)]
#[command(name = "polypos", about = "Positional encodings in multilingual masked-LM encoders")]
struct Cli {
    /// Experiment configuration (JSON). Defaults to the desk-scale grid.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory when no configuration file is given.
    #[arg(long, global = true, default_value = "runs/desk")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn BPE and write the paired train/val/eval corpora.
    Prepare,
    /// Train grid cells, resuming interrupted ones.
    Train {
        /// Comma-separated cell patterns, e.g. `toy/en/*/0`.
        #[arg(long)]
        cells: Option<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Discard existing checkpoints of the selected cells.
        #[arg(long)]
        fresh: bool,
    },
    /// Evaluate finished cells and rebuild the results tables.
    Eval {
        #[arg(long)]
        cells: Option<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Procrustes, word-position correlations, encoding dimensions, ablations.
    Analyze,
    /// Write summary.md from the evaluation and analysis outputs.
    Report,
    /// Print the resolved configuration.
    ShowConfig,
}

fn failures<T>(outcomes: &[polypos_cli::grid::CellOutcome<T>]) -> usize {
    outcomes.iter().filter(|o| o.result.is_err()).count()
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::desk(&cli.out),
    };
    match cli.command {
        Command::ShowConfig => println!("{}", serde_json::to_string_pretty(&cfg)?),
        Command::Prepare => {
            let s = prepare::prepare(&cfg)?;
            for (lang, split, seen, kept) in &s.retention {
                println!("{lang}/{split}: {kept} of {seen} sentences kept");
            }
        }
        Command::Train { cells, workers, fresh } => {
            let cells = select_cells(&cfg, cells.as_deref())?;
            let out = run_cells(&cells, workers, |c| train::train_cell(&cfg, c, fresh));
            for o in &out {
                match &o.result {
                    Ok(log) => println!("{}: {} epochs", o.cell, log.len()),
                    Err(e) => println!("{}: FAILED {e:#}", o.cell),
                }
            }
            return Ok(failures(&out) == 0);
        }
        Command::Eval { cells, workers } => {
            let cells = select_cells(&cfg, cells.as_deref())?;
            let out = run_cells(&cells, workers, |c| evaluate::eval_cell(&cfg, c));
            for o in &out {
                match &o.result {
                    Ok(r) => println!("{}: ML {:.2}", o.cell, r.ml_score),
                    Err(e) => println!("{}: FAILED {e:#}", o.cell),
                }
            }
            evaluate::write_tables(&cfg)?;
            return Ok(failures(&out) == 0);
        }
        Command::Analyze => {
            let s = analyze::analyze(&cfg)?;
            for c in &s.comparisons {
                println!(
                    "{}: {} vs {} median {:.3e}/{:.3e}, p = {:.3e}",
                    c.language, c.first, c.second, c.first_median, c.second_median, c.wilcoxon.p_value
                );
            }
        }
        Command::Report => print!("{}", report::report(&cfg)?),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
