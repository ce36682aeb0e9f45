use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rawzero_lab::commands::{self, Lab};
use rawzero_lab::config::ExperimentConfig;
use rawzero_lab::parallel::thread_count;
use rawzero_lab::LabError;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    /// Train the standard network and the N leave-one-out networks.
    Train,
    /// Soft labels and per-class DBM/AM.
    Rawzero,
    /// Attack campaigns on the test split.
    Attack,
    /// Pearson correlation of DBM/AM with the attack measures.
    Correlate,
    /// 2-D projections of the zero-shot soft labels.
    Project,
    /// H and H' bar charts.
    Histogram,
    /// Run whatever is missing and write index.html.
    Report,
}

/// Representation-quality experiments: leave-one-class-out training,
/// soft-label metrics, attacks and their correlation.
#[derive(Debug, Parser)]
#[command(name = "rawzero-lab", version)]
struct Cli {
    command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (falls back to RAWZERO_THREADS, then the core count).
    #[arg(long)]
    threads: Option<usize>,
    /// Suppress progress lines on stderr.
    #[arg(long)]
    quiet: bool,
}

fn run(cli: &Cli) -> Result<String, LabError> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let mut lab = Lab::new(cfg, cli.out.clone(), thread_count(cli.threads));
    lab.progress = !cli.quiet;
    Ok(match cli.command {
        Command::Train => format!("trained {} networks", commands::cmd_train(&lab)?.len()),
        Command::Rawzero => {
            let r = commands::cmd_rawzero(&lab)?;
            format!(
                "{}: DBM {:.4} ± {:.4}, AM {:.2} ± {:.2} over {} classes",
                r.classifier,
                r.summary.mean_dbm,
                r.summary.std_dbm,
                r.summary.mean_am,
                r.summary.std_am,
                r.classes.len()
            )
        }
        Command::Attack => commands::cmd_attack(&lab)?
            .iter()
            .map(|c| {
                format!(
                    "{}: adversarial accuracy {:.4}, mean L2 {:.4} over {} samples",
                    c.name, c.summary.adversarial_accuracy, c.summary.mean_l2, c.summary.samples
                )
            })
            .collect::<Vec<_>>()
            .join("\n"),
        Command::Correlate => commands::cmd_correlate(&lab)?
            .iter()
            .map(|r| format!("{} {} vs {}: {}", r.attack, r.metric.id(), r.measure.id(), r.cell()))
            .collect::<Vec<_>>()
            .join("\n"),
        Command::Project => format!("{} projections", commands::cmd_project(&lab)?.len()),
        Command::Histogram => format!("{} histograms", commands::cmd_histogram(&lab)?.len()),
        Command::Report => format!("wrote {}", commands::cmd_report(&lab)?.display()),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line =
                serde_json::json!({ "error": { "kind": e.kind(), "code": e.exit_code(), "message": e.to_string() } });
            eprintln!("{line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
