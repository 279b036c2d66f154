use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use colearn::gradcheck::{check_total_loss, fixture_network, loss_fixture, spread_coords, GradTolerance};
use colearn::harness::{corrupt_only, load_config, run_experiment, RunOptions};
use colearn::losses::LossConfig;
use colearn::model::NetworkConfig;
use colearn::Error;

/// Joint noisy-label supervised and contrastive training experiments.
#[derive(Parser)]
#[command(name = "colearn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, seed) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Skip cells that already have a finished marker.
        #[arg(long)]
        resume: bool,
        /// Write outputs here instead of the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Cells trained in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check backward gradients of the full loss against finite differences.
    Gradcheck {
        /// Check every coordinate of the default-width network too (about a minute).
        #[arg(long)]
        full: bool,
    },
    /// Build and store the corrupted dataset without training.
    Corrupt {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

fn classify(e: Error) -> Failure {
    if e.is_config_error() {
        Failure::Config(e)
    } else {
        Failure::Runtime(e)
    }
}

fn gradcheck(full: bool) -> Result<bool, Failure> {
    let cfg = LossConfig::default();
    let tol = GradTolerance::default();
    let mut ok = true;
    let (params, views) = loss_fixture(&fixture_network(), 0).map_err(Failure::Runtime)?;
    let report = check_total_loss(&params, &views, &cfg, tol, None).map_err(Failure::Runtime)?;
    println!(
        "narrow network, every coordinate: {} checked, max abs err {:.3e}, max rel err {:.3e}, {} mismatches",
        report.checked,
        report.max_abs_err,
        report.max_rel_err,
        report.mismatches.len()
    );
    ok &= report.passed();
    let (params, views) = loss_fixture(&NetworkConfig::new(64, 3), 1).map_err(Failure::Runtime)?;
    let coords = spread_coords(&params, 25, 1);
    let report = check_total_loss(&params, &views, &cfg, tol, (!full).then_some(&coords[..])).map_err(Failure::Runtime)?;
    println!(
        "default network, {}: {} checked, max abs err {:.3e}, max rel err {:.3e}, {} mismatches",
        if full { "every coordinate" } else { "sampled coordinates" },
        report.checked,
        report.max_abs_err,
        report.max_rel_err,
        report.mismatches.len()
    );
    ok &= report.passed();
    for m in report.mismatches.iter().take(10) {
        println!("  tensor {} index {}: analytic {:e}, numeric {:e}", m.input, m.index, m.analytic, m.numeric);
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Run { config, resume, output_dir, jobs } => {
            let cfg = load_config(&config).map_err(Failure::Config)?;
            let opts = RunOptions { resume, jobs, output_dir, verbose: true };
            let artifacts = run_experiment(&cfg, &opts).map_err(classify)?;
            for s in &artifacts.summaries {
                println!(
                    "{}: last-{} test accuracy {:.4} ± {:.4}, final memorization {:.4} ± {:.4} ({} seeds)",
                    s.label, cfg.last_k, s.test_acc_mean, s.test_acc_std, s.final_memorization_mean, s.final_memorization_std, s.seeds
                );
            }
            println!("summary: {}", artifacts.summary.display());
            Ok(true)
        }
        Command::Gradcheck { full } => gradcheck(full),
        Command::Corrupt { config, output_dir } => {
            let cfg = load_config(&config).map_err(Failure::Config)?;
            let report = corrupt_only(&cfg, output_dir.as_deref()).map_err(classify)?;
            println!("train: {}", report.train_path.display());
            println!("test: {}", report.test_path.display());
            println!("noise fraction: {:.4}", report.noise_fraction);
            println!("noisy label digest: {:016x}", report.label_digest);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check failed");
            ExitCode::from(2)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
