use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use a2d::config::{parse_config, RunConfig};
use a2d::pipeline;

#[derive(Parser)]
#[command(
    name = "a2d",
    about = "Attack-as-defense toolkit: train models, craft adversarial corpora, \
             fingerprint attack costs, and detect adversarial inputs"
)]
struct Cli {
    /// Run configuration file (INI-style sections; strict keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config file seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for fingerprinting and sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Directory holding IDX data files (also: A2D_DATA_DIR).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the classifier and persist the held-out test split.
    Train,
    /// Craft adversarial corpora with the configured generation attacks.
    Attack,
    /// Fingerprint benign and adversarial examples with the defense attacks.
    Fingerprint,
    /// Fit the configured detector from recorded fingerprints.
    FitDetector,
    /// Classify a single image file (IDX format) as benign or adversarial.
    Detect {
        /// IDX image file; the first image is classified.
        image: PathBuf,
    },
    /// Evaluate the fitted detector on held-out fingerprints.
    Evaluate,
    /// Run the adaptive confidence sweep against the combined defenses.
    Sweep,
}

fn effective_config(cli: &Cli) -> a2d::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.model.train.seed = seed;
        for (attack, _) in &mut cfg.attacks {
            attack.seed = seed;
        }
        for defense in &mut cfg.defenses {
            defense.seed = seed;
        }
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers.max(1);
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(dir) = &cli.data_dir {
        cfg.data_dir = Some(dir.clone());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> a2d::Result<()> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Train => {
            let report = pipeline::cmd_train(&cfg)?;
            println!(
                "trained on {} examples for {} epochs: train accuracy {:.4}, test accuracy {:.4}",
                report.train_examples, report.epochs, report.train_accuracy, report.test_accuracy
            );
        }
        Command::Attack => {
            let corpora = pipeline::cmd_attack(&cfg)?;
            for c in corpora {
                println!(
                    "{}: {}/{} attacks succeeded",
                    c.attack, c.successes, c.attempts
                );
            }
        }
        Command::Fingerprint => {
            let fps = pipeline::cmd_fingerprint(&cfg)?;
            let benign = fps.iter().filter(|f| f.origin.is_benign()).count();
            println!(
                "fingerprinted {} examples ({} benign, {} adversarial)",
                fps.len(),
                benign,
                fps.len() - benign
            );
        }
        Command::FitDetector => {
            let det = pipeline::cmd_fit_detector(&cfg)?;
            println!("fitted detector {}", det.name());
        }
        Command::Detect { image } => {
            let line = pipeline::cmd_detect(&cfg, image)?;
            println!("{line}");
        }
        Command::Evaluate => {
            let report = pipeline::cmd_evaluate(&cfg)?;
            println!(
                "{}: benign accuracy {:.4}, adversarial accuracy {:.4}, auroc {:.4}",
                report.detector, report.accuracy_benign, report.accuracy_adv, report.auroc
            );
        }
        Command::Sweep => {
            let result = pipeline::cmd_sweep(&cfg)?;
            for row in &result.rows {
                println!(
                    "kappa {:>5.1}: asr {:.3}, a2d {:.3}, ae {:.3}, combined {:.3}, residual {:.3}",
                    row.kappa,
                    row.asr_without_defense,
                    row.detection_rate_a2d,
                    row.detection_rate_ae,
                    row.detection_rate_combined,
                    row.residual_asr
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
