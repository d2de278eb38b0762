use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use icas_cli::parallel::thread_cap;
use icas_cli::{run_to_dir, ExperimentConfig, ExperimentKind, HarnessError, Overrides};

/// Run one ICAS experiment from a config file.
#[derive(Parser)]
#[command(name = "icas", version)]
struct Args {
    #[arg(value_enum)]
    verb: ExperimentKind,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

fn run(args: &Args) -> Result<(), HarnessError> {
    let overrides = Overrides {
        seed: args.seed,
        alpha: args.alpha,
        gamma: args.gamma,
    };
    let cfg = ExperimentConfig::load(&args.config, &overrides)?;
    if cfg.experiment.kind != args.verb {
        return Err(HarnessError::Config(format!(
            "{} is a {} config, not {}",
            args.config.display(),
            cfg.experiment.kind.name(),
            args.verb.name()
        )));
    }
    let threads = thread_cap()?;
    let report = run_to_dir(&cfg, &args.out, threads)?;
    for v in &report.variants {
        let s = &v.summary;
        println!(
            "{:<16} gamma {:<4} alignment {:.4}  style {:.4}  subject {:.4}",
            v.name, v.gamma, s.structure_alignment, s.style_distance, s.subject_match
        );
    }
    for f in &report.audit.findings {
        println!(
            "{}: {} ({})",
            f.name,
            if f.passed { "holds" } else { "does not hold" },
            f.detail
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("icas: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
