use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bmia_core::eval::{report_csv, AttackReport};
use bmia_core::pipeline::{
    format_theory_table, run_experiment, run_stage, run_toy_regression_demo, verify_theory,
    DemoConfig, ExperimentConfig, Stage,
};
use bmia_core::Error;

#[derive(Parser, Debug)]
#[command(name = "bmia", version, about = "Membership-inference auditing with last-layer Laplace posteriors")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// With `run`, execute only this stage (data, train, laplace-fit, attack, evaluate).
    #[arg(long, global = true)]
    stage: Option<String>,
    /// Re-derive every seed in the config from this value.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Worker threads for query scoring.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split the data and train the target, reference and quantile models.
    Train,
    /// Fit the last-layer posterior of the first reference model.
    LaplaceFit,
    /// Score every configured attack on the query set.
    Attack,
    /// Build ROC curves and the report from stored decisions.
    Evaluate,
    /// Toy regression: quantile regression vs. Laplace prediction intervals.
    DemoRegression,
    /// Check the TPR propositions and the variance identity numerically.
    VerifyTheory {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Full pipeline, or a single stage with `--stage`.
    Run,
}

enum Failure {
    Config(String),
    Stage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Stage(other.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = cli.seed_override {
        cfg.override_seeds(seed);
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg_dir: Option<&Path>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg_dir.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn print_reports(reports: &[AttackReport]) {
    print!("{}", report_csv(reports));
}

fn run_stages(cli: &Cli, stages: &[Stage]) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let out = out_dir(cli, cfg.output_dir.as_deref());
    for &s in stages {
        if let Some(r) = run_stage(&cfg, &out, s)? {
            print_reports(&r);
        }
        eprintln!("stage {} done", s.name());
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Train => run_stages(cli, &[Stage::Data, Stage::Train]),
        Command::LaplaceFit => run_stages(cli, &[Stage::LaplaceFit]),
        Command::Attack => run_stages(cli, &[Stage::Attack]),
        Command::Evaluate => run_stages(cli, &[Stage::Evaluate]),
        Command::Run => {
            if let Some(s) = &cli.stage {
                let stage: Stage = s.parse()?;
                return run_stages(cli, &[stage]);
            }
            let cfg = load_config(cli)?;
            let out = out_dir(cli, cfg.output_dir.as_deref());
            let reports = run_experiment(&cfg, &out)?;
            print_reports(&reports);
            eprintln!("outputs written to {}", out.display());
            Ok(())
        }
        Command::DemoRegression => {
            let cfg = match &cli.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
                    DemoConfig::from_toml(&text)?
                }
                None => DemoConfig::default(),
            };
            let out = out_dir(cli, None);
            let (result, files) = run_toy_regression_demo(&cfg, &out)?;
            println!("prior precision {}", result.prior_precision);
            println!(
                "coverage of the 90% intervals: laplace {:.4}, quantile regression {:.4}",
                result.bnn_coverage, result.qr_coverage
            );
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::VerifyTheory { seed } => {
            let rows = verify_theory(*seed)?;
            print!("{}", format_theory_table(&rows));
            if rows.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err(Failure::Stage("theory checks failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
