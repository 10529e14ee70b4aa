use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wildlabel::harness::{run_experiment, write_outputs, ExperimentConfig, Extras, Overrides, RunReport};
use wildlabel::wildgen::analytic_max_ambiguity;
use wildlabel::Error;

#[derive(Parser)]
#[command(name = "wildlabel", version, about = "Budgeted human labeling of wild data for OOD learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run every (strategy, budget, seed) cell of a config and write reports.
    Run(RunArgs),
    /// Print the analytic maximum-ambiguity threshold of a score mixture.
    OracleThreshold {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Also write phase-1 traces and training losses.
    #[arg(long)]
    trace: bool,
    /// Include hidden membership and class columns in the pool files.
    #[arg(long)]
    reveal_truth: bool,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Scoring function: msp, entropy, margin or energy.
    #[arg(long)]
    score: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    /// Strategy name, or a comma-separated list.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden_width: Option<usize>,
    /// Minibatch size; 0 trains on the full batch.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_parser = ["keep-max", "literal"])]
    window_rule: Option<String>,
    #[arg(long)]
    detector_include_wild_id: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            score: self.score.clone(),
            temperature: self.temperature,
            strategy: self.strategy.clone(),
            alpha: self.alpha,
            epochs: self.epochs,
            learning_rate: self.lr,
            hidden_width: self.hidden_width,
            batch_size: self.batch_size,
            window_rule: self.window_rule.clone(),
            detector_include_wild_id: self.detector_include_wild_id,
            format: self.format.clone(),
            output_dir: self.output_dir.clone(),
        }
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

fn print_summary(report: &RunReport) {
    println!(
        "{:<10} {:>7} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "strategy", "budget", "runs", "nId", "nCov", "nSem", "idAcc", "fpr95", "auroc"
    );
    for a in &report.aggregates {
        let m = |s: Option<wildlabel::harness::Stat>| fmt(s.map(|s| s.mean));
        println!(
            "{:<10} {:>7} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            a.strategy.name(),
            a.budget,
            a.runs,
            m(a.n_id),
            m(a.n_cov),
            m(a.n_sem),
            m(a.id_acc),
            m(a.fpr95),
            m(a.auroc)
        );
    }
}

fn run(args: &RunArgs) -> Result<ExitCode, Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply(&args.overrides())?;
    let report = run_experiment(&cfg)?;
    let extras = Extras {
        trace: args.trace,
        reveal_truth: args.reveal_truth,
    };
    let written = write_outputs(&cfg, &report, extras)?;
    print_summary(&report);
    for p in &written {
        log::info!("wrote {}", p.display());
    }
    let failed = report.failures().count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see failures.csv", report.cells.len());
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle_threshold(config: &Path) -> Result<ExitCode, Error> {
    let cfg = ExperimentConfig::load(config)?;
    let spec = cfg.score_mixture.as_ref().ok_or_else(|| Error::Config {
        field: "score_mixture".into(),
        reason: "the analytic threshold needs a score-space mixture".into(),
    })?;
    let res = analytic_max_ambiguity(spec, cfg.oracle_grid)?;
    println!("{}", res.lambda_star);
    log::info!("grid step {}, mixture median {}", res.grid_step, res.median);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::OracleThreshold { config } => oracle_threshold(config),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
