use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mcm_core::harness::{self, RunConfig, SweepSpec};
use mcm_core::{CuriosityKind, Error, RewardMode, Scenario};

/// Curiosity-driven multi-agent navigation experiments.
#[derive(Parser)]
#[command(name = "mcm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its CSV and metadata files.
    Run(RunArgs),
    /// Run every method × seed cell of a sweep file in parallel.
    Sweep(SweepArgs),
    /// Check analytic gradients against exact finite differences.
    Gradcheck(GradcheckArgs),
    /// Summarise final scores of every run in a results directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct Overrides {
    /// Override any config key, e.g. `--set actor_lr=3e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Results directory [default: $MCM_RESULTS_DIR or ./results].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<CuriosityKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    n_agents: Option<usize>,
    #[arg(long)]
    reward_mode: Option<RewardMode>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Print progress every this many episodes (0 disables).
    #[arg(long, default_value_t = 1000)]
    progress: usize,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep file: a run config plus `methods`, `seeds` and `workers`.
    file: PathBuf,
    /// Worker threads; overrides the file (0 uses every core).
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random networks in the network suite.
    #[arg(long, default_value_t = 100)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// Results directory [default: $MCM_RESULTS_DIR or ./results].
    dir: Option<PathBuf>,
    /// Also write the summary as CSV to this file.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

fn results_dir(out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(harness::default_results_dir)
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_text(&read(path)?)?;
    }
    if let Some(m) = args.method {
        cfg.method = m;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.scenario {
        cfg.scenario = s;
    }
    if let Some(n) = args.n_agents {
        cfg.n_agents = n;
    }
    if let Some(r) = args.reward_mode {
        cfg.reward_mode = r;
    }
    if let Some(e) = args.episodes {
        cfg.total_episodes = Some(e);
    }
    for kv in &args.overrides.set {
        cfg.apply_override(kv)?;
    }
    cfg.validate()?;
    let dir = results_dir(args.overrides.out);
    let start = Instant::now();
    let every = args.progress;
    let mut next = every;
    let mut window = Vec::new();
    let result = harness::run_experiment(&cfg, &dir, |done, eps| {
        window.extend(eps.iter().map(|e| e.normalized_reward));
        if every > 0 && done >= next {
            let mean = window.iter().sum::<f64>() / window.len().max(1) as f64;
            let last = eps
                .last()
                .map(|e| (e.extrinsic_return, e.mean_intrinsic))
                .unwrap_or_default();
            eprintln!(
                "episode {done:>7}  normalized {mean:.3}  return {:>9.3}  intrinsic {:.4}  {:.0}s",
                last.0,
                last.1,
                start.elapsed().as_secs_f64()
            );
            window.clear();
            next += every;
        }
    })?;
    println!("run_id {}", result.config.run_id());
    println!("final_score {:.4}", result.final_score);
    println!("csv {}", result.csv_path(&dir).display());
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let mut text = read(&args.file)?;
    for kv in &args.overrides.set {
        text.push('\n');
        text.push_str(kv);
    }
    let mut spec = SweepSpec::parse(&text)?;
    if let Some(w) = args.workers {
        spec.workers = w;
    }
    let dir = results_dir(args.overrides.out);
    let start = Instant::now();
    let results = harness::run_sweep(&spec, &dir, &|r| {
        eprintln!(
            "done {}  final_score {:.4}  {:.0}s",
            r.config.run_id(),
            r.final_score,
            start.elapsed().as_secs_f64()
        );
    })?;
    let summaries: Vec<_> = results.iter().map(|r| r.summary()).collect();
    print!("{}", harness::format_table(&harness::aggregate(&summaries)));
    println!("{} runs written to {}", results.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(args: GradcheckArgs) -> anyhow::Result<ExitCode> {
    let outcome = harness::gradcheck(args.cases, args.seed)?;
    for s in &outcome.suites {
        println!(
            "{:<9} cases {:>4}  max relative error {:.3e}  tolerance {:.0e}  {}",
            s.name,
            s.cases,
            s.max_rel_error,
            s.tolerance,
            if s.passed() { "ok" } else { "FAILED" }
        );
    }
    println!(
        "mutation  corrupted gradient error {:.3e}  must exceed {:.0e}  {}",
        outcome.mutation_error,
        harness::GradcheckOutcome::MUTATION_THRESHOLD,
        if outcome.mutation_detected() { "ok" } else { "FAILED" }
    );
    Ok(if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn report(args: ReportArgs) -> anyhow::Result<ExitCode> {
    let dir = results_dir(args.dir);
    let summaries = harness::read_results_dir(&dir)?;
    if summaries.is_empty() {
        anyhow::bail!("no .meta files in {}", dir.display());
    }
    let rows = harness::aggregate(&summaries);
    print!("{}", harness::format_table(&rows));
    if let Some(path) = args.csv {
        std::fs::write(&path, harness::summary_csv(&rows)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Config { .. } | Error::Argument(_)) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
