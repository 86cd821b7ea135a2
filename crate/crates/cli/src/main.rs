use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use kolmocouple_cli::report::{compare_reports, Tolerance};
use kolmocouple_cli::run::run_scenario;
use kolmocouple_cli::scenario::{load_scenario, parse_scenario, Task};

#[derive(Parser)]
#[command(
    name = "kolmocouple",
    version,
    about = "Doubling-variables checks for stationary Kolmogorov equations"
)]
struct Cli {
    /// Worker threads (falls back to KOLMOCOUPLE_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the scenario's `output`, else out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SuiteArgs {
    /// Optional scenario file with a `[suite]` section.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run only these criteria (ids 1 to 10).
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Scan the sign conditions of a field.
    Certify(RunArgs),
    /// Simulate a synchronously coupled ensemble.
    Simulate(RunArgs),
    /// Solve for a stationary density on a grid.
    Solve(RunArgs),
    /// Weak residuals of a measure against a test-function battery.
    Residual(RunArgs),
    /// Mollified measures and regularized coefficients.
    Mollify(RunArgs),
    /// Run the regression suite.
    PaperSuite(SuiteArgs),
    /// Numeric diff of two report.json files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        rel_tol: f64,
        #[arg(long, default_value_t = 0.0)]
        abs_tol: f64,
    },
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("KOLMOCOUPLE_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .with_context(|| format!("KOLMOCOUPLE_THREADS={v:?} is not a thread count"))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn execute(
    task: Task,
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    only: Vec<String>,
) -> Result<i32> {
    let (mut scenario, base) = match config {
        Some(path) => (
            load_scenario(path)?,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (
            parse_scenario("name = \"paper-suite\"\n")?,
            PathBuf::from("."),
        ),
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if !only.is_empty() {
        scenario.suite.get_or_insert_with(Default::default).only = only;
    }
    let out = out
        .or_else(|| scenario.output.as_ref().map(|o| base.join(o)))
        .unwrap_or_else(|| PathBuf::from("out").join(&scenario.name));
    let outcome = run_scenario(&scenario, task, &base, &out)?;
    println!("{}", outcome.summary.trim_end());
    println!("report: {}", out.join("report.json").display());
    Ok(outcome.status.exit_code())
}

fn read_report(path: &Path) -> Result<serde_json::Value> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main_inner() -> Result<i32> {
    let cli = Cli::parse();
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Certify(a) => execute(Task::Certify, Some(&a.config), a.seed, a.out, vec![]),
        Command::Simulate(a) => execute(Task::Simulate, Some(&a.config), a.seed, a.out, vec![]),
        Command::Solve(a) => execute(Task::Solve, Some(&a.config), a.seed, a.out, vec![]),
        Command::Residual(a) => execute(Task::Residual, Some(&a.config), a.seed, a.out, vec![]),
        Command::Mollify(a) => execute(Task::Mollify, Some(&a.config), a.seed, a.out, vec![]),
        Command::PaperSuite(a) => {
            execute(Task::PaperSuite, a.config.as_deref(), a.seed, a.out, a.only)
        }
        Command::Compare {
            a,
            b,
            rel_tol,
            abs_tol,
        } => {
            let diffs = compare_reports(
                &read_report(&a)?,
                &read_report(&b)?,
                Tolerance {
                    rel: rel_tol,
                    abs: abs_tol,
                },
            )?;
            for d in &diffs {
                println!("{}: {} vs {}", d.path, d.left, d.right);
            }
            println!("{} difference(s)", diffs.len());
            Ok(if diffs.is_empty() { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
