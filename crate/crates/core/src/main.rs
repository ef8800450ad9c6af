use clap::{Parser, Subcommand, ValueEnum};
use hjlab::estimates::exponent_gate;
use hjlab::experiment::config::{
    CounterexampleSection, ExperimentConfig, GridSection, ProblemSection, RunKind, RunSection,
    Which,
};
use hjlab::experiment::{
    emit_report, parse_config, read_rows, run_experiment, LedgerRow, LoadedConfig, RunLedger,
    RunOptions,
};
use hjlab::{Error, Result};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hjlab",
    version,
    about = "Viscous Hamilton-Jacobi / Fokker-Planck laboratory"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args, Clone)]
struct ExecFlags {
    /// Re-run members that already have an ok ledger row.
    #[arg(long)]
    force: bool,
    /// Omit wall-clock fields so reruns produce identical ledgers.
    #[arg(long)]
    no_timestamps: bool,
    /// Worker threads (default: HJLAB_JOBS, then all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        exec: ExecFlags,
    },
    /// Like `run`, for configs of kind `sweep`.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        exec: ExecFlags,
    },
    /// Evaluate one of the explicit counterexample constructions.
    Counterexample {
        #[arg(long, value_enum)]
        which: WhichArg,
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Cells per axis; repeat for a refinement ladder.
        #[arg(long, num_args = 1.., default_values_t = [64])]
        n: Vec<usize>,
        /// Integrability exponents to scan.
        #[arg(long, num_args = 1..)]
        exponents: Vec<f64>,
        /// Write the rows as a JSON array here (stdout otherwise).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        exec: ExecFlags,
    },
    /// Tables, slope fits and ladder CSVs from a ledger.
    Report {
        ledger: PathBuf,
        /// Output directory (default: next to the ledger).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the hypothesis verdicts for a choice of exponents.
    Gate {
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = f64::INFINITY)]
        q: f64,
        #[arg(long = "P", default_value_t = f64::INFINITY)]
        p: f64,
        #[arg(long = "Q", default_value_t = f64::INFINITY)]
        qt: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichArg {
    U1,
    U2,
    U3,
}

impl From<WhichArg> for Which {
    fn from(w: WhichArg) -> Which {
        match w {
            WhichArg::U1 => Which::U1,
            WhichArg::U2 => Which::U2,
            WhichArg::U3 => Which::U3,
        }
    }
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Clean,
    /// Some members failed numerically.
    FailedRows(usize),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::FailedRows(k)) => {
            eprintln!("{k} member(s) failed; see the ledger for error tags");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.tag());
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn options(exec: &ExecFlags) -> RunOptions {
    let env_jobs = std::env::var("HJLAB_JOBS")
        .ok()
        .and_then(|s| s.parse().ok());
    RunOptions {
        force: exec.force,
        timestamps: !exec.no_timestamps,
        jobs: exec.jobs.or(env_jobs).filter(|&j| j > 0),
    }
}

fn dispatch(cmd: Cmd) -> Result<Outcome> {
    match cmd {
        Cmd::Run { config, exec } => run_file(&config, &exec, None),
        Cmd::Sweep { config, exec } => run_file(&config, &exec, Some(RunKind::Sweep)),
        Cmd::Counterexample {
            which,
            gamma,
            d,
            n,
            exponents,
            report,
            exec,
        } => {
            let cfg = ExperimentConfig {
                run: RunSection {
                    kind: RunKind::Counterexample,
                    name: "cli".into(),
                    seed: 0,
                },
                grid: GridSection {
                    d,
                    n,
                    ..Default::default()
                },
                problem: ProblemSection {
                    gamma,
                    ..Default::default()
                },
                counterexample: CounterexampleSection {
                    which: which.into(),
                    exponents,
                    ..Default::default()
                },
                adjoint: Default::default(),
                estimates: Default::default(),
                sweep: Default::default(),
                output: Default::default(),
            };
            let loaded = LoadedConfig::new(cfg, Path::new("."))?;
            print_warnings(&loaded);
            let rows = run_experiment(&loaded, &options(&exec), &mut RunLedger::new())?;
            let json = serde_json::to_string_pretty(&rows)?;
            match report {
                Some(p) => std::fs::write(p, json)?,
                None => println!("{json}"),
            }
            Ok(outcome(&rows))
        }
        Cmd::Report { ledger, out } => {
            let rows = read_rows(&ledger)?;
            let out =
                out.unwrap_or_else(|| ledger.parent().unwrap_or(Path::new(".")).join("report"));
            let s = emit_report(&rows, &out)?;
            println!(
                "{} rows ({} ok, {} failed) -> {}",
                s.rows,
                s.ok,
                s.failed,
                out.display()
            );
            for f in &s.fits {
                println!(
                    "  {}/{}: slope {:.4} vs log {} (R² {:.4}, {} points)",
                    f.group, f.quantity, f.slope, f.x, f.r_squared, f.points
                );
            }
            Ok(Outcome::Clean)
        }
        Cmd::Gate { gamma, d, q, p, qt } => {
            let g = exponent_gate(gamma, d, q, p, qt)?;
            let yn = |b: bool| if b { "yes" } else { "no" };
            println!(
                "gamma = {gamma}, gamma' = {}, d = {d}, q = {q}, P = {p}, Q = {qt}",
                g.gamma_prime
            );
            let lines = [
                (
                    "forcing regularizes (q > d+2, q >= (d+2)(gamma-1))".to_string(),
                    yn(g.forcing_condition).to_string(),
                ),
                (
                    "drift in Aronson-Serrin class".into(),
                    yn(g.aronson_serrin).into(),
                ),
                (
                    format!("a priori bound (q > {})", g.apriori_threshold),
                    yn(g.apriori_condition).into(),
                ),
                (
                    "maximal-regularity branch (gamma <= 3)".into(),
                    yn(g.maximal_regularity_branch).into(),
                ),
                (
                    "Lipschitz exponent (d+2)(gamma-1)".into(),
                    g.lipschitz_exponent.to_string(),
                ),
                (
                    "trivial interpolation".into(),
                    yn(g.trivial_interpolation).into(),
                ),
            ];
            for (k, v) in lines {
                println!("{k:<52} {v}");
            }
            println!("r' = {}, embedding p = {}", g.r_prime, g.embedding_p);
            Ok(Outcome::Clean)
        }
    }
}

fn print_warnings(cfg: &LoadedConfig) {
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
}

fn outcome(rows: &[LedgerRow]) -> Outcome {
    match rows.iter().filter(|r| !r.is_ok()).count() {
        0 => Outcome::Clean,
        k => Outcome::FailedRows(k),
    }
}

/// Output paths in the config are relative to the config file.
fn run_file(path: &Path, exec: &ExecFlags, want: Option<RunKind>) -> Result<Outcome> {
    let cfg = parse_config(path)?;
    if let Some(k) = want {
        if cfg.config.run.kind != k {
            return Err(Error::Validation {
                field: "run.kind".into(),
                message: format!("this subcommand expects kind = {k:?}").to_lowercase(),
            });
        }
    }
    print_warnings(&cfg);
    let out_dir = cfg.base_dir.join(&cfg.config.output.dir);
    let mut ledger = RunLedger::open(&out_dir.join(&cfg.config.output.ledger))?;
    let new = run_experiment(&cfg, &options(exec), &mut ledger)?;
    let mine: Vec<LedgerRow> = ledger
        .rows()
        .iter()
        .filter(|r| r.config_hash == cfg.hash)
        .cloned()
        .collect();
    println!(
        "{} new row(s), {} total for config {}",
        new.len(),
        mine.len(),
        &cfg.hash[..16]
    );
    if !mine.is_empty() {
        emit_report(&mine, &out_dir)?;
    }
    Ok(outcome(&new))
}
