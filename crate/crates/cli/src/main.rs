//! `plirls` command-line front end.
//!
//! Exit codes: 0 converged (or check passed), 1 configuration or I/O error,
//! 2 iteration budget exhausted, 3 diverged, 4 self-check violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use plirls::harness::{self, InstanceSource, RunConfig, SolveSummary};
use plirls::selfcheck::{self, Fault, Level};

#[derive(Parser, Debug)]
#[command(name = "plirls", version, about = "PL-IRLS solvers, instance generator and self-checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one or more configs; several configs run as a parallel batch.
    Solve {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Overrides the seed of generated instances.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the instance described by a config's `generate` section.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle and invariant suite.
    Check {
        #[arg(long, value_enum, default_value_t = LevelArg::Quick)]
        level: LevelArg,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Turn a trace CSV into a whitespace-separated `k objective w_norm` file.
    TracePlot {
        /// Defaults to `<out>/trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_CHECK: u8 = 4;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn run(command: Command) -> Result<u8, String> {
    match command {
        Command::Solve { configs, seed, out } => solve(&configs, seed, out),
        Command::Generate { config, seed, out } => {
            let cfg = RunConfig::load(&config).map_err(|e| e.to_string())?;
            if !matches!(cfg.instance, InstanceSource::Generate(_)) {
                return Err(format!("{} has no `generate` instance source", config.display()));
            }
            let instance = harness::load_instance(&cfg, seed).map_err(|e| e.to_string())?;
            for path in harness::write_instance(&instance, &out).map_err(|e| e.to_string())? {
                println!("{}", path.display());
            }
            Ok(0)
        }
        Command::Check { level, inject_fault } => {
            let level = match level {
                LevelArg::Quick => Level::Quick,
                LevelArg::Full => Level::Full,
            };
            let report = selfcheck::run(level, inject_fault.then_some(Fault::SubunitGamma));
            print!("{report}");
            if report.passed() {
                Ok(0)
            } else {
                for v in report.violations().take(1) {
                    eprintln!("invariant violation: {v}");
                }
                Ok(EXIT_CHECK)
            }
        }
        Command::TracePlot { trace, out } => {
            let trace = trace.unwrap_or_else(|| out.join("trace.csv"));
            let target = out.join("trace_plot.dat");
            harness::trace_plot(&trace, &target).map_err(|e| e.to_string())?;
            println!("{}", target.display());
            Ok(0)
        }
    }
}

fn solve_one(path: &Path, seed: Option<u64>, out: &Path) -> Result<SolveSummary, String> {
    let cfg = RunConfig::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let result = harness::solve(&cfg, seed).map_err(|e| format!("{}: {e}", path.display()))?;
    harness::write_output(&result, out).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(result.summary)
}

fn output_dir(path: &Path, out: Option<&Path>) -> PathBuf {
    if let Some(out) = out {
        return out.to_path_buf();
    }
    RunConfig::load(path)
        .ok()
        .and_then(|cfg| cfg.output.dir.map(|d| cfg.base_dir.join(d)))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn solve(configs: &[PathBuf], seed: Option<u64>, out: Option<PathBuf>) -> Result<u8, String> {
    if let [single] = configs {
        let summary = solve_one(single, seed, &output_dir(single, out.as_deref()))?;
        report(single, &summary);
        return Ok(harness::exit_code(&summary) as u8);
    }
    let root = out.unwrap_or_else(|| PathBuf::from("out"));
    let jobs: Vec<(PathBuf, PathBuf)> = configs
        .iter()
        .map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
            (p.clone(), root.join(stem))
        })
        .collect();
    let threads = harness::batch_threads(jobs.len());
    let results = harness::run_batch(jobs, threads, |(path, dir)| (solve_one(&path, seed, &dir), path));
    // Worst outcome wins: config error > diverged > budget exhausted.
    let mut code = 0u8;
    for (result, path) in results {
        match result {
            Ok(summary) => {
                report(&path, &summary);
                let c = harness::exit_code(&summary) as u8;
                if code != EXIT_CONFIG && c > code {
                    code = c;
                }
            }
            Err(msg) => {
                eprintln!("error: {msg}");
                code = EXIT_CONFIG;
            }
        }
    }
    Ok(code)
}

fn report(path: &Path, s: &SolveSummary) {
    let w = s.final_w_norm.map_or("-".to_string(), |w| format!("{w:e}"));
    let rec = s.recovery_error.map_or(String::new(), |r| format!(" recovery_error={r:e}"));
    println!(
        "{}: {:?} after {} iterations, objective={} w_norm={w}{rec}",
        path.display(),
        s.status,
        s.iterations,
        s.final_objective
    );
}
