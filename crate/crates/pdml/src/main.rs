use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pdml::compare::{self, CompareOptions, Metric};
use pdml::config::{parse_override, RunConfig};
use pdml::run::{default_root, run_training};
use pdml::verify::{run_suite, Suite};
use pdml::{AppError, Result};
use pdml_core::trainer::WeightingMode;

#[derive(Parser)]
#[command(
    name = "pdml",
    version,
    about = "Policy-adapted dynamics model learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write its metrics, checkpoints and manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// pdml, uniform, exp_decay or td_priority.
        #[arg(long)]
        weighting: Option<WeightingMode>,
        /// Override a config key, e.g. `--set trainer.total_env_steps=5000`.
        #[arg(long = "set", value_parser = parse_override)]
        overrides: Vec<(String, String)>,
        /// Output root; defaults to $PDML_RUNS_DIR or ./runs.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check the tabular suites and print a JSON report.
    Verify {
        /// lemma1, theorem1, proposition1 or all.
        #[arg(long)]
        suite: Suite,
        #[arg(short = 'n', long = "instances", default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report to this file.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run several configs over a seed list and summarize one metric.
    Compare {
        #[arg(required = true, num_args = 2..)]
        configs: Vec<PathBuf>,
        /// return, current_error or overall_error.
        #[arg(long, default_value = "return")]
        metric: Metric,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long = "set", value_parser = parse_override)]
        overrides: Vec<(String, String)>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn train(
    config: PathBuf,
    seed: Option<u64>,
    weighting: Option<WeightingMode>,
    mut overrides: Vec<(String, String)>,
    output: Option<PathBuf>,
) -> Result<()> {
    if let Some(s) = seed {
        overrides.push(("trainer.seed".into(), s.to_string()));
    }
    if let Some(w) = weighting {
        overrides.push(("trainer.weighting".into(), format!("\"{}\"", w.as_str())));
    }
    let cfg = RunConfig::load(&config, &overrides)?;
    let root = output.unwrap_or_else(default_root);
    let outcome = run_training(&cfg, &root)?;
    println!("{}", outcome.dir.display());
    Ok(())
}

fn verify(suite: Suite, n: usize, seed: u64, output: Option<PathBuf>) -> Result<()> {
    let report = run_suite(suite, n, seed)?;
    let json = serde_json::to_string_pretty(&report).expect("reports serialize");
    if let Some(path) = output {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
        }
        fs::write(&path, &json).map_err(|e| AppError::io(&path, e))?;
    }
    println!("{json}");
    if report.passed {
        Ok(())
    } else {
        Err(AppError::Failed(format!(
            "{} check(s) failed",
            report.failures.len()
        )))
    }
}

fn run_compare(opts: CompareOptions) -> Result<()> {
    let outcome = compare::compare(&opts)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{:<24} {:>9} {:>3} {:>14} {:>14} {:>14}",
        "config", "env_step", "n", "median", "q1", "q3"
    );
    for r in compare::final_rows(&outcome.summary) {
        let _ = writeln!(
            out,
            "{:<24} {:>9} {:>3} {:>14.6} {:>14.6} {:>14.6}",
            r.config, r.env_step, r.n, r.median, r.q1, r.q3
        );
    }
    let _ = writeln!(out, "merged: {}", outcome.merged_csv.display());
    let _ = writeln!(out, "summary: {}", outcome.summary_csv.display());
    for f in &outcome.failures {
        eprintln!("failed: {f}");
    }
    if outcome.success() {
        Ok(())
    } else {
        Err(AppError::Failed(format!(
            "{} run(s) failed, {} config(s) survived",
            outcome.failures.len(),
            outcome.surviving_configs
        )))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match cli.command {
        Command::Train {
            config,
            seed,
            weighting,
            overrides,
            output,
        } => train(config, seed, weighting, overrides, output),
        Command::Verify {
            suite,
            n,
            seed,
            output,
        } => verify(suite, n, seed, output),
        Command::Compare {
            configs,
            metric,
            seeds,
            jobs,
            overrides,
            output,
        } => run_compare(CompareOptions {
            configs,
            seeds,
            metric,
            jobs,
            root: output.unwrap_or_else(default_root),
            overrides,
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
