use std::path::PathBuf;
use std::process::ExitCode;

use agent_harness::denoise::{block_decode, trace_csv, GateConfig, GateMode, SeededPredictor, DEFAULT_GAMMA, DEFAULT_TAU};
use agent_harness::harness::{self, load_config, load_manifest, load_suite_path, report_file, sample_suite, SuiteSet};
use agent_harness::metrics::DEFAULT_RETRY_THRESHOLD;
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "agent-harness", version, about = "Evaluate LLM agents on embodied and tool-calling suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Threshold,
    Factor,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured suite and write records and reports.
    Run {
        config: PathBuf,
        /// Override the configured worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Rebuild the report from a records file.
    Report {
        records: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RETRY_THRESHOLD)]
        retry_threshold: usize,
        /// Print JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Check that a suite or manifest file loads.
    Validate {
        suite: PathBuf,
    },
    /// List the instances a manifest samples.
    Sample {
        manifest: PathBuf,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Block-decode with a seeded toy predictor and print the commit trace as CSV.
    DenoiseDemo {
        #[arg(long, value_enum, default_value_t = Mode::Threshold)]
        mode: Mode,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_GAMMA)]
        gamma: f64,
        #[arg(long, default_value_t = 8)]
        block_size: usize,
        #[arg(long, default_value_t = 4)]
        max_blocks: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run { config, workers } => {
            let mut cfg = load_config(&config)?;
            if let Some(w) = workers {
                if w == 0 {
                    bail!("--workers must be >= 1");
                }
                cfg.workers = w;
            }
            let out = harness::run(&cfg)?;
            print!("{}", out.report.to_text());
            eprintln!("{} episode(s), records in {}", out.episodes, out.output_dir.display());
            if !out.ok() {
                eprintln!("{} episode(s) ended with a backend error", out.backend_errors);
                return Ok(ExitCode::from(2));
            }
        }
        Command::Report {
            records,
            retry_threshold,
            json,
        } => {
            if retry_threshold < 2 {
                bail!("--retry-threshold must be >= 2");
            }
            let report = report_file(&records, retry_threshold)?;
            if json {
                print!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
        }
        Command::Validate { suite } => {
            let sets = load_suite_path(&suite, harness::config::DEFAULT_SEED)
                .with_context(|| format!("validating {}", suite.display()))?;
            for s in &sets {
                let kind = match s {
                    SuiteSet::Embodied(_) => "embodied",
                    SuiteSet::Tool { .. } => "toolcall",
                };
                println!("{}: {} {kind} task(s)", s.name(), s.len());
            }
        }
        Command::Sample { manifest, cap, seed } => {
            let m = load_manifest(&manifest)?;
            let sample = sample_suite(&m, cap.unwrap_or(m.cap), seed);
            for w in &sample.warnings {
                eprintln!("warning: {w}");
            }
            for i in &sample.instances {
                println!("{}\t{}", i.category, i.reference);
            }
            eprintln!("{} instance(s)", sample.instances.len());
        }
        Command::DenoiseDemo {
            mode,
            tau,
            gamma,
            block_size,
            max_blocks,
            seed,
        } => {
            let mode = match mode {
                Mode::Threshold => GateMode::Threshold,
                Mode::Factor => GateMode::Factor,
            };
            let gate = GateConfig::new(mode, tau, gamma)?;
            let predictor = SeededPredictor {
                seed,
                vocab: 100,
                eos: 100,
                eos_every: 400,
            };
            let out = block_decode(&predictor, &[1], block_size, &gate, max_blocks, predictor.eos)?;
            print!("{}", trace_csv(&out.trace));
            eprintln!(
                "{} token(s), iterations per block {:?}{}",
                out.tokens.len(),
                out.iterations,
                if out.truncated { ", truncated" } else { "" }
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
