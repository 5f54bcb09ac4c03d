//! `hdoa` — codebooks, single-trial diagnostics, Monte Carlo sweeps and
//! operation counts for hybrid-array covariance reconstruction.
//!
//!   hdoa codebook --config configs/snr_sweep.toml
//!   hdoa simulate --config configs/snr_sweep.toml --seed 3 --dump snapshots.csv
//!   hdoa bench    --config configs/snr_sweep.toml --out snr.csv --threads 8
//!   hdoa flops    --n 8 --nrf 2 --k 192
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hybrid_doa::codebook::{build_switch_matrix, min_batches_ula, verify_coverage, Codebook};
use hybrid_doa::estimator::Method;
use hybrid_doa::signal_sim::generate_batches;
use hybrid_doa_bench::flops::flop_report;
use hybrid_doa_bench::harness::{run_sweep, simulate_once, write_csv, RunOptions};
use hybrid_doa_bench::{BenchError, ExperimentConfig, Result};

#[derive(Parser)]
#[command(
    name = "hdoa",
    version,
    about = "Hybrid-array covariance reconstruction and DoA benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the switch-index matrix and its coverage report.
    Codebook {
        #[arg(long)]
        config: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one trial of the template scenario and print JSON diagnostics.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write the raw batch snapshots as CSV.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Run the configured Monte Carlo sweep and write CSV.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        threads: Option<usize>,
        /// Record mean reconstruction time per trial (CSV becomes machine dependent).
        #[arg(long)]
        timing: bool,
    },
    /// Itemised floating-point operation count of the estimator.
    Flops {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        nrf: usize,
        /// Total snapshots K; K_M = ⌊K/M⌋.
        #[arg(long, default_value_t = 192)]
        k: usize,
        /// Batch count M; defaults to the minimal codebook size.
        #[arg(long)]
        batches: Option<usize>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (CSV for `bench`, JSON for `simulate`); stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Wcf,
    Ls,
    All,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Wcf => vec![Method::Wcf],
            MethodArg::Ls => vec![Method::Ls],
            MethodArg::All => vec![Method::Wcf, Method::Ls],
        }
    }
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(m) = self.method {
            config.methods = m.methods();
        }
        Ok(config)
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Codebook { config, out } => {
            let config = ExperimentConfig::load(&config)?;
            let layout = config.base_scenario()?.codebook;
            let index = build_switch_matrix(layout)?;
            let report = verify_coverage(&index);
            let mut w = output(out.as_deref())?;
            writeln!(w, "# {layout}, M = {}", index.num_batches())?;
            write!(w, "{}", index.to_text())?;
            writeln!(
                w,
                "# coverage: {}",
                if report.passed { "passed" } else { "FAILED" }
            )?;
            writeln!(w, "# observed beam pairs: {}", report.pairs.len())?;
            for (name, missing) in [
                ("missing diagonal", format!("{:?}", report.missing_diagonal)),
                (
                    "missing adjacent x",
                    format!("{:?}", report.missing_adjacent_x),
                ),
                (
                    "missing adjacent y",
                    format!("{:?}", report.missing_adjacent_y),
                ),
            ] {
                writeln!(w, "# {name}: {missing}")?;
            }
            w.flush()?;
            if !report.passed {
                return Err(BenchError::Config(format!("{layout} fails coverage")));
            }
        }
        Command::Simulate { common, dump } => {
            let config = common.load()?;
            let scenario = config.base_scenario()?;
            if let Some(path) = dump {
                let codebook = Codebook::build(scenario.codebook)?;
                let batches = generate_batches(&scenario, &codebook, config.seed)?;
                let mut w = BufWriter::new(File::create(path)?);
                batches.write_csv(&mut w)?;
                w.flush()?;
            }
            let report = simulate_once(scenario, &config.methods, config.seed)?;
            let mut w = output(common.out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report).map_err(io::Error::other)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Bench {
            common,
            threads,
            timing,
        } => {
            let config = common.load()?;
            if threads == Some(0) {
                return Err(BenchError::Config("--threads must be at least 1".into()));
            }
            let rows = run_sweep(&config, &RunOptions { threads, timing })?;
            for r in &rows {
                if let Some(reason) = &r.failure_reason {
                    eprintln!(
                        "{} = {} [{}]: {} of {} trials failed, first: {reason}",
                        r.sweep_axis, r.sweep_value, r.method, r.failures, r.trials
                    );
                }
            }
            let out = common.out.or(config.output.path.clone());
            let mut w = output(out.as_deref())?;
            write_csv(&rows, &mut w)?;
            w.flush()?;
        }
        Command::Flops {
            n,
            nrf,
            k,
            batches,
            json,
        } => {
            let m = match batches {
                Some(m) => m,
                None => min_batches_ula(n, nrf).map_err(|e| BenchError::Config(e.to_string()))?,
            };
            if m == 0 || k < m {
                return Err(BenchError::Config(format!(
                    "K = {k} is smaller than M = {m}"
                )));
            }
            let report = flop_report(n, nrf, m, k / m)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).map_err(io::Error::other)?
                );
            } else {
                println!("{report}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
