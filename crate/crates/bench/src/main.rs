use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use prophecy_bench::config::{Method, OUT_DIR_ENV};
use prophecy_bench::report::RunReport;
use prophecy_bench::run::replot;
use prophecy_bench::{compare, run, BenchError, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "bench", version, about = "Compare inference engines on a structural time-series model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit every configured method and write the report directory.
    Run(RunArgs),
    /// Print the summary table of a finished run.
    Compare {
        /// Report directory (or its report.json).
        report: PathBuf,
        /// Also write the summary CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Re-render plots of a finished run from its CSV files.
    Plot {
        /// Report directory.
        dir: PathBuf,
    },
    /// Print the default configuration as TOML.
    Config,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration; defaults reproduce the full comparison.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Comma-separated subset of mh, dmz, nuts, advi, fullrank_advi, map.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<Method>>,
    /// Post-warm-up draws per chain (all samplers).
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Iterations for both variational methods.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Last training date (YYYY-MM-DD).
    #[arg(long)]
    train_end: Option<NaiveDate>,
    #[arg(long)]
    train_days: Option<u32>,
    #[arg(long)]
    horizon_days: Option<u32>,
    /// Series CSV with `ds,y` columns.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Run the chains of each sampler concurrently.
    #[arg(long)]
    parallel_chains: bool,
}

fn run_command(args: RunArgs) -> Result<bool, BenchError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        methods: args.method,
        draws: args.draws,
        chains: args.chains,
        warmup: args.warmup,
        iters: args.iters,
        seed: args.seed,
        train_end: args.train_end,
        train_days: args.train_days,
        horizon_days: args.horizon_days,
        out: args.out,
        data: args.data,
        parallel_chains: args.parallel_chains,
    });
    let report = run(&cfg)?;
    eprintln!(
        "[bench] train {} .. {}, holdout to {}",
        report.train_start, report.train_end, report.horizon_end
    );
    compare(&report, Some(&mut std::io::stdout()));
    println!("report written to {}", report.out_dir.display());
    Ok(report.succeeded())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(args),
        Command::Compare { report, csv } => {
            let path = if report.is_dir() { report.join("report.json") } else { report };
            RunReport::load(&path).and_then(|r| {
                let text = compare(&r, Some(&mut std::io::stdout()));
                if let Some(out) = csv {
                    std::fs::write(&out, text).map_err(|e| BenchError::io(out, e))?;
                }
                Ok(r.succeeded())
            })
        }
        Command::Plot { dir } => replot(&dir).map(|paths| {
            for p in paths {
                println!("{}", p.display());
            }
            true
        }),
        Command::Config => ExperimentConfig::default().to_toml().map(|t| {
            print!("{t}");
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
