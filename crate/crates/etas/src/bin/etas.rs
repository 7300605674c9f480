//! Command-line front end.
//!
//! Global flags select the configuration (`--config`, `--override`,
//! `--seed`), the worker-thread count (`--threads`), and the output
//! directory (`--out`); subcommands map one-to-one onto the pipeline
//! entry points. Precedence: file values, then `--override` pairs in
//! order, then `--seed`.
//!
//! Exit codes: 0 success, 2 configuration problems, 3 data problems,
//! 4 numerical failures, 5 timeouts. Errors print a single
//! `error[TAG]: message` line on stderr.

use clap::{Parser, Subcommand};
use etas::config::{Method, RunConfig};
use etas::error::{EtasError, Result};
use etas::io::ScedcOptions;
use etas::model::PARAM_NAMES;
use etas::pipeline;
use etas::samples::PosteriorSamples;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "etas",
    version,
    about = "Temporal ETAS: branching simulation, summaries, and posterior inference"
)]
struct Cli {
    /// Run configuration file; every setting has a default when absent.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed; takes precedence over `[run] seed` and overrides.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory (default: etas-out/<command>).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Setting override, `section.key=value`; repeatable, applied in order.
    #[arg(long = "override", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate catalogs at the configured parameters.
    Simulate,
    /// Compute the summary vector of a catalog file.
    Summarize {
        /// Catalog file in the native format.
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Posterior inference on an observed (or freshly simulated) catalog.
    Infer {
        /// Observed catalog; when absent one is simulated at `[params]`.
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Backend: snpe, abc, abc-mcmc, gibbs, or mle (default: `[inference] method`).
        #[arg(long)]
        method: Option<Method>,
    },
    /// Distribution and calibration diagnostics.
    Diagnose {
        #[command(subcommand)]
        check: Diagnose,
    },
    /// Runtime-scaling benchmark across window lengths.
    Bench,
    /// Convert a raw SCEDC-style feed into the native catalog format.
    Ingest {
        /// Raw event listing (whitespace columns or CSV).
        #[arg(long)]
        input: PathBuf,
        /// Magnitude cut; kept events have m >= m_cut (default 2.5).
        #[arg(long)]
        m_cut: Option<f64>,
        /// First calendar date to keep, inclusive (YYYY-MM-DD).
        #[arg(long, value_name = "DATE")]
        from: Option<String>,
        /// Last calendar date to keep, inclusive (YYYY-MM-DD).
        #[arg(long, value_name = "DATE")]
        to: Option<String>,
    },
}

#[derive(Subcommand)]
enum Diagnose {
    /// Kernel two-sample statistic between two posterior sample files.
    Mmd { a: PathBuf, b: PathBuf },
    /// Classifier two-sample test between two posterior sample files.
    C2st { a: PathBuf, b: PathBuf },
    /// Replicated calibration of the configured inference method.
    Coverage,
    /// Posterior compensator bands against an observed catalog.
    Compensator {
        #[arg(long)]
        catalog: PathBuf,
        /// Posterior draws CSV, as written by `infer`.
        #[arg(long)]
        samples: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error[{}]: {error}", error.tag());
            ExitCode::from(error.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_ini(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    for entry in &cli.overrides {
        config.apply_override(entry)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(cli: &Cli, default_name: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| Path::new("etas-out").join(default_name))
}

fn print_posterior(samples: &PosteriorSamples) -> Result<()> {
    println!("{:>8} {:>12} {:>12} {:>12}", "param", "mean", "2.5%", "97.5%");
    for (j, name) in PARAM_NAMES.iter().enumerate() {
        let (lo, hi) = samples.equal_tailed_interval(j, 0.95)?;
        println!("{:>8} {:>12.5} {:>12.5} {:>12.5}", name, samples.mean(j), lo, hi);
    }
    Ok(())
}

fn print_warnings(warnings: &[String]) {
    for warning in warnings {
        eprintln!("warning: {warning}");
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| EtasError::Config(format!("--threads: {e}")))?;
    }
    let mut config = load_config(&cli)?;

    match &cli.command {
        Command::Simulate => {
            let dir = out_dir(&cli, "simulate");
            let out = pipeline::run_simulate(&config, &dir)?;
            for (file, n) in out.files.iter().zip(&out.n_events) {
                println!("{}  {n} events", file.display());
            }
            println!("wrote {} catalog(s) to {}", out.files.len(), dir.display());
        }
        Command::Summarize { catalog } => {
            let dir = out_dir(&cli, "summarize");
            let out = pipeline::run_summarize(&config, catalog, &dir)?;
            print_warnings(&out.warnings);
            for (name, value) in out.names.iter().zip(&out.values) {
                println!("{name:>24} {value:>14.6}");
            }
            println!("wrote {}", out.file.display());
        }
        Command::Infer { catalog, method } => {
            if let Some(path) = catalog {
                config.inference.catalog = Some(path.display().to_string());
            }
            if let Some(method) = method {
                config.inference.method = *method;
            }
            let dir = out_dir(&cli, "infer");
            let out = pipeline::run_infer(&config, &dir)?;
            print_warnings(&out.warnings);
            println!("method: {}", out.method);
            for (name, value) in &out.details {
                println!("{name}: {value}");
            }
            if let Some(samples) = &out.samples {
                println!("{} posterior draws", samples.n());
                print_posterior(samples)?;
            }
            if let Some(fit) = &out.mle {
                let p = &fit.params;
                println!(
                    "mle: mu={:.5} k={:.5} alpha={:.5} c={:.5} p={:.5} (loglik {:.4})",
                    p.mu, p.k, p.alpha, p.c, p.p, fit.loglik
                );
            }
            println!("run directory: {}", dir.display());
        }
        Command::Diagnose { check } => match check {
            Diagnose::Mmd { a, b } => {
                let result = pipeline::diagnose_mmd(a, b)?;
                println!("mmd^2 (unbiased): {:.6e}", result.raw);
                println!("mmd^2 (clamped):  {:.6e}", result.clamped);
                println!("bandwidth: {:.4}  sizes: {} vs {}", result.bandwidth, result.n_a, result.n_b);
            }
            Diagnose::C2st { a, b } => {
                let result = pipeline::diagnose_c2st(&config, a, b)?;
                println!("c2st accuracy: {:.4} (0.5 = indistinguishable)", result.accuracy);
                let folds: Vec<String> =
                    result.fold_accuracies.iter().map(|a| format!("{a:.3}")).collect();
                println!("folds: {}  draws per class: {}", folds.join(" "), result.n_per_class);
            }
            Diagnose::Coverage => {
                let dir = out_dir(&cli, "diagnose-coverage");
                let report = pipeline::diagnose_coverage(&config, &dir)?;
                print_warnings(&report.warnings);
                println!(
                    "{:>7} {:>10} {:>10} {:>16}",
                    "gamma", "marginal", "joint", "classification"
                );
                for row in &report.rows {
                    println!(
                        "{:>7.2} {:>10.3} {:>10.3} {:>16}",
                        row.gamma, row.marginal, row.joint, row.classification
                    );
                }
                println!(
                    "{} replicates ({} failed); run directory: {}",
                    report.n_replicates,
                    report.n_failed,
                    dir.display()
                );
            }
            Diagnose::Compensator { catalog, samples } => {
                let dir = out_dir(&cli, "diagnose-compensator");
                let bands = pipeline::diagnose_compensator(&config, catalog, samples, &dir)?;
                let inside = bands
                    .observed
                    .iter()
                    .zip(bands.lo.iter().zip(&bands.hi))
                    .filter(|(n, (lo, hi))| **n >= **lo && **n <= **hi)
                    .count();
                println!(
                    "observed N(t) inside the 95% posterior band at {inside}/{} grid times",
                    bands.grid.len()
                );
                println!("run directory: {}", dir.display());
            }
        },
        Command::Bench => {
            let dir = out_dir(&cli, "bench");
            let report = pipeline::run_bench_report(&config, &dir)?;
            print_warnings(&report.warnings);
            print!("{}", report.render_table());
            println!("run directory: {}", dir.display());
        }
        Command::Ingest { input, m_cut, from, to } => {
            let mut options = ScedcOptions::default();
            if let Some(m_cut) = m_cut {
                options.m_cut = *m_cut;
            }
            options.date_from = from.as_deref().map(parse_date).transpose()?;
            options.date_to = to.as_deref().map(parse_date).transpose()?;
            let dir = out_dir(&cli, "ingest");
            let (report, file) = pipeline::run_ingest(&config, input, &options, &dir)?;
            print_warnings(&report.warnings);
            println!(
                "rows: {}  malformed: {}  outside dates: {}  below m_cut: {}  ties broken: {}",
                report.n_rows,
                report.n_malformed,
                report.n_outside_dates,
                report.n_below_cut,
                report.n_ties_broken
            );
            println!("{} events -> {}", report.catalog.len(), file.display());
        }
    }
    Ok(())
}

fn parse_date(text: &str) -> Result<chrono::NaiveDate> {
    chrono::NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .map_err(|_| EtasError::Config(format!("bad date {text:?}; expected YYYY-MM-DD")))
}
