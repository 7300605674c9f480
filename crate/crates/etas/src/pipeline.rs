//! End-to-end runs: a [`RunConfig`] in, a run directory out.
//!
//! Every entry point resolves the configuration, creates the output
//! directory, and writes `config.resolved.ini` there first, so a finished
//! run always carries the exact settings (defaults included) that produced
//! it. Alongside it go the command's artifacts — catalogs, summary vectors,
//! posterior samples, diagnostic curves — plus a small `manifest.json` with
//! seeds and counts for the record.
//!
//! Per-stage randomness is derived from the single `[run] seed`: catalog
//! `i` of a simulate run, the synthetic observation of an infer run, and
//! the inference stage itself each get tagged substreams, so any stage can
//! be reproduced in isolation.

use crate::abc::{abc_mcmc, abc_rejection, AbcConfig, AbcMcmcConfig};
use crate::bench::{run_bench, BenchConfig, BenchReport};
use crate::config::{Method, RunConfig};
use crate::diagnostics::{
    c2st, compensator_check, coverage, mmd, C2stConfig, C2stResult, CompensatorBands,
    CoverageConfig, CoverageReport, InferenceRunner, MmdResult, SampleSet,
};
use crate::engine::{EtasParamSpace, EtasSimulator};
use crate::error::{EtasError, Result};
use crate::gibbs::{gibbs_sample, McmcConfig};
use crate::io::{
    ingest_scedc_file, read_catalog_file, write_catalog_file, IngestReport, ScedcOptions,
};
use crate::likelihood::{mle, MleFit, MleOptions};
use crate::model::{gutenberg_richter_mle, Catalog};
use crate::rng::{derive_rng, derive_seed};
use crate::samples::PosteriorSamples;
use crate::simulate::{simulate_branching, SimConfig};
use crate::snpe::{snpe, SnpeConfig};
use crate::summaries::summarize;
use ndarray::{Array2, Axis};
use std::path::{Path, PathBuf};

/// File name of the written-back configuration in every run directory.
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.ini";

const TAG_SIM_CATALOG: u64 = 0xC0;
const TAG_OBS: u64 = 0xC1;
const TAG_INFER: u64 = 0xC2;
const TAG_DIAG_C2ST: u64 = 0xC3;
const TAG_DIAG_COVERAGE: u64 = 0xC4;
const TAG_BENCH_RUN: u64 = 0xC5;
// applied to each replicate seed inside coverage runs
const TAG_COV_TRUTH: u64 = 0xC6;
const TAG_COV_SIM: u64 = 0xC7;
const TAG_COV_INFER: u64 = 0xC8;

/// Create `out_dir` and write the resolved configuration into it.
fn prepare_out_dir(config: &RunConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(RESOLVED_CONFIG_FILE), config.write_ini())?;
    Ok(())
}

fn write_manifest(out_dir: &Path, manifest: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest of plain values");
    std::fs::write(out_dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn provenance(config: &RunConfig, seed: u64) -> Vec<(String, String)> {
    let p = &config.params;
    vec![
        ("seed".into(), seed.to_string()),
        ("mu".into(), p.mu.to_string()),
        ("k".into(), p.k.to_string()),
        ("alpha".into(), p.alpha.to_string()),
        ("c".into(), p.c.to_string()),
        ("p".into(), p.p.to_string()),
        ("beta".into(), p.beta.to_string()),
    ]
}

fn simulate_one(config: &RunConfig, seed: u64) -> Result<Catalog> {
    let sim_config = SimConfig {
        window_end: config.sim.window_end,
        max_events: config.sim.max_events,
        seed,
        record_branching: false,
    };
    let mut rng = derive_rng(seed, &[]);
    Ok(simulate_branching(&config.params, &sim_config, config.sim.m0, &mut rng)?.catalog)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Result of [`run_simulate`]: where the catalogs went and how big they are.
#[derive(Debug, Clone)]
pub struct SimulateOutput {
    pub files: Vec<PathBuf>,
    pub n_events: Vec<usize>,
    pub seeds: Vec<u64>,
}

/// Simulate `[sim] n_catalogs` catalogs at the `[params]` values.
pub fn run_simulate(config: &RunConfig, out_dir: &Path) -> Result<SimulateOutput> {
    config.validate()?;
    prepare_out_dir(config, out_dir)?;
    let mut files = Vec::new();
    let mut n_events = Vec::new();
    let mut seeds = Vec::new();
    for i in 0..config.sim.n_catalogs {
        let seed = derive_seed(config.seed, &[TAG_SIM_CATALOG, i as u64]);
        let catalog = simulate_one(config, seed)?;
        let file = out_dir.join(format!("catalog_{i:04}.csv"));
        write_catalog_file(&catalog, &provenance(config, seed), &file)?;
        n_events.push(catalog.len());
        seeds.push(seed);
        files.push(file);
    }
    let manifest = serde_json::json!({
        "command": "simulate",
        "seed": config.seed,
        "files": files.iter().map(|f| f.file_name().unwrap().to_string_lossy()).collect::<Vec<_>>(),
        "catalog_seeds": seeds,
        "n_events": n_events,
    });
    write_manifest(out_dir, &manifest)?;
    Ok(SimulateOutput { files, n_events, seeds })
}

// ---------------------------------------------------------------------------
// summarize
// ---------------------------------------------------------------------------

/// Result of [`run_summarize`]: the labeled summary vector.
#[derive(Debug, Clone)]
pub struct SummarizeOutput {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub file: PathBuf,
    pub warnings: Vec<String>,
}

/// Compute the `[summary]` vector of one catalog file.
pub fn run_summarize(config: &RunConfig, catalog_path: &Path, out_dir: &Path) -> Result<SummarizeOutput> {
    config.validate()?;
    prepare_out_dir(config, out_dir)?;
    let report = read_catalog_file(catalog_path)?;
    let summary = summarize(&report.catalog, &config.summary)?;
    let names = config.summary.names();
    let file = out_dir.join("summary.csv");
    let mut text = String::from("name,value\n");
    for (name, value) in names.iter().zip(&summary.values) {
        text.push_str(&format!("{name},{value}\n"));
    }
    std::fs::write(&file, text)?;
    let manifest = serde_json::json!({
        "command": "summarize",
        "catalog": catalog_path.display().to_string(),
        "n_events": report.catalog.len(),
        "n_summaries": summary.values.len(),
        "warnings": report.warnings,
    });
    write_manifest(out_dir, &manifest)?;
    Ok(SummarizeOutput { names, values: summary.values, file, warnings: report.warnings })
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

/// Result of [`run_infer`]: posterior draws (or a point fit for `mle`),
/// plus display-ready details.
#[derive(Debug)]
pub struct InferOutput {
    pub method: Method,
    pub samples: Option<PosteriorSamples>,
    pub mle: Option<MleFit>,
    pub observed_events: usize,
    pub files: Vec<PathBuf>,
    /// `(name, value)` pairs for terminal display: tolerances, acceptance
    /// rates, fitted scales.
    pub details: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

/// The observed catalog: read from `[inference] catalog` when set, else
/// simulated from `[params]` under a tagged seed.
fn observed_catalog(config: &RunConfig) -> Result<(Catalog, Option<u64>, Vec<String>)> {
    match &config.inference.catalog {
        Some(path) => {
            let report = read_catalog_file(path)?;
            Ok((report.catalog, None, report.warnings))
        }
        None => {
            let seed = derive_seed(config.seed, &[TAG_OBS]);
            Ok((simulate_one(config, seed)?, Some(seed), Vec::new()))
        }
    }
}

/// Exact-likelihood backends cost `O(n^2)`; refuse huge catalogs unless the
/// override says otherwise.
fn guard_exact(config: &RunConfig, n: usize) -> Result<()> {
    if n > config.inference.guard_events && !config.inference.allow_large {
        return Err(EtasError::Config(format!(
            "catalog has {n} events and this method's cost grows quadratically; \
             pass --override inference.allow_large=true to run anyway \
             (guard threshold: {} events)",
            config.inference.guard_events
        )));
    }
    Ok(())
}

/// Run the configured inference method against the observed catalog.
pub fn run_infer(config: &RunConfig, out_dir: &Path) -> Result<InferOutput> {
    config.validate()?;
    prepare_out_dir(config, out_dir)?;
    let (catalog, obs_seed, mut warnings) = observed_catalog(config)?;
    let mut files = Vec::new();
    if let Some(seed) = obs_seed {
        let file = out_dir.join("observed.csv");
        write_catalog_file(&catalog, &provenance(config, seed), &file)?;
        files.push(file);
    }

    let method = config.inference.method;
    let infer_seed = derive_seed(config.seed, &[TAG_INFER]);
    let mut details: Vec<(String, String)> = vec![
        ("events".into(), catalog.len().to_string()),
        ("window_end".into(), catalog.window_end().to_string()),
    ];
    if let Ok(beta_hat) = gutenberg_richter_mle(&catalog) {
        details.push(("beta_hat".into(), format!("{beta_hat:.4}")));
    }

    let mut samples: Option<PosteriorSamples> = None;
    let mut fit: Option<MleFit> = None;
    match method {
        Method::Snpe | Method::Abc | Method::AbcMcmc => {
            let space =
                EtasParamSpace::new(config.prior, config.params.beta, config.mask)?;
            let sim = EtasSimulator::new(
                config.mask,
                config.params.beta,
                catalog.m0(),
                catalog.window_end(),
                config.sim.max_events,
                config.summary.clone(),
            )?;
            let s_obs = summarize(&catalog, &config.summary)?.values;
            match method {
                Method::Snpe => {
                    let snpe_config = SnpeConfig { seed: infer_seed, ..config.snpe.clone() };
                    let out = snpe(&space, &sim, &s_obs, &snpe_config)?;
                    let mdn_file = out_dir.join("mdn.json");
                    std::fs::write(&mdn_file, out.mdn.to_json())?;
                    files.push(mdn_file);
                    details.push(("rounds".into(), out.rounds.len().to_string()));
                    if let Some(last) = out.rounds.last() {
                        details.push(("final_val_nll".into(), format!("{:.4}", last.best_val_nll)));
                    }
                    warnings.extend(out.warnings);
                    samples = Some(PosteriorSamples::new(out.draws, "snpe", infer_seed)?);
                }
                Method::Abc => {
                    let abc_config = AbcConfig { seed: infer_seed, ..config.abc.clone() };
                    let out = abc_rejection(&space, &sim, &s_obs, &abc_config)?;
                    details.push(("epsilon".into(), format!("{:.4}", out.epsilon)));
                    details.push(("accepted".into(), out.draws.nrows().to_string()));
                    details.push(("simulations".into(), out.n_sims.to_string()));
                    warnings.extend(out.warnings);
                    samples = Some(PosteriorSamples::new(out.draws, "abc", infer_seed)?);
                }
                Method::AbcMcmc => {
                    let mcmc_config = AbcMcmcConfig { seed: infer_seed, ..config.mcmc.clone() };
                    let out = abc_mcmc(&space, &sim, &s_obs, &mcmc_config)?;
                    details.push(("epsilon".into(), format!("{:.4}", out.epsilon)));
                    details.push(("acceptance_rate".into(), format!("{:.4}", out.acceptance_rate)));
                    details.push(("simulations".into(), out.n_sims.to_string()));
                    warnings.extend(out.warnings);
                    samples = Some(PosteriorSamples::new(out.draws, "abc-mcmc", infer_seed)?);
                }
                _ => unreachable!(),
            }
        }
        Method::Gibbs => {
            guard_exact(config, catalog.len())?;
            let gibbs_config = McmcConfig { seed: infer_seed, ..config.gibbs };
            let out = gibbs_sample(&catalog, &config.prior, &gibbs_config, &config.mask)?;
            for (name, rate) in [
                ("accept_mu", out.accept_mu),
                ("accept_k_alpha", out.accept_k_alpha),
                ("accept_c_p", out.accept_c_p),
            ] {
                if let Some(rate) = rate {
                    details.push((name.into(), format!("{rate:.3}")));
                }
            }
            details.push(("background_fraction".into(), format!("{:.3}", out.background_fraction)));
            warnings.extend(out.warnings);
            samples = Some(out.samples);
        }
        Method::Mle => {
            guard_exact(config, catalog.len())?;
            let opts = MleOptions { init: None, mask: config.mask, ..MleOptions::default() };
            let out = mle(&catalog, &opts)?;
            let p = &out.params;
            let json = serde_json::json!({
                "mu": p.mu, "k": p.k, "alpha": p.alpha, "c": p.c, "p": p.p, "beta": p.beta,
                "loglik": out.loglik,
                "n_evals": out.n_evals,
                "converged": out.converged,
            });
            let file = out_dir.join("mle.json");
            std::fs::write(&file, serde_json::to_string_pretty(&json).expect("plain json") + "\n")?;
            files.push(file);
            details.push(("loglik".into(), format!("{:.4}", out.loglik)));
            details.push(("converged".into(), out.converged.to_string()));
            fit = Some(out);
        }
    }

    if let Some(samples) = &samples {
        let file = out_dir.join("samples.csv");
        samples.write_csv_file(&file)?;
        files.push(file);
    }
    let manifest = serde_json::json!({
        "command": "infer",
        "method": method.name(),
        "seed": config.seed,
        "inference_seed": infer_seed,
        "observation_seed": obs_seed,
        "observed_events": catalog.len(),
        "n_draws": samples.as_ref().map_or(0, |s| s.n()),
        "files": files.iter().map(|f| f.file_name().unwrap().to_string_lossy()).collect::<Vec<_>>(),
        "details": details.iter().cloned().collect::<std::collections::BTreeMap<_, _>>(),
        "warnings": warnings,
    });
    write_manifest(out_dir, &manifest)?;
    Ok(InferOutput {
        method,
        samples,
        mle: fit,
        observed_events: catalog.len(),
        files,
        details,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

fn sample_set_from_file(path: &Path) -> Result<SampleSet> {
    let samples = PosteriorSamples::read_csv_file(path)?;
    SampleSet::from_posterior(&samples)
}

/// Kernel two-sample test between two posterior sample files.
pub fn diagnose_mmd(a: &Path, b: &Path) -> Result<MmdResult> {
    mmd(&sample_set_from_file(a)?, &sample_set_from_file(b)?)
}

/// Classifier two-sample test between two posterior sample files.
pub fn diagnose_c2st(config: &RunConfig, a: &Path, b: &Path) -> Result<C2stResult> {
    let c2st_config = C2stConfig {
        seed: derive_seed(config.seed, &[TAG_DIAG_C2ST]),
        ..config.diagnostics.c2st.clone()
    };
    c2st(&sample_set_from_file(a)?, &sample_set_from_file(b)?, &c2st_config)
}

/// Posterior-band compensator check of a catalog against sample draws;
/// writes `compensator.csv` into the run directory.
pub fn diagnose_compensator(
    config: &RunConfig,
    catalog_path: &Path,
    samples_path: &Path,
    out_dir: &Path,
) -> Result<CompensatorBands> {
    config.validate()?;
    prepare_out_dir(config, out_dir)?;
    let report = read_catalog_file(catalog_path)?;
    let samples = PosteriorSamples::read_csv_file(samples_path)?;
    let w = report.catalog.window_end();
    let grid: Vec<f64> = (1..=100).map(|i| w * i as f64 / 100.0).collect();
    let bands = compensator_check(&report.catalog, &samples, &grid)?;
    let file = std::fs::File::create(out_dir.join("compensator.csv"))?;
    bands.write_csv(std::io::BufWriter::new(file))?;
    let manifest = serde_json::json!({
        "command": "diagnose compensator",
        "catalog": catalog_path.display().to_string(),
        "samples": samples_path.display().to_string(),
        "n_events": report.catalog.len(),
        "n_draws": samples.n(),
        "warnings": report.warnings,
    });
    write_manifest(out_dir, &manifest)?;
    Ok(bands)
}

/// One calibration replicate of the configured method: prior truth,
/// synthetic catalog, posterior draws on the free coordinates.
struct ConfigRunner<'a> {
    config: &'a RunConfig,
    free: Vec<usize>,
}

impl InferenceRunner for ConfigRunner<'_> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn replicate(&self, seed: u64) -> Result<(Vec<f64>, Array2<f64>)> {
        let config = self.config;
        let mut rng = derive_rng(seed, &[TAG_COV_TRUTH]);
        let truth = config.prior.sample_masked(config.params.beta, &config.mask, &mut rng)?;
        let sim_seed = derive_seed(seed, &[TAG_COV_SIM]);
        let sim_config = SimConfig {
            window_end: config.sim.window_end,
            max_events: config.sim.max_events,
            seed: sim_seed,
            record_branching: false,
        };
        let mut sim_rng = derive_rng(sim_seed, &[]);
        let catalog = simulate_branching(&truth, &sim_config, config.sim.m0, &mut sim_rng)?.catalog;
        let infer_seed = derive_seed(seed, &[TAG_COV_INFER]);

        let samples = match config.inference.method {
            Method::Gibbs => {
                let gibbs_config = McmcConfig { seed: infer_seed, ..config.gibbs };
                gibbs_sample(&catalog, &config.prior, &gibbs_config, &config.mask)?.samples
            }
            Method::Snpe | Method::Abc => {
                let space = EtasParamSpace::new(config.prior, config.params.beta, config.mask)?;
                let sim = EtasSimulator::new(
                    config.mask,
                    config.params.beta,
                    config.sim.m0,
                    config.sim.window_end,
                    config.sim.max_events,
                    config.summary.clone(),
                )?;
                let s_obs = summarize(&catalog, &config.summary)?.values;
                match config.inference.method {
                    Method::Snpe => {
                        let snpe_config = SnpeConfig { seed: infer_seed, ..config.snpe.clone() };
                        let out = snpe(&space, &sim, &s_obs, &snpe_config)?;
                        PosteriorSamples::new(out.draws, "snpe", infer_seed)?
                    }
                    Method::Abc => {
                        let abc_config = AbcConfig { seed: infer_seed, ..config.abc.clone() };
                        let out = abc_rejection(&space, &sim, &s_obs, &abc_config)?;
                        PosteriorSamples::new(out.draws, "abc", infer_seed)?
                    }
                    _ => unreachable!(),
                }
            }
            method => {
                return Err(EtasError::Config(format!(
                    "coverage is not defined for method {method}"
                )));
            }
        };
        let theta = truth.theta();
        let truth_free: Vec<f64> = self.free.iter().map(|&i| theta[i]).collect();
        let draws_free = samples.draws().select(Axis(1), &self.free);
        Ok((truth_free, draws_free))
    }
}

/// Replicated simulation-based calibration of the configured method over
/// the free coordinates; writes `coverage.csv` into the run directory.
pub fn diagnose_coverage(config: &RunConfig, out_dir: &Path) -> Result<CoverageReport> {
    config.validate()?;
    if !matches!(config.inference.method, Method::Gibbs | Method::Snpe | Method::Abc) {
        return Err(EtasError::Config(format!(
            "coverage is not defined for method {}; use gibbs, snpe, or abc",
            config.inference.method
        )));
    }
    prepare_out_dir(config, out_dir)?;
    let runner = ConfigRunner { config, free: config.mask.free_indices() };
    let coverage_config = CoverageConfig {
        seed: derive_seed(config.seed, &[TAG_DIAG_COVERAGE]),
        ..config.diagnostics.coverage.clone()
    };
    let report = coverage(&runner, &coverage_config)?;
    let file = std::fs::File::create(out_dir.join("coverage.csv"))?;
    report.write_csv(std::io::BufWriter::new(file))?;
    let manifest = serde_json::json!({
        "command": "diagnose coverage",
        "method": config.inference.method.name(),
        "n_replicates": report.n_replicates,
        "n_failed": report.n_failed,
        "warnings": report.warnings,
    });
    write_manifest(out_dir, &manifest)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// bench and ingest
// ---------------------------------------------------------------------------

/// Run the scaling benchmark; writes `bench.csv` into the run directory.
pub fn run_bench_report(config: &RunConfig, out_dir: &Path) -> Result<BenchReport> {
    config.validate()?;
    prepare_out_dir(config, out_dir)?;
    let bench_config =
        BenchConfig { seed: derive_seed(config.seed, &[TAG_BENCH_RUN]), ..config.bench.clone() };
    let report = run_bench(&config.params, config.sim.m0, &config.prior, &config.summary, &bench_config)?;
    let file = std::fs::File::create(out_dir.join("bench.csv"))?;
    report.write_csv(std::io::BufWriter::new(file))?;
    let manifest = serde_json::json!({
        "command": "bench",
        "t_grid": bench_config.t_grid,
        "slopes": report.slopes.iter().map(|(p, s)| (p.name(), *s)).collect::<std::collections::BTreeMap<_, _>>(),
        "warnings": report.warnings,
    });
    write_manifest(out_dir, &manifest)?;
    Ok(report)
}

/// Ingest a raw feed into the native catalog format; writes `catalog.csv`
/// into the run directory.
pub fn run_ingest(
    config: &RunConfig,
    input: &Path,
    options: &ScedcOptions,
    out_dir: &Path,
) -> Result<(IngestReport, PathBuf)> {
    prepare_out_dir(config, out_dir)?;
    let report = ingest_scedc_file(input, options)?;
    let file = out_dir.join("catalog.csv");
    let extra = vec![
        ("source".into(), input.display().to_string()),
        ("m_cut".into(), options.m_cut.to_string()),
    ];
    write_catalog_file(&report.catalog, &extra, &file)?;
    let manifest = serde_json::json!({
        "command": "ingest",
        "input": input.display().to_string(),
        "n_rows": report.n_rows,
        "n_malformed": report.n_malformed,
        "n_below_cut": report.n_below_cut,
        "n_outside_dates": report.n_outside_dates,
        "n_ties_broken": report.n_ties_broken,
        "n_events": report.catalog.len(),
        "warnings": report.warnings,
    });
    write_manifest(out_dir, &manifest)?;
    Ok((report, file))
}
