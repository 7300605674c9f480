//! Run configuration: a flat INI file mapped onto the library's settings.
//!
//! One file drives a whole run,
//!
//!   [run]
//!   seed = 42
//!   [params]
//!   mu = 0.2
//!   [inference]
//!   method = snpe
//!
//! with `#` comments and `key = value` pairs grouped under `[section]`
//! headers. Unknown sections and keys are rejected rather than ignored, so
//! typos fail loudly; duplicate keys are rejected too. Every key has a
//! default ([`RunConfig::default`] is the reference configuration used
//! throughout the docs), and [`RunConfig::write_ini`] materializes all of
//! them, so a written file is always complete and re-reads to the same
//! configuration.
//!
//! Per-stage seeds never appear in the file: stages derive their streams
//! from `[run] seed`, which keeps one number in charge of reproducibility.
//!
//! Command-line overrides use the dotted form `section.key=value` and go
//! through the same parser as the file, with the same validation.

use crate::abc::{AbcConfig, AbcMcmcConfig};
use crate::bench::BenchConfig;
use crate::diagnostics::{C2stConfig, CoverageConfig};
use crate::error::{EtasError, Result};
use crate::gibbs::McmcConfig;
use crate::model::EtasParams;
use crate::prior::{FixedParamMask, Marginal, PriorSpec};
use crate::snpe::SnpeConfig;
use crate::summaries::SummaryConfig;
use std::fmt::Write as _;

/// Simulation block: generating window and caps.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub window_end: f64,
    pub m0: f64,
    pub max_events: usize,
    /// Catalogs per `simulate` invocation.
    pub n_catalogs: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings { window_end: 1e4, m0: 3.0, max_events: 1_000_000, n_catalogs: 1 }
    }
}

/// Diagnostics block: classifier test and coverage settings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticsSettings {
    pub c2st: C2stConfig,
    pub coverage: CoverageConfig,
}

/// Posterior-inference backends selectable from a run file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Snpe,
    Abc,
    AbcMcmc,
    Gibbs,
    Mle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Snpe => "snpe",
            Method::Abc => "abc",
            Method::AbcMcmc => "abc-mcmc",
            Method::Gibbs => "gibbs",
            Method::Mle => "mle",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = EtasError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snpe" => Ok(Method::Snpe),
            "abc" => Ok(Method::Abc),
            "abc-mcmc" => Ok(Method::AbcMcmc),
            "gibbs" => Ok(Method::Gibbs),
            "mle" => Ok(Method::Mle),
            _ => Err(EtasError::Config(format!(
                "unknown method {s:?}; expected snpe, abc, abc-mcmc, gibbs, or mle"
            ))),
        }
    }
}

/// Inference block: backend choice and the exact-likelihood size guard.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceSettings {
    pub method: Method,
    /// Observed catalog path; empty means "simulate the observation".
    pub catalog: Option<String>,
    /// Let quadratic-cost backends run on catalogs above `guard_events`.
    pub allow_large: bool,
    pub guard_events: usize,
}

impl Default for InferenceSettings {
    fn default() -> Self {
        InferenceSettings {
            method: Method::Snpe,
            catalog: None,
            allow_large: false,
            guard_events: 20_000,
        }
    }
}

/// Complete run configuration; see the module docs for the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Generating parameters for simulation and benchmark runs.
    pub params: EtasParams,
    pub sim: SimSettings,
    pub prior: PriorSpec,
    pub mask: FixedParamMask,
    pub summary: SummaryConfig,
    /// Sequential neural estimation; its `seed`, `mdn`, and `train` fields
    /// are controlled by `[run] seed`, `[train]`, and `[snpe]`.
    pub snpe: SnpeConfig,
    pub abc: AbcConfig,
    pub mcmc: AbcMcmcConfig,
    pub gibbs: McmcConfig,
    pub diagnostics: DiagnosticsSettings,
    pub bench: BenchConfig,
    pub inference: InferenceSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            params: EtasParams::new(0.2, 0.2, 1.5, 0.5, 2.0, 2.4).unwrap(),
            sim: SimSettings::default(),
            prior: PriorSpec::default_subcritical(),
            mask: FixedParamMask::none(),
            summary: SummaryConfig::default(),
            snpe: SnpeConfig::default(),
            abc: AbcConfig::default(),
            mcmc: AbcMcmcConfig::default(),
            gibbs: McmcConfig::default(),
            diagnostics: DiagnosticsSettings::default(),
            bench: BenchConfig::default(),
            inference: InferenceSettings::default(),
        }
    }
}

// -- value parsers ----------------------------------------------------------

fn bad(section: &str, key: &str, value: &str, want: &str) -> EtasError {
    EtasError::Config(format!("[{section}] {key} = {value:?}: expected {want}"))
}

fn parse_f64(section: &str, key: &str, value: &str) -> Result<f64> {
    value.parse().map_err(|_| bad(section, key, value, "a number"))
}

fn parse_u64(section: &str, key: &str, value: &str) -> Result<u64> {
    value.parse().map_err(|_| bad(section, key, value, "a non-negative integer"))
}

fn parse_usize(section: &str, key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| bad(section, key, value, "a non-negative integer"))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(section, key, value, "true or false")),
    }
}

fn parse_f64_list(section: &str, key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| bad(section, key, value, "a comma-separated number list")))
        .collect()
}

fn parse_usize_list(section: &str, key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| bad(section, key, value, "a comma-separated integer list")))
        .collect()
}

/// `"auto"` or a number; `auto` selects the acceptance-fraction quantile.
fn parse_epsilon(section: &str, key: &str, value: &str) -> Result<Option<f64>> {
    if value == "auto" {
        return Ok(None);
    }
    parse_f64(section, key, value).map(Some).map_err(|_| bad(section, key, value, "'auto' or a number"))
}

/// `"uniform lo hi"`, `"gamma shape rate"`, or `"lognormal mu sigma"`.
fn parse_marginal(section: &str, key: &str, value: &str) -> Result<Marginal> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    let want = "'uniform lo hi', 'gamma shape rate', or 'lognormal mu sigma'";
    if tokens.len() != 3 {
        return Err(bad(section, key, value, want));
    }
    let a: f64 = tokens[1].parse().map_err(|_| bad(section, key, value, want))?;
    let b: f64 = tokens[2].parse().map_err(|_| bad(section, key, value, want))?;
    let marginal = match tokens[0] {
        "uniform" => Marginal::Uniform { lo: a, hi: b },
        "gamma" => Marginal::Gamma { shape: a, rate: b },
        "lognormal" => Marginal::LogNormal { mu_log: a, sigma_log: b },
        _ => return Err(bad(section, key, value, want)),
    };
    marginal.validate()?;
    Ok(marginal)
}

/// `"free"` or a number to pin the coordinate.
fn parse_mask_entry(section: &str, key: &str, value: &str) -> Result<Option<f64>> {
    if value == "free" {
        return Ok(None);
    }
    parse_f64(section, key, value).map(Some).map_err(|_| bad(section, key, value, "'free' or a number"))
}

fn format_marginal(m: &Marginal) -> String {
    match m {
        Marginal::Uniform { lo, hi } => format!("uniform {lo} {hi}"),
        Marginal::Gamma { shape, rate } => format!("gamma {shape} {rate}"),
        Marginal::LogNormal { mu_log, sigma_log } => format!("lognormal {mu_log} {sigma_log}"),
    }
}

fn format_f64_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn format_epsilon(value: Option<f64>) -> String {
    value.map_or_else(|| "auto".into(), |e| e.to_string())
}

fn format_mask_entry(value: Option<f64>) -> String {
    value.map_or_else(|| "free".into(), |v| v.to_string())
}

// -- the INI surface --------------------------------------------------------

impl RunConfig {
    /// Parse a full file. Settings not mentioned keep their defaults.
    pub fn from_ini(text: &str) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        let mut seen: Vec<(String, String)> = Vec::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    EtasError::Config(format!("line {}: unclosed section header {raw:?}", lineno + 1))
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                EtasError::Config(format!("line {}: expected 'key = value', got {raw:?}", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if section.is_empty() {
                return Err(EtasError::Config(format!(
                    "line {}: key {key:?} appears before any [section] header",
                    lineno + 1
                )));
            }
            if seen.iter().any(|(s, k)| *s == section && *k == key) {
                return Err(EtasError::Config(format!("duplicate key [{section}] {key}")));
            }
            seen.push((section.clone(), key.clone()));
            config.apply(&section, &key, &value)?;
        }
        Ok(config)
    }

    /// Apply one `section.key=value` override.
    pub fn apply_override(&mut self, text: &str) -> Result<()> {
        let (path, value) = text.split_once('=').ok_or_else(|| {
            EtasError::Config(format!("override {text:?} is not of the form section.key=value"))
        })?;
        let (section, key) = path.trim().split_once('.').ok_or_else(|| {
            EtasError::Config(format!("override {text:?} is not of the form section.key=value"))
        })?;
        self.apply(section.trim(), key.trim(), value.trim())
    }

    /// Route one key to its field. The single authority on the file schema;
    /// both the file parser and the override path land here.
    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let unknown_key =
            || EtasError::Config(format!("unknown key {key:?} in section [{section}]"));
        match section {
            "run" => match key {
                "seed" => self.seed = parse_u64(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "params" => match key {
                "mu" => self.params.mu = parse_f64(section, key, value)?,
                "k" => self.params.k = parse_f64(section, key, value)?,
                "alpha" => self.params.alpha = parse_f64(section, key, value)?,
                "c" => self.params.c = parse_f64(section, key, value)?,
                "p" => self.params.p = parse_f64(section, key, value)?,
                "beta" => self.params.beta = parse_f64(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "sim" => match key {
                "window_end" => self.sim.window_end = parse_f64(section, key, value)?,
                "m0" => self.sim.m0 = parse_f64(section, key, value)?,
                "max_events" => self.sim.max_events = parse_usize(section, key, value)?,
                "n_catalogs" => self.sim.n_catalogs = parse_usize(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "prior" => match key {
                "mu" => self.prior.mu = parse_marginal(section, key, value)?,
                "k" => self.prior.k = parse_marginal(section, key, value)?,
                "alpha" => self.prior.alpha = parse_marginal(section, key, value)?,
                "c" => self.prior.c = parse_marginal(section, key, value)?,
                "p" => self.prior.p = parse_marginal(section, key, value)?,
                "subcritical" => self.prior.subcritical = parse_bool(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "mask" => {
                let slot = match key {
                    "mu" => 0,
                    "k" => 1,
                    "alpha" => 2,
                    "c" => 3,
                    "p" => 4,
                    _ => return Err(unknown_key()),
                };
                self.mask = match parse_mask_entry(section, key, value)? {
                    Some(v) => self.mask.fix(slot, v),
                    None => self.mask.release(slot),
                };
            }
            "summary" => match key {
                "ripley_windows" => self.summary.ripley_windows = parse_f64_list(section, key, value)?,
                "mag_thresholds" => self.summary.mag_thresholds = parse_f64_list(section, key, value)?,
                "anchored_windows" => {
                    self.summary.anchored_windows = parse_f64_list(section, key, value)?
                }
                "dt_quantiles" => self.summary.dt_quantiles = parse_f64_list(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "train" => match key {
                "n_components" => self.snpe.mdn.n_components = parse_usize(section, key, value)?,
                "hidden" => self.snpe.mdn.hidden = parse_usize_list(section, key, value)?,
                "learning_rate" => self.snpe.train.learning_rate = parse_f64(section, key, value)?,
                "batch_size" => self.snpe.train.batch_size = parse_usize(section, key, value)?,
                "max_epochs" => self.snpe.train.max_epochs = parse_usize(section, key, value)?,
                "patience" => self.snpe.train.patience = parse_usize(section, key, value)?,
                "val_fraction" => self.snpe.train.val_fraction = parse_f64(section, key, value)?,
                "momentum" => self.snpe.train.momentum = parse_f64(section, key, value)?,
                "weight_decay" => self.snpe.train.weight_decay = parse_f64(section, key, value)?,
                "max_lr_restarts" => {
                    self.snpe.train.max_lr_restarts = parse_usize(section, key, value)?
                }
                _ => return Err(unknown_key()),
            },
            "snpe" => match key {
                "n_rounds" => self.snpe.n_rounds = parse_usize(section, key, value)?,
                "sims_per_round" => self.snpe.sims_per_round = parse_usize(section, key, value)?,
                "proposal_quantile" => {
                    self.snpe.proposal_quantile = parse_f64(section, key, value)?
                }
                "quantile_draws" => self.snpe.quantile_draws = parse_usize(section, key, value)?,
                "max_failures_per_slot" => {
                    self.snpe.max_failures_per_slot = parse_usize(section, key, value)?
                }
                "final_draws" => self.snpe.final_draws = parse_usize(section, key, value)?,
                "support_cap" => self.snpe.support_cap = parse_usize(section, key, value)?,
                "importance_weighted" => {
                    self.snpe.importance_weighted = parse_bool(section, key, value)?
                }
                "clip_quantile" => self.snpe.clip_quantile = parse_f64(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "abc" => match key {
                "n_sims" => self.abc.n_sims = parse_usize(section, key, value)?,
                "epsilon" => self.abc.epsilon = parse_epsilon(section, key, value)?,
                "accept_fraction" => self.abc.accept_fraction = parse_f64(section, key, value)?,
                "pilot_sims" => self.abc.pilot_sims = parse_usize(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "mcmc" => match key {
                "n_samples" => self.mcmc.n_samples = parse_usize(section, key, value)?,
                "burn_in" => self.mcmc.burn_in = parse_usize(section, key, value)?,
                "thinning" => self.mcmc.thinning = parse_usize(section, key, value)?,
                "epsilon" => self.mcmc.epsilon = parse_epsilon(section, key, value)?,
                "accept_fraction" => self.mcmc.accept_fraction = parse_f64(section, key, value)?,
                "pilot_sims" => self.mcmc.pilot_sims = parse_usize(section, key, value)?,
                "step_scale" => self.mcmc.step_scale = parse_f64(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "gibbs" => match key {
                "n_samples" => self.gibbs.n_samples = parse_usize(section, key, value)?,
                "burn_in" => self.gibbs.burn_in = parse_usize(section, key, value)?,
                "thinning" => self.gibbs.thinning = parse_usize(section, key, value)?,
                "adaptation_window" => {
                    self.gibbs.adaptation_window = parse_usize(section, key, value)?
                }
                "initial_step" => {
                    let list = parse_f64_list(section, key, value)?;
                    if list.len() != 3 {
                        return Err(bad(section, key, value, "exactly 3 comma-separated numbers"));
                    }
                    self.gibbs.initial_step = [list[0], list[1], list[2]];
                }
                _ => return Err(unknown_key()),
            },
            "diagnostics" => match key {
                "c2st_hidden" => self.diagnostics.c2st.hidden = parse_usize(section, key, value)?,
                "c2st_folds" => self.diagnostics.c2st.folds = parse_usize(section, key, value)?,
                "c2st_epochs" => self.diagnostics.c2st.epochs = parse_usize(section, key, value)?,
                "c2st_batch_size" => {
                    self.diagnostics.c2st.batch_size = parse_usize(section, key, value)?
                }
                "c2st_learning_rate" => {
                    self.diagnostics.c2st.learning_rate = parse_f64(section, key, value)?
                }
                "coverage_replicates" => {
                    self.diagnostics.coverage.n_replicates = parse_usize(section, key, value)?
                }
                "coverage_grid" => {
                    self.diagnostics.coverage.grid = parse_f64_list(section, key, value)?
                }
                _ => return Err(unknown_key()),
            },
            "bench" => match key {
                "t_grid" => self.bench.t_grid = parse_f64_list(section, key, value)?,
                "reps" => self.bench.reps = parse_usize(section, key, value)?,
                "snpe_round" => self.bench.snpe_round = parse_bool(section, key, value)?,
                "snpe_sims" => self.bench.snpe_sims = parse_usize(section, key, value)?,
                "cell_timeout" => self.bench.cell_timeout = parse_f64(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            "inference" => match key {
                "method" => self.inference.method = value.parse()?,
                "catalog" => {
                    self.inference.catalog =
                        if value.is_empty() { None } else { Some(value.to_string()) }
                }
                "allow_large" => self.inference.allow_large = parse_bool(section, key, value)?,
                "guard_events" => self.inference.guard_events = parse_usize(section, key, value)?,
                _ => return Err(unknown_key()),
            },
            _ => return Err(EtasError::Config(format!("unknown section [{section}]"))),
        }
        Ok(())
    }

    /// The fully resolved file: every key, current values, stable order.
    pub fn write_ini(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        writeln!(w, "[run]").unwrap();
        writeln!(w, "seed = {}", self.seed).unwrap();
        writeln!(w, "\n[params]").unwrap();
        writeln!(w, "mu = {}", self.params.mu).unwrap();
        writeln!(w, "k = {}", self.params.k).unwrap();
        writeln!(w, "alpha = {}", self.params.alpha).unwrap();
        writeln!(w, "c = {}", self.params.c).unwrap();
        writeln!(w, "p = {}", self.params.p).unwrap();
        writeln!(w, "beta = {}", self.params.beta).unwrap();
        writeln!(w, "\n[sim]").unwrap();
        writeln!(w, "window_end = {}", self.sim.window_end).unwrap();
        writeln!(w, "m0 = {}", self.sim.m0).unwrap();
        writeln!(w, "max_events = {}", self.sim.max_events).unwrap();
        writeln!(w, "n_catalogs = {}", self.sim.n_catalogs).unwrap();
        writeln!(w, "\n[prior]").unwrap();
        writeln!(w, "mu = {}", format_marginal(&self.prior.mu)).unwrap();
        writeln!(w, "k = {}", format_marginal(&self.prior.k)).unwrap();
        writeln!(w, "alpha = {}", format_marginal(&self.prior.alpha)).unwrap();
        writeln!(w, "c = {}", format_marginal(&self.prior.c)).unwrap();
        writeln!(w, "p = {}", format_marginal(&self.prior.p)).unwrap();
        writeln!(w, "subcritical = {}", self.prior.subcritical).unwrap();
        writeln!(w, "\n[mask]").unwrap();
        for (name, slot) in [("mu", 0), ("k", 1), ("alpha", 2), ("c", 3), ("p", 4)] {
            writeln!(w, "{name} = {}", format_mask_entry(self.mask.value(slot))).unwrap();
        }
        writeln!(w, "\n[summary]").unwrap();
        writeln!(w, "ripley_windows = {}", format_f64_list(&self.summary.ripley_windows)).unwrap();
        writeln!(w, "mag_thresholds = {}", format_f64_list(&self.summary.mag_thresholds)).unwrap();
        writeln!(w, "anchored_windows = {}", format_f64_list(&self.summary.anchored_windows))
            .unwrap();
        writeln!(w, "dt_quantiles = {}", format_f64_list(&self.summary.dt_quantiles)).unwrap();
        writeln!(w, "\n[train]").unwrap();
        writeln!(w, "n_components = {}", self.snpe.mdn.n_components).unwrap();
        let hidden: Vec<String> = self.snpe.mdn.hidden.iter().map(|h| h.to_string()).collect();
        writeln!(w, "hidden = {}", hidden.join(",")).unwrap();
        writeln!(w, "learning_rate = {}", self.snpe.train.learning_rate).unwrap();
        writeln!(w, "batch_size = {}", self.snpe.train.batch_size).unwrap();
        writeln!(w, "max_epochs = {}", self.snpe.train.max_epochs).unwrap();
        writeln!(w, "patience = {}", self.snpe.train.patience).unwrap();
        writeln!(w, "val_fraction = {}", self.snpe.train.val_fraction).unwrap();
        writeln!(w, "momentum = {}", self.snpe.train.momentum).unwrap();
        writeln!(w, "weight_decay = {}", self.snpe.train.weight_decay).unwrap();
        writeln!(w, "max_lr_restarts = {}", self.snpe.train.max_lr_restarts).unwrap();
        writeln!(w, "\n[snpe]").unwrap();
        writeln!(w, "n_rounds = {}", self.snpe.n_rounds).unwrap();
        writeln!(w, "sims_per_round = {}", self.snpe.sims_per_round).unwrap();
        writeln!(w, "proposal_quantile = {}", self.snpe.proposal_quantile).unwrap();
        writeln!(w, "quantile_draws = {}", self.snpe.quantile_draws).unwrap();
        writeln!(w, "max_failures_per_slot = {}", self.snpe.max_failures_per_slot).unwrap();
        writeln!(w, "final_draws = {}", self.snpe.final_draws).unwrap();
        writeln!(w, "support_cap = {}", self.snpe.support_cap).unwrap();
        writeln!(w, "importance_weighted = {}", self.snpe.importance_weighted).unwrap();
        writeln!(w, "clip_quantile = {}", self.snpe.clip_quantile).unwrap();
        writeln!(w, "\n[abc]").unwrap();
        writeln!(w, "n_sims = {}", self.abc.n_sims).unwrap();
        writeln!(w, "epsilon = {}", format_epsilon(self.abc.epsilon)).unwrap();
        writeln!(w, "accept_fraction = {}", self.abc.accept_fraction).unwrap();
        writeln!(w, "pilot_sims = {}", self.abc.pilot_sims).unwrap();
        writeln!(w, "\n[mcmc]").unwrap();
        writeln!(w, "n_samples = {}", self.mcmc.n_samples).unwrap();
        writeln!(w, "burn_in = {}", self.mcmc.burn_in).unwrap();
        writeln!(w, "thinning = {}", self.mcmc.thinning).unwrap();
        writeln!(w, "epsilon = {}", format_epsilon(self.mcmc.epsilon)).unwrap();
        writeln!(w, "accept_fraction = {}", self.mcmc.accept_fraction).unwrap();
        writeln!(w, "pilot_sims = {}", self.mcmc.pilot_sims).unwrap();
        writeln!(w, "step_scale = {}", self.mcmc.step_scale).unwrap();
        writeln!(w, "\n[gibbs]").unwrap();
        writeln!(w, "n_samples = {}", self.gibbs.n_samples).unwrap();
        writeln!(w, "burn_in = {}", self.gibbs.burn_in).unwrap();
        writeln!(w, "thinning = {}", self.gibbs.thinning).unwrap();
        writeln!(w, "adaptation_window = {}", self.gibbs.adaptation_window).unwrap();
        writeln!(w, "initial_step = {}", format_f64_list(&self.gibbs.initial_step)).unwrap();
        writeln!(w, "\n[diagnostics]").unwrap();
        writeln!(w, "c2st_hidden = {}", self.diagnostics.c2st.hidden).unwrap();
        writeln!(w, "c2st_folds = {}", self.diagnostics.c2st.folds).unwrap();
        writeln!(w, "c2st_epochs = {}", self.diagnostics.c2st.epochs).unwrap();
        writeln!(w, "c2st_batch_size = {}", self.diagnostics.c2st.batch_size).unwrap();
        writeln!(w, "c2st_learning_rate = {}", self.diagnostics.c2st.learning_rate).unwrap();
        writeln!(w, "coverage_replicates = {}", self.diagnostics.coverage.n_replicates).unwrap();
        writeln!(w, "coverage_grid = {}", format_f64_list(&self.diagnostics.coverage.grid))
            .unwrap();
        writeln!(w, "\n[bench]").unwrap();
        writeln!(w, "t_grid = {}", format_f64_list(&self.bench.t_grid)).unwrap();
        writeln!(w, "reps = {}", self.bench.reps).unwrap();
        writeln!(w, "snpe_round = {}", self.bench.snpe_round).unwrap();
        writeln!(w, "snpe_sims = {}", self.bench.snpe_sims).unwrap();
        writeln!(w, "cell_timeout = {}", self.bench.cell_timeout).unwrap();
        writeln!(w, "\n[inference]").unwrap();
        writeln!(w, "method = {}", self.inference.method).unwrap();
        writeln!(w, "catalog = {}", self.inference.catalog.as_deref().unwrap_or("")).unwrap();
        writeln!(w, "allow_large = {}", self.inference.allow_large).unwrap();
        writeln!(w, "guard_events = {}", self.inference.guard_events).unwrap();
        out
    }

    /// Validate every block (each has its own rules; this just chains them).
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        for marginal in [&self.prior.mu, &self.prior.k, &self.prior.alpha, &self.prior.c, &self.prior.p] {
            marginal.validate()?;
        }
        for slot in 0..5 {
            if let Some(v) = self.mask.value(slot) {
                if !v.is_finite() {
                    return Err(EtasError::Config(format!(
                        "mask value for coordinate {slot} must be finite, got {v}"
                    )));
                }
            }
        }
        if !(self.sim.window_end.is_finite() && self.sim.window_end > 0.0) {
            return Err(EtasError::Config(format!(
                "sim.window_end must be positive, got {}",
                self.sim.window_end
            )));
        }
        if !self.sim.m0.is_finite() {
            return Err(EtasError::Config(format!("sim.m0 must be finite, got {}", self.sim.m0)));
        }
        if self.sim.max_events == 0 || self.sim.n_catalogs == 0 {
            return Err(EtasError::Config(
                "sim.max_events and sim.n_catalogs must be positive".into(),
            ));
        }
        self.summary.validate()?;
        self.snpe.validate()?;
        self.abc.validate()?;
        self.mcmc.validate()?;
        self.gibbs.validate()?;
        self.bench.validate()?;
        if self.inference.guard_events == 0 {
            return Err(EtasError::Config("inference.guard_events must be positive".into()));
        }
        Ok(())
    }
}
