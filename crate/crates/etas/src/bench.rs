//! Runtime-scaling benchmark harness.
//!
//! Catalogs are generated over a grid of window lengths `T`; each phase
//! (simulation, summary evaluation, serial likelihood evaluation, and
//! optionally one sequential-inference round) is timed per size and a
//! log-log slope of runtime against event count is fitted,
//!
//!   ln t = a + slope * ln n.
//!
//! Expected slopes at desk scale: ~1 for simulation and summaries
//! (`O(n log n)` with small logs), ~2 for the pairwise likelihood.
//!
//! Wall time is the median over repetitions, with an adaptive inner loop so
//! sub-millisecond phases are still resolved. Peak resident memory is read
//! from `/proc/self/status` (`VmHWM`); where the kernel allows it the
//! high-water mark is reset per cell, otherwise the cumulative process peak
//! is reported with a warning. A soft per-cell timeout skips the remaining
//! (larger) sizes of a phase and leaves a partial table.
//!
//! Catalog generation is seeded per size, so reruns reproduce event counts
//! exactly; timings naturally vary.

use crate::engine::{EtasParamSpace, EtasSimulator};
use crate::error::{EtasError, Result};
use crate::likelihood::log_likelihood_serial;
use crate::model::{Catalog, EtasParams};
use crate::prior::{FixedParamMask, PriorSpec};
use crate::rng::{derive_rng, derive_seed};
use crate::simulate::{simulate_branching, SimConfig};
use crate::snpe::{snpe, SnpeConfig};
use crate::summaries::{summarize, SummaryConfig};
use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

const TAG_CATALOG: u64 = 0xB0;
const TAG_SNPE: u64 = 0xB1;

/// Shortest timing an `Instant` measurement is trusted for; faster phases
/// are repeated in an inner loop and averaged.
const MIN_MEASURED_SECONDS: f64 = 0.005;

/// Settings for [`run_bench`].
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Window lengths to scale over.
    pub t_grid: Vec<f64>,
    /// Repetitions per cell; the median is reported.
    pub reps: usize,
    /// Also time one sequential neural posterior round per size.
    pub snpe_round: bool,
    /// Simulations in that round (kept small; the round is timed, not used).
    pub snpe_sims: usize,
    /// Soft per-cell timeout in seconds; on breach the phase skips larger
    /// sizes and the table is left partial.
    pub cell_timeout: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            t_grid: vec![1e3, 2e3, 4e3, 8e3, 16e3],
            reps: 3,
            snpe_round: true,
            snpe_sims: 500,
            cell_timeout: 120.0,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_grid.len() < 2 {
            return Err(EtasError::Config("t_grid needs at least 2 sizes".into()));
        }
        if self.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EtasError::Config("t_grid must be strictly increasing".into()));
        }
        if self.t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(EtasError::Config("t_grid entries must be positive".into()));
        }
        if self.reps == 0 {
            return Err(EtasError::Config("reps must be positive".into()));
        }
        if self.snpe_round && self.snpe_sims < 50 {
            return Err(EtasError::Config("snpe_sims must be at least 50".into()));
        }
        if !(self.cell_timeout.is_finite() && self.cell_timeout > 0.0) {
            return Err(EtasError::Config("cell_timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Benchmark phases, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Simulate,
    Summarize,
    Likelihood,
    SnpeRound,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Simulate => "simulate",
            Phase::Summarize => "summarize",
            Phase::Likelihood => "likelihood",
            Phase::SnpeRound => "snpe_round",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One timed (size, phase) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub phase: Phase,
    pub window_end: f64,
    pub n_events: usize,
    /// Median wall time over repetitions; `None` when skipped after an
    /// earlier timeout.
    pub seconds: Option<f64>,
    /// Peak resident set in MiB, when measurable.
    pub peak_rss_mib: Option<f64>,
    pub timed_out: bool,
}

/// Result of a [`run_bench`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
    /// Fitted log-log slope of seconds against event count, per phase with
    /// at least two timed sizes.
    pub slopes: Vec<(Phase, f64)>,
    pub warnings: Vec<String>,
}

impl BenchReport {
    pub fn slope(&self, phase: Phase) -> Option<f64> {
        self.slopes.iter().find(|(p, _)| *p == phase).map(|(_, s)| *s)
    }

    /// Plain-text scaling table, one row per window length.
    pub fn render_table(&self) -> String {
        let phases = self.phase_order();
        let mut out = String::new();
        let mut header = format!("{:>10} {:>9}", "T", "events");
        for p in &phases {
            write!(header, " {:>12}", format!("{p} [s]")).unwrap();
        }
        write!(header, " {:>10}", "rss [MiB]").unwrap();
        out.push_str(&header);
        out.push('\n');

        let mut sizes: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !sizes.contains(&c.window_end) {
                sizes.push(c.window_end);
            }
        }
        for t in &sizes {
            let any = self.cells.iter().find(|c| c.window_end == *t).unwrap();
            write!(out, "{:>10} {:>9}", t, any.n_events).unwrap();
            let mut rss: Option<f64> = None;
            for p in &phases {
                let cell = self.cells.iter().find(|c| c.window_end == *t && c.phase == *p);
                let text = match cell {
                    Some(c) => {
                        if let Some(m) = c.peak_rss_mib {
                            rss = Some(rss.map_or(m, |r: f64| r.max(m)));
                        }
                        match (c.seconds, c.timed_out) {
                            (Some(s), false) => format!("{s:.4}"),
                            (Some(s), true) => format!("{s:.1}!"),
                            (None, _) => "-".into(),
                        }
                    }
                    None => "-".into(),
                };
                write!(out, " {text:>12}").unwrap();
            }
            match rss {
                Some(m) => writeln!(out, " {m:>10.1}").unwrap(),
                None => writeln!(out, " {:>10}", "-").unwrap(),
            }
        }

        out.push_str("log-log slope vs events:");
        for p in &phases {
            match self.slope(*p) {
                Some(s) => write!(out, "  {p} {s:.2}").unwrap(),
                None => write!(out, "  {p} -").unwrap(),
            }
        }
        out.push('\n');
        out
    }

    /// Plot-ready CSV, one row per (size, phase) cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "window_end,n_events,phase,seconds,peak_rss_mib,timed_out")?;
        for c in &self.cells {
            let seconds = c.seconds.map_or(String::new(), |s| format!("{s}"));
            let rss = c.peak_rss_mib.map_or(String::new(), |m| format!("{m}"));
            writeln!(
                w,
                "{},{},{},{seconds},{rss},{}",
                c.window_end, c.n_events, c.phase, c.timed_out
            )?;
        }
        Ok(())
    }

    fn phase_order(&self) -> Vec<Phase> {
        let mut phases = Vec::new();
        for p in [Phase::Simulate, Phase::Summarize, Phase::Likelihood, Phase::SnpeRound] {
            if self.cells.iter().any(|c| c.phase == p) {
                phases.push(p);
            }
        }
        phases
    }
}

/// Peak resident set in MiB from `/proc/self/status`, if readable.
fn read_vm_hwm_mib() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmHWM:") {
            let kb: f64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb / 1024.0);
        }
    }
    None
}

/// Try to reset the peak-RSS high-water mark; returns whether it worked.
fn reset_vm_hwm() -> bool {
    std::fs::write("/proc/self/clear_refs", b"5").is_ok()
}

/// Time one closure: median over `reps` runs, with an adaptive inner loop
/// so cheap phases are still resolved. Returns `(median_seconds, total)`.
fn time_phase<F: FnMut() -> Result<()>>(mut f: F, reps: usize) -> Result<(f64, f64)> {
    let mut samples = Vec::with_capacity(reps);
    let mut total = 0.0;
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        let mut elapsed = start.elapsed().as_secs_f64();
        total += elapsed;
        if elapsed < MIN_MEASURED_SECONDS {
            let inner = (MIN_MEASURED_SECONDS / elapsed.max(1e-9)).ceil() as usize;
            let start = Instant::now();
            for _ in 0..inner {
                f()?;
            }
            elapsed = start.elapsed().as_secs_f64() / inner as f64;
            total += elapsed * inner as f64;
        }
        samples.push(elapsed);
    }
    samples.sort_by(f64::total_cmp);
    Ok((samples[samples.len() / 2], total))
}

/// Least-squares slope of `ln y` on `ln x`.
fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.max(1e-12).ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

/// Run the scaling benchmark at the given generating parameters.
pub fn run_bench(
    params: &EtasParams,
    m0: f64,
    prior: &PriorSpec,
    summary: &SummaryConfig,
    config: &BenchConfig,
) -> Result<BenchReport> {
    config.validate()?;
    params.validate()?;
    summary.validate()?;

    let mut warnings = Vec::new();
    let hwm_resets = reset_vm_hwm();
    if !hwm_resets {
        warnings.push(
            "kernel refused the peak-RSS reset; memory column is the cumulative \
             process high-water mark"
                .into(),
        );
    }

    // generate one catalog per size up front (also the simulate-phase work)
    let mut catalogs: Vec<(f64, u64, Catalog)> = Vec::with_capacity(config.t_grid.len());
    for (ti, &t) in config.t_grid.iter().enumerate() {
        let seed = derive_seed(config.seed, &[TAG_CATALOG, ti as u64]);
        let sim_config = SimConfig {
            window_end: t,
            max_events: 10_000_000,
            seed,
            record_branching: false,
        };
        let mut rng = derive_rng(seed, &[]);
        let catalog = simulate_branching(params, &sim_config, m0, &mut rng)?.catalog;
        catalogs.push((t, seed, catalog));
    }

    let mut phases = vec![Phase::Simulate, Phase::Summarize, Phase::Likelihood];
    if config.snpe_round {
        phases.push(Phase::SnpeRound);
    }

    let mut cells = Vec::new();
    for phase in &phases {
        let mut given_up = false;
        for (ti, (t, seed, catalog)) in catalogs.iter().enumerate() {
            if given_up {
                cells.push(BenchCell {
                    phase: *phase,
                    window_end: *t,
                    n_events: catalog.len(),
                    seconds: None,
                    peak_rss_mib: None,
                    timed_out: false,
                });
                continue;
            }
            if hwm_resets {
                reset_vm_hwm();
            }
            let timed: Result<(f64, f64)> = match phase {
                Phase::Simulate => {
                    let sim_config = SimConfig {
                        window_end: *t,
                        max_events: 10_000_000,
                        seed: *seed,
                        record_branching: false,
                    };
                    time_phase(
                        || {
                            let mut rng = derive_rng(*seed, &[]);
                            simulate_branching(params, &sim_config, m0, &mut rng)?;
                            Ok(())
                        },
                        config.reps,
                    )
                }
                Phase::Summarize => time_phase(
                    || {
                        summarize(catalog, summary)?;
                        Ok(())
                    },
                    config.reps,
                ),
                Phase::Likelihood => time_phase(
                    || {
                        log_likelihood_serial(params, catalog)?;
                        Ok(())
                    },
                    config.reps,
                ),
                Phase::SnpeRound => {
                    let space = EtasParamSpace::new(*prior, params.beta, FixedParamMask::none())?;
                    let sim = EtasSimulator::new(
                        FixedParamMask::none(),
                        params.beta,
                        m0,
                        *t,
                        10_000_000,
                        summary.clone(),
                    )?;
                    let s_obs = summarize(catalog, summary)?.values;
                    let snpe_config = SnpeConfig {
                        n_rounds: 1,
                        sims_per_round: config.snpe_sims,
                        final_draws: 100,
                        seed: derive_seed(config.seed, &[TAG_SNPE, ti as u64]),
                        ..SnpeConfig::default()
                    };
                    // one rep only: a full round is never sub-millisecond
                    time_phase(
                        || {
                            snpe(&space, &sim, &s_obs, &snpe_config)?;
                            Ok(())
                        },
                        1,
                    )
                }
            };
            let (median, total) = timed?;
            let timed_out = total > config.cell_timeout;
            if timed_out {
                warnings.push(format!(
                    "{phase} at T = {t} took {total:.1} s (> {} s); larger sizes skipped",
                    config.cell_timeout
                ));
                given_up = true;
            }
            cells.push(BenchCell {
                phase: *phase,
                window_end: *t,
                n_events: catalog.len(),
                seconds: Some(median),
                peak_rss_mib: read_vm_hwm_mib(),
                timed_out,
            });
        }
    }

    let mut slopes = Vec::new();
    for phase in &phases {
        let points: Vec<(f64, f64)> = cells
            .iter()
            .filter(|c| c.phase == *phase && c.seconds.is_some() && c.n_events > 0)
            .map(|c| (c.n_events as f64, c.seconds.unwrap()))
            .collect();
        if let Some(s) = log_log_slope(&points) {
            slopes.push((*phase, s));
        }
    }

    Ok(BenchReport { cells, slopes, warnings })
}
