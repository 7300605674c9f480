//! Catalog files and raw-feed ingestion.
//!
//! The native catalog format is a small commented CSV,
//!
//!   # etas catalog
//!   # window_end = 10000
//!   # m0 = 3
//!   time,magnitude
//!   0.8416937,3.02
//!
//! Floats are written in shortest round-trip form, so write–read cycles are
//! lossless for the binary values. Reading is deliberately forgiving about
//! real-world files: events below the completeness threshold are dropped
//! (counted), out-of-order rows are sorted (warned), and tied times are
//! broken by nanoscale bumps (counted) so catalogs always satisfy the
//! strictly-increasing invariant. Timestamped files (RFC 3339 or common
//! `YYYY-MM-DD HH:MM:SS` forms) are converted to fractional days since the
//! first retained event.
//!
//! [`ingest_scedc`] reads the Southern California Data Center's plain-text
//! event listing (whitespace-separated, one event per line) or a CSV export,
//! applying a magnitude cut and an inclusive date range. Malformed rows are
//! skipped and counted, never fatal.

use crate::error::{EtasError, Result};
use crate::model::Catalog;
use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime};
use std::io::{BufRead, Write};
use std::path::Path;

/// Nanoscale separation inserted between tied event times, in the unit of
/// the time axis (days for ingested feeds).
const TIE_EPS: f64 = 1e-9;

const NANOS_PER_DAY: f64 = 86_400e9;

// ---------------------------------------------------------------------------
// native catalog format
// ---------------------------------------------------------------------------

/// Write `catalog` in the native format. `extra` key–value pairs are stored
/// as additional `# key = value` comment lines (provenance, seeds, notes);
/// readers ignore unknown keys.
pub fn write_catalog<W: Write>(catalog: &Catalog, extra: &[(String, String)], mut w: W) -> Result<()> {
    writeln!(w, "# etas catalog")?;
    writeln!(w, "# window_end = {}", catalog.window_end())?;
    writeln!(w, "# m0 = {}", catalog.m0())?;
    for (key, value) in extra {
        writeln!(w, "# {key} = {value}")?;
    }
    writeln!(w, "time,magnitude")?;
    for (t, m) in catalog.times().iter().zip(catalog.mags()) {
        writeln!(w, "{t},{m}")?;
    }
    Ok(())
}

/// Write `catalog` to `path` in the native format.
pub fn write_catalog_file<P: AsRef<Path>>(
    catalog: &Catalog,
    extra: &[(String, String)],
    path: P,
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_catalog(catalog, extra, std::io::BufWriter::new(file))
}

/// How the time column of a catalog file was interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeMode {
    /// Plain floats, used as-is.
    Numeric,
    /// Timestamps, converted to fractional days since the first retained event.
    Timestamp,
}

/// A parsed catalog plus everything the reader had to repair.
#[derive(Debug, Clone)]
pub struct CatalogReadReport {
    pub catalog: Catalog,
    pub time_mode: TimeMode,
    pub n_dropped_below_m0: usize,
    pub n_ties_broken: usize,
    pub warnings: Vec<String>,
}

/// Parse one timestamp in any accepted form.
fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.naive_utc());
    }
    for format in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(text, format) {
            return Some(dt);
        }
    }
    None
}

fn fractional_days(dt: NaiveDateTime, origin: NaiveDateTime) -> Result<f64> {
    let nanos = (dt - origin).num_nanoseconds().ok_or_else(|| {
        EtasError::Data(format!("timestamp span around {dt} overflows the nanosecond range"))
    })?;
    Ok(nanos as f64 / NANOS_PER_DAY)
}

/// Sort events by time if needed, then separate exact ties by [`TIE_EPS`]
/// bumps. Returns (sorted_flag, n_ties_broken).
fn repair_times(events: &mut [(f64, f64)]) -> (bool, usize) {
    let sorted = events.windows(2).all(|w| w[0].0 <= w[1].0);
    if !sorted {
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let mut ties = 0;
    for i in 1..events.len() {
        if events[i].0 <= events[i - 1].0 {
            events[i].0 = events[i - 1].0 + TIE_EPS;
            ties += 1;
        }
    }
    (!sorted, ties)
}

/// Read a catalog in the native format (see module docs for the repairs
/// applied along the way).
pub fn read_catalog<R: BufRead>(reader: R) -> Result<CatalogReadReport> {
    let mut window_end: Option<f64> = None;
    let mut m0: Option<f64> = None;
    let mut header_seen = false;
    let mut time_mode: Option<TimeMode> = None;
    let mut numeric: Vec<(f64, f64)> = Vec::new();
    let mut stamped: Vec<(NaiveDateTime, f64)> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim().to_ascii_lowercase().as_str() {
                    "window_end" => {
                        window_end = Some(value.trim().parse().map_err(|_| {
                            EtasError::Data(format!("bad window_end value {:?}", value.trim()))
                        })?);
                    }
                    "m0" => {
                        m0 = Some(value.trim().parse().map_err(|_| {
                            EtasError::Data(format!("bad m0 value {:?}", value.trim()))
                        })?);
                    }
                    _ => {} // unknown provenance keys are fine
                }
            }
            continue;
        }
        if !header_seen {
            if line.to_ascii_lowercase().replace(' ', "") == "time,magnitude" {
                header_seen = true;
                continue;
            }
            return Err(EtasError::Data(format!(
                "line {}: expected the 'time,magnitude' header, got {line:?}",
                lineno + 1
            )));
        }
        let (time_text, mag_text) = line.split_once(',').ok_or_else(|| {
            EtasError::Data(format!("line {}: expected 'time,magnitude', got {line:?}", lineno + 1))
        })?;
        let time_text = time_text.trim();
        let mag: f64 = mag_text.trim().parse().map_err(|_| {
            EtasError::Data(format!("line {}: bad magnitude {:?}", lineno + 1, mag_text.trim()))
        })?;

        let mode = match time_mode {
            Some(mode) => mode,
            None => {
                // the first data row fixes the interpretation for the file
                let mode = if time_text.parse::<f64>().is_ok() {
                    TimeMode::Numeric
                } else if parse_timestamp(time_text).is_some() {
                    TimeMode::Timestamp
                } else {
                    return Err(EtasError::Data(format!(
                        "line {}: time {:?} is neither a number nor a timestamp",
                        lineno + 1,
                        time_text
                    )));
                };
                time_mode = Some(mode);
                mode
            }
        };
        match mode {
            TimeMode::Numeric => {
                let t: f64 = time_text.parse().map_err(|_| {
                    EtasError::Data(format!(
                        "line {}: bad time {time_text:?} in a numeric-time file",
                        lineno + 1
                    ))
                })?;
                numeric.push((t, mag));
            }
            TimeMode::Timestamp => {
                let dt = parse_timestamp(time_text).ok_or_else(|| {
                    EtasError::Data(format!(
                        "line {}: bad timestamp {time_text:?} in a timestamped file",
                        lineno + 1
                    ))
                })?;
                stamped.push((dt, mag));
            }
        }
    }

    if !header_seen {
        return Err(EtasError::Data("missing the 'time,magnitude' header".into()));
    }
    let time_mode = time_mode
        .ok_or_else(|| EtasError::Data("catalog file contains no events".into()))?;

    let mut warnings = Vec::new();
    let mut n_dropped_below_m0 = 0usize;

    // magnitude floor: drop below it (if declared), else infer from the data
    let mut events: Vec<(f64, f64)> = match time_mode {
        TimeMode::Numeric => numeric,
        TimeMode::Timestamp => {
            stamped.sort_by_key(|(dt, _)| *dt);
            // drop below the floor before fixing the origin: the origin is
            // the first *retained* event
            let n_stamped = stamped.len();
            let kept: Vec<(NaiveDateTime, f64)> = match m0 {
                Some(m0) => stamped.iter().copied().filter(|(_, m)| *m >= m0).collect(),
                None => stamped,
            };
            n_dropped_below_m0 = n_stamped - kept.len();
            if kept.is_empty() {
                return Err(EtasError::Data("no events at or above m0".into()));
            }
            let origin = kept[0].0;
            let mut out = Vec::with_capacity(kept.len());
            for (dt, m) in kept {
                out.push((fractional_days(dt, origin)?, m));
            }
            out
        }
    };
    let m0 = match m0 {
        Some(m0) => m0,
        None => {
            let min_mag = events
                .iter()
                .map(|(_, m)| *m)
                .fold(f64::INFINITY, f64::min);
            warnings.push(format!("no m0 in the file; using the smallest magnitude {min_mag}"));
            min_mag
        }
    };
    if time_mode == TimeMode::Numeric {
        let n_before = events.len();
        events.retain(|(_, m)| *m >= m0);
        n_dropped_below_m0 = n_before - events.len();
    }
    if n_dropped_below_m0 > 0 {
        warnings.push(format!("dropped {n_dropped_below_m0} events below m0 = {m0}"));
    }
    if events.is_empty() {
        return Err(EtasError::Data("no events at or above m0".into()));
    }

    let (was_unsorted, n_ties_broken) = repair_times(&mut events);
    if was_unsorted {
        warnings.push("event times were not sorted; sorted them".into());
    }
    if n_ties_broken > 0 {
        warnings.push(format!("broke {n_ties_broken} tied event times by {TIE_EPS} bumps"));
    }

    let last = events.last().unwrap().0;
    let window_end = match window_end {
        Some(t) => t,
        None => {
            let t = last + 1.0;
            warnings.push(format!(
                "no window_end in the file; using last event + 1 time unit = {t}"
            ));
            t
        }
    };

    let (times, mags): (Vec<f64>, Vec<f64>) = events.into_iter().unzip();
    let catalog = Catalog::new(times, mags, window_end, m0)?;
    Ok(CatalogReadReport { catalog, time_mode, n_dropped_below_m0, n_ties_broken, warnings })
}

/// Read a catalog file in the native format.
pub fn read_catalog_file<P: AsRef<Path>>(path: P) -> Result<CatalogReadReport> {
    let file = std::fs::File::open(path)?;
    read_catalog(std::io::BufReader::new(file))
}

// ---------------------------------------------------------------------------
// SCEDC ingestion
// ---------------------------------------------------------------------------

/// Settings for [`ingest_scedc`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScedcOptions {
    /// Completeness cut; events with `m < m_cut` are dropped and the result
    /// catalog has `m0 = m_cut`.
    pub m_cut: f64,
    /// Inclusive first calendar date to keep, if any.
    pub date_from: Option<NaiveDate>,
    /// Inclusive last calendar date to keep, if any.
    pub date_to: Option<NaiveDate>,
}

impl Default for ScedcOptions {
    fn default() -> Self {
        ScedcOptions { m_cut: 2.5, date_from: None, date_to: None }
    }
}

/// An ingested catalog plus row-level accounting.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub catalog: Catalog,
    /// Data rows seen (comments and blank lines excluded).
    pub n_rows: usize,
    /// Rows that could not be parsed and were skipped.
    pub n_malformed: usize,
    pub n_below_cut: usize,
    pub n_outside_dates: usize,
    pub n_ties_broken: usize,
    pub warnings: Vec<String>,
}

fn parse_scedc_date(text: &str) -> Option<NaiveDate> {
    for format in ["%Y/%m/%d", "%Y-%m-%d"] {
        if let Ok(d) = NaiveDate::parse_from_str(text, format) {
            return Some(d);
        }
    }
    None
}

fn parse_scedc_time(text: &str) -> Option<NaiveTime> {
    NaiveTime::parse_from_str(text, "%H:%M:%S%.f").ok()
}

/// Parse one whitespace-format row: date, time, then the first numeric token
/// after the (alphabetic) event-type and location-quality flags is the
/// magnitude.
fn parse_scedc_plain_row(line: &str) -> Option<(NaiveDateTime, f64)> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() < 3 {
        return None;
    }
    let date = parse_scedc_date(tokens[0])?;
    let time = parse_scedc_time(tokens[1])?;
    let mag = tokens[2..].iter().find_map(|tok| tok.parse::<f64>().ok())?;
    Some((NaiveDateTime::new(date, time), mag))
}

/// Ingest a raw SCEDC-style event listing. Whitespace-separated rows
/// (`date time type quality magnitude ...`) and CSV exports with
/// `time`/`datetime` and `magnitude`/`mag` columns are both handled; the
/// first data row decides which.
pub fn ingest_scedc<R: BufRead>(reader: R, options: &ScedcOptions) -> Result<IngestReport> {
    if !options.m_cut.is_finite() {
        return Err(EtasError::Config(format!("m_cut must be finite, got {}", options.m_cut)));
    }
    if let (Some(from), Some(to)) = (options.date_from, options.date_to) {
        if from > to {
            return Err(EtasError::Config(format!("empty date range {from}..{to}")));
        }
    }

    let mut csv_columns: Option<(usize, usize)> = None; // (time, magnitude)
    let mut csv_mode: Option<bool> = None;
    let mut n_rows = 0usize;
    let mut n_malformed = 0usize;
    let mut malformed_samples: Vec<String> = Vec::new();
    let mut events: Vec<(NaiveDateTime, f64)> = Vec::new();

    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let is_csv = *csv_mode.get_or_insert_with(|| line.contains(','));
        if is_csv && csv_columns.is_none() {
            // first CSV line is the header; locate the two columns we need
            let headers: Vec<String> =
                line.split(',').map(|h| h.trim().to_ascii_lowercase()).collect();
            let time_col = headers
                .iter()
                .position(|h| h == "time" || h == "datetime" || h == "date_time" || h == "origin_time");
            let mag_col = headers.iter().position(|h| h == "magnitude" || h == "mag");
            match (time_col, mag_col) {
                (Some(t), Some(m)) => csv_columns = Some((t, m)),
                _ => {
                    return Err(EtasError::Data(format!(
                        "CSV header must name time/datetime and magnitude/mag columns, got {line:?}"
                    )));
                }
            }
            continue;
        }
        n_rows += 1;
        let parsed: Option<(NaiveDateTime, f64)> = if is_csv {
            let (time_col, mag_col) = csv_columns.unwrap();
            let fields: Vec<&str> = line.split(',').collect();
            match (fields.get(time_col), fields.get(mag_col)) {
                (Some(t), Some(m)) => match (parse_timestamp(t.trim()), m.trim().parse::<f64>()) {
                    (Some(dt), Ok(mag)) => Some((dt, mag)),
                    _ => None,
                },
                _ => None,
            }
        } else {
            parse_scedc_plain_row(line)
        };
        match parsed {
            Some(event) => events.push(event),
            None => {
                n_malformed += 1;
                if malformed_samples.len() < 3 {
                    malformed_samples.push(format!("skipped malformed row {line:?}"));
                }
            }
        }
    }

    let mut warnings = malformed_samples;
    if n_malformed > 3 {
        warnings.push(format!("{n_malformed} malformed rows skipped in total"));
    }

    let n_parsed = events.len();
    events.retain(|(dt, _)| {
        let date = dt.date();
        options.date_from.is_none_or(|from| date >= from)
            && options.date_to.is_none_or(|to| date <= to)
    });
    let n_outside_dates = n_parsed - events.len();
    let n_in_dates = events.len();
    events.retain(|(_, m)| *m >= options.m_cut);
    let n_below_cut = n_in_dates - events.len();

    if events.is_empty() {
        return Err(EtasError::Data(
            "no events survived the magnitude cut and date filter".into(),
        ));
    }

    let sorted = events.windows(2).all(|w| w[0].0 <= w[1].0);
    if !sorted {
        events.sort_by_key(|(dt, _)| *dt);
        warnings.push("source rows were not in time order; sorted them".into());
    }

    let origin = events[0].0;
    let mut rows: Vec<(f64, f64)> = Vec::with_capacity(events.len());
    for (dt, m) in &events {
        rows.push((fractional_days(*dt, origin)?, *m));
    }
    let (_, n_ties_broken) = repair_times(&mut rows);
    if n_ties_broken > 0 {
        warnings.push(format!("broke {n_ties_broken} tied event times by {TIE_EPS}-day bumps"));
    }

    let window_end = rows.last().unwrap().0 + 1.0;
    let (times, mags): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let catalog = Catalog::new(times, mags, window_end, options.m_cut)?;
    Ok(IngestReport {
        catalog,
        n_rows,
        n_malformed,
        n_below_cut,
        n_outside_dates,
        n_ties_broken,
        warnings,
    })
}

/// Ingest a raw feed from a file path.
pub fn ingest_scedc_file<P: AsRef<Path>>(path: P, options: &ScedcOptions) -> Result<IngestReport> {
    let file = std::fs::File::open(path)?;
    ingest_scedc(std::io::BufReader::new(file), options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use crate::simulate::{simulate_branching, SimConfig};

    fn sample_catalog() -> Catalog {
        let params = crate::model::EtasParams::new(0.2, 0.2, 1.5, 0.5, 2.0, 2.4).unwrap();
        let config =
            SimConfig { window_end: 300.0, max_events: 100_000, seed: 11, record_branching: false };
        let mut rng = derive_rng(11, &[]);
        simulate_branching(&params, &config, 3.0, &mut rng).unwrap().catalog
    }

    #[test]
    fn write_read_round_trip_is_bit_exact() {
        let catalog = sample_catalog();
        let mut buf = Vec::new();
        write_catalog(&catalog, &[("seed".into(), "11".into())], &mut buf).unwrap();
        let report = read_catalog(buf.as_slice()).unwrap();
        assert_eq!(report.time_mode, TimeMode::Numeric);
        assert_eq!(report.n_dropped_below_m0, 0);
        assert_eq!(report.n_ties_broken, 0);
        assert!(report.warnings.is_empty());
        let back = &report.catalog;
        assert_eq!(back.window_end().to_bits(), catalog.window_end().to_bits());
        assert_eq!(back.m0().to_bits(), catalog.m0().to_bits());
        assert_eq!(back.times().len(), catalog.times().len());
        for (a, b) in back.times().iter().zip(catalog.times()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in back.mags().iter().zip(catalog.mags()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn reader_repairs_unsorted_ties_and_subthreshold_rows() {
        let text = "\
# etas catalog
# window_end = 100
# m0 = 3.0
time,magnitude
5.0,3.5
2.0,4.0
2.0,3.1
9.0,2.4
";
        let report = read_catalog(text.as_bytes()).unwrap();
        assert_eq!(report.n_dropped_below_m0, 1);
        assert_eq!(report.n_ties_broken, 1);
        assert_eq!(report.catalog.len(), 3);
        assert_eq!(report.catalog.times(), &[2.0, 2.0 + 1e-9, 5.0]);
        assert!(report.warnings.iter().any(|w| w.contains("not sorted")));
        assert!(report.warnings.iter().any(|w| w.contains("dropped 1")));
        assert!(report.warnings.iter().any(|w| w.contains("tied")));
    }

    #[test]
    fn missing_metadata_fall_back_with_warnings() {
        let text = "time,magnitude\n1.0,4.0\n3.5,3.2\n";
        let report = read_catalog(text.as_bytes()).unwrap();
        assert_eq!(report.catalog.m0(), 3.2);
        assert_eq!(report.catalog.window_end(), 4.5);
        assert_eq!(report.warnings.len(), 2);
    }

    #[test]
    fn header_is_required_and_modes_do_not_mix() {
        assert!(matches!(
            read_catalog("1.0,4.0\n".as_bytes()),
            Err(EtasError::Data(_))
        ));
        let mixed = "time,magnitude\n1.0,4.0\n2001-01-01T00:00:00Z,4.0\n";
        assert!(matches!(read_catalog(mixed.as_bytes()), Err(EtasError::Data(_))));
        let mixed = "time,magnitude\n2001-01-01T00:00:00Z,4.0\n1.0,4.0\n";
        assert!(matches!(read_catalog(mixed.as_bytes()), Err(EtasError::Data(_))));
    }

    #[test]
    fn timestamps_become_days_since_first_retained_event() {
        let text = "\
# m0 = 3.0
time,magnitude
2001-01-01T00:00:00Z,2.0
2001-01-02T00:00:00Z,4.0
2001-01-02 12:00:00,3.5
2001-01-04T06:00:00.500Z,3.1
";
        let report = read_catalog(text.as_bytes()).unwrap();
        assert_eq!(report.time_mode, TimeMode::Timestamp);
        // the sub-threshold first row is dropped *before* the origin is fixed
        assert_eq!(report.n_dropped_below_m0, 1);
        let times = report.catalog.times();
        assert_eq!(times[0], 0.0);
        assert_eq!(times[1], 0.5);
        let expected = 2.25 + 0.5 / 86_400.0;
        assert!((times[2] - expected).abs() < 1e-12);
    }

    #[test]
    fn scedc_plain_rows_are_filtered_and_counted() {
        let text = "\
# a comment line
1980/12/31 23:59:59.00 eq ML 4.0 extra
1981/01/05 01:02:03.00 eq ML 3.1 extra
1981/01/05 01:02:03.00 eq ML 2.9 extra
1981/02/01 12:00:00.00 eq ML 2.0 extra
not a data row at all
2022/01/01 00:00:00.00 eq ML 5.0 extra
";
        let options = ScedcOptions {
            m_cut: 2.5,
            date_from: Some(NaiveDate::from_ymd_opt(1981, 1, 1).unwrap()),
            date_to: Some(NaiveDate::from_ymd_opt(2021, 12, 31).unwrap()),
        };
        let report = ingest_scedc(text.as_bytes(), &options).unwrap();
        assert_eq!(report.n_rows, 6);
        assert_eq!(report.n_malformed, 1);
        assert_eq!(report.n_outside_dates, 2);
        assert_eq!(report.n_below_cut, 1);
        assert_eq!(report.n_ties_broken, 1);
        assert_eq!(report.catalog.len(), 2);
        assert_eq!(report.catalog.m0(), 2.5);
        // both kept events share a timestamp: origin 0 plus one bump
        assert_eq!(report.catalog.times(), &[0.0, 1e-9]);
        assert!((report.catalog.window_end() - (1e-9 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn scedc_csv_mode_reads_named_columns() {
        let text = "\
id,time,depth,magnitude
1,2005-06-01T00:00:00Z,7.0,3.4
2,2005-06-02T06:00:00Z,4.2,2.1
3,2005-06-03 12:00:00,9.9,4.4
4,broken,9.9,4.4
";
        let report = ingest_scedc(text.as_bytes(), &ScedcOptions::default()).unwrap();
        assert_eq!(report.n_rows, 4);
        assert_eq!(report.n_malformed, 1);
        assert_eq!(report.n_below_cut, 1);
        assert_eq!(report.catalog.len(), 2);
        assert_eq!(report.catalog.times(), &[0.0, 2.5]);
        assert_eq!(report.catalog.mags(), &[3.4, 4.4]);
    }

    #[test]
    fn ingest_then_write_then_read_is_stable() {
        let text = "\
1990/03/14 06:00:00.00 eq ML 3.7
1990/03/14 06:00:00.00 eq ML 3.0
1990/03/20 18:30:00.00 eq ML 4.2
garbage row
";
        let report = ingest_scedc(text.as_bytes(), &ScedcOptions { m_cut: 2.5, ..Default::default() })
            .unwrap();
        let mut buf = Vec::new();
        write_catalog(&report.catalog, &[], &mut buf).unwrap();
        let back = read_catalog(buf.as_slice()).unwrap();
        assert!(back.warnings.is_empty());
        assert_eq!(back.catalog.times(), report.catalog.times());
        assert_eq!(back.catalog.mags(), report.catalog.mags());
        assert_eq!(back.catalog.window_end(), report.catalog.window_end());
        assert_eq!(back.catalog.m0(), report.catalog.m0());
    }

    #[test]
    fn empty_results_and_bad_ranges_error() {
        let text = "1990/03/14 06:00:00.00 eq ML 2.0\n";
        assert!(matches!(
            ingest_scedc(text.as_bytes(), &ScedcOptions::default()),
            Err(EtasError::Data(_))
        ));
        let bad = ScedcOptions {
            date_from: Some(NaiveDate::from_ymd_opt(2000, 1, 1).unwrap()),
            date_to: Some(NaiveDate::from_ymd_opt(1990, 1, 1).unwrap()),
            ..Default::default()
        };
        assert!(matches!(
            ingest_scedc(text.as_bytes(), &bad),
            Err(EtasError::Config(_))
        ));
    }
}
