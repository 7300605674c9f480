//! Posterior sample containers.
//!
//! Draws live in natural parameter space as an `n x 5` array with the fixed
//! column order `mu, k, alpha, c, p`. The CSV serialisation keeps metadata in
//! `#`-prefixed header comments and writes floats in shortest round-trip
//! form, so write-then-read reproduces every draw bit for bit.

use crate::error::{EtasError, Result};
use crate::model::PARAM_NAMES;
use crate::stats::quantile;
use ndarray::{Array2, ArrayView1};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    draws: Array2<f64>,
    pub method: String,
    pub seed: u64,
    /// Sequential-inference round that produced the draws, when applicable.
    pub round: Option<usize>,
}

impl PosteriorSamples {
    pub fn new(draws: Array2<f64>, method: impl Into<String>, seed: u64) -> Result<Self> {
        if draws.ncols() != PARAM_NAMES.len() {
            return Err(EtasError::DimensionMismatch(format!(
                "expected {} parameter columns, got {}",
                PARAM_NAMES.len(),
                draws.ncols()
            )));
        }
        if draws.iter().any(|v| !v.is_finite()) {
            return Err(EtasError::Numerical("non-finite posterior draw".into()));
        }
        Ok(PosteriorSamples { draws, method: method.into(), seed, round: None })
    }

    pub fn from_rows(rows: &[[f64; 5]], method: impl Into<String>, seed: u64) -> Result<Self> {
        let mut draws = Array2::zeros((rows.len(), 5));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                draws[[i, j]] = v;
            }
        }
        Self::new(draws, method, seed)
    }

    pub fn with_round(mut self, round: usize) -> Self {
        self.round = Some(round);
        self
    }

    pub fn n(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.n() == 0
    }

    pub fn draws(&self) -> &Array2<f64> {
        &self.draws
    }

    pub fn column(&self, index: usize) -> ArrayView1<'_, f64> {
        self.draws.column(index)
    }

    pub fn mean(&self, index: usize) -> f64 {
        let col = self.column(index);
        col.sum() / col.len() as f64
    }

    pub fn quantile(&self, index: usize, q: f64) -> Result<f64> {
        let col: Vec<f64> = self.column(index).to_vec();
        quantile(&col, q)
    }

    /// Central credible interval at level `gamma` for one coordinate.
    pub fn equal_tailed_interval(&self, index: usize, gamma: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(EtasError::InvalidParams(format!("interval level {gamma} outside [0,1]")));
        }
        let tail = 0.5 * (1.0 - gamma);
        Ok((self.quantile(index, tail)?, self.quantile(index, 1.0 - tail)?))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# method = {}", self.method)?;
        writeln!(w, "# seed = {}", self.seed)?;
        if let Some(r) = self.round {
            writeln!(w, "# round = {r}")?;
        }
        writeln!(w, "{}", PARAM_NAMES.join(","))?;
        for row in self.draws.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn write_csv_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut method = String::from("unknown");
        let mut seed = 0u64;
        let mut round = None;
        let mut rows: Vec<[f64; 5]> = Vec::new();
        let mut saw_header = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((key, value)) = rest.split_once('=') {
                    match key.trim() {
                        "method" => method = value.trim().to_string(),
                        "seed" => {
                            seed = value.trim().parse().map_err(|_| {
                                EtasError::Data(format!("line {}: bad seed", lineno + 1))
                            })?
                        }
                        "round" => {
                            round = Some(value.trim().parse().map_err(|_| {
                                EtasError::Data(format!("line {}: bad round", lineno + 1))
                            })?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            if !saw_header {
                let expected = PARAM_NAMES.join(",");
                if line != expected {
                    return Err(EtasError::Data(format!(
                        "line {}: expected header '{expected}', got '{line}'",
                        lineno + 1
                    )));
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(EtasError::Data(format!(
                    "line {}: expected 5 fields, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let mut row = [0.0f64; 5];
            for (slot, field) in row.iter_mut().zip(&fields) {
                *slot = field.trim().parse().map_err(|_| {
                    EtasError::Data(format!("line {}: bad float '{field}'", lineno + 1))
                })?;
            }
            rows.push(row);
        }
        if !saw_header {
            return Err(EtasError::Data("missing parameter header row".into()));
        }
        let mut samples = Self::from_rows(&rows, method, seed)?;
        samples.round = round;
        Ok(samples)
    }

    pub fn read_csv_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn demo() -> PosteriorSamples {
        let rows = [
            [0.21, 0.19, 1.45, 0.52, 2.01],
            [0.2000000000000001, 0.2, 1.5, 0.5, 2.0],
            [1e-12, 3.5e4, 0.1, 0.9999999999999, 9.5],
        ];
        PosteriorSamples::from_rows(&rows, "gibbs", 42).unwrap().with_round(3)
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let s = demo();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = PosteriorSamples::read_csv(buf.as_slice()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn header_and_metadata_are_written() {
        let mut buf = Vec::new();
        demo().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# method = gibbs\n# seed = 42\n# round = 3\nmu,k,alpha,c,p\n"));
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        assert!(PosteriorSamples::read_csv("mu,k\n1,2\n".as_bytes()).is_err());
        assert!(PosteriorSamples::read_csv("".as_bytes()).is_err());
        assert!(
            PosteriorSamples::read_csv("mu,k,alpha,c,p\n1,2,3,nope,5\n".as_bytes()).is_err()
        );
        // non-finite draws are data errors, not silent NaNs
        assert!(PosteriorSamples::read_csv("mu,k,alpha,c,p\n1,2,3,NaN,5\n".as_bytes()).is_err());
    }

    #[test]
    fn summaries_of_columns() {
        let s = demo();
        assert_eq!(s.n(), 3);
        assert_relative_eq!(s.mean(1), (0.19 + 0.2 + 3.5e4) / 3.0);
        let (lo, hi) = s.equal_tailed_interval(0, 0.5).unwrap();
        assert!(lo < hi);
        assert!(s.quantile(4, 0.5).unwrap() > 2.0 - 1e-12);
    }
}
