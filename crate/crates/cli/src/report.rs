//! Summary statistics and CSV output.

use std::fs;
use std::path::Path;

use crate::error::{CliError, CliResult};

/// Count, mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { n, mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self { n, mean, std: var.sqrt() }
    }

    /// `n, m, sigma` cells.
    pub fn cells(&self) -> [String; 3] {
        [self.n.to_string(), num(self.mean), num(self.std)]
    }
}

/// Fixed six-decimal formatting used in every CSV.
pub fn num(v: f64) -> String {
    format!("{v:.6}")
}

pub fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

/// Renders a header and rows as CSV text.
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV is UTF-8")
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::Failed(format!("cannot write {}: {e}", path.display())))
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    write_text(path, &to_csv(header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let s = Stats::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!((s.n, s.mean, s.std), (8, 5.0, 2.0));
        assert_eq!(Stats::of(&[3.0]).std, 0.0);
    }

    #[test]
    fn csv_quotes_when_needed() {
        let text = to_csv(&["a", "b"], &[vec!["x,y".into(), num(0.5)]]);
        assert_eq!(text, "a,b\n\"x,y\",0.500000\n");
    }
}
