//! Gap-versus-epsilon tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::log_log_slope;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub epsilon: f64,
    pub gap: f64,
    /// Monte Carlo standard error of the gap (0 for deterministic solves).
    pub std_error: f64,
    /// Discretisation tolerance of the reference solution (0 when exact).
    pub grid_tol: f64,
}

impl ReportRow {
    /// Half-width of the error bar.
    pub fn uncertainty(&self) -> f64 {
        self.std_error.max(self.grid_tol)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
    /// Gaps are nonincreasing as epsilon decreases.
    pub monotone_flag: bool,
    pub final_gap: f64,
}

impl ConvergenceReport {
    pub fn new(rows: Vec<ReportRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Usage("a convergence report needs at least one row".into()));
        }
        if rows.windows(2).any(|w| !(w[1].epsilon < w[0].epsilon)) {
            return Err(Error::Usage("report rows must have strictly descending epsilon".into()));
        }
        let monotone_flag = rows.windows(2).all(|w| w[1].gap <= w[0].gap);
        let final_gap = rows.last().unwrap().gap;
        Ok(Self {
            rows,
            monotone_flag,
            final_gap,
        })
    }

    /// Least-squares slope of `log gap` against `log epsilon`, when at least
    /// two rows have positive gaps.
    pub fn fitted_slope(&self) -> Option<f64> {
        let (e, g): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.gap > 0.0)
            .map(|r| (r.epsilon, r.gap))
            .unzip();
        (e.len() >= 2).then(|| log_log_slope(&e, &g))
    }

    /// `epsilon,gap,std_error,grid_tol`
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "epsilon,gap,std_error,grid_tol")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.epsilon, r.gap, r.std_error, r.grid_tol)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epsilon: f64, gap: f64) -> ReportRow {
        ReportRow {
            epsilon,
            gap,
            std_error: 0.0,
            grid_tol: 0.0,
        }
    }

    #[test]
    fn flags_and_slope() {
        let r = ConvergenceReport::new(vec![row(1.0, 0.1), row(0.1, 0.01), row(0.01, 0.001)]).unwrap();
        assert!(r.monotone_flag);
        assert_eq!(r.final_gap, 0.001);
        assert!((r.fitted_slope().unwrap() - 1.0).abs() < 1e-12);
        let r = ConvergenceReport::new(vec![row(1.0, 0.1), row(0.1, 0.2)]).unwrap();
        assert!(!r.monotone_flag);
        assert!(ConvergenceReport::new(vec![row(1.0, 0.1)]).unwrap().fitted_slope().is_none());
    }

    #[test]
    fn rejects_empty_and_unordered() {
        assert!(ConvergenceReport::new(vec![]).is_err());
        assert!(ConvergenceReport::new(vec![row(0.1, 1.0), row(1.0, 1.0)]).is_err());
    }
}
