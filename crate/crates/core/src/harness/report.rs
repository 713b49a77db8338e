//! Convergence report and the pass/fail ledger of the check suite.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Errors at or below this value are treated as zero when fitting.
pub const DEGENERATE_ERROR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub t_end: f64,
    /// `None` when the sub-run failed.
    pub error: Option<f64>,
    pub clamped_mass_fraction: f64,
    pub wall_time: f64,
    pub steps: usize,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub config_hash: String,
    pub code_version: String,
    /// Sorted by `ε`, descending.
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log error` against `log ε`.
    pub fitted_order: Option<f64>,
    /// `C` in `error ≈ C ε^order`.
    pub fitted_constant: Option<f64>,
    /// Every error is at or below [`DEGENERATE_ERROR`], so no order is fitted.
    pub degenerate: bool,
    /// At least one row failed.
    pub partial: bool,
}

/// Least-squares fit of `log y = log C + p log x`; returns `(p, C)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let p = sxy / sxx;
    Some((p, (my - p * mx).exp()))
}

impl ConvergenceReport {
    pub fn new(config_hash: String, mut rows: Vec<ConvergenceRow>) -> Self {
        rows.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        let points: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.error.map(|e| (r.epsilon, e))).collect();
        let partial = rows.iter().any(|r| r.error.is_none());
        let degenerate = !points.is_empty() && points.iter().all(|p| p.1 <= DEGENERATE_ERROR);
        let fit = if degenerate || points.len() < 3 {
            None
        } else {
            fit_power_law(&points)
        };
        Self {
            config_hash,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            rows,
            fitted_order: fit.map(|f| f.0),
            fitted_constant: fit.map(|f| f.1),
            degenerate,
            partial,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "epsilon",
            "t_end",
            "error",
            "clamped_mass_fraction",
            "wall_time",
            "steps",
            "mass_drift",
            "energy_drift",
            "failure",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.epsilon.to_string(),
                r.t_end.to_string(),
                r.error.map(|e| format!("{e:e}")).unwrap_or_default(),
                format!("{:e}", r.clamped_mass_fraction),
                format!("{:.3}", r.wall_time),
                r.steps.to_string(),
                format!("{:e}", r.mass_drift),
                format!("{:e}", r.energy_drift),
                r.failure.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Whitespace-separated `epsilon error fit` columns with a `#` header.
    pub fn write_plot_data(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# epsilon error fit")?;
        for r in &self.rows {
            if let Some(e) = r.error {
                let fit = match (self.fitted_order, self.fitted_constant) {
                    (Some(p), Some(c)) => c * r.epsilon.powf(p),
                    _ => f64::NAN,
                };
                writeln!(f, "{} {e:e} {fit:e}", r.epsilon)?;
            }
        }
        f.flush()?;
        Ok(())
    }
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `measured ≤ tolerance`.
    pub fn at_most(name: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
            detail: String::new(),
        }
    }

    /// Passes when `measured ≥ bound`.
    pub fn at_least(name: &str, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance: bound,
            passed: measured >= bound,
            detail: String::new(),
        }
    }

    pub fn holds(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            measured: if passed { 1.0 } else { 0.0 },
            tolerance: 1.0,
            passed,
            detail: detail.into(),
        }
    }

    pub fn failed(name: &str, error: &crate::Error) -> Self {
        Self::holds(name, false, error.to_string())
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    /// One `PASS`/`FAIL` line.
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!(
            "{verdict} {}: measured {:e}, bound {:e}",
            self.name, self.measured, self.tolerance
        );
        if !self.detail.is_empty() {
            s.push_str(" (");
            s.push_str(&self.detail);
            s.push(')');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteLedger {
    pub config_hash: String,
    pub code_version: String,
    pub checks: Vec<Check>,
}

impl SuiteLedger {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epsilon: f64, error: Option<f64>) -> ConvergenceRow {
        ConvergenceRow {
            epsilon,
            t_end: 1.0,
            error,
            clamped_mass_fraction: 0.0,
            wall_time: 0.0,
            steps: 1,
            mass_drift: 0.0,
            energy_drift: 0.0,
            failure: None,
        }
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&e| (e, 3.0 * e * e)).collect();
        let (p, c) = fit_power_law(&pts).unwrap();
        assert!((p - 2.0).abs() < 1e-12 && (c - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rows_sorted_and_degenerate_flagged() {
        let r = ConvergenceReport::new(
            "h".into(),
            vec![row(0.025, Some(1e-9)), row(0.1, Some(2e-9)), row(0.05, Some(1e-9))],
        );
        assert_eq!(r.rows.iter().map(|r| r.epsilon).collect::<Vec<_>>(), [0.1, 0.05, 0.025]);
        assert!(r.degenerate);
        assert!(r.fitted_order.is_none());
    }

    #[test]
    fn partial_report_keeps_failed_rows() {
        let r = ConvergenceReport::new(
            "h".into(),
            vec![row(0.1, Some(1.0)), row(0.05, None), row(0.025, Some(0.25))],
        );
        assert!(r.partial);
        assert_eq!(r.rows.len(), 3);
        assert!(r.fitted_order.is_none());
    }
}
