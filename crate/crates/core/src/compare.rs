//! Describing-function predictions against the time-domain simulator,
//! swept over the electrode resistance.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::describing::predict_limit_cycle;
use crate::electrode::ElectrodeLoad;
use crate::error::{Error, Result};
use crate::linear::LoopConfig;
use crate::sim::{extract_limit_cycle, simulate, SimConfig, DEFAULT_DISCARD_FRACTION, MIN_PERIODS};

/// Transient allowance: the simulated run is at least this many load time
/// constants long.
pub const MIN_DURATION_TAUS: f64 = 20.0;

/// Predicted periods required inside the analysed (post-discard) window.
/// Twice [`MIN_PERIODS`] leaves room for a measured oscillation slower than
/// predicted.
pub const ANALYSED_PERIODS: f64 = 2.0 * MIN_PERIODS as f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RowStatus {
    Valid,
    /// `gm R >= 1`; no bounded limit cycle is predicted.
    UnstableRegime,
    /// The simulated trace had too few periods to measure.
    InsufficientPeriods {
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub r_we: f64,
    pub gm_r: f64,
    pub predicted_a: Option<f64>,
    pub measured_a: Option<f64>,
    pub predicted_omega: Option<f64>,
    pub measured_omega: Option<f64>,
    /// `|predicted - measured| / measured`.
    pub err_a: Option<f64>,
    pub err_omega: Option<f64>,
    pub n_periods: Option<usize>,
    pub sim_duration: Option<f64>,
    #[serde(flatten)]
    pub status: RowStatus,
}

impl ComparisonRow {
    pub fn is_valid(&self) -> bool {
        self.status == RowStatus::Valid
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub max_err_a: Option<f64>,
    pub max_err_omega: Option<f64>,
    pub n_valid_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub summary: ComparisonSummary,
}

pub fn relative_error(predicted: f64, measured: f64) -> f64 {
    (predicted - measured).abs() / measured
}

/// Ten log-spaced resistances with `gm R` from 0.05 to 0.8.
pub fn default_r_sweep(cfg: &LoopConfig) -> Vec<f64> {
    let (lo, hi) = (0.05f64.ln(), 0.8f64.ln());
    (0..10)
        .map(|i| (lo + (hi - lo) * i as f64 / 9.0).exp() / cfg.gm_lsb())
        .collect()
}

fn summarize(rows: &[ComparisonRow]) -> ComparisonSummary {
    let valid = rows.iter().filter(|r| r.is_valid());
    let max = |f: fn(&ComparisonRow) -> Option<f64>| valid.clone().filter_map(f).reduce(f64::max);
    ComparisonSummary {
        max_err_a: max(|r| r.err_a),
        max_err_omega: max(|r| r.err_omega),
        n_valid_rows: valid.count(),
    }
}

fn compare_one(r_we: f64, c_we: f64, cfg: &LoopConfig, sim_duration: f64) -> Result<ComparisonRow> {
    let load = ElectrodeLoad::new(r_we, c_we)?;
    let mut row = ComparisonRow {
        r_we,
        gm_r: cfg.gm_r(&load),
        predicted_a: None,
        measured_a: None,
        predicted_omega: None,
        measured_omega: None,
        err_a: None,
        err_omega: None,
        n_periods: None,
        sim_duration: None,
        status: RowStatus::Valid,
    };
    let pred = match predict_limit_cycle(&load, cfg) {
        Ok(p) => p,
        Err(Error::UnstableRegime { .. }) => {
            row.status = RowStatus::UnstableRegime;
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    row.predicted_a = Some(pred.amplitude);
    row.predicted_omega = Some(pred.omega);

    let needed = (MIN_DURATION_TAUS * load.tau())
        .max(ANALYSED_PERIODS * pred.period() / (1.0 - DEFAULT_DISCARD_FRACTION));
    let duration = sim_duration.max(needed);
    row.sim_duration = Some(duration);

    let trace = simulate(&SimConfig::new(load, *cfg, duration)?)?;
    match extract_limit_cycle(&trace, DEFAULT_DISCARD_FRACTION) {
        Ok(m) => {
            row.measured_a = Some(m.amplitude);
            row.measured_omega = Some(m.omega);
            row.n_periods = Some(m.n_periods);
            row.err_a = Some(relative_error(pred.amplitude, m.amplitude));
            row.err_omega = Some(relative_error(pred.omega, m.omega));
        }
        Err(Error::InsufficientPeriods {
            found, amplitude, ..
        }) => {
            row.measured_a = Some(amplitude);
            row.n_periods = Some(found);
            row.status = RowStatus::InsufficientPeriods { found };
        }
        Err(e) => return Err(e),
    }
    Ok(row)
}

/// Predicts and simulates the limit cycle for every resistance. Rows come
/// back sorted by resistance; rows outside the stable regime or without a
/// measurable oscillation are flagged rather than failing the sweep.
///
/// `sim_duration` is a lower bound: each run is extended to cover
/// [`MIN_DURATION_TAUS`] time constants and [`ANALYSED_PERIODS`] predicted
/// periods after the discarded transient.
pub fn run_comparison(
    r_values: &[f64],
    c_we: f64,
    cfg: &LoopConfig,
    sim_duration: f64,
) -> Result<ComparisonReport> {
    if r_values.is_empty() {
        return Err(Error::EmptyInput("resistance sweep"));
    }
    let mut sorted = r_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rows = sorted
        .par_iter()
        .map(|&r| compare_one(r, c_we, cfg, sim_duration))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&rows);
    Ok(ComparisonReport { rows, summary })
}

pub const COMPARISON_CSV_HEADER: [&str; 7] = [
    "r_we_ohm",
    "a_pred_V",
    "a_meas_V",
    "f_pred_Hz",
    "f_meas_Hz",
    "err_a",
    "err_f",
];

/// CSV with the columns of [`COMPARISON_CSV_HEADER`]; unavailable values
/// are left empty.
pub fn write_comparison_csv<W: Write>(report: &ComparisonReport, writer: W) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let hz = |w: Option<f64>| w.map(|w| w / (2.0 * PI));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COMPARISON_CSV_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.r_we.to_string(),
            opt(r.predicted_a),
            opt(r.measured_a),
            opt(hz(r.predicted_omega)),
            opt(hz(r.measured_omega)),
            opt(r.err_a),
            opt(r.err_omega),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> LoopConfig {
        LoopConfig::new(125e-12, 1e3, 10, 0.6, 1.2).unwrap()
    }

    #[test]
    fn default_sweep_spans_requested_gm_r() {
        let c = cfg();
        let rs = default_r_sweep(&c);
        assert_eq!(rs.len(), 10);
        assert!((rs[0] * c.gm_lsb() - 0.05).abs() < 1e-12);
        assert!((rs[9] * c.gm_lsb() - 0.8).abs() < 1e-12);
        assert!(rs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn unstable_row_is_isolated() {
        // 50 MOhm: gm R = 6.25e-3. 10 GOhm: gm R = 1.25.
        let report = run_comparison(&[10e9, 50e6], 1e-9, &cfg(), 1.0).unwrap();
        assert_eq!(report.rows[0].r_we, 50e6);
        assert!(report.rows[0].is_valid());
        assert_eq!(report.rows[1].status, RowStatus::UnstableRegime);
        assert_eq!(report.summary.n_valid_rows, 1);
        assert_eq!(report.summary.max_err_a, report.rows[0].err_a);
    }

    #[test]
    fn duplicate_rows_are_identical() {
        let report = run_comparison(&[50e6, 50e6], 1e-9, &cfg(), 1.0).unwrap();
        assert_eq!(report.rows[0], report.rows[1]);
    }

    #[test]
    fn duration_is_extended() {
        let report = run_comparison(&[50e6], 1e-9, &cfg(), 1e-3).unwrap();
        let row = report.rows[0];
        assert!(row.sim_duration.unwrap() >= 20.0 * 0.05);
        assert!(row.n_periods.unwrap() >= MIN_PERIODS);
    }

    #[test]
    fn error_uses_measured_denominator() {
        assert_eq!(relative_error(1.2, 1.0), 0.19999999999999996);
        assert_eq!(relative_error(0.5, 1.0), 0.5);
    }

    #[test]
    fn csv_layout() {
        let report = run_comparison(&[50e6, 10e9], 1e-9, &cfg(), 1.0).unwrap();
        let mut buf = Vec::new();
        write_comparison_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], COMPARISON_CSV_HEADER.join(","));
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "10000000000,,,,,,");
    }

    /// Loads drawing 10 to 100 nA at 0.6 V keep the 10-bit counter inside
    /// its range with a 125 pA LSB.
    fn unsaturated_sweep() -> ComparisonReport {
        let r: Vec<f64> = [10e-9, 20e-9, 40e-9, 60e-9, 80e-9, 100e-9]
            .iter()
            .map(|i| 0.6 / i)
            .collect();
        run_comparison(&r, 10e-9, &cfg(), 10.0).unwrap()
    }

    #[test]
    fn unsaturated_regime_error_bounds() {
        let report = unsaturated_sweep();
        assert_eq!(report.summary.n_valid_rows, report.rows.len());
        for row in &report.rows {
            let (ea, ew) = (row.err_a.unwrap(), row.err_omega.unwrap());
            assert!(ea < 0.3, "R = {}: err_a = {ea}", row.r_we);
            assert!(ew < 0.2, "R = {}: err_omega = {ew}", row.r_we);
        }
    }

    #[test]
    fn prediction_overestimates_frequency_and_underestimates_amplitude() {
        for row in unsaturated_sweep().rows {
            assert!(row.predicted_omega.unwrap() > row.measured_omega.unwrap());
            assert!(row.predicted_a.unwrap() < row.measured_a.unwrap());
        }
    }

    #[test]
    fn summary_matches_rows() {
        let report = unsaturated_sweep();
        let max_a = report
            .rows
            .iter()
            .filter_map(|r| r.err_a)
            .fold(0.0, f64::max);
        let max_w = report
            .rows
            .iter()
            .filter_map(|r| r.err_omega)
            .fold(0.0, f64::max);
        assert_eq!(report.summary.max_err_a, Some(max_a));
        assert_eq!(report.summary.max_err_omega, Some(max_w));
    }
}
