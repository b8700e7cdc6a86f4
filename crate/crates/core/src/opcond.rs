//! Sampling-frequency windows that keep the phase margin inside a band.
//!
//! Phase margin falls monotonically with `fs` once `gm R < 1`, so each edge
//! of the window is a one-dimensional root find on `log fs`.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::electrode::ElectrodeLoad;
use crate::error::{Error, Result};
use crate::frequency::phase_margin;
use crate::linear::{open_loop_tf, LoopConfig};

/// Search range for the sampling frequency, Hz.
pub const FS_SEARCH_RANGE: (f64, f64) = (1e-3, 1e9);

/// Relative tolerance of the `fs` root find.
pub const FS_REL_TOL: f64 = 1e-10;

/// Allowed mismatch between a row's stated current and `V_REF / R_WE`.
pub const CURRENT_CONSISTENCY_TOL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmBand {
    pub pm_min: f64,
    pub pm_max: f64,
}

impl PmBand {
    pub fn new(pm_min: f64, pm_max: f64) -> Result<Self> {
        if !(0.0 < pm_min && pm_min < pm_max && pm_max < 90.0) {
            return Err(Error::invalid(
                "pm band",
                format!("need 0 < pm_min < pm_max < 90, got [{pm_min}, {pm_max}]"),
            ));
        }
        Ok(Self { pm_min, pm_max })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingWindow {
    pub load: ElectrodeLoad,
    /// `V_REF / R_WE`, amperes.
    pub measured_current: f64,
    pub fs_low: f64,
    pub fs_high: f64,
    /// Phase margin at `fs_low` (the larger one).
    pub pm_at_fs_low: f64,
    pub pm_at_fs_high: f64,
}

/// Phase margin of the linear loop at sampling rate `fs`.
pub fn pm_at_fs(load: &ElectrodeLoad, cfg_base: &LoopConfig, fs: f64) -> Result<f64> {
    let cfg = cfg_base.with_fs(fs)?;
    Ok(phase_margin(&open_loop_tf(load, &cfg))?.pm_deg)
}

/// Sampling frequency at which the phase margin equals `target_deg`.
pub fn fs_for_pm(load: &ElectrodeLoad, cfg_base: &LoopConfig, target_deg: f64) -> Result<f64> {
    let (fs_min, fs_max) = FS_SEARCH_RANGE;
    let unreachable = || Error::TargetUnreachable {
        target_deg,
        fs_min,
        fs_max,
    };
    let excess = |ln_fs: f64| pm_at_fs(load, cfg_base, ln_fs.exp()).map(|pm| pm - target_deg);

    let (mut lo, mut hi) = (fs_min.ln(), fs_max.ln());
    if excess(lo)? < 0.0 || excess(hi)? > 0.0 {
        return Err(unreachable());
    }
    // Width in ln(fs) equals the relative width in fs.
    while hi - lo > FS_REL_TOL {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// The `fs` window over which the phase margin stays within
/// `[pm_min, pm_max]`.
pub fn fs_range_for_pm(
    load: &ElectrodeLoad,
    cfg_base: &LoopConfig,
    pm_min: f64,
    pm_max: f64,
) -> Result<OperatingWindow> {
    PmBand::new(pm_min, pm_max)?;
    let gm_r = cfg_base.gm_r(load);
    if gm_r >= 1.0 {
        return Err(Error::UnstableRegime { gm_r });
    }
    let fs_low = fs_for_pm(load, cfg_base, pm_max)?;
    let fs_high = fs_for_pm(load, cfg_base, pm_min)?;
    Ok(OperatingWindow {
        load: *load,
        measured_current: cfg_base.v_ref() / load.r_we(),
        fs_low,
        fs_high,
        pm_at_fs_low: pm_at_fs(load, cfg_base, fs_low)?,
        pm_at_fs_high: pm_at_fs(load, cfg_base, fs_high)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    /// Nominal measured current, amperes.
    pub i_meas: f64,
    pub r_we: f64,
    pub c_we: f64,
    /// Overrides the report-wide band for this row.
    pub band: Option<PmBand>,
}

impl TableRow {
    pub fn new(i_meas: f64, r_we: f64, c_we: f64) -> Self {
        Self {
            i_meas,
            r_we,
            c_we,
            band: None,
        }
    }

    /// Row whose nominal current is the one the loop settles to, `V_REF / R_WE`.
    pub fn at_reference(r_we: f64, c_we: f64, v_ref: f64) -> Self {
        Self::new(v_ref / r_we, r_we, c_we)
    }

    pub fn with_band(mut self, band: PmBand) -> Self {
        self.band = Some(band);
        self
    }
}

#[derive(Debug)]
pub struct TableEntry {
    pub row: TableRow,
    pub band: PmBand,
    /// False when `i_meas` differs from `V_REF / R_WE` by more than 5%.
    pub current_consistent: bool,
    pub window: Result<OperatingWindow>,
}

/// Serializable view of a [`TableEntry`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRecord {
    pub row: TableRow,
    pub band: PmBand,
    pub current_consistent: bool,
    pub window: Option<OperatingWindow>,
    pub error: Option<String>,
}

impl TableEntry {
    pub fn record(&self) -> TableRecord {
        TableRecord {
            row: self.row,
            band: self.band,
            current_consistent: self.current_consistent,
            window: self.window.as_ref().ok().copied(),
            error: self.window.as_ref().err().map(|e| e.to_string()),
        }
    }
}

/// Recommended operating conditions for a 10 nA-LSB, 10-bit DAC at
/// `V_REF = 0.6 V`: 10 nA and 50 nA loads across three electrode
/// capacitances, each with the phase-margin band it was designed for.
pub fn reference_conditions() -> Vec<TableRow> {
    let low = PmBand {
        pm_min: 20.4,
        pm_max: 29.2,
    };
    let high = PmBand {
        pm_min: 20.8,
        pm_max: 31.3,
    };
    let mut rows = Vec::new();
    for c in [0.1e-9, 1e-9, 10e-9] {
        rows.push(TableRow::new(10e-9, 60e6, c).with_band(low));
    }
    for c in [0.1e-9, 1e-9, 10e-9] {
        rows.push(TableRow::new(50e-9, 12e6, c).with_band(high));
    }
    rows
}

/// One operating window per row. Rows are computed concurrently; failures
/// stay in their own entry.
pub fn table_report(
    rows: &[TableRow],
    cfg_base: &LoopConfig,
    band: PmBand,
) -> Result<Vec<TableEntry>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("table rows"));
    }
    Ok(rows
        .par_iter()
        .map(|row| {
            let band = row.band.unwrap_or(band);
            let expected = cfg_base.v_ref() / row.r_we;
            let current_consistent =
                ((row.i_meas - expected) / expected).abs() <= CURRENT_CONSISTENCY_TOL;
            let window = ElectrodeLoad::new(row.r_we, row.c_we)
                .and_then(|load| fs_range_for_pm(&load, cfg_base, band.pm_min, band.pm_max));
            TableEntry {
                row: *row,
                band,
                current_consistent,
                window,
            }
        })
        .collect())
}

pub const TABLE_CSV_HEADER: [&str; 7] = [
    "i_meas_nA",
    "r_we_Mohm",
    "c_we_nF",
    "fs_low_Hz",
    "fs_high_Hz",
    "pm_high_deg",
    "pm_low_deg",
];

fn table_fields(e: &TableEntry) -> [String; 7] {
    let mut out = [
        format!("{}", e.row.i_meas * 1e9),
        format!("{}", e.row.r_we * 1e-6),
        format!("{}", e.row.c_we * 1e9),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ];
    if let Ok(w) = &e.window {
        out[3] = format!("{}", w.fs_low);
        out[4] = format!("{}", w.fs_high);
        out[5] = format!("{}", w.pm_at_fs_low);
        out[6] = format!("{}", w.pm_at_fs_high);
    }
    out
}

/// CSV with the columns of [`TABLE_CSV_HEADER`]; failed rows keep their
/// inputs and leave the result columns empty.
pub fn write_table_csv<W: Write>(entries: &[TableEntry], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TABLE_CSV_HEADER)?;
    for e in entries {
        w.write_record(table_fields(e))?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned plain-text rendering of the report.
pub fn format_table(entries: &[TableEntry]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>9} {:>9} {:>7} {:>12} {:>12} {:>11} {:>10}",
        "I [nA]", "R [MOhm]", "C [nF]", "fs low [Hz]", "fs high [Hz]", "PM high", "PM low"
    );
    for e in entries {
        let _ = write!(
            s,
            "{:>9.3} {:>9.3} {:>7.3} ",
            e.row.i_meas * 1e9,
            e.row.r_we * 1e-6,
            e.row.c_we * 1e9
        );
        match &e.window {
            Ok(w) => {
                let _ = write!(
                    s,
                    "{:>12.4} {:>12.4} {:>11.2} {:>10.2}",
                    w.fs_low, w.fs_high, w.pm_at_fs_low, w.pm_at_fs_high
                );
            }
            Err(err) => {
                let _ = write!(s, "error: {err}");
            }
        }
        if !e.current_consistent {
            s.push_str("  (current != V_REF/R_WE)");
        }
        s.push('\n');
    }
    s
}
