use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use potloop::{
    bode_grid, closed_loop_roots, default_r_sweep, format_table, freq_response, gain_grid,
    locus_sweep, open_loop_tf, phase_margin, predict_limit_cycle, reference_conditions,
    run_comparison, simulate as run_sim, simulate_linear, stability_check, step_metrics,
    table_report, write_comparison_csv, write_response_csv, write_table_csv, ElectrodeLoad,
    LoopConfig, PmBand, RowStatus, SimConfig, TableRow,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{Report, RunManifest, Sink};
use crate::si::parse_si;

#[derive(Debug, Clone, Args, Serialize)]
pub struct LoadArgs {
    /// Electrode resistance R_WE, ohms.
    #[arg(long, value_parser = parse_si)]
    pub r_we: f64,
    /// Electrode capacitance C_WE, farads.
    #[arg(long, value_parser = parse_si)]
    pub c_we: f64,
}

impl LoadArgs {
    fn build(&self) -> potloop::Result<ElectrodeLoad> {
        ElectrodeLoad::new(self.r_we, self.c_we)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LoopArgs {
    /// DAC LSB current, amperes.
    #[arg(long, value_parser = parse_si, default_value = "10n")]
    pub i_lsb: f64,
    /// DAC and counter width.
    #[arg(long, default_value_t = 10)]
    pub bits: u32,
    /// Reference voltage, volts.
    #[arg(long, value_parser = parse_si, default_value = "0.6")]
    pub v_ref: f64,
    /// Supply voltage, volts.
    #[arg(long, value_parser = parse_si, default_value = "1.2")]
    pub v_dd: f64,
}

impl LoopArgs {
    fn build(&self, fs: f64) -> potloop::Result<LoopConfig> {
        LoopConfig::new(self.i_lsb, fs, self.bits, self.v_ref, self.v_dd)
    }
}

fn to_params<T: Serialize>(args: &T) -> Result<Value> {
    Ok(serde_json::to_value(args)?)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> potloop::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct BodeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub load: LoadArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loop_args: LoopArgs,
    /// Sampling frequency, Hz. Repeat for one curve per value.
    #[arg(long = "fs", value_parser = parse_si, required = true)]
    pub fs: Vec<f64>,
    /// Lowest frequency, Hz (default fs * 1e-6).
    #[arg(long, value_parser = parse_si)]
    pub f_min: Option<f64>,
    /// Highest frequency, Hz (default 0.499 fs).
    #[arg(long, value_parser = parse_si)]
    pub f_max: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub points_per_decade: usize,
    /// Also write two-column `<PREFIX>_fs<fs>Hz_mag.dat` and `_phase.dat`
    /// files for plotting.
    #[arg(long, value_name = "PREFIX")]
    pub plot_data: Option<PathBuf>,
}

pub fn bode(a: &BodeArgs, sink: &Sink) -> Result<()> {
    let manifest = RunManifest::new("bode", to_params(a)?);
    let load = a.load.build()?;
    let mut curves = Vec::new();
    let mut report = Report::new(Value::Null, String::new());
    for &fs in &a.fs {
        let cfg = a.loop_args.build(fs)?;
        let tf = open_loop_tf(&load, &cfg);
        let grid = bode_grid(fs, a.f_min, a.f_max, a.points_per_decade)?;
        let points = freq_response(&tf, &grid)?;
        let label = format!("fs{fs}Hz");

        match phase_margin(&tf) {
            Ok(pm) => writeln!(
                report.text,
                "fs = {fs} Hz: {} points, PM = {:.4} deg at {:.6} Hz",
                points.len(),
                pm.pm_deg,
                pm.crossover_hz
            )?,
            Err(e) => writeln!(report.text, "fs = {fs} Hz: {} points, {e}", points.len())?,
        }
        if let Some(prefix) = &a.plot_data {
            let mut mag = String::new();
            let mut phase = String::new();
            for p in &points {
                writeln!(mag, "{} {}", p.freq_hz, p.magnitude_db)?;
                writeln!(phase, "{} {}", p.freq_hz, p.phase_deg)?;
            }
            for (kind, body) in [("mag", mag), ("phase", phase)] {
                let mut name = prefix.as_os_str().to_owned();
                name.push(format!("_{label}_{kind}.dat"));
                let path = PathBuf::from(name);
                fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
                sink.write_manifest_for(&path, &manifest)?;
            }
        }
        let csv = csv_bytes(|w| write_response_csv(&points, w))?;
        report = report.with_table(Some(label), csv);
        curves.push(json!({ "fs_hz": fs, "points": points }));
    }
    report.result = json!({ "curves": curves });
    sink.emit(&manifest, report)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct PmArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub load: LoadArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loop_args: LoopArgs,
    /// Sampling frequency, Hz.
    #[arg(long, value_parser = parse_si)]
    pub fs: f64,
}

pub fn pm(a: &PmArgs, sink: &Sink) -> Result<()> {
    let manifest = RunManifest::new("pm", to_params(a)?);
    let load = a.load.build()?;
    let cfg = a.loop_args.build(a.fs)?;
    let stability = stability_check(&load, &cfg);
    let pm = phase_margin(&open_loop_tf(&load, &cfg))?;
    let text = format!(
        "phase margin: {:.4} deg at {:.6} Hz\nK = {:.6e}, K1 = {:.6e}, gmR = {:.6e}, {}\n",
        pm.pm_deg,
        pm.crossover_hz,
        stability.k,
        stability.k1,
        stability.gm_r_product,
        if stability.stable {
            "stable"
        } else {
            "unstable"
        }
    );
    let result = json!({ "phase_margin": pm, "stability": stability });
    sink.emit(&manifest, Report::new(result, text))?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct RootsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub load: LoadArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loop_args: LoopArgs,
    /// Sampling frequency, Hz.
    #[arg(long, value_parser = parse_si)]
    pub fs: f64,
    /// Largest effective gain K' in the sweep (default twice the stability
    /// limit).
    #[arg(long, value_parser = parse_si)]
    pub k_max: Option<f64>,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
}

pub fn roots(a: &RootsArgs, sink: &Sink) -> Result<()> {
    let manifest = RunManifest::new("roots", to_params(a)?);
    let load = a.load.build()?;
    let cfg = a.loop_args.build(a.fs)?;
    let p = load.sampled(a.fs)?.pole();
    let sweep = locus_sweep(p, &gain_grid(p, a.k_max, a.points)?)?;
    let stability = stability_check(&load, &cfg);
    let operating = closed_loop_roots(p, stability.k);
    let text = format!(
        "p = {p:.9}, breakaway K' = {:.6e}, stability limit K1 = {:.6e}\n\
         operating point K = {:.6e}: r = {:.9} {:+.9}j, |r| = {:.9} ({:?})\n",
        sweep.breakaway_gain,
        sweep.stability_limit,
        stability.k,
        operating.r1.re,
        operating.r1.im,
        operating.spectral_radius(),
        operating.kind,
    );
    let csv = csv_bytes(|w| sweep.write_csv(w))?;
    let result = json!({ "sweep": sweep, "operating_point": operating });
    sink.emit(&manifest, Report::new(result, text).with_table(None, csv))?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub load: LoadArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loop_args: LoopArgs,
    /// Sampling frequency, Hz.
    #[arg(long, value_parser = parse_si)]
    pub fs: f64,
    /// Simulated time, seconds.
    #[arg(long, value_parser = parse_si)]
    pub duration: f64,
    /// Initial electrode voltage, volts.
    #[arg(long, value_parser = parse_si, default_value = "0")]
    pub v0: f64,
    /// Initial counter code.
    #[arg(long, default_value_t = 0)]
    pub code0: u32,
    /// Replace the comparator by unity gain and the counter by an ideal
    /// accumulator.
    #[arg(long)]
    pub linear: bool,
    /// Recorded in the manifest; the simulation is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn simulate(a: &SimulateArgs, sink: &Sink) -> Result<()> {
    let manifest = RunManifest::new("simulate", to_params(a)?);
    let load = a.load.build()?;
    let cfg = a.loop_args.build(a.fs)?;
    let mut sim = SimConfig::new(load, cfg, a.duration)?.with_initial(a.v0, a.code0)?;
    sim.seed = a.seed;
    if sim.is_short() {
        sink.warn(&format!(
            "duration {} s is shorter than 10 tau = {} s; the trace may not reach steady state",
            a.duration,
            10.0 * load.tau()
        ));
    }
    let (metrics, csv, trace) = if a.linear {
        let t = simulate_linear(&sim)?;
        let m = step_metrics(&t, cfg.v_ref())?;
        (m, csv_bytes(|w| t.write_csv(w))?, serde_json::to_value(&t)?)
    } else {
        let t = run_sim(&sim)?;
        let m = step_metrics(&t, cfg.v_ref())?;
        (m, csv_bytes(|w| t.write_csv(w))?, serde_json::to_value(&t)?)
    };
    let settling = match metrics.settling_time {
        Some(t) => format!("{t} s"),
        None => "not settled".into(),
    };
    let text = format!(
        "{} samples, overshoot {:.4}, settling {settling}\n",
        sim.n_samples(),
        metrics.overshoot_fraction
    );
    let result = json!({ "metrics": metrics, "trace": trace });
    sink.emit(&manifest, Report::new(result, text).with_table(None, csv))?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct LimitCycleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub load: LoadArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub loop_args: LoopArgs,
    /// Sampling frequency, Hz.
    #[arg(long, value_parser = parse_si)]
    pub fs: f64,
    /// Also simulate the loop and measure the limit cycle.
    #[arg(long)]
    pub measure: bool,
    /// Minimum simulated time for --measure, seconds.
    #[arg(long, value_parser = parse_si, default_value = "0")]
    pub duration: f64,
}

pub fn limitcycle(a: &LimitCycleArgs, sink: &Sink) -> Result<()> {
    let manifest = RunManifest::new("limitcycle", to_params(a)?);
    let load = a.load.build()?;
    let cfg = a.loop_args.build(a.fs)?;
    let pred = predict_limit_cycle(&load, &cfg)?;
    let mut text = format!(
        "predicted amplitude {:.6e} V, omega {:.6} rad/s (f = {:.6} Hz)\n",
        pred.amplitude,
        pred.omega,
        pred.freq_hz()
    );
    let mut result = json!({
        "prediction": {
            "amplitude_v": pred.amplitude,
            "omega_rad_s": pred.omega,
            "freq_hz": pred.freq_hz(),
            "root_at_boundary": pred.root_at_boundary,
        }
    });
    if a.measure {
        let report = run_comparison(&[load.r_we()], load.c_we(), &cfg, a.duration)?;
        let row = report.rows[0];
        match (row.measured_a, row.measured_omega) {
            (Some(am), Some(wm)) => writeln!(
                text,
                "measured amplitude {am:.6e} V, omega {wm:.6} rad/s; err_a = {:.4}, err_omega = {:.4}",
                row.err_a.unwrap_or(f64::NAN),
                row.err_omega.unwrap_or(f64::NAN)
            )?,
            _ => writeln!(text, "measurement failed: {:?}", row.status)?,
        }
        result["measurement"] = serde_json::to_value(row)?;
    }
    sink.emit(&manifest, Report::new(result, text))?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct OpcondArgs {
    /// Use the built-in reference conditions (10 nA LSB, 60 MOhm and
    /// 12 MOhm loads at three capacitances). Default when no load is given.
    #[arg(long, conflicts_with_all = ["r_we", "c_we", "i_meas"])]
    pub reference: bool,
    /// Electrode resistance R_WE, ohms.
    #[arg(long, value_parser = parse_si, requires = "c_we")]
    pub r_we: Option<f64>,
    /// Electrode capacitance C_WE, farads.
    #[arg(long, value_parser = parse_si, requires = "r_we")]
    pub c_we: Option<f64>,
    /// Nominal measured current, amperes (default V_REF / R_WE).
    #[arg(long, value_parser = parse_si, requires = "r_we")]
    pub i_meas: Option<f64>,
    /// Lower phase-margin bound, degrees. Reference rows carry their own.
    #[arg(long, default_value_t = 20.0)]
    pub pm_min: f64,
    /// Upper phase-margin bound, degrees.
    #[arg(long, default_value_t = 30.0)]
    pub pm_max: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub loop_args: LoopArgs,
}

pub fn opcond(a: &OpcondArgs, sink: &Sink) -> Result<()> {
    let band = PmBand::new(a.pm_min, a.pm_max)?;
    // The search sets fs itself; the value here is a placeholder.
    let cfg = a.loop_args.build(1e3)?;
    let rows = match (a.r_we, a.c_we) {
        (Some(r), Some(c)) => vec![match a.i_meas {
            Some(i) => TableRow::new(i, r, c),
            None => TableRow::at_reference(r, c, cfg.v_ref()),
        }],
        _ => reference_conditions(),
    };
    let mut params = to_params(a)?;
    params["rows"] = serde_json::to_value(&rows)?;
    let manifest = RunManifest::new("opcond", params);

    let entries = table_report(&rows, &cfg, band)?;
    let mut text = format_table(&entries);
    for e in entries.iter().filter(|e| !e.current_consistent) {
        writeln!(
            text,
            "note: {} A is not V_REF / R_WE for R_WE = {} ohm",
            e.row.i_meas, e.row.r_we
        )?;
    }
    let csv = csv_bytes(|w| write_table_csv(&entries, w))?;
    let records: Vec<_> = entries.iter().map(|e| e.record()).collect();
    let result = json!({ "rows": records });
    sink.emit(&manifest, Report::new(result, text).with_table(None, csv))?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
#[command(allow_negative_numbers = true)]
pub struct CompareArgs {
    /// Comma-separated electrode resistances, ohms. Default: ten values with
    /// gm R log-spaced from 0.05 to 0.8.
    #[arg(long, value_parser = parse_si, value_delimiter = ',')]
    pub r_we: Vec<f64>,
    /// Electrode capacitance C_WE, farads.
    #[arg(long, value_parser = parse_si, default_value = "10n")]
    pub c_we: f64,
    /// Sampling frequency, Hz.
    #[arg(long, value_parser = parse_si, default_value = "1k")]
    pub fs: f64,
    /// DAC LSB current, amperes.
    #[arg(long, value_parser = parse_si, default_value = "125p")]
    pub i_lsb: f64,
    #[arg(long, default_value_t = 10)]
    pub bits: u32,
    #[arg(long, value_parser = parse_si, default_value = "0.6")]
    pub v_ref: f64,
    #[arg(long, value_parser = parse_si, default_value = "1.2")]
    pub v_dd: f64,
    /// Minimum simulated time per point, seconds; extended as needed.
    #[arg(long, value_parser = parse_si, default_value = "10")]
    pub duration: f64,
}

pub fn compare(a: &CompareArgs, sink: &Sink) -> Result<()> {
    let cfg = LoopConfig::new(a.i_lsb, a.fs, a.bits, a.v_ref, a.v_dd)?;
    let r_values = if a.r_we.is_empty() {
        default_r_sweep(&cfg)
    } else {
        a.r_we.clone()
    };
    let mut params = to_params(a)?;
    params["r_we"] = serde_json::to_value(&r_values)?;
    let manifest = RunManifest::new("compare", params);

    let report = run_comparison(&r_values, a.c_we, &cfg, a.duration)?;
    let mut text = String::new();
    for row in &report.rows {
        match row.status {
            RowStatus::Valid => writeln!(
                text,
                "R = {:.4e} ohm (gmR = {:.4}): err_a = {:.4}, err_omega = {:.4}",
                row.r_we,
                row.gm_r,
                row.err_a.unwrap_or(f64::NAN),
                row.err_omega.unwrap_or(f64::NAN)
            )?,
            status => writeln!(
                text,
                "R = {:.4e} ohm (gmR = {:.4}): {status:?}",
                row.r_we, row.gm_r
            )?,
        }
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    writeln!(
        text,
        "max err_a = {}, max err_omega = {}, valid rows = {}/{}",
        fmt(report.summary.max_err_a),
        fmt(report.summary.max_err_omega),
        report.summary.n_valid_rows,
        report.rows.len()
    )?;
    let csv = csv_bytes(|w| write_comparison_csv(&report, w))?;
    let summary = serde_json::to_value(report.summary)?;
    let mut out = Report::new(serde_json::to_value(&report)?, text).with_table(None, csv);
    out.sidecar = Some(("summary", summary));
    sink.emit(&manifest, out)?;
    Ok(())
}
