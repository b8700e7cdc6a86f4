//! Cycle-accurate simulation of the comparator / up-down counter / current
//! DAC loop driving the RC working electrode, plus trace metrics.
//!
//! One clock period per sample `n` (t = n Ts):
//!
//! 1. the counter register holds `code[n]`; the DAC sources
//!    `i_dac[n] = code[n] * I_LSB`, held constant over `[n Ts, (n+1) Ts)`;
//! 2. the comparator samples `V_RE[n]` and outputs `+1` if it is below
//!    `V_REF`, else `-1` (ties count down);
//! 3. the load voltage advances exactly over one period under `i_dac[n]`;
//! 4. the counter latches `code[n+1] = clamp(code[n] + s, 0, 2^bits - 1)`.
//!
//! The comparator decision reaches the DAC one clock later, which is what
//! makes the counter a `1/(z-1)` integrator in front of the load. The DAC is
//! an ideal current source: `V_RE` is not clamped to the supply.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::electrode::ElectrodeLoad;
use crate::error::{Error, Result};
use crate::linear::LoopConfig;

/// Minimum number of oscillation periods for a valid limit-cycle measurement.
pub const MIN_PERIODS: usize = 8;

/// Default fraction of a trace discarded as start-up transient.
pub const DEFAULT_DISCARD_FRACTION: f64 = 0.5;

/// Half-width of the settling band, as a fraction of `V_REF`.
pub const SETTLING_BAND: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub load: ElectrodeLoad,
    pub loop_cfg: LoopConfig,
    /// Simulated time in seconds.
    pub duration: f64,
    pub v_re_initial: f64,
    pub counter_initial: u32,
    /// Unused: the simulation is deterministic. Kept so run manifests can
    /// carry one.
    pub seed: u64,
}

impl SimConfig {
    /// Starts from 0 V with the counter at code 0.
    pub fn new(load: ElectrodeLoad, loop_cfg: LoopConfig, duration: f64) -> Result<Self> {
        let cfg = Self {
            load,
            loop_cfg,
            duration,
            v_re_initial: 0.0,
            counter_initial: 0,
            seed: 0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_initial(mut self, v_re: f64, code: u32) -> Result<Self> {
        self.v_re_initial = v_re;
        self.counter_initial = code;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid(
                "duration",
                format!("must be > 0, got {}", self.duration),
            ));
        }
        if !self.v_re_initial.is_finite() {
            return Err(Error::invalid("v_re_initial", "must be finite"));
        }
        let fsc = self.loop_cfg.full_scale_code();
        if self.counter_initial > fsc {
            return Err(Error::invalid(
                "counter_initial",
                format!("must be in 0..={fsc}, got {}", self.counter_initial),
            ));
        }
        Ok(())
    }

    /// Number of recorded samples, `ceil(duration * fs)`.
    pub fn n_samples(&self) -> usize {
        ((self.duration * self.loop_cfg.fs()).ceil() as usize).max(1)
    }

    /// True when the run is shorter than 10 load time constants, too short
    /// for a settled steady state.
    pub fn is_short(&self) -> bool {
        self.duration < 10.0 * self.load.tau()
    }
}

/// Sample times and `V_RE` of a simulated run.
pub trait Waveform {
    fn times(&self) -> &[f64];
    fn v_re(&self) -> &[f64];
}

/// Per-sample record of a relay-mode run; values are taken at the sampling
/// instant, before the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub sample_times: Vec<f64>,
    pub v_re: Vec<f64>,
    pub counter_code: Vec<u32>,
    pub i_dac: Vec<f64>,
}

impl Waveform for SimTrace {
    fn times(&self) -> &[f64] {
        &self.sample_times
    }

    fn v_re(&self) -> &[f64] {
        &self.v_re
    }
}

/// Linear-mode run: unity-gain comparator and a real-valued accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTrace {
    pub sample_times: Vec<f64>,
    pub v_re: Vec<f64>,
    pub accumulator: Vec<f64>,
    pub i_dac: Vec<f64>,
}

impl Waveform for LinearTrace {
    fn times(&self) -> &[f64] {
        &self.sample_times
    }

    fn v_re(&self) -> &[f64] {
        &self.v_re
    }
}

/// Loop state advanced one clock at a time.
#[derive(Debug, Clone)]
pub(crate) struct Regulator {
    v_re: f64,
    code: u32,
    full_scale: u32,
    i_lsb: f64,
    v_ref: f64,
    r_we: f64,
    decay: f64,
}

pub(crate) struct Sample {
    pub v_re: f64,
    pub code: u32,
    pub i_dac: f64,
}

impl Regulator {
    pub(crate) fn new(cfg: &SimConfig) -> Result<Self> {
        let sampled = cfg.load.sampled(cfg.loop_cfg.fs())?;
        Ok(Self {
            v_re: cfg.v_re_initial,
            code: cfg.counter_initial,
            full_scale: cfg.loop_cfg.full_scale_code(),
            i_lsb: cfg.loop_cfg.i_lsb(),
            v_ref: cfg.loop_cfg.v_ref(),
            r_we: cfg.load.r_we(),
            decay: sampled.pole(),
        })
    }

    pub(crate) fn step(&mut self) -> Sample {
        let out = Sample {
            v_re: self.v_re,
            code: self.code,
            i_dac: self.code as f64 * self.i_lsb,
        };
        let count_up = self.v_re < self.v_ref;
        let v_final = out.i_dac * self.r_we;
        self.v_re = v_final + (self.v_re - v_final) * self.decay;
        let next = if count_up {
            self.code.saturating_add(1).min(self.full_scale)
        } else {
            self.code.saturating_sub(1)
        };
        debug_assert!(next.abs_diff(self.code) <= 1 && next <= self.full_scale);
        self.code = next;
        out
    }
}

fn sample_times(n: usize, fs: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 / fs).collect()
}

/// Runs the relay-mode loop for `cfg.n_samples()` clocks.
pub fn simulate(cfg: &SimConfig) -> Result<SimTrace> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let mut reg = Regulator::new(cfg)?;
    let mut v_re = Vec::with_capacity(n);
    let mut counter_code = Vec::with_capacity(n);
    let mut i_dac = Vec::with_capacity(n);
    for _ in 0..n {
        let s = reg.step();
        v_re.push(s.v_re);
        counter_code.push(s.code);
        i_dac.push(s.i_dac);
    }
    Ok(SimTrace {
        sample_times: sample_times(n, cfg.loop_cfg.fs()),
        v_re,
        counter_code,
        i_dac,
    })
}

/// Runs the loop with the comparator replaced by unity gain (output
/// `V_REF - V_RE` in normalized LSBs) and the counter by an ideal
/// accumulator, still clamped to the DAC range.
///
/// Away from the clamp this is exactly the linear model
/// `G_OL / (1 + G_OL)` driven by a `V_REF` step.
pub fn simulate_linear(cfg: &SimConfig) -> Result<LinearTrace> {
    cfg.validate()?;
    let n = cfg.n_samples();
    let fs = cfg.loop_cfg.fs();
    let decay = cfg.load.sampled(fs)?.pole();
    let (i_lsb, v_ref, r_we) = (cfg.loop_cfg.i_lsb(), cfg.loop_cfg.v_ref(), cfg.load.r_we());
    let full_scale = cfg.loop_cfg.full_scale_code() as f64;

    let mut v = cfg.v_re_initial;
    let mut acc = cfg.counter_initial as f64;
    let mut trace = LinearTrace {
        sample_times: sample_times(n, fs),
        v_re: Vec::with_capacity(n),
        accumulator: Vec::with_capacity(n),
        i_dac: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let i = acc * i_lsb;
        trace.v_re.push(v);
        trace.accumulator.push(acc);
        trace.i_dac.push(i);
        let err = v_ref - v;
        let v_final = i * r_we;
        v = v_final + (v - v_final) * decay;
        acc = (acc + err).clamp(0.0, full_scale);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// `(max V_RE - V_REF) / V_REF`, floored at 0.
    pub overshoot_fraction: f64,
    /// Time from which `V_RE` stays inside `V_REF ± 2%` until the end of
    /// the trace.
    pub settling_time: Option<f64>,
    pub settled: bool,
}

pub fn step_metrics<W: Waveform + ?Sized>(trace: &W, v_ref: f64) -> Result<StepMetrics> {
    let (t, v) = (trace.times(), trace.v_re());
    if v.is_empty() {
        return Err(Error::EmptyInput("trace"));
    }
    if !(v_ref > 0.0 && v_ref.is_finite()) {
        return Err(Error::invalid("v_ref", format!("must be > 0, got {v_ref}")));
    }
    let peak = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let overshoot_fraction = ((peak - v_ref) / v_ref).max(0.0);

    let band = SETTLING_BAND * v_ref;
    let inside = |x: f64| (x - v_ref).abs() <= band;
    let settling_time = match v.iter().rposition(|&x| !inside(x)) {
        None => Some(t[0]),
        Some(last_out) if last_out + 1 < v.len() => Some(t[last_out + 1]),
        Some(_) => None,
    };
    Ok(StepMetrics {
        overshoot_fraction,
        settling_time,
        settled: settling_time.is_some(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleMeasurement {
    /// Half the peak-to-peak `V_RE` excursion in the analysed window, volts.
    pub amplitude: f64,
    /// `2 pi / mean period`, rad/s.
    pub omega: f64,
    pub n_periods: usize,
    /// Mean `V_RE` over the analysed window.
    pub mean: f64,
}

impl LimitCycleMeasurement {
    pub fn freq_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }
}

/// Measures the steady-state oscillation over the last
/// `1 - discard_fraction` of the trace.
///
/// Periods are taken between consecutive upward crossings of the window
/// mean, with crossing instants linearly interpolated between samples.
pub fn extract_limit_cycle<W: Waveform + ?Sized>(
    trace: &W,
    discard_fraction: f64,
) -> Result<LimitCycleMeasurement> {
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(Error::invalid(
            "discard_fraction",
            format!("must be in [0, 1), got {discard_fraction}"),
        ));
    }
    let (t, v) = (trace.times(), trace.v_re());
    if v.is_empty() {
        return Err(Error::EmptyInput("trace"));
    }
    let start = ((v.len() as f64 * discard_fraction).floor() as usize).min(v.len() - 1);
    let (t, v) = (&t[start..], &v[start..]);

    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let amplitude = 0.5 * (hi - lo);

    let crossings: Vec<f64> = v
        .windows(2)
        .zip(t.windows(2))
        .filter(|(w, _)| w[0] < mean && w[1] >= mean)
        .map(|(w, tt)| tt[0] + (mean - w[0]) / (w[1] - w[0]) * (tt[1] - tt[0]))
        .collect();
    let n_periods = crossings.len().saturating_sub(1);
    if n_periods < MIN_PERIODS {
        return Err(Error::InsufficientPeriods {
            found: n_periods,
            required: MIN_PERIODS,
            amplitude,
        });
    }
    let span = crossings[n_periods] - crossings[0];
    Ok(LimitCycleMeasurement {
        amplitude,
        omega: 2.0 * PI * n_periods as f64 / span,
        n_periods,
        mean,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    t_s: f64,
    #[serde(rename = "v_re_V")]
    v_re: f64,
    code: u32,
    #[serde(rename = "i_dac_A")]
    i_dac: f64,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.v_re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_re.is_empty()
    }

    /// Writes `t_s,v_re_V,code,i_dac_A` rows. Floats use the shortest
    /// decimal that round-trips.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for i in 0..self.len() {
            w.serialize(TraceRow {
                t_s: self.sample_times[i],
                v_re: self.v_re[i],
                code: self.counter_code[i],
                i_dac: self.i_dac[i],
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut trace = SimTrace {
            sample_times: vec![],
            v_re: vec![],
            counter_code: vec![],
            i_dac: vec![],
        };
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: TraceRow = row?;
            trace.sample_times.push(row.t_s);
            trace.v_re.push(row.v_re);
            trace.counter_code.push(row.code);
            trace.i_dac.push(row.i_dac);
        }
        Ok(trace)
    }
}

#[derive(Serialize)]
struct LinearTraceRow {
    t_s: f64,
    #[serde(rename = "v_re_V")]
    v_re: f64,
    code: f64,
    #[serde(rename = "i_dac_A")]
    i_dac: f64,
}

impl LinearTrace {
    pub fn len(&self) -> usize {
        self.v_re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_re.is_empty()
    }

    /// Same columns as [`SimTrace::write_csv`]; `code` holds the real-valued
    /// accumulator.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for i in 0..self.len() {
            w.serialize(LinearTraceRow {
                t_s: self.sample_times[i],
                v_re: self.v_re[i],
                code: self.accumulator[i],
                i_dac: self.i_dac[i],
            })?;
        }
        w.flush()?;
        Ok(())
    }
}
