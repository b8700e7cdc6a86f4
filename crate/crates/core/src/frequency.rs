//! Frequency response on the unit circle, gain crossover and phase margin.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tf::DiscreteRationalTF;

/// Grid density used to bracket the gain crossover before bisection.
pub const CROSSOVER_POINTS_PER_DECADE: usize = 128;

/// Lowest normalized frequency `f/fs` searched for a crossover.
const NU_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponsePoint {
    pub freq_hz: f64,
    pub magnitude_db: f64,
    /// Unwrapped phase in degrees.
    pub phase_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMargin {
    pub pm_deg: f64,
    pub crossover_hz: f64,
}

/// Maps a principal phase into (-360, 0], the start convention for unwrapping.
fn initial_phase(deg: f64) -> f64 {
    if deg > 0.0 {
        deg - 360.0
    } else {
        deg
    }
}

/// Picks the branch of `deg` (mod 360) closest to `reference`.
fn unwrap_towards(deg: f64, reference: f64) -> f64 {
    deg - 360.0 * ((deg - reference) / 360.0).round()
}

fn phase_deg(tf: &DiscreteRationalTF, freq_hz: f64) -> f64 {
    tf.eval_at_hz(freq_hz).arg().to_degrees()
}

/// Evaluates `tf` at `z = exp(j 2 pi f Ts)` for every frequency.
///
/// Phase is unwrapped along increasing frequency, starting in (-360, 0] at
/// the lowest frequency. Output order follows the input order.
pub fn freq_response(
    tf: &DiscreteRationalTF,
    freqs: &[f64],
) -> Result<Vec<FrequencyResponsePoint>> {
    let nyq = tf.nyquist();
    if let Some(&f) = freqs.iter().find(|&&f| !(f > 0.0 && f < nyq)) {
        return Err(Error::FrequencyOutOfBand {
            freq_hz: f,
            nyquist_hz: nyq,
        });
    }
    let mut order: Vec<usize> = (0..freqs.len()).collect();
    order.sort_by(|&a, &b| freqs[a].total_cmp(&freqs[b]));

    let mut out = vec![
        FrequencyResponsePoint {
            freq_hz: 0.0,
            magnitude_db: 0.0,
            phase_deg: 0.0,
        };
        freqs.len()
    ];
    let mut prev: Option<f64> = None;
    for idx in order {
        let f = freqs[idx];
        let h = tf.eval_at_hz(f);
        let raw = h.arg().to_degrees();
        let phase = match prev {
            None => initial_phase(raw),
            Some(p) => unwrap_towards(raw, p),
        };
        prev = Some(phase);
        out[idx] = FrequencyResponsePoint {
            freq_hz: f,
            magnitude_db: 20.0 * h.norm().log10(),
            phase_deg: phase,
        };
    }
    Ok(out)
}

/// `points_per_decade` log-spaced frequencies from `f_min` to `f_max` inclusive.
pub fn log_grid(f_min: f64, f_max: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    if !(f_min > 0.0 && f_max > f_min && f_max.is_finite()) {
        return Err(Error::invalid(
            "frequency grid",
            format!("need 0 < f_min < f_max, got [{f_min}, {f_max}]"),
        ));
    }
    if points_per_decade == 0 {
        return Err(Error::invalid("points_per_decade", "must be positive"));
    }
    let decades = (f_max / f_min).log10();
    let n = ((decades * points_per_decade as f64).ceil() as usize).max(1);
    let (lo, hi) = (f_min.ln(), f_max.ln());
    Ok((0..=n)
        .map(|i| {
            if i == 0 {
                f_min
            } else if i == n {
                f_max
            } else {
                (lo + (hi - lo) * i as f64 / n as f64).exp()
            }
        })
        .collect())
}

/// Bode grid for a loop sampled at `fs`. Bounds default to six decades
/// below the sampling rate and just under Nyquist.
pub fn bode_grid(
    fs: f64,
    f_min: Option<f64>,
    f_max: Option<f64>,
    points_per_decade: usize,
) -> Result<Vec<f64>> {
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::invalid("fs", format!("must be > 0, got {fs}")));
    }
    let f_max = f_max.unwrap_or(0.499 * fs);
    let f_min = f_min.unwrap_or(1e-6 * fs);
    if f_max >= 0.5 * fs {
        return Err(Error::FrequencyOutOfBand {
            freq_hz: f_max,
            nyquist_hz: 0.5 * fs,
        });
    }
    log_grid(f_min, f_max, points_per_decade)
}

/// Writes `freq_Hz,mag_dB,phase_deg` rows.
pub fn write_response_csv<W: Write>(points: &[FrequencyResponsePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["freq_Hz", "mag_dB", "phase_deg"])?;
    for pt in points {
        w.write_record([
            pt.freq_hz.to_string(),
            pt.magnitude_db.to_string(),
            pt.phase_deg.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Gain crossover and phase margin `180 + phase(f_c)`.
///
/// The first 0 dB crossing above `fs * 1e-12` is bracketed on a log grid
/// and refined by bisection in log-frequency to near machine precision.
/// The grid is laid out in normalized frequency, so two transfer functions
/// with identical coefficients give identical margins whatever their `fs`.
pub fn phase_margin(tf: &DiscreteRationalTF) -> Result<PhaseMargin> {
    let fs = tf.fs();
    // Stay strictly inside (0, fs/2).
    let nu_max = 0.5 * (1.0 - 1e-12);
    let grid = log_grid(NU_MIN, nu_max, CROSSOVER_POINTS_PER_DECADE)?;
    let log_mag = |nu: f64| tf.eval_at_hz(nu * fs).norm().ln();

    let mut prev_nu = grid[0];
    let mut prev_mag = log_mag(prev_nu);
    let mut prev_phase = initial_phase(phase_deg(tf, prev_nu * fs));
    for &nu in &grid[1..] {
        let mag = log_mag(nu);
        let phase = unwrap_towards(phase_deg(tf, nu * fs), prev_phase);
        if (prev_mag > 0.0) != (mag > 0.0) {
            let (mut lo, mut hi) = (prev_nu.ln(), nu.ln());
            let lo_positive = prev_mag > 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if (log_mag(mid.exp()) > 0.0) == lo_positive {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let nu_c = (0.5 * (lo + hi)).exp();
            let phase_c = unwrap_towards(phase_deg(tf, nu_c * fs), prev_phase);
            return Ok(PhaseMargin {
                pm_deg: 180.0 + phase_c,
                crossover_hz: nu_c * fs,
            });
        }
        prev_nu = nu;
        prev_mag = mag;
        prev_phase = phase;
    }
    Err(Error::NoCrossover)
}

/// Normalized angular frequency `2 pi f / fs` in radians per sample.
pub fn radians_per_sample(freq_hz: f64, fs: f64) -> f64 {
    2.0 * PI * freq_hz / fs
}
