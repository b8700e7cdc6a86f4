//! Describing-function model of the comparator and limit-cycle prediction.
//!
//! The comparator is an ideal relay with output levels `±N`. For a sinusoid
//! of amplitude `a` at its input, the first harmonic of its output gives the
//! equivalent gain `K_eq(a) = 4N / (pi a)`. Substituting that gain into the
//! linear loop, the effective gain becomes `K' = gm R K_eq(a) (1-p)`, and the
//! limit cycle sits where `K'` puts the closed-loop roots on the unit circle
//! (`K' = 1-p`). That fixes the amplitude, `a = 4 N gm R / pi`, and the
//! oscillation frequency is the angle of the boundary root:
//! `omega = fs * arg(r)`.
//!
//! The frequency comes from the angle of the root, not the log of its
//! magnitude: `|r| = 1` on the boundary, so `ln|r|` is always zero. The
//! angle is the `z = exp(j omega Ts)` map.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::electrode::ElectrodeLoad;
use crate::error::{Error, Result};
use crate::linear::LoopConfig;
use crate::root_locus::{closed_loop_roots, stability_limit};

/// Comparator output level `N`, one normalized counter LSB (1 V).
pub const COMPARATOR_LEVEL: f64 = 1.0;

/// `K_eq(a) = 4 N / (pi a)` for an ideal relay of level `n_level`.
pub fn comparator_describing_gain(a: f64, n_level: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid(
            "a",
            format!("amplitude must be > 0, got {a}"),
        ));
    }
    if !(n_level > 0.0 && n_level.is_finite()) {
        return Err(Error::invalid(
            "n_level",
            format!("relay level must be > 0, got {n_level}"),
        ));
    }
    Ok(4.0 * n_level / (PI * a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCyclePrediction {
    /// Oscillation amplitude at the comparator input (V_RE), volts.
    pub amplitude: f64,
    /// Oscillation angular frequency, rad/s.
    pub omega: f64,
    /// Closed-loop root on the unit circle, positive imaginary part.
    pub root_at_boundary: Complex64,
}

impl LimitCyclePrediction {
    pub fn freq_hz(&self) -> f64 {
        self.omega / (2.0 * PI)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }
}

/// Limit-cycle amplitude and frequency for a loop with `gm R < 1`.
pub fn predict_limit_cycle(load: &ElectrodeLoad, cfg: &LoopConfig) -> Result<LimitCyclePrediction> {
    let gm_r = cfg.gm_r(load);
    if gm_r >= 1.0 {
        return Err(Error::UnstableRegime { gm_r });
    }
    let p = load.sampled(cfg.fs())?.pole();
    let root = closed_loop_roots(p, stability_limit(p)).r1;
    Ok(LimitCyclePrediction {
        amplitude: 4.0 * COMPARATOR_LEVEL * gm_r / PI,
        omega: cfg.fs() * root.arg(),
        root_at_boundary: root,
    })
}
