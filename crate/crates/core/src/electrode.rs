//! Working-electrode load model.
//!
//! The electrode/solution interface at the working electrode is a resistor
//! `R_WE` (charge transfer) in parallel with a capacitor `C_WE` (charge
//! redistribution), driven by the DAC current source:
//!
//! ```text
//!   i_dac ──┬────────┬──── V_RE
//!           │        │
//!          R_WE     C_WE
//!           │        │
//!   gnd ────┴────────┴────
//! ```
//!
//! The parallel topology is an assumption: it is the one for which a
//! zero-order-hold current produces the first-order load
//! `R_WE (1 - p) / (z - p)`, `p = exp(-Ts/tau)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tf::DiscreteRationalTF;

/// Parallel RC working-electrode load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeLoad {
    r_we: f64,
    c_we: f64,
}

impl ElectrodeLoad {
    /// `r_we` in ohms, `c_we` in farads; both must be finite and positive.
    pub fn new(r_we: f64, c_we: f64) -> Result<Self> {
        if !(r_we.is_finite() && r_we > 0.0) {
            return Err(Error::invalid("r_we", format!("must be > 0, got {r_we}")));
        }
        if !(c_we.is_finite() && c_we > 0.0) {
            return Err(Error::invalid("c_we", format!("must be > 0, got {c_we}")));
        }
        Ok(Self { r_we, c_we })
    }

    pub fn r_we(&self) -> f64 {
        self.r_we
    }

    pub fn c_we(&self) -> f64 {
        self.c_we
    }

    /// Time constant `R_WE * C_WE` in seconds.
    pub fn tau(&self) -> f64 {
        self.r_we * self.c_we
    }

    /// Exact ZOH discretization of the load at sampling rate `fs`.
    pub fn sampled(&self, fs: f64) -> Result<SampledLoad> {
        SampledLoad::new(*self, fs)
    }

    /// Exact load voltage after `dt` seconds of constant input current `i_in`,
    /// starting from `v0`.
    pub fn step_update(&self, v0: f64, i_in: f64, dt: f64) -> f64 {
        step_update(v0, i_in, self, dt)
    }
}

/// Exact solution of `C dv/dt = i_in - v/R` over `dt` with constant `i_in`.
pub fn step_update(v0: f64, i_in: f64, load: &ElectrodeLoad, dt: f64) -> f64 {
    debug_assert!(dt > 0.0);
    let v_final = i_in * load.r_we;
    v_final + (v0 - v_final) * (-dt / load.tau()).exp()
}

/// An electrode load paired with a sampling rate, with the ZOH pole
/// `p = exp(-Ts/tau)` computed once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledLoad {
    load: ElectrodeLoad,
    fs: f64,
    pole: f64,
}

impl SampledLoad {
    pub fn new(load: ElectrodeLoad, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid("fs", format!("must be > 0, got {fs}")));
        }
        let pole = (-ts_over_tau(&load, fs)).exp();
        Ok(Self { load, fs, pole })
    }

    pub fn load(&self) -> &ElectrodeLoad {
        &self.load
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Sampling period `1/fs`.
    pub fn ts(&self) -> f64 {
        self.fs.recip()
    }

    /// Dimensionless ratio `Ts / tau`.
    pub fn ts_over_tau(&self) -> f64 {
        ts_over_tau(&self.load, self.fs)
    }

    /// The load pole `p = exp(-Ts/tau)`, in (0, 1).
    pub fn pole(&self) -> f64 {
        self.pole
    }

    /// `1 - p`. Taken from the stored pole so that every transfer function
    /// built from it has a DC gain consistent with the pole.
    pub fn one_minus_pole(&self) -> f64 {
        1.0 - self.pole
    }

    /// `Z_LOAD(z) = R_WE (1 - p) / (z - p)`.
    pub fn load_tf(&self) -> DiscreteRationalTF {
        DiscreteRationalTF::from_parts(
            vec![self.load.r_we * self.one_minus_pole()],
            vec![1.0, -self.pole],
            self.fs,
        )
    }
}

fn ts_over_tau(load: &ElectrodeLoad, fs: f64) -> f64 {
    1.0 / (fs * load.tau())
}

/// ZOH-discretized load transfer function at sampling rate `fs`.
pub fn zoh_load_tf(load: &ElectrodeLoad, fs: f64) -> Result<DiscreteRationalTF> {
    Ok(SampledLoad::new(*load, fs)?.load_tf())
}
