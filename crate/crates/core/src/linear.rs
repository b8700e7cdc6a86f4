//! Linearized loop model: comparator as unity gain, counter as a
//! discrete-time integrator `1/(z-1)`, DAC as ZOH with transconductance
//! `g_m,LSB`, followed by the sampled electrode load.

use serde::{Deserialize, Serialize};

use crate::electrode::{ElectrodeLoad, SampledLoad};
use crate::error::{Error, Result};
use crate::frequency::{phase_margin, PhaseMargin};
use crate::tf::DiscreteRationalTF;

/// Tolerance on `gm_lsb * r_we <= 1` for the stability verdict.
pub const STABILITY_TOLERANCE: f64 = 1e-12;

/// Controller and DAC parameters.
///
/// The counter output is normalized to 1 V per LSB, so the DAC acts as a
/// transconductance `gm_lsb = i_lsb / 1 V`; both views are exposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    i_lsb: f64,
    fs: f64,
    dac_bits: u32,
    v_ref: f64,
    v_dd: f64,
}

impl LoopConfig {
    pub fn new(i_lsb: f64, fs: f64, dac_bits: u32, v_ref: f64, v_dd: f64) -> Result<Self> {
        if !(i_lsb.is_finite() && i_lsb > 0.0) {
            return Err(Error::invalid("i_lsb", format!("must be > 0, got {i_lsb}")));
        }
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid("fs", format!("must be > 0, got {fs}")));
        }
        if !(1..=32).contains(&dac_bits) {
            return Err(Error::invalid(
                "dac_bits",
                format!("must be in 1..=32, got {dac_bits}"),
            ));
        }
        if !(v_ref.is_finite() && v_dd.is_finite() && 0.0 < v_ref && v_ref < v_dd) {
            return Err(Error::invalid(
                "v_ref",
                format!("need 0 < v_ref < v_dd, got v_ref={v_ref}, v_dd={v_dd}"),
            ));
        }
        Ok(Self {
            i_lsb,
            fs,
            dac_bits,
            v_ref,
            v_dd,
        })
    }

    /// Config from an LSB transconductance in siemens.
    pub fn from_gm(gm_lsb: f64, fs: f64, dac_bits: u32, v_ref: f64, v_dd: f64) -> Result<Self> {
        Self::new(gm_lsb * 1.0, fs, dac_bits, v_ref, v_dd)
    }

    pub fn with_fs(self, fs: f64) -> Result<Self> {
        Self::new(self.i_lsb, fs, self.dac_bits, self.v_ref, self.v_dd)
    }

    pub fn with_i_lsb(self, i_lsb: f64) -> Result<Self> {
        Self::new(i_lsb, self.fs, self.dac_bits, self.v_ref, self.v_dd)
    }

    pub fn with_supply(self, v_ref: f64, v_dd: f64) -> Result<Self> {
        Self::new(self.i_lsb, self.fs, self.dac_bits, v_ref, v_dd)
    }

    pub fn with_dac_bits(self, dac_bits: u32) -> Result<Self> {
        Self::new(self.i_lsb, self.fs, dac_bits, self.v_ref, self.v_dd)
    }

    /// LSB transconductance in siemens.
    pub fn gm_lsb(&self) -> f64 {
        self.i_lsb / 1.0
    }

    pub fn i_lsb(&self) -> f64 {
        self.i_lsb
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn ts(&self) -> f64 {
        self.fs.recip()
    }

    pub fn dac_bits(&self) -> u32 {
        self.dac_bits
    }

    /// Largest counter code, `2^bits - 1`.
    pub fn full_scale_code(&self) -> u32 {
        u32::MAX >> (32 - self.dac_bits)
    }

    pub fn v_ref(&self) -> f64 {
        self.v_ref
    }

    pub fn v_dd(&self) -> f64 {
        self.v_dd
    }

    /// Dimensionless `gm_lsb * r_we` (with the 1 V/LSB normalization).
    pub fn gm_r(&self, load: &ElectrodeLoad) -> f64 {
        self.gm_lsb() * load.r_we()
    }
}

fn sampled(load: &ElectrodeLoad, cfg: &LoopConfig) -> SampledLoad {
    // fs is validated by LoopConfig.
    load.sampled(cfg.fs).expect("LoopConfig guarantees fs > 0")
}

fn double_pole_denominator(p: f64) -> Vec<f64> {
    vec![1.0, -(1.0 + p), p]
}

/// `G_OL(z) = gm R (1-p) / ((z-1)(z-p))`.
pub fn open_loop_tf(load: &ElectrodeLoad, cfg: &LoopConfig) -> DiscreteRationalTF {
    let s = sampled(load, cfg);
    DiscreteRationalTF::from_parts(
        vec![cfg.gm_r(load) * s.one_minus_pole()],
        double_pole_denominator(s.pole()),
        cfg.fs,
    )
}

/// Splits `G_OL = K * L(z)` with `K = gm R (1-p)` and `L = 1/((z-1)(z-p))`.
pub fn loop_gain_split(load: &ElectrodeLoad, cfg: &LoopConfig) -> (f64, DiscreteRationalTF) {
    let s = sampled(load, cfg);
    let k = cfg.gm_r(load) * s.one_minus_pole();
    let l = DiscreteRationalTF::from_parts(vec![1.0], double_pole_denominator(s.pole()), cfg.fs);
    (k, l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Loop gain `K = gm R (1-p)`.
    pub k: f64,
    /// Unit-circle bound `K1 = 1-p`.
    pub k1: f64,
    pub gm_r_product: f64,
    pub stable: bool,
    pub phase_margin_deg: Option<f64>,
    pub crossover_hz: Option<f64>,
}

pub fn stability_check(load: &ElectrodeLoad, cfg: &LoopConfig) -> StabilityReport {
    let s = sampled(load, cfg);
    let gm_r = cfg.gm_r(load);
    let pm = phase_margin(&open_loop_tf(load, cfg)).ok();
    StabilityReport {
        k: gm_r * s.one_minus_pole(),
        k1: s.one_minus_pole(),
        gm_r_product: gm_r,
        stable: gm_r <= 1.0 + STABILITY_TOLERANCE,
        phase_margin_deg: pm.map(|PhaseMargin { pm_deg, .. }| pm_deg),
        crossover_hz: pm.map(|pm| pm.crossover_hz),
    }
}
