//! Closed-loop roots of `(z-1)(z-p) + K' = 0` as the loop gain varies.
//!
//! Everything here is expressed in the dimensionless pair `(p, K')`, with
//! `p = exp(-Ts/tau)` the load pole and `K'` the effective loop gain.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discriminants with magnitude below this are treated as a repeated root.
pub const DISCRIMINANT_DEADBAND: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootKind {
    Real,
    Repeated,
    ComplexConjugate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootPair {
    /// Root with the larger real part, or the positive imaginary part on the
    /// complex branch.
    pub r1: Complex64,
    pub r2: Complex64,
    pub k_effective: f64,
    pub kind: RootKind,
}

impl RootPair {
    /// Largest root magnitude; the loop is stable when this is below 1.
    pub fn spectral_radius(&self) -> f64 {
        self.r1.norm().max(self.r2.norm())
    }
}

/// `(1 + p)^2 - 4 (p + K')`.
pub fn discriminant(p: f64, k_prime: f64) -> f64 {
    (1.0 + p).powi(2) - 4.0 * (p + k_prime)
}

/// Roots `(1+p)/2 ± sqrt((1+p)^2 - 4(p+K'))/2`.
pub fn closed_loop_roots(p: f64, k_prime: f64) -> RootPair {
    let center = 0.5 * (1.0 + p);
    let disc = discriminant(p, k_prime);
    let (r1, r2, kind) = if disc.abs() <= DISCRIMINANT_DEADBAND {
        let r = Complex64::new(center, 0.0);
        (r, r, RootKind::Repeated)
    } else if disc > 0.0 {
        let half = 0.5 * disc.sqrt();
        (
            Complex64::new(center + half, 0.0),
            Complex64::new(center - half, 0.0),
            RootKind::Real,
        )
    } else {
        let half = 0.5 * (-disc).sqrt();
        (
            Complex64::new(center, half),
            Complex64::new(center, -half),
            RootKind::ComplexConjugate,
        )
    };
    RootPair {
        r1,
        r2,
        k_effective: k_prime,
        kind,
    }
}

/// Gain at which the two real roots meet: `((1-p)/2)^2`.
pub fn breakaway_gain(p: f64) -> f64 {
    (0.5 * (1.0 - p)).powi(2)
}

/// Gain at which the complex pair reaches the unit circle: `K1 = 1 - p`.
pub fn stability_limit(p: f64) -> f64 {
    1.0 - p
}

/// `n` evenly spaced gains from 0 to `k_max`, defaulting to twice the
/// stability limit.
pub fn gain_grid(p: f64, k_max: Option<f64>, n: usize) -> Result<Vec<f64>> {
    let k_max = k_max.unwrap_or(2.0 * stability_limit(p));
    if !(k_max > 0.0 && k_max.is_finite()) {
        return Err(Error::invalid("k_max", format!("must be > 0, got {k_max}")));
    }
    if n < 2 {
        return Err(Error::invalid(
            "points",
            format!("need at least 2, got {n}"),
        ));
    }
    Ok((0..n).map(|i| k_max * i as f64 / (n - 1) as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocusSweep {
    pub pole: f64,
    pub points: Vec<RootPair>,
    pub breakaway_gain: f64,
    pub stability_limit: f64,
}

impl LocusSweep {
    /// Writes `k_effective,r1_re,r1_im,r2_re,r2_im,kind,spectral_radius` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "k_effective",
            "r1_re",
            "r1_im",
            "r2_re",
            "r2_im",
            "kind",
            "spectral_radius",
        ])?;
        for pt in &self.points {
            let kind = match pt.kind {
                RootKind::Real => "real",
                RootKind::Repeated => "repeated",
                RootKind::ComplexConjugate => "complex_conjugate",
            };
            w.write_record([
                pt.k_effective.to_string(),
                pt.r1.re.to_string(),
                pt.r1.im.to_string(),
                pt.r2.re.to_string(),
                pt.r2.im.to_string(),
                kind.to_string(),
                pt.spectral_radius().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Roots for every gain in an ascending, non-empty grid.
pub fn locus_sweep(p: f64, k_grid: &[f64]) -> Result<LocusSweep> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", format!("must be in (0, 1), got {p}")));
    }
    if k_grid.is_empty() {
        return Err(Error::EmptyInput("gain grid"));
    }
    if k_grid.iter().any(|&k| !(k >= 0.0 && k.is_finite())) {
        return Err(Error::invalid("k_grid", "gains must be finite and >= 0"));
    }
    if k_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("k_grid", "must be ascending"));
    }
    Ok(LocusSweep {
        pole: p,
        points: k_grid.iter().map(|&k| closed_loop_roots(p, k)).collect(),
        breakaway_gain: breakaway_gain(p),
        stability_limit: stability_limit(p),
    })
}
