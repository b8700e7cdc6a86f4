//! Rational transfer functions in `z`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `H(z) = N(z) / D(z)` with coefficients in descending powers of `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteRationalTF {
    numerator: Vec<f64>,
    denominator: Vec<f64>,
    fs: f64,
}

impl DiscreteRationalTF {
    /// Builds a proper transfer function. Leading zeros of the numerator are
    /// dropped; the denominator must have a nonzero leading coefficient.
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>, fs: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::invalid("fs", format!("must be > 0, got {fs}")));
        }
        if denominator.first().is_none_or(|&d| d == 0.0) {
            return Err(Error::invalid(
                "denominator",
                "leading coefficient must be nonzero",
            ));
        }
        if numerator
            .iter()
            .chain(denominator.iter())
            .any(|c| !c.is_finite())
        {
            return Err(Error::invalid("coefficients", "must be finite"));
        }
        let first_nz = numerator.iter().position(|&c| c != 0.0);
        let numerator = match first_nz {
            Some(i) => numerator[i..].to_vec(),
            None => vec![0.0],
        };
        if numerator.len() > denominator.len() {
            return Err(Error::invalid(
                "numerator",
                "degree exceeds denominator degree (improper)",
            ));
        }
        Ok(Self {
            numerator,
            denominator,
            fs,
        })
    }

    /// Unchecked constructor for coefficients produced inside the crate.
    pub(crate) fn from_parts(numerator: Vec<f64>, denominator: Vec<f64>, fs: f64) -> Self {
        debug_assert!(denominator[0] != 0.0 && numerator.len() <= denominator.len());
        Self {
            numerator,
            denominator,
            fs,
        }
    }

    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn nyquist(&self) -> f64 {
        0.5 * self.fs
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        horner(&self.numerator, z) / horner(&self.denominator, z)
    }

    /// `H(e^{j 2 pi f / fs})`.
    pub fn eval_at_hz(&self, freq_hz: f64) -> Complex64 {
        self.eval(Complex64::from_polar(1.0, 2.0 * PI * freq_hz / self.fs))
    }

    /// `H(1)`. Infinite (or NaN) when there is a pole at `z = 1`.
    pub fn dc_gain(&self) -> f64 {
        self.numerator.iter().sum::<f64>() / self.denominator.iter().sum::<f64>()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            numerator: self.numerator.iter().map(|c| c * k).collect(),
            denominator: self.denominator.clone(),
            fs: self.fs,
        }
    }
}

fn horner(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(DiscreteRationalTF::new(vec![1.0], vec![0.0, 1.0], 1.0).is_err());
        assert!(DiscreteRationalTF::new(vec![1.0, 0.0, 0.0], vec![1.0, 1.0], 1.0).is_err());
        assert!(DiscreteRationalTF::new(vec![1.0], vec![], 1.0).is_err());
        assert!(DiscreteRationalTF::new(vec![1.0], vec![1.0, -0.5], -1.0).is_err());
        // Leading numerator zeros do not count towards the degree.
        let tf = DiscreteRationalTF::new(vec![0.0, 0.0, 2.0], vec![1.0, -0.5], 10.0).unwrap();
        assert_eq!(tf.numerator(), &[2.0]);
    }

    #[test]
    fn eval_first_order() {
        let tf = DiscreteRationalTF::new(vec![0.5], vec![1.0, -0.5], 1.0).unwrap();
        assert_eq!(tf.dc_gain(), 1.0);
        let h = tf.eval(Complex64::new(-1.0, 0.0));
        assert!((h.re + 1.0 / 3.0).abs() < 1e-15 && h.im == 0.0);
    }
}
