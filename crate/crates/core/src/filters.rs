//! Orthogonal two-channel filter pairs.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FILTER_TOL: f64 = 1e-10;

/// Low-pass taps `h` and the alternating flip `g[k] = (−1)^k h[L−1−k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterPair {
    name: String,
    h: Vec<f64>,
    g: Vec<f64>,
}

impl FilterPair {
    /// Validates `h` (Σh = √2, double-shift orthonormal) and derives `g`.
    pub fn from_lowpass(name: impl Into<String>, h: Vec<f64>) -> Result<Self> {
        let len = h.len();
        if len < 2 || !len.is_multiple_of(2) {
            return Err(Error::InvalidFilter(format!(
                "low-pass filter needs an even tap count >= 2, got {len}"
            )));
        }
        if h.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidFilter("non-finite tap".into()));
        }
        let sum: f64 = h.iter().sum();
        if (sum - SQRT_2).abs() > FILTER_TOL {
            return Err(Error::InvalidFilter(format!("taps sum to {sum}, expected √2")));
        }
        for shift in 0..len / 2 {
            let dot: f64 = (0..len - 2 * shift).map(|k| h[k] * h[k + 2 * shift]).sum();
            let expected = if shift == 0 { 1.0 } else { 0.0 };
            if (dot - expected).abs() > FILTER_TOL {
                return Err(Error::InvalidFilter(format!(
                    "double-shift orthonormality fails at shift {shift}: {dot}"
                )));
            }
        }
        let g = (0..len)
            .map(|k| if k % 2 == 0 { h[len - 1 - k] } else { -h[len - 1 - k] })
            .collect();
        Ok(Self {
            name: name.into(),
            h,
            g,
        })
    }

    pub fn haar() -> Self {
        let t = 1.0 / SQRT_2;
        Self::from_lowpass("haar", vec![t, t]).expect("haar taps are valid")
    }

    /// Daubechies 4-tap (two vanishing moments).
    pub fn daubechies4() -> Self {
        let s3 = 3f64.sqrt();
        let d = 4.0 * SQRT_2;
        let h = vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d];
        Self::from_lowpass("d4", h).expect("d4 taps are valid")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "haar" | "db1" => Ok(Self::haar()),
            "d4" | "db2" | "daubechies4" => Ok(Self::daubechies4()),
            other => Err(Error::InvalidFilter(format!("unknown filter `{other}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.h
    }

    pub fn highpass(&self) -> &[f64] {
        &self.g
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Periodized convolve-and-downsample: `y[k] = Σ_j f[j]·x[(2k + j) mod L]`.
    pub fn analyze(taps: &[f64], x: &[f64]) -> Vec<f64> {
        let len = x.len();
        (0..len / 2)
            .map(|k| {
                taps.iter()
                    .enumerate()
                    .map(|(j, f)| f * x[(2 * k + j) % len])
                    .sum()
            })
            .collect()
    }
}

/// `{"h": [...]}`; `g` is always derived.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FilterJson {
    pub h: Vec<f64>,
}

impl FilterJson {
    pub fn into_pair(self, name: &str) -> Result<FilterPair> {
        FilterPair::from_lowpass(name, self.h)
    }
}
