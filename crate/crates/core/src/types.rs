//! Canonical domain types: phase matrices, unimodular waveform sets and
//! receive-filter banks.
//!
//! Phases are stored in normalized cycles (radians / 2pi) everywhere;
//! conversion to radians happens only inside the complex exponential.
//! Matrices are column-major: column `m` is channel `m`, so the flat
//! buffer of a phase matrix *is* its vectorization.

use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// N x M matrix of normalized phases (cycles). Values may exceed 1; the
/// phase map wraps them modulo 1 through the complex exponential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatrix<T> {
    values: Vec<T>,
    n_samples: usize,
    n_channels: usize,
}

impl<T: Real> PhaseMatrix<T> {
    pub fn from_vec(values: Vec<T>, n_samples: usize, n_channels: usize) -> Result<Self> {
        if values.len() != n_samples * n_channels {
            return Err(Error::DimensionMismatch(format!(
                "phase buffer has {} entries, expected {}x{}",
                values.len(),
                n_samples,
                n_channels
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("phase matrix"));
        }
        Ok(Self { values, n_samples, n_channels })
    }

    pub fn zeros(n_samples: usize, n_channels: usize) -> Self {
        Self { values: vec![T::zero(); n_samples * n_channels], n_samples, n_channels }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    /// Flat column-major view; identical to the vectorized phase vector.
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn column(&self, m: usize) -> &[T] {
        &self.values[m * self.n_samples..(m + 1) * self.n_samples]
    }

    pub fn get(&self, n: usize, m: usize) -> T {
        self.values[m * self.n_samples + n]
    }

    /// Entries reduced into [0, 1).
    pub fn reduced_mod_one(&self) -> PhaseMatrix<T> {
        let values = self
            .values
            .iter()
            .map(|&v| {
                let r = v - v.floor();
                if r >= T::one() {
                    T::zero()
                } else {
                    r
                }
            })
            .collect();
        PhaseMatrix { values, n_samples: self.n_samples, n_channels: self.n_channels }
    }

    /// True when every entry, taken modulo 1, sits on `alphabet(levels)`
    /// within `tol`.
    pub fn is_discrete_valid(&self, levels: usize, tol: T) -> bool {
        let b = T::of(levels as f64);
        self.values.iter().all(|&v| {
            let scaled = (v - v.floor()) * b;
            let dist = (scaled - scaled.round()).abs() / b;
            dist <= tol
        })
    }

    /// Per-entry alphabet indices `b` in `[0, levels)`, assuming the
    /// matrix is discrete-valid.
    pub fn alphabet_indices(&self, levels: usize) -> Result<Vec<u32>> {
        let b = T::of(levels as f64);
        self.values
            .iter()
            .map(|&v| {
                let scaled = (v - v.floor()) * b;
                let k = scaled.round();
                if (scaled - k).abs() > T::of(1e-6) {
                    return Err(Error::UndefinedMetric(format!(
                        "phase {v} is not on the {levels}-level alphabet"
                    )));
                }
                let idx = (k.as_f64() as i64).rem_euclid(levels as i64);
                Ok(idx as u32)
            })
            .collect()
    }
}

/// Evenly spaced normalized phase levels `{b/B : b = 0..B-1}`.
pub fn alphabet<T: Real>(levels: usize) -> Result<Vec<T>> {
    if levels < 2 {
        return Err(Error::InvalidAlphabet(levels));
    }
    let b = T::of(levels as f64);
    Ok((0..levels).map(|k| T::of(k as f64) / b).collect())
}

/// N x M complex matrix of unit-modulus transmit samples.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformMatrix<T> {
    values: Vec<Complex<T>>,
    n_samples: usize,
    n_channels: usize,
}

impl<T: Real> WaveformMatrix<T> {
    pub fn from_vec(values: Vec<Complex<T>>, n_samples: usize, n_channels: usize) -> Result<Self> {
        if values.len() != n_samples * n_channels {
            return Err(Error::DimensionMismatch(format!(
                "waveform buffer has {} entries, expected {}x{}",
                values.len(),
                n_samples,
                n_channels
            )));
        }
        Ok(Self { values, n_samples, n_channels })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn column(&self, m: usize) -> &[Complex<T>] {
        &self.values[m * self.n_samples..(m + 1) * self.n_samples]
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.values
    }

    pub fn get(&self, n: usize, m: usize) -> Complex<T> {
        self.values[m * self.n_samples + n]
    }

    /// Maximum deviation of any entry's modulus from 1.
    pub fn max_modulus_error(&self) -> T {
        self.values
            .iter()
            .map(|z| (z.norm() - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    /// Element-wise conjugate (the matched filter bank of this set).
    pub fn conj(&self) -> WaveformMatrix<T> {
        WaveformMatrix {
            values: self.values.iter().map(|z| z.conj()).collect(),
            n_samples: self.n_samples,
            n_channels: self.n_channels,
        }
    }
}

/// Receive filter bank parameterized by independent real and imaginary
/// parts (the trainable representation). Columns carry energy N after
/// projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterMatrix<T> {
    pub re: Vec<T>,
    pub im: Vec<T>,
    n_samples: usize,
    n_channels: usize,
}

impl<T: Real> FilterMatrix<T> {
    pub fn from_parts(re: Vec<T>, im: Vec<T>, n_samples: usize, n_channels: usize) -> Result<Self> {
        if re.len() != n_samples * n_channels || im.len() != re.len() {
            return Err(Error::DimensionMismatch(format!(
                "filter buffers have {}/{} entries, expected {}x{}",
                re.len(),
                im.len(),
                n_samples,
                n_channels
            )));
        }
        Ok(Self { re, im, n_samples, n_channels })
    }

    /// Matched bank for this waveform set. The ambiguity correlation
    /// applies the conjugate to the filter taps, so storing the waveform
    /// itself is what maximizes |A_mm(0,0)| = N at zero SNR loss.
    pub fn matched_to(x: &WaveformMatrix<T>) -> Self {
        let re = x.as_slice().iter().map(|z| z.re).collect();
        let im = x.as_slice().iter().map(|z| z.im).collect();
        Self { re, im, n_samples: x.n_samples(), n_channels: x.n_channels() }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn get(&self, n: usize, m: usize) -> Complex<T> {
        let i = m * self.n_samples + n;
        Complex::new(self.re[i], self.im[i])
    }

    /// Column m as a complex vector.
    pub fn column_complex(&self, m: usize) -> Vec<Complex<T>> {
        let lo = m * self.n_samples;
        (lo..lo + self.n_samples)
            .map(|i| Complex::new(self.re[i], self.im[i]))
            .collect()
    }

    pub fn column_energy(&self, m: usize) -> T {
        let lo = m * self.n_samples;
        (lo..lo + self.n_samples)
            .map(|i| self.re[i] * self.re[i] + self.im[i] * self.im[i])
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(self.im.iter()).all(|v| v.is_finite())
    }
}

/// Map normalized phases to the unimodular waveform `exp(j 2 pi p)`.
/// Periodic in every entry with period 1.
pub fn phases_to_waveform<T: Real>(p: &PhaseMatrix<T>) -> WaveformMatrix<T> {
    let tau = T::TAU();
    let values = p.as_slice().iter().map(|&v| Complex::cis(tau * v)).collect();
    WaveformMatrix {
        values,
        n_samples: p.n_samples(),
        n_channels: p.n_channels(),
    }
}

/// Draw an N x M phase matrix with every entry uniform on the B-level
/// alphabet, deterministically from `seed`.
pub fn random_discrete_phase_init<T: Real>(
    n_channels: usize,
    n_samples: usize,
    levels: usize,
    seed: u64,
) -> Result<PhaseMatrix<T>> {
    let alpha = alphabet::<T>(levels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n_samples * n_channels)
        .map(|_| alpha[rng.gen_range(0..levels)])
        .collect();
    PhaseMatrix::from_vec(values, n_samples, n_channels)
}
