//! Shared fixtures for unit tests.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::{phases_to_waveform, random_discrete_phase_init, FilterMatrix, WaveformMatrix};

pub fn random_complex(n: usize, seed: u64) -> Vec<Complex<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Random discrete-phase waveform set plus its phase matrix.
pub fn random_waveforms(
    n: usize,
    m: usize,
    levels: usize,
    seed: u64,
) -> (WaveformMatrix<f64>, crate::types::PhaseMatrix<f64>) {
    let p = random_discrete_phase_init(m, n, levels, seed).unwrap();
    (phases_to_waveform(&p), p)
}

/// Random complex filter bank (not energy-projected).
pub fn random_filters(n: usize, m: usize, seed: u64) -> FilterMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let re = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let im = (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FilterMatrix::from_parts(re, im, n, m).unwrap()
}

/// The length-13 Barker code as a binary-phase waveform.
pub fn barker13() -> WaveformMatrix<f64> {
    let signs = [1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
    let values = signs.iter().map(|&s| Complex::new(s, 0.0)).collect();
    WaveformMatrix::from_vec(values, 13, 1).unwrap()
}
