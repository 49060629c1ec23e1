//! Ambiguity and cross-ambiguity evaluation over a delay-Doppler grid.
//!
//! Per Doppler bin the surface is the aperiodic correlation of the
//! Doppler-modulated transmit waveform against the receive filter,
//! computed with zero-padded FFTs of length 2N and re-indexed to linear
//! lags. The sample index inside the Doppler exponent is one-based; an
//! off-by-one there shifts AF phase, and magnitudes drive every metric.
//!
//! [`AfWorkspace`] caches FFT plans, modulation vectors and the forward
//! spectra of whichever side is held fixed, so alternating optimization
//! pays M instead of M^2 forward transforms per update.

use std::sync::Arc;

use num_complex::Complex;
use num_traits::Zero;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::DelayDopplerGrid;
use crate::real::Real;
use crate::types::{FilterMatrix, WaveformMatrix};

/// Apply the Doppler phase ramp `e^{j 2 pi n f / N}` with one-based `n`.
pub fn doppler_modulate<T: Real>(x: &[Complex<T>], f: T) -> Vec<Complex<T>> {
    let n = T::of(x.len() as f64);
    let tau = T::TAU();
    x.iter()
        .enumerate()
        .map(|(i, &z)| z * Complex::cis(tau * T::of((i + 1) as f64) * f / n))
        .collect()
}

/// Direct-summation ambiguity value at one (delay, Doppler) cell.
///
/// This is the reference evaluation the FFT path is checked against.
pub fn af_direct<T: Real>(
    x: &[Complex<T>],
    h: &[Complex<T>],
    tau: i64,
    f: T,
) -> Result<Complex<T>> {
    if x.len() != h.len() || x.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "af_direct needs equal nonempty lengths, got {} and {}",
            x.len(),
            h.len()
        )));
    }
    let n = x.len() as i64;
    if tau.abs() >= n {
        return Err(Error::DelayOutOfRange { tau, n: x.len() });
    }
    let xm = doppler_modulate(x, f);
    let mut acc = Complex::zero();
    for (i, &v) in xm.iter().enumerate() {
        let j = i as i64 + tau;
        if (0..n).contains(&j) {
            acc = acc + v * h[j as usize].conj();
        }
    }
    Ok(acc)
}

/// FFT plans and scratch for length-N aperiodic correlations.
pub struct Correlator<T: Real> {
    n: usize,
    len: usize,
    fft: Arc<dyn Fft<T>>,
    ifft: Arc<dyn Fft<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> Correlator<T> {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "correlator length must be positive");
        let len = 2 * n;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);
        let scratch_len = fft
            .get_inplace_scratch_len()
            .max(ifft.get_inplace_scratch_len());
        Self { n, len, fft, ifft, scratch: vec![Complex::zero(); scratch_len] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Transform length of the zero-padded buffers.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Zero-pad `v` and write its forward spectrum into `out`.
    pub fn spectrum_into(&mut self, v: &[Complex<T>], out: &mut [Complex<T>]) {
        debug_assert_eq!(v.len(), self.n);
        debug_assert_eq!(out.len(), self.len);
        out[..self.n].copy_from_slice(v);
        out[self.n..].fill(Complex::zero());
        self.fft.process_with_scratch(out, &mut self.scratch);
    }

    /// Correlation buffer from two spectra: `IFFT(A .* conj(B)) / len`.
    /// Lags are recovered from the circular buffer via [`lag_value`].
    pub fn cross_into(&mut self, a: &[Complex<T>], b: &[Complex<T>], out: &mut [Complex<T>]) {
        debug_assert_eq!(a.len(), self.len);
        debug_assert_eq!(b.len(), self.len);
        debug_assert_eq!(out.len(), self.len);
        for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
            *o = x * y.conj();
        }
        self.ifft.process_with_scratch(out, &mut self.scratch);
        let scale = T::one() / T::of(self.len as f64);
        for z in out.iter_mut() {
            *z = z.scale(scale);
        }
    }
}

/// Read the linear-lag correlation value out of the circular buffer.
pub fn lag_value<T: Copy>(buf: &[Complex<T>], tau: i64) -> Complex<T> {
    let len = buf.len() as i64;
    buf[((len - tau) % len) as usize]
}

/// Aperiodic cross-correlation `r(tau) = sum_i a(i) b*(i+tau)` at lags
/// `-N+1 ..= N-1`, computed with zero-padded FFTs.
pub fn xcorr_fft<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "xcorr_fft needs equal nonempty lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let mut corr = Correlator::new(n);
    let mut sa = vec![Complex::zero(); corr.len()];
    let mut sb = vec![Complex::zero(); corr.len()];
    let mut buf = vec![Complex::zero(); corr.len()];
    corr.spectrum_into(a, &mut sa);
    corr.spectrum_into(b, &mut sb);
    corr.cross_into(&sa, &sb, &mut buf);
    let hi = n as i64 - 1;
    Ok((-hi..=hi).map(|t| lag_value(&buf, t)).collect())
}

/// Dense complex ambiguity values for every channel pair over a grid.
///
/// Layout is `[(m * M + l)][delay][doppler]`, matching the lexicographic
/// (m, l, tau, f) order used for deterministic scans.
#[derive(Debug, Clone)]
pub struct AmbiguitySurface<T> {
    values: Vec<Complex<T>>,
    n_samples: usize,
    n_channels: usize,
    grid: DelayDopplerGrid<T>,
}

impl<T: Real> AmbiguitySurface<T> {
    fn empty(n_samples: usize, n_channels: usize, grid: DelayDopplerGrid<T>) -> Self {
        let len = n_channels * n_channels * grid.n_delays() * grid.n_dopplers();
        Self { values: vec![Complex::zero(); len], n_samples, n_channels, grid }
    }

    #[inline]
    fn index(&self, m: usize, l: usize, delay_idx: usize, doppler_idx: usize) -> usize {
        ((m * self.n_channels + l) * self.grid.n_delays() + delay_idx) * self.grid.n_dopplers()
            + doppler_idx
    }

    pub fn value(&self, m: usize, l: usize, delay_idx: usize, doppler_idx: usize) -> Complex<T> {
        self.values[self.index(m, l, delay_idx, doppler_idx)]
    }

    pub fn grid(&self) -> &DelayDopplerGrid<T> {
        &self.grid
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }
}

/// Reusable engine: plans, Doppler ramps, and cached spectra of whichever
/// side was set last.
pub struct AfWorkspace<T: Real> {
    n: usize,
    n_channels: usize,
    corr: Correlator<T>,
    grid: DelayDopplerGrid<T>,
    /// F x N Doppler phase ramps.
    modvecs: Vec<Complex<T>>,
    /// M x N current waveforms (time domain).
    waveforms: Vec<Complex<T>>,
    /// (M*F) x N Doppler-modulated waveforms (time domain).
    modulated: Vec<Complex<T>>,
    /// M x N current filters (time domain).
    filters: Vec<Complex<T>>,
    /// (M*F) x len waveform spectra.
    wave_spectra: Vec<Complex<T>>,
    /// M x len filter spectra.
    filt_spectra: Vec<Complex<T>>,
    cross_buf: Vec<Complex<T>>,
}

impl<T: Real> AfWorkspace<T> {
    pub fn new(n_samples: usize, n_channels: usize, grid: DelayDopplerGrid<T>) -> Result<Self> {
        if grid.max_abs_delay() >= n_samples as i64 {
            return Err(Error::GridBounds(format!(
                "grid delay {} out of range for N = {n_samples}",
                grid.max_abs_delay()
            )));
        }
        let corr = Correlator::new(n_samples);
        let len = corr.len();
        let f_bins = grid.n_dopplers();
        let n = T::of(n_samples as f64);
        let tau = T::TAU();
        let mut modvecs = Vec::with_capacity(f_bins * n_samples);
        for &f in grid.dopplers() {
            for i in 0..n_samples {
                modvecs.push(Complex::cis(tau * T::of((i + 1) as f64) * f / n));
            }
        }
        Ok(Self {
            n: n_samples,
            n_channels,
            corr,
            grid,
            modvecs,
            waveforms: vec![Complex::zero(); n_channels * n_samples],
            modulated: vec![Complex::zero(); n_channels * f_bins * n_samples],
            filters: vec![Complex::zero(); n_channels * n_samples],
            wave_spectra: vec![Complex::zero(); n_channels * f_bins * len],
            filt_spectra: vec![Complex::zero(); n_channels * len],
            cross_buf: vec![Complex::zero(); len],
        })
    }

    pub fn grid(&self) -> &DelayDopplerGrid<T> {
        &self.grid
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    /// Doppler ramp for bin `fi`.
    pub fn modvec(&self, fi: usize) -> &[Complex<T>] {
        &self.modvecs[fi * self.n..(fi + 1) * self.n]
    }

    /// Modulated waveform `x_m .* ramp(fi)` from the last `set_waveforms`.
    pub fn modulated(&self, m: usize, fi: usize) -> &[Complex<T>] {
        let f_bins = self.grid.n_dopplers();
        let base = (m * f_bins + fi) * self.n;
        &self.modulated[base..base + self.n]
    }

    pub fn waveform(&self, m: usize) -> &[Complex<T>] {
        &self.waveforms[m * self.n..(m + 1) * self.n]
    }

    pub fn filter(&self, l: usize) -> &[Complex<T>] {
        &self.filters[l * self.n..(l + 1) * self.n]
    }

    /// Refresh the transmit side: modulate per bin and take spectra.
    pub fn set_waveforms(&mut self, x: &WaveformMatrix<T>) -> Result<()> {
        self.check_dims(x.n_samples(), x.n_channels())?;
        self.waveforms.copy_from_slice(x.as_slice());
        let f_bins = self.grid.n_dopplers();
        let len = self.corr.len();
        for m in 0..self.n_channels {
            let col = x.column(m);
            for fi in 0..f_bins {
                let base = (m * f_bins + fi) * self.n;
                for i in 0..self.n {
                    self.modulated[base + i] = col[i] * self.modvecs[fi * self.n + i];
                }
                let sbase = (m * f_bins + fi) * len;
                self.corr.spectrum_into(
                    &self.modulated[base..base + self.n],
                    &mut self.wave_spectra[sbase..sbase + len],
                );
            }
        }
        Ok(())
    }

    /// Refresh the receive side spectra.
    pub fn set_filters(&mut self, h: &FilterMatrix<T>) -> Result<()> {
        self.check_dims(h.n_samples(), h.n_channels())?;
        let len = self.corr.len();
        for l in 0..self.n_channels {
            let base = l * self.n;
            for i in 0..self.n {
                self.filters[base + i] = h.get(i, l);
            }
            self.corr.spectrum_into(
                &self.filters[base..base + self.n],
                &mut self.filt_spectra[l * len..(l + 1) * len],
            );
        }
        Ok(())
    }

    fn check_dims(&self, n: usize, m: usize) -> Result<()> {
        if n != self.n || m != self.n_channels {
            return Err(Error::DimensionMismatch(format!(
                "workspace is {}x{}, got {}x{}",
                self.n, self.n_channels, n, m
            )));
        }
        Ok(())
    }

    /// Mainlobe inner products `A_mm(0,0) = h_m^H x_m` per channel, from
    /// the currently set waveforms and filters.
    pub fn mainlobes(&self) -> Vec<Complex<T>> {
        (0..self.n_channels)
            .map(|m| {
                self.waveform(m)
                    .iter()
                    .zip(self.filter(m))
                    .map(|(&x, &h)| x * h.conj())
                    .fold(Complex::zero(), |a, b| a + b)
            })
            .collect()
    }

    pub fn make_surface(&self) -> AmbiguitySurface<T> {
        AmbiguitySurface::empty(self.n, self.n_channels, self.grid.clone())
    }

    /// Fill `surf` with the ambiguity values of the currently set
    /// waveform/filter pair over the whole grid. Deterministic: channel
    /// pairs, Doppler bins and delays are walked in fixed order.
    pub fn fill_surface(&mut self, surf: &mut AmbiguitySurface<T>) {
        debug_assert_eq!(surf.n_channels, self.n_channels);
        debug_assert_eq!(surf.grid.n_delays(), self.grid.n_delays());
        let f_bins = self.grid.n_dopplers();
        let d_bins = self.grid.n_delays();
        let len = self.corr.len();
        let n_ch = self.n_channels;
        let Self { corr, wave_spectra, filt_spectra, cross_buf, grid, .. } = self;
        for m in 0..n_ch {
            for l in 0..n_ch {
                for fi in 0..f_bins {
                    let wbase = (m * f_bins + fi) * len;
                    let fbase = l * len;
                    corr.cross_into(
                        &wave_spectra[wbase..wbase + len],
                        &filt_spectra[fbase..fbase + len],
                        cross_buf,
                    );
                    let pair_base = (m * n_ch + l) * d_bins;
                    for (di, &tau) in grid.delays().iter().enumerate() {
                        surf.values[(pair_base + di) * f_bins + fi] = lag_value(cross_buf, tau);
                    }
                }
            }
        }
    }
}

/// One-shot surface evaluation: build a workspace, set both sides,
/// compute every pair at every grid cell.
pub fn af_surface<T: Real>(
    x: &WaveformMatrix<T>,
    h: &FilterMatrix<T>,
    grid: &DelayDopplerGrid<T>,
) -> Result<AmbiguitySurface<T>> {
    if x.n_samples() != h.n_samples() || x.n_channels() != h.n_channels() {
        return Err(Error::DimensionMismatch(format!(
            "waveforms are {}x{}, filters {}x{}",
            x.n_samples(),
            x.n_channels(),
            h.n_samples(),
            h.n_channels()
        )));
    }
    let mut ws = AfWorkspace::new(x.n_samples(), x.n_channels(), grid.clone())?;
    ws.set_waveforms(x)?;
    ws.set_filters(h)?;
    let mut surf = ws.make_surface();
    ws.fill_surface(&mut surf);
    Ok(surf)
}
