//! Scalar performance metrics over ambiguity surfaces: weighted peak
//! sidelobe levels, SNR loss, mainlobe ratios, PSLR reporting and the
//! composite training loss.
//!
//! All sidelobe magnitudes are divided by N inside the metrics and the
//! loss, so reported dB values are directly PSLR and the sidelobe term
//! stays commensurate with the order-1 mainlobe penalty.

use num_complex::Complex;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::af::AmbiguitySurface;
use crate::config::{DesignConfig, MaxMode};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::types::{FilterMatrix, WaveformMatrix};

/// Magnitudes below `1e-15 * N` (normalized: 1e-15) report this floor
/// instead of -inf, keeping exports finite.
pub const DB_FLOOR: f64 = -300.0;

/// Identifies one searched sidelobe cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub m: usize,
    pub l: usize,
    pub delay_idx: usize,
    pub doppler_idx: usize,
}

/// Peak search outcome over the weighted ROI.
#[derive(Debug, Clone, Copy)]
pub struct PeakScan<T> {
    /// max over auto cells (tau outside the exclusion set) of w|A|/N.
    pub wapsl: Option<T>,
    pub wapsl_cell: Option<Cell>,
    /// max over all ordered cross pairs of w|A|/N.
    pub wcpsl: Option<T>,
    pub wcpsl_cell: Option<Cell>,
    /// overall maximizing cell (lowest lexicographic (m,l,tau,f) on ties).
    pub argmax: Option<Cell>,
    pub max_value: T,
}

/// Single deterministic scan of every searchable cell.
///
/// Auto pairs skip delays in the grid's exclusion set; cross pairs are
/// searched everywhere. Ties keep the first cell in lexicographic
/// (m, l, tau, f) order because the scan only replaces on strict
/// improvement.
pub fn scan_peaks<T: Real>(surface: &AmbiguitySurface<T>) -> PeakScan<T> {
    let grid = surface.grid();
    let n = T::of(surface.n_samples() as f64);
    let m_ch = surface.n_channels();
    let mut scan = PeakScan {
        wapsl: None,
        wapsl_cell: None,
        wcpsl: None,
        wcpsl_cell: None,
        argmax: None,
        max_value: T::zero(),
    };
    for m in 0..m_ch {
        for l in 0..m_ch {
            for (di, &tau) in grid.delays().iter().enumerate() {
                let auto = m == l;
                if auto && grid.is_auto_excluded(tau) {
                    continue;
                }
                for fi in 0..grid.n_dopplers() {
                    let w = grid.weight_at(di, fi);
                    let v = w * surface.value(m, l, di, fi).norm() / n;
                    let cell = Cell { m, l, delay_idx: di, doppler_idx: fi };
                    if auto {
                        if scan.wapsl.map_or(true, |best| v > best) {
                            scan.wapsl = Some(v);
                            scan.wapsl_cell = Some(cell);
                        }
                    } else if scan.wcpsl.map_or(true, |best| v > best) {
                        scan.wcpsl = Some(v);
                        scan.wcpsl_cell = Some(cell);
                    }
                    if scan.argmax.is_none() || v > scan.max_value {
                        scan.argmax = Some(cell);
                        scan.max_value = v;
                    }
                }
            }
        }
    }
    scan
}

/// Weighted auto-ambiguity peak sidelobe level, N-normalized.
pub fn wapsl<T: Real>(surface: &AmbiguitySurface<T>) -> Result<T> {
    scan_peaks(surface).wapsl.ok_or(Error::EmptyRoi)
}

/// Weighted cross-ambiguity peak sidelobe level, N-normalized.
/// `None` flags the no-cross-terms case (single channel).
pub fn wcpsl<T: Real>(surface: &AmbiguitySurface<T>) -> Option<T> {
    if surface.n_channels() < 2 {
        return None;
    }
    scan_peaks(surface).wcpsl
}

/// SNR loss of a waveform/filter pair in dB:
/// `10 log10(|x|^2 |h|^2 / |x^H h|^2)`, nonnegative by Cauchy-Schwarz.
pub fn snrl<T: Real>(x: &[Complex<T>], h: &[Complex<T>]) -> Result<T> {
    if x.len() != h.len() || x.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "snrl needs equal nonempty lengths, got {} and {}",
            x.len(),
            h.len()
        )));
    }
    let ex: T = x.iter().map(|z| z.norm_sqr()).sum();
    let eh: T = h.iter().map(|z| z.norm_sqr()).sum();
    let inner = x
        .iter()
        .zip(h)
        .map(|(&a, &b)| a.conj() * b)
        .fold(Complex::<T>::zero(), |acc, z| acc + z);
    let mag = inner.norm();
    let floor = T::of(1e-12) * T::of(x.len() as f64);
    if mag < floor {
        return Err(Error::DegenerateMainlobe { inner: mag.as_f64(), floor: floor.as_f64() });
    }
    Ok(T::of(10.0) * (ex * eh / (mag * mag)).log10())
}

/// Normalized mainlobe amplitude `|h^H x| / N`.
pub fn mainlobe_ratio<T: Real>(x: &[Complex<T>], h: &[Complex<T>]) -> Result<T> {
    if x.len() != h.len() || x.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "mainlobe_ratio needs equal nonempty lengths, got {} and {}",
            x.len(),
            h.len()
        )));
    }
    let inner = x
        .iter()
        .zip(h)
        .map(|(&a, &b)| a * b.conj())
        .fold(Complex::<T>::zero(), |acc, z| acc + z);
    Ok(inner.norm() / T::of(x.len() as f64))
}

/// Target normalized mainlobe amplitude and absolute mainlobe target for
/// an SNR-loss budget of `mu_db` decibels.
pub fn snrl_target<T: Real>(mu_db: T, n_samples: usize) -> Result<(T, T)> {
    if !(mu_db >= T::zero()) {
        return Err(Error::InvalidTarget(format!("SNR-loss target {mu_db} dB must be >= 0")));
    }
    let p_tar = T::of(10.0).powf(-mu_db / T::of(20.0));
    Ok((p_tar, T::of(n_samples as f64) * p_tar))
}

/// Peak sidelobe ratio in dB from an unnormalized linear PSL.
pub fn pslr_db<T: Real>(psl: T, n_samples: usize) -> Result<T> {
    if !(psl > T::zero()) {
        return Err(Error::UndefinedMetric(format!("PSLR undefined for PSL = {psl}")));
    }
    Ok(T::of(20.0) * (psl / T::of(n_samples as f64)).log10())
}

/// dB of an N-normalized linear magnitude, floored at [`DB_FLOOR`].
pub fn db_or_floor<T: Real>(normalized: T) -> T {
    if normalized < T::of(1e-15) {
        T::of(DB_FLOOR)
    } else {
        T::of(20.0) * normalized.log10()
    }
}

/// Everything a run reports about one waveform/filter pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub wapsl_linear: T,
    pub wcpsl_linear: T,
    pub wpsl_linear: T,
    pub apsl_db: T,
    pub cpsl_db: T,
    pub snrl_db: Vec<T>,
    pub loss_total: T,
    pub loss_wpsl: T,
    pub loss_snrl: T,
    /// False when M = 1 and the cross search is empty.
    pub cross_terms_present: bool,
}

/// Composite loss and metric evaluation from a precomputed surface.
///
/// `loss_wpsl` is the max (or log-sum-exp surrogate) of the N-normalized
/// weighted magnitudes; `loss_snrl` is the mean squared mainlobe
/// deviation; the total blends them with the config's epsilon.
pub fn loss_total<T: Real>(
    surface: &AmbiguitySurface<T>,
    x: &WaveformMatrix<T>,
    h: &FilterMatrix<T>,
    config: &DesignConfig<T>,
) -> Result<MetricReport<T>> {
    if x.n_samples() != h.n_samples() || x.n_channels() != h.n_channels() {
        return Err(Error::DimensionMismatch(format!(
            "waveforms are {}x{}, filters {}x{}",
            x.n_samples(),
            x.n_channels(),
            h.n_samples(),
            h.n_channels()
        )));
    }
    let n = T::of(x.n_samples() as f64);
    let m_ch = x.n_channels();
    let scan = scan_peaks(surface);
    let wapsl_linear = scan.wapsl.unwrap_or_else(T::zero);
    let wcpsl_linear = scan.wcpsl.unwrap_or_else(T::zero);
    let wpsl_linear = wapsl_linear.max(wcpsl_linear);

    let loss_wpsl = match config.max_mode {
        MaxMode::Subgradient => wpsl_linear,
        MaxMode::SmoothMax { beta } => smooth_max(surface, beta),
    };

    let (p_tar, _) = snrl_target(config.snrl_target_db, x.n_samples())?;
    let mut loss_snrl = T::zero();
    let mut snrl_db = Vec::with_capacity(m_ch);
    for m in 0..m_ch {
        let hm = h.column_complex(m);
        let p_m = mainlobe_ratio(x.column(m), &hm)?;
        let d = p_m - p_tar;
        loss_snrl += d * d;
        snrl_db.push(snrl(x.column(m), &hm)?);
    }
    loss_snrl /= T::of(m_ch as f64);

    let eps = config.epsilon;
    let total = eps * loss_wpsl + (T::one() - eps) * loss_snrl;
    let _ = n;
    Ok(MetricReport {
        wapsl_linear,
        wcpsl_linear,
        wpsl_linear,
        apsl_db: db_or_floor(wapsl_linear),
        cpsl_db: db_or_floor(wcpsl_linear),
        snrl_db,
        loss_total: total,
        loss_wpsl,
        loss_snrl,
        cross_terms_present: m_ch > 1,
    })
}

/// Log-sum-exp surrogate of the peak scan, sharing its search set.
pub fn smooth_max<T: Real>(surface: &AmbiguitySurface<T>, beta: T) -> T {
    let grid = surface.grid();
    let n = T::of(surface.n_samples() as f64);
    let m_ch = surface.n_channels();
    let mut vals = Vec::new();
    let mut vmax = T::neg_infinity();
    for m in 0..m_ch {
        for l in 0..m_ch {
            for (di, &tau) in grid.delays().iter().enumerate() {
                if m == l && grid.is_auto_excluded(tau) {
                    continue;
                }
                for fi in 0..grid.n_dopplers() {
                    let v = grid.weight_at(di, fi) * surface.value(m, l, di, fi).norm() / n;
                    vmax = vmax.max(v);
                    vals.push(v);
                }
            }
        }
    }
    if vals.is_empty() {
        return T::zero();
    }
    let sum: T = vals.iter().map(|&v| ((v - vmax) * beta).exp()).sum();
    vmax + sum.ln() / beta
}
