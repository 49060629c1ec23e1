//! The discrete delay-Doppler region of interest: delay lags, Doppler
//! bins, per-cell sidelobe weights and the auto-ambiguity delay
//! exclusions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Region of interest over which sidelobes are searched and penalized.
///
/// Weights are stored dense, indexed `[delay_index * n_dopplers +
/// doppler_index]`. Delays listed in `auto_exclusions` are skipped when
/// searching auto-ambiguity sidelobes (the whole Doppler column at that
/// delay); cross-ambiguity search has no exclusions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayDopplerGrid<T> {
    delays: Vec<i64>,
    dopplers: Vec<T>,
    weights: Vec<T>,
    auto_exclusions: Vec<i64>,
}

impl<T: Real> DelayDopplerGrid<T> {
    pub fn new(
        delays: Vec<i64>,
        dopplers: Vec<T>,
        weights: Vec<T>,
        auto_exclusions: Vec<i64>,
    ) -> Result<Self> {
        if delays.is_empty() || dopplers.is_empty() {
            return Err(Error::GridBounds("grid must have at least one cell".into()));
        }
        if !delays.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::GridBounds("delays must be strictly increasing".into()));
        }
        if !dopplers.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::GridBounds("dopplers must be strictly increasing".into()));
        }
        if weights.len() != delays.len() * dopplers.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {}x{} grid",
                weights.len(),
                delays.len(),
                dopplers.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::GridBounds("weights must be finite and nonnegative".into()));
        }
        if weights.iter().all(|w| *w == T::zero()) {
            return Err(Error::GridBounds("all weights are zero".into()));
        }
        Ok(Self { delays, dopplers, weights, auto_exclusions })
    }

    pub fn delays(&self) -> &[i64] {
        &self.delays
    }

    pub fn dopplers(&self) -> &[T] {
        &self.dopplers
    }

    pub fn n_delays(&self) -> usize {
        self.delays.len()
    }

    pub fn n_dopplers(&self) -> usize {
        self.dopplers.len()
    }

    pub fn weight_at(&self, delay_idx: usize, doppler_idx: usize) -> T {
        self.weights[delay_idx * self.dopplers.len() + doppler_idx]
    }

    pub fn set_weight(&mut self, delay_idx: usize, doppler_idx: usize, w: T) {
        self.weights[delay_idx * self.dopplers.len() + doppler_idx] = w;
    }

    pub fn auto_exclusions(&self) -> &[i64] {
        &self.auto_exclusions
    }

    pub fn is_auto_excluded(&self, tau: i64) -> bool {
        self.auto_exclusions.contains(&tau)
    }

    pub fn max_abs_delay(&self) -> i64 {
        self.delays.iter().map(|t| t.abs()).max().unwrap_or(0)
    }

    /// Iterate `(tau, doppler_index, weight)` over all cells in
    /// (delay, doppler) order.
    pub fn iter_cells(&self) -> impl Iterator<Item = (i64, usize, T)> + '_ {
        self.delays.iter().enumerate().flat_map(move |(di, &tau)| {
            (0..self.dopplers.len()).map(move |fi| (tau, fi, self.weight_at(di, fi)))
        })
    }
}

/// Build a uniformly weighted rectangular ROI.
///
/// Delays are all integers in `[delay_lo, delay_hi]`; Doppler bins are
/// `n_doppler` points spanning `[f_lo, f_hi]` inclusive, with an exact 0
/// inserted whenever the range brackets zero and the lattice misses it.
/// Weights are 1 everywhere; the auto exclusion set is `{0}`.
pub fn build_grid<T: Real>(
    delay_lo: i64,
    delay_hi: i64,
    f_lo: T,
    f_hi: T,
    n_doppler: usize,
    n_samples: usize,
) -> Result<DelayDopplerGrid<T>> {
    let n = n_samples as i64;
    if delay_lo > delay_hi {
        return Err(Error::GridBounds(format!("delay_lo {delay_lo} > delay_hi {delay_hi}")));
    }
    if delay_lo <= -n || delay_hi >= n {
        return Err(Error::GridBounds(format!(
            "delay range [{delay_lo}, {delay_hi}] exceeds [-{}, {}]",
            n - 1,
            n - 1
        )));
    }
    if f_lo > f_hi {
        return Err(Error::GridBounds("f_lo > f_hi".into()));
    }
    if n_doppler == 0 {
        return Err(Error::GridBounds("n_doppler must be >= 1".into()));
    }
    if f_lo == f_hi && n_doppler > 1 {
        return Err(Error::GridBounds("degenerate Doppler range needs n_doppler = 1".into()));
    }

    let delays: Vec<i64> = (delay_lo..=delay_hi).collect();

    // Endpoint-weighted linspace: hits both ends exactly and lands on an
    // exact 0 for symmetric ranges with an odd bin count.
    let mut dopplers: Vec<T> = if n_doppler == 1 {
        vec![f_lo]
    } else {
        let denom = T::of((n_doppler - 1) as f64);
        (0..n_doppler)
            .map(|i| {
                if i == 0 {
                    f_lo
                } else if i == n_doppler - 1 {
                    f_hi
                } else {
                    let wi = T::of(i as f64);
                    (f_lo * (denom - wi) + f_hi * wi) / denom
                }
            })
            .collect()
    };
    if f_lo < T::zero() && f_hi > T::zero() && !dopplers.iter().any(|f| *f == T::zero()) {
        let pos = dopplers.iter().position(|f| *f > T::zero()).unwrap_or(dopplers.len());
        dopplers.insert(pos, T::zero());
    }

    let weights = vec![T::one(); delays.len() * dopplers.len()];
    DelayDopplerGrid::new(delays, dopplers, weights, vec![0])
}
