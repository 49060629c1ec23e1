//! Full specification of a design run and its validation rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_grid, DelayDopplerGrid};
use crate::real::Real;

/// How the peak-sidelobe term of the loss is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MaxMode<T> {
    /// Route the full gradient to the unique maximizing cell
    /// (subgradient selection, ties broken lexicographically).
    Subgradient,
    /// Log-sum-exp surrogate with the given sharpness; changes both the
    /// loss value and its gradient. Ablation switch.
    SmoothMax { beta: T },
}

/// Everything a design run needs: problem size, ROI, loss trade-offs,
/// optimizer schedule and seeding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig<T> {
    /// Number of transmit channels M.
    pub n_channels: usize,
    /// Sequence length N.
    pub n_samples: usize,
    /// Phase alphabet size B.
    pub alphabet_levels: usize,
    /// Quantizer copy factor r_n.
    pub copy_factor: usize,
    /// Quantizer transition steepness c.
    pub steepness: T,
    /// Delay-Doppler region of interest.
    pub grid: DelayDopplerGrid<T>,
    /// Target SNR loss in dB (>= 0).
    pub snrl_target_db: T,
    /// Trade-off between sidelobe and mainlobe terms, in [0, 1].
    pub epsilon: T,
    /// Adam learning rate for the receive filters (initial).
    pub lr_filter: T,
    /// Adam learning rate for the transmit-side parameters (initial).
    pub lr_transmit: T,
    /// Geometric learning-rate decay: both rates fall to `floor x
    /// initial` by the final outer iteration. 1 disables decay. The
    /// constant-rate minimax iteration orbits instead of converging, so
    /// the late-run filter refinement needs the smaller steps.
    pub lr_decay_floor: T,
    /// Inner Adam steps on the filters per outer iteration.
    pub inner_filter_steps: usize,
    /// Inner Adam steps on the transmit side per outer iteration.
    pub inner_transmit_steps: usize,
    /// Maximum number of outer iterations T.
    pub outer_iters: usize,
    /// Stall window (outer iterations) for the stopping rule.
    pub patience: usize,
    /// Seed for all random initialization.
    pub seed: u64,
    /// Residual blocks in the generator network.
    pub net_depth: usize,
    /// Hidden width of the generator network.
    pub net_width: usize,
    /// Differentiation mode for the peak-sidelobe max.
    pub max_mode: MaxMode<T>,
}

impl<T: Real> DesignConfig<T> {
    /// Baseline configuration: M=2, N=512, B=4, ROI tau in [-50, 50],
    /// f in [-0.5, 0.5] with 21 bins, 0.5 dB SNR-loss target, and the
    /// stock optimizer schedule.
    pub fn standard() -> Self {
        let n_samples = 512;
        DesignConfig {
            n_channels: 2,
            n_samples,
            alphabet_levels: 4,
            copy_factor: 100,
            steepness: T::of(300.0),
            grid: build_grid(-50, 50, T::of(-0.5), T::of(0.5), 21, n_samples)
                .expect("default grid"),
            snrl_target_db: T::of(0.5),
            epsilon: T::of(0.1),
            lr_filter: T::of(5e-2),
            lr_transmit: T::of(1e-5),
            lr_decay_floor: T::of(0.04),
            inner_filter_steps: 10,
            inner_transmit_steps: 10,
            outer_iters: 2000,
            patience: 200,
            seed: 1,
            net_depth: 5,
            net_width: 128,
            max_mode: MaxMode::Subgradient,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn fail<X>(field: &str, message: impl Into<String>) -> Result<X> {
            Err(Error::Validation { field: field.into(), message: message.into() })
        }
        if self.n_channels == 0 {
            return fail("n_channels", "must be positive");
        }
        if self.n_samples == 0 {
            return fail("n_samples", "must be positive");
        }
        if self.alphabet_levels < 2 {
            return fail("alphabet_levels", "need at least 2 phase levels");
        }
        if self.copy_factor == 0 {
            return fail("copy_factor", "must be positive");
        }
        if !(self.steepness > T::zero()) {
            return fail("steepness", "must be positive");
        }
        if !(self.snrl_target_db >= T::zero()) {
            return fail("snrl_target_db", "must be >= 0 dB");
        }
        if !(self.epsilon >= T::zero() && self.epsilon <= T::one()) {
            return fail("epsilon", "must lie in [0, 1]");
        }
        if !(self.lr_filter > T::zero()) {
            return fail("lr_filter", "must be positive");
        }
        if !(self.lr_transmit > T::zero()) {
            return fail("lr_transmit", "must be positive");
        }
        if !(self.lr_decay_floor > T::zero() && self.lr_decay_floor <= T::one()) {
            return fail("lr_decay_floor", "must lie in (0, 1]");
        }
        for (name, v) in [
            ("inner_filter_steps", self.inner_filter_steps),
            ("inner_transmit_steps", self.inner_transmit_steps),
            ("outer_iters", self.outer_iters),
            ("patience", self.patience),
            ("net_depth", self.net_depth),
            ("net_width", self.net_width),
        ] {
            if v == 0 {
                return fail(name, "must be >= 1");
            }
        }
        if self.grid.max_abs_delay() >= self.n_samples as i64 {
            return fail(
                "grid",
                format!(
                    "delay {} out of range for N = {}",
                    self.grid.max_abs_delay(),
                    self.n_samples
                ),
            );
        }
        if let MaxMode::SmoothMax { beta } = self.max_mode {
            if !(beta > T::zero()) {
                return fail("max_mode.beta", "smooth-max sharpness must be positive");
            }
        }
        Ok(())
    }

    /// Total number of scalar design variables on the transmit side.
    pub fn phase_dim(&self) -> usize {
        self.n_samples * self.n_channels
    }
}
