//! Joint design of unimodular discrete-phase waveform sets and receive
//! filters for multi-channel radar, driven by delay-Doppler ambiguity
//! shaping.
//!
//! The library alternates between two blocks: receive filters are updated
//! by projected Adam steps against the hard-quantized transmit set, and
//! the transmit side is updated through a differentiable soft-quantization
//! path (residual generator network + trainable-threshold quantizer).
//! Ambiguity and cross-ambiguity surfaces are evaluated with FFT-based
//! aperiodic correlation per Doppler bin.
//!
//! All numeric code is generic over the scalar type via [`Real`]; `f64`
//! aliases are exported at the crate root and are what the CLI uses.

pub mod af;
pub mod autodiff;
pub mod baselines;
pub mod config;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod net;
pub mod optimizer;
pub mod quantizer;
pub mod types;

mod real;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use real::Real;

pub use af::AmbiguitySurface;
pub use config::DesignConfig;
pub use grid::DelayDopplerGrid;
pub use metrics::MetricReport;
pub use net::NetParams;
pub use optimizer::{DesignResult, RunState};
pub use quantizer::QuantizerParams;
pub use types::{FilterMatrix, PhaseMatrix, WaveformMatrix};

/// Concrete `f64` aliases for the main domain types.
pub type PhaseMatrix64 = types::PhaseMatrix<f64>;
pub type WaveformMatrix64 = types::WaveformMatrix<f64>;
pub type FilterMatrix64 = types::FilterMatrix<f64>;
pub type DelayDopplerGrid64 = grid::DelayDopplerGrid<f64>;
pub type DesignConfig64 = config::DesignConfig<f64>;
pub type DesignResult64 = optimizer::DesignResult<f64>;
pub type MetricReport64 = metrics::MetricReport<f64>;
