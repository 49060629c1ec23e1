//! Reference designs for comparison and oracle validation: matched
//! filters, random discrete draws, exhaustive per-entry coordinate
//! descent, and tiny-instance global brute force.
//!
//! All of these evaluate matched-filter WPSL: the candidate waveform set
//! against its own conjugate bank.

use serde::{Deserialize, Serialize};

use crate::af::{AfWorkspace, AmbiguitySurface};
use crate::autodiff::LossEngine;
use crate::config::DesignConfig;
use crate::error::{Error, Result};
use crate::metrics::{scan_peaks, MetricReport};
use crate::real::Real;
use crate::types::{
    alphabet, phases_to_waveform, random_discrete_phase_init, FilterMatrix, PhaseMatrix,
    WaveformMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMethod {
    Matched,
    Random,
    CoordinateDescent,
    BruteForce,
}

impl BaselineMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            BaselineMethod::Matched => "matched",
            BaselineMethod::Random => "random",
            BaselineMethod::CoordinateDescent => "cd",
            BaselineMethod::BruteForce => "brute",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineResult<T> {
    pub method: BaselineMethod,
    pub phases: PhaseMatrix<T>,
    pub x: WaveformMatrix<T>,
    pub filters: FilterMatrix<T>,
    pub report: MetricReport<T>,
    /// Matched-filter WPSL (N-normalized) the search optimized.
    pub wpsl: T,
    pub evaluations: u64,
    /// False when a sweep budget ran out before a fixed point.
    pub converged: bool,
}

/// SNR-optimal bank for a transmit set: zero loss, mainlobe N.
pub fn matched_filter<T: Real>(x: &WaveformMatrix<T>) -> FilterMatrix<T> {
    FilterMatrix::matched_to(x)
}

/// Reusable matched-WPSL evaluator over one grid.
struct MatchedEvaluator<T: Real> {
    ws: AfWorkspace<T>,
    surf: AmbiguitySurface<T>,
}

impl<T: Real> MatchedEvaluator<T> {
    fn new(config: &DesignConfig<T>) -> Result<Self> {
        let ws = AfWorkspace::new(config.n_samples, config.n_channels, config.grid.clone())?;
        let surf = ws.make_surface();
        Ok(Self { ws, surf })
    }

    fn wpsl_of(&mut self, phases: &PhaseMatrix<T>) -> Result<T> {
        let x = phases_to_waveform(phases);
        let h = FilterMatrix::matched_to(&x);
        self.ws.set_waveforms(&x)?;
        self.ws.set_filters(&h)?;
        self.ws.fill_surface(&mut self.surf);
        let scan = scan_peaks(&self.surf);
        Ok(scan.wapsl.unwrap_or_else(T::zero).max(scan.wcpsl.unwrap_or_else(T::zero)))
    }
}

fn assemble<T: Real>(
    method: BaselineMethod,
    phases: PhaseMatrix<T>,
    config: &DesignConfig<T>,
    wpsl: T,
    evaluations: u64,
    converged: bool,
) -> Result<BaselineResult<T>> {
    let x = phases_to_waveform(&phases);
    let filters = FilterMatrix::matched_to(&x);
    let mut engine = LossEngine::new(config)?;
    let report = engine.eval_pair(&x, &filters)?;
    Ok(BaselineResult { method, phases, x, filters, report, wpsl, evaluations, converged })
}

/// Matched-filter evaluation of the seeded random draw (no search).
pub fn matched_baseline<T: Real>(config: &DesignConfig<T>) -> Result<BaselineResult<T>> {
    config.validate()?;
    let phases = random_discrete_phase_init::<T>(
        config.n_channels,
        config.n_samples,
        config.alphabet_levels,
        config.seed,
    )?;
    let mut eval = MatchedEvaluator::new(config)?;
    let wpsl = eval.wpsl_of(&phases)?;
    assemble(BaselineMethod::Matched, phases, config, wpsl, 1, true)
}

/// Best matched-filter WPSL among `n_draws` seeded random waveform sets.
/// Draw i uses seed + i, so best-of-n is nested in best-of-(n+1).
pub fn random_baseline<T: Real>(config: &DesignConfig<T>, n_draws: usize) -> Result<BaselineResult<T>> {
    config.validate()?;
    if n_draws == 0 {
        return Err(Error::Validation { field: "n_draws".into(), message: "must be >= 1".into() });
    }
    let mut eval = MatchedEvaluator::new(config)?;
    let mut best: Option<(T, PhaseMatrix<T>)> = None;
    for i in 0..n_draws {
        let phases = random_discrete_phase_init::<T>(
            config.n_channels,
            config.n_samples,
            config.alphabet_levels,
            config.seed.wrapping_add(i as u64),
        )?;
        let v = eval.wpsl_of(&phases)?;
        if best.as_ref().map_or(true, |(b, _)| v < *b) {
            best = Some((v, phases));
        }
    }
    let (wpsl, phases) = best.expect("n_draws >= 1");
    assemble(BaselineMethod::Random, phases, config, wpsl, n_draws as u64, true)
}

/// Greedy per-entry exhaustive coordinate descent with matched filters.
///
/// Starts from the seeded random draw, sweeps entries (channel-major,
/// sample order within a channel), tries every alphabet level and keeps
/// the strict WPSL minimizer (ties keep the incumbent). Stops after a
/// full sweep without change or after `max_sweeps`.
pub fn cd_exhaustive<T: Real>(config: &DesignConfig<T>, max_sweeps: usize) -> Result<BaselineResult<T>> {
    config.validate()?;
    if max_sweeps == 0 {
        return Err(Error::Validation { field: "max_sweeps".into(), message: "must be >= 1".into() });
    }
    let levels = alphabet::<T>(config.alphabet_levels)?;
    let mut phases = random_discrete_phase_init::<T>(
        config.n_channels,
        config.n_samples,
        config.alphabet_levels,
        config.seed,
    )?;
    let mut eval = MatchedEvaluator::new(config)?;
    let mut current = eval.wpsl_of(&phases)?;
    let mut evaluations = 1u64;
    let mut converged = false;

    for _ in 0..max_sweeps {
        let mut changed = false;
        for m in 0..config.n_channels {
            for n in 0..config.n_samples {
                let incumbent = phases.get(n, m);
                let mut best_v = current;
                let mut best_p = incumbent;
                for &p in &levels {
                    if p == incumbent {
                        continue;
                    }
                    let mut cand = phases.as_slice().to_vec();
                    cand[m * config.n_samples + n] = p;
                    let cand =
                        PhaseMatrix::from_vec(cand, config.n_samples, config.n_channels)?;
                    let v = eval.wpsl_of(&cand)?;
                    evaluations += 1;
                    if v < best_v {
                        best_v = v;
                        best_p = p;
                    }
                }
                if best_p != incumbent {
                    let mut data = phases.as_slice().to_vec();
                    data[m * config.n_samples + n] = best_p;
                    phases = PhaseMatrix::from_vec(data, config.n_samples, config.n_channels)?;
                    current = best_v;
                    changed = true;
                }
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    assemble(BaselineMethod::CoordinateDescent, phases, config, current, evaluations, converged)
}

/// Exhaustive search over every discrete waveform matrix. Ties keep the
/// first (lowest-lexicographic) argmin. Refuses instances whose
/// enumeration exceeds `budget`.
pub fn brute_force_optimum<T: Real>(config: &DesignConfig<T>, budget: u64) -> Result<BaselineResult<T>> {
    config.validate()?;
    let nm = config.phase_dim();
    let b = config.alphabet_levels;
    let required = (b as f64).powi(nm as i32);
    if !(required <= budget as f64) {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let total = required as u64;
    let levels = alphabet::<T>(b)?;
    let mut eval = MatchedEvaluator::new(config)?;

    let mut digits = vec![0usize; nm];
    let mut best_v: Option<T> = None;
    let mut best_digits = digits.clone();
    for _ in 0..total {
        let values: Vec<T> = digits.iter().map(|&d| levels[d]).collect();
        let phases = PhaseMatrix::from_vec(values, config.n_samples, config.n_channels)?;
        let v = eval.wpsl_of(&phases)?;
        if best_v.map_or(true, |bv| v < bv) {
            best_v = Some(v);
            best_digits.copy_from_slice(&digits);
        }
        // odometer increment, last digit fastest, so candidates appear
        // in lexicographic order of the flat index vector
        for i in (0..nm).rev() {
            digits[i] += 1;
            if digits[i] < b {
                break;
            }
            digits[i] = 0;
        }
    }
    let values: Vec<T> = best_digits.iter().map(|&d| levels[d]).collect();
    let phases = PhaseMatrix::from_vec(values, config.n_samples, config.n_channels)?;
    let wpsl = best_v.expect("at least one candidate");
    assemble(BaselineMethod::BruteForce, phases, config, wpsl, total, true)
}
