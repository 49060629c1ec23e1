//! Alternating driver: hard-quantized filter updates (Step A), soft
//! transmit-side updates (Step B), threshold projection, best-snapshot
//! tracking and the stopping rule.
//!
//! Each outer iteration holds the hard waveform fixed for N_h projected
//! Adam steps on the filters, then holds the filters fixed for N_x Adam
//! steps on the generator parameters and quantizer thresholds through
//! the soft chain (regenerated every inner step, since the parameters
//! move). The hard-quantized pair is re-evaluated once per outer
//! iteration; the best-by-hard-WPSL snapshot is what a run returns,
//! with the final iterate kept alongside it.

use serde::{Deserialize, Serialize};

use crate::autodiff::{
    adam_step, project_filter_energy, transmit_pass, AdamState, DegeneracyPolicy, LossEngine,
};
use crate::config::DesignConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::net::{net_forward, net_init, NetParams};
use crate::quantizer::{
    hard_quantize, init_quantizer, project_thresholds, soft_quantize, QuantizerParams,
};
use crate::real::Real;
use crate::types::{
    phases_to_waveform, random_discrete_phase_init, FilterMatrix, PhaseMatrix, WaveformMatrix,
};

/// Minimum hard-WPSL improvement (linear, N-normalized) that resets the
/// stall window of the stopping rule.
pub const WPSL_IMPROVEMENT_TOL: f64 = 1e-6;

/// Achieved-vs-target SNR-loss deviation (dB) beyond which a channel is
/// flagged in the result.
pub const SNRL_FLAG_DB: f64 = 0.25;

const NET_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Per-outer-iteration record: the training loss of the last soft pass
/// and the freshly evaluated hard-quantized metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord<T> {
    pub iter: usize,
    pub loss_total: T,
    pub loss_wpsl: T,
    pub loss_snrl: T,
    pub soft_wpsl: T,
    pub hard_wpsl: T,
    pub hard_wapsl: T,
    pub hard_wcpsl: T,
    pub hard_pslr_db: T,
    pub snrl_db: Vec<T>,
    pub best_hard_wpsl: T,
}

/// Best-by-hard-WPSL iterate seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSnapshot<T> {
    pub iter: usize,
    pub hard_phases: PhaseMatrix<T>,
    pub filters: FilterMatrix<T>,
    pub report: MetricReport<T>,
}

/// Complete mutable state of a run; serializing it captures everything
/// needed to continue the trajectory bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState<T> {
    pub net: NetParams<T>,
    pub quant: QuantizerParams<T>,
    pub filters: FilterMatrix<T>,
    pub seed_phases: PhaseMatrix<T>,
    pub adam_filters_re: AdamState<T>,
    pub adam_filters_im: AdamState<T>,
    pub adam_net: AdamState<T>,
    pub adam_thresholds: AdamState<T>,
    /// Hard phases of the current iterate (Step A input).
    pub hard_phases: PhaseMatrix<T>,
    pub first_hard_phases: PhaseMatrix<T>,
    pub best: BestSnapshot<T>,
    pub history: Vec<HistoryRecord<T>>,
    pub t: usize,
}

/// Soft/hard waveform pair generated from the current transmit state.
pub struct GeneratedWaveforms<T> {
    pub x_soft: WaveformMatrix<T>,
    pub x_hard: WaveformMatrix<T>,
    pub hard_phases: PhaseMatrix<T>,
}

/// Run the generator and both quantizers: `z = f(y0)`, soft and hard
/// phases, and their unimodular waveforms.
pub fn generate_waveforms<T: Real>(
    net: &NetParams<T>,
    quant: &QuantizerParams<T>,
    y0: &[T],
    n_samples: usize,
    n_channels: usize,
) -> Result<GeneratedWaveforms<T>> {
    let (z, _) = net_forward(net, y0)?;
    let soft = soft_quantize(&z, quant);
    let hard = hard_quantize(&z, quant);
    let soft_phases = PhaseMatrix::from_vec(soft, n_samples, n_channels)?;
    let hard_phases = PhaseMatrix::from_vec(hard, n_samples, n_channels)?;
    Ok(GeneratedWaveforms {
        x_soft: phases_to_waveform(&soft_phases),
        x_hard: phases_to_waveform(&hard_phases),
        hard_phases,
    })
}

/// Outcome of a design run. Metrics are recomputed from scratch on the
/// returned pair, never read back from history.
#[derive(Debug, Clone)]
pub struct DesignResult<T> {
    /// Best-by-hard-WPSL waveform set, phases reduced to the canonical
    /// alphabet representatives.
    pub x_hard: WaveformMatrix<T>,
    pub hard_phases: PhaseMatrix<T>,
    pub filters: FilterMatrix<T>,
    pub report: MetricReport<T>,
    pub best_iter: usize,
    /// Final iterate, exported alongside the best snapshot.
    pub final_x_hard: WaveformMatrix<T>,
    pub final_hard_phases: PhaseMatrix<T>,
    pub final_filters: FilterMatrix<T>,
    pub final_report: MetricReport<T>,
    pub history: Vec<HistoryRecord<T>>,
    pub config: DesignConfig<T>,
    pub seed_phases: PhaseMatrix<T>,
    pub first_hard_phases: PhaseMatrix<T>,
    pub iterations_run: usize,
    pub stopped_early: bool,
    /// Channels whose achieved SNR loss deviates from the target by
    /// more than [`SNRL_FLAG_DB`].
    pub snrl_flags: Vec<bool>,
    pub duration_secs: f64,
}

/// Initialize a run: random discrete seed phases, matched projected
/// filters, seeded generator, uniform-midpoint quantizer.
pub fn init_run_state<T: Real>(config: &DesignConfig<T>) -> Result<RunState<T>> {
    config.validate()?;
    let seed_phases = random_discrete_phase_init::<T>(
        config.n_channels,
        config.n_samples,
        config.alphabet_levels,
        config.seed,
    )?;
    let x0 = phases_to_waveform(&seed_phases);
    let mut filters = FilterMatrix::matched_to(&x0);
    project_filter_energy(&mut filters)?;
    let net = net_init::<T>(
        config.seed ^ NET_SEED_SALT,
        config.phase_dim(),
        config.net_depth,
        config.net_width,
    );
    let quant = init_quantizer(config.alphabet_levels, config.copy_factor, config.steepness)?;

    let gen = generate_waveforms(&net, &quant, seed_phases.as_slice(), config.n_samples, config.n_channels)?;
    let mut engine = LossEngine::with_policy(config, DegeneracyPolicy::Subgradient)?;
    let init_report = engine.eval_pair(&x0, &filters)?;

    let nm = config.phase_dim();
    let best = BestSnapshot {
        iter: 0,
        hard_phases: seed_phases.clone(),
        filters: filters.clone(),
        report: init_report.clone(),
    };
    let record = HistoryRecord {
        iter: 0,
        loss_total: init_report.loss_total,
        loss_wpsl: init_report.loss_wpsl,
        loss_snrl: init_report.loss_snrl,
        soft_wpsl: init_report.wpsl_linear,
        hard_wpsl: init_report.wpsl_linear,
        hard_wapsl: init_report.wapsl_linear,
        hard_wcpsl: init_report.wcpsl_linear,
        hard_pslr_db: init_report.apsl_db,
        snrl_db: init_report.snrl_db.clone(),
        best_hard_wpsl: init_report.wpsl_linear,
    };
    let adam_net = AdamState::new(net.data.len(), config.lr_transmit);
    let adam_thresholds = AdamState::new(quant.thresholds.len(), config.lr_transmit);
    Ok(RunState {
        net,
        quant,
        filters,
        seed_phases,
        adam_filters_re: AdamState::new(nm, config.lr_filter),
        adam_filters_im: AdamState::new(nm, config.lr_filter),
        adam_net,
        adam_thresholds,
        hard_phases: gen.hard_phases.clone(),
        first_hard_phases: gen.hard_phases,
        best,
        history: vec![record],
        t: 0,
    })
}

/// Step (A): N_h projected Adam steps on the filters against the fixed
/// hard waveform. Touches only the filters and their Adam moments.
pub fn step_a_update_filters<T: Real>(
    engine: &mut LossEngine<T>,
    state: &mut RunState<T>,
    config: &DesignConfig<T>,
) -> Result<MetricReport<T>> {
    let x_hard = phases_to_waveform(&state.hard_phases);
    engine.set_waveforms(&x_hard)?;
    let mut last = None;
    for _ in 0..config.inner_filter_steps {
        let (report, grads) = engine.filters_pass(&state.filters)?;
        if !report.loss_total.is_finite() {
            return Err(Error::AbortStep("non-finite loss in filter update".into()));
        }
        adam_step(&mut state.adam_filters_re, &mut state.filters.re, &grads.re)?;
        adam_step(&mut state.adam_filters_im, &mut state.filters.im, &grads.im)?;
        project_filter_energy(&mut state.filters)?;
        last = Some(report);
    }
    Ok(last.expect("at least one inner filter step"))
}

/// Step (B): N_x Adam steps on the generator parameters and thresholds
/// through the soft chain, filters fixed. Thresholds are re-projected
/// after every step.
pub fn step_b_update_transmit<T: Real>(
    engine: &mut LossEngine<T>,
    state: &mut RunState<T>,
    config: &DesignConfig<T>,
) -> Result<MetricReport<T>> {
    engine.set_filters(&state.filters)?;
    let y0: Vec<T> = state.seed_phases.as_slice().to_vec();
    let mut last = None;
    for _ in 0..config.inner_transmit_steps {
        let (report, grads) = transmit_pass(engine, &state.net, &state.quant, &y0, config)?;
        if !report.loss_total.is_finite() {
            return Err(Error::AbortStep("non-finite loss in transmit update".into()));
        }
        adam_step(&mut state.adam_net, &mut state.net.data, &grads.net)?;
        adam_step(&mut state.adam_thresholds, &mut state.quant.thresholds, &grads.thresholds)?;
        state.quant.thresholds = project_thresholds(&state.quant.thresholds);
        last = Some(report);
    }
    Ok(last.expect("at least one inner transmit step"))
}

/// Learning-rate factor for outer iteration `t` (1-based): geometric
/// decay from 1 at t=1 to `floor` at t=T.
pub fn lr_decay_factor<T: Real>(t: usize, max_outer: usize, floor: T) -> T {
    if max_outer <= 1 || floor >= T::one() {
        return T::one();
    }
    let expo = T::of((t.saturating_sub(1)) as f64) / T::of((max_outer - 1) as f64);
    floor.powf(expo)
}

/// Stop when the run hit the iteration cap, or when the best hard WPSL
/// stalled for `patience` outer iterations while the training loss kept
/// decreasing over that window.
pub fn stopping_check<T: Real>(
    history: &[HistoryRecord<T>],
    patience: usize,
    max_outer: usize,
) -> bool {
    let Some(last) = history.last() else { return false };
    if last.iter >= max_outer {
        return true;
    }
    if history.len() < patience + 1 {
        return false;
    }
    let past = &history[history.len() - 1 - patience];
    let improved = past.best_hard_wpsl - last.best_hard_wpsl >= T::of(WPSL_IMPROVEMENT_TOL);
    let loss_decreased = last.loss_total < past.loss_total;
    !improved && loss_decreased
}

/// Run the alternating design from a fresh state.
pub fn run_design<T: Real>(config: &DesignConfig<T>) -> Result<DesignResult<T>> {
    run_design_with(config, |_| {})
}

/// Run with a per-iteration observer for progress reporting.
pub fn run_design_with<T: Real>(
    config: &DesignConfig<T>,
    observer: impl FnMut(&HistoryRecord<T>),
) -> Result<DesignResult<T>> {
    let state = init_run_state(config)?;
    Ok(resume_design(config, state, observer)?.0)
}

/// Continue a run from saved state until the stopping rule fires.
/// Returns the result together with the final state, which is what a
/// resume snapshot has to capture.
pub fn resume_design<T: Real>(
    config: &DesignConfig<T>,
    mut state: RunState<T>,
    mut observer: impl FnMut(&HistoryRecord<T>),
) -> Result<(DesignResult<T>, RunState<T>)> {
    config.validate()?;
    let start = std::time::Instant::now();
    let mut engine = LossEngine::with_policy(config, DegeneracyPolicy::Subgradient)?;
    let mut stopped_early = false;

    while state.t < config.outer_iters {
        let t = state.t + 1;
        let wrap = |e: Error| Error::RunAborted { iter: t, message: e.to_string() };

        let decay = lr_decay_factor(t, config.outer_iters, config.lr_decay_floor);
        state.adam_filters_re.lr = config.lr_filter * decay;
        state.adam_filters_im.lr = config.lr_filter * decay;
        state.adam_net.lr = config.lr_transmit * decay;
        state.adam_thresholds.lr = config.lr_transmit * decay;

        step_a_update_filters(&mut engine, &mut state, config).map_err(wrap)?;

        // evaluate the matched pairing: the current hard iterate with
        // the filters Step A just trained against it
        let x_hard = phases_to_waveform(&state.hard_phases);
        let hard_report = engine.eval_pair(&x_hard, &state.filters).map_err(wrap)?;
        if hard_report.wpsl_linear < state.best.report.wpsl_linear {
            state.best = BestSnapshot {
                iter: t,
                hard_phases: state.hard_phases.clone(),
                filters: state.filters.clone(),
                report: hard_report.clone(),
            };
        }

        let soft_report = step_b_update_transmit(&mut engine, &mut state, config).map_err(wrap)?;

        // regenerate with the updated transmit side; this is the hard
        // iterate Step A will see next
        let gen = generate_waveforms(
            &state.net,
            &state.quant,
            state.seed_phases.as_slice(),
            config.n_samples,
            config.n_channels,
        )
        .map_err(wrap)?;
        state.hard_phases = gen.hard_phases;
        let record = HistoryRecord {
            iter: t,
            loss_total: soft_report.loss_total,
            loss_wpsl: soft_report.loss_wpsl,
            loss_snrl: soft_report.loss_snrl,
            soft_wpsl: soft_report.wpsl_linear,
            hard_wpsl: hard_report.wpsl_linear,
            hard_wapsl: hard_report.wapsl_linear,
            hard_wcpsl: hard_report.wcpsl_linear,
            hard_pslr_db: hard_report.apsl_db,
            snrl_db: hard_report.snrl_db.clone(),
            best_hard_wpsl: state.best.report.wpsl_linear,
        };
        observer(&record);
        state.history.push(record);
        state.t = t;

        if stopping_check(&state.history, config.patience, config.outer_iters) {
            stopped_early = state.t < config.outer_iters;
            break;
        }
    }

    let result = finalize(config, &state, &mut engine, stopped_early, start.elapsed().as_secs_f64())?;
    Ok((result, state))
}

/// Canonicalize phases onto `{b/B}`, rebuild the waveforms and recompute
/// metrics from scratch for both the best snapshot and the final iterate.
fn finalize<T: Real>(
    config: &DesignConfig<T>,
    state: &RunState<T>,
    engine: &mut LossEngine<T>,
    stopped_early: bool,
    duration_secs: f64,
) -> Result<DesignResult<T>> {
    let canonical = |phases: &PhaseMatrix<T>| -> Result<(PhaseMatrix<T>, WaveformMatrix<T>)> {
        let idx = phases.alphabet_indices(config.alphabet_levels)?;
        let levels = T::of(config.alphabet_levels as f64);
        let values = idx.iter().map(|&b| T::of(b as f64) / levels).collect();
        let p = PhaseMatrix::from_vec(values, phases.n_samples(), phases.n_channels())?;
        let x = phases_to_waveform(&p);
        Ok((p, x))
    };

    let (best_phases, best_x) = canonical(&state.best.hard_phases)?;
    let report = engine.eval_pair(&best_x, &state.best.filters)?;
    let (final_phases, final_x) = canonical(&state.hard_phases)?;
    let final_report = engine.eval_pair(&final_x, &state.filters)?;

    let snrl_flags = report
        .snrl_db
        .iter()
        .map(|&s| (s - config.snrl_target_db).abs() > T::of(SNRL_FLAG_DB))
        .collect();

    Ok(DesignResult {
        x_hard: best_x,
        hard_phases: best_phases,
        filters: state.best.filters.clone(),
        report,
        best_iter: state.best.iter,
        final_x_hard: final_x,
        final_hard_phases: final_phases,
        final_filters: state.filters.clone(),
        final_report,
        history: state.history.clone(),
        config: config.clone(),
        seed_phases: state.seed_phases.clone(),
        first_hard_phases: state.first_hard_phases.clone(),
        iterations_run: state.t,
        stopped_early,
        snrl_flags,
        duration_secs,
    })
}
