//! Reverse-mode differentiation of the full loss path and the projected
//! Adam updates.
//!
//! The loss touches the ambiguity surface only through a handful of
//! cells: the peak-sidelobe cell (or, in smooth-max mode, every cell
//! with its softmax weight) and the M mainlobe cells. Each cell is an
//! aperiodic-correlation value, so its adjoint w.r.t. the filter entries
//! is `s * conj(unit) * x_mod(k - tau)` and w.r.t. the waveform entries
//! `s * unit * conj(ramp(i)) * h(i + tau)`, with `unit = A/|A|` and `s`
//! the upstream scalar into `|A|`. Phase gradients follow from
//! `dL/dy = 2 pi Im(d_x * conj(x))`. Gradients w.r.t. complex filter
//! entries are carried as independent real/imaginary partials.

use num_complex::Complex;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::af::{AfWorkspace, AmbiguitySurface};
use crate::config::{DesignConfig, MaxMode};
use crate::error::{Error, Result};
use crate::metrics::{db_or_floor, scan_peaks, snrl_target, Cell, MetricReport, PeakScan};
use crate::net::{net_backward, net_forward, NetParams};
use crate::quantizer::{self, QuantizerParams};
use crate::real::Real;
use crate::types::{phases_to_waveform, FilterMatrix, PhaseMatrix, WaveformMatrix};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second-moment accumulators for one parameter block.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub lr: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, lr: T) -> Self {
        Self { m: vec![T::zero(); len], v: vec![T::zero(); len], t: 0, lr }
    }
}

/// One bias-corrected Adam update. Rejects non-finite gradients before
/// touching the parameters.
pub fn adam_step<T: Real>(state: &mut AdamState<T>, params: &mut [T], grads: &[T]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "adam state {} / params {} / grads {}",
            state.m.len(),
            params.len(),
            grads.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::AbortStep("non-finite gradient entry".into()));
    }
    let b1 = T::of(ADAM_BETA1);
    let b2 = T::of(ADAM_BETA2);
    let eps = T::of(ADAM_EPS);
    state.t += 1;
    let t = T::of(state.t as f64);
    let corr1 = T::one() - b1.powf(t);
    let corr2 = T::one() - b2.powf(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / corr1;
        let v_hat = state.v[i] / corr2;
        params[i] = params[i] - state.lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Scale every filter column to energy N. Idempotent; errors on an
/// all-zero column.
pub fn project_filter_energy<T: Real>(h: &mut FilterMatrix<T>) -> Result<()> {
    let n = T::of(h.n_samples() as f64);
    for m in 0..h.n_channels() {
        let e = h.column_energy(m);
        if e == T::zero() {
            return Err(Error::ProjectionDegenerate { column: m });
        }
        let s = (n / e).sqrt();
        let lo = m * h.n_samples();
        let hi = lo + h.n_samples();
        for i in lo..hi {
            h.re[i] *= s;
            h.im[i] *= s;
        }
    }
    Ok(())
}

/// Steepest-ascent direction of the loss w.r.t. the real and imaginary
/// parts of every filter entry.
#[derive(Debug, Clone)]
pub struct FilterGrads<T> {
    pub re: Vec<T>,
    pub im: Vec<T>,
}

/// Adjoints into the transmit-side trainables.
#[derive(Debug, Clone)]
pub struct TransmitGrads<T> {
    pub net: Vec<T>,
    pub thresholds: Vec<T>,
}

/// One sidelobe or mainlobe cell with its upstream scalar into |A|.
struct CellAdjoint<T> {
    m: usize,
    l: usize,
    tau: i64,
    /// Doppler bin index into the grid, or `None` for the mainlobe
    /// (f = 0 regardless of the grid).
    doppler_idx: Option<usize>,
    /// A / |A| at the cell.
    unit: Complex<T>,
    /// dL / d|A|.
    upstream: T,
}

/// What to do when a mainlobe inner product sits below the degeneracy
/// floor: fail the evaluation (the strict contract of the public
/// gradient ops) or take the zero subgradient of |.| at 0 and keep
/// going (the run driver's policy; a transient exact-zero mainlobe at
/// a degenerate iterate must not kill a run).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneracyPolicy {
    Error,
    Subgradient,
}

/// Reported SNR loss is capped here when the mainlobe degenerates under
/// the subgradient policy, mirroring the -300 dB export floor.
pub const SNRL_DB_CEIL: f64 = 300.0;

/// Reusable forward/backward evaluator bound to one configuration.
pub struct LossEngine<T: Real> {
    ws: AfWorkspace<T>,
    surf: AmbiguitySurface<T>,
    n: usize,
    m_ch: usize,
    epsilon: T,
    p_tar: T,
    max_mode: MaxMode<T>,
    policy: DegeneracyPolicy,
}

struct EvalState<T> {
    scan: PeakScan<T>,
    mainlobes: Vec<Complex<T>>,
    report: MetricReport<T>,
}

impl<T: Real> LossEngine<T> {
    pub fn new(config: &DesignConfig<T>) -> Result<Self> {
        Self::with_policy(config, DegeneracyPolicy::Error)
    }

    pub fn with_policy(config: &DesignConfig<T>, policy: DegeneracyPolicy) -> Result<Self> {
        config.validate()?;
        let ws = AfWorkspace::new(config.n_samples, config.n_channels, config.grid.clone())?;
        let surf = ws.make_surface();
        let (p_tar, _) = snrl_target(config.snrl_target_db, config.n_samples)?;
        Ok(Self {
            ws,
            surf,
            n: config.n_samples,
            m_ch: config.n_channels,
            epsilon: config.epsilon,
            p_tar,
            max_mode: config.max_mode,
            policy,
        })
    }

    pub fn set_waveforms(&mut self, x: &WaveformMatrix<T>) -> Result<()> {
        self.ws.set_waveforms(x)
    }

    pub fn set_filters(&mut self, h: &FilterMatrix<T>) -> Result<()> {
        self.ws.set_filters(h)
    }

    /// Loss and metrics of the currently set pair.
    pub fn report(&mut self) -> Result<MetricReport<T>> {
        Ok(self.evaluate()?.report)
    }

    /// Convenience: set both sides and report.
    pub fn eval_pair(&mut self, x: &WaveformMatrix<T>, h: &FilterMatrix<T>) -> Result<MetricReport<T>> {
        self.set_waveforms(x)?;
        self.set_filters(h)?;
        self.report()
    }

    fn evaluate(&mut self) -> Result<EvalState<T>> {
        self.ws.fill_surface(&mut self.surf);
        let scan = scan_peaks(&self.surf);
        let mainlobes = self.ws.mainlobes();
        let n = T::of(self.n as f64);
        let floor = T::of(1e-12) * n;
        let mut loss_snrl = T::zero();
        let mut snrl_db = Vec::with_capacity(self.m_ch);
        for (m, a) in mainlobes.iter().enumerate() {
            let mag = a.norm();
            if mag < floor && self.policy == DegeneracyPolicy::Error {
                return Err(Error::DegenerateMainlobe {
                    inner: mag.as_f64(),
                    floor: floor.as_f64(),
                });
            }
            let p = mag / n;
            let d = p - self.p_tar;
            loss_snrl += d * d;
            let ex: T = self.ws.waveform(m).iter().map(|z| z.norm_sqr()).sum();
            let eh: T = self.ws.filter(m).iter().map(|z| z.norm_sqr()).sum();
            let db = if mag > T::zero() {
                (T::of(10.0) * (ex * eh / (mag * mag)).log10()).min(T::of(SNRL_DB_CEIL))
            } else {
                T::of(SNRL_DB_CEIL)
            };
            snrl_db.push(db);
        }
        loss_snrl /= T::of(self.m_ch as f64);

        let wapsl_linear = scan.wapsl.unwrap_or_else(T::zero);
        let wcpsl_linear = scan.wcpsl.unwrap_or_else(T::zero);
        let loss_wpsl = match self.max_mode {
            MaxMode::Subgradient => wapsl_linear.max(wcpsl_linear),
            MaxMode::SmoothMax { beta } => crate::metrics::smooth_max(&self.surf, beta),
        };
        let report = MetricReport {
            wapsl_linear,
            wcpsl_linear,
            wpsl_linear: wapsl_linear.max(wcpsl_linear),
            apsl_db: db_or_floor(wapsl_linear),
            cpsl_db: db_or_floor(wcpsl_linear),
            snrl_db,
            loss_total: self.epsilon * loss_wpsl + (T::one() - self.epsilon) * loss_snrl,
            loss_wpsl,
            loss_snrl,
            cross_terms_present: self.m_ch > 1,
        };
        Ok(EvalState { scan, mainlobes, report })
    }

    /// All cells carrying loss adjoints under the current max mode.
    fn adjoint_cells(&self, state: &EvalState<T>) -> Vec<CellAdjoint<T>> {
        let n = T::of(self.n as f64);
        let mut cells = Vec::new();

        // mainlobe penalty cells; a degenerate |A| takes the zero
        // subgradient of the magnitude and contributes nothing
        let floor = T::of(1e-12) * n;
        let coeff = (T::one() - self.epsilon) * T::of(2.0) / (T::of(self.m_ch as f64) * n);
        for (m, a) in state.mainlobes.iter().enumerate() {
            let mag = a.norm();
            if mag < floor {
                continue;
            }
            let p = mag / n;
            cells.push(CellAdjoint {
                m,
                l: m,
                tau: 0,
                doppler_idx: None,
                unit: a.unscale(mag),
                upstream: coeff * (p - self.p_tar),
            });
        }

        // sidelobe cells
        match self.max_mode {
            MaxMode::Subgradient => {
                if let Some(Cell { m, l, delay_idx, doppler_idx }) = state.scan.argmax {
                    let a = self.surf.value(m, l, delay_idx, doppler_idx);
                    let mag = a.norm();
                    if mag > T::zero() && state.scan.max_value > T::zero() {
                        let w = self.surf.grid().weight_at(delay_idx, doppler_idx);
                        cells.push(CellAdjoint {
                            m,
                            l,
                            tau: self.surf.grid().delays()[delay_idx],
                            doppler_idx: Some(doppler_idx),
                            unit: a.unscale(mag),
                            upstream: self.epsilon * w / n,
                        });
                    }
                }
            }
            MaxMode::SmoothMax { beta } => {
                let grid = self.surf.grid().clone();
                let vmax = state.scan.max_value;
                // two passes: normalization constant, then weights
                let mut denom = T::zero();
                for m in 0..self.m_ch {
                    for l in 0..self.m_ch {
                        for (di, &tau) in grid.delays().iter().enumerate() {
                            if m == l && grid.is_auto_excluded(tau) {
                                continue;
                            }
                            for fi in 0..grid.n_dopplers() {
                                let v = grid.weight_at(di, fi)
                                    * self.surf.value(m, l, di, fi).norm()
                                    / n;
                                denom += ((v - vmax) * beta).exp();
                            }
                        }
                    }
                }
                for m in 0..self.m_ch {
                    for l in 0..self.m_ch {
                        for (di, &tau) in grid.delays().iter().enumerate() {
                            if m == l && grid.is_auto_excluded(tau) {
                                continue;
                            }
                            for fi in 0..grid.n_dopplers() {
                                let a = self.surf.value(m, l, di, fi);
                                let mag = a.norm();
                                if mag == T::zero() {
                                    continue;
                                }
                                let w = grid.weight_at(di, fi);
                                let v = w * mag / n;
                                let softmax = ((v - vmax) * beta).exp() / denom;
                                cells.push(CellAdjoint {
                                    m,
                                    l,
                                    tau,
                                    doppler_idx: Some(fi),
                                    unit: a.unscale(mag),
                                    upstream: self.epsilon * softmax * w / n,
                                });
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    /// Loss value and filter gradients with the set waveforms treated as
    /// constants.
    pub fn filters_pass(&mut self, h: &FilterMatrix<T>) -> Result<(MetricReport<T>, FilterGrads<T>)> {
        self.set_filters(h)?;
        let state = self.evaluate()?;
        let cells = self.adjoint_cells(&state);
        let mut re = vec![T::zero(); self.n * self.m_ch];
        let mut im = vec![T::zero(); self.n * self.m_ch];
        let n = self.n as i64;
        for c in &cells {
            let xv: &[Complex<T>] = match c.doppler_idx {
                Some(fi) => self.ws.modulated(c.m, fi),
                None => self.ws.waveform(c.m),
            };
            let base = c.l * self.n;
            let u = c.unit.conj();
            for i in 0..self.n {
                let k = i as i64 + c.tau;
                if (0..n).contains(&k) {
                    let g = u * xv[i] * c.upstream;
                    re[base + k as usize] += g.re;
                    im[base + k as usize] += g.im;
                }
            }
        }
        Ok((state.report, FilterGrads { re, im }))
    }

    /// Loss value and the phase-space gradient `dL/dy` (flat,
    /// column-major) with the set filters treated as constants.
    pub fn waveform_phase_pass(&mut self, x: &WaveformMatrix<T>) -> Result<(MetricReport<T>, Vec<T>)> {
        self.set_waveforms(x)?;
        let state = self.evaluate()?;
        let cells = self.adjoint_cells(&state);
        let mut d_x = vec![Complex::<T>::zero(); self.n * self.m_ch];
        let n = self.n as i64;
        for c in &cells {
            let base = c.m * self.n;
            let h = self.ws.filter(c.l);
            match c.doppler_idx {
                Some(fi) => {
                    let ramp = self.ws.modvec(fi);
                    for i in 0..self.n {
                        let k = i as i64 + c.tau;
                        if (0..n).contains(&k) {
                            d_x[base + i] = d_x[base + i]
                                + c.unit * ramp[i].conj() * h[k as usize] * c.upstream;
                        }
                    }
                }
                None => {
                    for i in 0..self.n {
                        let k = i as i64 + c.tau;
                        if (0..n).contains(&k) {
                            d_x[base + i] = d_x[base + i] + c.unit * h[k as usize] * c.upstream;
                        }
                    }
                }
            }
        }
        let tau2 = T::TAU();
        let d_y = d_x
            .iter()
            .zip(x.as_slice())
            .map(|(g, xv)| tau2 * (g * xv.conj()).im)
            .collect();
        Ok((state.report, d_y))
    }
}

/// Loss and gradient w.r.t. the real/imaginary filter parts, with the
/// discrete waveforms fixed (no gradient flows into them).
pub fn grad_wrt_filters<T: Real>(
    x_hard: &WaveformMatrix<T>,
    h: &FilterMatrix<T>,
    config: &DesignConfig<T>,
) -> Result<(MetricReport<T>, FilterGrads<T>)> {
    if !h.is_finite() {
        return Err(Error::NonFinite("filter matrix"));
    }
    let mut engine = LossEngine::new(config)?;
    engine.set_waveforms(x_hard)?;
    engine.filters_pass(h)
}

/// Loss and gradients w.r.t. the generator parameters and quantizer
/// thresholds through the soft forward chain, with filters fixed.
pub fn grad_wrt_transmit<T: Real>(
    net: &NetParams<T>,
    quant: &QuantizerParams<T>,
    y0: &[T],
    h: &FilterMatrix<T>,
    config: &DesignConfig<T>,
) -> Result<(MetricReport<T>, TransmitGrads<T>)> {
    let mut engine = LossEngine::new(config)?;
    engine.set_filters(h)?;
    transmit_pass(&mut engine, net, quant, y0, config)
}

/// Shared forward/backward chain for the transmit side. Assumes the
/// engine's filters are current.
pub fn transmit_pass<T: Real>(
    engine: &mut LossEngine<T>,
    net: &NetParams<T>,
    quant: &QuantizerParams<T>,
    y0: &[T],
    config: &DesignConfig<T>,
) -> Result<(MetricReport<T>, TransmitGrads<T>)> {
    let (z, tape) = net_forward(net, y0)?;
    let y_soft = quantizer::soft_quantize(&z, quant);
    let phases = PhaseMatrix::from_vec(y_soft.clone(), config.n_samples, config.n_channels)?;
    let x_soft = phases_to_waveform(&phases);
    let (report, d_y) = engine.waveform_phase_pass(&x_soft)?;
    let (d_z, d_rho) = quantizer::backprop(&z, &d_y, quant);
    let net_grad = net_backward(net, &tape, &d_z)?;
    Ok((report, TransmitGrads { net: net_grad.data, thresholds: d_rho }))
}

/// Worst-coordinate central-difference comparison.
#[derive(Debug, Clone)]
pub struct FdReport<T> {
    pub max_rel_err: T,
    pub worst_coord: usize,
    pub analytic: T,
    pub numeric: T,
    pub n_checked: usize,
}

/// Central finite differences on a random subsample of coordinates
/// (all of them when the vector is short), compared against a supplied
/// analytic gradient. The error denominator is floored at 1e-6 of the
/// largest analytic entry so saturated coordinates do not divide by
/// noise.
pub fn finite_diff_check<T: Real>(
    mut loss: impl FnMut(&[T]) -> Result<T>,
    params: &[T],
    analytic: &[T],
    step: T,
    max_coords: usize,
    seed: u64,
) -> Result<FdReport<T>> {
    if params.len() != analytic.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} params vs {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    if !(step > T::zero()) {
        return Err(Error::Validation { field: "step".into(), message: "must be positive".into() });
    }
    let n = params.len();
    let coords: Vec<usize> = if n <= max_coords {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<usize> = (0..max_coords).map(|_| rng.gen_range(0..n)).collect();
        picked.sort_unstable();
        picked.dedup();
        picked
    };
    let g_scale = analytic
        .iter()
        .fold(T::zero(), |acc, g| acc.max(g.abs()))
        .max(T::of(1e-12));
    let floor = g_scale * T::of(1e-6);
    let mut buf = params.to_vec();
    let mut report = FdReport {
        max_rel_err: T::zero(),
        worst_coord: 0,
        analytic: T::zero(),
        numeric: T::zero(),
        n_checked: coords.len(),
    };
    for &i in &coords {
        let orig = buf[i];
        buf[i] = orig + step;
        let fp = loss(&buf)?;
        buf[i] = orig - step;
        let fm = loss(&buf)?;
        buf[i] = orig;
        let fd = (fp - fm) / (T::of(2.0) * step);
        let denom = fd.abs().max(analytic[i].abs()).max(floor);
        let err = (fd - analytic[i]).abs() / denom;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_coord = i;
            report.analytic = analytic[i];
            report.numeric = fd;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::quantizer::init_quantizer;
    use crate::testutil::{random_filters, random_waveforms};
    use crate::types::random_discrete_phase_init;

    fn small_config(n: usize, m: usize, bins: usize) -> DesignConfig<f64> {
        let mut c = DesignConfig::<f64>::standard();
        c.n_samples = n;
        c.n_channels = m;
        c.alphabet_levels = 4;
        c.copy_factor = 3;
        let hi = (n as i64 - 1).min(6);
        c.grid = if bins == 1 {
            build_grid(-hi, hi, 0.0, 0.0, 1, n).unwrap()
        } else {
            build_grid(-hi, hi, -0.4, 0.4, bins, n).unwrap()
        };
        c.net_depth = 2;
        c.net_width = 8;
        c
    }

    fn projected_filters(n: usize, m: usize, seed: u64) -> FilterMatrix<f64> {
        let mut h = random_filters(n, m, seed);
        project_filter_energy(&mut h).unwrap();
        h
    }

    #[test]
    fn adam_first_step_magnitude() {
        let mut st = AdamState::new(1, 0.1);
        let mut x = vec![1.0f64];
        adam_step(&mut st, &mut x, &[2.0]).unwrap();
        assert!((x[0] - 0.9).abs() < 1e-9, "first step gave {}", x[0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut st = AdamState::new(3, 0.1);
        let mut x = vec![1.0f64, -2.0, 0.5];
        adam_step(&mut st, &mut x, &[0.0; 3]).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 0.5]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        let mut st = AdamState::new(1, 0.1);
        let mut x = vec![1.0f64];
        for _ in 0..200 {
            let g = 2.0 * x[0];
            adam_step(&mut st, &mut x, &[g]).unwrap();
        }
        assert!(x[0].abs() < 1e-2, "x after 200 steps: {}", x[0]);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut st = AdamState::new(1, 0.1);
        let mut x = vec![1.0f64];
        assert!(matches!(
            adam_step(&mut st, &mut x, &[f64::NAN]),
            Err(Error::AbortStep(_))
        ));
    }

    #[test]
    fn projection_scales_and_is_idempotent() {
        let n = 8;
        // column with energy 4N
        let re = vec![2.0f64; n];
        let im = vec![0.0f64; n];
        let mut h = FilterMatrix::from_parts(re, im, n, 1).unwrap();
        project_filter_energy(&mut h).unwrap();
        assert!((h.re[0] - 1.0).abs() < 1e-14, "scaled by 1/2");
        let before = h.clone();
        project_filter_energy(&mut h).unwrap();
        for i in 0..n {
            assert!((h.re[i] - before.re[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_hits_energy_exactly() {
        for seed in 0..10 {
            let mut h = random_filters(16, 3, seed);
            project_filter_energy(&mut h).unwrap();
            for m in 0..3 {
                let e = h.column_energy(m);
                assert!((e - 16.0).abs() / 16.0 < 1e-12, "col {m} energy {e}");
            }
        }
    }

    #[test]
    fn projection_rejects_zero_column() {
        let mut h = FilterMatrix::from_parts(vec![0.0; 4], vec![0.0; 4], 4, 1).unwrap();
        assert!(matches!(
            project_filter_energy(&mut h),
            Err(Error::ProjectionDegenerate { column: 0 })
        ));
    }

    #[test]
    fn projection_commutes_with_global_phase() {
        let h0 = random_filters(12, 2, 33);
        let phi = 0.7f64;
        let rot = Complex::new(phi.cos(), phi.sin());
        let rotate = |h: &FilterMatrix<f64>| {
            let re: Vec<f64> = (0..24)
                .map(|i| (Complex::new(h.re[i], h.im[i]) * rot).re)
                .collect();
            let im: Vec<f64> = (0..24)
                .map(|i| (Complex::new(h.re[i], h.im[i]) * rot).im)
                .collect();
            FilterMatrix::from_parts(re, im, 12, 2).unwrap()
        };
        let mut a = rotate(&h0);
        project_filter_energy(&mut a).unwrap();
        let mut b = h0.clone();
        project_filter_energy(&mut b).unwrap();
        let b = rotate(&b);
        for i in 0..24 {
            assert!((a.re[i] - b.re[i]).abs() < 1e-12);
            assert!((a.im[i] - b.im[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_toy_fd_is_exact() {
        let params = vec![0.3f64, -1.2, 0.7];
        let analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
        let rep = finite_diff_check(
            |p| Ok(p.iter().map(|v| v * v).sum()),
            &params,
            &analytic,
            1e-6,
            64,
            0,
        )
        .unwrap();
        assert!(rep.max_rel_err < 1e-9, "quadratic fd error {}", rep.max_rel_err);
    }

    #[test]
    fn fd_harness_detects_corrupted_adjoint() {
        let params = vec![0.4f64, 1.1, -0.6, 0.2];
        let mut analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
        analytic[2] *= 1.5; // corrupt one coordinate
        let rep = finite_diff_check(
            |p| Ok(p.iter().map(|v| v * v).sum()),
            &params,
            &analytic,
            1e-6,
            64,
            0,
        )
        .unwrap();
        assert!(rep.max_rel_err > 1e-1, "harness missed corruption: {}", rep.max_rel_err);
        assert_eq!(rep.worst_coord, 2);
    }

    #[test]
    fn filter_gradient_matches_finite_differences() {
        let config = small_config(8, 2, 3);
        let (x, _) = random_waveforms(8, 2, 4, 61);
        let h = projected_filters(8, 2, 62);
        let (report, grads) = grad_wrt_filters(&x, &h, &config).unwrap();
        assert!(report.loss_total.is_finite());

        let flat: Vec<f64> = h.re.iter().chain(h.im.iter()).copied().collect();
        let analytic: Vec<f64> = grads.re.iter().chain(grads.im.iter()).copied().collect();
        let nm = 16;
        let loss = |p: &[f64]| -> Result<f64> {
            let hh = FilterMatrix::from_parts(p[..nm].to_vec(), p[nm..].to_vec(), 8, 2)?;
            let mut eng = LossEngine::new(&config)?;
            eng.set_waveforms(&x)?;
            eng.set_filters(&hh)?;
            Ok(eng.report()?.loss_total)
        };
        let rep = finite_diff_check(loss, &flat, &analytic, 1e-6, 1000, 7).unwrap();
        assert!(
            rep.max_rel_err < 1e-3,
            "filter grad: worst {} at {} (analytic {} fd {})",
            rep.max_rel_err,
            rep.worst_coord,
            rep.analytic,
            rep.numeric
        );
    }

    #[test]
    fn filter_gradient_stationary_at_toy_minimum() {
        // N=1, M=1: the only loss term is the mainlobe penalty; placing
        // p exactly at p_tar makes the gradient vanish
        let mut config = small_config(1, 1, 1);
        config.grid = crate::grid::DelayDopplerGrid::new(vec![0], vec![0.0], vec![1.0], vec![0])
            .unwrap();
        config.snrl_target_db = 0.5;
        let x = WaveformMatrix::from_vec(vec![Complex::new(1.0, 0.0)], 1, 1).unwrap();
        let (p_tar, _) = snrl_target(0.5, 1).unwrap();
        let h = FilterMatrix::from_parts(vec![p_tar], vec![0.0], 1, 1).unwrap();
        let (_, grads) = grad_wrt_filters(&x, &h, &config).unwrap();
        assert!(grads.re[0].abs() < 1e-8 && grads.im[0].abs() < 1e-8);
    }

    #[test]
    fn pure_snrl_gradient_descends() {
        // eps = 0: only the mainlobe penalty remains; pushing H from the
        // matched point toward p_tar < 1 must reduce the loss
        let mut config = small_config(8, 1, 1);
        config.epsilon = 0.0;
        config.snrl_target_db = 1.0;
        let (x, _) = random_waveforms(8, 1, 4, 70);
        let h = FilterMatrix::matched_to(&x);
        let (report, grads) = grad_wrt_filters(&x, &h, &config).unwrap();
        assert!(report.loss_snrl > 0.0);
        let step = 1e-3;
        let re: Vec<f64> = h.re.iter().zip(&grads.re).map(|(v, g)| v - step * g).collect();
        let im: Vec<f64> = h.im.iter().zip(&grads.im).map(|(v, g)| v - step * g).collect();
        let h2 = FilterMatrix::from_parts(re, im, 8, 1).unwrap();
        let (report2, _) = grad_wrt_filters(&x, &h2, &config).unwrap();
        assert!(
            report2.loss_snrl < report.loss_snrl,
            "penalty went {} -> {}",
            report.loss_snrl,
            report2.loss_snrl
        );
    }

    #[test]
    fn transmit_gradient_matches_finite_differences() {
        let config = small_config(8, 1, 1);
        let q = init_quantizer(4, 3, 40.0).unwrap();
        let y0: Vec<f64> = random_discrete_phase_init::<f64>(1, 8, 4, 71)
            .unwrap()
            .as_slice()
            .to_vec();
        let net = crate::net::net_init::<f64>(72, 8, 1, 4);
        let h = projected_filters(8, 1, 73);
        let (report, grads) = grad_wrt_transmit(&net, &q, &y0, &h, &config).unwrap();
        assert!(report.loss_total.is_finite());

        // network parameters
        let loss_net = |p: &[f64]| -> Result<f64> {
            let mut nn = net.clone();
            nn.data.copy_from_slice(p);
            let (r, _) = grad_wrt_transmit(&nn, &q, &y0, &h, &config)?;
            Ok(r.loss_total)
        };
        let rep = finite_diff_check(loss_net, &net.data, &grads.net, 1e-5, 200, 8).unwrap();
        assert!(
            rep.max_rel_err < 1e-3,
            "net grad: worst {} at coord {} (analytic {} fd {})",
            rep.max_rel_err,
            rep.worst_coord,
            rep.analytic,
            rep.numeric
        );

        // thresholds
        let loss_rho = |p: &[f64]| -> Result<f64> {
            let mut qq = q.clone();
            qq.thresholds.copy_from_slice(p);
            let (r, _) = grad_wrt_transmit(&net, &qq, &y0, &h, &config)?;
            Ok(r.loss_total)
        };
        let rep = finite_diff_check(loss_rho, &q.thresholds, &grads.thresholds, 1e-6, 64, 9)
            .unwrap();
        assert!(
            rep.max_rel_err < 1e-3,
            "threshold grad: worst {} (analytic {} fd {})",
            rep.max_rel_err,
            rep.analytic,
            rep.numeric
        );
    }

    #[test]
    fn saturated_quantizer_starves_net_gradient() {
        // huge steepness and mid-plateau z everywhere: the soft-quantizer
        // slope vanishes and so must the network gradient
        let config = small_config(8, 1, 1);
        let q = init_quantizer(4, 1, 5e4).unwrap();
        let y0 = vec![0.5f64; 8];
        let mut net = crate::net::net_init::<f64>(80, 8, 1, 4);
        // force the net output to sit mid-plateau (sigmoid(0) = 0.5 is
        // far from every threshold of a 4-level single-copy quantizer)
        for v in net.data.iter_mut() {
            *v = 0.0;
        }
        let h = projected_filters(8, 1, 81);
        let (_, grads) = grad_wrt_transmit(&net, &q, &y0, &h, &config).unwrap();
        let gmax = grads.net.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        assert!(gmax < 1e-12, "saturated net gradient {gmax}");
    }

    #[test]
    fn threshold_gradient_sign_matches_local_slope() {
        // z just above a threshold: raising that threshold lowers Q_A,
        // which the analytic formula encodes as a negative partial
        let q = init_quantizer::<f64>(4, 1, 50.0).unwrap();
        let z = vec![q.thresholds[1] + 0.01];
        let up = vec![1.0];
        let (_, d_rho) = quantizer::backprop(&z, &up, &q);
        assert!(d_rho[1] < 0.0);
        let th = ((z[0] - q.thresholds[1]) * 50.0).tanh();
        let expect = -q.amplitude * 50.0 * (1.0 - th * th);
        assert!((d_rho[1] - expect).abs() < 1e-12);
    }

    #[test]
    fn directional_derivative_agreement() {
        let config = small_config(8, 2, 3);
        let (x, _) = random_waveforms(8, 2, 4, 90);
        let h = projected_filters(8, 2, 91);
        let (_, grads) = grad_wrt_filters(&x, &h, &config).unwrap();
        let flat: Vec<f64> = h.re.iter().chain(h.im.iter()).copied().collect();
        let g: Vec<f64> = grads.re.iter().chain(grads.im.iter()).copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(92);
        let nm = 16;
        for _ in 0..5 {
            let mut d: Vec<f64> = (0..flat.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in d.iter_mut() {
                *v /= norm;
            }
            let h2 = 1e-5;
            let eval = |p: &[f64]| -> f64 {
                let hh =
                    FilterMatrix::from_parts(p[..nm].to_vec(), p[nm..].to_vec(), 8, 2).unwrap();
                let mut eng = LossEngine::new(&config).unwrap();
                eng.set_waveforms(&x).unwrap();
                eng.set_filters(&hh).unwrap();
                eng.report().unwrap().loss_total
            };
            let plus: Vec<f64> = flat.iter().zip(&d).map(|(a, b)| a + h2 * b).collect();
            let minus: Vec<f64> = flat.iter().zip(&d).map(|(a, b)| a - h2 * b).collect();
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h2);
            let dot: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
            let denom = fd.abs().max(dot.abs()).max(1e-8);
            assert!(
                (fd - dot).abs() / denom < 1e-3,
                "directional derivative {fd} vs inner product {dot}"
            );
        }
    }

    #[test]
    fn single_projected_step_rarely_increases_loss() {
        // step-A descent statistic with a halving line probe
        let mut successes = 0;
        let trials = 100;
        for trial in 0..trials {
            let config = small_config(16, 2, 1);
            let (x, _) = random_waveforms(16, 2, 4, 200 + trial);
            let h = projected_filters(16, 2, 300 + trial);
            let (r0, grads) = grad_wrt_filters(&x, &h, &config).unwrap();
            let flat_g: Vec<f64> = grads.re.iter().chain(grads.im.iter()).copied().collect();
            let mut lr = 1e-2;
            let mut ok = false;
            for _ in 0..12 {
                let mut st = AdamState::new(64, lr);
                let mut flat: Vec<f64> = h.re.iter().chain(h.im.iter()).copied().collect();
                adam_step(&mut st, &mut flat, &flat_g).unwrap();
                let mut h2 =
                    FilterMatrix::from_parts(flat[..32].to_vec(), flat[32..].to_vec(), 16, 2)
                        .unwrap();
                project_filter_energy(&mut h2).unwrap();
                let (r1, _) = grad_wrt_filters(&x, &h2, &config).unwrap();
                if r1.loss_total <= r0.loss_total + 1e-12 {
                    ok = true;
                    break;
                }
                lr *= 0.5;
            }
            if ok {
                successes += 1;
            }
        }
        assert!(successes >= 95, "descent in only {successes}/{trials} trials");
    }

    #[test]
    fn smooth_max_gradient_matches_finite_differences() {
        let mut config = small_config(8, 2, 1);
        config.max_mode = MaxMode::SmoothMax { beta: 80.0 };
        let (x, _) = random_waveforms(8, 2, 4, 95);
        let h = projected_filters(8, 2, 96);
        let (_, grads) = grad_wrt_filters(&x, &h, &config).unwrap();
        let flat: Vec<f64> = h.re.iter().chain(h.im.iter()).copied().collect();
        let analytic: Vec<f64> = grads.re.iter().chain(grads.im.iter()).copied().collect();
        let nm = 16;
        let loss = |p: &[f64]| -> Result<f64> {
            let hh = FilterMatrix::from_parts(p[..nm].to_vec(), p[nm..].to_vec(), 8, 2)?;
            let (r, _) = grad_wrt_filters(&x, &hh, &config)?;
            Ok(r.loss_total)
        };
        let rep = finite_diff_check(loss, &flat, &analytic, 1e-6, 1000, 10).unwrap();
        assert!(rep.max_rel_err < 1e-3, "smooth-max grad error {}", rep.max_rel_err);
    }

    #[test]
    fn adam_step_uses_one_state_per_block() {
        // gradient shapes must match the state
        let mut st = AdamState::new(4, 0.1);
        let mut p = vec![0.0f64; 3];
        assert!(adam_step(&mut st, &mut p, &[0.0; 3]).is_err());
    }
}
