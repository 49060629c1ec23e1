//! Soft and hard quantization of continuous generator outputs onto the
//! discrete phase alphabet, with the copying mechanism and trainable
//! ordered thresholds.
//!
//! The soft operator is a sum of B*r_n shifted tanh steps of equal
//! amplitude 1/(2B); its plateaus are the exact levels {k/B}. Saturated
//! steps contribute their limit value below f64 resolution, so the
//! evaluation only expands tanh inside a window of `SATURATION/c` around
//! the input and counts everything below the window as fully switched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// |t| beyond which tanh(t) is +-1 and sech^2(t) is 0 at f64 precision.
const SATURATION: f64 = 20.0;

/// Threshold projection constants: clamp range and minimum spacing.
pub const THRESHOLD_CLAMP_LO: f64 = 1e-4;
pub const THRESHOLD_CLAMP_HI: f64 = 1.0 - 1e-4;
pub const THRESHOLD_MIN_GAP: f64 = 1e-6;

/// Trainable ordered thresholds plus the fixed transition amplitude,
/// steepness and shape of the staircase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizerParams<T> {
    /// Sorted transition locations, length `levels * copies`.
    pub thresholds: Vec<T>,
    /// Uniform per-transition amplitude `1 / (2B)`; fixed, not trained.
    pub amplitude: T,
    /// Transition steepness c.
    pub steepness: T,
    /// Phase alphabet size B.
    pub levels: usize,
    /// Copy factor r_n.
    pub copies: usize,
}

impl<T: Real> QuantizerParams<T> {
    pub fn n_transitions(&self) -> usize {
        self.levels * self.copies
    }

    /// Check ordering, range and spacing of the thresholds.
    pub fn validate(&self) -> Result<()> {
        if self.thresholds.len() != self.n_transitions() {
            return Err(Error::DimensionMismatch(format!(
                "{} thresholds for {} transitions",
                self.thresholds.len(),
                self.n_transitions()
            )));
        }
        let gap = T::of(THRESHOLD_MIN_GAP);
        for w in self.thresholds.windows(2) {
            if !(w[1] - w[0] >= gap) {
                return Err(Error::Validation {
                    field: "thresholds".into(),
                    message: format!("gap {} below minimum {gap}", w[1] - w[0]),
                });
            }
        }
        let (lo, hi) = (self.thresholds[0], *self.thresholds.last().unwrap());
        if !(lo > T::zero() && hi < T::one()) {
            return Err(Error::Validation {
                field: "thresholds".into(),
                message: format!("range [{lo}, {hi}] not inside (0, 1)"),
            });
        }
        Ok(())
    }
}

/// Uniform-midpoint initialization: thresholds at `(i + 0.5) / (B r_n)`,
/// amplitude `1/(2B)`, yielding plateau values `{k/B : k = 0..B r_n}`.
pub fn init_quantizer<T: Real>(levels: usize, copies: usize, steepness: T) -> Result<QuantizerParams<T>> {
    if levels < 2 {
        return Err(Error::InvalidAlphabet(levels));
    }
    if copies == 0 {
        return Err(Error::Validation { field: "copies".into(), message: "must be >= 1".into() });
    }
    if !(steepness > T::zero()) {
        return Err(Error::Validation {
            field: "steepness".into(),
            message: "must be positive".into(),
        });
    }
    let count = levels * copies;
    let denom = T::of(count as f64);
    let thresholds = (0..count)
        .map(|i| (T::of(i as f64) + T::of(0.5)) / denom)
        .collect();
    Ok(QuantizerParams {
        thresholds,
        amplitude: T::one() / (T::of(2.0) * T::of(levels as f64)),
        steepness,
        levels,
        copies,
    })
}

/// Index window of thresholds whose tanh term is not saturated at `z`.
/// Everything below the window contributes its limit `2a`; everything
/// above contributes 0.
#[inline]
fn active_window<T: Real>(thresholds: &[T], z: T, steepness: T) -> (usize, usize) {
    let w = T::of(SATURATION) / steepness;
    let lo = thresholds.partition_point(|&t| t <= z - w);
    let hi = thresholds.partition_point(|&t| t < z + w);
    (lo, hi)
}

fn soft_scalar<T: Real>(z: T, q: &QuantizerParams<T>) -> T {
    let (lo, hi) = active_window(&q.thresholds, z, q.steepness);
    let two = T::of(2.0);
    let mut acc = T::of(lo as f64) * two * q.amplitude;
    for &t in &q.thresholds[lo..hi] {
        acc += q.amplitude * (((z - t) * q.steepness).tanh() + T::one());
    }
    acc
}

/// Elementwise soft quantization `Q_A(z)`.
pub fn soft_quantize<T: Real>(z: &[T], q: &QuantizerParams<T>) -> Vec<T> {
    z.iter().map(|&v| soft_scalar(v, q)).collect()
}

/// Analytic derivatives of the soft quantizer.
///
/// Returns the diagonal `dQ/dz` and the per-entry rows of `dQ/drho`
/// (entries x thresholds, dense). The dense form is for contract tests;
/// the optimizer uses [`backprop`] which never materializes it.
pub fn soft_quantize_grad<T: Real>(z: &[T], q: &QuantizerParams<T>) -> (Vec<T>, Vec<Vec<T>>) {
    let n_thr = q.thresholds.len();
    let mut diag = Vec::with_capacity(z.len());
    let mut rows = Vec::with_capacity(z.len());
    for &v in z {
        let (lo, hi) = active_window(&q.thresholds, v, q.steepness);
        let mut row = vec![T::zero(); n_thr];
        let mut dz = T::zero();
        for (j, &t) in q.thresholds[lo..hi].iter().enumerate() {
            let th = ((v - t) * q.steepness).tanh();
            let slope = q.amplitude * q.steepness * (T::one() - th * th);
            dz += slope;
            row[lo + j] = -slope;
        }
        diag.push(dz);
        rows.push(row);
    }
    (diag, rows)
}

/// Accumulate adjoints through the soft quantizer without materializing
/// the threshold Jacobian: given `upstream = dL/dQ(z)`, returns
/// `dL/dz` and `dL/drho`.
pub fn backprop<T: Real>(
    z: &[T],
    upstream: &[T],
    q: &QuantizerParams<T>,
) -> (Vec<T>, Vec<T>) {
    debug_assert_eq!(z.len(), upstream.len());
    let mut d_z = Vec::with_capacity(z.len());
    let mut d_rho = vec![T::zero(); q.thresholds.len()];
    for (&v, &up) in z.iter().zip(upstream) {
        let (lo, hi) = active_window(&q.thresholds, v, q.steepness);
        let mut dz = T::zero();
        for (j, &t) in q.thresholds[lo..hi].iter().enumerate() {
            let th = ((v - t) * q.steepness).tanh();
            let slope = q.amplitude * q.steepness * (T::one() - th * th);
            dz += slope;
            d_rho[lo + j] -= up * slope;
        }
        d_z.push(up * dz);
    }
    (d_z, d_rho)
}

fn hard_scalar<T: Real>(z: T, q: &QuantizerParams<T>) -> T {
    let thr = &q.thresholds;
    let k = thr.partition_point(|&t| t <= z);
    let levels = T::of(q.levels as f64);
    if k == 0 {
        return T::zero();
    }
    if k == thr.len() {
        // sum of all transition amplitudes: 2a * B r_n = r_n
        return T::of(q.copies as f64);
    }
    // evaluate the soft operator at the bracketing-threshold midpoint,
    // then snap to the nearest exact plateau value k/B
    let mid = (thr[k - 1] + thr[k]) / T::of(2.0);
    let v = soft_scalar(mid, q);
    (v * levels).round() / levels
}

/// Piecewise-constant hard quantization with exact plateau snapping.
pub fn hard_quantize<T: Real>(z: &[T], q: &QuantizerParams<T>) -> Vec<T> {
    z.iter().map(|&v| hard_scalar(v, q)).collect()
}

/// Restore a valid ordered threshold set: sort ascending, clamp into
/// `[1e-4, 1 - 1e-4]`, then enforce the minimum adjacent gap by a
/// forward sweep. Idempotent on well-separated inputs.
pub fn project_thresholds<T: Real>(rho: &[T]) -> Vec<T> {
    let mut out: Vec<T> = rho.to_vec();
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
    let lo = T::of(THRESHOLD_CLAMP_LO);
    let hi = T::of(THRESHOLD_CLAMP_HI);
    for v in out.iter_mut() {
        *v = v.max(lo).min(hi);
    }
    let gap = T::of(THRESHOLD_MIN_GAP);
    for i in 1..out.len() {
        let floor = out[i - 1] + gap;
        if out[i] < floor {
            out[i] = floor;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{phases_to_waveform, PhaseMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q(levels: usize, copies: usize, c: f64) -> QuantizerParams<f64> {
        init_quantizer(levels, copies, c).unwrap()
    }

    #[test]
    fn init_binary_single_copy() {
        let p = q(2, 1, 300.0);
        assert_eq!(p.thresholds, vec![0.25, 0.75]);
        assert_eq!(p.amplitude, 0.25);
        // plateaus 0, 0.5, 1
        let out = hard_quantize(&[0.1, 0.5, 0.9], &p);
        assert_eq!(out, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn init_quad_three_copies_plateaus() {
        let p = q(4, 3, 300.0);
        assert_eq!(p.thresholds.len(), 12);
        p.validate().unwrap();
        // the twelve regions plus the two rails give levels k/4, k=0..12
        let mut inputs = vec![0.0];
        for w in p.thresholds.windows(2) {
            inputs.push((w[0] + w[1]) / 2.0);
        }
        inputs.push(1.0);
        let out = hard_quantize(&inputs, &p);
        for (k, v) in out.iter().enumerate() {
            assert!((v - k as f64 / 4.0).abs() < 1e-15, "plateau {k}: {v}");
        }
    }

    #[test]
    fn amplitude_sum_equals_copy_factor() {
        for (b, r) in [(2usize, 1usize), (4, 3), (4, 100), (16, 7)] {
            let p = q(b, r, 300.0);
            let total: f64 = (0..p.n_transitions()).map(|_| 2.0 * p.amplitude).sum();
            assert!((total - r as f64).abs() < 1e-9, "B={b} r={r}: {total}");
        }
    }

    #[test]
    fn soft_limits() {
        let p = q(4, 2, 300.0);
        assert_eq!(soft_quantize(&[-1e3], &p)[0], 0.0);
        assert!((soft_quantize(&[1e3], &p)[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn soft_mid_plateau_example() {
        // B=4, r_n=1, c=300: one transition crossed by z=0.25
        let p = q(4, 1, 300.0);
        let v = soft_quantize(&[0.25], &p)[0];
        assert!((v - 0.25).abs() < 1e-6, "got {v}");
    }

    #[test]
    fn soft_monotone_nondecreasing_and_strict_near_transitions() {
        let p = q(4, 10, 300.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let a = rng.gen_range(-0.2..1.2);
            let b = rng.gen_range(-0.2..1.2);
            let (z1, z2) = if a < b { (a, b) } else { (b, a) };
            let v = soft_quantize(&[z1, z2], &p);
            assert!(v[0] <= v[1], "Q({z1}) = {} > Q({z2}) = {}", v[0], v[1]);
        }
        // strict increase when the pair straddles a transition
        let t = p.thresholds[7];
        let v = soft_quantize(&[t - 3e-3, t + 3e-3], &p);
        assert!(v[0] < v[1]);
    }

    #[test]
    fn soft_range_stays_in_bounds() {
        let p = q(4, 5, 300.0);
        let zs: Vec<f64> = (0..200).map(|i| -0.5 + i as f64 * 0.01).collect();
        for v in soft_quantize(&zs, &p) {
            assert!((0.0..=5.0).contains(&v), "out of range: {v}");
        }
    }

    #[test]
    fn grad_positive_in_window_and_bounded() {
        let p = q(4, 3, 300.0);
        let zs: Vec<f64> = (0..120).map(|i| i as f64 / 120.0).collect();
        let (diag, _) = soft_quantize_grad(&zs, &p);
        let bound = 300.0 * 3.0 / 2.0; // c * r_n / 2
        for (z, d) in zs.iter().zip(&diag) {
            assert!(*d >= 0.0);
            assert!(*d <= bound + 1e-9, "slope {d} above bound at z={z}");
        }
        // right on a threshold the slope is a*c
        let t = p.thresholds[4];
        let (diag, _) = soft_quantize_grad(&[t], &p);
        assert!(diag[0] >= p.amplitude * p.steepness * 0.99);
    }

    #[test]
    fn grad_vanishes_far_from_thresholds() {
        let p = q(4, 1, 300.0);
        let (diag, _) = soft_quantize_grad(&[0.25], &p); // mid-plateau
        assert!(diag[0] < 1e-12, "saturated slope {}", diag[0]);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let p = q(4, 3, 120.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let zs: Vec<f64> = (0..40).map(|_| rng.gen_range(-0.1..1.1)).collect();
        let (diag, rows) = soft_quantize_grad(&zs, &p);
        let h = 1e-6;
        // scale-relative floor keeps saturated coordinates (true slope
        // ~1e-8, below central-difference resolution) out of the ratio
        let floor = 1e-6 * diag.iter().fold(0.0f64, |a, d| a.max(*d));
        for (i, &z) in zs.iter().enumerate() {
            let fp = soft_quantize(&[z + h], &p)[0];
            let fm = soft_quantize(&[z - h], &p)[0];
            let fd = (fp - fm) / (2.0 * h);
            let denom = fd.abs().max(diag[i].abs()).max(floor);
            assert!(
                (fd - diag[i]).abs() / denom < 1e-4,
                "z-grad at {z}: analytic {} fd {fd}",
                diag[i]
            );
        }
        // threshold gradients on a couple of coordinates
        for j in [0usize, 5, 11] {
            let mut plus = p.clone();
            plus.thresholds[j] += h;
            let mut minus = p.clone();
            minus.thresholds[j] -= h;
            for (i, &z) in zs.iter().enumerate().take(10) {
                let fd = (soft_quantize(&[z], &plus)[0] - soft_quantize(&[z], &minus)[0])
                    / (2.0 * h);
                let denom = fd.abs().max(rows[i][j].abs()).max(floor);
                assert!(
                    (fd - rows[i][j]).abs() / denom < 1e-4,
                    "rho-grad ({i},{j}): analytic {} fd {fd}",
                    rows[i][j]
                );
            }
        }
    }

    #[test]
    fn backprop_agrees_with_dense_jacobian() {
        let p = q(4, 3, 200.0);
        let zs = vec![0.12, 0.48, 0.83, 0.31];
        let up = vec![1.5, -0.7, 2.0, 0.3];
        let (diag, rows) = soft_quantize_grad(&zs, &p);
        let (dz, drho) = backprop(&zs, &up, &p);
        for i in 0..zs.len() {
            assert!((dz[i] - up[i] * diag[i]).abs() < 1e-12);
        }
        for j in 0..p.thresholds.len() {
            let dense: f64 = (0..zs.len()).map(|i| up[i] * rows[i][j]).sum();
            assert!((drho[j] - dense).abs() < 1e-12);
        }
    }

    #[test]
    fn hard_rails() {
        let p = q(4, 3, 300.0);
        assert_eq!(hard_quantize(&[p.thresholds[0] - 1e-9], &p)[0], 0.0);
        assert_eq!(hard_quantize(&[*p.thresholds.last().unwrap()], &p)[0], 3.0);
        assert_eq!(hard_quantize(&[5.0], &p)[0], 3.0);
    }

    #[test]
    fn hard_fixes_soft_plateau_points() {
        // with a single copy the output plateaus coincide with the input
        // regions, so soft-quantized plateau points are fixed points of
        // the hard operator
        let p = q(4, 1, 300.0);
        let mut pts = vec![0.01];
        pts.extend(p.thresholds.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        pts.push(0.99);
        let soft = soft_quantize(&pts, &p);
        let hard = hard_quantize(&soft, &p);
        for (s, h) in soft.iter().zip(&hard) {
            assert!((s - h).abs() < 1e-6, "plateau point moved: soft {s} hard {h}");
        }
    }

    #[test]
    fn soft_hard_consistency_away_from_thresholds() {
        // the residual transition at distance d from the nearest
        // threshold is (1 - tanh(c d)) / (2B): about 4.5e-3 at d = 2/c
        // and 6.2e-4 at d = 3/c for B = 4. Copy counts keep the spacing
        // above twice the margin so the sampler can stay clear.
        for &(c, copies) in &[(300.0, 10usize), (3000.0, 100)] {
            let p = q(4, copies, c);
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let (mut dev2, mut dev3) = (0.0f64, 0.0f64);
            let (mut n2, mut n3) = (0, 0);
            for _ in 0..100_000 {
                if n2 >= 500 && n3 >= 500 {
                    break;
                }
                let z = rng.gen_range(0.0..1.0);
                let dist = p
                    .thresholds
                    .iter()
                    .map(|&t| (z - t).abs())
                    .fold(f64::INFINITY, f64::min);
                let s = soft_quantize(&[z], &p)[0];
                let h = hard_quantize(&[z], &p)[0];
                let d = (s - h).abs();
                if dist >= 2.0 / c && n2 < 500 {
                    n2 += 1;
                    dev2 = dev2.max(d);
                }
                if dist >= 3.0 / c && n3 < 500 {
                    n3 += 1;
                    dev3 = dev3.max(d);
                }
            }
            assert_eq!((n2, n3), (500, 500), "sampler starved at c={c}");
            assert!(dev2 < 5e-3, "c={c}: |soft - hard| = {dev2} beyond 2/c");
            assert!(dev3 < 1e-3, "c={c}: |soft - hard| = {dev3} beyond 3/c");
        }
    }

    #[test]
    fn hard_output_is_alphabet_exact() {
        let p = q(4, 100, 300.0);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let zs: Vec<f64> = (0..256).map(|_| rng.gen_range(-0.2..1.2)).collect();
        let hard = hard_quantize(&zs, &p);
        let pm = PhaseMatrix::from_vec(hard, 256, 1).unwrap();
        assert!(pm.is_discrete_valid(4, 1e-15));
        let x = phases_to_waveform(&pm);
        assert!(x.max_modulus_error() < 1e-12);
    }

    #[test]
    fn projection_examples() {
        let valid = vec![0.1, 0.4, 0.9];
        assert_eq!(project_thresholds(&valid), valid);
        assert_eq!(project_thresholds(&[0.4, 0.1, 0.9]), vec![0.1, 0.4, 0.9]);
        let out = project_thresholds(&[0.5, 1.5, 1.5]);
        assert_eq!(out[0], 0.5);
        assert_eq!(out[1], THRESHOLD_CLAMP_HI);
        assert!((out[2] - (THRESHOLD_CLAMP_HI + THRESHOLD_MIN_GAP)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(vals in proptest::collection::vec(-0.5f64..1.5, 1..20)) {
            let once = project_thresholds(&vals);
            let twice = project_thresholds(&once);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn projection_output_is_ordered_with_gap(vals in proptest::collection::vec(0.0f64..1.0, 2..20)) {
            let out = project_thresholds(&vals);
            for w in out.windows(2) {
                prop_assert!(w[1] - w[0] >= THRESHOLD_MIN_GAP - 1e-18);
            }
        }
    }
}
