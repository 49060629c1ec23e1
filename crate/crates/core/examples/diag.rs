//! Diagnostic loop: tracks hard-waveform churn, the filter's gain over
//! the matched bank, and peak level-set thickness during a run.
//! cargo run --release -p afshape-core --example diag -- N M B T mu f_bins seed

use afshape_core::autodiff::{DegeneracyPolicy, LossEngine};
use afshape_core::config::DesignConfig;
use afshape_core::grid::build_grid;
use afshape_core::metrics::scan_peaks;
use afshape_core::optimizer::{
    generate_waveforms, init_run_state, step_a_update_filters, step_b_update_transmit,
};
use afshape_core::types::{phases_to_waveform, FilterMatrix};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(512);
    let m: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2);
    let b: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(4);
    let t_max: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(500);
    let mu: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let f_bins: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(21);
    let seed: u64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(1);

    let mut c = DesignConfig::<f64>::standard();
    c.n_samples = n;
    c.n_channels = m;
    c.alphabet_levels = b;
    c.outer_iters = t_max;
    c.patience = t_max;
    c.snrl_target_db = mu;
    c.seed = seed;
    c.grid = if f_bins == 1 {
        build_grid(-(n as i64 - 1), n as i64 - 1, 0.0, 0.0, 1, n).unwrap()
    } else {
        build_grid(-50, 50, -0.5, 0.5, f_bins, n).unwrap()
    };

    let mut state = init_run_state(&c).unwrap();
    let mut engine = LossEngine::with_policy(&c, DegeneracyPolicy::Subgradient).unwrap();
    let mut prev_hard = state.hard_phases.clone();
    let mut best = f64::INFINITY;

    for t in 1..=t_max {
        step_a_update_filters(&mut engine, &mut state, &c).unwrap();
        let x_hard = phases_to_waveform(&state.hard_phases);
        let hard = engine.eval_pair(&x_hard, &state.filters).unwrap();
        best = best.min(hard.wpsl_linear);

        if t % 25 == 0 || t == 1 {
            // matched-bank WPSL of the same hard waveform
            let matched = FilterMatrix::matched_to(&x_hard);
            let matched_rep = engine.eval_pair(&x_hard, &matched).unwrap();
            // back to the trained filters for level-set stats
            engine.set_filters(&state.filters).unwrap();
            engine.set_waveforms(&x_hard).unwrap();
            let surf = afshape_core::af::af_surface(&x_hard, &state.filters, &c.grid).unwrap();
            let scan = scan_peaks(&surf);
            let vmax = scan.max_value;
            let mut near = 0usize;
            let mut total = 0usize;
            let grid = surf.grid();
            for mi in 0..m {
                for li in 0..m {
                    for (di, &tau) in grid.delays().iter().enumerate() {
                        if mi == li && grid.is_auto_excluded(tau) {
                            continue;
                        }
                        for fi in 0..grid.n_dopplers() {
                            let v = grid.weight_at(di, fi) * surf.value(mi, li, di, fi).norm()
                                / n as f64;
                            total += 1;
                            if v >= 0.9 * vmax {
                                near += 1;
                            }
                        }
                    }
                }
            }
            let churn: usize = state
                .hard_phases
                .as_slice()
                .iter()
                .zip(prev_hard.as_slice())
                .filter(|(a, b)| a != b)
                .count();
            println!(
                "t {t:5}  hard {:7.2} dB  best {:7.2} dB  matched {:7.2} dB  filter_gain {:5.2} dB  near-peak {near}/{total}  churn {churn}/{}  snrl {:?}",
                20.0 * hard.wpsl_linear.log10(),
                20.0 * best.log10(),
                20.0 * matched_rep.wpsl_linear.log10(),
                20.0 * (matched_rep.wpsl_linear / hard.wpsl_linear).log10(),
                n * m,
                hard.snrl_db.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>(),
            );
        }
        prev_hard = state.hard_phases.clone();

        step_b_update_transmit(&mut engine, &mut state, &c).unwrap();
        let gen = generate_waveforms(&state.net, &state.quant, state.seed_phases.as_slice(), n, m)
            .unwrap();
        state.hard_phases = gen.hard_phases;
    }
}
