//! Headroom probe: run the alternating design, then freeze the best
//! hard waveform and keep polishing only the filters, tracking how much
//! further the minimax can go at various Adam rates.
//! cargo run --release -p afshape-core --example polish -- N T mu seed

use afshape_core::autodiff::{
    adam_step, project_filter_energy, AdamState, DegeneracyPolicy, LossEngine,
};
use afshape_core::config::DesignConfig;
use afshape_core::grid::build_grid;
use afshape_core::optimizer::run_design;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(512);
    let t_max: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(400);
    let mu: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1);

    let mut c = DesignConfig::<f64>::standard();
    c.n_samples = n;
    c.outer_iters = t_max;
    c.patience = t_max;
    c.snrl_target_db = mu;
    c.seed = seed;
    c.grid = build_grid(-50, 50, -0.5, 0.5, 21, n).unwrap();

    let result = run_design(&c).unwrap();
    println!(
        "alternating result: WPSL {:.2} dB (APSL {:.2}, CPSL {:.2}) snrl {:?}",
        20.0 * result.report.wpsl_linear.log10(),
        result.report.apsl_db,
        result.report.cpsl_db,
        result.report.snrl_db
    );

    // pure filter polish on the frozen best waveform
    let x = result.x_hard.clone();
    for lr in [5e-2, 1e-2, 2e-3] {
        let mut h = result.filters.clone();
        let mut engine = LossEngine::with_policy(&c, DegeneracyPolicy::Subgradient).unwrap();
        engine.set_waveforms(&x).unwrap();
        let nm = n * c.n_channels;
        let mut adam_re = AdamState::new(nm, lr);
        let mut adam_im = AdamState::new(nm, lr);
        let mut best = f64::INFINITY;
        let mut best_snrl = vec![];
        for step in 1..=8000usize {
            let (report, grads) = engine.filters_pass(&h).unwrap();
            if report.wpsl_linear < best {
                best = report.wpsl_linear;
                best_snrl = report.snrl_db.clone();
            }
            adam_step(&mut adam_re, &mut h.re, &grads.re).unwrap();
            adam_step(&mut adam_im, &mut h.im, &grads.im).unwrap();
            project_filter_energy(&mut h).unwrap();
            if step % 2000 == 0 {
                println!(
                    "  lr {lr:.0e} step {step:5}: wpsl {:7.2} dB  best {:7.2} dB  snrl {:?}",
                    20.0 * report.wpsl_linear.log10(),
                    20.0 * best.log10(),
                    report.snrl_db.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>()
                );
            }
        }
        println!(
            "polish lr {lr:.0e}: best WPSL {:.2} dB  snrl {:?}",
            20.0 * best.log10(),
            best_snrl
        );
    }
}
