//! Scratch driver for watching optimization trajectories at various
//! sizes. Run: cargo run --release -p afshape-core --example probe -- N M B T mu f_bins

use afshape_core::config::DesignConfig;
use afshape_core::grid::build_grid;
use afshape_core::optimizer::run_design_with;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(128);
    let m: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2);
    let b: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(4);
    let t: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(300);
    let mu: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let f_bins: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(1);
    let seed: u64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(1);

    let mut c = DesignConfig::<f64>::standard();
    c.n_samples = n;
    c.n_channels = m;
    c.alphabet_levels = b;
    c.outer_iters = t;
    c.patience = t;
    c.snrl_target_db = mu;
    c.seed = seed;
    c.grid = if f_bins == 1 {
        build_grid(-(n as i64 - 1), n as i64 - 1, 0.0, 0.0, 1, n).unwrap()
    } else {
        build_grid(-50, 50, -0.5, 0.5, f_bins, n).unwrap()
    };

    let start = std::time::Instant::now();
    let result = run_design_with(&c, |rec| {
        if rec.iter % 25 == 0 || rec.iter == 1 {
            println!(
                "iter {:5}  loss {:.6e}  soft_wpsl {:.5}  hard_apsl {:7.2} dB  hard_cpsl {:7.2} dB  best {:7.2} dB  snrl {:?}",
                rec.iter,
                rec.loss_total,
                rec.soft_wpsl,
                20.0 * rec.hard_wapsl.max(1e-15).log10(),
                20.0 * rec.hard_wcpsl.max(1e-15).log10(),
                20.0 * rec.best_hard_wpsl.max(1e-15).log10(),
                rec.snrl_db.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>(),
            );
        }
    })
    .unwrap();
    println!(
        "done in {:.1}s: best iter {}  APSL {:.2} dB  CPSL {:.2} dB  WPSL {:.2} dB  snrl {:?}",
        start.elapsed().as_secs_f64(),
        result.best_iter,
        result.report.apsl_db,
        result.report.cpsl_db,
        20.0 * result.report.wpsl_linear.max(1e-15).log10(),
        result.report.snrl_db,
    );
}
