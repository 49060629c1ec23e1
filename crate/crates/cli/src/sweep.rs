//! Sweep orchestration: run one base configuration across lists of
//! sequence lengths, alphabet sizes, SNR-loss targets and Doppler
//! ranges, collecting one comparison row per setting.

use std::fmt::Write as _;
use std::path::Path;

use afshape_core::grid::build_grid;
use afshape_core::optimizer;
use afshape_core::DesignConfig64;

use crate::export::export_result;
use crate::{core_runtime, CliError};

#[derive(Debug, Clone)]
pub struct SweepAxes {
    pub n_list: Vec<usize>,
    pub b_list: Vec<usize>,
    pub snrl_list: Vec<f64>,
    pub doppler_ranges: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n_samples: usize,
    pub alphabet_levels: usize,
    pub snrl_target_db: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub apsl_db: f64,
    pub cpsl_db: f64,
    pub wpsl_db: f64,
    pub snrl_db: Vec<f64>,
    pub best_iter: usize,
    pub duration_secs: f64,
    pub dir: String,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("n,b,snrl_target_db,f_lo,f_hi,apsl_db,cpsl_db,wpsl_db,snrl_db_mean,best_iter,duration_secs,dir\n");
    for r in rows {
        let mean_snrl = r.snrl_db.iter().sum::<f64>() / r.snrl_db.len() as f64;
        writeln!(
            out,
            "{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{},{:.2},{}",
            r.n_samples,
            r.alphabet_levels,
            r.snrl_target_db,
            r.f_lo,
            r.f_hi,
            r.apsl_db,
            r.cpsl_db,
            r.wpsl_db,
            mean_snrl,
            r.best_iter,
            r.duration_secs,
            r.dir
        )
        .unwrap();
    }
    out
}

/// Cartesian product over the non-empty axes; empty axes keep the base
/// config's value. Each setting runs to completion and exports into its
/// own subdirectory of `out_dir`.
pub fn run_sweep(
    base: &DesignConfig64,
    axes: &SweepAxes,
    out_dir: &Path,
    mut progress: impl FnMut(&str),
) -> Result<Vec<SweepRow>, CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    let ns = or_base(&axes.n_list, base.n_samples);
    let bs = or_base(&axes.b_list, base.alphabet_levels);
    let mus = or_base(&axes.snrl_list, base.snrl_target_db);
    let franges = or_base(
        &axes.doppler_ranges,
        (base.grid.dopplers()[0], *base.grid.dopplers().last().unwrap()),
    );

    let mut rows = Vec::new();
    for &n in &ns {
        for &b in &bs {
            for &mu in &mus {
                for &(f_lo, f_hi) in &franges {
                    let mut c = base.clone();
                    c.n_samples = n;
                    c.alphabet_levels = b;
                    c.snrl_target_db = mu;
                    let delay_lo = base.grid.delays()[0];
                    let delay_hi = *base.grid.delays().last().unwrap();
                    let bins = if f_lo == f_hi { 1 } else { base.grid.n_dopplers() };
                    c.grid = build_grid(delay_lo, delay_hi, f_lo, f_hi, bins, n)
                        .map_err(core_runtime)?;
                    c.validate().map_err(core_runtime)?;

                    let tag = format!("run_n{n}_b{b}_mu{mu}_f{f_lo}to{f_hi}");
                    progress(&format!("sweep: starting {tag}"));
                    let start_time = crate::commands::now_rfc3339();
                    let result = optimizer::run_design(&c).map_err(core_runtime)?;
                    let end_time = crate::commands::now_rfc3339();
                    let dir = out_dir.join(&tag);
                    export_result(&result, &dir, &start_time, &end_time)?;
                    progress(&format!(
                        "sweep: {tag} APSL {:.2} dB CPSL {:.2} dB in {:.1}s",
                        result.report.apsl_db, result.report.cpsl_db, result.duration_secs
                    ));
                    rows.push(SweepRow {
                        n_samples: n,
                        alphabet_levels: b,
                        snrl_target_db: mu,
                        f_lo,
                        f_hi,
                        apsl_db: result.report.apsl_db,
                        cpsl_db: result.report.cpsl_db,
                        wpsl_db: afshape_core::metrics::db_or_floor(result.report.wpsl_linear),
                        snrl_db: result.report.snrl_db.clone(),
                        best_iter: result.best_iter,
                        duration_secs: result.duration_secs,
                        dir: tag,
                    });
                }
            }
        }
    }
    crate::export::write_text(&out_dir.join("sweep.csv"), &sweep_csv(&rows))?;
    Ok(rows)
}

fn or_base<X: Clone>(list: &[X], base: X) -> Vec<X> {
    if list.is_empty() {
        vec![base]
    } else {
        list.to_vec()
    }
}
