//! Deterministic file exports: waveforms (phase indices + complex
//! samples), filters, AF/CAF slices, metrics, the run manifest and the
//! loss history. All floats are printed with 12 significant digits;
//! re-imports land within one unit of that precision.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use afshape_core::af::af_surface;
use afshape_core::autodiff::{ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use afshape_core::metrics::{db_or_floor, DB_FLOOR};
use afshape_core::optimizer::{HistoryRecord, SNRL_FLAG_DB, WPSL_IMPROVEMENT_TOL};
use afshape_core::quantizer::{THRESHOLD_CLAMP_HI, THRESHOLD_CLAMP_LO, THRESHOLD_MIN_GAP};
use afshape_core::types::{FilterMatrix, WaveformMatrix};
use afshape_core::{DesignConfig64, DesignResult64, MetricReport64};

use crate::config_file::{config_to_file, ConfigFile};
use crate::CliError;

fn fmt12(v: f64) -> String {
    format!("{:.11e}", v)
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Waveform export: one row per sample, per-channel integer phase
/// indices followed by per-channel re/im columns.
pub fn waveform_csv(x: &WaveformMatrix<f64>, indices: &[u32]) -> String {
    let n = x.n_samples();
    let m = x.n_channels();
    let mut out = String::from("sample");
    for ch in 0..m {
        write!(out, ",idx_{}", ch + 1).unwrap();
    }
    for ch in 0..m {
        write!(out, ",re_{0},im_{0}", ch + 1).unwrap();
    }
    out.push('\n');
    for i in 0..n {
        write!(out, "{i}").unwrap();
        for ch in 0..m {
            write!(out, ",{}", indices[ch * n + i]).unwrap();
        }
        for ch in 0..m {
            let z = x.get(i, ch);
            write!(out, ",{},{}", fmt12(z.re), fmt12(z.im)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn filters_csv(h: &FilterMatrix<f64>) -> String {
    let n = h.n_samples();
    let m = h.n_channels();
    let mut out = String::from("sample");
    for ch in 0..m {
        write!(out, ",re_{0},im_{0}", ch + 1).unwrap();
    }
    out.push('\n');
    for i in 0..n {
        write!(out, "{i}").unwrap();
        for ch in 0..m {
            let z = h.get(i, ch);
            write!(out, ",{},{}", fmt12(z.re), fmt12(z.im)).unwrap();
        }
        out.push('\n');
    }
    out
}

fn parse_csv_floats(path: &Path, text: &str) -> Result<(Vec<Vec<f64>>, Vec<String>), CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Validation(format!("{}: empty file", path.display())))?;
    let cols: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            CliError::Validation(format!("{} line {}: {e}", path.display(), ln + 2))
        })?;
        if row.len() != cols.len() {
            return Err(CliError::Validation(format!(
                "{} line {}: {} fields, header has {}",
                path.display(),
                ln + 2,
                row.len(),
                cols.len()
            )));
        }
        rows.push(row);
    }
    Ok((rows, cols))
}

/// Import a waveform export (uses the re/im columns).
pub fn read_waveforms(path: &Path) -> Result<WaveformMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let (rows, cols) = parse_csv_floats(path, &text)?;
    let m = cols.iter().filter(|c| c.starts_with("re_")).count();
    if m == 0 || rows.is_empty() {
        return Err(CliError::Validation(format!("{}: no re_/im_ columns", path.display())));
    }
    let re0 = cols.iter().position(|c| c == "re_1").unwrap();
    let n = rows.len();
    let mut values = vec![num_complex::Complex::new(0.0, 0.0); n * m];
    for (i, row) in rows.iter().enumerate() {
        for ch in 0..m {
            values[ch * n + i] = num_complex::Complex::new(row[re0 + 2 * ch], row[re0 + 2 * ch + 1]);
        }
    }
    WaveformMatrix::from_vec(values, n, m).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn read_filters(path: &Path) -> Result<FilterMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let (rows, cols) = parse_csv_floats(path, &text)?;
    let m = cols.iter().filter(|c| c.starts_with("re_")).count();
    if m == 0 || rows.is_empty() {
        return Err(CliError::Validation(format!("{}: no re_/im_ columns", path.display())));
    }
    let re0 = cols.iter().position(|c| c == "re_1").unwrap();
    let n = rows.len();
    let mut re = vec![0.0; n * m];
    let mut im = vec![0.0; n * m];
    for (i, row) in rows.iter().enumerate() {
        for ch in 0..m {
            re[ch * n + i] = row[re0 + 2 * ch];
            im[ch * n + i] = row[re0 + 2 * ch + 1];
        }
    }
    FilterMatrix::from_parts(re, im, n, m).map_err(|e| CliError::Validation(e.to_string()))
}

/// One AF/CAF slice file per channel pair: tau, f, magnitude_db rows
/// with the PSLR-consistent 20 log10(|A|/N) convention.
pub fn write_af_slices(
    dir: &Path,
    x: &WaveformMatrix<f64>,
    h: &FilterMatrix<f64>,
    config: &DesignConfig64,
    suffix: &str,
) -> Result<(), CliError> {
    let surf = af_surface(x, h, &config.grid).map_err(|e| CliError::Runtime(e.to_string()))?;
    let n = x.n_samples() as f64;
    let grid = &config.grid;
    for m in 0..x.n_channels() {
        for l in 0..x.n_channels() {
            let mut out = String::from("tau,f,magnitude_db\n");
            for (di, &tau) in grid.delays().iter().enumerate() {
                for (fi, &f) in grid.dopplers().iter().enumerate() {
                    let mag = surf.value(m, l, di, fi).norm() / n;
                    writeln!(out, "{tau},{},{}", fmt12(f), fmt12(db_or_floor(mag))).unwrap();
                }
            }
            let path = dir.join(format!("af_m{}_l{}{}.csv", m + 1, l + 1, suffix));
            write_text(&path, &out)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub wapsl_linear: f64,
    pub wcpsl_linear: f64,
    pub wpsl_linear: f64,
    pub apsl_db: f64,
    pub cpsl_db: f64,
    pub snrl_db: Vec<f64>,
    pub loss_total: f64,
    pub loss_wpsl: f64,
    pub loss_snrl: f64,
    pub cross_terms_present: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snrl_flags: Vec<bool>,
}

impl MetricsRecord {
    pub fn from_report(r: &MetricReport64, flags: &[bool]) -> Self {
        Self {
            wapsl_linear: r.wapsl_linear,
            wcpsl_linear: r.wcpsl_linear,
            wpsl_linear: r.wpsl_linear,
            apsl_db: r.apsl_db,
            cpsl_db: r.cpsl_db,
            snrl_db: r.snrl_db.clone(),
            loss_total: r.loss_total,
            loss_wpsl: r.loss_wpsl,
            loss_snrl: r.loss_snrl,
            cross_terms_present: r.cross_terms_present,
            snrl_flags: flags.to_vec(),
        }
    }
}

/// Fixed numerical constants of this build, echoed for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constants {
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub quantizer_amplitude: f64,
    pub threshold_clamp_lo: f64,
    pub threshold_clamp_hi: f64,
    pub threshold_min_gap: f64,
    pub wpsl_improvement_tol: f64,
    pub snrl_flag_db: f64,
    pub db_floor: f64,
}

impl Constants {
    pub fn current(alphabet_levels: usize) -> Self {
        Self {
            adam_beta1: ADAM_BETA1,
            adam_beta2: ADAM_BETA2,
            adam_eps: ADAM_EPS,
            quantizer_amplitude: 1.0 / (2.0 * alphabet_levels as f64),
            threshold_clamp_lo: THRESHOLD_CLAMP_LO,
            threshold_clamp_hi: THRESHOLD_CLAMP_HI,
            threshold_min_gap: THRESHOLD_MIN_GAP,
            wpsl_improvement_tol: WPSL_IMPROVEMENT_TOL,
            snrl_flag_db: SNRL_FLAG_DB,
            db_floor: DB_FLOOR,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhasesRecord {
    /// Alphabet indices of the random seed phases, per channel.
    pub seed_indices: Vec<Vec<u32>>,
    /// Alphabet indices of the first-iterate hard phases, per channel.
    pub first_hard_indices: Vec<Vec<u32>>,
}

/// Everything needed to re-execute the run plus what it achieved.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub start_time: String,
    pub end_time: String,
    pub duration_secs: f64,
    pub best_iter: usize,
    pub iterations_run: usize,
    pub stopped_early: bool,
    pub config: ConfigFile,
    pub constants: Constants,
    pub phases: PhasesRecord,
    pub metrics: MetricsRecord,
    pub metrics_final: MetricsRecord,
}

pub fn history_csv(history: &[HistoryRecord<f64>], n_channels: usize) -> String {
    let mut out = String::from(
        "iteration,loss_total,loss_wpsl,loss_snrl,soft_wpsl,hard_wpsl,hard_wapsl,hard_wcpsl,hard_pslr_db,best_hard_wpsl",
    );
    for ch in 0..n_channels {
        write!(out, ",snrl_db_{}", ch + 1).unwrap();
    }
    out.push('\n');
    for r in history {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iter,
            fmt12(r.loss_total),
            fmt12(r.loss_wpsl),
            fmt12(r.loss_snrl),
            fmt12(r.soft_wpsl),
            fmt12(r.hard_wpsl),
            fmt12(r.hard_wapsl),
            fmt12(r.hard_wcpsl),
            fmt12(r.hard_pslr_db),
            fmt12(r.best_hard_wpsl),
        )
        .unwrap();
        for ch in 0..n_channels {
            write!(out, ",{}", fmt12(r.snrl_db[ch])).unwrap();
        }
        out.push('\n');
    }
    out
}

fn phase_indices_by_channel(
    phases: &afshape_core::PhaseMatrix64,
    levels: usize,
) -> Result<Vec<Vec<u32>>, CliError> {
    let flat = phases
        .alphabet_indices(levels)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let n = phases.n_samples();
    Ok((0..phases.n_channels())
        .map(|ch| flat[ch * n..(ch + 1) * n].to_vec())
        .collect())
}

/// Write the full run directory for a design result.
pub fn export_result(
    result: &DesignResult64,
    out_dir: &Path,
    start_time: &str,
    end_time: &str,
) -> Result<(), CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let config = &result.config;
    let levels = config.alphabet_levels;

    let best_idx = result
        .hard_phases
        .alphabet_indices(levels)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&out_dir.join("waveform.csv"), &waveform_csv(&result.x_hard, &best_idx))?;
    write_text(&out_dir.join("filters.csv"), &filters_csv(&result.filters))?;

    let final_idx = result
        .final_hard_phases
        .alphabet_indices(levels)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(
        &out_dir.join("waveform_final.csv"),
        &waveform_csv(&result.final_x_hard, &final_idx),
    )?;
    write_text(&out_dir.join("filters_final.csv"), &filters_csv(&result.final_filters))?;

    write_af_slices(out_dir, &result.x_hard, &result.filters, config, "")?;

    let metrics = MetricsRecord::from_report(&result.report, &result.snrl_flags);
    write_text(
        &out_dir.join("metrics.toml"),
        &toml::to_string_pretty(&metrics).expect("metrics serialization"),
    )?;
    write_text(
        &out_dir.join("history.csv"),
        &history_csv(&result.history, config.n_channels),
    )?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        start_time: start_time.to_string(),
        end_time: end_time.to_string(),
        duration_secs: result.duration_secs,
        best_iter: result.best_iter,
        iterations_run: result.iterations_run,
        stopped_early: result.stopped_early,
        config: config_to_file(config),
        constants: Constants::current(levels),
        phases: PhasesRecord {
            seed_indices: phase_indices_by_channel(&result.seed_phases, levels)?,
            first_hard_indices: phase_indices_by_channel(&result.first_hard_phases, levels)?,
        },
        metrics,
        metrics_final: MetricsRecord::from_report(&result.final_report, &[]),
    };
    write_text(
        &out_dir.join("manifest.toml"),
        &toml::to_string_pretty(&manifest).expect("manifest serialization"),
    )?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}
