//! Subcommand definitions and handlers.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use afshape_core::autodiff::LossEngine;
use afshape_core::baselines::{
    brute_force_optimum, cd_exhaustive, matched_baseline, random_baseline, BaselineResult,
};
use afshape_core::grid::build_grid;
use afshape_core::optimizer::{self, HistoryRecord};
use afshape_core::types::FilterMatrix;
use afshape_core::DesignConfig64;

use crate::config_file::parse_config;
use crate::export::{
    export_result, filters_csv, read_filters, read_manifest, read_waveforms, waveform_csv,
    write_af_slices, write_text, MetricsRecord,
};
use crate::gradcheck::{run_gradcheck, GradcheckOpts};
use crate::snapshot::{load_snapshot, save_snapshot};
use crate::sweep::{run_sweep, SweepAxes};
use crate::{core_runtime, CliError};

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Parser)]
#[command(
    name = "afshape",
    version,
    about = "Joint design of discrete-phase waveform sets and receive filters by delay-Doppler ambiguity shaping"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run the alternating design and export the result directory
    Design(DesignArgs),
    /// Compute metrics for imported waveforms/filters on a grid
    Evaluate(EvaluateArgs),
    /// Run a reference design: matched, random best-of-n, coordinate
    /// descent, or exhaustive brute force
    Baseline(BaselineArgs),
    /// Finite-difference validation of filter, network and threshold
    /// gradients (exits 4 on failure)
    Gradcheck(GradcheckArgs),
    /// Recompute AF/CAF slice files for an exported run
    ExportSlices(ExportSlicesArgs),
    /// Run the design across lists of N/B/SNRL/Doppler settings and
    /// emit a consolidated comparison table
    Sweep(SweepArgs),
}

/// Config file plus per-key command-line overrides.
#[derive(Args, Clone)]
pub struct ConfigOpts {
    /// TOML config file; stock defaults fill any missing key
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sequence length N
    #[arg(long)]
    pub n: Option<usize>,
    /// Phase alphabet size B
    #[arg(long)]
    pub b: Option<usize>,
    /// Number of transmit channels M
    #[arg(long)]
    pub m: Option<usize>,
    /// Target SNR loss in dB
    #[arg(long = "snrl-db")]
    pub snrl_db: Option<f64>,
    /// Doppler range as lo:hi (rebuilds the grid)
    #[arg(long = "doppler-range", allow_hyphen_values = true)]
    pub doppler_range: Option<String>,
    /// Number of Doppler bins (rebuilds the grid)
    #[arg(long = "n-doppler")]
    pub n_doppler: Option<usize>,
    /// Delay region of interest as lo:hi (rebuilds the grid)
    #[arg(long = "delay-roi", allow_hyphen_values = true)]
    pub delay_roi: Option<String>,
    /// Seed for all random initialization
    #[arg(long)]
    pub seed: Option<u64>,
    /// Outer iteration cap
    #[arg(long = "outer-iters")]
    pub outer_iters: Option<usize>,
    /// Sidelobe/mainlobe trade-off in [0,1]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Stall window of the stopping rule
    #[arg(long)]
    pub patience: Option<usize>,
}

fn parse_pair<V: std::str::FromStr>(s: &str, what: &str) -> Result<(V, V), CliError> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("{what} must be lo:hi, got `{s}`")))?;
    let lo = lo
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{what}: bad value `{lo}`")))?;
    let hi = hi
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{what}: bad value `{hi}`")))?;
    Ok((lo, hi))
}

impl ConfigOpts {
    /// Apply overrides on top of an existing config.
    pub fn apply(&self, c: &mut DesignConfig64) -> Result<(), CliError> {
        if let Some(v) = self.n {
            c.n_samples = v;
        }
        if let Some(v) = self.b {
            c.alphabet_levels = v;
        }
        if let Some(v) = self.m {
            c.n_channels = v;
        }
        if let Some(v) = self.snrl_db {
            c.snrl_target_db = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.outer_iters {
            c.outer_iters = v;
        }
        if let Some(v) = self.epsilon {
            c.epsilon = v;
        }
        if let Some(v) = self.patience {
            c.patience = v;
        }
        if self.doppler_range.is_some() || self.n_doppler.is_some() || self.delay_roi.is_some() {
            let (d_lo, d_hi) = match &self.delay_roi {
                Some(s) => parse_pair::<i64>(s, "--delay-roi")?,
                None => (c.grid.delays()[0], *c.grid.delays().last().unwrap()),
            };
            let (f_lo, f_hi) = match &self.doppler_range {
                Some(s) => parse_pair::<f64>(s, "--doppler-range")?,
                None => (c.grid.dopplers()[0], *c.grid.dopplers().last().unwrap()),
            };
            let bins = self.n_doppler.unwrap_or_else(|| if f_lo == f_hi { 1 } else { c.grid.n_dopplers() });
            c.grid = build_grid(d_lo, d_hi, f_lo, f_hi, bins, c.n_samples).map_err(core_runtime)?;
        }
        c.validate().map_err(core_runtime)?;
        Ok(())
    }

    pub fn resolve(&self) -> Result<DesignConfig64, CliError> {
        let mut c = match &self.config {
            Some(p) => parse_config(p)?,
            None => DesignConfig64::standard(),
        };
        self.apply(&mut c)?;
        Ok(c)
    }
}

#[derive(Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub config: ConfigOpts,
    /// Output directory for the run exports
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a snapshot.json written by a previous run
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Progress line every K outer iterations (0 = silent)
    #[arg(long = "log-every", default_value_t = 100)]
    pub log_every: usize,
}

pub fn cmd_design(a: &DesignArgs) -> Result<i32, CliError> {
    let start_time = now_rfc3339();
    let (config, state) = match &a.resume {
        Some(path) => {
            let (mut config, state) = load_snapshot(path)?;
            a.config.apply(&mut config)?;
            (config, state)
        }
        None => {
            let config = a.config.resolve()?;
            let state = optimizer::init_run_state(&config).map_err(core_runtime)?;
            (config, state)
        }
    };
    let log_every = a.log_every;
    let observer = |rec: &HistoryRecord<f64>| {
        if log_every > 0 && rec.iter % log_every == 0 {
            eprintln!(
                "iter {:5}  loss {:.4e}  hard PSLR {:7.2} dB  best WPSL {:7.2} dB  snrl {:?} dB",
                rec.iter,
                rec.loss_total,
                rec.hard_pslr_db,
                afshape_core::metrics::db_or_floor(rec.best_hard_wpsl),
                rec.snrl_db.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>(),
            );
        }
    };
    let (result, final_state) =
        optimizer::resume_design(&config, state, observer).map_err(core_runtime)?;
    let end_time = now_rfc3339();
    export_result(&result, &a.out, &start_time, &end_time)?;
    save_snapshot(&a.out.join("snapshot.json"), &config, &final_state)?;
    println!(
        "design: {} iterations (best at {}), APSL {:.2} dB, CPSL {:.2} dB, SNRL {:?} dB -> {}",
        result.iterations_run,
        result.best_iter,
        result.report.apsl_db,
        result.report.cpsl_db,
        result.report.snrl_db,
        a.out.display()
    );
    if result.snrl_flags.iter().any(|&f| f) {
        eprintln!(
            "warning: achieved SNR loss deviates more than {} dB from the {} dB target on channels {:?}",
            optimizer::SNRL_FLAG_DB,
            config.snrl_target_db,
            result
                .snrl_flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(|(i, _)| i + 1)
                .collect::<Vec<_>>()
        );
    }
    Ok(0)
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigOpts,
    /// Waveform CSV (as exported by design/baseline)
    #[arg(long)]
    pub waveforms: PathBuf,
    /// Filter CSV; defaults to the matched bank of the waveforms
    #[arg(long)]
    pub filters: Option<PathBuf>,
    /// Write metrics.toml (and nothing else) into this directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<i32, CliError> {
    let x = read_waveforms(&a.waveforms)?;
    let h = match &a.filters {
        Some(p) => read_filters(p)?,
        None => FilterMatrix::matched_to(&x),
    };
    let mut config = a.config.resolve()?;
    config.n_samples = x.n_samples();
    config.n_channels = x.n_channels();
    config.validate().map_err(core_runtime)?;
    let mut engine = LossEngine::new(&config).map_err(core_runtime)?;
    let report = engine.eval_pair(&x, &h).map_err(core_runtime)?;
    let record = MetricsRecord::from_report(&report, &[]);
    let text = toml::to_string_pretty(&record).expect("metrics serialization");
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
            write_text(&dir.join("metrics.toml"), &text)?;
            println!("evaluate: wrote {}", dir.join("metrics.toml").display());
        }
        None => print!("{text}"),
    }
    Ok(0)
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Matched,
    Random,
    Cd,
    Brute,
}

#[derive(Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub config: ConfigOpts,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Random baseline: number of seeded draws
    #[arg(long, default_value_t = 16)]
    pub draws: usize,
    /// Coordinate descent: sweep budget
    #[arg(long = "max-sweeps", default_value_t = 100)]
    pub max_sweeps: usize,
    /// Brute force: enumeration budget
    #[arg(long, default_value_t = 1 << 20)]
    pub budget: u64,
    /// Export the baseline design into this directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_baseline(a: &BaselineArgs) -> Result<i32, CliError> {
    let config = a.config.resolve()?;
    let r: BaselineResult<f64> = match a.method {
        MethodArg::Matched => matched_baseline(&config),
        MethodArg::Random => random_baseline(&config, a.draws),
        MethodArg::Cd => cd_exhaustive(&config, a.max_sweeps),
        MethodArg::Brute => brute_force_optimum(&config, a.budget),
    }
    .map_err(core_runtime)?;
    println!(
        "baseline {}: WPSL {:.4e} ({:.2} dB), APSL {:.2} dB, CPSL {:.2} dB, {} evaluations{}",
        r.method.tag(),
        r.wpsl,
        afshape_core::metrics::db_or_floor(r.wpsl),
        r.report.apsl_db,
        r.report.cpsl_db,
        r.evaluations,
        if r.converged { "" } else { " (budget exhausted)" }
    );
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
        let idx = r
            .phases
            .alphabet_indices(config.alphabet_levels)
            .map_err(core_runtime)?;
        write_text(&dir.join("waveform.csv"), &waveform_csv(&r.x, &idx))?;
        write_text(&dir.join("filters.csv"), &filters_csv(&r.filters))?;
        let record = MetricsRecord::from_report(&r.report, &[]);
        write_text(
            &dir.join("metrics.toml"),
            &toml::to_string_pretty(&record).expect("metrics serialization"),
        )?;
        write_af_slices(dir, &r.x, &r.filters, &config, "")?;
        println!("baseline: exported to {}", dir.display());
    }
    Ok(0)
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Sequence length
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Transmit channels
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Doppler bins of the test grid
    #[arg(long, default_value_t = 3)]
    pub bins: usize,
    /// Generator depth
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Generator width
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum tolerated relative error
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32, CliError> {
    let opts = GradcheckOpts {
        n_samples: a.n,
        n_channels: a.m,
        doppler_bins: a.bins,
        net_depth: a.depth,
        net_width: a.width,
        seed: a.seed,
        tolerance: a.tol,
    };
    let outcome = run_gradcheck(&opts)?;
    for (name, rep) in [
        ("filters", &outcome.filters),
        ("network", &outcome.net),
        ("thresholds", &outcome.thresholds),
    ] {
        println!(
            "gradcheck {name:10} max rel err {:.3e} at coord {} (analytic {:.6e}, fd {:.6e}, {} coords) {}",
            rep.max_rel_err,
            rep.worst_coord,
            rep.analytic,
            rep.numeric,
            rep.n_checked,
            if rep.max_rel_err < outcome.tolerance { "PASS" } else { "FAIL" }
        );
    }
    if outcome.passed() {
        println!("gradcheck PASS (tolerance {:.1e}, seed {})", outcome.tolerance, outcome.seed_used);
        Ok(0)
    } else {
        println!("gradcheck FAIL (tolerance {:.1e}, seed {})", outcome.tolerance, outcome.seed_used);
        Ok(4)
    }
}

#[derive(Args)]
pub struct ExportSlicesArgs {
    /// Run directory containing manifest.toml, waveform.csv, filters.csv
    #[arg(long)]
    pub run: PathBuf,
    /// Destination directory (defaults to the run directory)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use the final-iterate files instead of the best snapshot
    #[arg(long)]
    pub final_iterate: bool,
}

pub fn cmd_export_slices(a: &ExportSlicesArgs) -> Result<i32, CliError> {
    let manifest = read_manifest(&a.run.join("manifest.toml"))?;
    let config = manifest.config.into_config()?;
    let (wname, fname) = if a.final_iterate {
        ("waveform_final.csv", "filters_final.csv")
    } else {
        ("waveform.csv", "filters.csv")
    };
    let x = read_waveforms(&a.run.join(wname))?;
    let h = read_filters(&a.run.join(fname))?;
    let out = a.out.clone().unwrap_or_else(|| a.run.clone());
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let suffix = if a.final_iterate { "_final" } else { "" };
    write_af_slices(&out, &x, &h, &config, suffix)?;
    println!(
        "export-slices: wrote {} slice files to {}",
        config.n_channels * config.n_channels,
        out.display()
    );
    Ok(0)
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigOpts,
    /// Comma-separated sequence lengths
    #[arg(long = "n-list", value_delimiter = ',')]
    pub n_list: Vec<usize>,
    /// Comma-separated alphabet sizes
    #[arg(long = "b-list", value_delimiter = ',')]
    pub b_list: Vec<usize>,
    /// Comma-separated SNR-loss targets (dB)
    #[arg(long = "snrl-list", value_delimiter = ',')]
    pub snrl_list: Vec<f64>,
    /// Comma-separated Doppler ranges lo:hi
    #[arg(long = "doppler-ranges", value_delimiter = ',')]
    pub doppler_ranges: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<i32, CliError> {
    let base = a.config.resolve()?;
    let mut ranges = Vec::new();
    for s in &a.doppler_ranges {
        ranges.push(parse_pair::<f64>(s, "--doppler-ranges")?);
    }
    let axes = SweepAxes {
        n_list: a.n_list.clone(),
        b_list: a.b_list.clone(),
        snrl_list: a.snrl_list.clone(),
        doppler_ranges: ranges,
    };
    let rows = run_sweep(&base, &axes, &a.out, |msg| eprintln!("{msg}"))?;
    print!("{}", crate::sweep::sweep_csv(&rows));
    println!("sweep: {} settings -> {}", rows.len(), a.out.display());
    Ok(0)
}

pub fn dispatch(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::ExportSlices(a) => cmd_export_slices(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}
