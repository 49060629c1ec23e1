//! Structured-text run configuration: a TOML document with a flat key
//! set plus a `[grid]` section. Every key is optional and falls back to
//! the stock defaults; unknown keys are a hard error.

use std::path::Path;

use serde::{Deserialize, Serialize};

use afshape_core::config::MaxMode;
use afshape_core::grid::{build_grid, DelayDopplerGrid};
use afshape_core::{DesignConfig64, Error as CoreError};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub n_channels: Option<usize>,
    pub n_samples: Option<usize>,
    pub alphabet_levels: Option<usize>,
    pub copy_factor: Option<usize>,
    pub steepness: Option<f64>,
    pub snrl_target_db: Option<f64>,
    pub epsilon: Option<f64>,
    pub lr_filter: Option<f64>,
    pub lr_transmit: Option<f64>,
    pub lr_decay_floor: Option<f64>,
    pub inner_filter_steps: Option<usize>,
    pub inner_transmit_steps: Option<usize>,
    pub outer_iters: Option<usize>,
    pub patience: Option<usize>,
    pub seed: Option<u64>,
    pub net_depth: Option<usize>,
    pub net_width: Option<usize>,
    /// When set, the peak-sidelobe term uses the log-sum-exp surrogate
    /// with this sharpness instead of the subgradient max.
    pub smooth_max_beta: Option<f64>,
    pub grid: Option<GridSection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub delay_lo: Option<i64>,
    pub delay_hi: Option<i64>,
    /// Generator form: uniform bins over [doppler_lo, doppler_hi].
    pub doppler_lo: Option<f64>,
    pub doppler_hi: Option<f64>,
    pub n_doppler: Option<usize>,
    /// Explicit form: exact bin list (overrides the generator form).
    pub dopplers: Option<Vec<f64>>,
    pub auto_exclude_delays: Option<Vec<i64>>,
    /// Per-cell overrides of the default unit weight.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<WeightOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightOverride {
    pub tau: i64,
    pub doppler_index: usize,
    pub weight: f64,
}

fn core_err(e: CoreError) -> CliError {
    CliError::Validation(e.to_string())
}

impl ConfigFile {
    /// Overlay this file on the stock defaults and build the grid.
    pub fn into_config(self) -> Result<DesignConfig64, CliError> {
        let mut c = DesignConfig64::standard();
        if let Some(v) = self.n_channels {
            c.n_channels = v;
        }
        if let Some(v) = self.n_samples {
            c.n_samples = v;
        }
        if let Some(v) = self.alphabet_levels {
            c.alphabet_levels = v;
        }
        if let Some(v) = self.copy_factor {
            c.copy_factor = v;
        }
        if let Some(v) = self.steepness {
            c.steepness = v;
        }
        if let Some(v) = self.snrl_target_db {
            c.snrl_target_db = v;
        }
        if let Some(v) = self.epsilon {
            c.epsilon = v;
        }
        if let Some(v) = self.lr_filter {
            c.lr_filter = v;
        }
        if let Some(v) = self.lr_transmit {
            c.lr_transmit = v;
        }
        if let Some(v) = self.lr_decay_floor {
            c.lr_decay_floor = v;
        }
        if let Some(v) = self.inner_filter_steps {
            c.inner_filter_steps = v;
        }
        if let Some(v) = self.inner_transmit_steps {
            c.inner_transmit_steps = v;
        }
        if let Some(v) = self.outer_iters {
            c.outer_iters = v;
        }
        if let Some(v) = self.patience {
            c.patience = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.net_depth {
            c.net_depth = v;
        }
        if let Some(v) = self.net_width {
            c.net_width = v;
        }
        c.max_mode = match self.smooth_max_beta {
            Some(beta) => MaxMode::SmoothMax { beta },
            None => MaxMode::Subgradient,
        };
        let section = self.grid.unwrap_or_default();
        c.grid = build_grid_section(&section, c.n_samples)?;
        c.validate().map_err(core_err)?;
        Ok(c)
    }
}

fn build_grid_section(g: &GridSection, n_samples: usize) -> Result<DelayDopplerGrid<f64>, CliError> {
    let delay_lo = g.delay_lo.unwrap_or(-50);
    let delay_hi = g.delay_hi.unwrap_or(50);
    let mut grid = match &g.dopplers {
        Some(bins) => {
            let delays: Vec<i64> = (delay_lo..=delay_hi).collect();
            let weights = vec![1.0; delays.len() * bins.len()];
            DelayDopplerGrid::new(
                delays,
                bins.clone(),
                weights,
                g.auto_exclude_delays.clone().unwrap_or_else(|| vec![0]),
            )
            .map_err(core_err)?
        }
        None => {
            let f_lo = g.doppler_lo.unwrap_or(-0.5);
            let f_hi = g.doppler_hi.unwrap_or(0.5);
            let n_doppler = g.n_doppler.unwrap_or(21);
            let built =
                build_grid(delay_lo, delay_hi, f_lo, f_hi, n_doppler, n_samples).map_err(core_err)?;
            if let Some(excl) = &g.auto_exclude_delays {
                DelayDopplerGrid::new(
                    built.delays().to_vec(),
                    built.dopplers().to_vec(),
                    (0..built.n_delays() * built.n_dopplers()).map(|_| 1.0).collect(),
                    excl.clone(),
                )
                .map_err(core_err)?
            } else {
                built
            }
        }
    };
    for w in &g.weights {
        let di = grid
            .delays()
            .iter()
            .position(|&t| t == w.tau)
            .ok_or_else(|| CliError::Validation(format!("weight override: delay {} not in grid", w.tau)))?;
        if w.doppler_index >= grid.n_dopplers() {
            return Err(CliError::Validation(format!(
                "weight override: doppler index {} out of range ({} bins)",
                w.doppler_index,
                grid.n_dopplers()
            )));
        }
        if !(w.weight >= 0.0) {
            return Err(CliError::Validation(format!(
                "weight override at tau {} must be nonnegative",
                w.tau
            )));
        }
        grid.set_weight(di, w.doppler_index, w.weight);
    }
    Ok(grid)
}

/// Read and validate a config file.
pub fn parse_config(path: &Path) -> Result<DesignConfig64, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<DesignConfig64, CliError> {
    let file: ConfigFile =
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config parse error: {e}")))?;
    file.into_config()
}

/// Full explicit echo of a config, with the Doppler bins listed
/// verbatim so a round trip reproduces the exact grid.
pub fn config_to_file(c: &DesignConfig64) -> ConfigFile {
    let grid = &c.grid;
    let mut weights = Vec::new();
    for (di, &tau) in grid.delays().iter().enumerate() {
        for fi in 0..grid.n_dopplers() {
            let w = grid.weight_at(di, fi);
            if w != 1.0 {
                weights.push(WeightOverride { tau, doppler_index: fi, weight: w });
            }
        }
    }
    ConfigFile {
        n_channels: Some(c.n_channels),
        n_samples: Some(c.n_samples),
        alphabet_levels: Some(c.alphabet_levels),
        copy_factor: Some(c.copy_factor),
        steepness: Some(c.steepness),
        snrl_target_db: Some(c.snrl_target_db),
        epsilon: Some(c.epsilon),
        lr_filter: Some(c.lr_filter),
        lr_transmit: Some(c.lr_transmit),
        lr_decay_floor: Some(c.lr_decay_floor),
        inner_filter_steps: Some(c.inner_filter_steps),
        inner_transmit_steps: Some(c.inner_transmit_steps),
        outer_iters: Some(c.outer_iters),
        patience: Some(c.patience),
        seed: Some(c.seed),
        net_depth: Some(c.net_depth),
        net_width: Some(c.net_width),
        smooth_max_beta: match c.max_mode {
            MaxMode::Subgradient => None,
            MaxMode::SmoothMax { beta } => Some(beta),
        },
        grid: Some(GridSection {
            delay_lo: Some(grid.delays()[0]),
            delay_hi: Some(*grid.delays().last().unwrap()),
            doppler_lo: None,
            doppler_hi: None,
            n_doppler: None,
            dopplers: Some(grid.dopplers().to_vec()),
            auto_exclude_delays: Some(grid.auto_exclusions().to_vec()),
            weights,
        }),
    }
}

pub fn config_to_toml(c: &DesignConfig64) -> String {
    toml::to_string_pretty(&config_to_file(c)).expect("config serialization")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_full_defaults() {
        let c = parse_config_str("").unwrap();
        let d = DesignConfig64::standard();
        assert_eq!(c, d);
        assert_eq!(c.net_depth, 5);
        assert_eq!(c.net_width, 128);
        assert_eq!(c.lr_filter, 5e-2);
        assert_eq!(c.lr_transmit, 1e-5);
        assert_eq!(c.outer_iters, 2000);
        assert_eq!(c.copy_factor, 100);
        assert_eq!(c.steepness, 300.0);
        assert_eq!(c.epsilon, 0.1);
        assert_eq!(c.snrl_target_db, 0.5);
        assert_eq!(c.grid.n_dopplers(), 21);
        assert_eq!(c.grid.delays().len(), 101);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let e = parse_config_str("n_sample = 12\n").unwrap_err();
        match e {
            CliError::Validation(msg) => assert!(msg.contains("n_sample"), "{msg}"),
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn invariant_violations_name_the_field() {
        let e = parse_config_str("alphabet_levels = 1\n").unwrap_err();
        match e {
            CliError::Validation(msg) => assert!(msg.contains("alphabet_levels"), "{msg}"),
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn round_trip_preserves_config() {
        let text = r#"
n_samples = 64
n_channels = 2
alphabet_levels = 4
seed = 42
smooth_max_beta = 250.0

[grid]
delay_lo = -10
delay_hi = 10
doppler_lo = -0.5
doppler_hi = 0.5
n_doppler = 5

[[grid.weights]]
tau = 3
doppler_index = 1
weight = 0.25
"#;
        let c1 = parse_config_str(text).unwrap();
        let serialized = config_to_toml(&c1);
        let c2 = parse_config_str(&serialized).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c2.grid.weight_at(13, 1), 0.25);
    }

    #[test]
    fn explicit_doppler_bins_are_exact() {
        let text = "[grid]\ndelay_lo = -4\ndelay_hi = 4\ndopplers = [-0.3, 0.0, 0.4]\n";
        let mut full = String::from("n_samples = 16\n");
        full.push_str(text);
        let c = parse_config_str(&full).unwrap();
        assert_eq!(c.grid.dopplers(), &[-0.3, 0.0, 0.4]);
    }
}
