//! Run-state snapshots for exact resumption. JSON keeps every float at
//! full round-trip precision, so a resumed run continues the trajectory
//! bit-identically.

use std::path::Path;

use serde::{Deserialize, Serialize};

use afshape_core::optimizer::RunState;
use afshape_core::DesignConfig64;

use crate::config_file::{config_to_file, ConfigFile};
use crate::CliError;

#[derive(Serialize, Deserialize)]
pub struct SnapshotFile {
    pub config: ConfigFile,
    pub state: RunState<f64>,
}

pub fn save_snapshot(
    path: &Path,
    config: &DesignConfig64,
    state: &RunState<f64>,
) -> Result<(), CliError> {
    let file = SnapshotFile { config: config_to_file(config), state: state.clone() };
    let text = serde_json::to_string(&file)
        .map_err(|e| CliError::Runtime(format!("snapshot serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn load_snapshot(path: &Path) -> Result<(DesignConfig64, RunState<f64>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let file: SnapshotFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let config = file.config.into_config()?;
    Ok((config, file.state))
}
