use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};

use armtwin_core::kinematics::KinematicChain;
use armtwin_core::session::SessionConfig;
use serde::{Deserialize, Serialize};

use crate::error::{read_file, GatewayError, Result};
use crate::task::TaskGeometry;

/// Reference arm pose with the tool in front of the base, pointing down.
pub const READY_POSE: [f64; 6] = [FRAC_PI_2, 0.5, 1.2, PI - 1.7, 0.0, 0.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Chain document; the bundled reference arm when absent. Relative paths
    /// resolve against the config file's directory.
    pub chain: Option<PathBuf>,
    pub session: SessionConfig,
    pub task: TaskGeometry,
    /// Session log written by `serve`, if set.
    pub log_path: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            chain: None,
            session: SessionConfig {
                home: Some(READY_POSE.to_vec()),
                ..SessionConfig::default()
            },
            task: TaskGeometry::default(),
            log_path: None,
        }
    }
}

impl GatewayConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        cfg.session.validate()?;
        cfg.task.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&read_file(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.chain = cfg.chain.map(|p| dir.join(p));
        cfg.log_path = cfg.log_path.map(|p| dir.join(p));
        Ok(cfg)
    }

    pub fn load_chain(&self) -> Result<KinematicChain> {
        match &self.chain {
            None => Ok(KinematicChain::reference_6dof()),
            Some(path) => Ok(KinematicChain::from_json(&read_file(path)?)?),
        }
    }
}
