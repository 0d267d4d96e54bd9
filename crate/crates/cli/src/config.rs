//! Forging configuration files: `key value` lines, `#` comments.
//!
//! Every key is optional and falls back to the benchmark defaults; unknown
//! keys are rejected so typos cannot silently change a run.

use std::path::{Path, PathBuf};

use stpod_core::rvpfem::ForgingConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {what}")]
    Parse {
        path: PathBuf,
        line: usize,
        what: String,
    },
}

pub fn parse_config(path: &Path) -> Result<ForgingConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(path, &text)
}

pub fn parse_config_str(path: &Path, text: &str) -> Result<ForgingConfig, ConfigError> {
    let mut cfg = ForgingConfig::benchmark(0.5);
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |what: String| ConfigError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            what,
        };
        let (key, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| err(format!("expected `key value`, got {line:?}")))?;
        let value = value.trim();
        let fnum = || -> Result<f64, ConfigError> {
            value
                .parse()
                .map_err(|_| err(format!("cannot parse number from {value:?} for {key}")))
        };
        let unum = || -> Result<usize, ConfigError> {
            value
                .parse()
                .map_err(|_| err(format!("cannot parse integer from {value:?} for {key}")))
        };
        match key {
            "mesh_nx" => cfg.mesh_nx = unum()?,
            "mesh_ny" => cfg.mesh_ny = unum()?,
            "width" => cfg.width = fnum()?,
            "height" => cfg.height = fnum()?,
            "die_speed" => cfg.die_speed = fnum()?,
            "steps" => cfg.steps = unum()?,
            "dt" => cfg.dt = fnum()?,
            "flow_coeff" => cfg.material.flow_coeff = fnum()?,
            "flow_exp" => cfg.material.flow_exp = fnum()?,
            "limit_rate" => cfg.material.limit_rate = fnum()?,
            "penalty" => cfg.material.penalty = fnum()?,
            "friction_m" => cfg.material.friction_m = fnum()?,
            "reg_velocity" => cfg.material.reg_velocity = fnum()?,
            "taylor_quinney" => cfg.material.taylor_quinney = fnum()?,
            "heat_capacity" => cfg.material.heat_capacity = fnum()?,
            "conductivity" => cfg.material.conductivity = fnum()?,
            "initial_temperature" => cfg.initial_temperature = fnum()?,
            "theta" => cfg.theta = fnum()?,
            "die_film" => cfg.die_film = fnum()?,
            "die_temperature" => cfg.die_temperature = fnum()?,
            "ambient_film" => cfg.ambient_film = fnum()?,
            "ambient_temperature" => cfg.ambient_temperature = fnum()?,
            "lumped_capacity" => {
                cfg.lumped_capacity = value
                    .parse()
                    .map_err(|_| err(format!("expected true/false for {key}, got {value:?}")))?
            }
            "tol_velocity" => cfg.tol_velocity = fnum()?,
            "tol_residual" => cfg.tol_residual = fnum()?,
            "max_iterations" => cfg.max_iterations = unum()?,
            "direct_warmstart" => cfg.direct_warmstart = unum()?,
            other => return Err(err(format!("unknown configuration key {other:?}"))),
        }
    }
    Ok(cfg)
}
