//! TOML run configuration. Every section and key is optional.
//!
//! ```toml
//! [quadrature]
//! abs_tol = 1e-10
//! [lm]
//! max_iterations = 200
//! [calibration]
//! residual = "vega_weighted_price"
//! convention = "spot"
//! [bounds]
//! kappa = { lo = 1e-4, hi = 6.0 }
//! [fd]
//! x_nodes = 200
//! [mc]
//! paths = 100000
//! ```

use std::path::Path;

use hestonpw::bs::DeltaConvention;
use hestonpw::calibrator::{CalibrationBounds, CalibrationOptions, ResidualKind};
use hestonpw::fd::FdConfig;
use hestonpw::lm::LmConfig;
use hestonpw::mc::McConfig;
use hestonpw::quadrature::QuadratureConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub quadrature: QuadratureConfig,
    pub lm: LmConfig,
    pub calibration: CalibrationSection,
    pub bounds: CalibrationBounds,
    pub fd: FdConfig,
    pub mc: McConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub residual: ResidualKind,
    pub global_kappa: f64,
    pub convention: DeltaConvention,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            residual: ResidualKind::default(),
            global_kappa: CalibrationOptions::default().global_kappa,
            convention: DeltaConvention::default(),
        }
    }
}

impl Config {
    /// Loads `path` (or defaults), then applies the command-line overrides.
    pub fn load(path: Option<&Path>, tolerance: Option<f64>, seed: Option<u64>) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
            }
            None => Config::default(),
        };
        if let Some(t) = tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Usage(format!("--tolerance must be positive, got {t}")));
            }
            cfg.quadrature.abs_tol = t;
        }
        if let Some(s) = seed {
            cfg.mc.seed = s;
        }
        Ok(cfg)
    }

    pub fn calibration_options(&self) -> CalibrationOptions {
        CalibrationOptions {
            lm: self.lm,
            quadrature: self.quadrature,
            residual: self.calibration.residual,
            global_kappa: self.calibration.global_kappa,
            initial_guess: None,
        }
    }
}
