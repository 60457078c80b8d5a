//! The JSON run configuration. Every section and field is optional; missing
//! values take the defaults of the reference configuration.

use std::path::Path;

use ionize_core::{
    AlphaProfile, Coupling, FitMethod, InitialState, ModelParams, Normalization, Shift, StartupGrid, TimeGrid, C64,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub solver: SolverSection,
    pub spectral: SpectralSection,
    pub survival: SurvivalSection,
    pub ionization: IonizationSection,
    pub genericity: GenericitySection,
    pub fit: FitSection,
    pub acceptance: AcceptanceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub r: f64,
    pub omega: f64,
    /// Rows `[n, re, im]` of `alpha_n`; negative `n` may be omitted.
    pub alpha: Vec<[f64; 3]>,
    pub normalization: Normalization,
    pub coupling: Coupling,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            r: 1.0,
            omega: 3.0,
            alpha: vec![[0.0, 1.0, 0.0], [1.0, 0.25, 0.0]],
            normalization: Normalization::Unit,
            coupling: Coupling::Physical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub t_max: f64,
    pub n_steps: usize,
    pub startup: StartupGrid,
    pub initial: InitialState,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { t_max: 60.0, n_steps: 6000, startup: StartupGrid::default(), initial: InitialState::BoundState }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    /// Lattice truncation `N`, components `|n| <= N`.
    pub n_trunc: usize,
    /// Points `[re, im]` for `spectral-solve`.
    pub points: Vec<[f64; 2]>,
    /// Ring radius of the branch fit.
    pub epsilon: f64,
    /// Harmonics `|n| <= harmonics` reported by `branch-fit`.
    pub harmonics: i64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            n_trunc: 64,
            points: vec![[1.5, 0.4], [2.0, 0.0], [1.0, 0.9]],
            epsilon: 1e-3,
            harmonics: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurvivalSection {
    pub stride: usize,
}

impl Default for SurvivalSection {
    fn default() -> Self {
        SurvivalSection { stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IonizationSection {
    pub radius: f64,
    /// Spacing of the coarse evaluation times.
    pub time_step: f64,
    /// Monte Carlo cross-check sample count; 0 disables it.
    pub monte_carlo_samples: usize,
    /// Time of the Monte Carlo cross-check, default `min(5, t_max)`.
    pub monte_carlo_time: Option<f64>,
}

impl Default for IonizationSection {
    fn default() -> Self {
        IonizationSection { radius: 2.0, time_step: 1.0, monte_carlo_samples: 0, monte_carlo_time: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenericitySection {
    pub m: usize,
    pub shift: Shift,
}

impl Default for GenericitySection {
    fn default() -> Self {
        GenericitySection { m: 200, shift: Shift::Right }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Defaults to `[t_max/4, t_max]` of the input series.
    pub window: Option<[f64; 2]>,
    /// Defaults to envelope for charges, raw regression for `abs_theta`.
    pub method: Option<FitMethod>,
    /// Column to fit; defaults to `abs_q2`, else `abs_theta`.
    pub column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcceptanceSection {
    pub supplementary: bool,
}

impl Default for AcceptanceSection {
    fn default() -> Self {
        AcceptanceSection { supplementary: true }
    }
}

impl Config {
    /// Read a config file; `None` gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Config::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::ConfigRead(p.display().to_string(), e))?;
                Self::parse(&text)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(CliError::ConfigParse)
    }

    /// SHA-256 of the resolved configuration, so equivalent files hash equally.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(canonical))
    }

    pub fn alpha_profile(&self) -> Result<AlphaProfile, CliError> {
        let mut pairs = Vec::with_capacity(self.model.alpha.len());
        for row in &self.model.alpha {
            let n = row[0];
            if n.fract() != 0.0 || !n.is_finite() {
                return Err(CliError::Validation(format!("alpha index {n} is not an integer")));
            }
            pairs.push((n as i64, C64::new(row[1], row[2])));
        }
        Ok(AlphaProfile::new(self.model.omega, &pairs)?)
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::with_conventions(
            self.model.r,
            self.alpha_profile()?,
            self.model.normalization,
            self.model.coupling,
        )?)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        TimeGrid::new(self.solver.t_max, self.solver.n_steps).map_err(|e| CliError::Validation(e.to_string()))
    }
}
