//! Declarative run configuration, read from TOML. Command-line flags are
//! applied on top of the file.

use std::fmt;
use std::path::{Path, PathBuf};

use qcrf::{BinaryConfig, EnergyParams, IcmConfig, MeanFieldConfig, MultilabelConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[derive(clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Superpixel expansion (binary solver for two labels, nested otherwise).
    Expansion,
    Meanfield,
    /// Single-pixel ICM.
    Icm,
    /// Whole-superpixel ICM.
    Spicm,
    /// Pixel graph cut for two labels, enumeration otherwise.
    Exact,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::Expansion, Method::Meanfield, Method::Icm, Method::Spicm, Method::Exact];

    pub fn name(self) -> &'static str {
        match self {
            Method::Expansion => "expansion",
            Method::Meanfield => "meanfield",
            Method::Icm => "icm",
            Method::Spicm => "spicm",
            Method::Exact => "exact",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub smoothness: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        EnergyParams::default().into()
    }
}

impl From<EnergyParams> for ParamsConfig {
    fn from(p: EnergyParams) -> Self {
        Self {
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            beta1: p.beta1,
            beta2: p.beta2,
            beta3: p.beta3,
            smoothness: p.smoothness,
        }
    }
}

impl From<ParamsConfig> for EnergyParams {
    fn from(p: ParamsConfig) -> Self {
        EnergyParams {
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            beta1: p.beta1,
            beta2: p.beta2,
            beta3: p.beta3,
            smoothness: p.smoothness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    pub reverse: bool,
    pub max_outer_sweeps: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let binary = BinaryConfig::default();
        let multi = MultilabelConfig::default();
        let mf = MeanFieldConfig::default();
        Self {
            max_sweeps: binary.max_sweeps,
            reverse: binary.reverse,
            max_outer_sweeps: multi.max_outer_sweeps,
            max_iters: mf.max_iters,
            tol: mf.tol,
        }
    }
}

impl SolverConfig {
    pub fn binary(&self) -> BinaryConfig {
        BinaryConfig { max_sweeps: self.max_sweeps, reverse: self.reverse }
    }

    pub fn multilabel(&self) -> MultilabelConfig {
        MultilabelConfig { max_outer_sweeps: self.max_outer_sweeps, inner: self.binary() }
    }

    pub fn icm(&self) -> IcmConfig {
        IcmConfig { max_iters: self.max_iters }
    }

    pub fn mean_field(&self) -> MeanFieldConfig {
        MeanFieldConfig { max_iters: self.max_iters, tol: self.tol }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub image: Option<PathBuf>,
    pub unary: Option<PathBuf>,
    /// Superpixel map; computed by SLIC when absent.
    pub superpixels: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub params: ParamsConfig,
    pub superpixel_count: usize,
    pub compactness: f64,
    pub seed: u64,
    pub solver: SolverConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Expansion,
            params: ParamsConfig::default(),
            superpixel_count: 200,
            compactness: 10.0,
            seed: 0,
            solver: SolverConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn energy_params(&self) -> Result<EnergyParams> {
        let params: EnergyParams = self.params.into();
        params.validate()?;
        Ok(params)
    }

    /// Checks the fields `solve` depends on.
    pub fn validate_for_solve(&self) -> Result<()> {
        self.energy_params()?;
        let missing = |name: &str, p: &Option<PathBuf>| match p {
            Some(p) if !p.as_os_str().is_empty() => Ok(()),
            _ => Err(CliError::Config(format!("paths.{name} is required"))),
        };
        missing("image", &self.paths.image)?;
        missing("unary", &self.paths.unary)?;
        missing("output", &self.paths.output)?;
        if self.paths.superpixels.is_none() && self.superpixel_count == 0 {
            return Err(CliError::Config("superpixel_count must be positive".into()));
        }
        if !(self.solver.tol > 0.0) {
            return Err(CliError::Config("solver.tol must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.solver.max_sweeps, 4);
        assert_eq!(cfg.params.beta3, 13.0);
    }

    #[test]
    fn partial_file_and_round_trip() {
        let text = r#"
method = "spicm"
seed = 7
[params]
beta2 = 20.0
[paths]
unary = "u.bin"
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.method, Method::Spicm);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.params.beta2, 20.0);
        assert_eq!(cfg.params.beta1, 10.0);
        assert_eq!(cfg.paths.unary.as_deref(), Some(Path::new("u.bin")));
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_method_and_fields_are_rejected() {
        assert!(RunConfig::from_toml("method = \"trws\"").is_err());
        assert!(RunConfig::from_toml("sead = 3").is_err());
    }

    #[test]
    fn solve_needs_paths() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate_for_solve().is_err());
        cfg.paths.image = Some("a.pgm".into());
        cfg.paths.unary = Some("u.bin".into());
        cfg.paths.output = Some("out.pgm".into());
        cfg.validate_for_solve().unwrap();
        cfg.params.beta1 = 0.0;
        assert!(cfg.validate_for_solve().is_err());
    }
}
