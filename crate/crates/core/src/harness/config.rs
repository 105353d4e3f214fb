use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deriv::OdeKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    #[default]
    Equispaced,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    /// 5% trimmed mean.
    Trimmed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Krr,
    Spline,
    Nls,
    Picard,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Krr => "krr",
            MethodName::Spline => "spline",
            MethodName::Nls => "nls",
            MethodName::Picard => "picard",
        }
    }
}

impl std::str::FromStr for MethodName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "krr" => Ok(MethodName::Krr),
            "spline" => Ok(MethodName::Spline),
            "nls" => Ok(MethodName::Nls),
            "picard" => Ok(MethodName::Picard),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    pub replications: usize,
    pub sigma: f64,
    pub n_ladder: Vec<usize>,
    #[serde(default)]
    pub design: DesignKind,
    #[serde(default)]
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    /// Builtin truth name, see [`crate::harness::truths`].
    pub name: String,
}

fn default_c() -> f64 {
    1.0
}
fn default_r() -> usize {
    8
}
fn default_t() -> usize {
    256
}
fn default_resolution() -> usize {
    crate::estimators::parametric::DEFAULT_RESOLUTION
}
fn default_model() -> String {
    "linear-decay".into()
}
fn default_y0() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub name: MethodName,
    #[serde(default)]
    pub beta: usize,
    #[serde(default = "default_variant")]
    pub variant: OdeKind,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default)]
    pub cv: bool,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default = "default_t")]
    pub t: usize,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_y0")]
    pub y0_hat: f64,
}

fn default_variant() -> OdeKind {
    OdeKind::Autonomous
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<String>,
    /// Also write `bounds.csv` with the theoretical radii next to the empirical MSE.
    #[serde(default)]
    pub bounds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub truth: TruthSection,
    pub method: MethodSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if e.n_ladder.is_empty() || e.n_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("n_ladder must be non-empty and strictly ascending".into()));
        }
        if e.n_ladder[0] < 2 {
            return Err(Error::Config("sample sizes must be at least 2".into()));
        }
        if !(e.sigma >= 0.0) {
            return Err(Error::Config(format!("sigma must be non-negative, got {}", e.sigma)));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[experiment]
seed = 7
replications = 3
sigma = 0.5
n_ladder = [16, 32]

[truth]
name = "quadratic"

[method]
name = "spline"
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.experiment.design, DesignKind::Equispaced);
        assert_eq!(cfg.method.c, 1.0);
        assert_eq!(cfg.method.variant, OdeKind::Autonomous);
        assert!(!cfg.output.bounds);
        assert_eq!(cfg.hash(), ExperimentConfig::from_toml_str(SAMPLE).unwrap().hash());
    }

    #[test]
    fn rejects_bad_ladders() {
        let bad = SAMPLE.replace("[16, 32]", "[32, 16]");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let unknown = SAMPLE.replace("seed = 7", "seed = 7\nspeed = 3");
        assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        let b = ExperimentConfig::from_toml_str(&SAMPLE.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
