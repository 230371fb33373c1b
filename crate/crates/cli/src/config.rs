use std::path::Path;

use fracpinn::data::{NoiseSpec, Reconstruction};
use fracpinn::{EpidemicParams, SimplexState, SolverConfig, TimeGrid, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dt: f64,
    pub horizon: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { dt: 0.5, horizon: 300.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub params: EpidemicParams,
    pub initial_state: SimplexState,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            params: EpidemicParams { beta: 0.25, sigma: 0.13, gamma_r: 0.052, mu: 0.005, alpha: 0.9 },
            initial_state: SimplexState { s: 0.99, e: 0.005, i: 0.005, r: 0.0, d: 0.0 },
        }
    }
}

/// Observation sampling for `generate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub sigma: f64,
    pub per_compartment: Option<[f64; 5]>,
    pub seed: u64,
    pub clip_to_simplex: bool,
    /// Keep every n-th trajectory node.
    pub every: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { sigma: 0.0, per_compartment: None, seed: 0, clip_to_simplex: false, every: 1 }
    }
}

impl SyntheticConfig {
    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec {
            sigma: self.sigma,
            per_compartment: self.per_compartment,
            seed: self.seed,
            clip_to_simplex: self.clip_to_simplex,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub alpha_grid: Vec<f64>,
    pub n_replicates: usize,
    pub bootstrap_seed: u64,
    /// Loss terms switched off by `ablate`.
    pub ablate: Vec<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha_grid: vec![0.8, 0.85, 0.9, 0.95, 1.0],
            n_replicates: 50,
            bootstrap_seed: 0,
            ablate: Vec::new(),
        }
    }
}

/// Everything a run needs, read from one JSON document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synthetic: SyntheticConfig,
    pub data: Reconstruction,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    /// Reads `path` (defaults when absent) and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        let mut value = serde_json::to_value(&base).expect("config serializes");
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::Config(format!("after overrides: {e}")))?;
        cfg.validated()
    }

    pub fn validated(self) -> Result<Self, CliError> {
        let check = |r: fracpinn::Result<()>| r.map_err(|e| CliError::Config(e.to_string()));
        check(self.solver.validated().map(drop))?;
        check(self.model.params.validated().map(drop))?;
        check(self.model.initial_state.validated().map(drop))?;
        check(self.train.clone().validated().map(drop))?;
        check(self.synthetic.noise().validated().map(drop))?;
        check(self.grid().map(drop))?;
        if self.synthetic.every == 0 {
            return Err(CliError::Config("synthetic.every must be at least 1".into()));
        }
        Ok(self)
    }

    pub fn grid(&self) -> fracpinn::Result<TimeGrid> {
        TimeGrid::from_horizon(self.grid.dt, self.grid.horizon)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// `a.b.c=value`; the value is parsed as JSON, falling back to a string.
/// Only keys already present in the schema may be set.
pub fn apply_override(root: &mut Value, item: &str) -> Result<(), CliError> {
    let (key, raw) =
        item.split_once('=').ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
    let mut node = root;
    let mut walked = Vec::new();
    for part in key.split('.') {
        walked.push(part);
        node = node
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| CliError::Config(format!("unknown config key {:?}", walked.join("."))))?;
    }
    *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.grid().unwrap().n_nodes(), 601);
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let sets = vec!["train.adam.lr0=0.01".to_string(), "train.network.head=softplus".to_string()];
        let cfg = RunConfig::load(None, &sets).unwrap();
        assert_eq!(cfg.train.adam.lr0, 0.01);
        assert_eq!(cfg.train.network.head, fracpinn::net::OutputHead::Softplus);
        let cfg =
            RunConfig::load(None, &["train.bounds.rate_box=[[0.2,0.4],[0.1,0.3],[0.05,0.1],[0.001,0.01]]".into()])
                .unwrap();
        assert_eq!(cfg.train.bounds.rate_box.unwrap()[3], [0.001, 0.01]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::load(None, &["train.adam.lr=1".into()]), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::load(None, &["nonsense".into()]), Err(CliError::Config(_))));
        let bad: Result<RunConfig, _> = serde_json::from_str(r#"{"grid": {"dt": 1, "T": 3}}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(matches!(RunConfig::load(None, &["grid.dt=-1".into()]), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::load(None, &["model.params.alpha=1.5".into()]), Err(CliError::Config(_))));
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig::load(None, &["train.seed=3".into()]).unwrap();
        assert_eq!(a.digest(), RunConfig::default().digest());
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
