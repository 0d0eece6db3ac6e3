//! Run configuration: JSON schema, defaults, flag overrides, validation.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::registry;

/// Only schema version the binary accepts.
pub const CONFIG_VERSION: u32 = 1;

/// Default master seed; every stage derives its own stream from it.
pub const DEFAULT_SEED: u64 = 29;

/// Full pipeline configuration.
///
/// Every field has a default, so a config file may list only overrides.
/// Unknown keys are rejected outright: a typo that silently fell back to a
/// default would be the hardest operator error to spot.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub version: u32,
    /// Input CSV with one header row and the `class` target column.
    pub data: PathBuf,
    /// Directory receiving every artifact.
    pub out: PathBuf,
    pub seed: u64,
    /// Train fraction of the shuffled rows, strictly inside (0, 1).
    pub split_ratio: f64,
    pub cv_folds: usize,
    pub apriori: AprioriConfig,
    pub selectors: SelectorConfig,
    /// Enabled model keys; a subset of the registry, run in registry order.
    pub models: Vec<String>,
    pub hyper: HyperConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            data: PathBuf::from("data/diabetes_data_upload.csv"),
            out: PathBuf::from("out"),
            seed: DEFAULT_SEED,
            split_ratio: 0.8,
            cv_folds: 8,
            apriori: AprioriConfig::default(),
            selectors: SelectorConfig::default(),
            models: registry::all_keys(),
            hyper: HyperConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AprioriConfig {
    pub min_support: f64,
    pub min_confidence: f64,
    /// Transaction columns; `null` means every binary symptom column.
    pub columns: Option<Vec<String>>,
}

impl Default for AprioriConfig {
    fn default() -> Self {
        AprioriConfig {
            min_support: 0.1,
            min_confidence: 0.7,
            columns: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectorConfig {
    pub pearson_threshold: f64,
    pub chi2_top_k: usize,
    /// Features RFE keeps; `null` keeps all of them (ranking only).
    pub rfe_keep: Option<usize>,
    pub l1_strength: f64,
    /// Minimum votes (of 6 methods) for a feature to be chosen.
    pub vote_threshold: u32,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            pearson_threshold: 0.0,
            chi2_top_k: 10,
            rfe_keep: None,
            l1_strength: 0.004,
            vote_threshold: 4,
        }
    }
}

/// Per-model hyperparameters, keyed like the registry.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperConfig {
    pub lr: LogisticHyper,
    pub rf: ForestHyper,
    pub svm: SvmHyper,
    pub knn: KnnHyper,
    pub dt: TreeHyper,
    pub adaboost: AdaboostHyper,
    pub gnb: GnbHyper,
    pub gb: GbHyper,
    pub et: ForestHyper,
    pub xgb: XgbHyper,
    pub dnet: DnetHyper,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticHyper {
    pub strength: f64,
    pub learning_rate: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        LogisticHyper {
            strength: 1e-3,
            learning_rate: 0.1,
            max_iter: 2000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestHyper {
    pub trees: usize,
    pub max_depth: Option<usize>,
}

impl Default for ForestHyper {
    fn default() -> Self {
        ForestHyper {
            trees: 100,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmHyper {
    pub strength: f64,
    pub epochs: usize,
}

impl Default for SvmHyper {
    fn default() -> Self {
        SvmHyper {
            strength: 1e-2,
            epochs: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnHyper {
    pub k: usize,
}

impl Default for KnnHyper {
    fn default() -> Self {
        KnnHyper { k: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeHyper {
    pub max_depth: Option<usize>,
}

impl Default for TreeHyper {
    fn default() -> Self {
        TreeHyper { max_depth: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaboostHyper {
    pub rounds: usize,
}

impl Default for AdaboostHyper {
    fn default() -> Self {
        AdaboostHyper { rounds: 50 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnbHyper {
    pub var_smoothing: f64,
}

impl Default for GnbHyper {
    fn default() -> Self {
        GnbHyper {
            var_smoothing: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbHyper {
    pub stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for GbHyper {
    fn default() -> Self {
        GbHyper {
            stages: 100,
            learning_rate: 0.1,
            max_depth: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct XgbHyper {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for XgbHyper {
    fn default() -> Self {
        XgbHyper {
            rounds: 100,
            learning_rate: 0.3,
            max_depth: 3,
            lambda: 1.0,
            gamma: 0.0,
            alpha: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnetHyper {
    pub conv_filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub dropout_rate: f64,
    pub lstm_units: usize,
    pub dense_units: usize,
    pub lr0: f64,
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for DnetHyper {
    fn default() -> Self {
        DnetHyper {
            conv_filters: 64,
            kernel: 3,
            pool: 2,
            dropout_rate: 0.5,
            lstm_units: 100,
            dense_units: 50,
            lr0: 0.01,
            decay: 0.9,
            epochs: 50,
            batch_size: 16,
        }
    }
}

/// Command-line overrides applied after the file loads.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub models: Option<Vec<String>>,
}

/// Loads the config (or defaults), applies flag overrides, and validates.
pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, String> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| format!("invalid config {}: {e}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(data) = &overrides.data {
        config.data = data.clone();
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(out) = &overrides.out {
        config.out = out.clone();
    }
    if let Some(models) = &overrides.models {
        config.models = models.clone();
    }
    validate(&config)?;
    Ok(config)
}

fn require(ok: bool, message: &str) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message.to_string())
    }
}

fn validate(config: &RunConfig) -> Result<(), String> {
    require(
        config.version == CONFIG_VERSION,
        &format!(
            "unsupported config version {} (expected {CONFIG_VERSION})",
            config.version
        ),
    )?;
    require(
        config.split_ratio > 0.0 && config.split_ratio < 1.0,
        &format!("split_ratio must lie in (0, 1), got {}", config.split_ratio),
    )?;
    require(
        config.cv_folds >= 2,
        &format!("cv_folds must be at least 2, got {}", config.cv_folds),
    )?;
    require(!config.models.is_empty(), "models must not be empty")?;
    for key in &config.models {
        require(
            registry::is_known(key),
            &format!(
                "unknown model {key:?}; known keys: {}",
                registry::all_keys().join(", ")
            ),
        )?;
    }
    let a = &config.apriori;
    require(
        (0.0..=1.0).contains(&a.min_support),
        &format!("apriori.min_support must lie in [0, 1], got {}", a.min_support),
    )?;
    require(
        (0.0..=1.0).contains(&a.min_confidence),
        &format!(
            "apriori.min_confidence must lie in [0, 1], got {}",
            a.min_confidence
        ),
    )?;
    let s = &config.selectors;
    require(
        s.pearson_threshold >= 0.0 && s.pearson_threshold <= 1.0,
        &format!(
            "selectors.pearson_threshold must lie in [0, 1], got {}",
            s.pearson_threshold
        ),
    )?;
    require(
        s.chi2_top_k >= 1,
        "selectors.chi2_top_k must be at least 1",
    )?;
    require(
        s.l1_strength > 0.0 && s.l1_strength.is_finite(),
        &format!(
            "selectors.l1_strength must be positive and finite, got {}",
            s.l1_strength
        ),
    )?;
    require(
        (1..=6).contains(&s.vote_threshold),
        &format!(
            "selectors.vote_threshold must lie in 1..=6, got {}",
            s.vote_threshold
        ),
    )?;
    let h = &config.hyper;
    require(h.lr.max_iter >= 1, "hyper.lr.max_iter must be at least 1")?;
    require(h.lr.learning_rate > 0.0, "hyper.lr.learning_rate must be positive")?;
    require(h.lr.tol > 0.0, "hyper.lr.tol must be positive")?;
    require(h.lr.strength >= 0.0, "hyper.lr.strength must not be negative")?;
    require(h.svm.epochs >= 1, "hyper.svm.epochs must be at least 1")?;
    require(h.svm.strength > 0.0, "hyper.svm.strength must be positive")?;
    require(h.knn.k >= 1, "hyper.knn.k must be at least 1")?;
    require(h.rf.trees >= 1, "hyper.rf.trees must be at least 1")?;
    require(h.et.trees >= 1, "hyper.et.trees must be at least 1")?;
    require(h.adaboost.rounds >= 1, "hyper.adaboost.rounds must be at least 1")?;
    require(h.gnb.var_smoothing > 0.0, "hyper.gnb.var_smoothing must be positive")?;
    require(h.gb.stages >= 1, "hyper.gb.stages must be at least 1")?;
    require(h.gb.learning_rate > 0.0, "hyper.gb.learning_rate must be positive")?;
    require(h.gb.max_depth >= 1, "hyper.gb.max_depth must be at least 1")?;
    require(h.xgb.rounds >= 1, "hyper.xgb.rounds must be at least 1")?;
    require(h.xgb.learning_rate > 0.0, "hyper.xgb.learning_rate must be positive")?;
    require(h.xgb.max_depth >= 1, "hyper.xgb.max_depth must be at least 1")?;
    require(h.xgb.lambda >= 0.0, "hyper.xgb.lambda must not be negative")?;
    require(h.xgb.gamma >= 0.0, "hyper.xgb.gamma must not be negative")?;
    require(h.xgb.alpha >= 0.0, "hyper.xgb.alpha must not be negative")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        validate(&RunConfig::default()).expect("defaults are valid");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"sede": 7}"#)
            .expect_err("typo must not be silently dropped");
        assert!(err.to_string().contains("sede"));
    }

    #[test]
    fn partial_config_fills_defaults() {
        let config: RunConfig =
            serde_json::from_str(r#"{"seed": 7, "hyper": {"knn": {"k": 3}}}"#).expect("parse");
        assert_eq!(config.seed, 7);
        assert_eq!(config.hyper.knn.k, 3);
        assert_eq!(config.hyper.rf.trees, 100);
        assert_eq!(config.split_ratio, 0.8);
    }

    #[test]
    fn unknown_model_is_rejected() {
        let mut config = RunConfig::default();
        config.models = vec!["lr".into(), "resnet".into()];
        let err = validate(&config).expect_err("unknown key");
        assert!(err.contains("resnet"));
    }

    #[test]
    fn bad_version_is_rejected() {
        let mut config = RunConfig::default();
        config.version = 2;
        assert!(validate(&config).is_err());
    }

    #[test]
    fn overrides_beat_file_fields() {
        let overrides = Overrides {
            seed: Some(99),
            models: Some(vec!["lr".into()]),
            ..Overrides::default()
        };
        let config = resolve(None, &overrides).expect("resolve");
        assert_eq!(config.seed, 99);
        assert_eq!(config.models, vec!["lr".to_string()]);
    }
}
