//! The eleven-model registry: keys, display names, and fit dispatch.

use earlyrisk::rng::{derive_seed, rng_from_seed};
use earlyrisk::tabular::EncodedDataset;
use earlyrisk::{baselines, boosting, dnet, forests, ScoredModel};

use crate::config::HyperConfig;

/// One registered model family.
pub struct ModelEntry {
    pub key: &'static str,
    pub display: &'static str,
}

/// Every model the pipeline knows, in canonical run and report order.
pub const REGISTRY: [ModelEntry; 11] = [
    ModelEntry { key: "lr", display: "Logistic Regression" },
    ModelEntry { key: "rf", display: "Random Forest" },
    ModelEntry { key: "svm", display: "Linear SVM" },
    ModelEntry { key: "knn", display: "K-Nearest Neighbors" },
    ModelEntry { key: "dt", display: "Decision Tree" },
    ModelEntry { key: "adaboost", display: "AdaBoost" },
    ModelEntry { key: "gnb", display: "Gaussian Naive Bayes" },
    ModelEntry { key: "gb", display: "Gradient Boosting" },
    ModelEntry { key: "et", display: "Extra Trees" },
    ModelEntry { key: "xgb", display: "XGB-Style Boosting" },
    ModelEntry { key: "dnet", display: "DNet" },
];

pub fn all_keys() -> Vec<String> {
    REGISTRY.iter().map(|e| e.key.to_string()).collect()
}

pub fn is_known(key: &str) -> bool {
    REGISTRY.iter().any(|e| e.key == key)
}

pub fn display_name(key: &str) -> &'static str {
    REGISTRY
        .iter()
        .find(|e| e.key == key)
        .map(|e| e.display)
        .unwrap_or("Unknown")
}

/// Enabled keys in registry order, deduplicated.
pub fn enabled_in_order(models: &[String]) -> Vec<&'static str> {
    REGISTRY
        .iter()
        .filter(|e| models.iter().any(|m| m == e.key))
        .map(|e| e.key)
        .collect()
}

/// Seed for one model's fit, fixed by the key's registry position so the
/// stream does not shift when other models are disabled.
pub fn model_seed(master: u64, key: &str) -> u64 {
    let index = REGISTRY
        .iter()
        .position(|e| e.key == key)
        .expect("seed requested for unregistered model");
    derive_seed(master, "model", index as u64)
}

/// Builds the network configuration for a given input width.
pub fn dnet_config(hyper: &HyperConfig, input_length: usize, seed: u64) -> dnet::DNetConfig {
    let d = &hyper.dnet;
    dnet::DNetConfig {
        input_length,
        conv_filters: d.conv_filters,
        kernel: d.kernel,
        pool: d.pool,
        dropout_rate: d.dropout_rate,
        lstm_units: d.lstm_units,
        dense_units: d.dense_units,
        lr0: d.lr0,
        decay: d.decay,
        epochs: d.epochs,
        batch_size: d.batch_size,
        seed,
    }
}

/// Fits one model on the given training rows.
///
/// Deterministic for fixed `(key, hyper, train, seed)`; errors are the
/// underlying module messages.
pub fn fit(
    key: &str,
    hyper: &HyperConfig,
    train: &EncodedDataset,
    seed: u64,
) -> Result<Box<dyn ScoredModel>, String> {
    let boxed: Box<dyn ScoredModel> = match key {
        "lr" => {
            let h = &hyper.lr;
            Box::new(
                baselines::fit_logistic(
                    train,
                    baselines::Penalty::L2,
                    h.strength,
                    h.learning_rate,
                    h.max_iter,
                    h.tol,
                )
                .map_err(|e| e.to_string())?,
            )
        }
        "rf" => Box::new(
            forests::fit_random_forest(train, hyper.rf.trees, hyper.rf.max_depth, seed)
                .map_err(|e| e.to_string())?,
        ),
        "svm" => Box::new(
            baselines::fit_linear_svm(train, hyper.svm.strength, hyper.svm.epochs, seed)
                .map_err(|e| e.to_string())?,
        ),
        "knn" => Box::new(baselines::fit_knn(train, hyper.knn.k).map_err(|e| e.to_string())?),
        "dt" => {
            let mut rng = rng_from_seed(seed);
            Box::new(
                forests::fit_tree(train, hyper.dt.max_depth, 2, train.n_features(), &mut rng)
                    .map_err(|e| e.to_string())?,
            )
        }
        "adaboost" => Box::new(
            boosting::fit_adaboost(train, hyper.adaboost.rounds, seed)
                .map_err(|e| e.to_string())?,
        ),
        "gnb" => Box::new(
            baselines::fit_gnb(train, hyper.gnb.var_smoothing).map_err(|e| e.to_string())?,
        ),
        "gb" => {
            let h = &hyper.gb;
            Box::new(
                boosting::fit_gradient_boosting(
                    train,
                    h.stages,
                    h.learning_rate,
                    h.max_depth,
                    seed,
                )
                .map_err(|e| e.to_string())?,
            )
        }
        "et" => Box::new(
            forests::fit_extra_trees(train, hyper.et.trees, hyper.et.max_depth, seed)
                .map_err(|e| e.to_string())?,
        ),
        "xgb" => {
            let h = &hyper.xgb;
            Box::new(
                boosting::fit_xgb_style(
                    train,
                    h.rounds,
                    h.learning_rate,
                    h.max_depth,
                    h.lambda,
                    h.gamma,
                    h.alpha,
                    seed,
                )
                .map_err(|e| e.to_string())?,
            )
        }
        "dnet" => {
            let config = dnet_config(hyper, train.n_features(), seed);
            let (params, _) = dnet::train(&config, train, None).map_err(|e| e.to_string())?;
            Box::new(dnet::DNetModel { params })
        }
        other => return Err(format!("unknown model key {other:?}")),
    };
    Ok(boxed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enabled_in_order_follows_registry_not_config() {
        let models = vec!["dnet".to_string(), "lr".to_string(), "lr".to_string()];
        assert_eq!(enabled_in_order(&models), vec!["lr", "dnet"]);
    }

    #[test]
    fn model_seeds_are_pairwise_distinct() {
        let mut seeds: Vec<u64> = REGISTRY.iter().map(|e| model_seed(5, e.key)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), REGISTRY.len());
    }
}
