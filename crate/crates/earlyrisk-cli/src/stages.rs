//! Pipeline stages: file-driven subcommands and the in-memory full run.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use earlyrisk::assoc::{self, AssociationRule, TransactionSet};
use earlyrisk::dnet;
use earlyrisk::evalharness::{self, ModelReport};
use earlyrisk::featsel::{self, ForestKind, SelectorReport, VoteTable};
use earlyrisk::rng::derive_seed;
use earlyrisk::tabular::{self, EncodedDataset};
use earlyrisk::ScoredModel;

use crate::artifacts::{self, SplitFile};
use crate::config::RunConfig;
use crate::registry;
use crate::report::{self, ReportInputs};
use crate::svg::{self, RocSeries};

/// Failure of one pipeline stage, tagged for diagnostics.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.stage, self.message)
    }
}

pub type StageResult<T> = Result<T, StageError>;

fn fail(stage: &'static str, message: String) -> StageError {
    StageError { stage, message }
}

/// One fitted model, with network parameters kept for checkpointing.
struct TrainedModel {
    key: &'static str,
    model: Box<dyn ScoredModel>,
    dnet_params: Option<dnet::DNetParams>,
}

fn compute_encoded(config: &RunConfig) -> Result<EncodedDataset, String> {
    let raw = tabular::load_csv(&config.data).map_err(|e| e.to_string())?;
    let schema = tabular::EncodingSchema::standard(&raw.header);
    schema.validate(&raw.header).map_err(|e| e.to_string())?;
    tabular::encode(&raw, &schema).map_err(|e| e.to_string())
}

fn mine_rules(
    config: &RunConfig,
    ds: &EncodedDataset,
) -> Result<(Vec<AssociationRule>, TransactionSet), String> {
    let columns = match &config.apriori.columns {
        Some(columns) => columns.clone(),
        None => assoc::default_transaction_columns(&ds.feature_names),
    };
    let tx = assoc::to_transactions(ds, &columns).map_err(|e| e.to_string())?;
    let itemsets = assoc::apriori(&tx, config.apriori.min_support).map_err(|e| e.to_string())?;
    let rules = assoc::generate_rules(&itemsets, &tx, config.apriori.min_confidence)
        .map_err(|e| e.to_string())?;
    Ok((rules, tx))
}

fn select_features(
    config: &RunConfig,
    ds: &EncodedDataset,
) -> Result<(Vec<SelectorReport>, VoteTable), String> {
    let s = &config.selectors;
    let reports = vec![
        featsel::pearson_select(ds, s.pearson_threshold),
        featsel::chi2_select(ds, s.chi2_top_k).map_err(|e| e.to_string())?,
        featsel::rfe(ds, s.rfe_keep.unwrap_or(ds.n_features())).map_err(|e| e.to_string())?,
        featsel::l1_logistic_select(ds, s.l1_strength).map_err(|e| e.to_string())?,
        featsel::impurity_importance_select(
            ds,
            ForestKind::RandomForest,
            derive_seed(config.seed, "select-rf", 0),
        )
        .map_err(|e| e.to_string())?,
        featsel::impurity_importance_select(
            ds,
            ForestKind::LeafwiseGbdt,
            derive_seed(config.seed, "select-gbdt", 0),
        )
        .map_err(|e| e.to_string())?,
    ];
    let table = featsel::vote(ds, &reports, s.vote_threshold).map_err(|e| e.to_string())?;
    Ok((reports, table))
}

/// Restricts the dataset to the chosen features, in their vote-rank order.
fn restrict_to_chosen(
    ds: &EncodedDataset,
    chosen: &[String],
) -> Result<EncodedDataset, String> {
    for name in chosen {
        if !ds.feature_names.contains(name) {
            return Err(format!("chosen feature {name:?} is not a dataset column"));
        }
    }
    Ok(ds.select_features(chosen))
}

fn train_models(config: &RunConfig, train: &EncodedDataset) -> Result<Vec<TrainedModel>, String> {
    let mut out = Vec::new();
    for key in registry::enabled_in_order(&config.models) {
        let seed = registry::model_seed(config.seed, key);
        if key == "dnet" {
            let net_config = registry::dnet_config(&config.hyper, train.n_features(), seed);
            let (params, _) =
                dnet::train(&net_config, train, None).map_err(|e| format!("dnet: {e}"))?;
            out.push(TrainedModel {
                key,
                model: Box::new(dnet::DNetModel {
                    params: params.clone(),
                }),
                dnet_params: Some(params),
            });
        } else {
            let model =
                registry::fit(key, &config.hyper, train, seed).map_err(|e| format!("{key}: {e}"))?;
            out.push(TrainedModel {
                key,
                model,
                dnet_params: None,
            });
        }
    }
    Ok(out)
}

fn cross_validate_models(
    config: &RunConfig,
    ds: &EncodedDataset,
) -> Result<Vec<(String, f64)>, String> {
    let plan = tabular::kfold(ds, config.cv_folds, true, config.seed).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for key in registry::enabled_in_order(&config.models) {
        let result = evalharness::cross_validate(
            |train, fold_seed| registry::fit(key, &config.hyper, train, derive_seed(fold_seed, key, 0)),
            ds,
            &plan,
        )
        .map_err(|e| format!("{key}: {e}"))?;
        rows.push((key.to_string(), result.cv_accuracy));
    }
    Ok(rows)
}

fn evaluate_models(
    models: &[TrainedModel],
    test: &EncodedDataset,
    cv: &BTreeMap<String, f64>,
) -> Result<Vec<ModelReport>, String> {
    let mut out = Vec::new();
    for m in models {
        let scores = m.model.score_batch(&test.features);
        let cm = evalharness::confusion(&scores, &test.target, 0.5)
            .map_err(|e| format!("{}: {e}", m.key))?;
        let metrics = evalharness::metrics(&cm).map_err(|e| format!("{}: {e}", m.key))?;
        let roc = evalharness::roc_auc(&scores, &test.target)
            .map_err(|e| format!("{}: {e}", m.key))?;
        let cv_accuracy = *cv.get(m.key).ok_or_else(|| {
            format!("no cross-validation row for {}; run `earlyrisk cv` first", m.key)
        })?;
        out.push(ModelReport {
            name: m.key.to_string(),
            accuracy: metrics.accuracy,
            cv_accuracy,
            precision: metrics.precision,
            recall: metrics.recall,
            f1: metrics.f1,
            auc: roc.auc,
            confusion: cm,
            roc,
            degenerate: metrics.degenerate,
        });
    }
    Ok(out)
}

fn accuracy_on(model: &dyn ScoredModel, ds: &EncodedDataset) -> f64 {
    let hits = ds
        .features
        .iter()
        .zip(&ds.target)
        .filter(|(x, &y)| model.predict(x) == y)
        .count();
    hits as f64 / ds.n_rows() as f64
}

#[derive(Serialize)]
struct TrainSummary {
    models: Vec<String>,
    train_accuracy: BTreeMap<String, f64>,
}

fn train_summary_json(models: &[TrainedModel], train: &EncodedDataset) -> String {
    let summary = TrainSummary {
        models: models.iter().map(|m| m.key.to_string()).collect(),
        train_accuracy: models
            .iter()
            .map(|m| (m.key.to_string(), accuracy_on(m.model.as_ref(), train)))
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    text
}

fn split_json(plan: &tabular::SplitPlan, ratio: f64) -> String {
    let file = SplitFile {
        seed: plan.seed,
        ratio,
        train_indices: plan.train_indices.clone(),
        test_indices: plan.test_indices.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("split serializes");
    text.push('\n');
    text
}

/// Parses one per-model ROC artifact into curve points.
fn parse_roc_points(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "threshold,fpr,tpr" {
                return Err(format!("unexpected ROC header {line:?}"));
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(format!("ROC row {i} has {} cells, expected 3", cells.len()));
        }
        let number = |cell: &str| -> Result<f64, String> {
            cell.parse::<f64>()
                .map_err(|e| format!("ROC row {i}: bad value {cell:?}: {e}"))
        };
        points.push((number(cells[1])?, number(cells[2])?));
    }
    Ok(points)
}

/// Builds report.md and roc.svg from artifact texts, so the file-driven
/// `report` subcommand and the in-memory full run emit identical bytes.
fn render_outputs(
    config: &RunConfig,
    encoded: &EncodedDataset,
    rules: &str,
    votes: &str,
    metrics: &str,
    confusion: &str,
    roc_texts: &BTreeMap<String, String>,
) -> Result<(String, String), String> {
    let chosen = artifacts::chosen_from_votes(votes)?;
    let inputs = ReportInputs {
        config,
        encoded,
        rules,
        votes,
        metrics,
        confusion,
    };
    let report_md = report::render_report(&inputs, &chosen)?;
    let mut series = Vec::new();
    for (i, line) in metrics.lines().enumerate() {
        if i == 0 {
            continue;
        }
        let cells = artifacts::split_csv_line(line);
        if cells.len() != 7 {
            return Err(format!("metrics row {i} has {} cells, expected 7", cells.len()));
        }
        let key = &cells[0];
        let auc = cells[6]
            .parse::<f64>()
            .map_err(|e| format!("metrics row {i}: bad AUC {:?}: {e}", cells[6]))?;
        let roc_text = roc_texts
            .get(key)
            .ok_or_else(|| format!("missing ROC artifact for model {key}"))?;
        series.push(RocSeries {
            label: registry::display_name(key).to_string(),
            auc,
            points: parse_roc_points(roc_text)?,
        });
    }
    let roc_svg = svg::render_roc_svg(&series)?;
    Ok((report_md, roc_svg))
}

fn read_encoded_artifact(config: &RunConfig) -> Result<EncodedDataset, String> {
    let text = artifacts::read_required(&config.out, artifacts::ENCODED, "ingest")?;
    artifacts::parse_encoded_csv(&text)
}

fn read_chosen_artifact(config: &RunConfig) -> Result<Vec<String>, String> {
    let votes = artifacts::read_required(&config.out, artifacts::VOTES, "select")?;
    artifacts::chosen_from_votes(&votes)
}

pub fn stage_ingest(config: &RunConfig) -> StageResult<()> {
    let run = || -> Result<(), String> {
        let ds = compute_encoded(config)?;
        let mut written = Vec::new();
        artifacts::write_artifact(
            &config.out,
            artifacts::ENCODED,
            artifacts::encoded_csv(&ds).as_bytes(),
            &mut written,
        )?;
        println!(
            "[ingest] encoded {} rows × {} features → {}",
            ds.n_rows(),
            ds.n_features(),
            config.out.join(artifacts::ENCODED).display()
        );
        Ok(())
    };
    run().map_err(|m| fail("ingest", m))
}

pub fn stage_mine(config: &RunConfig) -> StageResult<()> {
    let run = || -> Result<(), String> {
        let ds = read_encoded_artifact(config)?;
        let (rules, tx) = mine_rules(config, &ds)?;
        let mut written = Vec::new();
        artifacts::write_artifact(
            &config.out,
            artifacts::RULES,
            assoc::rules_csv(&rules, &tx).as_bytes(),
            &mut written,
        )?;
        println!(
            "[mine] {} rules → {}",
            rules.len(),
            config.out.join(artifacts::RULES).display()
        );
        Ok(())
    };
    run().map_err(|m| fail("mine", m))
}

pub fn stage_select(config: &RunConfig) -> StageResult<()> {
    let run = || -> Result<(), String> {
        let ds = read_encoded_artifact(config)?;
        let (reports, table) = select_features(config, &ds)?;
        let votes = featsel::votes_csv(&reports, &table).map_err(|e| e.to_string())?;
        let mut written = Vec::new();
        artifacts::write_artifact(&config.out, artifacts::VOTES, votes.as_bytes(), &mut written)?;
        println!(
            "[select] {} features chosen → {}",
            table.chosen.len(),
            config.out.join(artifacts::VOTES).display()
        );
        Ok(())
    };
    run().map_err(|m| fail("select", m))
}

pub fn stage_train(config: &RunConfig) -> StageResult<()> {
    let run = || -> Result<(), String> {
        let ds = read_encoded_artifact(config)?;
        let chosen = read_chosen_artifact(config)?;
        let chosen_ds = restrict_to_chosen(&ds, &chosen)?;
        let plan = tabular::train_test_split(&chosen_ds, config.split_ratio, config.seed)
            .map_err(|e| e.to_string())?;
        let train = chosen_ds.subset_rows(&plan.train_indices);
        let models = train_models(config, &train)?;
        let mut written = Vec::new();
        artifacts::write_artifact(
            &config.out,
            artifacts::SPLIT,
            split_json(&plan, config.split_ratio).as_bytes(),
            &mut written,
        )?;
        artifacts::write_artifact(
            &config.out,
            artifacts::TRAIN_SUMMARY,
            train_summary_json(&models, &train).as_bytes(),
            &mut written,
        )?;
        for m in &models {
            if let Some(params) = &m.dnet_params {
                dnet::save_checkpoint(params, &config.out.join(artifacts::DNET_CHECKPOINT))
                    .map_err(|e| e.to_string())?;
            }
        }
        println!(
            "[train] fitted {} models on {} rows → {}",
            models.len(),
            train.n_rows(),
            config.out.join(artifacts::TRAIN_SUMMARY).display()
        );
        Ok(())
    };
    run().map_err(|m| fail("train", m))
}

pub fn stage_cv(config: &RunConfig) -> StageResult<()> {
    let run = || -> Result<(), String> {
        let ds = read_encoded_artifact(config)?;
        let chosen = read_chosen_artifact(config)?;
        let chosen_ds = restrict_to_chosen(&ds, &chosen)?;
        let rows = cross_validate_models(config, &chosen_ds)?;
        let mut written = Vec::new();
        artifacts::write_artifact(
            &config.out,
            artifacts::CV,
            artifacts::cv_csv(&rows).as_bytes(),
            &mut written,
        )?;
        println!(
            "[cv] {}-fold accuracy for {} models → {}",
            config.cv_folds,
            rows.len(),
            config.out.join(artifacts::CV).display()
        );
        Ok(())
    };
    run().map_err(|m| fail("cv", m))
}

/// Rebuilds the fitted models behind `split.json` for scoring.
///
/// Every non-network model refits deterministically from the same derived
/// seed the train stage used; the network reloads its checkpoint.
fn refit_for_eval(
    config: &RunConfig,
    train: &EncodedDataset,
) -> Result<Vec<TrainedModel>, String> {
    let mut out = Vec::new();
    for key in registry::enabled_in_order(&config.models) {
        if key == "dnet" {
            let path = config.out.join(artifacts::DNET_CHECKPOINT);
            let params = dnet::load_checkpoint(&path).map_err(|e| {
                format!(
                    "cannot load {}: {e}; run `earlyrisk train` first",
                    path.display()
                )
            })?;
            out.push(TrainedModel {
                key,
                model: Box::new(dnet::DNetModel { params }),
                dnet_params: None,
            });
        } else {
            let seed = registry::model_seed(config.seed, key);
            let model =
                registry::fit(key, &config.hyper, train, seed).map_err(|e| format!("{key}: {e}"))?;
            out.push(TrainedModel {
                key,
                model,
                dnet_params: None,
            });
        }
    }
    Ok(out)
}

fn read_split_artifact(config: &RunConfig, n_rows: usize) -> Result<SplitFile, String> {
    let text = artifacts::read_required(&config.out, artifacts::SPLIT, "train")?;
    let split = artifacts::parse_split(&text)?;
    if split.seed != config.seed {
        return Err(format!(
            "split.json was made with seed {}, but the configured seed is {}; \
             rerun `earlyrisk train`",
            split.seed, config.seed
        ));
    }
    for &i in split.train_indices.iter().chain(&split.test_indices) {
        if i >= n_rows {
            return Err(format!(
                "split.json row index {i} is out of range for {n_rows} rows; \
                 rerun `earlyrisk train`"
            ));
        }
    }
    Ok(split)
}

pub fn stage_eval(config: &RunConfig) -> StageResult<()> {
    let run = || -> Result<(), String> {
        let ds = read_encoded_artifact(config)?;
        let chosen = read_chosen_artifact(config)?;
        let chosen_ds = restrict_to_chosen(&ds, &chosen)?;
        let split = read_split_artifact(config, chosen_ds.n_rows())?;
        let cv_text = artifacts::read_required(&config.out, artifacts::CV, "cv")?;
        let cv = artifacts::parse_cv_csv(&cv_text)?;
        let train = chosen_ds.subset_rows(&split.train_indices);
        let test = chosen_ds.subset_rows(&split.test_indices);
        let models = refit_for_eval(config, &train)?;
        let reports = evaluate_models(&models, &test, &cv)?;
        let mut written = Vec::new();
        artifacts::write_artifact(
            &config.out,
            artifacts::METRICS,
            evalharness::metrics_csv(&reports).as_bytes(),
            &mut written,
        )?;
        artifacts::write_artifact(
            &config.out,
            artifacts::CONFUSION,
            evalharness::confusion_csv(&reports).as_bytes(),
            &mut written,
        )?;
        for r in &reports {
            artifacts::write_artifact(
                &config.out,
                &artifacts::roc_csv_name(&r.name),
                evalharness::roc_csv(&r.roc).as_bytes(),
                &mut written,
            )?;
        }
        println!(
            "[eval] scored {} models on {} held-out rows → {}",
            reports.len(),
            test.n_rows(),
            config.out.join(artifacts::METRICS).display()
        );
        Ok(())
    };
    run().map_err(|m| fail("eval", m))
}

pub fn stage_report(config: &RunConfig) -> StageResult<()> {
    let run = || -> Result<(), String> {
        let ds = read_encoded_artifact(config)?;
        let rules = artifacts::read_required(&config.out, artifacts::RULES, "mine")?;
        let votes = artifacts::read_required(&config.out, artifacts::VOTES, "select")?;
        let metrics = artifacts::read_required(&config.out, artifacts::METRICS, "eval")?;
        let confusion = artifacts::read_required(&config.out, artifacts::CONFUSION, "eval")?;
        let mut roc_texts = BTreeMap::new();
        for (i, line) in metrics.lines().enumerate() {
            if i == 0 {
                continue;
            }
            let key = artifacts::split_csv_line(line)
                .first()
                .cloned()
                .unwrap_or_default();
            let text =
                artifacts::read_required(&config.out, &artifacts::roc_csv_name(&key), "eval")?;
            roc_texts.insert(key, text);
        }
        let (report_md, roc_svg) =
            render_outputs(config, &ds, &rules, &votes, &metrics, &confusion, &roc_texts)?;
        let mut written = Vec::new();
        artifacts::write_artifact(&config.out, artifacts::REPORT, report_md.as_bytes(), &mut written)?;
        artifacts::write_artifact(&config.out, artifacts::ROC_SVG, roc_svg.as_bytes(), &mut written)?;
        println!(
            "[report] → {} and {}",
            config.out.join(artifacts::REPORT).display(),
            config.out.join(artifacts::ROC_SVG).display()
        );
        Ok(())
    };
    run().map_err(|m| fail("report", m))
}

#[derive(Serialize)]
struct StageTime {
    stage: &'static str,
    seconds: f64,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    config: &'a RunConfig,
    toolkit_version: &'static str,
    stage_seconds: Vec<StageTime>,
    checksums: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Runs every stage in one process, fitting each model exactly once, and
/// writes the manifest last. A failed run removes whatever it had written.
pub fn run_all(config: &RunConfig) -> StageResult<()> {
    let mut written: Vec<PathBuf> = Vec::new();
    let result = run_all_inner(config, &mut written);
    if result.is_err() {
        for path in &written {
            let _ = std::fs::remove_file(path);
        }
    }
    result
}

fn emit_checksummed(
    config: &RunConfig,
    name: &str,
    bytes: &[u8],
    checksums: &mut BTreeMap<String, String>,
    written: &mut Vec<PathBuf>,
) -> Result<(), String> {
    checksums.insert(name.to_string(), sha256_hex(bytes));
    artifacts::write_artifact(&config.out, name, bytes, written)
}

fn run_all_inner(config: &RunConfig, written: &mut Vec<PathBuf>) -> StageResult<()> {
    let mut stage_seconds = Vec::new();
    let mut checksums = BTreeMap::new();

    let clock = Instant::now();
    let ds = compute_encoded(config).map_err(|m| fail("ingest", m))?;
    emit_checksummed(
        config,
        artifacts::ENCODED,
        artifacts::encoded_csv(&ds).as_bytes(),
        &mut checksums,
        written,
    )
    .map_err(|m| fail("ingest", m))?;
    stage_seconds.push(StageTime {
        stage: "ingest",
        seconds: round_ms(clock.elapsed().as_secs_f64()),
    });
    println!("[ingest] encoded {} rows × {} features", ds.n_rows(), ds.n_features());

    let clock = Instant::now();
    let (rules, tx) = mine_rules(config, &ds).map_err(|m| fail("mine", m))?;
    let rules_text = assoc::rules_csv(&rules, &tx);
    emit_checksummed(config, artifacts::RULES, rules_text.as_bytes(), &mut checksums, written)
        .map_err(|m| fail("mine", m))?;
    stage_seconds.push(StageTime {
        stage: "mine",
        seconds: round_ms(clock.elapsed().as_secs_f64()),
    });
    println!("[mine] {} rules", rules.len());

    let clock = Instant::now();
    let (reports, table) = select_features(config, &ds).map_err(|m| fail("select", m))?;
    let votes_text = featsel::votes_csv(&reports, &table)
        .map_err(|e| fail("select", e.to_string()))?;
    emit_checksummed(config, artifacts::VOTES, votes_text.as_bytes(), &mut checksums, written)
        .map_err(|m| fail("select", m))?;
    stage_seconds.push(StageTime {
        stage: "select",
        seconds: round_ms(clock.elapsed().as_secs_f64()),
    });
    println!("[select] {} features chosen", table.chosen.len());

    let clock = Instant::now();
    let chosen_ds = restrict_to_chosen(&ds, &table.chosen).map_err(|m| fail("train", m))?;
    let plan = tabular::train_test_split(&chosen_ds, config.split_ratio, config.seed)
        .map_err(|e| fail("train", e.to_string()))?;
    let train = chosen_ds.subset_rows(&plan.train_indices);
    let test = chosen_ds.subset_rows(&plan.test_indices);
    let models = train_models(config, &train).map_err(|m| fail("train", m))?;
    emit_checksummed(
        config,
        artifacts::SPLIT,
        split_json(&plan, config.split_ratio).as_bytes(),
        &mut checksums,
        written,
    )
    .map_err(|m| fail("train", m))?;
    emit_checksummed(
        config,
        artifacts::TRAIN_SUMMARY,
        train_summary_json(&models, &train).as_bytes(),
        &mut checksums,
        written,
    )
    .map_err(|m| fail("train", m))?;
    for m in &models {
        if let Some(params) = &m.dnet_params {
            let path = config.out.join(artifacts::DNET_CHECKPOINT);
            dnet::save_checkpoint(params, &path).map_err(|e| fail("train", e.to_string()))?;
            written.push(path.clone());
            let bytes = std::fs::read(&path).map_err(|e| fail("train", e.to_string()))?;
            checksums.insert(artifacts::DNET_CHECKPOINT.to_string(), sha256_hex(&bytes));
        }
    }
    stage_seconds.push(StageTime {
        stage: "train",
        seconds: round_ms(clock.elapsed().as_secs_f64()),
    });
    println!("[train] fitted {} models on {} rows", models.len(), train.n_rows());

    let clock = Instant::now();
    let cv_rows = cross_validate_models(config, &chosen_ds).map_err(|m| fail("cv", m))?;
    let cv_text = artifacts::cv_csv(&cv_rows);
    emit_checksummed(config, artifacts::CV, cv_text.as_bytes(), &mut checksums, written)
        .map_err(|m| fail("cv", m))?;
    stage_seconds.push(StageTime {
        stage: "cv",
        seconds: round_ms(clock.elapsed().as_secs_f64()),
    });
    println!("[cv] {}-fold accuracy for {} models", config.cv_folds, cv_rows.len());

    let clock = Instant::now();
    let cv_map: BTreeMap<String, f64> = cv_rows.into_iter().collect();
    let model_reports = evaluate_models(&models, &test, &cv_map).map_err(|m| fail("eval", m))?;
    let metrics_text = evalharness::metrics_csv(&model_reports);
    let confusion_text = evalharness::confusion_csv(&model_reports);
    emit_checksummed(config, artifacts::METRICS, metrics_text.as_bytes(), &mut checksums, written)
        .map_err(|m| fail("eval", m))?;
    emit_checksummed(
        config,
        artifacts::CONFUSION,
        confusion_text.as_bytes(),
        &mut checksums,
        written,
    )
    .map_err(|m| fail("eval", m))?;
    let mut roc_texts = BTreeMap::new();
    for r in &model_reports {
        let text = evalharness::roc_csv(&r.roc);
        emit_checksummed(config, &artifacts::roc_csv_name(&r.name), text.as_bytes(), &mut checksums, written)
            .map_err(|m| fail("eval", m))?;
        roc_texts.insert(r.name.clone(), text);
    }
    stage_seconds.push(StageTime {
        stage: "eval",
        seconds: round_ms(clock.elapsed().as_secs_f64()),
    });
    println!(
        "[eval] scored {} models on {} held-out rows",
        model_reports.len(),
        test.n_rows()
    );

    let clock = Instant::now();
    let (report_md, roc_svg) = render_outputs(
        config,
        &ds,
        &rules_text,
        &votes_text,
        &metrics_text,
        &confusion_text,
        &roc_texts,
    )
    .map_err(|m| fail("report", m))?;
    emit_checksummed(config, artifacts::REPORT, report_md.as_bytes(), &mut checksums, written)
        .map_err(|m| fail("report", m))?;
    emit_checksummed(config, artifacts::ROC_SVG, roc_svg.as_bytes(), &mut checksums, written)
        .map_err(|m| fail("report", m))?;
    stage_seconds.push(StageTime {
        stage: "report",
        seconds: round_ms(clock.elapsed().as_secs_f64()),
    });

    let manifest = RunManifest {
        config,
        toolkit_version: env!("CARGO_PKG_VERSION"),
        stage_seconds,
        checksums,
    };
    let mut manifest_text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| fail("report", e.to_string()))?;
    manifest_text.push('\n');
    artifacts::write_artifact(&config.out, artifacts::MANIFEST, manifest_text.as_bytes(), written)
        .map_err(|m| fail("report", m))?;
    println!(
        "[report] → {} (manifest {})",
        config.out.join(artifacts::REPORT).display(),
        config.out.join(artifacts::MANIFEST).display()
    );
    Ok(())
}

fn round_ms(seconds: f64) -> f64 {
    (seconds * 1000.0).round() / 1000.0
}
