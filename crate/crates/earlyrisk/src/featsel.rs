//! Six feature-importance methods and the consensus vote that picks the
//! modeling features.
//!
//! Each selector produces a [`SelectorReport`] with a score and a boolean
//! per feature; [`vote`] counts the booleans and keeps features reaching the
//! threshold. Degenerate situations (constant columns, empty selections)
//! are recorded as notes on the report rather than silently ignored.

use thiserror::Error;

use crate::baselines::{fit_logistic, BaselineError, Penalty};
use crate::boosting::fit_leafwise_gbdt_with_importance;
use crate::forests::fit_random_forest_with_importance;
use crate::tabular::EncodedDataset;

#[derive(Debug, Error)]
pub enum FeatselError {
    #[error("feature {feature:?} has a negative value in row {row}; chi-square needs nonnegative features")]
    NegativeFeature { feature: String, row: usize },
    #[error("top-k of {k} is outside 1..={p}")]
    BadTopK { k: usize, p: usize },
    #[error("n_select of {n_select} is outside 1..={p}")]
    BadSelectCount { n_select: usize, p: usize },
    #[error("penalty strength must be positive, got {0}")]
    BadStrength(f64),
    #[error("selector base fit failed: {0}")]
    Fit(String),
    #[error("L1 logistic selector did not converge: generalized-gradient norm {grad_norm:e} never reached tolerance {tol:e}")]
    NotConverged { grad_norm: f64, tol: f64 },
    #[error("vote expects exactly 6 reports, got {0}")]
    ReportCount(usize),
    #[error("vote reports must cover identical feature lists")]
    MismatchedReports,
    #[error("vote reports are missing the {0:?} method")]
    MissingMethod(&'static str),
    #[error("no feature reached {threshold} votes; lower the vote threshold")]
    EmptySelection { threshold: u32 },
}

impl From<BaselineError> for FeatselError {
    fn from(err: BaselineError) -> Self {
        FeatselError::Fit(err.to_string())
    }
}

/// One selector's verdict: a score and a keep/drop flag per feature.
#[derive(Debug, Clone)]
pub struct SelectorReport {
    pub method: String,
    pub scores: Vec<f64>,
    pub selected: Vec<bool>,
    pub notes: Vec<String>,
}

/// The consensus outcome across the six selectors.
#[derive(Debug, Clone)]
pub struct VoteTable {
    pub feature_names: Vec<String>,
    pub counts: Vec<u32>,
    pub threshold: u32,
    /// Features with `count ≥ threshold`, ordered by
    /// (count desc, |Pearson r| desc, name asc).
    pub chosen: Vec<String>,
}

/// Population-moment Pearson correlation of each feature with the target.
///
/// Zero-variance columns score 0 and are reported in the notes.
pub fn pearson_scores(ds: &EncodedDataset) -> (Vec<f64>, Vec<String>) {
    let n = ds.n_rows() as f64;
    let mean_y = ds.target.iter().map(|&y| f64::from(y)).sum::<f64>() / n;
    let var_y = ds
        .target
        .iter()
        .map(|&y| (f64::from(y) - mean_y).powi(2))
        .sum::<f64>()
        / n;
    let mut notes = Vec::new();
    if var_y == 0.0 {
        notes.push("target has a single class; all correlations set to 0".to_string());
        return (vec![0.0; ds.n_features()], notes);
    }
    let mut scores = Vec::with_capacity(ds.n_features());
    for j in 0..ds.n_features() {
        let col = ds.features.iter().map(|row| row[j]);
        let mean_x = col.clone().sum::<f64>() / n;
        let var_x = col.clone().map(|v| (v - mean_x).powi(2)).sum::<f64>() / n;
        if var_x == 0.0 {
            notes.push(format!(
                "feature {:?} is constant; correlation set to 0",
                ds.feature_names[j]
            ));
            scores.push(0.0);
            continue;
        }
        let cov = ds
            .features
            .iter()
            .zip(&ds.target)
            .map(|(row, &y)| (row[j] - mean_x) * (f64::from(y) - mean_y))
            .sum::<f64>()
            / n;
        scores.push(cov / (var_x.sqrt() * var_y.sqrt()));
    }
    (scores, notes)
}

/// Pearson selector: keep features with `|r| ≥ threshold` (default 0 keeps
/// every feature).
pub fn pearson_select(ds: &EncodedDataset, threshold: f64) -> SelectorReport {
    let (scores, notes) = pearson_scores(ds);
    let selected = scores.iter().map(|r| r.abs() >= threshold).collect();
    SelectorReport {
        method: "pearson".to_string(),
        scores,
        selected,
        notes,
    }
}

/// Chi-square statistic of each nonnegative feature against the class:
/// `χ²_j = Σ_c (O_cj − E_cj)² / E_cj` with `O_cj = Σ_{y=c} x_ij` and
/// `E_cj = (Σ x_ij)·n_c/n`. Zero-expectation terms are skipped and noted.
pub fn chi2_scores(ds: &EncodedDataset) -> Result<(Vec<f64>, Vec<String>), FeatselError> {
    let n = ds.n_rows() as f64;
    let class_n = [
        ds.target.iter().filter(|&&y| y == 0).count() as f64,
        ds.target.iter().filter(|&&y| y == 1).count() as f64,
    ];
    let mut scores = Vec::with_capacity(ds.n_features());
    let mut notes = Vec::new();
    for j in 0..ds.n_features() {
        let mut observed = [0.0, 0.0];
        for (i, (row, &y)) in ds.features.iter().zip(&ds.target).enumerate() {
            if row[j] < 0.0 {
                return Err(FeatselError::NegativeFeature {
                    feature: ds.feature_names[j].clone(),
                    row: i,
                });
            }
            observed[usize::from(y)] += row[j];
        }
        let col_sum = observed[0] + observed[1];
        let mut stat = 0.0;
        let mut skipped = false;
        for c in 0..2 {
            let expected = col_sum * class_n[c] / n;
            if expected == 0.0 {
                skipped = true;
                continue;
            }
            stat += (observed[c] - expected).powi(2) / expected;
        }
        if skipped {
            notes.push(format!(
                "feature {:?} has a zero-expectation cell; that term was skipped",
                ds.feature_names[j]
            ));
        }
        scores.push(stat);
    }
    Ok((scores, notes))
}

/// Chi-square selector: keep the top `k` scores (ties keep the lower index).
pub fn chi2_select(ds: &EncodedDataset, k: usize) -> Result<SelectorReport, FeatselError> {
    let p = ds.n_features();
    if k == 0 || k > p {
        return Err(FeatselError::BadTopK { k, p });
    }
    let (scores, notes) = chi2_scores(ds)?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite chi-square scores")
            .then(a.cmp(&b))
    });
    let mut selected = vec![false; p];
    for &j in order.iter().take(k) {
        selected[j] = true;
    }
    Ok(SelectorReport {
        method: "chi2".to_string(),
        scores,
        selected,
        notes,
    })
}

fn column_subset(ds: &EncodedDataset, keep: &[usize]) -> EncodedDataset {
    EncodedDataset {
        features: ds
            .features
            .iter()
            .map(|row| keep.iter().map(|&j| row[j]).collect())
            .collect(),
        target: ds.target.clone(),
        feature_names: keep.iter().map(|&j| ds.feature_names[j].clone()).collect(),
        norm_params: ds.norm_params.clone(),
    }
}

/// Recursive feature elimination over an L2 logistic base estimator.
///
/// Each round refits on the survivors and drops the feature with the
/// smallest `|coefficient|` (ties drop the highest feature index) until
/// `n_select` remain. Scores are eliminate-order ranks: survivors rank 1,
/// the last-dropped feature 2, and so on.
pub fn rfe(ds: &EncodedDataset, n_select: usize) -> Result<SelectorReport, FeatselError> {
    let p = ds.n_features();
    if n_select == 0 || n_select > p {
        return Err(FeatselError::BadSelectCount { n_select, p });
    }
    let mut surviving: Vec<usize> = (0..p).collect();
    let mut dropped: Vec<usize> = Vec::new();
    loop {
        let sub = column_subset(ds, &surviving);
        let model = fit_logistic(&sub, Penalty::L2, 1e-3, 0.1, 2000, 1e-6)?;
        if surviving.len() == n_select {
            break;
        }
        let mut worst = 0;
        for pos in 1..surviving.len() {
            let a = model.weights.w[pos].abs();
            let b = model.weights.w[worst].abs();
            if a < b || (a == b && surviving[pos] > surviving[worst]) {
                worst = pos;
            }
        }
        dropped.push(surviving.remove(worst));
    }
    let mut scores = vec![1.0; p];
    for (step, &j) in dropped.iter().enumerate() {
        scores[j] = (dropped.len() - step + 1) as f64;
    }
    let selected = scores.iter().map(|&r| r == 1.0).collect();
    Ok(SelectorReport {
        method: "rfe".to_string(),
        scores,
        selected,
        notes: Vec::new(),
    })
}

/// L1-penalized logistic selector: keep features whose fitted coefficient
/// survives the soft-thresholding, i.e. `|w_j| > 1e-8`.
pub fn l1_logistic_select(
    ds: &EncodedDataset,
    strength: f64,
) -> Result<SelectorReport, FeatselError> {
    if strength <= 0.0 {
        return Err(FeatselError::BadStrength(strength));
    }
    let tol = 1e-6;
    let max_iter = 50_000;
    let model = fit_logistic(ds, Penalty::L1, strength, 0.1, max_iter, tol)?;
    if model.iterations == max_iter && model.final_grad_norm > tol {
        return Err(FeatselError::NotConverged {
            grad_norm: model.final_grad_norm,
            tol,
        });
    }
    let scores = model.weights.w.clone();
    let selected: Vec<bool> = scores.iter().map(|w| w.abs() > 1e-8).collect();
    let mut notes = Vec::new();
    if !selected.iter().any(|&s| s) {
        notes.push(format!(
            "strength {strength} zeroed every coefficient; empty selection"
        ));
    }
    Ok(SelectorReport {
        method: "l1".to_string(),
        scores,
        selected,
        notes,
    })
}

/// Which fitted ensemble backs the importance selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForestKind {
    RandomForest,
    LeafwiseGbdt,
}

/// Impurity/gain importance selector: fit the named ensemble, normalize the
/// per-feature importance to sum 1, keep features at or above the mean
/// importance `1/p`.
pub fn impurity_importance_select(
    ds: &EncodedDataset,
    kind: ForestKind,
    seed: u64,
) -> Result<SelectorReport, FeatselError> {
    let p = ds.n_features();
    let (method, raw) = match kind {
        ForestKind::RandomForest => {
            let (_, importance) = fit_random_forest_with_importance(ds, 500, None, seed)
                .map_err(|e| FeatselError::Fit(e.to_string()))?;
            ("rf", importance)
        }
        ForestKind::LeafwiseGbdt => {
            let (_, gains) = fit_leafwise_gbdt_with_importance(ds, 100, 0.1, 31, seed)
                .map_err(|e| FeatselError::Fit(e.to_string()))?;
            ("gbdt", gains)
        }
    };
    let total: f64 = raw.iter().sum();
    let mut notes = Vec::new();
    let scores: Vec<f64> = if total > 0.0 {
        raw.iter().map(|g| g / total).collect()
    } else {
        notes.push("ensemble made no splits; all importances are 0".to_string());
        vec![0.0; p]
    };
    let mean = 1.0 / p as f64;
    let selected: Vec<bool> = scores.iter().map(|&s| s >= mean).collect();
    if !selected.iter().any(|&s| s) {
        notes.push("no feature reached the mean importance".to_string());
    }
    Ok(SelectorReport {
        method: method.to_string(),
        scores,
        selected,
        notes,
    })
}

const METHOD_ORDER: [&str; 6] = ["pearson", "chi2", "rfe", "l1", "rf", "gbdt"];

fn find_report<'a>(
    reports: &'a [SelectorReport],
    method: &'static str,
) -> Result<&'a SelectorReport, FeatselError> {
    reports
        .iter()
        .find(|r| r.method == method)
        .ok_or(FeatselError::MissingMethod(method))
}

/// Row order shared by the vote table and `votes.csv`:
/// (count desc, |Pearson r| desc, name asc).
fn vote_order(names: &[String], counts: &[u32], pearson: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| {
        counts[b].cmp(&counts[a]).then(
            pearson[b]
                .abs()
                .partial_cmp(&pearson[a].abs())
                .expect("finite correlations")
                .then(names[a].cmp(&names[b])),
        )
    });
    order
}

/// Counts per-feature votes across the six reports and keeps features with
/// `count ≥ threshold`.
pub fn vote(
    ds: &EncodedDataset,
    reports: &[SelectorReport],
    threshold: u32,
) -> Result<VoteTable, FeatselError> {
    if reports.len() != 6 {
        return Err(FeatselError::ReportCount(reports.len()));
    }
    let p = ds.n_features();
    for report in reports {
        if report.scores.len() != p || report.selected.len() != p {
            return Err(FeatselError::MismatchedReports);
        }
    }
    for method in METHOD_ORDER {
        find_report(reports, method)?;
    }
    let mut counts = vec![0u32; p];
    for report in reports {
        for (c, &s) in counts.iter_mut().zip(&report.selected) {
            *c += u32::from(s);
        }
    }
    let pearson = &find_report(reports, "pearson")?.scores;
    let chosen: Vec<String> = vote_order(&ds.feature_names, &counts, pearson)
        .into_iter()
        .filter(|&j| counts[j] >= threshold)
        .map(|j| ds.feature_names[j].clone())
        .collect();
    if chosen.is_empty() {
        return Err(FeatselError::EmptySelection { threshold });
    }
    Ok(VoteTable {
        feature_names: ds.feature_names.clone(),
        counts,
        threshold,
        chosen,
    })
}

fn csv_cell(text: &str) -> String {
    if text.contains(',') || text.contains('"') || text.contains('\n') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// Renders the vote table as `votes.csv`:
/// `feature,pearson,chi2,rfe,l1,rf,gbdt,total,chosen` with True/False cells,
/// rows in vote order.
pub fn votes_csv(reports: &[SelectorReport], table: &VoteTable) -> Result<String, FeatselError> {
    let columns: Vec<&SelectorReport> = METHOD_ORDER
        .iter()
        .map(|m| find_report(reports, m))
        .collect::<Result<_, _>>()?;
    let tf = |b: bool| if b { "True" } else { "False" };
    let mut out = String::from("feature,pearson,chi2,rfe,l1,rf,gbdt,total,chosen\n");
    let pearson = &columns[0].scores;
    for j in vote_order(&table.feature_names, &table.counts, pearson) {
        let name = &table.feature_names[j];
        out.push_str(&csv_cell(name));
        for report in &columns {
            out.push(',');
            out.push_str(tf(report.selected[j]));
        }
        out.push_str(&format!(
            ",{},{}\n",
            table.counts[j],
            tf(table.chosen.contains(name))
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn ds(features: Vec<Vec<f64>>, target: Vec<u8>) -> EncodedDataset {
        let p = features[0].len();
        EncodedDataset {
            features,
            target,
            feature_names: (0..p).map(|j| format!("x{j}")).collect(),
            norm_params: BTreeMap::new(),
        }
    }

    #[test]
    fn pearson_hits_the_exact_poles() {
        let d = ds(
            vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0, 1, 0, 1],
        );
        let (scores, notes) = pearson_scores(&d);
        assert!((scores[0] - 1.0).abs() < 1e-15, "copy of target");
        assert!((scores[1] + 1.0).abs() < 1e-15, "inverted target");
        assert!(notes.is_empty());
    }

    #[test]
    fn pearson_flags_constant_columns_and_still_selects_at_zero_threshold() {
        let d = ds(
            vec![vec![0.5, 0.0], vec![0.5, 1.0], vec![0.5, 0.0], vec![0.5, 1.0]],
            vec![0, 1, 0, 1],
        );
        let report = pearson_select(&d, 0.0);
        assert_eq!(report.scores[0], 0.0);
        assert_eq!(report.notes.len(), 1);
        assert!(report.notes[0].contains("constant"));
        assert_eq!(report.selected, vec![true, true]);
    }

    #[test]
    fn pearson_matches_point_biserial_on_binary_features() {
        let d = ds(
            vec![
                vec![1.0],
                vec![0.0],
                vec![1.0],
                vec![1.0],
                vec![0.0],
                vec![0.0],
                vec![1.0],
                vec![0.0],
            ],
            vec![1, 0, 1, 0, 1, 0, 1, 0],
        );
        let (scores, _) = pearson_scores(&d);
        // Point-biserial: r = (ȳ₁ − ȳ₀)/σ_y · sqrt(p·q), grouping by the
        // binary feature, population σ.
        let n = 8.0;
        let ones: Vec<f64> = d
            .features
            .iter()
            .zip(&d.target)
            .filter(|(row, _)| row[0] == 1.0)
            .map(|(_, &y)| f64::from(y))
            .collect();
        let zeros: Vec<f64> = d
            .features
            .iter()
            .zip(&d.target)
            .filter(|(row, _)| row[0] == 0.0)
            .map(|(_, &y)| f64::from(y))
            .collect();
        let m1 = ones.iter().sum::<f64>() / ones.len() as f64;
        let m0 = zeros.iter().sum::<f64>() / zeros.len() as f64;
        let mean_y = d.target.iter().map(|&y| f64::from(y)).sum::<f64>() / n;
        let sd_y = (d
            .target
            .iter()
            .map(|&y| (f64::from(y) - mean_y).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        let p_one = ones.len() as f64 / n;
        let expected = (m1 - m0) / sd_y * (p_one * (1.0 - p_one)).sqrt();
        assert!((scores[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn pearson_is_sign_equivariant() {
        let d = ds(
            vec![vec![0.1], vec![0.9], vec![0.3], vec![0.7], vec![0.2]],
            vec![0, 1, 0, 1, 0],
        );
        let flipped = ds(
            d.features.iter().map(|r| vec![-r[0]]).collect(),
            d.target.clone(),
        );
        let (a, _) = pearson_scores(&d);
        let (b, _) = pearson_scores(&flipped);
        assert_eq!(a[0], -b[0]);
    }

    #[test]
    fn chi2_matches_hand_arithmetic() {
        let d = ds(
            vec![vec![1.0], vec![1.0], vec![0.0], vec![0.0]],
            vec![1, 1, 0, 0],
        );
        let (scores, _) = chi2_scores(&d).expect("scores");
        assert_eq!(scores[0], 2.0);
    }

    #[test]
    fn chi2_zero_column_scores_zero_and_notes_the_skip() {
        let d = ds(
            vec![vec![0.0], vec![0.0], vec![0.0], vec![0.0]],
            vec![1, 1, 0, 0],
        );
        let (scores, notes) = chi2_scores(&d).expect("scores");
        assert_eq!(scores[0], 0.0);
        assert!(!notes.is_empty());
    }

    #[test]
    fn chi2_balanced_independent_feature_scores_zero() {
        let d = ds(
            vec![vec![1.0], vec![0.0], vec![1.0], vec![0.0]],
            vec![1, 1, 0, 0],
        );
        let (scores, _) = chi2_scores(&d).expect("scores");
        assert_eq!(scores[0], 0.0);
    }

    #[test]
    fn chi2_rejects_negative_values() {
        let d = ds(vec![vec![0.5], vec![-0.1]], vec![0, 1]);
        assert!(matches!(
            chi2_scores(&d),
            Err(FeatselError::NegativeFeature { row: 1, .. })
        ));
    }

    #[test]
    fn chi2_is_row_permutation_invariant() {
        let d = ds(
            vec![vec![1.0, 0.2], vec![0.0, 0.9], vec![1.0, 0.4], vec![0.0, 0.1]],
            vec![1, 0, 0, 1],
        );
        let permuted = ds(
            vec![vec![0.0, 0.1], vec![1.0, 0.2], vec![0.0, 0.9], vec![1.0, 0.4]],
            vec![1, 1, 0, 0],
        );
        let (a, _) = chi2_scores(&d).expect("scores");
        let (b, _) = chi2_scores(&permuted).expect("scores");
        assert_eq!(a, b);
    }

    #[test]
    fn chi2_top_k_keeps_the_largest_scores() {
        let d = ds(
            vec![
                vec![1.0, 1.0, 1.0],
                vec![1.0, 0.0, 1.0],
                vec![0.0, 1.0, 1.0],
                vec![0.0, 0.0, 1.0],
            ],
            vec![1, 1, 0, 0],
        );
        let report = chi2_select(&d, 1).expect("select");
        assert_eq!(report.selected, vec![true, false, false]);
        assert!(matches!(
            chi2_select(&d, 4),
            Err(FeatselError::BadTopK { k: 4, p: 3 })
        ));
    }

    #[test]
    fn rfe_with_full_count_keeps_everything() {
        let d = ds(
            vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]],
            vec![0, 1, 0, 1],
        );
        let report = rfe(&d, 2).expect("rfe");
        assert_eq!(report.selected, vec![true, true]);
        assert_eq!(report.scores, vec![1.0, 1.0]);
    }

    #[test]
    fn rfe_eliminates_the_noise_feature() {
        let d = ds(
            vec![
                vec![0.0, 0.0, 0.0],
                vec![0.0, 1.0, 1.0],
                vec![1.0, 0.0, 0.0],
                vec![1.0, 1.0, 1.0],
                vec![0.0, 0.0, 1.0],
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 1.0],
                vec![1.0, 1.0, 0.0],
            ],
            vec![0, 1, 1, 1, 0, 1, 1, 1],
        );
        let report = rfe(&d, 2).expect("rfe");
        assert_eq!(report.selected, vec![true, true, false]);
        assert_eq!(report.scores[2], 2.0, "last drop ranks 2");
    }

    #[test]
    fn rfe_first_drop_is_the_smallest_full_fit_coefficient() {
        let d = ds(
            vec![
                vec![0.1, 0.0, 0.3],
                vec![0.9, 1.0, 0.6],
                vec![0.2, 0.0, 0.4],
                vec![0.8, 1.0, 0.5],
                vec![0.3, 1.0, 0.2],
                vec![0.7, 0.0, 0.8],
            ],
            vec![0, 1, 0, 1, 1, 0],
        );
        let full = fit_logistic(&d, Penalty::L2, 1e-3, 0.1, 2000, 1e-6).expect("fit");
        let mut argmin = 0;
        for j in 1..3 {
            let a = full.weights.w[j].abs();
            let b = full.weights.w[argmin].abs();
            if a < b || (a == b && j > argmin) {
                argmin = j;
            }
        }
        let report = rfe(&d, 2).expect("rfe");
        let dropped: Vec<usize> = (0..3).filter(|&j| !report.selected[j]).collect();
        assert_eq!(dropped, vec![argmin]);
    }

    #[test]
    fn l1_huge_strength_empties_the_selection_with_a_note() {
        let d = ds(
            vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]],
            vec![0, 1, 0, 1],
        );
        let report = l1_logistic_select(&d, 1e6).expect("select");
        assert_eq!(report.selected, vec![false]);
        assert!(report.notes.iter().any(|n| n.contains("empty")));
    }

    #[test]
    fn l1_zeroes_the_noise_coefficient_exactly() {
        let d = ds(
            vec![
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![0.0, 0.0],
                vec![1.0, 1.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![0.0, 0.0],
                vec![1.0, 1.0],
            ],
            vec![0, 1, 0, 1, 0, 1, 0, 1],
        );
        let strength = 0.05;
        let report = l1_logistic_select(&d, strength).expect("select");
        assert_eq!(report.scores[1], 0.0, "noise weight is exactly zero");
        assert_eq!(report.selected, vec![true, false]);
        // KKT check: at a zero coefficient the bare-loss gradient must sit
        // inside the subgradient interval [−strength, strength].
        let model = fit_logistic(&d, Penalty::L1, strength, 0.1, 50_000, 1e-6).expect("fit");
        let n = d.n_rows() as f64;
        let grad1: f64 = d
            .features
            .iter()
            .zip(&d.target)
            .map(|(row, &y)| {
                (crate::baselines::sigmoid(model.weights.raw(row)) - f64::from(y)) * row[1]
            })
            .sum::<f64>()
            / n;
        assert!(grad1.abs() <= strength + 1e-9);
    }

    #[test]
    fn l1_rejects_nonpositive_strength() {
        let d = ds(vec![vec![0.0], vec![1.0]], vec![0, 1]);
        assert!(matches!(
            l1_logistic_select(&d, 0.0),
            Err(FeatselError::BadStrength(_))
        ));
    }

    #[test]
    fn importance_single_feature_gets_everything() {
        let d = ds(
            vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]],
            vec![0, 0, 1, 1],
        );
        for kind in [ForestKind::RandomForest, ForestKind::LeafwiseGbdt] {
            let report = impurity_importance_select(&d, kind, 7).expect("select");
            assert_eq!(report.scores, vec![1.0]);
            assert_eq!(report.selected, vec![true]);
        }
    }

    #[test]
    fn importance_skips_features_never_split_on() {
        let d = ds(
            vec![
                vec![0.0, 0.5],
                vec![0.0, 0.5],
                vec![1.0, 0.5],
                vec![1.0, 0.5],
            ],
            vec![0, 0, 1, 1],
        );
        for kind in [ForestKind::RandomForest, ForestKind::LeafwiseGbdt] {
            let report = impurity_importance_select(&d, kind, 7).expect("select");
            assert_eq!(report.scores[1], 0.0, "{kind:?}");
            assert!(!report.selected[1], "{kind:?}");
            assert!(report.selected[0], "{kind:?}");
        }
    }

    fn synthetic_reports(selected: [[bool; 3]; 6], pearson: [f64; 3]) -> Vec<SelectorReport> {
        METHOD_ORDER
            .iter()
            .zip(selected)
            .map(|(method, sel)| SelectorReport {
                method: method.to_string(),
                scores: if *method == "pearson" {
                    pearson.to_vec()
                } else {
                    vec![0.0; 3]
                },
                selected: sel.to_vec(),
                notes: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn vote_counts_and_orders_the_chosen_features() {
        let d = ds(
            vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]],
            vec![0, 1],
        );
        let reports = synthetic_reports(
            [
                [true, true, true],
                [true, true, false],
                [true, true, true],
                [true, false, false],
                [false, true, false],
                [false, true, false],
            ],
            [0.2, -0.6, 0.9],
        );
        let table = vote(&d, &reports, 4).expect("vote");
        assert_eq!(table.counts, vec![4, 5, 2]);
        // x1 first on count, then x0; x2 misses the threshold.
        assert_eq!(table.chosen, vec!["x1".to_string(), "x0".to_string()]);
    }

    #[test]
    fn vote_breaks_count_ties_by_pearson_magnitude_then_name() {
        let d = ds(
            vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]],
            vec![0, 1],
        );
        let all = [true, true, true];
        let reports = synthetic_reports([all, all, all, all, all, all], [0.3, -0.8, 0.3]);
        let table = vote(&d, &reports, 4).expect("vote");
        assert_eq!(
            table.chosen,
            vec!["x1".to_string(), "x0".to_string(), "x2".to_string()],
            "|r| desc breaks the count tie, name breaks the |r| tie"
        );
    }

    #[test]
    fn vote_is_permutation_invariant_in_report_order() {
        let d = ds(
            vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]],
            vec![0, 1],
        );
        let reports = synthetic_reports(
            [
                [true, true, false],
                [true, false, false],
                [true, true, true],
                [true, true, false],
                [false, true, false],
                [true, false, false],
            ],
            [0.5, 0.4, 0.3],
        );
        let mut reversed = reports.clone();
        reversed.reverse();
        let a = vote(&d, &reports, 3).expect("vote");
        let b = vote(&d, &reversed, 3).expect("vote");
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.chosen, b.chosen);
    }

    #[test]
    fn vote_above_method_count_is_a_hard_error() {
        let d = ds(vec![vec![0.0], vec![1.0]], vec![0, 1]);
        // Adapt the 3-wide synthetic reports to the 1-wide dataset.
        let reports: Vec<SelectorReport> = synthetic_reports([[true; 3]; 6], [0.1, 0.1, 0.1])
            .into_iter()
            .map(|mut r| {
                r.scores.truncate(1);
                r.selected.truncate(1);
                r
            })
            .collect();
        let err = vote(&d, &reports, 7).expect_err("threshold above method count");
        assert!(err.to_string().contains("lower the vote threshold"));
    }

    #[test]
    fn vote_rejects_mismatched_feature_lists() {
        let d = ds(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0, 1]);
        let reports = synthetic_reports(
            [[true; 3]; 6],
            [0.1, 0.2, 0.3],
        );
        assert!(matches!(
            vote(&d, &reports, 4),
            Err(FeatselError::MismatchedReports)
        ));
    }

    #[test]
    fn votes_csv_lists_every_feature_in_vote_order() {
        let d = ds(
            vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]],
            vec![0, 1],
        );
        let reports = synthetic_reports(
            [
                [true, true, true],
                [true, true, false],
                [true, true, true],
                [true, false, false],
                [false, true, false],
                [false, true, false],
            ],
            [0.2, -0.6, 0.9],
        );
        let table = vote(&d, &reports, 4).expect("vote");
        let csv = votes_csv(&reports, &table).expect("csv");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "feature,pearson,chi2,rfe,l1,rf,gbdt,total,chosen");
        assert_eq!(lines[1], "x1,True,True,True,False,True,True,5,True");
        assert_eq!(lines[2], "x0,True,True,True,True,False,False,4,True");
        assert_eq!(lines[3], "x2,True,False,True,False,False,False,2,False");
        assert_eq!(lines.len(), 4);
    }
}
