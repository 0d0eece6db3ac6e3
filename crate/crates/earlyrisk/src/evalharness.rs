//! Metrics, confusion matrices, ROC/AUC, and k-fold cross-validation.
//!
//! Every classifier reaches this module through the [`ScoredModel`] contract,
//! so thresholded metrics and ranking metrics share one implementation.

use thiserror::Error;

use crate::rng::derive_seed;
use crate::tabular::{EncodedDataset, FoldPlan};
use crate::ScoredModel;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scores and labels differ in length: {scores} vs {labels}")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("cannot evaluate an empty sample")]
    Empty,
    #[error("ROC needs both classes present in the labels")]
    SingleClass,
    #[error("fold {fold}: training rows contain a single class; use stratified folds")]
    SingleClassFold { fold: usize },
    #[error("fold {fold}: model fit failed: {message}")]
    FitFailed { fold: usize, message: String },
}

/// Counts of the four prediction outcomes at a fixed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    /// False negatives (`fn` is reserved in Rust).
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// The four headline rates; `degenerate` marks any zero-denominator metric
/// that was reported as 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

/// Builds a confusion matrix predicting positive where `score ≥ threshold`.
pub fn confusion(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<ConfusionMatrix, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cm = ConfusionMatrix {
        tp: 0,
        tn: 0,
        fp: 0,
        fn_: 0,
    };
    for (&s, &y) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        match (predicted, y == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Accuracy, precision, recall, and F1 from a confusion matrix.
///
/// A zero denominator (no predicted positives, no actual positives, or
/// P+R = 0) yields 0 for that metric and sets the degenerate flag, so report
/// generation never aborts on an extreme classifier.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::Empty);
    }
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| -> f64 {
        if den == 0.0 {
            degenerate = true;
            0.0
        } else {
            num / den
        }
    };
    let accuracy = (cm.tp + cm.tn) as f64 / cm.total() as f64;
    let precision = ratio(cm.tp as f64, (cm.tp + cm.fp) as f64);
    let recall = ratio(cm.tp as f64, (cm.tp + cm.fn_) as f64);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        degenerate,
    })
}

/// One ROC operating point; the threshold is the lowest score still
/// classified positive at that point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve with its trapezoid-rule area.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweeps thresholds over the distinct scores, descending.
///
/// Tied scores advance true and false positives jointly, producing a diagonal
/// segment, so the curve has exactly one point per distinct score plus the
/// (0,0) origin. The trapezoid area then equals the Mann–Whitney statistic
/// `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores must be finite")
            .then(a.cmp(&b))
    });
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut auc = 0.0;
    let mut i = 0usize;
    while i < order.len() {
        let s = scores[order[i]];
        let mut j = i;
        while j < order.len() && scores[order[j]] == s {
            match labels[order[j]] {
                1 => tp += 1,
                _ => fp += 1,
            }
            j += 1;
        }
        let prev = *points.last().expect("origin present");
        let point = RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        auc += (point.fpr - prev.fpr) * (point.tpr + prev.tpr) / 2.0;
        points.push(point);
        i = j;
    }
    Ok(RocCurve { points, auc })
}

/// Result of a k-fold run: the fold accuracies and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub fold_accuracies: Vec<f64>,
    pub cv_accuracy: f64,
}

/// Fits a fresh model per fold on the complement and scores the held-out fold.
///
/// The factory receives the training subset and a per-fold seed derived from
/// the plan seed, so results do not depend on evaluation order.
pub fn cross_validate<F>(
    mut factory: F,
    ds: &EncodedDataset,
    plan: &FoldPlan,
) -> Result<CvResult, EvalError>
where
    F: FnMut(&EncodedDataset, u64) -> Result<Box<dyn ScoredModel>, String>,
{
    let mut fold_accuracies = Vec::with_capacity(plan.k);
    for (fold, holdout) in plan.folds.iter().enumerate() {
        let train_idx: Vec<usize> = plan
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let train = ds.subset_rows(&train_idx);
        if train.target.iter().all(|&y| y == 0) || train.target.iter().all(|&y| y == 1) {
            return Err(EvalError::SingleClassFold { fold });
        }
        let seed = derive_seed(plan.seed, "cv-fold", fold as u64);
        let model = factory(&train, seed).map_err(|message| EvalError::FitFailed {
            fold,
            message,
        })?;
        let test = ds.subset_rows(holdout);
        let scores = model.score_batch(&test.features);
        let cm = confusion(&scores, &test.target, 0.5)?;
        fold_accuracies.push(metrics(&cm)?.accuracy);
    }
    let cv_accuracy = fold_accuracies.iter().sum::<f64>() / plan.k as f64;
    Ok(CvResult {
        fold_accuracies,
        cv_accuracy,
    })
}

/// Everything reported for one fitted model.
#[derive(Debug, Clone)]
pub struct ModelReport {
    pub name: String,
    pub accuracy: f64,
    pub cv_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub confusion: ConfusionMatrix,
    pub roc: RocCurve,
    pub degenerate: bool,
}

/// Renders `metrics.csv`: one row per model, 6-decimal fixed formatting.
pub fn metrics_csv(rows: &[ModelReport]) -> String {
    let mut out = String::from("model,accuracy,cv_accuracy,precision,recall,f1,auc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.name, r.accuracy, r.cv_accuracy, r.precision, r.recall, r.f1, r.auc
        ));
    }
    out
}

/// Renders `confusion.csv`: raw outcome counts per model.
pub fn confusion_csv(rows: &[ModelReport]) -> String {
    let mut out = String::from("model,tn,fp,fn,tp\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.name, r.confusion.tn, r.confusion.fp, r.confusion.fn_, r.confusion.tp
        ));
    }
    out
}

/// Renders one model's `roc_<model>.csv` with 6-decimal fixed formatting.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in &curve.points {
        out.push_str(&format!("{:.6},{:.6},{:.6}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn paper_confusion_round_trips_metrics() {
        let cm = ConfusionMatrix {
            tn: 36,
            fp: 4,
            fn_: 1,
            tp: 63,
        };
        let m = metrics(&cm).expect("metrics");
        assert_eq!((m.accuracy * 1e4).round() / 1e4, 0.9519);
        assert_eq!((m.precision * 1e4).round() / 1e4, 0.9403);
        assert_eq!((m.recall * 1e4).round() / 1e4, 0.9844);
        assert_eq!((m.f1 * 1e4).round() / 1e4, 0.9618);
        assert!(!m.degenerate);
    }

    #[test]
    fn perfect_counts_give_all_ones() {
        let cm = ConfusionMatrix {
            tn: 40,
            fp: 0,
            fn_: 0,
            tp: 64,
        };
        let m = metrics(&cm).expect("metrics");
        assert_eq!(
            (m.accuracy, m.precision, m.recall, m.f1),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert!(!m.degenerate);
    }

    #[test]
    fn zero_denominator_sets_flag() {
        let cm = ConfusionMatrix {
            tn: 5,
            fp: 0,
            fn_: 3,
            tp: 0,
        };
        let m = metrics(&cm).expect("metrics");
        assert_eq!(m.precision, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn perfect_scores_have_no_errors() {
        let labels = vec![1, 0, 1, 0];
        let scores = vec![1.0, 0.0, 1.0, 0.0];
        let cm = confusion(&scores, &labels, 0.5).expect("confusion");
        assert_eq!((cm.fp, cm.fn_), (0, 0));
    }

    #[test]
    fn zero_threshold_predicts_everything_positive() {
        let labels = vec![1, 0, 1];
        let scores = vec![0.2, 0.1, 0.9];
        let cm = confusion(&scores, &labels, 0.0).expect("confusion");
        assert_eq!((cm.tn, cm.fn_), (0, 0));
        assert_eq!(cm.tp + cm.fp, 3);
    }

    #[test]
    fn confusion_rejects_length_mismatch() {
        assert!(matches!(
            confusion(&[0.5], &[1, 0], 0.5),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn separated_scores_reach_auc_one() {
        let labels = vec![0, 0, 1, 1];
        let scores = vec![0.1, 0.2, 0.8, 0.9];
        let roc = roc_auc(&scores, &labels).expect("roc");
        assert_eq!(roc.auc, 1.0);
        let first = roc.points.first().expect("origin");
        let last = roc.points.last().expect("end");
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn constant_scores_give_half_auc() {
        let labels = vec![0, 1, 0, 1, 1];
        let scores = vec![0.5; 5];
        let roc = roc_auc(&scores, &labels).expect("roc");
        assert_eq!(roc.auc, 0.5);
        assert_eq!(roc.points.len(), 2, "origin plus one tie group");
    }

    #[test]
    fn roc_has_one_point_per_distinct_score_plus_origin() {
        let labels = vec![1, 0, 1, 0, 1];
        let scores = vec![0.9, 0.9, 0.7, 0.3, 0.3];
        let roc = roc_auc(&scores, &labels).expect("roc");
        assert_eq!(roc.points.len(), 4);
    }

    #[test]
    fn roc_rejects_single_class() {
        assert!(matches!(
            roc_auc(&[0.1, 0.9], &[1, 1]),
            Err(EvalError::SingleClass)
        ));
    }

    fn four_row_ds() -> EncodedDataset {
        EncodedDataset {
            features: vec![vec![0.0], vec![1.0], vec![0.1], vec![0.9]],
            target: vec![0, 1, 0, 1],
            feature_names: vec!["x".into()],
            norm_params: BTreeMap::new(),
        }
    }

    struct NearestOne {
        rows: Vec<(f64, u8)>,
    }

    impl ScoredModel for NearestOne {
        fn score(&self, x: &[f64]) -> f64 {
            let mut best = (f64::INFINITY, 0u8);
            for &(v, y) in &self.rows {
                let d = (v - x[0]).abs();
                if d < best.0 {
                    best = (d, y);
                }
            }
            f64::from(best.1)
        }
    }

    #[test]
    fn two_fold_nearest_neighbour_matches_hand_trace() {
        // Folds {0,1} and {2,3}. Fitting on {0.1→0, 0.9→1} scores 0.0→0 and
        // 1.0→1 correctly; symmetrically for the other fold. Both folds: 1.0.
        let ds = four_row_ds();
        let plan = FoldPlan {
            k: 2,
            folds: vec![vec![0, 1], vec![2, 3]],
            stratified: true,
            seed: 0,
        };
        let cv = cross_validate(
            |train, _seed| {
                Ok(Box::new(NearestOne {
                    rows: train
                        .features
                        .iter()
                        .zip(&train.target)
                        .map(|(r, &y)| (r[0], y))
                        .collect(),
                }) as Box<dyn ScoredModel>)
            },
            &ds,
            &plan,
        )
        .expect("cv");
        assert_eq!(cv.fold_accuracies, vec![1.0, 1.0]);
        assert_eq!(cv.cv_accuracy, 1.0);
    }

    struct AlwaysPositive;

    impl ScoredModel for AlwaysPositive {
        fn score(&self, _x: &[f64]) -> f64 {
            1.0
        }
    }

    #[test]
    fn constant_positive_scores_positive_rate() {
        let ds = four_row_ds();
        let plan = FoldPlan {
            k: 2,
            folds: vec![vec![0, 1], vec![2, 3]],
            stratified: true,
            seed: 0,
        };
        let cv = cross_validate(
            |_train, _seed| Ok(Box::new(AlwaysPositive) as Box<dyn ScoredModel>),
            &ds,
            &plan,
        )
        .expect("cv");
        assert_eq!(cv.cv_accuracy, 0.5, "positive rate of the dataset");
    }

    #[test]
    fn single_class_fold_is_named() {
        let ds = EncodedDataset {
            features: vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            target: vec![0, 0, 0, 1],
            feature_names: vec!["x".into()],
            norm_params: BTreeMap::new(),
        };
        // Fold 0 trains on fold 1's rows {0,2} — all negative.
        let plan = FoldPlan {
            k: 2,
            folds: vec![vec![1, 3], vec![0, 2]],
            stratified: false,
            seed: 0,
        };
        let err = cross_validate(
            |_train, _seed| Ok(Box::new(AlwaysPositive) as Box<dyn ScoredModel>),
            &ds,
            &plan,
        )
        .unwrap_err();
        match err {
            EvalError::SingleClassFold { fold } => assert_eq!(fold, 0),
            other => panic!("expected single-class fold error, got {other:?}"),
        }
    }

    #[test]
    fn csv_rendering_is_fixed_width() {
        let roc = RocCurve {
            points: vec![
                RocPoint {
                    threshold: f64::INFINITY,
                    fpr: 0.0,
                    tpr: 0.0,
                },
                RocPoint {
                    threshold: 0.5,
                    fpr: 1.0,
                    tpr: 1.0,
                },
            ],
            auc: 0.5,
        };
        let row = ModelReport {
            name: "lr".into(),
            accuracy: 0.9519230769,
            cv_accuracy: 0.9,
            precision: 0.9402985075,
            recall: 0.984375,
            f1: 0.9618320611,
            auc: 0.5,
            confusion: ConfusionMatrix {
                tn: 36,
                fp: 4,
                fn_: 1,
                tp: 63,
            },
            roc: roc.clone(),
            degenerate: false,
        };
        assert_eq!(
            metrics_csv(std::slice::from_ref(&row)),
            "model,accuracy,cv_accuracy,precision,recall,f1,auc\n\
             lr,0.951923,0.900000,0.940299,0.984375,0.961832,0.500000\n"
        );
        assert_eq!(
            confusion_csv(std::slice::from_ref(&row)),
            "model,tn,fp,fn,tp\nlr,36,4,1,63\n"
        );
        assert_eq!(
            roc_csv(&roc),
            "threshold,fpr,tpr\ninf,0.000000,0.000000\n0.500000,1.000000,1.000000\n"
        );
    }
}
