//! Classical classifiers from first principles: logistic regression, linear
//! SVM, k-nearest neighbors, and Gaussian naive Bayes.

use rand::Rng;
use thiserror::Error;

use crate::rng::rng_from_seed;
use crate::tabular::EncodedDataset;
use crate::ScoredModel;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("fitting needs both classes present in the training labels")]
    SingleClass,
    #[error("loss became non-finite; learning rate {lr} diverges on this data")]
    Diverged { lr: f64 },
    #[error("k={k} out of range 1..={n}")]
    BadK { k: usize, n: usize },
}

fn require_two_classes(target: &[u8]) -> Result<(), BaselineError> {
    let pos = target.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == target.len() {
        return Err(BaselineError::SingleClass);
    }
    Ok(())
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A linear decision function: weights and intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearWeights {
    pub fn raw(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + self.b
    }
}

/// Weight penalty applied during logistic fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    None,
    L1,
    L2,
}

/// Fitted logistic regression scoring `sigmoid(w·x + b)`.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub weights: LinearWeights,
    pub iterations: usize,
    pub final_grad_norm: f64,
}

impl ScoredModel for LogisticModel {
    fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.weights.raw(x))
    }
}

/// Fits logistic regression by full-batch gradient descent on the mean
/// log-loss; the intercept is never penalized.
///
/// The penalty term is `strength·‖w‖₁` for L1 (handled with a proximal
/// soft-threshold step) or `(strength/2)·‖w‖₂²` for L2. Convergence is
/// declared when the largest component of the (generalized) gradient falls
/// below `tol`. Initialization is the zero vector, so the convex fit needs no
/// randomness.
pub fn fit_logistic(
    train: &EncodedDataset,
    penalty: Penalty,
    strength: f64,
    lr: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LogisticModel, BaselineError> {
    require_two_classes(&train.target)?;
    let n = train.n_rows();
    let p = train.n_features();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;

    for it in 0..max_iter {
        iterations = it + 1;
        // Mean log-loss gradient of the smooth part.
        let mut gw = vec![0.0; p];
        let mut gb = 0.0;
        let mut loss = 0.0;
        for (row, &y) in train.features.iter().zip(&train.target) {
            let z = w.iter().zip(row).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            let s = sigmoid(z);
            let err = s - f64::from(y);
            for (g, &xi) in gw.iter_mut().zip(row) {
                *g += err * xi;
            }
            gb += err;
            // log-loss in a safely clamped form
            let sc = s.clamp(1e-15, 1.0 - 1e-15);
            loss -= if y == 1 { sc.ln() } else { (1.0 - sc).ln() };
        }
        loss /= n as f64;
        if !loss.is_finite() {
            return Err(BaselineError::Diverged { lr });
        }
        for g in &mut gw {
            *g /= n as f64;
        }
        gb /= n as f64;
        if penalty == Penalty::L2 {
            for (g, &wi) in gw.iter_mut().zip(&w) {
                *g += strength * wi;
            }
        }

        let mut new_w: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - lr * gi).collect();
        if penalty == Penalty::L1 {
            for wi in &mut new_w {
                *wi = wi.signum() * (wi.abs() - lr * strength).max(0.0);
            }
        }
        let new_b = b - lr * gb;

        // Generalized gradient: for L1 the proximal fixed-point residual, so
        // a soft-thresholded coordinate sitting at zero counts as stationary.
        grad_norm = new_w
            .iter()
            .zip(&w)
            .map(|(nw, ow)| ((ow - nw) / lr).abs())
            .fold(gb.abs(), f64::max);
        w = new_w;
        b = new_b;
        if grad_norm < tol {
            break;
        }
    }
    Ok(LogisticModel {
        weights: LinearWeights { w, b },
        iterations,
        final_grad_norm: grad_norm,
    })
}

/// Fitted linear SVM; scores through a sigmoid for ROC comparability.
#[derive(Debug, Clone)]
pub struct SvmModel {
    pub weights: LinearWeights,
}

impl ScoredModel for SvmModel {
    fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.weights.raw(x))
    }
}

/// Fits a linear SVM on ±1 labels by Pegasos-style subgradient descent.
///
/// Rows are visited in a seed-shuffled order that is fixed once before the
/// first epoch; the step at update t is `1/(strength·t)`. The intercept is
/// updated on margin violations but not regularized.
pub fn fit_linear_svm(
    train: &EncodedDataset,
    strength: f64,
    epochs: usize,
    seed: u64,
) -> Result<SvmModel, BaselineError> {
    require_two_classes(&train.target)?;
    let n = train.n_rows();
    let p = train.n_features();
    let mut w = vec![0.0; p];
    let mut b = 0.0;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    let mut t = 0u64;
    for _ in 0..epochs {
        for &i in &order {
            t += 1;
            let eta = 1.0 / (strength * t as f64);
            let x = &train.features[i];
            let y = if train.target[i] == 1 { 1.0 } else { -1.0 };
            let margin = y * (w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b);
            let shrink = 1.0 - eta * strength;
            for wi in &mut w {
                *wi *= shrink;
            }
            if margin < 1.0 {
                for (wi, &xi) in w.iter_mut().zip(x) {
                    *wi += eta * y * xi;
                }
                b += eta * y;
            }
        }
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(BaselineError::Diverged { lr: 1.0 / strength });
    }
    Ok(SvmModel {
        weights: LinearWeights { w, b },
    })
}

/// k-nearest-neighbor classifier holding the training data verbatim.
#[derive(Debug, Clone)]
pub struct KnnModel {
    rows: Vec<Vec<f64>>,
    labels: Vec<u8>,
    pub k: usize,
}

impl ScoredModel for KnnModel {
    fn score(&self, x: &[f64]) -> f64 {
        // Distance ties resolve toward the lower training-row index, which the
        // stable sort on (distance, index) provides.
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d2: f64 = r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        dist.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
        });
        let positive = dist[..self.k]
            .iter()
            .filter(|&&(_, i)| self.labels[i] == 1)
            .count();
        positive as f64 / self.k as f64
    }
}

/// Builds the KNN model; `score` is the positive fraction among the k nearest.
pub fn fit_knn(train: &EncodedDataset, k: usize) -> Result<KnnModel, BaselineError> {
    let n = train.n_rows();
    if k < 1 || k > n {
        return Err(BaselineError::BadK { k, n });
    }
    Ok(KnnModel {
        rows: train.features.clone(),
        labels: train.target.clone(),
        k,
    })
}

/// Per-class Gaussian statistics for naive Bayes.
#[derive(Debug, Clone)]
pub struct GaussianClassStats {
    pub prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

/// Gaussian naive Bayes scoring by softmax over the two log-posteriors.
#[derive(Debug, Clone)]
pub struct GnbModel {
    pub stats: GaussianClassStats,
}

impl ScoredModel for GnbModel {
    fn score(&self, x: &[f64]) -> f64 {
        let lp = |c: usize| -> f64 {
            let mut acc = self.stats.prior[c].ln();
            for ((&xi, &mu), &v) in x
                .iter()
                .zip(&self.stats.mean[c])
                .zip(&self.stats.var[c])
            {
                acc += -0.5 * (2.0 * std::f64::consts::PI * v).ln()
                    - (xi - mu) * (xi - mu) / (2.0 * v);
            }
            acc
        };
        // softmax positive component, computed stably as a sigmoid of the gap
        sigmoid(lp(1) - lp(0))
    }
}

/// Fits Gaussian naive Bayes with variance smoothing.
///
/// Every per-class variance gets `var_smoothing · max_j Var(x_j)` added, the
/// whole-dataset variance of the widest feature, so constant features never
/// produce a zero-width density.
pub fn fit_gnb(train: &EncodedDataset, var_smoothing: f64) -> Result<GnbModel, BaselineError> {
    require_two_classes(&train.target)?;
    let n = train.n_rows();
    let p = train.n_features();

    // Whole-dataset population variance per feature, for the smoothing floor.
    let mut global_mean = vec![0.0; p];
    for row in &train.features {
        for (m, &v) in global_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut global_mean {
        *m /= n as f64;
    }
    let mut max_var = 0.0f64;
    for j in 0..p {
        let v = train
            .features
            .iter()
            .map(|r| (r[j] - global_mean[j]).powi(2))
            .sum::<f64>()
            / n as f64;
        max_var = max_var.max(v);
    }
    let epsilon = (var_smoothing * max_var).max(1e-300);

    let mut stats = GaussianClassStats {
        prior: [0.0; 2],
        mean: [vec![0.0; p], vec![0.0; p]],
        var: [vec![0.0; p], vec![0.0; p]],
    };
    for c in 0..2usize {
        let members: Vec<&Vec<f64>> = train
            .features
            .iter()
            .zip(&train.target)
            .filter(|(_, &y)| usize::from(y) == c)
            .map(|(r, _)| r)
            .collect();
        let nc = members.len();
        stats.prior[c] = nc as f64 / n as f64;
        for j in 0..p {
            let mu = members.iter().map(|r| r[j]).sum::<f64>() / nc as f64;
            let var = members.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / nc as f64;
            stats.mean[c][j] = mu;
            stats.var[c][j] = var + epsilon;
        }
    }
    Ok(GnbModel { stats })
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
    fn logistic_learns_separable_direction() {
        let train = ds(vec![vec![0.0], vec![1.0], vec![0.0], vec![1.0]], vec![0, 1, 0, 1]);
        let m = fit_logistic(&train, Penalty::None, 0.0, 0.5, 2000, 1e-7).expect("fit");
        assert!(m.score(&[1.0]) > 0.5);
        assert!(m.score(&[0.0]) < 0.5);
    }

    #[test]
    fn logistic_on_zero_information_features_scores_prior() {
        let train = ds(vec![vec![0.0], vec![0.0], vec![0.0], vec![0.0]], vec![0, 1, 0, 1]);
        let m = fit_logistic(&train, Penalty::None, 0.0, 0.5, 2000, 1e-10).expect("fit");
        assert!(m.weights.b.abs() < 1e-8, "balanced labels pull b to 0");
        assert!((m.score(&[0.0]) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn logistic_matches_grid_search_oracle() {
        // Strongly convex (L2) objective, so the minimum is unique and a
        // refined grid over (w0, w1, b) must land on the same weights.
        let train = ds(
            vec![
                vec![0.0, 0.2],
                vec![0.1, 0.9],
                vec![0.8, 0.1],
                vec![0.9, 0.8],
                vec![0.3, 0.4],
                vec![0.7, 0.6],
            ],
            vec![0, 1, 0, 1, 0, 1],
        );
        let strength = 0.1;
        let objective = |w0: f64, w1: f64, b: f64| -> f64 {
            let mut loss = 0.0;
            for (row, &y) in train.features.iter().zip(&train.target) {
                let z = w0 * row[0] + w1 * row[1] + b;
                let s = sigmoid(z).clamp(1e-15, 1.0 - 1e-15);
                loss -= if y == 1 { s.ln() } else { (1.0 - s).ln() };
            }
            loss / train.n_rows() as f64 + strength / 2.0 * (w0 * w0 + w1 * w1)
        };
        // Three refinement levels: span ±6 shrinking to the winner each time.
        let mut center = (0.0, 0.0, 0.0);
        let mut span = 6.0;
        for _ in 0..8 {
            let mut best = (f64::INFINITY, center);
            let steps = 24;
            for i in 0..=steps {
                for j in 0..=steps {
                    for k in 0..=steps {
                        let w0 = center.0 - span + 2.0 * span * i as f64 / steps as f64;
                        let w1 = center.1 - span + 2.0 * span * j as f64 / steps as f64;
                        let b = center.2 - span + 2.0 * span * k as f64 / steps as f64;
                        let v = objective(w0, w1, b);
                        if v < best.0 {
                            best = (v, (w0, w1, b));
                        }
                    }
                }
            }
            center = best.1;
            span /= 6.0;
        }
        let m = fit_logistic(&train, Penalty::L2, strength, 0.5, 200_000, 1e-10).expect("fit");
        assert!(
            (m.weights.w[0] - center.0).abs() < 1e-3
                && (m.weights.w[1] - center.1).abs() < 1e-3
                && (m.weights.b - center.2).abs() < 1e-3,
            "fit {:?} vs grid {:?}",
            m.weights,
            center
        );
    }

    #[test]
    fn logistic_rejects_single_class() {
        let train = ds(vec![vec![0.0], vec![1.0]], vec![1, 1]);
        assert!(matches!(
            fit_logistic(&train, Penalty::None, 0.0, 0.1, 10, 1e-6),
            Err(BaselineError::SingleClass)
        ));
    }

    #[test]
    fn svm_separates_two_points() {
        let train = ds(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0, 1]);
        let m = fit_linear_svm(&train, 0.01, 500, 1).expect("fit");
        assert!(m.weights.raw(&[1.0, 1.0]) > 0.0);
        assert!(m.weights.raw(&[0.0, 0.0]) < 0.0);
    }

    #[test]
    fn svm_with_huge_regularization_collapses_to_half() {
        let train = ds(vec![vec![0.0], vec![1.0], vec![0.3], vec![0.8]], vec![0, 1, 0, 1]);
        let m = fit_linear_svm(&train, 1e12, 50, 1).expect("fit");
        for x in [[0.0], [0.5], [1.0]] {
            assert!((m.score(&x) - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn svm_boundary_matches_grid_oracle() {
        // 1-D, 4 points; hinge objective (λ/2)w² + mean hinge. The grid
        // explores (w, b) and the fitted boundary −b/w must agree to 1e-2.
        let train = ds(vec![vec![0.0], vec![0.25], vec![0.75], vec![1.0]], vec![0, 0, 1, 1]);
        let strength = 0.1;
        let objective = |w: f64, b: f64| -> f64 {
            let mut hinge = 0.0;
            for (row, &yy) in train.features.iter().zip(&train.target) {
                let y = if yy == 1 { 1.0 } else { -1.0 };
                hinge += (1.0 - y * (w * row[0] + b)).max(0.0);
            }
            strength / 2.0 * w * w + hinge / train.n_rows() as f64
        };
        let mut center = (0.0, 0.0);
        let mut span = 8.0;
        for _ in 0..10 {
            let mut best = (f64::INFINITY, center);
            let steps = 80;
            for i in 0..=steps {
                for j in 0..=steps {
                    let w = center.0 - span + 2.0 * span * i as f64 / steps as f64;
                    let b = center.1 - span + 2.0 * span * j as f64 / steps as f64;
                    let v = objective(w, b);
                    if v < best.0 {
                        best = (v, (w, b));
                    }
                }
            }
            center = best.1;
            span /= 8.0;
        }
        let oracle_boundary = -center.1 / center.0;
        let m = fit_linear_svm(&train, strength, 40_000, 3).expect("fit");
        let fitted_boundary = -m.weights.b / m.weights.w[0];
        assert!(
            (fitted_boundary - oracle_boundary).abs() < 1e-2,
            "fitted {fitted_boundary} vs oracle {oracle_boundary}"
        );
    }

    #[test]
    fn knn_memorizes_training_point_at_k1() {
        let train = ds(vec![vec![0.1, 0.2], vec![0.9, 0.8]], vec![0, 1]);
        let m = fit_knn(&train, 1).expect("fit");
        assert_eq!(m.score(&[0.1, 0.2]), 0.0);
        assert_eq!(m.score(&[0.9, 0.8]), 1.0);
    }

    #[test]
    fn knn_with_full_k_scores_positive_rate() {
        let train = ds(
            vec![vec![0.0], vec![0.4], vec![0.6], vec![1.0]],
            vec![0, 1, 1, 1],
        );
        let m = fit_knn(&train, 4).expect("fit");
        for q in [[0.0], [0.5], [2.0]] {
            assert_eq!(m.score(&q), 0.75);
        }
    }

    #[test]
    fn knn_matches_exhaustive_sort_oracle() {
        let train = ds(
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
                vec![0.5, 0.4],
                vec![0.6, 0.5],
            ],
            vec![0, 1, 0, 1, 1, 0],
        );
        let k = 3;
        let m = fit_knn(&train, k).expect("fit");
        let queries = [[0.2, 0.3], [0.5, 0.5], [0.9, 0.1], [0.5, 0.4]];
        for q in queries {
            let mut pairs: Vec<(f64, usize)> = train
                .features
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    (
                        r.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
                        i,
                    )
                })
                .collect();
            pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite").then(a.1.cmp(&b.1)));
            let expect = pairs[..k].iter().filter(|&&(_, i)| train.target[i] == 1).count()
                as f64
                / k as f64;
            assert_eq!(m.score(&q), expect, "query {q:?}");
        }
    }

    #[test]
    fn knn_tie_breaks_toward_lower_index() {
        // Two training rows equidistant from the query; k=1 must pick row 0.
        let train = ds(vec![vec![0.0], vec![2.0]], vec![1, 0]);
        let m = fit_knn(&train, 1).expect("fit");
        assert_eq!(m.score(&[1.0]), 1.0);
    }

    #[test]
    fn knn_rejects_bad_k() {
        let train = ds(vec![vec![0.0]], vec![1]);
        assert!(matches!(fit_knn(&train, 0), Err(BaselineError::BadK { .. })));
        assert!(matches!(fit_knn(&train, 2), Err(BaselineError::BadK { .. })));
    }

    #[test]
    fn gnb_symmetric_classes_score_half_at_origin() {
        let train = ds(
            vec![vec![-1.0], vec![-1.2], vec![1.0], vec![1.2]],
            vec![0, 0, 1, 1],
        );
        let m = fit_gnb(&train, 1e-9).expect("fit");
        assert!((m.score(&[0.0]) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn gnb_scores_near_one_at_positive_mean() {
        let train = ds(
            vec![vec![-5.0], vec![-5.1], vec![5.0], vec![5.1]],
            vec![0, 0, 1, 1],
        );
        let m = fit_gnb(&train, 1e-9).expect("fit");
        assert!(m.score(&[5.05]) > 0.999);
    }

    #[test]
    fn gnb_matches_hand_density_evaluation() {
        // Four rows, one feature; every quantity below follows the printed
        // normal density with population variances and explicit smoothing.
        let train = ds(
            vec![vec![0.0], vec![0.4], vec![0.6], vec![1.0]],
            vec![0, 0, 1, 1],
        );
        let var_smoothing = 1e-9;
        let m = fit_gnb(&train, var_smoothing).expect("fit");
        let x = 0.3;

        // Hand oracle: μ₀=0.2, σ₀²=0.04; μ₁=0.8, σ₁²=0.04; priors ½.
        // Global variance of {0,.4,.6,1} is 0.13 → ε = 1e-9·0.13.
        let eps = 1e-9 * 0.13;
        let dens = |mu: f64, var: f64| {
            1.0 / (2.0 * std::f64::consts::PI * var).sqrt()
                * (-(x - mu) * (x - mu) / (2.0 * var)).exp()
        };
        let p0 = 0.5 * dens(0.2, 0.04 + eps);
        let p1 = 0.5 * dens(0.8, 0.04 + eps);
        let expected = p1 / (p0 + p1);
        assert!((m.score(&[x]) - expected).abs() < 1e-12);
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        let train = ds(
            vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.2, 0.8], vec![0.9, 0.3]],
            vec![0, 1, 0, 1],
        );
        let models: Vec<Box<dyn ScoredModel>> = vec![
            Box::new(fit_logistic(&train, Penalty::L2, 1e-3, 0.1, 500, 1e-6).expect("lr")),
            Box::new(fit_linear_svm(&train, 0.01, 100, 9).expect("svm")),
            Box::new(fit_knn(&train, 3).expect("knn")),
            Box::new(fit_gnb(&train, 1e-9).expect("gnb")),
        ];
        for m in &models {
            for q in [[0.0, 0.0], [1.0, 1.0], [-3.0, 7.0]] {
                let s = m.score(&q);
                assert!((0.0..=1.0).contains(&s), "score {s} out of range");
            }
        }
    }
}
