//! Boosted ensembles: AdaBoost over stumps, log-loss gradient boosting,
//! second-order regularized boosting, and leaf-wise gradient boosting.
//!
//! All four are deterministic given their inputs; the `seed` parameters exist
//! for interface uniformity with the other model families.

use thiserror::Error;

use crate::baselines::sigmoid;
use crate::tabular::EncodedDataset;
use crate::ScoredModel;

#[derive(Debug, Error)]
pub enum BoostError {
    #[error("fitting needs both classes present in the training labels")]
    SingleClass,
    #[error("first stump already has weighted error ≥ 0.5; stumps cannot weak-learn this data")]
    NotWeakLearnable,
}

fn require_two_classes(target: &[u8]) -> Result<(), BoostError> {
    let pos = target.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == target.len() {
        return Err(BoostError::SingleClass);
    }
    Ok(())
}

/// A depth-1 weak learner: predicts `polarity` on `x[feature] ≤ threshold`,
/// `−polarity` otherwise (labels in ±1).
#[derive(Debug, Clone, PartialEq)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
}

impl Stump {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let side = if x[self.feature] <= self.threshold {
            1.0
        } else {
            -1.0
        };
        f64::from(self.polarity) * side
    }
}

/// AdaBoost ensemble: stumps, their stage weights, and fit-time diagnostics.
#[derive(Debug, Clone)]
pub struct StumpEnsemble {
    pub stumps: Vec<Stump>,
    pub alphas: Vec<f64>,
    /// Weighted error of each accepted round's stump.
    pub round_errors: Vec<f64>,
    /// Sample weights entering each round (index 0 = uniform start).
    pub weight_history: Vec<Vec<f64>>,
}

impl ScoredModel for StumpEnsemble {
    fn score(&self, x: &[f64]) -> f64 {
        let margin: f64 = self
            .stumps
            .iter()
            .zip(&self.alphas)
            .map(|(s, a)| a * s.predict(x))
            .sum();
        sigmoid(margin)
    }
}

/// Finds the stump with minimal weighted misclassification error over every
/// (feature, threshold, polarity) candidate.
///
/// Ties resolve toward the lower feature index, then the lower threshold,
/// then polarity `+1`.
fn best_weighted_stump(
    features: &[Vec<f64>],
    target: &[u8],
    weights: &[f64],
) -> Option<(Stump, f64)> {
    let p = features[0].len();
    let total_pos: f64 = weights
        .iter()
        .zip(target)
        .filter(|(_, &y)| y == 1)
        .map(|(w, _)| *w)
        .sum();
    let mut best: Option<(f64, Stump)> = None;
    for j in 0..p {
        let mut vals: Vec<(f64, f64, u8)> = features
            .iter()
            .zip(weights)
            .zip(target)
            .map(|((row, &w), &y)| (row[j], w, y))
            .collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
        let mut left_pos = 0.0;
        let mut left_all = 0.0;
        let mut idx = 0;
        while idx < vals.len() {
            let v = vals[idx].0;
            while idx < vals.len() && vals[idx].0 == v {
                left_all += vals[idx].1;
                if vals[idx].2 == 1 {
                    left_pos += vals[idx].1;
                }
                idx += 1;
            }
            if idx == vals.len() {
                break;
            }
            let threshold = (v + vals[idx].0) / 2.0;
            // Polarity +1 predicts positive on the left, so it misses the
            // negatives on the left and the positives on the right.
            let err_pos = (left_all - left_pos) + (total_pos - left_pos);
            for (polarity, err) in [(1i8, err_pos), (-1i8, 1.0 - err_pos)] {
                let better = match &best {
                    None => true,
                    Some((b, _)) => err < *b,
                };
                if better {
                    best = Some((
                        err,
                        Stump {
                            feature: j,
                            threshold,
                            polarity,
                        },
                    ));
                }
            }
        }
    }
    best.map(|(eps, stump)| (stump, eps))
}

/// Fits AdaBoost with depth-1 error-minimizing stumps.
///
/// Stage weight is `α = ½·ln((1−ε)/ε)` with ε clamped to 1e-10; weights
/// update multiplicatively by `exp(−α·y·h(x))` and renormalize each round.
/// Training stops early when a round's ε reaches 0.5 (that stump is
/// discarded) or collapses to the clamp (that stump is kept).
pub fn fit_adaboost(
    train: &EncodedDataset,
    n_rounds: usize,
    _seed: u64,
) -> Result<StumpEnsemble, BoostError> {
    require_two_classes(&train.target)?;
    let n = train.n_rows();
    let mut weights = vec![1.0 / n as f64; n];
    let mut ensemble = StumpEnsemble {
        stumps: Vec::new(),
        alphas: Vec::new(),
        round_errors: Vec::new(),
        weight_history: vec![weights.clone()],
    };
    const EPS_CLAMP: f64 = 1e-10;
    for round in 0..n_rounds {
        let Some((stump, eps)) = best_weighted_stump(&train.features, &train.target, &weights)
        else {
            break; // no distinct feature values anywhere
        };
        if eps >= 0.5 {
            if round == 0 {
                return Err(BoostError::NotWeakLearnable);
            }
            break;
        }
        let eps_c = eps.max(EPS_CLAMP);
        let alpha = 0.5 * ((1.0 - eps_c) / eps_c).ln();
        ensemble.stumps.push(stump);
        ensemble.alphas.push(alpha);
        ensemble.round_errors.push(eps);
        if eps <= EPS_CLAMP {
            break; // perfect stump; further rounds would repeat it
        }
        let stump = ensemble.stumps.last().expect("just pushed");
        let mut sum = 0.0;
        for (i, w) in weights.iter_mut().enumerate() {
            let y = if train.target[i] == 1 { 1.0 } else { -1.0 };
            *w *= (-alpha * y * stump.predict(&train.features[i])).exp();
            sum += *w;
        }
        for w in &mut weights {
            *w /= sum;
        }
        ensemble.weight_history.push(weights.clone());
    }
    Ok(ensemble)
}

/// A regression-tree node used inside boosted stages.
#[derive(Debug, Clone, PartialEq)]
pub enum RegNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<RegNode>,
        right: Box<RegNode>,
    },
    Leaf {
        value: f64,
    },
}

impl RegNode {
    pub fn value_for(&self, x: &[f64]) -> f64 {
        match self {
            RegNode::Leaf { value } => *value,
            RegNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.value_for(x)
                } else {
                    right.value_for(x)
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            RegNode::Leaf { .. } => 1,
            RegNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

/// Additive model over regression trees; the score is
/// `sigmoid(F₀ + η·Σ stage(x))`.
#[derive(Debug, Clone)]
pub struct BoostedTrees {
    pub initial_score: f64,
    pub stages: Vec<RegNode>,
    pub learning_rate: f64,
}

impl BoostedTrees {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.initial_score
            + self.learning_rate
                * self
                    .stages
                    .iter()
                    .map(|t| t.value_for(x))
                    .sum::<f64>()
    }
}

impl ScoredModel for BoostedTrees {
    fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_score(x))
    }
}

fn log_odds(target: &[u8]) -> f64 {
    let pos = target.iter().filter(|&&y| y == 1).count() as f64;
    let p = pos / target.len() as f64;
    (p / (1.0 - p)).ln()
}

/// Best variance-reduction (SSE-decrease) split for a residual vector.
fn best_sse_split(
    features: &[Vec<f64>],
    residuals: &[f64],
    rows: &[usize],
) -> Option<(usize, f64, f64)> {
    let n = rows.len() as f64;
    let sum: f64 = rows.iter().map(|&i| residuals[i]).sum();
    let sum2: f64 = rows.iter().map(|&i| residuals[i] * residuals[i]).sum();
    let parent_sse = sum2 - sum * sum / n;
    if parent_sse <= 1e-18 {
        return None; // constant residuals; nothing to fit
    }
    let p = features[0].len();
    let mut best: Option<(f64, usize, f64)> = None;
    for j in 0..p {
        let mut vals: Vec<(f64, f64)> = rows
            .iter()
            .map(|&i| (features[i][j], residuals[i]))
            .collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
        let mut ln = 0.0;
        let mut lsum = 0.0;
        let mut lsum2 = 0.0;
        let mut idx = 0;
        while idx < vals.len() {
            let v = vals[idx].0;
            while idx < vals.len() && vals[idx].0 == v {
                ln += 1.0;
                lsum += vals[idx].1;
                lsum2 += vals[idx].1 * vals[idx].1;
                idx += 1;
            }
            if idx == vals.len() {
                break;
            }
            let threshold = (v + vals[idx].0) / 2.0;
            let rn = n - ln;
            let rsum = sum - lsum;
            let rsum2 = sum2 - lsum2;
            let sse = (lsum2 - lsum * lsum / ln) + (rsum2 - rsum * rsum / rn);
            let decrease = parent_sse - sse;
            let better = match best {
                None => true,
                Some((bd, bf, bt)) => {
                    decrease > bd
                        || (decrease == bd && (j < bf || (j == bf && threshold < bt)))
                }
            };
            if better {
                best = Some((decrease, j, threshold));
            }
        }
    }
    best.map(|(d, f, t)| (f, t, d))
}

fn build_residual_tree(
    features: &[Vec<f64>],
    residuals: &[f64],
    hessians: &[f64],
    rows: &[usize],
    depth_left: usize,
    clamp: f64,
) -> RegNode {
    let newton_leaf = |rows: &[usize]| -> RegNode {
        let num: f64 = rows.iter().map(|&i| residuals[i]).sum();
        let den: f64 = rows.iter().map(|&i| hessians[i]).sum();
        let value = if den > 0.0 {
            (num / den).clamp(-clamp, clamp)
        } else if num == 0.0 {
            0.0
        } else {
            clamp.copysign(num)
        };
        RegNode::Leaf { value }
    };
    if depth_left == 0 || rows.len() < 2 {
        return newton_leaf(rows);
    }
    let Some((feature, threshold, _)) = best_sse_split(features, residuals, rows) else {
        return newton_leaf(rows);
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&i| features[i][feature] <= threshold);
    RegNode::Split {
        feature,
        threshold,
        left: Box::new(build_residual_tree(
            features, residuals, hessians, &left_rows, depth_left - 1, clamp,
        )),
        right: Box::new(build_residual_tree(
            features, residuals, hessians, &right_rows, depth_left - 1, clamp,
        )),
    }
}

/// Log-loss gradient boosting with Newton leaf values.
///
/// Starts from the base-rate log-odds; each stage fits a variance-reduction
/// regression tree to the residuals `y − sigmoid(F)` and assigns leaf values
/// `Σr / Σ s(1−s)` clamped to ±4.
pub fn fit_gradient_boosting(
    train: &EncodedDataset,
    n_stages: usize,
    learning_rate: f64,
    max_depth: usize,
    _seed: u64,
) -> Result<BoostedTrees, BoostError> {
    require_two_classes(&train.target)?;
    let n = train.n_rows();
    let f0 = log_odds(&train.target);
    let mut raw = vec![f0; n];
    let mut model = BoostedTrees {
        initial_score: f0,
        stages: Vec::with_capacity(n_stages),
        learning_rate,
    };
    let rows: Vec<usize> = (0..n).collect();
    for _ in 0..n_stages {
        let mut residuals = vec![0.0; n];
        let mut hessians = vec![0.0; n];
        for i in 0..n {
            let s = sigmoid(raw[i]);
            residuals[i] = f64::from(train.target[i]) - s;
            hessians[i] = s * (1.0 - s);
        }
        let tree = build_residual_tree(
            &train.features,
            &residuals,
            &hessians,
            &rows,
            max_depth,
            4.0,
        );
        for i in 0..n {
            raw[i] += learning_rate * tree.value_for(&train.features[i]);
        }
        model.stages.push(tree);
    }
    Ok(model)
}

/// Soft-thresholds a gradient sum by the L1 leaf penalty.
fn shrink_g(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

struct GainContext<'a> {
    features: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    lambda: f64,
    gamma: f64,
    alpha: f64,
}

impl<'a> GainContext<'a> {
    fn leaf_term(&self, g: f64, h: f64) -> f64 {
        let gs = shrink_g(g, self.alpha);
        gs * gs / (h + self.lambda)
    }

    fn leaf_weight(&self, g: f64, h: f64) -> f64 {
        -shrink_g(g, self.alpha) / (h + self.lambda)
    }

    /// Best split of `rows` by the second-order gain
    /// `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ`.
    fn best_split(&self, rows: &[usize]) -> Option<(usize, f64, f64)> {
        let g_total: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h_total: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let parent_term = self.leaf_term(g_total, h_total);
        let p = self.features[0].len();
        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..p {
            let mut vals: Vec<(f64, f64, f64)> = rows
                .iter()
                .map(|&i| (self.features[i][j], self.grad[i], self.hess[i]))
                .collect();
            vals.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            let mut gl = 0.0;
            let mut hl = 0.0;
            let mut idx = 0;
            while idx < vals.len() {
                let v = vals[idx].0;
                while idx < vals.len() && vals[idx].0 == v {
                    gl += vals[idx].1;
                    hl += vals[idx].2;
                    idx += 1;
                }
                if idx == vals.len() {
                    break;
                }
                let threshold = (v + vals[idx].0) / 2.0;
                let gain = 0.5
                    * (self.leaf_term(gl, hl)
                        + self.leaf_term(g_total - gl, h_total - hl)
                        - parent_term)
                    - self.gamma;
                let better = match best {
                    None => true,
                    Some((bd, bf, bt)) => {
                        gain > bd || (gain == bd && (j < bf || (j == bf && threshold < bt)))
                    }
                };
                if better {
                    best = Some((gain, j, threshold));
                }
            }
        }
        best.filter(|&(gain, _, _)| gain > 0.0)
            .map(|(gain, f, t)| (f, t, gain))
    }

    fn build_levelwise(&self, rows: &[usize], depth_left: usize) -> RegNode {
        let leaf = |rows: &[usize]| -> RegNode {
            let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
            let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
            RegNode::Leaf {
                value: self.leaf_weight(g, h),
            }
        };
        if depth_left == 0 || rows.len() < 2 {
            return leaf(rows);
        }
        let Some((feature, threshold, _)) = self.best_split(rows) else {
            return leaf(rows);
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.features[i][feature] <= threshold);
        RegNode::Split {
            feature,
            threshold,
            left: Box::new(self.build_levelwise(&left_rows, depth_left - 1)),
            right: Box::new(self.build_levelwise(&right_rows, depth_left - 1)),
        }
    }
}

/// Second-order boosting with L2 leaf regularization and split penalty.
///
/// Per round the gradients are `g = s − y`, `h = s(1−s)`; splits happen only
/// on positive gain and leaves take weight `−G/(H+λ)` (optionally with L1
/// soft-thresholding `alpha` on G).
pub fn fit_xgb_style(
    train: &EncodedDataset,
    n_rounds: usize,
    learning_rate: f64,
    max_depth: usize,
    lambda: f64,
    gamma: f64,
    alpha: f64,
    _seed: u64,
) -> Result<BoostedTrees, BoostError> {
    require_two_classes(&train.target)?;
    let n = train.n_rows();
    let f0 = log_odds(&train.target);
    let mut raw = vec![f0; n];
    let mut model = BoostedTrees {
        initial_score: f0,
        stages: Vec::with_capacity(n_rounds),
        learning_rate,
    };
    let rows: Vec<usize> = (0..n).collect();
    for _ in 0..n_rounds {
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for i in 0..n {
            let s = sigmoid(raw[i]);
            grad[i] = s - f64::from(train.target[i]);
            hess[i] = s * (1.0 - s);
        }
        let ctx = GainContext {
            features: &train.features,
            grad: &grad,
            hess: &hess,
            lambda,
            gamma,
            alpha,
        };
        let tree = ctx.build_levelwise(&rows, max_depth);
        for i in 0..n {
            raw[i] += learning_rate * tree.value_for(&train.features[i]);
        }
        model.stages.push(tree);
    }
    Ok(model)
}

/// One growable leaf in the best-first arena.
struct FrontierLeaf {
    rows: Vec<usize>,
    best: Option<(usize, f64, f64)>,
    children: Option<(usize, usize)>,
    split: Option<(usize, f64)>,
}

/// Leaf-wise (best-first) boosting sharing the second-order gain machinery.
///
/// Each round grows one tree by repeatedly splitting the frontier leaf with
/// the globally largest positive gain until `max_leaves` is reached. Returns
/// the model together with the per-feature totals of realized split gains,
/// which back the gain-importance feature selector.
pub fn fit_leafwise_gbdt_with_importance(
    train: &EncodedDataset,
    n_rounds: usize,
    learning_rate: f64,
    max_leaves: usize,
    _seed: u64,
) -> Result<(BoostedTrees, Vec<f64>), BoostError> {
    require_two_classes(&train.target)?;
    let n = train.n_rows();
    let p = train.n_features();
    let lambda = 1.0;
    let gamma = 0.0;
    let f0 = log_odds(&train.target);
    let mut raw = vec![f0; n];
    let mut model = BoostedTrees {
        initial_score: f0,
        stages: Vec::with_capacity(n_rounds),
        learning_rate,
    };
    let mut gain_totals = vec![0.0; p];
    for _ in 0..n_rounds {
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for i in 0..n {
            let s = sigmoid(raw[i]);
            grad[i] = s - f64::from(train.target[i]);
            hess[i] = s * (1.0 - s);
        }
        let ctx = GainContext {
            features: &train.features,
            grad: &grad,
            hess: &hess,
            lambda,
            gamma,
            alpha: 0.0,
        };
        let mut arena: Vec<FrontierLeaf> = vec![FrontierLeaf {
            rows: (0..n).collect(),
            best: ctx.best_split(&(0..n).collect::<Vec<_>>()),
            children: None,
            split: None,
        }];
        let mut leaf_count = 1;
        while leaf_count < max_leaves {
            // Globally best splittable leaf; ties go to the earliest-created.
            let mut pick: Option<(f64, usize)> = None;
            for (idx, leaf) in arena.iter().enumerate() {
                if leaf.children.is_some() {
                    continue;
                }
                if let Some((_, _, gain)) = leaf.best {
                    let better = match pick {
                        None => true,
                        Some((bg, _)) => gain > bg,
                    };
                    if better {
                        pick = Some((gain, idx));
                    }
                }
            }
            let Some((gain, idx)) = pick else { break };
            let (feature, threshold, _) = arena[idx].best.expect("picked leaf has a split");
            gain_totals[feature] += gain;
            let rows = std::mem::take(&mut arena[idx].rows);
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .partition(|&&i| train.features[i][feature] <= threshold);
            let left = FrontierLeaf {
                best: ctx.best_split(&left_rows),
                rows: left_rows,
                children: None,
                split: None,
            };
            let right = FrontierLeaf {
                best: ctx.best_split(&right_rows),
                rows: right_rows,
                children: None,
                split: None,
            };
            let li = arena.len();
            arena.push(left);
            let ri = arena.len();
            arena.push(right);
            arena[idx].children = Some((li, ri));
            arena[idx].split = Some((feature, threshold));
            leaf_count += 1;
        }
        fn materialize(arena: &[FrontierLeaf], idx: usize, ctx: &GainContext) -> RegNode {
            let node = &arena[idx];
            match (node.children, node.split) {
                (Some((li, ri)), Some((feature, threshold))) => RegNode::Split {
                    feature,
                    threshold,
                    left: Box::new(materialize(arena, li, ctx)),
                    right: Box::new(materialize(arena, ri, ctx)),
                },
                _ => {
                    let g: f64 = node.rows.iter().map(|&i| ctx.grad[i]).sum();
                    let h: f64 = node.rows.iter().map(|&i| ctx.hess[i]).sum();
                    RegNode::Leaf {
                        value: ctx.leaf_weight(g, h),
                    }
                }
            }
        }
        let tree = materialize(&arena, 0, &ctx);
        for i in 0..n {
            raw[i] += learning_rate * tree.value_for(&train.features[i]);
        }
        model.stages.push(tree);
    }
    Ok((model, gain_totals))
}

/// Leaf-wise boosting without the importance side channel.
pub fn fit_leafwise_gbdt(
    train: &EncodedDataset,
    n_rounds: usize,
    learning_rate: f64,
    max_leaves: usize,
    seed: u64,
) -> Result<BoostedTrees, BoostError> {
    fit_leafwise_gbdt_with_importance(train, n_rounds, learning_rate, max_leaves, seed)
        .map(|(model, _)| model)
}

/// Mean log-loss of a boosted model on a dataset, for monotonicity checks.
pub fn training_log_loss(model: &BoostedTrees, ds: &EncodedDataset) -> f64 {
    let mut loss = 0.0;
    for (row, &y) in ds.features.iter().zip(&ds.target) {
        let s = model.score(row).clamp(1e-15, 1.0 - 1e-15);
        loss -= if y == 1 { s.ln() } else { (1.0 - s).ln() };
    }
    loss / ds.n_rows() as f64
}
