//! Hybrid conv + residual + LSTM classifier with hand-written forward and
//! backward passes.
//!
//! Pipeline (default shapes): input (10,1) → valid conv k3×64 + ReLU (8,64)
//! → maxpool 2 (4,64) → batch norm → dropout → residual unit [same conv
//! k3×64 + ReLU → batch norm → dropout → add skip] (4,64) → LSTM 100 over
//! the 4 timesteps (sigmoid gates, ReLU candidate and cell-output
//! activation, final hidden state) → dense 50 + ReLU → dense 1 + sigmoid.
//!
//! Training is plain mini-batch SGD on mean binary cross-entropy with the
//! per-epoch learning-rate schedule `lr0 · decay^epoch`. All arithmetic is
//! double precision; every gradient path is covered by the central
//! finite-difference check in the tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rng::{derive_seed, rng_from_seed};
use crate::tabular::{shuffled_indices, EncodedDataset};
use crate::ScoredModel;

/// Batch-norm variance guard. Small enough that train-time output variance
/// matches γ² to well under 1e-6 for any reasonable activation spread.
const BN_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum DnetError {
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("input tensor mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("tensor values must all be finite")]
    NonFiniteInput,
    #[error("training needs both classes present")]
    SingleClass,
    #[error("non-finite loss at epoch {epoch}, batch {batch}; training aborted")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint i/o failed: {0}")]
    CheckpointIo(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

/// Epoch-indexed learning-rate decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub lr0: f64,
    pub decay: f64,
}

impl LrSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.decay.powi(epoch as i32)
    }
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DNetConfig {
    pub input_length: usize,
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
    pub seed: u64,
}

impl Default for DNetConfig {
    fn default() -> Self {
        DNetConfig {
            input_length: 10,
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
            seed: 0,
        }
    }
}

impl DNetConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            lr0: self.lr0,
            decay: self.decay,
        }
    }

    /// Length after the valid-padding convolution.
    pub fn conv_out_len(&self) -> usize {
        self.input_length + 1 - self.kernel
    }

    /// Length after max pooling; also the number of LSTM timesteps.
    pub fn pool_out_len(&self) -> usize {
        self.conv_out_len() / self.pool
    }

    fn validate(&self) -> Result<(), DnetError> {
        let bad = |msg: String| Err(DnetError::BadConfig(msg));
        if self.input_length == 0
            || self.conv_filters == 0
            || self.kernel == 0
            || self.pool == 0
            || self.lstm_units == 0
            || self.dense_units == 0
            || self.batch_size == 0
        {
            return bad("all layer sizes must be at least 1".to_string());
        }
        if self.kernel > self.input_length {
            return bad(format!(
                "kernel {} exceeds input length {}",
                self.kernel, self.input_length
            ));
        }
        if self.pool > self.conv_out_len() {
            return bad(format!(
                "pool {} exceeds post-conv length {}",
                self.pool,
                self.conv_out_len()
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0,1)", self.dropout_rate));
        }
        if !(self.lr0 > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!(
                "learning-rate schedule lr0={} decay={} out of range",
                self.lr0, self.decay
            ));
        }
        Ok(())
    }
}

/// Row-major (batch, length, channels) tensor with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub batch: usize,
    pub length: usize,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl Tensor3 {
    pub fn new(
        batch: usize,
        length: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Tensor3, DnetError> {
        if values.len() != batch * length * channels {
            return Err(DnetError::ShapeMismatch {
                expected: format!("{} values", batch * length * channels),
                found: format!("{} values", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DnetError::NonFiniteInput);
        }
        Ok(Tensor3 {
            batch,
            length,
            channels,
            values,
        })
    }

    /// Stacks feature rows as single-channel sequences.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor3, DnetError> {
        let length = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != length) {
            return Err(DnetError::ShapeMismatch {
                expected: format!("rows of length {length}"),
                found: "ragged rows".to_string(),
            });
        }
        Tensor3::new(
            rows.len(),
            length,
            1,
            rows.iter().flatten().copied().collect(),
        )
    }
}

/// One batch-normalization layer: learned scale/shift plus running stats.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn identity(channels: usize) -> BatchNorm {
        BatchNorm {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }
}

/// Gate-indexed LSTM parameters: input kernels `w*`, recurrent kernels
/// `u*`, biases `b*` for the input (i), forget (f), candidate (g), and
/// output (o) gates.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub wi: Vec<f64>,
    pub wf: Vec<f64>,
    pub wg: Vec<f64>,
    pub wo: Vec<f64>,
    pub ui: Vec<f64>,
    pub uf: Vec<f64>,
    pub ug: Vec<f64>,
    pub uo: Vec<f64>,
    pub bi: Vec<f64>,
    pub bf: Vec<f64>,
    pub bg: Vec<f64>,
    pub bo: Vec<f64>,
}

/// Every learned symbol of the network plus the batch-norm running stats.
#[derive(Debug, Clone, PartialEq)]
pub struct DNetParams {
    pub config: DNetConfig,
    /// Valid conv kernel, layout `[kernel][in=1][filters]`.
    pub conv1_kernel: Vec<f64>,
    pub conv1_bias: Vec<f64>,
    pub bn1: BatchNorm,
    /// Residual same-padding conv kernel, layout `[kernel][filters][filters]`.
    pub res_kernel: Vec<f64>,
    pub res_bias: Vec<f64>,
    pub bn2: BatchNorm,
    pub lstm: LstmParams,
    /// Dense hidden weights, layout `[lstm_units][dense_units]`.
    pub dense1_w: Vec<f64>,
    pub dense1_b: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: f64,
}

fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; u1 shifted into (0,1] so the log is finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn he_normal(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let std = (2.0 / fan_in as f64).sqrt();
    (0..len).map(|_| normal_draw(rng) * std).collect()
}

fn xavier_uniform(rng: &mut ChaCha8Rng, len: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len)
        .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * limit)
        .collect()
}

/// Builds seeded initial parameters: He-normal conv/dense kernels,
/// Xavier-uniform LSTM kernels, zero biases except the forget gate's 1.0,
/// identity batch norms.
pub fn build(config: &DNetConfig) -> Result<DNetParams, DnetError> {
    config.validate()?;
    let c = config.conv_filters;
    let u = config.lstm_units;
    let d = config.dense_units;
    let k = config.kernel;
    let mut rng = rng_from_seed(derive_seed(config.seed, "dnet-init", 0));
    let conv1_kernel = he_normal(&mut rng, k * c, k);
    let res_kernel = he_normal(&mut rng, k * c * c, k * c);
    let lstm = LstmParams {
        wi: xavier_uniform(&mut rng, c * u, c, u),
        wf: xavier_uniform(&mut rng, c * u, c, u),
        wg: xavier_uniform(&mut rng, c * u, c, u),
        wo: xavier_uniform(&mut rng, c * u, c, u),
        ui: xavier_uniform(&mut rng, u * u, u, u),
        uf: xavier_uniform(&mut rng, u * u, u, u),
        ug: xavier_uniform(&mut rng, u * u, u, u),
        uo: xavier_uniform(&mut rng, u * u, u, u),
        bi: vec![0.0; u],
        bf: vec![1.0; u],
        bg: vec![0.0; u],
        bo: vec![0.0; u],
    };
    let dense1_w = he_normal(&mut rng, u * d, u);
    let out_w = he_normal(&mut rng, d, d);
    Ok(DNetParams {
        config: config.clone(),
        conv1_kernel,
        conv1_bias: vec![0.0; c],
        bn1: BatchNorm::identity(c),
        res_kernel,
        res_bias: vec![0.0; c],
        bn2: BatchNorm::identity(c),
        lstm,
        dense1_w,
        dense1_b: vec![0.0; d],
        out_w,
        out_b: 0.0,
    })
}

impl DNetParams {
    /// Trainable groups in the fixed order shared with [`DNetGrads::groups`].
    pub(crate) fn trainable_groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("conv1_kernel", self.conv1_kernel.as_mut_slice()),
            ("conv1_bias", self.conv1_bias.as_mut_slice()),
            ("bn1_gamma", self.bn1.gamma.as_mut_slice()),
            ("bn1_beta", self.bn1.beta.as_mut_slice()),
            ("res_kernel", self.res_kernel.as_mut_slice()),
            ("res_bias", self.res_bias.as_mut_slice()),
            ("bn2_gamma", self.bn2.gamma.as_mut_slice()),
            ("bn2_beta", self.bn2.beta.as_mut_slice()),
            ("lstm_wi", self.lstm.wi.as_mut_slice()),
            ("lstm_wf", self.lstm.wf.as_mut_slice()),
            ("lstm_wg", self.lstm.wg.as_mut_slice()),
            ("lstm_wo", self.lstm.wo.as_mut_slice()),
            ("lstm_ui", self.lstm.ui.as_mut_slice()),
            ("lstm_uf", self.lstm.uf.as_mut_slice()),
            ("lstm_ug", self.lstm.ug.as_mut_slice()),
            ("lstm_uo", self.lstm.uo.as_mut_slice()),
            ("lstm_bi", self.lstm.bi.as_mut_slice()),
            ("lstm_bf", self.lstm.bf.as_mut_slice()),
            ("lstm_bg", self.lstm.bg.as_mut_slice()),
            ("lstm_bo", self.lstm.bo.as_mut_slice()),
            ("dense1_w", self.dense1_w.as_mut_slice()),
            ("dense1_b", self.dense1_b.as_mut_slice()),
            ("out_w", self.out_w.as_mut_slice()),
            ("out_b", std::slice::from_mut(&mut self.out_b)),
        ]
    }

    /// Trainable groups plus running stats — everything a checkpoint holds.
    fn checkpoint_groups(&self) -> Vec<(&'static str, Vec<f64>)> {
        let mut groups: Vec<(&'static str, Vec<f64>)> = vec![
            ("conv1_kernel", self.conv1_kernel.clone()),
            ("conv1_bias", self.conv1_bias.clone()),
            ("bn1_gamma", self.bn1.gamma.clone()),
            ("bn1_beta", self.bn1.beta.clone()),
            ("bn1_running_mean", self.bn1.running_mean.clone()),
            ("bn1_running_var", self.bn1.running_var.clone()),
            ("res_kernel", self.res_kernel.clone()),
            ("res_bias", self.res_bias.clone()),
            ("bn2_gamma", self.bn2.gamma.clone()),
            ("bn2_beta", self.bn2.beta.clone()),
            ("bn2_running_mean", self.bn2.running_mean.clone()),
            ("bn2_running_var", self.bn2.running_var.clone()),
            ("lstm_wi", self.lstm.wi.clone()),
            ("lstm_wf", self.lstm.wf.clone()),
            ("lstm_wg", self.lstm.wg.clone()),
            ("lstm_wo", self.lstm.wo.clone()),
            ("lstm_ui", self.lstm.ui.clone()),
            ("lstm_uf", self.lstm.uf.clone()),
            ("lstm_ug", self.lstm.ug.clone()),
            ("lstm_uo", self.lstm.uo.clone()),
            ("lstm_bi", self.lstm.bi.clone()),
            ("lstm_bf", self.lstm.bf.clone()),
            ("lstm_bg", self.lstm.bg.clone()),
            ("lstm_bo", self.lstm.bo.clone()),
            ("dense1_w", self.dense1_w.clone()),
            ("dense1_b", self.dense1_b.clone()),
            ("out_w", self.out_w.clone()),
        ];
        groups.push(("out_b", vec![self.out_b]));
        groups
    }

    fn checkpoint_slot(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        Some(match name {
            "conv1_kernel" => &mut self.conv1_kernel,
            "conv1_bias" => &mut self.conv1_bias,
            "bn1_gamma" => &mut self.bn1.gamma,
            "bn1_beta" => &mut self.bn1.beta,
            "bn1_running_mean" => &mut self.bn1.running_mean,
            "bn1_running_var" => &mut self.bn1.running_var,
            "res_kernel" => &mut self.res_kernel,
            "res_bias" => &mut self.res_bias,
            "bn2_gamma" => &mut self.bn2.gamma,
            "bn2_beta" => &mut self.bn2.beta,
            "bn2_running_mean" => &mut self.bn2.running_mean,
            "bn2_running_var" => &mut self.bn2.running_var,
            "lstm_wi" => &mut self.lstm.wi,
            "lstm_wf" => &mut self.lstm.wf,
            "lstm_wg" => &mut self.lstm.wg,
            "lstm_wo" => &mut self.lstm.wo,
            "lstm_ui" => &mut self.lstm.ui,
            "lstm_uf" => &mut self.lstm.uf,
            "lstm_ug" => &mut self.lstm.ug,
            "lstm_uo" => &mut self.lstm.uo,
            "lstm_bi" => &mut self.lstm.bi,
            "lstm_bf" => &mut self.lstm.bf,
            "lstm_bg" => &mut self.lstm.bg,
            "lstm_bo" => &mut self.lstm.bo,
            "dense1_w" => &mut self.dense1_w,
            "dense1_b" => &mut self.dense1_b,
            "out_w" => &mut self.out_w,
            _ => return None,
        })
    }
}

/// Gradients of mean binary cross-entropy for every trainable group.
#[derive(Debug, Clone)]
pub struct DNetGrads {
    pub conv1_kernel: Vec<f64>,
    pub conv1_bias: Vec<f64>,
    pub bn1_gamma: Vec<f64>,
    pub bn1_beta: Vec<f64>,
    pub res_kernel: Vec<f64>,
    pub res_bias: Vec<f64>,
    pub bn2_gamma: Vec<f64>,
    pub bn2_beta: Vec<f64>,
    pub lstm_wi: Vec<f64>,
    pub lstm_wf: Vec<f64>,
    pub lstm_wg: Vec<f64>,
    pub lstm_wo: Vec<f64>,
    pub lstm_ui: Vec<f64>,
    pub lstm_uf: Vec<f64>,
    pub lstm_ug: Vec<f64>,
    pub lstm_uo: Vec<f64>,
    pub lstm_bi: Vec<f64>,
    pub lstm_bf: Vec<f64>,
    pub lstm_bg: Vec<f64>,
    pub lstm_bo: Vec<f64>,
    pub dense1_w: Vec<f64>,
    pub dense1_b: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: f64,
}

impl DNetGrads {
    fn zeros(p: &DNetParams) -> DNetGrads {
        DNetGrads {
            conv1_kernel: vec![0.0; p.conv1_kernel.len()],
            conv1_bias: vec![0.0; p.conv1_bias.len()],
            bn1_gamma: vec![0.0; p.bn1.gamma.len()],
            bn1_beta: vec![0.0; p.bn1.beta.len()],
            res_kernel: vec![0.0; p.res_kernel.len()],
            res_bias: vec![0.0; p.res_bias.len()],
            bn2_gamma: vec![0.0; p.bn2.gamma.len()],
            bn2_beta: vec![0.0; p.bn2.beta.len()],
            lstm_wi: vec![0.0; p.lstm.wi.len()],
            lstm_wf: vec![0.0; p.lstm.wf.len()],
            lstm_wg: vec![0.0; p.lstm.wg.len()],
            lstm_wo: vec![0.0; p.lstm.wo.len()],
            lstm_ui: vec![0.0; p.lstm.ui.len()],
            lstm_uf: vec![0.0; p.lstm.uf.len()],
            lstm_ug: vec![0.0; p.lstm.ug.len()],
            lstm_uo: vec![0.0; p.lstm.uo.len()],
            lstm_bi: vec![0.0; p.lstm.bi.len()],
            lstm_bf: vec![0.0; p.lstm.bf.len()],
            lstm_bg: vec![0.0; p.lstm.bg.len()],
            lstm_bo: vec![0.0; p.lstm.bo.len()],
            dense1_w: vec![0.0; p.dense1_w.len()],
            dense1_b: vec![0.0; p.dense1_b.len()],
            out_w: vec![0.0; p.out_w.len()],
            out_b: 0.0,
        }
    }

    /// Same order as [`DNetParams::trainable_groups_mut`].
    pub(crate) fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("conv1_kernel", self.conv1_kernel.as_slice()),
            ("conv1_bias", self.conv1_bias.as_slice()),
            ("bn1_gamma", self.bn1_gamma.as_slice()),
            ("bn1_beta", self.bn1_beta.as_slice()),
            ("res_kernel", self.res_kernel.as_slice()),
            ("res_bias", self.res_bias.as_slice()),
            ("bn2_gamma", self.bn2_gamma.as_slice()),
            ("bn2_beta", self.bn2_beta.as_slice()),
            ("lstm_wi", self.lstm_wi.as_slice()),
            ("lstm_wf", self.lstm_wf.as_slice()),
            ("lstm_wg", self.lstm_wg.as_slice()),
            ("lstm_wo", self.lstm_wo.as_slice()),
            ("lstm_ui", self.lstm_ui.as_slice()),
            ("lstm_uf", self.lstm_uf.as_slice()),
            ("lstm_ug", self.lstm_ug.as_slice()),
            ("lstm_uo", self.lstm_uo.as_slice()),
            ("lstm_bi", self.lstm_bi.as_slice()),
            ("lstm_bf", self.lstm_bf.as_slice()),
            ("lstm_bg", self.lstm_bg.as_slice()),
            ("lstm_bo", self.lstm_bo.as_slice()),
            ("dense1_w", self.dense1_w.as_slice()),
            ("dense1_b", self.dense1_b.as_slice()),
            ("out_w", self.out_w.as_slice()),
            ("out_b", std::slice::from_ref(&self.out_b)),
        ]
    }
}

/// Whether a forward pass uses batch statistics and dropout (`Train`) or
/// running statistics and no dropout (`Infer`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

fn sigmoid(z: f64) -> f64 {
    crate::baselines::sigmoid(z)
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn relu_gate(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Intermediates retained by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    batch: usize,
    input: Vec<f64>,
    conv1_pre: Vec<f64>,
    pool_arg: Vec<usize>,
    bn1_mean: Vec<f64>,
    bn1_var: Vec<f64>,
    bn1_xhat: Vec<f64>,
    drop1_mask: Vec<f64>,
    drop1_out: Vec<f64>,
    res_pre: Vec<f64>,
    bn2_mean: Vec<f64>,
    bn2_var: Vec<f64>,
    bn2_xhat: Vec<f64>,
    drop2_mask: Vec<f64>,
    added: Vec<f64>,
    lstm_i: Vec<f64>,
    lstm_f: Vec<f64>,
    lstm_g: Vec<f64>,
    lstm_ag: Vec<f64>,
    lstm_o: Vec<f64>,
    lstm_c: Vec<f64>,
    lstm_hc: Vec<f64>,
    lstm_h: Vec<f64>,
    dense1_pre: Vec<f64>,
    dense1_act: Vec<f64>,
    scores: Vec<f64>,
}

impl ForwardCache {
    /// Per-channel batch statistics of the two norms, for running updates.
    pub fn batch_stats(&self) -> [(&[f64], &[f64]); 2] {
        [
            (&self.bn1_mean, &self.bn1_var),
            (&self.bn2_mean, &self.bn2_var),
        ]
    }
}

fn bn_batch_stats(x: &[f64], batch: usize, len: usize, channels: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (batch * len) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for pos in 0..batch * len {
        for c in 0..channels {
            mean[c] += x[pos * channels + c];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for pos in 0..batch * len {
        for c in 0..channels {
            let d = x[pos * channels + c] - mean[c];
            var[c] += d * d;
        }
    }
    for v in &mut var {
        *v /= n;
    }
    (mean, var)
}

fn bn_apply(
    x: &[f64],
    channels: usize,
    mean: &[f64],
    var: &[f64],
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for (pos, chunk) in x.chunks(channels).enumerate() {
        for (c, &v) in chunk.iter().enumerate() {
            let h = (v - mean[c]) / (var[c] + BN_EPS).sqrt();
            xhat[pos * channels + c] = h;
            y[pos * channels + c] = gamma[c] * h + beta[c];
        }
    }
    (xhat, y)
}

fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 - rate;
    (0..len)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                1.0 / keep
            }
        })
        .collect()
}

/// Runs the full pipeline on a batch. Train mode draws dropout masks from
/// `rng` and normalizes with batch statistics; infer mode is deterministic
/// and uses running statistics. No state is mutated — running-stat updates
/// happen explicitly in the training loop.
pub fn forward(
    params: &DNetParams,
    batch: &Tensor3,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<f64>, ForwardCache), DnetError> {
    let cfg = &params.config;
    if batch.length != cfg.input_length || batch.channels != 1 {
        return Err(DnetError::ShapeMismatch {
            expected: format!("({}, 1) sequences", cfg.input_length),
            found: format!("({}, {})", batch.length, batch.channels),
        });
    }
    let b = batch.batch;
    let c = cfg.conv_filters;
    let k = cfg.kernel;
    let l1 = cfg.conv_out_len();
    let l2 = cfg.pool_out_len();
    let u = cfg.lstm_units;
    let d = cfg.dense_units;

    // Valid conv over the single input channel, then ReLU.
    let mut conv1_pre = vec![0.0; b * l1 * c];
    for bi in 0..b {
        for t in 0..l1 {
            for f in 0..c {
                let mut acc = params.conv1_bias[f];
                for kk in 0..k {
                    acc += batch.values[bi * cfg.input_length + t + kk]
                        * params.conv1_kernel[kk * c + f];
                }
                conv1_pre[(bi * l1 + t) * c + f] = acc;
            }
        }
    }

    // Max pool over non-overlapping windows; first max wins ties.
    let mut pool_out = vec![0.0; b * l2 * c];
    let mut pool_arg = vec![0usize; b * l2 * c];
    for bi in 0..b {
        for t2 in 0..l2 {
            for f in 0..c {
                let mut best_t = t2 * cfg.pool;
                let mut best = relu(conv1_pre[(bi * l1 + best_t) * c + f]);
                for dt in 1..cfg.pool {
                    let t = t2 * cfg.pool + dt;
                    let v = relu(conv1_pre[(bi * l1 + t) * c + f]);
                    if v > best {
                        best = v;
                        best_t = t;
                    }
                }
                pool_out[(bi * l2 + t2) * c + f] = best;
                pool_arg[(bi * l2 + t2) * c + f] = best_t;
            }
        }
    }

    // First batch norm.
    let (bn1_mean, bn1_var) = match mode {
        Mode::Train => bn_batch_stats(&pool_out, b, l2, c),
        Mode::Infer => (params.bn1.running_mean.clone(), params.bn1.running_var.clone()),
    };
    let (bn1_xhat, bn1_out) = bn_apply(
        &pool_out,
        c,
        &bn1_mean,
        &bn1_var,
        &params.bn1.gamma,
        &params.bn1.beta,
    );

    // First dropout (identity in infer mode).
    let drop1_mask = match mode {
        Mode::Train => dropout_mask(bn1_out.len(), cfg.dropout_rate, rng),
        Mode::Infer => vec![1.0; bn1_out.len()],
    };
    let drop1_out: Vec<f64> = bn1_out
        .iter()
        .zip(&drop1_mask)
        .map(|(v, m)| v * m)
        .collect();

    // Residual unit: same-padding conv + ReLU, batch norm, dropout, skip add.
    let pad_left = (k - 1) / 2;
    let mut res_pre = vec![0.0; b * l2 * c];
    for bi in 0..b {
        for t in 0..l2 {
            for f in 0..c {
                let mut acc = params.res_bias[f];
                for kk in 0..k {
                    let ti = t + kk;
                    if ti < pad_left || ti - pad_left >= l2 {
                        continue;
                    }
                    let ti = ti - pad_left;
                    for ci in 0..c {
                        acc += drop1_out[(bi * l2 + ti) * c + ci]
                            * params.res_kernel[(kk * c + ci) * c + f];
                    }
                }
                res_pre[(bi * l2 + t) * c + f] = acc;
            }
        }
    }
    let res_act: Vec<f64> = res_pre.iter().map(|&v| relu(v)).collect();
    let (bn2_mean, bn2_var) = match mode {
        Mode::Train => bn_batch_stats(&res_act, b, l2, c),
        Mode::Infer => (params.bn2.running_mean.clone(), params.bn2.running_var.clone()),
    };
    let (bn2_xhat, bn2_out) = bn_apply(
        &res_act,
        c,
        &bn2_mean,
        &bn2_var,
        &params.bn2.gamma,
        &params.bn2.beta,
    );
    let drop2_mask = match mode {
        Mode::Train => dropout_mask(bn2_out.len(), cfg.dropout_rate, rng),
        Mode::Infer => vec![1.0; bn2_out.len()],
    };
    let added: Vec<f64> = bn2_out
        .iter()
        .zip(&drop2_mask)
        .zip(&drop1_out)
        .map(|((v, m), skip)| v * m + skip)
        .collect();

    // LSTM over the l2 timesteps; ReLU candidate and cell-output activation.
    let t_steps = l2;
    let step = |arr: &[f64], t: usize, bi: usize, uu: usize| arr[(t * b + bi) * u + uu];
    let mut lstm_i = vec![0.0; t_steps * b * u];
    let mut lstm_f = vec![0.0; t_steps * b * u];
    let mut lstm_g = vec![0.0; t_steps * b * u];
    let mut lstm_ag = vec![0.0; t_steps * b * u];
    let mut lstm_o = vec![0.0; t_steps * b * u];
    let mut lstm_c = vec![0.0; t_steps * b * u];
    let mut lstm_hc = vec![0.0; t_steps * b * u];
    let mut lstm_h = vec![0.0; t_steps * b * u];
    for t in 0..t_steps {
        for bi in 0..b {
            let x_off = (bi * l2 + t) * c;
            let mut a = [vec![0.0; u], vec![0.0; u], vec![0.0; u], vec![0.0; u]];
            let kernels = [
                (&params.lstm.wi, &params.lstm.ui, &params.lstm.bi),
                (&params.lstm.wf, &params.lstm.uf, &params.lstm.bf),
                (&params.lstm.wg, &params.lstm.ug, &params.lstm.bg),
                (&params.lstm.wo, &params.lstm.uo, &params.lstm.bo),
            ];
            for (gate, (w, uk, bias)) in kernels.iter().enumerate() {
                let acc = &mut a[gate];
                acc.copy_from_slice(bias);
                for ci in 0..c {
                    let x = added[x_off + ci];
                    if x == 0.0 {
                        continue;
                    }
                    let row = &w[ci * u..(ci + 1) * u];
                    for uu in 0..u {
                        acc[uu] += x * row[uu];
                    }
                }
                if t > 0 {
                    for v in 0..u {
                        let h = step(&lstm_h, t - 1, bi, v);
                        if h == 0.0 {
                            continue;
                        }
                        let row = &uk[v * u..(v + 1) * u];
                        for uu in 0..u {
                            acc[uu] += h * row[uu];
                        }
                    }
                }
            }
            for uu in 0..u {
                let off = (t * b + bi) * u + uu;
                let iv = sigmoid(a[0][uu]);
                let fv = sigmoid(a[1][uu]);
                let gv = relu(a[2][uu]);
                let ov = sigmoid(a[3][uu]);
                let c_prev = if t > 0 { step(&lstm_c, t - 1, bi, uu) } else { 0.0 };
                let cv = fv * c_prev + iv * gv;
                let hcv = relu(cv);
                lstm_i[off] = iv;
                lstm_f[off] = fv;
                lstm_g[off] = gv;
                lstm_ag[off] = a[2][uu];
                lstm_o[off] = ov;
                lstm_c[off] = cv;
                lstm_hc[off] = hcv;
                lstm_h[off] = ov * hcv;
            }
        }
    }

    // Dense head.
    let mut dense1_pre = vec![0.0; b * d];
    for bi in 0..b {
        for dd in 0..d {
            dense1_pre[bi * d + dd] = params.dense1_b[dd];
        }
        for uu in 0..u {
            let h = step(&lstm_h, t_steps - 1, bi, uu);
            if h == 0.0 {
                continue;
            }
            let row = &params.dense1_w[uu * d..(uu + 1) * d];
            for dd in 0..d {
                dense1_pre[bi * d + dd] += h * row[dd];
            }
        }
    }
    let dense1_act: Vec<f64> = dense1_pre.iter().map(|&v| relu(v)).collect();
    let mut scores = vec![0.0; b];
    for bi in 0..b {
        let mut z = params.out_b;
        for dd in 0..d {
            z += dense1_act[bi * d + dd] * params.out_w[dd];
        }
        scores[bi] = sigmoid(z);
    }

    let cache = ForwardCache {
        mode,
        batch: b,
        input: batch.values.clone(),
        conv1_pre,
        pool_arg,
        bn1_mean,
        bn1_var,
        bn1_xhat,
        drop1_mask,
        drop1_out,
        res_pre,
        bn2_mean,
        bn2_var,
        bn2_xhat,
        drop2_mask,
        added,
        lstm_i,
        lstm_f,
        lstm_g,
        lstm_ag,
        lstm_o,
        lstm_c,
        lstm_hc,
        lstm_h,
        dense1_pre,
        dense1_act,
        scores: scores.clone(),
    };
    Ok((scores, cache))
}

fn bn_backward(
    dy: &[f64],
    xhat: &[f64],
    var: &[f64],
    gamma: &[f64],
    channels: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let positions = dy.len() / channels;
    let n = positions as f64;
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    let mut sum_dxhat = vec![0.0; channels];
    let mut sum_dxhat_xhat = vec![0.0; channels];
    for pos in 0..positions {
        for cc in 0..channels {
            let off = pos * channels + cc;
            dgamma[cc] += dy[off] * xhat[off];
            dbeta[cc] += dy[off];
            let dxhat = dy[off] * gamma[cc];
            sum_dxhat[cc] += dxhat;
            sum_dxhat_xhat[cc] += dxhat * xhat[off];
        }
    }
    let mut dx = vec![0.0; dy.len()];
    for pos in 0..positions {
        for cc in 0..channels {
            let off = pos * channels + cc;
            let dxhat = dy[off] * gamma[cc];
            let std = (var[cc] + BN_EPS).sqrt();
            dx[off] = (n * dxhat - sum_dxhat[cc] - xhat[off] * sum_dxhat_xhat[cc]) / (n * std);
        }
    }
    (dx, dgamma, dbeta)
}

/// Reverse-mode pass for mean binary cross-entropy. Requires a cache from a
/// train-mode forward; labels may be fractional (gradients vanish exactly
/// when `labels == scores`).
pub fn backward(params: &DNetParams, cache: &ForwardCache, labels: &[f64]) -> DNetGrads {
    assert_eq!(cache.mode, Mode::Train, "backward needs a train-mode cache");
    assert_eq!(labels.len(), cache.batch, "one label per batch sample");
    let cfg = &params.config;
    let b = cache.batch;
    let c = cfg.conv_filters;
    let k = cfg.kernel;
    let l1 = cfg.conv_out_len();
    let l2 = cfg.pool_out_len();
    let u = cfg.lstm_units;
    let d = cfg.dense_units;
    let t_steps = l2;
    let mut g = DNetGrads::zeros(params);

    // Head: d(mean BCE)/d(logit) = (score − label)/batch.
    let bf = b as f64;
    let mut dact1 = vec![0.0; b * d];
    for bi in 0..b {
        let dlogit = (cache.scores[bi] - labels[bi]) / bf;
        g.out_b += dlogit;
        for dd in 0..d {
            g.out_w[dd] += dlogit * cache.dense1_act[bi * d + dd];
            dact1[bi * d + dd] = dlogit * params.out_w[dd];
        }
    }
    let step = |arr: &[f64], t: usize, bi: usize, uu: usize| arr[(t * b + bi) * u + uu];
    let mut dh = vec![0.0; b * u];
    for bi in 0..b {
        for dd in 0..d {
            let dpre = dact1[bi * d + dd] * relu_gate(cache.dense1_pre[bi * d + dd]);
            g.dense1_b[dd] += dpre;
            for uu in 0..u {
                g.dense1_w[uu * d + dd] += step(&cache.lstm_h, t_steps - 1, bi, uu) * dpre;
                dh[bi * u + uu] += dpre * params.dense1_w[uu * d + dd];
            }
        }
    }

    // Backpropagation through time.
    let mut dadded = vec![0.0; b * l2 * c];
    let mut dc = vec![0.0; b * u];
    for t in (0..t_steps).rev() {
        let mut dh_prev = vec![0.0; b * u];
        for bi in 0..b {
            let x_off = (bi * l2 + t) * c;
            let mut da = [vec![0.0; u], vec![0.0; u], vec![0.0; u], vec![0.0; u]];
            for uu in 0..u {
                let off = (t * b + bi) * u + uu;
                let dh_cur = dh[bi * u + uu];
                let ov = cache.lstm_o[off];
                let hcv = cache.lstm_hc[off];
                let cv = cache.lstm_c[off];
                let da_o = dh_cur * hcv * ov * (1.0 - ov);
                let dc_cur = dc[bi * u + uu] + dh_cur * ov * relu_gate(cv);
                let iv = cache.lstm_i[off];
                let fv = cache.lstm_f[off];
                let gv = cache.lstm_g[off];
                let da_i = dc_cur * gv * iv * (1.0 - iv);
                let da_g = dc_cur * iv * relu_gate(cache.lstm_ag[off]);
                let c_prev = if t > 0 { step(&cache.lstm_c, t - 1, bi, uu) } else { 0.0 };
                let da_f = dc_cur * c_prev * fv * (1.0 - fv);
                dc[bi * u + uu] = dc_cur * fv;
                da[0][uu] = da_i;
                da[1][uu] = da_f;
                da[2][uu] = da_g;
                da[3][uu] = da_o;
            }
            let kernels = [
                (&params.lstm.wi, &params.lstm.ui),
                (&params.lstm.wf, &params.lstm.uf),
                (&params.lstm.wg, &params.lstm.ug),
                (&params.lstm.wo, &params.lstm.uo),
            ];
            let grads = [
                (&mut g.lstm_wi, &mut g.lstm_ui, &mut g.lstm_bi),
                (&mut g.lstm_wf, &mut g.lstm_uf, &mut g.lstm_bf),
                (&mut g.lstm_wg, &mut g.lstm_ug, &mut g.lstm_bg),
                (&mut g.lstm_wo, &mut g.lstm_uo, &mut g.lstm_bo),
            ];
            for (gate, ((w, uk), (dw, du, db))) in
                kernels.iter().zip(grads).enumerate()
            {
                let da_g = &da[gate];
                for uu in 0..u {
                    db[uu] += da_g[uu];
                }
                for ci in 0..c {
                    let x = cache.added[x_off + ci];
                    let wrow = &w[ci * u..(ci + 1) * u];
                    let dwrow = &mut du_slice(dw, ci, u);
                    let mut dx_acc = 0.0;
                    for uu in 0..u {
                        dwrow[uu] += x * da_g[uu];
                        dx_acc += da_g[uu] * wrow[uu];
                    }
                    dadded[x_off + ci] += dx_acc;
                }
                if t > 0 {
                    for v in 0..u {
                        let h_prev = step(&cache.lstm_h, t - 1, bi, v);
                        let urow = &uk[v * u..(v + 1) * u];
                        let durow = &mut du_slice(du, v, u);
                        let mut dh_acc = 0.0;
                        for uu in 0..u {
                            durow[uu] += h_prev * da_g[uu];
                            dh_acc += da_g[uu] * urow[uu];
                        }
                        dh_prev[bi * u + v] += dh_acc;
                    }
                }
            }
        }
        dh = dh_prev;
    }

    // Residual add fans the gradient into both branches.
    let dskip = dadded.clone();
    let dbn2_out: Vec<f64> = dadded
        .iter()
        .zip(&cache.drop2_mask)
        .map(|(dv, m)| dv * m)
        .collect();
    let (dres_act, dgamma2, dbeta2) = bn_backward(
        &dbn2_out,
        &cache.bn2_xhat,
        &cache.bn2_var,
        &params.bn2.gamma,
        c,
    );
    g.bn2_gamma = dgamma2;
    g.bn2_beta = dbeta2;
    let dres_pre: Vec<f64> = dres_act
        .iter()
        .zip(&cache.res_pre)
        .map(|(dv, &pre)| dv * relu_gate(pre))
        .collect();

    // Same-padding conv backward: parameters and input.
    let pad_left = (k - 1) / 2;
    let mut ddrop1 = dskip;
    for bi in 0..b {
        for t in 0..l2 {
            for f in 0..c {
                let dpre = dres_pre[(bi * l2 + t) * c + f];
                if dpre == 0.0 {
                    continue;
                }
                g.res_bias[f] += dpre;
                for kk in 0..k {
                    let ti = t + kk;
                    if ti < pad_left || ti - pad_left >= l2 {
                        continue;
                    }
                    let ti = ti - pad_left;
                    for ci in 0..c {
                        let x = cache.drop1_out[(bi * l2 + ti) * c + ci];
                        g.res_kernel[(kk * c + ci) * c + f] += x * dpre;
                        ddrop1[(bi * l2 + ti) * c + ci] +=
                            dpre * params.res_kernel[(kk * c + ci) * c + f];
                    }
                }
            }
        }
    }

    let dbn1_out: Vec<f64> = ddrop1
        .iter()
        .zip(&cache.drop1_mask)
        .map(|(dv, m)| dv * m)
        .collect();
    let (dpool, dgamma1, dbeta1) = bn_backward(
        &dbn1_out,
        &cache.bn1_xhat,
        &cache.bn1_var,
        &params.bn1.gamma,
        c,
    );
    g.bn1_gamma = dgamma1;
    g.bn1_beta = dbeta1;

    // Max pool routes each gradient to its winning timestep, then the ReLU
    // gate and the valid conv close the chain.
    let mut dconv1_pre = vec![0.0; b * l1 * c];
    for bi in 0..b {
        for t2 in 0..l2 {
            for f in 0..c {
                let src = (bi * l2 + t2) * c + f;
                let t = cache.pool_arg[src];
                let off = (bi * l1 + t) * c + f;
                dconv1_pre[off] += dpool[src] * relu_gate(cache.conv1_pre[off]);
            }
        }
    }
    for bi in 0..b {
        for t in 0..l1 {
            for f in 0..c {
                let dpre = dconv1_pre[(bi * l1 + t) * c + f];
                if dpre == 0.0 {
                    continue;
                }
                g.conv1_bias[f] += dpre;
                for kk in 0..k {
                    g.conv1_kernel[kk * c + f] +=
                        cache.input[bi * cfg.input_length + t + kk] * dpre;
                }
            }
        }
    }
    g
}

fn du_slice(v: &mut [f64], row: usize, width: usize) -> &mut [f64] {
    &mut v[row * width..(row + 1) * width]
}

/// Mean binary cross-entropy with clamped probabilities.
pub fn bce_loss(scores: &[f64], labels: &[f64]) -> f64 {
    let mut loss = 0.0;
    for (&s, &y) in scores.iter().zip(labels) {
        let s = s.clamp(1e-12, 1.0 - 1e-12);
        loss -= y * s.ln() + (1.0 - y) * (1.0 - s).ln();
    }
    loss / scores.len() as f64
}

/// One epoch's worth of history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_accuracy: Option<f64>,
}

/// Wraps trained parameters as a scoring model over feature rows.
#[derive(Debug, Clone)]
pub struct DNetModel {
    pub params: DNetParams,
}

impl DNetModel {
    /// Deterministic inference scores for a slice of feature rows.
    pub fn infer_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, DnetError> {
        let tensor = Tensor3::from_rows(rows)?;
        let mut rng = rng_from_seed(0);
        forward(&self.params, &tensor, Mode::Infer, &mut rng).map(|(scores, _)| scores)
    }
}

impl ScoredModel for DNetModel {
    fn score(&self, x: &[f64]) -> f64 {
        self.infer_scores(std::slice::from_ref(&x.to_vec()))
            .expect("input row must match the configured input length")[0]
    }

    fn score_batch(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        self.infer_scores(rows)
            .expect("input rows must match the configured input length")
    }
}

/// Trains with mini-batch SGD under the decay schedule. Batch order and
/// dropout masks derive from the config seed; batch-norm running stats
/// update with momentum 0.9 after every batch.
pub fn train(
    config: &DNetConfig,
    train_set: &EncodedDataset,
    valid_set: Option<&EncodedDataset>,
) -> Result<(DNetParams, Vec<EpochStats>), DnetError> {
    let n = train_set.n_rows();
    if n == 0 {
        return Err(DnetError::BadConfig("empty training set".to_string()));
    }
    let pos = train_set.target.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == n {
        return Err(DnetError::SingleClass);
    }
    if train_set.n_features() != config.input_length {
        return Err(DnetError::ShapeMismatch {
            expected: format!("{} features", config.input_length),
            found: format!("{} features", train_set.n_features()),
        });
    }
    let mut params = build(config)?;
    let schedule = config.schedule();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = schedule.lr_at(epoch);
        let order = shuffled_indices(n, derive_seed(config.seed, "dnet-epoch", epoch as u64));
        let mut drop_rng = rng_from_seed(derive_seed(config.seed, "dnet-dropout", epoch as u64));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let rows: Vec<Vec<f64>> = chunk.iter().map(|&i| train_set.features[i].clone()).collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| f64::from(train_set.target[i])).collect();
            let tensor = Tensor3::from_rows(&rows)?;
            let (scores, cache) = forward(&params, &tensor, Mode::Train, &mut drop_rng)?;
            let loss = bce_loss(&scores, &labels);
            if !loss.is_finite() {
                return Err(DnetError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += scores
                .iter()
                .zip(&labels)
                .filter(|(&s, &y)| (s >= 0.5) == (y >= 0.5))
                .count();
            let grads = backward(&params, &cache, &labels);
            for ((_, p), (_, gv)) in params.trainable_groups_mut().into_iter().zip(grads.groups())
            {
                for (pv, gvi) in p.iter_mut().zip(gv) {
                    *pv -= lr * gvi;
                }
            }
            let [stats1, stats2] = cache.batch_stats();
            for (bn, (mean, var)) in
                [(&mut params.bn1, stats1), (&mut params.bn2, stats2)]
            {
                for cc in 0..bn.running_mean.len() {
                    bn.running_mean[cc] = 0.9 * bn.running_mean[cc] + 0.1 * mean[cc];
                    bn.running_var[cc] = 0.9 * bn.running_var[cc] + 0.1 * var[cc];
                }
            }
        }
        let valid_accuracy = match valid_set {
            Some(vs) => {
                let model = DNetModel {
                    params: params.clone(),
                };
                let scores = model.infer_scores(&vs.features)?;
                let hits = scores
                    .iter()
                    .zip(&vs.target)
                    .filter(|(&s, &y)| (s >= 0.5) == (y == 1))
                    .count();
                Some(hits as f64 / vs.n_rows() as f64)
            }
            None => None,
        };
        history.push(EpochStats {
            epoch,
            lr,
            train_loss: loss_sum / n as f64,
            train_accuracy: correct as f64 / n as f64,
            valid_accuracy,
        });
    }
    Ok((params, history))
}

/// Writes a checkpoint: text header with the config, then one hex-encoded
/// f64-bits line per parameter group. Round-trips bit-exactly.
pub fn save_checkpoint(params: &DNetParams, path: &std::path::Path) -> Result<(), DnetError> {
    use std::fmt::Write as _;
    let cfg = &params.config;
    let mut out = String::from("dnet-checkpoint v1\n");
    for (name, value) in [
        ("input_length", cfg.input_length),
        ("conv_filters", cfg.conv_filters),
        ("kernel", cfg.kernel),
        ("pool", cfg.pool),
        ("lstm_units", cfg.lstm_units),
        ("dense_units", cfg.dense_units),
        ("epochs", cfg.epochs),
        ("batch_size", cfg.batch_size),
    ] {
        writeln!(out, "uint {name} {value}").expect("string write");
    }
    writeln!(out, "uint seed {}", cfg.seed).expect("string write");
    for (name, value) in [
        ("dropout_rate", cfg.dropout_rate),
        ("lr0", cfg.lr0),
        ("decay", cfg.decay),
    ] {
        writeln!(out, "bits {name} {:016x}", value.to_bits()).expect("string write");
    }
    for (name, values) in params.checkpoint_groups() {
        writeln!(out, "group {name} {}", values.len()).expect("string write");
        let words: Vec<String> = values.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        writeln!(out, "{}", words.join(" ")).expect("string write");
    }
    out.push_str("end\n");
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &std::path::Path) -> Result<DNetParams, DnetError> {
    let text = std::fs::read_to_string(path)?;
    let bad = |msg: &str| DnetError::BadCheckpoint(msg.to_string());
    let mut lines = text.lines();
    if lines.next() != Some("dnet-checkpoint v1") {
        return Err(bad("missing or unsupported version header"));
    }
    let mut config = DNetConfig::default();
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    while let Some(line) = lines.next() {
        if line == "end" {
            let mut params = build(&config)?;
            let expected = params.checkpoint_groups().len();
            if groups.len() != expected {
                return Err(bad("wrong number of parameter groups"));
            }
            for (name, values) in groups {
                if name == "out_b" {
                    if values.len() != 1 {
                        return Err(bad("out_b must hold exactly one value"));
                    }
                    params.out_b = values[0];
                    continue;
                }
                let slot = params
                    .checkpoint_slot(&name)
                    .ok_or_else(|| bad(&format!("unknown group {name:?}")))?;
                if slot.len() != values.len() {
                    return Err(DnetError::BadCheckpoint(format!(
                        "group {name:?} expects {} values, found {}",
                        slot.len(),
                        values.len()
                    )));
                }
                *slot = values;
            }
            return Ok(params);
        }
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("uint") => {
                let name = fields.next().ok_or_else(|| bad("uint line missing name"))?;
                let value: u64 = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("uint line missing value"))?;
                match name {
                    "input_length" => config.input_length = value as usize,
                    "conv_filters" => config.conv_filters = value as usize,
                    "kernel" => config.kernel = value as usize,
                    "pool" => config.pool = value as usize,
                    "lstm_units" => config.lstm_units = value as usize,
                    "dense_units" => config.dense_units = value as usize,
                    "epochs" => config.epochs = value as usize,
                    "batch_size" => config.batch_size = value as usize,
                    "seed" => config.seed = value,
                    other => {
                        return Err(DnetError::BadCheckpoint(format!(
                            "unknown uint field {other:?}"
                        )))
                    }
                }
            }
            Some("bits") => {
                let name = fields.next().ok_or_else(|| bad("bits line missing name"))?;
                let word = fields.next().ok_or_else(|| bad("bits line missing value"))?;
                let value = f64::from_bits(
                    u64::from_str_radix(word, 16).map_err(|_| bad("bad hex word"))?,
                );
                match name {
                    "dropout_rate" => config.dropout_rate = value,
                    "lr0" => config.lr0 = value,
                    "decay" => config.decay = value,
                    other => {
                        return Err(DnetError::BadCheckpoint(format!(
                            "unknown bits field {other:?}"
                        )))
                    }
                }
            }
            Some("group") => {
                let name = fields
                    .next()
                    .ok_or_else(|| bad("group line missing name"))?
                    .to_string();
                let len: usize = fields
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad("group line missing length"))?;
                let data_line = lines.next().ok_or_else(|| bad("group data missing"))?;
                let values: Result<Vec<f64>, DnetError> = data_line
                    .split_whitespace()
                    .map(|word| {
                        u64::from_str_radix(word, 16)
                            .map(f64::from_bits)
                            .map_err(|_| bad("bad hex word"))
                    })
                    .collect();
                let values = values?;
                if values.len() != len {
                    return Err(DnetError::BadCheckpoint(format!(
                        "group {name:?} declares {len} values, found {}",
                        values.len()
                    )));
                }
                groups.push((name, values));
            }
            _ => return Err(DnetError::BadCheckpoint(format!("bad line {line:?}"))),
        }
    }
    Err(bad("checkpoint truncated before end marker"))
}
