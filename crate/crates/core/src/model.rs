//! The set encoder: padded container → shared MLP → masked multi-head
//! self-attention → filtered pooling → per-airspace prediction heads.
//!
//! A batch of `B` situations padded to `n` rows is laid out as a
//! `[B·n, d]` matrix; sample `b` owns rows `b·n .. (b+1)·n`, valid rows
//! first. Padded rows stay exactly zero through the encoder and attention,
//! so they never reach the pooled representation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{BatchNormStats, Graph, Mode, Tensor, TensorError, Var, MASK_SENTINEL};
use crate::features::{AirspaceSituation, FeatureConfig, FeatureLayout, Normalizer, STATE_DIM};
use crate::geometry::AirspaceGeometry;

pub const DEFAULT_N_MAX: usize = 120;
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("situation has {count} aircraft, container holds {capacity}")]
    CapacityExceeded { count: usize, capacity: usize },
    #[error("checkpoint was trained on geometry {expected}, got {found}")]
    GeometryMismatch { expected: String, found: String },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Sum,
    Mean,
    Max,
}

impl Pooling {
    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Sum => "sum",
            Pooling::Mean => "mean",
            Pooling::Max => "max",
        }
    }
}

impl std::str::FromStr for Pooling {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sum" => Ok(Pooling::Sum),
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            other => Err(format!("unknown pooling {other:?} (sum, mean, max)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_max: usize,
    pub d_in: usize,
    pub encoder_layers: Vec<usize>,
    pub d_model: usize,
    pub attention_heads: usize,
    pub dropout_p: f64,
    pub residual_attention: bool,
    pub pooling: Pooling,
    pub head_hidden: usize,
    /// Off: embeddings go straight to pooling.
    pub attention: bool,
    /// Off: one shared hidden layer feeds both outputs.
    pub decoupled_heads: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
            d_in: STATE_DIM,
            encoder_layers: vec![64, 64],
            d_model: 64,
            attention_heads: 4,
            dropout_p: 0.1,
            residual_attention: true,
            pooling: Pooling::Sum,
            head_hidden: 32,
            attention: true,
            decoupled_heads: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.n_max == 0 {
            return bad("n_max must be at least 1".into());
        }
        if self.d_in == 0 || self.d_model == 0 || self.head_hidden == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.attention_heads == 0 || !self.d_model.is_multiple_of(self.attention_heads) {
            return bad(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.attention_heads
            ));
        }
        match self.encoder_layers.last() {
            Some(&w) if w == self.d_model => {}
            _ => return bad("last encoder width must equal d_model".into()),
        }
        if self.encoder_layers.contains(&0) {
            return bad("encoder widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout_p));
        }
        Ok(())
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.attention_heads
    }
}

/// Fixed-capacity container for a batch of situations.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    /// `[batch, capacity, d_in]`.
    pub x: Tensor,
    pub valid_counts: Vec<usize>,
    /// `[batch, capacity]` with 1 on valid rows.
    pub filter: Tensor,
    /// `[batch, capacity, capacity]`, 0 where both row and column are valid,
    /// [`MASK_SENTINEL`] elsewhere.
    pub attention_mask: Tensor,
}

impl PaddedBatch {
    /// Pack per-sample state rows (already normalized) into a container of
    /// `capacity` rows per sample.
    pub fn new(samples: &[&[Vec<f64>]], capacity: usize, d_in: usize) -> Result<Self, ModelError> {
        let b = samples.len();
        let mut x = vec![0.0; b * capacity * d_in];
        let mut filter = vec![0.0; b * capacity];
        let mut mask = vec![MASK_SENTINEL; b * capacity * capacity];
        let mut valid_counts = Vec::with_capacity(b);
        for (s, rows) in samples.iter().enumerate() {
            let n = rows.len();
            if n > capacity {
                return Err(ModelError::CapacityExceeded { count: n, capacity });
            }
            for (i, row) in rows.iter().enumerate() {
                if row.len() != d_in {
                    return Err(TensorError::ShapeMismatch(format!("state has {} dims, expected {d_in}", row.len())).into());
                }
                let off = (s * capacity + i) * d_in;
                x[off..off + d_in].copy_from_slice(row);
                filter[s * capacity + i] = 1.0;
                for j in 0..n {
                    mask[(s * capacity + i) * capacity + j] = 0.0;
                }
            }
            valid_counts.push(n);
        }
        Ok(Self {
            x: Tensor::new(vec![b, capacity, d_in], x)?,
            valid_counts,
            filter: Tensor::new(vec![b, capacity], filter)?,
            attention_mask: Tensor::new(vec![b, capacity, capacity], mask)?,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.valid_counts.len()
    }

    pub fn capacity(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn d_in(&self) -> usize {
        self.x.shape()[2]
    }

    pub fn row_valid(&self) -> Vec<bool> {
        self.filter.data().iter().map(|&f| f == 1.0).collect()
    }

    /// Attention mask of one sample as a `[capacity, capacity]` matrix.
    pub fn sample_mask(&self, s: usize) -> Tensor {
        let n = self.capacity();
        Tensor::matrix(n, n, self.attention_mask.data()[s * n * n..(s + 1) * n * n].to_vec())
            .expect("mask slice is square")
    }

    fn flat_input(&self) -> Tensor {
        let (b, n, d) = (self.batch_size(), self.capacity(), self.d_in());
        Tensor::matrix(b * n, d, self.x.data().to_vec()).expect("flattened container")
    }
}

/// Single-sample container at the configured capacity.
pub fn pad_to_container(rows: &[Vec<f64>], config: &ModelConfig) -> Result<PaddedBatch, ModelError> {
    PaddedBatch::new(&[rows], config.n_max, config.d_in)
}

/// Learned tensors by name plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    params: BTreeMap<String, Tensor>,
    batchnorm: Vec<BatchNormStats>,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::matrix(fan_in, fan_out, data).expect("shape")
}

pub fn encoder_weight(l: usize) -> String {
    format!("encoder.{l}.weight")
}
pub fn encoder_bias(l: usize) -> String {
    format!("encoder.{l}.bias")
}
pub fn encoder_gamma(l: usize) -> String {
    format!("encoder.{l}.bn.gamma")
}
pub fn encoder_beta(l: usize) -> String {
    format!("encoder.{l}.bn.beta")
}
pub fn attention_proj(kind: &str, head: usize) -> String {
    format!("attention.head{head}.{kind}")
}
pub const ATTENTION_OUTPUT: &str = "attention.output.weight";

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        let mut width = config.d_in;
        for (l, &w) in config.encoder_layers.iter().enumerate() {
            params.insert(encoder_weight(l), glorot(&mut rng, width, w));
            params.insert(encoder_bias(l), Tensor::zeros(&[1, w]));
            params.insert(encoder_gamma(l), Tensor::filled(&[1, w], 1.0));
            params.insert(encoder_beta(l), Tensor::zeros(&[1, w]));
            width = w;
        }
        if config.attention {
            for h in 0..config.attention_heads {
                for kind in ["query", "key", "value"] {
                    params.insert(attention_proj(kind, h), glorot(&mut rng, config.d_model, config.d_k()));
                }
            }
            params.insert(ATTENTION_OUTPUT.into(), glorot(&mut rng, config.d_model, config.d_model));
        }
        let branches: &[&str] = if config.decoupled_heads { &["ap", "ar"] } else { &["shared"] };
        for b in branches {
            params.insert(format!("head.{b}.hidden.weight"), glorot(&mut rng, config.d_model, config.head_hidden));
            params.insert(format!("head.{b}.hidden.bias"), Tensor::zeros(&[1, config.head_hidden]));
        }
        for out in ["ap", "ar"] {
            let owner = if config.decoupled_heads { out.to_string() } else { format!("shared.{out}") };
            params.insert(format!("head.{owner}.out.weight"), glorot(&mut rng, config.head_hidden, 1));
            params.insert(format!("head.{owner}.out.bias"), Tensor::zeros(&[1, 1]));
        }
        let batchnorm = config.encoder_layers.iter().map(|&w| BatchNormStats::new(w)).collect();
        Ok(Self {
            config,
            params,
            batchnorm,
        })
    }

    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<(), ModelError> {
        let slot = self
            .params
            .get_mut(name)
            .ok_or_else(|| ModelError::InvalidConfig(format!("no parameter {name}")))?;
        if slot.shape() != value.shape() {
            return Err(TensorError::ShapeMismatch(format!("{name}: {:?} vs {:?}", slot.shape(), value.shape())).into());
        }
        *slot = value;
        Ok(())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn batchnorm_stats(&self) -> &[BatchNormStats] {
        &self.batchnorm
    }

    pub fn batchnorm_stats_mut(&mut self) -> &mut [BatchNormStats] {
        &mut self.batchnorm
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Output-layer bias names, AP first.
    pub fn output_bias_names(&self) -> [String; 2] {
        if self.config.decoupled_heads {
            ["head.ap.out.bias".into(), "head.ar.out.bias".into()]
        } else {
            ["head.shared.ap.out.bias".into(), "head.shared.ar.out.bias".into()]
        }
    }

    /// Build the forward computation for `batch` on `g`. Parameters become
    /// tracked leaves; in train mode the batch-norm running statistics are
    /// updated.
    pub fn forward_graph<R: Rng + ?Sized>(
        &mut self,
        g: &mut Graph,
        batch: &PaddedBatch,
        mode: Mode,
        rng: &mut R,
        track_input: bool,
    ) -> Result<ForwardPass, ModelError> {
        if batch.d_in() != self.config.d_in {
            return Err(TensorError::ShapeMismatch(format!(
                "batch has {} input dims, model expects {}",
                batch.d_in(),
                self.config.d_in
            ))
            .into());
        }
        let vars: BTreeMap<String, Var> = self
            .params
            .iter()
            .map(|(k, t)| (k.clone(), g.variable(t.clone())))
            .collect();
        let input = if track_input {
            g.variable(batch.flat_input())
        } else {
            g.constant(batch.flat_input())
        };
        let row_valid = batch.row_valid();
        let embeddings = encode_aircraft(g, input, &row_valid, &vars, &mut self.batchnorm, &self.config, mode, rng)?;
        let (attended, attention) = if self.config.attention {
            masked_self_attention(g, embeddings, batch, &vars, &self.config)?
        } else {
            (embeddings, Vec::new())
        };
        let pooled = pool(g, attended, batch, self.config.pooling)?;
        let (ap, ar) = predict_heads(g, pooled, &vars, &self.config)?;
        Ok(ForwardPass {
            input,
            embeddings,
            attended,
            pooled,
            ap,
            ar,
            attention,
            params: vars,
        })
    }

    /// Deterministic evaluation-mode predictions, one `(ŷ_AP, ŷ_AR)` per sample.
    pub fn predict(&self, batch: &PaddedBatch) -> Result<Vec<(f64, f64)>, ModelError> {
        let mut scratch = self.clone();
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fp = scratch.forward_graph(&mut g, batch, Mode::Eval, &mut rng, false)?;
        let (ap, ar) = (g.value(fp.ap).data(), g.value(fp.ar).data());
        Ok(ap.iter().copied().zip(ar.iter().copied()).collect())
    }
}

/// Handles into a built forward computation.
pub struct ForwardPass {
    /// `[B·n, d_in]` input rows.
    pub input: Var,
    /// `[B·n, d_model]` encoder output.
    pub embeddings: Var,
    /// `[B·n, d_model]` after attention (equal to `embeddings` when attention is off).
    pub attended: Var,
    /// `[B, d_model]`.
    pub pooled: Var,
    /// `[B, 1]` each.
    pub ap: Var,
    pub ar: Var,
    /// Softmax weights per sample, per head: `[n, n]`, receivers on rows.
    pub attention: Vec<Vec<Var>>,
    pub params: BTreeMap<String, Var>,
}

fn param(vars: &BTreeMap<String, Var>, name: &str) -> Result<Var, ModelError> {
    vars.get(name)
        .copied()
        .ok_or_else(|| ModelError::InvalidConfig(format!("missing parameter {name}")))
}

/// Shared per-row MLP: `Dropout(ReLU(BN(h·W + b)))` per layer, batch-norm
/// statistics over valid rows only.
#[allow(clippy::too_many_arguments)]
pub fn encode_aircraft<R: Rng + ?Sized>(
    g: &mut Graph,
    input: Var,
    row_valid: &[bool],
    vars: &BTreeMap<String, Var>,
    stats: &mut [BatchNormStats],
    config: &ModelConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<Var, ModelError> {
    let mut h = input;
    for l in 0..config.encoder_layers.len() {
        let z = g.matmul(h, param(vars, &encoder_weight(l))?)?;
        let z = g.add(z, param(vars, &encoder_bias(l))?)?;
        let z = g.batchnorm(
            z,
            param(vars, &encoder_gamma(l))?,
            param(vars, &encoder_beta(l))?,
            &mut stats[l],
            mode,
            row_valid,
        )?;
        let z = g.relu(z);
        h = g.dropout(z, config.dropout_p, mode, rng)?;
    }
    Ok(h)
}

/// Multi-head scaled dot-product self-attention within each sample, with
/// the additive padding mask. Returns the attended rows and the softmax
/// weights per sample and head.
pub fn masked_self_attention(
    g: &mut Graph,
    embeddings: Var,
    batch: &PaddedBatch,
    vars: &BTreeMap<String, Var>,
    config: &ModelConfig,
) -> Result<(Var, Vec<Vec<Var>>), ModelError> {
    let n = batch.capacity();
    let heads = config.attention_heads;
    let scale = 1.0 / (config.d_k() as f64).sqrt();
    let mut q = Vec::with_capacity(heads);
    let mut k = Vec::with_capacity(heads);
    let mut v = Vec::with_capacity(heads);
    for h in 0..heads {
        q.push(g.matmul(embeddings, param(vars, &attention_proj("query", h))?)?);
        k.push(g.matmul(embeddings, param(vars, &attention_proj("key", h))?)?);
        v.push(g.matmul(embeddings, param(vars, &attention_proj("value", h))?)?);
    }
    let mut per_sample = Vec::with_capacity(batch.batch_size());
    let mut weights = Vec::with_capacity(batch.batch_size());
    for s in 0..batch.batch_size() {
        let mask = batch.sample_mask(s);
        let mut head_out = Vec::with_capacity(heads);
        let mut head_weights = Vec::with_capacity(heads);
        for h in 0..heads {
            let qs = g.slice_rows(q[h], s * n, n)?;
            let ks = g.slice_rows(k[h], s * n, n)?;
            let vs = g.slice_rows(v[h], s * n, n)?;
            let scores = g.matmul_nt(qs, ks)?;
            let scores = g.scale(scores, scale);
            let a = g.masked_softmax(scores, &mask)?;
            head_out.push(g.matmul_exact(a, vs)?);
            head_weights.push(a);
        }
        per_sample.push(g.concat_cols(&head_out)?);
        weights.push(head_weights);
    }
    let heads_cat = g.concat_rows(&per_sample)?;
    let projected = g.matmul(heads_cat, param(vars, ATTENTION_OUTPUT)?)?;
    let out = if config.residual_attention {
        g.add(projected, embeddings)?
    } else {
        projected
    };
    Ok((out, weights))
}

/// Filtered set pooling to one `d_model` row per sample.
pub fn pool(g: &mut Graph, rows: Var, batch: &PaddedBatch, pooling: Pooling) -> Result<Var, ModelError> {
    let n = batch.capacity();
    let filter = batch.filter.data();
    Ok(match pooling {
        Pooling::Sum => g.sum_rows(rows, filter, n)?,
        Pooling::Mean => {
            let w: Vec<f64> = filter
                .iter()
                .enumerate()
                .map(|(i, f)| f / batch.valid_counts[i / n].max(1) as f64)
                .collect();
            g.sum_rows(rows, &w, n)?
        }
        Pooling::Max => g.max_rows(rows, &batch.row_valid(), n)?,
    })
}

/// `ŷ_A = W₂·ReLU(W₁·z + b₁) + b₂` per airspace.
pub fn predict_heads(
    g: &mut Graph,
    z: Var,
    vars: &BTreeMap<String, Var>,
    config: &ModelConfig,
) -> Result<(Var, Var), ModelError> {
    let hidden = |g: &mut Graph, branch: &str| -> Result<Var, ModelError> {
        let h = g.matmul(z, param(vars, &format!("head.{branch}.hidden.weight"))?)?;
        let h = g.add(h, param(vars, &format!("head.{branch}.hidden.bias"))?)?;
        Ok(g.relu(h))
    };
    let output = |g: &mut Graph, h: Var, owner: &str| -> Result<Var, ModelError> {
        let y = g.matmul(h, param(vars, &format!("head.{owner}.out.weight"))?)?;
        Ok(g.add(y, param(vars, &format!("head.{owner}.out.bias"))?)?)
    };
    if config.decoupled_heads {
        let h_ap = hidden(g, "ap")?;
        let h_ar = hidden(g, "ar")?;
        Ok((output(g, h_ap, "ap")?, output(g, h_ar, "ar")?))
    } else {
        let h = hidden(g, "shared")?;
        Ok((output(g, h, "shared.ap")?, output(g, h, "shared.ar")?))
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormRecord {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Everything needed to serve predictions for one geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub parameters: BTreeMap<String, Tensor>,
    pub batchnorm: Vec<BatchNormRecord>,
    pub normalizer: Normalizer,
    pub features: FeatureConfig,
    pub geometry_fingerprint: String,
}

impl ModelCheckpoint {
    pub fn new(model: &Model, normalizer: Normalizer, features: FeatureConfig, geometry: &AirspaceGeometry) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: model.config.clone(),
            parameters: model.params.clone(),
            batchnorm: model
                .batchnorm
                .iter()
                .map(|s| BatchNormRecord {
                    running_mean: s.running_mean.clone(),
                    running_var: s.running_var.clone(),
                })
                .collect(),
            normalizer,
            features,
            geometry_fingerprint: geometry.fingerprint(),
        }
    }

    /// Rebuild the model, checking every declared tensor is present with
    /// the shape the config implies.
    pub fn model(&self) -> Result<Model, ModelError> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let mut model = Model::new(self.config.clone(), 0)?;
        if self.parameters.len() != model.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, found {}",
                model.params.len(),
                self.parameters.len()
            )));
        }
        for (name, slot) in model.params.iter_mut() {
            let t = self
                .parameters
                .get(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != slot.shape() || t.len() != slot.len() || !t.all_finite() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor {name}: shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        if self.batchnorm.len() != model.batchnorm.len() {
            return Err(ModelError::Checkpoint("batch-norm layer count".into()));
        }
        for (rec, stats) in self.batchnorm.iter().zip(model.batchnorm.iter_mut()) {
            let ok = rec.running_mean.len() == stats.running_mean.len()
                && rec.running_var.len() == stats.running_var.len()
                && rec.running_var.iter().all(|v| v.is_finite() && *v >= 0.0)
                && rec.running_mean.iter().all(|v| v.is_finite());
            if !ok {
                return Err(ModelError::Checkpoint("invalid batch-norm statistics".into()));
            }
            stats.running_mean = rec.running_mean.clone();
            stats.running_var = rec.running_var.clone();
        }
        let n = &self.normalizer;
        let k = n.layout.normalized_dims();
        if n.layout.dim() != self.config.d_in
            || n.mean.len() != k
            || n.std.len() != k
            || n.std.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || n.mean.iter().any(|m| !m.is_finite())
        {
            return Err(ModelError::Checkpoint("normalizer does not match the model input".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let ckpt: ModelCheckpoint = serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        ckpt.model()?;
        Ok(ckpt)
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.normalizer.layout
    }
}

/// Output of a single-situation forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub y_ap: f64,
    pub y_ar: f64,
    pub cardinality: usize,
    /// Per head `[N_t × N_t]` attention (receivers on rows); empty when attention is off.
    pub attention: Vec<Tensor>,
    /// `[N_t × d_model]` encoder embeddings of the valid aircraft.
    pub embeddings: Tensor,
}

/// A loaded checkpoint bound to its geometry.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub checkpoint: ModelCheckpoint,
    model: Model,
}

impl Predictor {
    pub fn new(checkpoint: ModelCheckpoint, geometry: &AirspaceGeometry) -> Result<Self, ModelError> {
        let found = geometry.fingerprint();
        if found != checkpoint.geometry_fingerprint {
            return Err(ModelError::GeometryMismatch {
                expected: checkpoint.geometry_fingerprint.clone(),
                found,
            });
        }
        let model = checkpoint.model()?;
        Ok(Self { checkpoint, model })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.checkpoint.normalizer
    }

    pub fn normalize(&self, situation: &AirspaceSituation) -> Vec<Vec<f64>> {
        situation.states.iter().map(|s| self.normalizer().apply(s)).collect()
    }

    /// normalize → pad → encode → attend → pool → heads, evaluation mode.
    pub fn forward(&self, situation: &AirspaceSituation) -> Result<Prediction, ModelError> {
        let rows = self.normalize(situation);
        let batch = pad_to_container(&rows, &self.model.config)?;
        let mut scratch = self.model.clone();
        let mut g = Graph::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fp = scratch.forward_graph(&mut g, &batch, Mode::Eval, &mut rng, false)?;
        let n_t = rows.len();
        let n = batch.capacity();
        let attention = fp
            .attention
            .first()
            .map(|heads| {
                heads
                    .iter()
                    .map(|a| {
                        let full = g.value(*a);
                        let data = (0..n_t).flat_map(|i| full.row(i)[..n_t].to_vec()).collect();
                        Tensor::matrix(n_t, n_t, data).expect("attention block")
                    })
                    .collect()
            })
            .unwrap_or_default();
        let e = g.value(fp.embeddings);
        let d = e.cols();
        debug_assert_eq!(e.rows(), n);
        let embeddings = Tensor::matrix(n_t, d, e.data()[..n_t * d].to_vec())?;
        Ok(Prediction {
            y_ap: g.value(fp.ap).data()[0],
            y_ar: g.value(fp.ar).data()[0],
            cardinality: n_t,
            attention,
            embeddings,
        })
    }
}
