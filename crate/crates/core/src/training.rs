//! Multi-task Huber training, metrics, dayparting, gradient importance,
//! attention export and the ablation driver.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{huber, Adam, AdamConfig, Graph, Mode, Tensor};
use crate::features::{
    build_situation, local_seconds_of_day, AirspaceSituation, FeatureConfig, FeatureError, FeatureLayout, Normalizer,
    StateGroup,
};
use crate::geometry::AirspaceGeometry;
use crate::ingest::LabeledSample;
use crate::model::{Model, ModelCheckpoint, ModelConfig, ModelError, PaddedBatch, Pooling, Predictor};

pub const DEFAULT_HUBER_DELTA: f64 = 1.0;
pub const DEFAULT_PATIENCE: usize = 10;
const EVAL_BATCH: usize = 256;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("test set is empty")]
    EmptyTestSet,
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("situation has no aircraft")]
    EmptySituation,
    #[error("model was built without attention")]
    AttentionDisabled,
    #[error("loss diverged at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

impl From<crate::autodiff::TensorError> for TrainError {
    fn from(e: crate::autodiff::TensorError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub huber_delta: f64,
    pub patience: usize,
    pub seed: u64,
    pub pooling: Option<Pooling>,
    /// Label horizon in seconds; recorded for provenance.
    pub horizon: i64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            huber_delta: DEFAULT_HUBER_DELTA,
            patience: DEFAULT_PATIENCE,
            seed: 0,
            pooling: None,
            horizon: crate::ingest::DEFAULT_HORIZON_S,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.huber_delta > 0.0) {
            return Err(TrainError::InvalidConfig("huber_delta must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.horizon <= 0 {
            return Err(TrainError::InvalidConfig("horizon must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// A featurized, normalized sample ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub time: i64,
    pub rows: Vec<Vec<f64>>,
    pub y_ap: f64,
    pub y_ar: f64,
}

pub fn build_situations(
    samples: &[LabeledSample],
    geometry: &AirspaceGeometry,
    features: &FeatureConfig,
) -> Vec<AirspaceSituation> {
    samples
        .iter()
        .map(|s| build_situation(&s.snapshot, geometry, features))
        .collect()
}

pub fn make_examples(situations: &[AirspaceSituation], samples: &[LabeledSample], normalizer: &Normalizer) -> Vec<Example> {
    situations
        .iter()
        .zip(samples)
        .map(|(sit, s)| Example {
            time: s.label.query_time,
            rows: sit.states.iter().map(|st| normalizer.apply(st)).collect(),
            y_ap: f64::from(s.label.y_ap),
            y_ar: f64::from(s.label.y_ar),
        })
        .collect()
}

fn batch_of(examples: &[&Example], d_in: usize) -> Result<PaddedBatch, ModelError> {
    let capacity = examples.iter().map(|e| e.rows.len()).max().unwrap_or(0).max(1);
    let rows: Vec<&[Vec<f64>]> = examples.iter().map(|e| e.rows.as_slice()).collect();
    PaddedBatch::new(&rows, capacity, d_in)
}

/// Mean over samples of `huber(ŷ_AP − y_AP) + huber(ŷ_AR − y_AR)`.
pub fn multitask_loss(predictions: &[(f64, f64)], labels: &[(f64, f64)], delta: f64) -> Result<f64, TrainError> {
    if predictions.len() != labels.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| huber(p.0 - y.0, delta) + huber(p.1 - y.1, delta))
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Evaluation-mode predictions in input order.
pub fn predict_examples(model: &Model, examples: &[Example]) -> Result<Vec<(f64, f64)>, TrainError> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_BATCH) {
        let refs: Vec<&Example> = chunk.iter().collect();
        out.extend(model.predict(&batch_of(&refs, model.config.d_in)?)?);
    }
    Ok(out)
}

fn labels_of(examples: &[Example]) -> Vec<(f64, f64)> {
    examples.iter().map(|e| (e.y_ap, e.y_ar)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub best_val_loss: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Adam over shuffled mini-batches, keeping the parameters with the best
/// validation loss. With no validation examples the training loss selects.
pub fn fit_model(mut model: Model, train: &[Example], val: &[Example], config: &TrainConfig) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    });
    let val_labels = labels_of(val);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, Model, usize)> = None;
    let mut log = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = batch_of(&refs, model.config.d_in)?;
            let mut g = Graph::new();
            let fp = model.forward_graph(&mut g, &batch, Mode::Train, &mut rng, false)?;
            let y_ap = g.constant(Tensor::matrix(refs.len(), 1, refs.iter().map(|e| e.y_ap).collect())?);
            let y_ar = g.constant(Tensor::matrix(refs.len(), 1, refs.iter().map(|e| e.y_ar).collect())?);
            let r_ap = g.sub(fp.ap, y_ap)?;
            let r_ar = g.sub(fp.ar, y_ar)?;
            let h_ap = g.huber(r_ap, config.huber_delta);
            let h_ar = g.huber(r_ar, config.huber_delta);
            let both = g.add(h_ap, h_ar)?;
            let total = g.sum(both);
            let loss = g.scale(total, 1.0 / refs.len() as f64);
            let batch_loss = g.value(loss).data()[0];
            if !batch_loss.is_finite() {
                return Err(TrainError::DivergenceDetected { epoch });
            }
            loss_sum += batch_loss * refs.len() as f64;
            let grads = g.backward(loss)?;
            let grad_tensors: Vec<Tensor> = fp.params.values().map(|v| grads.wrt(*v)).collect();
            if grad_tensors.iter().any(|t| !t.all_finite()) {
                return Err(TrainError::DivergenceDetected { epoch });
            }
            let grad_refs: Vec<&Tensor> = grad_tensors.iter().collect();
            let mut params: Vec<&mut Tensor> = model.params_mut().map(|(_, t)| t).collect();
            adam.step(&mut params, &grad_refs)?;
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            multitask_loss(&predict_examples(&model, val)?, &val_labels, config.huber_delta)?
        };
        if !val_loss.is_finite() {
            return Err(TrainError::DivergenceDetected { epoch });
        }
        let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, model.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            best_val_loss: best.as_ref().map_or(val_loss, |b| b.0),
            improved,
        });
        if since_best >= config.patience {
            stopped_early = true;
            break;
        }
    }
    let (model, best_epoch) = match best {
        Some((_, m, e)) => (m, e),
        None => (model, 0),
    };
    Ok(TrainedModel {
        model,
        log,
        best_epoch,
        stopped_early,
    })
}

/// Output of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Fit the normalizer on the training situations, initialize the output
/// biases at the training label means and optimize.
pub fn train(
    train_samples: &[LabeledSample],
    val_samples: &[LabeledSample],
    geometry: &AirspaceGeometry,
    features: &FeatureConfig,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_samples.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let train_sit = build_situations(train_samples, geometry, features);
    let val_sit = build_situations(val_samples, geometry, features);
    train_prepared(&train_sit, train_samples, &val_sit, val_samples, geometry, features, model_config, config)
}

#[allow(clippy::too_many_arguments)]
fn train_prepared(
    train_sit: &[AirspaceSituation],
    train_samples: &[LabeledSample],
    val_sit: &[AirspaceSituation],
    val_samples: &[LabeledSample],
    geometry: &AirspaceGeometry,
    features: &FeatureConfig,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    let normalizer = match Normalizer::fit_situations(train_sit, &features.layout) {
        Ok(n) => n,
        // every training snapshot empty: identity statistics
        Err(FeatureError::EmptyTrainingSet) => Normalizer {
            layout: features.layout.clone(),
            mean: vec![0.0; features.layout.normalized_dims()],
            std: vec![1.0; features.layout.normalized_dims()],
            std_floor: crate::features::DEFAULT_STD_FLOOR,
        },
        Err(e) => return Err(e.into()),
    };
    let train = make_examples(train_sit, train_samples, &normalizer);
    let val = make_examples(val_sit, val_samples, &normalizer);
    let mut mc = model_config.clone();
    mc.d_in = features.layout.dim();
    if let Some(p) = config.pooling {
        mc.pooling = p;
    }
    let mut model = Model::new(mc, config.seed)?;
    let n = train.len() as f64;
    let mean_ap = train.iter().map(|e| e.y_ap).sum::<f64>() / n;
    let mean_ar = train.iter().map(|e| e.y_ar).sum::<f64>() / n;
    let [b_ap, b_ar] = model.output_bias_names();
    model.set_param(&b_ap, Tensor::scalar(mean_ap))?;
    model.set_param(&b_ar, Tensor::scalar(mean_ar))?;
    let trained = fit_model(model, &train, &val, config)?;
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint::new(&trained.model, normalizer, features.clone(), geometry),
        log: trained.log,
        best_epoch: trained.best_epoch,
        stopped_early: trained.stopped_early,
    })
}

// ---------------------------------------------------------------------------
// Metrics

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirspaceMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when the ground truth has zero variance.
    pub r2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub rounded: bool,
    pub ap: AirspaceMetrics,
    pub ar: AirspaceMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dayparting: Option<DaypartReport>,
}

/// Round half up, as used for integer-valued reports.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

pub fn airspace_metrics(pred: &[f64], truth: &[f64]) -> AirspaceMetrics {
    let n = truth.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (p, y) in pred.iter().zip(truth) {
        abs += (p - y).abs();
        sq += (p - y) * (p - y);
    }
    let mean = truth.iter().sum::<f64>() / n;
    let tss: f64 = truth.iter().map(|y| (y - mean) * (y - mean)).sum();
    AirspaceMetrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        r2: (tss > 0.0).then(|| 1.0 - sq / tss),
    }
}

pub fn compute_metrics(predictions: &[(f64, f64)], labels: &[(f64, f64)], round: bool) -> Result<MetricsReport, TrainError> {
    if labels.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    if predictions.len() != labels.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let r = |x: f64| if round { round_half_up(x) } else { x };
    let split = |f: fn(&(f64, f64)) -> f64, v: &[(f64, f64)], rnd: bool| -> Vec<f64> {
        v.iter().map(|p| if rnd { r(f(p)) } else { f(p) }).collect()
    };
    let ap = airspace_metrics(&split(|p| p.0, predictions, true), &split(|p| p.0, labels, false));
    let ar = airspace_metrics(&split(|p| p.1, predictions, true), &split(|p| p.1, labels, false));
    Ok(MetricsReport {
        n: labels.len(),
        rounded: round,
        ap,
        ar,
        dayparting: None,
    })
}

impl MetricsReport {
    /// `airspace,metric,value,n`; an undefined R² is written as `undefined`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("airspace,metric,value,n\n");
        for (name, m) in [("AP", &self.ap), ("AR", &self.ar)] {
            let _ = writeln!(out, "{name},mae,{},{}", m.mae, self.n);
            let _ = writeln!(out, "{name},rmse,{},{}", m.rmse, self.n);
            match m.r2 {
                Some(r2) => {
                    let _ = writeln!(out, "{name},r2,{r2},{}", self.n);
                }
                None => {
                    let _ = writeln!(out, "{name},r2,undefined,{}", self.n);
                }
            }
        }
        out
    }
}

/// Metrics of a checkpoint on labeled samples.
pub fn evaluate(predictor: &Predictor, samples: &[LabeledSample], geometry: &AirspaceGeometry, round: bool) -> Result<MetricsReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    let examples = predictor_examples(predictor, samples, geometry);
    let preds = predict_examples(predictor.model(), &examples)?;
    compute_metrics(&preds, &labels_of(&examples), round)
}

fn predictor_examples(predictor: &Predictor, samples: &[LabeledSample], geometry: &AirspaceGeometry) -> Vec<Example> {
    let sits = build_situations(samples, geometry, &predictor.checkpoint.features);
    make_examples(&sits, samples, predictor.normalizer())
}

// ---------------------------------------------------------------------------
// Dayparting

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaypartBin {
    pub airspace: String,
    pub bin_start_hour: u32,
    pub mae: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaypartReport {
    pub tz_offset: i64,
    /// Populated bins only, AP bins first, each in hour order.
    pub bins: Vec<DaypartBin>,
}

/// Two-hour bin index `⌊h/2⌋` of a timestamp's local hour.
pub fn daypart_bin(t: i64, tz_offset: i64) -> usize {
    (local_seconds_of_day(t, tz_offset) / 7200) as usize
}

pub fn dayparting(times: &[i64], predictions: &[(f64, f64)], labels: &[(f64, f64)], tz_offset: i64) -> DaypartReport {
    let mut sums = [[0.0f64; 12]; 2];
    let mut counts = [0usize; 12];
    for ((t, p), y) in times.iter().zip(predictions).zip(labels) {
        let b = daypart_bin(*t, tz_offset);
        counts[b] += 1;
        sums[0][b] += (p.0 - y.0).abs();
        sums[1][b] += (p.1 - y.1).abs();
    }
    let mut bins = Vec::new();
    for (a, name) in ["AP", "AR"].into_iter().enumerate() {
        for b in (0..12).filter(|&b| counts[b] > 0) {
            bins.push(DaypartBin {
                airspace: name.into(),
                bin_start_hour: 2 * b as u32,
                mae: sums[a][b] / counts[b] as f64,
                n: counts[b],
            });
        }
    }
    DaypartReport { tz_offset, bins }
}

impl DaypartReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("airspace,bin_start_hour,mae,n\n");
        for b in &self.bins {
            let _ = writeln!(out, "{},{},{},{}", b.airspace, b.bin_start_hour, b.mae, b.n);
        }
        out
    }
}

pub fn dayparting_evaluate(
    predictor: &Predictor,
    samples: &[LabeledSample],
    geometry: &AirspaceGeometry,
    tz_offset: i64,
) -> Result<DaypartReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    let examples = predictor_examples(predictor, samples, geometry);
    let preds = predict_examples(predictor.model(), &examples)?;
    let times: Vec<i64> = examples.iter().map(|e| e.time).collect();
    Ok(dayparting(&times, &preds, &labels_of(&examples), tz_offset))
}

// ---------------------------------------------------------------------------
// Gradient importance

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub dims: Vec<String>,
    /// Mean |∂(ŷ_AP + ŷ_AR)/∂x| per normalized input dimension.
    pub per_dim: Vec<f64>,
    /// Mean of `per_dim` over each included group.
    pub groups: BTreeMap<String, f64>,
    pub aircraft: usize,
    pub samples: usize,
}

/// Input gradients of `ŷ_AP + ŷ_AR` for a batch, `[B·n, d_in]` plus the row
/// validity. Samples do not interact in evaluation mode, so the batch sum
/// separates per sample.
pub fn input_gradients(model: &Model, batch: &PaddedBatch) -> Result<Tensor, TrainError> {
    let mut scratch = model.clone();
    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fp = scratch.forward_graph(&mut g, batch, Mode::Eval, &mut rng, true)?;
    let both = g.add(fp.ap, fp.ar)?;
    let root = g.sum(both);
    Ok(g.backward(root)?.wrt(fp.input))
}

pub fn importance_of_examples(model: &Model, layout: &FeatureLayout, examples: &[Example]) -> Result<ImportanceReport, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptySampleSet);
    }
    let d = model.config.d_in;
    let mut sum = vec![0.0; d];
    let mut count = 0usize;
    for chunk in examples.chunks(EVAL_BATCH) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = batch_of(&refs, d)?;
        let grad = input_gradients(model, &batch)?;
        for (r, valid) in batch.row_valid().into_iter().enumerate() {
            if valid {
                count += 1;
                for (s, gv) in sum.iter_mut().zip(grad.row(r)) {
                    *s += gv.abs();
                }
            }
        }
    }
    let per_dim: Vec<f64> = sum.iter().map(|s| if count > 0 { s / count as f64 } else { 0.0 }).collect();
    let dim_groups = layout.dim_groups();
    let mut groups = BTreeMap::new();
    for g in layout.ordered_groups() {
        let vals: Vec<f64> = per_dim
            .iter()
            .zip(&dim_groups)
            .filter(|(_, dg)| **dg == g)
            .map(|(v, _)| *v)
            .collect();
        groups.insert(g.as_str().to_string(), vals.iter().sum::<f64>() / vals.len() as f64);
    }
    Ok(ImportanceReport {
        dims: layout.dim_names().into_iter().map(String::from).collect(),
        per_dim,
        groups,
        aircraft: count,
        samples: examples.len(),
    })
}

pub fn state_importance(
    predictor: &Predictor,
    samples: &[LabeledSample],
    geometry: &AirspaceGeometry,
) -> Result<ImportanceReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptySampleSet);
    }
    let examples = predictor_examples(predictor, samples, geometry);
    importance_of_examples(predictor.model(), predictor.checkpoint.layout(), &examples)
}

// ---------------------------------------------------------------------------
// Attention export

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionExport {
    pub time: i64,
    pub aircraft_ids: Vec<String>,
    /// `[latitude, longitude, altitude]` per aircraft.
    pub positions: Vec<[f64; 3]>,
    /// Head-averaged weights; row = receiver, column = source.
    pub matrix: Vec<Vec<f64>>,
    /// Column mean of `matrix`: attention each aircraft receives.
    pub influence: Vec<f64>,
    pub heads: usize,
}

/// Average of per-head `[N × N]` attention matrices.
pub fn head_average(heads: &[Tensor]) -> Vec<Vec<f64>> {
    let n = heads.first().map_or(0, Tensor::rows);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| heads.iter().map(|h| h.get(i, j)).sum::<f64>() / heads.len() as f64)
                .collect()
        })
        .collect()
}

pub fn export_attention(predictor: &Predictor, situation: &AirspaceSituation) -> Result<AttentionExport, TrainError> {
    if situation.states.is_empty() {
        return Err(TrainError::EmptySituation);
    }
    if !predictor.model().config.attention {
        return Err(TrainError::AttentionDisabled);
    }
    let pred = predictor.forward(situation)?;
    let matrix = head_average(&pred.attention);
    let n = matrix.len();
    let influence = (0..n).map(|j| matrix.iter().map(|row| row[j]).sum::<f64>() / n as f64).collect();
    Ok(AttentionExport {
        time: situation.time,
        aircraft_ids: situation.states.iter().map(|s| s.aircraft_id.clone()).collect(),
        positions: situation
            .states
            .iter()
            .map(|s| [s.position.latitude, s.position.longitude, s.position.altitude])
            .collect(),
        matrix,
        influence,
        heads: pred.attention.len(),
    })
}

// ---------------------------------------------------------------------------
// Ablations

#[derive(Debug, Clone, PartialEq)]
pub struct AblationVariant {
    pub name: String,
    pub family: String,
    pub pooling: Pooling,
    pub attention: bool,
    pub decoupled_heads: bool,
    pub layout: FeatureLayout,
}

impl AblationVariant {
    fn full(name: &str, family: &str) -> Self {
        Self {
            name: name.into(),
            family: family.into(),
            pooling: Pooling::Sum,
            attention: true,
            decoupled_heads: true,
            layout: FeatureLayout::full(),
        }
    }
}

/// Reference model plus one change at a time, grouped by what is varied.
pub fn standard_variants() -> Vec<AblationVariant> {
    vec![
        AblationVariant::full("full", "reference"),
        AblationVariant {
            pooling: Pooling::Mean,
            ..AblationVariant::full("mean_pooling", "pooling")
        },
        AblationVariant {
            pooling: Pooling::Max,
            ..AblationVariant::full("max_pooling", "pooling")
        },
        AblationVariant {
            attention: false,
            ..AblationVariant::full("no_attention", "module")
        },
        AblationVariant {
            decoupled_heads: false,
            ..AblationVariant::full("shared_head", "module")
        },
        AblationVariant {
            layout: FeatureLayout::minimal(),
            ..AblationVariant::full("minimal_state", "state")
        },
    ]
}

/// Per-group removals for a finer state ablation.
pub fn group_removal_variants() -> Vec<AblationVariant> {
    [StateGroup::Control, StateGroup::Boundary, StateGroup::Temporal]
        .into_iter()
        .map(|g| AblationVariant {
            layout: FeatureLayout::without(g),
            ..AblationVariant::full(&format!("without_{}", g.as_str()), "state")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub family: String,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn mean_metric(&self, variant: &str, f: impl Fn(&MetricsReport) -> f64) -> Option<f64> {
        let vals: Vec<f64> = self.rows.iter().filter(|r| r.variant == variant).map(|r| f(&r.metrics)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn row(&self, variant: &str, seed: u64) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant && r.seed == seed)
    }

    /// Per-seed rows followed by a `mean` row per variant.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,variant,seed,ap_mae,ap_rmse,ar_mae,ar_rmse\n");
        let mut variants: Vec<(&str, &str)> = Vec::new();
        for r in &self.rows {
            if !variants.iter().any(|(v, _)| *v == r.variant) {
                variants.push((&r.variant, &r.family));
            }
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.family, r.variant, r.seed, m.ap.mae, m.ap.rmse, m.ar.mae, m.ar.rmse
            );
        }
        for (v, fam) in variants {
            let mean = |f: fn(&MetricsReport) -> f64| self.mean_metric(v, f).unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{fam},{v},mean,{},{},{},{}",
                mean(|m| m.ap.mae),
                mean(|m| m.ap.rmse),
                mean(|m| m.ar.mae),
                mean(|m| m.ar.rmse)
            );
        }
        out
    }
}

/// Datasets for an ablation run.
pub struct AblationData<'a> {
    pub train: &'a [LabeledSample],
    pub val: &'a [LabeledSample],
    pub test: &'a [LabeledSample],
    pub geometry: &'a AirspaceGeometry,
}

/// Train and test every variant for every seed. Situations are built once;
/// each variant refits the normalizer for its layout.
pub fn run_ablation(
    data: &AblationData<'_>,
    features: &FeatureConfig,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    variants: &[AblationVariant],
    seeds: &[u64],
    mut progress: impl FnMut(&AblationRow),
) -> Result<AblationTable, TrainError> {
    let train_sit = build_situations(data.train, data.geometry, features);
    let val_sit = build_situations(data.val, data.geometry, features);
    let test_sit = build_situations(data.test, data.geometry, features);
    let mut rows = Vec::new();
    for &seed in seeds {
        for v in variants {
            let fc = FeatureConfig {
                layout: v.layout.clone(),
                ..features.clone()
            };
            let mc = ModelConfig {
                pooling: v.pooling,
                attention: v.attention,
                decoupled_heads: v.decoupled_heads,
                ..model_config.clone()
            };
            let tc = TrainConfig {
                seed,
                pooling: None,
                ..train_config.clone()
            };
            let outcome = train_prepared(&train_sit, data.train, &val_sit, data.val, data.geometry, &fc, &mc, &tc)?;
            let model = outcome.checkpoint.model()?;
            let test = make_examples(&test_sit, data.test, &outcome.checkpoint.normalizer);
            let preds = predict_examples(&model, &test)?;
            let metrics = compute_metrics(&preds, &labels_of(&test), false)?;
            let row = AblationRow {
                variant: v.name.clone(),
                family: v.family.clone(),
                seed,
                metrics,
                best_epoch: outcome.best_epoch,
            };
            progress(&row);
            rows.push(row);
        }
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_closed_forms() {
        assert_eq!(multitask_loss(&[(1.0, 2.0)], &[(1.0, 2.0)], 1.0).unwrap(), 0.0);
        assert_eq!(multitask_loss(&[(0.5, 0.5)], &[(0.0, 0.0)], 1.0).unwrap(), 0.25);
        assert_eq!(multitask_loss(&[(2.0, 3.0)], &[(0.0, 0.0)], 1.0).unwrap(), 4.0);
        assert!(multitask_loss(&[(0.0, 0.0)], &[], 1.0).is_err());
    }

    #[test]
    fn metric_sentinels() {
        let y = [(1.0, 2.0), (3.0, 5.0), (4.0, 4.0)];
        let perfect = compute_metrics(&y, &y, false).unwrap();
        assert_eq!((perfect.ap.mae, perfect.ap.rmse, perfect.ap.r2), (0.0, 0.0, Some(1.0)));
        let m_ap = (1.0 + 3.0 + 4.0) / 3.0;
        let m_ar = (2.0 + 5.0 + 4.0) / 3.0;
        let mean = compute_metrics(&[(m_ap, m_ar); 3], &y, false).unwrap();
        assert!(mean.ap.r2.unwrap().abs() < 1e-15);
        let r = compute_metrics(&[(1.0, 1.0); 2], &[(0.0, 0.0); 2], false).unwrap();
        assert_eq!((r.ap.mae, r.ap.rmse, r.ap.r2), (1.0, 1.0, None));
        assert!(r.to_csv().contains("AP,r2,undefined,2"));
        assert!(matches!(compute_metrics(&[], &[], false), Err(TrainError::EmptyTestSet)));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(2.5), 3.0);
        assert_eq!(round_half_up(2.49), 2.0);
        let r = compute_metrics(&[(0.6, 1.4)], &[(1.0, 1.0)], true).unwrap();
        assert_eq!(r.ap.mae, 0.0);
        assert_eq!(r.ar.mae, 0.0);
    }

    #[test]
    fn daypart_bins_half_open() {
        assert_eq!(daypart_bin(9 * 3600, 0), 4);
        assert_eq!(daypart_bin(10 * 3600, 0), 5);
        assert_eq!(daypart_bin(10 * 3600 - 1, 0), 4);
        assert_eq!(daypart_bin(0, 8 * 3600), 4);
        let rep = dayparting(&[9 * 3600, 9 * 3600 + 60], &[(1.0, 1.0); 2], &[(0.0, 3.0); 2], 0);
        assert_eq!(rep.bins.len(), 2);
        assert!(rep.bins.iter().all(|b| b.bin_start_hour == 8 && b.n == 2));
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig {
            huber_delta: 0.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
    }
}
