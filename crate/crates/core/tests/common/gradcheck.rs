//! Central finite differences against reverse-mode gradients.

use aerosense::autodiff::{BatchNormStats, Graph, Mode, Tensor, TensorError, Var, MASK_SENTINEL};
use aerosense::model::{ForwardPass, Model, ModelConfig, PaddedBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
/// Gradients below this magnitude are compared absolutely.
pub const REL_FLOOR: f64 = 1e-3;

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var, TensorError>>;

pub struct Case {
    pub inputs: Vec<Tensor>,
    pub build: Build,
}

#[derive(Debug, Clone)]
pub struct OpResult {
    pub op: &'static str,
    pub cases: usize,
    pub max_rel_error: f64,
}

fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Values kept at least `gap` away from each point in `kinks`.
fn away_from(rng: &mut ChaCha8Rng, rows: usize, cols: usize, kinks: &[f64], gap: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| loop {
            let v: f64 = rng.random_range(-2.0..2.0);
            if kinks.iter().all(|k| (v - k).abs() > gap) {
                break v;
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn eval(build: &Build, inputs: &[Tensor], weights: &Tensor) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = build(&mut g, &vars).unwrap();
    g.value(out).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

/// Largest relative error over every input entry of `Σ out ⊙ W` for a
/// random weighting `W`.
pub fn check_case(case: &Case, rng: &mut ChaCha8Rng) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = (case.build)(&mut g, &vars).unwrap();
    let shape = g.value(out).shape().to_vec();
    let weights = Tensor::new(shape.clone(), (0..shape.iter().product()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w).unwrap();
    let root = g.sum(prod);
    let grads = g.backward(root).unwrap();
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v);
        for j in 0..case.inputs[k].len() {
            let mut plus = case.inputs.clone();
            plus[k].data_mut()[j] += STEP;
            let mut minus = case.inputs.clone();
            minus[k].data_mut()[j] -= STEP;
            let numeric = (eval(&case.build, &plus, &weights) - eval(&case.build, &minus, &weights)) / (2.0 * STEP);
            let a = analytic.data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..6), rng.random_range(1..6))
}

type Maker = fn(&mut ChaCha8Rng) -> Case;

fn ops() -> Vec<(&'static str, Maker)> {
    vec![
        ("matmul", |rng| {
            let (m, k) = dims(rng);
            let n = rng.random_range(1..6);
            Case {
                inputs: vec![randn(rng, m, k), randn(rng, k, n)],
                build: Box::new(|g, v| g.matmul(v[0], v[1])),
            }
        }),
        ("matmul_exact", |rng| {
            let (m, k) = dims(rng);
            let n = rng.random_range(1..6);
            Case {
                inputs: vec![randn(rng, m, k), randn(rng, k, n)],
                build: Box::new(|g, v| g.matmul_exact(v[0], v[1])),
            }
        }),
        ("matmul_nt", |rng| {
            let (m, k) = dims(rng);
            let n = rng.random_range(1..6);
            Case {
                inputs: vec![randn(rng, m, k), randn(rng, n, k)],
                build: Box::new(|g, v| g.matmul_nt(v[0], v[1])),
            }
        }),
        ("add", |rng| {
            let (m, n) = dims(rng);
            Case {
                inputs: vec![randn(rng, m, n), randn(rng, m, n)],
                build: Box::new(|g, v| g.add(v[0], v[1])),
            }
        }),
        ("add_row_broadcast", |rng| {
            let (m, n) = dims(rng);
            Case {
                inputs: vec![randn(rng, m, n), randn(rng, 1, n)],
                build: Box::new(|g, v| g.add(v[0], v[1])),
            }
        }),
        ("sub", |rng| {
            let (m, n) = dims(rng);
            Case {
                inputs: vec![randn(rng, m, n), randn(rng, m, n)],
                build: Box::new(|g, v| g.sub(v[0], v[1])),
            }
        }),
        ("mul", |rng| {
            let (m, n) = dims(rng);
            Case {
                inputs: vec![randn(rng, m, n), randn(rng, m, n)],
                build: Box::new(|g, v| g.mul(v[0], v[1])),
            }
        }),
        ("relu", |rng| {
            let (m, n) = dims(rng);
            Case {
                inputs: vec![away_from(rng, m, n, &[0.0], 1e-3)],
                build: Box::new(|g, v| Ok(g.relu(v[0]))),
            }
        }),
        ("scale", |rng| {
            let (m, n) = dims(rng);
            let k: f64 = rng.random_range(-3.0..3.0);
            Case {
                inputs: vec![randn(rng, m, n)],
                build: Box::new(move |g, v| Ok(g.scale(v[0], k))),
            }
        }),
        ("dropout", |rng| {
            let (m, n) = dims(rng);
            let seed: u64 = rng.random();
            let p: f64 = rng.random_range(0.0..0.8);
            Case {
                inputs: vec![randn(rng, m, n)],
                // same seed on every evaluation: identical mask
                build: Box::new(move |g, v| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    g.dropout(v[0], p, Mode::Train, &mut r)
                }),
            }
        }),
        ("batchnorm_train", |rng| {
            let (m, n) = (rng.random_range(2..7), rng.random_range(1..5));
            let mut mask: Vec<bool> = (0..m).map(|_| rng.random_bool(0.7)).collect();
            mask[0] = true;
            mask[1] = true;
            Case {
                inputs: vec![randn(rng, m, n), randn(rng, 1, n), randn(rng, 1, n)],
                build: Box::new(move |g, v| {
                    let mut stats = BatchNormStats::new(n);
                    g.batchnorm(v[0], v[1], v[2], &mut stats, Mode::Train, &mask)
                }),
            }
        }),
        ("batchnorm_eval", |rng| {
            let (m, n) = dims(rng);
            let mask: Vec<bool> = (0..m).map(|_| rng.random_bool(0.7)).collect();
            let stats = BatchNormStats {
                running_mean: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                running_var: (0..n).map(|_| rng.random_range(0.2..2.0)).collect(),
            };
            Case {
                inputs: vec![randn(rng, m, n), randn(rng, 1, n), randn(rng, 1, n)],
                build: Box::new(move |g, v| {
                    let mut s = stats.clone();
                    g.batchnorm(v[0], v[1], v[2], &mut s, Mode::Eval, &mask)
                }),
            }
        }),
        ("masked_softmax", |rng| {
            let (m, n) = dims(rng);
            let mask_data: Vec<f64> = (0..m * n)
                .map(|_| if rng.random_bool(0.3) { MASK_SENTINEL } else { 0.0 })
                .collect();
            let mask = Tensor::matrix(m, n, mask_data).unwrap();
            Case {
                inputs: vec![randn(rng, m, n)],
                build: Box::new(move |g, v| g.masked_softmax(v[0], &mask)),
            }
        }),
        ("concat_cols", |rng| {
            let (m, a, b) = (rng.random_range(1..6), rng.random_range(1..4), rng.random_range(1..4));
            Case {
                inputs: vec![randn(rng, m, a), randn(rng, m, b)],
                build: Box::new(|g, v| g.concat_cols(v)),
            }
        }),
        ("concat_rows", |rng| {
            let (n, a, b) = (rng.random_range(1..6), rng.random_range(1..4), rng.random_range(1..4));
            Case {
                inputs: vec![randn(rng, a, n), randn(rng, b, n)],
                build: Box::new(|g, v| g.concat_rows(v)),
            }
        }),
        ("slice_rows", |rng| {
            let (m, n) = dims(rng);
            let start = rng.random_range(0..m);
            let len = rng.random_range(1..=m - start);
            Case {
                inputs: vec![randn(rng, m, n)],
                build: Box::new(move |g, v| g.slice_rows(v[0], start, len)),
            }
        }),
        ("sum_rows", |rng| {
            let group = rng.random_range(1..5);
            let groups = rng.random_range(1..4);
            let n = rng.random_range(1..5);
            let w: Vec<f64> = (0..group * groups).map(|_| rng.random_range(-1.0..1.0)).collect();
            Case {
                inputs: vec![randn(rng, group * groups, n)],
                build: Box::new(move |g, v| g.sum_rows(v[0], &w, group)),
            }
        }),
        ("max_rows", |rng| {
            let group = rng.random_range(1..5);
            let groups = rng.random_range(1..4);
            let n = rng.random_range(1..5);
            let valid: Vec<bool> = (0..group * groups).map(|_| rng.random_bool(0.7)).collect();
            // distinct values per column, separated well beyond the step
            let rows = group * groups;
            let mut data = vec![0.0; rows * n];
            for c in 0..n {
                let mut vals: Vec<f64> = (0..rows).map(|i| i as f64 * 0.01).collect();
                for i in (1..rows).rev() {
                    let j = rng.random_range(0..=i);
                    vals.swap(i, j);
                }
                for r in 0..rows {
                    data[r * n + c] = vals[r] + rng.random_range(0.0..0.005);
                }
            }
            Case {
                inputs: vec![Tensor::matrix(rows, n, data).unwrap()],
                build: Box::new(move |g, v| g.max_rows(v[0], &valid, group)),
            }
        }),
        ("huber", |rng| {
            let (m, n) = dims(rng);
            let delta: f64 = rng.random_range(0.3..1.5);
            Case {
                inputs: vec![away_from(rng, m, n, &[-delta, delta], 1e-3)],
                build: Box::new(move |g, v| Ok(g.huber(v[0], delta))),
            }
        }),
        ("sum", |rng| {
            let (m, n) = dims(rng);
            Case {
                inputs: vec![randn(rng, m, n)],
                build: Box::new(|g, v| Ok(g.sum(v[0]))),
            }
        }),
    ]
}

/// `cases` random shapes and values per operation.
pub fn gradient_suite(seed: u64, cases: usize) -> Vec<OpResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ops()
        .into_iter()
        .map(|(op, make)| {
            let mut worst: f64 = 0.0;
            for _ in 0..cases {
                let case = make(&mut rng);
                worst = worst.max(check_case(&case, &mut rng));
            }
            OpResult {
                op,
                cases,
                max_rel_error: worst,
            }
        })
        .collect()
}

fn tiny_model(rng: &mut ChaCha8Rng) -> (Model, PaddedBatch) {
    let cfg = ModelConfig {
        n_max: 5,
        d_in: 3,
        encoder_layers: vec![6, 4],
        d_model: 4,
        attention_heads: 2,
        dropout_p: 0.0,
        head_hidden: 3,
        ..ModelConfig::default()
    };
    let model = Model::new(cfg, rng.random()).unwrap();
    let samples: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|_| {
            let n = rng.random_range(2..=5);
            (0..n).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
        })
        .collect();
    let refs: Vec<&[Vec<f64>]> = samples.iter().map(Vec::as_slice).collect();
    (model, PaddedBatch::new(&refs, 5, 3).unwrap())
}

fn loss(model: &Model, batch: &PaddedBatch) -> (f64, Graph, ForwardPass, Var) {
    let mut m = model.clone();
    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fp = m.forward_graph(&mut g, batch, Mode::Train, &mut rng, true).unwrap();
    let both = g.add(fp.ap, fp.ar).unwrap();
    let sq = g.mul(both, both).unwrap();
    let root = g.sum(sq);
    (g.value(root).data()[0], g, fp, root)
}

/// Worst relative error of full-model parameter gradients over `models`
/// random small models and batches.
pub fn whole_model_worst(seed: u64, models: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..models {
        let (model, batch) = tiny_model(&mut rng);
        let (_, g, fp, root) = loss(&model, &batch);
        let grads = g.backward(root).unwrap();
        for (name, var) in &fp.params {
            let analytic = grads.wrt(*var);
            for j in 0..analytic.len() {
                let mut plus = model.clone();
                let mut t = plus.param(name).unwrap().clone();
                t.data_mut()[j] += STEP;
                plus.set_param(name, t).unwrap();
                let mut minus = model.clone();
                let mut t = minus.param(name).unwrap().clone();
                t.data_mut()[j] -= STEP;
                minus.set_param(name, t).unwrap();
                let numeric = (loss(&plus, &batch).0 - loss(&minus, &batch).0) / (2.0 * STEP);
                let a = analytic.data()[j];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR));
            }
        }
    }
    worst
}
