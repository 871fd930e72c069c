//! Set-function checks over random situations: permutation, padding,
//! masked attention and sum-pool doubling.

use aerosense::autodiff::{Graph, Mode, Tensor};
use aerosense::model::{Model, PaddedBatch};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::reference_model::reference_forward;

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

/// A model whose batch-norm statistics and affine terms are not the identity.
pub fn perturbed_model(config: aerosense::model::ModelConfig, seed: u64) -> Model {
    let mut m = Model::new(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0b);
    for stats in m.batchnorm_stats_mut() {
        for v in stats.running_mean.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        for v in stats.running_var.iter_mut() {
            *v = rng.random_range(0.3..2.0);
        }
    }
    for (name, t) in m.params_mut() {
        if name.contains(".bn.") || name.ends_with("bias") {
            for v in t.data_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    m
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

pub struct Eval {
    pub y: (f64, f64),
    pub pooled: Vec<f64>,
    pub attention: Vec<Tensor>,
}

pub fn eval(m: &Model, rows: &[Vec<f64>], capacity: usize) -> Eval {
    let batch = PaddedBatch::new(&[rows], capacity, m.config.d_in).unwrap();
    let mut scratch = m.clone();
    let mut g = Graph::new();
    let fp = scratch
        .forward_graph(&mut g, &batch, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0), false)
        .unwrap();
    Eval {
        y: (g.value(fp.ap).data()[0], g.value(fp.ar).data()[0]),
        pooled: g.value(fp.pooled).data().to_vec(),
        attention: fp.attention.first().map(|h| h.iter().map(|a| g.value(*a).clone()).collect()).unwrap_or_default(),
    }
}

/// 200 cardinalities in `0..=120`, edges included.
pub fn cardinalities() -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut ns = vec![0, 1, 2, 119, 120];
    ns.extend((0..195).map(|_| if rng.random_bool(0.5) { rng.random_range(0..=30) } else { rng.random_range(0..=120) }));
    ns
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SetReport {
    pub situations: usize,
    /// Largest relative output change under a shuffle.
    pub worst_permutation: f64,
    /// Largest relative gap between the padded forward and an unpadded recomputation.
    pub worst_padding: f64,
    /// Padded containers whose output differs from a tight container of the same rows.
    pub tight_mismatches: usize,
    /// Nonzero weights on padded sources or padded receivers.
    pub padded_attention: usize,
    /// Valid attention rows that do not sum to one or disagree with the reference.
    pub attention_mismatches: usize,
    /// Pooled entries where `z(S⊎S) != 2 z(S)` bit for bit.
    pub doubling_mismatches: usize,
    pub doubling_checked: usize,
}

pub fn set_invariant_report(model: &Model, capacity: usize) -> SetReport {
    let d = model.config.d_in;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut rep = SetReport::default();
    for n in cardinalities() {
        rep.situations += 1;
        let rows = gaussian_rows(&mut rng, n, d);
        let padded = eval(model, &rows, capacity);

        let reference = reference_forward(model, &rows);
        for (got, want) in [(padded.y.0, reference.y_ap), (padded.y.1, reference.y_ar)] {
            rep.worst_padding = rep.worst_padding.max(rel_gap(got, want));
        }
        if n > 0 && eval(model, &rows, n).y != padded.y {
            rep.tight_mismatches += 1;
        }

        for (h, a) in padded.attention.iter().enumerate() {
            for i in 0..capacity {
                let row = a.row(i);
                if i < n {
                    rep.padded_attention += row[n..].iter().filter(|w| **w != 0.0).count();
                    let sum_ok = (row.iter().sum::<f64>() - 1.0).abs() < 1e-12;
                    let ref_ok = (0..n).all(|j| (row[j] - reference.attention[h][i][j]).abs() < 1e-12);
                    rep.attention_mismatches += usize::from(!(sum_ok && ref_ok));
                } else {
                    rep.padded_attention += row.iter().filter(|w| **w != 0.0).count();
                }
            }
        }

        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        let p = eval(model, &shuffled, capacity);
        for (got, want) in [(p.y.0, padded.y.0), (p.y.1, padded.y.1)] {
            rep.worst_permutation = rep.worst_permutation.max(rel_gap(got, want));
        }

        if 2 * n <= capacity {
            let doubled: Vec<Vec<f64>> = rows.iter().chain(&rows).cloned().collect();
            let dz = eval(model, &doubled, capacity);
            rep.doubling_checked += 1;
            rep.doubling_mismatches += dz.pooled.iter().zip(&padded.pooled).filter(|(a, b)| **a != 2.0 * **b).count();
        }
    }
    rep
}
