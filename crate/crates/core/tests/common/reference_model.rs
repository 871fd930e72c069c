//! Plain-loop forward pass over just the valid rows, for checking the
//! padded, masked graph implementation.

use aerosense::autodiff::BATCHNORM_EPS;
use aerosense::model::{Model, Pooling};

pub struct Reference {
    pub y_ap: f64,
    pub y_ar: f64,
    pub pooled: Vec<f64>,
    /// Per head, `[n][n]` softmax weights.
    pub attention: Vec<Vec<Vec<f64>>>,
}

fn p<'a>(m: &'a Model, name: &str) -> (&'a [f64], usize) {
    let t = m.param(name).unwrap_or_else(|| panic!("missing {name}"));
    (t.data(), t.shape()[1])
}

/// `x · W` for row-major `W` with `cols` columns.
fn affine(x: &[f64], w: &[f64], cols: usize, bias: Option<&[f64]>) -> Vec<f64> {
    (0..cols)
        .map(|c| {
            let mut s = bias.map_or(0.0, |b| b[c]);
            for (i, xi) in x.iter().enumerate() {
                s += xi * w[i * cols + c];
            }
            s
        })
        .collect()
}

pub fn reference_forward(m: &Model, rows: &[Vec<f64>]) -> Reference {
    let cfg = &m.config;
    let mut h: Vec<Vec<f64>> = rows.to_vec();
    for l in 0..cfg.encoder_layers.len() {
        let (w, cols) = p(m, &format!("encoder.{l}.weight"));
        let (b, _) = p(m, &format!("encoder.{l}.bias"));
        let (gamma, _) = p(m, &format!("encoder.{l}.bn.gamma"));
        let (beta, _) = p(m, &format!("encoder.{l}.bn.beta"));
        let stats = &m.batchnorm_stats()[l];
        h = h
            .iter()
            .map(|x| {
                let z = affine(x, w, cols, Some(b));
                (0..cols)
                    .map(|c| {
                        let n = (z[c] - stats.running_mean[c]) / (stats.running_var[c] + BATCHNORM_EPS).sqrt();
                        (gamma[c] * n + beta[c]).max(0.0)
                    })
                    .collect()
            })
            .collect();
    }
    let n = h.len();
    let mut attention = Vec::new();
    let e = if cfg.attention {
        let dk = cfg.d_model / cfg.attention_heads;
        let mut concat = vec![Vec::with_capacity(cfg.d_model); n];
        for head in 0..cfg.attention_heads {
            let (wq, _) = p(m, &format!("attention.head{head}.query"));
            let (wk, _) = p(m, &format!("attention.head{head}.key"));
            let (wv, _) = p(m, &format!("attention.head{head}.value"));
            let q: Vec<Vec<f64>> = h.iter().map(|x| affine(x, wq, dk, None)).collect();
            let k: Vec<Vec<f64>> = h.iter().map(|x| affine(x, wk, dk, None)).collect();
            let v: Vec<Vec<f64>> = h.iter().map(|x| affine(x, wv, dk, None)).collect();
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                let s: Vec<f64> = (0..n)
                    .map(|j| q[i].iter().zip(&k[j]).map(|(x, y)| x * y).sum::<f64>() / (dk as f64).sqrt())
                    .collect();
                let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = s.iter().map(|x| (x - mx).exp()).collect();
                let tot: f64 = ex.iter().sum();
                for j in 0..n {
                    a[i][j] = ex[j] / tot;
                }
                for c in 0..dk {
                    concat[i].push((0..n).map(|j| a[i][j] * v[j][c]).sum());
                }
            }
            attention.push(a);
        }
        let (wo, cols) = p(m, "attention.output.weight");
        concat
            .iter()
            .zip(&h)
            .map(|(c, x)| {
                let o = affine(c, wo, cols, None);
                if cfg.residual_attention {
                    o.iter().zip(x).map(|(a, b)| a + b).collect()
                } else {
                    o
                }
            })
            .collect()
    } else {
        h
    };
    let d = cfg.d_model;
    let pooled: Vec<f64> = (0..d)
        .map(|c| match cfg.pooling {
            Pooling::Sum => e.iter().map(|r: &Vec<f64>| r[c]).sum(),
            Pooling::Mean => e.iter().map(|r| r[c]).sum::<f64>() / n.max(1) as f64,
            Pooling::Max => {
                if n == 0 {
                    0.0
                } else {
                    e.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max)
                }
            }
        })
        .collect();
    let head = |hidden: &str, out: &str| {
        let (w1, c1) = p(m, &format!("head.{hidden}.hidden.weight"));
        let (b1, _) = p(m, &format!("head.{hidden}.hidden.bias"));
        let (w2, _) = p(m, &format!("head.{out}.out.weight"));
        let (b2, _) = p(m, &format!("head.{out}.out.bias"));
        let hid: Vec<f64> = affine(&pooled, w1, c1, Some(b1)).into_iter().map(|x| x.max(0.0)).collect();
        affine(&hid, w2, 1, Some(b2))[0]
    };
    let (y_ap, y_ar) = if cfg.decoupled_heads {
        (head("ap", "ap"), head("ar", "ar"))
    } else {
        (head("shared", "shared.ap"), head("shared", "shared.ar"))
    };
    Reference {
        y_ap,
        y_ar,
        pooled,
        attention,
    }
}
