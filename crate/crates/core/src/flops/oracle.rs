//! Operation-counting reference for the analytic MAC formulas.
//!
//! Executes one exit-aware layer with scalar loops on placeholder values and
//! counts every multiplication as it happens. Counting convention: products
//! (including the `1/sqrt(d_k)` score scaling, the multiply-by-reciprocal that
//! normalises softmax rows, and the layer-norm scale and gain) are MACs;
//! exponentials, divisions, additions and the mean/variance reductions of
//! layer norm are not.

use super::ModelDims;
use crate::error::{Error, Result};

/// Counted multiplications by stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCount {
    pub q_proj: u64,
    pub kv_proj: u64,
    pub scores: u64,
    pub score_scale: u64,
    pub softmax_norm: u64,
    pub context: u64,
    pub out_proj: u64,
    pub layer_norms: u64,
    pub ffn: u64,
}

impl OpCount {
    pub fn total(&self) -> u64 {
        self.q_proj
            + self.kv_proj
            + self.scores
            + self.score_scale
            + self.softmax_norm
            + self.context
            + self.out_proj
            + self.layer_norms
            + self.ffn
    }

    /// Projections of queries, keys and values.
    pub fn linear_proj(&self) -> u64 {
        self.q_proj + self.kv_proj
    }

    /// Everything between the projections and the output projection.
    pub fn attention(&self) -> u64 {
        self.scores + self.score_scale + self.softmax_norm + self.context
    }
}

#[inline]
fn mul(count: &mut u64, a: f64, b: f64) -> f64 {
    *count += 1;
    a * b
}

fn placeholder(rows: usize, cols: usize, salt: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| ((i * 7 + j * 3 + salt) % 11) as f64 * 0.1 - 0.5)
                .collect()
        })
        .collect()
}

fn project(x: &[Vec<f64>], w: &[Vec<f64>], count: &mut u64) -> Vec<Vec<f64>> {
    let out_cols = w[0].len();
    x.iter()
        .map(|row| {
            (0..out_cols)
                .map(|j| {
                    let mut acc = 0.0;
                    for (k, &xv) in row.iter().enumerate() {
                        acc += mul(count, xv, w[k][j]);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn layer_norm(rows: &mut [Vec<f64>], gain: &[f64], bias: &[f64], count: &mut u64) {
    for row in rows.iter_mut() {
        let d = row.len() as f64;
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let inv_std = 1.0 / (var + 1e-5).sqrt();
        for (i, v) in row.iter_mut().enumerate() {
            let normed = mul(count, *v - mean, inv_std);
            *v = mul(count, normed, gain[i]) + bias[i];
        }
    }
}

/// Multiplications performed by one exit-aware layer with `n` key positions
/// and `m` active positions.
pub fn oracle_count(n: usize, m: usize, dims: &ModelDims) -> Result<OpCount> {
    dims.validate()?;
    if m > n {
        return Err(Error::Input(format!("{m} active positions out of {n}")));
    }
    let mut c = OpCount::default();
    if m == 0 {
        return Ok(c);
    }
    let d = dims.d_model;
    let h = dims.num_heads;
    let dk = d / h;
    let ff = dims.d_ff;

    let states = placeholder(n, d, 0);
    let active = &states[..m];
    let (wq, wk, wv, wo) = (
        placeholder(d, d, 1),
        placeholder(d, d, 2),
        placeholder(d, d, 3),
        placeholder(d, d, 4),
    );
    let (w1, w2) = (placeholder(d, ff, 5), placeholder(ff, d, 6));
    let ones = vec![1.0; d];
    let zeros = vec![0.0; d];

    let q = project(active, &wq, &mut c.q_proj);
    let k = project(&states, &wk, &mut c.kv_proj);
    let v = project(&states, &wv, &mut c.kv_proj);

    let scale = 1.0 / (dk as f64).sqrt();
    let mut ctx = vec![vec![0.0; d]; m];
    for head in 0..h {
        let off = head * dk;
        for i in 0..m {
            let mut probs: Vec<f64> = (0..n)
                .map(|j| {
                    let mut s = 0.0;
                    for x in 0..dk {
                        s += mul(&mut c.scores, q[i][off + x], k[j][off + x]);
                    }
                    mul(&mut c.score_scale, s, scale)
                })
                .collect();
            let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            probs.iter_mut().for_each(|p| *p = (*p - max).exp());
            let inv = 1.0 / probs.iter().sum::<f64>();
            for p in probs.iter_mut() {
                *p = mul(&mut c.softmax_norm, *p, inv);
            }
            for x in 0..dk {
                let mut acc = 0.0;
                for (j, &p) in probs.iter().enumerate() {
                    acc += mul(&mut c.context, p, v[j][off + x]);
                }
                ctx[i][off + x] = acc;
            }
        }
    }

    let attn_out = project(&ctx, &wo, &mut c.out_proj);
    let mut a: Vec<Vec<f64>> = active
        .iter()
        .zip(&attn_out)
        .map(|(h, x)| h.iter().zip(x).map(|(p, q)| p + q).collect())
        .collect();
    layer_norm(&mut a, &ones, &zeros, &mut c.layer_norms);

    let hidden: Vec<Vec<f64>> = project(&a, &w1, &mut c.ffn)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
        .collect();
    let f = project(&hidden, &w2, &mut c.ffn);
    let mut out: Vec<Vec<f64>> = a
        .iter()
        .zip(&f)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect();
    layer_norm(&mut out, &ones, &zeros, &mut c.layer_norms);
    Ok(c)
}
