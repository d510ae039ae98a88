//! Direct implementations of the episode and NT-Xent losses.
//!
//! These are written straight from the textbook formulas with naive
//! exponentials and their own distance and cosine code. They share nothing
//! with the affinity/kernel path and serve as equivalence oracles for it.

use crate::batch::RepresentationBatch;
use crate::error::{GclError, Result};
use crate::kernel::{KernelKind, KernelParams};

fn pairs(batch: &RepresentationBatch) -> Result<(Vec<&[f64]>, Vec<&[f64]>)> {
    if batch.is_empty() || !batch.len().is_multiple_of(2) {
        return Err(GclError::Shape("oracle needs a non-empty paired batch".into()));
    }
    let first = (0..batch.len() / 2).map(|i| batch.embedding(2 * i)).collect();
    let second = (0..batch.len() / 2).map(|i| batch.embedding(2 * i + 1)).collect();
    Ok((first, second))
}

/// `-(1/N) sum_i s(q_i, p_i) / sum_j s(q_i, p_j)` with `s = exp(-||q - p||^2)`.
pub fn oracle_episode(batch: &RepresentationBatch) -> Result<f64> {
    let (queries, protos) = pairs(batch)?;
    let sim = |q: &[f64], p: &[f64]| {
        let mut d = 0.0;
        for i in 0..q.len() {
            d += (q[i] - p[i]).powi(2);
        }
        (-d).exp()
    };
    let n = queries.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut den = 0.0;
        for proto in &protos {
            den += sim(queries[i], proto);
        }
        total += sim(queries[i], protos[i]) / den;
    }
    Ok(-total / n as f64)
}

/// `(l12 + l21) / 2` with
/// `l12 = -(1/N) sum_i s(x_i, y_i) / (sum_j s(x_i, y_j) + sum_{j != i} s(x_i, x_j))`
/// and `s = exp(cos(g(z), g(z')) / tau)`.
pub fn oracle_ntxent(batch: &RepresentationBatch, params: &KernelParams) -> Result<f64> {
    if params.kind != KernelKind::CosineTemp {
        return Err(GclError::Param("NT-Xent oracle needs the cosine-temperature kernel".into()));
    }
    let (first, second) = pairs(batch)?;
    let project = |z: &[f64]| -> Vec<f64> {
        match &params.proj {
            None => z.to_vec(),
            Some(p) => {
                let mut out = vec![0.0; p.out_dim];
                for (r, o) in out.iter_mut().enumerate() {
                    for c in 0..p.in_dim {
                        *o += p.weights[r * p.in_dim + c] * z[c];
                    }
                }
                out
            }
        }
    };
    let x: Vec<Vec<f64>> = first.iter().map(|z| project(z)).collect();
    let y: Vec<Vec<f64>> = second.iter().map(|z| project(z)).collect();
    let sim = |a: &[f64], b: &[f64]| {
        let ab: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
        let aa: f64 = a.iter().map(|p| p * p).sum();
        let bb: f64 = b.iter().map(|q| q * q).sum();
        let cos = if aa == 0.0 || bb == 0.0 { 0.0 } else { ab / (aa.sqrt() * bb.sqrt()) };
        (cos / params.tau).exp()
    };
    let one_side = |u: &[Vec<f64>], v: &[Vec<f64>]| {
        let n = u.len();
        let mut total = 0.0;
        for i in 0..n {
            let mut den = 0.0;
            for j in 0..n {
                den += sim(&u[i], &v[j]);
            }
            for j in 0..n {
                if j != i {
                    den += sim(&u[i], &u[j]);
                }
            }
            total += sim(&u[i], &v[i]) / den;
        }
        -total / n as f64
    };
    Ok(0.5 * (one_side(&x, &y) + one_side(&y, &x)))
}
