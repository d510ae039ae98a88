//! Similarity kernels in log domain.
//!
//! A kernel scores a pair of embeddings with an exponent `e` such that the
//! similarity is `s = exp(e)`. Exponents are kept un-exponentiated until the
//! loss evaluates its max-shifted ratios.

use crate::batch::RepresentationBatch;
use crate::error::{GclError, Result};

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_GAMMA: f64 = 10.0;
pub const DEFAULT_BETA: f64 = -5.0;
pub const GAMMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `e = -||z - z'||^2`
    SqEuclid,
    /// `e = cos(g(z), g(z')) / tau` with a linear projection head `g`.
    CosineTemp,
    /// `e = gamma * cos(z, z') + beta`
    AffineCosine,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::SqEuclid, KernelKind::CosineTemp, KernelKind::AffineCosine];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::SqEuclid => "sq-euclid",
            KernelKind::CosineTemp => "cosine-temp",
            KernelKind::AffineCosine => "affine-cosine",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Row-major `out_dim x in_dim` linear map.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<f64>,
}

impl Projection {
    pub fn new(out_dim: usize, in_dim: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != out_dim * in_dim {
            return Err(GclError::Shape(format!(
                "projection {out_dim}x{in_dim} with {} weights",
                weights.len()
            )));
        }
        Ok(Self {
            out_dim,
            in_dim,
            weights,
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Self {
            out_dim: dim,
            in_dim: dim,
            weights,
        }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.in_dim)
            .map(|row| dot(row, z))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub kind: KernelKind,
    pub tau: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Projection head for [`KernelKind::CosineTemp`]; `None` means identity.
    pub proj: Option<Projection>,
}

impl KernelParams {
    pub fn sq_euclid() -> Self {
        Self {
            kind: KernelKind::SqEuclid,
            tau: DEFAULT_TAU,
            gamma: DEFAULT_GAMMA,
            beta: DEFAULT_BETA,
            proj: None,
        }
    }

    pub fn cosine_temp(tau: f64, proj: Option<Projection>) -> Self {
        Self {
            kind: KernelKind::CosineTemp,
            tau,
            proj,
            ..Self::sq_euclid()
        }
    }

    pub fn affine_cosine(gamma: f64, beta: f64) -> Self {
        Self {
            kind: KernelKind::AffineCosine,
            gamma,
            beta,
            ..Self::sq_euclid()
        }
    }

    pub fn default_for(kind: KernelKind) -> Self {
        match kind {
            KernelKind::SqEuclid => Self::sq_euclid(),
            KernelKind::CosineTemp => Self::cosine_temp(DEFAULT_TAU, None),
            KernelKind::AffineCosine => Self::affine_cosine(DEFAULT_GAMMA, DEFAULT_BETA),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(GclError::Param(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) || !self.beta.is_finite() {
            return Err(GclError::Param(format!(
                "gamma must be positive and beta finite, got ({}, {})",
                self.gamma, self.beta
            )));
        }
        if self.proj.is_some() && self.kind != KernelKind::CosineTemp {
            return Err(GclError::Param(format!(
                "projection head given for kernel {}",
                self.kind.name()
            )));
        }
        if let Some(p) = &self.proj {
            if p.weights.iter().any(|w| !w.is_finite()) {
                return Err(GclError::Numeric("projection weights".into()));
            }
        }
        Ok(())
    }

    pub fn clamp_gamma(&mut self) {
        self.gamma = self.gamma.max(GAMMA_FLOOR);
    }
}

/// Gradient of a scalar with respect to the trainable kernel parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KernelGrad {
    pub gamma: f64,
    pub beta: f64,
    pub proj: Option<Vec<f64>>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Accumulates `scale * d cos(a, b) / d a` into `out`.
fn add_cosine_grad(a: &[f64], b: &[f64], scale: f64, out: &mut [f64]) {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 || scale == 0.0 {
        return;
    }
    let c = dot(a, b) / (na * nb);
    let inv = 1.0 / (na * nb);
    let self_term = c / (na * na);
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o += scale * (y * inv - self_term * x);
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(GclError::Shape(format!("dimension {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

pub fn sqeuclid_exponent(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    Ok(-a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
}

pub fn cosine_temp_exponent(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64> {
    check_dims(a, b)?;
    let c = match &params.proj {
        Some(p) => {
            if p.in_dim != a.len() {
                return Err(GclError::Shape(format!(
                    "projection expects dimension {}, got {}",
                    p.in_dim,
                    a.len()
                )));
            }
            cosine(&p.apply(a), &p.apply(b))
        }
        None => cosine(a, b),
    };
    Ok(c / params.tau)
}

pub fn affine_cosine_exponent(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64> {
    check_dims(a, b)?;
    Ok(params.gamma * cosine(a, b) + params.beta)
}

pub fn exponent(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64> {
    match params.kind {
        KernelKind::SqEuclid => sqeuclid_exponent(a, b),
        KernelKind::CosineTemp => cosine_temp_exponent(a, b, params),
        KernelKind::AffineCosine => affine_cosine_exponent(a, b, params),
    }
}

/// Exponents over all ordered pairs of a batch.
///
/// Stored as `values + offset`, where `offset` is the part shared by every
/// pair (the affine-cosine `beta`). Keeping it separate lets ratio losses
/// cancel it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentMatrix {
    size: usize,
    values: Vec<f64>,
    offset: f64,
}

impl ExponentMatrix {
    pub fn new(size: usize, values: Vec<f64>, offset: f64) -> Result<Self> {
        if values.len() != size * size {
            return Err(GclError::Shape(format!(
                "{} exponent values for size {size}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(GclError::Numeric("non-finite exponent".into()));
        }
        Ok(Self { size, values, offset })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Pair-specific part of the exponent (excludes the shared offset).
    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.size + b]
    }

    /// Full exponent `e_ab`.
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.value(a, b) + self.offset
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.values[a * self.size..(a + 1) * self.size]
    }

    /// Adds `shift[a]` to every exponent in row `a`.
    pub fn shift_rows(&mut self, shift: &[f64]) {
        for (row, s) in self.values.chunks_mut(self.size.max(1)).zip(shift) {
            row.iter_mut().for_each(|v| *v += s);
        }
    }
}

/// Per-entry vectors the kernel compares (projected for cosine-temp).
fn kernel_inputs(batch: &RepresentationBatch, params: &KernelParams) -> Result<Vec<Vec<f64>>> {
    match (&params.kind, &params.proj) {
        (KernelKind::CosineTemp, Some(p)) => {
            if p.in_dim != batch.dim() {
                return Err(GclError::Shape(format!(
                    "projection expects dimension {}, batch has {}",
                    p.in_dim,
                    batch.dim()
                )));
            }
            Ok(batch.embeddings().map(|z| p.apply(z)).collect())
        }
        _ => Ok(batch.embeddings().map(<[f64]>::to_vec).collect()),
    }
}

pub fn exponent_matrix(batch: &RepresentationBatch, params: &KernelParams) -> Result<ExponentMatrix> {
    params.validate()?;
    let inputs = kernel_inputs(batch, params)?;
    let n = inputs.len();
    let mut values = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let v = match params.kind {
                KernelKind::SqEuclid => sqeuclid_exponent(&inputs[a], &inputs[b])?,
                KernelKind::CosineTemp => cosine(&inputs[a], &inputs[b]) / params.tau,
                KernelKind::AffineCosine => params.gamma * cosine(&inputs[a], &inputs[b]),
            };
            values[a * n + b] = v;
            values[b * n + a] = v;
        }
    }
    let offset = match params.kind {
        KernelKind::AffineCosine => params.beta,
        _ => 0.0,
    };
    ExponentMatrix::new(n, values, offset)
}

/// Pulls `dL/de` (row-major over batch pairs) and `dL/d offset` back to the
/// embeddings and the kernel parameters.
pub fn backprop(
    batch: &RepresentationBatch,
    params: &KernelParams,
    grad_e: &[f64],
    grad_offset: f64,
) -> Result<(Vec<Vec<f64>>, KernelGrad)> {
    let inputs = kernel_inputs(batch, params)?;
    let n = inputs.len();
    if grad_e.len() != n * n {
        return Err(GclError::Shape("exponent gradient size".into()));
    }
    let in_dim = inputs.first().map_or(0, Vec::len);
    let mut grad_in = vec![vec![0.0; in_dim]; n];
    let mut kgrad = KernelGrad::default();

    for a in 0..n {
        for b in 0..n {
            let g = grad_e[a * n + b];
            if g == 0.0 || a == b {
                continue;
            }
            let (za, zb) = (&inputs[a], &inputs[b]);
            match params.kind {
                KernelKind::SqEuclid => {
                    for d in 0..in_dim {
                        let diff = za[d] - zb[d];
                        grad_in[a][d] -= 2.0 * g * diff;
                        grad_in[b][d] += 2.0 * g * diff;
                    }
                }
                KernelKind::CosineTemp => {
                    let scale = g / params.tau;
                    add_cosine_grad(za, zb, scale, &mut grad_in[a]);
                    add_cosine_grad(zb, za, scale, &mut grad_in[b]);
                }
                KernelKind::AffineCosine => {
                    kgrad.gamma += g * cosine(za, zb);
                    let scale = g * params.gamma;
                    add_cosine_grad(za, zb, scale, &mut grad_in[a]);
                    add_cosine_grad(zb, za, scale, &mut grad_in[b]);
                }
            }
        }
    }
    if params.kind == KernelKind::AffineCosine {
        kgrad.beta = grad_offset;
    }

    let grad_z = match (&params.kind, &params.proj) {
        (KernelKind::CosineTemp, Some(p)) => {
            let mut gw = vec![0.0; p.weights.len()];
            let grads = batch
                .embeddings()
                .zip(&grad_in)
                .map(|(z, gu)| {
                    let mut gz = vec![0.0; p.in_dim];
                    for (r, gr) in gu.iter().enumerate() {
                        let row = &p.weights[r * p.in_dim..(r + 1) * p.in_dim];
                        for c in 0..p.in_dim {
                            gz[c] += row[c] * gr;
                            gw[r * p.in_dim + c] += gr * z[c];
                        }
                    }
                    gz
                })
                .collect();
            kgrad.proj = Some(gw);
            grads
        }
        _ => grad_in,
    };
    Ok((grad_z, kgrad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::Group;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn sqeuclid_examples() {
        assert_eq!(sqeuclid_exponent(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(sqeuclid_exponent(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), -25.0);
        assert_eq!(
            sqeuclid_exponent(&[0.3, -1.0], &[2.0, 4.5]).unwrap(),
            sqeuclid_exponent(&[2.0, 4.5], &[0.3, -1.0]).unwrap()
        );
        assert!(sqeuclid_exponent(&[0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn cosine_temp_examples() {
        let id = Some(Projection::identity(2));
        let p1 = KernelParams::cosine_temp(1.0, id.clone());
        assert!(approx(cosine_temp_exponent(&[0.3, 0.4], &[0.3, 0.4], &p1).unwrap(), 1.0, 1e-15));
        let p2 = KernelParams::cosine_temp(0.5, id.clone());
        assert_eq!(cosine_temp_exponent(&[1.0, 0.0], &[0.0, 1.0], &p2).unwrap(), 0.0);
        let p3 = KernelParams::cosine_temp(0.1, id);
        let e = cosine_temp_exponent(&[1.0, 0.0], &[1.0, 1.0], &p3).unwrap();
        assert!(approx(e, 7.0710678118654755, 1e-12), "{e}");
    }

    #[test]
    fn affine_cosine_examples() {
        let p = KernelParams::affine_cosine(1.0, 0.0);
        assert!(approx(affine_cosine_exponent(&[2.0, 1.0], &[2.0, 1.0], &p).unwrap(), 1.0, 1e-15));
        // cos = 0.8 for (1, 0) vs (0.8, 0.6)
        let p = KernelParams::affine_cosine(10.0, -5.0);
        let e = affine_cosine_exponent(&[1.0, 0.0], &[0.8, 0.6], &p).unwrap();
        assert!(approx(e, 3.0, 1e-12), "{e}");
    }

    #[test]
    fn zero_norm_cosine_is_zero_with_zero_gradient() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        let mut g = vec![0.0; 2];
        add_cosine_grad(&[0.0, 0.0], &[1.0, 2.0], 1.0, &mut g);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn gamma_gradient_is_cosine() {
        let batch =
            RepresentationBatch::from_pairs(Group::Labeled, vec![(vec![1.0, 0.0], vec![0.8, 0.6])]).unwrap();
        let p = KernelParams::affine_cosine(10.0, -5.0);
        // dL/de_01 = 1 only
        let (_, kg) = backprop(&batch, &p, &[0.0, 1.0, 0.0, 0.0], 0.0).unwrap();
        assert!(approx(kg.gamma, 0.8, 1e-12));
    }

    #[test]
    fn exponent_matrix_matches_scalar_kernels() {
        let batch = RepresentationBatch::from_pairs(
            Group::Unlabeled,
            vec![
                (vec![0.2, -1.0, 0.5], vec![1.5, 0.1, -0.3]),
                (vec![-0.7, 0.4, 2.0], vec![0.0, 0.9, 0.9]),
            ],
        )
        .unwrap();
        let proj = Projection::new(2, 3, vec![0.5, -0.2, 1.0, 0.3, 0.8, -0.6]).unwrap();
        for params in [
            KernelParams::sq_euclid(),
            KernelParams::cosine_temp(0.3, Some(proj)),
            KernelParams::affine_cosine(4.0, 1.5),
        ] {
            let m = exponent_matrix(&batch, &params).unwrap();
            for a in 0..4 {
                for b in 0..4 {
                    let want = exponent(batch.embedding(a), batch.embedding(b), &params).unwrap();
                    assert!(approx(m.get(a, b), want, 1e-12));
                    assert_eq!(m.get(a, b), m.get(b, a));
                }
            }
        }
    }

    #[test]
    fn cosine_matrices_are_scale_invariant() {
        let batch =
            RepresentationBatch::from_pairs(Group::Labeled, vec![(vec![0.2, -1.0], vec![1.5, 0.1])]).unwrap();
        let scaled = batch.map_embeddings(|_, z| z.iter().map(|v| v * 3.5).collect()).unwrap();
        for params in [KernelParams::cosine_temp(0.5, None), KernelParams::affine_cosine(10.0, -5.0)] {
            let a = exponent_matrix(&batch, &params).unwrap();
            let b = exponent_matrix(&scaled, &params).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!(approx(a.get(i, j), b.get(i, j), 1e-12));
                }
            }
        }
    }

    #[test]
    fn params_validation() {
        assert!(KernelParams::cosine_temp(0.0, None).validate().is_err());
        assert!(KernelParams::affine_cosine(-1.0, 0.0).validate().is_err());
        let mut p = KernelParams::sq_euclid();
        p.proj = Some(Projection::identity(2));
        assert!(p.validate().is_err());
        let mut p = KernelParams::affine_cosine(1e-6, 0.0);
        p.clamp_gamma();
        assert_eq!(p.gamma, GAMMA_FLOOR);
    }
}
