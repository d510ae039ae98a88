//! Central-difference gradient verification.

use crate::affinity::AffinityMatrix;
use crate::batch::RepresentationBatch;
use crate::error::{GclError, Result};
use crate::kernel::{KernelKind, KernelParams, Projection};

use super::{gcl, gcl_grad, GclOptions};

/// Floor on the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub coordinates: usize,
}

pub fn numerical_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(GclError::Param(format!("step must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Richardson extrapolation of two central differences,
/// `(4 D(h/2) - D(h)) / 3`, which cancels the `h^2` truncation term.
pub fn extrapolated_gradient<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let coarse = numerical_gradient(&mut f, x, h)?;
    let fine = numerical_gradient(&mut f, x, h / 2.0)?;
    Ok(fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect())
}

/// Finite-difference scheme used by [`finite_diff_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`
    #[default]
    Central,
    /// Central differences at `h` and `h/2` combined by Richardson extrapolation.
    Extrapolated,
}

/// Worst coordinate-wise `|a - n| / max(|a|, |n|, 1e-8)` between `analytic`
/// and the central-difference gradient of `f` at `x`.
pub fn finite_diff_check<F>(f: F, x: &[f64], analytic: &[f64], h: f64, stencil: Stencil) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if analytic.len() != x.len() {
        return Err(GclError::Shape(format!(
            "{} analytic components for {} coordinates",
            analytic.len(),
            x.len()
        )));
    }
    let numeric = match stencil {
        Stencil::Central => numerical_gradient(f, x, h)?,
        Stencil::Extrapolated => extrapolated_gradient(f, x, h)?,
    };
    let mut out = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        coordinates: x.len(),
    };
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR);
        if rel > out.max_rel_error {
            out.max_rel_error = rel;
            out.worst_index = i;
        }
    }
    Ok(out)
}

/// Flat layout of everything the ratio loss is differentiated against:
/// all embeddings in batch order, then `gamma`, `beta` (affine-cosine) or the
/// projection weights (cosine-temp with a head).
#[derive(Debug, Clone)]
pub struct GclParamLayout {
    batch: RepresentationBatch,
    params: KernelParams,
}

impl GclParamLayout {
    pub fn new(batch: &RepresentationBatch, params: &KernelParams) -> Self {
        Self {
            batch: batch.clone(),
            params: params.clone(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self.batch.embeddings().flatten().copied().collect();
        match (self.params.kind, &self.params.proj) {
            (KernelKind::AffineCosine, _) => x.extend([self.params.gamma, self.params.beta]),
            (KernelKind::CosineTemp, Some(p)) => x.extend(&p.weights),
            _ => {}
        }
        x
    }

    pub fn unflatten(&self, x: &[f64]) -> Result<(RepresentationBatch, KernelParams)> {
        let dim = self.batch.dim();
        let n_emb = self.batch.len() * dim;
        let batch = self
            .batch
            .map_embeddings(|pos, _| x[pos * dim..(pos + 1) * dim].to_vec())?;
        let mut params = self.params.clone();
        let rest = &x[n_emb..];
        match (params.kind, &params.proj) {
            (KernelKind::AffineCosine, _) => {
                params.gamma = rest[0];
                params.beta = rest[1];
            }
            (KernelKind::CosineTemp, Some(p)) => {
                params.proj = Some(Projection::new(p.out_dim, p.in_dim, rest.to_vec())?);
            }
            _ => {}
        }
        Ok((batch, params))
    }
}

/// Compares [`gcl_grad`] against central differences of [`gcl`].
pub fn check_gcl_gradients(
    batch: &RepresentationBatch,
    affinity: &AffinityMatrix,
    params: &KernelParams,
    options: &GclOptions,
    h: f64,
    stencil: Stencil,
) -> Result<GradCheck> {
    let report = gcl_grad(batch, affinity, params, options)?;
    let mut analytic: Vec<f64> = report.grad_z.iter().flatten().flatten().copied().collect();
    let kg = report.grad_kernel.unwrap_or_default();
    match (params.kind, &params.proj) {
        (KernelKind::AffineCosine, _) => analytic.extend([kg.gamma, kg.beta]),
        (KernelKind::CosineTemp, Some(_)) => analytic.extend(kg.proj.unwrap_or_default()),
        _ => {}
    }
    let layout = GclParamLayout::new(batch, params);
    let x = layout.flatten();
    finite_diff_check(
        |x| {
            let (b, p) = layout.unflatten(x)?;
            Ok(gcl(&b, affinity, &p, options)?.loss)
        },
        &x,
        &analytic,
        h,
        stencil,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact_to_rounding() {
        let x = [0.3, -1.2, 2.5];
        let analytic: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let check = finite_diff_check(|z| Ok(z.iter().map(|v| v * v).sum()), &x, &analytic, 1e-4, Stencil::Central).unwrap();
        assert!(check.max_rel_error < 1e-9, "{check:?}");
        assert_eq!(check.coordinates, 3);
    }

    #[test]
    fn detects_wrong_gradient() {
        let x = [1.0, 2.0];
        let check = finite_diff_check(|z| Ok(z[0] * z[1]), &x, &[2.0, 2.0], 1e-4, Stencil::Central).unwrap();
        assert_eq!(check.worst_index, 1);
        assert!(check.max_rel_error > 0.4);
    }

    #[test]
    fn rejects_non_positive_step() {
        assert!(numerical_gradient(|_| Ok(0.0), &[1.0], 0.0).is_err());
    }
}
