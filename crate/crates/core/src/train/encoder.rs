//! Two-layer perceptron encoder `z = W2 tanh(W1 x + b1) + b2` with manual
//! backpropagation. All parameters live in one flat vector so the optimizer
//! and checkpoint code can treat them uniformly.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{GclError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl EncoderShape {
    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output * self.hidden;
        [w1, b1, w2, b2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    shape: EncoderShape,
    params: Vec<f64>,
}

/// Hidden activations kept from the forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    hidden: Vec<f64>,
}

impl Encoder {
    /// Glorot-style normal initialization with zero biases.
    pub fn init<R: Rng + ?Sized>(shape: EncoderShape, rng: &mut R) -> Self {
        let mut params = vec![0.0; shape.param_count()];
        let [w1, b1, w2, b2] = shape.offsets();
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let scale = (2.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[range] {
                let v: f64 = StandardNormal.sample(rng);
                *p = scale * v;
            }
        };
        fill(w1..b1, shape.input, shape.hidden);
        fill(w2..b2, shape.hidden, shape.output);
        Self { shape, params }
    }

    pub fn from_params(shape: EncoderShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.param_count() {
            return Err(GclError::Shape(format!(
                "{} parameters for an encoder needing {}",
                params.len(),
                shape.param_count()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(GclError::Numeric("encoder parameters".into()));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> EncoderShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// `(w1, b1, w2, b2)` views.
    pub fn layers(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let [w1, b1, w2, b2] = self.shape.offsets();
        (
            &self.params[w1..b1],
            &self.params[b1..w2],
            &self.params[w2..b2],
            &self.params[b2..],
        )
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let s = self.shape;
        if x.len() != s.input {
            return Err(GclError::Shape(format!(
                "encoder input of length {}, expected {}",
                x.len(),
                s.input
            )));
        }
        let (w1, b1, w2, b2) = self.layers();
        let hidden: Vec<f64> = (0..s.hidden)
            .map(|h| {
                let row = &w1[h * s.input..(h + 1) * s.input];
                (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b1[h]).tanh()
            })
            .collect();
        let z: Vec<f64> = (0..s.output)
            .map(|o| {
                let row = &w2[o * s.hidden..(o + 1) * s.hidden];
                row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>() + b2[o]
            })
            .collect();
        if z.iter().any(|v| !v.is_finite()) {
            return Err(GclError::Numeric("encoder output".into()));
        }
        Ok((z, ForwardCache { hidden }))
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    /// Accumulates `dL/dparams` for one sample into `grad`.
    pub fn backward(&self, x: &[f64], cache: &ForwardCache, grad_z: &[f64], grad: &mut [f64]) {
        let s = self.shape;
        let [ow1, ob1, ow2, ob2] = s.offsets();
        let (_, _, w2, _) = self.layers();
        let mut grad_hidden = vec![0.0; s.hidden];
        for (o, g) in grad_z.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            grad[ob2 + o] += g;
            for h in 0..s.hidden {
                grad[ow2 + o * s.hidden + h] += g * cache.hidden[h];
                grad_hidden[h] += g * w2[o * s.hidden + h];
            }
        }
        for h in 0..s.hidden {
            let pre = grad_hidden[h] * (1.0 - cache.hidden[h] * cache.hidden[h]);
            if pre == 0.0 {
                continue;
            }
            grad[ob1 + h] += pre;
            for (i, v) in x.iter().enumerate() {
                grad[ow1 + h * s.input + i] += pre * v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{finite_diff_check, Stencil};
    use crate::rng::{stream, StreamName};

    #[test]
    fn backward_matches_finite_differences() {
        let shape = EncoderShape {
            input: 5,
            hidden: 7,
            output: 3,
        };
        let mut rng = stream(3, StreamName::Init);
        let enc = Encoder::init(shape, &mut rng);
        let x: Vec<f64> = (0..5).map(|i| 0.3 * i as f64 - 0.5).collect();
        let w = [0.7, -1.3, 0.4];
        let objective = |p: &[f64]| -> Result<f64> {
            let e = Encoder::from_params(shape, p.to_vec())?;
            Ok(e.encode(&x)?.iter().zip(&w).map(|(z, c)| z * c).sum())
        };
        let (_, cache) = enc.forward(&x).unwrap();
        let mut grad = vec![0.0; shape.param_count()];
        enc.backward(&x, &cache, &w, &mut grad);
        let check = finite_diff_check(objective, enc.params(), &grad, 1e-5, Stencil::Central).unwrap();
        assert!(check.max_rel_error < 1e-6, "{check:?}");
    }

    #[test]
    fn rejects_wrong_input_and_param_count() {
        let shape = EncoderShape {
            input: 2,
            hidden: 2,
            output: 2,
        };
        let enc = Encoder::init(shape, &mut stream(0, StreamName::Init));
        assert!(enc.forward(&[1.0]).is_err());
        assert!(Encoder::from_params(shape, vec![0.0; 3]).is_err());
    }
}
