use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{gelu, gelu_grad, LN_EPS};
use crate::error::{Error, Result};

pub const OUT_DIM: usize = 64;
pub const DEFAULT_DROPOUT: f64 = 0.1;

/// Two dense layers with a skip connection and a closing layer norm:
///
/// ```text
/// p = W1·x + b1
/// q = W2·gelu(p) + b2
/// z = layer_norm(p + dropout(q))
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectionHead {
    in_dim: usize,
    out_dim: usize,
    dropout_rate: f64,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    ln_gain: Vec<f64>,
    ln_bias: Vec<f64>,
    /// Bumped on every parameter mutation; caches remember it.
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for ProjectionHead {
    fn eq(&self, other: &Self) -> bool {
        self.in_dim == other.in_dim
            && self.out_dim == other.out_dim
            && self.dropout_rate == other.dropout_rate
            && self.w1 == other.w1
            && self.b1 == other.b1
            && self.w2 == other.w2
            && self.b2 == other.b2
            && self.ln_gain == other.ln_gain
            && self.ln_bias == other.ln_bias
    }
}

pub enum Mode<'a> {
    /// Dropout active, mask drawn from the stream.
    Train(&'a mut dyn RngCore),
    Infer,
}

/// Intermediates of one forward pass, consumed by [`ProjectionHead::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    in_dim: usize,
    generation: u64,
    x: Vec<f64>,
    pre_gelu: Vec<f64>,
    post_gelu: Vec<f64>,
    /// Per-unit multiplier (0 or 1/(1-rate)); `None` in infer mode.
    mask: Option<Vec<f64>>,
    inv_std: f64,
    normalized: Vec<f64>,
}

impl ForwardCache {
    pub fn dropout_mask(&self) -> Option<&[f64]> {
        self.mask.as_deref()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
}

impl HeadGrads {
    pub fn zeros_like(head: &ProjectionHead) -> Self {
        Self {
            w1: vec![0.0; head.w1.len()],
            b1: vec![0.0; head.b1.len()],
            w2: vec![0.0; head.w2.len()],
            b2: vec![0.0; head.b2.len()],
            ln_gain: vec![0.0; head.ln_gain.len()],
            ln_bias: vec![0.0; head.ln_bias.len()],
        }
    }

    pub fn blocks(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("ln_gain", &self.ln_gain),
            ("ln_bias", &self.ln_bias),
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for block in [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.ln_gain,
            &mut self.ln_bias,
        ] {
            block.iter_mut().for_each(|g| *g *= factor);
        }
    }
}

impl ProjectionHead {
    /// Glorot-uniform weights, zero biases, unit layer-norm gain.
    pub fn new(in_dim: usize, out_dim: usize, dropout_rate: f64, rng: &mut dyn RngCore) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Parameter("head dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Parameter(format!("dropout_rate {dropout_rate} outside [0, 1)")));
        }
        let glorot = |rng: &mut dyn RngCore, fan_in: usize, fan_out: usize| -> Vec<f64> {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect()
        };
        let w1 = glorot(rng, in_dim, out_dim);
        let w2 = glorot(rng, out_dim, out_dim);
        Ok(Self {
            in_dim,
            out_dim,
            dropout_rate,
            w1,
            b1: vec![0.0; out_dim],
            w2,
            b2: vec![0.0; out_dim],
            ln_gain: vec![1.0; out_dim],
            ln_bias: vec![0.0; out_dim],
            generation: 0,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout_rate {rate} outside [0, 1)")));
        }
        self.dropout_rate = rate;
        self.generation += 1;
        Ok(())
    }

    pub fn ln_bias(&self) -> &[f64] {
        &self.ln_bias
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn blocks(&self) -> [(&'static str, &[f64]); 6] {
        [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("ln_gain", &self.ln_gain),
            ("ln_bias", &self.ln_bias),
        ]
    }

    /// Mutable parameter blocks. Invalidates outstanding forward caches.
    pub fn blocks_mut(&mut self) -> [(&'static str, &mut [f64]); 6] {
        self.generation += 1;
        [
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
            ("ln_gain", &mut self.ln_gain),
            ("ln_bias", &mut self.ln_bias),
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().iter().flat_map(|(_, b)| b.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape {
                expected: self.param_count(),
                actual: flat.len(),
                context: "flat head parameters",
            });
        }
        let mut offset = 0;
        for (_, block) in self.blocks_mut() {
            block.copy_from_slice(&flat[offset..offset + block.len()]);
            offset += block.len();
        }
        Ok(())
    }

    /// Checks dimensions and finiteness, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        let expect = [
            ("w1", self.in_dim * self.out_dim),
            ("b1", self.out_dim),
            ("w2", self.out_dim * self.out_dim),
            ("b2", self.out_dim),
            ("ln_gain", self.out_dim),
            ("ln_bias", self.out_dim),
        ];
        for ((name, block), (_, len)) in self.blocks().into_iter().zip(expect) {
            if block.len() != len {
                return Err(Error::Validation(format!(
                    "head block {name} has {} values, expected {len}",
                    block.len()
                )));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("head block {name} is not finite")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Validation(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64], mode: Mode<'_>) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.in_dim {
            return Err(Error::Shape {
                expected: self.in_dim,
                actual: x.len(),
                context: "projection head input",
            });
        }
        let n = self.out_dim;
        let pre_gelu: Vec<f64> = (0..n)
            .map(|r| super::dot(&self.w1[r * self.in_dim..(r + 1) * self.in_dim], x) + self.b1[r])
            .collect();
        let post_gelu: Vec<f64> = pre_gelu.iter().map(|&p| gelu(p)).collect();
        let mut second: Vec<f64> = (0..n)
            .map(|r| super::dot(&self.w2[r * n..(r + 1) * n], &post_gelu) + self.b2[r])
            .collect();

        let mask = match mode {
            Mode::Infer => None,
            Mode::Train(rng) => {
                let keep_scale = 1.0 / (1.0 - self.dropout_rate);
                let mask: Vec<f64> = (0..n)
                    .map(|_| {
                        if rng.random::<f64>() < self.dropout_rate {
                            0.0
                        } else {
                            keep_scale
                        }
                    })
                    .collect();
                second.iter_mut().zip(&mask).for_each(|(q, m)| *q *= m);
                Some(mask)
            }
        };

        let residual: Vec<f64> = pre_gelu.iter().zip(&second).map(|(p, d)| p + d).collect();
        let (mean, var) = super::moments(&residual);
        let inv_std = 1.0 / (var + LN_EPS).sqrt();
        let normalized: Vec<f64> = residual.iter().map(|v| (v - mean) * inv_std).collect();
        let z = normalized
            .iter()
            .zip(self.ln_gain.iter().zip(&self.ln_bias))
            .map(|(xh, (g, b))| g * xh + b)
            .collect();

        Ok((
            z,
            ForwardCache {
                in_dim: self.in_dim,
                generation: self.generation,
                x: x.to_vec(),
                pre_gelu,
                post_gelu,
                mask,
                inv_std,
                normalized,
            },
        ))
    }

    /// Gradients of `z·upstream` with respect to every parameter and the input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<(HeadGrads, Vec<f64>)> {
        let mut grads = HeadGrads::zeros_like(self);
        let dx = self
            .accumulate_backward(cache, upstream, &mut grads, true)?
            .expect("input gradient requested");
        Ok((grads, dx))
    }

    /// Adds this sample's parameter gradients into `grads`; optionally returns
    /// the input gradient.
    pub fn accumulate_backward(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grads: &mut HeadGrads,
        want_input_grad: bool,
    ) -> Result<Option<Vec<f64>>> {
        if cache.generation != self.generation || cache.in_dim != self.in_dim {
            return Err(Error::Contract(format!(
                "forward cache (in_dim {}, generation {}) does not match head (in_dim {}, generation {})",
                cache.in_dim, cache.generation, self.in_dim, self.generation
            )));
        }
        if upstream.len() != self.out_dim {
            return Err(Error::Shape {
                expected: self.out_dim,
                actual: upstream.len(),
                context: "upstream gradient",
            });
        }
        if grads.w1.len() != self.w1.len() || grads.w2.len() != self.w2.len() {
            return Err(Error::Contract("gradient buffers shaped for another head".into()));
        }
        let n = self.out_dim;
        let nf = n as f64;

        // layer norm
        let mut d_hat = vec![0.0; n];
        for i in 0..n {
            grads.ln_gain[i] += upstream[i] * cache.normalized[i];
            grads.ln_bias[i] += upstream[i];
            d_hat[i] = upstream[i] * self.ln_gain[i];
        }
        let mean_d = d_hat.iter().sum::<f64>() / nf;
        let mean_dx = d_hat
            .iter()
            .zip(&cache.normalized)
            .map(|(d, xh)| d * xh)
            .sum::<f64>()
            / nf;
        let d_residual: Vec<f64> = d_hat
            .iter()
            .zip(&cache.normalized)
            .map(|(d, xh)| cache.inv_std * (d - mean_d - xh * mean_dx))
            .collect();

        // dropout and second dense layer
        let d_second: Vec<f64> = match &cache.mask {
            Some(mask) => d_residual.iter().zip(mask).map(|(g, m)| g * m).collect(),
            None => d_residual.clone(),
        };
        let mut d_post = vec![0.0; n];
        for r in 0..n {
            let g = d_second[r];
            grads.b2[r] += g;
            if g == 0.0 {
                continue;
            }
            let row = &self.w2[r * n..(r + 1) * n];
            let grow = &mut grads.w2[r * n..(r + 1) * n];
            for c in 0..n {
                grow[c] += g * cache.post_gelu[c];
                d_post[c] += g * row[c];
            }
        }

        // skip path plus GELU path into the first dense layer
        let d_pre: Vec<f64> = (0..n)
            .map(|i| d_residual[i] + d_post[i] * gelu_grad(cache.pre_gelu[i]))
            .collect();
        let mut dx = want_input_grad.then(|| vec![0.0; self.in_dim]);
        for r in 0..n {
            let g = d_pre[r];
            grads.b1[r] += g;
            if g == 0.0 {
                continue;
            }
            let span = r * self.in_dim..(r + 1) * self.in_dim;
            for (gw, xv) in grads.w1[span.clone()].iter_mut().zip(&cache.x) {
                *gw += g * xv;
            }
            if let Some(dx) = dx.as_mut() {
                for (d, w) in dx.iter_mut().zip(&self.w1[span]) {
                    *d += g * w;
                }
            }
        }
        Ok(dx)
    }
}
