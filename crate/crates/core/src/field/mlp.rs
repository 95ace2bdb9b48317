use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Silu,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Relu => x.max(0.0),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
}

impl Default for MlpSpec {
    fn default() -> Self {
        MlpSpec {
            hidden_width: 64,
            hidden_layers: 2,
            activation: Activation::Silu,
        }
    }
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err(Error::InvalidArgument("MLP needs at least one hidden layer".into()));
        }
        Ok(())
    }

    /// (fan_in, fan_out) of every layer, output head last.
    pub fn layer_shapes(&self, input: usize, output: usize) -> Vec<(usize, usize)> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(self.hidden_width).take(self.hidden_layers));
        dims.push(output);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Fully connected network with all parameters in one flat vector laid out
/// layer by layer as `[W (out × in, row-major), b (out)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub shapes: Vec<(usize, usize)>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

/// Intermediate values of a batched forward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    pub batch: usize,
    /// Layer inputs, `inputs[l]` is batch × fan_in.
    pub inputs: Vec<Vec<f64>>,
    /// Hidden pre-activations, batch × fan_out.
    pub pre: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(spec: &MlpSpec, input: usize, output: usize, rng: &mut Rng) -> Mlp {
        let shapes = spec.layer_shapes(input, output);
        let mut params = Vec::with_capacity(shapes.iter().map(|(i, o)| i * o + o).sum());
        for &(fan_in, fan_out) in &shapes {
            let bound = (6.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..bound));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Mlp {
            shapes,
            activation: spec.activation,
            params,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.shapes.last().map(|s| s.1).unwrap_or(0)
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.shapes.len());
        let mut acc = 0;
        for &(i, o) in &self.shapes {
            off.push(acc);
            acc += i * o + o;
        }
        off
    }

    /// Forward a batch (batch × input). Returns batch × output.
    pub fn forward(&self, x: &[f64], batch: usize, cache: Option<&mut MlpCache>) -> Vec<f64> {
        let offsets = self.offsets();
        let last = self.shapes.len() - 1;
        let mut inputs = Vec::new();
        let mut pres = Vec::new();
        let mut cur = x.to_vec();
        for (l, &(fi, fo)) in self.shapes.iter().enumerate() {
            let w = &self.params[offsets[l]..offsets[l] + fi * fo];
            let b = &self.params[offsets[l] + fi * fo..offsets[l] + fi * fo + fo];
            let mut out = vec![0.0; batch * fo];
            for r in 0..batch {
                out[r * fo..(r + 1) * fo].copy_from_slice(b);
            }
            // out (batch × fo) += cur (batch × fi) · Wᵀ (fi × fo)
            unsafe {
                matrixmultiply::dgemm(
                    batch, fi, fo, 1.0,
                    cur.as_ptr(), fi as isize, 1,
                    w.as_ptr(), 1, fi as isize,
                    1.0,
                    out.as_mut_ptr(), fo as isize, 1,
                );
            }
            if l < last {
                let act: Vec<f64> = out.iter().map(|&v| self.activation.apply(v)).collect();
                inputs.push(std::mem::replace(&mut cur, act));
                pres.push(out);
            } else {
                inputs.push(std::mem::take(&mut cur));
                cur = out;
            }
        }
        if let Some(c) = cache {
            c.batch = batch;
            c.inputs = inputs;
            c.pre = pres;
        }
        cur
    }

    /// Accumulate parameter gradients into `grad` (same layout as
    /// `params`) and return dLoss/dinput (batch × input).
    pub fn backward(&self, cache: &MlpCache, upstream: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let offsets = self.offsets();
        let batch = cache.batch;
        let mut delta = upstream.to_vec();
        for l in (0..self.shapes.len()).rev() {
            let (fi, fo) = self.shapes[l];
            if l < self.shapes.len() - 1 {
                for (d, &p) in delta.iter_mut().zip(&cache.pre[l]) {
                    *d *= self.activation.derivative(p);
                }
            }
            let input = &cache.inputs[l];
            let (gw, gb) = grad[offsets[l]..offsets[l] + fi * fo + fo].split_at_mut(fi * fo);
            // gW (fo × fi) += deltaᵀ (fo × batch) · input (batch × fi)
            unsafe {
                matrixmultiply::dgemm(
                    fo, batch, fi, 1.0,
                    delta.as_ptr(), 1, fo as isize,
                    input.as_ptr(), fi as isize, 1,
                    1.0,
                    gw.as_mut_ptr(), fi as isize, 1,
                );
            }
            for r in 0..batch {
                for (g, d) in gb.iter_mut().zip(&delta[r * fo..(r + 1) * fo]) {
                    *g += d;
                }
            }
            let w = &self.params[offsets[l]..offsets[l] + fi * fo];
            let mut dx = vec![0.0; batch * fi];
            // dx (batch × fi) = delta (batch × fo) · W (fo × fi)
            unsafe {
                matrixmultiply::dgemm(
                    batch, fo, fi, 1.0,
                    delta.as_ptr(), fo as isize, 1,
                    w.as_ptr(), fi as isize, 1,
                    0.0,
                    dx.as_mut_ptr(), fi as isize, 1,
                );
            }
            delta = dx;
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn silu_derivative_matches_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (Activation::Silu.apply(x + h) - Activation::Silu.apply(x - h)) / (2.0 * h);
            assert!((fd - Activation::Silu.derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn backward_matches_difference() {
        let spec = MlpSpec {
            hidden_width: 7,
            hidden_layers: 2,
            activation: Activation::Silu,
        };
        let mut mlp = Mlp::new(&spec, 4, 3, &mut rng_from_seed(3));
        for (i, p) in mlp.params.iter_mut().enumerate() {
            *p += 0.01 * (i as f64).sin();
        }
        let x = [0.3, -0.2, 0.9, 0.1, -0.5, 0.4, 0.2, 0.8];
        let up = [0.5, -1.0, 0.25, 1.0, 0.3, -0.7];
        let loss = |m: &Mlp| -> f64 {
            m.forward(&x, 2, None).iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        let mut cache = MlpCache::default();
        mlp.forward(&x, 2, Some(&mut cache));
        let mut grad = vec![0.0; mlp.params.len()];
        let dx = mlp.backward(&cache, &up, &mut grad);
        for k in (0..mlp.params.len()).step_by(5) {
            let mut a = mlp.clone();
            let mut b = mlp.clone();
            a.params[k] += 1e-6;
            b.params[k] -= 1e-6;
            let fd = (loss(&a) - loss(&b)) / 2e-6;
            assert!((fd - grad[k]).abs() < 1e-7 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", grad[k]);
        }
        assert_eq!(dx.len(), 8);
    }
}
