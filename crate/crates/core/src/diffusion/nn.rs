//! Layers with hand-written backward passes. Parameters carry their own
//! gradient and Adam moments; `trainable` gates gradient accumulation.

use rand::Rng as _;

use super::tensor::{silu, silu_grad, Tensor};
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct Param {
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub trainable: bool,
}

impl Param {
    pub fn new(value: Vec<f32>) -> Param {
        let n = value.len();
        Param {
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
            trainable: true,
        }
    }

    pub fn uniform(n: usize, bound: f32, rng: &mut Rng) -> Param {
        Param::new((0..n).map(|_| rng.random_range(-bound..=bound)).collect())
    }

    pub fn zeros(n: usize) -> Param {
        Param::new(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn reset_moments(&mut self) {
        self.m.iter_mut().for_each(|g| *g = 0.0);
        self.v.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn grad_sq_norm(&self) -> f64 {
        self.grad.iter().map(|g| (*g as f64) * (*g as f64)).sum()
    }

    /// One Adam step with bias correction for step `t` (1-based); the
    /// gradient is multiplied by `grad_scale` first.
    pub fn adam_step(&mut self, cfg: &AdamParams, t: u64, grad_scale: f32) {
        if !self.trainable {
            return;
        }
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        for i in 0..self.value.len() {
            let g = self.grad[i] * grad_scale;
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            self.value[i] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamParams {
    pub fn with_lr(lr: f32) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Visitor over named parameters.
pub type Visit<'a> = dyn FnMut(&str, &mut Param) + 'a;

/// Square convolution with stride 1 and "same" padding (k = 1 or 3).
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub weight: Param,
    pub bias: Param,
}

impl Conv2d {
    pub fn new(cin: usize, cout: usize, k: usize, rng: &mut Rng) -> Conv2d {
        let fan_in = cin * k * k;
        let bound = (3.0 / fan_in as f32).sqrt();
        Conv2d {
            cin,
            cout,
            k,
            weight: Param::uniform(cout * fan_in, bound, rng),
            bias: Param::zeros(cout),
        }
    }

    pub fn zero_init(cin: usize, cout: usize, k: usize) -> Conv2d {
        Conv2d {
            cin,
            cout,
            k,
            weight: Param::zeros(cout * cin * k * k),
            bias: Param::zeros(cout),
        }
    }

    pub fn visit(&mut self, prefix: &str, f: &mut Visit) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        f(&format!("{prefix}.bias"), &mut self.bias);
    }

    fn im2col(&self, x: &Tensor) -> Vec<f32> {
        let (h, w, k) = (x.h, x.w, self.k);
        let pad = (k / 2) as isize;
        let plane = h * w;
        let mut cols = vec![0.0f32; self.cin * k * k * plane];
        for ci in 0..self.cin {
            let src = &x.data[ci * plane..(ci + 1) * plane];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        let srow = sy as usize * w;
                        for xx in x0..x1 {
                            dst[y * w + xx] = src[srow + (xx as isize + dx) as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f32], h: usize, w: usize) -> Tensor {
        let k = self.k;
        let pad = (k / 2) as isize;
        let plane = h * w;
        let mut out = Tensor::zeros(self.cin, h, w);
        for ci in 0..self.cin {
            let dst = &mut out.data[ci * plane..(ci + 1) * plane];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    let src = &cols[row * plane..(row + 1) * plane];
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let x0 = (-dx).max(0) as usize;
                        let x1 = (w as isize - dx).min(w as isize) as usize;
                        let srow = sy as usize * w;
                        for xx in x0..x1 {
                            dst[srow + (xx as isize + dx) as usize] += src[y * w + xx];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.cin, "conv input channels");
        let plane = x.plane();
        let kk = self.cin * self.k * self.k;
        let owned;
        let cols: &[f32] = if self.k == 1 {
            &x.data
        } else {
            owned = self.im2col(x);
            &owned
        };
        let mut out = Tensor::zeros(self.cout, x.h, x.w);
        for co in 0..self.cout {
            out.data[co * plane..(co + 1) * plane]
                .iter_mut()
                .for_each(|v| *v = self.bias.value[co]);
        }
        unsafe {
            matrixmultiply::sgemm(
                self.cout, kk, plane, 1.0,
                self.weight.value.as_ptr(), kk as isize, 1,
                cols.as_ptr(), plane as isize, 1,
                1.0,
                out.data.as_mut_ptr(), plane as isize, 1,
            );
        }
        out
    }

    /// Accumulate parameter gradients (when trainable) and return dL/dx
    /// (when `need_dx`).
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let plane = x.plane();
        let kk = self.cin * self.k * self.k;
        let trainable = self.weight.trainable;
        if !trainable && !need_dx {
            return None;
        }
        let owned;
        let cols: &[f32] = if self.k == 1 {
            &x.data
        } else if trainable {
            owned = self.im2col(x);
            &owned
        } else {
            &[]
        };
        if trainable {
            unsafe {
                matrixmultiply::sgemm(
                    self.cout, plane, kk, 1.0,
                    dy.data.as_ptr(), plane as isize, 1,
                    cols.as_ptr(), 1, plane as isize,
                    1.0,
                    self.weight.grad.as_mut_ptr(), kk as isize, 1,
                );
            }
        }
        if self.bias.trainable {
            for co in 0..self.cout {
                self.bias.grad[co] += dy.data[co * plane..(co + 1) * plane].iter().sum::<f32>();
            }
        }
        if !need_dx {
            return None;
        }
        let mut dcols = vec![0.0f32; kk * plane];
        unsafe {
            matrixmultiply::sgemm(
                kk, self.cout, plane, 1.0,
                self.weight.value.as_ptr(), 1, kk as isize,
                dy.data.as_ptr(), plane as isize, 1,
                0.0,
                dcols.as_mut_ptr(), plane as isize, 1,
            );
        }
        if self.k == 1 {
            Some(Tensor::from_vec(self.cin, x.h, x.w, dcols))
        } else {
            Some(self.col2im(&dcols, x.h, x.w))
        }
    }
}

/// y = W x + b on vectors.
#[derive(Clone, Debug)]
pub struct Dense {
    pub din: usize,
    pub dout: usize,
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new(din: usize, dout: usize, rng: &mut Rng) -> Dense {
        let bound = (3.0 / din as f32).sqrt();
        Dense {
            din,
            dout,
            weight: Param::uniform(din * dout, bound, rng),
            bias: Param::zeros(dout),
        }
    }

    pub fn zero_init(din: usize, dout: usize) -> Dense {
        Dense {
            din,
            dout,
            weight: Param::zeros(din * dout),
            bias: Param::zeros(dout),
        }
    }

    pub fn visit(&mut self, prefix: &str, f: &mut Visit) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        f(&format!("{prefix}.bias"), &mut self.bias);
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        assert_eq!(x.len(), self.din);
        (0..self.dout)
            .map(|o| {
                let row = &self.weight.value[o * self.din..(o + 1) * self.din];
                self.bias.value[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f32>()
            })
            .collect()
    }

    pub fn backward(&mut self, x: &[f32], dy: &[f32]) -> Vec<f32> {
        if self.weight.trainable {
            for o in 0..self.dout {
                let g = dy[o];
                if g == 0.0 {
                    continue;
                }
                let row = &mut self.weight.grad[o * self.din..(o + 1) * self.din];
                for (r, xi) in row.iter_mut().zip(x) {
                    *r += g * xi;
                }
            }
        }
        if self.bias.trainable {
            for (b, g) in self.bias.grad.iter_mut().zip(dy) {
                *b += g;
            }
        }
        let mut dx = vec![0.0f32; self.din];
        for o in 0..self.dout {
            let g = dy[o];
            if g == 0.0 {
                continue;
            }
            let row = &self.weight.value[o * self.din..(o + 1) * self.din];
            for (d, w) in dx.iter_mut().zip(row) {
                *d += g * w;
            }
        }
        dx
    }
}

pub fn silu_vec(x: &[f32]) -> Vec<f32> {
    x.iter().map(|&v| silu(v)).collect()
}

pub fn silu_vec_backward(x: &[f32], dy: &[f32]) -> Vec<f32> {
    x.iter().zip(dy).map(|(&x, &g)| g * silu_grad(x)).collect()
}

/// Pre-activation residual block with an embedding-driven channel bias:
/// h = conv1(silu x) + proj(silu e); y = x + conv2(silu h).
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub conv1: Conv2d,
    pub proj: Dense,
    pub conv2: Conv2d,
}

#[derive(Clone, Debug)]
pub struct ResBlockCache {
    x: Tensor,
    h: Tensor,
}

impl ResBlock {
    pub fn new(channels: usize, embed: usize, rng: &mut Rng) -> ResBlock {
        ResBlock {
            conv1: Conv2d::new(channels, channels, 3, rng),
            proj: Dense::new(embed, channels, rng),
            conv2: Conv2d::zero_init(channels, channels, 3),
        }
    }

    pub fn visit(&mut self, prefix: &str, f: &mut Visit) {
        self.conv1.visit(&format!("{prefix}.conv1"), f);
        self.proj.visit(&format!("{prefix}.proj"), f);
        self.conv2.visit(&format!("{prefix}.conv2"), f);
    }

    /// `emb` is silu of the conditioning embedding.
    pub fn forward(&self, x: &Tensor, emb: &[f32]) -> (Tensor, ResBlockCache) {
        let mut h = self.conv1.forward(&x.silu());
        let bias = self.proj.forward(emb);
        let plane = h.plane();
        for (c, b) in bias.iter().enumerate() {
            h.data[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v += b);
        }
        let mut y = self.conv2.forward(&h.silu());
        y.add_assign(x);
        (
            y,
            ResBlockCache {
                x: x.clone(),
                h,
            },
        )
    }

    /// Returns dL/dx; adds dL/d(emb) into `d_emb`.
    pub fn backward(&mut self, cache: &ResBlockCache, dy: &Tensor, emb: &[f32], d_emb: &mut [f32]) -> Tensor {
        let b = cache.h.silu();
        let db = self.conv2.backward(&b, dy, true).unwrap();
        let dh = Tensor::silu_backward(&cache.h, &db);
        let plane = dh.plane();
        let d_bias: Vec<f32> = (0..dh.c)
            .map(|c| dh.data[c * plane..(c + 1) * plane].iter().sum())
            .collect();
        for (d, g) in d_emb.iter_mut().zip(self.proj.backward(emb, &d_bias)) {
            *d += g;
        }
        let a = cache.x.silu();
        let da = self.conv1.backward(&a, &dh, true).unwrap();
        let mut dx = Tensor::silu_backward(&cache.x, &da);
        dx.add_assign(dy);
        dx
    }
}
