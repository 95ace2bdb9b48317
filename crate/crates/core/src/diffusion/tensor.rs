use crate::image::Image;

/// Single-sample feature map, channel-major (C, H, W).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

#[inline]
pub fn sigmoid32(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn silu(x: f32) -> f32 {
    x * sigmoid32(x)
}

#[inline]
pub fn silu_grad(x: f32) -> f32 {
    let s = sigmoid32(x);
    s * (1.0 + x * (1.0 - s))
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Tensor {
        Tensor {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }

    pub fn zeros_like(t: &Tensor) -> Tensor {
        Tensor::zeros(t.c, t.h, t.w)
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f32>) -> Tensor {
        assert_eq!(data.len(), c * h * w);
        Tensor { c, h, w, data }
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, o: &Tensor) -> bool {
        (self.c, self.h, self.w) == (o.c, o.h, o.w)
    }

    /// Interleaved RGB image in [0, 1] to a (3, H, W) tensor in [-1, 1].
    pub fn from_image(img: &Image) -> Tensor {
        let (w, h, ch) = (img.width, img.height, img.channels);
        let mut t = Tensor::zeros(ch, h, w);
        for i in 0..w * h {
            for c in 0..ch {
                t.data[c * w * h + i] = (2.0 * img.data[i * ch + c] - 1.0) as f32;
            }
        }
        t
    }

    /// Inverse of [`Tensor::from_image`], clamped to [0, 1].
    pub fn to_image(&self) -> Image {
        let mut img = Image::new(self.w, self.h, self.c);
        let p = self.plane();
        for i in 0..p {
            for c in 0..self.c {
                img.data[i * self.c + c] = ((self.data[c * p + i] as f64 + 1.0) * 0.5).clamp(0.0, 1.0);
            }
        }
        img
    }

    pub fn add_assign(&mut self, o: &Tensor) {
        assert!(self.same_shape(o));
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }

    pub fn scaled(&self, s: f32) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn silu(&self) -> Tensor {
        self.map(silu)
    }

    /// dL/dx of y = silu(x), given x and dL/dy.
    pub fn silu_backward(x: &Tensor, dy: &Tensor) -> Tensor {
        Tensor {
            c: x.c,
            h: x.h,
            w: x.w,
            data: x.data.iter().zip(&dy.data).map(|(&x, &g)| g * silu_grad(x)).collect(),
        }
    }

    /// 2×2 average pooling (H and W must be even).
    pub fn avg_pool2(&self) -> Tensor {
        let (h2, w2) = (self.h / 2, self.w / 2);
        let mut out = Tensor::zeros(self.c, h2, w2);
        for c in 0..self.c {
            let src = &self.data[c * self.plane()..(c + 1) * self.plane()];
            let dst = &mut out.data[c * h2 * w2..(c + 1) * h2 * w2];
            for y in 0..h2 {
                for x in 0..w2 {
                    let i = 2 * y * self.w + 2 * x;
                    dst[y * w2 + x] = 0.25 * (src[i] + src[i + 1] + src[i + self.w] + src[i + self.w + 1]);
                }
            }
        }
        out
    }

    pub fn avg_pool2_backward(&self, h: usize, w: usize) -> Tensor {
        let mut out = Tensor::zeros(self.c, h, w);
        let p = self.plane();
        for c in 0..self.c {
            for y in 0..h {
                for x in 0..w {
                    out.data[c * h * w + y * w + x] = 0.25 * self.data[c * p + (y / 2) * self.w + x / 2];
                }
            }
        }
        out
    }

    /// Nearest-neighbour ×2 upsampling.
    pub fn upsample2(&self) -> Tensor {
        let (h2, w2) = (self.h * 2, self.w * 2);
        let mut out = Tensor::zeros(self.c, h2, w2);
        let p = self.plane();
        for c in 0..self.c {
            for y in 0..h2 {
                for x in 0..w2 {
                    out.data[c * h2 * w2 + y * w2 + x] = self.data[c * p + (y / 2) * self.w + x / 2];
                }
            }
        }
        out
    }

    pub fn upsample2_backward(&self) -> Tensor {
        let (h2, w2) = (self.h / 2, self.w / 2);
        let mut out = Tensor::zeros(self.c, h2, w2);
        let p = self.plane();
        for c in 0..self.c {
            for y in 0..self.h {
                for x in 0..self.w {
                    out.data[c * h2 * w2 + (y / 2) * w2 + x / 2] += self.data[c * p + y * self.w + x];
                }
            }
        }
        out
    }

    pub fn mean_squared_error(&self, o: &Tensor) -> f64 {
        assert!(self.same_shape(o));
        let s: f64 = self
            .data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| {
                let d = (*a - *b) as f64;
                d * d
            })
            .sum();
        s / self.data.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_and_upsample_adjoints() {
        let x = Tensor::from_vec(2, 4, 4, (0..32).map(|i| (i as f32 * 0.7).sin()).collect());
        let g = Tensor::from_vec(2, 2, 2, (0..8).map(|i| (i as f32 * 1.3).cos()).collect());
        // <pool(x), g> = <x, pool*(g)>
        let lhs: f32 = x.avg_pool2().data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let rhs: f32 = x.data.iter().zip(&g.avg_pool2_backward(4, 4).data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-5);
        let lhs: f32 = g.upsample2().data.iter().zip(&x.data).map(|(a, b)| a * b).sum();
        let rhs: f32 = g.data.iter().zip(&x.upsample2_backward().data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-5);
    }

    #[test]
    fn image_round_trip() {
        let img = Image::from_fn(3, 2, 3, |x, y| [x as f64 / 2.0, y as f64, 0.25]);
        let t = Tensor::from_image(&img);
        assert_eq!(t.data[0], -1.0);
        let back = t.to_image();
        for (a, b) in back.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
