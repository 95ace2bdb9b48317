//! Small pixel-space U-Net predicting the injected noise.
//!
//! Layout: three resolutions (R, R/2, R/4) with one residual block each on
//! the way down, a middle block, and one block per level on the way up with
//! additive skips. A conditioning embedding (timestep MLP + mean-pooled
//! prompt tokens + optional camera encoder) drives per-channel biases in
//! every residual block. Optional control branches copy the encoder, read a
//! condition image through a small hint network, and feed the decoder
//! through zero-initialized 1×1 convolutions.

use serde::{Deserialize, Serialize};

use super::nn::{silu_vec, silu_vec_backward, AdamParams, Conv2d, Dense, Param, ResBlock, ResBlockCache, Visit};
use super::tensor::Tensor;
use super::tokens::{token_id, vocab_size, PromptTokens, IDENTIFIER, PAD};
use crate::error::{Error, Result};
use crate::geometry::ConditionKind;
use crate::rng::{fingerprint_f32, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub resolution: usize,
    pub channels: [usize; 3],
    pub embed_dim: usize,
    pub time_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            resolution: 32,
            channels: [32, 48, 64],
            embed_dim: 64,
            time_dim: 32,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 4 || self.resolution % 4 != 0 {
            return Err(Error::InvalidArgument("denoiser resolution must be a multiple of 4".into()));
        }
        if self.channels.contains(&0) || self.embed_dim == 0 || self.time_dim < 2 || self.time_dim % 2 != 0 {
            return Err(Error::InvalidArgument("denoiser widths must be positive (time_dim even)".into()));
        }
        Ok(())
    }
}

/// Which parameters a training step may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    /// Timestep MLP, token table, encoder and decoder.
    Base,
    Control(ConditionKind),
    Camera,
}

/// Condition image prepared for the network: (3, R, R) in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ControlInput {
    pub kind: ConditionKind,
    pub image: Tensor,
}

/// Everything the prediction is conditioned on besides x_t.
#[derive(Clone, Copy, Debug)]
pub struct Conditioning<'a> {
    pub tokens: &'a PromptTokens,
    pub t: usize,
    pub control: Option<&'a ControlInput>,
    /// Flattened row-major world-to-camera extrinsic.
    pub camera: Option<&'a [f64; 16]>,
}

#[derive(Clone, Debug)]
struct Encoder {
    in_conv: Conv2d,
    rb0: ResBlock,
    down1: Conv2d,
    rb1: ResBlock,
    down2: Conv2d,
    mid: ResBlock,
}

#[derive(Clone, Debug)]
struct EncoderCache {
    x: Tensor,
    rb0: ResBlockCache,
    p1: Tensor,
    rb1: ResBlockCache,
    p2: Tensor,
    mid: ResBlockCache,
    sizes: [(usize, usize); 2],
}

struct Skips {
    s0: Tensor,
    s1: Tensor,
    m: Tensor,
}

impl Encoder {
    fn new(cfg: &DenoiserConfig, rng: &mut Rng) -> Encoder {
        let [c0, c1, c2] = cfg.channels;
        let e = cfg.embed_dim;
        Encoder {
            in_conv: Conv2d::new(3, c0, 3, rng),
            rb0: ResBlock::new(c0, e, rng),
            down1: Conv2d::new(c0, c1, 1, rng),
            rb1: ResBlock::new(c1, e, rng),
            down2: Conv2d::new(c1, c2, 1, rng),
            mid: ResBlock::new(c2, e, rng),
        }
    }

    fn visit(&mut self, prefix: &str, f: &mut Visit) {
        self.in_conv.visit(&format!("{prefix}.in_conv"), f);
        self.rb0.visit(&format!("{prefix}.rb0"), f);
        self.down1.visit(&format!("{prefix}.down1"), f);
        self.rb1.visit(&format!("{prefix}.rb1"), f);
        self.down2.visit(&format!("{prefix}.down2"), f);
        self.mid.visit(&format!("{prefix}.mid"), f);
    }

    fn forward(&self, x: &Tensor, hint: Option<&Tensor>, es: &[f32]) -> (Skips, EncoderCache) {
        let mut h0 = self.in_conv.forward(x);
        if let Some(h) = hint {
            h0.add_assign(h);
        }
        let (s0, rb0) = self.rb0.forward(&h0, es);
        let p1 = s0.avg_pool2();
        let (s1, rb1) = self.rb1.forward(&self.down1.forward(&p1), es);
        let p2 = s1.avg_pool2();
        let (m, mid) = self.mid.forward(&self.down2.forward(&p2), es);
        let sizes = [(s0.h, s0.w), (s1.h, s1.w)];
        (
            Skips { s0, s1, m },
            EncoderCache {
                x: x.clone(),
                rb0,
                p1,
                rb1,
                p2,
                mid,
                sizes,
            },
        )
    }

    /// Returns dL/d(first feature map), i.e. the gradient reaching the hint.
    fn backward(&mut self, c: &EncoderCache, d: Skips, es: &[f32], d_es: &mut [f32]) -> Tensor {
        let Skips { mut s0, mut s1, m } = d;
        let dh2 = self.mid.backward(&c.mid, &m, es, d_es);
        let dp2 = self.down2.backward(&c.p2, &dh2, true).unwrap();
        s1.add_assign(&dp2.avg_pool2_backward(c.sizes[1].0, c.sizes[1].1));
        let dh1 = self.rb1.backward(&c.rb1, &s1, es, d_es);
        let dp1 = self.down1.backward(&c.p1, &dh1, true).unwrap();
        s0.add_assign(&dp1.avg_pool2_backward(c.sizes[0].0, c.sizes[0].1));
        let dh0 = self.rb0.backward(&c.rb0, &s0, es, d_es);
        self.in_conv.backward(&c.x, &dh0, false);
        dh0
    }
}

#[derive(Clone, Debug)]
struct Decoder {
    up1: Conv2d,
    rb1: ResBlock,
    up0: Conv2d,
    rb0: ResBlock,
    out: Conv2d,
}

#[derive(Clone, Debug)]
struct DecoderCache {
    u1_in: Tensor,
    rb1: ResBlockCache,
    u0_in: Tensor,
    rb0: ResBlockCache,
    d0: Tensor,
}

impl Decoder {
    fn new(cfg: &DenoiserConfig, rng: &mut Rng) -> Decoder {
        let [c0, c1, c2] = cfg.channels;
        let e = cfg.embed_dim;
        Decoder {
            up1: Conv2d::new(c2, c1, 1, rng),
            rb1: ResBlock::new(c1, e, rng),
            up0: Conv2d::new(c1, c0, 1, rng),
            rb0: ResBlock::new(c0, e, rng),
            out: Conv2d::zero_init(c0, 3, 3),
        }
    }

    fn visit(&mut self, prefix: &str, f: &mut Visit) {
        self.up1.visit(&format!("{prefix}.up1"), f);
        self.rb1.visit(&format!("{prefix}.rb1"), f);
        self.up0.visit(&format!("{prefix}.up0"), f);
        self.rb0.visit(&format!("{prefix}.rb0"), f);
        self.out.visit(&format!("{prefix}.out"), f);
    }

    fn forward(&self, s: &Skips, es: &[f32]) -> (Tensor, DecoderCache) {
        let u1_in = s.m.upsample2();
        let mut u1 = self.up1.forward(&u1_in);
        u1.add_assign(&s.s1);
        let (d1, rb1) = self.rb1.forward(&u1, es);
        let u0_in = d1.upsample2();
        let mut u0 = self.up0.forward(&u0_in);
        u0.add_assign(&s.s0);
        let (d0, rb0) = self.rb0.forward(&u0, es);
        let out = self.out.forward(&d0.silu());
        (
            out,
            DecoderCache {
                u1_in,
                rb1,
                u0_in,
                rb0,
                d0,
            },
        )
    }

    fn backward(&mut self, c: &DecoderCache, d_out: &Tensor, es: &[f32], d_es: &mut [f32]) -> Skips {
        let da = self.out.backward(&c.d0.silu(), d_out, true).unwrap();
        let dd0 = Tensor::silu_backward(&c.d0, &da);
        let du0 = self.rb0.backward(&c.rb0, &dd0, es, d_es);
        let dd1 = self.up0.backward(&c.u0_in, &du0, true).unwrap().upsample2_backward();
        let du1 = self.rb1.backward(&c.rb1, &dd1, es, d_es);
        let dm = self.up1.backward(&c.u1_in, &du1, true).unwrap().upsample2_backward();
        Skips {
            s0: du0,
            s1: du1,
            m: dm,
        }
    }
}

#[derive(Clone, Debug)]
struct ControlBranch {
    kind: ConditionKind,
    hint1: Conv2d,
    hint2: Conv2d,
    enc: Encoder,
    fuse: [Conv2d; 3],
}

struct ControlCache {
    hint_in: Tensor,
    hint_h: Tensor,
    enc: EncoderCache,
    outs: Skips,
}

impl ControlBranch {
    fn visit(&mut self, prefix: &str, f: &mut Visit) {
        self.hint1.visit(&format!("{prefix}.hint1"), f);
        self.hint2.visit(&format!("{prefix}.hint2"), f);
        self.enc.visit(&format!("{prefix}.enc"), f);
        for (i, z) in self.fuse.iter_mut().enumerate() {
            z.visit(&format!("{prefix}.fuse{i}"), f);
        }
    }

    fn forward(&self, x: &Tensor, control: &Tensor, es: &[f32]) -> (Skips, ControlCache) {
        let hint_h = self.hint1.forward(control);
        let hint = self.hint2.forward(&hint_h.silu());
        let (outs, enc) = self.enc.forward(x, Some(&hint), es);
        let fused = Skips {
            s0: self.fuse[0].forward(&outs.s0),
            s1: self.fuse[1].forward(&outs.s1),
            m: self.fuse[2].forward(&outs.m),
        };
        (
            fused,
            ControlCache {
                hint_in: control.clone(),
                hint_h,
                enc,
                outs,
            },
        )
    }

    fn backward(&mut self, c: &ControlCache, d: &Skips, es: &[f32], d_es: &mut [f32]) {
        let ds = Skips {
            s0: self.fuse[0].backward(&c.outs.s0, &d.s0, true).unwrap(),
            s1: self.fuse[1].backward(&c.outs.s1, &d.s1, true).unwrap(),
            m: self.fuse[2].backward(&c.outs.m, &d.m, true).unwrap(),
        };
        let dh = self.enc.backward(&c.enc, ds, es, d_es);
        let db = self.hint2.backward(&c.hint_h.silu(), &dh, true).unwrap();
        let dh1 = Tensor::silu_backward(&c.hint_h, &db);
        self.hint1.backward(&c.hint_in, &dh1, false);
    }
}

#[derive(Clone, Debug)]
struct CameraEncoder {
    l1: Dense,
    l2: Dense,
}

/// Noise-prediction network.
#[derive(Clone, Debug)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    time1: Dense,
    time2: Dense,
    token_table: Param,
    enc: Encoder,
    dec: Decoder,
    controls: Vec<ControlBranch>,
    camera: Option<CameraEncoder>,
    /// Adam step counter shared by all parameters.
    pub opt_step: u64,
}

struct EmbedCache {
    t_sin: Vec<f32>,
    t_h: Vec<f32>,
    tokens: Vec<u32>,
    cam_in: Option<Vec<f32>>,
    cam_h: Vec<f32>,
    e: Vec<f32>,
    es: Vec<f32>,
}

/// Activations kept by [`Denoiser::forward_cached`] for the backward pass.
pub struct DenoiserCache {
    embed: EmbedCache,
    enc: EncoderCache,
    control: Option<(usize, ControlCache)>,
    dec: DecoderCache,
}

pub const CAMERA_INPUT: usize = 16;

pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f32> {
    let half = dim / 2;
    let mut out = vec![0.0f32; dim];
    for i in 0..half {
        let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
        let a = t as f64 * freq;
        out[i] = a.sin() as f32;
        out[half + i] = a.cos() as f32;
    }
    out
}

impl Denoiser {
    pub fn new(config: DenoiserConfig, rng: &mut Rng) -> Result<Denoiser> {
        config.validate()?;
        let e = config.embed_dim;
        let time1 = Dense::new(config.time_dim, e, rng);
        let time2 = Dense::new(e, e, rng);
        let mut token_table = Param::uniform(vocab_size() * e, 1.0, rng);
        // The identifier never occurs in corpus captions; it starts neutral
        // and only acquires meaning through personalization.
        let v = token_id(IDENTIFIER).expect("identifier is in the vocabulary") as usize;
        token_table.value[v * e..(v + 1) * e].iter_mut().for_each(|x| *x = 0.0);
        Ok(Denoiser {
            time1,
            time2,
            token_table,
            enc: Encoder::new(&config, rng),
            dec: Decoder::new(&config, rng),
            controls: Vec::new(),
            camera: None,
            config,
            opt_step: 0,
        })
    }

    /// Attach a control branch whose encoder starts as a copy of the base
    /// encoder and whose fusion convolutions are zero.
    pub fn add_control(&mut self, kind: ConditionKind, rng: &mut Rng) -> Result<()> {
        if self.has_control(kind) {
            return Err(Error::InvalidArgument(format!("control branch {} already present", kind.name())));
        }
        let [c0, c1, c2] = self.config.channels;
        self.controls.push(ControlBranch {
            kind,
            hint1: Conv2d::new(3, c0, 3, rng),
            hint2: Conv2d::new(c0, c0, 3, rng),
            enc: self.enc.clone(),
            fuse: [
                Conv2d::zero_init(c0, c0, 1),
                Conv2d::zero_init(c1, c1, 1),
                Conv2d::zero_init(c2, c2, 1),
            ],
        });
        Ok(())
    }

    pub fn has_control(&self, kind: ConditionKind) -> bool {
        self.controls.iter().any(|c| c.kind == kind)
    }

    pub fn control_kinds(&self) -> Vec<ConditionKind> {
        self.controls.iter().map(|c| c.kind).collect()
    }

    /// Attach the camera encoder (two dense layers, last one zero).
    pub fn add_camera_encoder(&mut self, rng: &mut Rng) {
        let e = self.config.embed_dim;
        self.camera = Some(CameraEncoder {
            l1: Dense::new(CAMERA_INPUT, e, rng),
            l2: Dense::zero_init(e, e),
        });
    }

    pub fn has_camera_encoder(&self) -> bool {
        self.camera.is_some()
    }

    pub fn remove_camera_encoder(&mut self) {
        self.camera = None;
    }

    /// Visit every parameter with a stable name, in a fixed order.
    pub fn visit_params(&mut self, f: &mut Visit) {
        self.time1.visit("time1", f);
        self.time2.visit("time2", f);
        f("tokens", &mut self.token_table);
        self.enc.visit("enc", f);
        self.dec.visit("dec", f);
        for c in &mut self.controls {
            let prefix = format!("control.{}", c.kind.name());
            c.visit(&prefix, f);
        }
        if let Some(cam) = &mut self.camera {
            cam.l1.visit("camera.l1", f);
            cam.l2.visit("camera.l2", f);
        }
    }

    pub fn group_of(name: &str) -> ParamGroup {
        if let Some(rest) = name.strip_prefix("control.") {
            if rest.starts_with(ConditionKind::Depth.name()) {
                ParamGroup::Control(ConditionKind::Depth)
            } else {
                ParamGroup::Control(ConditionKind::Normal)
            }
        } else if name.starts_with("camera.") {
            ParamGroup::Camera
        } else {
            ParamGroup::Base
        }
    }

    /// Make exactly the listed groups trainable.
    pub fn set_trainable(&mut self, groups: &[ParamGroup]) {
        self.visit_params(&mut |name, p| p.trainable = groups.contains(&Denoiser::group_of(name)));
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    pub fn reset_optimizer(&mut self) {
        self.opt_step = 0;
        self.visit_params(&mut |_, p| p.reset_moments());
    }

    pub fn grad_norm(&mut self) -> f64 {
        let mut s = 0.0;
        self.visit_params(&mut |_, p| {
            if p.trainable {
                s += p.grad_sq_norm()
            }
        });
        s.sqrt()
    }

    /// Adam step on trainable parameters, with gradients clipped to a
    /// global norm of `clip` (when positive).
    pub fn adam_step(&mut self, cfg: &AdamParams, clip: f64) {
        let norm = self.grad_norm();
        let scale = if clip > 0.0 && norm > clip { (clip / norm) as f32 } else { 1.0 };
        self.opt_step += 1;
        let t = self.opt_step;
        self.visit_params(&mut |_, p| p.adam_step(cfg, t, scale));
    }

    pub fn parameter_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.len());
        n
    }

    /// Hash of all parameter values (optionally restricted to one group).
    pub fn fingerprint(&mut self, group: Option<ParamGroup>) -> u64 {
        let mut h = 0u64;
        self.visit_params(&mut |name, p| {
            if group.is_none_or(|g| g == Denoiser::group_of(name)) {
                h = h.rotate_left(7) ^ fingerprint_f32(&p.value);
            }
        });
        h
    }

    /// Named copies of every parameter array.
    pub fn export(&mut self) -> Vec<(String, Vec<f32>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, p| out.push((name.to_string(), p.value.clone())));
        out
    }

    /// Overwrite parameters from named arrays; every parameter must be present.
    pub fn import(&mut self, arrays: &[(String, Vec<f32>)]) -> Result<()> {
        let mut err = None;
        self.visit_params(&mut |name, p| {
            match arrays.iter().find(|(n, _)| n == name) {
                Some((_, v)) if v.len() == p.len() => p.value.copy_from_slice(v),
                Some((_, v)) => {
                    err.get_or_insert(format!("array {name} has {} values, expected {}", v.len(), p.len()));
                }
                None => {
                    err.get_or_insert(format!("array {name} missing"));
                }
            }
        });
        match err {
            Some(e) => Err(Error::Weights(e)),
            None => Ok(()),
        }
    }

    fn embed(&self, cond: &Conditioning) -> Result<EmbedCache> {
        let t_sin = timestep_embedding(cond.t, self.config.time_dim);
        let t_h = self.time1.forward(&t_sin);
        let mut e = self.time2.forward(&silu_vec(&t_h));
        let tokens: Vec<u32> = cond.tokens.ids.iter().copied().filter(|&i| i != PAD).collect();
        let dim = self.config.embed_dim;
        if !tokens.is_empty() {
            let inv = 1.0 / tokens.len() as f32;
            for &id in &tokens {
                let row = &self.token_table.value[id as usize * dim..(id as usize + 1) * dim];
                for (a, b) in e.iter_mut().zip(row) {
                    *a += b * inv;
                }
            }
        }
        let mut cam_in = None;
        let mut cam_h = Vec::new();
        if let Some(extr) = cond.camera {
            let cam = self
                .camera
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("camera given to a model without a camera encoder".into()))?;
            let input: Vec<f32> = extr.iter().map(|&v| v as f32).collect();
            cam_h = cam.l1.forward(&input);
            for (a, b) in e.iter_mut().zip(cam.l2.forward(&silu_vec(&cam_h))) {
                *a += b;
            }
            cam_in = Some(input);
        }
        let es = silu_vec(&e);
        Ok(EmbedCache {
            t_sin,
            t_h,
            tokens,
            cam_in,
            cam_h,
            e,
            es,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let r = self.config.resolution;
        if (x.c, x.h, x.w) != (3, r, r) {
            return Err(Error::InvalidArgument(format!(
                "denoiser expects (3, {r}, {r}) input, got ({}, {}, {})",
                x.c, x.h, x.w
            )));
        }
        Ok(())
    }

    /// ε̂(x_t; tokens, t, control, camera).
    pub fn predict(&self, x_t: &Tensor, cond: &Conditioning) -> Result<Tensor> {
        Ok(self.forward_cached(x_t, cond)?.0)
    }

    pub fn forward_cached(&self, x_t: &Tensor, cond: &Conditioning) -> Result<(Tensor, DenoiserCache)> {
        self.check_input(x_t)?;
        let embed = self.embed(cond)?;
        let (mut skips, enc) = self.enc.forward(x_t, None, &embed.es);
        let mut control = None;
        if let Some(ci) = cond.control {
            let idx = self
                .controls
                .iter()
                .position(|c| c.kind == ci.kind)
                .ok_or_else(|| Error::InvalidArgument(format!("model has no {} control branch", ci.kind.name())))?;
            if !ci.image.same_shape(x_t) {
                return Err(Error::InvalidArgument("control image shape differs from input".into()));
            }
            let (fused, cache) = self.controls[idx].forward(x_t, &ci.image, &embed.es);
            skips.s0.add_assign(&fused.s0);
            skips.s1.add_assign(&fused.s1);
            skips.m.add_assign(&fused.m);
            control = Some((idx, cache));
        }
        let (out, dec) = self.dec.forward(&skips, &embed.es);
        Ok((
            out,
            DenoiserCache {
                embed,
                enc,
                control,
                dec,
            },
        ))
    }

    /// Accumulate gradients of trainable parameters for dL/dε̂ = `d_out`.
    pub fn backward(&mut self, cache: &DenoiserCache, d_out: &Tensor) {
        let es = &cache.embed.es;
        let mut d_es = vec![0.0f32; self.config.embed_dim];
        let skips = self.dec.backward(&cache.dec, d_out, es, &mut d_es);
        if let Some((idx, cc)) = &cache.control {
            self.controls[*idx].backward(cc, &skips, es, &mut d_es);
        }
        self.enc.backward(&cache.enc, skips, es, &mut d_es);

        let e = &cache.embed;
        let de = silu_vec_backward(&e.e, &d_es);
        let dth = self.time2.backward(&silu_vec(&e.t_h), &de);
        self.time1.backward(&e.t_sin, &silu_vec_backward(&e.t_h, &dth));
        if self.token_table.trainable && !e.tokens.is_empty() {
            let dim = self.config.embed_dim;
            let inv = 1.0 / e.tokens.len() as f32;
            for &id in &e.tokens {
                let row = &mut self.token_table.grad[id as usize * dim..(id as usize + 1) * dim];
                for (g, d) in row.iter_mut().zip(&de) {
                    *g += d * inv;
                }
            }
        }
        if let (Some(cam), Some(input)) = (&mut self.camera, &e.cam_in) {
            let dh = cam.l2.backward(&silu_vec(&e.cam_h), &de);
            cam.l1.backward(input, &silu_vec_backward(&e.cam_h, &dh));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn tiny() -> Denoiser {
        let cfg = DenoiserConfig {
            resolution: 8,
            channels: [4, 6, 8],
            embed_dim: 8,
            time_dim: 8,
        };
        Denoiser::new(cfg, &mut rng_from_seed(5)).unwrap()
    }

    fn noise(seed: u64) -> Tensor {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rng_from_seed(seed);
        Tensor::from_vec(3, 8, 8, (0..192).map(|_| StandardNormal.sample(&mut rng)).collect())
    }

    #[test]
    fn untrained_output_is_zero_and_shaped() {
        let m = tiny();
        let p = PromptTokens::parse("a photo of red cube").unwrap();
        let out = m
            .predict(&noise(1), &Conditioning { tokens: &p, t: 10, control: None, camera: None })
            .unwrap();
        assert_eq!((out.c, out.h, out.w), (3, 8, 8));
        assert!(out.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn errors_on_missing_heads() {
        let m = tiny();
        let p = PromptTokens::null();
        let ci = ControlInput { kind: ConditionKind::Normal, image: noise(2) };
        let cond = Conditioning { tokens: &p, t: 3, control: Some(&ci), camera: None };
        assert!(m.predict(&noise(1), &cond).is_err());
        let cam = [0.0; 16];
        let cond = Conditioning { tokens: &p, t: 3, control: None, camera: Some(&cam) };
        assert!(m.predict(&noise(1), &cond).is_err());
    }

    #[test]
    fn export_import_round_trip() {
        let mut a = tiny();
        a.add_control(ConditionKind::Normal, &mut rng_from_seed(1)).unwrap();
        a.add_camera_encoder(&mut rng_from_seed(2));
        let arrays = a.export();
        let mut b = tiny();
        b.add_control(ConditionKind::Normal, &mut rng_from_seed(9)).unwrap();
        b.add_camera_encoder(&mut rng_from_seed(8));
        b.import(&arrays).unwrap();
        assert_eq!(a.fingerprint(None), b.fingerprint(None));
        assert!(b.import(&arrays[1..]).is_err());
    }
}
