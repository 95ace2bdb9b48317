use std::time::Instant;

use glam::DVec3;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::gradient::{model_input_backward, pgsd_gradient, phi_update, sds_gradient, to_model_input};
use super::mode::{DistillMode, PhiSource};
use crate::diffusion::nn::AdamParams;
use crate::diffusion::{
    personalized_prompt, standard_normal, view_word_for, ControlInput, Denoiser, DivergenceDetector, NoiseSchedule,
    ParamGroup, Tensor,
};
use crate::error::{Error, Result};
use crate::field::{AdamConfig, FieldGradients, FieldOptimizer, TextureField};
use crate::geometry::{rasterize, render_condition, sample_camera, CameraPose, GBuffer, TriangleMesh, ViewConfig};
use crate::image::Image;
use crate::rng::{child_rng, Rng};
use crate::shading::{shade, shade_backward, BrdfSample, EnvironmentLight, RenderedImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    pub steps: usize,
    /// Render camera distribution; renders are area-downsampled to the
    /// denoiser resolution.
    pub view: ViewConfig,
    /// Timestep range as fractions of T, sampled uniformly.
    pub t_range: [f64; 2],
    pub grid_lr: f64,
    pub mlp_lr: f64,
    pub camera_lr: f64,
    /// Used for φ's base weights when they are not frozen.
    pub phi_base_lr: f64,
    /// Cameras per field step.
    pub batch_size: usize,
    pub log_every: usize,
    pub snapshot_every: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            steps: 2000,
            view: ViewConfig::default(),
            t_range: [0.02, 0.98],
            grid_lr: 0.01,
            mlp_lr: 0.001,
            camera_lr: 1e-4,
            phi_base_lr: 1e-4,
            batch_size: 1,
            log_every: 25,
            snapshot_every: 250,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        self.view.validate()?;
        let [lo, hi] = self.t_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("t_range must satisfy 0 <= lo <= hi <= 1, got {:?}", self.t_range)));
        }
        let lrs = [self.grid_lr, self.mlp_lr, self.camera_lr, self.phi_base_lr];
        if lrs.iter().any(|v| !(*v > 0.0)) || self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Config("distill: learning rates, batch_size and log_every must be positive".into()));
        }
        Ok(())
    }
}

/// One averaged metrics row.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub mode: String,
    /// Mean squared per-element gradient of the model input.
    pub grad_sq: f64,
    pub phi_loss: f64,
}

impl StepRecord {
    pub fn to_line(&self) -> String {
        format!(
            "step={} mode={} grad_sq={:.6e} phi_loss={:.6e}",
            self.step, self.mode, self.grad_sq, self.phi_loss
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DistillReport {
    pub records: Vec<StepRecord>,
    /// (step, seconds since start); kept apart so the metrics stay reproducible.
    pub timings: Vec<(usize, f64)>,
}

impl DistillReport {
    pub fn metrics_text(&self) -> String {
        self.records.iter().map(|r| r.to_line() + "\n").collect()
    }

    pub fn timing_text(&self) -> String {
        self.timings.iter().map(|(s, t)| format!("step={s} wall_s={t:.3}\n")).collect()
    }
}

pub struct DistillState {
    pub field: TextureField,
    pub psi: Denoiser,
    pub phi: Denoiser,
    pub schedule: NoiseSchedule,
    pub env: EnvironmentLight,
    pub mesh: TriangleMesh,
    pub mode: DistillMode,
    pub config: DistillConfig,
    pub optimizer: FieldOptimizer,
    pub rng: Rng,
    pub step: usize,
    grads: FieldGradients,
}

/// Rasterize and shade the field from one camera.
pub fn render_field(field: &TextureField, mesh: &TriangleMesh, cam: &CameraPose, env: &EnvironmentLight) -> (RenderedImage, GBuffer) {
    let gbuf = rasterize(mesh, cam);
    let points: Vec<DVec3> = gbuf.covered().iter().map(|&i| gbuf.position[i]).collect();
    let brdf = field.query(&points);
    (shade(&gbuf, cam, &brdf, env), gbuf)
}

impl DistillState {
    /// `psi` is the personalized model and `base` the generic pretrained one.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        field: TextureField,
        psi: Denoiser,
        base: &Denoiser,
        mesh: TriangleMesh,
        env: EnvironmentLight,
        schedule: NoiseSchedule,
        mode: DistillMode,
        config: DistillConfig,
        seed: u64,
    ) -> Result<DistillState> {
        mode.validate()?;
        config.validate()?;
        if let Some(kind) = mode.use_control.kind() {
            if !psi.has_control(kind) || (mode.kind.uses_phi() && !base.has_control(kind)) {
                return Err(Error::MissingArtifact(format!("{} control branch missing from the denoiser", kind.name())));
            }
        }
        if config.view.resolution % psi.config.resolution != 0 {
            return Err(Error::Config(format!(
                "render resolution {} must be a multiple of the denoiser resolution {}",
                config.view.resolution, psi.config.resolution
            )));
        }
        let mut phi = match mode.phi_source {
            PhiSource::GenericPretrained => base.clone(),
            PhiSource::Personalized => psi.clone(),
        };
        if !phi.has_camera_encoder() {
            phi.add_camera_encoder(&mut child_rng(seed, "camera-encoder"));
        }
        let mut groups = Vec::new();
        if mode.train_camera_encoder {
            groups.push(ParamGroup::Camera);
        }
        if !mode.lora_removed {
            groups.push(ParamGroup::Base);
        }
        phi.set_trainable(&groups);
        phi.reset_optimizer();
        let optimizer = FieldOptimizer::new(&field, AdamConfig::with_lr(config.grid_lr), AdamConfig::with_lr(config.mlp_lr));
        let grads = FieldGradients::new(&field);
        Ok(DistillState {
            field,
            psi,
            phi,
            schedule,
            env,
            mesh,
            mode,
            config,
            optimizer,
            rng: child_rng(seed, "distill"),
            step: 0,
            grads,
        })
    }

    fn sample_t(&mut self) -> usize {
        let n = self.schedule.steps() - 1;
        let lo = (self.config.t_range[0] * n as f64).round() as usize;
        let hi = ((self.config.t_range[1] * n as f64).round() as usize).max(lo);
        self.rng.random_range(lo..=hi)
    }

    /// One field step (and φ step when the mode uses φ). Returns the
    /// squared-gradient proxy and φ loss averaged over the camera batch.
    pub fn step(&mut self) -> Result<(f64, f64)> {
        let res = self.psi.config.resolution;
        self.grads.zero();
        let mut grad_sq = 0.0;
        let mut phi_loss = 0.0;
        let mut phi_records = Vec::new();
        for _ in 0..self.config.batch_size {
            let cam = sample_camera(&mut self.rng, &self.config.view)?;
            let gbuf = rasterize(&self.mesh, &cam);
            let points: Vec<DVec3> = gbuf.covered().iter().map(|&i| gbuf.position[i]).collect();
            let (brdf, cache) = self.field.query_cached(&points);
            let render = shade(&gbuf, &cam, &brdf, &self.env);
            let x = to_model_input(&render.pixels, res);
            let control = self.mode.use_control.kind().map(|kind| ControlInput {
                kind,
                image: to_model_input(&render_condition(&gbuf, &cam, kind).image, res),
            });
            let tokens = personalized_prompt(Some(view_word_for(&cam)));
            let t = self.sample_t();
            let eps = standard_normal(3, res, res, &mut self.rng);
            let x_t = self.schedule.add_noise(&x, t, &eps)?;
            let extrinsic = cam.flattened_extrinsic();
            let g = if self.mode.kind.uses_phi() {
                pgsd_gradient(
                    &self.psi,
                    &self.phi,
                    &self.schedule,
                    &x_t,
                    &tokens,
                    t,
                    control.as_ref(),
                    self.mode.use_control.kind(),
                    &extrinsic,
                    self.mode.cfg_weight,
                )?
            } else {
                sds_gradient(&self.psi, &self.schedule, &x_t, &tokens, t, &eps, control.as_ref(), self.mode.cfg_weight)?
            };
            if !g.all_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite distillation gradient at step {} (t={t}, azimuth={:.1}°, elevation={:.1}°)",
                    self.step,
                    cam.azimuth.to_degrees(),
                    cam.elevation.to_degrees()
                )));
            }
            grad_sq += g.data.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / g.len() as f64;
            if !points.is_empty() {
                let d_pixels = model_input_backward(&g, gbuf.width, gbuf.height)?;
                let upstream = shade_backward(&gbuf, &cam, &brdf, &self.env, &d_pixels);
                self.field.backward(&cache, &upstream, &mut self.grads);
            }
            if self.mode.kind.uses_phi() {
                phi_records.push((x_t, tokens, t, eps, control, extrinsic));
            }
        }
        if !self.grads.all_finite() {
            return Err(Error::Numerical(format!(
                "non-finite field gradient at step {} (norm {})",
                self.step,
                self.grads.norm()
            )));
        }
        self.optimizer.apply(&mut self.field, &self.grads);
        let adam = AdamParams::with_lr(if self.mode.lora_removed { self.config.camera_lr } else { self.config.phi_base_lr } as f32);
        for (x_t, tokens, t, eps, control, extr) in &phi_records {
            phi_loss += phi_update(&mut self.phi, x_t, tokens, *t, eps, control.as_ref(), extr, &adam, 1.0)?;
        }
        self.step += 1;
        let b = self.config.batch_size as f64;
        Ok((grad_sq / b, phi_loss / b))
    }
}

/// Run `steps` distillation steps. `observer` is called with the state
/// after step 0 and then every `snapshot_every` steps and at the end.
pub fn distill(
    state: &mut DistillState,
    steps: usize,
    mut observer: Option<&mut dyn FnMut(&DistillState) -> Result<()>>,
) -> Result<DistillReport> {
    let mut report = DistillReport::default();
    if steps == 0 {
        return Ok(report);
    }
    if let Some(obs) = observer.as_deref_mut() {
        obs(state)?;
    }
    let start = Instant::now();
    let every = state.config.log_every;
    let snapshot_every = state.config.snapshot_every;
    let mut detector = DivergenceDetector::default();
    let (mut acc_g, mut acc_l, mut acc_n) = (0.0, 0.0, 0usize);
    for k in 0..steps {
        let (g, l) = state.step()?;
        if state.mode.kind.uses_phi() {
            detector.observe(state.step, l)?;
        }
        acc_g += g;
        acc_l += l;
        acc_n += 1;
        let done = k + 1 == steps;
        if state.step % every == 0 || done {
            report.records.push(StepRecord {
                step: state.step,
                mode: state.mode.tag(),
                grad_sq: acc_g / acc_n as f64,
                phi_loss: acc_l / acc_n as f64,
            });
            report.timings.push((state.step, start.elapsed().as_secs_f64()));
            log::info!("distill {}", report.records.last().unwrap().to_line());
            (acc_g, acc_l, acc_n) = (0.0, 0.0, 0);
        }
        if (snapshot_every > 0 && state.step % snapshot_every == 0) || done {
            if let Some(obs) = observer.as_deref_mut() {
                obs(state)?;
            }
        }
    }
    Ok(report)
}

/// Tone-mapped render of the field at the four canonical evaluation views.
pub fn canonical_renders(field: &TextureField, mesh: &TriangleMesh, env: &EnvironmentLight, view: &ViewConfig) -> Vec<RenderedImage> {
    canonical_cameras(view)
        .iter()
        .map(|cam| render_field(field, mesh, cam, env).0)
        .collect()
}

pub const CANONICAL_AZIMUTHS: [f64; 4] = [45.0, 135.0, 225.0, 315.0];
pub const CANONICAL_ELEVATION: f64 = 15.0;

pub fn canonical_cameras(view: &ViewConfig) -> Vec<CameraPose> {
    let radius = 0.5 * (view.radius[0] + view.radius[1]);
    CANONICAL_AZIMUTHS
        .iter()
        .map(|az| CameraPose::from_degrees(*az, CANONICAL_ELEVATION, radius, view))
        .collect()
}

/// Pixel-space gradient chained to the field for a fixed model-input
/// gradient `g`, i.e. d⟨g, x(θ)⟩/dθ with g held constant.
pub fn chain_to_field(
    field: &TextureField,
    mesh: &TriangleMesh,
    cam: &CameraPose,
    env: &EnvironmentLight,
    g: &Tensor,
) -> Result<FieldGradients> {
    let gbuf = rasterize(mesh, cam);
    let points: Vec<DVec3> = gbuf.covered().iter().map(|&i| gbuf.position[i]).collect();
    let (brdf, cache): (Vec<BrdfSample>, _) = field.query_cached(&points);
    let mut grads = FieldGradients::new(field);
    if points.is_empty() {
        return Ok(grads);
    }
    let d_pixels: Image = model_input_backward(g, gbuf.width, gbuf.height)?;
    let upstream = shade_backward(&gbuf, cam, &brdf, env, &d_pixels);
    field.backward(&cache, &upstream, &mut grads);
    Ok(grads)
}
