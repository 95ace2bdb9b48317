//! Finite-difference oracles shared by the integration tests and the
//! acceptance harness.

#![allow(dead_code)]

use glam::DVec3;
use pgsd_core::diffusion::{ControlInput, Denoiser, DenoiserConfig, NoiseSchedule, ParamGroup, Tensor};
use pgsd_core::distill::{chain_to_field, render_field, DistillConfig, DistillMode, DistillState};
use pgsd_core::field::{FieldGradients, HashGridConfig, MlpSpec, TextureField};
use pgsd_core::geometry::{primitives, CameraPose, ConditionKind, GBuffer, ViewConfig};
use pgsd_core::rng::{rng_from_seed, Rng};
use pgsd_core::shading::{
    directional_albedo, discretize_environment, shade, shade_backward, BrdfGradient, BrdfSample, EnvPreset,
    EnvSource, EnvironmentLight,
};
use rand::Rng as _;

pub const FD_STEP: f64 = 1e-6;

/// |a − b| relative to the larger magnitude, with an absolute floor for
/// entries that are zero up to rounding.
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn three_point_env(lights: usize, seed: u64) -> EnvironmentLight {
    discretize_environment(&EnvSource::Preset(EnvPreset::ThreePoint), lights, &mut rng_from_seed(seed)).unwrap()
}

fn unit_vector(rng: &mut Rng) -> DVec3 {
    loop {
        let v = DVec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let l = v.length();
        if l > 0.1 && l <= 1.0 {
            return v / l;
        }
    }
}

fn random_sample(rng: &mut Rng) -> BrdfSample {
    BrdfSample::new(
        DVec3::new(rng.random_range(0.05..0.95), rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)),
        rng.random_range(0.1..0.99),
        rng.random_range(0.01..0.99),
    )
}

fn perturbed(s: &BrdfSample, k: usize, h: f64) -> BrdfSample {
    let mut s = *s;
    match k {
        0 => s.albedo.x += h,
        1 => s.albedo.y += h,
        2 => s.albedo.z += h,
        3 => s.roughness += h,
        _ => s.metallic += h,
    }
    s
}

fn gradient_component(g: &BrdfGradient, k: usize) -> f64 {
    match k {
        0 => g.albedo.x,
        1 => g.albedo.y,
        2 => g.albedo.z,
        3 => g.roughness,
        _ => g.metallic,
    }
}

/// One-pixel G-buffer at a random surface point facing the camera.
fn pixel_scene(rng: &mut Rng) -> (GBuffer, CameraPose) {
    let cam = CameraPose::orbit(
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(-0.6..0.9),
        3.0,
        0.8,
        1,
        1,
    );
    let p = unit_vector(rng) * 0.5;
    let v = (cam.position() - p).normalize();
    let mut n = unit_vector(rng);
    if n.dot(v) < 0.05 {
        n = (n - 2.0 * n.dot(v) * v + 0.3 * v).normalize();
    }
    let mut gbuf = GBuffer::empty(1, 1);
    gbuf.mask[0] = true;
    gbuf.position[0] = p;
    gbuf.normal[0] = n;
    gbuf.depth[0] = 1.0;
    (gbuf, cam)
}

/// Max relative error of `shade_backward` against central differences of
/// ⟨upstream, shade(·)⟩ over the five BRDF parameters of `configs` random
/// pixels. Configurations whose linear radiance sits at a tone-map clamp
/// are redrawn, since the derivative is undefined there.
pub fn shading_fd_max_error(configs: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let env = three_point_env(64, seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < configs {
        let (gbuf, cam) = pixel_scene(&mut rng);
        let s = random_sample(&mut rng);
        let lin = shade(&gbuf, &cam, &[s], &env).linear;
        if lin.data.iter().any(|&c| !(0.01..0.99).contains(&c)) {
            continue;
        }
        let up: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let upstream = pgsd_core::image::Image::from_fn(1, 1, 3, |_, _| up);
        let g = shade_backward(&gbuf, &cam, &[s], &env, &upstream)[0];
        let loss = |s: BrdfSample| {
            let px = shade(&gbuf, &cam, &[s], &env).pixels;
            (0..3).map(|c| up[c] * px.data[c]).sum::<f64>()
        };
        for k in 0..5 {
            let fd = (loss(perturbed(&s, k, FD_STEP)) - loss(perturbed(&s, k, -FD_STEP))) / (2.0 * FD_STEP);
            worst = worst.max(rel_error(gradient_component(&g, k), fd, 1e-6));
        }
        done += 1;
    }
    worst
}

/// A field small enough for per-parameter differencing.
pub fn small_field(seed: u64) -> TextureField {
    let config = HashGridConfig {
        levels: 4,
        base_resolution: 4,
        per_level_scale: 1.5,
        features_per_level: 2,
        table_size_log2: 10,
    };
    let spec = MlpSpec {
        hidden_width: 16,
        hidden_layers: 2,
        ..MlpSpec::default()
    };
    let mut field = TextureField::new(config, spec, &mut rng_from_seed(seed)).unwrap();
    // Larger grid values than the default init so every layer is exercised.
    let mut rng = rng_from_seed(seed ^ 0x5eed);
    field.grid.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    field
}

fn random_points(n: usize, rng: &mut Rng) -> Vec<DVec3> {
    (0..n)
        .map(|_| DVec3::new(rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)))
        .collect()
}

fn random_upstream(n: usize, rng: &mut Rng) -> Vec<BrdfGradient> {
    (0..n)
        .map(|_| BrdfGradient {
            albedo: DVec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            roughness: rng.random_range(-1.0..1.0),
            metallic: rng.random_range(-1.0..1.0),
        })
        .collect()
}

fn field_loss(field: &TextureField, points: &[DVec3], upstream: &[BrdfGradient]) -> f64 {
    field
        .query(points)
        .iter()
        .zip(upstream)
        .map(|(s, g)| s.albedo.dot(g.albedo) + s.roughness * g.roughness + s.metallic * g.metallic)
        .sum()
}

/// Parameters to difference, alternating between touched grid entries and
/// MLP weights; `(true, i)` addresses `mlp.params[i]`.
fn pick_parameters(field: &TextureField, grads: &FieldGradients, count: usize, rng: &mut Rng) -> Vec<(bool, usize)> {
    let f = field.config.features_per_level;
    let mut picks = Vec::with_capacity(count);
    for k in 0..count {
        if k % 2 == 0 && !grads.touched.is_empty() {
            let e = grads.touched[rng.random_range(0..grads.touched.len())] as usize;
            picks.push((false, e * f + rng.random_range(0..f)));
        } else {
            picks.push((true, rng.random_range(0..field.mlp.params.len())));
        }
    }
    picks
}

fn with_param(field: &TextureField, (mlp, idx): (bool, usize), h: f64) -> TextureField {
    let mut f = field.clone();
    if mlp {
        f.mlp.params[idx] += h;
    } else {
        f.grid[idx] += h;
    }
    f
}

fn analytic(grads: &FieldGradients, (mlp, idx): (bool, usize)) -> f64 {
    if mlp {
        grads.mlp[idx]
    } else {
        grads.grid[idx]
    }
}

/// Max relative error of `query_backward` against central differences over
/// `params` random parameters.
pub fn field_fd_max_error(params: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let field = small_field(seed);
    let points = random_points(32, &mut rng);
    let upstream = random_upstream(points.len(), &mut rng);
    let grads = field.query_backward(&points, &upstream);
    let mut worst = 0.0f64;
    for p in pick_parameters(&field, &grads, params, &mut rng) {
        let fd = (field_loss(&with_param(&field, p, FD_STEP), &points, &upstream)
            - field_loss(&with_param(&field, p, -FD_STEP), &points, &upstream))
            / (2.0 * FD_STEP);
        worst = worst.max(rel_error(analytic(&grads, p), fd, 1e-6));
    }
    worst
}

/// Bitwise check that a point queried twice yields exactly twice the
/// gradient of a single query.
pub fn duplicate_points_additive(trials: usize, seed: u64) -> bool {
    let mut rng = rng_from_seed(seed);
    let field = small_field(seed);
    (0..trials).all(|_| {
        let p = random_points(1, &mut rng);
        let u = random_upstream(1, &mut rng);
        let single = field.query_backward(&p, &u);
        let double = field.query_backward(&[p[0], p[0]], &[u[0], u[0]]);
        single.grid.iter().zip(&double.grid).all(|(a, b)| a + a == *b)
            && single.mlp.iter().zip(&double.mlp).all(|(a, b)| a + a == *b)
    })
}

/// Camera for the two-by-two chained scene: the unit quad fills all four
/// pixels.
pub fn tiny_camera() -> CameraPose {
    let view = ViewConfig {
        fov_y_deg: 20.0,
        resolution: 2,
        ..ViewConfig::default()
    };
    CameraPose::from_degrees(20.0, 10.0, 3.0, &view)
}

/// Max relative error of the chained field gradient (model input →
/// pixels → BRDF → field) on a 2×2 render against central differences
/// of ⟨g, 2·render − 1⟩ over `params` field parameters.
pub fn chained_fd_max_error(params: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mesh = primitives::quad();
    let cam = tiny_camera();
    let env = three_point_env(16, seed);
    let field = small_field(seed);
    let g = Tensor::from_vec(3, 2, 2, (0..12).map(|_| rng.random_range(-1.0f32..1.0)).collect());
    let loss = |f: &TextureField| {
        let (img, _) = render_field(f, &mesh, &cam, &env);
        let mut total = 0.0;
        for i in 0..4 {
            for c in 0..3 {
                total += g.data[c * 4 + i] as f64 * (2.0 * img.pixels.data[3 * i + c] - 1.0);
            }
        }
        total
    };
    let (img, gbuf) = render_field(&field, &mesh, &cam, &env);
    assert_eq!(gbuf.coverage(), 4, "quad must cover the whole 2x2 frame");
    assert!(img.linear.data.iter().all(|&c| c > 0.0 && c < 1.0), "tone map clamped");
    let grads = chain_to_field(&field, &mesh, &cam, &env, &g).unwrap();
    let mut worst = 0.0f64;
    for p in pick_parameters(&field, &grads, params, &mut rng) {
        let fd = (loss(&with_param(&field, p, FD_STEP)) - loss(&with_param(&field, p, -FD_STEP))) / (2.0 * FD_STEP);
        worst = worst.max(rel_error(analytic(&grads, p), fd, 1e-6));
    }
    worst
}

/// Largest channel of the directional albedo over random samples, each
/// integrated on a `strata` × `strata` stratified grid for a view at
/// `n_dot_v`.
pub fn max_directional_albedo(samples: usize, strata: usize, n_dot_v: f64, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let s = BrdfSample::new(
            DVec3::new(rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)),
            rng.random_range(pgsd_core::shading::ROUGHNESS_MIN..=1.0),
            rng.random_range(0.0..=1.0),
        );
        worst = worst.max(directional_albedo(&s, n_dot_v, strata).max_element());
    }
    worst
}

// Distillation fixtures.

pub fn schedule() -> NoiseSchedule {
    NoiseSchedule::linear(1000, 1e-4, 2e-2).unwrap()
}

/// Small denoiser with a normal branch and non-trivial outputs.
pub fn test_denoiser(seed: u64) -> Denoiser {
    let cfg = DenoiserConfig {
        resolution: 16,
        channels: [8, 8, 8],
        embed_dim: 16,
        time_dim: 8,
    };
    let mut rng = rng_from_seed(seed);
    let mut m = Denoiser::new(cfg, &mut rng).unwrap();
    m.add_control(ConditionKind::Normal, &mut rng).unwrap();
    m.visit_params(&mut |name, p| {
        if Denoiser::group_of(name) == ParamGroup::Base {
            p.value.iter_mut().for_each(|v| *v += rng.random_range(-0.1f32..0.1));
        }
    });
    m
}

pub fn noise_tensor(seed: u64) -> Tensor {
    let mut rng = rng_from_seed(seed);
    Tensor::from_vec(3, 16, 16, (0..768).map(|_| rng.random_range(-1.0f32..1.0)).collect())
}

pub fn normal_control(seed: u64) -> ControlInput {
    ControlInput {
        kind: ConditionKind::Normal,
        image: noise_tensor(seed),
    }
}

pub fn distill_config(steps: usize) -> DistillConfig {
    DistillConfig {
        steps,
        view: ViewConfig {
            resolution: 32,
            ..ViewConfig::default()
        },
        log_every: 1,
        snapshot_every: 2,
        ..DistillConfig::default()
    }
}

pub fn distill_state(mode: &str, seed: u64) -> DistillState {
    let base = test_denoiser(1);
    let psi = test_denoiser(2);
    DistillState::new(
        small_field(3),
        psi,
        &base,
        primitives::icosphere(2),
        three_point_env(8, 0),
        schedule(),
        DistillMode::ablation(mode).unwrap(),
        distill_config(4),
        seed,
    )
    .unwrap()
}
