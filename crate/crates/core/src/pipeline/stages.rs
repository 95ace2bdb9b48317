//! Building blocks shared by the commands and the test suites.

use std::path::Path;

use glam::DVec3;

use super::config::RunConfig;
use super::metrics::{appearance_similarity, normal_alignment, EvalReport, MaskedImage, ViewScore};
use crate::diffusion::{shape_mesh, Denoiser};
use crate::distill::{canonical_cameras, render_field, DistillMode, DistillReport, DistillState};
use crate::error::{Error, Result};
use crate::field::{BakedTextures, TextureField};
use crate::geometry::{load_mesh, rasterize, render_condition, CameraPose, ConditionKind, GBuffer, TriangleMesh, ViewConfig};
use crate::image::{Image, Mask};
use crate::personalize::{prepare_exemplars, ExemplarSet, ExemplarView};
use crate::rng::child_rng;
use crate::shading::{
    discretize_environment, render_material, shade, shade_terms, BrdfSample, EnvSource, EnvironmentLight, RenderedImage,
};

pub fn build_environment(spec: &str, lights: usize, seed: u64) -> Result<EnvironmentLight> {
    discretize_environment(&EnvSource::parse(spec)?, lights, &mut child_rng(seed, "environment"))
}

/// Environment used for training, evaluation and snapshots.
pub fn run_environment(cfg: &RunConfig) -> Result<EnvironmentLight> {
    build_environment(&cfg.lighting.environment, cfg.lighting.lights, cfg.seed)
}

/// A built-in primitive name or an OBJ path.
pub fn load_target_mesh(spec: &str) -> Result<TriangleMesh> {
    if spec.ends_with(".obj") {
        let (mut mesh, report) = load_mesh(Path::new(spec))?;
        log::info!("loaded {spec}: {report:?}");
        mesh.normalize_to_unit_sphere();
        Ok(mesh)
    } else {
        shape_mesh(spec).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Fresh denoiser with the configured control branches.
pub fn new_denoiser(cfg: &RunConfig) -> Result<Denoiser> {
    let mut rng = child_rng(cfg.seed, "denoiser-init");
    let mut model = Denoiser::new(cfg.diffusion.model.clone(), &mut rng)?;
    for kind in &cfg.diffusion.controls {
        model.add_control(*kind, &mut rng)?;
    }
    Ok(model)
}

pub fn new_field(cfg: &RunConfig, seed: u64) -> Result<TextureField> {
    TextureField::new(cfg.field.grid.clone(), cfg.field.mlp.clone(), &mut child_rng(seed, "field-init"))
}

/// Exemplar views evenly spread in azimuth at the configured elevation.
pub fn exemplar_views(cfg: &RunConfig) -> Vec<ExemplarView> {
    let e = &cfg.personalize.exemplars;
    (0..e.count)
        .map(|k| ExemplarView {
            azimuth: 30.0 + 360.0 * k as f64 / e.count as f64,
            elevation: e.elevation_deg,
            radius: e.radius,
        })
        .collect()
}

/// Render the source object with its procedural material from the
/// exemplar views.
pub fn render_exemplars(cfg: &RunConfig, env: &EnvironmentLight) -> Result<ExemplarSet> {
    let mesh = shape_mesh(&cfg.geometry.source_shape).map_err(|e| Error::Config(e.to_string()))?;
    let views = exemplar_views(cfg);
    let view_cfg = ViewConfig {
        resolution: cfg.personalize.tune.target_size,
        ..cfg.distill.run.view.clone()
    };
    let raw: Vec<(Image, Mask)> = views
        .iter()
        .map(|v| {
            let cam = CameraPose::from_degrees(v.azimuth, v.elevation, v.radius, &view_cfg);
            let (render, _) = render_material(&mesh, &cam, &cfg.personalize.exemplars.material, env);
            let mask = Mask {
                width: render.pixels.width,
                height: render.pixels.height,
                data: render.mask.clone(),
            };
            (render.pixels, mask)
        })
        .collect();
    prepare_exemplars(&raw, cfg.personalize.tune.target_size, Some(views))
}

pub fn exemplar_targets(set: &ExemplarSet) -> Vec<MaskedImage> {
    set.images
        .iter()
        .zip(&set.masks)
        .map(|(i, m)| MaskedImage::new(i.clone(), m.clone()))
        .collect()
}

/// Unshaded albedo composited over white.
pub fn albedo_image(gbuf: &GBuffer, brdf: &[BrdfSample]) -> Image {
    let mut img = Image::filled(gbuf.width, gbuf.height, 3, 1.0);
    for (&i, s) in gbuf.covered().iter().zip(brdf) {
        img.texel_mut(i).copy_from_slice(&s.albedo.to_array());
    }
    img
}

/// Scores of a field on a mesh against exemplar images at the four
/// canonical views.
pub fn evaluate_field(
    field: &TextureField,
    mesh: &TriangleMesh,
    env: &EnvironmentLight,
    exemplars: &[MaskedImage],
    view: &ViewConfig,
    elevation_deg: f64,
    bins: usize,
) -> EvalReport {
    let radius = 0.5 * (view.radius[0] + view.radius[1]);
    let mut per_view = Vec::new();
    let mut renders = Vec::new();
    for az in crate::distill::CANONICAL_AZIMUTHS {
        let cam = CameraPose::from_degrees(az, elevation_deg, radius, view);
        let gbuf = rasterize(mesh, &cam);
        let points: Vec<DVec3> = gbuf.covered().iter().map(|&i| gbuf.position[i]).collect();
        let brdf = field.query(&points);
        let render = shade(&gbuf, &cam, &brdf, env);
        let masked = MaskedImage::from_render(&render.pixels, &render.mask);
        let normals = render_condition(&gbuf, &cam, ConditionKind::Normal).image;
        let align = normal_alignment(&albedo_image(&gbuf, &brdf), &normals, &masked.mask);
        per_view.push(ViewScore {
            azimuth_deg: az,
            similarity: appearance_similarity(exemplars, std::slice::from_ref(&masked), bins),
            normal_alignment: align,
        });
        renders.push(masked);
    }
    EvalReport {
        appearance_similarity: appearance_similarity(exemplars, &renders, bins),
        normal_alignment: per_view.iter().map(|v| v.normal_alignment).sum::<f64>() / per_view.len() as f64,
        diversity: None,
        per_view,
    }
}

/// Canonical-view renders as masked images (for diversity).
pub fn canonical_masked_renders(field: &TextureField, mesh: &TriangleMesh, env: &EnvironmentLight, view: &ViewConfig) -> Vec<MaskedImage> {
    canonical_cameras(view)
        .iter()
        .map(|cam| {
            let (r, _) = render_field(field, mesh, cam, env);
            MaskedImage::from_render(&r.pixels, &r.mask)
        })
        .collect()
}

/// Render with baked maps sampled at the G-buffer UVs.
pub fn render_baked(maps: &BakedTextures, mesh: &TriangleMesh, cam: &CameraPose, env: &EnvironmentLight) -> RenderedImage {
    let gbuf = rasterize(mesh, cam);
    let brdf: Vec<BrdfSample> = gbuf.covered().iter().map(|&i| maps.sample(gbuf.uv[i])).collect();
    shade(&gbuf, cam, &brdf, env)
}

/// Mean diffuse and specular linear radiance over covered pixels.
pub fn energy_split(field: &TextureField, mesh: &TriangleMesh, cam: &CameraPose, env: &EnvironmentLight) -> (f64, f64) {
    let gbuf = rasterize(mesh, cam);
    let points: Vec<DVec3> = gbuf.covered().iter().map(|&i| gbuf.position[i]).collect();
    let brdf = field.query(&points);
    let (d, s) = shade_terms(&gbuf, cam, &brdf, env);
    let n = (points.len() * 3).max(1) as f64;
    (d.data.iter().sum::<f64>() / n, s.data.iter().sum::<f64>() / n)
}

/// Result of a distillation run and its similarity at every snapshot.
pub struct TransferOutcome {
    pub field: TextureField,
    pub report: DistillReport,
    /// (step, appearance similarity) at step 0, each snapshot and the end.
    pub similarity_curve: Vec<(usize, f64)>,
    pub psi_fingerprint_before: u64,
    pub psi_fingerprint_after: u64,
}

/// Distill a fresh field on `mesh` and score it against the exemplars at
/// every snapshot.
#[allow(clippy::too_many_arguments)]
pub fn run_transfer(
    cfg: &RunConfig,
    base: &Denoiser,
    psi: &Denoiser,
    exemplars: &ExemplarSet,
    mesh: &TriangleMesh,
    env: &EnvironmentLight,
    mode: &DistillMode,
    seed: u64,
    mut on_snapshot: Option<&mut dyn FnMut(usize, &TextureField) -> Result<()>>,
) -> Result<TransferOutcome> {
    let field = new_field(cfg, seed)?;
    let mut psi_copy = psi.clone();
    let psi_fingerprint_before = psi_copy.fingerprint(None);
    let schedule = cfg.diffusion.schedule.build()?;
    let mut state = DistillState::new(
        field,
        psi.clone(),
        base,
        mesh.clone(),
        env.clone(),
        schedule,
        mode.clone(),
        cfg.distill.run.clone(),
        seed,
    )?;
    let targets = exemplar_targets(exemplars);
    let view = cfg.eval_view();
    let mut curve = Vec::new();
    let steps = cfg.distill.run.steps;
    let report = {
        let mut observer = |s: &DistillState| -> Result<()> {
            let r = evaluate_field(&s.field, &s.mesh, &s.env, &targets, &view, cfg.eval.elevation_deg, cfg.eval.histogram_bins);
            curve.push((s.step, r.appearance_similarity));
            if let Some(cb) = on_snapshot.as_deref_mut() {
                cb(s.step, &s.field)?;
            }
            Ok(())
        };
        crate::distill::distill(&mut state, steps, Some(&mut observer))?
    };
    let psi_fingerprint_after = state.psi.fingerprint(None);
    Ok(TransferOutcome {
        field: state.field,
        report,
        similarity_curve: curve,
        psi_fingerprint_before,
        psi_fingerprint_after,
    })
}
