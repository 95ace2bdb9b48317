use glam::DVec3;

use super::brdf::{eval_terms, eval_with_jacobian, BrdfSample, LobeGeometry};
use super::env::EnvironmentLight;
use crate::geometry::{CameraPose, GBuffer};
use crate::image::Image;

pub const GAMMA: f64 = 2.2;

/// Tone-mapped render composited over white, plus the linear radiance.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedImage {
    pub pixels: Image,
    pub linear: Image,
    pub mask: Vec<bool>,
}

/// Gradient of a loss with respect to one pixel's BRDF parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BrdfGradient {
    pub albedo: DVec3,
    pub roughness: f64,
    pub metallic: f64,
}

#[inline]
pub fn tone_map(linear: f64) -> f64 {
    linear.clamp(0.0, 1.0).powf(1.0 / GAMMA)
}

#[inline]
fn tone_map_slope(linear: f64) -> f64 {
    if linear > 0.0 && linear < 1.0 {
        linear.powf(1.0 / GAMMA - 1.0) / GAMMA
    } else {
        0.0
    }
}

/// Linear radiance of one pixel split into diffuse and specular parts.
/// Lights below the horizon, and views with n·v ≤ 0, contribute nothing.
pub fn shade_pixel_terms(
    s: &BrdfSample,
    n: DVec3,
    v: DVec3,
    env: &EnvironmentLight,
) -> (DVec3, DVec3) {
    let mut diffuse = DVec3::ZERO;
    let mut specular = DVec3::ZERO;
    if n.dot(v) <= 0.0 {
        return (diffuse, specular);
    }
    for (l, rad) in env.directions.iter().zip(&env.radiances) {
        let g = LobeGeometry::new(n, v, *l);
        if g.n_dot_l <= 0.0 {
            continue;
        }
        let t = eval_terms(s, &g);
        diffuse += t.diffuse * g.n_dot_l * *rad;
        specular += t.specular * g.n_dot_l * *rad;
    }
    (diffuse, specular)
}

fn view_dir(cam_pos: DVec3, p: DVec3) -> DVec3 {
    (cam_pos - p).normalize()
}

/// Shade the covered pixels of `gbuf`. `brdf` holds one sample per covered
/// pixel in row-major order (see [`GBuffer::covered`]).
pub fn shade(
    gbuf: &GBuffer,
    cam: &CameraPose,
    brdf: &[BrdfSample],
    env: &EnvironmentLight,
) -> RenderedImage {
    let (diffuse, specular) = shade_terms(gbuf, cam, brdf, env);
    let mut linear = diffuse;
    for (a, b) in linear.data.iter_mut().zip(&specular.data) {
        *a += b;
    }
    compose(linear, gbuf.mask.clone())
}

/// Tone-map a linear image and put white behind uncovered pixels.
pub fn compose(linear: Image, mask: Vec<bool>) -> RenderedImage {
    let mut pixels = Image::filled(linear.width, linear.height, 3, 1.0);
    for (i, &m) in mask.iter().enumerate() {
        if m {
            for c in 0..3 {
                pixels.data[3 * i + c] = tone_map(linear.data[3 * i + c]);
            }
        }
    }
    RenderedImage {
        pixels,
        linear,
        mask,
    }
}

/// Diffuse and specular linear images (zero outside the mask).
pub fn shade_terms(
    gbuf: &GBuffer,
    cam: &CameraPose,
    brdf: &[BrdfSample],
    env: &EnvironmentLight,
) -> (Image, Image) {
    let covered = gbuf.covered();
    assert_eq!(covered.len(), brdf.len(), "one BRDF sample per covered pixel");
    let mut diffuse = Image::new(gbuf.width, gbuf.height, 3);
    let mut specular = Image::new(gbuf.width, gbuf.height, 3);
    let cam_pos = cam.position();
    for (&i, s) in covered.iter().zip(brdf) {
        let v = view_dir(cam_pos, gbuf.position[i]);
        let (d, sp) = shade_pixel_terms(s, gbuf.normal[i], v, env);
        diffuse.texel_mut(i).copy_from_slice(&d.to_array());
        specular.texel_mut(i).copy_from_slice(&sp.to_array());
    }
    (diffuse, specular)
}

/// Adjoint of [`shade`]: maps dLoss/dpixels to dLoss/d(albedo, roughness,
/// metallic) per covered pixel. The clamp passes gradients only for linear
/// values strictly inside (0, 1).
pub fn shade_backward(
    gbuf: &GBuffer,
    cam: &CameraPose,
    brdf: &[BrdfSample],
    env: &EnvironmentLight,
    upstream: &Image,
) -> Vec<BrdfGradient> {
    let covered = gbuf.covered();
    assert_eq!(covered.len(), brdf.len(), "one BRDF sample per covered pixel");
    assert_eq!(upstream.channels, 3);
    let cam_pos = cam.position();
    let mut grads = Vec::with_capacity(covered.len());
    for (&i, s) in covered.iter().zip(brdf) {
        let up = upstream.texel(i);
        if up.iter().all(|u| *u == 0.0) {
            grads.push(BrdfGradient::default());
            continue;
        }
        let n = gbuf.normal[i];
        let v = view_dir(cam_pos, gbuf.position[i]);
        let mut lin = DVec3::ZERO;
        let mut d_a = DVec3::ZERO;
        let mut d_r = DVec3::ZERO;
        let mut d_m = DVec3::ZERO;
        if n.dot(v) > 0.0 {
            for (l, rad) in env.directions.iter().zip(&env.radiances) {
                let g = LobeGeometry::new(n, v, *l);
                if g.n_dot_l <= 0.0 {
                    continue;
                }
                let j = eval_with_jacobian(s, &g);
                let w = *rad * g.n_dot_l;
                lin += j.value * w;
                d_a += j.d_albedo * w;
                d_r += j.d_roughness * w;
                d_m += j.d_metallic * w;
            }
        }
        let chain = DVec3::new(
            up[0] * tone_map_slope(lin.x),
            up[1] * tone_map_slope(lin.y),
            up[2] * tone_map_slope(lin.z),
        );
        grads.push(BrdfGradient {
            albedo: chain * d_a,
            roughness: chain.dot(d_r),
            metallic: chain.dot(d_m),
        });
    }
    grads
}
