use glam::DVec3;
use serde::{Deserialize, Serialize};

use super::brdf::{BrdfSample, ROUGHNESS_MIN};
use super::env::EnvironmentLight;
use super::shade::{shade, RenderedImage};
use crate::error::{Error, Result};
use crate::geometry::{rasterize, CameraPose, GBuffer, TriangleMesh};

/// Solid (3D) procedural pattern families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Checker,
    Stripes,
    Dots,
    Gradient,
    Patches,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [
        Pattern::Checker,
        Pattern::Stripes,
        Pattern::Dots,
        Pattern::Gradient,
        Pattern::Patches,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Checker => "checker",
            Pattern::Stripes => "stripes",
            Pattern::Dots => "dots",
            Pattern::Gradient => "gradient",
            Pattern::Patches => "patches",
        }
    }
}

/// Named linear-space albedo colours.
pub const PALETTE: [(&str, [f64; 3]); 10] = [
    ("red", [0.80, 0.06, 0.05]),
    ("orange", [0.90, 0.35, 0.04]),
    ("yellow", [0.90, 0.80, 0.08]),
    ("green", [0.10, 0.60, 0.12]),
    ("blue", [0.06, 0.15, 0.80]),
    ("purple", [0.45, 0.10, 0.65]),
    ("white", [0.90, 0.90, 0.90]),
    ("black", [0.04, 0.04, 0.04]),
    ("gray", [0.40, 0.40, 0.40]),
    ("brown", [0.35, 0.18, 0.07]),
];

pub fn palette_color(name: &str) -> Result<DVec3> {
    PALETTE
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, c)| DVec3::from_array(*c))
        .ok_or_else(|| Error::InvalidArgument(format!("unknown colour {name:?}")))
}

/// Two-colour procedural material with constant roughness and metallic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProceduralMaterial {
    pub pattern: Pattern,
    pub primary: String,
    pub secondary: String,
    /// Pattern cells per unit length.
    pub frequency: f64,
    /// Unit axis used by stripes and gradients.
    pub axis: [f64; 3],
    pub roughness: f64,
    pub metallic: f64,
}

impl ProceduralMaterial {
    pub fn checker(primary: &str, secondary: &str, frequency: f64) -> Self {
        ProceduralMaterial {
            pattern: Pattern::Checker,
            primary: primary.into(),
            secondary: secondary.into(),
            frequency,
            axis: [0.0, 1.0, 0.0],
            roughness: 0.6,
            metallic: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        palette_color(&self.primary)?;
        palette_color(&self.secondary)?;
        if !(self.frequency > 0.0) {
            return Err(Error::InvalidArgument("pattern frequency must be positive".into()));
        }
        if !(ROUGHNESS_MIN..=1.0).contains(&self.roughness) || !(0.0..=1.0).contains(&self.metallic) {
            return Err(Error::InvalidArgument("material roughness/metallic out of range".into()));
        }
        Ok(())
    }

    /// Fraction of the primary colour at point `p`.
    pub fn blend(&self, p: DVec3) -> f64 {
        let f = self.frequency;
        let axis = DVec3::from_array(self.axis).normalize_or(DVec3::Y);
        match self.pattern {
            Pattern::Checker => {
                let c = (p * f).floor();
                let parity = (c.x + c.y + c.z).rem_euclid(2.0);
                if parity < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            Pattern::Stripes => {
                if (p.dot(axis) * f).floor().rem_euclid(2.0) < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            Pattern::Dots => {
                let q = p * f;
                let d = (q - q.round()).length();
                if d < 0.3 {
                    1.0
                } else {
                    0.0
                }
            }
            Pattern::Gradient => (0.5 * (p.dot(axis) + 1.0)).clamp(0.0, 1.0),
            Pattern::Patches => {
                if value_noise(p * f) > 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample(&self, p: DVec3) -> BrdfSample {
        let a = palette_color(&self.primary).unwrap_or(DVec3::ONE);
        let b = palette_color(&self.secondary).unwrap_or(DVec3::ZERO);
        let t = self.blend(p);
        BrdfSample::new(a * t + b * (1.0 - t), self.roughness, self.metallic)
    }
}

fn lattice_hash(x: i64, y: i64, z: i64) -> f64 {
    let mut h = (x as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (y as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f)
        ^ (z as u64).wrapping_mul(0x1656_67b1_9e37_79f9);
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Trilinear value noise in [0, 1] with smoothstep fade.
fn value_noise(p: DVec3) -> f64 {
    let i = p.floor();
    let f = p - i;
    let s = f * f * (DVec3::splat(3.0) - 2.0 * f);
    let (x, y, z) = (i.x as i64, i.y as i64, i.z as i64);
    let mut acc = 0.0;
    for c in 0..8 {
        let (dx, dy, dz) = ((c & 1) as i64, ((c >> 1) & 1) as i64, ((c >> 2) & 1) as i64);
        let w = (if dx == 1 { s.x } else { 1.0 - s.x })
            * (if dy == 1 { s.y } else { 1.0 - s.y })
            * (if dz == 1 { s.z } else { 1.0 - s.z });
        acc += w * lattice_hash(x + dx, y + dy, z + dz);
    }
    acc
}

/// Rasterize and shade a mesh carrying a procedural material.
pub fn render_material(
    mesh: &TriangleMesh,
    cam: &CameraPose,
    material: &ProceduralMaterial,
    env: &EnvironmentLight,
) -> (RenderedImage, GBuffer) {
    let gbuf = rasterize(mesh, cam);
    let brdf: Vec<BrdfSample> = gbuf
        .covered()
        .iter()
        .map(|&i| material.sample(gbuf.position[i]))
        .collect();
    (shade(&gbuf, cam, &brdf, env), gbuf)
}
