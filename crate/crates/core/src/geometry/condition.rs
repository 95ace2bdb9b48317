use glam::DVec3;
use serde::{Deserialize, Serialize};

use super::camera::CameraPose;
use super::raster::GBuffer;
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionKind {
    Normal,
    Depth,
}

impl ConditionKind {
    pub fn name(self) -> &'static str {
        match self {
            ConditionKind::Normal => "normal",
            ConditionKind::Depth => "depth",
        }
    }
}

/// Geometry condition image fed to a control branch. Values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionImage {
    pub kind: ConditionKind,
    pub image: Image,
}

pub const NORMAL_BACKGROUND: [f64; 3] = [0.5, 0.5, 1.0];

#[inline]
pub fn encode_normal(n: DVec3) -> [f64; 3] {
    [(n.x + 1.0) * 0.5, (n.y + 1.0) * 0.5, (n.z + 1.0) * 0.5]
}

#[inline]
pub fn decode_normal(c: &[f64]) -> DVec3 {
    DVec3::new(2.0 * c[0] - 1.0, 2.0 * c[1] - 1.0, 2.0 * c[2] - 1.0)
}

/// Render the normal or depth condition image from a G-buffer.
///
/// Normals are rotated into camera space and mapped to (n + 1) / 2 with a
/// (0.5, 0.5, 1) background. Depth is min-max normalized inverse depth over
/// the covered pixels, nearest = 1, with a 0 background.
pub fn render_condition(gbuf: &GBuffer, cam: &CameraPose, kind: ConditionKind) -> ConditionImage {
    let mut image = Image::new(gbuf.width, gbuf.height, 3);
    match kind {
        ConditionKind::Normal => {
            let rot = cam.rotation();
            for i in 0..gbuf.mask.len() {
                let px = if gbuf.mask[i] {
                    encode_normal(rot * gbuf.normal[i])
                } else {
                    NORMAL_BACKGROUND
                };
                image.texel_mut(i).copy_from_slice(&px);
            }
        }
        ConditionKind::Depth => {
            let (lo, hi) = gbuf
                .mask
                .iter()
                .zip(&gbuf.depth)
                .filter(|(m, _)| **m)
                .map(|(_, d)| 1.0 / d)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            for i in 0..gbuf.mask.len() {
                if gbuf.mask[i] {
                    let inv = 1.0 / gbuf.depth[i];
                    let v = if hi > lo { (inv - lo) / (hi - lo) } else { 1.0 };
                    image.texel_mut(i).copy_from_slice(&[v, v, v]);
                }
            }
        }
    }
    ConditionImage { kind, image }
}
