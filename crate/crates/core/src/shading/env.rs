use std::f64::consts::PI;
use std::path::PathBuf;
use std::str::FromStr;

use glam::{DMat3, DVec3};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Rng;

/// Frozen set of directional lights. Each radiance already carries its
/// solid-angle weight, so a pixel's radiance is Σ f (n·l)⁺ radiance_l.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentLight {
    pub directions: Vec<DVec3>,
    pub radiances: Vec<DVec3>,
    pub source: String,
}

/// Built-in procedural environments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvPreset {
    /// Constant radiance over the whole sphere.
    Uniform,
    /// Exactly one light straight above, along +y.
    SingleLight,
    /// Key, fill and rim lobes over a dim ambient.
    ThreePoint,
    /// Blue sky gradient over a dark ground with a low warm sun.
    Sky,
}

impl EnvPreset {
    pub const ALL: [EnvPreset; 4] = [
        EnvPreset::Uniform,
        EnvPreset::SingleLight,
        EnvPreset::ThreePoint,
        EnvPreset::Sky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvPreset::Uniform => "uniform",
            EnvPreset::SingleLight => "single-light",
            EnvPreset::ThreePoint => "three-point",
            EnvPreset::Sky => "sky",
        }
    }
}

impl FromStr for EnvPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EnvPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown environment preset {s:?}")))
    }
}

/// Where the environment radiance comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvSource {
    Preset(EnvPreset),
    /// Latitude-longitude radiance map (u: azimuth from +z toward +x,
    /// v: polar angle from +y).
    LatLong { image: Image, name: String },
}

impl EnvSource {
    /// A preset name, or a path to a `.exr` lat-long map.
    pub fn parse(spec: &str) -> Result<EnvSource> {
        if spec.ends_with(".exr") {
            let path = PathBuf::from(spec);
            let image = Image::load_exr(&path)?;
            Ok(EnvSource::LatLong {
                image,
                name: spec.to_string(),
            })
        } else {
            Ok(EnvSource::Preset(spec.parse()?))
        }
    }

    pub fn name(&self) -> String {
        match self {
            EnvSource::Preset(p) => p.name().to_string(),
            EnvSource::LatLong { name, .. } => name.clone(),
        }
    }
}

/// Unit direction for lat-long coordinates (u, v) in [0, 1]².
pub fn latlong_direction(u: f64, v: f64) -> DVec3 {
    let phi = 2.0 * PI * u;
    let theta = PI * v;
    let (st, ct) = theta.sin_cos();
    DVec3::new(st * phi.sin(), ct, st * phi.cos())
}

fn lobe(dir: DVec3, center: DVec3, sharpness: f64) -> f64 {
    (sharpness * (dir.dot(center) - 1.0)).exp()
}

fn from_angles(az_deg: f64, el_deg: f64) -> DVec3 {
    let (sa, ca) = az_deg.to_radians().sin_cos();
    let (se, ce) = el_deg.to_radians().sin_cos();
    DVec3::new(ce * sa, se, ce * ca)
}

/// Procedural radiance of a preset in direction `dir`.
pub fn preset_radiance(preset: EnvPreset, dir: DVec3) -> DVec3 {
    match preset {
        EnvPreset::Uniform | EnvPreset::SingleLight => DVec3::splat(0.8),
        EnvPreset::ThreePoint => {
            let key = from_angles(35.0, 40.0);
            let fill = from_angles(-60.0, 15.0);
            let rim = from_angles(180.0, 50.0);
            DVec3::splat(0.12)
                + DVec3::new(10.0, 9.6, 9.0) * lobe(dir, key, 40.0)
                + DVec3::new(1.5, 1.6, 1.8) * lobe(dir, fill, 20.0)
                + DVec3::splat(5.0) * lobe(dir, rim, 40.0)
        }
        EnvPreset::Sky => {
            let sun = from_angles(-110.0, 20.0);
            let up = dir.y.max(0.0);
            let sky = DVec3::new(0.25, 0.4, 0.75) * (0.4 + 0.6 * up);
            let ground = DVec3::new(0.12, 0.1, 0.08);
            let base = if dir.y >= 0.0 { sky } else { ground };
            base + DVec3::new(14.0, 10.0, 6.0) * lobe(dir, sun, 60.0)
        }
    }
}

fn preset_image(preset: EnvPreset, width: usize) -> Image {
    let height = width / 2;
    let mut img = Image::new(width, height, 3);
    for y in 0..height {
        for x in 0..width {
            let d = latlong_direction((x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64);
            img.pixel_mut(x, y)
                .copy_from_slice(&preset_radiance(preset, d).to_array());
        }
    }
    img
}

/// Importance-sample `count` lights from an environment, proportional to
/// luminance times pixel solid angle. The result is frozen for a run.
pub fn discretize_environment(
    source: &EnvSource,
    count: usize,
    rng: &mut Rng,
) -> Result<EnvironmentLight> {
    if count == 0 {
        return Err(Error::InvalidArgument("light count must be at least 1".into()));
    }
    let owned;
    let image = match source {
        EnvSource::Preset(EnvPreset::SingleLight) => {
            return Ok(EnvironmentLight {
                directions: vec![DVec3::Y],
                radiances: vec![DVec3::splat(0.8 * PI)],
                source: source.name(),
            });
        }
        EnvSource::Preset(p) => {
            owned = preset_image(*p, 128);
            &owned
        }
        EnvSource::LatLong { image, .. } => image,
    };
    if image.channels != 3 || image.width == 0 || image.height == 0 {
        return Err(Error::InvalidArgument("environment map must be a non-empty RGB image".into()));
    }
    let (w, h) = (image.width, image.height);
    let d_omega_row = |y: usize| {
        let theta = PI * (y as f64 + 0.5) / h as f64;
        (2.0 * PI / w as f64) * (PI / h as f64) * theta.sin()
    };
    let mut cdf = Vec::with_capacity(w * h);
    let mut total = 0.0;
    for y in 0..h {
        let dw = d_omega_row(y);
        for x in 0..w {
            let p = image.pixel(x, y);
            if p.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::InvalidArgument("environment radiance must be finite and >= 0".into()));
            }
            total += image.luminance(y * w + x) * dw;
            cdf.push(total);
        }
    }
    if total <= 0.0 {
        return Err(Error::InvalidArgument("environment map is black".into()));
    }
    let mut directions = Vec::with_capacity(count);
    let mut radiances = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.random::<f64>() * total;
        let idx = cdf.partition_point(|&c| c <= target).min(w * h - 1);
        let (x, y) = (idx % w, idx / w);
        let u = (x as f64 + rng.random::<f64>()) / w as f64;
        let v = (y as f64 + rng.random::<f64>()) / h as f64;
        let dw = d_omega_row(y);
        let prob = image.luminance(idx) * dw / total;
        let rad = DVec3::from_slice(image.pixel(x, y));
        directions.push(latlong_direction(u, v));
        radiances.push(rad * (dw / (prob * count as f64)));
    }
    Ok(EnvironmentLight {
        directions,
        radiances,
        source: source.name(),
    })
}

impl EnvironmentLight {
    /// Rotate all light directions about +y.
    pub fn rotated_y(&self, angle: f64) -> EnvironmentLight {
        let rot = DMat3::from_rotation_y(angle);
        EnvironmentLight {
            directions: self.directions.iter().map(|d| rot * *d).collect(),
            radiances: self.radiances.clone(),
            source: format!("{}@rot{:.1}", self.source, angle.to_degrees()),
        }
    }

    /// Σ radiance luminance: a scalar proxy for the total light power.
    pub fn total_power(&self) -> f64 {
        self.radiances
            .iter()
            .map(|r| 0.2126 * r.x + 0.7152 * r.y + 0.0722 * r.z)
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> EnvironmentLight {
        EnvironmentLight {
            directions: self.directions.clone(),
            radiances: self.radiances.iter().map(|r| *r * factor).collect(),
            source: format!("{}x{factor}", self.source),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn single_light_preset() {
        let env = discretize_environment(&EnvSource::Preset(EnvPreset::SingleLight), 64, &mut rng_from_seed(0)).unwrap();
        assert_eq!(env.directions, vec![DVec3::Y]);
    }

    #[test]
    fn uniform_is_isotropic() {
        let env = discretize_environment(&EnvSource::Preset(EnvPreset::Uniform), 10_000, &mut rng_from_seed(1)).unwrap();
        let mean = env.directions.iter().copied().sum::<DVec3>() / env.directions.len() as f64;
        assert!(mean.length() < 0.05, "{mean:?}");
        for d in &env.directions {
            assert!((d.length() - 1.0).abs() < 1e-6);
        }
        // Radiance weights integrate the constant 0.8 over 4π.
        let total: DVec3 = env.radiances.iter().copied().sum();
        assert!((total.x - 0.8 * 4.0 * PI).abs() < 0.02 * 0.8 * 4.0 * PI);
    }

    #[test]
    fn deterministic_and_rejects_black() {
        let src = EnvSource::Preset(EnvPreset::ThreePoint);
        let a = discretize_environment(&src, 64, &mut rng_from_seed(9)).unwrap();
        let b = discretize_environment(&src, 64, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        let black = EnvSource::LatLong {
            image: Image::new(8, 4, 3),
            name: "black".into(),
        };
        assert!(discretize_environment(&black, 4, &mut rng_from_seed(0)).is_err());
        assert!("nope".parse::<EnvPreset>().is_err());
    }
}
