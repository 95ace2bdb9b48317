//! Few-shot fine-tuning of the denoiser on exemplar images bound to the
//! `[V]` identifier token.

use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diffusion::nn::AdamParams;
use crate::diffusion::{
    personalized_prompt, train_step, view_word, Denoiser, DivergenceDetector, Example, NoiseSchedule, ParamGroup,
    PromptTokens, Tensor, IDENTIFIER,
};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::rng::child_rng;

/// Where an exemplar was taken from (angles in degrees).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExemplarView {
    pub azimuth: f64,
    pub elevation: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExemplarSet {
    pub images: Vec<Image>,
    pub masks: Vec<Mask>,
    pub views: Option<Vec<ExemplarView>>,
    pub prompt: PromptTokens,
}

impl ExemplarSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Prompt for exemplar `k`, with its view word when cameras are known.
    pub fn prompt_for(&self, k: usize) -> PromptTokens {
        match &self.views {
            Some(v) => personalized_prompt(Some(view_word(v[k].azimuth, v[k].elevation))),
            None => self.prompt.clone(),
        }
    }
}

fn resize_mask(mask: &Mask, w: usize, h: usize) -> Mask {
    Mask::from_image(&mask.to_image().resample_area(w, h), 0.5)
}

/// White-composite each image outside its mask, resize so the shorter edge
/// is `target_size`, and center-crop everything to the smallest common size.
pub fn prepare_exemplars(raw: &[(Image, Mask)], target_size: usize, views: Option<Vec<ExemplarView>>) -> Result<ExemplarSet> {
    if raw.is_empty() || raw.len() > 8 {
        return Err(Error::InvalidArgument(format!("need 1 to 8 exemplars, got {}", raw.len())));
    }
    if target_size < 8 {
        return Err(Error::InvalidArgument("target_size must be at least 8".into()));
    }
    if let Some(v) = &views {
        if v.len() != raw.len() {
            return Err(Error::InvalidArgument("one camera entry per exemplar required".into()));
        }
    }
    let mut resized = Vec::with_capacity(raw.len());
    for (k, (img, mask)) in raw.iter().enumerate() {
        if (img.width, img.height) != (mask.width, mask.height) {
            return Err(Error::InvalidArgument(format!("exemplar {k}: mask size differs from image")));
        }
        if img.channels != 3 {
            return Err(Error::InvalidArgument(format!("exemplar {k}: expected an RGB image")));
        }
        if mask.count() == 0 {
            return Err(Error::InvalidArgument(format!("exemplar {k}: empty foreground")));
        }
        let mut comp = img.clone();
        for (i, &m) in mask.data.iter().enumerate() {
            if !m {
                comp.texel_mut(i).iter_mut().for_each(|v| *v = 1.0);
            }
        }
        let short = img.width.min(img.height) as f64;
        let scale = target_size as f64 / short;
        let w = ((img.width as f64 * scale).round() as usize).max(target_size);
        let h = ((img.height as f64 * scale).round() as usize).max(target_size);
        let (comp, mask) = if (w, h) == (img.width, img.height) {
            (comp, mask.clone())
        } else {
            (comp.resample_area(w, h), resize_mask(mask, w, h))
        };
        resized.push((comp, mask));
    }
    let cw = resized.iter().map(|(i, _)| i.width).min().unwrap();
    let ch = resized.iter().map(|(i, _)| i.height).min().unwrap();
    let mut images = Vec::new();
    let mut masks = Vec::new();
    for (img, mask) in resized {
        let (x0, y0) = ((img.width - cw) / 2, (img.height - ch) / 2);
        let mut img = img.crop(x0, y0, cw, ch);
        let m = Mask {
            width: cw,
            height: ch,
            data: (0..ch)
                .flat_map(|y| (0..cw).map(move |x| (x, y)))
                .map(|(x, y)| mask.get(x0 + x, y0 + y))
                .collect(),
        };
        // Re-impose exact white outside the final mask after resampling.
        for (i, &inside) in m.data.iter().enumerate() {
            if !inside {
                img.texel_mut(i).iter_mut().for_each(|v| *v = 1.0);
            }
        }
        images.push(img);
        masks.push(m);
    }
    Ok(ExemplarSet {
        images,
        masks,
        views,
        prompt: personalized_prompt(None),
    })
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    #[serde(default)]
    view: Vec<CameraEntry>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraEntry {
    image: String,
    azimuth: f64,
    elevation: f64,
    radius: f64,
}

pub const CAMERA_FILE: &str = "cameras.toml";

/// Read `<stem>.png` + `<stem>.mask.png` pairs (sorted by stem) and the
/// optional `cameras.toml` with one `[[view]]` table per image.
pub fn load_exemplar_dir(dir: &Path) -> Result<(Vec<(Image, Mask)>, Option<Vec<ExemplarView>>)> {
    let entries = std::fs::read_dir(dir).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(format!("exemplar directory {}", dir.display()))
        } else {
            Error::io(dir, e)
        }
    })?;
    let mut stems: Vec<(String, PathBuf)> = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if let Some(stem) = name.strip_suffix(".png") {
            if !stem.ends_with(".mask") {
                stems.push((stem.to_string(), path));
            }
        }
    }
    stems.sort();
    let mut raw = Vec::new();
    for (stem, path) in &stems {
        let img = Image::load_png(path)?;
        let mask_path = dir.join(format!("{stem}.mask.png"));
        let mask = if mask_path.exists() {
            Mask::from_image(&Image::load_png(&mask_path)?, 0.5)
        } else {
            log::warn!("{}: no mask, treating the whole image as foreground", path.display());
            Mask::new(img.width, img.height, true)
        };
        let img = if img.channels == 3 {
            img
        } else {
            Image::from_fn(img.width, img.height, 3, |x, y| {
                let v = img.pixel(x, y)[0];
                [v, v, v]
            })
        };
        raw.push((img, mask));
    }
    let cam_path = dir.join(CAMERA_FILE);
    let views = if cam_path.exists() {
        let text = std::fs::read_to_string(&cam_path).map_err(|e| Error::io(&cam_path, e))?;
        let file: CameraFile = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", cam_path.display())))?;
        let mut views = Vec::new();
        for (stem, _) in &stems {
            let entry = file
                .view
                .iter()
                .find(|v| v.image == format!("{stem}.png") || v.image == *stem)
                .ok_or_else(|| Error::Config(format!("{}: no camera for {stem}", cam_path.display())))?;
            views.push(ExemplarView {
                azimuth: entry.azimuth,
                elevation: entry.elevation,
                radius: entry.radius,
            });
        }
        Some(views)
    } else {
        None
    };
    Ok((raw, views))
}

/// Write exemplars in the directory layout read by [`load_exemplar_dir`].
pub fn save_exemplar_dir(dir: &Path, set: &ExemplarSet) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut cams = String::new();
    for (k, (img, mask)) in set.images.iter().zip(&set.masks).enumerate() {
        img.save_png8(&dir.join(format!("view{k}.png")))?;
        mask.to_image().save_png8(&dir.join(format!("view{k}.mask.png")))?;
        if let Some(v) = &set.views {
            cams.push_str(&format!(
                "[[view]]\nimage = \"view{k}.png\"\nazimuth = {:?}\nelevation = {:?}\nradius = {:?}\n\n",
                v[k].azimuth, v[k].elevation, v[k].radius
            ));
        }
    }
    if set.views.is_some() {
        let p = dir.join(CAMERA_FILE);
        std::fs::write(&p, cams).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PersonalizeConfig {
    /// Shorter-edge size after preparation.
    pub target_size: usize,
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
}

impl Default for PersonalizeConfig {
    fn default() -> Self {
        PersonalizeConfig {
            target_size: 64,
            steps: 800,
            lr: 5e-4,
            batch_size: 4,
            clip_norm: 1.0,
        }
    }
}

impl PersonalizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_size < 8 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("personalize: target_size >= 8, batch_size > 0, lr > 0".into()));
        }
        Ok(())
    }
}

/// Random square crop with side equal to the shorter edge, resized to the
/// model resolution.
fn random_crop(img: &Image, res: usize, rng: &mut crate::rng::Rng) -> Image {
    let side = img.width.min(img.height);
    let x0 = if img.width > side { rng.random_range(0..=img.width - side) } else { 0 };
    let y0 = if img.height > side { rng.random_range(0..=img.height - side) } else { 0 };
    let crop = img.crop(x0, y0, side, side);
    if side == res {
        crop
    } else {
        crop.resample_area(res, res)
    }
}

/// Exemplars as model-resolution training examples (center crops).
pub fn exemplar_examples(set: &ExemplarSet, resolution: usize) -> Vec<Example> {
    (0..set.len())
        .map(|k| {
            let img = &set.images[k];
            let side = img.width.min(img.height);
            let crop = img.crop((img.width - side) / 2, (img.height - side) / 2, side, side);
            Example {
                image: Tensor::from_image(&crop.resample_area(resolution, resolution)),
                tokens: set.prompt_for(k),
                control: None,
            }
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FineTuneReport {
    pub losses: Vec<f64>,
}

/// Copy `base` and fine-tune every base weight, including the `[V]`
/// embedding, on the exemplars. Control branches stay frozen and the base
/// model is left untouched.
pub fn fine_tune(
    base: &Denoiser,
    set: &ExemplarSet,
    schedule: &NoiseSchedule,
    cfg: &PersonalizeConfig,
    seed: u64,
) -> Result<(Denoiser, FineTuneReport)> {
    cfg.validate()?;
    if !set.prompt.contains(IDENTIFIER) {
        return Err(Error::InvalidArgument("exemplar prompt must contain the identifier token".into()));
    }
    let mut psi = base.clone();
    let mut report = FineTuneReport::default();
    if cfg.steps == 0 {
        return Ok((psi, report));
    }
    psi.set_trainable(&[ParamGroup::Base]);
    psi.reset_optimizer();
    let adam = AdamParams::with_lr(cfg.lr as f32);
    let res = psi.config.resolution;
    let mut rng = child_rng(seed, "personalize");
    let mut detector = DivergenceDetector::default();
    for step in 0..cfg.steps {
        let batch: Vec<Example> = (0..cfg.batch_size)
            .map(|_| {
                let k = rng.random_range(0..set.len());
                Example {
                    image: Tensor::from_image(&random_crop(&set.images[k], res, &mut rng)),
                    tokens: set.prompt_for(k),
                    control: None,
                }
            })
            .collect();
        let loss = train_step(&mut psi, schedule, &batch, &adam, cfg.clip_norm, &mut rng)?;
        detector.observe(step, loss)?;
        report.losses.push(loss);
    }
    psi.reset_optimizer();
    Ok((psi, report))
}

/// Saturation-weighted circular mean hue (degrees) over masked pixels.
pub fn mean_hue(images: &[Image], masks: &[Mask]) -> Option<f64> {
    let (mut sx, mut sy) = (0.0, 0.0);
    for (img, mask) in images.iter().zip(masks) {
        for (i, &m) in mask.data.iter().enumerate() {
            if !m {
                continue;
            }
            let p = img.texel(i);
            let (h, s) = hue_saturation(p[0], p[1], p[2]);
            sx += s * h.to_radians().cos();
            sy += s * h.to_radians().sin();
        }
    }
    if sx.hypot(sy) < 1e-9 {
        None
    } else {
        Some(sy.atan2(sx).to_degrees().rem_euclid(360.0))
    }
}

/// HSV hue in degrees and saturation of an RGB triple.
pub fn hue_saturation(r: f64, g: f64, b: f64) -> (f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    if d <= 0.0 || max <= 0.0 {
        return (0.0, 0.0);
    }
    let h = if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    (h, d / max)
}

pub fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}
