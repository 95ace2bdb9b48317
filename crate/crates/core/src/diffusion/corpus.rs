//! Procedural training corpus: textured primitives rendered over white,
//! each with normal and depth condition images and a token caption.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tokens::PromptTokens;
use crate::error::{Error, Result};
use crate::geometry::{primitives, render_condition, sample_camera, ConditionKind, TriangleMesh, ViewConfig};
use crate::image::Image;
use crate::rng::{child_rng, fnv1a, Rng};
use crate::shading::{discretize_environment, render_material, EnvSource, Pattern, ProceduralMaterial, PALETTE};

const MANIFEST: &str = "manifest.tsv";
const MANIFEST_HEADER: &str = "# corpus v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    /// Stored (model) resolution.
    pub resolution: usize,
    /// Renders are made at `view.resolution` and area-downsampled.
    pub view: ViewConfig,
    pub environment: String,
    pub lights: usize,
    pub frequency: [f64; 2],
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            resolution: 32,
            view: ViewConfig::default(),
            environment: "three-point".into(),
            lights: 64,
            frequency: [1.5, 3.5],
        }
    }
}

pub const SHAPES: [&str; 4] = ["sphere", "cube", "torus", "capsule"];

pub fn shape_mesh(name: &str) -> Result<TriangleMesh> {
    Ok(match name {
        "sphere" => primitives::uv_sphere(32, 16),
        "cube" => primitives::cube(),
        "torus" => primitives::torus(32, 16),
        "capsule" => primitives::capsule(24, 6),
        "icosphere" => primitives::icosphere(3),
        "quad" => primitives::quad(),
        other => return Err(Error::InvalidArgument(format!("unknown shape {other:?}"))),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSample {
    pub id: String,
    pub caption: PromptTokens,
    pub image: Image,
    pub normal: Image,
    pub depth: Image,
}

impl CorpusSample {
    pub fn condition(&self, kind: ConditionKind) -> &Image {
        match kind {
            ConditionKind::Normal => &self.normal,
            ConditionKind::Depth => &self.depth,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub resolution: usize,
    pub samples: Vec<CorpusSample>,
}

/// Round to the 8-bit grid so in-memory and on-disk samples agree.
fn quantize(mut img: Image) -> Image {
    for v in &mut img.data {
        *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
    }
    img
}

fn image_digest(img: &Image) -> u64 {
    fnv1a(img.data.iter().map(|v| (v * 255.0).round() as u8))
}

/// Render `n` random samples.
pub fn generate_corpus(spec: &CorpusSpec, n: usize, seed: u64) -> Result<Corpus> {
    spec.view.validate()?;
    if spec.resolution == 0 || spec.view.resolution % spec.resolution != 0 {
        return Err(Error::InvalidArgument("render resolution must be a multiple of the corpus resolution".into()));
    }
    let env = discretize_environment(&EnvSource::parse(&spec.environment)?, spec.lights, &mut child_rng(seed, "corpus-env"))?;
    let meshes: Vec<TriangleMesh> = SHAPES.iter().map(|s| shape_mesh(s)).collect::<Result<_>>()?;
    let mut rng = child_rng(seed, "corpus");
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let shape = rng.random_range(0..SHAPES.len());
        let material = random_material(spec, &mut rng);
        let cam = sample_camera(&mut rng, &spec.view)?;
        let (render, gbuf) = render_material(&meshes[shape], &cam, &material, &env);
        let r = spec.resolution;
        let normal = render_condition(&gbuf, &cam, ConditionKind::Normal).image;
        let depth = render_condition(&gbuf, &cam, ConditionKind::Depth).image;
        let caption = PromptTokens::parse(&format!(
            "a photo of a {} {} {} {} {}",
            material.primary,
            material.secondary,
            material.pattern.name(),
            SHAPES[shape],
            super::tokens::view_word_for(&cam)
        ))?;
        samples.push(CorpusSample {
            id: format!("s{k:05}"),
            caption,
            image: quantize(render.pixels.resample_area(r, r)),
            normal: quantize(normal.resample_area(r, r)),
            depth: quantize(depth.resample_area(r, r)),
        });
    }
    Ok(Corpus {
        resolution: spec.resolution,
        samples,
    })
}

fn random_material(spec: &CorpusSpec, rng: &mut Rng) -> ProceduralMaterial {
    let pattern = *Pattern::ALL.choose(rng).unwrap();
    let pair: Vec<_> = PALETTE.choose_multiple(rng, 2).collect();
    let axis = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let metallic = if rng.random::<f64>() < 0.8 { 0.0 } else { rng.random_range(0.3..0.8) };
    ProceduralMaterial {
        pattern,
        primary: pair[0].0.into(),
        secondary: pair[1].0.into(),
        frequency: rng.random_range(spec.frequency[0]..spec.frequency[1]),
        axis,
        roughness: rng.random_range(0.3..0.9),
        metallic,
    }
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Tab-separated manifest: id, caption, file names, pixel digest.
    pub fn manifest(&self) -> String {
        let mut out = format!("{MANIFEST_HEADER}\tresolution={}\tsamples={}\n", self.resolution, self.len());
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{id}\t{cap}\t{id}.png\t{id}.normal.png\t{id}.depth.png\t{:016x}",
                image_digest(&s.image) ^ image_digest(&s.normal).rotate_left(21) ^ image_digest(&s.depth).rotate_left(42),
                id = s.id,
                cap = s.caption.text(),
            );
        }
        out
    }

    pub fn manifest_hash(&self) -> u64 {
        fnv1a(self.manifest().bytes())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in &self.samples {
            s.image.save_png8(&dir.join(format!("{}.png", s.id)))?;
            s.normal.save_png8(&dir.join(format!("{}.normal.png", s.id)))?;
            s.depth.save_png8(&dir.join(format!("{}.depth.png", s.id)))?;
        }
        let path = dir.join(MANIFEST);
        std::fs::write(&path, self.manifest()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Corpus> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(format!("corpus manifest {}", path.display()))
            } else {
                Error::io(&path, e)
            }
        })?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let resolution = header
            .split('\t')
            .find_map(|f| f.strip_prefix("resolution="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse {
                path: path.clone(),
                line: 1,
                msg: "missing resolution in header".into(),
            })?;
        let mut samples = Vec::new();
        for (ln, line) in lines.enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(Error::Parse {
                    path: path.clone(),
                    line: ln + 2,
                    msg: "expected 6 tab-separated fields".into(),
                });
            }
            let load = |name: &str| -> Result<Image> {
                let img = Image::load_png(&dir.join(name))?;
                if img.channels == 3 {
                    Ok(img)
                } else {
                    Err(Error::Image(format!("{name}: expected RGB")))
                }
            };
            samples.push(CorpusSample {
                id: f[0].to_string(),
                caption: PromptTokens::parse(f[1])?,
                image: load(f[2])?,
                normal: load(f[3])?,
                depth: load(f[4])?,
            });
        }
        Ok(Corpus { resolution, samples })
    }

    /// Split off the last `fraction` of samples as a held-out set.
    pub fn split(&self, fraction: f64) -> (Corpus, Corpus) {
        let held = ((self.len() as f64 * fraction).round() as usize).min(self.len());
        let cut = self.len() - held;
        (
            Corpus {
                resolution: self.resolution,
                samples: self.samples[..cut].to_vec(),
            },
            Corpus {
                resolution: self.resolution,
                samples: self.samples[cut..].to_vec(),
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_corpus_is_deterministic_with_white_background() {
        let spec = CorpusSpec::default();
        let a = generate_corpus(&spec, 3, 7).unwrap();
        let b = generate_corpus(&spec, 3, 7).unwrap();
        assert_eq!(a.manifest_hash(), b.manifest_hash());
        assert_eq!(a.len(), 3);
        for s in &a.samples {
            assert_eq!(s.image.width, 32);
            assert_eq!(s.image.pixel(0, 0), &[1.0, 1.0, 1.0]);
            assert!(s.caption.text().starts_with("a photo of a"));
        }
        let empty = generate_corpus(&spec, 0, 7).unwrap();
        assert!(empty.manifest().starts_with(MANIFEST_HEADER));
    }
}
