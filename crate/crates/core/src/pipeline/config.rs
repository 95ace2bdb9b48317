//! Run configuration: one TOML file with a section per stage. Unknown keys
//! are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffusion::{CorpusSpec, DenoiserConfig, NoiseSchedule, TrainConfig};
use crate::distill::{DistillConfig, DistillMode};
use crate::error::{Error, Result};
use crate::field::{HashGridConfig, MlpSpec};
use crate::geometry::{ConditionKind, ViewConfig};
use crate::personalize::PersonalizeConfig;
use crate::shading::{EnvSource, ProceduralMaterial};

/// Camera-embedding width of the full-scale latent model; the desk model
/// uses `diffusion.model.embed_dim` instead.
pub const FULL_SCALE_CAMERA_EMBED_WIDTH: usize = 1280;
/// Exemplar crop size of the full-scale model.
pub const FULL_SCALE_CROP: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    /// Shape the exemplars are rendered from (built-in primitive name).
    pub source_shape: String,
    /// Built-in primitive name or path to an OBJ file.
    pub target_mesh: String,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            source_shape: "cube".into(),
            target_mesh: "icosphere".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LightingSection {
    /// Preset name or `.exr` lat-long path.
    pub environment: String,
    /// Directional samples used to discretize the environment.
    pub lights: usize,
    /// Extra environments for relighting.
    pub relight: Vec<String>,
}

impl Default for LightingSection {
    fn default() -> Self {
        LightingSection {
            environment: "three-point".into(),
            lights: 64,
            relight: vec!["uniform".into(), "single-light".into(), "sky".into()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    pub grid: HashGridConfig,
    pub mlp: MlpSpec,
    pub bake_resolution: usize,
    pub dilation_px: usize,
}

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection {
            grid: HashGridConfig::default(),
            mlp: MlpSpec::default(),
            bake_resolution: 256,
            dilation_px: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 2e-2,
        }
    }
}

impl ScheduleSection {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionSection {
    pub model: DenoiserConfig,
    pub schedule: ScheduleSection,
    pub corpus: CorpusSpec,
    pub corpus_size: usize,
    pub train: TrainConfig,
    /// Control branches attached before pretraining.
    pub controls: Vec<ConditionKind>,
    /// Continue from an existing checkpoint in the output directory.
    pub resume: bool,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        DiffusionSection {
            model: DenoiserConfig::default(),
            schedule: ScheduleSection::default(),
            corpus: CorpusSpec::default(),
            corpus_size: 2000,
            train: TrainConfig::default(),
            controls: vec![ConditionKind::Normal, ConditionKind::Depth],
            resume: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExemplarSection {
    /// Directory of exemplar images; empty means `<out>/exemplars`.
    pub dir: String,
    /// Number of views rendered by `render-exemplars`.
    pub count: usize,
    pub elevation_deg: f64,
    pub radius: f64,
    pub material: ProceduralMaterial,
}

impl Default for ExemplarSection {
    fn default() -> Self {
        ExemplarSection {
            dir: String::new(),
            count: 4,
            elevation_deg: 20.0,
            radius: 3.2,
            material: ProceduralMaterial::checker("red", "white", 2.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PersonalizeSection {
    pub tune: PersonalizeConfig,
    pub exemplars: ExemplarSection,
}

impl Default for PersonalizeSection {
    fn default() -> Self {
        PersonalizeSection {
            tune: PersonalizeConfig::default(),
            exemplars: ExemplarSection::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillSection {
    pub mode: DistillMode,
    /// Optimization settings; `steps`, learning rates and camera ranges.
    pub run: DistillConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Fixed elevation of the four canonical views (azimuth 45/135/225/315).
    pub elevation_deg: f64,
    pub histogram_bins: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            elevation_deg: 15.0,
            histogram_bins: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: GeometrySection,
    pub lighting: LightingSection,
    pub field: FieldSection,
    pub diffusion: DiffusionSection,
    pub personalize: PersonalizeSection,
    pub distill: DistillSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            geometry: GeometrySection::default(),
            lighting: LightingSection::default(),
            field: FieldSection::default(),
            diffusion: DiffusionSection::default(),
            personalize: PersonalizeSection::default(),
            distill: DistillSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::Config(format!("config file {} not found", path.display()))
            } else {
                Error::io(path, e)
            }
        })?;
        RunConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Check every section; errors are reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        let cfg = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        cfg(self.field.grid.validate())?;
        cfg(self.field.mlp.validate())?;
        if self.field.bake_resolution < 16 {
            return Err(Error::Config("field.bake_resolution must be at least 16".into()));
        }
        if self.lighting.lights == 0 {
            return Err(Error::Config("lighting.lights must be positive".into()));
        }
        for env in std::iter::once(&self.lighting.environment).chain(&self.lighting.relight) {
            if !env.ends_with(".exr") {
                cfg(EnvSource::parse(env).map(|_| ()))?;
            }
        }
        cfg(self.diffusion.model.validate())?;
        self.diffusion.schedule.build()?;
        cfg(self.diffusion.corpus.view.validate())?;
        if self.diffusion.corpus.resolution != self.diffusion.model.resolution {
            return Err(Error::Config("diffusion.corpus.resolution must equal diffusion.model.resolution".into()));
        }
        cfg(self.diffusion.train.validate())?;
        self.personalize.tune.validate()?;
        cfg(self.personalize.exemplars.material.validate())?;
        if self.personalize.exemplars.count == 0 || self.personalize.exemplars.count > 8 {
            return Err(Error::Config("personalize.exemplars.count must be in 1..=8".into()));
        }
        self.distill.mode.validate()?;
        self.distill.run.validate()?;
        if let Some(kind) = self.distill.mode.use_control.kind() {
            if !self.diffusion.controls.contains(&kind) {
                return Err(Error::Config(format!(
                    "distill.mode uses {} control but diffusion.controls does not train it",
                    kind.name()
                )));
            }
        }
        if self.eval.histogram_bins < 2 {
            return Err(Error::Config("eval.histogram_bins must be at least 2".into()));
        }
        Ok(())
    }

    pub fn exemplar_dir(&self, out: &Path) -> PathBuf {
        if self.personalize.exemplars.dir.is_empty() {
            out.join("exemplars")
        } else {
            PathBuf::from(&self.personalize.exemplars.dir)
        }
    }

    /// Views used for evaluation renders.
    pub fn eval_view(&self) -> ViewConfig {
        self.distill.run.view.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_unknown_keys_fail() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        assert!(RunConfig::from_toml("[distill.run]\nstepz = 3\n").is_err());
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
        let partial = RunConfig::from_toml("seed = 5\n[distill.mode]\ncfg_weight = 7.5\n").unwrap();
        assert_eq!(partial.seed, 5);
        assert_eq!(partial.distill.mode.cfg_weight, 7.5);
        assert_eq!(partial.distill.run.grid_lr, 0.01);
    }

    #[test]
    fn reference_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.distill.run.grid_lr, 0.01);
        assert_eq!(cfg.distill.run.mlp_lr, 0.001);
        assert_eq!(cfg.distill.run.camera_lr, 1e-4);
        assert_eq!(cfg.distill.mode.cfg_weight, 1.0);
        assert_eq!(FULL_SCALE_CAMERA_EMBED_WIDTH, 1280);
        assert_eq!(FULL_SCALE_CROP, 512);
    }
}
