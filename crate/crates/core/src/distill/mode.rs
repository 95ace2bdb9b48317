use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConditionKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistillKind {
    /// Residual against the injected noise.
    Sds,
    /// Residual against a second, trained score estimator.
    Vsd,
    /// Personalized ψ, geometry control on both models, camera-aware φ.
    Pgsd,
}

impl DistillKind {
    pub fn name(self) -> &'static str {
        match self {
            DistillKind::Sds => "sds",
            DistillKind::Vsd => "vsd",
            DistillKind::Pgsd => "pgsd",
        }
    }

    pub fn uses_phi(self) -> bool {
        self != DistillKind::Sds
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlChoice {
    None,
    Normal,
    Depth,
}

impl ControlChoice {
    pub fn kind(self) -> Option<ConditionKind> {
        match self {
            ControlChoice::None => None,
            ControlChoice::Normal => Some(ConditionKind::Normal),
            ControlChoice::Depth => Some(ConditionKind::Depth),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiSource {
    GenericPretrained,
    Personalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillMode {
    pub kind: DistillKind,
    pub use_control: ControlChoice,
    pub cfg_weight: f64,
    pub phi_source: PhiSource,
    /// φ keeps frozen base weights; only the camera encoder can train.
    pub lora_removed: bool,
    pub train_camera_encoder: bool,
}

impl Default for DistillMode {
    fn default() -> Self {
        DistillMode::pgsd()
    }
}

/// Named ablation presets accepted by [`DistillMode::ablation`].
pub const ABLATIONS: [&str; 10] = [
    "full",
    "w/o-controlnet",
    "depth-controlnet",
    "sds-cfg100",
    "sds-no-cfg",
    "lora-kept",
    "personalized-phi",
    "cfg-7.5",
    "frozen-camera-encoder",
    "vsd",
];

impl DistillMode {
    pub fn pgsd() -> Self {
        DistillMode {
            kind: DistillKind::Pgsd,
            use_control: ControlChoice::Normal,
            cfg_weight: 1.0,
            phi_source: PhiSource::GenericPretrained,
            lora_removed: true,
            train_camera_encoder: true,
        }
    }

    pub fn sds(cfg_weight: f64) -> Self {
        DistillMode {
            kind: DistillKind::Sds,
            cfg_weight,
            ..DistillMode::pgsd()
        }
    }

    pub fn ablation(name: &str) -> Result<Self> {
        let base = DistillMode::pgsd();
        Ok(match name {
            "full" => base,
            "w/o-controlnet" | "no-control" => DistillMode {
                use_control: ControlChoice::None,
                ..base
            },
            "depth-controlnet" | "depth-control" => DistillMode {
                use_control: ControlChoice::Depth,
                ..base
            },
            "sds-cfg100" => DistillMode::sds(100.0),
            "sds-no-cfg" => DistillMode::sds(1.0),
            "lora-kept" => DistillMode {
                lora_removed: false,
                ..base
            },
            "personalized-phi" => DistillMode {
                phi_source: PhiSource::Personalized,
                ..base
            },
            "cfg-7.5" => DistillMode {
                cfg_weight: 7.5,
                ..base
            },
            "frozen-camera-encoder" => DistillMode {
                train_camera_encoder: false,
                ..base
            },
            "vsd" => DistillMode {
                kind: DistillKind::Vsd,
                use_control: ControlChoice::None,
                cfg_weight: 7.5,
                lora_removed: false,
                ..base
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation {other:?}; expected one of {}",
                    ABLATIONS.join(", ")
                )))
            }
        })
    }

    /// Short tag used in output directory names.
    pub fn tag(&self) -> String {
        let mut s = self.kind.name().to_string();
        match self.use_control {
            ControlChoice::None => s.push_str("-noctl"),
            ControlChoice::Depth => s.push_str("-depth"),
            ControlChoice::Normal => {}
        }
        if self.cfg_weight != 1.0 {
            s.push_str(&format!("-cfg{}", self.cfg_weight));
        }
        if self.kind.uses_phi() {
            if self.phi_source == PhiSource::Personalized {
                s.push_str("-psiphi");
            }
            if !self.lora_removed {
                s.push_str("-lora");
            }
            if !self.train_camera_encoder {
                s.push_str("-frozencam");
            }
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfg_weight >= 0.0) || !self.cfg_weight.is_finite() {
            return Err(Error::Config(format!("cfg_weight must be finite and >= 0, got {}", self.cfg_weight)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_differ() {
        let d = DistillMode::default();
        assert_eq!(d.use_control, ControlChoice::Normal);
        assert_eq!(d.cfg_weight, 1.0);
        assert!(d.lora_removed && d.train_camera_encoder);
        let mut tags = std::collections::HashSet::new();
        for name in ABLATIONS {
            let m = DistillMode::ablation(name).unwrap();
            m.validate().unwrap();
            tags.insert(m.tag());
        }
        assert_eq!(tags.len(), ABLATIONS.len());
        assert!(DistillMode::ablation("bogus").is_err());
    }
}
