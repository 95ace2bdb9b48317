//! Checkpoint container: magic, length-prefixed TOML header with the array
//! table, little-endian payload, trailing CRC32 over everything before it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{Denoiser, DenoiserConfig};
use crate::error::{Error, Result};
use crate::field::{HashGridConfig, Mlp, MlpSpec, TextureField, HEAD_CHANNELS};
use crate::geometry::ConditionKind;
use crate::rng::rng_from_seed;

pub const MAGIC: &[u8; 8] = b"PGSDWT01";

#[derive(Clone, Debug, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype(&self) -> &'static str {
        match self {
            ArrayData::F32(_) => "f32",
            ArrayData::F64(_) => "f64",
        }
    }

    fn byte_len(&self) -> usize {
        match self {
            ArrayData::F32(v) => 4 * v.len(),
            ArrayData::F64(v) => 8 * v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: String,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    #[serde(default)]
    arrays: Vec<ArrayEntry>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightsFile {
    pub kind: String,
    pub meta: BTreeMap<String, String>,
    pub arrays: Vec<NamedArray>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Weights(msg.into())
}

impl WeightsFile {
    pub fn new(kind: &str) -> Self {
        WeightsFile {
            kind: kind.into(),
            ..Default::default()
        }
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| bad(format!("array {name:?} missing")))
    }

    pub fn meta_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta
            .get(key)
            .ok_or_else(|| bad(format!("header key {key:?} missing")))?
            .parse()
            .map_err(|_| bad(format!("header key {key:?} has an invalid value")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut seen = std::collections::HashSet::new();
        let mut entries = Vec::with_capacity(self.arrays.len());
        let mut offset = 0u64;
        for a in &self.arrays {
            if !seen.insert(a.name.as_str()) {
                return Err(bad(format!("duplicate array {:?}", a.name)));
            }
            if a.shape.iter().product::<usize>() != a.data.len() {
                return Err(bad(format!("array {:?}: shape {:?} does not match {} values", a.name, a.shape, a.data.len())));
            }
            entries.push(ArrayEntry {
                name: a.name.clone(),
                dtype: a.data.dtype().into(),
                shape: a.shape.clone(),
                offset,
            });
            offset += a.data.byte_len() as u64;
        }
        let header = toml::to_string(&Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: entries,
        })
        .map_err(|e| bad(format!("header encoding: {e}")))?;
        let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for a in &self.arrays {
            match &a.data {
                ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<WeightsFile> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a weights file (bad magic)"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(bad("CRC mismatch"));
        }
        let hlen = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
        let header_end = 12usize.checked_add(hlen).filter(|e| *e <= body.len()).ok_or_else(|| bad("truncated header"))?;
        let text = std::str::from_utf8(&body[12..header_end]).map_err(|_| bad("header is not UTF-8"))?;
        let header: Header = toml::from_str(text).map_err(|e| bad(format!("header: {e}")))?;
        let payload = &body[header_end..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        let mut names = std::collections::HashSet::new();
        let mut expected_offset = 0usize;
        for e in header.arrays {
            if !names.insert(e.name.clone()) {
                return Err(bad(format!("array {:?} listed twice", e.name)));
            }
            let n: usize = e.shape.iter().product();
            let width = match e.dtype.as_str() {
                "f32" => 4,
                "f64" => 8,
                other => return Err(bad(format!("unsupported dtype {other:?}"))),
            };
            let start = e.offset as usize;
            if start != expected_offset {
                return Err(bad(format!("array {:?} at unexpected offset", e.name)));
            }
            let end = start + n * width;
            let raw = payload.get(start..end).ok_or_else(|| bad(format!("array {:?} truncated", e.name)))?;
            expected_offset = end;
            let data = if width == 4 {
                ArrayData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            } else {
                ArrayData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            };
            arrays.push(NamedArray {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        if expected_offset != payload.len() {
            return Err(bad("payload has trailing bytes"));
        }
        Ok(WeightsFile {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<WeightsFile> {
        let bytes = std::fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(format!("weights file {}", path.display()))
            } else {
                Error::io(path, e)
            }
        })?;
        WeightsFile::from_bytes(&bytes)
    }
}

pub const DENOISER_KIND: &str = "denoiser";
pub const FIELD_KIND: &str = "texture-field";

/// Serialize a denoiser with its architecture and the given training step.
pub fn denoiser_to_weights(model: &mut Denoiser, step: usize) -> WeightsFile {
    let mut w = WeightsFile::new(DENOISER_KIND);
    let c = &model.config;
    w.meta.insert("resolution".into(), c.resolution.to_string());
    w.meta.insert(
        "channels".into(),
        c.channels.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
    );
    w.meta.insert("embed_dim".into(), c.embed_dim.to_string());
    w.meta.insert("time_dim".into(), c.time_dim.to_string());
    w.meta.insert(
        "controls".into(),
        model.control_kinds().iter().map(|k| k.name()).collect::<Vec<_>>().join(","),
    );
    w.meta.insert("camera_encoder".into(), model.has_camera_encoder().to_string());
    w.meta.insert("step".into(), step.to_string());
    for (name, values) in model.export() {
        w.arrays.push(NamedArray {
            name,
            shape: vec![values.len()],
            data: ArrayData::F32(values),
        });
    }
    w
}

/// Rebuild a denoiser; returns it with the stored training step.
pub fn denoiser_from_weights(w: &WeightsFile) -> Result<(Denoiser, usize)> {
    if w.kind != DENOISER_KIND {
        return Err(bad(format!("expected a {DENOISER_KIND} file, found {:?}", w.kind)));
    }
    let channels: Vec<usize> = w
        .meta
        .get("channels")
        .ok_or_else(|| bad("header key \"channels\" missing"))?
        .split(',')
        .map(|v| v.parse().map_err(|_| bad("invalid channels")))
        .collect::<Result<_>>()?;
    let channels: [usize; 3] = channels.try_into().map_err(|_| bad("expected three channel widths"))?;
    let cfg = DenoiserConfig {
        resolution: w.meta_value("resolution")?,
        channels,
        embed_dim: w.meta_value("embed_dim")?,
        time_dim: w.meta_value("time_dim")?,
    };
    // Values are overwritten by the import; the seed only shapes the buffers.
    let mut rng = rng_from_seed(0);
    let mut model = Denoiser::new(cfg, &mut rng)?;
    for kind in w.meta.get("controls").map(String::as_str).unwrap_or("").split(',').filter(|s| !s.is_empty()) {
        let kind = match kind {
            "normal" => ConditionKind::Normal,
            "depth" => ConditionKind::Depth,
            other => return Err(bad(format!("unknown control kind {other:?}"))),
        };
        model.add_control(kind, &mut rng)?;
    }
    if w.meta_value::<bool>("camera_encoder")? {
        model.add_camera_encoder(&mut rng);
    }
    let mut arrays = Vec::with_capacity(w.arrays.len());
    for a in &w.arrays {
        match &a.data {
            ArrayData::F32(v) => arrays.push((a.name.clone(), v.clone())),
            ArrayData::F64(_) => return Err(bad(format!("array {:?}: denoiser arrays are f32", a.name))),
        }
    }
    let expected = model.export().len();
    if arrays.len() != expected {
        return Err(bad(format!("expected {expected} arrays, found {}", arrays.len())));
    }
    model.import(&arrays).map_err(|e| bad(e.to_string()))?;
    Ok((model, w.meta_value("step")?))
}

pub fn field_to_weights(field: &TextureField) -> Result<WeightsFile> {
    let mut w = WeightsFile::new(FIELD_KIND);
    w.meta.insert(
        "grid".into(),
        toml::to_string(&field.config).map_err(|e| bad(e.to_string()))?,
    );
    w.meta.insert(
        "mlp".into(),
        toml::to_string(&field.mlp_spec).map_err(|e| bad(e.to_string()))?,
    );
    w.arrays.push(NamedArray {
        name: "grid".into(),
        shape: vec![field.grid.len() / field.config.features_per_level, field.config.features_per_level],
        data: ArrayData::F64(field.grid.clone()),
    });
    w.arrays.push(NamedArray {
        name: "mlp".into(),
        shape: vec![field.mlp.params.len()],
        data: ArrayData::F64(field.mlp.params.clone()),
    });
    Ok(w)
}

pub fn field_from_weights(w: &WeightsFile) -> Result<TextureField> {
    if w.kind != FIELD_KIND {
        return Err(bad(format!("expected a {FIELD_KIND} file, found {:?}", w.kind)));
    }
    let grid_cfg: HashGridConfig =
        toml::from_str(w.meta.get("grid").ok_or_else(|| bad("grid config missing"))?).map_err(|e| bad(e.to_string()))?;
    let mlp_spec: MlpSpec =
        toml::from_str(w.meta.get("mlp").ok_or_else(|| bad("mlp spec missing"))?).map_err(|e| bad(e.to_string()))?;
    let ArrayData::F64(grid) = &w.array("grid")?.data else {
        return Err(bad("grid array must be f64"));
    };
    let ArrayData::F64(mlp) = &w.array("mlp")?.data else {
        return Err(bad("mlp array must be f64"));
    };
    grid_cfg.validate()?;
    if grid.len() != grid_cfg.parameter_count() {
        return Err(bad(format!("grid has {} values, config needs {}", grid.len(), grid_cfg.parameter_count())));
    }
    let shapes = mlp_spec.layer_shapes(grid_cfg.output_dim(), HEAD_CHANNELS);
    let n: usize = shapes.iter().map(|(i, o)| i * o + o).sum();
    if mlp.len() != n {
        return Err(bad(format!("mlp has {} values, spec needs {n}", mlp.len())));
    }
    Ok(TextureField {
        config: grid_cfg,
        mlp: Mlp {
            shapes,
            activation: mlp_spec.activation,
            params: mlp.clone(),
        },
        mlp_spec,
        grid: grid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightsFile {
        let mut w = WeightsFile::new("test");
        w.meta.insert("k".into(), "v".into());
        w.arrays.push(NamedArray {
            name: "a".into(),
            shape: vec![2, 2],
            data: ArrayData::F32(vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5]),
        });
        w.arrays.push(NamedArray {
            name: "b".into(),
            shape: vec![1],
            data: ArrayData::F64(vec![std::f64::consts::PI]),
        });
        w
    }

    #[test]
    fn round_trip_and_corruption() {
        let w = sample();
        let bytes = w.to_bytes().unwrap();
        let back = WeightsFile::from_bytes(&bytes).unwrap();
        assert_eq!(back, w);
        let mut bad_bytes = bytes.clone();
        let n = bad_bytes.len();
        bad_bytes[n - 6] ^= 1;
        assert!(WeightsFile::from_bytes(&bad_bytes).is_err());
        assert!(WeightsFile::from_bytes(b"PGSDWT00xxxxxxxxxxxx").is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut w = sample();
        w.arrays.push(w.arrays[0].clone());
        assert!(w.to_bytes().is_err());
    }
}
