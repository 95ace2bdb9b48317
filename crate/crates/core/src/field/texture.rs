use glam::DVec3;
use rand::Rng as _;

use super::grid::{corner_lookup, HashGridConfig};
use super::mlp::{sigmoid, Mlp, MlpCache, MlpSpec};
use crate::error::Result;
use crate::rng::{fingerprint_f64, Rng};
use crate::shading::{BrdfGradient, BrdfSample, ROUGHNESS_MIN};

/// Output head width: RGB albedo, roughness, metallic.
pub const HEAD_CHANNELS: usize = 5;
const GRID_INIT: f64 = 1e-4;

/// Neural BRDF field over the normalized bounding box [-1, 1]³.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureField {
    pub config: HashGridConfig,
    pub mlp_spec: MlpSpec,
    /// Feature tables of all levels, `features_per_level` values per entry.
    pub grid: Vec<f64>,
    pub mlp: Mlp,
}

/// Everything the backward pass needs from a forward query.
#[derive(Clone, Debug, Default)]
pub struct FieldCache {
    pub count: usize,
    pub entries: Vec<u32>,
    pub weights: Vec<f64>,
    pub mlp: MlpCache,
    pub head: Vec<f64>,
}

/// Gradient buffers shaped like the field parameters. The grid part is
/// dense but tracks which entries were written, so zeroing and sparse
/// optimizer updates only visit touched entries.
#[derive(Clone, Debug)]
pub struct FieldGradients {
    pub features_per_level: usize,
    pub grid: Vec<f64>,
    pub touched: Vec<u32>,
    touched_flag: Vec<bool>,
    pub mlp: Vec<f64>,
}

impl FieldGradients {
    pub fn new(field: &TextureField) -> Self {
        FieldGradients {
            features_per_level: field.config.features_per_level,
            grid: vec![0.0; field.grid.len()],
            touched: Vec::new(),
            touched_flag: vec![false; field.config.entries()],
            mlp: vec![0.0; field.mlp.params.len()],
        }
    }

    pub fn zero(&mut self) {
        let f = self.features_per_level;
        for &e in &self.touched {
            let e = e as usize;
            self.grid[e * f..(e + 1) * f].iter_mut().for_each(|g| *g = 0.0);
            self.touched_flag[e] = false;
        }
        self.touched.clear();
        self.mlp.iter_mut().for_each(|g| *g = 0.0);
    }

    #[inline]
    fn touch(&mut self, entry: u32) {
        if !self.touched_flag[entry as usize] {
            self.touched_flag[entry as usize] = true;
            self.touched.push(entry);
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.grid.iter().all(|g| *g == 0.0) && self.mlp.iter().all(|g| *g == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        let f = self.features_per_level;
        self.touched.iter().all(|&e| {
            let e = e as usize;
            self.grid[e * f..(e + 1) * f].iter().all(|g| g.is_finite())
        }) && self.mlp.iter().all(|g| g.is_finite())
    }

    /// Euclidean norm over both parameter groups.
    pub fn norm(&self) -> f64 {
        let f = self.features_per_level;
        let grid: f64 = self
            .touched
            .iter()
            .map(|&e| {
                let e = e as usize;
                self.grid[e * f..(e + 1) * f].iter().map(|g| g * g).sum::<f64>()
            })
            .sum();
        (grid + self.mlp.iter().map(|g| g * g).sum::<f64>()).sqrt()
    }
}

/// Map a point of the normalized box to [0, 1]³, clamping outliers.
fn to_unit(p: DVec3) -> ([f64; 3], bool) {
    let u = (p + DVec3::ONE) * 0.5;
    let c = u.clamp(DVec3::ZERO, DVec3::ONE);
    (c.to_array(), c != u)
}

fn squash(head: &[f64]) -> BrdfSample {
    BrdfSample::new(
        DVec3::new(sigmoid(head[0]), sigmoid(head[1]), sigmoid(head[2])),
        ROUGHNESS_MIN + (1.0 - ROUGHNESS_MIN) * sigmoid(head[3]),
        sigmoid(head[4]),
    )
}

impl TextureField {
    pub fn new(config: HashGridConfig, mlp_spec: MlpSpec, rng: &mut Rng) -> Result<TextureField> {
        config.validate()?;
        mlp_spec.validate()?;
        let grid = (0..config.parameter_count())
            .map(|_| rng.random_range(-GRID_INIT..GRID_INIT))
            .collect();
        let mlp = Mlp::new(&mlp_spec, config.output_dim(), HEAD_CHANNELS, rng);
        Ok(TextureField {
            config,
            mlp_spec,
            grid,
            mlp,
        })
    }

    pub fn grid_parameter_count(&self) -> usize {
        self.grid.len()
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint_f64(&self.grid) ^ fingerprint_f64(&self.mlp.params).rotate_left(1)
    }

    /// Concatenated per-level interpolated features of one point.
    pub fn encode_point(&self, p: DVec3) -> Vec<f64> {
        let levels = self.config.levels;
        let mut e = vec![0; levels * 8];
        let mut w = vec![0.0; levels * 8];
        corner_lookup(&self.config, to_unit(p).0, &mut e, &mut w);
        let mut out = vec![0.0; self.config.output_dim()];
        self.gather(&e, &w, &mut out);
        out
    }

    fn gather(&self, entries: &[u32], weights: &[f64], out: &mut [f64]) {
        let f = self.config.features_per_level;
        for l in 0..self.config.levels {
            let feat = &mut out[l * f..(l + 1) * f];
            feat.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..8 {
                let e = entries[l * 8 + c] as usize;
                let w = weights[l * 8 + c];
                for k in 0..f {
                    feat[k] += w * self.grid[e * f + k];
                }
            }
        }
    }

    /// Evaluate the field at a batch of points.
    pub fn query(&self, points: &[DVec3]) -> Vec<BrdfSample> {
        self.query_cached(points).0
    }

    pub fn query_cached(&self, points: &[DVec3]) -> (Vec<BrdfSample>, FieldCache) {
        let n = points.len();
        let levels = self.config.levels;
        let dim = self.config.output_dim();
        let mut entries = vec![0u32; n * levels * 8];
        let mut weights = vec![0.0; n * levels * 8];
        let mut features = vec![0.0; n * dim];
        let mut clamped = 0usize;
        for (i, p) in points.iter().enumerate() {
            let (u, was_clamped) = to_unit(*p);
            clamped += was_clamped as usize;
            let span = i * levels * 8..(i + 1) * levels * 8;
            corner_lookup(&self.config, u, &mut entries[span.clone()], &mut weights[span.clone()]);
            self.gather(&entries[span.clone()], &weights[span], &mut features[i * dim..(i + 1) * dim]);
        }
        if clamped > 0 {
            log::warn!("{clamped} query points outside the unit box were clamped");
        }
        let mut mlp_cache = MlpCache::default();
        let head = self.mlp.forward(&features, n, Some(&mut mlp_cache));
        let samples = head.chunks_exact(HEAD_CHANNELS).map(squash).collect();
        (
            samples,
            FieldCache {
                count: n,
                entries,
                weights,
                mlp: mlp_cache,
                head,
            },
        )
    }

    /// Accumulate dLoss/dparameters for a cached query into `grads`.
    /// Hash collisions add up.
    pub fn backward(&self, cache: &FieldCache, upstream: &[BrdfGradient], grads: &mut FieldGradients) {
        assert_eq!(upstream.len(), cache.count);
        let mut d_head = vec![0.0; cache.count * HEAD_CHANNELS];
        for (i, g) in upstream.iter().enumerate() {
            let h = &cache.head[i * HEAD_CHANNELS..(i + 1) * HEAD_CHANNELS];
            let ds = |x: f64| {
                let s = sigmoid(x);
                s * (1.0 - s)
            };
            let d = &mut d_head[i * HEAD_CHANNELS..(i + 1) * HEAD_CHANNELS];
            d[0] = g.albedo.x * ds(h[0]);
            d[1] = g.albedo.y * ds(h[1]);
            d[2] = g.albedo.z * ds(h[2]);
            d[3] = g.roughness * (1.0 - ROUGHNESS_MIN) * ds(h[3]);
            d[4] = g.metallic * ds(h[4]);
        }
        let d_features = self.mlp.backward(&cache.mlp, &d_head, &mut grads.mlp);
        let f = self.config.features_per_level;
        let levels = self.config.levels;
        let dim = self.config.output_dim();
        for i in 0..cache.count {
            let df = &d_features[i * dim..(i + 1) * dim];
            for l in 0..levels {
                let dl = &df[l * f..(l + 1) * f];
                if dl.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for c in 0..8 {
                    let k = (i * levels + l) * 8 + c;
                    let e = cache.entries[k];
                    let w = cache.weights[k];
                    if w == 0.0 {
                        continue;
                    }
                    grads.touch(e);
                    let base = e as usize * f;
                    for j in 0..f {
                        grads.grid[base + j] += w * dl[j];
                    }
                }
            }
        }
    }

    /// Forward and backward in one call; returns fresh gradients.
    pub fn query_backward(&self, points: &[DVec3], upstream: &[BrdfGradient]) -> FieldGradients {
        let (_, cache) = self.query_cached(points);
        let mut grads = FieldGradients::new(self);
        self.backward(&cache, upstream, &mut grads);
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn small() -> TextureField {
        let cfg = HashGridConfig {
            levels: 4,
            table_size_log2: 10,
            ..HashGridConfig::default()
        };
        TextureField::new(cfg, MlpSpec::default(), &mut rng_from_seed(1)).unwrap()
    }

    #[test]
    fn corner_and_edge_features() {
        let mut field = small();
        for (i, g) in field.grid.iter_mut().enumerate() {
            *g = (i as f64 * 0.37).sin();
        }
        let f = field.config.features_per_level;
        let mask = field.config.table_size() as u32 - 1;
        // u = 3/16 on every axis: level-0 corner (3, 3, 3).
        let p = DVec3::splat(-1.0 + 2.0 * 3.0 / 16.0);
        let e = super::super::grid::spatial_hash(3, 3, 3, mask) as usize;
        let feat = field.encode_point(p);
        assert_eq!(&feat[..f], &field.grid[e * f..(e + 1) * f]);
        // Halfway along x between (3,3,3) and (4,3,3).
        let q = DVec3::new(-1.0 + 2.0 * 3.5 / 16.0, p.y, p.z);
        let e2 = super::super::grid::spatial_hash(4, 3, 3, mask) as usize;
        let feat = field.encode_point(q);
        for k in 0..f {
            let avg = 0.5 * (field.grid[e * f + k] + field.grid[e2 * f + k]);
            assert!((feat[k] - avg).abs() < 1e-15);
        }
    }

    #[test]
    fn outputs_are_valid_and_pure() {
        let field = small();
        let pts = [DVec3::new(0.2, -0.4, 0.9), DVec3::new(3.0, 0.0, 0.0)];
        let a = field.query(&pts);
        assert_eq!(a, field.query(&pts));
        assert!(a.iter().all(|s| s.is_valid()));
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let field = small();
        let g = field.query_backward(&[DVec3::ZERO], &[BrdfGradient::default()]);
        assert!(g.is_all_zero());
    }
}
