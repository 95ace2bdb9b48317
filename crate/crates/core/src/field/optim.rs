use serde::{Deserialize, Serialize};

use super::texture::{FieldGradients, TextureField};

/// Adam hyperparameters for one parameter group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
        }
    }
}

/// Adam over the two field parameter groups. The grid group is updated
/// lazily: only entries touched by the current gradient move, and their
/// moments are the only ones decayed.
#[derive(Clone, Debug)]
pub struct FieldOptimizer {
    pub grid: AdamConfig,
    pub mlp: AdamConfig,
    pub step: u64,
    grid_m: Vec<f64>,
    grid_v: Vec<f64>,
    mlp_m: Vec<f64>,
    mlp_v: Vec<f64>,
}

#[inline]
fn adam_update(p: &mut f64, m: &mut f64, v: &mut f64, g: f64, cfg: &AdamConfig, bc1: f64, bc2: f64) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let mh = *m / bc1;
    let vh = *v / bc2;
    *p -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
}

impl FieldOptimizer {
    pub fn new(field: &TextureField, grid: AdamConfig, mlp: AdamConfig) -> Self {
        FieldOptimizer {
            grid,
            mlp,
            step: 0,
            grid_m: vec![0.0; field.grid.len()],
            grid_v: vec![0.0; field.grid.len()],
            mlp_m: vec![0.0; field.mlp.params.len()],
            mlp_v: vec![0.0; field.mlp.params.len()],
        }
    }

    pub fn apply(&mut self, field: &mut TextureField, grads: &FieldGradients) {
        self.step += 1;
        let t = self.step as i32;
        let f = grads.features_per_level;
        let (bc1, bc2) = (1.0 - self.grid.beta1.powi(t), 1.0 - self.grid.beta2.powi(t));
        for &e in &grads.touched {
            for k in e as usize * f..(e as usize + 1) * f {
                adam_update(
                    &mut field.grid[k],
                    &mut self.grid_m[k],
                    &mut self.grid_v[k],
                    grads.grid[k],
                    &self.grid,
                    bc1,
                    bc2,
                );
            }
        }
        let (bc1, bc2) = (1.0 - self.mlp.beta1.powi(t), 1.0 - self.mlp.beta2.powi(t));
        for k in 0..field.mlp.params.len() {
            adam_update(
                &mut field.mlp.params[k],
                &mut self.mlp_m[k],
                &mut self.mlp_v[k],
                grads.mlp[k],
                &self.mlp,
                bc1,
                bc2,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{HashGridConfig, MlpSpec};
    use crate::rng::rng_from_seed;
    use crate::shading::BrdfGradient;
    use glam::DVec3;

    #[test]
    fn descends_on_a_target_albedo() {
        let cfg = HashGridConfig {
            levels: 4,
            table_size_log2: 10,
            ..HashGridConfig::default()
        };
        let mut field = TextureField::new(cfg, MlpSpec::default(), &mut rng_from_seed(4)).unwrap();
        let mut opt = FieldOptimizer::new(&field, AdamConfig::with_lr(0.01), AdamConfig::with_lr(0.001));
        let pts: Vec<DVec3> = (0..32).map(|i| DVec3::new(i as f64 / 40.0 - 0.4, 0.1, -0.2)).collect();
        let target = DVec3::new(0.9, 0.1, 0.2);
        let loss = |f: &TextureField| -> f64 {
            f.query(&pts).iter().map(|s| (s.albedo - target).length_squared()).sum()
        };
        let before = loss(&field);
        let mut grads = FieldGradients::new(&field);
        for _ in 0..60 {
            grads.zero();
            let (s, cache) = field.query_cached(&pts);
            let up: Vec<BrdfGradient> = s
                .iter()
                .map(|s| BrdfGradient {
                    albedo: 2.0 * (s.albedo - target),
                    ..Default::default()
                })
                .collect();
            field.backward(&cache, &up, &mut grads);
            opt.apply(&mut field, &grads);
        }
        assert!(loss(&field) < 0.2 * before);
    }
}
