use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-axis multipliers of the spatial hash (XOR-combined).
pub const HASH_PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

/// Multi-resolution hash-grid layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashGridConfig {
    pub levels: usize,
    pub base_resolution: usize,
    pub per_level_scale: f64,
    pub features_per_level: usize,
    pub table_size_log2: u32,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        HashGridConfig {
            levels: 16,
            base_resolution: 16,
            per_level_scale: 1.382,
            features_per_level: 2,
            table_size_log2: 19,
        }
    }
}

impl HashGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features_per_level == 0 || self.base_resolution == 0 {
            return Err(Error::InvalidArgument("hash grid needs levels, features and resolution".into()));
        }
        if !(self.per_level_scale > 1.0) {
            return Err(Error::InvalidArgument("per-level scale must exceed 1".into()));
        }
        if self.table_size_log2 == 0 || self.table_size_log2 > 26 {
            return Err(Error::InvalidArgument("table_size_log2 must be in 1..=26".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn table_size(&self) -> usize {
        1 << self.table_size_log2
    }

    /// Number of feature vectors across all levels.
    pub fn entries(&self) -> usize {
        self.levels * self.table_size()
    }

    pub fn parameter_count(&self) -> usize {
        self.entries() * self.features_per_level
    }

    pub fn output_dim(&self) -> usize {
        self.levels * self.features_per_level
    }

    pub fn resolution(&self, level: usize) -> usize {
        (self.base_resolution as f64 * self.per_level_scale.powi(level as i32)).floor() as usize
    }
}

#[inline]
pub fn spatial_hash(x: u32, y: u32, z: u32, mask: u32) -> u32 {
    (x.wrapping_mul(HASH_PRIMES[0]) ^ y.wrapping_mul(HASH_PRIMES[1]) ^ z.wrapping_mul(HASH_PRIMES[2])) & mask
}

/// Corner entry indices and trilinear weights of one point on every level.
/// `entries[l*8 + c]` is a global feature-vector index.
pub fn corner_lookup(
    cfg: &HashGridConfig,
    unit: [f64; 3],
    entries: &mut [u32],
    weights: &mut [f64],
) {
    let t = cfg.table_size() as u32;
    let mask = t - 1;
    for level in 0..cfg.levels {
        let res = cfg.resolution(level);
        let mut base = [0u32; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let pos = unit[a] * res as f64;
            let i = (pos.floor() as usize).min(res - 1);
            base[a] = i as u32;
            frac[a] = pos - i as f64;
        }
        for c in 0..8 {
            let off = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let mut w = 1.0;
            for a in 0..3 {
                w *= if off[a] == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            let h = spatial_hash(
                base[0] + off[0] as u32,
                base[1] + off[1] as u32,
                base[2] + off[2] as u32,
                mask,
            );
            entries[level * 8 + c] = level as u32 * t + h;
            weights[level * 8 + c] = w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameter_count() {
        let cfg = HashGridConfig::default();
        assert_eq!(cfg.parameter_count(), 16 * 2 * (1 << 19));
        assert_eq!(cfg.resolution(0), 16);
        assert!(cfg.resolution(15) > 1000);
    }

    #[test]
    fn weights_are_a_partition_of_unity() {
        let cfg = HashGridConfig {
            table_size_log2: 12,
            ..HashGridConfig::default()
        };
        let mut e = vec![0; cfg.levels * 8];
        let mut w = vec![0.0; cfg.levels * 8];
        corner_lookup(&cfg, [0.3, 0.71, 0.999], &mut e, &mut w);
        for l in 0..cfg.levels {
            let s: f64 = w[l * 8..l * 8 + 8].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(e[l * 8..l * 8 + 8].iter().all(|&i| (i as usize) < cfg.entries()));
        }
        // The upper boundary maps into the last cell.
        corner_lookup(&cfg, [1.0, 1.0, 1.0], &mut e, &mut w);
        assert_eq!(w[7], 1.0);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = HashGridConfig {
            per_level_scale: 1.0,
            ..HashGridConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
