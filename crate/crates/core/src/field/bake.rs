use std::path::Path;

use glam::{DVec2, DVec3};

use super::texture::TextureField;
use crate::error::{Error, Result};
use crate::geometry::TriangleMesh;
use crate::image::{Image, Mask};
use crate::shading::BrdfSample;

const QUERY_CHUNK: usize = 8192;
const OVERLAP_WARN: f64 = 0.01;

/// Texture maps baked from a field over a mesh's UV atlas. Row 0 is v = 1.
#[derive(Clone, Debug)]
pub struct BakedTextures {
    pub resolution: usize,
    pub albedo: Image,
    pub roughness: Image,
    pub metallic: Image,
    /// Texels holding a value, including dilated ones.
    pub mask: Mask,
    /// Texels covered by UV rasterization alone.
    pub coverage: Mask,
    /// Fraction of covered texels claimed by more than one face interior.
    pub overlap_fraction: f64,
}

#[inline]
fn edge(a: DVec2, b: DVec2, p: DVec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Surface points for every texel covered in UV space.
fn uv_rasterize(mesh: &TriangleMesh, res: usize) -> (Vec<Option<DVec3>>, usize) {
    let mut points = vec![None; res * res];
    let mut interior_hits = vec![0u8; res * res];
    let scale = res as f64;
    for (fi, face) in mesh.faces.iter().enumerate() {
        let Some(uv) = face.uv else { continue };
        let world = mesh.triangle(fi);
        let s = uv.map(|i| {
            let t = mesh.uvs[i as usize];
            DVec2::new(t.x * scale, (1.0 - t.y) * scale)
        });
        let area = edge(s[0], s[1], s[2]);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let min = s[0].min(s[1]).min(s[2]);
        let max = s[0].max(s[1]).max(s[2]);
        let x0 = (min.x - 0.5).ceil().max(0.0) as usize;
        let y0 = (min.y - 0.5).ceil().max(0.0) as usize;
        let x1 = (max.x - 0.5).floor().min(scale - 1.0);
        let y1 = (max.y - 0.5).floor().min(scale - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for ty in y0..=y1 as usize {
            for tx in x0..=x1 as usize {
                let p = DVec2::new(tx as f64 + 0.5, ty as f64 + 0.5);
                let b = [
                    edge(s[1], s[2], p) / area,
                    edge(s[2], s[0], p) / area,
                    edge(s[0], s[1], p) / area,
                ];
                if b.iter().any(|&v| v < 0.0) {
                    continue;
                }
                let i = ty * res + tx;
                if b.iter().all(|&v| v > 1e-6) {
                    interior_hits[i] = interior_hits[i].saturating_add(1);
                }
                if points[i].is_none() {
                    points[i] = Some(b[0] * world[0] + b[1] * world[1] + b[2] * world[2]);
                }
            }
        }
    }
    let overlaps = interior_hits.iter().filter(|&&h| h > 1).count();
    (points, overlaps)
}

/// Grow covered values into uncovered 8-neighbours, `steps` times. Each
/// new texel takes the mean of its covered neighbours.
fn dilate(maps: &mut [&mut Image], mask: &mut Mask, steps: usize) {
    let (w, h) = (mask.width, mask.height);
    for _ in 0..steps {
        let prev = mask.clone();
        let mut grew = false;
        for y in 0..h {
            for x in 0..w {
                if prev.get(x, y) {
                    continue;
                }
                let mut n = 0usize;
                let mut sums: Vec<Vec<f64>> = maps.iter().map(|m| vec![0.0; m.channels]).collect();
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        if !prev.get(nx as usize, ny as usize) {
                            continue;
                        }
                        n += 1;
                        for (m, s) in maps.iter().zip(sums.iter_mut()) {
                            for (acc, v) in s.iter_mut().zip(m.pixel(nx as usize, ny as usize)) {
                                *acc += v;
                            }
                        }
                    }
                }
                if n > 0 {
                    for (m, s) in maps.iter_mut().zip(&sums) {
                        for (dst, v) in m.pixel_mut(x, y).iter_mut().zip(s) {
                            *dst = v / n as f64;
                        }
                    }
                    mask.data[y * w + x] = true;
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
}

/// Query the field at the surface point of every UV-covered texel and write
/// albedo, roughness and metallic maps, then dilate by `dilation_px`.
pub fn bake(
    field: &TextureField,
    mesh: &TriangleMesh,
    resolution: usize,
    dilation_px: usize,
) -> Result<BakedTextures> {
    if !mesh.has_uvs() {
        return Err(Error::InvalidMesh("baking needs a UV atlas".into()));
    }
    if resolution < 16 {
        return Err(Error::InvalidArgument("bake resolution must be at least 16".into()));
    }
    let (points, overlaps) = uv_rasterize(mesh, resolution);
    let covered: Vec<usize> = (0..points.len()).filter(|&i| points[i].is_some()).collect();
    let overlap_fraction = if covered.is_empty() {
        0.0
    } else {
        overlaps as f64 / covered.len() as f64
    };
    if overlap_fraction > OVERLAP_WARN {
        log::warn!(
            "UV charts overlap on {:.2}% of covered texels",
            100.0 * overlap_fraction
        );
    }
    let mut albedo = Image::new(resolution, resolution, 3);
    let mut roughness = Image::new(resolution, resolution, 1);
    let mut metallic = Image::new(resolution, resolution, 1);
    let mut coverage = Mask::new(resolution, resolution, false);
    for chunk in covered.chunks(QUERY_CHUNK) {
        let pts: Vec<DVec3> = chunk.iter().map(|&i| points[i].unwrap()).collect();
        for (&i, s) in chunk.iter().zip(field.query(&pts)) {
            albedo.texel_mut(i).copy_from_slice(&s.albedo.to_array());
            roughness.data[i] = s.roughness;
            metallic.data[i] = s.metallic;
            coverage.data[i] = true;
        }
    }
    let mut mask = coverage.clone();
    dilate(&mut [&mut albedo, &mut roughness, &mut metallic], &mut mask, dilation_px);
    Ok(BakedTextures {
        resolution,
        albedo,
        roughness,
        metallic,
        mask,
        coverage,
        overlap_fraction,
    })
}

impl BakedTextures {
    fn texel_sample(&self, i: usize) -> BrdfSample {
        BrdfSample::new(
            DVec3::from_slice(self.albedo.texel(i)),
            self.roughness.data[i],
            self.metallic.data[i],
        )
    }

    /// Nearest-texel lookup at a UV coordinate.
    pub fn sample_nearest(&self, uv: DVec2) -> BrdfSample {
        let r = self.resolution as f64;
        let x = ((uv.x * r).floor().max(0.0) as usize).min(self.resolution - 1);
        let y = (((1.0 - uv.y) * r).floor().max(0.0) as usize).min(self.resolution - 1);
        self.texel_sample(y * self.resolution + x)
    }

    /// Bilinear lookup over texel centres. Taps outside the filled mask are
    /// dropped and the remaining weights renormalized; with no filled tap
    /// it falls back to the nearest texel.
    pub fn sample(&self, uv: DVec2) -> BrdfSample {
        let n = self.resolution;
        let fx = uv.x * n as f64 - 0.5;
        let fy = (1.0 - uv.y) * n as f64 - 0.5;
        let (x0, y0) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - x0, fy - y0);
        let clamp = |v: f64| (v.max(0.0) as usize).min(n - 1);
        let mut acc = BrdfSample::new(DVec3::ZERO, 0.0, 0.0);
        let mut total = 0.0;
        for (dy, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
            for (dx, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
                let i = clamp(y0 + dy) * n + clamp(x0 + dx);
                let w = wx * wy;
                if w == 0.0 || !self.mask.data[i] {
                    continue;
                }
                let t = self.texel_sample(i);
                acc.albedo += w * t.albedo;
                acc.roughness += w * t.roughness;
                acc.metallic += w * t.metallic;
                total += w;
            }
        }
        if total == 0.0 {
            return self.sample_nearest(uv);
        }
        BrdfSample::new(acc.albedo / total, acc.roughness / total, acc.metallic / total)
    }

    /// albedo.png (8-bit sRGB), roughness.png and metallic.png (16-bit
    /// linear), mask.png.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.albedo.save_png8_srgb(&dir.join("albedo.png"))?;
        self.roughness.save_png16(&dir.join("roughness.png"))?;
        self.metallic.save_png16(&dir.join("metallic.png"))?;
        self.mask.to_image().save_png8(&dir.join("mask.png"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{HashGridConfig, MlpSpec};
    use crate::geometry::primitives;
    use crate::rng::rng_from_seed;

    fn constant_field() -> TextureField {
        let cfg = HashGridConfig {
            levels: 2,
            table_size_log2: 8,
            ..HashGridConfig::default()
        };
        let mut f = TextureField::new(cfg, MlpSpec::default(), &mut rng_from_seed(2)).unwrap();
        f.grid.iter_mut().for_each(|g| *g = 0.0);
        f
    }

    #[test]
    fn constant_field_bakes_constant_maps() {
        let field = constant_field();
        let want = field.query(&[DVec3::ZERO])[0];
        let baked = bake(&field, &primitives::quad(), 32, 2).unwrap();
        assert_eq!(baked.coverage.count(), 32 * 32);
        for i in 0..32 * 32 {
            assert!((DVec3::from_slice(baked.albedo.texel(i)) - want.albedo).abs().max_element() < 1e-12);
            assert!((baked.roughness.data[i] - want.roughness).abs() < 1e-12);
            assert!((baked.metallic.data[i] - want.metallic).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_dilation_keeps_raster_coverage() {
        let field = constant_field();
        let mesh = primitives::cube();
        let a = bake(&field, &mesh, 64, 0).unwrap();
        assert_eq!(a.mask, a.coverage);
        let b = bake(&field, &mesh, 64, 3).unwrap();
        assert!(b.mask.count() > b.coverage.count());
        assert_eq!(b.coverage, a.coverage);
        assert!(a.overlap_fraction < 0.01);
    }
}
