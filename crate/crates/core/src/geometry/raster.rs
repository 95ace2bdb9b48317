use glam::{DVec2, DVec3};

use super::camera::CameraPose;
use super::mesh::TriangleMesh;

/// Minimum camera-space depth a triangle vertex may have; triangles reaching
/// closer are dropped rather than clipped.
pub const NEAR_PLANE: f64 = 1e-3;

/// Per-pixel surface attributes. Uncovered pixels hold all-zero sentinels.
#[derive(Clone, Debug, PartialEq)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    pub position: Vec<DVec3>,
    pub normal: Vec<DVec3>,
    pub uv: Vec<DVec2>,
    pub mask: Vec<bool>,
    pub depth: Vec<f64>,
}

impl GBuffer {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        GBuffer {
            width,
            height,
            position: vec![DVec3::ZERO; n],
            normal: vec![DVec3::ZERO; n],
            uv: vec![DVec2::ZERO; n],
            mask: vec![false; n],
            depth: vec![0.0; n],
        }
    }

    /// Indices of covered pixels in row-major order.
    pub fn covered(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn coverage(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

impl CameraPose {
    /// Pixel-space position of a camera-space point (x right, y down,
    /// pixel centres at half-integers).
    #[inline]
    pub fn project(&self, pc: DVec3) -> DVec2 {
        let tan = (0.5 * self.fov_y).tan();
        let aspect = self.width as f64 / self.height as f64;
        let d = -pc.z;
        let nx = pc.x / (d * tan * aspect);
        let ny = pc.y / (d * tan);
        DVec2::new(
            0.5 * (nx + 1.0) * self.width as f64,
            0.5 * (1.0 - ny) * self.height as f64,
        )
    }

    /// World-space ray (origin, unit direction) through a pixel-space point.
    pub fn pixel_ray(&self, px: f64, py: f64) -> (DVec3, DVec3) {
        let tan = (0.5 * self.fov_y).tan();
        let aspect = self.width as f64 / self.height as f64;
        let nx = 2.0 * px / self.width as f64 - 1.0;
        let ny = 1.0 - 2.0 * py / self.height as f64;
        let dir_cam = DVec3::new(nx * tan * aspect, ny * tan, -1.0);
        let dir = (self.rotation().transpose() * dir_cam).normalize();
        (self.position(), dir)
    }
}

#[inline]
fn edge(a: DVec2, b: DVec2, p: DVec2) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Depth-tested rasterization with perspective-correct interpolation,
/// sampled at pixel centres. No culling, no antialiasing; ties keep the
/// first face drawn.
pub fn rasterize(mesh: &TriangleMesh, cam: &CameraPose) -> GBuffer {
    let (w, h) = (cam.width, cam.height);
    let mut g = GBuffer::empty(w, h);
    for (fi, face) in mesh.faces.iter().enumerate() {
        let world = mesh.triangle(fi);
        let pc = world.map(|p| cam.to_camera(p));
        let depth = pc.map(|p| -p.z);
        if depth.iter().any(|&d| d < NEAR_PLANE) {
            continue;
        }
        let s = pc.map(|p| cam.project(p));
        let area = edge(s[0], s[1], s[2]);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let min = s[0].min(s[1]).min(s[2]);
        let max = s[0].max(s[1]).max(s[2]);
        let x0 = (min.x - 0.5).ceil().max(0.0) as usize;
        let y0 = (min.y - 0.5).ceil().max(0.0) as usize;
        let x1 = ((max.x - 0.5).floor()).min(w as f64 - 1.0);
        let y1 = ((max.y - 0.5).floor()).min(h as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        let normals = face.normal.map(|i| mesh.normals[i as usize]);
        let uvs = face
            .uv
            .map(|t| t.map(|i| mesh.uvs[i as usize]))
            .unwrap_or([DVec2::ZERO; 3]);
        for py in y0..=y1 {
            for px in x0..=x1 {
                let p = DVec2::new(px as f64 + 0.5, py as f64 + 0.5);
                let l0 = edge(s[1], s[2], p) / area;
                let l1 = edge(s[2], s[0], p) / area;
                let l2 = edge(s[0], s[1], p) / area;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                let q = [l0 / depth[0], l1 / depth[1], l2 / depth[2]];
                let inv_z = q[0] + q[1] + q[2];
                let z = 1.0 / inv_z;
                let i = py * w + px;
                if g.mask[i] && z >= g.depth[i] {
                    continue;
                }
                let b = q.map(|v| v * z);
                let n = b[0] * normals[0] + b[1] * normals[1] + b[2] * normals[2];
                let n = n.try_normalize().unwrap_or_else(|| {
                    (world[1] - world[0])
                        .cross(world[2] - world[0])
                        .normalize()
                });
                g.mask[i] = true;
                g.depth[i] = z;
                g.position[i] = b[0] * world[0] + b[1] * world[1] + b[2] * world[2];
                g.normal[i] = n;
                g.uv[i] = b[0] * uvs[0] + b[1] * uvs[1] + b[2] * uvs[2];
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::Face;

    fn tri_mesh(tris: &[[DVec3; 3]]) -> TriangleMesh {
        let mut positions = Vec::new();
        let mut faces = Vec::new();
        for t in tris {
            let base = positions.len() as u32;
            positions.extend_from_slice(t);
            faces.push(Face {
                position: [base, base + 1, base + 2],
                normal: [0, 0, 0],
                uv: None,
            });
        }
        TriangleMesh {
            positions,
            normals: vec![DVec3::Z],
            uvs: vec![],
            faces,
        }
    }

    #[test]
    fn looking_away_covers_nothing() {
        let mesh = tri_mesh(&[[
            DVec3::new(-1.0, -1.0, 0.0),
            DVec3::new(1.0, -1.0, 0.0),
            DVec3::new(0.0, 1.0, 0.0),
        ]]);
        // Camera at z = 2 looking at the origin, then flipped around: put the
        // triangle behind it by moving it to z = 3.
        let mut behind = mesh.clone();
        for p in &mut behind.positions {
            p.z = 3.0;
        }
        let cam = CameraPose::orbit(0.0, 0.0, 2.0, 0.8, 32, 32);
        assert_eq!(rasterize(&behind, &cam).coverage(), 0);
        assert!(rasterize(&mesh, &cam).coverage() > 0);
    }

    #[test]
    fn nearer_triangle_wins() {
        let big = |z: f64| {
            [
                DVec3::new(-5.0, -5.0, z),
                DVec3::new(5.0, -5.0, z),
                DVec3::new(0.0, 5.0, z),
            ]
        };
        // Camera at z = 3: depths 1 and 2.
        let cam = CameraPose::orbit(0.0, 0.0, 3.0, 0.8, 16, 16);
        for order in [[2.0, 1.0], [1.0, 2.0]] {
            let mesh = tri_mesh(&[big(order[0]), big(order[1])]);
            let g = rasterize(&mesh, &cam);
            let c = 8 * 16 + 8;
            assert!(g.mask[c]);
            assert!((g.depth[c] - 1.0).abs() < 1e-9);
            assert!((g.position[c].z - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn background_is_sentinel() {
        let mesh = tri_mesh(&[[
            DVec3::new(-0.2, -0.2, 0.0),
            DVec3::new(0.2, -0.2, 0.0),
            DVec3::new(0.0, 0.2, 0.0),
        ]]);
        let cam = CameraPose::orbit(0.0, 0.0, 2.0, 0.8, 32, 32);
        let g = rasterize(&mesh, &cam);
        for i in 0..g.mask.len() {
            if !g.mask[i] {
                assert_eq!(g.position[i], DVec3::ZERO);
                assert_eq!(g.normal[i], DVec3::ZERO);
                assert_eq!(g.uv[i], DVec2::ZERO);
                assert_eq!(g.depth[i], 0.0);
            } else {
                assert!((g.normal[i].length() - 1.0).abs() < 1e-5);
            }
        }
    }
}
