//! Procedural meshes, all sized to fit the unit sphere.

use std::f64::consts::{PI, TAU};

use glam::{DVec2, DVec3};

use super::mesh::{is_degenerate, Face, TriangleMesh};

/// Square in the z = 0 plane facing +z with the identity UV map
/// (u along +x, v along +y).
pub fn quad() -> TriangleMesh {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let positions = vec![
        DVec3::new(-h, -h, 0.0),
        DVec3::new(h, -h, 0.0),
        DVec3::new(h, h, 0.0),
        DVec3::new(-h, h, 0.0),
    ];
    let uvs = vec![
        DVec2::new(0.0, 0.0),
        DVec2::new(1.0, 0.0),
        DVec2::new(1.0, 1.0),
        DVec2::new(0.0, 1.0),
    ];
    let faces = vec![
        Face {
            position: [0, 1, 2],
            normal: [0, 0, 0],
            uv: Some([0, 1, 2]),
        },
        Face {
            position: [0, 2, 3],
            normal: [0, 0, 0],
            uv: Some([0, 2, 3]),
        },
    ];
    TriangleMesh {
        positions,
        normals: vec![DVec3::Z],
        uvs,
        faces,
    }
}

/// Axis-aligned cube with flat face normals and a 3×2 UV atlas.
pub fn cube() -> TriangleMesh {
    let s = 1.0 / 3f64.sqrt();
    let mut positions = Vec::new();
    for i in 0..8 {
        positions.push(DVec3::new(
            if i & 1 == 0 { -s } else { s },
            if i & 2 == 0 { -s } else { s },
            if i & 4 == 0 { -s } else { s },
        ));
    }
    // Each face: normal and its four corners counter-clockwise seen from outside.
    let sides: [(DVec3, [u32; 4]); 6] = [
        (DVec3::X, [1, 3, 7, 5]),
        (DVec3::NEG_X, [0, 4, 6, 2]),
        (DVec3::Y, [2, 6, 7, 3]),
        (DVec3::NEG_Y, [0, 1, 5, 4]),
        (DVec3::Z, [4, 5, 7, 6]),
        (DVec3::NEG_Z, [0, 2, 3, 1]),
    ];
    let mut normals = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();
    let margin = 0.02;
    for (k, (n, quad)) in sides.iter().enumerate() {
        normals.push(*n);
        let (cx, cy) = ((k % 3) as f64 / 3.0, (k / 3) as f64 / 2.0);
        let (w, h) = (1.0 / 3.0, 0.5);
        let base = uvs.len() as u32;
        for (du, dv) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
            uvs.push(DVec2::new(
                cx + margin + du * (w - 2.0 * margin),
                cy + margin + dv * (h - 2.0 * margin),
            ));
        }
        let ni = k as u32;
        for tri in [[0usize, 1, 2], [0, 2, 3]] {
            faces.push(Face {
                position: tri.map(|c| quad[c]),
                normal: [ni; 3],
                uv: Some(tri.map(|c| base + c as u32)),
            });
        }
    }
    TriangleMesh {
        positions,
        normals,
        uvs,
        faces,
    }
}

/// One sample of a revolution profile: distance from the y axis, height,
/// and the profile normal in the (radial, y) plane.
#[derive(Clone, Copy, Debug)]
struct ProfilePoint {
    radius: f64,
    y: f64,
    normal: DVec2,
}

/// Surface of revolution about +y. UVs: u along the azimuth, v along the profile.
fn revolve(profile: &[ProfilePoint], segments: usize) -> TriangleMesh {
    let rows = profile.len();
    let mut positions = Vec::with_capacity(rows * (segments + 1));
    let mut normals = Vec::with_capacity(positions.capacity());
    let mut uvs = Vec::with_capacity(positions.capacity());
    for (i, p) in profile.iter().enumerate() {
        for j in 0..=segments {
            let phi = TAU * j as f64 / segments as f64;
            let (s, c) = phi.sin_cos();
            positions.push(DVec3::new(p.radius * s, p.y, p.radius * c));
            normals.push(DVec3::new(p.normal.x * s, p.normal.y, p.normal.x * c).normalize());
            uvs.push(DVec2::new(
                j as f64 / segments as f64,
                1.0 - i as f64 / (rows - 1) as f64,
            ));
        }
    }
    let idx = |i: usize, j: usize| (i * (segments + 1) + j) as u32;
    let mut faces = Vec::new();
    for i in 0..rows - 1 {
        for j in 0..segments {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            for tri in [[a, b, c], [a, c, d]] {
                let [p0, p1, p2] = tri.map(|k| positions[k as usize]);
                if is_degenerate(p0, p1, p2) {
                    continue;
                }
                faces.push(Face {
                    position: tri,
                    normal: tri,
                    uv: Some(tri),
                });
            }
        }
    }
    TriangleMesh {
        positions,
        normals,
        uvs,
        faces,
    }
}

/// Latitude-longitude sphere of radius 1 with smooth normals.
pub fn uv_sphere(segments: usize, rings: usize) -> TriangleMesh {
    let profile: Vec<ProfilePoint> = (0..=rings)
        .map(|i| {
            let theta = PI * i as f64 / rings as f64;
            let (s, c) = theta.sin_cos();
            ProfilePoint {
                radius: s,
                y: c,
                normal: DVec2::new(s, c),
            }
        })
        .collect();
    revolve(&profile, segments)
}

/// Ring torus around the y axis (major radius 0.7, minor 0.3).
pub fn torus(segments: usize, sides: usize) -> TriangleMesh {
    let (major, minor) = (0.7, 0.3);
    let profile: Vec<ProfilePoint> = (0..=sides)
        .map(|i| {
            let a = -TAU * i as f64 / sides as f64;
            let (s, c) = a.sin_cos();
            ProfilePoint {
                radius: major + minor * c,
                y: minor * s,
                normal: DVec2::new(c, s),
            }
        })
        .collect();
    revolve(&profile, segments)
}

/// Capsule along y: radius 0.45 hemispheres on a cylinder of half-length 0.55.
pub fn capsule(segments: usize, cap_rings: usize) -> TriangleMesh {
    let (r, half) = (0.45, 0.55);
    let mut profile = Vec::new();
    for i in 0..=cap_rings {
        let theta = 0.5 * PI * i as f64 / cap_rings as f64;
        let (s, c) = theta.sin_cos();
        profile.push(ProfilePoint {
            radius: r * s,
            y: half + r * c,
            normal: DVec2::new(s, c),
        });
    }
    for i in 0..=cap_rings {
        let theta = 0.5 * PI + 0.5 * PI * i as f64 / cap_rings as f64;
        let (s, c) = theta.sin_cos();
        profile.push(ProfilePoint {
            radius: r * s,
            y: -half + r * c,
            normal: DVec2::new(s, c),
        });
    }
    revolve(&profile, segments)
}

/// Subdivided icosahedron of radius 1 with smooth normals and a
/// per-triangle UV atlas (two triangles per grid cell, inset by a margin).
pub fn icosphere(subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<DVec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| DVec3::new(x, y, z).normalize())
    .collect();
    let mut tris: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint = std::collections::HashMap::new();
        let mut mid = |a: u32, b: u32, positions: &mut Vec<DVec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let p = (positions[a as usize] + positions[b as usize]).normalize();
                positions.push(p);
                (positions.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for [a, b, c] in tris {
            let ab = mid(a, b, &mut positions);
            let bc = mid(b, c, &mut positions);
            let ca = mid(c, a, &mut positions);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }

    let cells = (tris.len().div_ceil(2) as f64).sqrt().ceil() as usize;
    let size = 1.0 / cells as f64;
    let m = 0.1 * size;
    let mut uvs = Vec::with_capacity(tris.len() * 3);
    let mut faces = Vec::with_capacity(tris.len());
    for (k, tri) in tris.iter().enumerate() {
        let cell = k / 2;
        let (x0, y0) = ((cell % cells) as f64 * size, (cell / cells) as f64 * size);
        let (x1, y1) = (x0 + size, y0 + size);
        let corners = if k % 2 == 0 {
            [
                DVec2::new(x0 + m, y0 + m),
                DVec2::new(x1 - 2.0 * m, y0 + m),
                DVec2::new(x0 + m, y1 - 2.0 * m),
            ]
        } else {
            [
                DVec2::new(x1 - m, y1 - m),
                DVec2::new(x0 + 2.0 * m, y1 - m),
                DVec2::new(x1 - m, y0 + 2.0 * m),
            ]
        };
        let base = uvs.len() as u32;
        uvs.extend(corners);
        faces.push(Face {
            position: *tri,
            normal: *tri,
            uv: Some([base, base + 1, base + 2]),
        });
    }
    TriangleMesh {
        normals: positions.clone(),
        positions,
        uvs,
        faces,
    }
}
