use std::fmt::Write as _;
use std::path::Path;

use glam::{DVec2, DVec3};

use crate::error::{Error, Result};

/// One triangle: indices into the position, normal and (optional) UV lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    pub position: [u32; 3],
    pub normal: [u32; 3],
    pub uv: Option<[u32; 3]>,
}

/// Indexed triangle mesh with separate position / normal / UV streams.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub positions: Vec<DVec3>,
    pub normals: Vec<DVec3>,
    pub uvs: Vec<DVec2>,
    pub faces: Vec<Face>,
}

/// Non-fatal findings from loading a mesh.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub degenerate_faces: usize,
    pub faces_without_uv: usize,
    pub computed_normals: bool,
}

/// Cross-product area test for zero-area triangles.
pub fn is_degenerate(a: DVec3, b: DVec3, c: DVec3) -> bool {
    let e1 = b - a;
    let e2 = c - a;
    let cross = e1.cross(e2).length();
    cross <= f64::EPSILON * e1.length() * e2.length() || cross == 0.0
}

impl TriangleMesh {
    pub fn triangle(&self, face: usize) -> [DVec3; 3] {
        let f = &self.faces[face];
        f.position.map(|i| self.positions[i as usize])
    }

    pub fn has_uvs(&self) -> bool {
        !self.faces.is_empty() && self.faces.iter().all(|f| f.uv.is_some())
    }

    pub fn degenerate_face_count(&self) -> usize {
        (0..self.faces.len())
            .filter(|&f| {
                let [a, b, c] = self.triangle(f);
                is_degenerate(a, b, c)
            })
            .count()
    }

    pub fn bounding_radius(&self) -> f64 {
        self.positions.iter().map(|p| p.length()).fold(0.0, f64::max)
    }

    /// Check index ranges and normal lengths.
    pub fn validate(&self) -> Result<()> {
        if self.faces.is_empty() || self.positions.is_empty() {
            return Err(Error::InvalidMesh("empty mesh".into()));
        }
        for (i, f) in self.faces.iter().enumerate() {
            let bad = f.position.iter().any(|&p| p as usize >= self.positions.len())
                || f.normal.iter().any(|&n| n as usize >= self.normals.len())
                || f
                    .uv
                    .is_some_and(|uv| uv.iter().any(|&t| t as usize >= self.uvs.len()));
            if bad {
                return Err(Error::InvalidMesh(format!("face {i} index out of range")));
            }
        }
        for (i, n) in self.normals.iter().enumerate() {
            if (n.length() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidMesh(format!("normal {i} is not unit length")));
            }
        }
        Ok(())
    }

    /// Translate the bounding-box centre to the origin and scale so the
    /// farthest vertex has norm 1.
    pub fn normalize_to_unit_sphere(&mut self) {
        if self.positions.is_empty() {
            return;
        }
        let (lo, hi) = self.positions.iter().fold(
            (DVec3::splat(f64::INFINITY), DVec3::splat(f64::NEG_INFINITY)),
            |(lo, hi), p| (lo.min(*p), hi.max(*p)),
        );
        let center = 0.5 * (lo + hi);
        for p in &mut self.positions {
            *p -= center;
        }
        let r = self.bounding_radius();
        if r > 0.0 {
            for p in &mut self.positions {
                *p /= r;
            }
        }
    }

    /// Area-weighted per-position vertex normals.
    pub fn area_weighted_normals(&self) -> Vec<DVec3> {
        let mut acc = vec![DVec3::ZERO; self.positions.len()];
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            // Unnormalized cross product is twice the area times the unit normal.
            let n = (b - a).cross(c - a);
            for &i in &self.faces[f].position {
                acc[i as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| n.try_normalize().unwrap_or(DVec3::Y))
            .collect()
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for p in &self.positions {
            let _ = writeln!(s, "v {} {} {}", p.x, p.y, p.z);
        }
        for t in &self.uvs {
            let _ = writeln!(s, "vt {} {}", t.x, t.y);
        }
        for n in &self.normals {
            let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
        }
        for f in &self.faces {
            s.push('f');
            for k in 0..3 {
                match f.uv {
                    Some(uv) => {
                        let _ = write!(s, " {}/{}/{}", f.position[k] + 1, uv[k] + 1, f.normal[k] + 1);
                    }
                    None => {
                        let _ = write!(s, " {}//{}", f.position[k] + 1, f.normal[k] + 1);
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn save_obj(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_obj_string()).map_err(|e| Error::io(path, e))
    }
}

/// Load a Wavefront OBJ mesh and normalize it to the unit sphere.
///
/// Polygons are fan-triangulated. Faces without normals get area-weighted
/// vertex normals; faces without UVs are allowed and counted in the report.
/// Fails when zero-area faces exceed 1% of all faces.
pub fn load_mesh(path: &Path) -> Result<(TriangleMesh, LoadReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

pub fn parse_obj(text: &str, path: &Path) -> Result<(TriangleMesh, LoadReport)> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut uvs = Vec::new();
    // (position, uv, normal) with missing entries as None.
    let mut raw_faces: Vec<[(u32, Option<u32>, Option<u32>); 3]> = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        let floats = |it: std::str::SplitWhitespace<'_>, n: usize| -> Result<Vec<f64>> {
            let vals: Vec<f64> = it
                .take(n)
                .map(|t| t.parse::<f64>().map_err(|e| perr(lineno, format!("{t:?}: {e}"))))
                .collect::<Result<_>>()?;
            if vals.len() < n.min(2) || vals.iter().any(|v| !v.is_finite()) {
                return Err(perr(lineno, format!("expected {n} finite numbers")));
            }
            Ok(vals)
        };
        match tag {
            "v" => {
                let v = floats(it, 3)?;
                if v.len() < 3 {
                    return Err(perr(lineno, "vertex needs 3 coordinates".into()));
                }
                positions.push(DVec3::new(v[0], v[1], v[2]));
            }
            "vn" => {
                let v = floats(it, 3)?;
                if v.len() < 3 {
                    return Err(perr(lineno, "normal needs 3 coordinates".into()));
                }
                let n = DVec3::new(v[0], v[1], v[2])
                    .try_normalize()
                    .ok_or_else(|| perr(lineno, "zero-length normal".into()))?;
                normals.push(n);
            }
            "vt" => {
                let v = floats(it, 2)?;
                uvs.push(DVec2::new(v[0], v[1]));
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let resolve = |s: Option<&str>, len: usize| -> Result<Option<u32>> {
                        match s {
                            None | Some("") => Ok(None),
                            Some(s) => {
                                let i: i64 = s
                                    .parse()
                                    .map_err(|e| perr(lineno, format!("index {s:?}: {e}")))?;
                                let idx = if i < 0 { len as i64 + i } else { i - 1 };
                                if idx < 0 || idx >= len as i64 {
                                    return Err(perr(lineno, format!("index {i} out of range")));
                                }
                                Ok(Some(idx as u32))
                            }
                        }
                    };
                    let p = resolve(parts.next(), positions.len())?
                        .ok_or_else(|| perr(lineno, "face corner without position".into()))?;
                    let t = resolve(parts.next(), uvs.len())?;
                    let n = resolve(parts.next(), normals.len())?;
                    corners.push((p, t, n));
                }
                if corners.len() < 3 {
                    return Err(perr(lineno, "face needs at least 3 corners".into()));
                }
                for k in 1..corners.len() - 1 {
                    raw_faces.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }

    if raw_faces.is_empty() || positions.is_empty() {
        return Err(Error::InvalidMesh(format!("{}: empty mesh", path.display())));
    }

    let mut mesh = TriangleMesh {
        positions,
        normals,
        uvs,
        faces: Vec::with_capacity(raw_faces.len()),
    };
    let mut report = LoadReport::default();
    let needs_normals = raw_faces
        .iter()
        .any(|f| f.iter().any(|c| c.2.is_none()));
    let base_computed = mesh.normals.len() as u32;

    for f in &raw_faces {
        let uv = if f.iter().all(|c| c.1.is_some()) {
            Some(f.map(|c| c.1.unwrap()))
        } else {
            report.faces_without_uv += 1;
            None
        };
        let has_n = f.iter().all(|c| c.2.is_some());
        let normal = if has_n {
            f.map(|c| c.2.unwrap())
        } else {
            f.map(|c| base_computed + c.0)
        };
        mesh.faces.push(Face {
            position: f.map(|c| c.0),
            normal,
            uv,
        });
    }
    mesh.normalize_to_unit_sphere();
    if needs_normals {
        let computed = mesh.area_weighted_normals();
        mesh.normals.extend(computed);
        report.computed_normals = true;
    }

    report.degenerate_faces = mesh.degenerate_face_count();
    if report.degenerate_faces * 100 > mesh.faces.len() {
        return Err(Error::InvalidMesh(format!(
            "{}: {} of {} faces have zero area",
            path.display(),
            report.degenerate_faces,
            mesh.faces.len()
        )));
    }
    if report.degenerate_faces > 0 {
        log::warn!(
            "{}: {} zero-area faces",
            path.display(),
            report.degenerate_faces
        );
    }
    if report.faces_without_uv > 0 {
        log::warn!("{}: {} faces lack UVs", path.display(), report.faces_without_uv);
    }
    mesh.validate()?;
    Ok((mesh, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE: &str = "\
v -1 -1 -1\nv 1 -1 -1\nv 1 1 -1\nv -1 1 -1\nv -1 -1 1\nv 1 -1 1\nv 1 1 1\nv -1 1 1
f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 4 8 7 3\nf 1 5 8 4\nf 2 3 7 6
";

    #[test]
    fn cube_triangulates_and_normalizes() {
        let (mesh, report) = parse_obj(CUBE, Path::new("cube.obj")).unwrap();
        assert_eq!(mesh.faces.len(), 12);
        assert!((mesh.bounding_radius() - 1.0).abs() < 1e-12);
        assert!(report.computed_normals);
        assert_eq!(report.faces_without_uv, 12);
        assert!(!mesh.has_uvs());
        // Corner normals of a cube point along the diagonals.
        let n = mesh.normals[mesh.faces[0].normal[0] as usize];
        assert!((n - DVec3::splat(-1.0).normalize()).length() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse_obj("v 0 0 0\n", Path::new("x")),
            Err(Error::InvalidMesh(_))
        ));
        assert!(matches!(
            parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 3\n", Path::new("x")),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_obj("v 0 0 zz\n", Path::new("x")),
            Err(Error::Parse { line: 1, .. })
        ));
        // A single degenerate triangle is 100% of the faces.
        assert!(matches!(
            parse_obj("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n", Path::new("x")),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn negative_indices_and_full_corners() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 2\nf -3/-3/-1 -2/-2/-1 -1/-1/-1\n";
        let (mesh, report) = parse_obj(text, Path::new("tri.obj")).unwrap();
        assert!(mesh.has_uvs());
        assert!(!report.computed_normals);
        assert_eq!(mesh.normals[0], DVec3::Z);
        assert_eq!(mesh.faces[0].uv, Some([0, 1, 2]));
    }
}
