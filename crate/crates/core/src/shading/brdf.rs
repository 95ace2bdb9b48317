use std::f64::consts::PI;

use glam::DVec3;

/// Roughness floor keeping the GGX peak finite.
pub const ROUGHNESS_MIN: f64 = 0.04;
/// Fresnel reflectance of dielectrics at normal incidence.
pub const DIELECTRIC_F0: f64 = 0.04;

/// Microfacet parameters at one surface point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrdfSample {
    pub albedo: DVec3,
    pub roughness: f64,
    pub metallic: f64,
}

impl BrdfSample {
    pub fn new(albedo: DVec3, roughness: f64, metallic: f64) -> Self {
        BrdfSample {
            albedo,
            roughness,
            metallic,
        }
    }

    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        self.albedo.to_array().iter().all(|&c| unit(c))
            && (ROUGHNESS_MIN..=1.0).contains(&self.roughness)
            && unit(self.metallic)
    }

    pub fn f0(&self) -> DVec3 {
        DVec3::splat(DIELECTRIC_F0 * (1.0 - self.metallic)) + self.albedo * self.metallic
    }
}

/// Cosines of one (n, v, l) configuration, computed so that swapping v and
/// l produces bit-identical values.
#[derive(Clone, Copy, Debug)]
pub struct LobeGeometry {
    pub n_dot_v: f64,
    pub n_dot_l: f64,
    pub n_dot_h: f64,
    pub v_dot_h: f64,
}

impl LobeGeometry {
    #[inline]
    pub fn new(n: DVec3, v: DVec3, l: DVec3) -> Self {
        let n_dot_v = n.dot(v);
        let n_dot_l = n.dot(l);
        let v_dot_l = v.dot(l);
        let half_len = (2.0 + 2.0 * v_dot_l).max(1e-300).sqrt();
        LobeGeometry {
            n_dot_v,
            n_dot_l,
            n_dot_h: ((n_dot_v + n_dot_l) / half_len).min(1.0),
            v_dot_h: (0.5 * (1.0 + v_dot_l)).max(0.0).sqrt(),
        }
    }
}

/// GGX normal distribution with alpha² = `k`.
#[inline]
pub fn ggx_d(n_dot_h: f64, k: f64) -> f64 {
    let d = n_dot_h * n_dot_h * (k - 1.0) + 1.0;
    k / (PI * d * d)
}

/// Height-correlated Smith visibility, G / (4 (n·v)(n·l)).
#[inline]
pub fn smith_visibility(n_dot_v: f64, n_dot_l: f64, k: f64) -> f64 {
    let a = n_dot_l * (n_dot_v * n_dot_v * (1.0 - k) + k).sqrt();
    let b = n_dot_v * (n_dot_l * n_dot_l * (1.0 - k) + k).sqrt();
    0.5 / (a + b)
}

/// Diffuse and specular parts of the reflectance (per steradian).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrdfTerms {
    pub diffuse: DVec3,
    pub specular: DVec3,
}

#[inline]
pub fn eval_terms(s: &BrdfSample, g: &LobeGeometry) -> BrdfTerms {
    let alpha = s.roughness * s.roughness;
    let k = alpha * alpha;
    let d = ggx_d(g.n_dot_h, k);
    let vis = smith_visibility(g.n_dot_v, g.n_dot_l, k);
    let schlick = (1.0 - g.v_dot_h).powi(5);
    let f0 = s.f0();
    let fresnel = f0 + (DVec3::ONE - f0) * schlick;
    BrdfTerms {
        diffuse: s.albedo * ((1.0 - s.metallic) / PI),
        specular: fresnel * (d * vis),
    }
}

/// f = (1 - m) a / π + D F V with GGX D (α = r²), Schlick F and
/// height-correlated Smith V. Requires n·v > 0 and n·l > 0.
#[inline]
pub fn eval_brdf(s: &BrdfSample, n: DVec3, v: DVec3, l: DVec3) -> DVec3 {
    let t = eval_terms(s, &LobeGeometry::new(n, v, l));
    t.diffuse + t.specular
}

/// Value of f and its partial derivatives with respect to the sample.
#[derive(Clone, Copy, Debug)]
pub struct BrdfJacobian {
    pub value: DVec3,
    /// ∂f_c / ∂a_c (the Jacobian in albedo is diagonal).
    pub d_albedo: DVec3,
    pub d_roughness: DVec3,
    pub d_metallic: DVec3,
}

#[inline]
pub fn eval_with_jacobian(s: &BrdfSample, g: &LobeGeometry) -> BrdfJacobian {
    let r = s.roughness;
    let m = s.metallic;
    let alpha = r * r;
    let k = alpha * alpha;
    let nh2 = g.n_dot_h * g.n_dot_h;
    let dd = nh2 * (k - 1.0) + 1.0;
    let d = k / (PI * dd * dd);
    let d_dk = (dd - 2.0 * k * nh2) / (PI * dd * dd * dd);

    let (nv, nl) = (g.n_dot_v, g.n_dot_l);
    let ra = (nv * nv * (1.0 - k) + k).sqrt();
    let rb = (nl * nl * (1.0 - k) + k).sqrt();
    let sum = nl * ra + nv * rb;
    let vis = 0.5 / sum;
    let dsum_dk = nl * (1.0 - nv * nv) / (2.0 * ra) + nv * (1.0 - nl * nl) / (2.0 * rb);
    let vis_dk = -vis * dsum_dk / sum;

    let dv = d * vis;
    let ddv_dr = (d_dk * vis + d * vis_dk) * 4.0 * r * r * r;

    let schlick = (1.0 - g.v_dot_h).powi(5);
    let f0 = s.f0();
    let fresnel = f0 + (DVec3::ONE - f0) * schlick;
    let one_minus_s = 1.0 - schlick;

    BrdfJacobian {
        value: s.albedo * ((1.0 - m) / PI) + fresnel * dv,
        d_albedo: DVec3::splat((1.0 - m) / PI + dv * one_minus_s * m),
        d_roughness: fresnel * ddv_dr,
        d_metallic: -s.albedo / PI + (s.albedo - DVec3::splat(DIELECTRIC_F0)) * (dv * one_minus_s),
    }
}

/// Hemispherical-directional reflectance ∫ f (n·l) dl for view `v` around
/// normal +z, by stratified importance sampling: cosine-weighted for the
/// diffuse lobe and GGX half-vector sampling for the specular lobe, each on
/// a `strata` × `strata` grid.
pub fn directional_albedo(s: &BrdfSample, n_dot_v: f64, strata: usize) -> DVec3 {
    let n = DVec3::Z;
    let v = DVec3::new((1.0 - n_dot_v * n_dot_v).max(0.0).sqrt(), 0.0, n_dot_v);
    let alpha = s.roughness * s.roughness;
    let k = alpha * alpha;
    let inv = 1.0 / (strata * strata) as f64;
    let mut diffuse = DVec3::ZERO;
    let mut specular = DVec3::ZERO;
    for i in 0..strata {
        for j in 0..strata {
            let u1 = (i as f64 + 0.5) / strata as f64;
            let u2 = (j as f64 + 0.5) / strata as f64;
            let phi = 2.0 * PI * u2;

            // Cosine-weighted: f_d cos / pdf = f_d π.
            let sin_t = u1.sqrt();
            let l = DVec3::new(sin_t * phi.cos(), sin_t * phi.sin(), (1.0 - u1).sqrt());
            let g = LobeGeometry::new(n, v, l);
            if g.n_dot_l > 0.0 {
                diffuse += eval_terms(s, &g).diffuse * PI;
            }

            // GGX half-vector: pdf_h = D (n·h), pdf_l = pdf_h / (4 v·h).
            let cos_h = ((1.0 - u1) / (1.0 + (k - 1.0) * u1)).sqrt();
            let sin_h = (1.0 - cos_h * cos_h).max(0.0).sqrt();
            let h = DVec3::new(sin_h * phi.cos(), sin_h * phi.sin(), cos_h);
            let vh = v.dot(h);
            if vh <= 0.0 {
                continue;
            }
            let l = 2.0 * vh * h - v;
            let g = LobeGeometry::new(n, v, l);
            if g.n_dot_l <= 0.0 {
                continue;
            }
            let pdf = ggx_d(cos_h, k) * cos_h / (4.0 * vh);
            specular += eval_terms(s, &g).specular * g.n_dot_l / pdf;
        }
    }
    (diffuse + specular) * inv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir(x: f64, y: f64, z: f64) -> DVec3 {
        DVec3::new(x, y, z).normalize()
    }

    #[test]
    fn metallic_one_has_no_diffuse() {
        let s = BrdfSample::new(DVec3::new(0.3, 0.6, 0.9), 0.5, 1.0);
        let g = LobeGeometry::new(DVec3::Z, dir(0.2, 0.1, 1.0), dir(-0.3, 0.2, 1.0));
        assert_eq!(eval_terms(&s, &g).diffuse, DVec3::ZERO);
    }

    #[test]
    fn fresnel_at_normal_incidence_is_f0() {
        let s = BrdfSample::new(DVec3::new(0.2, 0.5, 0.8), 0.7, 0.3);
        let g = LobeGeometry::new(DVec3::Z, DVec3::Z, DVec3::Z);
        assert_eq!(g.v_dot_h, 1.0);
        let t = eval_terms(&s, &g);
        let k = 0.7f64.powi(4);
        let dv = ggx_d(1.0, k) * smith_visibility(1.0, 1.0, k);
        let f = t.specular / dv;
        let f0 = DVec3::splat(0.04 * 0.7) + s.albedo * 0.3;
        assert!((f - f0).abs().max_element() < 1e-12);
    }

    #[test]
    fn ggx_peak() {
        // r = 0.5 → α = 0.25, D(1) = 1 / (π α²).
        let k = 0.25f64 * 0.25;
        let peak = ggx_d(1.0, k);
        assert!((peak - 1.0 / (PI * 0.0625)).abs() < 1e-9);
        assert!((peak - 5.0930).abs() < 1e-4);
    }

    #[test]
    fn symmetric_in_view_and_light() {
        let s = BrdfSample::new(DVec3::new(0.9, 0.4, 0.1), 0.31, 0.42);
        let n = dir(0.1, 0.2, 1.0);
        let v = dir(0.5, -0.3, 0.8);
        let l = dir(-0.7, 0.1, 0.6);
        assert_eq!(eval_brdf(&s, n, v, l), eval_brdf(&s, n, l, v));
    }

    #[test]
    fn jacobian_value_matches_eval() {
        let s = BrdfSample::new(DVec3::new(0.9, 0.4, 0.1), 0.31, 0.42);
        let g = LobeGeometry::new(DVec3::Z, dir(0.5, -0.3, 0.8), dir(-0.7, 0.1, 0.6));
        let t = eval_terms(&s, &g);
        let j = eval_with_jacobian(&s, &g);
        assert!((j.value - (t.diffuse + t.specular)).abs().max_element() < 1e-12);
    }
}
