//! Dependency-free evaluation scores: histogram appearance similarity,
//! texture-edge / geometry alignment and cross-seed diversity.

use std::fmt::Write as _;

use crate::image::{Image, Mask};

/// A masked RGB image; the mask selects foreground pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedImage {
    pub image: Image,
    pub mask: Mask,
}

impl MaskedImage {
    pub fn new(image: Image, mask: Mask) -> Self {
        assert_eq!((image.width, image.height), (mask.width, mask.height), "mask size differs from image");
        MaskedImage { image, mask }
    }

    pub fn from_render(pixels: &Image, mask: &[bool]) -> Self {
        MaskedImage::new(
            pixels.clone(),
            Mask {
                width: pixels.width,
                height: pixels.height,
                data: mask.to_vec(),
            },
        )
    }
}

fn bin(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

/// Per-channel colour histograms, each normalized to unit mass.
pub fn colour_histograms(img: &MaskedImage, bins: usize) -> [Vec<f64>; 3] {
    let mut h = [vec![0.0; bins], vec![0.0; bins], vec![0.0; bins]];
    let mut n = 0.0;
    for (i, &m) in img.mask.data.iter().enumerate() {
        if m {
            let p = img.image.texel(i);
            for c in 0..3 {
                h[c][bin(p[c], bins)] += 1.0;
            }
            n += 1.0;
        }
    }
    if n > 0.0 {
        h.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x /= n));
    }
    h
}

fn luminance(p: &[f64]) -> f64 {
    0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2]
}

/// Histogram of forward-difference luminance gradient magnitudes over
/// pixels whose right and lower neighbours are also foreground.
pub fn gradient_histogram(img: &MaskedImage, bins: usize) -> Vec<f64> {
    let (w, h) = (img.image.width, img.image.height);
    let mut hist = vec![0.0; bins];
    let mut n = 0.0;
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            if !(img.mask.get(x, y) && img.mask.get(x + 1, y) && img.mask.get(x, y + 1)) {
                continue;
            }
            let l = luminance(img.image.pixel(x, y));
            let gx = luminance(img.image.pixel(x + 1, y)) - l;
            let gy = luminance(img.image.pixel(x, y + 1)) - l;
            // Magnitudes live in [0, √2]; map to [0, 1].
            hist[bin(gx.hypot(gy) / std::f64::consts::SQRT_2, bins)] += 1.0;
            n += 1.0;
        }
    }
    if n > 0.0 {
        hist.iter_mut().for_each(|v| *v /= n);
    }
    hist
}

/// χ² distance ½ Σ (a − b)² / (a + b) of unit-mass histograms, in [0, 1].
pub fn chi_squared(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a
        .iter()
        .zip(b)
        .filter(|(x, y)| **x + **y > 0.0)
        .map(|(x, y)| (x - y).powi(2) / (x + y))
        .sum::<f64>()
}

/// Similarity of one image pair: 1 − ½(colour χ² + ½ gradient L1).
pub fn pair_similarity(a: &MaskedImage, b: &MaskedImage, bins: usize) -> f64 {
    let (ha, hb) = (colour_histograms(a, bins), colour_histograms(b, bins));
    let chi = (0..3).map(|c| chi_squared(&ha[c], &hb[c])).sum::<f64>() / 3.0;
    let (ga, gb) = (gradient_histogram(a, bins), gradient_histogram(b, bins));
    let l1 = ga.iter().zip(&gb).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
    (1.0 - 0.5 * (chi + l1)).clamp(0.0, 1.0)
}

/// Mean pair similarity over all pairs of the two sets.
pub fn appearance_similarity(set_a: &[MaskedImage], set_b: &[MaskedImage], bins: usize) -> f64 {
    if set_a.is_empty() || set_b.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for a in set_a {
        for b in set_b {
            total += pair_similarity(a, b, bins);
        }
    }
    total / (set_a.len() * set_b.len()) as f64
}

fn sobel(img: &Image, channel: usize, x: usize, y: usize) -> (f64, f64) {
    let v = |dx: isize, dy: isize| img.pixel((x as isize + dx) as usize, (y as isize + dy) as usize)[channel];
    let gx = (v(1, -1) + 2.0 * v(1, 0) + v(1, 1)) - (v(-1, -1) + 2.0 * v(-1, 0) + v(-1, 1));
    let gy = (v(-1, 1) + 2.0 * v(0, 1) + v(1, 1)) - (v(-1, -1) + 2.0 * v(0, -1) + v(1, -1));
    (gx / 8.0, gy / 8.0)
}

/// Minimum texture gradient magnitude counted as an edge.
const EDGE_THRESHOLD: f64 = 0.02;

/// Weighted mean |cos| between texture-edge gradients (luminance of an
/// unshaded albedo render) and the dominant orientation of the normal-map
/// structure tensor. Pixels count when their whole 3×3 neighbourhood is
/// foreground; weights are edge strength × structure-tensor coherence.
pub fn normal_alignment(albedo: &Image, normals: &Image, mask: &Mask) -> f64 {
    let (w, h) = (albedo.width, albedo.height);
    let lum = Image::from_fn(w, h, 3, |x, y| [luminance(albedo.pixel(x, y)); 3]);
    let inside = |x: usize, y: usize| (0..3).all(|j| (0..3).all(|i| mask.get(x + i - 1, y + j - 1)));
    let (mut acc, mut wsum) = (0.0, 0.0);
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            if !inside(x, y) {
                continue;
            }
            let (tx, ty) = sobel(&lum, 0, x, y);
            let mag = tx.hypot(ty);
            if mag < EDGE_THRESHOLD {
                continue;
            }
            let (mut jxx, mut jxy, mut jyy) = (0.0, 0.0, 0.0);
            for c in 0..3 {
                let (gx, gy) = sobel(normals, c, x, y);
                jxx += gx * gx;
                jxy += gx * gy;
                jyy += gy * gy;
            }
            let tr = jxx + jyy;
            if tr <= 1e-12 {
                continue;
            }
            let disc = ((jxx - jyy).powi(2) + 4.0 * jxy * jxy).sqrt();
            let coherence = disc / tr;
            // Dominant eigenvector of the 2×2 structure tensor.
            let theta = 0.5 * (2.0 * jxy).atan2(jxx - jyy);
            let cos = ((tx * theta.cos() + ty * theta.sin()) / mag).abs();
            let wgt = mag * coherence;
            acc += wgt * cos;
            wsum += wgt;
        }
    }
    if wsum > 0.0 {
        acc / wsum
    } else {
        0.0
    }
}

/// Mean absolute per-pixel RGB difference over the union foreground of two
/// renders of the same view.
pub fn render_difference(a: &MaskedImage, b: &MaskedImage) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for i in 0..a.mask.data.len() {
        if a.mask.data[i] || b.mask.data[i] {
            let (pa, pb) = (a.image.texel(i), b.image.texel(i));
            total += (0..3).map(|c| (pa[c] - pb[c]).abs()).sum::<f64>() / 3.0;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Mean pairwise render difference across runs; `runs[k]` holds one
/// render per canonical view.
pub fn diversity(runs: &[Vec<MaskedImage>]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let views = runs[i].len().min(runs[j].len());
            if views == 0 {
                continue;
            }
            total += (0..views).map(|v| render_difference(&runs[i][v], &runs[j][v])).sum::<f64>() / views as f64;
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewScore {
    pub azimuth_deg: f64,
    pub similarity: f64,
    pub normal_alignment: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub appearance_similarity: f64,
    pub normal_alignment: f64,
    pub diversity: Option<f64>,
    pub per_view: Vec<ViewScore>,
}

impl EvalReport {
    pub fn all_finite(&self) -> bool {
        self.appearance_similarity.is_finite()
            && self.normal_alignment.is_finite()
            && self.diversity.is_none_or(f64::is_finite)
            && self.per_view.iter().all(|v| v.similarity.is_finite() && v.normal_alignment.is_finite())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "appearance_similarity={:.6}\nnormal_alignment={:.6}\n",
            self.appearance_similarity, self.normal_alignment
        );
        if let Some(d) = self.diversity {
            let _ = writeln!(s, "diversity={d:.6}");
        }
        for v in &self.per_view {
            let _ = writeln!(
                s,
                "view azimuth={:.0} similarity={:.6} normal_alignment={:.6}",
                v.azimuth_deg, v.similarity, v.normal_alignment
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(rgb: [f64; 3]) -> MaskedImage {
        MaskedImage::new(Image::from_fn(16, 16, 3, |_, _| rgb), Mask::new(16, 16, true))
    }

    #[test]
    fn identical_sets_score_one_and_symmetry() {
        let a = vec![flat([0.8, 0.1, 0.1]), flat([0.2, 0.5, 0.9])];
        assert_eq!(pair_similarity(&a[0], &a[0], 16), 1.0);
        let b = vec![flat([0.3, 0.3, 0.3])];
        assert_eq!(appearance_similarity(&a, &b, 16), appearance_similarity(&b, &a, 16));
    }

    #[test]
    fn red_versus_blue() {
        // Disjoint red and blue histograms, identical (flat) gradient
        // statistics and a shared green bin: χ² = 2/3, gradient term 0.
        let s = pair_similarity(&flat([1.0, 0.0, 0.0]), &flat([0.0, 0.0, 1.0]), 16);
        assert!((s - 2.0 / 3.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn stripes_aligned_with_ridge() {
        // Normal map varying along x; texture stripes also varying along x.
        let normals = Image::from_fn(16, 16, 3, |x, _| [x as f64 / 15.0, 0.5, 0.8]);
        let along = Image::from_fn(16, 16, 3, |x, _| if (x / 4) % 2 == 0 { [1.0; 3] } else { [0.0; 3] });
        let across = Image::from_fn(16, 16, 3, |_, y| if (y / 4) % 2 == 0 { [1.0; 3] } else { [0.0; 3] });
        let mask = Mask::new(16, 16, true);
        assert!((normal_alignment(&along, &normals, &mask) - 1.0).abs() < 1e-9);
        assert!(normal_alignment(&across, &normals, &mask) < 1e-9);
    }

    #[test]
    fn diversity_zero_for_identical_runs() {
        let run = vec![flat([0.5, 0.4, 0.3])];
        assert_eq!(diversity(&[run.clone(), run.clone()]), 0.0);
        assert!(diversity(&[run, vec![flat([0.1, 0.4, 0.3])]]) > 0.0);
    }
}
