use glam::DVec3;
use pgsd_core::diffusion::{combine_guidance, NoiseSchedule, Tensor};
use pgsd_core::field::{HashGridConfig, MlpSpec, TextureField};
use pgsd_core::geometry::{decode_normal, encode_normal, sample_camera, CameraPose, ViewConfig};
use pgsd_core::image::{Image, Mask};
use pgsd_core::personalize::prepare_exemplars;
use pgsd_core::pipeline::{pair_similarity, ArrayData, MaskedImage, NamedArray, WeightsFile};
use pgsd_core::rng::rng_from_seed;
use pgsd_core::shading::tone_map;
use proptest::prelude::*;

fn default_schedule() -> NoiseSchedule {
    NoiseSchedule::linear(1000, 1e-4, 2e-2).unwrap()
}

fn small_field(seed: u64) -> TextureField {
    let grid = HashGridConfig {
        table_size_log2: 12,
        ..HashGridConfig::default()
    };
    TextureField::new(grid, MlpSpec::default(), &mut rng_from_seed(seed)).unwrap()
}

fn random_image(w: usize, h: usize, seed: u64) -> MaskedImage {
    let mut rng = rng_from_seed(seed);
    let image = Image::from_fn(w, h, 3, |_, _| [rng.random(), rng.random(), rng.random()]);
    let mut mask = Mask::new(w, h, false);
    mask.data.iter_mut().for_each(|m| *m = rng.random_bool(0.7));
    MaskedImage::new(image, mask)
}

#[test]
fn schedule_is_variance_preserving_everywhere() {
    let s = default_schedule();
    for t in 0..s.steps() {
        let (a, sg) = (s.alpha(t), s.sigma(t));
        assert!((a * a + sg * sg - 1.0).abs() < 1e-12, "t={t}");
        assert!((s.weight(t) - sg * sg).abs() < 1e-15);
        if t > 0 {
            assert!(s.alpha_bars[t] < s.alpha_bars[t - 1]);
        }
    }
}

#[test]
fn field_is_locally_lipschitz() {
    let field = TextureField::new(HashGridConfig::default(), MlpSpec::default(), &mut rng_from_seed(0)).unwrap();
    let mut rng = rng_from_seed(1);
    let mut a = Vec::with_capacity(1000);
    let mut b = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let p = DVec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let d = DVec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        a.push(p);
        b.push(p + d.normalize_or_zero() * rng.random_range(0.0..1e-3));
    }
    for (x, y) in field.query(&a).iter().zip(field.query(&b)) {
        let dist = ((x.albedo - y.albedo).length_squared()
            + (x.roughness - y.roughness).powi(2)
            + (x.metallic - y.metallic).powi(2))
        .sqrt();
        assert!(dist < 0.5, "{dist}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn guidance_endpoints_are_exact(seed in any::<u64>(), n in 1usize..64) {
        let mut rng = rng_from_seed(seed);
        let cond = Tensor::from_vec(1, 1, n, (0..n).map(|_| rng.random_range(-3.0f32..3.0)).collect());
        let null = Tensor::from_vec(1, 1, n, (0..n).map(|_| rng.random_range(-3.0f32..3.0)).collect());
        prop_assert_eq!(combine_guidance(&cond, &null, 0.0).data, null.data.clone());
        let one = combine_guidance(&cond, &null, 1.0);
        for (g, c) in one.data.iter().zip(&cond.data) {
            // n + (c − n) rounds to c up to one ulp of the operands.
            prop_assert!((g - c).abs() <= 4.0 * f32::EPSILON * c.abs().max(1.0));
        }
    }

    #[test]
    fn add_noise_mixes_with_schedule_scales(t in 0usize..1000, x in -1.0f32..1.0, e in -3.0f32..3.0) {
        let s = default_schedule();
        let xt = s.add_noise(&Tensor::from_vec(1, 1, 1, vec![x]), t, &Tensor::from_vec(1, 1, 1, vec![e])).unwrap();
        let expect = s.alpha(t) * x as f64 + s.sigma(t) * e as f64;
        prop_assert!((xt.data[0] as f64 - expect).abs() < 1e-5);
    }

    #[test]
    fn weights_file_round_trips(seed in any::<u64>(), n32 in 0usize..40, n64 in 0usize..40, key in "[a-z]{1,8}") {
        let mut rng = rng_from_seed(seed);
        let mut w = WeightsFile::new("test");
        w.meta.insert(key.clone(), format!("{}", rng.random::<u32>()));
        w.arrays.push(NamedArray {
            name: "a".into(),
            shape: vec![n32],
            data: ArrayData::F32((0..n32).map(|_| rng.random::<f32>()).collect()),
        });
        w.arrays.push(NamedArray {
            name: "b".into(),
            shape: vec![n64],
            data: ArrayData::F64((0..n64).map(|_| rng.random::<f64>()).collect()),
        });
        let bytes = w.to_bytes().unwrap();
        prop_assert_eq!(&WeightsFile::from_bytes(&bytes).unwrap(), &w);
        let mut bad = bytes.clone();
        let i = rng.random_range(0..bad.len());
        bad[i] ^= 1 << rng.random_range(0..8);
        prop_assert!(WeightsFile::from_bytes(&bad).is_err());
        prop_assert!(WeightsFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(sa in any::<u64>(), sb in any::<u64>(), bins in 2usize..32) {
        let a = random_image(12, 10, sa);
        let b = random_image(12, 10, sb);
        let ab = pair_similarity(&a, &b, bins);
        prop_assert_eq!(ab, pair_similarity(&b, &a, bins));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(pair_similarity(&a, &a, bins), 1.0);
    }

    #[test]
    fn field_outputs_are_valid_anywhere(seed in 0u64..4, x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
        let s = small_field(seed).query(&[DVec3::new(x, y, z)])[0];
        prop_assert!(s.is_valid(), "{:?}", s);
    }

    #[test]
    fn normal_encoding_round_trips(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let n = DVec3::new(x, y, z);
        prop_assert!((decode_normal(&encode_normal(n)) - n).length() < 1e-12);
    }

    #[test]
    fn tone_map_is_monotone_and_bounded(a in -1.0f64..2.0, b in -1.0f64..2.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(tone_map(lo) <= tone_map(hi));
        prop_assert!((0.0..=1.0).contains(&tone_map(a)));
    }

    #[test]
    fn camera_extrinsics_are_rigid(seed in any::<u64>()) {
        let view = ViewConfig::default();
        let cam = sample_camera(&mut rng_from_seed(seed), &view).unwrap();
        let r = cam.rotation();
        let err = (r * r.transpose() - glam::DMat3::IDENTITY).to_cols_array().iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
        prop_assert!((cam.position().length() - cam.radius).abs() < 1e-9);
        prop_assert!(cam.radius >= view.radius[0] && cam.radius <= view.radius[1]);
        prop_assert!(cam.to_camera(glam::DVec3::ZERO).z < 0.0);
        let again = CameraPose::orbit(cam.azimuth, cam.elevation, cam.radius, cam.fov_y, cam.width, cam.height);
        prop_assert_eq!(again.flattened_extrinsic(), cam.flattened_extrinsic());
    }

    #[test]
    fn prepared_exemplars_have_white_background(seed in any::<u64>(), w in 8usize..40, h in 8usize..40) {
        let mut rng = rng_from_seed(seed);
        let img = Image::from_fn(w, h, 3, |_, _| [rng.random(), rng.random(), rng.random()]);
        let mut mask = Mask::new(w, h, false);
        mask.data.iter_mut().for_each(|m| *m = rng.random_bool(0.5));
        mask.data[0] = true;
        let set = prepare_exemplars(&[(img, mask)], 16, None).unwrap();
        let (im, m) = (&set.images[0], &set.masks[0]);
        prop_assert_eq!(im.width.min(im.height), 16);
        for i in 0..m.data.len() {
            if !m.data[i] {
                prop_assert_eq!(im.texel(i), &[1.0, 1.0, 1.0][..]);
            }
        }
    }
}
