mod common;

use common::*;
use pgsd_core::diffusion::{Conditioning, Denoiser, DenoiserConfig, PromptTokens, Tensor};
use pgsd_core::rng::rng_from_seed;
use rand::Rng as _;

#[test]
fn shading_adjoint_matches_differences() {
    let err = shading_fd_max_error(25, 11);
    assert!(err < 1e-4, "max rel error {err:e}");
}

#[test]
fn field_adjoint_matches_differences() {
    let err = field_fd_max_error(40, 3);
    assert!(err < 1e-4, "max rel error {err:e}");
}

#[test]
fn duplicated_points_double_the_gradient() {
    assert!(duplicate_points_additive(20, 5));
}

#[test]
fn chained_render_gradient_matches_differences() {
    let err = chained_fd_max_error(30, 2);
    assert!(err < 1e-3, "max rel error {err:e}");
}

#[test]
fn directional_albedo_bounded_at_normal_view() {
    let worst = max_directional_albedo(10, 64, 1.0, 8);
    assert!(worst <= 1.05, "{worst}");
}

#[test]
fn denoiser_parameter_gradients_match_differences() {
    let cfg = DenoiserConfig {
        resolution: 8,
        channels: [4, 6, 8],
        embed_dim: 8,
        time_dim: 8,
    };
    let mut rng = rng_from_seed(4);
    let mut model = Denoiser::new(cfg, &mut rng).unwrap();
    // Break the zero-initialized output layer so every parameter matters.
    model.visit_params(&mut |_, p| p.value.iter_mut().for_each(|v| *v += rng.random_range(-0.2f32..0.2)));
    let x = Tensor::from_vec(3, 8, 8, (0..192).map(|_| rng.random_range(-1.0f32..1.0)).collect());
    let r = Tensor::from_vec(3, 8, 8, (0..192).map(|_| rng.random_range(-1.0f32..1.0)).collect());
    let tokens = PromptTokens::parse("a photo of a red cube").unwrap();
    let cond = Conditioning {
        tokens: &tokens,
        t: 300,
        control: None,
        camera: None,
    };
    let loss = |m: &Denoiser| {
        let out = m.predict(&x, &cond).unwrap();
        out.data.iter().zip(&r.data).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>()
    };
    model.zero_grad();
    let (_, cache) = model.forward_cached(&x, &cond).unwrap();
    model.backward(&cache, &r);
    let mut grads = Vec::new();
    model.visit_params(&mut |name, p| grads.push((name.to_string(), p.grad.clone())));
    let mut checked = 0;
    for (pi, (name, g)) in grads.iter().enumerate() {
        if name == "tokens" {
            continue;
        }
        let i = (pi * 7919) % g.len();
        let h = 1e-2f32;
        let shift = |delta: f32| {
            let mut m = model.clone();
            let mut k = 0;
            m.visit_params(&mut |_, p| {
                if k == pi {
                    p.value[i] += delta;
                }
                k += 1;
            });
            loss(&m)
        };
        let fd = (shift(h) - shift(-h)) / (2.0 * h as f64);
        let a = g[i] as f64;
        assert!((a - fd).abs() <= 2e-2 * a.abs().max(fd.abs()).max(1e-2), "{name}[{i}]: {a} vs {fd}");
        checked += 1;
    }
    assert!(checked > 10);
}
