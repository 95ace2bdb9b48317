use crate::diffusion::{guided_noise, Conditioning, ControlInput, Denoiser, NoiseSchedule, PromptTokens, Tensor};
use crate::error::{Error, Result};
use crate::geometry::ConditionKind;
use crate::image::Image;

fn check_control(expected: Option<ConditionKind>, control: Option<&ControlInput>) -> Result<()> {
    let given = control.map(|c| c.kind);
    if given != expected {
        return Err(Error::InvalidArgument(format!(
            "control mismatch: mode expects {:?}, got {:?}",
            expected.map(|k| k.name()),
            given.map(|k| k.name())
        )));
    }
    Ok(())
}

fn weighted_residual(w: f64, a: &Tensor, b: &Tensor) -> Tensor {
    let w = w as f32;
    Tensor {
        c: a.c,
        h: a.h,
        w: a.w,
        data: a.data.iter().zip(&b.data).map(|(p, q)| w * (p - q)).collect(),
    }
}

/// w(t)(ε̂_ψ − ε), with ε̂_ψ guided by `cfg_weight`. The denoiser output is
/// treated as a constant.
#[allow(clippy::too_many_arguments)]
pub fn sds_gradient(
    psi: &Denoiser,
    schedule: &NoiseSchedule,
    x_t: &Tensor,
    tokens: &PromptTokens,
    t: usize,
    eps: &Tensor,
    control: Option<&ControlInput>,
    cfg_weight: f64,
) -> Result<Tensor> {
    let pred = guided_noise(psi, x_t, tokens, &PromptTokens::null(), t, control, None, cfg_weight)?;
    Ok(weighted_residual(schedule.weight(t), &pred, eps))
}

/// w(t)(ε̂_ψ − ε̂_φ). Both models see the same x_t, prompt, t and control;
/// only φ receives the camera. Guidance applies to ψ.
#[allow(clippy::too_many_arguments)]
pub fn pgsd_gradient(
    psi: &Denoiser,
    phi: &Denoiser,
    schedule: &NoiseSchedule,
    x_t: &Tensor,
    tokens: &PromptTokens,
    t: usize,
    control: Option<&ControlInput>,
    expected_control: Option<ConditionKind>,
    camera: &[f64; 16],
    cfg_weight: f64,
) -> Result<Tensor> {
    check_control(expected_control, control)?;
    let pred_psi = guided_noise(psi, x_t, tokens, &PromptTokens::null(), t, control, None, cfg_weight)?;
    let pred_phi = phi.predict(
        x_t,
        &Conditioning {
            tokens,
            t,
            control,
            camera: Some(camera),
        },
    )?;
    Ok(weighted_residual(schedule.weight(t), &pred_psi, &pred_phi))
}

/// Denoising step on φ's trainable parameters with the noisy image of the
/// current distillation step; returns the loss before the update.
#[allow(clippy::too_many_arguments)]
pub fn phi_update(
    phi: &mut Denoiser,
    x_t: &Tensor,
    tokens: &PromptTokens,
    t: usize,
    eps: &Tensor,
    control: Option<&ControlInput>,
    camera: &[f64; 16],
    adam: &crate::diffusion::nn::AdamParams,
    clip: f64,
) -> Result<f64> {
    let cond = Conditioning {
        tokens,
        t,
        control,
        camera: Some(camera),
    };
    let mut any_trainable = false;
    phi.visit_params(&mut |_, p| any_trainable |= p.trainable);
    if !any_trainable {
        return Ok(phi.predict(x_t, &cond)?.mean_squared_error(eps));
    }
    let (pred, cache) = phi.forward_cached(x_t, &cond)?;
    let n = pred.len() as f32;
    let d = Tensor {
        c: pred.c,
        h: pred.h,
        w: pred.w,
        data: pred.data.iter().zip(&eps.data).map(|(p, e)| 2.0 * (p - e) / n).collect(),
    };
    phi.zero_grad();
    phi.backward(&cache, &d);
    phi.adam_step(adam, clip);
    Ok(pred.mean_squared_error(eps))
}

/// Model input from a render: area-downsample to `resolution` and map
/// [0, 1] to [-1, 1].
pub fn to_model_input(img: &Image, resolution: usize) -> Tensor {
    if img.width == resolution && img.height == resolution {
        Tensor::from_image(img)
    } else {
        Tensor::from_image(&img.resample_area(resolution, resolution))
    }
}

/// Adjoint of [`to_model_input`] for integer downsampling factors.
pub fn model_input_backward(grad: &Tensor, width: usize, height: usize) -> Result<Image> {
    if width % grad.w != 0 || height % grad.h != 0 || width / grad.w != height / grad.h {
        return Err(Error::InvalidArgument(format!(
            "render {width}x{height} is not an integer multiple of model input {}x{}",
            grad.w, grad.h
        )));
    }
    let f = width / grad.w;
    let scale = 2.0 / (f * f) as f64;
    let plane = grad.w * grad.h;
    let mut out = Image::new(width, height, grad.c);
    for y in 0..height {
        for x in 0..width {
            let src = (y / f) * grad.w + x / f;
            for c in 0..grad.c {
                out.data[(y * width + x) * grad.c + c] = grad.data[c * plane + src] as f64 * scale;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    #[test]
    fn input_adjoint_matches_inner_product() {
        let mut rng = rng_from_seed(4);
        let img = Image::from_fn(8, 8, 3, |_, _| [rng.random(), rng.random(), rng.random()]);
        let g = Tensor::from_vec(3, 4, 4, (0..48).map(|_| rng.random_range(-1.0..1.0)).collect());
        let x = to_model_input(&img, 4);
        let dx = model_input_backward(&g, 8, 8).unwrap();
        // <g, x(img)> is affine in img, so <g, x(img) - x(0)> = <dx, img>.
        let x0 = to_model_input(&Image::new(8, 8, 3), 4);
        let lhs: f64 = g.data.iter().zip(x.data.iter().zip(&x0.data)).map(|(a, (b, c))| (*a as f64) * (*b - *c) as f64).sum();
        let rhs: f64 = dx.data.iter().zip(&img.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-4, "{lhs} vs {rhs}");
        assert!(model_input_backward(&g, 9, 8).is_err());
    }
}
