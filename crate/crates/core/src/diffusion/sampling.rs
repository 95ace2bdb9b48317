use rand_distr::{Distribution, StandardNormal};

use super::denoiser::{Conditioning, ControlInput, Denoiser};
use super::schedule::NoiseSchedule;
use super::tensor::Tensor;
use super::tokens::PromptTokens;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub fn standard_normal(c: usize, h: usize, w: usize, rng: &mut Rng) -> Tensor {
    Tensor::from_vec(c, h, w, (0..c * h * w).map(|_| StandardNormal.sample(rng)).collect())
}

/// Classifier-free guidance: ε̂_null + w (ε̂_cond − ε̂_null). Weight 1 runs
/// only the conditional pass and weight 0 only the unconditional one.
#[allow(clippy::too_many_arguments)]
pub fn guided_noise(
    model: &Denoiser,
    x_t: &Tensor,
    tokens: &PromptTokens,
    null_tokens: &PromptTokens,
    t: usize,
    control: Option<&ControlInput>,
    camera: Option<&[f64; 16]>,
    weight: f64,
) -> Result<Tensor> {
    if !(weight >= 0.0) {
        return Err(Error::InvalidArgument(format!("guidance weight must be >= 0, got {weight}")));
    }
    let run = |tok: &PromptTokens| {
        model.predict(
            x_t,
            &Conditioning {
                tokens: tok,
                t,
                control,
                camera,
            },
        )
    };
    if weight == 1.0 {
        return run(tokens);
    }
    if weight == 0.0 {
        return run(null_tokens);
    }
    let cond = run(tokens)?;
    let null = run(null_tokens)?;
    Ok(combine_guidance(&cond, &null, weight))
}

pub fn combine_guidance(cond: &Tensor, null: &Tensor, weight: f64) -> Tensor {
    let w = weight as f32;
    Tensor {
        c: cond.c,
        h: cond.h,
        w: cond.w,
        data: cond.data.iter().zip(&null.data).map(|(c, n)| n + w * (c - n)).collect(),
    }
}

/// Evenly spaced timesteps from T−1 down to 0.
pub fn sampling_timesteps(schedule: &NoiseSchedule, steps: usize) -> Vec<usize> {
    let t_max = schedule.steps() - 1;
    let steps = steps.clamp(1, schedule.steps());
    if steps == 1 {
        return vec![t_max];
    }
    (0..steps)
        .rev()
        .map(|i| ((i as f64) * t_max as f64 / (steps - 1) as f64).round() as usize)
        .collect()
}

/// Ancestral DDIM sampling (η = 1) from pure noise; returns an image
/// tensor in [-1, 1].
#[allow(clippy::too_many_arguments)]
pub fn sample(
    model: &Denoiser,
    schedule: &NoiseSchedule,
    tokens: &PromptTokens,
    control: Option<&ControlInput>,
    steps: usize,
    guidance: f64,
    eta: f64,
    rng: &mut Rng,
) -> Result<Tensor> {
    let r = model.config.resolution;
    let mut x = standard_normal(3, r, r, rng);
    let null = PromptTokens::null();
    let ts = sampling_timesteps(schedule, steps);
    for (i, &t) in ts.iter().enumerate() {
        let eps = guided_noise(model, &x, tokens, &null, t, control, None, guidance)?;
        let (a, s) = (schedule.alpha(t) as f32, schedule.sigma(t) as f32);
        let x0: Vec<f32> = x
            .data
            .iter()
            .zip(&eps.data)
            .map(|(xt, e)| ((xt - s * e) / a).clamp(-1.0, 1.0))
            .collect();
        let Some(&t_prev) = ts.get(i + 1) else {
            x.data = x0;
            break;
        };
        let ab = schedule.alpha_bars[t];
        let ab_prev = schedule.alpha_bars[t_prev];
        let sig = eta * ((1.0 - ab_prev) / (1.0 - ab)).sqrt() * (1.0 - ab / ab_prev).max(0.0).sqrt();
        let dir = (1.0 - ab_prev - sig * sig).max(0.0).sqrt() as f32;
        let z = standard_normal(3, r, r, rng);
        let (ap, sig) = (ab_prev.sqrt() as f32, sig as f32);
        for k in 0..x.data.len() {
            // Re-derive ε from the clamped x̂0 so the update stays consistent.
            let e = (x.data[k] - a * x0[k]) / s;
            x.data[k] = ap * x0[k] + dir * e + sig * z.data[k];
        }
        if !x.all_finite() {
            return Err(Error::Numerical(format!("sampler produced non-finite values at t={t}")));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timesteps_cover_the_range() {
        let s = NoiseSchedule::default();
        let ts = sampling_timesteps(&s, 50);
        assert_eq!(ts.len(), 50);
        assert_eq!(ts[0], 999);
        assert_eq!(*ts.last().unwrap(), 0);
        assert!(ts.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn combination_is_affine() {
        let c = Tensor::from_vec(1, 1, 2, vec![1.0, 2.0]);
        let n = Tensor::from_vec(1, 1, 2, vec![0.5, -1.0]);
        assert_eq!(combine_guidance(&c, &n, 2.0).data, vec![1.5, 5.0]);
    }
}
