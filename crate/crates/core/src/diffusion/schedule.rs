use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Variance-preserving noise schedule with linear betas.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
        if steps < 2 || !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "schedule needs T >= 2 and 0 < beta_start < beta_end < 1, got T={steps}, [{beta_start}, {beta_end}]"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
            .collect();
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(NoiseSchedule { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// Signal scale √ᾱ_t.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha_bars[t].sqrt()
    }

    /// Noise scale √(1 − ᾱ_t).
    pub fn sigma(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bars[t]).sqrt()
    }

    /// Distillation weight w(t) = σ_t².
    pub fn weight(&self, t: usize) -> f64 {
        1.0 - self.alpha_bars[t]
    }

    fn check(&self, t: usize) -> Result<()> {
        if t >= self.steps() {
            return Err(Error::InvalidArgument(format!("timestep {t} outside [0, {})", self.steps())));
        }
        Ok(())
    }

    /// x_t = α_t x + σ_t ε.
    pub fn add_noise(&self, x: &Tensor, t: usize, eps: &Tensor) -> Result<Tensor> {
        self.check(t)?;
        if !x.same_shape(eps) {
            return Err(Error::InvalidArgument("image and noise shapes differ".into()));
        }
        let (a, s) = (self.alpha(t) as f32, self.sigma(t) as f32);
        Ok(Tensor {
            c: x.c,
            h: x.h,
            w: x.w,
            data: x.data.iter().zip(&eps.data).map(|(x, e)| a * x + s * e).collect(),
        })
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::linear(1000, 1e-4, 2e-2).expect("default schedule")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_endpoints() {
        let s = NoiseSchedule::default();
        assert!((s.alpha(0) - (1.0f64 - 1e-4).sqrt()).abs() < 1e-15);
        assert!(s.alpha_bars[0] > 0.99);
        assert!(s.alpha_bars[999] < 0.01);
        assert!(s.alpha_bars.windows(2).all(|w| w[1] < w[0]));
        assert!(NoiseSchedule::linear(10, 0.2, 0.1).is_err());
    }

    #[test]
    fn add_noise_cases() {
        let s = NoiseSchedule::default();
        let x = Tensor::from_vec(1, 1, 2, vec![0.5, -1.0]);
        let e = Tensor::from_vec(1, 1, 2, vec![0.0, 0.0]);
        let xt = s.add_noise(&x, 10, &e).unwrap();
        assert_eq!(xt.data, vec![0.5 * s.alpha(10) as f32, -(s.alpha(10) as f32)]);
        assert!(s.add_noise(&x, 1000, &e).is_err());
    }
}
