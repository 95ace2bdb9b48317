use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, CorpusSample};
use super::denoiser::{Conditioning, ControlInput, Denoiser, ParamGroup};
use super::nn::AdamParams;
use super::sampling::standard_normal;
use super::schedule::NoiseSchedule;
use super::tensor::Tensor;
use super::tokens::{PromptTokens, VIEW_WORDS};
use crate::error::{Error, Result};
use crate::geometry::ConditionKind;
use crate::rng::{child_rng, Rng};

/// One supervised example: clean image in [-1, 1] plus its conditions.
#[derive(Clone, Debug)]
pub struct Example {
    pub image: Tensor,
    pub tokens: PromptTokens,
    pub control: Option<ControlInput>,
}

impl Example {
    pub fn from_sample(s: &CorpusSample, control: Option<ConditionKind>) -> Example {
        Example {
            image: Tensor::from_image(&s.image),
            tokens: s.caption.clone(),
            control: control.map(|kind| ControlInput {
                kind,
                image: Tensor::from_image(s.condition(kind)),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Probability of replacing a caption by the null prompt.
    pub token_dropout: f64,
    /// Probability of reducing a caption to the class prompt
    /// "a photo of a object <view>", so the class word carries the corpus
    /// average appearance.
    pub class_prompt_rate: f64,
    pub clip_norm: f64,
    pub log_every: usize,
    /// Steps per control branch, run after the base model.
    pub control_steps: usize,
    pub control_lr: f64,
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1500,
            batch_size: 8,
            lr: 2e-3,
            token_dropout: 0.1,
            class_prompt_rate: 0.2,
            clip_norm: 1.0,
            log_every: 50,
            control_steps: 400,
            control_lr: 1e-3,
            holdout_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.log_every == 0 {
            return Err(Error::Config("batch_size and log_every must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.control_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.token_dropout) || !unit(self.class_prompt_rate) || !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(
                "token_dropout and class_prompt_rate in [0,1], holdout_fraction in [0,1)".into(),
            ));
        }
        Ok(())
    }
}

/// "a photo of a object" plus the view word of `caption`, if any.
pub fn class_prompt(caption: &PromptTokens) -> PromptTokens {
    let base = PromptTokens::parse("a photo of a object").expect("class prompt words are in the vocabulary");
    match VIEW_WORDS.iter().find(|w| caption.contains(w)) {
        Some(view) => base.with_word(view).expect("view words are in the vocabulary"),
        None => base,
    }
}

/// Aborts training whose loss stays above `factor` × the first loss for
/// `patience` consecutive steps, or turns non-finite.
#[derive(Clone, Debug)]
pub struct DivergenceDetector {
    pub factor: f64,
    pub patience: usize,
    initial: Option<f64>,
    run: usize,
}

impl Default for DivergenceDetector {
    fn default() -> Self {
        DivergenceDetector {
            factor: 10.0,
            patience: 500,
            initial: None,
            run: 0,
        }
    }
}

impl DivergenceDetector {
    pub fn observe(&mut self, step: usize, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss {loss} at step {step}")));
        }
        let first = *self.initial.get_or_insert(loss);
        if loss > self.factor * first {
            self.run += 1;
            if self.run >= self.patience {
                return Err(Error::Numerical(format!(
                    "diverged: loss {loss:.4} above {}x the initial {first:.4} for {} steps (step {step})",
                    self.factor, self.patience
                )));
            }
        } else {
            self.run = 0;
        }
        Ok(())
    }
}

/// Forward, backward and loss of one example with a given t and ε.
pub fn example_loss_and_grad(
    model: &mut Denoiser,
    schedule: &NoiseSchedule,
    ex: &Example,
    t: usize,
    eps: &Tensor,
    scale: f32,
) -> Result<f64> {
    let x_t = schedule.add_noise(&ex.image, t, eps)?;
    let cond = Conditioning {
        tokens: &ex.tokens,
        t,
        control: ex.control.as_ref(),
        camera: None,
    };
    let (pred, cache) = model.forward_cached(&x_t, &cond)?;
    let n = pred.len() as f32;
    let d = Tensor {
        c: pred.c,
        h: pred.h,
        w: pred.w,
        data: pred.data.iter().zip(&eps.data).map(|(p, e)| 2.0 * (p - e) / n * scale).collect(),
    };
    model.backward(&cache, &d);
    Ok(pred.mean_squared_error(eps))
}

/// One optimizer step on a minibatch; returns the mean loss.
pub fn train_step(
    model: &mut Denoiser,
    schedule: &NoiseSchedule,
    batch: &[Example],
    adam: &AdamParams,
    clip: f64,
    rng: &mut Rng,
) -> Result<f64> {
    model.zero_grad();
    let scale = 1.0 / batch.len() as f32;
    let mut loss = 0.0;
    for ex in batch {
        let t = rng.random_range(0..schedule.steps());
        let eps = standard_normal(ex.image.c, ex.image.h, ex.image.w, rng);
        loss += example_loss_and_grad(model, schedule, ex, t, &eps, scale)?;
    }
    model.adam_step(adam, clip);
    Ok(loss / batch.len() as f64)
}

/// Mean ε-prediction MSE over `draws` fixed (t, ε) pairs per example.
pub fn denoising_loss(model: &Denoiser, schedule: &NoiseSchedule, examples: &[Example], draws: usize, seed: u64) -> Result<f64> {
    let mut rng = child_rng(seed, "denoising-loss");
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in examples {
        for _ in 0..draws {
            let t = rng.random_range(0..schedule.steps());
            let eps = standard_normal(ex.image.c, ex.image.h, ex.image.w, &mut rng);
            let x_t = schedule.add_noise(&ex.image, t, &eps)?;
            let pred = model.predict(
                &x_t,
                &Conditioning {
                    tokens: &ex.tokens,
                    t,
                    control: ex.control.as_ref(),
                    camera: None,
                },
            )?;
            total += pred.mean_squared_error(&eps);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// (step, mean loss over the log interval).
    pub base_curve: Vec<(usize, f64)>,
    pub control_curves: Vec<(ConditionKind, Vec<(usize, f64)>)>,
    pub heldout_loss: f64,
}

fn run_phase(
    model: &mut Denoiser,
    schedule: &NoiseSchedule,
    train: &[CorpusSample],
    control: Option<ConditionKind>,
    steps: usize,
    lr: f64,
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<(usize, f64)>> {
    let adam = AdamParams::with_lr(lr as f32);
    let mut detector = DivergenceDetector::default();
    let mut curve = Vec::new();
    let mut acc = 0.0;
    let mut acc_n = 0usize;
    for step in 0..steps {
        let batch: Vec<Example> = (0..cfg.batch_size)
            .map(|_| {
                let s = &train[rng.random_range(0..train.len())];
                let mut ex = Example::from_sample(s, control);
                let u = rng.random::<f64>();
                if u < cfg.token_dropout {
                    ex.tokens = PromptTokens::null();
                } else if u < cfg.token_dropout + cfg.class_prompt_rate {
                    ex.tokens = class_prompt(&ex.tokens);
                }
                ex
            })
            .collect();
        let loss = train_step(model, schedule, &batch, &adam, cfg.clip_norm, rng)?;
        detector.observe(step, loss)?;
        acc += loss;
        acc_n += 1;
        if (step + 1) % cfg.log_every == 0 || step + 1 == steps {
            curve.push((step + 1, acc / acc_n as f64));
            log::info!(
                "train[{}] step {} loss {:.4}",
                control.map(|k| k.name()).unwrap_or("base"),
                step + 1,
                acc / acc_n as f64
            );
            acc = 0.0;
            acc_n = 0;
        }
    }
    Ok(curve)
}

/// Train the base denoiser on the corpus, then each attached control branch
/// with the base frozen.
pub fn pretrain(model: &mut Denoiser, corpus: &Corpus, schedule: &NoiseSchedule, cfg: &TrainConfig, seed: u64) -> Result<TrainReport> {
    cfg.validate()?;
    let (train, held) = corpus.split(cfg.holdout_fraction);
    if train.is_empty() {
        return Err(Error::InvalidArgument("corpus has no training samples".into()));
    }
    if corpus.resolution != model.config.resolution {
        return Err(Error::InvalidArgument(format!(
            "corpus resolution {} differs from model resolution {}",
            corpus.resolution, model.config.resolution
        )));
    }
    let mut rng = child_rng(seed, "pretrain");
    let mut report = TrainReport::default();

    model.set_trainable(&[ParamGroup::Base]);
    model.reset_optimizer();
    report.base_curve = run_phase(model, schedule, &train.samples, None, cfg.steps, cfg.lr, cfg, &mut rng)?;

    for kind in model.control_kinds() {
        model.set_trainable(&[ParamGroup::Control(kind)]);
        model.reset_optimizer();
        let curve = run_phase(model, schedule, &train.samples, Some(kind), cfg.control_steps, cfg.control_lr, cfg, &mut rng)?;
        report.control_curves.push((kind, curve));
    }
    model.set_trainable(&[ParamGroup::Base]);
    model.reset_optimizer();

    let held_examples: Vec<Example> = held.samples.iter().map(|s| Example::from_sample(s, None)).collect();
    report.heldout_loss = denoising_loss(model, schedule, &held_examples, 4, seed)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detector_trips_after_patience() {
        let mut d = DivergenceDetector {
            patience: 3,
            ..Default::default()
        };
        d.observe(0, 1.0).unwrap();
        d.observe(1, 20.0).unwrap();
        d.observe(2, 20.0).unwrap();
        assert!(d.observe(3, 20.0).is_err());
        let mut d = DivergenceDetector::default();
        assert!(d.observe(0, f64::NAN).is_err());
    }
}
