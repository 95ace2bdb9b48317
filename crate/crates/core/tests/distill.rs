mod common;

use common::{
    distill_config, distill_state, noise_tensor, normal_control, schedule, small_field, test_denoiser, three_point_env,
};
use pgsd_core::diffusion::{guided_noise, Conditioning, ParamGroup, PromptTokens};
use pgsd_core::distill::{distill, pgsd_gradient, sds_gradient, DistillMode, DistillState, ABLATIONS};
use pgsd_core::geometry::{primitives, ConditionKind};
use pgsd_core::image::{Image, Mask};
use pgsd_core::personalize::{fine_tune, prepare_exemplars, PersonalizeConfig};
use pgsd_core::rng::rng_from_seed;

#[test]
fn identical_estimators_give_zero_pgsd_gradient() {
    let psi = test_denoiser(5);
    let mut phi = psi.clone();
    // A fresh camera encoder outputs exactly zero.
    phi.add_camera_encoder(&mut rng_from_seed(9));
    let tokens = PromptTokens::parse("a photo of [V] object").unwrap();
    let ctl = normal_control(1);
    let cam = [0.5; 16];
    let g = pgsd_gradient(&psi, &phi, &schedule(), &noise_tensor(2), &tokens, 400, Some(&ctl), Some(ConditionKind::Normal), &cam, 1.0)
        .unwrap();
    assert!(g.data.iter().all(|v| *v == 0.0));
    assert!(pgsd_gradient(&psi, &phi, &schedule(), &noise_tensor(2), &tokens, 400, None, Some(ConditionKind::Normal), &cam, 1.0).is_err());
}

#[test]
fn perfect_noise_prediction_gives_zero_sds_gradient() {
    let psi = test_denoiser(6);
    let tokens = PromptTokens::parse("a photo of a red cube").unwrap();
    let x = noise_tensor(3);
    let ctl = normal_control(4);
    for w in [1.0, 0.0, 7.5] {
        let eps = guided_noise(&psi, &x, &tokens, &PromptTokens::null(), 500, Some(&ctl), None, w).unwrap();
        let g = sds_gradient(&psi, &schedule(), &x, &tokens, 500, &eps, Some(&ctl), w).unwrap();
        assert!(g.data.iter().all(|v| *v == 0.0), "weight {w}");
    }
}

#[test]
fn guidance_endpoints_match_single_passes() {
    let m = test_denoiser(7);
    let tokens = PromptTokens::parse("a photo of a blue sphere").unwrap();
    let x = noise_tensor(5);
    let run = |tok: &PromptTokens| {
        m.predict(&x, &Conditioning { tokens: tok, t: 250, control: None, camera: None }).unwrap()
    };
    assert_eq!(guided_noise(&m, &x, &tokens, &PromptTokens::null(), 250, None, None, 1.0).unwrap(), run(&tokens));
    assert_eq!(guided_noise(&m, &x, &tokens, &PromptTokens::null(), 250, None, None, 0.0).unwrap(), run(&PromptTokens::null()));
    assert_ne!(run(&tokens), run(&PromptTokens::null()));
}

#[test]
fn zero_steps_change_nothing() {
    let mut s = distill_state("full", 0);
    let (field, phi) = (s.field.fingerprint(), s.phi.fingerprint(None));
    let report = distill(&mut s, 0, None).unwrap();
    assert!(report.records.is_empty());
    assert_eq!((s.field.fingerprint(), s.phi.fingerprint(None), s.step), (field, phi, 0));

    let base = test_denoiser(1);
    let img = Image::filled(20, 20, 3, 0.4);
    let set = prepare_exemplars(&[(img, Mask::new(20, 20, true))], 16, None).unwrap();
    let cfg = PersonalizeConfig {
        steps: 0,
        target_size: 16,
        ..PersonalizeConfig::default()
    };
    let (mut tuned, report) = fine_tune(&base, &set, &schedule(), &cfg, 0).unwrap();
    assert!(report.losses.is_empty());
    assert_eq!(tuned.fingerprint(None), base.clone().fingerprint(None));
}

#[test]
fn camera_only_estimator_keeps_base_weights() {
    let mut s = distill_state("full", 1);
    let base_before = s.phi.fingerprint(Some(ParamGroup::Base));
    let cam_before = s.phi.fingerprint(Some(ParamGroup::Camera));
    let psi_before = s.psi.fingerprint(None);
    let field_before = s.field.fingerprint();
    let mut snapshots = 0;
    let mut obs = |_: &DistillState| -> pgsd_core::Result<()> {
        snapshots += 1;
        Ok(())
    };
    let report = distill(&mut s, 4, Some(&mut obs)).unwrap();
    assert_eq!(report.records.len(), 4);
    // Start, steps 2 and 4.
    assert_eq!(snapshots, 3);
    assert_eq!(s.phi.fingerprint(Some(ParamGroup::Base)), base_before);
    assert_ne!(s.phi.fingerprint(Some(ParamGroup::Camera)), cam_before);
    assert_eq!(s.psi.fingerprint(None), psi_before);
    assert_ne!(s.field.fingerprint(), field_before);
}

#[test]
fn lora_kept_ablation_trains_estimator_base() {
    let mut s = distill_state("lora-kept", 1);
    let before = s.phi.fingerprint(Some(ParamGroup::Base));
    distill(&mut s, 2, None).unwrap();
    assert_ne!(s.phi.fingerprint(Some(ParamGroup::Base)), before);
}

#[test]
fn every_ablation_runs_and_is_deterministic() {
    for name in ABLATIONS {
        if DistillMode::ablation(name).unwrap().use_control.kind() == Some(ConditionKind::Depth) {
            // The small test model only carries a normal branch.
            continue;
        }
        let mut a = distill_state(name, 4);
        let mut b = distill_state(name, 4);
        let ra = distill(&mut a, 2, None).unwrap();
        let rb = distill(&mut b, 2, None).unwrap();
        assert_eq!(ra.metrics_text(), rb.metrics_text(), "{name}");
        assert_eq!(a.field, b.field, "{name}");
        assert!(ra.records.iter().all(|r| r.grad_sq.is_finite()));
    }
}

#[test]
fn missing_control_branch_is_reported() {
    let base = test_denoiser(1);
    let r = DistillState::new(
        small_field(3),
        test_denoiser(2),
        &base,
        primitives::icosphere(1),
        three_point_env(8, 0),
        schedule(),
        DistillMode::ablation("depth-controlnet").unwrap(),
        distill_config(1),
        0,
    );
    assert!(matches!(r, Err(pgsd_core::Error::MissingArtifact(_))));
}
