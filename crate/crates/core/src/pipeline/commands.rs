//! Command implementations behind the `pgsd` binary. Every command takes the
//! resolved configuration and an output directory; with `dry_run` it only
//! returns the plan.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::metrics::{diversity, MaskedImage};
use super::stages::{
    build_environment, canonical_masked_renders, energy_split, evaluate_field, exemplar_targets, load_target_mesh,
    new_denoiser, render_baked, render_exemplars, run_environment, run_transfer,
};
use super::weights::{denoiser_from_weights, denoiser_to_weights, field_from_weights, field_to_weights, WeightsFile};
use crate::diffusion::{generate_corpus, pretrain, Corpus, Denoiser, TrainConfig};
use crate::distill::{canonical_cameras, render_field, DistillMode, ABLATIONS, CANONICAL_AZIMUTHS};
use crate::error::{Error, Result};
use crate::field::bake;
use crate::personalize::{fine_tune, load_exemplar_dir, prepare_exemplars, save_exemplar_dir, ExemplarSet};
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Corpus,
    Pretrain,
    RenderExemplars,
    Personalize,
    Transfer { ablate: Option<String> },
    Bake { field: Option<PathBuf> },
    Relight { field: Option<PathBuf> },
    Eval { field: Option<PathBuf>, compare: Vec<PathBuf> },
    Ablate { names: Vec<String> },
}

pub const CORPUS_DIR: &str = "corpus";
pub const PRETRAINED: &str = "pretrained.pgsdw";
pub const PERSONALIZED: &str = "personalized.pgsdw";
pub const FIELD_FILE: &str = "field.pgsdw";

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_denoiser(path: &Path) -> Result<(Denoiser, usize)> {
    denoiser_from_weights(&WeightsFile::load(path)?)
}

/// Directory of a transfer run; ablations get a suffix.
pub fn transfer_dir(out: &Path, ablate: Option<&str>) -> PathBuf {
    match ablate {
        None => out.join("transfer"),
        Some(name) => out.join(format!("transfer-{}", name.replace(['/', '.'], "_"))),
    }
}

fn curve_text(header: &str, rows: &[(usize, f64)]) -> String {
    let mut s = format!("{header}\n");
    for (step, loss) in rows {
        let _ = writeln!(s, "{step}\t{loss:.6}");
    }
    s
}

fn load_exemplars(cfg: &RunConfig, out: &Path) -> Result<ExemplarSet> {
    let dir = cfg.exemplar_dir(out);
    let (raw, views) = load_exemplar_dir(&dir)?;
    if raw.is_empty() {
        return Err(Error::MissingArtifact(format!("no exemplar images in {}", dir.display())));
    }
    prepare_exemplars(&raw, cfg.personalize.tune.target_size, views)
}

/// Run a command; returns a human-readable summary (or the plan).
pub fn run(cmd: &Command, cfg: &RunConfig, out: &Path, dry_run: bool) -> Result<String> {
    cfg.validate()?;
    if dry_run {
        return Ok(plan(cmd, cfg, out));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match cmd {
        Command::Corpus => cmd_corpus(cfg, out),
        Command::Pretrain => cmd_pretrain(cfg, out),
        Command::RenderExemplars => cmd_render_exemplars(cfg, out),
        Command::Personalize => cmd_personalize(cfg, out),
        Command::Transfer { ablate } => cmd_transfer(cfg, out, ablate.as_deref()),
        Command::Bake { field } => cmd_bake(cfg, out, field.as_deref()),
        Command::Relight { field } => cmd_relight(cfg, out, field.as_deref()),
        Command::Eval { field, compare } => cmd_eval(cfg, out, field.as_deref(), compare),
        Command::Ablate { names } => cmd_ablate(cfg, out, names),
    }
}

fn plan(cmd: &Command, cfg: &RunConfig, out: &Path) -> String {
    let mut s = String::from("plan (dry run, nothing written):\n");
    let d = out.display();
    let _ = match cmd {
        Command::Corpus => writeln!(s, "  generate {} corpus samples -> {d}/{CORPUS_DIR}", cfg.diffusion.corpus_size),
        Command::Pretrain => writeln!(
            s,
            "  pretrain {} base steps, {} steps per control {:?}, corpus {d}/{CORPUS_DIR} -> {d}/{PRETRAINED}",
            cfg.diffusion.train.steps, cfg.diffusion.train.control_steps, cfg.diffusion.controls
        ),
        Command::RenderExemplars => writeln!(
            s,
            "  render {} views of {} -> {}",
            cfg.personalize.exemplars.count,
            cfg.geometry.source_shape,
            cfg.exemplar_dir(out).display()
        ),
        Command::Personalize => writeln!(
            s,
            "  fine-tune {d}/{PRETRAINED} for {} steps on {} -> {d}/{PERSONALIZED}",
            cfg.personalize.tune.steps,
            cfg.exemplar_dir(out).display()
        ),
        Command::Transfer { ablate } => {
            let mode = match ablate {
                Some(n) => DistillMode::ablation(n).map(|m| m.tag()).unwrap_or_else(|e| e.to_string()),
                None => cfg.distill.mode.tag(),
            };
            writeln!(
                s,
                "  distill mode {mode} for {} steps on {} -> {}",
                cfg.distill.run.steps,
                cfg.geometry.target_mesh,
                transfer_dir(out, ablate.as_deref()).display()
            )
        }
        Command::Bake { .. } => writeln!(s, "  bake field at {0}x{0} -> maps/", cfg.field.bake_resolution),
        Command::Relight { .. } => writeln!(
            s,
            "  relight under {} and {:?}",
            cfg.lighting.environment, cfg.lighting.relight
        ),
        Command::Eval { compare, .. } => writeln!(s, "  evaluate field at 4 canonical views ({} comparison runs)", compare.len()),
        Command::Ablate { names } => writeln!(s, "  run transfer for ablations {names:?}"),
    };
    let _ = writeln!(s, "resolved config:\n{}", cfg.to_toml());
    s
}

fn cmd_corpus(cfg: &RunConfig, out: &Path) -> Result<String> {
    let corpus = generate_corpus(&cfg.diffusion.corpus, cfg.diffusion.corpus_size, cfg.seed)?;
    let dir = out.join(CORPUS_DIR);
    corpus.save(&dir)?;
    Ok(format!(
        "wrote {} samples to {} (manifest hash {:016x})",
        corpus.len(),
        dir.display(),
        corpus.manifest_hash()
    ))
}

fn cmd_pretrain(cfg: &RunConfig, out: &Path) -> Result<String> {
    let corpus = Corpus::load(&out.join(CORPUS_DIR))?;
    let ckpt = out.join(PRETRAINED);
    let (mut model, start) = if cfg.diffusion.resume && ckpt.exists() {
        let (m, s) = load_denoiser(&ckpt)?;
        log::info!("resuming from {} at step {s}", ckpt.display());
        (m, s)
    } else {
        (new_denoiser(cfg)?, 0)
    };
    let schedule = cfg.diffusion.schedule.build()?;
    let train = TrainConfig {
        // Control branches are only trained from scratch.
        control_steps: if start > 0 { 0 } else { cfg.diffusion.train.control_steps },
        ..cfg.diffusion.train.clone()
    };
    let report = pretrain(&mut model, &corpus, &schedule, &train, derive_seed(cfg.seed, &format!("pretrain@{start}")))?;
    let step = start + train.steps;
    denoiser_to_weights(&mut model, step).save(&ckpt)?;
    let rows: Vec<(usize, f64)> = report.base_curve.iter().map(|(s, l)| (start + s, *l)).collect();
    let loss_path = out.join("pretrain_loss.tsv");
    let mut text = if start > 0 && loss_path.exists() {
        std::fs::read_to_string(&loss_path).map_err(|e| Error::io(&loss_path, e))?
    } else {
        "# step\tloss".to_string() + "\n"
    };
    text.push_str(curve_text("", &rows).trim_start_matches('\n'));
    write(&loss_path, &text)?;
    let mut ctl = String::new();
    for (kind, curve) in &report.control_curves {
        ctl.push_str(&curve_text(&format!("# control {}", kind.name()), curve));
    }
    if !ctl.is_empty() {
        write(&out.join("control_loss.tsv"), &ctl)?;
    }
    write(&out.join("heldout.txt"), &format!("heldout_loss={:.6}\nstep={step}\n", report.heldout_loss))?;
    Ok(format!("pretrained to step {step}; held-out loss {:.4}", report.heldout_loss))
}

fn cmd_render_exemplars(cfg: &RunConfig, out: &Path) -> Result<String> {
    let env = run_environment(cfg)?;
    let set = render_exemplars(cfg, &env)?;
    let dir = cfg.exemplar_dir(out);
    save_exemplar_dir(&dir, &set)?;
    Ok(format!("wrote {} exemplars to {}", set.len(), dir.display()))
}

fn cmd_personalize(cfg: &RunConfig, out: &Path) -> Result<String> {
    let (base, step) = load_denoiser(&out.join(PRETRAINED))?;
    let set = load_exemplars(cfg, out)?;
    let schedule = cfg.diffusion.schedule.build()?;
    let (mut psi, report) = fine_tune(&base, &set, &schedule, &cfg.personalize.tune, derive_seed(cfg.seed, "personalize"))?;
    denoiser_to_weights(&mut psi, step).save(&out.join(PERSONALIZED))?;
    let rows: Vec<(usize, f64)> = report.losses.iter().enumerate().map(|(i, l)| (i + 1, *l)).collect();
    write(&out.join("personalize_loss.tsv"), &curve_text("# step\tloss", &rows))?;
    Ok(format!(
        "personalized on {} exemplars for {} steps -> {}",
        set.len(),
        cfg.personalize.tune.steps,
        out.join(PERSONALIZED).display()
    ))
}

fn cmd_transfer(cfg: &RunConfig, out: &Path, ablate: Option<&str>) -> Result<String> {
    let mut cfg = cfg.clone();
    if let Some(name) = ablate {
        cfg.distill.mode = DistillMode::ablation(name)?;
        cfg.validate()?;
    }
    let (base, _) = load_denoiser(&out.join(PRETRAINED))?;
    if !out.join(PERSONALIZED).exists() {
        log::info!("no personalized checkpoint yet; running personalize first");
        cmd_personalize(&cfg, out)?;
    }
    let (psi, _) = load_denoiser(&out.join(PERSONALIZED))?;
    let exemplars = load_exemplars(&cfg, out)?;
    let mesh = load_target_mesh(&cfg.geometry.target_mesh)?;
    let env = run_environment(&cfg)?;
    let dir = transfer_dir(out, ablate);
    std::fs::create_dir_all(dir.join("snapshots")).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    let snap_cam = canonical_cameras(&cfg.eval_view())[0].clone();
    let mut snapshot = |step: usize, field: &crate::field::TextureField| -> Result<()> {
        let (r, _) = render_field(field, &mesh, &snap_cam, &env);
        r.pixels.save_png8(&dir.join("snapshots").join(format!("step_{step:05}.png")))
    };
    let outcome = run_transfer(
        &cfg,
        &base,
        &psi,
        &exemplars,
        &mesh,
        &env,
        &cfg.distill.mode,
        derive_seed(cfg.seed, "transfer"),
        Some(&mut snapshot),
    )?;
    field_to_weights(&outcome.field)?.save(&dir.join(FIELD_FILE))?;
    write(&dir.join("metrics.log"), &outcome.report.metrics_text())?;
    write(&dir.join("timing.log"), &outcome.report.timing_text())?;
    write(&dir.join("similarity.tsv"), &curve_text("# step\tsimilarity", &outcome.similarity_curve))?;
    finish_field_outputs(&cfg, &dir, &outcome.field, &mesh, &env, &exemplars)
}

/// Bake (when the mesh has UVs), canonical renders and the eval report.
fn finish_field_outputs(
    cfg: &RunConfig,
    dir: &Path,
    field: &crate::field::TextureField,
    mesh: &crate::geometry::TriangleMesh,
    env: &crate::shading::EnvironmentLight,
    exemplars: &ExemplarSet,
) -> Result<String> {
    let mut summary = String::new();
    if mesh.has_uvs() {
        let maps = bake(field, mesh, cfg.field.bake_resolution, cfg.field.dilation_px)?;
        maps.save(&dir.join("maps"))?;
    } else {
        log::warn!("target mesh has no UVs; skipping bake (field checkpoint saved)");
        summary.push_str("bake skipped: mesh has no UVs\n");
    }
    for (cam, az) in canonical_cameras(&cfg.eval_view()).iter().zip(CANONICAL_AZIMUTHS) {
        let (r, _) = render_field(field, mesh, cam, env);
        r.pixels.save_png8(&dir.join("renders").join(format!("view_{az:03.0}.png")))?;
    }
    let report = evaluate_field(
        field,
        mesh,
        env,
        &exemplar_targets(exemplars),
        &cfg.eval_view(),
        cfg.eval.elevation_deg,
        cfg.eval.histogram_bins,
    );
    if !report.all_finite() {
        return Err(Error::Numerical("evaluation produced non-finite scores".into()));
    }
    write(&dir.join("eval.txt"), &report.to_text())?;
    summary.push_str(&report.to_text());
    Ok(summary)
}

fn field_path(out: &Path, field: Option<&Path>) -> PathBuf {
    field.map(Path::to_path_buf).unwrap_or_else(|| transfer_dir(out, None).join(FIELD_FILE))
}

fn cmd_bake(cfg: &RunConfig, out: &Path, field: Option<&Path>) -> Result<String> {
    let path = field_path(out, field);
    let field = field_from_weights(&WeightsFile::load(&path)?)?;
    let mesh = load_target_mesh(&cfg.geometry.target_mesh)?;
    if !mesh.has_uvs() {
        return Err(Error::InvalidMesh("target mesh has no UVs; nothing to bake".into()));
    }
    let maps = bake(&field, &mesh, cfg.field.bake_resolution, cfg.field.dilation_px)?;
    let dir = path.parent().unwrap_or(out).join("maps");
    maps.save(&dir)?;
    Ok(format!(
        "baked {0}x{0} maps to {1} (overlap {2:.2}%)",
        maps.resolution,
        dir.display(),
        100.0 * maps.overlap_fraction
    ))
}

fn cmd_relight(cfg: &RunConfig, out: &Path, field: Option<&Path>) -> Result<String> {
    let path = field_path(out, field);
    let field = field_from_weights(&WeightsFile::load(&path)?)?;
    let mesh = load_target_mesh(&cfg.geometry.target_mesh)?;
    let base_dir = path.parent().unwrap_or(out).join("relight");
    let maps = if mesh.has_uvs() {
        Some(bake(&field, &mesh, cfg.field.bake_resolution, cfg.field.dilation_px)?)
    } else {
        None
    };
    let mut report = String::from("# environment\tpower\tmean_diffuse\tmean_specular\n");
    let envs = std::iter::once(&cfg.lighting.environment).chain(&cfg.lighting.relight);
    let cams = canonical_cameras(&cfg.eval_view());
    for name in envs {
        let env = build_environment(name, cfg.lighting.lights, cfg.seed)?;
        let dir = base_dir.join(name.replace(['/', '.'], "_"));
        let (mut dsum, mut ssum) = (0.0, 0.0);
        for (cam, az) in cams.iter().zip(CANONICAL_AZIMUTHS) {
            let img = match &maps {
                Some(m) => render_baked(m, &mesh, cam, &env).pixels,
                None => render_field(&field, &mesh, cam, &env).0.pixels,
            };
            img.save_png8(&dir.join(format!("view_{az:03.0}.png")))?;
            let (d, s) = energy_split(&field, &mesh, cam, &env);
            dsum += d;
            ssum += s;
        }
        let n = cams.len() as f64;
        let _ = writeln!(report, "{name}\t{:.6}\t{:.6}\t{:.6}", env.total_power(), dsum / n, ssum / n);
    }
    write(&base_dir.join("energy.tsv"), &report)?;
    Ok(report)
}

fn cmd_eval(cfg: &RunConfig, out: &Path, field: Option<&Path>, compare: &[PathBuf]) -> Result<String> {
    let path = field_path(out, field);
    let field = field_from_weights(&WeightsFile::load(&path)?)?;
    let mesh = load_target_mesh(&cfg.geometry.target_mesh)?;
    let env = run_environment(cfg)?;
    let exemplars = load_exemplars(cfg, out)?;
    let view = cfg.eval_view();
    let mut report = evaluate_field(
        &field,
        &mesh,
        &env,
        &exemplar_targets(&exemplars),
        &view,
        cfg.eval.elevation_deg,
        cfg.eval.histogram_bins,
    );
    if !compare.is_empty() {
        let mut runs: Vec<Vec<MaskedImage>> = vec![canonical_masked_renders(&field, &mesh, &env, &view)];
        for p in compare {
            let other = field_from_weights(&WeightsFile::load(p)?)?;
            runs.push(canonical_masked_renders(&other, &mesh, &env, &view));
        }
        report.diversity = Some(diversity(&runs));
    }
    if !report.all_finite() {
        return Err(Error::Numerical("evaluation produced non-finite scores".into()));
    }
    let text = report.to_text();
    write(&path.parent().unwrap_or(out).join("eval.txt"), &text)?;
    Ok(text)
}

fn cmd_ablate(cfg: &RunConfig, out: &Path, names: &[String]) -> Result<String> {
    let names: Vec<String> = if names.is_empty() {
        ABLATIONS.iter().map(|s| s.to_string()).collect()
    } else {
        names.to_vec()
    };
    for n in &names {
        DistillMode::ablation(n)?;
    }
    let mut table = String::from("# ablation\tmode\tappearance_similarity\tnormal_alignment\n");
    for name in &names {
        cmd_transfer(cfg, out, Some(name))?;
        let dir = transfer_dir(out, Some(name));
        let text = std::fs::read_to_string(dir.join("eval.txt")).map_err(|e| Error::io(dir.join("eval.txt"), e))?;
        let get = |key: &str| {
            text.lines()
                .find_map(|l| l.strip_prefix(&format!("{key}=")))
                .unwrap_or("nan")
                .to_string()
        };
        let _ = writeln!(
            table,
            "{name}\t{}\t{}\t{}",
            DistillMode::ablation(name)?.tag(),
            get("appearance_similarity"),
            get("normal_alignment")
        );
    }
    write(&out.join("ablation.tsv"), &table)?;
    Ok(table)
}
