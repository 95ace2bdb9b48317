use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tiny_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.toml")
}

fn pgsd(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgsd"))
        .arg("--config")
        .arg(tiny_config())
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = pgsd(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn run_pipeline(out: &Path, seed: &str) {
    for cmd in ["corpus", "pretrain", "render-exemplars", "personalize", "transfer"] {
        ok(out, &["--seed", seed, cmd]);
    }
}

fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    for cmd in ["corpus", "pretrain", "transfer", "ablate"] {
        let text = ok(&out, &["--dry-run", cmd]);
        assert!(text.starts_with("plan (dry run"), "{text}");
        assert!(text.contains("[distill.mode]"));
    }
    assert!(!out.exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "bogus = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pgsd"))
        .args(["--config", bad.to_str().unwrap(), "corpus"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(pgsd(dir.path(), &["transfer", "--ablate", "nope"]).status.code(), Some(2));
    assert_eq!(pgsd(&dir.path().join("empty"), &["personalize"]).status.code(), Some(3));
    assert_eq!(pgsd(&dir.path().join("empty"), &["eval"]).status.code(), Some(3));
}

#[test]
fn reruns_are_bitwise_identical_and_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    run_pipeline(&a, "1");
    run_pipeline(&b, "1");
    run_pipeline(&c, "2");
    for file in [
        "pretrained.pgsdw",
        "personalized.pgsdw",
        "pretrain_loss.tsv",
        "transfer/field.pgsdw",
        "transfer/metrics.log",
        "transfer/similarity.tsv",
        "transfer/eval.txt",
    ] {
        assert_eq!(bytes(a.join(file)), bytes(b.join(file)), "{file} differs between reruns");
    }
    assert_ne!(bytes(a.join("transfer/field.pgsdw")), bytes(c.join("transfer/field.pgsdw")));

    let other = c.join("transfer/field.pgsdw");
    let text = ok(&a, &["--seed", "1", "eval", "--compare", other.to_str().unwrap()]);
    let div: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("diversity="))
        .expect("diversity line")
        .parse()
        .unwrap();
    assert!(div > 0.0, "{text}");
}

#[test]
fn full_command_set_produces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    run_pipeline(out, "0");
    for f in [
        "corpus/manifest.tsv",
        "exemplars/cameras.toml",
        "heldout.txt",
        "control_loss.tsv",
        "transfer/config.toml",
        "transfer/timing.log",
        "transfer/maps/albedo.png",
        "transfer/maps/roughness.png",
        "transfer/maps/metallic.png",
        "transfer/renders/view_045.png",
        "transfer/renders/view_315.png",
        "transfer/snapshots/step_00000.png",
        "transfer/snapshots/step_00004.png",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    ok(out, &["bake"]);
    let energy = ok(out, &["relight"]);
    assert!(energy.contains("uniform"));
    assert!(out.join("transfer/relight/uniform/view_135.png").exists());

    ok(out, &["transfer", "--ablate", "w/o-controlnet"]);
    let ablated = out.join("transfer-w_o-controlnet");
    let cfg = std::fs::read_to_string(ablated.join("config.toml")).unwrap();
    assert!(cfg.contains("use_control = \"none\""), "{cfg}");
    assert!(std::fs::read_to_string(ablated.join("metrics.log")).unwrap().contains("mode=pgsd-noctl"));
}
