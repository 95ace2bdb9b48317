use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pgsd_core::pipeline::{self, Command, RunConfig};

/// Relightable texture transfer from a few exemplar images onto a mesh.
#[derive(Parser, Debug)]
#[command(name = "pgsd", version)]
struct Cli {
    /// Run configuration (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory shared by all stages.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,
    /// Validate the configuration and print the plan without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Render the procedural training corpus.
    Corpus,
    /// Train the denoiser and its control branches on the corpus.
    Pretrain,
    /// Render exemplar images of the source object.
    RenderExemplars,
    /// Fine-tune the pretrained denoiser on the exemplars.
    Personalize,
    /// Distill a texture onto the target mesh, bake and evaluate it.
    Transfer {
        /// Named ablation preset (for example w/o-controlnet).
        #[arg(long)]
        ablate: Option<String>,
    },
    /// Bake a field checkpoint into texture maps.
    Bake {
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Render a field under the configured and extra environments.
    Relight {
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Score a field checkpoint; `--compare` adds other runs for diversity.
    Eval {
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        compare: Vec<PathBuf>,
    },
    /// Run transfer for several ablation presets (all when none given).
    Ablate { names: Vec<String> },
}

fn to_command(cmd: Cmd) -> Command {
    match cmd {
        Cmd::Corpus => Command::Corpus,
        Cmd::Pretrain => Command::Pretrain,
        Cmd::RenderExemplars => Command::RenderExemplars,
        Cmd::Personalize => Command::Personalize,
        Cmd::Transfer { ablate } => Command::Transfer { ablate },
        Cmd::Bake { field } => Command::Bake { field },
        Cmd::Relight { field } => Command::Relight { field },
        Cmd::Eval { field, compare } => Command::Eval { field, compare },
        Cmd::Ablate { names } => Command::Ablate { names },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = (|| {
        let mut cfg = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        pipeline::run(&to_command(cli.command), &cfg, &cli.out, cli.dry_run)
    })();
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
