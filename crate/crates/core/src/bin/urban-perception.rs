use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use urban_perception::pipeline::{self, PipelineError, RunConfig};

#[derive(Parser)]
#[command(version, about = "Street imagery perception models checked against participatory mapping")]
struct Cli {
    /// Run configuration (JSON). Not used by `synth`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config or synth spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check input tables and write validation.csv.
    Validate,
    /// Generate a synthetic bundle from a spec file.
    Synth {
        /// Synthetic spec (JSON); `{}` gives the defaults.
        #[arg(long)]
        spec: PathBuf,
    },
    /// VIF screen, model training and explanations.
    Train,
    /// Buffer scores, agreement classes and hotspots.
    Align,
    /// Context covariates, contrasts and seasonality.
    Context,
    /// Write manifest.json over the output directory.
    Report,
    /// All stages in order.
    Run,
}

fn load(cli: &Cli) -> Result<(RunConfig, PathBuf), PipelineError> {
    let path = cli.config.as_deref().ok_or_else(|| PipelineError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_path());
    Ok((cfg, out))
}

fn run(cli: &Cli) -> Result<String, PipelineError> {
    if let Command::Synth { spec } = &cli.command {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("bundle"));
        let b = pipeline::cmd_synth(spec, &out, cli.seed)?;
        return Ok(format!("wrote {} images, {} ratings, {} points to {}", b.images.len(), b.ratings.len(), b.ppgis.len(), out.display()));
    }
    let (cfg, out) = load(cli)?;
    let out: &Path = &out;
    Ok(match cli.command {
        Command::Validate => {
            let report = pipeline::cmd_validate(&cfg, out)?;
            format!("clean: {} warning(s)", report.all().count())
        }
        Command::Train => {
            let t = pipeline::cmd_train(&cfg, out)?;
            format!("test MAE {:.4} (baseline {:.4}), {} trees", t.test_metrics.mae, t.baseline_metrics.mae, t.model.trees.len())
        }
        Command::Align => format!("{} points classified", pipeline::cmd_align(&cfg, out)?.len()),
        Command::Context => format!("{} context samples", pipeline::cmd_context(&cfg, out)?.len()),
        Command::Report => format!("{} files in manifest", pipeline::cmd_report(&cfg, out)?.files.len()),
        Command::Run => format!("{} files in manifest", pipeline::cmd_run(&cfg, out)?.files.len()),
        Command::Synth { .. } => unreachable!(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
