use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use svcnet_cli::{Pipeline, PipelineError, PlotKind, RunConfig, Stage};

#[derive(Debug, Parser)]
#[command(name = "svcnet", version, about = "Speaker voice code pipeline")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for the corpus, models and reports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its latent sidecar.
    Gen,
    /// Train one stage.
    Train {
        /// ppc, svc or rec
        #[arg(long)]
        stage: String,
    },
    /// Ablation, word-subset and stability reports.
    Eval,
    /// Export plot data as CSV.
    Plot {
        /// ppc_scatter, svc_trajectory or svc_halves
        #[arg(long)]
        kind: String,
    },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        networks: usize,
    },
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().map_err(PipelineError::Usage)?;
    let pipeline = Pipeline::new(config, cli.out);

    match cli.command {
        Command::Gen => {
            let s = pipeline.gen()?;
            println!(
                "wrote {}: {} frames, {} utterances, {} speakers",
                pipeline.corpus_path().display(),
                s.frames,
                s.utterances,
                s.speakers
            );
        }
        Command::Train { stage } => {
            let stage: Stage = stage.parse()?;
            let written = pipeline.train(stage)?;
            println!("{stage:?}: wrote {} model file(s)", written.len());
        }
        Command::Eval => {
            let outcome = pipeline.eval()?;
            for (flags, rate) in &outcome.ablation.rows {
                println!("flags={flags} error_rate={rate:.4}");
            }
            for row in &outcome.subsets {
                println!("source={} error_rate={:.4}", row.source, row.error_rate());
            }
        }
        Command::Plot { kind } => {
            let kind: PlotKind = kind.parse()?;
            println!("wrote {}", pipeline.plot(kind)?.display());
        }
        Command::Gradcheck { networks } => {
            let check = svcnet::net::random_gradient_check(networks, pipeline.config.seed, 1e-6, 1e-8)?;
            println!(
                "networks={} max_relative_error={:e}",
                check.networks, check.max_error
            );
            if !(check.max_error < 1e-4) {
                return Err(PipelineError::Model(svcnet::Error::Data(format!(
                    "gradient check failed: {:e}",
                    check.max_error
                ))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
