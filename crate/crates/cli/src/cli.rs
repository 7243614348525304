//! Argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{Options, Source};

#[derive(Debug, Parser)]
#[command(name = "synthforge", version, about = "Multi-agent HLS design generation")]
pub struct Cli {
    /// Workspace directory.
    #[arg(long, short = 'w', global = true, default_value = ".")]
    pub workspace: PathBuf,
    /// Configuration file instead of `<workspace>/config.yaml`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More logging; repeat for more.
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the workspace layout and starter files.
    Init,
    /// Index sources and write the literature review.
    Gather(RunFlags),
    /// Run design trials from the existing review.
    Design(DesignFlags),
    /// Gather, then design.
    Run(DesignFlags),
    /// Run the automated checks on an emitted design directory.
    Check { dir: PathBuf },
    /// Re-execute a recorded workspace and compare every emitted file.
    Replay { dir: PathBuf },
}

#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    /// Record every model exchange under `<workspace>/transcripts/`.
    #[arg(long, conflicts_with = "replay")]
    pub record: bool,
    /// Serve completions from the transcripts of a recorded workspace.
    #[arg(long, value_name = "DIR", conflicts_with = "script")]
    pub replay: Option<PathBuf>,
    /// Serve completions from a JSON script keyed by agent.
    #[arg(long, value_name = "FILE")]
    pub script: Option<PathBuf>,
    /// Run independent agents concurrently.
    #[arg(long, conflicts_with = "script")]
    pub parallel: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DesignFlags {
    #[command(flatten)]
    pub run: RunFlags,
    /// Independent design trials; overrides the config.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: Option<u64>,
    /// Design without a literature review.
    #[arg(long)]
    pub no_review: bool,
}

impl Cli {
    pub fn options(&self, flags: Option<&RunFlags>) -> Options {
        let mut o = Options { workspace: self.workspace.clone(), config: self.config.clone(), ..Options::default() };
        if let Some(f) = flags {
            o.record = f.record;
            o.parallel = f.parallel;
            o.source = match (&f.replay, &f.script) {
                (Some(d), _) => Source::Replay(d.clone()),
                (None, Some(s)) => Source::Script(s.clone()),
                (None, None) => Source::Live,
            };
        }
        o
    }
}
