//! `remelody`: build fragment databases, compose melodies for lyrics,
//! inspect lyric structure and score melodies.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: arguments, files or data the user supplied.
    #[error("{0}")]
    User(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<remelody_core::Error> for CliError {
    fn from(e: remelody_core::Error) -> Self {
        CliError::User(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "remelody",
    version,
    about = "Lyric-to-melody composition from a database of generated fragments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the melody model on a MIDI corpus and build the fragment database.
    BuildDb(BuildDbArgs),
    /// Compose a melody for a lyric file.
    Compose(ComposeArgs),
    /// Print the repetition structure of a lyric file.
    Recognize(RecognizeArgs),
    /// Score MIDI melodies with distinct-n and entropy-n.
    Eval(EvalArgs),
    /// Write synthetic seed melodies as MIDI files.
    GenCorpus(GenCorpusArgs),
    /// Print the effective configuration.
    Config(ConfigArgs),
}

#[derive(Args)]
struct Common {
    /// key = value settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct BuildDbArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of .mid/.midi seed melodies.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    db_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ComposeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    lyrics: PathBuf,
    /// Chord progression, e.g. "C G Am F".
    #[arg(long)]
    chords: String,
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// auto, major or minor.
    #[arg(long)]
    tonality: Option<String>,
    /// english, chinese or numeric.
    #[arg(long)]
    language: Option<String>,
    /// Granularity: repeats must be longer than this many lines.
    #[arg(long)]
    g: Option<usize>,
}

#[derive(Args)]
pub struct RecognizeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lyrics: PathBuf,
    #[arg(long)]
    language: Option<String>,
    #[arg(long)]
    g: Option<usize>,
    /// File of 1-based chorus line numbers to score against.
    #[arg(long)]
    gold: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(required = true)]
    midi: Vec<PathBuf>,
    /// n-gram orders to report.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    n: Vec<usize>,
}

#[derive(Args)]
pub struct GenCorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 16)]
    bars: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
pub struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
}

fn load_config(path: Option<&PathBuf>) -> Result<Config, CliError> {
    path.map_or_else(|| Ok(Config::default()), |p| Config::load(p))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildDb(a) => {
            let mut config = load_config(a.common.config.as_ref())?;
            if let Some(seed) = a.common.seed {
                config.seed = seed;
            }
            commands::build_db(&a, &config)
        }
        Command::Compose(a) => {
            let mut config = load_config(a.common.config.as_ref())?;
            if let Some(seed) = a.common.seed {
                config.seed = seed;
            }
            if let Some(t) = &a.tonality {
                config.set("tonality", t)?;
            }
            if let Some(l) = &a.language {
                config.set("language", l)?;
            }
            if let Some(g) = a.g {
                config.granularity = g;
            }
            if let Some(db) = &a.db {
                config.db = Some(db.clone());
            }
            if let Some(model) = &a.model {
                config.model = Some(model.clone());
            }
            commands::compose(&a, &config)
        }
        Command::Recognize(a) => {
            let mut config = load_config(a.config.as_ref())?;
            if let Some(l) = &a.language {
                config.set("language", l)?;
            }
            if let Some(g) = a.g {
                config.granularity = g;
            }
            commands::recognize(&a, &config)
        }
        Command::Eval(a) => commands::eval(&a),
        Command::GenCorpus(a) => commands::gen_corpus(&a),
        Command::Config(a) => {
            print!("{}", load_config(a.config.as_ref())?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("remelody: {e}");
            match e {
                CliError::User(_) => ExitCode::from(1),
                CliError::Internal(_) => ExitCode::from(2),
            }
        }
    }
}
