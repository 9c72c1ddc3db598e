use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid note: {0}")]
    InvalidNote(String),

    #[error("invalid time base: {0}")]
    InvalidTimeBase(String),

    #[error("overlapping notes at tick {onset}: previous note ends at {previous_end}")]
    Overlap { onset: u32, previous_end: u32 },

    #[error("cannot parse pitch name {0:?}")]
    PitchName(String),

    #[error("cannot parse chord name {0:?}")]
    ChordName(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid chord pattern: {0}")]
    Pattern(String),

    #[error("lyric line {line}: {reason}")]
    Lyric { line: usize, reason: String },

    #[error("database record {record}: {reason}")]
    Corrupt { record: usize, reason: String },

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: String, expected: u32 },

    #[error("malformed MIDI at byte {offset}: {reason}")]
    Midi { offset: usize, reason: String },

    #[error("no fragment for line {line} (length={length}, mode={mode}, structure={structure}, chords={pattern})")]
    RetrievalExhausted {
        line: usize,
        length: usize,
        mode: String,
        structure: String,
        pattern: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
