//! Lyric-to-melody composition by generation and retrieval.
//!
//! The pipeline has two stages. The creation stage trains a melody language
//! model, lets it continue two-bar windows of seed melodies, and stores the
//! generated one- and two-bar fragments in a [`FragmentDatabase`] keyed by
//! note count, tonality, structure and chords. The re-creation stage reads
//! lyrics, recognizes their repeat structure, and builds a song line by line
//! by retrieving, filtering and re-ranking fragments from the database.

pub mod db;
pub mod error;
pub mod features;
pub mod lm;
pub mod lyrics;
pub mod melody;
pub mod metrics;
pub mod midi;
pub mod recreation;
pub mod synth;

pub use db::{BuildConfig, BuildStats, Fragment, FragmentDatabase};
pub use error::{Error, Result};
pub use features::{ChordSymbol, Mode, Quality, StructureLabel, Tonality};
pub use lm::{MarkovModel, MelodyLm, UniformModel};
pub use lyrics::{Language, LyricLine, LyricSheet, SentimentLexicon};
pub use melody::{Note, NoteToken, TimeBase};
pub use recreation::{ChordProgression, Composer, GuidelineConfig, Song};
