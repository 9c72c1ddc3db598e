//! Song re-creation: per-line retrieval from the fragment database, guideline
//! filtering, language-model re-ranking, melody sharing between repeated
//! lines, concatenation and polish.

mod compose;
pub mod pattern;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::db::{Fragment, FragmentDatabase};
use crate::error::{Error, Result};
use crate::features::{chord_string, parse_chords, ChordSymbol, StructureLabel, Tonality};
use crate::lm::MelodyLm;
use crate::lyrics::{LyricOptions, LyricSheet};
use crate::melody::{tokenize_from, Note, NoteToken, TimeBase};

pub use compose::Composer;
pub use pattern::{build_chord_regex, ChordPattern};

/// User-designated chords, cycled over the whole song.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChordProgression {
    chords: Vec<ChordSymbol>,
}

impl ChordProgression {
    pub fn new(chords: Vec<ChordSymbol>, tonality: &Tonality) -> Result<Self> {
        if chords.is_empty() {
            return Err(Error::Empty("chord progression"));
        }
        let diatonic = tonality.diatonic_chords();
        if let Some(c) = chords.iter().find(|c| !diatonic.contains(c)) {
            return Err(Error::Config(format!("chord {c} is not diatonic in {tonality}")));
        }
        Ok(ChordProgression { chords })
    }

    /// Space-separated chord names, e.g. `"C G Am F"`.
    pub fn parse(text: &str, tonality: &Tonality) -> Result<Self> {
        Self::new(parse_chords(text)?, tonality)
    }

    pub fn chords(&self) -> &[ChordSymbol] {
        &self.chords
    }
}

impl fmt::Display for ChordProgression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&chord_string(&self.chords))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidelineConfig {
    /// Allowed range for the song's first note (MIDI numbers, inclusive).
    pub first_note_low: u8,
    pub first_note_high: u8,
    /// Leaps between fragments must be strictly smaller than this.
    pub max_leap: u8,
    /// Preferred resolutions: pitch class -> pitch classes that may follow.
    pub tendency: BTreeMap<u8, BTreeSet<u8>>,
    pub tendency_bonus: f64,
    pub top_k: usize,
    pub melisma_prob: f64,
    pub max_extra_notes: usize,
}

impl Default for GuidelineConfig {
    fn default() -> Self {
        GuidelineConfig {
            first_note_low: 55,
            first_note_high: 65,
            max_leap: 8,
            tendency: BTreeMap::from([(11, BTreeSet::from([0])), (5, BTreeSet::from([4]))]),
            tendency_bonus: 0.5,
            top_k: 5,
            melisma_prob: 0.1,
            max_extra_notes: 2,
        }
    }
}

impl GuidelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.first_note_low >= self.first_note_high || self.first_note_high > 127 {
            return Err(Error::Config(format!(
                "first-note range {}..={} is empty or out of MIDI range",
                self.first_note_low, self.first_note_high
            )));
        }
        if self.max_leap == 0 {
            return Err(Error::Config("max_leap must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.melisma_prob) {
            return Err(Error::Config(format!(
                "melisma_prob {} not in [0, 1]",
                self.melisma_prob
            )));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if !self.tendency_bonus.is_finite() {
            return Err(Error::Config("tendency_bonus must be finite".into()));
        }
        if self.tendency.iter().any(|(k, v)| *k > 11 || v.iter().any(|p| *p > 11)) {
            return Err(Error::Config(
                "tendency table entries must be pitch classes 0..=11".into(),
            ));
        }
        Ok(())
    }

    fn tendency_holds(&self, from: u8, to: u8) -> bool {
        self.tendency.get(&(from % 12)).is_some_and(|s| s.contains(&(to % 12)))
    }
}

/// Everything placed so far while composing one song.
#[derive(Debug, Clone)]
pub struct CompositionState {
    /// Notes in absolute ticks, in order.
    pub context: Vec<Note>,
    pub context_tokens: Vec<NoteToken>,
    pub last_chord: Option<ChordSymbol>,
    /// Index into the progression of the chord the melody currently rests on.
    pub position: usize,
    pub rest_samples: Vec<u32>,
    pub rng: ChaCha8Rng,
}

impl CompositionState {
    pub fn new(seed: u64) -> Self {
        CompositionState {
            context: Vec::new(),
            context_tokens: Vec::new(),
            last_chord: None,
            position: 0,
            rest_samples: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn context_end(&self) -> u32 {
        self.context.last().map_or(0, Note::end)
    }

    pub fn last_pitch(&self) -> Option<u8> {
        self.context.last().map(|n| n.pitch)
    }

    fn extend(&mut self, placed: &[Note], tb: &TimeBase) -> Result<()> {
        let tokens = tokenize_from(placed, self.context_end(), tb)?;
        self.context.extend_from_slice(placed);
        self.context_tokens.extend(tokens);
        Ok(())
    }
}

fn leap(a: u8, b: u8) -> u8 {
    a.abs_diff(b)
}

/// Keeps candidates that obey the hard guidelines: a first note within the
/// configured range at the start of the song, otherwise a leap from the
/// context's last note smaller than `max_leap`.
pub fn filter_candidates<'f>(
    candidates: Vec<&'f Fragment>,
    state: &CompositionState,
    cfg: &GuidelineConfig,
    is_song_start: bool,
) -> Vec<&'f Fragment> {
    let mut candidates = candidates;
    if is_song_start {
        candidates.retain(|f| (cfg.first_note_low..=cfg.first_note_high).contains(&f.first_pitch()));
    } else if let Some(last) = state.last_pitch() {
        candidates.retain(|f| leap(f.first_pitch(), last) < cfg.max_leap);
    }
    candidates
}

/// Rest before the next fragment: the mean of the observed rests on the
/// sixteenth grid, at most half a bar. `None` at the start of the song.
pub fn planned_rest(state: &CompositionState, tb: &TimeBase) -> Option<u32> {
    if state.context.is_empty() {
        return None;
    }
    if state.rest_samples.is_empty() {
        return Some(0);
    }
    let sum: u64 = state.rest_samples.iter().map(|&r| r as u64).sum();
    let mean = (sum as f64 / state.rest_samples.len() as f64).round() as u32;
    Some(tb.quantize(mean).min(tb.bar_ticks() / 2))
}

/// Moves `notes` so the first one starts at `onset`, keeping relative timing.
pub fn place_at(notes: &[Note], onset: u32) -> Vec<Note> {
    let Some(first) = notes.first() else {
        return Vec::new();
    };
    notes.iter().map(|n| n.shifted(n.onset - first.onset + onset)).collect()
}

/// Places `notes` after the context using the planned rest and records the
/// realized rest. Returns the placed notes.
pub fn concatenate(state: &mut CompositionState, notes: &[Note], tb: &TimeBase) -> Vec<Note> {
    match planned_rest(state, tb) {
        None => place_at(notes, 0),
        Some(r) => {
            state.rest_samples.push(r);
            place_at(notes, state.context_end() + r)
        }
    }
}

fn tendency_bonus(cfg: &GuidelineConfig, last: Option<u8>, first: u8) -> f64 {
    match last {
        Some(p) if cfg.tendency_holds(p, first) => cfg.tendency_bonus,
        _ => 0.0,
    }
}

/// Picks uniformly among the `k` best-scored items; ties in score keep the
/// input order.
fn pick_top_k<T: Copy, R: Rng>(mut scored: Vec<(f64, T)>, k: usize, rng: &mut R) -> Option<T> {
    if scored.is_empty() {
        return None;
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let k = k.min(scored.len()).max(1);
    Some(scored[rng.gen_range(0..k)].1)
}

/// Scores each candidate by the model's log-probability of it following the
/// context (placed after `rest` ticks of silence), adds the tendency bonus,
/// and samples from the top `cfg.top_k`.
pub fn rerank<'f, M: MelodyLm + ?Sized>(
    model: &M,
    state: &mut CompositionState,
    candidates: &[&'f Fragment],
    cfg: &GuidelineConfig,
    rest: u32,
    tb: &TimeBase,
) -> Result<&'f Fragment> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidates to re-rank"));
    }
    let mut sorted: Vec<&Fragment> = candidates.to_vec();
    sorted.sort_by_key(|f| f.id);
    let last = state.last_pitch();
    let mut scored = Vec::with_capacity(sorted.len());
    for f in sorted {
        let tokens = tokenize_from(&place_at(&f.notes, rest), 0, tb)?;
        let score =
            model.score_continuation(&state.context_tokens, &tokens) + tendency_bonus(cfg, last, f.first_pitch());
        scored.push((score, f));
    }
    Ok(pick_top_k(scored, cfg.top_k, &mut state.rng).expect("non-empty"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relaxation {
    /// The melisma was abandoned because no fragment had the longer length.
    MelismaDropped,
    /// The chord constraint fell back to staying on the tonic.
    TonicPattern,
    /// Fragments of the other structure label were accepted.
    OtherStructure,
    /// The line was composed in this many pieces.
    Split(usize),
    /// No candidate led smoothly into the shared line that follows.
    LookaheadIgnored,
    /// A shared line starts at a different progression position than its
    /// referent did.
    PhaseMismatch,
}

impl fmt::Display for Relaxation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relaxation::MelismaDropped => f.write_str("melisma-dropped"),
            Relaxation::TonicPattern => f.write_str("tonic-pattern"),
            Relaxation::OtherStructure => f.write_str("other-structure"),
            Relaxation::Split(n) => write!(f, "split-{n}"),
            Relaxation::LookaheadIgnored => f.write_str("lookahead-ignored"),
            Relaxation::PhaseMismatch => f.write_str("phase-mismatch"),
        }
    }
}

/// One retrieved fragment as placed in the song.
#[derive(Debug, Clone, PartialEq)]
pub struct PieceReport {
    pub fragment_id: u32,
    pub chords: String,
    /// Pattern the chord string had to match.
    pub pattern: String,
    pub structure: StructureLabel,
    /// Index of the piece's first note in the song.
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolishOutcome {
    /// `original` holds the pitches that were replaced.
    Replaced {
        notes: usize,
        fragment_id: u32,
        original: Vec<u8>,
    },
    NoCandidate {
        notes: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineReport {
    pub text: String,
    pub syllables: usize,
    /// 0 for independent lines, else the 1-based line whose melody is shared.
    pub struct_index: usize,
    pub structure: StructureLabel,
    pub pieces: Vec<PieceReport>,
    pub relaxations: Vec<Relaxation>,
    /// 0-based syllables sung over two notes.
    pub melisma: Vec<usize>,
    pub polish: Option<PolishOutcome>,
    /// Note index range of the line in the song.
    pub start: usize,
    pub end: usize,
    pub last_chord: ChordSymbol,
}

impl LineReport {
    pub fn note_count(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Song {
    pub notes: Vec<Note>,
    /// Syllable text for the first note of each syllable.
    pub lyrics: Vec<Option<String>>,
    pub lines: Vec<LineReport>,
    pub tonality: Tonality,
    pub progression: ChordProgression,
    pub struct_array: Vec<usize>,
    pub chorus: BTreeSet<usize>,
    pub seed: u64,
    pub tb: TimeBase,
}

impl Song {
    pub fn line_notes(&self, line: usize) -> &[Note] {
        let l = &self.lines[line];
        &self.notes[l.start..l.end]
    }

    pub fn to_midi(&self) -> Result<Vec<u8>> {
        crate::midi::write_midi(&self.notes, Some(&self.lyrics), &self.tb)
    }

    /// Line-oriented, tab-separated description of how the song was built.
    pub fn report(&self) -> String {
        let join = |items: Vec<String>| {
            if items.is_empty() {
                "-".to_string()
            } else {
                items.join(";")
            }
        };
        let mut out = String::new();
        let _ = writeln!(out, "tonality\t{}", self.tonality);
        let _ = writeln!(out, "progression\t{}", self.progression);
        let _ = writeln!(out, "seed\t{}", self.seed);
        let _ = writeln!(
            out,
            "struct\t{}",
            self.struct_array
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(" ")
        );
        let _ = writeln!(
            out,
            "chorus\t{}",
            join(self.chorus.iter().map(usize::to_string).collect())
        );
        out.push_str("line\tsyllables\tstruct\tstructure\tnotes\tfragments\tchords\tpatterns\trelaxations\tmelisma\tpolish\ttext\n");
        for (i, l) in self.lines.iter().enumerate() {
            let polish = match &l.polish {
                None => "-".to_string(),
                Some(PolishOutcome::Replaced { notes, fragment_id, .. }) => {
                    format!("replaced {notes} with {fragment_id}")
                }
                Some(PolishOutcome::NoCandidate { notes }) => format!("kept {notes}"),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                i + 1,
                l.syllables,
                l.struct_index,
                l.structure,
                l.note_count(),
                join(l.pieces.iter().map(|p| p.fragment_id.to_string()).collect()),
                join(l.pieces.iter().map(|p| p.chords.clone()).collect()),
                join(l.pieces.iter().map(|p| p.pattern.clone()).collect()),
                join(l.relaxations.iter().map(Relaxation::to_string).collect()),
                join(l.melisma.iter().map(|s| (s + 1).to_string()).collect()),
                polish,
                l.text,
            );
        }
        out
    }
}

/// Analyzes `lyrics` and composes a song for them.
pub fn compose_song<M: MelodyLm + ?Sized>(
    lyrics: &str,
    options: &LyricOptions,
    progression_text: &str,
    db: &FragmentDatabase,
    model: &M,
    cfg: &GuidelineConfig,
    seed: u64,
) -> Result<Song> {
    let sheet = LyricSheet::parse(lyrics, options)?;
    let progression = ChordProgression::parse(progression_text, &sheet.tonality)?;
    Composer::new(db, model, cfg.clone())?.compose(&sheet, &progression, seed)
}

#[cfg(test)]
mod tests;
