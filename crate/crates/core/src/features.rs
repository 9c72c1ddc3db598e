//! The four retrieval keys of a melody fragment: length, structure, chords
//! and tonality.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::melody::{pitch_class_name, Note};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Major,
    Minor,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Major => "major",
            Mode::Minor => "minor",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "major" => Ok(Mode::Major),
            "minor" => Ok(Mode::Minor),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tonality {
    pub mode: Mode,
    pub key_root: u8,
}

impl Tonality {
    pub const C_MAJOR: Tonality = Tonality {
        mode: Mode::Major,
        key_root: 0,
    };
    pub const A_MINOR: Tonality = Tonality {
        mode: Mode::Minor,
        key_root: 9,
    };

    /// The normalized key for a mode: C major or A minor.
    pub fn normalized(mode: Mode) -> Self {
        match mode {
            Mode::Major => Self::C_MAJOR,
            Mode::Minor => Self::A_MINOR,
        }
    }

    /// Root of the major scale sharing this key's pitch set.
    fn major_root(&self) -> u8 {
        match self.mode {
            Mode::Major => self.key_root,
            Mode::Minor => (self.key_root + 3) % 12,
        }
    }

    /// Diatonic major and minor triads: I ii iii IV V vi.
    pub fn diatonic_chords(&self) -> [ChordSymbol; 6] {
        let r = self.major_root();
        let at = |offset: u8, quality| ChordSymbol::new((r + offset) % 12, quality);
        [
            at(0, Quality::Major),
            at(2, Quality::Minor),
            at(4, Quality::Minor),
            at(5, Quality::Major),
            at(7, Quality::Major),
            at(9, Quality::Minor),
        ]
    }

    pub fn tonic_chord(&self) -> ChordSymbol {
        match self.mode {
            Mode::Major => ChordSymbol::new(self.key_root, Quality::Major),
            Mode::Minor => ChordSymbol::new(self.key_root, Quality::Minor),
        }
    }
}

impl fmt::Display for Tonality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", pitch_class_name(self.key_root), self.mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Quality {
    Major,
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChordSymbol {
    pub root: u8,
    pub quality: Quality,
}

impl ChordSymbol {
    pub fn new(root: u8, quality: Quality) -> Self {
        ChordSymbol {
            root: root % 12,
            quality,
        }
    }

    pub fn tones(&self) -> [u8; 3] {
        let third = match self.quality {
            Quality::Major => 4,
            Quality::Minor => 3,
        };
        [self.root, (self.root + third) % 12, (self.root + 7) % 12]
    }

    pub fn contains(&self, pitch_class: u8) -> bool {
        self.tones().contains(&(pitch_class % 12))
    }
}

impl fmt::Display for ChordSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(pitch_class_name(self.root))?;
        if self.quality == Quality::Minor {
            f.write_str("m")?;
        }
        Ok(())
    }
}

impl FromStr for ChordSymbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let err = || Error::ChordName(s.to_string());
        let mut chars = s.chars();
        let root: i32 = match chars.next().ok_or_else(err)? {
            'C' => 0,
            'D' => 2,
            'E' => 4,
            'F' => 5,
            'G' => 7,
            'A' => 9,
            'B' => 11,
            _ => return Err(err()),
        };
        let rest = chars.as_str();
        let (shift, rest) = if let Some(r) = rest.strip_prefix('#') {
            (1, r)
        } else if let Some(r) = rest.strip_prefix('b') {
            (-1, r)
        } else {
            (0, rest)
        };
        let quality = match rest {
            "" => Quality::Major,
            "m" => Quality::Minor,
            _ => return Err(err()),
        };
        Ok(ChordSymbol::new((root + shift).rem_euclid(12) as u8, quality))
    }
}

/// Renders chords the way the database stores them: `"G C"`.
pub fn chord_string(chords: &[ChordSymbol]) -> String {
    chords.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

pub fn parse_chords(text: &str) -> Result<Vec<ChordSymbol>> {
    text.split_whitespace().map(str::parse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StructureLabel {
    Verse,
    Chorus,
}

impl StructureLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            StructureLabel::Verse => "verse",
            StructureLabel::Chorus => "chorus",
        }
    }

    pub fn other(&self) -> Self {
        match self {
            StructureLabel::Verse => StructureLabel::Chorus,
            StructureLabel::Chorus => StructureLabel::Verse,
        }
    }
}

impl fmt::Display for StructureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StructureLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verse" => Ok(StructureLabel::Verse),
            "chorus" => Ok(StructureLabel::Chorus),
            _ => Err(Error::Config(format!("unknown structure label {s:?}"))),
        }
    }
}

/// Krumhansl-Kessler probe-tone profiles, tonic first.
pub const MAJOR_PROFILE: [f64; 12] = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88];
pub const MINOR_PROFILE: [f64; 12] = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17];

fn pitch_class_histogram(notes: &[Note]) -> [f64; 12] {
    let mut hist = [0.0; 12];
    for n in notes {
        hist[(n.pitch % 12) as usize] += n.duration as f64;
    }
    hist
}

fn correlation(hist: &[f64; 12], profile: &[f64; 12], root: u8) -> f64 {
    let hm = hist.iter().sum::<f64>() / 12.0;
    let pm = profile.iter().sum::<f64>() / 12.0;
    let (mut num, mut hv, mut pv) = (0.0, 0.0, 0.0);
    for pc in 0..12 {
        let h = hist[pc] - hm;
        let p = profile[(pc + 12 - root as usize) % 12] - pm;
        num += h * p;
        hv += h * h;
        pv += p * p;
    }
    if hv == 0.0 {
        return 0.0;
    }
    num / (hv * pv).sqrt()
}

/// Estimates the key by correlating the duration-weighted pitch-class
/// histogram with all 24 profile rotations, and returns the semitone shift
/// (in -6..=5) that moves it to C major or A minor.
pub fn infer_tonality(notes: &[Note]) -> Result<(Tonality, i8)> {
    if notes.is_empty() {
        return Err(Error::Empty("notes for key estimation"));
    }
    let hist = pitch_class_histogram(notes);
    let mut best = (Tonality::C_MAJOR, f64::NEG_INFINITY);
    for (mode, profile) in [(Mode::Major, &MAJOR_PROFILE), (Mode::Minor, &MINOR_PROFILE)] {
        for root in 0..12 {
            let r = correlation(&hist, profile, root);
            if r > best.1 {
                best = (Tonality { mode, key_root: root }, r);
            }
        }
    }
    let key = best.0;
    let target = Tonality::normalized(key.mode).key_root as i32;
    let mut offset = (target - key.key_root as i32).rem_euclid(12);
    if offset > 5 {
        offset -= 12;
    }
    Ok((key, offset as i8))
}

/// Chooses between C major and A minor for already-normalized material.
pub fn normalized_mode(notes: &[Note]) -> Mode {
    let hist = pitch_class_histogram(notes);
    let major = correlation(&hist, &MAJOR_PROFILE, 0);
    let minor = correlation(&hist, &MINOR_PROFILE, 9);
    if minor > major {
        Mode::Minor
    } else {
        Mode::Major
    }
}

/// Shifts every pitch by `semitones`, keeping pitches inside 0..=127 by
/// octave folding.
pub fn transpose(notes: &[Note], semitones: i8) -> Vec<Note> {
    notes
        .iter()
        .map(|n| {
            let mut p = n.pitch as i32 + semitones as i32;
            while p > 127 {
                p -= 12;
            }
            while p < 0 {
                p += 12;
            }
            Note { pitch: p as u8, ..*n }
        })
        .collect()
}

pub const CHORD_CHANGE_PENALTY: f64 = 0.1;

/// Fraction of a bar's note duration that falls on tones of `chord`.
pub fn chord_fit(bar: &[Note], chord: &ChordSymbol) -> f64 {
    let total: u64 = bar.iter().map(|n| n.duration as u64).sum();
    if total == 0 {
        return 0.0;
    }
    let on: u64 = bar
        .iter()
        .filter(|n| chord.contains(n.pitch))
        .map(|n| n.duration as u64)
        .sum();
    on as f64 / total as f64
}

/// One chord per bar by Viterbi decoding over the diatonic triads.
///
/// Emission is [`chord_fit`]; each chord change costs `penalty`. Bars without
/// notes take the previous chord (the tonic for leading empty bars) and do not
/// take part in decoding. Ties prefer staying on the previous chord, then the
/// tonic, then vocabulary order.
pub fn infer_chords(bars: &[Vec<Note>], tonality: &Tonality) -> Vec<ChordSymbol> {
    infer_chords_with_penalty(bars, tonality, CHORD_CHANGE_PENALTY)
}

pub fn infer_chords_with_penalty(bars: &[Vec<Note>], tonality: &Tonality, penalty: f64) -> Vec<ChordSymbol> {
    let vocab = tonality.diatonic_chords();
    let tonic = vocab.iter().position(|c| *c == tonality.tonic_chord()).unwrap_or(0);
    let voiced: Vec<usize> = (0..bars.len()).filter(|&i| !bars[i].is_empty()).collect();

    let mut decoded = vec![tonic; voiced.len()];
    if !voiced.is_empty() {
        let n = vocab.len();
        let mut score: Vec<f64> = vocab.iter().map(|c| chord_fit(&bars[voiced[0]], c)).collect();
        let mut back: Vec<Vec<usize>> = Vec::with_capacity(voiced.len());
        for &b in &voiced[1..] {
            let mut next = vec![0.0; n];
            let mut from = vec![0; n];
            for s in 0..n {
                // Self-transition first so that ties keep the chord.
                let mut best = (s, score[s]);
                for (p, &sp) in score.iter().enumerate() {
                    let v = sp - penalty;
                    if v > best.1 {
                        best = (p, v);
                    }
                }
                next[s] = best.1 + chord_fit(&bars[b], &vocab[s]);
                from[s] = best.0;
            }
            score = next;
            back.push(from);
        }
        let mut last = tonic;
        for s in 0..n {
            if score[s] > score[last] {
                last = s;
            }
        }
        decoded[voiced.len() - 1] = last;
        for i in (1..voiced.len()).rev() {
            decoded[i - 1] = back[i - 1][decoded[i]];
        }
    }

    let mut out = Vec::with_capacity(bars.len());
    let mut current = tonic;
    let mut next_voiced = decoded.into_iter();
    for bar in bars {
        if !bar.is_empty() {
            current = next_voiced.next().expect("one decoded chord per voiced bar");
        }
        out.push(vocab[current]);
    }
    out
}

/// Population medians used to split fragments into chorus and verse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusStats {
    pub median_mean_pitch: f64,
    pub median_density: f64,
}

impl CorpusStats {
    /// Medians over `(notes, bar_count)` pairs; empty fragments are skipped.
    pub fn from_fragments<'a>(fragments: impl IntoIterator<Item = (&'a [Note], usize)>) -> Result<Self> {
        let mut pitches = Vec::new();
        let mut densities = Vec::new();
        for (notes, bars) in fragments {
            if notes.is_empty() {
                continue;
            }
            pitches.push(mean_pitch(notes));
            densities.push(notes.len() as f64 / bars.max(1) as f64);
        }
        if pitches.is_empty() {
            return Err(Error::Empty("fragment population"));
        }
        Ok(CorpusStats {
            median_mean_pitch: median(&mut pitches),
            median_density: median(&mut densities),
        })
    }
}

pub fn mean_pitch(notes: &[Note]) -> f64 {
    notes.iter().map(|n| n.pitch as f64).sum::<f64>() / notes.len() as f64
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    }
}

/// Chorus when both mean pitch and notes-per-bar exceed the corpus medians.
pub fn label_structure(notes: &[Note], bar_count: usize, stats: &CorpusStats) -> Result<StructureLabel> {
    if notes.is_empty() {
        return Err(Error::Empty("fragment for structure labeling"));
    }
    let density = notes.len() as f64 / bar_count.max(1) as f64;
    if mean_pitch(notes) > stats.median_mean_pitch && density > stats.median_density {
        Ok(StructureLabel::Chorus)
    } else {
        Ok(StructureLabel::Verse)
    }
}

pub const DEFAULT_MIN_UNIQUE_PITCHES: usize = 3;

/// True for fragments of at least four notes with fewer than `min_unique`
/// distinct pitches.
pub fn is_monotonous(notes: &[Note], min_unique: usize) -> bool {
    if notes.len() < 4 {
        return false;
    }
    let mut pitches: Vec<u8> = notes.iter().map(|n| n.pitch).collect();
    pitches.sort_unstable();
    pitches.dedup();
    pitches.len() < min_unique
}
