//! Notes, time base and the quantized token alphabet shared by every stage.

use std::fmt;

use crate::error::{Error, Result};

pub const DEFAULT_VELOCITY: u8 = 100;

/// Number of duration classes and rest classes in the token alphabet.
pub const GRID_CLASSES: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Note {
    pub pitch: u8,
    pub onset: u32,
    pub duration: u32,
    pub velocity: u8,
}

impl Note {
    /// A note with the default velocity. Panics on pitch > 127 or zero duration.
    pub fn new(pitch: u8, onset: u32, duration: u32) -> Self {
        Self::try_new(pitch, onset, duration, DEFAULT_VELOCITY).expect("valid note")
    }

    pub fn try_new(pitch: u8, onset: u32, duration: u32, velocity: u8) -> Result<Self> {
        if pitch > 127 {
            return Err(Error::InvalidNote(format!("pitch {pitch} out of range")));
        }
        if duration == 0 {
            return Err(Error::InvalidNote(format!("zero duration at tick {onset}")));
        }
        if velocity == 0 || velocity > 127 {
            return Err(Error::InvalidNote(format!("velocity {velocity} out of range")));
        }
        Ok(Note {
            pitch,
            onset,
            duration,
            velocity,
        })
    }

    pub fn end(&self) -> u32 {
        self.onset + self.duration
    }

    pub fn shifted(self, onset: u32) -> Self {
        Note { onset, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeBase {
    pub ticks_per_quarter: u32,
    pub beats_per_bar: u32,
}

impl Default for TimeBase {
    fn default() -> Self {
        TimeBase {
            ticks_per_quarter: 480,
            beats_per_bar: 4,
        }
    }
}

impl TimeBase {
    pub fn new(ticks_per_quarter: u32, beats_per_bar: u32) -> Result<Self> {
        if ticks_per_quarter == 0 || !ticks_per_quarter.is_multiple_of(4) {
            return Err(Error::InvalidTimeBase(format!(
                "ticks per quarter must be a positive multiple of 4, got {ticks_per_quarter}"
            )));
        }
        if beats_per_bar == 0 {
            return Err(Error::InvalidTimeBase("beats per bar must be positive".into()));
        }
        Ok(TimeBase {
            ticks_per_quarter,
            beats_per_bar,
        })
    }

    pub fn bar_ticks(&self) -> u32 {
        self.ticks_per_quarter * self.beats_per_bar
    }

    pub fn sixteenth(&self) -> u32 {
        self.ticks_per_quarter / 4
    }

    /// Nearest whole number of sixteenths.
    pub fn sixteenths(&self, ticks: u32) -> u32 {
        let s = self.sixteenth();
        (ticks + s / 2) / s
    }

    pub fn quantize(&self, ticks: u32) -> u32 {
        self.sixteenths(ticks) * self.sixteenth()
    }
}

/// One note of a monophonic melody as seen by the language model.
///
/// `rest_class` is the number of sixteenths of silence before the note
/// (0..=15, saturating) and `duration_class` is the note length in sixteenths
/// minus one (0..=15, saturating at a whole 4/4 bar).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NoteToken {
    pub pitch: u8,
    pub duration_class: u8,
    pub rest_class: u8,
}

impl NoteToken {
    pub fn new(pitch: u8, duration_class: u8, rest_class: u8) -> Self {
        debug_assert!(duration_class < GRID_CLASSES && rest_class < GRID_CLASSES);
        NoteToken {
            pitch,
            duration_class,
            rest_class,
        }
    }

    pub fn duration_ticks(&self, tb: &TimeBase) -> u32 {
        (self.duration_class as u32 + 1) * tb.sixteenth()
    }

    pub fn rest_ticks(&self, tb: &TimeBase) -> u32 {
        self.rest_class as u32 * tb.sixteenth()
    }
}

impl fmt::Display for NoteToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.pitch, self.duration_class, self.rest_class)
    }
}

pub fn duration_class(ticks: u32, tb: &TimeBase) -> u8 {
    let q = tb.sixteenths(ticks).clamp(1, GRID_CLASSES as u32);
    (q - 1) as u8
}

pub fn rest_class(ticks: u32, tb: &TimeBase) -> u8 {
    tb.sixteenths(ticks).min(GRID_CLASSES as u32 - 1) as u8
}

/// Assigns each note to bar `onset / bar_ticks`, clipping notes that run past
/// the end of their bar. Bars without notes in between are returned empty.
pub fn split_into_bars(notes: &[Note], tb: &TimeBase) -> Vec<Vec<Note>> {
    let bar = tb.bar_ticks();
    let mut bars: Vec<Vec<Note>> = Vec::new();
    for note in notes {
        let index = (note.onset / bar) as usize;
        if bars.len() <= index {
            bars.resize_with(index + 1, Vec::new);
        }
        let bar_end = (index as u32 + 1) * bar;
        let mut clipped = *note;
        clipped.duration = note.duration.min(bar_end - note.onset);
        bars[index].push(clipped);
    }
    bars
}

/// Tokenizes a monophonic melody. The first rest is measured from tick 0.
pub fn tokenize(notes: &[Note], tb: &TimeBase) -> Result<Vec<NoteToken>> {
    tokenize_from(notes, 0, tb)
}

/// Tokenizes with the first rest measured from `origin`.
pub fn tokenize_from(notes: &[Note], origin: u32, tb: &TimeBase) -> Result<Vec<NoteToken>> {
    let mut previous_end = origin;
    let mut tokens = Vec::with_capacity(notes.len());
    for note in notes {
        if note.onset < previous_end {
            return Err(Error::Overlap {
                onset: note.onset,
                previous_end,
            });
        }
        tokens.push(NoteToken {
            pitch: note.pitch,
            duration_class: duration_class(note.duration, tb),
            rest_class: rest_class(note.onset - previous_end, tb),
        });
        previous_end = note.end();
    }
    Ok(tokens)
}

/// Inverse of [`tokenize`] on the sixteenth grid, starting at tick 0.
pub fn detokenize(tokens: &[NoteToken], tb: &TimeBase) -> Vec<Note> {
    let mut cursor = 0;
    tokens
        .iter()
        .map(|t| {
            let onset = cursor + t.rest_ticks(tb);
            let note = Note::new(t.pitch, onset, t.duration_ticks(tb));
            cursor = note.end();
            note
        })
        .collect()
}

/// Converts a monophonic melody between tick resolutions, rounding to the
/// nearest tick. Notes keep at least one tick and never overlap.
pub fn rescale(notes: &[Note], from: &TimeBase, to: &TimeBase) -> Vec<Note> {
    let scale = |t: u32| {
        ((t as u64 * to.ticks_per_quarter as u64 + from.ticks_per_quarter as u64 / 2) / from.ticks_per_quarter as u64)
            as u32
    };
    let mut out: Vec<Note> = Vec::with_capacity(notes.len());
    for n in notes {
        let onset = scale(n.onset);
        if let Some(prev) = out.last_mut() {
            if onset <= prev.onset {
                continue;
            }
            prev.duration = prev.duration.min(onset - prev.onset);
        }
        let mut note = *n;
        note.onset = onset;
        note.duration = (scale(n.end()) - onset).max(1);
        out.push(note);
    }
    out
}

/// Parses scientific pitch notation with C4 = 60, e.g. `"G3"`, `"F#4"`, `"Bb-1"`.
pub fn pitch_name_to_midi(name: &str) -> Result<u8> {
    let err = || Error::PitchName(name.to_string());
    let mut chars = name.trim().chars().peekable();
    let letter = chars.next().ok_or_else(err)?;
    let class: i32 = match letter.to_ascii_uppercase() {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return Err(err()),
    };
    let accidental = match chars.peek() {
        Some('#') => {
            chars.next();
            1
        }
        Some('b') => {
            chars.next();
            -1
        }
        _ => 0,
    };
    let octave: i32 = chars.collect::<String>().parse().map_err(|_| err())?;
    let midi = (octave + 1) * 12 + class + accidental;
    if !(0..=127).contains(&midi) {
        return Err(err());
    }
    Ok(midi as u8)
}

const SHARP_NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];

pub fn midi_to_pitch_name(pitch: u8) -> String {
    format!("{}{}", SHARP_NAMES[pitch as usize % 12], pitch as i32 / 12 - 1)
}

pub fn pitch_class_name(pc: u8) -> &'static str {
    SHARP_NAMES[pc as usize % 12]
}
