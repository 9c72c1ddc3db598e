//! Deterministic synthetic data: seed melodies, fragment databases and lyric
//! syllable grammars. Used for smoke runs, benchmarks and property checks
//! where no licensed corpus is available.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::db::{FragmentDatabase, FragmentDraft};
use crate::error::Result;
use crate::features::{infer_chords, label_structure, normalized_mode, ChordSymbol, CorpusStats, Mode, Tonality};
use crate::melody::{split_into_bars, Note, TimeBase};

const MAJOR_SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const LOW: u8 = 52;
const HIGH: u8 = 81;

fn in_scale(pitch: u8) -> bool {
    MAJOR_SCALE.contains(&(pitch % 12))
}

/// Nearest in-range pitch of `chord` to `near`.
fn nearest_chord_tone(chord: &ChordSymbol, near: u8) -> u8 {
    (LOW..=HIGH)
        .filter(|p| chord.contains(p % 12))
        .min_by_key(|p| (p.abs_diff(near), *p))
        .expect("every triad has tones in range")
}

/// Moves `steps` scale degrees from `pitch`, staying in range.
fn scale_step(pitch: u8, steps: i32) -> u8 {
    let mut p = pitch;
    let mut left = steps.abs();
    while left > 0 {
        let next = if steps > 0 {
            p.saturating_add(1)
        } else {
            p.saturating_sub(1)
        };
        if !(LOW..=HIGH).contains(&next) {
            break;
        }
        p = next;
        if in_scale(p) {
            left -= 1;
        }
    }
    while !in_scale(p) {
        p -= 1;
    }
    p
}

/// Sixteenth-grid onsets and durations for `count` notes within one bar.
fn bar_rhythm<R: Rng>(rng: &mut R, count: usize, tb: &TimeBase) -> Vec<(u32, u32)> {
    let slots = (tb.bar_ticks() / tb.sixteenth()) as usize;
    let count = count.clamp(1, slots);
    let mut onsets: Vec<usize> = rand::seq::index::sample(rng, slots, count).into_vec();
    onsets.sort_unstable();
    let s = tb.sixteenth();
    onsets
        .iter()
        .enumerate()
        .map(|(i, &o)| {
            let next = onsets.get(i + 1).copied().unwrap_or(slots);
            let mut len = next - o;
            if len > 1 && rng.gen_bool(0.2) {
                len -= 1;
            }
            (o as u32 * s, len as u32 * s)
        })
        .collect()
}

/// Notes for one bar that mostly step through the scale and lean on the
/// tones of `chord`.
fn bar_notes<R: Rng>(
    rng: &mut R,
    chord: &ChordSymbol,
    count: usize,
    start: u32,
    prev: &mut u8,
    tb: &TimeBase,
) -> Vec<Note> {
    bar_rhythm(rng, count, tb)
        .into_iter()
        .map(|(onset, duration)| {
            let pitch = if rng.gen_bool(0.55) {
                nearest_chord_tone(chord, scale_step(*prev, rng.gen_range(-2..=2)))
            } else {
                scale_step(*prev, rng.gen_range(-2..=2))
            };
            *prev = pitch;
            Note::new(pitch, start + onset, duration)
        })
        .collect()
}

/// Seed melodies from a simple grammar: a cyclic diatonic progression, one
/// chord per bar, with four to eight chord-leaning notes per bar.
pub fn seed_melodies(count: usize, bars: usize, seed: u64, tb: &TimeBase) -> Vec<Vec<Note>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diatonic = Tonality::C_MAJOR.diatonic_chords();
    let cycles: [[usize; 4]; 3] = [[0, 4, 5, 3], [5, 3, 0, 4], [0, 5, 3, 4]];
    (0..count)
        .map(|_| {
            let cycle = cycles[rng.gen_range(0..cycles.len())];
            let mut prev = rng.gen_range(57..=67);
            let mut notes = Vec::new();
            for bar in 0..bars {
                let chord = diatonic[cycle[bar % 4]];
                let n = rng.gen_range(4..=8);
                notes.extend(bar_notes(
                    &mut rng,
                    &chord,
                    n,
                    bar as u32 * tb.bar_ticks(),
                    &mut prev,
                    tb,
                ));
            }
            notes
        })
        .collect()
}

fn random_fragment<R: Rng>(rng: &mut R, tb: &TimeBase) -> (Vec<Note>, usize) {
    let bars = if rng.gen_bool(0.5) { 1 } else { 2 };
    let diatonic = Tonality::C_MAJOR.diatonic_chords();
    let mut prev = rng.gen_range(55..=72);
    let mut notes = Vec::new();
    let mut chord = *diatonic.choose(rng).expect("six chords");
    for bar in 0..bars {
        if bar > 0 && rng.gen_bool(0.6) {
            chord = *diatonic.choose(rng).expect("six chords");
        }
        let n = rng.gen_range(1..=8);
        notes.extend(bar_notes(rng, &chord, n, bar as u32 * tb.bar_ticks(), &mut prev, tb));
    }
    (notes, bars)
}

/// A database of exactly `size` fragments (or fewer if the generator keeps
/// producing duplicates), built from random chord-leaning fragments run
/// through the regular feature extraction.
pub fn fragment_database(size: usize, seed: u64, tb: &TimeBase) -> Result<FragmentDatabase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut db = FragmentDatabase::new(*tb);
    let mut stats: Option<CorpusStats> = None;
    let mut stalled = 0;
    while db.len() < size && stalled < 8 {
        let before = db.len();
        let batch: Vec<(Vec<Note>, usize)> = (0..(size - db.len()) + size / 8 + 16)
            .map(|_| random_fragment(&mut rng, tb))
            .collect();
        let stats = match stats {
            Some(s) => s,
            None => *stats.insert(CorpusStats::from_fragments(
                batch.iter().map(|(n, b)| (n.as_slice(), *b)),
            )?),
        };
        for (notes, bars) in batch {
            if db.len() == size {
                break;
            }
            let tonality = Tonality::normalized(normalized_mode(&notes));
            let mut per_bar = split_into_bars(&notes, tb);
            per_bar.resize_with(bars, Vec::new);
            let chords = infer_chords(&per_bar, &tonality);
            let structure = label_structure(&notes, bars, &stats)?;
            db.insert(FragmentDraft {
                notes,
                structure,
                chords,
                tonality,
                bar_count: bars,
            })?;
        }
        stalled = if db.len() == before { stalled + 1 } else { 0 };
    }
    Ok(db)
}

/// Syllable counts for a verse/chorus/verse/chorus song, plus the 1-based
/// chorus lines. Verse lines use counts 2..=9, all distinct; chorus lines
/// use distinct counts 10..=16, so the chorus is the only repeat.
pub fn verse_chorus_counts<R: Rng>(rng: &mut R) -> (Vec<usize>, BTreeSet<usize>) {
    let mut verse_pool: Vec<usize> = (2..=9).collect();
    verse_pool.shuffle(rng);
    let v1 = rng.gen_range(2..=4);
    let v2 = rng.gen_range(2..=4);
    let (first, second) = verse_pool[..v1 + v2].split_at(v1);
    let mut chorus_pool: Vec<usize> = (10..=16).collect();
    chorus_pool.shuffle(rng);
    let chorus = &chorus_pool[..rng.gen_range(3..=5)];

    let mut counts = first.to_vec();
    let mut truth = BTreeSet::new();
    for (block, is_chorus) in [(chorus, true), (second, false), (chorus, true)] {
        for &c in block {
            counts.push(c);
            if is_chorus {
                truth.insert(counts.len());
            }
        }
    }
    (counts, truth)
}

/// Numeric lyrics (one count per line) for a song of verse and chorus
/// sections with line counts between `min` and `max` syllables.
pub fn song_counts<R: Rng>(rng: &mut R, lines: usize, min: usize, max: usize) -> Vec<usize> {
    let chorus: Vec<usize> = (0..4).map(|_| rng.gen_range(min..=max)).collect();
    let mut out = Vec::with_capacity(lines);
    while out.len() < lines {
        let verse = rng.gen_range(2..=4);
        for _ in 0..verse {
            out.push(rng.gen_range(min..=max));
        }
        out.extend_from_slice(&chorus);
    }
    out.truncate(lines);
    out
}

pub fn numeric_lyrics(counts: &[usize]) -> String {
    counts.iter().map(|c| format!("{c}\n")).collect()
}

/// Normalized copies of `melodies`, transposed to C major or A minor.
pub fn normalize_melodies(melodies: &[Vec<Note>]) -> Result<Vec<(Vec<Note>, Mode)>> {
    melodies
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| {
            let (tonality, offset) = crate::features::infer_tonality(m)?;
            Ok((crate::features::transpose(m, offset), tonality.mode))
        })
        .collect()
}
