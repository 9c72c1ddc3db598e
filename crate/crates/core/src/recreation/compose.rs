use rand::seq::index::sample;
use rand::Rng;

use super::pattern::{advance_position, ChordPattern};
use super::{
    concatenate, filter_candidates, leap, pick_top_k, place_at, planned_rest, rerank, tendency_bonus, ChordProgression,
    CompositionState, GuidelineConfig, LineReport, PieceReport, PolishOutcome, Relaxation, Song,
};
use crate::db::{Fragment, FragmentDatabase};
use crate::error::{Error, Result};
use crate::features::{ChordSymbol, StructureLabel, Tonality};
use crate::lm::MelodyLm;
use crate::lyrics::LyricSheet;
use crate::melody::{tokenize_from, Note, TimeBase};

/// Composes songs against one database and one language model.
pub struct Composer<'a, M: MelodyLm + ?Sized> {
    db: &'a FragmentDatabase,
    model: &'a M,
    cfg: GuidelineConfig,
    max_fragment_notes: usize,
}

impl<'a, M: MelodyLm + ?Sized> Composer<'a, M> {
    pub fn new(db: &'a FragmentDatabase, model: &'a M, cfg: GuidelineConfig) -> Result<Self> {
        cfg.validate()?;
        if db.is_empty() {
            return Err(Error::Empty("fragment database"));
        }
        Ok(Composer {
            db,
            model,
            cfg,
            max_fragment_notes: db.max_fragment_notes(),
        })
    }

    pub fn config(&self) -> &GuidelineConfig {
        &self.cfg
    }

    pub fn compose(&self, sheet: &LyricSheet, progression: &ChordProgression, seed: u64) -> Result<Song> {
        let chords = progression.chords();
        let patterns = (0..chords.len())
            .map(|p| super::pattern::compile_chord_pattern(chords, p))
            .collect::<Result<Vec<_>>>()?;
        let tonality = sheet.tonality;
        let mut run = Run {
            composer: self,
            sheet,
            chords,
            patterns,
            tonic_pattern: ChordPattern::stay_on(&tonality.tonic_chord())?,
            tonality,
            tb: *self.db.time_base(),
            state: CompositionState::new(seed),
            lines: Vec::with_capacity(sheet.lines.len()),
            positions: Vec::with_capacity(sheet.lines.len()),
            lyrics: Vec::new(),
        };
        for i in 0..sheet.lines.len() {
            run.compose_line(i)?;
        }
        run.polish()?;
        Ok(Song {
            notes: run.state.context,
            lyrics: run.lyrics,
            lines: run.lines,
            tonality,
            progression: progression.clone(),
            struct_array: sheet.analysis.struct_array.clone(),
            chorus: sheet.analysis.chorus.clone(),
            seed,
            tb: run.tb,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Lookahead {
    /// The next line starts with this pitch.
    Pitch(u8),
    /// The next line repeats this one, so it starts with this line's first note.
    LineStart,
}

#[derive(Debug, Clone, Copy)]
struct Needs {
    cadence: bool,
    lookahead: Option<Lookahead>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    Context,
    Tonic,
}

struct Run<'r, 'a, M: MelodyLm + ?Sized> {
    composer: &'r Composer<'a, M>,
    sheet: &'r LyricSheet,
    chords: &'r [ChordSymbol],
    patterns: Vec<ChordPattern>,
    tonic_pattern: ChordPattern,
    tonality: Tonality,
    tb: TimeBase,
    state: CompositionState,
    lines: Vec<LineReport>,
    /// Progression position before and after each line.
    positions: Vec<(usize, usize)>,
    lyrics: Vec<Option<String>>,
}

impl<'r, 'a, M: MelodyLm + ?Sized> Run<'r, 'a, M> {
    fn cfg(&self) -> &'r GuidelineConfig {
        &self.composer.cfg
    }

    /// Line whose melody ends the song, after following shared references.
    fn cadence_line(&self) -> usize {
        let s = &self.sheet.analysis.struct_array;
        let mut t = s.len() - 1;
        while s[t] > 0 {
            t = s[t] - 1;
        }
        t
    }

    fn compose_line(&mut self, i: usize) -> Result<()> {
        let line = &self.sheet.lines[i];
        let start = self.state.context.len();
        let position_before = self.state.position;
        let mut report = LineReport {
            text: line.text.clone(),
            syllables: line.syllables,
            struct_index: line.struct_index,
            structure: line.structure,
            pieces: Vec::new(),
            relaxations: Vec::new(),
            melisma: Vec::new(),
            polish: None,
            start,
            end: start,
            last_chord: self.tonality.tonic_chord(),
        };

        if line.struct_index > 0 {
            self.copy_line(line.struct_index - 1, &mut report)?;
        } else {
            let needs = Needs {
                cadence: i == self.cadence_line(),
                lookahead: self.lookahead_for(i),
            };
            let mut extra = 0;
            if self.cfg().max_extra_notes > 0 && self.state.rng.gen::<f64>() < self.cfg().melisma_prob {
                let e = self
                    .state
                    .rng
                    .gen_range(1..=self.cfg().max_extra_notes.min(line.syllables));
                let mut chosen = sample(&mut self.state.rng, line.syllables, e).into_vec();
                chosen.sort_unstable();
                if self
                    .gather(line.syllables + e, line.structure, Source::Context, true, needs, start)?
                    .0
                    .is_empty()
                {
                    report.relaxations.push(Relaxation::MelismaDropped);
                } else {
                    extra = e;
                    report.melisma = chosen;
                }
            }
            self.place_segment(i, line.syllables + extra, line.structure, true, needs, &mut report)?;
        }

        report.end = self.state.context.len();
        self.positions.push((position_before, self.state.position));
        self.push_lyrics(i, &report.melisma);
        self.lines.push(report);
        Ok(())
    }

    fn lookahead_for(&self, i: usize) -> Option<Lookahead> {
        let next = self.sheet.lines.get(i + 1)?;
        match next.struct_index {
            0 => None,
            r if r - 1 == i => Some(Lookahead::LineStart),
            r => {
                let referent = &self.lines[r - 1];
                Some(Lookahead::Pitch(self.state.context[referent.start].pitch))
            }
        }
    }

    fn push_lyrics(&mut self, i: usize, melisma: &[usize]) {
        for (s, text) in self.sheet.lines[i].syllable_texts.iter().enumerate() {
            self.lyrics.push(Some(text.clone()));
            if melisma.binary_search(&s).is_ok() {
                self.lyrics.push(None);
            }
        }
    }

    fn copy_line(&mut self, referent: usize, report: &mut LineReport) -> Result<()> {
        let source = self.lines[referent].clone();
        let (ref_before, ref_after) = self.positions[referent];
        if ref_before != self.state.position {
            report.relaxations.push(Relaxation::PhaseMismatch);
        }
        let notes = self.state.context[source.start..source.end].to_vec();
        let placed = concatenate(&mut self.state, &notes, &self.tb);
        let shift = self.state.context.len() as isize - source.start as isize;
        self.state.extend(&placed, &self.tb)?;
        report.pieces = source
            .pieces
            .iter()
            .map(|p| PieceReport {
                start: (p.start as isize + shift) as usize,
                ..p.clone()
            })
            .collect();
        report.melisma = source.melisma.clone();
        report.last_chord = source.last_chord;
        self.state.position = ref_after;
        self.state.last_chord = Some(source.last_chord);
        Ok(())
    }

    fn pattern(&self, source: Source) -> &ChordPattern {
        match source {
            Source::Context => &self.patterns[self.state.position],
            Source::Tonic => &self.tonic_pattern,
        }
    }

    /// Candidates of length `n` under one rung of the relaxation ladder, after
    /// the hard guidelines. The flag reports that the look-ahead preference
    /// had to be dropped.
    fn gather(
        &self,
        n: usize,
        structure: StructureLabel,
        source: Source,
        final_piece: bool,
        needs: Needs,
        line_start: usize,
    ) -> Result<(Vec<&'a Fragment>, bool)> {
        let db = self.composer.db;
        let pattern = self.pattern(source);
        let found = db.query_regex(n, self.tonality.mode, structure, &pattern.full);
        let mut found = filter_candidates(found, &self.state, self.cfg(), self.state.context.is_empty());
        if final_piece && needs.cadence {
            let tonic = self.tonality.tonic_chord();
            found.retain(|f| f.last_chord() == tonic);
        }
        let mut ignored = false;
        if let (true, Some(look)) = (final_piece, needs.lookahead) {
            let max = self.cfg().max_leap;
            let smooth: Vec<&Fragment> = found
                .iter()
                .copied()
                .filter(|f| {
                    let target = match look {
                        Lookahead::Pitch(p) => p,
                        Lookahead::LineStart => self.state.context.get(line_start).map_or(f.first_pitch(), |n| n.pitch),
                    };
                    leap(f.last_pitch(), target) < max
                })
                .collect();
            if smooth.is_empty() {
                ignored = !found.is_empty();
            } else {
                found = smooth;
            }
        }
        // Prefer the most varied branch that has any candidate.
        if let Some(best) = found
            .iter()
            .filter_map(|f| pattern.branch_rank(db.stored_chord_string(f.id)))
            .min()
        {
            found.retain(|f| pattern.branch_rank(db.stored_chord_string(f.id)) == Some(best));
        }
        Ok((found, ignored))
    }

    fn place_segment(
        &mut self,
        line: usize,
        n: usize,
        structure: StructureLabel,
        final_piece: bool,
        needs: Needs,
        report: &mut LineReport,
    ) -> Result<()> {
        let rungs = [
            (Source::Context, structure),
            (Source::Tonic, structure),
            (Source::Context, structure.other()),
            (Source::Tonic, structure.other()),
        ];
        for (source, rung_structure) in rungs {
            let (found, ignored) = self.gather(n, rung_structure, source, final_piece, needs, report.start)?;
            if found.is_empty() {
                continue;
            }
            if source == Source::Tonic {
                report.relaxations.push(Relaxation::TonicPattern);
            }
            if rung_structure != structure {
                report.relaxations.push(Relaxation::OtherStructure);
            }
            if ignored {
                report.relaxations.push(Relaxation::LookaheadIgnored);
            }
            let pattern_text = self.pattern(source).text.clone();
            let rest = planned_rest(&self.state, &self.tb).unwrap_or(0);
            let cfg = self.cfg();
            let chosen = rerank(self.composer.model, &mut self.state, &found, cfg, rest, &self.tb)?;
            self.place_fragment(chosen, source, pattern_text, report)?;
            return Ok(());
        }

        if n < 2 {
            return Err(Error::RetrievalExhausted {
                line: line + 1,
                length: n,
                mode: self.tonality.mode.to_string(),
                structure: structure.to_string(),
                pattern: self.patterns[self.state.position].text.clone(),
            });
        }
        let max = self.composer.max_fragment_notes.max(1);
        let pieces = n.div_ceil(max).max(2).min(n);
        report.relaxations.push(Relaxation::Split(pieces));
        let sizes = split_sizes(n, pieces);
        let last = sizes.len() - 1;
        for (j, size) in sizes.into_iter().enumerate() {
            self.place_segment(line, size, structure, final_piece && j == last, needs, report)?;
        }
        Ok(())
    }

    fn place_fragment(
        &mut self,
        fragment: &Fragment,
        source: Source,
        pattern: String,
        report: &mut LineReport,
    ) -> Result<()> {
        let start = self.state.context.len();
        let placed = concatenate(&mut self.state, &fragment.notes, &self.tb);
        self.state.extend(&placed, &self.tb)?;
        self.state.rest_samples.extend(fragment.inter_bar_rests(&self.tb));
        self.state.position = match source {
            Source::Context => advance_position(self.chords, self.state.position, &fragment.chords),
            Source::Tonic => self
                .chords
                .iter()
                .position(|c| *c == self.tonality.tonic_chord())
                .unwrap_or(self.state.position),
        };
        self.state.last_chord = Some(fragment.last_chord());
        report.last_chord = fragment.last_chord();
        report.pieces.push(PieceReport {
            fragment_id: fragment.id,
            chords: fragment.chord_string(),
            pattern,
            structure: fragment.structure,
            start,
            len: placed.len(),
        });
        Ok(())
    }

    /// Re-retrieves the trailing notes of the second line of every adjacent
    /// pair whose melodies are identical, so the pair is similar but not equal.
    fn polish(&mut self) -> Result<()> {
        let originals: Vec<Vec<Note>> = self
            .lines
            .iter()
            .map(|l| place_at(&self.state.context[l.start..l.end], 0))
            .collect();
        for i in 1..self.lines.len() {
            if self.lines[i].syllables != self.lines[i - 1].syllables || originals[i] != originals[i - 1] {
                continue;
            }
            let len = originals[i].len();
            let d = self.state.rng.gen_range(1..=2usize).min(len - 1);
            if d == 0 {
                continue;
            }
            let outcome = self.polish_line(i, d)?;
            self.lines[i].polish = Some(outcome);
        }
        Ok(())
    }

    fn polish_line(&mut self, i: usize, d: usize) -> Result<PolishOutcome> {
        let line = &self.lines[i];
        let (start, end) = (line.start, line.end);
        let cut = end - d;
        let kept = self.state.context[cut - 1].pitch;
        let next_first = self.lines.get(i + 1).map(|l| self.state.context[l.start].pitch);
        let original: Vec<u8> = self.state.context[cut..end].iter().map(|n| n.pitch).collect();
        let pattern = ChordPattern::stay_on(&line.last_chord)?;
        let max = self.cfg().max_leap;
        let usable = |f: &&Fragment| {
            f.bar_count == 1
                && leap(f.first_pitch(), kept) < max
                && next_first.is_none_or(|p| leap(f.last_pitch(), p) < max)
                && f.notes.iter().map(|n| n.pitch).ne(original.iter().copied())
        };
        let structure = line.structure;
        let mut found = Vec::new();
        for s in [structure, structure.other()] {
            found = self.composer.db.query_regex(d, self.tonality.mode, s, &pattern.full);
            found.retain(usable);
            if !found.is_empty() {
                if s != structure {
                    self.lines[i].relaxations.push(Relaxation::OtherStructure);
                }
                break;
            }
        }
        if found.is_empty() {
            return Ok(PolishOutcome::NoCandidate { notes: d });
        }
        found.sort_by_key(|f| f.id);
        let history = tokenize_from(&self.state.context[..cut], 0, &self.tb)?;
        let rhythm = self.state.context[cut..end].to_vec();
        let origin = self.state.context[cut - 1].end();
        let mut scored = Vec::with_capacity(found.len());
        for f in found {
            let notes: Vec<Note> = rhythm
                .iter()
                .zip(&f.notes)
                .map(|(r, n)| Note { pitch: n.pitch, ..*r })
                .collect();
            let tokens = tokenize_from(&notes, origin, &self.tb)?;
            let score = self.composer.model.score_continuation(&history, &tokens)
                + tendency_bonus(self.cfg(), Some(kept), f.first_pitch());
            scored.push((score, f));
        }
        let chosen = pick_top_k(scored, self.cfg().top_k, &mut self.state.rng).expect("non-empty");
        for (note, replacement) in self.state.context[cut..end].iter_mut().zip(&chosen.notes) {
            note.pitch = replacement.pitch;
        }
        let tokens = tokenize_from(&self.state.context[start..end], self.prior_end(start), &self.tb)?;
        let token_start = self.state.context_tokens.len() - (self.state.context.len() - start);
        self.state
            .context_tokens
            .splice(token_start..token_start + tokens.len(), tokens);
        Ok(PolishOutcome::Replaced {
            notes: d,
            fragment_id: chosen.id,
            original,
        })
    }

    fn prior_end(&self, index: usize) -> u32 {
        if index == 0 {
            0
        } else {
            self.state.context[index - 1].end()
        }
    }
}

/// Near-equal sizes summing to `n`, larger first.
pub(crate) fn split_sizes(n: usize, pieces: usize) -> Vec<usize> {
    let base = n / pieces;
    let extra = n % pieces;
    (0..pieces).map(|j| base + usize::from(j < extra)).collect()
}
