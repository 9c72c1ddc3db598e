//! Fragment database: the creation-stage pipeline, keyed retrieval and the
//! line-oriented file format.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use regex::Regex;

use crate::error::{Error, Result};
use crate::features::{
    chord_string, infer_chords, is_monotonous, label_structure, normalized_mode, parse_chords, ChordSymbol,
    CorpusStats, Mode, StructureLabel, Tonality, DEFAULT_MIN_UNIQUE_PITCHES,
};
use crate::lm::{generate_continuation, MelodyLm};
use crate::melody::{split_into_bars, tokenize, tokenize_from, Note, NoteToken, TimeBase};

pub const DB_MAGIC: &str = "#remelody-fragments";
pub const DB_VERSION: u32 = 1;

/// A stored melody fragment with its retrieval keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub id: u32,
    /// Onsets are relative to the start of the fragment's first bar.
    pub notes: Vec<Note>,
    pub structure: StructureLabel,
    /// One chord per bar.
    pub chords: Vec<ChordSymbol>,
    pub tonality: Tonality,
    pub bar_count: usize,
}

impl Fragment {
    pub fn length(&self) -> usize {
        self.notes.len()
    }

    pub fn chord_string(&self) -> String {
        chord_string(&self.chords)
    }

    pub fn first_pitch(&self) -> u8 {
        self.notes[0].pitch
    }

    pub fn last_pitch(&self) -> u8 {
        self.notes[self.notes.len() - 1].pitch
    }

    pub fn last_chord(&self) -> ChordSymbol {
        self.chords[self.chords.len() - 1]
    }

    /// Silence between the last note of each bar and the first note of the
    /// next bar, for every adjacent pair of non-empty bars.
    pub fn inter_bar_rests(&self, tb: &TimeBase) -> Vec<u32> {
        let bars = split_into_bars(&self.notes, tb);
        bars.windows(2)
            .filter_map(|w| match (w[0].last(), w[1].first()) {
                (Some(a), Some(b)) => Some(b.onset.saturating_sub(a.end())),
                _ => None,
            })
            .collect()
    }
}

/// A fragment before it has an id.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentDraft {
    pub notes: Vec<Note>,
    pub structure: StructureLabel,
    pub chords: Vec<ChordSymbol>,
    pub tonality: Tonality,
    pub bar_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted(u32),
    Duplicate,
    Monotonous,
}

type IndexKey = (usize, Mode, StructureLabel);
type DedupKey = (Vec<NoteToken>, Vec<ChordSymbol>, Mode, StructureLabel);

#[derive(Debug, Clone)]
pub struct FragmentDatabase {
    tb: TimeBase,
    min_unique: usize,
    records: Vec<Fragment>,
    chord_strings: Vec<String>,
    index: HashMap<IndexKey, Vec<u32>>,
    seen: HashSet<DedupKey>,
}

impl PartialEq for FragmentDatabase {
    fn eq(&self, other: &Self) -> bool {
        self.tb == other.tb && self.records == other.records
    }
}

impl FragmentDatabase {
    pub fn new(tb: TimeBase) -> Self {
        FragmentDatabase {
            tb,
            min_unique: DEFAULT_MIN_UNIQUE_PITCHES,
            records: Vec::new(),
            chord_strings: Vec::new(),
            index: HashMap::new(),
            seen: HashSet::new(),
        }
    }

    pub fn with_min_unique(mut self, min_unique: usize) -> Self {
        self.min_unique = min_unique;
        self
    }

    pub fn time_base(&self) -> &TimeBase {
        &self.tb
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Fragment> {
        self.records.get(id as usize)
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.records
    }

    /// Longest two-bar fragment (or longest of any kind when there are no
    /// two-bar fragments); 0 for an empty database.
    pub fn max_fragment_notes(&self) -> usize {
        let two_bar = self
            .records
            .iter()
            .filter(|f| f.bar_count == 2)
            .map(Fragment::length)
            .max();
        two_bar
            .or_else(|| self.records.iter().map(Fragment::length).max())
            .unwrap_or(0)
    }

    fn validate(&self, draft: &FragmentDraft) -> std::result::Result<(), String> {
        if draft.notes.is_empty() {
            return Err("fragment has no notes".into());
        }
        if !(1..=2).contains(&draft.bar_count) {
            return Err(format!("bar count {} not in 1..=2", draft.bar_count));
        }
        if draft.chords.len() != draft.bar_count {
            return Err(format!("{} chords for {} bars", draft.chords.len(), draft.bar_count));
        }
        let span = draft.bar_count as u32 * self.tb.bar_ticks();
        if draft.notes.iter().any(|n| n.end() > span) {
            return Err("notes extend past the fragment's bars".into());
        }
        tokenize(&draft.notes, &self.tb).map_err(|e| e.to_string())?;
        Ok(())
    }

    fn dedup_key(&self, draft: &FragmentDraft) -> DedupKey {
        (
            tokenize(&draft.notes, &self.tb).expect("validated fragment"),
            draft.chords.clone(),
            draft.tonality.mode,
            draft.structure,
        )
    }

    /// Adds a fragment unless it is monotonous or a duplicate. Malformed
    /// fragments are an error.
    pub fn insert(&mut self, draft: FragmentDraft) -> Result<InsertOutcome> {
        self.validate(&draft).map_err(|reason| Error::Corrupt {
            record: self.records.len(),
            reason,
        })?;
        if is_monotonous(&draft.notes, self.min_unique) {
            return Ok(InsertOutcome::Monotonous);
        }
        let key = self.dedup_key(&draft);
        if self.seen.contains(&key) {
            return Ok(InsertOutcome::Duplicate);
        }
        self.seen.insert(key);
        let id = self.records.len() as u32;
        let fragment = Fragment {
            id,
            notes: draft.notes,
            structure: draft.structure,
            chords: draft.chords,
            tonality: draft.tonality,
            bar_count: draft.bar_count,
        };
        self.index
            .entry((fragment.length(), fragment.tonality.mode, fragment.structure))
            .or_default()
            .push(id);
        self.chord_strings.push(fragment.chord_string());
        self.records.push(fragment);
        Ok(InsertOutcome::Inserted(id))
    }

    /// Ids stored under an exact (length, mode, structure) key, ascending.
    pub fn ids_for(&self, length: usize, mode: Mode, structure: StructureLabel) -> &[u32] {
        self.index.get(&(length, mode, structure)).map_or(&[], Vec::as_slice)
    }

    pub fn stored_chord_string(&self, id: u32) -> &str {
        &self.chord_strings[id as usize]
    }

    /// Fragments under the exact key whose chord string fully matches
    /// `chord_pattern`, in ascending id order.
    pub fn query(
        &self,
        length: usize,
        mode: Mode,
        structure: StructureLabel,
        chord_pattern: &str,
    ) -> Result<Vec<&Fragment>> {
        let re = compile_anchored(chord_pattern)?;
        Ok(self.query_regex(length, mode, structure, &re))
    }

    pub fn query_regex(&self, length: usize, mode: Mode, structure: StructureLabel, re: &Regex) -> Vec<&Fragment> {
        self.ids_for(length, mode, structure)
            .iter()
            .filter(|&&id| re.is_match(self.stored_chord_string(id)))
            .map(|&id| &self.records[id as usize])
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{DB_MAGIC}\tversion={DB_VERSION}\ttpq={}\tbeats={}\tcount={}",
            self.tb.ticks_per_quarter,
            self.tb.beats_per_bar,
            self.records.len()
        )?;
        for f in &self.records {
            let notes: Vec<String> = f
                .notes
                .iter()
                .map(|n| format!("{}:{}:{}", n.pitch, n.onset, n.duration))
                .collect();
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                f.id,
                f.length(),
                f.bar_count,
                f.structure,
                f.tonality.mode,
                f.tonality.key_root,
                self.chord_strings[f.id as usize],
                notes.join(",")
            )?;
        }
        Ok(())
    }

    /// Parses a whole database; any defect fails the load.
    pub fn read_from<R: BufRead>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input.read_to_string(&mut text).map_err(|e| Error::Corrupt {
            record: 0,
            reason: e.to_string(),
        })?;
        if !text.ends_with('\n') {
            return Err(Error::Corrupt {
                record: 0,
                reason: "file does not end with a newline (truncated?)".into(),
            });
        }
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let (tb, count) = parse_header(header)?;
        let mut db = FragmentDatabase::new(tb);
        let mut n = 0;
        for (i, line) in lines.enumerate() {
            let record = i + 1;
            let corrupt = |reason: String| Error::Corrupt { record, reason };
            let draft = parse_record(line, record - 1).map_err(corrupt)?;
            match db.insert(draft).map_err(|e| corrupt(e.to_string()))? {
                InsertOutcome::Inserted(_) => {}
                InsertOutcome::Duplicate => return Err(corrupt("duplicate fragment".into())),
                InsertOutcome::Monotonous => return Err(corrupt("monotonous fragment".into())),
            }
            n += 1;
        }
        if n != count {
            return Err(Error::Corrupt {
                record: n,
                reason: format!("header declares {count} records, found {n}"),
            });
        }
        Ok(db)
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

/// Compiles a chord pattern so that it must match a whole chord string.
pub fn compile_anchored(pattern: &str) -> Result<Regex> {
    Regex::new(&format!("^(?:{pattern})$")).map_err(|e| Error::Pattern(e.to_string()))
}

fn parse_header(header: &str) -> Result<(TimeBase, usize)> {
    let bad = |reason: &str| Error::Corrupt {
        record: 0,
        reason: reason.to_string(),
    };
    let mut fields = header.split('\t');
    if fields.next() != Some(DB_MAGIC) {
        return Err(bad("missing database header"));
    }
    let mut kv: HashMap<&str, &str> = HashMap::new();
    for f in fields {
        let (k, v) = f.split_once('=').ok_or_else(|| bad("malformed header field"))?;
        kv.insert(k, v);
    }
    let version = kv.get("version").copied().unwrap_or("");
    if version != DB_VERSION.to_string() {
        return Err(Error::Version {
            found: version.to_string(),
            expected: DB_VERSION,
        });
    }
    let num = |k: &str| -> Result<u32> {
        kv.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(&format!("missing or invalid {k}")))
    };
    let tb = TimeBase::new(num("tpq")?, num("beats")?).map_err(|e| bad(&e.to_string()))?;
    Ok((tb, num("count")? as usize))
}

fn parse_record(line: &str, expected_id: usize) -> std::result::Result<FragmentDraft, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 8 {
        return Err(format!("expected 8 fields, found {}", fields.len()));
    }
    let id: usize = fields[0].parse().map_err(|_| "bad id")?;
    if id != expected_id {
        return Err(format!("id {id} out of sequence (expected {expected_id})"));
    }
    let length: usize = fields[1].parse().map_err(|_| "bad length")?;
    let bar_count: usize = fields[2].parse().map_err(|_| "bad bar count")?;
    let structure: StructureLabel = fields[3].parse().map_err(|e: Error| e.to_string())?;
    let mode: Mode = fields[4].parse().map_err(|e: Error| e.to_string())?;
    let key_root: u8 = fields[5].parse().map_err(|_| "bad key root")?;
    if key_root != Tonality::normalized(mode).key_root {
        return Err(format!("key root {key_root} is not normalized for {mode}"));
    }
    let chords = parse_chords(fields[6]).map_err(|e| e.to_string())?;
    let notes = fields[7]
        .split(',')
        .map(|triple| {
            let mut it = triple.split(':').map(str::parse::<u32>);
            match (it.next(), it.next(), it.next(), it.next()) {
                (Some(Ok(p)), Some(Ok(o)), Some(Ok(d)), None) if p <= 127 && d > 0 => Ok(Note::new(p as u8, o, d)),
                _ => Err(format!("bad note {triple:?}")),
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if notes.len() != length {
        return Err(format!("length {length} but {} notes", notes.len()));
    }
    Ok(FragmentDraft {
        notes,
        structure,
        chords,
        tonality: Tonality { mode, key_root },
        bar_count,
    })
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub top_k: usize,
    pub seed: u64,
    pub min_unique: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            top_k: 5,
            seed: 0,
            min_unique: DEFAULT_MIN_UNIQUE_PITCHES,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub melodies: usize,
    pub short_melodies: usize,
    pub windows: usize,
    pub empty_contexts: usize,
    /// Generations identical to the true continuation.
    pub unoriginal: usize,
    pub surviving: usize,
    pub candidates: usize,
    pub duplicates: usize,
    pub monotonous: usize,
    pub records: usize,
}

struct Candidate {
    notes: Vec<Note>,
    bar_count: usize,
    chords: Vec<ChordSymbol>,
    mode: Mode,
}

fn window_seed(master: u64, melody: usize, window: usize) -> u64 {
    let mut z = master
        ^ (melody as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (window as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rebase(notes: &[Note], start: u32) -> Vec<Note> {
    notes.iter().map(|n| n.shifted(n.onset - start)).collect()
}

/// Runs the creation stage over key-normalized seed melodies.
///
/// Every two-bar window (stride two bars) with two following bars is
/// continued by the model; continuations equal to the real next two bars are
/// dropped, and each survivor yields one fragment per non-empty bar plus one
/// two-bar fragment. Structure labels use medians over all candidates.
pub fn build_database<M: MelodyLm + ?Sized>(
    seeds: &[Vec<Note>],
    model: &M,
    tb: &TimeBase,
    config: &BuildConfig,
) -> Result<(FragmentDatabase, BuildStats)> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed melodies"));
    }
    if model.vocabulary().is_empty() {
        return Err(Error::Model("model is untrained".into()));
    }
    let bar = tb.bar_ticks();
    let mut stats = BuildStats {
        melodies: seeds.len(),
        ..Default::default()
    };
    let mut candidates = Vec::new();

    for (m, melody) in seeds.iter().enumerate() {
        let bars = split_into_bars(melody, tb);
        if bars.len() < 4 {
            stats.short_melodies += 1;
            continue;
        }
        let mut w = 0;
        while w + 4 <= bars.len() {
            stats.windows += 1;
            let start = w as u32 * bar;
            let context: Vec<Note> = rebase(&[&bars[w][..], &bars[w + 1][..]].concat(), start);
            if context.is_empty() {
                stats.empty_contexts += 1;
                w += 2;
                continue;
            }
            let truth = rebase(&[&bars[w + 2][..], &bars[w + 3][..]].concat(), start + 2 * bar);
            let context_tokens = tokenize(&context, tb)?;
            let generated = generate_continuation(
                model,
                &context_tokens,
                2,
                tb,
                config.top_k,
                window_seed(config.seed, m, w),
            )?;
            if tokenize_from(&generated.notes, 0, tb)? == tokenize_from(&truth, 0, tb)? {
                stats.unoriginal += 1;
                w += 2;
                continue;
            }
            stats.surviving += 1;

            let mut gen_bars = split_into_bars(&generated.notes, tb);
            gen_bars.resize_with(2, Vec::new);
            let shifted: Vec<Note> = generated.notes.iter().map(|n| n.shifted(n.onset + 2 * bar)).collect();
            let mode = normalized_mode(&[&context[..], &shifted[..]].concat());
            let context_bars = split_into_bars(&context, tb);
            let mut all_bars: Vec<Vec<Note>> = context_bars;
            all_bars.resize_with(2, Vec::new);
            all_bars.extend(gen_bars.iter().cloned());
            let chords = infer_chords(&all_bars, &Tonality::normalized(mode));
            let gen_chords = [chords[2], chords[3]];

            for (b, notes) in gen_bars.iter().enumerate() {
                if !notes.is_empty() {
                    candidates.push(Candidate {
                        notes: rebase(notes, b as u32 * bar),
                        bar_count: 1,
                        chords: vec![gen_chords[b]],
                        mode,
                    });
                }
            }
            candidates.push(Candidate {
                notes: gen_bars.concat(),
                bar_count: 2,
                chords: gen_chords.to_vec(),
                mode,
            });
            w += 2;
        }
    }

    stats.candidates = candidates.len();
    let mut db = FragmentDatabase::new(*tb).with_min_unique(config.min_unique);
    if candidates.is_empty() {
        return Ok((db, stats));
    }
    let corpus = CorpusStats::from_fragments(candidates.iter().map(|c| (&c.notes[..], c.bar_count)))?;
    for c in candidates {
        let structure = label_structure(&c.notes, c.bar_count, &corpus)?;
        let outcome = db.insert(FragmentDraft {
            notes: c.notes,
            structure,
            chords: c.chords,
            tonality: Tonality::normalized(c.mode),
            bar_count: c.bar_count,
        })?;
        match outcome {
            InsertOutcome::Inserted(_) => stats.records += 1,
            InsertOutcome::Duplicate => stats.duplicates += 1,
            InsertOutcome::Monotonous => stats.monotonous += 1,
        }
    }
    Ok((db, stats))
}
