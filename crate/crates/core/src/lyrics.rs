//! Lyric features: syllable counts, sentiment-driven tonality, and
//! repeat-based structure recognition.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::{Mode, StructureLabel, Tonality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Language {
    English,
    Chinese,
    /// Each line is its own syllable count; used for language-free testing.
    Numeric,
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "english" => Ok(Language::English),
            "chinese" => Ok(Language::Chinese),
            "numeric" => Ok(Language::Numeric),
            _ => Err(Error::Config(format!(
                "unknown language {s:?} (expected english, chinese or numeric)"
            ))),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::English => "english",
            Language::Chinese => "chinese",
            Language::Numeric => "numeric",
        })
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0x20000..=0x2A6DF | 0xF900..=0xFAFF)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel pairs that are usually sung as two syllables ("cham-pi-ons").
const HIATUS: [&str; 5] = ["ia", "io", "eo", "ua", "uo"];

/// English syllable splitting by vowel groups, with an exception list.
#[derive(Debug, Clone, Default)]
pub struct SyllableCounter {
    exceptions: HashMap<String, usize>,
}

impl SyllableCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_exception(mut self, word: &str, syllables: usize) -> Self {
        self.exceptions.insert(word.to_lowercase(), syllables.max(1));
        self
    }

    /// Vowel-group count minus a silent final "e", with common hiatus pairs
    /// split, and never below one.
    pub fn english_word(&self, word: &str) -> usize {
        let w: String = word
            .chars()
            .filter(|c| c.is_alphabetic())
            .flat_map(char::to_lowercase)
            .collect();
        if w.is_empty() {
            return 0;
        }
        if let Some(&n) = self.exceptions.get(&w) {
            return n;
        }
        let chars: Vec<char> = w.chars().collect();
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if is_vowel(chars[i]) && !(chars[i] == 'y' && i == 0) {
                let start = i;
                while i < chars.len() && is_vowel(chars[i]) {
                    i += 1;
                }
                groups.push((start, i));
            } else {
                i += 1;
            }
        }
        let mut count = groups.len();
        for &(start, end) in &groups {
            let group: String = chars[start..end].iter().collect();
            let preceded_by_sibilant = start > 0 && matches!(chars[start - 1], 't' | 's' | 'c' | 'x' | 'g');
            if !preceded_by_sibilant && HIATUS.iter().any(|h| group.contains(h)) {
                count += 1;
            }
        }
        let n = chars.len();
        let silent_e = n >= 2
            && chars[n - 1] == 'e'
            && groups.last() == Some(&(n - 1, n))
            && !(n >= 3 && chars[n - 2] == 'l' && !is_vowel(chars[n - 3]));
        if silent_e && count > 1 {
            count -= 1;
        }
        count.max(1)
    }

    pub fn count(&self, line: &str, language: Language) -> Result<usize> {
        let text = line.trim();
        if text.is_empty() {
            return Err(Error::Lyric {
                line: 0,
                reason: "blank line".into(),
            });
        }
        let n = match language {
            Language::English => text.split_whitespace().map(|w| self.english_word(w)).sum(),
            Language::Chinese => text.chars().filter(|&c| is_cjk(c)).count(),
            Language::Numeric => text.parse::<usize>().map_err(|_| Error::Lyric {
                line: 0,
                reason: format!("{text:?} is not a syllable count"),
            })?,
        };
        if n == 0 {
            return Err(Error::Lyric {
                line: 0,
                reason: format!("no syllables in {text:?}"),
            });
        }
        Ok(n)
    }

    /// Text for each syllable, used for MIDI lyric events. English words are
    /// attached to their first syllable with "-" continuation marks.
    pub fn syllable_texts(&self, line: &str, language: Language) -> Result<Vec<String>> {
        let n = self.count(line, language)?;
        Ok(match language {
            Language::English => line
                .split_whitespace()
                .flat_map(|w| {
                    let k = self.english_word(w);
                    let mut parts = vec![w.to_string()];
                    parts.extend((1..k).map(|_| "-".to_string()));
                    if k == 0 {
                        parts.clear();
                    }
                    parts
                })
                .collect(),
            Language::Chinese => line.chars().filter(|&c| is_cjk(c)).map(String::from).collect(),
            Language::Numeric => vec!["la".to_string(); n],
        })
    }
}

pub fn count_syllables(line: &str, language: Language) -> Result<usize> {
    SyllableCounter::new().count(line, language)
}

/// Word polarities in {+1, -1}.
#[derive(Debug, Clone, Default)]
pub struct SentimentLexicon {
    words: HashMap<String, i32>,
}

const POSITIVE: &[&str] = &[
    "love",
    "happy",
    "joy",
    "bright",
    "smile",
    "sun",
    "sunshine",
    "dream",
    "hope",
    "shine",
    "dance",
    "free",
    "beautiful",
    "sweet",
    "warm",
    "together",
    "laugh",
    "alive",
    "glory",
    "victory",
    "winner",
    "win",
    "good",
    "best",
    "light",
    "heaven",
    "friend",
    "friends",
    "爱",
    "快乐",
    "幸福",
    "阳光",
    "微笑",
    "希望",
    "梦想",
    "美丽",
    "温暖",
    "自由",
];
const NEGATIVE: &[&str] = &[
    "sad", "cry", "tears", "alone", "lonely", "pain", "hurt", "dark", "cold", "lost", "broken", "goodbye", "die",
    "dead", "fear", "sorrow", "rain", "gone", "never", "empty", "blue", "哭", "泪", "孤单", "寂寞", "伤心", "痛",
    "离开", "失去", "黑暗", "冷",
];

impl SentimentLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// A small built-in English and Chinese word list.
    pub fn builtin() -> Self {
        let mut lex = Self::new();
        for w in POSITIVE {
            lex.insert(w, 1);
        }
        for w in NEGATIVE {
            lex.insert(w, -1);
        }
        lex
    }

    pub fn insert(&mut self, word: &str, polarity: i32) {
        self.words.insert(word.to_lowercase(), polarity.signum());
    }

    /// Parses `word<TAB>+1` / `word<TAB>-1` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(word), Some(pol), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Lyric {
                    line: i + 1,
                    reason: "expected `word polarity`".into(),
                });
            };
            let pol: i32 = pol.trim_start_matches('+').parse().map_err(|_| Error::Lyric {
                line: i + 1,
                reason: format!("bad polarity {pol:?}"),
            })?;
            lex.insert(word, pol);
        }
        Ok(lex)
    }

    /// Sum of polarities: whole words for alphabetic entries, substring
    /// occurrences for CJK entries.
    pub fn polarity<S: AsRef<str>>(&self, lines: &[S]) -> i32 {
        let mut sum = 0;
        for line in lines {
            let line = line.as_ref();
            for word in line.split(|c: char| !(c.is_alphanumeric() || c == '\'')) {
                if word.is_empty() || word.chars().any(is_cjk) {
                    continue;
                }
                sum += self.words.get(&word.to_lowercase()).copied().unwrap_or(0);
            }
            for (w, p) in &self.words {
                if w.chars().any(is_cjk) {
                    sum += p * line.matches(w.as_str()).count() as i32;
                }
            }
        }
        sum
    }
}

/// C major for non-negative total polarity, A minor otherwise, unless
/// `override_mode` is given.
pub fn sentiment_tonality<S: AsRef<str>>(
    lines: &[S],
    lexicon: &SentimentLexicon,
    override_mode: Option<Mode>,
) -> Tonality {
    if let Some(mode) = override_mode {
        return Tonality::normalized(mode);
    }
    if lexicon.polarity(lines) >= 0 {
        Tonality::C_MAJOR
    } else {
        Tonality::A_MINOR
    }
}

/// A length-`len` pattern occurring `count` times without overlap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepeatFind {
    pub len: usize,
    pub count: usize,
    /// 1-based start of each occurrence, ascending.
    pub positions: Vec<usize>,
    /// 1-based original indices covered by each occurrence; contiguous in the
    /// unmasked subsequence but possibly spanning masked positions.
    pub occurrences: Vec<Vec<usize>>,
}

/// Finds the longest pattern (longer than `g`) that repeats without overlap in
/// the unmasked part of `s`. Among equally long patterns the one that occurs
/// first wins; occurrences are taken greedily from the left, which gives the
/// largest count.
pub fn find_longest_repeat(s: &[usize], mask: &[bool], g: usize) -> Option<RepeatFind> {
    assert_eq!(s.len(), mask.len(), "mask length must match the string");
    let idx: Vec<usize> = (0..s.len()).filter(|&i| !mask[i]).collect();
    let r: Vec<usize> = idx.iter().map(|&i| s[i]).collect();
    let m = r.len();
    for len in (g + 1..=m / 2).rev() {
        for i in 0..=m - 2 * len {
            let pat = &r[i..i + len];
            if !(i + len..=m - len).any(|j| &r[j..j + len] == pat) {
                continue;
            }
            let mut starts = vec![i];
            let mut j = i + len;
            while j + len <= m {
                if &r[j..j + len] == pat {
                    starts.push(j);
                    j += len;
                } else {
                    j += 1;
                }
            }
            let occurrences: Vec<Vec<usize>> = starts
                .iter()
                .map(|&st| idx[st..st + len].iter().map(|&o| o + 1).collect())
                .collect();
            return Some(RepeatFind {
                len,
                count: starts.len(),
                positions: occurrences.iter().map(|o| o[0]).collect(),
                occurrences,
            });
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureAnalysis {
    /// 0 = compose independently; otherwise the 1-based line to copy.
    pub struct_array: Vec<usize>,
    /// 1-based lines covered by the first (longest) repeat.
    pub chorus: BTreeSet<usize>,
    pub repeats: Vec<RepeatFind>,
}

pub const DEFAULT_GRANULARITY: usize = 2;

/// Repeatedly takes the longest repeat, points every later occurrence at the
/// first one element by element, and removes all occurrences from further
/// search. The first repeat found is the chorus.
pub fn recognize_structure(s: &[usize], g: usize) -> StructureAnalysis {
    let mut struct_array = vec![0; s.len()];
    let mut mask = vec![false; s.len()];
    let mut chorus = BTreeSet::new();
    let mut repeats = Vec::new();
    while let Some(rep) = find_longest_repeat(s, &mask, g) {
        let first = &rep.occurrences[0];
        for occ in &rep.occurrences[1..] {
            for (&later, &earlier) in occ.iter().zip(first) {
                struct_array[later - 1] = earlier;
            }
        }
        for &i in rep.occurrences.iter().flatten() {
            mask[i - 1] = true;
        }
        if repeats.is_empty() {
            chorus.extend(rep.occurrences.iter().flatten().copied());
        }
        repeats.push(rep);
    }
    StructureAnalysis {
        struct_array,
        chorus,
        repeats,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyricLine {
    pub text: String,
    pub syllables: usize,
    pub struct_index: usize,
    pub structure: StructureLabel,
    pub syllable_texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyricSheet {
    pub lines: Vec<LyricLine>,
    pub syllable_counts: Vec<usize>,
    pub tonality: Tonality,
    pub language: Language,
    pub analysis: StructureAnalysis,
}

#[derive(Debug, Clone)]
pub struct LyricOptions {
    pub language: Language,
    pub granularity: usize,
    pub tonality_override: Option<Mode>,
    pub lexicon: SentimentLexicon,
    pub counter: SyllableCounter,
}

impl Default for LyricOptions {
    fn default() -> Self {
        LyricOptions {
            language: Language::English,
            granularity: DEFAULT_GRANULARITY,
            tonality_override: None,
            lexicon: SentimentLexicon::builtin(),
            counter: SyllableCounter::new(),
        }
    }
}

impl LyricSheet {
    /// Parses UTF-8 lyrics, one line per text line, skipping blank lines.
    pub fn parse(text: &str, opts: &LyricOptions) -> Result<Self> {
        let raw: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if raw.is_empty() {
            return Err(Error::Empty("lyrics"));
        }
        let mut counts = Vec::with_capacity(raw.len());
        let mut texts = Vec::with_capacity(raw.len());
        for (i, line) in raw.iter().enumerate() {
            let with_line = |e: Error| match e {
                Error::Lyric { reason, .. } => Error::Lyric { line: i + 1, reason },
                other => other,
            };
            counts.push(opts.counter.count(line, opts.language).map_err(with_line)?);
            texts.push(opts.counter.syllable_texts(line, opts.language).map_err(with_line)?);
        }
        let analysis = recognize_structure(&counts, opts.granularity);
        let tonality = match opts.language {
            Language::Numeric => sentiment_tonality::<&str>(&[], &opts.lexicon, opts.tonality_override),
            _ => sentiment_tonality(&raw, &opts.lexicon, opts.tonality_override),
        };
        let lines = raw
            .iter()
            .zip(texts)
            .enumerate()
            .map(|(i, (text, syllable_texts))| LyricLine {
                text: text.to_string(),
                syllables: counts[i],
                struct_index: analysis.struct_array[i],
                structure: if analysis.chorus.contains(&(i + 1)) {
                    StructureLabel::Chorus
                } else {
                    StructureLabel::Verse
                },
                syllable_texts,
            })
            .collect();
        Ok(LyricSheet {
            lines,
            syllable_counts: counts,
            tonality,
            language: opts.language,
            analysis,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn english_syllables() {
        assert_eq!(count_syllables("we are the guardians", Language::English).unwrap(), 6);
        let c = SyllableCounter::new();
        assert_eq!(c.english_word("nation"), 2);
        assert_eq!(c.english_word("table"), 2);
        assert_eq!(c.english_word("time"), 1);
        assert_eq!(c.english_word("friends"), 1);
        assert_eq!(c.english_word("world"), 1);
        assert_eq!(c.english_word("my"), 1);
        assert_eq!(c.with_exception("fire", 2).english_word("Fire"), 2);
        assert!(count_syllables("   ", Language::English).is_err());
    }

    #[test]
    fn chinese_and_numeric() {
        assert_eq!(count_syllables("好好好好好好好", Language::Chinese).unwrap(), 7);
        assert_eq!(count_syllables("一路向北，", Language::Chinese).unwrap(), 4);
        assert_eq!(count_syllables("12", Language::Numeric).unwrap(), 12);
        assert!(count_syllables("twelve", Language::Numeric).is_err());
        assert!(count_syllables("0", Language::Numeric).is_err());
    }

    #[test]
    fn syllable_texts_line_up() {
        let c = SyllableCounter::new();
        let t = c.syllable_texts("we are the guardians", Language::English).unwrap();
        assert_eq!(t, ["we", "are", "the", "guardians", "-", "-"]);
    }

    #[test]
    fn sentiment() {
        let lex = SentimentLexicon::parse("sad -1\nhappy +1\n").unwrap();
        assert_eq!(
            sentiment_tonality(&["so happy"], &lex, Some(Mode::Minor)),
            Tonality::A_MINOR
        );
        assert_eq!(sentiment_tonality(&["who knows"], &lex, None), Tonality::C_MAJOR);
        assert_eq!(
            sentiment_tonality(&["sad sad", "so sad today"], &lex, None),
            Tonality::A_MINOR
        );
        assert!(SentimentLexicon::parse("word").is_err());
        let builtin = SentimentLexicon::builtin();
        assert_eq!(builtin.polarity(&["我很伤心"]), -1);
    }

    #[test]
    fn repeats() {
        let none = vec![false; 3];
        assert_eq!(find_longest_repeat(&[7, 8, 9], &none, 2), None);
        let s = [5, 6, 7, 2, 5, 6, 7];
        let r = find_longest_repeat(&s, &[false; 7], 2).unwrap();
        assert_eq!((r.len, r.count, r.positions.clone()), (3, 2, vec![1, 5]));
        assert_eq!(find_longest_repeat(&[5, 6, 5, 6], &[false; 4], 2), None);
    }

    #[test]
    fn masked_positions_are_skipped() {
        // 1 2 3 [9] 1 2 3 with the 9 masked: occurrences are contiguous in
        // the reduced string.
        let s = [1, 2, 3, 9, 1, 2, 3];
        let mut mask = [false; 7];
        mask[3] = true;
        let r = find_longest_repeat(&s, &mask, 2).unwrap();
        assert_eq!(r.occurrences, vec![vec![1, 2, 3], vec![5, 6, 7]]);
        // A pattern spanning the masked gap.
        let s = [4, 1, 9, 2, 3, 4, 1, 2, 3];
        let mut mask = [false; 9];
        mask[2] = true;
        let r = find_longest_repeat(&s, &mask, 2).unwrap();
        assert_eq!(r.occurrences, vec![vec![1, 2, 4, 5], vec![6, 7, 8, 9]]);
    }

    #[test]
    fn structure_examples() {
        let a = recognize_structure(&[7, 8, 9], 2);
        assert_eq!(a.struct_array, vec![0, 0, 0]);
        assert!(a.chorus.is_empty());

        let a = recognize_structure(&[5, 6, 7, 2, 5, 6, 7], 2);
        assert_eq!(a.struct_array, vec![0, 0, 0, 0, 1, 2, 3]);
        assert_eq!(a.chorus, BTreeSet::from([1, 2, 3, 5, 6, 7]));

        let a = recognize_structure(&[8, 8, 8, 8], 2);
        assert_eq!(a.struct_array, vec![0, 0, 0, 0]);
    }

    #[test]
    fn three_occurrences() {
        let a = recognize_structure(&[1, 2, 3, 1, 2, 3, 1, 2, 3], 2);
        assert_eq!(a.struct_array, vec![0, 0, 0, 1, 2, 3, 1, 2, 3]);
    }

    #[test]
    fn sheet_parsing() {
        let opts = LyricOptions {
            language: Language::Numeric,
            ..Default::default()
        };
        let sheet = LyricSheet::parse("5\n6\n\n7\n2\n5\n6\n7\n", &opts).unwrap();
        assert_eq!(sheet.syllable_counts, vec![5, 6, 7, 2, 5, 6, 7]);
        assert_eq!(sheet.lines[4].struct_index, 1);
        assert_eq!(sheet.lines[3].structure, StructureLabel::Verse);
        assert_eq!(sheet.lines[0].structure, StructureLabel::Chorus);
        assert!(matches!(
            LyricSheet::parse("5\nx\n", &opts),
            Err(Error::Lyric { line: 2, .. })
        ));
        assert!(LyricSheet::parse("\n\n", &opts).is_err());
    }

    proptest! {
        #[test]
        fn struct_points_back_to_equal_counts(s in prop::collection::vec(1usize..5, 1..30), g in 1usize..4) {
            let a = recognize_structure(&s, g);
            for (i, &t) in a.struct_array.iter().enumerate() {
                if t > 0 {
                    prop_assert!(t < i + 1);
                    prop_assert_eq!(s[t - 1], s[i]);
                }
            }
            let bound = s.len().div_ceil(2 * (g + 1));
            prop_assert!(a.repeats.len() <= bound.max(1));
            let mut covered = BTreeSet::new();
            for r in &a.repeats {
                prop_assert!(r.len > g && r.count >= 2);
                for &i in r.occurrences.iter().flatten() {
                    prop_assert!(covered.insert(i));
                }
            }
        }
    }
}
