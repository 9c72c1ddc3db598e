//! Chord-string patterns that let a fragment stay on the current chord or
//! advance along a cyclic progression.

use regex::Regex;

use crate::db::compile_anchored;
use crate::error::{Error, Result};
use crate::features::ChordSymbol;

/// A compiled alternation together with its individual branches, so callers
/// can tell which branch a chord string matches first.
#[derive(Debug, Clone)]
pub struct ChordPattern {
    pub text: String,
    pub full: Regex,
    branches: Vec<Regex>,
}

impl ChordPattern {
    fn from_branches(branch_texts: Vec<String>) -> Result<Self> {
        let text = branch_texts.join("|");
        let full = compile_anchored(&text)?;
        let branches = branch_texts
            .iter()
            .map(|b| compile_anchored(b))
            .collect::<Result<_>>()?;
        Ok(ChordPattern { text, full, branches })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let branches = text.split('|').map(str::to_string).collect();
        Self::from_branches(branches)
    }

    /// `^T( T)*$`: any number of bars on a single chord.
    pub fn stay_on(chord: &ChordSymbol) -> Result<Self> {
        Self::from_branches(vec![stay_branch(chord)])
    }

    pub fn is_match(&self, chords: &str) -> bool {
        self.full.is_match(chords)
    }

    /// 0-based index of the first branch matching `chords`, scanning left to
    /// right as an alternation does.
    pub fn branch_rank(&self, chords: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.is_match(chords))
    }

    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }
}

fn stay_branch(chord: &ChordSymbol) -> String {
    let x = regex::escape(&chord.to_string());
    format!("^{x}( {x})*$")
}

/// Pattern text for a progression phase: from most varied (walking through
/// every other chord of the cycle) down to staying on the current chord.
pub fn chord_regex_at(progression: &[ChordSymbol], position: usize) -> Result<String> {
    if progression.is_empty() {
        return Err(Error::Empty("chord progression"));
    }
    let n = progression.len();
    let chord_at = |i: usize| regex::escape(&progression[(position + i) % n].to_string());
    let mut branches = Vec::with_capacity(n);
    for reach in (1..n).rev() {
        let mut b = format!("^{0}( {0})*", chord_at(0));
        for i in 1..reach {
            b.push_str(&format!("( {})+", chord_at(i)));
        }
        b.push_str(&format!("( {})*$", chord_at(reach)));
        branches.push(b);
    }
    branches.push(stay_branch(&progression[position % n]));
    Ok(branches.join("|"))
}

/// Pattern text continuing from `last_chord`, or from the start of the
/// progression when there is no context yet.
pub fn build_chord_regex(progression: &[ChordSymbol], last_chord: Option<&ChordSymbol>) -> Result<String> {
    let position = match last_chord {
        None => 0,
        Some(c) => progression
            .iter()
            .position(|p| p == c)
            .ok_or_else(|| Error::Pattern(format!("chord {c} is not in the progression")))?,
    };
    chord_regex_at(progression, position)
}

pub fn compile_chord_pattern(progression: &[ChordSymbol], position: usize) -> Result<ChordPattern> {
    ChordPattern::parse(&chord_regex_at(progression, position)?)
}

/// Progression position after walking `chords` from `position`, where each
/// chord either repeats the current one or moves to the next.
pub fn advance_position(progression: &[ChordSymbol], mut position: usize, chords: &[ChordSymbol]) -> usize {
    let n = progression.len();
    for c in chords {
        if *c == progression[position] {
            continue;
        }
        if *c == progression[(position + 1) % n] {
            position = (position + 1) % n;
        } else if let Some(p) = progression.iter().position(|x| x == c) {
            position = p;
        }
    }
    position
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::parse_chords;

    #[test]
    fn four_chord_alternation() {
        let prog = parse_chords("G C Am F").unwrap();
        let text = build_chord_regex(&prog, prog.first()).unwrap();
        assert_eq!(
            text,
            "^G( G)*( C)+( Am)+( F)*$|^G( G)*( C)+( Am)*$|^G( G)*( C)*$|^G( G)*$"
        );
        let p = ChordPattern::parse(&text).unwrap();
        for ok in ["G C Am", "G C Am F", "G C", "G G", "G"] {
            assert!(p.is_match(ok), "{ok}");
        }
        for bad in ["G Am", "C", "G C G", "Am"] {
            assert!(!p.is_match(bad), "{bad}");
        }
        assert_eq!(p.branch_rank("G C Am"), Some(0));
        assert_eq!(p.branch_rank("G C"), Some(1));
        assert_eq!(p.branch_rank("G G"), Some(2));
    }

    #[test]
    fn literal_reference_pattern_agrees() {
        // The published first branch, checked with the regex crate directly.
        let re = Regex::new(r"^G( G)*( C)+( Am)+( F)*$").unwrap();
        assert!(re.is_match("G C Am"));
        assert!(!re.is_match("G C"));
        assert!(!re.is_match("G Am"));
    }

    #[test]
    fn single_chord_progression() {
        let prog = parse_chords("C").unwrap();
        let text = build_chord_regex(&prog, None).unwrap();
        assert_eq!(text, "^C( C)*$");
        let p = ChordPattern::parse(&text).unwrap();
        assert!(p.is_match("C") && p.is_match("C C") && !p.is_match("Am"));
    }

    #[test]
    fn wraps_around_and_rejects_unknown() {
        let prog = parse_chords("C G Am F").unwrap();
        let text = build_chord_regex(&prog, Some(&prog[3])).unwrap();
        assert!(text.starts_with("^F( F)*( C)+( G)+( Am)*$"));
        let em = "Em".parse().unwrap();
        assert!(matches!(build_chord_regex(&prog, Some(&em)), Err(Error::Pattern(_))));
        assert!(build_chord_regex(&[], None).is_err());
    }

    #[test]
    fn position_tracking() {
        let prog = parse_chords("C G Am F").unwrap();
        assert_eq!(advance_position(&prog, 0, &parse_chords("C G").unwrap()), 1);
        assert_eq!(advance_position(&prog, 3, &parse_chords("F C").unwrap()), 0);
        assert_eq!(advance_position(&prog, 2, &parse_chords("Am Am").unwrap()), 2);
    }
}
