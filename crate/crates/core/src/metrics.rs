//! Objective metrics: n-gram diversity (Dist-n), n-gram entropy (Ent-n) and
//! chorus IoU.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::melody::NoteToken;

fn ngram_counts(tokens: &[NoteToken], n: usize) -> Result<HashMap<&[NoteToken], usize>> {
    if n == 0 || tokens.len() < n {
        return Err(Error::Empty("sequence shorter than n"));
    }
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Unique n-grams over total n-grams.
pub fn dist_n(tokens: &[NoteToken], n: usize) -> Result<f64> {
    let counts = ngram_counts(tokens, n)?;
    Ok(counts.len() as f64 / (tokens.len() - n + 1) as f64)
}

/// Shannon entropy (natural log) of the empirical n-gram distribution.
pub fn ent_n(tokens: &[NoteToken], n: usize) -> Result<f64> {
    let counts = ngram_counts(tokens, n)?;
    let total = (tokens.len() - n + 1) as f64;
    let h: f64 = counts
        .values()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    // A single n-gram sums to -0.0.
    Ok(h.max(0.0) + 0.0)
}

/// Intersection over union; two empty sets count as a perfect match.
pub fn iou(predicted: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> f64 {
    let union = predicted.union(truth).count();
    if union == 0 {
        return 1.0;
    }
    predicted.intersection(truth).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SongMetrics {
    pub name: String,
    pub dist_1: f64,
    pub dist_2: f64,
    pub ent_1: f64,
    pub ent_2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub dist_1: f64,
    pub dist_2: f64,
    pub ent_1: f64,
    pub ent_2: f64,
    pub songs: Vec<SongMetrics>,
}

impl MetricReport {
    pub fn compute<S: AsRef<str>>(songs: &[(S, Vec<NoteToken>)]) -> Result<Self> {
        if songs.is_empty() {
            return Err(Error::Empty("songs to evaluate"));
        }
        let mut rows = Vec::with_capacity(songs.len());
        for (name, tokens) in songs {
            rows.push(SongMetrics {
                name: name.as_ref().to_string(),
                dist_1: dist_n(tokens, 1)?,
                dist_2: dist_n(tokens, 2)?,
                ent_1: ent_n(tokens, 1)?,
                ent_2: ent_n(tokens, 2)?,
            });
        }
        let mean = |f: fn(&SongMetrics) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
        Ok(MetricReport {
            dist_1: mean(|r| r.dist_1),
            dist_2: mean(|r| r.dist_2),
            ent_1: mean(|r| r.ent_1),
            ent_2: mean(|r| r.ent_2),
            songs: rows,
        })
    }

    /// Tab-separated table, one row per song plus a mean row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("song\tDist-1\tDist-2\tEnt-1\tEnt-2\n");
        for r in &self.songs {
            let _ = writeln!(
                out,
                "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                r.name, r.dist_1, r.dist_2, r.ent_1, r.ent_2
            );
        }
        let _ = writeln!(
            out,
            "mean\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            self.dist_1, self.dist_2, self.ent_1, self.ent_2
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(p: u8) -> NoteToken {
        NoteToken::new(p, 1, 0)
    }

    #[test]
    fn dist_examples() {
        let (a, b, c) = (t(60), t(62), t(64));
        assert_eq!(dist_n(&[a, b, c], 1).unwrap(), 1.0);
        assert_eq!(dist_n(&[a, b, a, c], 1).unwrap(), 0.75);
        assert_eq!(dist_n(&[a, a, a], 2).unwrap(), 0.5);
        assert!(dist_n(&[a], 2).is_err());
    }

    #[test]
    fn entropy_examples() {
        let (a, b, c, d) = (t(60), t(62), t(64), t(65));
        assert_eq!(ent_n(&[a, a, a, a], 1).unwrap(), 0.0);
        assert!((ent_n(&[a, b, c, d], 1).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!((ent_n(&[a, a, b, b], 1).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn iou_examples() {
        let s: BTreeSet<usize> = [1, 2, 3].into();
        assert_eq!(iou(&s, &s), 1.0);
        assert_eq!(iou(&s, &[4, 5].into()), 0.0);
        assert_eq!(iou(&BTreeSet::new(), &BTreeSet::new()), 1.0);
        let pred: BTreeSet<usize> = (1..=14).collect();
        let truth: BTreeSet<usize> = (3..=14).collect();
        assert!((iou(&pred, &truth) - 0.857).abs() < 1e-3);
        assert_eq!(iou(&pred, &truth), iou(&truth, &pred));
    }

    #[test]
    fn report_layout() {
        let songs = vec![("a", vec![t(60); 4]), ("b", vec![t(60), t(62), t(64)])];
        let r = MetricReport::compute(&songs).unwrap();
        assert_eq!(r.songs[0].ent_1, 0.0);
        let tsv = r.to_tsv();
        assert!(tsv.starts_with("song\tDist-1\tDist-2\tEnt-1\tEnt-2\n"));
        assert_eq!(tsv.lines().count(), 4);
    }
}
