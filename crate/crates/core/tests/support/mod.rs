//! Independent reference implementations used by the integration and
//! acceptance tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use remelody_core::NoteToken;

/// Largest number of pairwise non-overlapping occurrences, and the
/// lexicographically smallest start list achieving it, by dynamic
/// programming over the sorted occurrence starts.
fn max_disjoint(starts: &[usize], len: usize) -> Vec<usize> {
    let n = starts.len();
    let next: Vec<usize> = (0..n)
        .map(|i| (i + 1..n).find(|&j| starts[j] >= starts[i] + len).unwrap_or(n))
        .collect();
    let mut best = vec![0usize; n + 1];
    for i in (0..n).rev() {
        best[i] = best[i + 1].max(1 + best[next[i]]);
    }
    let mut chosen = Vec::new();
    let mut i = 0;
    let mut need = best[0];
    while need > 0 {
        if 1 + best[next[i]] == need {
            chosen.push(starts[i]);
            need -= 1;
            i = next[i];
        } else {
            i += 1;
        }
    }
    chosen
}

/// Every substring longer than `g` of the unmasked subsequence, scored by
/// (length, earliest first occurrence, count); returns the 1-based original
/// positions of each chosen occurrence.
pub fn reference_repeat(s: &[usize], mask: &[bool], g: usize) -> Option<Vec<Vec<usize>>> {
    let idx: Vec<usize> = (0..s.len()).filter(|&i| !mask[i]).collect();
    let r: Vec<usize> = idx.iter().map(|&i| s[i]).collect();
    let m = r.len();
    let mut best: Option<(usize, usize, usize, Vec<usize>)> = None;
    for len in g + 1..=m {
        let mut starts_of: BTreeMap<&[usize], Vec<usize>> = BTreeMap::new();
        for i in 0..=m - len {
            starts_of.entry(&r[i..i + len]).or_default().push(i);
        }
        for starts in starts_of.values() {
            let chosen = max_disjoint(starts, len);
            if chosen.len() < 2 {
                continue;
            }
            let key = (len, starts[0], chosen.len());
            let better = match &best {
                None => true,
                Some((bl, bf, bk, _)) => {
                    key.0 > *bl || (key.0 == *bl && (key.1 < *bf || (key.1 == *bf && key.2 > *bk)))
                }
            };
            if better {
                best = Some((key.0, key.1, key.2, chosen));
            }
        }
    }
    best.map(|(len, _, _, chosen)| {
        chosen
            .iter()
            .map(|&st| (st..st + len).map(|k| idx[k] + 1).collect())
            .collect()
    })
}

/// Structure array and chorus set by repeated application of
/// [`reference_repeat`].
pub fn reference_structure(s: &[usize], g: usize) -> (Vec<usize>, BTreeSet<usize>) {
    let mut out = vec![0; s.len()];
    let mut mask = vec![false; s.len()];
    let mut chorus = BTreeSet::new();
    let mut first_round = true;
    while let Some(occ) = reference_repeat(s, &mask, g) {
        for later in &occ[1..] {
            for (k, &pos) in later.iter().enumerate() {
                out[pos - 1] = occ[0][k];
            }
        }
        for &pos in occ.iter().flatten() {
            mask[pos - 1] = true;
        }
        if first_round {
            chorus = occ.iter().flatten().copied().collect();
            first_round = false;
        }
    }
    (out, chorus)
}

/// Calls `f(canonical, k)` for every restricted-growth string of length `n`
/// whose symbols are `0..k` with `k <= max_symbols`.
pub fn for_each_canonical(n: usize, max_symbols: usize, f: &mut impl FnMut(&[usize], usize)) {
    fn rec(buf: &mut Vec<usize>, n: usize, used: usize, max: usize, f: &mut impl FnMut(&[usize], usize)) {
        if buf.len() == n {
            f(buf, used);
            return;
        }
        for v in 0..(used + 1).min(max) {
            buf.push(v);
            rec(buf, n, used.max(v + 1), max, f);
            buf.pop();
        }
    }
    rec(&mut Vec::with_capacity(n), n, 0, max_symbols, f);
}

/// Every injective map from `k` symbols into `0..alphabet`.
pub fn injections(k: usize, alphabet: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    fn rec(cur: &mut Vec<usize>, k: usize, alphabet: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in 0..alphabet {
            if !cur.contains(&v) {
                cur.push(v);
                rec(cur, k, alphabet, out);
                cur.pop();
            }
        }
    }
    rec(&mut Vec::new(), k, alphabet, &mut out);
    out
}

/// n-gram multiplicities by sorting all windows.
fn sorted_ngram_counts(tokens: &[NoteToken], n: usize) -> Vec<usize> {
    let mut windows: Vec<&[NoteToken]> = tokens.windows(n).collect();
    windows.sort();
    let mut counts = Vec::new();
    let mut i = 0;
    while i < windows.len() {
        let mut j = i;
        while j < windows.len() && windows[j] == windows[i] {
            j += 1;
        }
        counts.push(j - i);
        i = j;
    }
    counts
}

pub fn reference_dist(tokens: &[NoteToken], n: usize) -> f64 {
    let counts = sorted_ngram_counts(tokens, n);
    counts.len() as f64 / counts.iter().sum::<usize>() as f64
}

pub fn reference_ent(tokens: &[NoteToken], n: usize) -> f64 {
    let counts = sorted_ngram_counts(tokens, n);
    let total: usize = counts.iter().sum();
    // log(total) - sum(c log c) / total, a rearrangement of -sum p ln p.
    (total as f64).ln() - counts.iter().map(|&c| c as f64 * (c as f64).ln()).sum::<f64>() / total as f64
}
