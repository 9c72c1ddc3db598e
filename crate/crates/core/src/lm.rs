//! Melody language model: a smoothed back-off n-gram over [`NoteToken`]s.
//!
//! Everything downstream talks to the model through [`MelodyLm`], so a neural
//! scorer can be dropped in without touching retrieval or re-ranking.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::melody::{detokenize, Note, NoteToken, TimeBase};

pub const MAX_ORDER: usize = 4;
const MODEL_MAGIC: &str = "remelody-model";
const MODEL_VERSION: u32 = 1;

const UNK: u32 = 0;
const BOS: u32 = u32::MAX;

pub trait MelodyLm {
    /// Tokens the model can emit, in ascending order.
    fn vocabulary(&self) -> &[NoteToken];

    /// How many preceding tokens can influence a prediction.
    fn context_len(&self) -> usize;

    /// `ln P(next | history)`, where `history` holds every preceding token of
    /// the sequence (an empty history means the start of a sequence).
    fn log_prob(&self, history: &[NoteToken], next: &NoteToken) -> f64;

    /// Probability of each vocabulary token after `history`.
    fn next_distribution(&self, history: &[NoteToken]) -> Vec<(NoteToken, f64)> {
        self.vocabulary()
            .iter()
            .map(|t| (*t, self.log_prob(history, t).exp()))
            .collect()
    }

    /// Log-probability of `tokens` conditioned on `history`.
    fn score_continuation(&self, history: &[NoteToken], tokens: &[NoteToken]) -> f64 {
        let keep = history.len().min(self.context_len());
        let mut buf: Vec<NoteToken> = Vec::with_capacity(keep + tokens.len());
        // Truncating to context_len tokens never exposes a start-of-sequence
        // context, since at least context_len real tokens remain.
        buf.extend_from_slice(&history[history.len() - keep..]);
        let mut total = 0.0;
        for (i, t) in tokens.iter().enumerate() {
            total += self.log_prob(&buf[..keep + i], t);
            buf.push(*t);
        }
        total
    }

    fn score(&self, tokens: &[NoteToken]) -> f64 {
        self.score_continuation(&[], tokens)
    }
}

/// Equal probability for every vocabulary token; the reference point for
/// perplexity comparisons.
#[derive(Debug, Clone)]
pub struct UniformModel {
    vocab: Vec<NoteToken>,
}

impl UniformModel {
    pub fn new(mut vocab: Vec<NoteToken>) -> Result<Self> {
        vocab.sort();
        vocab.dedup();
        if vocab.is_empty() {
            return Err(Error::Empty("uniform model vocabulary"));
        }
        Ok(UniformModel { vocab })
    }
}

impl MelodyLm for UniformModel {
    fn vocabulary(&self) -> &[NoteToken] {
        &self.vocab
    }

    fn context_len(&self) -> usize {
        0
    }

    fn log_prob(&self, _history: &[NoteToken], _next: &NoteToken) -> f64 {
        -(self.vocab.len() as f64).ln()
    }
}

type ContextKey = [u32; MAX_ORDER - 1];

#[derive(Debug, Clone, Default, PartialEq)]
struct NextCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

/// Additive-smoothed n-gram model with back-off to the longest seen context.
///
/// Probabilities are `(count + alpha) / (total + alpha * (|V| + 1))`, where the
/// extra symbol is an unknown-token bucket so that unseen tokens still get mass.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    order: usize,
    alpha: f64,
    vocab: Vec<NoteToken>,
    ids: HashMap<NoteToken, u32>,
    /// `tables[k]` holds contexts of exactly `k` symbols.
    tables: Vec<HashMap<ContextKey, NextCounts>>,
}

impl MarkovModel {
    pub fn train(corpus: &[Vec<NoteToken>], order: usize, alpha: f64) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        if corpus.iter().any(Vec::is_empty) {
            return Err(Error::Empty("training sequence"));
        }
        check_params(order, alpha)?;

        let mut vocab: Vec<NoteToken> = corpus.iter().flatten().copied().collect();
        vocab.sort();
        vocab.dedup();
        let ids: HashMap<NoteToken, u32> = vocab.iter().enumerate().map(|(i, t)| (*t, i as u32 + 1)).collect();

        let mut tables: Vec<HashMap<ContextKey, NextCounts>> = vec![HashMap::new(); order];
        for seq in corpus {
            let mut padded: Vec<u32> = vec![BOS; order - 1];
            padded.extend(seq.iter().map(|t| ids[t]));
            for i in order - 1..padded.len() {
                let next = padded[i];
                for (k, table) in tables.iter_mut().enumerate() {
                    let entry = table.entry(context_key(&padded[i - k..i])).or_default();
                    entry.total += 1;
                    *entry.next.entry(next).or_insert(0) += 1;
                }
            }
        }
        Ok(MarkovModel {
            order,
            alpha,
            vocab,
            ids,
            tables,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn symbol(&self, token: &NoteToken) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    fn context_of(&self, history: &[NoteToken]) -> Vec<u32> {
        let n = self.order - 1;
        let mut ctx = vec![BOS; n];
        let take = history.len().min(n);
        for (slot, t) in ctx[n - take..].iter_mut().zip(&history[history.len() - take..]) {
            *slot = self.symbol(t);
        }
        ctx
    }

    fn counts_for(&self, ctx: &[u32]) -> &NextCounts {
        for k in (1..=ctx.len()).rev() {
            if let Some(counts) = self.tables[k].get(&context_key(&ctx[ctx.len() - k..])) {
                return counts;
            }
        }
        &self.tables[0][&context_key(&[])]
    }

    fn denominator(&self, counts: &NextCounts) -> f64 {
        counts.total as f64 + self.alpha * (self.vocab.len() + 1) as f64
    }

    pub fn save<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{MODEL_MAGIC}\t{MODEL_VERSION}")?;
        writeln!(out, "order\t{}", self.order)?;
        writeln!(out, "alpha\t{}", self.alpha)?;
        writeln!(out, "vocab\t{}", self.vocab.len())?;
        for t in &self.vocab {
            writeln!(out, "{t}")?;
        }
        for (k, table) in self.tables.iter().enumerate() {
            let mut keys: Vec<&ContextKey> = table.keys().collect();
            keys.sort();
            writeln!(out, "table\t{k}\t{}", keys.len())?;
            for key in keys {
                let counts = &table[key];
                let mut next: Vec<(&u32, &u64)> = counts.next.iter().collect();
                next.sort();
                let ctx: Vec<String> = key[..k]
                    .iter()
                    .map(|s| if *s == BOS { "^".to_string() } else { s.to_string() })
                    .collect();
                let next: Vec<String> = next.iter().map(|(s, c)| format!("{s}:{c}")).collect();
                writeln!(out, "{}\t{}", ctx.join(","), next.join(","))?;
            }
        }
        Ok(())
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut next_line = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(line))) => Ok((i + 1, line)),
                Some((i, Err(e))) => Err(corrupt(i + 1, &e.to_string())),
                None => Err(corrupt(0, &format!("unexpected end of file, expected {what}"))),
            }
        };

        let (n, header) = next_line("header")?;
        let mut fields = header.split('\t');
        if fields.next() != Some(MODEL_MAGIC) {
            return Err(corrupt(n, "not a model file"));
        }
        let version = fields.next().unwrap_or("");
        if version != MODEL_VERSION.to_string() {
            return Err(Error::Version {
                found: version.to_string(),
                expected: MODEL_VERSION,
            });
        }
        let order: usize = keyed(&next_line("order")?, "order")?;
        let alpha: f64 = keyed(&next_line("alpha")?, "alpha")?;
        check_params(order, alpha)?;
        let vocab_len: usize = keyed(&next_line("vocab")?, "vocab")?;
        let mut vocab = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let (n, line) = next_line("vocabulary token")?;
            vocab.push(parse_token(&line).ok_or_else(|| corrupt(n, "bad token"))?);
        }
        if vocab.windows(2).any(|w| w[0] >= w[1]) {
            return Err(corrupt(0, "vocabulary not strictly sorted"));
        }
        let max_symbol = vocab.len() as u32;
        let mut tables = Vec::with_capacity(order);
        for k in 0..order {
            let (n, line) = next_line("table header")?;
            let parts: Vec<&str> = line.split('\t').collect();
            if parts.len() != 3 || parts[0] != "table" || parts[1] != k.to_string() {
                return Err(corrupt(n, "bad table header"));
            }
            let rows: usize = parts[2].parse().map_err(|_| corrupt(n, "bad row count"))?;
            let mut table = HashMap::with_capacity(rows);
            for _ in 0..rows {
                let (n, line) = next_line("table row")?;
                let (ctx, next) = line.split_once('\t').ok_or_else(|| corrupt(n, "bad row"))?;
                let ctx: Vec<u32> = if k == 0 {
                    Vec::new()
                } else {
                    ctx.split(',')
                        .map(|s| match s {
                            "^" => Some(BOS),
                            s => s.parse().ok().filter(|v| (1..=max_symbol).contains(v)),
                        })
                        .collect::<Option<_>>()
                        .ok_or_else(|| corrupt(n, "bad context"))?
                };
                if ctx.len() != k {
                    return Err(corrupt(n, "context length mismatch"));
                }
                let mut counts = NextCounts::default();
                for pair in next.split(',') {
                    let (s, c) = pair.split_once(':').ok_or_else(|| corrupt(n, "bad count"))?;
                    let s: u32 = s
                        .parse()
                        .ok()
                        .filter(|v| (1..=max_symbol).contains(v))
                        .ok_or_else(|| corrupt(n, "bad symbol"))?;
                    let c: u64 = c
                        .parse()
                        .ok()
                        .filter(|c| *c >= 1)
                        .ok_or_else(|| corrupt(n, "bad count"))?;
                    counts.total += c;
                    counts.next.insert(s, c);
                }
                table.insert(context_key(&ctx), counts);
            }
            tables.push(table);
        }
        if !tables[0].contains_key(&context_key(&[])) {
            return Err(corrupt(0, "missing unigram table"));
        }
        if next_line("end").is_ok() {
            return Err(corrupt(0, "trailing data after last table"));
        }
        let ids = vocab.iter().enumerate().map(|(i, t)| (*t, i as u32 + 1)).collect();
        Ok(MarkovModel {
            order,
            alpha,
            vocab,
            ids,
            tables,
        })
    }
}

impl MelodyLm for MarkovModel {
    fn vocabulary(&self) -> &[NoteToken] {
        &self.vocab
    }

    fn context_len(&self) -> usize {
        self.order - 1
    }

    fn log_prob(&self, history: &[NoteToken], next: &NoteToken) -> f64 {
        let counts = self.counts_for(&self.context_of(history));
        let c = counts.next.get(&self.symbol(next)).copied().unwrap_or(0) as f64;
        ((c + self.alpha) / self.denominator(counts)).ln()
    }

    fn next_distribution(&self, history: &[NoteToken]) -> Vec<(NoteToken, f64)> {
        let counts = self.counts_for(&self.context_of(history));
        let denom = self.denominator(counts);
        self.vocab
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let c = counts.next.get(&(i as u32 + 1)).copied().unwrap_or(0) as f64;
                (*t, (c + self.alpha) / denom)
            })
            .collect()
    }
}

fn check_params(order: usize, alpha: f64) -> Result<()> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::Model(format!("order must be in 1..={MAX_ORDER}, got {order}")));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Model(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

fn context_key(symbols: &[u32]) -> ContextKey {
    let mut key = [0; MAX_ORDER - 1];
    key[..symbols.len()].copy_from_slice(symbols);
    key
}

fn corrupt(line: usize, reason: &str) -> Error {
    Error::Model(format!("line {line}: {reason}"))
}

fn keyed<T: std::str::FromStr>((n, line): &(usize, String), key: &str) -> Result<T> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('\t'))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| corrupt(*n, &format!("expected {key}")))
}

fn parse_token(s: &str) -> Option<NoteToken> {
    let mut it = s.split('/').map(|p| p.parse::<u8>().ok());
    let (p, d, r) = (it.next()??, it.next()??, it.next()??);
    if it.next().is_some() || p > 127 || d >= 16 || r >= 16 {
        return None;
    }
    Some(NoteToken::new(p, d, r))
}

/// A sampled two-bar continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct Continuation {
    /// Tokens as drawn from the model; all are vocabulary tokens.
    pub sampled: Vec<NoteToken>,
    /// Realized notes with onsets relative to the first generated bar. Notes
    /// are clipped at the bar line they start in, so both bars hold notes.
    pub notes: Vec<Note>,
    /// Length of the generated span in ticks, always two bars.
    pub span: u32,
}

/// Continues `context` (which occupies `context_bars` bars starting at tick 0)
/// with exactly two bars, sampling each token from the `k` most likely.
///
/// Generation stops once the next sampled note would start at or past the
/// two-bar boundary, or once a note reaches it. Notes never cross a bar line.
pub fn generate_continuation<M: MelodyLm + ?Sized>(
    model: &M,
    context: &[NoteToken],
    context_bars: usize,
    tb: &TimeBase,
    k: usize,
    seed: u64,
) -> Result<Continuation> {
    if context.is_empty() || context_bars == 0 {
        return Err(Error::Empty("generation context"));
    }
    if k == 0 {
        return Err(Error::Model("top-k must be at least 1".into()));
    }
    if model.vocabulary().is_empty() {
        return Err(Error::Model("model has no vocabulary".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = context_bars as u32 * tb.bar_ticks();
    let boundary = origin + 2 * tb.bar_ticks();
    let mut cursor = detokenize(context, tb).last().map_or(0, Note::end);

    let mut history = context.to_vec();
    let mut sampled = Vec::new();
    let mut notes = Vec::new();
    while cursor < boundary {
        let token = sample_top_k(model.next_distribution(&history), k, &mut rng);
        let mut onset = origin.max(cursor + token.rest_ticks(tb));
        if onset >= boundary {
            if !notes.is_empty() {
                break;
            }
            onset = origin;
        }
        let bar_end = origin + ((onset - origin) / tb.bar_ticks() + 1) * tb.bar_ticks();
        let duration = token.duration_ticks(tb).min(bar_end - onset);
        notes.push(Note::new(token.pitch, onset - origin, duration));
        sampled.push(token);
        history.push(token);
        cursor = onset + duration;
    }
    Ok(Continuation {
        sampled,
        notes,
        span: boundary - origin,
    })
}

fn sample_top_k<R: Rng>(mut dist: Vec<(NoteToken, f64)>, k: usize, rng: &mut R) -> NoteToken {
    dist.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    dist.truncate(k);
    let total: f64 = dist.iter().map(|(_, p)| p).sum();
    let mut target = rng.gen::<f64>() * total;
    for (token, p) in &dist {
        if target < *p {
            return *token;
        }
        target -= p;
    }
    dist.last().expect("non-empty distribution").0
}

/// `exp(-mean log-probability per token)` over a held-out corpus.
pub fn perplexity<M: MelodyLm + ?Sized>(model: &M, heldout: &[Vec<NoteToken>]) -> Result<f64> {
    let tokens: usize = heldout.iter().map(Vec::len).sum();
    if tokens == 0 {
        return Err(Error::Empty("held-out corpus"));
    }
    let log_prob: f64 = heldout.iter().map(|s| model.score(s)).sum();
    Ok((-log_prob / tokens as f64).exp())
}
