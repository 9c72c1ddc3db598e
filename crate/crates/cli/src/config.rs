//! Plain-text `key = value` settings shared by every subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use remelody_core::{GuidelineConfig, Language, Mode, TimeBase};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub guidelines: GuidelineConfig,
    pub order: usize,
    pub alpha: f64,
    /// Sampling breadth when generating fragments.
    pub build_top_k: usize,
    pub min_unique: usize,
    pub db: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub seed: u64,
    pub language: Language,
    /// `None` lets lyric sentiment decide.
    pub tonality: Option<Mode>,
    pub granularity: usize,
    pub time_base: TimeBase,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            guidelines: GuidelineConfig::default(),
            order: 3,
            alpha: 0.01,
            build_top_k: 5,
            min_unique: remelody_core::BuildConfig::default().min_unique,
            db: None,
            model: None,
            seed: 0,
            language: Language::English,
            tonality: None,
            granularity: 2,
            time_base: TimeBase::default(),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::User(format!("config key {key}: cannot parse {raw:?}")))
}

pub fn parse_tonality(raw: &str) -> Result<Option<Mode>, CliError> {
    match raw {
        "auto" => Ok(None),
        other => other
            .parse::<Mode>()
            .map(Some)
            .map_err(|e| CliError::User(e.to_string())),
    }
}

/// `11>0,5>4` style map from a pitch class to its preferred successors.
fn parse_tendency(raw: &str) -> Result<BTreeMap<u8, BTreeSet<u8>>, CliError> {
    let mut map: BTreeMap<u8, BTreeSet<u8>> = BTreeMap::new();
    for pair in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (from, to) = pair
            .split_once('>')
            .ok_or_else(|| CliError::User(format!("config key tendency: expected from>to, got {pair:?}")))?;
        let from: u8 = value("tendency", from.trim())?;
        let to: u8 = value("tendency", to.trim())?;
        if from > 11 || to > 11 {
            return Err(CliError::User(format!(
                "config key tendency: pitch classes are 0..=11, got {pair:?}"
            )));
        }
        map.entry(from).or_default().insert(to);
    }
    Ok(map)
}

impl Config {
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let g = &mut self.guidelines;
        match key {
            "first_note_low" => g.first_note_low = value(key, raw)?,
            "first_note_high" => g.first_note_high = value(key, raw)?,
            "max_leap" => g.max_leap = value(key, raw)?,
            "tendency" => g.tendency = parse_tendency(raw)?,
            "tendency_bonus" => g.tendency_bonus = value(key, raw)?,
            "top_k" => g.top_k = value(key, raw)?,
            "melisma_prob" => g.melisma_prob = value(key, raw)?,
            "max_extra_notes" => g.max_extra_notes = value(key, raw)?,
            "order" => self.order = value(key, raw)?,
            "alpha" => self.alpha = value(key, raw)?,
            "build_top_k" => self.build_top_k = value(key, raw)?,
            "min_unique" => self.min_unique = value(key, raw)?,
            "db" => self.db = Some(PathBuf::from(raw)),
            "model" => self.model = Some(PathBuf::from(raw)),
            "seed" => self.seed = value(key, raw)?,
            "language" => {
                self.language = raw
                    .parse()
                    .map_err(|e: remelody_core::Error| CliError::User(e.to_string()))?
            }
            "tonality" => self.tonality = parse_tonality(raw)?,
            "g" => self.granularity = value(key, raw)?,
            "ticks_per_quarter" => self.time_base.ticks_per_quarter = value(key, raw)?,
            "beats_per_bar" => self.time_base.beats_per_bar = value(key, raw)?,
            _ => return Err(CliError::User(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config = Config::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| CliError::User(format!("config line {}: expected key = value", n + 1)))?;
            config.set(key.trim(), raw.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.guidelines.validate().map_err(|e| CliError::User(e.to_string()))?;
        TimeBase::new(self.time_base.ticks_per_quarter, self.time_base.beats_per_bar)
            .map_err(|e| CliError::User(e.to_string()))?;
        if self.order == 0 || self.alpha <= 0.0 || self.build_top_k == 0 {
            return Err(CliError::User("order, alpha and build_top_k must be positive".into()));
        }
        Ok(())
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = &self.guidelines;
        let tendency: Vec<String> = g
            .tendency
            .iter()
            .flat_map(|(from, tos)| tos.iter().map(move |to| format!("{from}>{to}")))
            .collect();
        writeln!(f, "first_note_low = {}", g.first_note_low)?;
        writeln!(f, "first_note_high = {}", g.first_note_high)?;
        writeln!(f, "max_leap = {}", g.max_leap)?;
        writeln!(f, "tendency = {}", tendency.join(","))?;
        writeln!(f, "tendency_bonus = {}", g.tendency_bonus)?;
        writeln!(f, "top_k = {}", g.top_k)?;
        writeln!(f, "melisma_prob = {}", g.melisma_prob)?;
        writeln!(f, "max_extra_notes = {}", g.max_extra_notes)?;
        writeln!(f, "order = {}", self.order)?;
        writeln!(f, "alpha = {}", self.alpha)?;
        writeln!(f, "build_top_k = {}", self.build_top_k)?;
        writeln!(f, "min_unique = {}", self.min_unique)?;
        if let Some(db) = &self.db {
            writeln!(f, "db = {}", db.display())?;
        }
        if let Some(model) = &self.model {
            writeln!(f, "model = {}", model.display())?;
        }
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "language = {}", self.language)?;
        writeln!(f, "tonality = {}", self.tonality.map_or("auto", |m| m.as_str()))?;
        writeln!(f, "g = {}", self.granularity)?;
        writeln!(f, "ticks_per_quarter = {}", self.time_base.ticks_per_quarter)?;
        writeln!(f, "beats_per_bar = {}", self.time_base.beats_per_bar)
    }
}
