use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use remelody_core::db::build_database;
use remelody_core::features::{infer_tonality, transpose};
use remelody_core::lyrics::{LyricOptions, LyricSheet};
use remelody_core::melody::{rescale, tokenize};
use remelody_core::metrics::{dist_n, ent_n, iou};
use remelody_core::midi::{read_midi_file, write_midi_file};
use remelody_core::{
    synth, BuildConfig, ChordProgression, Composer, FragmentDatabase, MarkovModel, MelodyLm, Note, NoteToken, TimeBase,
};

use crate::config::Config;
use crate::{BuildDbArgs, CliError, ComposeArgs, EvalArgs, GenCorpusArgs, RecognizeArgs};

fn internal(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("{}: {e}", path.display()))
}

fn required<'a>(path: Option<&'a PathBuf>, what: &str) -> Result<&'a PathBuf, CliError> {
    path.ok_or_else(|| CliError::User(format!("no {what} path: pass --{what} or set it in the config")))
}

fn midi_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::User(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|x| x.to_str())
                .is_some_and(|x| x.eq_ignore_ascii_case("mid") || x.eq_ignore_ascii_case("midi"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every corpus file at the configured resolution, transposed to
/// C major or A minor. Unreadable files are reported and skipped.
fn load_corpus(dir: &Path, tb: &TimeBase) -> Result<Vec<Vec<Note>>, CliError> {
    let mut melodies = Vec::new();
    for path in midi_files(dir)? {
        match read_midi_file(&path) {
            Ok(song) if !song.notes.is_empty() => {
                let notes = rescale(&song.notes, &song.tb, tb);
                let (_, offset) = infer_tonality(&notes)?;
                melodies.push(transpose(&notes, offset));
            }
            Ok(_) => eprintln!("skipping {}: no notes", path.display()),
            Err(e) => eprintln!("skipping {}: {e}", path.display()),
        }
    }
    if melodies.is_empty() {
        return Err(CliError::User(format!("{}: no readable MIDI melodies", dir.display())));
    }
    Ok(melodies)
}

pub fn build_db(args: &BuildDbArgs, config: &Config) -> Result<(), CliError> {
    let model_out = required(args.model_out.as_ref().or(config.model.as_ref()), "model-out")?;
    let db_out = required(args.db_out.as_ref().or(config.db.as_ref()), "db-out")?;
    let tb = config.time_base;
    let melodies = load_corpus(&args.corpus, &tb)?;
    let corpus: Vec<Vec<NoteToken>> = melodies.iter().map(|m| tokenize(m, &tb)).collect::<Result<_, _>>()?;
    let model = MarkovModel::train(&corpus, config.order, config.alpha)?;
    let build = BuildConfig {
        top_k: config.build_top_k,
        seed: config.seed,
        min_unique: config.min_unique,
    };
    let (db, stats) = build_database(&melodies, &model, &tb, &build)?;

    let file = fs::File::create(model_out).map_err(|e| internal(model_out, e))?;
    let mut out = BufWriter::new(file);
    model
        .save(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| internal(model_out, e))?;
    db.save(db_out).map_err(|e| internal(db_out, e))?;

    println!("melodies\t{}", stats.melodies);
    println!("short melodies\t{}", stats.short_melodies);
    println!("windows\t{}", stats.windows);
    println!("copied continuations\t{}", stats.unoriginal);
    println!("surviving generations\t{}", stats.surviving);
    println!("candidates\t{}", stats.candidates);
    println!("duplicates\t{}", stats.duplicates);
    println!("monotonous\t{}", stats.monotonous);
    println!("records\t{}", stats.records);
    println!("vocabulary\t{}", model.vocabulary().len());
    Ok(())
}

fn lyric_options(config: &Config) -> LyricOptions {
    LyricOptions {
        language: config.language,
        granularity: config.granularity,
        tonality_override: config.tonality,
        ..Default::default()
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::User(format!("{}: {e}", path.display())))
}

pub fn report_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".report.txt");
    PathBuf::from(name)
}

pub fn compose(args: &ComposeArgs, config: &Config) -> Result<(), CliError> {
    let db_path = required(config.db.as_ref(), "db")?;
    let model_path = required(config.model.as_ref(), "model")?;
    let db = FragmentDatabase::load(db_path)?;
    let file = fs::File::open(model_path).map_err(|e| CliError::User(format!("{}: {e}", model_path.display())))?;
    let model = MarkovModel::load(BufReader::new(file))?;

    let sheet = LyricSheet::parse(&read_text(&args.lyrics)?, &lyric_options(config))?;
    let progression = ChordProgression::parse(&args.chords, &sheet.tonality)?;
    let song = Composer::new(&db, &model, config.guidelines.clone())?.compose(&sheet, &progression, config.seed)?;

    write_midi_file(&args.out, &song.notes, Some(&song.lyrics), &song.tb).map_err(|e| internal(&args.out, e))?;
    let report = report_path(&args.out);
    fs::write(&report, song.report()).map_err(|e| internal(&report, e))?;

    println!(
        "tonality {}  progression {}  seed {}",
        song.tonality, song.progression, song.seed
    );
    println!("line\tsyllables\tstruct\tfragments\tchords");
    for (i, line) in song.lines.iter().enumerate() {
        let ids: Vec<String> = line.pieces.iter().map(|p| p.fragment_id.to_string()).collect();
        let chords: Vec<&str> = line.pieces.iter().map(|p| p.chords.as_str()).collect();
        println!(
            "{}\t{}\t{}\t{}\t{}",
            i + 1,
            line.syllables,
            line.struct_index,
            if ids.is_empty() { "-".into() } else { ids.join(";") },
            if chords.is_empty() {
                "-".into()
            } else {
                chords.join(";")
            },
        );
    }
    println!(
        "wrote {} notes to {} and {}",
        song.notes.len(),
        args.out.display(),
        report.display()
    );
    Ok(())
}

fn parse_gold(text: &str) -> Result<BTreeSet<usize>, CliError> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::User(format!("gold file: {t:?} is not a 1-based line number")))
        })
        .collect()
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn recognize(args: &RecognizeArgs, config: &Config) -> Result<(), CliError> {
    let sheet = LyricSheet::parse(&read_text(&args.lyrics)?, &lyric_options(config))?;
    println!("S\t{}", join(&sheet.syllable_counts));
    println!("struct\t{}", join(&sheet.analysis.struct_array));
    println!("chorus\t{}", join(&sheet.analysis.chorus));
    if let Some(gold) = &args.gold {
        let truth = parse_gold(&read_text(gold)?)?;
        println!("IoU\t{:.4}", iou(&sheet.analysis.chorus, &truth));
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    if args.n.contains(&0) {
        return Err(CliError::User("n-gram orders must be positive".into()));
    }
    let mut unreadable = Vec::new();
    let mut rows: Vec<(String, Vec<f64>)> = Vec::new();
    for path in &args.midi {
        let song = match read_midi_file(path) {
            Ok(song) => song,
            Err(e) => {
                unreadable.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let tokens = tokenize(&song.notes, &song.tb)?;
        let mut values = Vec::with_capacity(2 * args.n.len());
        for &n in &args.n {
            values.push(dist_n(&tokens, n).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?);
        }
        for &n in &args.n {
            values.push(ent_n(&tokens, n).map_err(|e| CliError::User(format!("{}: {e}", path.display())))?);
        }
        rows.push((path.display().to_string(), values));
    }
    if !unreadable.is_empty() {
        return Err(CliError::User(format!(
            "unreadable files:\n  {}",
            unreadable.join("\n  ")
        )));
    }
    let header: Vec<String> = args
        .n
        .iter()
        .map(|n| format!("Dist-{n}"))
        .chain(args.n.iter().map(|n| format!("Ent-{n}")))
        .collect();
    println!("song\t{}", header.join("\t"));
    let format_row = |values: &[f64]| values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join("\t");
    for (name, values) in &rows {
        println!("{name}\t{}", format_row(values));
    }
    let means: Vec<f64> = (0..header.len())
        .map(|c| rows.iter().map(|(_, v)| v[c]).sum::<f64>() / rows.len() as f64)
        .collect();
    println!("mean\t{}", format_row(&means));
    Ok(())
}

pub fn gen_corpus(args: &GenCorpusArgs) -> Result<(), CliError> {
    let tb = TimeBase::default();
    fs::create_dir_all(&args.out).map_err(|e| internal(&args.out, e))?;
    for (i, melody) in synth::seed_melodies(args.count, args.bars, args.seed, &tb)
        .iter()
        .enumerate()
    {
        // Spread the seeds over several keys.
        let shift = ((i % 12) as i8 * 5) % 12 - 5;
        let path = args.out.join(format!("seed_{i:04}.mid"));
        write_midi_file(&path, &transpose(melody, shift), None, &tb).map_err(|e| internal(&path, e))?;
    }
    println!("wrote {} melodies to {}", args.count, args.out.display());
    Ok(())
}
