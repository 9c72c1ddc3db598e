use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use remelody_core::db::FragmentDraft;
use remelody_core::melody::tokenize;
use remelody_core::midi::{read_midi_file, write_midi_file};
use remelody_core::{FragmentDatabase, MarkovModel, Note, StructureLabel, TimeBase, Tonality};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_remelody"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("remelody-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A corpus, model and database shared by the composition tests.
fn built() -> &'static PathBuf {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = scratch("built");
        let corpus = dir.join("corpus");
        assert!(
            run(&["gen-corpus", "--out", s(&corpus), "--count", "30", "--seed", "2"])
                .status
                .success()
        );
        let o = run(&[
            "build-db",
            "--corpus",
            s(&corpus),
            "--model-out",
            s(&dir.join("m.lm")),
            "--db-out",
            s(&dir.join("f.db")),
            "--seed",
            "1",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        dir
    })
}

#[test]
fn build_db_reports_records_and_is_deterministic() {
    let dir = built();
    let again = scratch("again");
    let o = run(&[
        "build-db",
        "--corpus",
        s(&dir.join("corpus")),
        "--model-out",
        s(&again.join("m.lm")),
        "--db-out",
        s(&again.join("f.db")),
        "--seed",
        "1",
    ]);
    assert!(o.status.success());
    let records: usize = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("records\t"))
        .expect("records line")
        .parse()
        .unwrap();
    assert!(records > 0);
    assert_eq!(
        fs::read(dir.join("f.db")).unwrap(),
        fs::read(again.join("f.db")).unwrap()
    );
    assert_eq!(
        fs::read(dir.join("m.lm")).unwrap(),
        fs::read(again.join("m.lm")).unwrap()
    );
}

#[test]
fn empty_corpus_fails() {
    let dir = scratch("empty");
    let o = run(&[
        "build-db",
        "--corpus",
        s(&dir),
        "--model-out",
        s(&dir.join("m")),
        "--db-out",
        s(&dir.join("d")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

fn compose(dir: &Path, lyrics: &str, extra: &[&str], out: &Path) -> Output {
    let path = out.with_extension("txt");
    fs::write(&path, lyrics).unwrap();
    let (db, model) = (dir.join("f.db"), dir.join("m.lm"));
    let mut args = vec![
        "compose",
        "--lyrics",
        s(&path),
        "--chords",
        "C G Am F",
        "--db",
        s(&db),
        "--model",
        s(&model),
        "--out",
        s(out),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn numeric_song_has_four_line_spans() {
    let dir = built();
    let work = scratch("numeric");
    let out = work.join("song.mid");
    let o = compose(dir, "6\n8\n7\n9\n", &["--language", "numeric", "--seed", "5"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Vec<String> = stdout(&o).lines().skip(2).take(4).map(String::from).collect();
    for (i, line) in summary.iter().enumerate() {
        assert!(line.starts_with(&format!("{}\t", i + 1)), "{line}");
    }
    let report = fs::read_to_string(work.join("song.mid.report.txt")).unwrap();
    let rows: Vec<&str> = report
        .lines()
        .skip_while(|l| !l.starts_with("line\t"))
        .skip(1)
        .collect();
    assert_eq!(rows.len(), 4);
    let counts: Vec<usize> = rows
        .iter()
        .map(|r| r.split('\t').nth(4).unwrap().parse().unwrap())
        .collect();
    let song = read_midi_file(&out).unwrap();
    assert_eq!(song.notes.len(), counts.iter().sum::<usize>());
    for (row, want) in rows.iter().zip([6, 8, 7, 9]) {
        let notes: usize = row.split('\t').nth(4).unwrap().parse().unwrap();
        let melisma = row.split('\t').nth(9).unwrap();
        let extra = if melisma == "-" { 0 } else { melisma.split(';').count() };
        assert_eq!(notes, want + extra);
    }

    let again = work.join("again.mid");
    assert!(
        compose(dir, "6\n8\n7\n9\n", &["--language", "numeric", "--seed", "5"], &again)
            .status
            .success()
    );
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn minor_override_reaches_retrieval() {
    let dir = built();
    let work = scratch("minor");
    let out = work.join("song.mid");
    let path = out.with_extension("txt");
    fs::write(&path, "the sun is bright today\nwe dance along the shore\n").unwrap();
    let (db, model) = (dir.join("f.db"), dir.join("m.lm"));
    let o = run(&[
        "compose",
        "--lyrics",
        s(&path),
        "--chords",
        "Am F C G",
        "--db",
        s(&db),
        "--model",
        s(&model),
        "--out",
        s(&out),
        "--tonality",
        "minor",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("tonality A minor"));
    let db = FragmentDatabase::load(&dir.join("f.db")).unwrap();
    let report = fs::read_to_string(work.join("song.mid.report.txt")).unwrap();
    for row in report.lines().skip_while(|l| !l.starts_with("line\t")).skip(1) {
        for id in row.split('\t').nth(5).unwrap().split(';') {
            let f = db.get(id.parse().unwrap()).unwrap();
            assert_eq!(f.tonality, Tonality::A_MINOR);
        }
    }
}

#[test]
fn missing_database_fails() {
    let dir = built();
    let work = scratch("missing");
    let o = compose(
        &work,
        "5\n",
        &["--language", "numeric", "--model", s(&dir.join("m.lm"))],
        &work.join("x.mid"),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!work.join("x.mid").exists());
}

#[test]
fn exhausted_retrieval_names_the_line() {
    let tb = TimeBase::default();
    let work = scratch("exhausted");
    let notes = vec![Note::new(60, 0, 480), Note::new(62, 480, 480), Note::new(64, 960, 480)];
    let mut db = FragmentDatabase::new(tb);
    db.insert(FragmentDraft {
        notes: notes.clone(),
        structure: StructureLabel::Verse,
        chords: vec!["C".parse().unwrap()],
        tonality: Tonality::C_MAJOR,
        bar_count: 1,
    })
    .unwrap();
    db.save(&work.join("f.db")).unwrap();
    let model = MarkovModel::train(&[tokenize(&notes, &tb).unwrap()], 2, 0.1).unwrap();
    let mut bytes = Vec::new();
    model.save(&mut bytes).unwrap();
    fs::write(work.join("m.lm"), bytes).unwrap();

    let o = compose(&work, "3\n2\n", &["--language", "numeric"], &work.join("x.mid"));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn recognize_prints_structure_and_iou() {
    let work = scratch("recognize");
    let lyrics = work.join("l.txt");
    fs::write(&lyrics, "9\n8\n11\n7\n8\n6\n6\n4\n10\n12\n5\n8\n6\n6\n4\n").unwrap();
    let o = run(&["recognize", "--lyrics", s(&lyrics), "--language", "numeric", "--g", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("struct\t0 0 0 0 0 0 0 0 0 0 0 5 6 7 8\n"), "{out}");
    assert!(out.contains("chorus\t5 6 7 8 12 13 14 15\n"), "{out}");

    let gold = work.join("gold");
    fs::write(&gold, "5 6 7 8 12 13 14 15").unwrap();
    let o = run(&[
        "recognize",
        "--lyrics",
        s(&lyrics),
        "--language",
        "numeric",
        "--gold",
        s(&gold),
    ]);
    assert!(stdout(&o).contains("IoU\t1.0000"));

    fs::write(&lyrics, "3\n4\n5\n6\n").unwrap();
    let o = run(&["recognize", "--lyrics", s(&lyrics), "--language", "numeric"]);
    assert!(stdout(&o).contains("struct\t0 0 0 0\n"));

    let o = run(&["recognize", "--lyrics", s(&lyrics), "--language", "latin"]);
    assert_eq!(o.status.code(), Some(1));
}

fn eval_rows(o: &Output) -> Vec<Vec<String>> {
    stdout(o)
        .lines()
        .map(|l| l.split('\t').map(String::from).collect())
        .collect()
}

#[test]
fn eval_table() {
    let tb = TimeBase::default();
    let work = scratch("eval");
    let constant: Vec<Note> = (0..8).map(|i| Note::new(64, i * 480, 480)).collect();
    // Tokens a b a c: three distinct unigrams out of four.
    let fixture: Vec<Note> = [60, 62, 60, 64]
        .iter()
        .enumerate()
        .map(|(i, &p)| Note::new(p, i as u32 * 480, 480))
        .collect();
    let (c, f, g) = (work.join("c.mid"), work.join("f.mid"), work.join("g.mid"));
    write_midi_file(&c, &constant, None, &tb).unwrap();
    write_midi_file(&f, &fixture, None, &tb).unwrap();
    write_midi_file(&g, &fixture, None, &tb).unwrap();

    let o = run(&["eval", s(&c), s(&f), s(&g)]);
    assert!(o.status.success());
    let rows = eval_rows(&o);
    assert_eq!(rows[0], ["song", "Dist-1", "Dist-2", "Ent-1", "Ent-2"]);
    assert_eq!(rows[1][3], "0.0000");
    assert_eq!(rows[2][1..], rows[3][1..]);
    let ent1 = -(0.5f64 * 0.5f64.ln() + 2.0 * 0.25 * 0.25f64.ln());
    assert_eq!(rows[2][1], "0.7500");
    assert_eq!(rows[2][2], "1.0000");
    assert_eq!(rows[2][3], format!("{ent1:.4}"));
    assert_eq!(rows[4][0], "mean");

    let o = run(&["eval", s(&f), s(&work.join("absent.mid"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.mid"));
}

#[test]
fn config_file_and_flag_precedence() {
    let work = scratch("config");
    let o = run(&["config"]);
    assert!(o.status.success());
    let defaults = stdout(&o);
    assert!(defaults.contains("max_leap = 8\n") && defaults.contains("tendency = 5>4,11>0\n"));

    let cfg = work.join("settings.conf");
    fs::write(&cfg, "language = numeric\ng = 0\n").unwrap();
    let lyrics = work.join("l.txt");
    fs::write(&lyrics, "4\n4\n").unwrap();
    let o = run(&["recognize", "--config", s(&cfg), "--lyrics", s(&lyrics)]);
    assert!(stdout(&o).contains("struct\t0 1\n"), "{}", stdout(&o));
    let o = run(&["recognize", "--config", s(&cfg), "--lyrics", s(&lyrics), "--g", "1"]);
    assert!(stdout(&o).contains("struct\t0 0\n"));

    fs::write(&cfg, "volume = 11\n").unwrap();
    assert_eq!(run(&["config", "--config", s(&cfg)]).status.code(), Some(1));
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["compose", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}
