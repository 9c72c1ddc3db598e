//! Standard MIDI File reading (format 0/1) and writing (format 1, one track).

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::melody::{Note, TimeBase};

/// 120 BPM.
pub const TEMPO_US_PER_QUARTER: u32 = 500_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MidiSong {
    pub notes: Vec<Note>,
    pub tb: TimeBase,
    /// Lyric text attached to each note, when present.
    pub lyrics: Vec<Option<String>>,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Midi {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.err(format!("need {n} bytes, {} left", self.remaining())));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.bytes(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32> {
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7F) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(self.err("variable-length quantity longer than 4 bytes"))
    }
}

#[derive(Default)]
struct TrackNotes {
    name: Option<String>,
    notes: Vec<Note>,
    lyrics: Vec<(u32, String)>,
}

fn parse_track(data: &[u8], base: usize) -> Result<TrackNotes> {
    let mut r = Reader { data, pos: 0 };
    let at = |r: &Reader, reason: &str| Error::Midi {
        offset: base + r.pos,
        reason: reason.to_string(),
    };
    let mut track = TrackNotes::default();
    let mut tick: u32 = 0;
    let mut running: Option<u8> = None;
    // pitch -> stack of (onset, velocity)
    let mut open: HashMap<u8, Vec<(u32, u8)>> = HashMap::new();

    while r.remaining() > 0 {
        tick = tick
            .checked_add(r.vlq().map_err(|_| at(&r, "bad delta time"))?)
            .ok_or_else(|| at(&r, "tick overflow"))?;
        let first = r.u8().map_err(|_| at(&r, "missing event"))?;
        let status = if first & 0x80 != 0 {
            first
        } else {
            r.pos -= 1;
            running.ok_or_else(|| at(&r, "data byte without running status"))?
        };
        match status {
            0xFF => {
                running = None;
                let kind = r.u8().map_err(|_| at(&r, "truncated meta event"))?;
                let len = r.vlq().map_err(|_| at(&r, "bad meta length"))? as usize;
                let payload = r.bytes(len).map_err(|_| at(&r, "truncated meta event"))?;
                match kind {
                    0x03 => track.name = Some(String::from_utf8_lossy(payload).into_owned()),
                    0x05 => track.lyrics.push((tick, String::from_utf8_lossy(payload).into_owned())),
                    0x2F => break,
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = r.vlq().map_err(|_| at(&r, "bad sysex length"))? as usize;
                r.bytes(len).map_err(|_| at(&r, "truncated sysex"))?;
            }
            0x80..=0xEF => {
                running = Some(status);
                let kind = status & 0xF0;
                let d1 = r.u8().map_err(|_| at(&r, "truncated channel event"))?;
                let d2 = if matches!(kind, 0xC0 | 0xD0) {
                    0
                } else {
                    r.u8().map_err(|_| at(&r, "truncated channel event"))?
                };
                if d1 > 127 || d2 > 127 {
                    return Err(at(&r, "data byte out of range"));
                }
                match (kind, d2) {
                    (0x90, v) if v > 0 => open.entry(d1).or_default().push((tick, v)),
                    (0x80, _) | (0x90, _) => {
                        if let Some(stack) = open.get_mut(&d1) {
                            if !stack.is_empty() {
                                let (onset, vel) = stack.remove(0);
                                if tick > onset {
                                    track.notes.push(Note::try_new(d1, onset, tick - onset, vel)?);
                                }
                            }
                        }
                    }
                    _ => {}
                }
            }
            _ => return Err(at(&r, &format!("unexpected status byte {status:#04x}"))),
        }
    }
    // Close dangling notes at the end of the track.
    let mut pitches: Vec<u8> = open.keys().copied().collect();
    pitches.sort_unstable();
    for p in pitches {
        for (onset, vel) in open.remove(&p).unwrap_or_default() {
            if tick > onset {
                track.notes.push(Note::try_new(p, onset, tick - onset, vel)?);
            }
        }
    }
    Ok(track)
}

/// Keeps one note at a time. Of two overlapping notes the louder wins (ties
/// go to the higher pitch); a losing earlier note is cut short, a losing
/// later note is dropped.
pub fn enforce_monophony(mut notes: Vec<Note>) -> Vec<Note> {
    notes.sort_by_key(|n| (n.onset, std::cmp::Reverse(n.velocity), std::cmp::Reverse(n.pitch)));
    let mut out: Vec<Note> = Vec::with_capacity(notes.len());
    for n in notes {
        let Some(prev) = out.last_mut() else {
            out.push(n);
            continue;
        };
        if n.onset >= prev.end() {
            out.push(n);
            continue;
        }
        let later_wins = (n.velocity, n.pitch) > (prev.velocity, prev.pitch);
        if later_wins {
            if n.onset > prev.onset {
                prev.duration = n.onset - prev.onset;
            } else {
                out.pop();
            }
            out.push(n);
        }
    }
    out
}

/// Reads the melody track: a track whose name contains "melody", otherwise
/// the first track with notes.
pub fn read_midi(bytes: &[u8]) -> Result<MidiSong> {
    let mut r = Reader { data: bytes, pos: 0 };
    if bytes.is_empty() {
        return Err(r.err("empty file"));
    }
    if r.bytes(4).map_err(|_| r.err("truncated header"))? != b"MThd" {
        return Err(Error::Midi {
            offset: 0,
            reason: "missing MThd chunk".into(),
        });
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return Err(r.err("header chunk too short"));
    }
    let format = r.u16()?;
    let ntracks = r.u16()?;
    let division = r.u16()?;
    r.bytes(header_len - 6)?;
    if format > 1 {
        return Err(Error::Midi {
            offset: 8,
            reason: format!("unsupported SMF format {format}"),
        });
    }
    if division & 0x8000 != 0 {
        return Err(Error::Midi {
            offset: 12,
            reason: "SMPTE time division is not supported".into(),
        });
    }
    let tpq = division as u32;
    let tb = TimeBase {
        ticks_per_quarter: tpq,
        beats_per_bar: 4,
    };
    if tpq == 0 {
        return Err(Error::Midi {
            offset: 12,
            reason: "zero ticks per quarter".into(),
        });
    }

    let mut tracks = Vec::new();
    while tracks.len() < ntracks as usize && r.remaining() > 0 {
        let id = r.bytes(4)?;
        let len = r.u32()? as usize;
        let base = r.pos;
        let body = r.bytes(len)?;
        if id == b"MTrk" {
            tracks.push(parse_track(body, base)?);
        }
    }
    if tracks.len() < ntracks as usize {
        return Err(r.err(format!("expected {ntracks} tracks, found {}", tracks.len())));
    }

    let chosen = tracks
        .iter()
        .position(|t| t.name.as_deref().is_some_and(|n| n.to_lowercase().contains("melody")) && !t.notes.is_empty())
        .or_else(|| tracks.iter().position(|t| !t.notes.is_empty()));
    let Some(chosen) = chosen else {
        return Ok(MidiSong {
            notes: Vec::new(),
            tb,
            lyrics: Vec::new(),
        });
    };
    let track = tracks.swap_remove(chosen);
    let notes = enforce_monophony(track.notes);
    let mut by_tick: HashMap<u32, String> = HashMap::new();
    for (tick, text) in track.lyrics {
        by_tick.entry(tick).or_insert(text);
    }
    let lyrics = notes.iter().map(|n| by_tick.remove(&n.onset)).collect();
    Ok(MidiSong { notes, tb, lyrics })
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7F) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = 0x80 | (value & 0x7F) as u8;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

fn push_meta(out: &mut Vec<u8>, delta: u32, kind: u8, payload: &[u8]) {
    push_vlq(out, delta);
    out.extend_from_slice(&[0xFF, kind]);
    push_vlq(out, payload.len() as u32);
    out.extend_from_slice(payload);
}

/// Encodes a monophonic melody as SMF format 1 with a single track at
/// 120 BPM. `lyrics[i]`, when given, becomes a lyric event on note `i`.
pub fn write_midi(notes: &[Note], lyrics: Option<&[Option<String>]>, tb: &TimeBase) -> Result<Vec<u8>> {
    if tb.ticks_per_quarter == 0 || tb.ticks_per_quarter > 0x7FFF {
        return Err(Error::InvalidTimeBase(format!(
            "{} ticks per quarter cannot be encoded",
            tb.ticks_per_quarter
        )));
    }
    for w in notes.windows(2) {
        if w[1].onset < w[0].end() {
            return Err(Error::Overlap {
                onset: w[1].onset,
                previous_end: w[0].end(),
            });
        }
    }
    let mut track = Vec::new();
    push_meta(&mut track, 0, 0x03, b"melody");
    push_meta(&mut track, 0, 0x51, &TEMPO_US_PER_QUARTER.to_be_bytes()[1..]);
    let denominator_pow = 2u8; // quarter-note beats
    push_meta(
        &mut track,
        0,
        0x58,
        &[tb.beats_per_bar.min(255) as u8, denominator_pow, 24, 8],
    );
    let mut now = 0;
    for (i, n) in notes.iter().enumerate() {
        if let Some(Some(text)) = lyrics.and_then(|l| l.get(i)) {
            push_meta(&mut track, n.onset - now, 0x05, text.as_bytes());
            now = n.onset;
        }
        push_vlq(&mut track, n.onset - now);
        track.extend_from_slice(&[0x90, n.pitch, n.velocity]);
        push_vlq(&mut track, n.duration);
        track.extend_from_slice(&[0x80, n.pitch, 0]);
        now = n.end();
    }
    push_meta(&mut track, 0, 0x2F, &[]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(tb.ticks_per_quarter as u16).to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

pub fn write_midi_file(path: &Path, notes: &[Note], lyrics: Option<&[Option<String>]>, tb: &TimeBase) -> Result<()> {
    let bytes = write_midi(notes, lyrics, tb)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_midi_file(path: &Path) -> Result<MidiSong> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_midi(&bytes)
}
