//! Append-only symptom event log and daily summaries.
//!
//! One event per line: `id|sound|activity|humidity|temp_c|HH:MM:SS|YYYY-MM-DD`.
//! Null fields are written as `\N`; `\`, `|`, CR and LF inside text are backslash-escaped.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveTime, Timelike};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NewEvent {
    pub sound_detected: Option<String>,
    pub activity_level: Option<String>,
    pub relative_humidity: Option<f64>,
    pub temperature_c: Option<f64>,
    pub event_time: NaiveTime,
    pub date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymptomEvent {
    pub id: u64,
    pub sound_detected: Option<String>,
    pub activity_level: Option<String>,
    pub relative_humidity: Option<f64>,
    pub temperature_c: Option<f64>,
    pub event_time: NaiveTime,
    pub date: NaiveDate,
}

impl SymptomEvent {
    pub fn from_new(id: u64, e: NewEvent) -> Self {
        Self {
            id,
            sound_detected: e.sound_detected,
            activity_level: e.activity_level,
            relative_humidity: e.relative_humidity,
            temperature_c: e.temperature_c,
            event_time: e.event_time,
            date: e.date,
        }
    }

    pub fn to_line(&self) -> String {
        let text = |v: &Option<String>| v.as_deref().map_or_else(|| NULL.to_string(), escape);
        let num = |v: Option<f64>| v.map_or_else(|| NULL.to_string(), |x| x.to_string());
        format!(
            "{}|{}|{}|{}|{}|{}|{}",
            self.id,
            text(&self.sound_detected),
            text(&self.activity_level),
            num(self.relative_humidity),
            num(self.temperature_c),
            self.event_time.format("%H:%M:%S"),
            self.date.format("%Y-%m-%d"),
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let fields = split_fields(line)?;
        let [id, sound, activity, humidity, temp, time, date]: [Field; 7] = fields
            .try_into()
            .map_err(|f: Vec<Field>| Error::Store(format!("expected 7 fields, found {}", f.len())))?;
        let bad = |what: &str, v: &str| Error::Store(format!("invalid {what} {v:?}"));
        let required = |f: Field, what: &str| f.0.ok_or_else(|| Error::Store(format!("{what} is null")));
        let num = |f: Field, what: &str| -> Result<Option<f64>> {
            f.0.map(|s| s.parse::<f64>().map_err(|_| bad(what, &s))).transpose()
        };
        let id_s = required(id, "id")?;
        let time_s = required(time, "event_time")?;
        let date_s = required(date, "date")?;
        Ok(Self {
            id: id_s.parse().map_err(|_| bad("id", &id_s))?,
            sound_detected: sound.0,
            activity_level: activity.0,
            relative_humidity: num(humidity, "humidity")?,
            temperature_c: num(temp, "temperature")?,
            event_time: NaiveTime::parse_from_str(&time_s, "%H:%M:%S").map_err(|_| bad("time", &time_s))?,
            date: NaiveDate::parse_from_str(&date_s, "%Y-%m-%d").map_err(|_| bad("date", &date_s))?,
        })
    }
}

const NULL: &str = "\\N";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

struct Field(Option<String>);

fn split_fields(line: &str) -> Result<Vec<Field>> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut null = false;
    let mut escaped = false;
    let mut chars = line.chars();
    loop {
        let Some(ch) = chars.next() else {
            if escaped {
                return Err(Error::Store("dangling escape".into()));
            }
            fields.push(Field(if null { None } else { Some(std::mem::take(&mut cur)) }));
            break;
        };
        if escaped {
            escaped = false;
            match ch {
                '\\' => cur.push('\\'),
                '|' => cur.push('|'),
                'n' => cur.push('\n'),
                'r' => cur.push('\r'),
                'N' if cur.is_empty() && !null => null = true,
                other => return Err(Error::Store(format!("unknown escape \\{other}"))),
            }
            continue;
        }
        match ch {
            '\\' => escaped = true,
            '|' => {
                fields.push(Field(if null { None } else { Some(std::mem::take(&mut cur)) }));
                null = false;
            }
            c => {
                if null {
                    return Err(Error::Store("text after null marker".into()));
                }
                cur.push(c);
            }
        }
        if null && !cur.is_empty() {
            return Err(Error::Store("text after null marker".into()));
        }
    }
    Ok(fields)
}

/// Reads every complete line; an unterminated last line is an interrupted write and is skipped.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<SymptomEvent>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let complete = match text.rfind('\n') {
        Some(end) => &text[..end],
        None => "",
    };
    if complete.len() + 1 < text.len() {
        log::warn!("{}: ignoring partial trailing record", path.display());
    }
    complete
        .split('\n')
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            SymptomEvent::parse_line(l.strip_suffix('\r').unwrap_or(l))
                .map_err(|e| Error::Store(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Durable append-only log; every append is flushed to disk before returning.
#[derive(Debug)]
pub struct EventStore {
    path: PathBuf,
    file: File,
    next_id: u64,
}

impl EventStore {
    /// Opens or creates the log; ids continue after the largest stored id.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::open_seeded(path, 0)
    }

    /// Like `open`, but the next id is at least `seed + 1`.
    pub fn open_seeded(path: impl AsRef<Path>, seed: u64) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let max_id = if path.exists() {
            truncate_partial(&path)?;
            read_events(&path)?.iter().map(|e| e.id).max().unwrap_or(0)
        } else {
            0
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file, next_id: max_id.max(seed) + 1 })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn append(&mut self, event: NewEvent) -> Result<SymptomEvent> {
        let stored = SymptomEvent::from_new(self.next_id, event);
        let mut line = stored.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        self.next_id += 1;
        Ok(stored)
    }
}

/// Drops an interrupted trailing write so new lines start cleanly.
fn truncate_partial(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path)?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
    if keep < bytes.len() {
        log::warn!("{}: dropping {} bytes of partial record", path.display(), bytes.len() - keep);
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(keep as u64)?;
        f.sync_data()?;
    }
    Ok(())
}

/// Six-hour reporting buckets, each half-open `[start, start + 6h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DayPeriod {
    Night,
    Morning,
    Afternoon,
    Evening,
}

impl DayPeriod {
    pub const ALL: [DayPeriod; 4] = [DayPeriod::Night, DayPeriod::Morning, DayPeriod::Afternoon, DayPeriod::Evening];

    pub fn of(t: NaiveTime) -> Self {
        Self::ALL[(t.hour() / 6) as usize]
    }

    pub fn name(self) -> &'static str {
        match self {
            DayPeriod::Night => "night",
            DayPeriod::Morning => "morning",
            DayPeriod::Afternoon => "afternoon",
            DayPeriod::Evening => "evening",
        }
    }

    pub fn hours(self) -> &'static str {
        match self {
            DayPeriod::Night => "00:00-06:00",
            DayPeriod::Morning => "06:00-12:00",
            DayPeriod::Afternoon => "12:00-18:00",
            DayPeriod::Evening => "18:00-24:00",
        }
    }
}

impl fmt::Display for DayPeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-symptom event counts for one day, by period.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySummary {
    pub date: NaiveDate,
    pub counts: BTreeMap<String, [u64; 4]>,
}

impl DailySummary {
    pub fn count(&self, period: DayPeriod, symptom: &str) -> u64 {
        self.counts.get(symptom).map_or(0, |c| c[period as usize])
    }

    pub fn period_total(&self, period: DayPeriod) -> u64 {
        self.counts.values().map(|c| c[period as usize]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().flatten().sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "period", "symptom", "count"])?;
        for p in DayPeriod::ALL {
            for (s, c) in &self.counts {
                w.write_record([self.date.to_string(), p.name().to_string(), s.clone(), c[p as usize].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for DailySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Symptom report for {}", self.date.format("%b %d %Y"))?;
        for p in DayPeriod::ALL {
            writeln!(f, "{:<10} {}  total {}", p.name(), p.hours(), self.period_total(p))?;
            for (s, c) in &self.counts {
                if c[p as usize] > 0 {
                    writeln!(f, "    {:<14} {}", s, c[p as usize])?;
                }
            }
        }
        write!(f, "total      {}", self.total())
    }
}

/// Counts events on `date` that carry a detected sound.
pub fn daily_report(events: &[SymptomEvent], date: NaiveDate) -> DailySummary {
    let mut counts: BTreeMap<String, [u64; 4]> = BTreeMap::new();
    for e in events.iter().filter(|e| e.date == date) {
        if let Some(sound) = &e.sound_detected {
            counts.entry(sound.clone()).or_default()[DayPeriod::of(e.event_time) as usize] += 1;
        }
    }
    DailySummary { date, counts }
}

/// Writes summaries as text or CSV through a buffered writer.
pub fn write_report(summary: &DailySummary, out: impl std::io::Write, csv: bool) -> Result<()> {
    let mut out = BufWriter::new(out);
    if csv {
        summary.write_csv(&mut out)?;
    } else {
        writeln!(out, "{summary}")?;
    }
    out.flush()?;
    Ok(())
}
