//! Audio ingestion: WAV decoding, sample-rate conversion, fixed-length
//! segmentation and dataset manifests.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};

/// Sample rate every downstream stage assumes.
pub const PIPELINE_RATE: u32 = 8000;

/// Mono audio at a known rate, optionally labeled with its sound class.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioRecord {
    samples: Vec<f64>,
    sample_rate: u32,
    pub label: Option<String>,
    pub source_id: String,
}

impl AudioRecord {
    /// Builds a record, rejecting out-of-range or non-finite samples and a zero rate.
    pub fn new(samples: Vec<f64>, sample_rate: u32, label: Option<String>, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidRecord("sample rate must be positive".into()));
        }
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| !(-1.0..=1.0).contains(*s)) {
            return Err(Error::InvalidRecord(format!("sample {i} = {s} lies outside [-1, 1]")));
        }
        Ok(Self { samples, sample_rate, label, source_id: source_id.into() })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Reads a PCM WAV file (8 or 16 bit integer, any channel count) into a mono record.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioRecord> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path)?;
    let id = path.display().to_string();
    read_wav(BufReader::new(file), &id)
}

/// Decodes a WAV byte stream; `source_id` names the stream in errors and in the record.
pub fn read_wav<R: Read>(reader: R, source_id: &str) -> Result<AudioRecord> {
    let wav = hound::WavReader::new(reader).map_err(|e| wav_error(e, source_id))?;
    let spec = wav.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedEncoding {
            path: source_id.into(),
            reason: "floating-point samples".into(),
        });
    }
    let scale = match spec.bits_per_sample {
        8 => 128.0,
        16 => 32768.0,
        bits => {
            return Err(Error::UnsupportedEncoding {
                path: source_id.into(),
                reason: format!("{bits}-bit samples"),
            })
        }
    };
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::MalformedWav { path: source_id.into(), reason: "zero channels".into() });
    }

    let mut mono = Vec::with_capacity(wav.len() as usize / channels);
    let mut acc = 0.0;
    let mut filled = 0;
    for s in wav.into_samples::<i32>() {
        let s = s.map_err(|e| wav_error(e, source_id))?;
        acc += s as f64 / scale;
        filled += 1;
        if filled == channels {
            mono.push(acc / channels as f64);
            acc = 0.0;
            filled = 0;
        }
    }
    AudioRecord::new(mono, spec.sample_rate, None, source_id)
}

fn wav_error(e: hound::Error, source: &str) -> Error {
    match e {
        // short reads surface as synthetic io errors; only OS failures are real I/O
        hound::Error::IoError(io) if io.raw_os_error().is_some() => Error::Io(io),
        hound::Error::IoError(io) => Error::MalformedWav { path: source.into(), reason: io.to_string() },
        hound::Error::Unsupported => Error::UnsupportedEncoding {
            path: source.into(),
            reason: "not integer PCM".into(),
        },
        other => Error::MalformedWav { path: source.into(), reason: other.to_string() },
    }
}

/// Writes a record as 16-bit mono PCM.
pub fn write_wav(record: &AudioRecord, path: impl AsRef<Path>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: record.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(hound_io)?;
    for &s in record.samples() {
        writer.write_sample(quantize_i16(s)).map_err(hound_io)?;
    }
    writer.finalize().map_err(hound_io)?;
    Ok(())
}

pub(crate) fn quantize_i16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

fn hound_io(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::InvalidArgument(other.to_string()),
    }
}

/// Zero crossings of the interpolation kernel kept on each side of its centre.
const SINC_ZERO_CROSSINGS: f64 = 16.0;
/// Passband edge as a fraction of the lower of the two sample rates.
const CUTOFF_FRACTION: f64 = 0.45;
/// Above this many phases the kernel is evaluated per output sample instead of tabulated.
const MAX_TABLE_PHASES: usize = 4096;

/// Converts a record to `target_rate` with a windowed-sinc polyphase filter.
///
/// A record already at the target rate is returned unchanged.
pub fn resample(record: &AudioRecord, target_rate: u32) -> Result<AudioRecord> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    let in_rate = record.sample_rate;
    if in_rate == target_rate {
        return Ok(record.clone());
    }
    let g = gcd(in_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = in_rate as u64 / g;

    // cutoff in cycles per input sample
    let fc = CUTOFF_FRACTION * in_rate.min(target_rate) as f64 / in_rate as f64;
    let half_width = (SINC_ZERO_CROSSINGS / (2.0 * fc)).ceil() as i64;
    let taps = (2 * half_width) as usize;

    let kernel_row = |phase: u64| -> Vec<f64> {
        let frac = phase as f64 / up as f64;
        let mut row: Vec<f64> = (0..taps)
            .map(|j| {
                let t = frac + (half_width - 1) as f64 - j as f64;
                windowed_sinc(t, fc, half_width as f64)
            })
            .collect();
        let gain: f64 = row.iter().sum();
        if gain.abs() > f64::EPSILON {
            row.iter_mut().for_each(|h| *h /= gain);
        }
        row
    };
    let table: Option<Vec<Vec<f64>>> = (up as usize <= MAX_TABLE_PHASES).then(|| (0..up).map(kernel_row).collect());

    let n_in = record.len() as u64;
    let out_len = ((n_in * target_rate as u64 + in_rate as u64 / 2) / in_rate as u64) as usize;
    let x = record.samples();
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = pos % up;
        let computed;
        let row = match &table {
            Some(t) => &t[phase as usize],
            None => {
                computed = kernel_row(phase);
                &computed
            }
        };
        let start = base - half_width + 1;
        let mut acc = 0.0;
        for (j, h) in row.iter().enumerate() {
            let m = start + j as i64;
            if m >= 0 && (m as u64) < n_in {
                acc += x[m as usize] * h;
            }
        }
        // ringing near full-scale transients may overshoot
        out.push(acc.clamp(-1.0, 1.0));
    }
    AudioRecord::new(out, target_rate, record.label.clone(), record.source_id.clone())
}

fn windowed_sinc(t: f64, fc: f64, half_width: f64) -> f64 {
    let u = t / half_width;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let arg = 2.0 * fc * t;
    let sinc = if arg.abs() < 1e-12 { 1.0 } else { (std::f64::consts::PI * arg).sin() / (std::f64::consts::PI * arg) };
    let pu = std::f64::consts::PI * u;
    let blackman = 0.42 + 0.5 * pu.cos() + 0.08 * (2.0 * pu).cos();
    2.0 * fc * sinc * blackman
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Splits a record into consecutive non-overlapping segments of `seconds`.
///
/// A trailing remainder shorter than one segment is dropped with a warning.
pub fn segment(record: &AudioRecord, seconds: f64) -> Result<Vec<AudioRecord>> {
    if !(seconds > 0.0) || !seconds.is_finite() {
        return Err(Error::InvalidArgument(format!("segment length must be positive, got {seconds}")));
    }
    let seg_len = (seconds * record.sample_rate as f64).round() as usize;
    if seg_len == 0 {
        return Err(Error::InvalidArgument(format!("segment of {seconds} s holds no samples")));
    }
    let count = record.len() / seg_len;
    let remainder = record.len() - count * seg_len;
    if remainder > 0 {
        warn!(
            "{}: discarding {} trailing samples shorter than one {} s segment",
            record.source_id, remainder, seconds
        );
    }
    Ok(record
        .samples
        .chunks_exact(seg_len)
        .enumerate()
        .map(|(i, chunk)| AudioRecord {
            samples: chunk.to_vec(),
            sample_rate: record.sample_rate,
            label: record.label.clone(),
            source_id: format!("{}#{}", record.source_id, i),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
}

/// A labeled list of recordings plus the segment length they are cut into.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub segment_seconds: f64,
    pub label_catalog: Vec<String>,
}

pub const DEFAULT_SEGMENT_SECONDS: f64 = 5.0;
const SEGMENT_DIRECTIVE: &str = "segment_seconds";

/// Parses a `path,label` CSV manifest.
///
/// Lines starting with `#` are comments, except `# segment_seconds=<s>` which sets
/// the segment length (default 5 s). Relative paths resolve against the manifest's
/// directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let mut segment_seconds = DEFAULT_SEGMENT_SECONDS;
    let mut header_seen = false;
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    let mut label_catalog: Vec<String> = Vec::new();

    for row in reader.records() {
        let row = row?;
        let first = row.get(0).unwrap_or("");
        if let Some(comment) = first.strip_prefix('#') {
            // the csv reader splits comments on commas too; rejoin before parsing
            let text = std::iter::once(comment).chain(row.iter().skip(1)).collect::<Vec<_>>().join(",");
            if let Some(value) = parse_directive(&text) {
                segment_seconds = match value.parse::<f64>() {
                    Ok(v) if v > 0.0 && v.is_finite() => v,
                    _ => {
                        return Err(Error::Manifest(format!("unknown segment length field '{value}'")));
                    }
                };
            }
            continue;
        }
        if row.iter().all(str::is_empty) {
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = row.iter().collect();
            if cols != ["path", "label"] {
                return Err(Error::Manifest(format!("expected header 'path,label', found '{}'", cols.join(","))));
            }
            header_seen = true;
            continue;
        }
        if row.len() != 2 {
            return Err(Error::Manifest(format!("expected 2 fields, found {} in '{}'", row.len(), row.iter().collect::<Vec<_>>().join(","))));
        }
        let (raw, label) = (&row[0], &row[1]);
        if label.is_empty() {
            return Err(Error::Manifest(format!("entry '{raw}' has an empty label")));
        }
        let resolved = if Path::new(raw).is_absolute() { PathBuf::from(raw) } else { base.join(raw) };
        if !seen.insert(resolved.clone()) {
            return Err(Error::DuplicatePath(raw.to_string()));
        }
        if !resolved.exists() {
            return Err(Error::MissingFile(resolved));
        }
        if !label_catalog.iter().any(|l| l == label) {
            label_catalog.push(label.to_string());
        }
        entries.push(ManifestEntry { path: resolved, label: label.to_string() });
    }
    if entries.is_empty() {
        return Err(Error::Manifest("no entries".into()));
    }
    Ok(DatasetManifest { entries, segment_seconds, label_catalog })
}

fn parse_directive(comment: &str) -> Option<&str> {
    let (key, value) = comment.split_once('=')?;
    (key.trim() == SEGMENT_DIRECTIVE).then(|| value.trim())
}

/// Writes a manifest with paths relative to `dir` when possible.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry], segment_seconds: f64) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or(Path::new(""));
    let mut out = format!("# {SEGMENT_DIRECTIVE}={segment_seconds}\npath,label\n");
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for e in entries {
        let p = e.path.strip_prefix(dir).unwrap_or(&e.path);
        w.write_record([p.to_string_lossy().as_ref(), e.label.as_str()])?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.push_str(&String::from_utf8_lossy(&body));
    std::fs::write(path, out)?;
    Ok(())
}
