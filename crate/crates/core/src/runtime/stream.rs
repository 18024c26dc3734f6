//! Pull-based sample streams and the incremental window classifier.

use std::io::Read;
use std::path::Path;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TrySendError};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{NaiveDateTime, TimeDelta, Timelike};

use super::store::NewEvent;
use crate::audio::PIPELINE_RATE;
use crate::dsp::SpectrumAnalyzer;
use crate::error::{Error, Result};
use crate::features::{Feature, FeatureExtractor, FrameTracker, WindowAssembler, WindowFeatureVector};
use crate::models::{Prediction, TrainedModel};

/// Result of one pull from a sample source.
#[derive(Debug, Clone, PartialEq)]
pub enum Pull {
    Chunk(Vec<f64>),
    /// No data available yet; the source may still deliver.
    Pending,
    End,
}

pub trait SampleSource {
    fn pull(&mut self) -> Result<Pull>;
}

/// Serves an in-memory buffer in fixed-size chunks.
#[derive(Debug, Clone)]
pub struct MemorySource {
    samples: Vec<f64>,
    chunk: usize,
    pos: usize,
}

impl MemorySource {
    pub fn new(samples: Vec<f64>, chunk: usize) -> Self {
        Self { samples, chunk: chunk.max(1), pos: 0 }
    }
}

impl SampleSource for MemorySource {
    fn pull(&mut self) -> Result<Pull> {
        if self.pos >= self.samples.len() {
            return Ok(Pull::End);
        }
        let end = (self.pos + self.chunk).min(self.samples.len());
        let out = self.samples[self.pos..end].to_vec();
        self.pos = end;
        Ok(Pull::Chunk(out))
    }
}

/// Decodes an 8 kHz PCM WAV stream chunk by chunk, downmixing to mono.
pub struct WavSource<R: Read> {
    reader: hound::WavReader<R>,
    chunk: usize,
    channels: usize,
    scale: f64,
}

impl WavSource<std::io::BufReader<std::fs::File>> {
    pub fn open(path: impl AsRef<Path>, chunk: usize) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let reader = hound::WavReader::open(path).map_err(|e| Error::MalformedWav {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_reader(reader, chunk, &path.display().to_string())
    }
}

impl<R: Read> WavSource<R> {
    pub fn new(reader: R, chunk: usize, source_id: &str) -> Result<Self> {
        let reader = hound::WavReader::new(reader).map_err(|e| Error::MalformedWav {
            path: source_id.into(),
            reason: e.to_string(),
        })?;
        Self::from_reader(reader, chunk, source_id)
    }

    fn from_reader(reader: hound::WavReader<R>, chunk: usize, source_id: &str) -> Result<Self> {
        let spec = reader.spec();
        if spec.sample_rate != PIPELINE_RATE {
            return Err(Error::RateMismatch { expected: PIPELINE_RATE, actual: spec.sample_rate });
        }
        let scale = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Int, 8) => 128.0,
            (hound::SampleFormat::Int, 16) => 32768.0,
            _ => {
                return Err(Error::UnsupportedEncoding {
                    path: source_id.into(),
                    reason: format!("{:?} {}-bit", spec.sample_format, spec.bits_per_sample),
                })
            }
        };
        Ok(Self { reader, chunk: chunk.max(1), channels: spec.channels.max(1) as usize, scale })
    }
}

impl<R: Read> SampleSource for WavSource<R> {
    fn pull(&mut self) -> Result<Pull> {
        let mut out = Vec::with_capacity(self.chunk);
        let mut samples = self.reader.samples::<i32>();
        while out.len() < self.chunk {
            let mut acc = 0.0;
            for c in 0..self.channels {
                match samples.next() {
                    Some(Ok(s)) => acc += s as f64 / self.scale,
                    Some(Err(e)) => return Err(Error::MalformedWav { path: "stream".into(), reason: e.to_string() }),
                    None if c == 0 => {
                        return Ok(if out.is_empty() { Pull::End } else { Pull::Chunk(out) });
                    }
                    None => return Err(Error::MalformedWav { path: "stream".into(), reason: "partial sample frame".into() }),
                }
            }
            out.push(acc / self.channels as f64);
        }
        Ok(Pull::Chunk(out))
    }
}

enum QueueMsg {
    Chunk(Vec<f64>),
    End,
}

/// Producer half of a bounded chunk queue between a capture thread and the pipeline.
#[derive(Clone)]
pub struct QueueProducer {
    tx: SyncSender<QueueMsg>,
    capacity: usize,
}

impl QueueProducer {
    /// Enqueues a chunk without blocking; a full queue is an overrun.
    pub fn push(&self, chunk: Vec<f64>) -> Result<()> {
        match self.tx.try_send(QueueMsg::Chunk(chunk)) {
            Ok(()) => Ok(()),
            Err(TrySendError::Full(_)) => Err(Error::Overrun(self.capacity)),
            Err(TrySendError::Disconnected(_)) => Err(Error::Store("stream consumer has gone away".into())),
        }
    }

    /// Signals end of stream, waiting for queue space if needed.
    pub fn finish(self) {
        let _ = self.tx.send(QueueMsg::End);
    }
}

/// Consumer half of the bounded queue.
pub struct QueueSource {
    rx: Receiver<QueueMsg>,
    poll: Duration,
}

/// Creates a bounded queue holding at most `capacity` chunks.
pub fn bounded_queue(capacity: usize, poll: Duration) -> (QueueProducer, QueueSource) {
    let (tx, rx) = mpsc::sync_channel(capacity);
    (QueueProducer { tx, capacity }, QueueSource { rx, poll })
}

impl SampleSource for QueueSource {
    fn pull(&mut self) -> Result<Pull> {
        match self.rx.recv_timeout(self.poll) {
            Ok(QueueMsg::Chunk(c)) => Ok(Pull::Chunk(c)),
            Ok(QueueMsg::End) | Err(RecvTimeoutError::Disconnected) => Ok(Pull::End),
            Err(RecvTimeoutError::Timeout) => Ok(Pull::Pending),
        }
    }
}

/// Ambient context sampled alongside the audio.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextReading {
    /// Seconds since stream start.
    pub offset_seconds: f64,
    pub activity: Option<String>,
    pub humidity: Option<f64>,
    pub temperature_c: Option<f64>,
}

pub trait ContextSource {
    /// Most recent reading at or before `at_seconds`, if any has arrived.
    fn latest(&mut self, at_seconds: f64) -> Option<ContextReading>;
}

/// Readings sorted by time, joined last-value-carried-forward.
#[derive(Debug, Clone, Default)]
pub struct ContextTrack {
    readings: Vec<ContextReading>,
    cursor: usize,
    current: Option<ContextReading>,
}

#[derive(Debug, serde::Deserialize)]
struct ContextRow {
    offset_seconds: f64,
    activity: Option<String>,
    humidity: Option<f64>,
    temp_c: Option<f64>,
}

impl ContextTrack {
    pub fn new(mut readings: Vec<ContextReading>) -> Self {
        readings.sort_by(|a, b| a.offset_seconds.total_cmp(&b.offset_seconds));
        Self { readings, cursor: 0, current: None }
    }

    /// CSV with header `offset_seconds,activity,humidity,temp_c`; empty fields are null.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let readings = r
            .deserialize::<ContextRow>()
            .map(|row| {
                row.map(|r| ContextReading {
                    offset_seconds: r.offset_seconds,
                    activity: r.activity.filter(|a| !a.is_empty()),
                    humidity: r.humidity,
                    temperature_c: r.temp_c,
                })
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self::new(readings))
    }
}

impl ContextSource for ContextTrack {
    fn latest(&mut self, at_seconds: f64) -> Option<ContextReading> {
        while self.cursor < self.readings.len() && self.readings[self.cursor].offset_seconds <= at_seconds {
            self.current = Some(self.readings[self.cursor].clone());
            self.cursor += 1;
        }
        self.current.clone()
    }
}

/// One completed analysis window from the stream.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutcome {
    pub window_index: usize,
    /// Exclusive end of the window's last frame, in samples from stream start.
    pub end_sample: usize,
    pub features: WindowFeatureVector,
    /// `None` when the window failed the activity gate.
    pub prediction: Option<Prediction>,
}

/// Smallest meanRMS a window needs before it is classified.
pub const DEFAULT_GATE: f64 = 1e-4;

/// Incremental feature extraction and classification over pushed sample chunks.
///
/// Framing and window boundaries are aligned to stream start exactly as in
/// batch extraction, so equal inputs produce equal windows.
pub struct StreamClassifier<'m> {
    analyzer: SpectrumAnalyzer,
    model: &'m TrainedModel,
    gate: f64,
    frames_per_window: usize,
    buffer: Vec<f64>,
    /// Absolute index of `buffer[0]`.
    buffer_start: usize,
    next_frame: usize,
    tracker: FrameTracker,
    assembler: WindowAssembler,
}

impl<'m> StreamClassifier<'m> {
    pub fn new(extractor: &FeatureExtractor, model: &'m TrainedModel, gate: f64) -> Result<Self> {
        if !(gate >= 0.0) {
            return Err(Error::InvalidArgument(format!("gate {gate} must be >= 0")));
        }
        let canonical = WindowFeatureVector { window_index: 0, values: [0.0; 12], degenerate: false };
        let missing = model.missing_features(&canonical);
        if !missing.is_empty() {
            return Err(Error::MissingFeatures(missing));
        }
        Ok(Self {
            analyzer: extractor.analyzer().clone(),
            model,
            gate,
            frames_per_window: extractor.frames_per_window(),
            buffer: Vec::new(),
            buffer_start: 0,
            next_frame: 0,
            tracker: FrameTracker::new(extractor.config()),
            assembler: WindowAssembler::new(extractor.frames_per_window()),
        })
    }

    pub fn sample_rate(&self) -> u32 {
        self.analyzer.config().sample_rate
    }

    /// Whether a window is loud enough to classify.
    pub fn passes_gate(&self, v: &WindowFeatureVector) -> bool {
        !v.degenerate && v.get(Feature::MeanRms) >= self.gate
    }

    pub fn push(&mut self, chunk: &[f64]) -> Result<Vec<WindowOutcome>> {
        let cfg = *self.analyzer.config();
        self.buffer.extend_from_slice(chunk);
        let mut out = Vec::new();
        while self.next_frame + cfg.frame_len <= self.buffer_start + self.buffer.len() {
            let at = self.next_frame - self.buffer_start;
            let frame = &self.buffer[at..at + cfg.frame_len];
            let frame_index = self.next_frame / cfg.hop;
            let spectrum = self.analyzer.power_spectrum(frame, frame_index)?;
            let ff = self.tracker.push(frame, spectrum)?;
            if let Some(features) = self.assembler.push(ff)? {
                let prediction = if self.passes_gate(&features) { Some(self.model.predict(&features)?) } else { None };
                out.push(WindowOutcome {
                    window_index: features.window_index,
                    end_sample: ((features.window_index + 1) * self.frames_per_window - 1) * cfg.hop + cfg.frame_len,
                    features,
                    prediction,
                });
            }
            self.next_frame += cfg.hop;
        }
        let drop = (self.next_frame - self.buffer_start).min(self.buffer.len());
        self.buffer.drain(..drop);
        self.buffer_start += drop;
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct StreamOptions {
    pub gate: f64,
    pub underrun_timeout: Duration,
    /// Wall-clock time of the first sample.
    pub start: NaiveDateTime,
}

/// Drives a source through the classifier, handing each window's event to `sink`.
///
/// Returns the window outcomes in order.
pub fn stream_classify<S, F>(
    source: &mut S,
    extractor: &FeatureExtractor,
    model: &TrainedModel,
    mut context: Option<&mut dyn ContextSource>,
    options: &StreamOptions,
    mut sink: F,
) -> Result<Vec<WindowOutcome>>
where
    S: SampleSource + ?Sized,
    F: FnMut(NewEvent) -> Result<()>,
{
    let mut classifier = StreamClassifier::new(extractor, model, options.gate)?;
    let rate = classifier.sample_rate() as f64;
    let mut outcomes = Vec::new();
    let mut last_data = Instant::now();
    loop {
        let chunk = match source.pull()? {
            Pull::Chunk(c) => c,
            Pull::End => break,
            Pull::Pending => {
                if last_data.elapsed() > options.underrun_timeout {
                    return Err(Error::Underrun(options.underrun_timeout));
                }
                thread::sleep(Duration::from_millis(1));
                continue;
            }
        };
        last_data = Instant::now();
        for o in classifier.push(&chunk)? {
            let secs = o.end_sample as f64 / rate;
            let when = options.start + TimeDelta::milliseconds((secs * 1000.0).round() as i64);
            let ctx = context.as_deref_mut().and_then(|c| c.latest(secs));
            sink(NewEvent {
                sound_detected: o.prediction.as_ref().map(|p| p.label.clone()),
                activity_level: ctx.as_ref().and_then(|c| c.activity.clone()),
                relative_humidity: ctx.as_ref().and_then(|c| c.humidity),
                temperature_c: ctx.as_ref().and_then(|c| c.temperature_c),
                event_time: when.time().with_nanosecond(0).unwrap_or(when.time()),
                date: when.date(),
            })?;
            outcomes.push(o);
        }
    }
    Ok(outcomes)
}
