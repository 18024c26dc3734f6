//! Synthetic acoustic proxies for the five sound classes.
//!
//! Each class reproduces a coarse acoustic contrast: tonal versus broadband,
//! continuous versus percussive, band placement and loudness. White noise is
//! then added at the requested SNR.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{write_manifest, write_wav, AudioRecord, ManifestEntry, PIPELINE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProxyClass {
    Wheeze,
    Stridor,
    Cough,
    ThroatClear,
    Other,
}

impl ProxyClass {
    pub const ALL: [ProxyClass; 5] =
        [ProxyClass::Wheeze, ProxyClass::Stridor, ProxyClass::Cough, ProxyClass::ThroatClear, ProxyClass::Other];

    pub fn label(self) -> &'static str {
        match self {
            ProxyClass::Wheeze => "wheeze",
            ProxyClass::Stridor => "stridor",
            ProxyClass::Cough => "cough",
            ProxyClass::ThroatClear => "throat_clear",
            ProxyClass::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCounts {
    #[serde(default)]
    pub wheeze: usize,
    #[serde(default)]
    pub stridor: usize,
    #[serde(default)]
    pub cough: usize,
    #[serde(default)]
    pub throat_clear: usize,
    #[serde(default)]
    pub other: usize,
}

impl ClassCounts {
    pub fn uniform(n: usize) -> Self {
        Self { wheeze: n, stridor: n, cough: n, throat_clear: n, other: n }
    }

    pub fn get(&self, class: ProxyClass) -> usize {
        match class {
            ProxyClass::Wheeze => self.wheeze,
            ProxyClass::Stridor => self.stridor,
            ProxyClass::Cough => self.cough,
            ProxyClass::ThroatClear => self.throat_clear,
            ProxyClass::Other => self.other,
        }
    }

    pub fn total(&self) -> usize {
        ProxyClass::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

fn default_segment_seconds() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub counts: ClassCounts,
    #[serde(default = "default_segment_seconds")]
    pub segment_seconds: f64,
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidArgument(format!("snr_db must be finite, got {}", self.snr_db)));
        }
        if !(self.segment_seconds.is_finite() && self.segment_seconds > 0.0) {
            return Err(Error::InvalidArgument(format!("segment_seconds must be positive, got {}", self.segment_seconds)));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Generates the corpus in class order, `counts.get(class)` records each.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<AudioRecord>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.counts.total());
    let mut stream = 0u64;
    for class in ProxyClass::ALL {
        for i in 0..spec.counts.get(class) {
            out.push(generate_record(class, spec.segment_seconds, spec.snr_db, spec.seed, stream, i)?);
            stream += 1;
        }
    }
    Ok(out)
}

/// One record; `stream` selects an independent ChaCha8 stream under `seed`.
pub fn generate_record(class: ProxyClass, seconds: f64, snr_db: f64, seed: u64, stream: u64, index: usize) -> Result<AudioRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = (seconds * PIPELINE_RATE as f64).round() as usize;
    let fs = PIPELINE_RATE as f64;
    let mut clean = match class {
        ProxyClass::Wheeze => wheeze(n, fs, &mut rng),
        ProxyClass::Stridor => stridor(n, fs, &mut rng),
        ProxyClass::Cough => cough(n, fs, &mut rng),
        ProxyClass::ThroatClear => throat_clear(n, fs, &mut rng),
        ProxyClass::Other => other(n, fs, &mut rng),
    };
    let power = mean_square(&clean);
    let noise_std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    for s in clean.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *s += noise_std * z;
    }
    let peak = clean.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.99 {
        let g = 0.99 / peak;
        clean.iter_mut().for_each(|s| *s *= g);
    }
    AudioRecord::new(clean, PIPELINE_RATE, Some(class.label().into()), format!("{}_{index:03}", class.label()))
}

fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64
}

fn scale_to_rms(x: &mut [f64], target: f64) {
    let rms = mean_square(x).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|s| *s *= target / rms);
    }
}

/// Gaussian noise with spectral amplitude `gain(freq_hz)`, unit RMS.
fn shaped_noise(n: usize, fs: f64, rng: &mut ChaCha8Rng, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex<f64>> = (0..n).map(|_| Complex::new(StandardNormal.sample(&mut *rng), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        *c *= gain(bin as f64 * fs / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    scale_to_rms(&mut out, 1.0);
    out
}

fn band(lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    move |f| if f >= lo && f <= hi { 1.0 } else { 0.0 }
}

/// Slow breathing-like envelope between `floor` and 1.
fn breath(t: f64, rate: f64, phase: f64, floor: f64) -> f64 {
    floor + (1.0 - floor) * 0.5 * (1.0 - (2.0 * PI * rate * t + phase).cos())
}

fn wheeze(n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let center = 600.0 + rng.gen_range(-10.0..10.0);
    let vib_rate = rng.gen_range(3.0..6.0);
    let vib_phase = rng.gen_range(0.0..2.0 * PI);
    let am_rate = rng.gen_range(0.3..0.6);
    let am_phase = rng.gen_range(0.0..2.0 * PI);
    let mut phase = rng.gen_range(0.0..2.0 * PI);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let f = center + 50.0 * (2.0 * PI * vib_rate * t + vib_phase).sin();
        phase += 2.0 * PI * f / fs;
        out.push(breath(t, am_rate, am_phase, 0.5) * phase.sin());
    }
    scale_to_rms(&mut out, rng.gen_range(0.08..0.12));
    out
}

fn stridor(n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let noise = shaped_noise(n, fs, rng, band(100.0, 1000.0));
    let tone_f = rng.gen_range(300.0..500.0);
    let am_rate = rng.gen_range(0.4..0.8);
    let am_phase = rng.gen_range(0.0..2.0 * PI);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            // the tone swells and fades over the breath, so the band's spread moves
            let tone = breath(t, am_rate, am_phase, 0.0) * 1.5 * (2.0 * PI * tone_f * t + phase).sin();
            0.6 * noise[i] + tone
        })
        .collect();
    scale_to_rms(&mut out, rng.gen_range(0.2..0.26));
    out
}

/// Places `count` bursts of `len_range` samples at non-overlapping random offsets.
fn burst_starts(n: usize, count: usize, max_len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let slot = n / count.max(1);
    (0..count)
        .map(|k| {
            let room = slot.saturating_sub(max_len).max(1);
            k * slot + rng.gen_range(0..room)
        })
        .collect()
}

fn cough(n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let count = rng.gen_range(2..=4);
    let max_len = (0.150 * fs) as usize;
    let mut out = vec![0.0; n];
    for start in burst_starts(n, count, max_len, rng) {
        let len = (rng.gen_range(0.080..=0.150) * fs) as usize;
        let tau = len as f64 / 4.0;
        let amp = rng.gen_range(0.5..0.7);
        let attack = (0.005 * fs) as usize;
        for j in 0..len.min(n - start) {
            let env = if j < attack { j as f64 / attack as f64 } else { (-((j - attack) as f64) / tau).exp() };
            let z: f64 = StandardNormal.sample(&mut *rng);
            out[start + j] += amp * env * z.clamp(-3.0, 3.0) / 1.5;
        }
    }
    out
}

fn throat_clear(n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let count = rng.gen_range(1..=2);
    let max_len = (0.400 * fs) as usize;
    let low = shaped_noise(n, fs, rng, band(80.0, 700.0));
    let mut out = vec![0.0; n];
    for start in burst_starts(n, count, max_len, rng) {
        let len = (rng.gen_range(0.200..=0.400) * fs) as usize;
        let amp = rng.gen_range(0.12..0.18);
        let rattle = rng.gen_range(20.0..40.0);
        for j in 0..len.min(n - start) {
            let t = j as f64 / fs;
            let hann = 0.5 * (1.0 - (2.0 * PI * j as f64 / len as f64).cos());
            let roughness = 0.75 + 0.25 * (2.0 * PI * rattle * t).sin();
            out[start + j] += amp * hann * roughness * low[start + j];
        }
    }
    out
}

fn other(n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = shaped_noise(n, fs, rng, |f| if f < 20.0 { 0.0 } else { 1.0 / f.sqrt() });
    scale_to_rms(&mut out, rng.gen_range(0.03..0.06));
    out
}

/// Writes one WAV per record plus `manifest.csv` into `dir`; returns the manifest path.
pub fn write_corpus(spec: &CorpusSpec, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let records = generate(spec)?;
    let mut entries = Vec::with_capacity(records.len());
    for r in &records {
        let path = dir.join(format!("{}.wav", r.source_id));
        write_wav(r, &path)?;
        entries.push(ManifestEntry { path, label: r.label.clone().unwrap_or_default() });
    }
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &entries, spec.segment_seconds)?;
    Ok(manifest)
}
