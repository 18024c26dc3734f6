//! Framing, Hamming windowing and one-sided power spectra.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio::{AudioRecord, PIPELINE_RATE};
use crate::error::{Error, Result};

/// Frame geometry for the short-time analysis.
///
/// Defaults: 1024-sample (128 ms at 8 kHz) frames with a 128-sample hop, which
/// is 87.5% overlap, and a 1024-point FFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramingConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub sample_rate: u32,
}

impl Default for FramingConfig {
    fn default() -> Self {
        Self { frame_len: 1024, hop: 128, fft_size: 1024, sample_rate: PIPELINE_RATE }
    }
}

impl FramingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::InvalidArgument(format!("hop {} must lie in 1..={}", self.hop, self.frame_len)));
        }
        if self.fft_size < self.frame_len || !self.fft_size.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "fft size {} must be a power of two no smaller than the frame ({})",
                self.fft_size, self.frame_len
            )));
        }
        if self.frame_len < 2 || self.sample_rate == 0 {
            return Err(Error::InvalidArgument("frame length must be >= 2 and rate positive".into()));
        }
        Ok(())
    }

    /// Number of one-sided spectrum bins, `fft_size / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames that fit in `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            (len - self.frame_len) / self.hop + 1
        }
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }
}

/// Splits a record into overlapping frames; frame `i` covers `[i*hop, i*hop + frame_len)`.
pub fn frame_signal<'a>(record: &'a AudioRecord, cfg: &FramingConfig) -> Result<Vec<&'a [f64]>> {
    cfg.validate()?;
    if record.sample_rate() != cfg.sample_rate {
        return Err(Error::RateMismatch { expected: cfg.sample_rate, actual: record.sample_rate() });
    }
    Ok(frames(record.samples(), cfg).collect())
}

pub(crate) fn frames<'a>(samples: &'a [f64], cfg: &FramingConfig) -> impl Iterator<Item = &'a [f64]> + 'a {
    let (len, hop) = (cfg.frame_len, cfg.hop);
    (0..cfg.frame_count(samples.len())).map(move |i| &samples[i * hop..i * hop + len])
}

/// Symmetric Hamming window, `0.54 - 0.46 cos(2πi/(n-1))`.
pub fn hamming_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("window length {n} < 2")));
    }
    let denom = (n - 1) as f64;
    Ok((0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / denom).cos()).collect())
}

/// One-sided power spectrum of a single frame, bins `0..=fft_size/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpectrum {
    pub frame_index: usize,
    pub power: Vec<f64>,
}

impl FrameSpectrum {
    pub fn is_silent(&self) -> bool {
        self.power.iter().all(|&p| p == 0.0)
    }
}

/// Windowed FFT power spectra with a cached plan. Shareable across threads.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    cfg: FramingConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectrumAnalyzer").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl SpectrumAnalyzer {
    pub fn new(cfg: FramingConfig) -> Result<Self> {
        cfg.validate()?;
        let window = hamming_window(cfg.frame_len)?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(Self { cfg, window, fft })
    }

    pub fn config(&self) -> &FramingConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// `P[k] = |X[k]|²` of the Hamming-weighted, zero-padded frame.
    pub fn power_spectrum(&self, frame: &[f64], frame_index: usize) -> Result<FrameSpectrum> {
        if frame.len() != self.cfg.frame_len {
            return Err(Error::FrameLength { expected: self.cfg.frame_len, actual: frame.len() });
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.cfg.fft_size];
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
            b.re = x * w;
        }
        self.fft.process(&mut buf);
        let power = buf[..self.cfg.bins()].iter().map(Complex64::norm_sqr).collect();
        Ok(FrameSpectrum { frame_index, power })
    }
}

/// Convenience wrapper building a one-off analyzer.
pub fn power_spectrum(frame: &[f64], cfg: &FramingConfig) -> Result<FrameSpectrum> {
    SpectrumAnalyzer::new(*cfg)?.power_spectrum(frame, 0)
}
