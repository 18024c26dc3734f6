//! Two-level feature extraction.
//!
//! Each frame yields five instantaneous features (RMS, ZCR, spectral centroid,
//! bandwidth and flux). Consecutive frames are grouped into non-overlapping
//! analysis windows and summarized by twelve texture statistics, listed in
//! [`Feature`] in their canonical serialization order.

use std::fmt;
use std::str::FromStr;

use crate::audio::AudioRecord;
use crate::dsp::{frames, FrameSpectrum, FramingConfig, SpectrumAnalyzer};
use crate::error::{Error, Result};

/// Window-level texture statistics in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Feature {
    AmrRms,
    RmrRms,
    MeanRms,
    MeanSc,
    MeanSb,
    MeanSf,
    VarRms,
    StdZcr,
    MciZcr,
    VarSc,
    VarSb,
    VarSf,
}

pub const FEATURE_COUNT: usize = 12;

impl Feature {
    pub const ALL: [Feature; FEATURE_COUNT] = [
        Feature::AmrRms,
        Feature::RmrRms,
        Feature::MeanRms,
        Feature::MeanSc,
        Feature::MeanSb,
        Feature::MeanSf,
        Feature::VarRms,
        Feature::StdZcr,
        Feature::MciZcr,
        Feature::VarSc,
        Feature::VarSb,
        Feature::VarSf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::AmrRms => "amrRMS",
            Feature::RmrRms => "rmrRMS",
            Feature::MeanRms => "meanRMS",
            Feature::MeanSc => "meanSC",
            Feature::MeanSb => "meanSB",
            Feature::MeanSf => "meanSF",
            Feature::VarRms => "varRMS",
            Feature::StdZcr => "stdZCR",
            Feature::MciZcr => "mciZCR",
            Feature::VarSc => "varSC",
            Feature::VarSb => "varSB",
            Feature::VarSf => "varSF",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature '{s}'")))
    }
}

/// Canonical feature names, in serialization order.
pub fn feature_names() -> Vec<String> {
    Feature::ALL.iter().map(|f| f.name().to_string()).collect()
}

/// Instantaneous features of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrameFeatures {
    pub rms: f64,
    pub zcr: f64,
    /// Spectral centroid, in bins.
    pub sc: f64,
    /// Spectral bandwidth, in bins.
    pub sb: f64,
    pub sf: f64,
    /// Set when the frame spectrum is identically zero (SC and SB forced to 0).
    pub degenerate: bool,
}

/// The twelve texture statistics of one analysis window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowFeatureVector {
    pub window_index: usize,
    pub values: [f64; FEATURE_COUNT],
    /// Set for silent windows, whose ratio features are forced to 0.
    pub degenerate: bool,
}

impl WindowFeatureVector {
    pub fn get(&self, feature: Feature) -> f64 {
        self.values[feature.index()]
    }

    pub fn by_name(&self, name: &str) -> Option<f64> {
        name.parse::<Feature>().ok().map(|f| self.get(f))
    }
}

pub fn rms(frame: &[f64]) -> Result<f64> {
    if frame.is_empty() {
        return Err(Error::InvalidArgument("rms of an empty frame".into()));
    }
    Ok((frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt())
}

/// Fraction of consecutive-sample sign changes. A zero sample inherits the sign
/// of the last nonzero sample, so touching zero never counts twice.
pub fn zcr(frame: &[f64]) -> Result<f64> {
    if frame.len() < 2 {
        return Err(Error::InvalidArgument("zcr needs at least 2 samples".into()));
    }
    Ok(sign_change_positions(frame.iter().copied()).len() as f64 / (frame.len() - 1) as f64)
}

/// Indices at which the sign differs from the last nonzero sign seen before them.
fn sign_change_positions(values: impl Iterator<Item = f64>) -> Vec<usize> {
    let mut last = 0.0f64;
    let mut positions = Vec::new();
    for (i, v) in values.enumerate() {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            positions.push(i);
        }
        last = v;
    }
    positions
}

/// `Σ k·P_k² / Σ P_k²` over one-sided bins; `None` for an all-zero spectrum.
pub fn spectral_centroid(power: &[f64]) -> Option<f64> {
    let total: f64 = power.iter().map(|p| p * p).sum();
    if total == 0.0 {
        return None;
    }
    let weighted: f64 = power.iter().enumerate().map(|(k, p)| k as f64 * p * p).sum();
    Some(weighted / total)
}

/// `sqrt(Σ (k - SC)²·P_k² / Σ P_k²)`; `None` for an all-zero spectrum.
pub fn spectral_bandwidth(power: &[f64]) -> Option<f64> {
    let sc = spectral_centroid(power)?;
    let total: f64 = power.iter().map(|p| p * p).sum();
    let spread: f64 = power
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let d = k as f64 - sc;
            d * d * p * p
        })
        .sum();
    Some((spread / total).sqrt())
}

/// `sqrt(Σ (P_curr - P_prev)²) / (fft_size - 1)`, zero for the first frame.
pub fn spectral_flux(curr: &FrameSpectrum, prev: Option<&FrameSpectrum>, fft_size: usize) -> Result<f64> {
    let Some(prev) = prev else { return Ok(0.0) };
    if prev.power.len() != curr.power.len() {
        return Err(Error::BinMismatch(curr.power.len(), prev.power.len()));
    }
    let sq: f64 = curr.power.iter().zip(&prev.power).map(|(c, p)| (c - p) * (c - p)).sum();
    Ok(sq.sqrt() / (fft_size - 1) as f64)
}

/// Coefficient of variation of the gaps between successive crossings of the
/// series' own mean. Zero with fewer than two crossings.
pub fn mean_crossing_irregularity(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InvalidArgument("mean crossing irregularity needs at least 2 values".into()));
    }
    let m = mean(series);
    let crossings = sign_change_positions(series.iter().map(|v| v - m));
    if crossings.len() < 2 {
        return Ok(0.0);
    }
    let gaps: Vec<f64> = crossings.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let gap_mean = mean(&gaps);
    Ok(variance(&gaps).sqrt() / gap_mean)
}

/// Mean with one refinement pass; exact for constant sequences.
fn mean(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    m + xs.iter().map(|x| x - m).sum::<f64>() / n
}

/// Population variance, two-pass.
fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    let correction: f64 = xs.iter().map(|x| x - m).sum();
    ((ss - correction * correction / xs.len() as f64) / xs.len() as f64).max(0.0)
}

/// Aggregates a window of frame features.
///
/// `gain_reference` is the loudest frame RMS the record has produced so far and
/// normalizes `rmrRMS`.
pub fn window_features(frames: &[FrameFeatures], gain_reference: f64, window_index: usize) -> Result<WindowFeatureVector> {
    if frames.len() < 2 {
        return Err(Error::TooShort(format!("window needs at least 2 frames, got {}", frames.len())));
    }
    if !(gain_reference >= 0.0) || !gain_reference.is_finite() {
        return Err(Error::InvalidArgument(format!("gain reference {gain_reference} must be finite and >= 0")));
    }
    let col = |f: fn(&FrameFeatures) -> f64| frames.iter().map(f).collect::<Vec<_>>();
    let rms_s = col(|f| f.rms);
    let zcr_s = col(|f| f.zcr);
    let sc_s = col(|f| f.sc);
    let sb_s = col(|f| f.sb);
    let sf_s = col(|f| f.sf);

    let mean_rms = mean(&rms_s);
    let max_rms = rms_s.iter().copied().fold(0.0, f64::max);
    let mut degenerate = false;
    let amr = if mean_rms > 0.0 {
        max_rms / mean_rms
    } else {
        degenerate = true;
        0.0
    };
    let rmr = if gain_reference > 0.0 {
        max_rms / gain_reference
    } else {
        degenerate = true;
        0.0
    };

    let mut values = [0.0; FEATURE_COUNT];
    values[Feature::AmrRms.index()] = amr;
    values[Feature::RmrRms.index()] = rmr;
    values[Feature::MeanRms.index()] = mean_rms;
    values[Feature::MeanSc.index()] = mean(&sc_s);
    values[Feature::MeanSb.index()] = mean(&sb_s);
    values[Feature::MeanSf.index()] = mean(&sf_s);
    values[Feature::VarRms.index()] = variance(&rms_s);
    values[Feature::StdZcr.index()] = variance(&zcr_s).sqrt();
    values[Feature::MciZcr.index()] = mean_crossing_irregularity(&zcr_s)?;
    values[Feature::VarSc.index()] = variance(&sc_s);
    values[Feature::VarSb.index()] = variance(&sb_s);
    values[Feature::VarSf.index()] = variance(&sf_s);
    Ok(WindowFeatureVector { window_index, values, degenerate })
}

/// Computes frame features one frame at a time, chaining spectral flux.
#[derive(Debug, Clone)]
pub struct FrameTracker {
    prev: Option<FrameSpectrum>,
    fft_size: usize,
}

impl FrameTracker {
    pub fn new(cfg: &FramingConfig) -> Self {
        Self { prev: None, fft_size: cfg.fft_size }
    }

    pub fn push(&mut self, frame: &[f64], spectrum: FrameSpectrum) -> Result<FrameFeatures> {
        let sf = spectral_flux(&spectrum, self.prev.as_ref(), self.fft_size)?;
        let sc = spectral_centroid(&spectrum.power);
        let sb = spectral_bandwidth(&spectrum.power);
        let out = FrameFeatures {
            rms: rms(frame)?,
            zcr: zcr(frame)?,
            sc: sc.unwrap_or(0.0),
            sb: sb.unwrap_or(0.0),
            sf,
            degenerate: sc.is_none(),
        };
        self.prev = Some(spectrum);
        Ok(out)
    }
}

/// Groups frame features into fixed-size windows, tracking the loudest frame seen.
#[derive(Debug, Clone)]
pub struct WindowAssembler {
    frames_per_window: usize,
    pending: Vec<FrameFeatures>,
    loudest: f64,
    emitted: usize,
}

impl WindowAssembler {
    pub fn new(frames_per_window: usize) -> Self {
        Self { frames_per_window, pending: Vec::with_capacity(frames_per_window), loudest: 0.0, emitted: 0 }
    }

    pub fn push(&mut self, frame: FrameFeatures) -> Result<Option<WindowFeatureVector>> {
        self.pending.push(frame);
        if self.pending.len() < self.frames_per_window {
            return Ok(None);
        }
        let window_max = self.pending.iter().map(|f| f.rms).fold(0.0, f64::max);
        self.loudest = self.loudest.max(window_max);
        let v = window_features(&self.pending, self.loudest, self.emitted)?;
        self.pending.clear();
        self.emitted += 1;
        Ok(Some(v))
    }
}

/// Batch feature extraction with a fixed framing and window length.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    analyzer: SpectrumAnalyzer,
    window_seconds: f64,
    frames_per_window: usize,
}

impl FeatureExtractor {
    pub fn new(cfg: FramingConfig, window_seconds: f64) -> Result<Self> {
        if !(window_seconds > 0.0) || !window_seconds.is_finite() {
            return Err(Error::InvalidArgument(format!("window length must be positive, got {window_seconds}")));
        }
        let analyzer = SpectrumAnalyzer::new(cfg)?;
        let window_samples = (window_seconds * cfg.sample_rate as f64).round() as usize;
        let frames_per_window = cfg.frame_count(window_samples);
        if frames_per_window < 2 {
            return Err(Error::TooShort(format!("a {window_seconds} s window holds fewer than 2 frames")));
        }
        Ok(Self { analyzer, window_seconds, frames_per_window })
    }

    pub fn config(&self) -> &FramingConfig {
        self.analyzer.config()
    }

    pub fn analyzer(&self) -> &SpectrumAnalyzer {
        &self.analyzer
    }

    pub fn window_seconds(&self) -> f64 {
        self.window_seconds
    }

    /// Frames per analysis window: as many whole frames as fit in one window's samples.
    pub fn frames_per_window(&self) -> usize {
        self.frames_per_window
    }

    /// Exclusive end sample of window `window_index`, including its last frame's tail.
    pub fn window_end_sample(&self, window_index: usize) -> usize {
        let cfg = self.config();
        ((window_index + 1) * self.frames_per_window - 1) * cfg.hop + cfg.frame_len
    }

    fn check(&self, record: &AudioRecord) -> Result<()> {
        let cfg = self.config();
        if record.sample_rate() != cfg.sample_rate {
            return Err(Error::RateMismatch { expected: cfg.sample_rate, actual: record.sample_rate() });
        }
        let n = cfg.frame_count(record.len());
        if n == 0 {
            return Err(Error::TooShort(format!("{}: shorter than one frame", record.source_id)));
        }
        if n < self.frames_per_window {
            return Err(Error::TooShort(format!(
                "{}: {} frames, one window needs {}",
                record.source_id, n, self.frames_per_window
            )));
        }
        Ok(())
    }

    /// Framing and FFT stage.
    pub fn spectra(&self, record: &AudioRecord) -> Result<Vec<FrameSpectrum>> {
        self.check(record)?;
        frames(record.samples(), self.config())
            .enumerate()
            .map(|(i, f)| self.analyzer.power_spectrum(f, i))
            .collect()
    }

    /// Frame-level features given precomputed spectra.
    pub fn frame_features(&self, record: &AudioRecord, spectra: Vec<FrameSpectrum>) -> Result<Vec<FrameFeatures>> {
        let mut tracker = FrameTracker::new(self.config());
        frames(record.samples(), self.config())
            .zip(spectra)
            .map(|(f, s)| tracker.push(f, s))
            .collect()
    }

    /// Window aggregation over frame features; trailing frames short of a window are dropped.
    pub fn windows(&self, frame_features: &[FrameFeatures]) -> Result<Vec<WindowFeatureVector>> {
        let mut loudest = 0.0f64;
        frame_features
            .chunks_exact(self.frames_per_window)
            .enumerate()
            .map(|(w, chunk)| {
                loudest = chunk.iter().map(|f| f.rms).fold(loudest, f64::max);
                window_features(chunk, loudest, w)
            })
            .collect()
    }

    /// Full pipeline: frames, frame features, then one vector per complete window.
    pub fn extract(&self, record: &AudioRecord) -> Result<Vec<WindowFeatureVector>> {
        let spectra = self.spectra(record)?;
        let ff = self.frame_features(record, spectra)?;
        self.windows(&ff)
    }
}

/// One-shot extraction with an ad hoc extractor.
pub fn extract(record: &AudioRecord, cfg: FramingConfig, window_seconds: f64) -> Result<Vec<WindowFeatureVector>> {
    FeatureExtractor::new(cfg, window_seconds)?.extract(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(power: Vec<f64>) -> FrameSpectrum {
        FrameSpectrum { frame_index: 0, power }
    }

    #[test]
    fn rms_cases() {
        assert_eq!(rms(&[-0.3; 10]).unwrap(), 0.3);
        assert_eq!(rms(&[0.0; 4]).unwrap(), 0.0);
        assert!((rms(&[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rms(&[]).is_err());
    }

    #[test]
    fn zcr_cases() {
        let alt: Vec<f64> = (0..64).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(zcr(&alt).unwrap(), 1.0);
        assert_eq!(zcr(&[0.2; 50]).unwrap(), 0.0);
        // zero between opposite signs counts once
        assert_eq!(zcr(&[1.0, 0.0, -1.0]).unwrap(), 0.5);
        // touching zero and returning is not a crossing
        assert_eq!(zcr(&[1.0, 0.0, 1.0]).unwrap(), 0.0);
        assert!(zcr(&[1.0]).is_err());
    }

    #[test]
    fn centroid_and_bandwidth_closed_forms() {
        let mut p = vec![0.0; 513];
        p[100] = 3.0;
        assert_eq!(spectral_centroid(&p), Some(100.0));
        assert_eq!(spectral_bandwidth(&p), Some(0.0));
        p[200] = 3.0;
        assert_eq!(spectral_centroid(&p), Some(150.0));
        assert_eq!(spectral_bandwidth(&p), Some(50.0));
        p[100] = 1.0;
        p[200] = 2.0;
        assert_eq!(spectral_centroid(&p), Some(180.0));
        assert_eq!(spectral_centroid(&[0.0; 513]), None);
        assert_eq!(spectral_bandwidth(&[0.0; 513]), None);
    }

    #[test]
    fn flux_cases() {
        let a = spectrum(vec![1.0; 513]);
        let b = spectrum(vec![2.0; 513]);
        assert_eq!(spectral_flux(&a, None, 1024).unwrap(), 0.0);
        assert_eq!(spectral_flux(&a, Some(&a), 1024).unwrap(), 0.0);
        let sf = spectral_flux(&b, Some(&a), 1024).unwrap();
        assert!((sf - 513f64.sqrt() / 1023.0).abs() < 1e-15);
        assert!((sf - 0.022142).abs() < 5e-6);
        assert!(spectral_flux(&b, Some(&spectrum(vec![1.0; 10])), 1024).is_err());
    }

    #[test]
    fn mci_cases() {
        assert_eq!(mean_crossing_irregularity(&[0.4; 20]).unwrap(), 0.0);
        let alt: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 0.1 } else { 0.7 }).collect();
        assert_eq!(mean_crossing_irregularity(&alt).unwrap(), 0.0);
        assert!(mean_crossing_irregularity(&[1.0]).is_err());
    }

    #[test]
    fn window_constant_and_two_frame() {
        let f = FrameFeatures { rms: 0.5, zcr: 0.2, sc: 40.0, sb: 12.0, sf: 0.01, degenerate: false };
        let v = window_features(&[f; 10], 2.0, 0).unwrap();
        for feat in [Feature::VarRms, Feature::StdZcr, Feature::MciZcr, Feature::VarSc, Feature::VarSb, Feature::VarSf] {
            assert_eq!(v.get(feat), 0.0, "{feat}");
        }
        assert_eq!(v.get(Feature::AmrRms), 1.0);
        assert_eq!(v.get(Feature::RmrRms), 0.25);

        let a = FrameFeatures { rms: 1.0, ..f };
        let b = FrameFeatures { rms: 3.0, ..f };
        let v = window_features(&[a, b], 3.0, 0).unwrap();
        assert_eq!(v.get(Feature::MeanRms), 2.0);
        assert_eq!(v.get(Feature::VarRms), 1.0);
        assert_eq!(v.get(Feature::AmrRms), 1.5);
        assert!(window_features(&[a], 1.0, 0).is_err());
    }

    #[test]
    fn silent_window_is_degenerate_not_nan() {
        let v = window_features(&[FrameFeatures::default(); 5], 0.0, 0).unwrap();
        assert!(v.degenerate);
        assert!(v.values.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn feature_names_roundtrip() {
        for f in Feature::ALL {
            assert_eq!(f.name().parse::<Feature>().unwrap(), f);
        }
        assert_eq!(feature_names()[0], "amrRMS");
        assert_eq!(feature_names()[11], "varSF");
        assert!("bogus".parse::<Feature>().is_err());
    }
}
