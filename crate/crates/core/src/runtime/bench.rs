use std::fmt;
use std::time::{Duration, Instant};

use crate::audio::AudioRecord;
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::models::TrainedModel;

#[derive(Debug, Clone, PartialEq)]
pub struct StageStats {
    pub name: &'static str,
    pub samples: Vec<Duration>,
}

impl StageStats {
    pub fn mean(&self) -> Duration {
        if self.samples.is_empty() {
            return Duration::ZERO;
        }
        self.samples.iter().sum::<Duration>() / self.samples.len() as u32
    }

    pub fn max(&self) -> Duration {
        self.samples.iter().copied().max().unwrap_or_default()
    }
}

/// Per-stage wall-clock timings over repeated runs on one record.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTimings {
    pub stages: [StageStats; 3],
    pub totals: Vec<Duration>,
}

impl StageTimings {
    pub fn total_mean(&self) -> Duration {
        if self.totals.is_empty() {
            return Duration::ZERO;
        }
        self.totals.iter().sum::<Duration>() / self.totals.len() as u32
    }

    pub fn total_max(&self) -> Duration {
        self.totals.iter().copied().max().unwrap_or_default()
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

impl fmt::Display for StageTimings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>22} {:>22}", "Module", "Response Time (mean)", "Response Time (max)")?;
        for s in &self.stages {
            writeln!(f, "{:<20} {:>19.3} ms {:>19.3} ms", s.name, ms(s.mean()), ms(s.max()))?;
        }
        write!(f, "{:<20} {:>19.3} ms {:>19.3} ms", "Total", ms(self.total_mean()), ms(self.total_max()))
    }
}

/// Times framing+FFT, feature extraction and classification `reps` times.
pub fn bench_pipeline(record: &AudioRecord, extractor: &FeatureExtractor, model: &TrainedModel, reps: usize) -> Result<StageTimings> {
    if reps == 0 {
        return Err(Error::InvalidArgument("bench needs at least one repetition".into()));
    }
    let mut pre = Vec::with_capacity(reps);
    let mut feat = Vec::with_capacity(reps);
    let mut cls = Vec::with_capacity(reps);
    let mut totals = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        let spectra = extractor.spectra(record)?;
        let t1 = Instant::now();
        let frames = extractor.frame_features(record, spectra)?;
        let windows = extractor.windows(&frames)?;
        let t2 = Instant::now();
        for w in &windows {
            std::hint::black_box(model.predict(w)?);
        }
        let t3 = Instant::now();
        pre.push(t1 - t0);
        feat.push(t2 - t1);
        cls.push(t3 - t2);
        totals.push(t3 - t0);
    }
    Ok(StageTimings {
        stages: [
            StageStats { name: "Pre-processing", samples: pre },
            StageStats { name: "Feature Extraction", samples: feat },
            StageStats { name: "Classification", samples: cls },
        ],
        totals,
    })
}
