//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or model error, 3 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{NaiveDate, NaiveDateTime};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::audio::{load_manifest, load_wav, resample, segment, AudioRecord, PIPELINE_RATE};
use crate::dataset::FeatureDataset;
use crate::dsp::FramingConfig;
use crate::error::{Error, Result};
use crate::eval::{cross_validate, leave_one_out};
use crate::features::FeatureExtractor;
use crate::models::{load_model, save_model, ClassifierConfig, TrainedModel};
use crate::runtime::{
    bench_pipeline, daily_report, read_events, stream_classify, write_report, ContextSource, ContextTrack, EventStore,
    MemorySource, SampleSource, StreamOptions, WavSource, DEFAULT_GATE,
};
use crate::selection::{cfs_select, pca_rank};
use crate::synth::{write_corpus, CorpusSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_IO: i32 = 3;

const STREAM_CHUNK: usize = 1024;

#[derive(Debug, Parser)]
#[command(name = "respsound", version, about = "Respiratory sound feature extraction and classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract window features from a manifest of labeled WAV files
    Features {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank or select features (CFS or PCA)
    Select {
        features: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Cfs)]
        method: Method,
    },
    /// Train a classifier and save it
    Train {
        #[arg(id = "table", value_name = "FEATURES")]
        features: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        subset: SubsetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate a classifier configuration
    Eval {
        #[arg(id = "table", value_name = "FEATURES")]
        features: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        subset: SubsetArgs,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Leave-one-out instead of k-fold
        #[arg(long, conflicts_with = "folds")]
        loo: bool,
        /// Also write the report as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write the fold of each instance
        #[arg(long)]
        folds_out: Option<PathBuf>,
    },
    /// Classify every window of a recording
    Classify {
        wav: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Window length in seconds
        #[arg(long, default_value_t = 5.0)]
        window: f64,
    },
    /// Run the streaming pipeline and log detections
    Stream {
        /// WAV file, or `-` for standard input
        input: String,
        #[arg(long)]
        model: PathBuf,
        /// CSV with offset_seconds,activity,humidity,temp_c
        #[arg(long)]
        context: Option<PathBuf>,
        /// Minimum meanRMS for a window to be classified
        #[arg(long, default_value_t = DEFAULT_GATE)]
        gate: f64,
        #[arg(long)]
        store: PathBuf,
        /// Wall-clock time of the first sample, YYYY-MM-DDTHH:MM:SS (default: now)
        #[arg(long)]
        start: Option<String>,
        /// Ids continue after this value if it exceeds the stored maximum
        #[arg(long, default_value_t = 0)]
        first_id: u64,
        #[arg(long, default_value_t = 5.0)]
        window: f64,
        /// Seconds without data before the stream is declared stalled
        #[arg(long, default_value_t = 5.0)]
        timeout: f64,
    },
    /// Summarize logged events for one day
    Report {
        store: PathBuf,
        #[arg(long)]
        date: String,
        /// Also write the summary as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a synthetic labeled corpus
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the pipeline stages on a recording
    Bench {
        wav: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 5.0)]
        window: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Cfs,
    Pca,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelName {
    Knn,
    Svm,
    Rf,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long = "model", value_enum, default_value_t = ModelName::Rf)]
    name: ModelName,
    /// Neighbours for k-NN
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Soft-margin penalty for SVM
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Trees for RF
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl ModelArgs {
    fn config(&self) -> Result<ClassifierConfig> {
        Ok(match self.name {
            ModelName::Knn if self.k == 0 => return Err(Error::InvalidArgument("--k must be at least 1".into())),
            ModelName::Knn => ClassifierConfig::Knn { k: self.k },
            ModelName::Svm if !(self.c > 0.0 && self.c.is_finite()) => {
                return Err(Error::InvalidArgument("--c must be positive".into()))
            }
            ModelName::Svm => ClassifierConfig::Svm { c: self.c },
            ModelName::Rf if self.trees == 0 => return Err(Error::InvalidArgument("--trees must be at least 1".into())),
            ModelName::Rf => ClassifierConfig::Rf { n_trees: self.trees, seed: self.seed },
        })
    }
}

#[derive(Debug, Args)]
struct SubsetArgs {
    /// Comma-separated feature names to keep
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Comma-separated classes to keep
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
}

impl SubsetArgs {
    fn apply(&self, mut data: FeatureDataset) -> Result<FeatureDataset> {
        if let Some(classes) = &self.classes {
            data = data.filter_classes(classes)?;
        }
        if let Some(features) = &self.features {
            data = data.select_features(features)?;
        }
        Ok(data)
    }
}

/// Maps an error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_DATA
    }
}

/// Parses `args` (including the program name) and runs, writing to stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Features { manifest, out: path } => {
            let data = features_from_manifest(&manifest)?;
            data.write_csv(&path)?;
            writeln!(out, "{} windows, {} classes -> {}", data.len(), data.n_classes(), path.display())?;
        }
        Command::Select { features, method } => {
            let data = FeatureDataset::read_csv(features)?;
            let result = match method {
                Method::Cfs => cfs_select(&data)?,
                Method::Pca => pca_rank(&data)?,
            };
            writeln!(out, "{result}")?;
        }
        Command::Train { features, model, subset, out: path } => {
            let config = model.config()?;
            let data = subset.apply(FeatureDataset::read_csv(features)?)?;
            let trained = config.train(&data)?;
            save_model(&trained, &path)?;
            writeln!(out, "{config} trained on {} instances, {} features -> {}", data.len(), data.n_features(), path.display())?;
        }
        Command::Eval { features, model, subset, folds, loo, csv, folds_out } => {
            let config = model.config()?;
            let data = subset.apply(FeatureDataset::read_csv(features)?)?;
            let report = if loo {
                leave_one_out(&data, &config, model.seed)?
            } else {
                cross_validate(&data, &config, folds, model.seed)?
            };
            write!(out, "{report}")?;
            if let Some(p) = csv {
                std::fs::write(p, report.to_csv())?;
            }
            if let Some(p) = folds_out {
                report.write_fold_assignment(&data, p)?;
            }
        }
        Command::Classify { wav, model, window } => {
            let model = load_model(model)?;
            let record = load_pipeline_record(&wav)?;
            let extractor = FeatureExtractor::new(FramingConfig::default(), window)?;
            let windows = extractor.extract(&record)?;
            for w in &windows {
                let missing = model.missing_features(w);
                if !missing.is_empty() {
                    return Err(Error::MissingFeatures(missing));
                }
            }
            let rate = record.sample_rate() as f64;
            for w in &windows {
                let start = (extractor.window_end_sample(w.window_index)
                    - (extractor.frames_per_window() - 1) * extractor.config().hop
                    - extractor.config().frame_len) as f64
                    / rate;
                let end = extractor.window_end_sample(w.window_index) as f64 / rate;
                if w.degenerate {
                    writeln!(out, "window {:>3}  {start:>8.3}-{end:<8.3}  silent", w.window_index)?;
                    continue;
                }
                let p = model.predict(w)?;
                let scores: Vec<String> =
                    model.label_catalog.iter().zip(&p.scores).map(|(l, s)| format!("{l}={s:.3}")).collect();
                writeln!(out, "window {:>3}  {start:>8.3}-{end:<8.3}  {:<14} {}", w.window_index, p.label, scores.join(" "))?;
            }
        }
        Command::Stream { input, model, context, gate, store, start, first_id, window, timeout } => {
            let model = load_model(model)?;
            let extractor = FeatureExtractor::new(FramingConfig::default(), window)?;
            let start = match start {
                Some(s) => NaiveDateTime::parse_from_str(&s, "%Y-%m-%dT%H:%M:%S")
                    .map_err(|_| Error::InvalidArgument(format!("--start '{s}' is not YYYY-MM-DDTHH:MM:SS")))?,
                None => chrono::Local::now().naive_local(),
            };
            if !(timeout > 0.0 && timeout.is_finite()) {
                return Err(Error::InvalidArgument("--timeout must be positive".into()));
            }
            let options = StreamOptions { gate, underrun_timeout: Duration::from_secs_f64(timeout), start };
            let mut track = context.map(ContextTrack::read_csv).transpose()?;
            let mut events = EventStore::open_seeded(&store, first_id)?;
            let mut source: Box<dyn SampleSource> = if input == "-" {
                Box::new(WavSource::new(std::io::stdin().lock(), STREAM_CHUNK, "stdin")?)
            } else {
                let record = load_pipeline_record(Path::new(&input))?;
                Box::new(MemorySource::new(record.into_samples(), STREAM_CHUNK))
            };
            let mut logged = Vec::new();
            let outcomes = stream_classify(
                source.as_mut(),
                &extractor,
                &model,
                track.as_mut().map(|t| t as &mut dyn ContextSource),
                &options,
                |e| {
                    logged.push(events.append(e)?);
                    Ok(())
                },
            )?;
            for e in &logged {
                writeln!(
                    out,
                    "{:>5}  {}  {}  {}",
                    e.id,
                    e.date,
                    e.event_time.format("%H:%M:%S"),
                    e.sound_detected.as_deref().unwrap_or("-")
                )?;
            }
            let classified = outcomes.iter().filter(|o| o.prediction.is_some()).count();
            writeln!(out, "{} windows, {classified} classified -> {}", outcomes.len(), store.display())?;
        }
        Command::Report { store, date, csv } => {
            let date = NaiveDate::parse_from_str(&date, "%Y-%m-%d")
                .map_err(|_| Error::InvalidArgument(format!("--date '{date}' is not YYYY-MM-DD")))?;
            let summary = daily_report(&read_events(store)?, date);
            write_report(&summary, &mut *out, false)?;
            if let Some(p) = csv {
                write_report(&summary, std::fs::File::create(p)?, true)?;
            }
        }
        Command::Synth { spec, out: dir } => {
            let spec = CorpusSpec::from_json_file(spec)?;
            let manifest = write_corpus(&spec, &dir)?;
            writeln!(out, "{} records -> {}", spec.counts.total(), manifest.display())?;
        }
        Command::Bench { wav, model, reps, window } => {
            let model: TrainedModel = load_model(model)?;
            let record = load_pipeline_record(&wav)?;
            let extractor = FeatureExtractor::new(FramingConfig::default(), window)?;
            let timings = bench_pipeline(&record, &extractor, &model, reps)?;
            writeln!(out, "{timings}")?;
        }
    }
    Ok(())
}

/// Loads a WAV and converts it to the pipeline rate.
pub fn load_pipeline_record(path: &Path) -> Result<AudioRecord> {
    let record = load_wav(path)?;
    resample(&record, PIPELINE_RATE)
}

/// Loads, resamples and segments every manifest entry, then extracts one dataset.
pub fn features_from_manifest(path: &Path) -> Result<FeatureDataset> {
    let manifest = load_manifest(path)?;
    let extractor = FeatureExtractor::new(FramingConfig::default(), manifest.segment_seconds)?;
    let mut segments = Vec::new();
    for entry in &manifest.entries {
        let mut record = load_pipeline_record(&entry.path)?;
        record.label = Some(entry.label.clone());
        segments.extend(segment(&record, manifest.segment_seconds)?);
    }
    FeatureDataset::from_records(&segments, &extractor)
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
