//! Live classification: chunked sources, event logging, reports and timing.

mod bench;
mod store;
mod stream;

pub use bench::{bench_pipeline, StageStats, StageTimings};
pub use store::{daily_report, read_events, write_report, DailySummary, DayPeriod, EventStore, NewEvent, SymptomEvent};
pub use stream::{
    bounded_queue, stream_classify, ContextReading, ContextSource, ContextTrack, MemorySource, Pull, QueueProducer,
    QueueSource, SampleSource, StreamClassifier, StreamOptions, WavSource, WindowOutcome, DEFAULT_GATE,
};
