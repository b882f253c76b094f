//! Alert-flood mitigation: token bucket throttling of an IDS alert stream,
//! run-length + delta compression of over-limit alerts into an append-only
//! binary log, lossless drill-down, and a deterministic flood generator for
//! reproducing throughput and compression figures.
//!
//! Everything is event-time driven and integer-exact, so replaying the same
//! input yields bit-identical logs on every platform. Flood generation has a
//! rayon-backed data-parallel lane behind the default `parallel` feature;
//! the stream processor itself is deliberately sequential, since verdicts
//! and record order depend on alert order.

pub mod alert;
pub mod config;
pub mod floodgen;
pub mod logstore;
pub mod pipeline;
pub mod runcodec;
pub mod throttle;

pub use alert::{parse_alert, render_alert, Alert, FieldId, IngestReader};
pub use config::{load_config, parse_config, HierarchyConfig};
pub use floodgen::{generate, Arrival, FloodSpec};
pub use logstore::{LogReader, LogRecord, LogWriter, RecordMode};
pub use pipeline::{
    process, stats_report, OverLimitPolicy, PipelineStats, PolicyTable, ProcessOptions,
};
pub use runcodec::{decode_record, Run, RunMode};
pub use throttle::{BucketConfig, FilterHierarchy, NodeId, Rate, Verdict};
