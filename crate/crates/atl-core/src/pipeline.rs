//! The alert stream processor: classify each alert against the bucket
//! hierarchy, write passed alerts as single records, coalesce over-limit
//! alerts into runs per the limiting bucket's policy, and keep the summary
//! statistics.
//!
//! Order is part of the contract: alerts flow in timestamp order and records
//! reach the log chronologically. A bucket's active run is flushed when a
//! later alert on that bucket passes (credit recovered), when an alert does
//! not fit the run (gap, counter, or record-size limit), when the run's
//! signature changes, and at end of stream.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::alert::{Alert, IngestError};
use crate::logstore::{LogError, LogRecord, LogWriter, Storage};
use crate::runcodec::{Run, RunError, RunMode};
use crate::throttle::{ClockRegression, FilterHierarchy, NodeId, Verdict};

/// What to do with over-limit alerts on a bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverLimitPolicy {
    /// Count and discard.
    Drop,
    /// Coalesce into runs, keeping only the first alert and the count.
    CompressRle,
    /// Coalesce into runs with per-alert deltas; lossless.
    CompressDelta,
}

impl OverLimitPolicy {
    fn run_mode(self) -> Option<RunMode> {
        match self {
            OverLimitPolicy::Drop => None,
            OverLimitPolicy::CompressRle => Some(RunMode::RleOnly),
            OverLimitPolicy::CompressDelta => Some(RunMode::RleDelta),
        }
    }
}

/// Per-node over-limit policies.
#[derive(Debug, Clone, Default)]
pub struct PolicyTable {
    map: BTreeMap<NodeId, OverLimitPolicy>,
}

impl PolicyTable {
    pub fn set(&mut self, node: NodeId, policy: OverLimitPolicy) {
        self.map.insert(node, policy);
    }

    /// Unconfigured nodes never limit, so the fallback is moot; drop is the
    /// conservative answer.
    pub fn get(&self, node: NodeId) -> OverLimitPolicy {
        self.map
            .get(&node)
            .copied()
            .unwrap_or(OverLimitPolicy::Drop)
    }

    pub fn label(&self) -> PolicyLabel {
        let mut label = None;
        for policy in self.map.values() {
            let this = match policy {
                OverLimitPolicy::Drop => PolicyLabel::Drop,
                OverLimitPolicy::CompressRle => PolicyLabel::RleOnly,
                OverLimitPolicy::CompressDelta => PolicyLabel::RleDelta,
            };
            match label {
                None => label = Some(this),
                Some(seen) if seen == this => {}
                Some(_) => return PolicyLabel::Mixed,
            }
        }
        label.unwrap_or(PolicyLabel::PassThrough)
    }
}

/// Which compression technique the logged bytes represent, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyLabel {
    Drop,
    RleOnly,
    RleDelta,
    Mixed,
    PassThrough,
}

impl fmt::Display for PolicyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyLabel::Drop => "Drop",
            PolicyLabel::RleOnly => "RLE Only",
            PolicyLabel::RleDelta => "RLE With Timestamp Delta",
            PolicyLabel::Mixed => "Mixed",
            PolicyLabel::PassThrough => "Pass-through",
        })
    }
}

/// Counters for one processed stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineStats {
    pub alerts_in: u64,
    pub passed: u64,
    pub over_limit: u64,
    pub records_written: u64,
    /// Sum of every ingested alert's serialized length: the baseline an
    /// unthrottled, uncompressed log would have written.
    pub bytes_uncompressed: u64,
    /// Record bytes actually appended to the log (excludes the 8-byte file
    /// header).
    pub bytes_logged: u64,
    pub runs_flushed: u64,
    pub max_run_length: u64,
    pub policy_label: PolicyLabel,
}

impl PipelineStats {
    pub fn new(policy_label: PolicyLabel) -> PipelineStats {
        PipelineStats {
            alerts_in: 0,
            passed: 0,
            over_limit: 0,
            records_written: 0,
            bytes_uncompressed: 0,
            bytes_logged: 0,
            runs_flushed: 0,
            max_run_length: 0,
            policy_label,
        }
    }

    /// bytes_uncompressed / bytes_logged; `None` when nothing was logged.
    pub fn compression_ratio(&self) -> Option<f64> {
        if self.bytes_logged == 0 {
            None
        } else {
            Some(self.bytes_uncompressed as f64 / self.bytes_logged as f64)
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("alert stream out of order: {0}")]
    Order(#[from] ClockRegression),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("run handling failed: {0}")]
    Run(#[from] RunError),
}

/// A failed run still reports what it processed before stopping.
#[derive(Debug, Error)]
#[error("{source}")]
pub struct PipelineFailure {
    pub stats: PipelineStats,
    #[source]
    pub source: PipelineError,
}

#[derive(Debug, Clone, Copy)]
pub struct ProcessOptions {
    /// Runs are split before their record would exceed this many bytes.
    pub max_record_bytes: u64,
}

impl Default for ProcessOptions {
    fn default() -> Self {
        ProcessOptions {
            max_record_bytes: u32::MAX as u64,
        }
    }
}

struct ActiveRun {
    run: Run,
    seq: u64,
}

/// Runs the whole stream through the hierarchy and into the log.
///
/// The log is left unsynced; callers decide when the file becomes durable.
pub fn process<I, S>(
    alerts: I,
    hierarchy: &mut FilterHierarchy,
    policies: &PolicyTable,
    log: &mut LogWriter<S>,
    opts: &ProcessOptions,
) -> Result<PipelineStats, PipelineFailure>
where
    I: IntoIterator<Item = Result<Alert, IngestError>>,
    S: Storage,
{
    let mut stats = PipelineStats::new(policies.label());
    match drive(alerts, hierarchy, policies, log, opts, &mut stats) {
        Ok(()) => Ok(stats),
        Err(source) => Err(PipelineFailure { stats, source }),
    }
}

fn drive<I, S>(
    alerts: I,
    hierarchy: &mut FilterHierarchy,
    policies: &PolicyTable,
    log: &mut LogWriter<S>,
    opts: &ProcessOptions,
    stats: &mut PipelineStats,
) -> Result<(), PipelineError>
where
    I: IntoIterator<Item = Result<Alert, IngestError>>,
    S: Storage,
{
    let mut active: BTreeMap<NodeId, ActiveRun> = BTreeMap::new();
    let mut next_seq = 0u64;

    for item in alerts {
        let alert = item?;
        let decision = hierarchy.classify(&alert)?;
        stats.alerts_in += 1;
        stats.bytes_uncompressed += alert.serialized_len();

        match decision.verdict {
            Verdict::Pass => {
                stats.passed += 1;
                // credit recovered on every bucket in this alert's chain:
                // their pending runs end here, oldest first
                let chain = hierarchy.chain_for(alert.generator_id, alert.signature_id);
                flush_nodes(&mut active, chain.iter().copied(), stats, log)?;
                write_record(LogRecord::single(alert), stats, log)?;
            }
            Verdict::OverLimit => {
                stats.over_limit += 1;
                let node = decision.limiting_node.expect("over-limit names its bucket");
                let Some(mode) = policies.get(node).run_mode() else {
                    continue; // drop policy: counted and discarded
                };
                if let Some(entry) = active.get_mut(&node) {
                    if entry.run.accepts(&alert)
                        && entry.run.extend_capped(&alert, opts.max_record_bytes)?
                    {
                        continue;
                    }
                    // wrong signature or does not fit: the run ends
                    flush_nodes(&mut active, std::iter::once(node), stats, log)?;
                }
                active.insert(
                    node,
                    ActiveRun {
                        run: Run::begin(alert, mode),
                        seq: next_seq,
                    },
                );
                next_seq += 1;
            }
        }
    }

    let remaining: Vec<NodeId> = active.keys().copied().collect();
    flush_nodes(&mut active, remaining.into_iter(), stats, log)?;
    debug_assert_eq!(stats.alerts_in, stats.passed + stats.over_limit);
    Ok(())
}

/// Flushes the named nodes' active runs in chronological order (run start
/// time, then begin order).
fn flush_nodes<S: Storage>(
    active: &mut BTreeMap<NodeId, ActiveRun>,
    nodes: impl Iterator<Item = NodeId>,
    stats: &mut PipelineStats,
    log: &mut LogWriter<S>,
) -> Result<(), PipelineError> {
    let mut due: Vec<(u64, u64, NodeId)> = Vec::new();
    for node in nodes {
        if let Some(entry) = active.get(&node) {
            due.push((entry.run.first.timestamp_ms, entry.seq, node));
        }
    }
    due.sort_unstable();
    for (_, _, node) in due {
        let entry = active.remove(&node).expect("run present");
        let count = entry.run.count as u64;
        let record = entry.run.into_record()?;
        stats.runs_flushed += 1;
        stats.max_run_length = stats.max_run_length.max(count);
        write_record(record, stats, log)?;
    }
    Ok(())
}

fn write_record<S: Storage>(
    record: LogRecord,
    stats: &mut PipelineStats,
    log: &mut LogWriter<S>,
) -> Result<(), PipelineError> {
    stats.bytes_logged += record.encoded_len();
    stats.records_written += 1;
    log.append(&record)?;
    Ok(())
}

fn format_kb(bytes: u64) -> String {
    format!("{:.3}", bytes as f64 / 1024.0)
}

/// Renders the statistics as a fixed-width table: the counters, then data
/// size and compression ratio for the uncompressed baseline and the
/// configured technique. Sizes are KB to 3 decimals, ratios to 3 decimals;
/// degenerate ratios render as an em dash.
pub fn stats_report(stats: &PipelineStats) -> String {
    let mut out = String::new();
    for (label, value) in [
        ("alerts in", stats.alerts_in),
        ("passed", stats.passed),
        ("over-limit", stats.over_limit),
        ("records written", stats.records_written),
        ("runs flushed", stats.runs_flushed),
        ("max run length", stats.max_run_length),
    ] {
        out.push_str(&format!("{label:<16}{value:>12}\n"));
    }
    out.push('\n');
    out.push_str(&format!(
        "{:<24}  {:>14}  {:>11}\n",
        "Algorithm", "Data Size (KB)", "Compression"
    ));
    let base_ratio = if stats.bytes_uncompressed > 0 {
        "1.000".to_string()
    } else {
        "\u{2014}".to_string()
    };
    out.push_str(&format!(
        "{:<24}  {:>14}  {:>11}\n",
        "Uncompressed",
        format_kb(stats.bytes_uncompressed),
        base_ratio
    ));
    let ratio = match stats.compression_ratio() {
        Some(r) => format!("{r:.3}"),
        None => "\u{2014}".to_string(),
    };
    out.push_str(&format!(
        "{:<24}  {:>14}  {:>11}\n",
        stats.policy_label.to_string(),
        format_kb(stats.bytes_logged),
        ratio
    ));
    out
}
