//! Run-length + delta coding of over-limit alerts.
//!
//! A run is the sequence of over-limit alerts accumulated against one bucket:
//! the first alert is kept whole, every later alert becomes a 16-bit
//! millisecond timestamp delta plus the list of fields whose values changed.
//! Decoding replays the deltas cumulatively, so the reconstruction is exact.
//! The 16-bit delta width means no two alerts in a run may be more than
//! 65,535 ms apart; a larger gap ends the run.

use thiserror::Error;

use crate::alert::{Alert, FieldId};
use crate::logstore::{LogRecord, RecordMode, RECORD_HEADER_LEN};

/// Largest representable gap between consecutive alerts in one run.
pub const MAX_TS_DELTA_MS: u64 = u16::MAX as u64;

/// What is retained for the over-limit alerts of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Nothing is logged for the run; only the counter is kept in memory.
    Drop,
    /// First alert + repeat count. The timing and field variation of the
    /// other `count - 1` alerts is the only data lost.
    RleOnly,
    /// First alert + count + per-alert timestamp/field deltas. Lossless.
    RleDelta,
}

/// One changed field: the full new value, not an arithmetic difference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldChange {
    SrcAddr(u32),
    DstAddr(u32),
    SrcPort(u16),
    DstPort(u16),
    Protocol(u8),
    Tos(u8),
    Payload(Vec<u8>),
}

impl FieldChange {
    pub fn field(&self) -> FieldId {
        match self {
            FieldChange::SrcAddr(_) => FieldId::SrcAddr,
            FieldChange::DstAddr(_) => FieldId::DstAddr,
            FieldChange::SrcPort(_) => FieldId::SrcPort,
            FieldChange::DstPort(_) => FieldId::DstPort,
            FieldChange::Protocol(_) => FieldId::Protocol,
            FieldChange::Tos(_) => FieldId::Tos,
            FieldChange::Payload(_) => FieldId::Payload,
        }
    }

    /// On-disk size: field id byte + fixed-width value (payload: 2-byte
    /// length + bytes).
    pub fn encoded_len(&self) -> u64 {
        1 + match self {
            FieldChange::SrcAddr(_) | FieldChange::DstAddr(_) => 4,
            FieldChange::SrcPort(_) | FieldChange::DstPort(_) => 2,
            FieldChange::Protocol(_) | FieldChange::Tos(_) => 1,
            FieldChange::Payload(p) => 2 + p.len() as u64,
        }
    }

    pub fn apply(&self, alert: &mut Alert) {
        match self {
            FieldChange::SrcAddr(v) => alert.src_addr = *v,
            FieldChange::DstAddr(v) => alert.dst_addr = *v,
            FieldChange::SrcPort(v) => alert.src_port = *v,
            FieldChange::DstPort(v) => alert.dst_port = *v,
            FieldChange::Protocol(v) => alert.protocol = *v,
            FieldChange::Tos(v) => alert.tos = *v,
            FieldChange::Payload(v) => alert.payload = v.clone(),
        }
    }
}

/// The fields of `next` that differ from `prev`, in field-code order.
/// Timestamps are carried by the delta entry, generator/signature ids must
/// not differ within a run.
pub fn diff_fields(prev: &Alert, next: &Alert) -> Vec<FieldChange> {
    let mut changes = Vec::new();
    if next.src_addr != prev.src_addr {
        changes.push(FieldChange::SrcAddr(next.src_addr));
    }
    if next.dst_addr != prev.dst_addr {
        changes.push(FieldChange::DstAddr(next.dst_addr));
    }
    if next.src_port != prev.src_port {
        changes.push(FieldChange::SrcPort(next.src_port));
    }
    if next.dst_port != prev.dst_port {
        changes.push(FieldChange::DstPort(next.dst_port));
    }
    if next.protocol != prev.protocol {
        changes.push(FieldChange::Protocol(next.protocol));
    }
    if next.tos != prev.tos {
        changes.push(FieldChange::Tos(next.tos));
    }
    if next.payload != prev.payload {
        changes.push(FieldChange::Payload(next.payload.clone()));
    }
    changes
}

/// One alert's worth of delta within a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeltaEntry {
    /// Milliseconds since the previous alert in the run.
    pub ts_delta_ms: u16,
    /// At most one change per field, in field-code order.
    pub changes: Vec<FieldChange>,
}

impl DeltaEntry {
    /// On-disk size: ts_delta(2) + change_count(1) + changes. An identical
    /// repeat is exactly 3 bytes.
    pub fn encoded_len(&self) -> u64 {
        3 + self
            .changes
            .iter()
            .map(FieldChange::encoded_len)
            .sum::<u64>()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RunError {
    #[error("timestamp regression within run: alert at {got_ms} ms precedes {last_ms} ms")]
    TimestampRegression { last_ms: u64, got_ms: u64 },
    #[error(
        "alert gen:{got_gen} sig:{got_sig} does not belong to run of gen:{run_gen} sig:{run_sig}"
    )]
    SignatureMismatch {
        run_gen: u32,
        run_sig: u32,
        got_gen: u32,
        got_sig: u32,
    },
    #[error("malformed run: {0}")]
    Malformed(String),
    #[error("record of {record_len} bytes exceeds the 32-bit record length field")]
    Oversize { record_len: u64 },
    #[error("drop-mode runs are never flushed to records")]
    DropRun,
}

/// An in-progress run of over-limit alerts on one bucket.
#[derive(Debug, Clone)]
pub struct Run {
    pub mode: RunMode,
    /// First over-limit alert of the run, kept whole.
    pub first: Alert,
    /// Total alerts in the run, including the first.
    pub count: u32,
    /// One entry per alert after the first (RLE-delta mode only).
    pub deltas: Vec<DeltaEntry>,
    /// Most recent alert, for gap checks and field diffing.
    last: Alert,
    /// Record size if flushed now; kept incrementally.
    record_len: u64,
}

impl Run {
    pub fn begin(first: Alert, mode: RunMode) -> Run {
        let record_len = RECORD_HEADER_LEN as u64 + first.serialized_len();
        Run {
            mode,
            last: first.clone(),
            first,
            count: 1,
            deltas: Vec::new(),
            record_len,
        }
    }

    pub fn last_timestamp_ms(&self) -> u64 {
        self.last.timestamp_ms
    }

    /// Whether this alert belongs to the run's signature/generator.
    pub fn accepts(&self, alert: &Alert) -> bool {
        alert.generator_id == self.first.generator_id
            && alert.signature_id == self.first.signature_id
    }

    /// Size of the record [`Run::into_record`] would produce.
    pub fn encoded_record_len(&self) -> u64 {
        self.record_len
    }

    /// Absorbs the next over-limit alert. Returns `Ok(false)` without
    /// touching the run when it does not fit: gap above 65,535 ms, counter
    /// saturated, or the record would outgrow `max_record_len`. The caller
    /// then flushes and begins a new run.
    pub fn extend_capped(&mut self, alert: &Alert, max_record_len: u64) -> Result<bool, RunError> {
        if alert.timestamp_ms < self.last.timestamp_ms {
            return Err(RunError::TimestampRegression {
                last_ms: self.last.timestamp_ms,
                got_ms: alert.timestamp_ms,
            });
        }
        if !self.accepts(alert) {
            return Err(RunError::SignatureMismatch {
                run_gen: self.first.generator_id,
                run_sig: self.first.signature_id,
                got_gen: alert.generator_id,
                got_sig: alert.signature_id,
            });
        }
        if self.count == u32::MAX {
            return Ok(false);
        }
        let gap = alert.timestamp_ms - self.last.timestamp_ms;
        if gap > MAX_TS_DELTA_MS {
            return Ok(false);
        }
        if self.mode == RunMode::RleDelta {
            let entry = DeltaEntry {
                ts_delta_ms: gap as u16,
                changes: diff_fields(&self.last, alert),
            };
            let entry_len = entry.encoded_len();
            if self.record_len + entry_len > max_record_len {
                return Ok(false);
            }
            self.record_len += entry_len;
            self.deltas.push(entry);
        }
        self.count += 1;
        self.last = alert.clone();
        Ok(true)
    }

    /// [`Run::extend_capped`] with the format's own 32-bit record limit.
    pub fn extend(&mut self, alert: &Alert) -> Result<bool, RunError> {
        self.extend_capped(alert, u32::MAX as u64)
    }

    /// Reconstructs the run's alerts. RLE-delta runs decode exactly;
    /// RLE-only (and drop) runs yield `count` copies of the first alert,
    /// all carrying its timestamp.
    pub fn decode(&self) -> Result<Vec<Alert>, RunError> {
        decode_parts(
            self.mode_on_disk_like(),
            self.count,
            &self.first,
            &self.deltas,
        )
    }

    fn mode_on_disk_like(&self) -> RecordMode {
        match self.mode {
            RunMode::RleDelta => RecordMode::RleDelta,
            RunMode::RleOnly | RunMode::Drop => RecordMode::RleOnly,
        }
    }

    /// Converts the run into its log record. A run of one alert becomes an
    /// ordinary single-alert record (N=1, RLE-only, no delta entries).
    pub fn into_record(self) -> Result<LogRecord, RunError> {
        if self.mode == RunMode::Drop {
            return Err(RunError::DropRun);
        }
        if self.record_len > u32::MAX as u64 {
            return Err(RunError::Oversize {
                record_len: self.record_len,
            });
        }
        let mode = if self.count == 1 {
            RecordMode::RleOnly
        } else {
            self.mode_on_disk_like()
        };
        Ok(LogRecord {
            run_count: self.count,
            mode,
            first_alert: self.first,
            deltas: self.deltas,
        })
    }
}

/// Reconstructs every alert of a stored record (the drill-down path).
pub fn decode_record(record: &LogRecord) -> Result<Vec<Alert>, RunError> {
    decode_parts(
        record.mode,
        record.run_count,
        &record.first_alert,
        &record.deltas,
    )
}

fn decode_parts(
    mode: RecordMode,
    count: u32,
    first: &Alert,
    deltas: &[DeltaEntry],
) -> Result<Vec<Alert>, RunError> {
    if count == 0 {
        return Err(RunError::Malformed("run count is zero".into()));
    }
    match mode {
        RecordMode::RleOnly => {
            if !deltas.is_empty() {
                return Err(RunError::Malformed(format!(
                    "RLE-only run carries {} delta entries",
                    deltas.len()
                )));
            }
            Ok(vec![first.clone(); count as usize])
        }
        RecordMode::RleDelta => {
            if deltas.len() as u64 != count as u64 - 1 {
                return Err(RunError::Malformed(format!(
                    "run of {} alerts carries {} delta entries, expected {}",
                    count,
                    deltas.len(),
                    count as u64 - 1
                )));
            }
            let mut out = Vec::with_capacity(count as usize);
            let mut current = first.clone();
            out.push(current.clone());
            for entry in deltas {
                current.timestamp_ms = current
                    .timestamp_ms
                    .checked_add(entry.ts_delta_ms as u64)
                    .ok_or_else(|| {
                    RunError::Malformed("timestamp overflow while decoding".into())
                })?;
                for change in &entry.changes {
                    change.apply(&mut current);
                }
                out.push(current.clone());
            }
            Ok(out)
        }
    }
}
