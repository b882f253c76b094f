//! Append-only binary log of alert records (`.atl` files).
//!
//! All integers are little-endian and the layout is frozen; equal inputs
//! produce byte-identical files on every platform.
//!
//! File header (8 bytes): magic `ATL1`, version u16 = 1, 2 reserved zero
//! bytes.
//!
//! Record:
//!
//! ```text
//! offset  size  field
//! 0       4     record_len   total bytes of this record, including this field
//! 4       4     run_count    N, alerts represented by this record
//! 8       1     mode         0 = RLE only, 1 = RLE + delta
//! 9       7     reserved     zero
//! 16      32+P  first alert  Alert::serialize bytes
//! ...           delta entries (mode 1: N-1 entries, mode 0: none)
//! ```
//!
//! Delta entry: ts_delta u16, change_count u8, then per change a field id
//! byte and the new value (addresses 4 bytes, ports 2, protocol/TOS 1,
//! payload u16 length + bytes), field ids strictly ascending.
//!
//! Writes are buffered and hit storage only when the buffer spills, on an
//! explicit sync, or on close — never per record.

use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::Path;

use thiserror::Error;

use crate::alert::{Alert, FieldId};
use crate::runcodec::{DeltaEntry, FieldChange};

pub const LOG_MAGIC: [u8; 4] = *b"ATL1";
pub const LOG_VERSION: u16 = 1;
pub const FILE_HEADER_LEN: usize = 8;
pub const RECORD_HEADER_LEN: usize = 16;
/// Smallest possible record: header + empty-payload alert.
pub const MIN_RECORD_LEN: usize = RECORD_HEADER_LEN + 32;
pub const DEFAULT_BUFFER_SIZE: usize = 64 * 1024;

/// On-disk record mode byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum RecordMode {
    RleOnly = 0,
    RleDelta = 1,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("write failed after {bytes_written} bytes: {source}")]
    Write {
        bytes_written: u64,
        #[source]
        source: io::Error,
    },
    #[error("read failed at offset {offset}: {source}")]
    Read {
        offset: u64,
        #[source]
        source: io::Error,
    },
    #[error("bad magic {found:02x?}, not an ATL log")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported log version {found}")]
    BadVersion { found: u16 },
    #[error("corrupt file header: reserved bytes not zero")]
    BadHeader,
    #[error("truncated record at offset {offset}")]
    Truncated { offset: u64 },
    #[error("corrupt record at offset {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
}

/// A decoded log record: the first alert plus the run it stands for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub run_count: u32,
    pub mode: RecordMode,
    pub first_alert: Alert,
    pub deltas: Vec<DeltaEntry>,
}

impl LogRecord {
    /// An ordinary record for one passed alert.
    pub fn single(alert: Alert) -> LogRecord {
        LogRecord {
            run_count: 1,
            mode: RecordMode::RleOnly,
            first_alert: alert,
            deltas: Vec::new(),
        }
    }

    pub fn encoded_len(&self) -> u64 {
        RECORD_HEADER_LEN as u64
            + self.first_alert.serialized_len()
            + self.deltas.iter().map(DeltaEntry::encoded_len).sum::<u64>()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len() as usize);
        self.encode_into(&mut out);
        out
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        let len = self.encoded_len();
        assert!(
            len <= u32::MAX as u64,
            "record of {len} bytes exceeds the length field"
        );
        assert!(
            self.mode == RecordMode::RleDelta || self.deltas.is_empty(),
            "RLE-only records carry no delta entries"
        );
        out.extend_from_slice(&(len as u32).to_le_bytes());
        out.extend_from_slice(&self.run_count.to_le_bytes());
        out.push(self.mode as u8);
        out.extend_from_slice(&[0u8; 7]);
        self.first_alert.serialize_into(out);
        for entry in &self.deltas {
            out.extend_from_slice(&entry.ts_delta_ms.to_le_bytes());
            out.push(entry.changes.len() as u8);
            for change in &entry.changes {
                out.push(change.field().code());
                match change {
                    FieldChange::SrcAddr(v) | FieldChange::DstAddr(v) => {
                        out.extend_from_slice(&v.to_le_bytes())
                    }
                    FieldChange::SrcPort(v) | FieldChange::DstPort(v) => {
                        out.extend_from_slice(&v.to_le_bytes())
                    }
                    FieldChange::Protocol(v) | FieldChange::Tos(v) => out.push(*v),
                    FieldChange::Payload(p) => {
                        assert!(
                            p.len() <= u16::MAX as usize,
                            "payload change exceeds 16-bit length"
                        );
                        out.extend_from_slice(&(p.len() as u16).to_le_bytes());
                        out.extend_from_slice(p);
                    }
                }
            }
        }
    }

    /// Decodes one full record frame (including the leading length field).
    pub fn decode(frame: &[u8]) -> Result<LogRecord, String> {
        if frame.len() < MIN_RECORD_LEN {
            return Err(format!(
                "frame of {} bytes is below the {MIN_RECORD_LEN}-byte minimum",
                frame.len()
            ));
        }
        let record_len = u32::from_le_bytes(frame[0..4].try_into().unwrap()) as usize;
        if record_len != frame.len() {
            return Err(format!(
                "length field says {record_len} bytes, frame has {}",
                frame.len()
            ));
        }
        let run_count = u32::from_le_bytes(frame[4..8].try_into().unwrap());
        if run_count == 0 {
            return Err("run count is zero".into());
        }
        let mode = match frame[8] {
            0 => RecordMode::RleOnly,
            1 => RecordMode::RleDelta,
            other => return Err(format!("unknown mode byte {other}")),
        };
        if frame[9..16].iter().any(|&b| b != 0) {
            return Err("reserved bytes not zero".into());
        }
        let (first_alert, consumed) = Alert::deserialize(&frame[RECORD_HEADER_LEN..])
            .ok_or("record too short for its first alert")?;
        let mut rest = &frame[RECORD_HEADER_LEN + consumed..];
        let mut deltas = Vec::new();
        match mode {
            RecordMode::RleOnly => {
                if !rest.is_empty() {
                    return Err(format!("RLE-only record has {} trailing bytes", rest.len()));
                }
            }
            RecordMode::RleDelta => {
                for i in 0..run_count as u64 - 1 {
                    let (entry, used) =
                        decode_delta_entry(rest).map_err(|e| format!("delta entry {i}: {e}"))?;
                    deltas.push(entry);
                    rest = &rest[used..];
                }
                if !rest.is_empty() {
                    return Err(format!(
                        "{} trailing bytes after the last delta entry",
                        rest.len()
                    ));
                }
            }
        }
        Ok(LogRecord {
            run_count,
            mode,
            first_alert,
            deltas,
        })
    }
}

fn decode_delta_entry(buf: &[u8]) -> Result<(DeltaEntry, usize), String> {
    if buf.len() < 3 {
        return Err("truncated entry header".into());
    }
    let ts_delta_ms = u16::from_le_bytes(buf[0..2].try_into().unwrap());
    let change_count = buf[2] as usize;
    let mut pos = 3;
    let mut changes = Vec::with_capacity(change_count);
    let mut last_code = 0u8;
    for _ in 0..change_count {
        let code = *buf.get(pos).ok_or("truncated change list")?;
        let field = FieldId::from_code(code).ok_or(format!("unknown field code {code}"))?;
        if code <= last_code {
            return Err(format!("field code {code} out of order or repeated"));
        }
        last_code = code;
        pos += 1;
        let take = |n: usize| -> Result<&[u8], String> {
            buf.get(pos..pos + n)
                .ok_or_else(|| "truncated change value".into())
        };
        let change = match field {
            FieldId::SrcAddr => {
                FieldChange::SrcAddr(u32::from_le_bytes(take(4)?.try_into().unwrap()))
            }
            FieldId::DstAddr => {
                FieldChange::DstAddr(u32::from_le_bytes(take(4)?.try_into().unwrap()))
            }
            FieldId::SrcPort => {
                FieldChange::SrcPort(u16::from_le_bytes(take(2)?.try_into().unwrap()))
            }
            FieldId::DstPort => {
                FieldChange::DstPort(u16::from_le_bytes(take(2)?.try_into().unwrap()))
            }
            FieldId::Protocol => FieldChange::Protocol(take(1)?[0]),
            FieldId::Tos => FieldChange::Tos(take(1)?[0]),
            FieldId::Payload => {
                let len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
                pos += 2;
                let bytes = buf
                    .get(pos..pos + len)
                    .ok_or("truncated payload change")?
                    .to_vec();
                pos += len;
                changes.push(FieldChange::Payload(bytes));
                continue;
            }
        };
        pos += match field {
            FieldId::SrcAddr | FieldId::DstAddr => 4,
            FieldId::SrcPort | FieldId::DstPort => 2,
            FieldId::Protocol | FieldId::Tos => 1,
            FieldId::Payload => unreachable!(),
        };
        changes.push(change);
    }
    Ok((
        DeltaEntry {
            ts_delta_ms,
            changes,
        },
        pos,
    ))
}

/// Where log bytes go. One storage write call per buffer flush.
pub trait Storage {
    fn write_all(&mut self, buf: &[u8]) -> io::Result<()>;
    fn sync(&mut self) -> io::Result<()>;
}

impl Storage for File {
    fn write_all(&mut self, buf: &[u8]) -> io::Result<()> {
        io::Write::write_all(self, buf)
    }

    fn sync(&mut self) -> io::Result<()> {
        self.sync_all()
    }
}

impl Storage for Vec<u8> {
    fn write_all(&mut self, buf: &[u8]) -> io::Result<()> {
        self.extend_from_slice(buf);
        Ok(())
    }

    fn sync(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Buffered append-only writer.
///
/// Records accumulate in an internal buffer that reaches storage only when
/// it exceeds the configured size, on [`LogWriter::sync`], or on
/// [`LogWriter::close`]. Appending never issues a per-record storage write.
pub struct LogWriter<S: Storage> {
    storage: Option<S>,
    buf: Vec<u8>,
    buf_limit: usize,
    bytes_to_storage: u64,
}

impl<S: Storage> LogWriter<S> {
    pub fn new(storage: S) -> LogWriter<S> {
        LogWriter::with_buffer_size(storage, DEFAULT_BUFFER_SIZE)
    }

    pub fn with_buffer_size(storage: S, buf_limit: usize) -> LogWriter<S> {
        let mut buf = Vec::with_capacity(buf_limit + MIN_RECORD_LEN);
        buf.extend_from_slice(&LOG_MAGIC);
        buf.extend_from_slice(&LOG_VERSION.to_le_bytes());
        buf.extend_from_slice(&[0u8; 2]);
        LogWriter {
            storage: Some(storage),
            buf,
            buf_limit,
            bytes_to_storage: 0,
        }
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<(), LogError> {
        record.encode_into(&mut self.buf);
        if self.buf.len() >= self.buf_limit {
            self.flush_buf()?;
        }
        Ok(())
    }

    fn flush_buf(&mut self) -> Result<(), LogError> {
        if self.buf.is_empty() {
            return Ok(());
        }
        let storage = self.storage.as_mut().expect("writer not closed");
        storage
            .write_all(&self.buf)
            .map_err(|source| LogError::Write {
                bytes_written: self.bytes_to_storage,
                source,
            })?;
        self.bytes_to_storage += self.buf.len() as u64;
        self.buf.clear();
        Ok(())
    }

    /// Forces buffered bytes to storage and asks storage to make them
    /// durable. For operators who prefer durability over throughput.
    pub fn sync(&mut self) -> Result<(), LogError> {
        self.flush_buf()?;
        let storage = self.storage.as_mut().expect("writer not closed");
        storage.sync().map_err(|source| LogError::Write {
            bytes_written: self.bytes_to_storage,
            source,
        })
    }

    /// Flushes, syncs, and hands the storage back.
    pub fn close(mut self) -> Result<S, LogError> {
        self.sync()?;
        Ok(self.storage.take().expect("writer not closed"))
    }
}

impl<S: Storage> Drop for LogWriter<S> {
    fn drop(&mut self) {
        if self.storage.is_some() {
            let _ = self.flush_buf();
        }
    }
}

/// Creates the log file and a writer with the default buffer size.
pub fn create_log(path: &Path) -> Result<LogWriter<File>, LogError> {
    let file = File::create(path).map_err(|source| LogError::Write {
        bytes_written: 0,
        source,
    })?;
    Ok(LogWriter::new(file))
}

/// Streaming record reader; validates the header up front and each record's
/// framing as it goes.
#[derive(Debug)]
pub struct LogReader<R: Read> {
    inner: R,
    offset: u64,
}

impl LogReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let file = File::open(path).map_err(|source| LogError::Read { offset: 0, source })?;
        LogReader::new(BufReader::new(file))
    }
}

impl<R: Read> LogReader<R> {
    pub fn new(mut inner: R) -> Result<Self, LogError> {
        let mut header = [0u8; FILE_HEADER_LEN];
        inner
            .read_exact(&mut header)
            .map_err(|source| match source.kind() {
                io::ErrorKind::UnexpectedEof => LogError::Truncated { offset: 0 },
                _ => LogError::Read { offset: 0, source },
            })?;
        if header[0..4] != LOG_MAGIC {
            return Err(LogError::BadMagic {
                found: header[0..4].try_into().unwrap(),
            });
        }
        let version = u16::from_le_bytes(header[4..6].try_into().unwrap());
        if version != LOG_VERSION {
            return Err(LogError::BadVersion { found: version });
        }
        if header[6..8] != [0, 0] {
            return Err(LogError::BadHeader);
        }
        Ok(LogReader {
            inner,
            offset: FILE_HEADER_LEN as u64,
        })
    }

    /// Bytes consumed so far (next record starts here).
    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn read_frame(&mut self) -> Result<Option<Vec<u8>>, LogError> {
        let mut len_bytes = [0u8; 4];
        let mut got = 0;
        while got < 4 {
            let n = self
                .inner
                .read(&mut len_bytes[got..])
                .map_err(|source| LogError::Read {
                    offset: self.offset,
                    source,
                })?;
            if n == 0 {
                return if got == 0 {
                    Ok(None) // clean end of log
                } else {
                    Err(LogError::Truncated {
                        offset: self.offset,
                    })
                };
            }
            got += n;
        }
        let record_len = u32::from_le_bytes(len_bytes) as usize;
        if record_len < MIN_RECORD_LEN {
            return Err(LogError::Corrupt {
                offset: self.offset,
                reason: format!(
                    "record length {record_len} below the {MIN_RECORD_LEN}-byte minimum"
                ),
            });
        }
        let mut frame = vec![0u8; record_len];
        frame[0..4].copy_from_slice(&len_bytes);
        self.inner
            .read_exact(&mut frame[4..])
            .map_err(|source| match source.kind() {
                io::ErrorKind::UnexpectedEof => LogError::Truncated {
                    offset: self.offset,
                },
                _ => LogError::Read {
                    offset: self.offset,
                    source,
                },
            })?;
        Ok(Some(frame))
    }
}

impl<R: Read> Iterator for LogReader<R> {
    type Item = Result<LogRecord, LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        let frame = match self.read_frame() {
            Ok(Some(frame)) => frame,
            Ok(None) => return None,
            Err(e) => return Some(Err(e)),
        };
        let start = self.offset;
        self.offset += frame.len() as u64;
        Some(
            LogRecord::decode(&frame).map_err(|reason| LogError::Corrupt {
                offset: start,
                reason,
            }),
        )
    }
}

/// Reads every record of a log file into memory.
pub fn read_records(path: &Path) -> Result<Vec<LogRecord>, LogError> {
    LogReader::open(path)?.collect()
}
