//! `atl`: generate alert floods, run them through the throttling pipeline,
//! and drill into the resulting logs.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use atl_core::alert::{render_alert, Alert, FieldId, IngestReader};
use atl_core::config::load_config;
use atl_core::floodgen::{self, Arrival, FloodSpec};
use atl_core::logstore::{create_log, LogReader};
use atl_core::pipeline::{process, stats_report, ProcessOptions};
use atl_core::runcodec::decode_record;

#[derive(Parser)]
#[command(
    name = "atl",
    version,
    about = "Alert-flood throttling, compression, and drill-down"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic alert flood in the ingest line format.
    Gen {
        /// Total alerts to emit (at least 1).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        /// Event-time span of the flood in milliseconds.
        #[arg(long = "duration-ms")]
        duration_ms: u64,
        /// Seed for the deterministic field modulator.
        #[arg(long)]
        seed: u64,
        /// Comma-separated fields to randomize per alert:
        /// src,dst,sport,dport,proto,tos,payload.
        #[arg(long, value_delimiter = ',')]
        modulate: Vec<String>,
        /// Emit every alert at the start instant instead of evenly spaced.
        #[arg(long = "front-loaded")]
        front_loaded: bool,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an ingest file through a filter hierarchy into an .atl log.
    Run {
        /// Hierarchy configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Ingest-format input file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Destination .atl log.
        #[arg(long)]
        log: PathBuf,
        /// Print the statistics table afterwards.
        #[arg(long)]
        stats: bool,
    },
    /// Inspect an .atl log: one composite line per record, or reconstructed
    /// alerts with --expand.
    Drill {
        /// Log file to read.
        #[arg(long)]
        log: PathBuf,
        /// Restrict to one record (0-based index).
        #[arg(long)]
        record: Option<u64>,
        /// Reconstruct and print every alert of the selected records.
        #[arg(long)]
        expand: bool,
    },
}

struct CliError {
    message: String,
    code: u8,
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        message: message.into(),
        code: 2,
    }
}

fn runtime(message: impl Into<String>) -> CliError {
    CliError {
        message: message.into(),
        code: 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen {
            count,
            duration_ms,
            seed,
            modulate,
            front_loaded,
            out,
        } => cmd_gen(
            count,
            duration_ms,
            seed,
            &modulate,
            front_loaded,
            out.as_deref(),
        ),
        Command::Run {
            config,
            input,
            log,
            stats,
        } => cmd_run(&config, &input, &log, stats),
        Command::Drill {
            log,
            record,
            expand,
        } => cmd_drill(&log, record, expand),
    }
}

/// Figure-style default template: the well-known UDP backdoor probe on port
/// 31337, carrying its 12 magic payload bytes.
fn default_base_alert() -> Alert {
    Alert {
        timestamp_ms: 0,
        generator_id: 1,
        signature_id: 109,
        src_addr: u32::from(std::net::Ipv4Addr::new(10, 0, 0, 1)),
        dst_addr: u32::from(std::net::Ipv4Addr::new(10, 0, 0, 2)),
        src_port: 1024,
        dst_port: 31337,
        protocol: 17,
        tos: 0,
        payload: vec![
            0xce, 0x63, 0xd1, 0xd2, 0x16, 0xe7, 0x13, 0xcf, 0x39, 0xa5, 0xa5, 0x86,
        ],
    }
}

fn cmd_gen(
    count: u64,
    duration_ms: u64,
    seed: u64,
    modulate: &[String],
    front_loaded: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut fields = BTreeSet::new();
    for name in modulate {
        let field = FieldId::from_name(name).ok_or_else(|| {
            usage(format!(
                "unknown field \"{name}\" for --modulate (expected src, dst, sport, dport, proto, tos, payload)"
            ))
        })?;
        fields.insert(field);
    }
    let spec = FloodSpec {
        count,
        duration_ms,
        base_alert: default_base_alert(),
        modulate: fields,
        seed,
        arrival: if front_loaded {
            Arrival::FrontLoaded
        } else {
            Arrival::Uniform
        },
    };
    let alerts = floodgen::generate(&spec);
    match out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))?;
            write_lines(BufWriter::new(file), &alerts)
                .map_err(|e| runtime(format!("write to {} failed: {e}", path.display())))
        }
        None => {
            let stdout = io::stdout().lock();
            match write_lines(BufWriter::new(stdout), &alerts) {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
                    Err(runtime(format!("write failed: {e}")))
                }
                // a closed pipe (e.g. `| head`) ends the stream cleanly
                _ => Ok(()),
            }
        }
    }
}

fn write_lines<W: Write>(mut out: W, alerts: &[Alert]) -> io::Result<()> {
    for alert in alerts {
        out.write_all(render_alert(alert).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

fn cmd_run(config_path: &Path, input: &Path, log_path: &Path, stats: bool) -> Result<(), CliError> {
    let mut config = load_config(config_path)
        .map_err(|e| runtime(format!("config {}: {e}", config_path.display())))?;
    let file =
        File::open(input).map_err(|e| runtime(format!("cannot open {}: {e}", input.display())))?;
    let reader = IngestReader::new(BufReader::new(file));
    let mut writer = create_log(log_path)
        .map_err(|e| runtime(format!("cannot create {}: {e}", log_path.display())))?;

    match process(
        reader,
        &mut config.hierarchy,
        &config.policies,
        &mut writer,
        &ProcessOptions::default(),
    ) {
        Ok(result) => {
            writer
                .close()
                .map_err(|e| runtime(format!("closing {} failed: {e}", log_path.display())))?;
            if stats {
                print!("{}", stats_report(&result));
            }
            Ok(())
        }
        Err(failure) => {
            // keep whatever was written readable for post-mortem
            let _ = writer.close();
            Err(runtime(format!("{}: {}", input.display(), failure)))
        }
    }
}

fn cmd_drill(log_path: &Path, record: Option<u64>, expand: bool) -> Result<(), CliError> {
    let reader =
        LogReader::open(log_path).map_err(|e| runtime(format!("{}: {e}", log_path.display())))?;
    let stdout = io::stdout().lock();
    let mut out = BufWriter::new(stdout);
    let mut printed = 0u64;
    let mut index = 0u64;
    for item in reader {
        let rec = item.map_err(|e| runtime(format!("{}: {e}", log_path.display())))?;
        let selected = match record {
            Some(k) => index == k,
            None => true,
        };
        if selected {
            let result = if expand {
                let alerts = decode_record(&rec).map_err(|e| {
                    runtime(format!("record {index} of {}: {e}", log_path.display()))
                })?;
                alerts
                    .iter()
                    .try_for_each(|a| writeln!(out, "{}", render_alert(a)))
            } else if rec.run_count > 1 {
                writeln!(
                    out,
                    "{} repeated {} times",
                    render_alert(&rec.first_alert),
                    rec.run_count
                )
            } else {
                writeln!(out, "{}", render_alert(&rec.first_alert))
            };
            match result {
                Ok(()) => {}
                // a closed pipe (e.g. `| head`) ends the stream cleanly
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => return Ok(()),
                Err(e) => return Err(runtime(format!("write failed: {e}"))),
            }
            printed += 1;
            if record.is_some() {
                break;
            }
        }
        index += 1;
    }
    match out.flush() {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => return Ok(()),
        Err(e) => return Err(runtime(format!("write failed: {e}"))),
    }
    if let Some(k) = record {
        if printed == 0 {
            return Err(runtime(format!(
                "no such record {k} in {} ({} records)",
                log_path.display(),
                index
            )));
        }
    }
    Ok(())
}
