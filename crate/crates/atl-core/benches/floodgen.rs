//! Compares the data-parallel and sequential flood generation lanes, plus
//! the (inherently sequential) pipeline throughput on a generated flood.
//!
//! `cargo bench -p atl-core`

use std::collections::BTreeSet;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use atl_core::alert::{Alert, FieldId};
use atl_core::floodgen::{generate_par, generate_seq, Arrival, FloodSpec};
use atl_core::logstore::LogWriter;
use atl_core::pipeline::{process, OverLimitPolicy, PolicyTable, ProcessOptions};
use atl_core::throttle::{BucketConfig, DefaultPolicy, FilterHierarchy, NodeId, Rate};

fn base_alert() -> Alert {
    Alert {
        timestamp_ms: 0,
        generator_id: 1,
        signature_id: 109,
        src_addr: 0x0a000001,
        dst_addr: 0x0a000002,
        src_port: 1024,
        dst_port: 31337,
        protocol: 17,
        tos: 0,
        payload: vec![
            0xce, 0x63, 0xd1, 0xd2, 0x16, 0xe7, 0x13, 0xcf, 0x39, 0xa5, 0xa5, 0x86,
        ],
    }
}

fn spec(count: u64, modulate: BTreeSet<FieldId>) -> FloodSpec {
    FloodSpec {
        count,
        duration_ms: 80_000,
        base_alert: base_alert(),
        modulate,
        seed: 7,
        arrival: Arrival::Uniform,
    }
}

fn bench_generate(c: &mut Criterion) {
    let mut group = c.benchmark_group("floodgen");
    group.sample_size(20);
    for count in [50_000u64, 300_000] {
        for (label, modulate) in [
            ("identical", BTreeSet::new()),
            ("modulated", BTreeSet::from(FieldId::ALL)),
        ] {
            let s = spec(count, modulate);
            group.throughput(Throughput::Elements(count));
            group.bench_with_input(
                BenchmarkId::new(format!("seq/{label}"), count),
                &s,
                |b, s| b.iter(|| generate_seq(s)),
            );
            group.bench_with_input(
                BenchmarkId::new(format!("par/{label}"), count),
                &s,
                |b, s| b.iter(|| generate_par(s)),
            );
        }
    }
    group.finish();
}

fn bench_pipeline(c: &mut Criterion) {
    let alerts = generate_seq(&spec(300_000, BTreeSet::new()));
    let sig = NodeId::Signature {
        generator: 1,
        signature: 109,
    };
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.throughput(Throughput::Elements(alerts.len() as u64));
    for (label, policy) in [
        ("drop", OverLimitPolicy::Drop),
        ("rle", OverLimitPolicy::CompressRle),
        ("rle_delta", OverLimitPolicy::CompressDelta),
    ] {
        group.bench_function(label, |b| {
            b.iter(|| {
                let mut hierarchy = FilterHierarchy::new(DefaultPolicy::PassUnmatched);
                hierarchy.set_signature(1, 109, BucketConfig::new(Rate::per_second(1), 10));
                let mut policies = PolicyTable::default();
                policies.set(sig, policy);
                let mut log = LogWriter::new(Vec::new());
                process(
                    alerts.iter().cloned().map(Ok),
                    &mut hierarchy,
                    &policies,
                    &mut log,
                    &ProcessOptions::default(),
                )
                .unwrap();
                log.close().unwrap().len()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_generate, bench_pipeline);
criterion_main!(benches);
