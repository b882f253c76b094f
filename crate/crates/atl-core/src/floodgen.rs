//! Deterministic synthetic alert floods.
//!
//! Floods are pure functions of their spec: alert `i` depends only on the
//! spec and `i`, so generation can run data-parallel (the `parallel`
//! feature, on by default) and still emit byte-identical output to the
//! sequential path. Randomized fields come from a 64-bit linear
//! congruential generator with jump-ahead, not the platform RNG, so the
//! same seed reproduces the same flood everywhere.

use std::collections::BTreeSet;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::alert::{Alert, FieldId};

/// LCG multiplier (Knuth's MMIX constants, modulus 2^64).
pub const LCG_MULTIPLIER: u64 = 6364136223846793005;
/// LCG increment.
pub const LCG_INCREMENT: u64 = 1442695040888963407;

/// 64-bit linear congruential generator: `state' = state * A + C (mod 2^64)`.
///
/// Value extraction is fixed: `next_u64` returns the new state; narrower
/// draws take its high bits; payload bytes take whole states as
/// little-endian byte chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Lcg {
        Lcg { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(LCG_MULTIPLIER)
            .wrapping_add(LCG_INCREMENT);
        self.state
    }

    pub fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    pub fn next_u16(&mut self) -> u16 {
        (self.next_u64() >> 48) as u16
    }

    pub fn next_u8(&mut self) -> u8 {
        (self.next_u64() >> 56) as u8
    }

    /// Advances the generator by `n` steps in O(log n) by composing the
    /// affine step function with itself (double-and-add). Equivalent to `n`
    /// calls to [`Lcg::next_u64`].
    pub fn skip(&mut self, mut n: u64) {
        let mut acc_mul: u64 = 1;
        let mut acc_add: u64 = 0;
        let mut step_mul = LCG_MULTIPLIER;
        let mut step_add = LCG_INCREMENT;
        while n > 0 {
            if n & 1 == 1 {
                acc_mul = acc_mul.wrapping_mul(step_mul);
                acc_add = acc_add.wrapping_mul(step_mul).wrapping_add(step_add);
            }
            step_add = step_add.wrapping_mul(step_mul).wrapping_add(step_add);
            step_mul = step_mul.wrapping_mul(step_mul);
            n >>= 1;
        }
        self.state = self.state.wrapping_mul(acc_mul).wrapping_add(acc_add);
    }
}

/// How flood timestamps are spread over the duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arrival {
    /// Evenly spaced from the base timestamp to base + duration, remainders
    /// distributed deterministically by flooring.
    Uniform,
    /// Every alert at the base timestamp.
    FrontLoaded,
}

/// Recipe for one flood.
#[derive(Debug, Clone)]
pub struct FloodSpec {
    /// Total alerts; at least 1 for a meaningful flood.
    pub count: u64,
    /// Event-time span of the flood.
    pub duration_ms: u64,
    /// Template; unmodulated fields are copied from it verbatim.
    pub base_alert: Alert,
    /// Fields randomized per alert. Modulated payloads keep the base
    /// payload's length and get fresh bytes.
    pub modulate: BTreeSet<FieldId>,
    pub seed: u64,
    pub arrival: Arrival,
}

impl FloodSpec {
    /// LCG draws consumed per alert; fixed for a given spec so alert `i`
    /// starts at stream offset `i * draws_per_alert`.
    fn draws_per_alert(&self) -> u64 {
        self.modulate
            .iter()
            .map(|f| match f {
                FieldId::Payload => (self.base_alert.payload.len() as u64).div_ceil(8),
                _ => 1,
            })
            .sum()
    }

    fn timestamp_at(&self, index: u64) -> u64 {
        match self.arrival {
            Arrival::FrontLoaded => self.base_alert.timestamp_ms,
            Arrival::Uniform => {
                if self.count <= 1 {
                    self.base_alert.timestamp_ms
                } else {
                    let offset =
                        (index as u128 * self.duration_ms as u128) / (self.count as u128 - 1);
                    self.base_alert.timestamp_ms.saturating_add(offset as u64)
                }
            }
        }
    }

    fn fill(&self, index: u64, lcg: &mut Lcg) -> Alert {
        let mut alert = self.base_alert.clone();
        alert.timestamp_ms = self.timestamp_at(index);
        for field in FieldId::ALL {
            if !self.modulate.contains(&field) {
                continue;
            }
            match field {
                FieldId::SrcAddr => alert.src_addr = lcg.next_u32(),
                FieldId::DstAddr => alert.dst_addr = lcg.next_u32(),
                FieldId::SrcPort => alert.src_port = lcg.next_u16(),
                FieldId::DstPort => alert.dst_port = lcg.next_u16(),
                FieldId::Protocol => alert.protocol = lcg.next_u8(),
                FieldId::Tos => alert.tos = lcg.next_u8(),
                FieldId::Payload => {
                    for chunk in alert.payload.chunks_mut(8) {
                        let bytes = lcg.next_u64().to_le_bytes();
                        chunk.copy_from_slice(&bytes[..chunk.len()]);
                    }
                }
            }
        }
        alert
    }

    /// Alert `index` of the flood, independent of any other alert.
    pub fn alert_at(&self, index: u64) -> Alert {
        let mut lcg = Lcg::new(self.seed);
        // stream offsets are taken mod 2^64, matching the LCG's period
        lcg.skip(index.wrapping_mul(self.draws_per_alert()));
        self.fill(index, &mut lcg)
    }
}

/// Sequential generation: one LCG walked straight through the flood.
pub fn generate_seq(spec: &FloodSpec) -> Vec<Alert> {
    iter(spec).collect()
}

/// Streaming sequential generation with constant memory.
pub fn iter(spec: &FloodSpec) -> impl Iterator<Item = Alert> + '_ {
    let mut lcg = Lcg::new(spec.seed);
    (0..spec.count).map(move |i| spec.fill(i, &mut lcg))
}

/// Data-parallel generation; byte-identical to [`generate_seq`].
///
/// The flood is cut into chunks; each chunk jumps the LCG to its stream
/// offset once and then walks sequentially, so the jump-ahead cost is
/// amortized to nothing and chunk boundaries cannot affect the output.
#[cfg(feature = "parallel")]
pub fn generate_par(spec: &FloodSpec) -> Vec<Alert> {
    let threads = rayon::current_num_threads() as u64;
    let chunk_len = (spec.count / (threads * 8).max(1)).clamp(1024, 65_536);
    let draws = spec.draws_per_alert();
    let starts: Vec<u64> = (0..spec.count).step_by(chunk_len as usize).collect();
    starts
        .into_par_iter()
        .flat_map_iter(|start| {
            let len = chunk_len.min(spec.count - start);
            let mut lcg = Lcg::new(spec.seed);
            lcg.skip(start.wrapping_mul(draws));
            (start..start + len).map(move |i| spec.fill(i, &mut lcg))
        })
        .collect()
}

/// Generates the whole flood, using the parallel lane when built with the
/// `parallel` feature and the sequential lane otherwise.
pub fn generate(spec: &FloodSpec) -> Vec<Alert> {
    #[cfg(feature = "parallel")]
    {
        generate_par(spec)
    }
    #[cfg(not(feature = "parallel"))]
    {
        generate_seq(spec)
    }
}
