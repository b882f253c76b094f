//! Token bucket filtering: refill, consume, and a bucket hierarchy keyed by
//! generator and signature ids.
//!
//! Credit is tracked in integer millitokens (tokens x 1000) and refilled from
//! alert event time, so a replayed stream always produces the same verdicts
//! on every platform. An alert passes the hierarchy only if every applicable
//! bucket (signature, generator, global) has a whole token; consumption is
//! all-or-nothing.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::alert::Alert;

pub const MILLITOKENS_PER_TOKEN: u64 = 1000;

/// Token refill rate in tokens per second, as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rate {
    pub num: u32,
    /// Must be nonzero.
    pub den: u32,
}

impl Rate {
    pub fn per_second(num: u32) -> Rate {
        Rate { num, den: 1 }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// The two parameters of a token bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketConfig {
    pub rate: Rate,
    /// Maximum stored tokens; at least 1.
    pub bucket_size: u32,
}

impl BucketConfig {
    pub fn new(rate: Rate, bucket_size: u32) -> BucketConfig {
        assert!(rate.den >= 1, "rate denominator must be nonzero");
        assert!(bucket_size >= 1, "bucket size must be at least 1");
        BucketConfig { rate, bucket_size }
    }

    fn cap_millitokens(&self) -> u64 {
        self.bucket_size as u64 * MILLITOKENS_PER_TOKEN
    }
}

/// Live bucket state. Buckets start full so short genuine bursts pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketState {
    pub credit_millitokens: u64,
    pub last_refill_ms: u64,
}

/// Event time moved backwards: alerts must arrive in timestamp order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("clock regression: event time {now_ms} ms precedes last refill {last_refill_ms} ms")]
pub struct ClockRegression {
    pub now_ms: u64,
    pub last_refill_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    OverLimit,
}

impl BucketState {
    pub fn full(config: &BucketConfig) -> BucketState {
        BucketState {
            credit_millitokens: config.cap_millitokens(),
            last_refill_ms: 0,
        }
    }

    /// Accrues credit for the time elapsed since the last refill and caps it
    /// at the bucket size. Extra tokens are discarded.
    ///
    /// The accrual is `(rate.num * delta_ms * 1000) / (rate.den * 1000)`
    /// millitokens, computed exactly in wide integers and floored.
    pub fn refill(&mut self, config: &BucketConfig, now_ms: u64) -> Result<(), ClockRegression> {
        if now_ms < self.last_refill_ms {
            return Err(ClockRegression {
                now_ms,
                last_refill_ms: self.last_refill_ms,
            });
        }
        let delta_ms = (now_ms - self.last_refill_ms) as u128;
        let gained = (config.rate.num as u128 * delta_ms * 1000) / (config.rate.den as u128 * 1000);
        let credit =
            (self.credit_millitokens as u128 + gained).min(config.cap_millitokens() as u128);
        self.credit_millitokens = credit as u64;
        self.last_refill_ms = now_ms;
        Ok(())
    }

    /// Refills to the alert's event time, then takes one token if a whole one
    /// is available. Over-limit leaves the post-refill credit untouched.
    pub fn try_consume(
        &mut self,
        config: &BucketConfig,
        alert_ts_ms: u64,
    ) -> Result<Verdict, ClockRegression> {
        self.refill(config, alert_ts_ms)?;
        if self.credit_millitokens >= MILLITOKENS_PER_TOKEN {
            self.credit_millitokens -= MILLITOKENS_PER_TOKEN;
            Ok(Verdict::Pass)
        } else {
            Ok(Verdict::OverLimit)
        }
    }
}

/// Identifies one bucket in the hierarchy. The `Display` form matches the
/// configuration file scope syntax (`global`, `gen:5`, `sig:1:109`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Root,
    Generator(u32),
    Signature { generator: u32, signature: u32 },
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Root => write!(f, "global"),
            NodeId::Generator(g) => write!(f, "gen:{g}"),
            NodeId::Signature {
                generator,
                signature,
            } => write!(f, "sig:{generator}:{signature}"),
        }
    }
}

/// What happens to alerts that match no configured generator or signature
/// node: pass untouched, or fall through to the global bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefaultPolicy {
    PassUnmatched,
    RootOnly,
}

/// The verdict for one alert, and which bucket denied it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterDecision {
    pub verdict: Verdict,
    /// Present iff the verdict is `OverLimit`: the first bucket in the
    /// signature -> generator -> global chain that lacked credit.
    pub limiting_node: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub config: BucketConfig,
    pub state: BucketState,
}

impl Node {
    fn new(config: BucketConfig) -> Node {
        Node {
            state: BucketState::full(&config),
            config,
        }
    }
}

/// A tree of token buckets: optional global root, generator nodes, signature
/// leaves. An absent root is unlimited.
///
/// Single-writer: one logical stream mutates the hierarchy; snapshots via
/// [`FilterHierarchy::node`] are safe between operations.
#[derive(Debug, Clone)]
pub struct FilterHierarchy {
    root: Option<Node>,
    generators: BTreeMap<u32, Node>,
    signatures: BTreeMap<(u32, u32), Node>,
    default_policy: DefaultPolicy,
}

impl FilterHierarchy {
    pub fn new(default_policy: DefaultPolicy) -> FilterHierarchy {
        FilterHierarchy {
            root: None,
            generators: BTreeMap::new(),
            signatures: BTreeMap::new(),
            default_policy,
        }
    }

    pub fn set_root(&mut self, config: BucketConfig) {
        self.root = Some(Node::new(config));
    }

    pub fn set_generator(&mut self, generator_id: u32, config: BucketConfig) {
        self.generators.insert(generator_id, Node::new(config));
    }

    pub fn set_signature(&mut self, generator_id: u32, signature_id: u32, config: BucketConfig) {
        self.signatures
            .insert((generator_id, signature_id), Node::new(config));
    }

    pub fn default_policy(&self) -> DefaultPolicy {
        self.default_policy
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        match id {
            NodeId::Root => self.root.as_ref(),
            NodeId::Generator(g) => self.generators.get(&g),
            NodeId::Signature {
                generator,
                signature,
            } => self.signatures.get(&(generator, signature)),
        }
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node {
        match id {
            NodeId::Root => self.root.as_mut().expect("root node present"),
            NodeId::Generator(g) => self.generators.get_mut(&g).expect("generator node present"),
            NodeId::Signature {
                generator,
                signature,
            } => self
                .signatures
                .get_mut(&(generator, signature))
                .expect("signature node present"),
        }
    }

    /// The buckets that apply to an alert with these ids, in consultation
    /// order: signature node, generator node, global root. Alerts matching no
    /// signature or generator node get `[root]` under `RootOnly` and nothing
    /// under `PassUnmatched`.
    pub fn chain_for(&self, generator_id: u32, signature_id: u32) -> Vec<NodeId> {
        let mut chain = Vec::with_capacity(3);
        let sig = NodeId::Signature {
            generator: generator_id,
            signature: signature_id,
        };
        if self.signatures.contains_key(&(generator_id, signature_id)) {
            chain.push(sig);
        }
        if self.generators.contains_key(&generator_id) {
            chain.push(NodeId::Generator(generator_id));
        }
        let matched = !chain.is_empty();
        if (matched || self.default_policy == DefaultPolicy::RootOnly) && self.root.is_some() {
            chain.push(NodeId::Root);
        }
        chain
    }

    /// Runs one alert through its bucket chain. All buckets in the chain are
    /// refilled to the alert's event time; the refill sticks regardless of
    /// the verdict. A token is consumed from every bucket only if every
    /// bucket has one (no partial consumption).
    pub fn classify(&mut self, alert: &Alert) -> Result<FilterDecision, ClockRegression> {
        let chain = self.chain_for(alert.generator_id, alert.signature_id);
        for &id in &chain {
            let node = self.node_mut(id);
            let config = node.config;
            node.state.refill(&config, alert.timestamp_ms)?;
        }
        let limiting = chain
            .iter()
            .copied()
            .find(|&id| self.node(id).unwrap().state.credit_millitokens < MILLITOKENS_PER_TOKEN);
        match limiting {
            Some(id) => Ok(FilterDecision {
                verdict: Verdict::OverLimit,
                limiting_node: Some(id),
            }),
            None => {
                for &id in &chain {
                    self.node_mut(id).state.credit_millitokens -= MILLITOKENS_PER_TOKEN;
                }
                Ok(FilterDecision {
                    verdict: Verdict::Pass,
                    limiting_node: None,
                })
            }
        }
    }
}
