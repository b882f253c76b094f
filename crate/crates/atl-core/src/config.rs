//! Hierarchy configuration files.
//!
//! One entry per line, `#` comments and blank lines allowed:
//!
//! ```text
//! {scope: global, rate: 1000/1 per second, bucket: 1000, overlimit: compress}
//! {scope: gen:1, rate: 10/1 per second, bucket: 50, overlimit: drop}
//! {scope: sig:1:109, rate: 1/1 per second, bucket: 10, overlimit: compress}
//! ```
//!
//! `scope` is `global`, `gen:<id>`, or `sig:<gen>:<id>`; `rate` is an exact
//! fraction of tokens per second; `bucket` is the bucket size in tokens;
//! `overlimit` is `drop`, `compress` (RLE + delta, lossless), or
//! `compress-rle` (count only). Leaving out a `global` entry leaves the root
//! unlimited.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::pipeline::{OverLimitPolicy, PolicyTable};
use crate::throttle::{BucketConfig, DefaultPolicy, FilterHierarchy, NodeId, Rate};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Entry { line: u64, reason: String },
}

/// A parsed configuration: the bucket tree plus each node's over-limit
/// policy.
#[derive(Debug, Clone)]
pub struct HierarchyConfig {
    pub hierarchy: FilterHierarchy,
    pub policies: PolicyTable,
}

pub fn load_config(path: &Path) -> Result<HierarchyConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<HierarchyConfig, ConfigError> {
    let mut hierarchy = FilterHierarchy::new(DefaultPolicy::RootOnly);
    let mut policies = PolicyTable::default();
    let mut seen: Vec<NodeId> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i as u64 + 1;
        let fail = |reason: String| ConfigError::Entry {
            line: line_no,
            reason,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let body = line
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(|| fail("entry must be wrapped in { }".into()))?;

        let mut scope = None;
        let mut rate = None;
        let mut bucket = None;
        let mut overlimit = None;
        for part in body.split(',') {
            let (key, value) = part
                .split_once(':')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| fail(format!("expected key: value, got \"{}\"", part.trim())))?;
            match key {
                "scope" => scope = Some(parse_scope(value).map_err(&fail)?),
                "rate" => rate = Some(parse_rate(value).map_err(&fail)?),
                "bucket" => {
                    let n: u32 = value.parse().map_err(|_| {
                        fail(format!("bucket \"{value}\" is not an unsigned integer"))
                    })?;
                    if n == 0 {
                        return Err(fail("bucket must be at least 1".into()));
                    }
                    bucket = Some(n);
                }
                "overlimit" => {
                    overlimit = Some(match value {
                        "drop" => OverLimitPolicy::Drop,
                        "compress" => OverLimitPolicy::CompressDelta,
                        "compress-rle" => OverLimitPolicy::CompressRle,
                        other => {
                            return Err(fail(format!(
                                "overlimit \"{other}\" is not drop, compress, or compress-rle"
                            )))
                        }
                    });
                }
                other => return Err(fail(format!("unknown key \"{other}\""))),
            }
        }
        let scope = scope.ok_or_else(|| fail("missing scope".into()))?;
        let rate = rate.ok_or_else(|| fail("missing rate".into()))?;
        let bucket = bucket.ok_or_else(|| fail("missing bucket".into()))?;
        let overlimit = overlimit.ok_or_else(|| fail("missing overlimit".into()))?;

        if seen.contains(&scope) {
            return Err(fail(format!("duplicate entry for scope {scope}")));
        }
        seen.push(scope);

        let config = BucketConfig::new(rate, bucket);
        match scope {
            NodeId::Root => hierarchy.set_root(config),
            NodeId::Generator(g) => hierarchy.set_generator(g, config),
            NodeId::Signature {
                generator,
                signature,
            } => hierarchy.set_signature(generator, signature, config),
        }
        policies.set(scope, overlimit);
    }

    Ok(HierarchyConfig {
        hierarchy,
        policies,
    })
}

fn parse_scope(value: &str) -> Result<NodeId, String> {
    if value == "global" {
        return Ok(NodeId::Root);
    }
    if let Some(rest) = value.strip_prefix("gen:") {
        let g: u32 = rest
            .parse()
            .map_err(|_| format!("generator id \"{rest}\" is not an unsigned integer"))?;
        return Ok(NodeId::Generator(g));
    }
    if let Some(rest) = value.strip_prefix("sig:") {
        let (g, s) = rest
            .split_once(':')
            .ok_or_else(|| format!("signature scope \"{value}\" must be sig:<gen>:<id>"))?;
        let generator: u32 = g
            .parse()
            .map_err(|_| format!("generator id \"{g}\" is not an unsigned integer"))?;
        let signature: u32 = s
            .parse()
            .map_err(|_| format!("signature id \"{s}\" is not an unsigned integer"))?;
        return Ok(NodeId::Signature {
            generator,
            signature,
        });
    }
    Err(format!(
        "scope \"{value}\" is not global, gen:<id>, or sig:<gen>:<id>"
    ))
}

fn parse_rate(value: &str) -> Result<Rate, String> {
    let fraction = value
        .strip_suffix("per second")
        .map(str::trim)
        .ok_or_else(|| format!("rate \"{value}\" must end in \"per second\""))?;
    let (num, den) = match fraction.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (fraction, "1"),
    };
    let num: u32 = num
        .parse()
        .map_err(|_| format!("rate numerator \"{num}\" is not an unsigned integer"))?;
    let den: u32 = den
        .parse()
        .map_err(|_| format!("rate denominator \"{den}\" is not an unsigned integer"))?;
    if den == 0 {
        return Err("rate denominator must be nonzero".into());
    }
    Ok(Rate { num, den })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::throttle::Verdict;

    fn sample() -> &'static str {
        "# three-level example\n\
         {scope: global, rate: 1000/1 per second, bucket: 1000, overlimit: compress}\n\
         \n\
         {scope: gen:1, rate: 10/1 per second, bucket: 50, overlimit: drop}\n\
         {scope: sig:1:109, rate: 1/1 per second, bucket: 10, overlimit: compress-rle}\n"
    }

    #[test]
    fn parses_all_scopes_and_policies() {
        let config = parse_config(sample()).unwrap();
        let sig = NodeId::Signature {
            generator: 1,
            signature: 109,
        };
        let root = config.hierarchy.node(NodeId::Root).unwrap();
        assert_eq!(root.config.bucket_size, 1000);
        assert_eq!(root.config.rate, Rate::per_second(1000));
        assert_eq!(
            config
                .hierarchy
                .node(NodeId::Generator(1))
                .unwrap()
                .config
                .bucket_size,
            50
        );
        assert_eq!(config.hierarchy.node(sig).unwrap().config.bucket_size, 10);
        assert_eq!(
            config.policies.get(NodeId::Root),
            OverLimitPolicy::CompressDelta
        );
        assert_eq!(
            config.policies.get(NodeId::Generator(1)),
            OverLimitPolicy::Drop
        );
        assert_eq!(config.policies.get(sig), OverLimitPolicy::CompressRle);
    }

    #[test]
    fn fractional_rate_and_bare_numerator() {
        let config =
            parse_config("{scope: global, rate: 1/3 per second, bucket: 2, overlimit: drop}")
                .unwrap();
        assert_eq!(
            config.hierarchy.node(NodeId::Root).unwrap().config.rate,
            Rate { num: 1, den: 3 }
        );
        let config =
            parse_config("{scope: global, rate: 5 per second, bucket: 2, overlimit: drop}")
                .unwrap();
        assert_eq!(
            config.hierarchy.node(NodeId::Root).unwrap().config.rate,
            Rate::per_second(5)
        );
    }

    #[test]
    fn absent_global_entry_means_unlimited_root() {
        let mut config =
            parse_config("{scope: sig:1:109, rate: 1/1 per second, bucket: 1, overlimit: drop}")
                .unwrap();
        let stray = crate::alert::Alert {
            timestamp_ms: 5,
            generator_id: 9,
            signature_id: 9,
            src_addr: 0,
            dst_addr: 0,
            src_port: 0,
            dst_port: 0,
            protocol: 0,
            tos: 0,
            payload: vec![],
        };
        for _ in 0..100 {
            assert_eq!(
                config.hierarchy.classify(&stray).unwrap().verdict,
                Verdict::Pass
            );
        }
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            (
                "{scope: nowhere, rate: 1/1 per second, bucket: 1, overlimit: drop}",
                "scope",
            ),
            (
                "{scope: global, rate: 1 per minute, bucket: 1, overlimit: drop}",
                "per second",
            ),
            (
                "{scope: global, rate: 1/0 per second, bucket: 1, overlimit: drop}",
                "denominator",
            ),
            (
                "{scope: global, rate: 1/1 per second, bucket: 0, overlimit: drop}",
                "bucket",
            ),
            (
                "{scope: global, rate: 1/1 per second, bucket: 1, overlimit: explode}",
                "overlimit",
            ),
            (
                "{scope: global, rate: 1/1 per second, bucket: 1, overlimit: drop, color: red}",
                "unknown key",
            ),
            (
                "{rate: 1/1 per second, bucket: 1, overlimit: drop}",
                "missing scope",
            ),
            (
                "scope: global, rate: 1/1 per second, bucket: 1, overlimit: drop",
                "{ }",
            ),
        ];
        for (text, needle) in cases {
            let err = parse_config(&format!("\n{text}")).unwrap_err();
            let message = err.to_string();
            assert!(message.starts_with("line 2:"), "{message}");
            assert!(message.contains(needle), "{message} missing {needle}");
        }
    }

    #[test]
    fn duplicate_scope_is_rejected() {
        let text = "{scope: gen:1, rate: 1/1 per second, bucket: 1, overlimit: drop}\n\
                    {scope: gen:1, rate: 2/1 per second, bucket: 2, overlimit: drop}";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }
}
