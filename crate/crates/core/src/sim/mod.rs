//! In-process simulation: Poisson arrivals with gated access, honest and
//! adversarial participants, and full crypto-path runs that emit
//! transcripts.
//!
//! Broadcast is a synchronous in-process bus; every participant sees every
//! round. Randomness comes from independent ChaCha streams per purpose
//! (split coins, arrivals, proofs), so switching the crypto layer on does
//! not change the resolution trees.

pub mod channel;
pub mod crypto;
pub mod demo;
pub mod transcript;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::group::{make_params, GroupError, GroupParams, DEFAULT_CHECKSUM_BITS};
use crate::pad::PadError;
use crate::sicta::{SictaError, SplitBehavior, Variant};
use crate::zkp::ZkpError;

pub use channel::{run_channel_sim, SimMetrics, STABILITY_RATIO_LIMIT};
pub use crypto::CryptoTransport;
pub use demo::{demo_payload, run_protocol_demo, CoinScript, DemoConfig, DemoOutput};
pub use transcript::{replay_verify, EpochSummary, KeyFile, Record, ReplayReport, TranscriptError, TRANSCRIPT_VERSION};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sicta(#[from] SictaError),
    #[error(transparent)]
    Pad(#[from] PadError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Zkp(#[from] ZkpError),
}

/// Participant behaviors in the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum StrategyTag {
    #[default]
    Honest,
    /// Slips a fresh message into the first non-root round.
    InjectorMidEpoch,
    /// Adds `E` at node 2 and `E⁻¹` at node 6, keeping the sums intact.
    ExampleTwoCanceller,
    /// Retransmits even when it holds the larger of two messages.
    RuleViolatorTransmit,
    /// Stays silent even when it holds the smaller of two messages.
    RuleViolatorSilent,
    /// Always retransmits, to keep a branch from ever splitting.
    AlwaysCollide,
    /// Attaches a corrupted proof in the first non-root round.
    InvalidProof,
}

impl StrategyTag {
    pub const ALL: [StrategyTag; 7] = [
        StrategyTag::Honest,
        StrategyTag::InjectorMidEpoch,
        StrategyTag::ExampleTwoCanceller,
        StrategyTag::RuleViolatorTransmit,
        StrategyTag::RuleViolatorSilent,
        StrategyTag::AlwaysCollide,
        StrategyTag::InvalidProof,
    ];

    pub fn split_behavior(self) -> SplitBehavior {
        match self {
            StrategyTag::RuleViolatorTransmit => SplitBehavior::RuleTransmit,
            StrategyTag::RuleViolatorSilent => SplitBehavior::RuleSilent,
            StrategyTag::AlwaysCollide => SplitBehavior::AlwaysLeft,
            _ => SplitBehavior::Honest,
        }
    }

    /// Deviations that only exist at the ciphertext level.
    pub fn needs_crypto(self) -> bool {
        matches!(
            self,
            StrategyTag::InjectorMidEpoch | StrategyTag::ExampleTwoCanceller | StrategyTag::InvalidProof
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyTag::Honest => "honest",
            StrategyTag::InjectorMidEpoch => "injector",
            StrategyTag::ExampleTwoCanceller => "canceller",
            StrategyTag::RuleViolatorTransmit => "rule-violator-transmit",
            StrategyTag::RuleViolatorSilent => "rule-violator-silent",
            StrategyTag::AlwaysCollide => "always-collide",
            StrategyTag::InvalidProof => "invalid-proof",
        }
    }
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        StrategyTag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = StrategyTag::ALL.iter().map(|t| t.name()).collect();
                format!("unknown strategy {s:?} (expected one of {})", names.join(", "))
            })
    }
}

/// Parse `3:rule-violator-transmit,5:injector`.
pub fn parse_adversaries(spec: &str) -> Result<BTreeMap<usize, StrategyTag>, String> {
    let mut out = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (idx, tag) = part
            .split_once(':')
            .ok_or_else(|| format!("adversary {part:?} is not of the form INDEX:STRATEGY"))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| format!("bad participant index in {part:?}"))?;
        if out.insert(idx, tag.trim().parse()?).is_some() {
            return Err(format!("participant {idx} given two strategies"));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    /// Poisson arrival rate per transmitted round.
    pub lambda: f64,
    /// Number of transmitted rounds to simulate.
    pub rounds: u64,
    pub variant: Variant,
    pub adversaries: BTreeMap<usize, StrategyTag>,
    pub seed: u64,
    pub crypto: bool,
    pub skip_threshold: Option<u32>,
    /// Modulus size for crypto runs.
    pub modulus_bits: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 8,
            lambda: 0.5,
            rounds: 10_000,
            variant: Variant::Optimized,
            adversaries: BTreeMap::new(),
            seed: 1,
            crypto: false,
            skip_threshold: None,
            modulus_bits: DEFAULT_MODULUS_BITS,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.n < 2 {
            return bad(format!("need at least 2 participants, got {}", self.n));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("arrival rate must be a non-negative number, got {}", self.lambda));
        }
        if let Some(i) = self.adversaries.keys().find(|i| **i == 0 || **i > self.n) {
            return bad(format!("adversary index {i} outside 1..={}", self.n));
        }
        if !self.crypto {
            if let Some((i, t)) = self.adversaries.iter().find(|(_, t)| t.needs_crypto()) {
                return bad(format!("strategy {t} of participant {i} requires --crypto on"));
            }
        }
        if self.crypto && self.modulus_bits < MIN_SIM_MODULUS_BITS {
            return bad(format!(
                "crypto simulation carries 128-bit payloads and needs a modulus of at least {MIN_SIM_MODULUS_BITS} bits"
            ));
        }
        if self.skip_threshold == Some(0) {
            return bad("skip threshold must be at least 1".into());
        }
        Ok(())
    }
}

pub const DEFAULT_MODULUS_BITS: u32 = 256;
pub const DEFAULT_PAYLOAD_BITS: u32 = 128;
/// 128-bit payload, 32-bit checksum and the 3-bit margin.
pub const MIN_SIM_MODULUS_BITS: u32 = DEFAULT_PAYLOAD_BITS + DEFAULT_CHECKSUM_BITS + 3;

/// The shared test-grade group: 256-bit safe prime, 128-bit payloads.
pub fn default_params() -> &'static GroupParams {
    static P: OnceLock<GroupParams> = OnceLock::new();
    P.get_or_init(|| {
        make_params(DEFAULT_MODULUS_BITS, DEFAULT_PAYLOAD_BITS, DEFAULT_CHECKSUM_BITS, b"dcnet/default-group/v1")
            .expect("default parameters are in range")
    })
}

/// The 16-bit group used for hand-checkable output.
pub fn toy_params() -> &'static GroupParams {
    static P: OnceLock<GroupParams> = OnceLock::new();
    P.get_or_init(|| make_params(16, 5, 8, b"dcnet/toy-group/v1").expect("toy parameters are in range"))
}

pub fn params_for_bits(bits: u32) -> Result<GroupParams, SimError> {
    if bits == DEFAULT_MODULUS_BITS {
        return Ok(default_params().clone());
    }
    Ok(make_params(bits, DEFAULT_PAYLOAD_BITS, DEFAULT_CHECKSUM_BITS, b"dcnet/default-group/v1")?)
}

/// Independent deterministic stream for one purpose.
pub fn stream_rng(seed: u64, purpose: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(b"dcnet/stream/v1");
    h.update(seed.to_be_bytes());
    h.update(purpose.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

pub fn stream_bytes(seed: u64, purpose: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"dcnet/bytes/v1");
    h.update(seed.to_be_bytes());
    h.update(purpose.as_bytes());
    h.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adversary_spec_parsing() {
        let a = parse_adversaries("3:rule-violator-transmit, 5:injector").unwrap();
        assert_eq!(a[&3], StrategyTag::RuleViolatorTransmit);
        assert_eq!(a[&5], StrategyTag::InjectorMidEpoch);
        assert!(parse_adversaries("3").is_err());
        assert!(parse_adversaries("x:honest").is_err());
        assert!(parse_adversaries("1:nope").is_err());
        assert!(parse_adversaries("1:honest,1:honest").is_err());
        for t in StrategyTag::ALL {
            assert_eq!(t.name().parse::<StrategyTag>().unwrap(), t);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = [
            SimConfig { n: 1, ..Default::default() },
            SimConfig { lambda: -1.0, ..Default::default() },
            SimConfig { lambda: f64::NAN, ..Default::default() },
            SimConfig {
                adversaries: BTreeMap::from([(9, StrategyTag::Honest)]),
                ..Default::default()
            },
            SimConfig {
                adversaries: BTreeMap::from([(2, StrategyTag::InvalidProof)]),
                ..Default::default()
            },
            SimConfig {
                crypto: true,
                modulus_bits: 64,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
