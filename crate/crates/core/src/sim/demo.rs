//! End-to-end protocol runs on the full crypto path, with optional scripted
//! split coins to force a particular tree.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::crypto::CryptoTransport;
use super::transcript::KeyFile;
use super::{default_params, stream_bytes, stream_rng, toy_params, SimError, StrategyTag};
use crate::group::{GroupElement, GroupParams};
use crate::pad::keygen;
use crate::sicta::{
    run_epoch, CoinSource, EncodedMessage, GroupAlgebra, ParticipantCrState, RngCoins, ScriptedCoins, Variant,
};
use crate::verification::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoinScript {
    /// The coin table of the exemplary five-message tree.
    Figure1,
    #[default]
    Random,
}

impl fmt::Display for CoinScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoinScript::Figure1 => "fig1",
            CoinScript::Random => "random",
        })
    }
}

impl FromStr for CoinScript {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fig1" => Ok(CoinScript::Figure1),
            "random" => Ok(CoinScript::Random),
            other => Err(format!("unknown coin script {other:?} (expected fig1 or random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoConfig {
    pub n: usize,
    /// Participants `1..=senders` each send one message.
    pub senders: usize,
    pub script: CoinScript,
    pub seed: u64,
    pub toy: bool,
    pub variant: Variant,
    pub adversaries: BTreeMap<usize, StrategyTag>,
    pub skip_threshold: Option<u32>,
    /// Epochs to run before giving up on draining every message.
    pub max_epochs: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            n: 5,
            senders: 5,
            script: CoinScript::Random,
            seed: 1,
            toy: false,
            variant: Variant::Optimized,
            adversaries: BTreeMap::new(),
            skip_threshold: None,
            max_epochs: 16,
        }
    }
}

impl DemoConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.n < 2 {
            return bad(format!("need at least 2 participants, got {}", self.n));
        }
        if self.senders > self.n {
            return bad(format!("{} senders but only {} participants", self.senders, self.n));
        }
        if self.script == CoinScript::Figure1 && self.senders != 5 {
            return bad(format!("the fig1 coin script needs exactly 5 senders, got {}", self.senders));
        }
        if let Some(i) = self.adversaries.keys().find(|i| **i == 0 || **i > self.n) {
            return bad(format!("adversary index {i} outside 1..={}", self.n));
        }
        if self.toy && self.n >= 1 << toy_params().payload_bits() {
            return bad(format!("the toy group carries at most {} distinct payloads", (1 << toy_params().payload_bits()) - 1));
        }
        if self.max_epochs == 0 || self.skip_threshold == Some(0) {
            return bad("max epochs and skip threshold must be positive".into());
        }
        Ok(())
    }

    pub fn params(&self) -> &'static GroupParams {
        if self.toy {
            toy_params()
        } else {
            default_params()
        }
    }
}

/// `M<i>` as text when it fits, else the integer `i`.
pub fn demo_payload(params: &GroupParams, i: usize) -> Vec<u8> {
    let text = format!("M{i}");
    if params.payload_len() >= text.len() && params.payload_bits() >= 8 * text.len() as u32 - 1 {
        return params.payload_from_text(&text);
    }
    let mut out = vec![0u8; params.payload_len()];
    let bytes = (i as u64).to_be_bytes();
    let n = out.len().min(8);
    out[params.payload_len() - n..].copy_from_slice(&bytes[8 - n..]);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoEpoch {
    pub epoch: u64,
    pub transmitted: Vec<u64>,
    pub inferred: Vec<u64>,
    /// Combined value of every resolved node.
    pub values: BTreeMap<u64, GroupElement>,
    pub delivered: Vec<Vec<u8>>,
    pub dump: String,
}

#[derive(Debug, Clone)]
pub struct DemoOutput {
    pub params: GroupParams,
    pub transcript: String,
    pub key_file: KeyFile,
    pub epochs: Vec<DemoEpoch>,
    pub verdicts: Vec<Verdict>,
    /// Every payload that came out of the channel, in delivery order.
    pub delivered: Vec<Vec<u8>>,
    /// Payloads still waiting when the epoch budget ran out.
    pub undelivered: usize,
}

pub fn run_protocol_demo(config: &DemoConfig) -> Result<DemoOutput, SimError> {
    config.validate()?;
    let params = config.params().clone();
    let keys = keygen(&params, config.n, &stream_bytes(config.seed, "keys"))?;
    let key_file = KeyFile::from_keys(&params, &keys);
    let mut transport = CryptoTransport::new(
        params.clone(),
        keys,
        stream_bytes(config.seed, "setup").to_vec(),
        config.variant,
        config.skip_threshold,
        config.adversaries.clone(),
        stream_rng(config.seed, "proofs"),
    );
    let alg = GroupAlgebra::new(params.clone());
    let mut participants: Vec<ParticipantCrState<EncodedMessage>> = (1..=config.n)
        .map(|i| {
            let tag = config.adversaries.get(&i).copied().unwrap_or_default();
            let mut p = ParticipantCrState::new(i, tag.split_behavior());
            if i <= config.senders {
                let m = EncodedMessage::new(&params, &demo_payload(&params, i))?;
                p.enqueue(m, 0.0);
            }
            Ok(p)
        })
        .collect::<Result<_, SimError>>()?;
    let mut coins: Box<dyn CoinSource> = match config.script {
        CoinScript::Figure1 => Box::new(ScriptedCoins::figure_one()),
        CoinScript::Random => Box::new(RngCoins(stream_rng(config.seed, "coins"))),
    };

    let mut epochs = Vec::new();
    let mut delivered = Vec::new();
    for epoch in 0..config.max_epochs {
        if participants.iter().all(|p| p.backlog() == 0) {
            break;
        }
        let report = run_epoch(
            &alg,
            epoch,
            config.variant,
            config.skip_threshold,
            &mut participants,
            coins.as_mut(),
            &mut transport,
        )?;
        let tree = &report.tree;
        let got: Vec<Vec<u8>> = report.deliveries.iter().map(|d| d.message.payload.clone()).collect();
        delivered.extend(got.iter().cloned());
        epochs.push(DemoEpoch {
            epoch,
            transmitted: tree.transmitted_ids(),
            inferred: tree.inferred_ids(),
            values: tree.nodes().map(|(id, rec)| (id, rec.value.clone())).collect(),
            delivered: got,
            dump: tree.dump(&alg),
        });
    }
    let undelivered = participants.iter().map(|p| p.backlog()).sum();
    let (transcript, verdicts) = transport.finish();
    Ok(DemoOutput {
        params,
        transcript: transcript.to_jsonl(),
        key_file,
        epochs,
        verdicts,
        delivered,
        undelivered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::replay_verify;

    #[test]
    fn payloads() {
        let p = default_params();
        assert_eq!(&demo_payload(p, 3)[..2], b"M3");
        let t = toy_params();
        assert_eq!(demo_payload(t, 3), vec![3]);
    }

    #[test]
    fn figure_one_toy_demo_replays() {
        for variant in [Variant::Standard, Variant::Optimized] {
            let out = run_protocol_demo(&DemoConfig {
                script: CoinScript::Figure1,
                toy: true,
                variant,
                ..Default::default()
            })
            .unwrap();
            assert_eq!(out.epochs.len(), 1);
            assert_eq!(out.epochs[0].transmitted, vec![1, 2, 4, 6, 14]);
            assert_eq!(out.epochs[0].inferred, vec![3, 5, 7, 15]);
            assert_eq!(out.delivered.len(), 5);
            let r = replay_verify(&out.transcript, Some(&out.key_file)).unwrap();
            assert!(r.accepted, "{:?}", r.problems);
            assert!(r.verdicts.is_empty());
        }
    }

    #[test]
    fn script_mismatch_is_rejected() {
        let c = DemoConfig {
            senders: 4,
            script: CoinScript::Figure1,
            ..Default::default()
        };
        assert!(run_protocol_demo(&c).is_err());
    }
}
