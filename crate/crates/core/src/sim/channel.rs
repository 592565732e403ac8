//! Channel simulation with Poisson arrivals and gated access.
//!
//! Time is counted in transmitted rounds; inferred rounds are free. After
//! every transmitted round a Poisson(λ) number of messages arrives, each at
//! a uniformly random time inside that round and at a uniformly random
//! participant. Arrivals wait in per-participant queues until the next
//! epoch starts.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Poisson};

use super::crypto::CryptoTransport;
use super::{params_for_bits, stream_bytes, stream_rng, SimConfig, SimError, StrategyTag};
use crate::pad::keygen;
use crate::sicta::{
    CountingAlgebra, EncodedMessage, EpochRunner, GroupAlgebra, MessageKey, ParticipantCrState, PlanKind,
    ResolutionTree, RngCoins, RoundTransport, Send, SictaError, SlotAlgebra, Step, TransmitResult, Variant,
};
use crate::verification::{find_rule_checks, suspect, Evidence, Verdict};

/// Backlog ratio above which a run counts as unstable.
pub const STABILITY_RATIO_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimMetrics {
    pub arrived: u64,
    /// Messages delivered to their own sender's satisfaction.
    pub delivered: u64,
    /// Messages that came out of the channel more than once.
    pub duplicates: u64,
    /// Messages held by participants when they were excluded.
    pub dropped: u64,
    pub mean_delay: f64,
    pub max_delay: f64,
    /// Backlog after every transmitted round.
    pub backlog: Vec<u64>,
    pub transmitted_rounds: u64,
    pub inferred_rounds: u64,
    pub epochs: u64,
    pub verdicts: Vec<Verdict>,
    /// JSON Lines transcript of crypto runs.
    pub transcript: Option<String>,
}

impl SimMetrics {
    pub fn final_backlog(&self) -> u64 {
        self.backlog.last().copied().unwrap_or(0)
    }

    /// Final-quarter mean backlog over first-quarter mean (floored at 1).
    pub fn stability_ratio(&self) -> f64 {
        let n = self.backlog.len();
        if n < 4 {
            return 0.0;
        }
        let q = n / 4;
        let mean = |s: &[u64]| s.iter().sum::<u64>() as f64 / s.len() as f64;
        mean(&self.backlog[n - q..]) / mean(&self.backlog[..q]).max(1.0)
    }

    pub fn is_stable(&self) -> bool {
        self.stability_ratio() <= STABILITY_RATIO_LIMIT
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "arrived            {}", self.arrived);
        let _ = writeln!(s, "delivered          {}", self.delivered);
        let _ = writeln!(s, "duplicates         {}", self.duplicates);
        let _ = writeln!(s, "dropped            {}", self.dropped);
        let _ = writeln!(s, "mean delay         {:.3}", self.mean_delay);
        let _ = writeln!(s, "max delay          {:.3}", self.max_delay);
        let _ = writeln!(s, "final backlog      {}", self.final_backlog());
        let _ = writeln!(s, "epochs             {}", self.epochs);
        let _ = writeln!(s, "transmitted rounds {}", self.transmitted_rounds);
        let _ = writeln!(s, "inferred rounds    {}", self.inferred_rounds);
        let _ = writeln!(
            s,
            "stability ratio    {:.3} ({})",
            self.stability_ratio(),
            if self.is_stable() { "stable" } else { "unstable" }
        );
        let _ = writeln!(s, "verdicts           {}", self.verdicts.len());
        for v in &self.verdicts {
            let who = v.index.map_or("-".to_string(), |i| i.to_string());
            let _ = writeln!(
                s,
                "  epoch {} node {} participant {} {:?}",
                v.epoch, v.node, who, v.evidence
            );
        }
        s
    }
}

/// Fast transport that also runs the rule investigations, using the
/// recorded sends as ground truth for who put which message where.
#[derive(Debug, Default)]
struct AuditTransport {
    variant: Option<Variant>,
    sends: BTreeMap<u64, Vec<Send<MessageKey>>>,
    verdicts: Vec<Verdict>,
}

impl RoundTransport<CountingAlgebra> for AuditTransport {
    type Error = SictaError;

    fn begin_epoch(&mut self, _epoch: u64, _active: &[usize]) -> Result<(), SictaError> {
        self.sends.clear();
        Ok(())
    }

    fn transmit(
        &mut self,
        _alg: &CountingAlgebra,
        _tree: &ResolutionTree<Vec<MessageKey>, MessageKey>,
        _epoch: u64,
        node: u64,
        sends: &[Send<MessageKey>],
    ) -> Result<TransmitResult<Vec<MessageKey>>, SictaError> {
        let mut value: Vec<MessageKey> = sends.iter().map(|s| s.message).collect();
        value.sort_unstable();
        if self.variant == Some(Variant::Optimized) {
            self.sends.insert(node, sends.to_vec());
        }
        Ok(TransmitResult {
            value,
            excluded: Vec::new(),
        })
    }

    fn skipped(&mut self, epoch: u64, node: u64) -> Result<(), SictaError> {
        self.verdicts.push(Verdict {
            epoch,
            node,
            index: None,
            evidence: Evidence::BranchSkipped,
            rounds: vec![node],
            revealed: None,
        });
        Ok(())
    }

    fn end_epoch(
        &mut self,
        alg: &CountingAlgebra,
        tree: &ResolutionTree<Vec<MessageKey>, MessageKey>,
    ) -> Result<Vec<usize>, SictaError> {
        if self.variant != Some(Variant::Optimized) {
            return Ok(Vec::new());
        }
        let mut excluded = Vec::new();
        for check in find_rule_checks(alg, tree) {
            let sus = suspect(&check);
            let owner = self
                .sends
                .get(&check.round)
                .and_then(|s| s.iter().find(|s| s.message == sus))
                .map(|s| s.index);
            if let Some(i) = owner {
                self.verdicts.push(Verdict {
                    epoch: tree.epoch(),
                    node: check.node,
                    index: Some(i),
                    evidence: Evidence::RuleViolation,
                    rounds: vec![check.round],
                    revealed: Some(sus.payload().to_vec()),
                });
                excluded.push(i);
            }
        }
        Ok(excluded)
    }
}

fn key_from_payload(p: &[u8]) -> MessageKey {
    let mut tag = [0u8; 8];
    let mut seq = [0u8; 8];
    let off = p.len().saturating_sub(16);
    tag.copy_from_slice(&p[off..off + 8]);
    seq.copy_from_slice(&p[off + 8..off + 16]);
    MessageKey {
        tag: u64::from_be_bytes(tag),
        seq: u64::from_be_bytes(seq),
    }
}

struct Driver<'a> {
    config: &'a SimConfig,
    arrivals_rng: ChaCha20Rng,
    poisson: Option<Poisson<f64>>,
    seq: u64,
    clock: u64,
    metrics: SimMetrics,
    delay_sum: f64,
    seen: HashSet<MessageKey>,
}

impl Driver<'_> {
    /// Generate the arrivals of one transmitted round.
    fn arrivals<M: Clone + Ord>(&mut self, participants: &mut [ParticipantCrState<M>], wrap: &impl Fn(MessageKey) -> M) {
        let Some(poisson) = &self.poisson else { return };
        let k = poisson.sample(&mut self.arrivals_rng) as u64;
        for _ in 0..k {
            let pos = self.arrivals_rng.gen_range(0..participants.len());
            let t = self.clock as f64 - 1.0 + self.arrivals_rng.gen::<f64>();
            let key = MessageKey {
                tag: self.arrivals_rng.gen(),
                seq: self.seq,
            };
            self.seq += 1;
            if participants[pos].is_excluded() {
                continue;
            }
            participants[pos].enqueue(wrap(key), t);
            self.metrics.arrived += 1;
        }
    }

    fn run<A, T>(
        &mut self,
        alg: &A,
        participants: &mut [ParticipantCrState<A::Message>],
        transport: &mut T,
        wrap: impl Fn(MessageKey) -> A::Message,
        key_of: impl Fn(&A::Message) -> MessageKey,
    ) -> Result<(), SimError>
    where
        A: SlotAlgebra,
        T: RoundTransport<A>,
        SimError: From<T::Error>,
    {
        let mut coins = RngCoins(stream_rng(self.config.seed, "coins"));
        let mut epoch = 0u64;
        while self.clock < self.config.rounds {
            let mut runner = EpochRunner::<A>::new(epoch, self.config.variant, self.config.skip_threshold);
            self.metrics.epochs += 1;
            loop {
                match runner.step(alg, participants, &mut coins, transport)? {
                    Step::Round {
                        kind, deliveries, excluded, ..
                    } => {
                        if kind == PlanKind::Transmit {
                            self.clock += 1;
                            self.metrics.transmitted_rounds += 1;
                        } else {
                            self.metrics.inferred_rounds += 1;
                        }
                        for d in deliveries {
                            if !self.seen.insert(key_of(&d.message)) {
                                self.metrics.duplicates += 1;
                                continue;
                            }
                            if let (Some(_), Some(t)) = (d.participant, d.arrived_at) {
                                let delay = self.clock as f64 - t;
                                self.metrics.delivered += 1;
                                self.delay_sum += delay;
                                self.metrics.max_delay = self.metrics.max_delay.max(delay);
                            }
                        }
                        if !excluded.is_empty() {
                            self.account_exclusions(participants);
                        }
                        // Past the budget the open epoch is only drained.
                        if kind == PlanKind::Transmit && self.clock <= self.config.rounds {
                            self.arrivals(participants, &wrap);
                            self.sample_backlog(participants);
                        }
                    }
                    Step::Done { excluded, .. } => {
                        if !excluded.is_empty() {
                            self.account_exclusions(participants);
                        }
                        break;
                    }
                }
            }
            epoch += 1;
        }
        Ok(())
    }

    /// Messages of excluded participants leave the system.
    fn account_exclusions<M: Clone + Ord>(&mut self, participants: &[ParticipantCrState<M>]) {
        let live: u64 = participants.iter().map(|p| p.backlog() as u64).sum();
        let held = self.metrics.arrived - self.metrics.delivered - self.metrics.dropped;
        self.metrics.dropped += held.saturating_sub(live);
    }

    fn sample_backlog<M: Clone + Ord>(&mut self, participants: &[ParticipantCrState<M>]) {
        let live: u64 = participants.iter().map(|p| p.backlog() as u64).sum();
        self.metrics.backlog.push(live);
    }
}

/// Simulate the channel. Deterministic per configuration.
pub fn run_channel_sim(config: &SimConfig) -> Result<SimMetrics, SimError> {
    config.validate()?;
    let poisson = if config.lambda > 0.0 {
        Some(Poisson::new(config.lambda).map_err(|e| SimError::Config(e.to_string()))?)
    } else {
        None
    };
    let mut driver = Driver {
        config,
        arrivals_rng: stream_rng(config.seed, "arrivals"),
        poisson,
        seq: 0,
        clock: 0,
        metrics: SimMetrics::default(),
        delay_sum: 0.0,
        seen: HashSet::new(),
    };
    let strategy = |i: usize| config.adversaries.get(&i).copied().unwrap_or(StrategyTag::Honest);

    if config.crypto {
        let params = params_for_bits(config.modulus_bits)?;
        let keys = keygen(&params, config.n, &stream_bytes(config.seed, "keys"))?;
        let setup_seed = stream_bytes(config.seed, "setup").to_vec();
        let mut transport = CryptoTransport::new(
            params.clone(),
            keys,
            setup_seed,
            config.variant,
            config.skip_threshold,
            config.adversaries.clone(),
            stream_rng(config.seed, "proofs"),
        );
        let alg = GroupAlgebra::new(params.clone());
        let mut participants: Vec<ParticipantCrState<EncodedMessage>> = (1..=config.n)
            .map(|i| ParticipantCrState::new(i, strategy(i).split_behavior()))
            .collect();
        let wrap = |k: MessageKey| EncodedMessage::new(&params, &k.payload()).expect("16-byte payloads fit");
        driver.run(&alg, &mut participants, &mut transport, wrap, |m| key_from_payload(&m.payload))?;
        let (transcript, verdicts) = transport.finish();
        driver.metrics.verdicts = verdicts;
        driver.metrics.transcript = Some(transcript.to_jsonl());
    } else {
        let mut transport = AuditTransport {
            variant: Some(config.variant),
            ..Default::default()
        };
        let mut participants: Vec<ParticipantCrState<MessageKey>> = (1..=config.n)
            .map(|i| ParticipantCrState::new(i, strategy(i).split_behavior()))
            .collect();
        driver.run(&CountingAlgebra, &mut participants, &mut transport, |k| k, |k| *k)?;
        driver.metrics.verdicts = transport.verdicts;
    }

    let mut m = driver.metrics;
    if m.delivered > 0 {
        m.mean_delay = driver.delay_sum / m.delivered as f64;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_delivers_nothing() {
        let m = run_channel_sim(&SimConfig {
            lambda: 0.0,
            rounds: 500,
            ..Default::default()
        })
        .unwrap();
        assert_eq!((m.arrived, m.delivered, m.inferred_rounds), (0, 0, 0));
        assert_eq!(m.transmitted_rounds, 500);
        assert!(m.backlog.iter().all(|b| *b == 0));
    }

    #[test]
    fn honest_runs_deliver_everything_once() {
        for variant in [Variant::Standard, Variant::Optimized] {
            let m = run_channel_sim(&SimConfig {
                n: 16,
                lambda: 0.5,
                rounds: 5_000,
                variant,
                seed: 3,
                ..Default::default()
            })
            .unwrap();
            assert_eq!(m.duplicates, 0);
            assert_eq!(m.arrived, m.delivered + m.final_backlog());
            assert!(m.verdicts.is_empty());
            assert!(m.delivered > 2_000);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let c = SimConfig {
            rounds: 2_000,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(run_channel_sim(&c).unwrap(), run_channel_sim(&c).unwrap());
    }

    #[test]
    fn fast_mode_flags_rule_violator() {
        let m = run_channel_sim(&SimConfig {
            n: 6,
            lambda: 0.6,
            rounds: 3_000,
            adversaries: BTreeMap::from([(3, StrategyTag::RuleViolatorTransmit)]),
            ..Default::default()
        })
        .unwrap();
        assert!(!m.verdicts.is_empty());
        assert!(m
            .verdicts
            .iter()
            .all(|v| v.index == Some(3) && v.evidence == Evidence::RuleViolation));
    }

    #[test]
    fn crypto_and_fast_modes_agree() {
        let base = SimConfig {
            n: 5,
            lambda: 0.6,
            rounds: 40,
            seed: 21,
            ..Default::default()
        };
        let fast = run_channel_sim(&base).unwrap();
        let crypto = run_channel_sim(&SimConfig { crypto: true, ..base }).unwrap();
        assert_eq!(fast.transmitted_rounds, crypto.transmitted_rounds);
        assert_eq!(fast.inferred_rounds, crypto.inferred_rounds);
        assert_eq!(fast.backlog, crypto.backlog);
        assert_eq!(fast.delivered, crypto.delivered);
        assert!(crypto.verdicts.is_empty());
        let report = super::super::replay_verify(crypto.transcript.as_deref().unwrap(), None).unwrap();
        assert!(report.accepted, "{:?}", report.problems);
    }
}
