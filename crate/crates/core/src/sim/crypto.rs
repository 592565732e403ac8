//! Full crypto path: per-round bases, ciphertexts and proofs, exclusion of
//! disruptors with round replay, and end-of-epoch rule investigations.
//! Every event is appended to a transcript.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha20Rng;

use super::transcript::{OutcomeRecord, ProofRecord, Record, RosterEntry, Transcript, TRANSCRIPT_VERSION};
use super::{SimError, StrategyTag};
use crate::group::{GroupElement, GroupParams, SlotOutcome};
use crate::pad::{derive_bases, form_ciphertext, ParticipantKeys, RoundId, TransparentBackend};
use crate::sicta::{
    EncodedMessage, GroupAlgebra, ResolutionTree, RoundTransport, SlotAlgebra, Send, TransmitResult,
    Variant,
};
use crate::verification::{
    answer_investigation, find_rule_checks, investigate_rule_violation, rule_statement, suspect, verify_round,
    Evidence, ObligationSet, RoundLedger, Verdict,
};
use crate::zkp::{forge_or2, OrProof, Proof};

pub struct CryptoTransport {
    params: GroupParams,
    keys: BTreeMap<usize, ParticipantKeys>,
    public_keys: BTreeMap<usize, GroupElement>,
    backend: TransparentBackend,
    setup_seed: Vec<u8>,
    variant: Variant,
    strategies: BTreeMap<usize, StrategyTag>,
    roster: Vec<usize>,
    ledger: RoundLedger,
    rng: ChaCha20Rng,
    transcript: Transcript,
    verdicts: Vec<Verdict>,
    /// Adversaries whose one-shot deviation has been used.
    struck: BTreeSet<usize>,
    cancel_factor: BTreeMap<usize, GroupElement>,
}

impl CryptoTransport {
    pub fn new(
        params: GroupParams,
        keys: Vec<ParticipantKeys>,
        setup_seed: Vec<u8>,
        variant: Variant,
        skip_threshold: Option<u32>,
        strategies: BTreeMap<usize, StrategyTag>,
        rng: ChaCha20Rng,
    ) -> Self {
        let backend = TransparentBackend::new(&keys);
        let roster: Vec<usize> = keys.iter().map(|k| k.index).collect();
        let public_keys: BTreeMap<usize, GroupElement> =
            keys.iter().map(|k| (k.index, k.public.clone())).collect();
        let mut transcript = Transcript::new();
        transcript.push(Record::Header {
            version: TRANSCRIPT_VERSION,
            params: params.to_record(),
            roster: keys
                .iter()
                .map(|k| RosterEntry {
                    index: k.index,
                    y: params.element_hex(&k.public),
                })
                .collect(),
            setup_seed: hex::encode(&setup_seed),
            variant,
            skip_threshold,
        });
        CryptoTransport {
            keys: keys.into_iter().map(|k| (k.index, k)).collect(),
            public_keys,
            backend,
            setup_seed,
            variant,
            strategies,
            roster,
            ledger: RoundLedger::new(),
            rng,
            transcript,
            verdicts: Vec::new(),
            struck: BTreeSet::new(),
            cancel_factor: BTreeMap::new(),
            params,
        }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn roster(&self) -> &[usize] {
        &self.roster
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }

    /// Close the transcript.
    pub fn finish(self) -> (Transcript, Vec<Verdict>) {
        let mut t = self.transcript;
        t.close();
        (t, self.verdicts)
    }

    fn strategy(&self, i: usize) -> StrategyTag {
        self.strategies.get(&i).copied().unwrap_or_default()
    }

    fn verdict(&mut self, v: Verdict) {
        self.transcript.push(Record::Verdict {
            epoch: v.epoch,
            node: v.node,
            index: v.index,
            evidence: v.evidence,
            rounds: v.rounds.clone(),
            payload: v.revealed.as_ref().map(hex::encode),
        });
        self.verdicts.push(v);
    }

    /// A payload no honest participant uses: all ones.
    fn injected_message(&self) -> GroupElement {
        let len = self.params.payload_len();
        let mut p = vec![0xffu8; len];
        let excess = (len as u32 * 8).saturating_sub(self.params.payload_bits());
        if len > 0 {
            p[0] &= 0xffu8 >> excess;
        }
        self.params
            .encode_message(&p)
            .expect("all-ones payload fits the payload width")
    }

    /// Extra factor an adversary multiplies into its ciphertext at `node`,
    /// and whether it is deviating in this round.
    fn deviation(&mut self, i: usize, node: u64) -> Option<GroupElement> {
        match self.strategy(i) {
            StrategyTag::InjectorMidEpoch if node != 1 && !self.struck.contains(&i) => {
                self.struck.insert(i);
                Some(self.injected_message())
            }
            StrategyTag::ExampleTwoCanceller if node == 2 || node == 6 => {
                let e = match self.cancel_factor.get(&i) {
                    Some(e) => e.clone(),
                    None => {
                        let mut e = self.params.random_element(&mut self.rng);
                        while e.is_identity() {
                            e = self.params.random_element(&mut self.rng);
                        }
                        self.cancel_factor.insert(i, e.clone());
                        e
                    }
                };
                Some(if node == 2 { e } else { self.params.inv(&e) })
            }
            StrategyTag::InvalidProof if node != 1 && !self.struck.contains(&i) => {
                self.struck.insert(i);
                Some(self.params.identity())
            }
            _ => None,
        }
    }

    fn make_proof(&mut self, obl: &ObligationSet, i: usize, deviating: bool) -> Option<OrProof> {
        let x = self.keys[&i].secret().clone();
        match (self.strategy(i), deviating) {
            (StrategyTag::InvalidProof, true) => {
                let mut p = obl.prove(&self.params, i, &x, &mut self.rng).ok()?;
                let one = self.params.scalar_from_u64(1);
                p.branches[0].response = self.params.scalar_add(&p.branches[0].response, &one);
                Some(p)
            }
            (_, true) => Some(forge_or2(&self.params, &obl.statements[&i], &mut self.rng)),
            (_, false) => obl.prove(&self.params, i, &x, &mut self.rng).ok(),
        }
    }

    fn proof_record(&self, index: usize, proof: Proof) -> ProofRecord {
        ProofRecord {
            kind: proof.kind().to_string(),
            index,
            components: proof.components(&self.params),
        }
    }
}

impl RoundTransport<GroupAlgebra> for CryptoTransport {
    type Error = SimError;

    fn begin_epoch(&mut self, epoch: u64, _active: &[usize]) -> Result<(), SimError> {
        self.ledger = RoundLedger::new();
        self.transcript.push(Record::EpochStart {
            epoch,
            roster: self.roster.clone(),
        });
        Ok(())
    }

    fn transmit(
        &mut self,
        alg: &GroupAlgebra,
        _tree: &ResolutionTree<GroupElement, EncodedMessage>,
        epoch: u64,
        node: u64,
        sends: &[Send<EncodedMessage>],
    ) -> Result<TransmitResult<GroupElement>, SimError> {
        let messages: BTreeMap<usize, &GroupElement> = sends.iter().map(|s| (s.index, &s.message.element)).collect();
        let mut excluded = Vec::new();
        for attempt in 0u32.. {
            let round = RoundId::new(epoch, node, attempt);
            let roster = self.roster.clone();
            let bases = derive_bases(&self.params, &self.backend, &self.setup_seed, &roster, round)
                ?;
            let mut ciphertexts = Vec::with_capacity(roster.len());
            let mut deviating = BTreeSet::new();
            for (&i, base) in roster.iter().zip(&bases) {
                let msg = messages.get(&i).copied();
                let mut o = form_ciphertext(&self.params, &self.keys[&i], round, base, msg).value;
                if let Some(extra) = self.deviation(i, node) {
                    o = self.params.mul(&o, &extra);
                    deviating.insert(i);
                }
                self.ledger.record(node, i, base.clone(), o.clone());
                ciphertexts.push(o);
            }
            let combined = self.params.product(&ciphertexts);

            let mut proofs: BTreeMap<usize, Option<OrProof>> = BTreeMap::new();
            let obligations = ObligationSet::build(&self.params, &self.ledger, node, &roster, &self.public_keys)
                ?;
            let violators = match &obligations {
                Some(obl) => {
                    for &i in &roster {
                        let p = self.make_proof(obl, i, deviating.contains(&i));
                        proofs.insert(i, p);
                    }
                    verify_round(&self.params, obl, &proofs)
                }
                None => Vec::new(),
            };

            let outcome = if violators.is_empty() {
                OutcomeRecord::from_outcome(&alg.classify(&combined))
            } else {
                OutcomeRecord::Lost
            };
            let proof_records = if obligations.is_some() {
                roster
                    .iter()
                    .map(|i| proofs[i].clone().map(|p| self.proof_record(*i, Proof::Or2(p))))
                    .collect()
            } else {
                Vec::new()
            };
            self.transcript.push(Record::Round {
                epoch,
                node,
                attempt,
                roster: roster.clone(),
                bases: bases.iter().map(|b| self.params.element_hex(b)).collect(),
                ciphertexts: ciphertexts.iter().map(|c| self.params.element_hex(c)).collect(),
                proofs: proof_records,
                combined: self.params.element_hex(&combined),
                outcome,
            });
            if violators.is_empty() {
                return Ok(TransmitResult {
                    value: combined,
                    excluded,
                });
            }
            for (i, evidence) in violators {
                self.verdict(Verdict {
                    epoch,
                    node,
                    index: Some(i),
                    evidence,
                    rounds: vec![node],
                    revealed: None,
                });
                self.roster.retain(|r| *r != i);
                excluded.push(i);
            }
            self.ledger.clear_round(node);
        }
        unreachable!("attempt counter exhausted")
    }

    fn inferred(
        &mut self,
        epoch: u64,
        node: u64,
        value: &GroupElement,
        outcome: &SlotOutcome<EncodedMessage>,
    ) -> Result<(), SimError> {
        self.transcript.push(Record::Inferred {
            epoch,
            node,
            combined: self.params.element_hex(value),
            outcome: OutcomeRecord::from_outcome(outcome),
        });
        Ok(())
    }

    fn skipped(&mut self, epoch: u64, node: u64) -> Result<(), SimError> {
        self.verdict(Verdict {
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
        alg: &GroupAlgebra,
        tree: &ResolutionTree<GroupElement, EncodedMessage>,
    ) -> Result<Vec<usize>, SimError> {
        let epoch = tree.epoch();
        let mut excluded = Vec::new();
        if self.variant == Variant::Optimized {
            for check in find_rule_checks(alg, tree) {
                let sus = suspect(&check);
                let mut statements = BTreeMap::new();
                for &i in &self.roster {
                    if let Ok(s) = rule_statement(
                        &self.params,
                        &self.ledger,
                        check.round,
                        &sus.element,
                        i,
                        &self.public_keys[&i],
                    ) {
                        statements.insert(i, s);
                    }
                }
                let mut proofs = BTreeMap::new();
                for (&i, stmt) in &statements {
                    let x = self.keys[&i].secret().clone();
                    proofs.insert(i, answer_investigation(&self.params, stmt, &x, &mut self.rng));
                }
                self.transcript.push(Record::Investigation {
                    epoch,
                    node: check.node,
                    case: check.case,
                    round: check.round,
                    m_small: hex::encode(&check.small.payload),
                    m_large: hex::encode(&check.large.payload),
                    participants: statements.keys().copied().collect(),
                    proofs: proofs
                        .iter()
                        .map(|(i, p)| p.clone().map(|p| self.proof_record(*i, Proof::NeqDl(p))))
                        .collect(),
                });
                let found = investigate_rule_violation(
                    &self.params,
                    epoch,
                    check.node,
                    check.round,
                    &statements,
                    &proofs,
                    &sus.payload,
                );
                for v in found {
                    let i = v.index.expect("rule verdicts name a participant");
                    self.roster.retain(|r| *r != i);
                    excluded.push(i);
                    self.verdict(v);
                }
            }
        }
        let delivered = tree
            .nodes()
            .filter_map(|(_, rec)| match &rec.outcome {
                SlotOutcome::Message(m) => Some(hex::encode(&m.payload)),
                _ => None,
            })
            .collect();
        self.transcript.push(Record::EpochEnd { epoch, delivered });
        Ok(excluded)
    }
}
