//! JSON Lines transcripts and their offline verification.
//!
//! A transcript starts with a `header` record and ends with an `end` record
//! that counts the records before it; a file without one is truncated.
//! [`replay_verify`] rebuilds every resolution tree from the recorded
//! ciphertexts, recomputes every combined value, checks every proof and
//! every verdict, and stops at the first discrepancy.
//!
//! Bases are recorded but can only be recomputed with the source-group key
//! file. Without it the verifier trusts the recorded bases; every other
//! check is still performed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::group::{GroupElement, GroupError, GroupParams, ParamsRecord, SlotOutcome};
use crate::pad::{derive_bases, ParticipantKeys, RoundId, SourceKey, TransparentBackend};
use crate::sicta::{EncodedMessage, GroupAlgebra, NodeStatus, PlanKind, ResolutionTree, SlotAlgebra, Variant};
use crate::verification::{
    find_rule_checks, investigate_rule_violation, rule_statement, suspect, verify_round, Evidence, ObligationSet,
    RuleCase, RoundLedger, Verdict,
};
use crate::zkp::{OrProof, Proof};

pub const TRANSCRIPT_VERSION: u32 = 1;
pub const KEY_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub index: usize,
    pub y: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofRecord {
    pub kind: String,
    pub index: usize,
    pub components: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeRecord {
    Idle,
    Collision,
    /// The round was discarded because somebody failed its proof.
    Lost,
    Message(String),
}

impl OutcomeRecord {
    pub fn from_outcome(o: &SlotOutcome<EncodedMessage>) -> Self {
        match o {
            SlotOutcome::Idle => OutcomeRecord::Idle,
            SlotOutcome::Collision => OutcomeRecord::Collision,
            SlotOutcome::Message(m) => OutcomeRecord::Message(hex::encode(&m.payload)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    Header {
        version: u32,
        params: ParamsRecord,
        roster: Vec<RosterEntry>,
        setup_seed: String,
        variant: Variant,
        skip_threshold: Option<u32>,
    },
    EpochStart {
        epoch: u64,
        roster: Vec<usize>,
    },
    Round {
        epoch: u64,
        node: u64,
        attempt: u32,
        roster: Vec<usize>,
        bases: Vec<String>,
        ciphertexts: Vec<String>,
        /// One entry per roster member; empty for the root.
        proofs: Vec<Option<ProofRecord>>,
        combined: String,
        outcome: OutcomeRecord,
    },
    Inferred {
        epoch: u64,
        node: u64,
        combined: String,
        outcome: OutcomeRecord,
    },
    Verdict {
        epoch: u64,
        node: u64,
        index: Option<usize>,
        evidence: Evidence,
        rounds: Vec<u64>,
        payload: Option<String>,
    },
    Investigation {
        epoch: u64,
        node: u64,
        case: RuleCase,
        round: u64,
        m_small: String,
        m_large: String,
        participants: Vec<usize>,
        proofs: Vec<Option<ProofRecord>>,
    },
    EpochEnd {
        epoch: u64,
        delivered: Vec<String>,
    },
    End {
        records: u64,
    },
}

impl Record {
    fn kind(&self) -> &'static str {
        match self {
            Record::Header { .. } => "header",
            Record::EpochStart { .. } => "epoch_start",
            Record::Round { .. } => "round",
            Record::Inferred { .. } => "inferred",
            Record::Verdict { .. } => "verdict",
            Record::Investigation { .. } => "investigation",
            Record::EpochEnd { .. } => "epoch_end",
            Record::End { .. } => "end",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    records: Vec<Record>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    /// Append the `end` record.
    pub fn close(&mut self) {
        let n = self.records.len() as u64;
        self.records.push(Record::End { records: n });
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TranscriptError> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(line).map_err(|e| TranscriptError::Json {
                line: n + 1,
                msg: e.to_string(),
            })?;
            records.push(r);
        }
        Ok(Transcript { records })
    }
}

/// Source-group keys `ȳ_i`, needed to recompute bases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFile {
    pub version: u32,
    pub sources: BTreeMap<usize, String>,
}

impl KeyFile {
    pub fn from_keys(params: &GroupParams, keys: &[ParticipantKeys]) -> Self {
        KeyFile {
            version: KEY_FILE_VERSION,
            sources: keys
                .iter()
                .map(|k| (k.index, params.scalar_hex(k.source.exponent())))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("key file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TranscriptError> {
        let kf: KeyFile = serde_json::from_str(text).map_err(|e| TranscriptError::KeyFile(e.to_string()))?;
        if kf.version != KEY_FILE_VERSION {
            return Err(TranscriptError::KeyFile(format!("unsupported key file version {}", kf.version)));
        }
        Ok(kf)
    }

    fn backend(&self, params: &GroupParams) -> Result<TransparentBackend, TranscriptError> {
        let mut sources = BTreeMap::new();
        for (&i, h) in &self.sources {
            let x = params
                .scalar_from_hex(h)
                .map_err(|e| TranscriptError::KeyFile(format!("participant {i}: {e}")))?;
            sources.insert(i, SourceKey::transparent(x));
        }
        Ok(TransparentBackend::from_sources(sources))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("line {line}: not a transcript record: {msg}")]
    Json { line: usize, msg: String },
    #[error("transcript version {0} is not supported (expected {TRANSCRIPT_VERSION})")]
    Version(u32),
    #[error("transcript does not start with a header")]
    MissingHeader,
    #[error("transcript is truncated: {0}")]
    Truncated(String),
    #[error("record {record}: {msg}")]
    Structure { record: usize, msg: String },
    #[error("bad group parameters: {0}")]
    Params(#[from] GroupError),
    #[error("bad key file: {0}")]
    KeyFile(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EpochSummary {
    pub epoch: u64,
    pub transmitted: Vec<u64>,
    pub inferred: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayReport {
    pub accepted: bool,
    /// Verdicts confirmed by the replay, in transcript order.
    pub verdicts: Vec<Verdict>,
    pub problems: Vec<String>,
    pub transmitted: usize,
    pub inferred: usize,
    pub delivered: Vec<Vec<u8>>,
    pub epochs: Vec<EpochSummary>,
    pub bases_checked: bool,
}

enum Stop {
    Fatal(TranscriptError),
    Reject(String),
}

impl From<TranscriptError> for Stop {
    fn from(e: TranscriptError) -> Self {
        Stop::Fatal(e)
    }
}

type Step<T> = Result<T, Stop>;

fn reject<T>(msg: impl Into<String>) -> Step<T> {
    Err(Stop::Reject(msg.into()))
}

struct Replay<'a> {
    params: GroupParams,
    alg: GroupAlgebra,
    records: &'a [Record],
    pos: usize,
    public_keys: BTreeMap<usize, GroupElement>,
    roster: Vec<usize>,
    setup_seed: Vec<u8>,
    variant: Variant,
    skip_threshold: Option<u32>,
    backend: Option<TransparentBackend>,
    report: ReplayReport,
}

impl Replay<'_> {
    fn next(&mut self, what: &str) -> Step<&Record> {
        let r = self.records.get(self.pos).ok_or_else(|| {
            Stop::Fatal(TranscriptError::Truncated(format!("expected {what} at record {}", self.pos)))
        })?;
        self.pos += 1;
        Ok(r)
    }

    fn structure<T>(&self, msg: impl Into<String>) -> Step<T> {
        Err(Stop::Fatal(TranscriptError::Structure {
            record: self.pos.saturating_sub(1),
            msg: msg.into(),
        }))
    }

    fn elem(&self, h: &str, what: &str) -> Step<GroupElement> {
        self.params
            .element_from_hex(h)
            .or_else(|e| reject(format!("record {}: {what}: {e}", self.pos - 1)))
    }

    fn expect_verdict(&mut self, want: Verdict) -> Step<()> {
        let r = self.next("verdict")?.clone();
        let Record::Verdict {
            epoch,
            node,
            index,
            evidence,
            rounds,
            payload,
        } = r
        else {
            return reject(format!(
                "record {}: expected a {:?} verdict against {:?}, found {}",
                self.pos - 1,
                want.evidence,
                want.index,
                r.kind()
            ));
        };
        let got = Verdict {
            epoch,
            node,
            index,
            evidence,
            rounds,
            revealed: match payload {
                Some(h) => match hex::decode(&h) {
                    Ok(b) => Some(b),
                    Err(_) => return reject(format!("record {}: bad payload hex", self.pos - 1)),
                },
                None => None,
            },
        };
        if got != want {
            return reject(format!("record {}: verdict {got:?} does not match replay {want:?}", self.pos - 1));
        }
        self.report.verdicts.push(got);
        Ok(())
    }

    fn run(&mut self) -> Step<()> {
        let mut expected_epoch = 0u64;
        loop {
            match self.next("epoch start or end")?.clone() {
                Record::End { .. } => return Ok(()),
                Record::EpochStart { epoch, roster } => {
                    if epoch != expected_epoch {
                        return self.structure(format!("epoch {epoch} out of order, expected {expected_epoch}"));
                    }
                    if roster != self.roster {
                        return reject(format!(
                            "epoch {epoch}: roster {roster:?} differs from the replayed roster {:?}",
                            self.roster
                        ));
                    }
                    self.epoch(epoch)?;
                    expected_epoch += 1;
                }
                other => return self.structure(format!("expected epoch_start, found {}", other.kind())),
            }
        }
    }

    fn epoch(&mut self, epoch: u64) -> Step<()> {
        let mut tree: ResolutionTree<GroupElement, EncodedMessage> = ResolutionTree::new(epoch, self.skip_threshold);
        let mut ledger = RoundLedger::new();
        while let Some(plan) = tree.schedule_next() {
            let node = plan.node;
            let status = match plan.kind {
                PlanKind::Transmit => {
                    let combined = self.transmitted_round(epoch, node, &mut ledger)?;
                    self.report.transmitted += 1;
                    tree.apply_transmitted(&self.alg, node, combined)
                        .or_else(|e| self.structure(e.to_string()))?
                        .0
                }
                PlanKind::Infer => {
                    let (value, status, outcome) = tree
                        .apply_inferred(&self.alg, node)
                        .or_else(|e| self.structure(e.to_string()))?;
                    let r = self.next("inferred round")?.clone();
                    let Record::Inferred {
                        epoch: e,
                        node: n,
                        combined,
                        outcome: o,
                    } = r
                    else {
                        return self.structure(format!("expected inferred node {node}, found {}", r.kind()));
                    };
                    if (e, n) != (epoch, node) {
                        return self.structure(format!("expected inferred node {node} of epoch {epoch}, found {n}"));
                    }
                    if self.elem(&combined, "combined value")? != value {
                        return reject(format!("epoch {epoch} node {node}: inferred value does not match C_parent / C_sibling"));
                    }
                    if o != OutcomeRecord::from_outcome(&outcome) {
                        return reject(format!("epoch {epoch} node {node}: recorded outcome does not match"));
                    }
                    self.report.inferred += 1;
                    status
                }
            };
            if status == NodeStatus::Skipped {
                self.expect_verdict(Verdict {
                    epoch,
                    node,
                    index: None,
                    evidence: Evidence::BranchSkipped,
                    rounds: vec![node],
                    revealed: None,
                })?;
            }
        }
        if self.variant == Variant::Optimized {
            self.investigations(epoch, &tree, &ledger)?;
        }
        let delivered: Vec<Vec<u8>> = tree
            .nodes()
            .filter_map(|(_, rec)| match &rec.outcome {
                SlotOutcome::Message(m) => Some(m.payload.clone()),
                _ => None,
            })
            .collect();
        let r = self.next("epoch end")?.clone();
        let Record::EpochEnd { epoch: e, delivered: d } = r else {
            return self.structure(format!("expected epoch_end, found {}", r.kind()));
        };
        if e != epoch {
            return self.structure(format!("epoch_end for {e} inside epoch {epoch}"));
        }
        let replayed: Vec<String> = delivered.iter().map(hex::encode).collect();
        if d != replayed {
            return reject(format!("epoch {epoch}: delivered messages do not match the replay"));
        }
        self.report.delivered.extend(delivered);
        self.report.epochs.push(EpochSummary {
            epoch,
            transmitted: tree.transmitted_ids(),
            inferred: tree.inferred_ids(),
        });
        Ok(())
    }

    /// Replay every attempt of one transmitted node; returns the accepted
    /// combined value.
    fn transmitted_round(&mut self, epoch: u64, node: u64, ledger: &mut RoundLedger) -> Step<GroupElement> {
        for attempt in 0u32.. {
            let r = self.next("round")?.clone();
            let Record::Round {
                epoch: e,
                node: n,
                attempt: a,
                roster,
                bases,
                ciphertexts,
                proofs,
                combined,
                outcome,
            } = r
            else {
                return self.structure(format!("expected round {node} of epoch {epoch}, found {}", r.kind()));
            };
            if (e, n, a) != (epoch, node, attempt) {
                return self.structure(format!(
                    "expected epoch {epoch} node {node} attempt {attempt}, found epoch {e} node {n} attempt {a}"
                ));
            }
            let here = format!("epoch {epoch} node {node} attempt {attempt}");
            if roster != self.roster {
                return reject(format!("{here}: roster {roster:?} differs from the replayed roster {:?}", self.roster));
            }
            if bases.len() != roster.len() || ciphertexts.len() != roster.len() {
                return reject(format!("{here}: expected {} bases and ciphertexts", roster.len()));
            }
            let bases: Vec<GroupElement> = bases.iter().map(|b| self.elem(b, "base")).collect::<Step<_>>()?;
            let cts: Vec<GroupElement> = ciphertexts.iter().map(|c| self.elem(c, "ciphertext")).collect::<Step<_>>()?;
            if let Some(backend) = &self.backend {
                let round = RoundId::new(epoch, node, attempt);
                let want = match derive_bases(&self.params, backend, &self.setup_seed, &roster, round) {
                    Ok(b) => b,
                    Err(e) => return reject(format!("{here}: cannot recompute bases: {e}")),
                };
                if let Some(pos) = (0..roster.len()).find(|&k| want[k] != bases[k]) {
                    return reject(format!("{here}: base of participant {} does not match the key file", roster[pos]));
                }
            }
            let value = self.params.product(&cts);
            if self.elem(&combined, "combined value")? != value {
                return reject(format!("{here}: combined value is not the product of the ciphertexts"));
            }
            for ((&i, b), c) in roster.iter().zip(bases).zip(cts) {
                ledger.record(node, i, b, c);
            }

            let obligations = match ObligationSet::build(&self.params, ledger, node, &roster, &self.public_keys) {
                Ok(o) => o,
                Err(e) => return reject(format!("{here}: {e}")),
            };
            let violators = match &obligations {
                None => {
                    if !proofs.is_empty() {
                        return reject(format!("{here}: proofs attached to a round without obligations"));
                    }
                    Vec::new()
                }
                Some(obl) => {
                    if proofs.len() != roster.len() {
                        return reject(format!("{here}: expected {} proof slots, found {}", roster.len(), proofs.len()));
                    }
                    let mut parsed: BTreeMap<usize, Option<OrProof>> = BTreeMap::new();
                    for (&i, p) in roster.iter().zip(&proofs) {
                        let proof = match p {
                            None => None,
                            Some(p) if p.index != i => {
                                return reject(format!("{here}: proof for {} in the slot of {i}", p.index));
                            }
                            Some(p) => match Proof::from_components(&self.params, &p.kind, &p.components) {
                                Ok(Proof::Or2(o)) => Some(o),
                                // Unparseable or wrong-kind proofs count as invalid.
                                _ => Some(corrupt_placeholder(&self.params)),
                            },
                        };
                        parsed.insert(i, proof);
                    }
                    verify_round(&self.params, obl, &parsed)
                }
            };
            let want_outcome = if violators.is_empty() {
                OutcomeRecord::from_outcome(&self.alg.classify(&value))
            } else {
                OutcomeRecord::Lost
            };
            if outcome != want_outcome {
                return reject(format!("{here}: recorded outcome {outcome:?}, replay gives {want_outcome:?}"));
            }
            if violators.is_empty() {
                return Ok(value);
            }
            for (i, evidence) in violators {
                self.expect_verdict(Verdict {
                    epoch,
                    node,
                    index: Some(i),
                    evidence,
                    rounds: vec![node],
                    revealed: None,
                })?;
                self.roster.retain(|r| *r != i);
            }
            ledger.clear_round(node);
        }
        unreachable!("attempt counter exhausted")
    }

    fn investigations(
        &mut self,
        epoch: u64,
        tree: &ResolutionTree<GroupElement, EncodedMessage>,
        ledger: &RoundLedger,
    ) -> Step<()> {
        for check in find_rule_checks(&self.alg, tree) {
            let r = self.next("investigation")?.clone();
            let Record::Investigation {
                epoch: e,
                node,
                case,
                round,
                m_small,
                m_large,
                participants,
                proofs,
            } = r
            else {
                return reject(format!(
                    "epoch {epoch}: node {} needs a rule investigation, found {}",
                    check.node,
                    r.kind()
                ));
            };
            let here = format!("epoch {epoch} investigation at node {}", check.node);
            if (e, node, case, round) != (epoch, check.node, check.case, check.round)
                || m_small != hex::encode(&check.small.payload)
                || m_large != hex::encode(&check.large.payload)
            {
                return reject(format!("{here}: recorded investigation does not match the replay"));
            }
            let sus = suspect(&check);
            let mut statements = BTreeMap::new();
            for &i in &self.roster {
                if let Ok(s) = rule_statement(&self.params, ledger, check.round, &sus.element, i, &self.public_keys[&i]) {
                    statements.insert(i, s);
                }
            }
            let expected: Vec<usize> = statements.keys().copied().collect();
            if participants != expected || proofs.len() != expected.len() {
                return reject(format!("{here}: participants {participants:?}, replay expects {expected:?}"));
            }
            let mut parsed = BTreeMap::new();
            for (&i, p) in expected.iter().zip(&proofs) {
                let proof = match p {
                    Some(p) if p.index == i => match Proof::from_components(&self.params, &p.kind, &p.components) {
                        Ok(Proof::NeqDl(q)) => Some(q),
                        _ => None,
                    },
                    _ => None,
                };
                parsed.insert(i, proof);
            }
            let verdicts =
                investigate_rule_violation(&self.params, epoch, check.node, check.round, &statements, &parsed, &sus.payload);
            for v in verdicts {
                let i = v.index.expect("rule verdicts name a participant");
                self.expect_verdict(v)?;
                self.roster.retain(|r| *r != i);
            }
        }
        Ok(())
    }
}

/// Stand-in for a proof that could not be parsed: fails verification.
fn corrupt_placeholder(params: &GroupParams) -> OrProof {
    let one = params.identity();
    let zero = params.scalar_from_u64(0);
    let b = crate::zkp::EqDlProof {
        commit_g: one.clone(),
        commit_base: one,
        challenge: zero.clone(),
        response: zero,
    };
    OrProof {
        branches: [b.clone(), b],
    }
}

/// Check a transcript offline. Malformed, truncated or unsupported files
/// are errors; a well-formed transcript that fails any check comes back
/// with `accepted == false` and the first problem found.
pub fn replay_verify(text: &str, keys: Option<&KeyFile>) -> Result<ReplayReport, TranscriptError> {
    let t = Transcript::parse(text)?;
    let records = t.records();
    let Some(Record::Header {
        version,
        params,
        roster,
        setup_seed,
        variant,
        skip_threshold,
    }) = records.first()
    else {
        return Err(TranscriptError::MissingHeader);
    };
    if *version != TRANSCRIPT_VERSION {
        return Err(TranscriptError::Version(*version));
    }
    match records.last() {
        Some(Record::End { records: n }) if *n as usize == records.len() - 1 => {}
        Some(Record::End { records: n }) => {
            return Err(TranscriptError::Truncated(format!(
                "end record counts {n} records but {} precede it",
                records.len() - 1
            )))
        }
        _ => return Err(TranscriptError::Truncated("no end record".into())),
    }
    if let Some(pos) = records[..records.len() - 1]
        .iter()
        .position(|r| matches!(r, Record::End { .. }))
    {
        return Err(TranscriptError::Structure {
            record: pos,
            msg: "end record before the end".into(),
        });
    }
    if let Some(pos) = records[1..].iter().position(|r| matches!(r, Record::Header { .. })) {
        return Err(TranscriptError::Structure {
            record: pos + 1,
            msg: "second header".into(),
        });
    }

    let params = GroupParams::from_record(params)?;
    let mut public_keys = BTreeMap::new();
    for entry in roster {
        let y = params.element_from_hex(&entry.y).map_err(|e| TranscriptError::Structure {
            record: 0,
            msg: format!("public key of participant {}: {e}", entry.index),
        })?;
        if public_keys.insert(entry.index, y).is_some() {
            return Err(TranscriptError::Structure {
                record: 0,
                msg: format!("participant {} listed twice", entry.index),
            });
        }
    }
    let setup_seed = hex::decode(setup_seed).map_err(|e| TranscriptError::Structure {
        record: 0,
        msg: format!("setup seed: {e}"),
    })?;
    let backend = keys.map(|k| k.backend(&params)).transpose()?;

    let mut replay = Replay {
        alg: GroupAlgebra::new(params.clone()),
        params,
        records,
        pos: 1,
        roster: roster.iter().map(|e| e.index).collect(),
        public_keys,
        setup_seed,
        variant: *variant,
        skip_threshold: *skip_threshold,
        report: ReplayReport {
            bases_checked: backend.is_some(),
            ..Default::default()
        },
        backend,
    };
    match replay.run() {
        Ok(()) => {
            replay.report.accepted = true;
            Ok(replay.report)
        }
        Err(Stop::Reject(msg)) => {
            replay.report.accepted = false;
            replay.report.problems.push(msg);
            Ok(replay.report)
        }
        Err(Stop::Fatal(e)) => Err(e),
    }
}
