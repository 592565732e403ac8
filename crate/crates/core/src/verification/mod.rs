//! Proof obligations, disruptor detection and the skip policy.
//!
//! * Every transmitted non-root round carries one retransmission proof per
//!   participant ([`verify_round`]). A missing or invalid proof excludes
//!   the participant and the round is repeated without it.
//! * After an epoch of the optimized variant, a two-message collision that
//!   failed to split reveals a rule violation; everyone must then prove an
//!   inequality of logs, and whoever cannot is the violator
//!   ([`find_rule_checks`], [`investigate_rule_violation`]).
//! * Branches that keep failing to split are abandoned ([`monitor_and_skip`]).

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::group::{GroupElement, GroupParams, Scalar, SlotOutcome};
use crate::sicta::{NodeStatus, ResolutionTree, SlotAlgebra};
use crate::zkp::statements::is_transmitted;
use crate::zkp::{
    build_retransmission_statement, prove_neqdl, prove_or2, verify_neqdl, verify_or2, NeqDlProof,
    NeqDlStatement, OrProof, OrStatement, ZkpError,
};

pub const DEFAULT_SKIP_THRESHOLD: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    MissingProof,
    InvalidProof,
    RuleViolation,
    BranchSkipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub epoch: u64,
    pub node: u64,
    /// The violator. Skipped branches name nobody.
    pub index: Option<usize>,
    pub evidence: Evidence,
    pub rounds: Vec<u64>,
    /// Payload of the message revealed by a rule investigation.
    pub revealed: Option<Vec<u8>>,
}

// ----- skip policy -----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchMonitor {
    pub node: u64,
    pub count: u32,
    pub threshold: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorAction {
    Continue,
    Skip,
}

/// Feed the split result of a collision node. `count` enters as the
/// parent's run of non-splits and leaves as this node's.
pub fn monitor_and_skip(monitor: &mut BranchMonitor, split: bool) -> MonitorAction {
    monitor.count = if split { 0 } else { monitor.count + 1 };
    match monitor.threshold {
        Some(t) if monitor.count >= t => MonitorAction::Skip,
        _ => MonitorAction::Continue,
    }
}

// ----- per-round obligations -----

/// Everything a participant put on the channel in one epoch, per node:
/// its base `A` and ciphertext `O`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundLedger {
    rounds: BTreeMap<u64, BTreeMap<usize, (GroupElement, GroupElement)>>,
}

impl RoundLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, node: u64, index: usize, base: GroupElement, value: GroupElement) {
        self.rounds.entry(node).or_default().insert(index, (base, value));
    }

    /// Forget a round, e.g. before replaying it with a smaller roster.
    pub fn clear_round(&mut self, node: u64) {
        self.rounds.remove(&node);
    }

    pub fn get(&self, node: u64, index: usize) -> Option<&(GroupElement, GroupElement)> {
        self.rounds.get(&node)?.get(&index)
    }

    pub fn participants(&self, node: u64) -> Vec<usize> {
        self.rounds
            .get(&node)
            .map(|r| r.keys().copied().collect())
            .unwrap_or_default()
    }
}

/// The statements due in one round, per participant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObligationSet {
    pub node: u64,
    pub statements: BTreeMap<usize, OrStatement>,
}

impl ObligationSet {
    /// `None` for rounds that carry no obligation (root, inferred rounds).
    pub fn build(
        params: &GroupParams,
        ledger: &RoundLedger,
        node: u64,
        roster: &[usize],
        public_keys: &BTreeMap<usize, GroupElement>,
    ) -> Result<Option<Self>, ZkpError> {
        if node == 1 || !is_transmitted(node) {
            return Ok(None);
        }
        let mut statements = BTreeMap::new();
        for &i in roster {
            let y = public_keys
                .get(&i)
                .ok_or(ZkpError::MalformedStatement("participant has no public key"))?;
            let stmt = build_retransmission_statement(params, node, y, |n| ledger.get(n, i).cloned())?;
            statements.insert(i, stmt);
        }
        Ok(Some(ObligationSet { node, statements }))
    }

    /// Honest prover for participant `index` holding secret `x`.
    pub fn prove<R: RngCore + ?Sized>(
        &self,
        params: &GroupParams,
        index: usize,
        x: &Scalar,
        rng: &mut R,
    ) -> Result<OrProof, ZkpError> {
        let stmt = self
            .statements
            .get(&index)
            .ok_or(ZkpError::MalformedStatement("participant has no obligation"))?;
        let which = stmt.satisfied_branch(params, x).ok_or(ZkpError::WitnessMismatch)?;
        prove_or2(params, stmt, which, x, rng)
    }
}

/// Check every participant's proof for the round. Returns the violators.
pub fn verify_round(
    params: &GroupParams,
    obligations: &ObligationSet,
    proofs: &BTreeMap<usize, Option<OrProof>>,
) -> Vec<(usize, Evidence)> {
    obligations
        .statements
        .iter()
        .filter_map(|(&i, stmt)| match proofs.get(&i).and_then(|p| p.as_ref()) {
            None => Some((i, Evidence::MissingProof)),
            Some(p) if !verify_or2(params, stmt, p) => Some((i, Evidence::InvalidProof)),
            Some(_) => None,
        })
        .collect()
}

// ----- two-collision rule -----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleCase {
    /// Both messages were retransmitted at `2j`.
    BothTransmit,
    /// Neither message was retransmitted at `2j`.
    BothSilent,
}

/// A two-message collision at `node` that did not split as the rule demands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleCheck<M> {
    pub node: u64,
    pub case: RuleCase,
    /// Round whose ciphertexts are investigated.
    pub round: u64,
    pub small: M,
    pub large: M,
}

/// Nearest transmitted ancestor of `node`, or `node` itself.
pub fn transmitted_anchor(node: u64) -> u64 {
    let mut n = node;
    while !is_transmitted(n) {
        n /= 2;
    }
    n
}

/// Scan a finished tree for topmost two-message collisions that failed to
/// split. Subtrees with skipped nodes are ignored.
pub fn find_rule_checks<A: SlotAlgebra>(
    alg: &A,
    tree: &ResolutionTree<A::Value, A::Message>,
) -> Vec<RuleCheck<A::Message>> {
    // Delivered messages and completeness per subtree, bottom up.
    let ids: Vec<u64> = tree.nodes().map(|(k, _)| k).collect();
    let mut summary: BTreeMap<u64, (usize, bool)> = BTreeMap::new();
    let mut msgs_at: BTreeMap<u64, Vec<A::Message>> = BTreeMap::new();
    for &id in ids.iter().rev() {
        let rec = tree.node(id).expect("node");
        let mut msgs = Vec::new();
        let mut complete = rec.status != NodeStatus::Skipped;
        if let SlotOutcome::Message(m) = &rec.outcome {
            msgs.push(m.clone());
        }
        for child in [id.wrapping_mul(2), id.wrapping_mul(2).wrapping_add(1)] {
            if let Some(m) = msgs_at.get(&child) {
                msgs.extend(m.iter().cloned());
                complete &= summary[&child].1;
            }
        }
        summary.insert(id, (msgs.len(), complete));
        msgs_at.insert(id, msgs);
    }

    let mut out = Vec::new();
    for &id in &ids {
        let rec = tree.node(id).expect("node");
        let (count, complete) = summary[&id];
        if !rec.outcome.is_collision() || count != 2 || !complete {
            continue;
        }
        let topmost = id == 1 || {
            let (pc, pcomplete) = summary[&(id / 2)];
            pc > 2 || !pcomplete
        };
        if !topmost {
            continue;
        }
        let Some(left) = tree.node(2 * id) else { continue };
        let case = if left.value == rec.value {
            RuleCase::BothTransmit
        } else if left.value == alg.identity() {
            RuleCase::BothSilent
        } else {
            continue;
        };
        let mut pair = msgs_at[&id].clone();
        pair.sort();
        let round = match case {
            RuleCase::BothTransmit => 2 * id,
            RuleCase::BothSilent => transmitted_anchor(id),
        };
        out.push(RuleCheck {
            node: id,
            case,
            round,
            large: pair.pop().expect("two messages"),
            small: pair.pop().expect("two messages"),
        });
    }
    out
}

/// The inequality participant `index` must prove for `check`: its
/// ciphertext in the investigated round, divided by the suspect message,
/// is not its empty pad.
pub fn rule_statement(
    params: &GroupParams,
    ledger: &RoundLedger,
    round: u64,
    suspect: &GroupElement,
    index: usize,
    public_key: &GroupElement,
) -> Result<NeqDlStatement, ZkpError> {
    let (a, o) = ledger.get(round, index).ok_or(ZkpError::MissingRound(round))?;
    NeqDlStatement::new(a.clone(), params.div(o, suspect), public_key.clone())
}

/// The message whose presence is being denied in each case: the larger one
/// for a double retransmission, the smaller one for a double silence.
pub fn suspect<M: Clone>(check: &RuleCheck<M>) -> M {
    match check.case {
        RuleCase::BothTransmit => check.large.clone(),
        RuleCase::BothSilent => check.small.clone(),
    }
}

/// Honest response to an investigation. `None` when the participant did
/// put the suspect message into the round.
pub fn answer_investigation<R: RngCore + ?Sized>(
    params: &GroupParams,
    stmt: &NeqDlStatement,
    x: &Scalar,
    rng: &mut R,
) -> Option<NeqDlProof> {
    prove_neqdl(params, stmt, x, rng).ok()
}

/// Check the inequality proofs of all participants asked in an
/// investigation. Everybody who fails is flagged.
pub fn investigate_rule_violation(
    params: &GroupParams,
    epoch: u64,
    node: u64,
    round: u64,
    statements: &BTreeMap<usize, NeqDlStatement>,
    proofs: &BTreeMap<usize, Option<NeqDlProof>>,
    revealed: &[u8],
) -> Vec<Verdict> {
    statements
        .iter()
        .filter(|(i, stmt)| match proofs.get(i).and_then(|p| p.as_ref()) {
            Some(p) => !verify_neqdl(params, stmt, p),
            None => true,
        })
        .map(|(&i, _)| Verdict {
            epoch,
            node,
            index: Some(i),
            evidence: Evidence::RuleViolation,
            rounds: vec![round],
            revealed: Some(revealed.to_vec()),
        })
        .collect()
}
