//! The resolution tree of one epoch.
//!
//! Node `1` is the epoch's first round. A node whose value is a collision
//! gets children `2j` (transmitted by the participants that choose to
//! retransmit) and `2j+1` (inferred as `C_j / C_2j`). Nodes are processed in
//! ascending id order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::algebra::SlotAlgebra;
use super::SictaError;
use crate::group::SlotOutcome;
use crate::verification::{monitor_and_skip, BranchMonitor, MonitorAction};
use crate::zkp::statements::is_transmitted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Pending,
    Transmitted,
    Inferred,
    Skipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    Transmit,
    Infer,
}

/// What happens next in the epoch. Bases for transmitted rounds are
/// attached by the transport, not here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundPlan {
    pub epoch: u64,
    pub node: u64,
    pub kind: PlanKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord<V, M> {
    pub value: V,
    pub status: NodeStatus,
    pub outcome: SlotOutcome<M>,
    /// Consecutive non-splits ending at this node.
    pub nonsplit: u32,
}

#[derive(Debug, Clone)]
pub struct ResolutionTree<V, M> {
    epoch: u64,
    nodes: BTreeMap<u64, NodeRecord<V, M>>,
    pending: BTreeSet<u64>,
    skip_threshold: Option<u32>,
}

impl<V: Clone + PartialEq, M: Clone> ResolutionTree<V, M> {
    pub fn new(epoch: u64, skip_threshold: Option<u32>) -> Self {
        ResolutionTree {
            epoch,
            nodes: BTreeMap::new(),
            pending: BTreeSet::from([1]),
            skip_threshold,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn node(&self, id: u64) -> Option<&NodeRecord<V, M>> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (u64, &NodeRecord<V, M>)> {
        self.nodes.iter().map(|(k, v)| (*k, v))
    }

    pub fn value(&self, id: u64) -> Option<&V> {
        self.nodes.get(&id).map(|n| &n.value)
    }

    pub fn is_done(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn schedule_next(&self) -> Option<RoundPlan> {
        let node = *self.pending.first()?;
        let kind = if is_transmitted(node) {
            PlanKind::Transmit
        } else {
            PlanKind::Infer
        };
        Some(RoundPlan {
            epoch: self.epoch,
            node,
            kind,
        })
    }

    pub fn ids_with_status(&self, status: NodeStatus) -> Vec<u64> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.status == status)
            .map(|(k, _)| *k)
            .collect()
    }

    /// Ids of nodes whose value went over the channel, skipped ones included.
    pub fn transmitted_ids(&self) -> Vec<u64> {
        self.nodes.keys().copied().filter(|&n| is_transmitted(n)).collect()
    }

    pub fn inferred_ids(&self) -> Vec<u64> {
        self.nodes.keys().copied().filter(|&n| !is_transmitted(n)).collect()
    }

    fn take_pending(&mut self, node: u64, want: PlanKind) -> Result<(), SictaError> {
        let kind_ok = is_transmitted(node) == (want == PlanKind::Transmit);
        if !kind_ok || !self.pending.remove(&node) {
            return Err(SictaError::NotPending(node));
        }
        Ok(())
    }

    /// Record the combined value of a transmitted round.
    pub fn apply_transmitted<A>(
        &mut self,
        alg: &A,
        node: u64,
        value: V,
    ) -> Result<(NodeStatus, SlotOutcome<M>), SictaError>
    where
        A: SlotAlgebra<Value = V, Message = M>,
    {
        self.take_pending(node, PlanKind::Transmit)?;
        self.store(alg, node, value, NodeStatus::Transmitted)
    }

    /// Infer `C_{2j+1} = C_j / C_{2j}`.
    pub fn apply_inferred<A>(
        &mut self,
        alg: &A,
        node: u64,
    ) -> Result<(V, NodeStatus, SlotOutcome<M>), SictaError>
    where
        A: SlotAlgebra<Value = V, Message = M>,
    {
        let (parent, sibling) = (node / 2, node - 1);
        let (Some(p), Some(s)) = (self.nodes.get(&parent), self.nodes.get(&sibling)) else {
            return Err(SictaError::InferenceBeforeSibling(node));
        };
        let value = alg.divide(&p.value, &s.value);
        self.take_pending(node, PlanKind::Infer)?;
        let (status, outcome) = self.store(alg, node, value.clone(), NodeStatus::Inferred)?;
        Ok((value, status, outcome))
    }

    fn store<A>(
        &mut self,
        alg: &A,
        node: u64,
        value: V,
        status: NodeStatus,
    ) -> Result<(NodeStatus, SlotOutcome<M>), SictaError>
    where
        A: SlotAlgebra<Value = V, Message = M>,
    {
        let outcome = alg.classify(&value);
        let mut status = status;
        let mut nonsplit = 0;
        if outcome.is_collision() {
            let parent = (node > 1).then(|| &self.nodes[&(node / 2)]);
            let mut monitor = BranchMonitor {
                node,
                count: parent.map_or(0, |p| p.nonsplit),
                threshold: self.skip_threshold,
            };
            let split = parent.is_none_or(|p| p.value != value);
            match monitor_and_skip(&mut monitor, split) {
                MonitorAction::Skip => status = NodeStatus::Skipped,
                MonitorAction::Continue => {
                    let left = node.checked_mul(2).filter(|l| *l < u64::MAX);
                    let Some(left) = left else {
                        return Err(SictaError::DepthExceeded(node));
                    };
                    self.pending.insert(left);
                    self.pending.insert(left + 1);
                }
            }
            nonsplit = monitor.count;
        }
        self.nodes.insert(
            node,
            NodeRecord {
                value,
                status,
                outcome: outcome.clone(),
                nonsplit,
            },
        );
        Ok((status, outcome))
    }

    /// `C_{2j} · C_{2j+1} = C_j` for every node whose children are resolved.
    pub fn check_conservation<A>(&self, alg: &A) -> Result<(), u64>
    where
        A: SlotAlgebra<Value = V, Message = M>,
    {
        for (&j, rec) in &self.nodes {
            let Some(l) = j.checked_mul(2) else { continue };
            if let (Some(a), Some(b)) = (self.nodes.get(&l), self.nodes.get(&(l + 1))) {
                if alg.multiply(&a.value, &b.value) != rec.value {
                    return Err(j);
                }
            }
        }
        Ok(())
    }

    /// One line per node: id, status, outcome tag, rendered value.
    pub fn dump<A>(&self, alg: &A) -> String
    where
        A: SlotAlgebra<Value = V, Message = M>,
    {
        let mut out = String::new();
        for (id, rec) in &self.nodes {
            let status = match rec.status {
                NodeStatus::Pending => "pending",
                NodeStatus::Transmitted => "transmitted",
                NodeStatus::Inferred => "inferred",
                NodeStatus::Skipped => "skipped",
            };
            let _ = writeln!(out, "{id} {status} {} {}", rec.outcome.tag(), alg.render(&rec.value));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sicta::algebra::{CountingAlgebra, MessageKey};

    fn k(s: u64) -> MessageKey {
        MessageKey { tag: s, seq: s }
    }

    #[test]
    fn figure_one_shape_by_hand() {
        let alg = CountingAlgebra;
        let mut t: ResolutionTree<Vec<MessageKey>, MessageKey> = ResolutionTree::new(0, None);
        let sends: BTreeMap<u64, Vec<MessageKey>> = [
            (1, vec![k(1), k(2), k(3), k(4), k(5)]),
            (2, vec![k(2), k(4)]),
            (4, vec![k(2)]),
            (6, vec![k(3)]),
            (14, vec![k(1)]),
        ]
        .into_iter()
        .collect();
        while let Some(plan) = t.schedule_next() {
            match plan.kind {
                PlanKind::Transmit => {
                    t.apply_transmitted(&alg, plan.node, sends[&plan.node].clone()).unwrap();
                }
                PlanKind::Infer => {
                    t.apply_inferred(&alg, plan.node).unwrap();
                }
            }
        }
        assert_eq!(t.transmitted_ids(), vec![1, 2, 4, 6, 14]);
        assert_eq!(t.inferred_ids(), vec![3, 5, 7, 15]);
        assert_eq!(t.value(3), Some(&vec![k(1), k(3), k(5)]));
        assert!(t.check_conservation(&alg).is_ok());
    }

    #[test]
    fn repeated_nonsplit_is_skipped() {
        let alg = CountingAlgebra;
        let mut t: ResolutionTree<Vec<MessageKey>, MessageKey> = ResolutionTree::new(0, Some(5));
        let both = vec![k(1), k(2)];
        let mut node = 1;
        loop {
            let (status, _) = t.apply_transmitted(&alg, node, both.clone()).unwrap();
            if node > 1 {
                // Nobody went right, so the inferred sibling is idle.
                let (_, _, outcome) = t.apply_inferred(&alg, node + 1).unwrap();
                assert_eq!(outcome, SlotOutcome::Idle);
            }
            if status == NodeStatus::Skipped {
                break;
            }
            node *= 2;
            assert_eq!(t.schedule_next().unwrap().node, node);
        }
        assert_eq!(node, 32);
        assert_eq!(t.node(32).unwrap().nonsplit, 5);
    }

    #[test]
    fn inference_needs_sibling() {
        let alg = CountingAlgebra;
        let mut t: ResolutionTree<Vec<MessageKey>, MessageKey> = ResolutionTree::new(0, None);
        t.apply_transmitted(&alg, 1, vec![k(1), k(2)]).unwrap();
        assert_eq!(t.apply_inferred(&alg, 3), Err(SictaError::InferenceBeforeSibling(3)));
        assert_eq!(
            t.apply_transmitted(&alg, 4, vec![]),
            Err(SictaError::NotPending(4))
        );
    }
}
