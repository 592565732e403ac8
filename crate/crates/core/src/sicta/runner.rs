//! Drives one epoch at a time over a [`RoundTransport`].
//!
//! The runner owns the tree and the split decisions; the transport turns
//! the decisions of a transmitted round into a combined value. The fast
//! transport simply multiplies the messages. The crypto transport in
//! [`crate::sim`] forms ciphertexts, attaches and verifies proofs and may
//! exclude participants.

use super::algebra::SlotAlgebra;
use super::participant::{CoinSource, Observation, ParticipantCrState};
use super::tree::{NodeStatus, PlanKind, ResolutionTree};
use super::{SictaError, Variant};
use crate::group::SlotOutcome;

/// A message put into a transmitted round by participant `index`.
/// Participants without an entry send an empty ciphertext.
#[derive(Debug, Clone, PartialEq)]
pub struct Send<M> {
    pub index: usize,
    pub message: M,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmitResult<V> {
    pub value: V,
    /// Participants removed while producing this round.
    pub excluded: Vec<usize>,
}

pub trait RoundTransport<A: SlotAlgebra> {
    type Error: From<SictaError>;

    fn begin_epoch(&mut self, _epoch: u64, _active: &[usize]) -> Result<(), Self::Error> {
        Ok(())
    }

    fn transmit(
        &mut self,
        alg: &A,
        tree: &ResolutionTree<A::Value, A::Message>,
        epoch: u64,
        node: u64,
        sends: &[Send<A::Message>],
    ) -> Result<TransmitResult<A::Value>, Self::Error>;

    fn inferred(
        &mut self,
        _epoch: u64,
        _node: u64,
        _value: &A::Value,
        _outcome: &SlotOutcome<A::Message>,
    ) -> Result<(), Self::Error> {
        Ok(())
    }

    fn skipped(&mut self, _epoch: u64, _node: u64) -> Result<(), Self::Error> {
        Ok(())
    }

    /// Called once the tree is complete; returns participants to exclude.
    fn end_epoch(
        &mut self,
        _alg: &A,
        _tree: &ResolutionTree<A::Value, A::Message>,
    ) -> Result<Vec<usize>, Self::Error> {
        Ok(Vec::new())
    }
}

/// Multiplies the sent messages directly. Never excludes anyone.
#[derive(Debug, Clone, Copy, Default)]
pub struct FastTransport;

impl<A: SlotAlgebra> RoundTransport<A> for FastTransport {
    type Error = SictaError;

    fn transmit(
        &mut self,
        alg: &A,
        _tree: &ResolutionTree<A::Value, A::Message>,
        _epoch: u64,
        _node: u64,
        sends: &[Send<A::Message>],
    ) -> Result<TransmitResult<A::Value>, SictaError> {
        let value = sends
            .iter()
            .fold(alg.identity(), |acc, s| alg.multiply(&acc, &alg.lift(&s.message)));
        Ok(TransmitResult {
            value,
            excluded: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Delivery<M> {
    pub node: u64,
    pub message: M,
    /// `None` for a message whose sender has been excluded.
    pub participant: Option<usize>,
    pub arrived_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step<M> {
    Round {
        node: u64,
        kind: PlanKind,
        status: NodeStatus,
        deliveries: Vec<Delivery<M>>,
        excluded: Vec<usize>,
    },
    Done {
        excluded: Vec<usize>,
        requeued: Vec<usize>,
    },
}

pub struct EpochRunner<A: SlotAlgebra> {
    variant: Variant,
    tree: ResolutionTree<A::Value, A::Message>,
    /// Slice positions of participants with a message this epoch.
    active: Vec<usize>,
    started: bool,
    finished: bool,
}

impl<A: SlotAlgebra> EpochRunner<A> {
    pub fn new(epoch: u64, variant: Variant, skip_threshold: Option<u32>) -> Self {
        EpochRunner {
            variant,
            tree: ResolutionTree::new(epoch, skip_threshold),
            active: Vec::new(),
            started: false,
            finished: false,
        }
    }

    pub fn tree(&self) -> &ResolutionTree<A::Value, A::Message> {
        &self.tree
    }

    pub fn into_tree(self) -> ResolutionTree<A::Value, A::Message> {
        self.tree
    }

    /// Advance by one round. Returns `Done` exactly once.
    pub fn step<T, C>(
        &mut self,
        alg: &A,
        participants: &mut [ParticipantCrState<A::Message>],
        coins: &mut C,
        transport: &mut T,
    ) -> Result<Step<A::Message>, T::Error>
    where
        T: RoundTransport<A>,
        C: CoinSource + ?Sized,
    {
        let epoch = self.tree.epoch();
        if !self.started {
            self.started = true;
            self.active = participants
                .iter_mut()
                .enumerate()
                .filter_map(|(pos, p)| p.begin_epoch().then_some(pos))
                .collect();
            let active: Vec<usize> = self.active.iter().map(|&pos| participants[pos].index).collect();
            transport.begin_epoch(epoch, &active)?;
        }
        if self.finished {
            return Err(SictaError::EpochFinished(epoch).into());
        }
        let Some(plan) = self.tree.schedule_next() else {
            self.finished = true;
            let excluded = transport.end_epoch(alg, &self.tree)?;
            exclude_all(participants, &excluded);
            let requeued = self
                .active
                .iter()
                .filter_map(|&pos| {
                    let p = &mut participants[pos];
                    p.end_epoch().then_some(p.index)
                })
                .collect();
            return Ok(Step::Done { excluded, requeued });
        };

        let node = plan.node;
        let mut excluded = Vec::new();
        let (value, status, outcome) = match plan.kind {
            PlanKind::Transmit => {
                let mut sends = Vec::new();
                for &pos in &self.active {
                    let p = &mut participants[pos];
                    if p.is_excluded() {
                        continue;
                    }
                    if let Some(message) = p.decide(node, self.variant, coins) {
                        sends.push(Send { index: p.index, message });
                    }
                }
                let result = transport.transmit(alg, &self.tree, epoch, node, &sends)?;
                exclude_all(participants, &result.excluded);
                excluded = result.excluded;
                let (status, outcome) = self.tree.apply_transmitted(alg, node, result.value.clone())?;
                (result.value, status, outcome)
            }
            PlanKind::Infer => {
                let (value, status, outcome) = self.tree.apply_inferred(alg, node)?;
                transport.inferred(epoch, node, &value, &outcome)?;
                (value, status, outcome)
            }
        };

        let mut deliveries = Vec::new();
        for &pos in &self.active {
            let p = &mut participants[pos];
            if let Observation::Delivered(q) = p.observe(alg, self.variant, node, &value, &outcome) {
                deliveries.push(Delivery {
                    node,
                    message: q.message,
                    participant: Some(p.index),
                    arrived_at: Some(q.arrived_at),
                });
            }
        }
        if let (SlotOutcome::Message(m), true) = (&outcome, deliveries.is_empty()) {
            deliveries.push(Delivery {
                node,
                message: m.clone(),
                participant: None,
                arrived_at: None,
            });
        }
        if status == NodeStatus::Skipped {
            for &pos in &self.active {
                participants[pos].on_skip(node);
            }
            transport.skipped(epoch, node)?;
        }
        Ok(Step::Round {
            node,
            kind: plan.kind,
            status,
            deliveries,
            excluded,
        })
    }
}

fn exclude_all<M: Clone + Ord>(participants: &mut [ParticipantCrState<M>], excluded: &[usize]) {
    if excluded.is_empty() {
        return;
    }
    for p in participants.iter_mut() {
        if excluded.contains(&p.index) {
            p.exclude();
        }
    }
}

/// Summary of a complete epoch.
#[derive(Debug, Clone)]
pub struct EpochReport<V, M> {
    pub tree: ResolutionTree<V, M>,
    pub deliveries: Vec<Delivery<M>>,
    pub excluded: Vec<usize>,
    pub requeued: Vec<usize>,
}

impl<V, M> EpochReport<V, M> {
    pub fn transmitted_rounds(&self) -> usize
    where
        V: Clone + PartialEq,
        M: Clone,
    {
        self.tree.transmitted_ids().len()
    }
}

/// Run a whole epoch without interleaving arrivals.
pub fn run_epoch<A, T, C>(
    alg: &A,
    epoch: u64,
    variant: Variant,
    skip_threshold: Option<u32>,
    participants: &mut [ParticipantCrState<A::Message>],
    coins: &mut C,
    transport: &mut T,
) -> Result<EpochReport<A::Value, A::Message>, T::Error>
where
    A: SlotAlgebra,
    T: RoundTransport<A>,
    C: CoinSource + ?Sized,
{
    let mut runner = EpochRunner::<A>::new(epoch, variant, skip_threshold);
    let mut deliveries = Vec::new();
    let mut excluded = Vec::new();
    loop {
        match runner.step(alg, participants, coins, transport)? {
            Step::Round {
                deliveries: d,
                excluded: e,
                ..
            } => {
                deliveries.extend(d);
                excluded.extend(e);
            }
            Step::Done {
                excluded: e,
                requeued,
            } => {
                excluded.extend(e);
                return Ok(EpochReport {
                    tree: runner.into_tree(),
                    deliveries,
                    excluded,
                    requeued,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sicta::algebra::{CountingAlgebra, MessageKey};
    use crate::sicta::participant::{RngCoins, ScriptedCoins, SplitBehavior};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn loaded(n: usize, senders: &[usize]) -> Vec<ParticipantCrState<MessageKey>> {
        (1..=n)
            .map(|i| {
                let mut p = ParticipantCrState::new(i, SplitBehavior::Honest);
                if senders.contains(&i) {
                    p.enqueue(MessageKey { tag: i as u64, seq: i as u64 }, 0.0);
                }
                p
            })
            .collect()
    }

    #[test]
    fn figure_one_with_scripted_coins() {
        for variant in [Variant::Standard, Variant::Optimized] {
            let mut ps = loaded(5, &[1, 2, 3, 4, 5]);
            let mut coins = ScriptedCoins::figure_one();
            let rep = run_epoch(&CountingAlgebra, 0, variant, None, &mut ps, &mut coins, &mut FastTransport).unwrap();
            assert_eq!(rep.tree.transmitted_ids(), vec![1, 2, 4, 6, 14]);
            assert_eq!(rep.tree.inferred_ids(), vec![3, 5, 7, 15]);
            let mut got: Vec<usize> = rep.deliveries.iter().filter_map(|d| d.participant).collect();
            got.sort();
            assert_eq!(got, vec![1, 2, 3, 4, 5]);
        }
    }

    #[test]
    fn single_and_empty_epochs_take_one_round() {
        for senders in [&[][..], &[3][..]] {
            let mut ps = loaded(4, senders);
            let mut coins = RngCoins(ChaCha8Rng::seed_from_u64(0));
            let rep = run_epoch(&CountingAlgebra, 0, Variant::Standard, None, &mut ps, &mut coins, &mut FastTransport).unwrap();
            assert_eq!(rep.tree.transmitted_ids(), vec![1]);
            assert_eq!(rep.deliveries.len(), senders.len());
        }
    }

    #[test]
    fn optimized_two_collision_takes_two_rounds() {
        let mut coins = RngCoins(ChaCha8Rng::seed_from_u64(7));
        for _ in 0..200 {
            let mut ps = loaded(6, &[2, 5]);
            let rep = run_epoch(&CountingAlgebra, 0, Variant::Optimized, None, &mut ps, &mut coins, &mut FastTransport).unwrap();
            assert_eq!(rep.tree.transmitted_ids(), vec![1, 2]);
            assert_eq!(rep.deliveries.len(), 2);
        }
    }

    #[test]
    fn every_message_delivered_once() {
        let mut coins = RngCoins(ChaCha8Rng::seed_from_u64(11));
        for variant in [Variant::Standard, Variant::Optimized] {
            for k in 0..12usize {
                let senders: Vec<usize> = (1..=k).collect();
                let mut ps = loaded(12, &senders);
                let rep = run_epoch(&CountingAlgebra, 0, variant, None, &mut ps, &mut coins, &mut FastTransport).unwrap();
                let mut got: Vec<usize> = rep.deliveries.iter().filter_map(|d| d.participant).collect();
                got.sort();
                assert_eq!(got, senders);
                assert!(rep.tree.check_conservation(&CountingAlgebra).is_ok());
            }
        }
    }
}
