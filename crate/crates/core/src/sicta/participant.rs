//! Per-participant collision-resolution state.

use std::collections::VecDeque;

use rand::{Rng, RngCore};

use super::algebra::SlotAlgebra;
use super::Variant;
use crate::group::SlotOutcome;

/// How a participant splits. Everything except `Honest` is a deviation
/// used by the adversary catalogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitBehavior {
    #[default]
    Honest,
    /// Retransmits at every node governed by the two-collision rule.
    RuleTransmit,
    /// Stays silent at every node governed by the two-collision rule.
    RuleSilent,
    /// Retransmits at every node and abandons its message when skipped.
    AlwaysLeft,
}

/// Source of split coins; `true` means retransmit (go left).
pub trait CoinSource {
    fn flip(&mut self, participant: usize, node: u64) -> bool;
}

pub struct RngCoins<R>(pub R);

impl<R: RngCore> CoinSource for RngCoins<R> {
    fn flip(&mut self, _participant: usize, _node: u64) -> bool {
        self.0.gen()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Queued<M> {
    pub message: M,
    pub arrived_at: f64,
}

/// What a participant learned from a round it took part in.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation<M> {
    None,
    Delivered(Queued<M>),
    Lost(Queued<M>),
}

#[derive(Debug, Clone)]
pub struct ParticipantCrState<M> {
    pub index: usize,
    pub behavior: SplitBehavior,
    in_flight: Option<Queued<M>>,
    /// Node whose combined value holds our in-flight message.
    position: Option<u64>,
    /// Sibling recovered at a two-message collision, with that node.
    pair: Option<(u64, M)>,
    rule_reverted: bool,
    queue: VecDeque<Queued<M>>,
    excluded: bool,
}

impl<M: Clone + Ord> ParticipantCrState<M> {
    pub fn new(index: usize, behavior: SplitBehavior) -> Self {
        ParticipantCrState {
            index,
            behavior,
            in_flight: None,
            position: None,
            pair: None,
            rule_reverted: false,
            queue: VecDeque::new(),
            excluded: false,
        }
    }

    pub fn enqueue(&mut self, message: M, arrived_at: f64) {
        if !self.excluded {
            self.queue.push_back(Queued { message, arrived_at });
        }
    }

    pub fn in_flight(&self) -> Option<&Queued<M>> {
        self.in_flight.as_ref()
    }

    pub fn position(&self) -> Option<u64> {
        self.position
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// Messages held, in flight or queued.
    pub fn backlog(&self) -> usize {
        self.queue.len() + usize::from(self.in_flight.is_some())
    }

    pub fn is_excluded(&self) -> bool {
        self.excluded
    }

    pub fn rule_reverted(&self) -> bool {
        self.rule_reverted
    }

    /// Drop out for good. Whatever was in flight stays in the channel.
    pub fn exclude(&mut self) {
        self.excluded = true;
        self.in_flight = None;
        self.position = None;
        self.queue.clear();
    }

    /// Gated access: only at the start of an epoch does a queued message
    /// become active. Returns whether this participant sends at the root.
    pub fn begin_epoch(&mut self) -> bool {
        self.pair = None;
        self.rule_reverted = false;
        self.position = None;
        if self.excluded {
            return false;
        }
        if self.in_flight.is_none() {
            self.in_flight = self.queue.pop_front();
        }
        if self.in_flight.is_some() {
            self.position = Some(1);
        }
        self.position.is_some()
    }

    /// The message to put into round `node`, if any. Updates the position
    /// for participants involved in the parent collision.
    pub fn decide<C: CoinSource + ?Sized>(&mut self, node: u64, variant: Variant, coins: &mut C) -> Option<M> {
        let msg = self.in_flight.as_ref()?.message.clone();
        if node == 1 {
            return (self.position == Some(1)).then_some(msg);
        }
        let parent = node / 2;
        if node % 2 == 1 || self.position != Some(parent) {
            return None;
        }
        let rule_sibling = match (&self.pair, variant) {
            (Some((n, s)), Variant::Optimized) if *n == parent && !self.rule_reverted => Some(s),
            _ => None,
        };
        let left = match (self.behavior, rule_sibling) {
            (SplitBehavior::AlwaysLeft, _) => true,
            (SplitBehavior::RuleTransmit, Some(_)) => true,
            (SplitBehavior::RuleSilent, Some(_)) => false,
            (_, Some(sibling)) => msg < *sibling,
            (_, None) => coins.flip(self.index, node),
        };
        self.position = Some(if left { node } else { node + 1 });
        left.then_some(msg)
    }

    /// Learn from the resolved value of `node`.
    pub fn observe<A>(&mut self, alg: &A, variant: Variant, node: u64, value: &A::Value, outcome: &SlotOutcome<M>) -> Observation<M>
    where
        A: SlotAlgebra<Message = M>,
    {
        if self.position != Some(node) {
            return Observation::None;
        }
        let Some(own) = self.in_flight.as_ref() else {
            return Observation::None;
        };
        match outcome {
            SlotOutcome::Message(m) if *m == own.message => {
                self.position = None;
                Observation::Delivered(self.in_flight.take().expect("in flight"))
            }
            SlotOutcome::Collision => {
                if variant == Variant::Optimized {
                    let sibling = alg.recover_sibling(value, &own.message);
                    if let Some(s) = &sibling {
                        let same_as_parent =
                            matches!(&self.pair, Some((n, p)) if *n == node / 2 && p == s);
                        if same_as_parent {
                            self.rule_reverted = true;
                        }
                    }
                    self.pair = sibling.map(|s| (node, s));
                }
                Observation::None
            }
            // Our message should be in this slot but is not.
            _ => {
                self.position = None;
                match self.in_flight.take() {
                    Some(q) => {
                        self.queue.push_front(q.clone());
                        Observation::Lost(q)
                    }
                    None => Observation::None,
                }
            }
        }
    }

    /// The branch holding our message was abandoned: retry next epoch.
    pub fn on_skip(&mut self, node: u64) -> bool {
        if self.position != Some(node) {
            return false;
        }
        self.position = None;
        if let Some(q) = self.in_flight.take() {
            if self.behavior != SplitBehavior::AlwaysLeft {
                self.queue.push_front(q);
            }
        }
        true
    }

    /// Anything still in flight when the tree closes is retried.
    pub fn end_epoch(&mut self) -> bool {
        self.position = None;
        match self.in_flight.take() {
            Some(q) => {
                self.queue.push_front(q);
                true
            }
            None => false,
        }
    }
}

/// Coins replayed from a fixed table, for reproducing a given tree.
/// Missing entries fall back to "stay" (do not retransmit).
#[derive(Debug, Clone, Default)]
pub struct ScriptedCoins {
    left: std::collections::BTreeMap<u64, std::collections::BTreeSet<usize>>,
}

impl ScriptedCoins {
    pub fn new() -> Self {
        Self::default()
    }

    /// Participants in `who` retransmit at `node`.
    pub fn at(mut self, node: u64, who: &[usize]) -> Self {
        self.left.entry(node).or_default().extend(who.iter().copied());
        self
    }

    /// The coin table that reproduces the exemplary five-message tree:
    /// rounds 1, 2, 4, 6, 14 transmitted and 3, 5, 7, 15 inferred.
    pub fn figure_one() -> Self {
        ScriptedCoins::new()
            .at(2, &[2, 4])
            .at(4, &[2])
            .at(6, &[3])
            .at(14, &[1])
    }

    pub fn nodes(&self) -> impl Iterator<Item = (u64, &std::collections::BTreeSet<usize>)> {
        self.left.iter().map(|(k, v)| (*k, v))
    }
}

impl CoinSource for ScriptedCoins {
    fn flip(&mut self, participant: usize, node: u64) -> bool {
        self.left.get(&node).is_some_and(|s| s.contains(&participant))
    }
}
