//! Slot algebras: what a combined slot value is and how it is read.
//!
//! The tree only needs to multiply, divide and classify slot values. The
//! group instantiation does this with real ciphertext products; the
//! counting instantiation tracks the multiset of message keys directly and
//! is used for fast Monte Carlo runs.

use std::cmp::Ordering;
use std::fmt::Debug;

use num_bigint::BigUint;

use crate::group::{GroupElement, GroupError, GroupParams, SlotOutcome};

pub trait SlotAlgebra {
    type Value: Clone + PartialEq + Debug;
    type Message: Clone + Ord + Debug;

    fn identity(&self) -> Self::Value;
    fn multiply(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn divide(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn lift(&self, m: &Self::Message) -> Self::Value;
    fn classify(&self, v: &Self::Value) -> SlotOutcome<Self::Message>;
    /// Short text form for tree dumps.
    fn render(&self, v: &Self::Value) -> String;

    /// `C / own` if that is a single valid message, i.e. if `C` held
    /// exactly two messages.
    fn recover_sibling(&self, c: &Self::Value, own: &Self::Message) -> Option<Self::Message> {
        match self.classify(&self.divide(c, &self.lift(own))) {
            SlotOutcome::Message(m) => Some(m),
            _ => None,
        }
    }
}

/// A decoded message: the payload, its integer code `u` and `E = u²`.
/// Ordered by code, which is the order used by the two-collision rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedMessage {
    pub code: BigUint,
    pub payload: Vec<u8>,
    pub element: GroupElement,
}

impl EncodedMessage {
    pub fn new(params: &GroupParams, payload: &[u8]) -> Result<Self, GroupError> {
        let element = params.encode_message(payload)?;
        // Round trip to get the canonical fixed-width payload.
        let decoded = params.decode(&element).ok_or(GroupError::DegeneratePayload)?;
        Ok(EncodedMessage {
            code: decoded.code,
            payload: decoded.payload,
            element,
        })
    }
}

impl PartialOrd for EncodedMessage {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EncodedMessage {
    fn cmp(&self, other: &Self) -> Ordering {
        self.code.cmp(&other.code)
    }
}

#[derive(Debug, Clone)]
pub struct GroupAlgebra {
    params: GroupParams,
}

impl GroupAlgebra {
    pub fn new(params: GroupParams) -> Self {
        GroupAlgebra { params }
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }
}

impl SlotAlgebra for GroupAlgebra {
    type Value = GroupElement;
    type Message = EncodedMessage;

    fn identity(&self) -> GroupElement {
        self.params.identity()
    }

    fn multiply(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.params.mul(a, b)
    }

    fn divide(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.params.div(a, b)
    }

    fn lift(&self, m: &EncodedMessage) -> GroupElement {
        m.element.clone()
    }

    fn classify(&self, v: &GroupElement) -> SlotOutcome<EncodedMessage> {
        if v.is_identity() {
            return SlotOutcome::Idle;
        }
        match self.params.decode(v) {
            Some(d) => SlotOutcome::Message(EncodedMessage {
                code: d.code,
                payload: d.payload,
                element: v.clone(),
            }),
            None => SlotOutcome::Collision,
        }
    }

    fn render(&self, v: &GroupElement) -> String {
        self.params.element_hex(v)
    }
}

/// Identity of a message in fast mode. `tag` is random and orders messages
/// the same way the payload integers order them in crypto mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageKey {
    pub tag: u64,
    pub seq: u64,
}

impl MessageKey {
    /// The 16-byte payload carried for this key in crypto mode.
    pub fn payload(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&self.tag.to_be_bytes());
        out[8..].copy_from_slice(&self.seq.to_be_bytes());
        out
    }
}

/// Slot values as sorted multisets of message keys.
#[derive(Debug, Clone, Copy, Default)]
pub struct CountingAlgebra;

impl SlotAlgebra for CountingAlgebra {
    type Value = Vec<MessageKey>;
    type Message = MessageKey;

    fn identity(&self) -> Vec<MessageKey> {
        Vec::new()
    }

    fn multiply(&self, a: &Vec<MessageKey>, b: &Vec<MessageKey>) -> Vec<MessageKey> {
        let mut out = Vec::with_capacity(a.len() + b.len());
        out.extend_from_slice(a);
        out.extend_from_slice(b);
        out.sort_unstable();
        out
    }

    fn divide(&self, a: &Vec<MessageKey>, b: &Vec<MessageKey>) -> Vec<MessageKey> {
        let mut out = a.clone();
        for m in b {
            if let Ok(pos) = out.binary_search(m) {
                out.remove(pos);
            }
        }
        out
    }

    fn lift(&self, m: &MessageKey) -> Vec<MessageKey> {
        vec![*m]
    }

    fn classify(&self, v: &Vec<MessageKey>) -> SlotOutcome<MessageKey> {
        match v.as_slice() {
            [] => SlotOutcome::Idle,
            [m] => SlotOutcome::Message(*m),
            _ => SlotOutcome::Collision,
        }
    }

    fn render(&self, v: &Vec<MessageKey>) -> String {
        let ids: Vec<String> = v.iter().map(|m| m.seq.to_string()).collect();
        format!("{{{}}}", ids.join(","))
    }
}
