//! SICTA collision resolution with inference cancellation, blocked access
//! and the optional two-collision rule.

pub mod algebra;
pub mod participant;
pub mod runner;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use algebra::{CountingAlgebra, EncodedMessage, GroupAlgebra, MessageKey, SlotAlgebra};
pub use participant::{CoinSource, ParticipantCrState, Queued, RngCoins, ScriptedCoins, SplitBehavior};
pub use runner::{run_epoch, Delivery, EpochReport, EpochRunner, FastTransport, RoundTransport, Send, Step, TransmitResult};
pub use tree::{NodeRecord, NodeStatus, PlanKind, ResolutionTree, RoundPlan};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SictaError {
    #[error("node {0} is not pending for this kind of round")]
    NotPending(u64),
    #[error("node {0} cannot be inferred before its parent and sibling")]
    InferenceBeforeSibling(u64),
    #[error("resolution tree exceeded the maximum depth at node {0}")]
    DepthExceeded(u64),
    #[error("epoch {0} has already finished")]
    EpochFinished(u64),
}

/// Standard SICTA, or SICTA with the two-collision rule (only the
/// numerically smaller of two colliding messages is retransmitted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Standard,
    Optimized,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Standard => "standard",
            Variant::Optimized => "optimized",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "standard" => Ok(Variant::Standard),
            "optimized" => Ok(Variant::Optimized),
            other => Err(format!("unknown variant {other:?} (expected standard or optimized)")),
        }
    }
}
