//! A verifiable dining-cryptographers channel with SICTA collision
//! resolution.
//!
//! * [`group`]: the quadratic-residue group, message encoding and decoding.
//! * [`pad`]: keys, per-round bases and ciphertexts.
//! * [`zkp`]: equality, OR and inequality proofs of discrete logarithms.
//! * [`sicta`]: the resolution tree, participant state and the epoch runner.
//! * [`verification`]: proof obligations, disruptor verdicts and skipping.
//! * [`analytics`]: exact expected resolution lengths and throughput.
//! * [`sim`]: channel simulation, protocol demos and transcript replay.

pub mod analytics;
pub mod group;
pub mod pad;
pub mod prime;
pub mod sicta;
pub mod sim;
pub mod verification;
pub mod zkp;

pub use analytics::{expected_rounds, mst_estimate, throughput_curve, MstEstimate, ThroughputTable};
pub use group::{make_params, GroupElement, GroupError, GroupParams, Scalar, SlotOutcome};
pub use pad::{keygen, ParticipantKeys, RoundId};
pub use sicta::{SictaError, Variant};
pub use sim::{
    replay_verify, run_channel_sim, run_protocol_demo, DemoConfig, KeyFile, ReplayReport, SimConfig, SimError,
    SimMetrics, StrategyTag,
};
pub use verification::{Evidence, Verdict};
