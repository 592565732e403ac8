//! Key setup, per-round pad bases and ciphertext formation.
//!
//! Every participant `i` holds a secret `x_i` and publishes `y_i = g^x_i`.
//! For each round the participants derive bases `A_i` such that
//! `∏ A_i^x_i = 1`, so the product of all ciphertexts `O_i = A_i^x_i · M_i`
//! is the product of the embedded messages.
//!
//! Bases come from a [`PadBackend`]. The only backend shipped here is
//! [`TransparentBackend`], which represents source-group keys by their
//! exponents. It preserves every algebraic identity but gives an observer
//! the secrets, so it is only suitable for testing and simulation.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::group::{hash_to_scalar, GroupElement, GroupParams, Scalar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PadError {
    #[error("at least two participants are required, got {0}")]
    TooFewParticipants(usize),
    #[error("participant {0} is not known to the pad backend")]
    UnknownParticipant(usize),
    #[error("duplicate ciphertext from participant {0}")]
    DuplicateParticipant(usize),
    #[error("missing ciphertext from participant {0}")]
    MissingParticipant(usize),
    #[error("ciphertext for round {found:?} mixed into round {expected:?}")]
    RoundMismatch { expected: RoundId, found: RoundId },
}

/// Source-group public key `ȳ = h^x`. In the transparent backend this is
/// the exponent itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceKey(Scalar);

impl SourceKey {
    pub fn transparent(exponent: Scalar) -> Self {
        SourceKey(exponent)
    }

    pub fn exponent(&self) -> &Scalar {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticipantKeys {
    pub index: usize,
    secret: Scalar,
    pub public: GroupElement,
    pub source: SourceKey,
}

impl ParticipantKeys {
    pub fn from_secret(params: &GroupParams, index: usize, secret: Scalar) -> Self {
        let public = params.exp_g(&secret);
        ParticipantKeys {
            index,
            source: SourceKey::transparent(secret.clone()),
            secret,
            public,
        }
    }

    pub fn secret(&self) -> &Scalar {
        &self.secret
    }
}

/// Generate `n` key pairs with indices `1..=n`, deterministically from `seed`.
pub fn keygen(
    params: &GroupParams,
    n: usize,
    seed: &[u8],
) -> Result<Vec<ParticipantKeys>, PadError> {
    if n < 2 {
        return Err(PadError::TooFewParticipants(n));
    }
    let mut h = Sha256::new();
    h.update(b"dcnet/keygen/v1");
    h.update(seed);
    let mut rng = ChaCha20Rng::from_seed(h.finalize().into());
    Ok((1..=n)
        .map(|index| {
            let x = params.random_nonzero_scalar(&mut rng);
            ParticipantKeys::from_secret(params, index, x)
        })
        .collect())
}

/// Identifies one transmission: the epoch, the tree node and the replay
/// attempt (bumped when a round is lost to a disruptor and repeated).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoundId {
    pub epoch: u64,
    pub node: u64,
    pub attempt: u32,
}

impl RoundId {
    pub fn new(epoch: u64, node: u64, attempt: u32) -> Self {
        RoundId { epoch, node, attempt }
    }

    fn nonce(&self) -> [u8; 20] {
        let mut out = [0u8; 20];
        out[..8].copy_from_slice(&self.epoch.to_be_bytes());
        out[8..16].copy_from_slice(&self.node.to_be_bytes());
        out[16..].copy_from_slice(&self.attempt.to_be_bytes());
        out
    }
}

/// The public per-round randomness `r_j = PRF(setup_seed, round) mod q`,
/// re-derived with a counter in the negligible case that it is zero.
pub fn round_scalar(params: &GroupParams, setup_seed: &[u8], round: RoundId) -> Scalar {
    let nonce = round.nonce();
    for ctr in 0u32.. {
        let r = hash_to_scalar(
            params,
            b"dcnet/round-scalar/v1",
            &[setup_seed, &nonce, &ctr.to_be_bytes()],
        );
        if !r.is_zero() {
            return r;
        }
    }
    unreachable!("counter space exhausted")
}

/// Computes the per-participant bases for one round, for an ordered roster.
pub trait PadBackend {
    fn derive_bases(
        &self,
        params: &GroupParams,
        roster: &[usize],
        round_scalar: &Scalar,
    ) -> Result<Vec<GroupElement>, PadError>;
}

/// Test-grade backend: the pairing `e(h^a, h^b) = g^(ab)` is evaluated
/// directly from the exponents.
#[derive(Debug, Clone, Default)]
pub struct TransparentBackend {
    sources: BTreeMap<usize, SourceKey>,
}

impl TransparentBackend {
    pub fn new(keys: &[ParticipantKeys]) -> Self {
        TransparentBackend {
            sources: keys.iter().map(|k| (k.index, k.source.clone())).collect(),
        }
    }

    pub fn from_sources(sources: BTreeMap<usize, SourceKey>) -> Self {
        TransparentBackend { sources }
    }
}

impl PadBackend for TransparentBackend {
    fn derive_bases(
        &self,
        params: &GroupParams,
        roster: &[usize],
        round_scalar: &Scalar,
    ) -> Result<Vec<GroupElement>, PadError> {
        let exponents = roster
            .iter()
            .map(|i| {
                self.sources
                    .get(i)
                    .map(|s| s.exponent().clone())
                    .ok_or(PadError::UnknownParticipant(*i))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if exponents.len() < 2 {
            return Err(PadError::TooFewParticipants(exponents.len()));
        }
        Ok(bases_from_exponents(params, &exponents, round_scalar))
    }
}

/// `A_i = g^(r · (Σ_{k<i} x_k − Σ_{k>i} x_k))` for roster positions `i`.
pub fn bases_from_exponents(
    params: &GroupParams,
    exponents: &[Scalar],
    round_scalar: &Scalar,
) -> Vec<GroupElement> {
    let zero = params.scalar_from_u64(0);
    let total = exponents
        .iter()
        .fold(zero.clone(), |acc, x| params.scalar_add(&acc, x));
    let mut before = zero;
    exponents
        .iter()
        .map(|x| {
            let after = params.scalar_sub(&params.scalar_sub(&total, &before), x);
            let e = params.scalar_sub(&before, &after);
            before = params.scalar_add(&before, x);
            params.exp_g(&params.scalar_mul(round_scalar, &e))
        })
        .collect()
}

/// Bases for `round` over `roster`, with `r_j` derived from `setup_seed`.
pub fn derive_bases<B: PadBackend + ?Sized>(
    params: &GroupParams,
    backend: &B,
    setup_seed: &[u8],
    roster: &[usize],
    round: RoundId,
) -> Result<Vec<GroupElement>, PadError> {
    if roster.len() < 2 {
        return Err(PadError::TooFewParticipants(roster.len()));
    }
    let r = round_scalar(params, setup_seed, round);
    backend.derive_bases(params, roster, &r)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub index: usize,
    pub round: RoundId,
    pub value: GroupElement,
}

/// `O = A^x`, or `O = A^x · M` when a message is attached.
pub fn form_ciphertext(
    params: &GroupParams,
    keys: &ParticipantKeys,
    round: RoundId,
    base: &GroupElement,
    message: Option<&GroupElement>,
) -> Ciphertext {
    let pad = params.pow(base, keys.secret());
    let value = match message {
        Some(m) => params.mul(&pad, m),
        None => pad,
    };
    Ciphertext {
        index: keys.index,
        round,
        value,
    }
}

/// Multiply one ciphertext per roster member; pads cancel and only the
/// embedded messages remain.
pub fn combine(
    params: &GroupParams,
    roster: &[usize],
    ciphertexts: &[Ciphertext],
) -> Result<GroupElement, PadError> {
    let mut seen: BTreeMap<usize, &Ciphertext> = BTreeMap::new();
    let round = ciphertexts.first().map(|c| c.round);
    for c in ciphertexts {
        if let Some(expected) = round {
            if c.round != expected {
                return Err(PadError::RoundMismatch {
                    expected,
                    found: c.round,
                });
            }
        }
        if seen.insert(c.index, c).is_some() {
            return Err(PadError::DuplicateParticipant(c.index));
        }
    }
    for i in roster {
        if !seen.contains_key(i) {
            return Err(PadError::MissingParticipant(*i));
        }
    }
    if let Some(extra) = seen.keys().find(|i| !roster.contains(i)) {
        return Err(PadError::UnknownParticipant(*extra));
    }
    Ok(params.product(ciphertexts.iter().map(|c| &c.value)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    fn toy_keys(params: &GroupParams, xs: &[u64]) -> Vec<ParticipantKeys> {
        xs.iter()
            .enumerate()
            .map(|(i, x)| ParticipantKeys::from_secret(params, i + 1, params.scalar_from_u64(*x)))
            .collect()
    }

    #[test]
    fn toy_public_key() {
        let params = GroupParams::toy();
        let k = ParticipantKeys::from_secret(&params, 1, params.scalar_from_u64(7));
        // 4^7 = 16384 = 8 mod 23
        assert_eq!(k.public.as_biguint(), &BigUint::from(8u32));
    }

    #[test]
    fn toy_bases_and_cancellation() {
        let params = GroupParams::toy();
        let keys = toy_keys(&params, &[3, 5]);
        let r = params.scalar_from_u64(2);
        let bases = bases_from_exponents(
            &params,
            &[keys[0].secret().clone(), keys[1].secret().clone()],
            &r,
        );
        assert_eq!(bases[0].as_biguint(), &BigUint::from(4u32));
        assert_eq!(bases[1].as_biguint(), &BigUint::from(2u32));

        let round = RoundId::new(0, 1, 0);
        let o1 = form_ciphertext(&params, &keys[0], round, &bases[0], None);
        let o2 = form_ciphertext(&params, &keys[1], round, &bases[1], None);
        assert_eq!(o1.value.as_biguint(), &BigUint::from(18u32));
        assert_eq!(o2.value.as_biguint(), &BigUint::from(9u32));
        let c = combine(&params, &[1, 2], &[o1, o2]).unwrap();
        assert!(c.is_identity());

        let m = params.encode_message(&[3]).unwrap();
        let with_msg = form_ciphertext(&params, &keys[0], round, &bases[0], Some(&m));
        assert_eq!(with_msg.value.as_biguint(), &BigUint::from(1u32));
        let unit = form_ciphertext(&params, &keys[0], round, &bases[0], Some(&params.identity()));
        assert_eq!(unit.value.as_biguint(), &BigUint::from(18u32));
    }

    #[test]
    fn keygen_is_deterministic_and_nonzero() {
        let params = GroupParams::toy();
        let a = keygen(&params, 6, b"k").unwrap();
        let b = keygen(&params, 6, b"k").unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|k| !k.secret().is_zero()));
        assert_eq!(keygen(&params, 1, b"k"), Err(PadError::TooFewParticipants(1)));
    }

    #[test]
    fn combine_rejects_bad_sets() {
        let params = GroupParams::toy();
        let keys = toy_keys(&params, &[3, 5, 7]);
        let round = RoundId::new(0, 1, 0);
        let base = params.generator().clone();
        let c: Vec<_> = keys
            .iter()
            .map(|k| form_ciphertext(&params, k, round, &base, None))
            .collect();
        assert_eq!(
            combine(&params, &[1, 2, 3], &c[..2]),
            Err(PadError::MissingParticipant(3))
        );
        let dup = vec![c[0].clone(), c[0].clone(), c[1].clone()];
        assert_eq!(
            combine(&params, &[1, 2, 3], &dup),
            Err(PadError::DuplicateParticipant(1))
        );
        let mut other = c.clone();
        other[2].round = RoundId::new(0, 2, 0);
        assert!(matches!(
            combine(&params, &[1, 2, 3], &other),
            Err(PadError::RoundMismatch { .. })
        ));
    }

    #[test]
    fn derive_bases_rejects_single_participant() {
        let params = GroupParams::toy();
        let keys = toy_keys(&params, &[3, 5]);
        let backend = TransparentBackend::new(&keys);
        assert_eq!(
            derive_bases(&params, &backend, b"s", &[1], RoundId::new(0, 1, 0)),
            Err(PadError::TooFewParticipants(1))
        );
        assert_eq!(
            derive_bases(&params, &backend, b"s", &[1, 9], RoundId::new(0, 1, 0)),
            Err(PadError::UnknownParticipant(9))
        );
    }
}
