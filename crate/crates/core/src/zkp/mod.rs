//! Non-interactive sigma protocols over the ciphertext group.
//!
//! * [`eqdl`]: equality of discrete logs, `log_B V = log_g y` (Chaum-Pedersen).
//! * [`or`]: the disjunction of two such statements.
//! * [`neq`]: inequality of discrete logs, `log_B V ≠ log_g y`.
//! * [`statements`]: builders for the retransmission statements a
//!   participant must prove for every transmitted non-root round.
//!
//! Challenges are SHA-256 over a domain tag, the group parameters, the
//! statement and the commitments, reduced mod `q`.

pub mod eqdl;
pub mod neq;
pub mod or;
pub mod statements;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::group::{GroupElement, GroupError, GroupParams, Scalar};

pub use eqdl::{prove_eqdl, simulate_eqdl, verify_eqdl, verify_eqdl_with_challenge, EqDlProof};
pub use neq::{prove_neqdl, verify_neqdl, NeqDlProof};
pub use or::{forge_or2, prove_or2, verify_or2, OrProof};
pub use statements::{build_retransmission_statement, retransmission_chain, RetransmissionChain};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ZkpError {
    #[error("witness does not satisfy the statement")]
    WitnessMismatch,
    #[error("branch index must be 1 or 2, got {0}")]
    BadBranch(u8),
    #[error("statement is malformed: {0}")]
    MalformedStatement(&'static str),
    #[error("node {0} carries no retransmission obligation")]
    NoObligation(u64),
    #[error("ciphertext or base for node {0} is unavailable")]
    MissingRound(u64),
    #[error("proof encoding: {0}")]
    Encoding(String),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Claim `log_base(value) = log_g(public_key)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EqDlStatement {
    pub base: GroupElement,
    pub value: GroupElement,
    pub public_key: GroupElement,
}

impl EqDlStatement {
    pub fn new(base: GroupElement, value: GroupElement, public_key: GroupElement) -> Self {
        EqDlStatement {
            base,
            value,
            public_key,
        }
    }

    pub fn holds_for(&self, params: &GroupParams, x: &Scalar) -> bool {
        params.pow(&self.base, x) == self.value && params.exp_g(x) == self.public_key
    }
}

/// Claim that at least one of two equality statements holds. Both branches
/// share the same public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrStatement {
    pub left: EqDlStatement,
    pub right: EqDlStatement,
}

impl OrStatement {
    pub fn new(left: EqDlStatement, right: EqDlStatement) -> Result<Self, ZkpError> {
        if left.public_key != right.public_key {
            return Err(ZkpError::MalformedStatement("branches use different public keys"));
        }
        Ok(OrStatement { left, right })
    }

    pub fn branch(&self, which: u8) -> Result<&EqDlStatement, ZkpError> {
        match which {
            1 => Ok(&self.left),
            2 => Ok(&self.right),
            other => Err(ZkpError::BadBranch(other)),
        }
    }
}

/// Claim `log_base(value) ≠ log_g(public_key)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeqDlStatement {
    pub base: GroupElement,
    pub value: GroupElement,
    pub public_key: GroupElement,
}

impl NeqDlStatement {
    pub fn new(
        base: GroupElement,
        value: GroupElement,
        public_key: GroupElement,
    ) -> Result<Self, ZkpError> {
        if base.is_identity() {
            return Err(ZkpError::MalformedStatement("inequality base must not be 1"));
        }
        Ok(NeqDlStatement {
            base,
            value,
            public_key,
        })
    }
}

/// Tagged union of the proofs that travel in transcripts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Proof {
    EqDl(EqDlProof),
    Or2(OrProof),
    NeqDl(NeqDlProof),
}

impl Proof {
    pub fn kind(&self) -> &'static str {
        match self {
            Proof::EqDl(_) => "eqdl",
            Proof::Or2(_) => "or2",
            Proof::NeqDl(_) => "neqdl",
        }
    }

    /// Hex components in a fixed order per kind.
    pub fn components(&self, params: &GroupParams) -> Vec<String> {
        let e = |x: &GroupElement| params.element_hex(x);
        let s = |x: &Scalar| params.scalar_hex(x);
        match self {
            Proof::EqDl(p) => vec![
                e(&p.commit_g),
                e(&p.commit_base),
                s(&p.challenge),
                s(&p.response),
            ],
            Proof::Or2(p) => p
                .branches
                .iter()
                .flat_map(|b| {
                    vec![
                        e(&b.commit_g),
                        e(&b.commit_base),
                        s(&b.challenge),
                        s(&b.response),
                    ]
                })
                .collect(),
            Proof::NeqDl(p) => vec![
                e(&p.aux),
                e(&p.commit_base),
                e(&p.commit_g),
                s(&p.challenge),
                s(&p.response_alpha),
                s(&p.response_beta),
            ],
        }
    }

    pub fn from_components(
        params: &GroupParams,
        kind: &str,
        parts: &[String],
    ) -> Result<Proof, ZkpError> {
        let e = |i: usize| params.element_from_hex(&parts[i]);
        let s = |i: usize| params.scalar_from_hex(&parts[i]);
        let want = match kind {
            "eqdl" => 4,
            "or2" => 8,
            "neqdl" => 6,
            other => return Err(ZkpError::Encoding(format!("unknown proof kind {other:?}"))),
        };
        if parts.len() != want {
            return Err(ZkpError::Encoding(format!(
                "{kind} proof needs {want} components, got {}",
                parts.len()
            )));
        }
        let eqdl_at = |o: usize| -> Result<EqDlProof, ZkpError> {
            Ok(EqDlProof {
                commit_g: e(o)?,
                commit_base: e(o + 1)?,
                challenge: s(o + 2)?,
                response: s(o + 3)?,
            })
        };
        Ok(match kind {
            "eqdl" => Proof::EqDl(eqdl_at(0)?),
            "or2" => Proof::Or2(OrProof {
                branches: [eqdl_at(0)?, eqdl_at(4)?],
            }),
            _ => Proof::NeqDl(NeqDlProof {
                aux: e(0)?,
                commit_base: e(1)?,
                commit_g: e(2)?,
                challenge: s(3)?,
                response_alpha: s(4)?,
                response_beta: s(5)?,
            }),
        })
    }
}

/// Fiat-Shamir hasher: length-prefixed fields in a fixed order.
pub(crate) struct ChallengeHasher<'a> {
    params: &'a GroupParams,
    inner: Sha256,
}

impl<'a> ChallengeHasher<'a> {
    pub(crate) fn new(params: &'a GroupParams, tag: &[u8]) -> Self {
        let mut h = ChallengeHasher {
            params,
            inner: Sha256::new(),
        };
        h.bytes(tag);
        h.bytes(&params.modulus().to_bytes_be());
        h.bytes(&params.order().to_bytes_be());
        h.element(params.generator());
        h
    }

    fn bytes(&mut self, b: &[u8]) {
        self.inner.update((b.len() as u32).to_be_bytes());
        self.inner.update(b);
    }

    pub(crate) fn element(&mut self, e: &GroupElement) -> &mut Self {
        let bytes = self.params.element_bytes(e);
        self.bytes(&bytes);
        self
    }

    pub(crate) fn finish(self) -> Scalar {
        let digest = self.inner.finalize();
        crate::group::hash_to_scalar(self.params, b"dcnet/fs-challenge/v1", &[&digest])
    }
}
