//! Chaum-Pedersen proof that `log_B V = log_g y`.
//!
//! Prover picks `w`, sends `t1 = g^w`, `t2 = B^w`; challenge `c` is the hash
//! of the statement and commitments; response `s = w + c·x mod q`. The
//! verifier checks `g^s = t1·y^c` and `B^s = t2·V^c`.

use rand::RngCore;

use super::{ChallengeHasher, EqDlStatement, ZkpError};
use crate::group::{GroupElement, GroupParams, Scalar};

const TAG: &[u8] = b"dcnet/eqdl/v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EqDlProof {
    pub commit_g: GroupElement,
    pub commit_base: GroupElement,
    pub challenge: Scalar,
    pub response: Scalar,
}

pub(crate) fn absorb_statement(h: &mut ChallengeHasher<'_>, stmt: &EqDlStatement) {
    h.element(&stmt.base).element(&stmt.value).element(&stmt.public_key);
}

fn challenge(params: &GroupParams, stmt: &EqDlStatement, t1: &GroupElement, t2: &GroupElement) -> Scalar {
    let mut h = ChallengeHasher::new(params, TAG);
    absorb_statement(&mut h, stmt);
    h.element(t1).element(t2);
    h.finish()
}

/// Commitments `(g^w, B^w)` for a fresh nonce.
pub(crate) fn commit(params: &GroupParams, stmt: &EqDlStatement, w: &Scalar) -> (GroupElement, GroupElement) {
    (params.exp_g(w), params.pow(&stmt.base, w))
}

pub fn prove_eqdl<R: RngCore + ?Sized>(
    params: &GroupParams,
    stmt: &EqDlStatement,
    x: &Scalar,
    rng: &mut R,
) -> Result<EqDlProof, ZkpError> {
    if !stmt.holds_for(params, x) {
        return Err(ZkpError::WitnessMismatch);
    }
    let w = params.random_scalar(rng);
    let (t1, t2) = commit(params, stmt, &w);
    let c = challenge(params, stmt, &t1, &t2);
    let s = params.scalar_add(&w, &params.scalar_mul(&c, x));
    Ok(EqDlProof {
        commit_g: t1,
        commit_base: t2,
        challenge: c,
        response: s,
    })
}

/// Check both verification equations against the challenge carried in the
/// proof, without recomputing it. This is the interactive verifier.
pub fn verify_eqdl_with_challenge(params: &GroupParams, stmt: &EqDlStatement, proof: &EqDlProof) -> bool {
    let lhs_g = params.exp_g(&proof.response);
    let rhs_g = params.mul(&proof.commit_g, &params.pow(&stmt.public_key, &proof.challenge));
    if lhs_g != rhs_g {
        return false;
    }
    let lhs_b = params.pow(&stmt.base, &proof.response);
    let rhs_b = params.mul(&proof.commit_base, &params.pow(&stmt.value, &proof.challenge));
    lhs_b == rhs_b
}

pub fn verify_eqdl(params: &GroupParams, stmt: &EqDlStatement, proof: &EqDlProof) -> bool {
    proof.challenge == challenge(params, stmt, &proof.commit_g, &proof.commit_base)
        && verify_eqdl_with_challenge(params, stmt, proof)
}

/// Honest-verifier simulator: picks the response first and solves for the
/// commitments. Accepted by [`verify_eqdl_with_challenge`] for any
/// statement, true or not.
pub fn simulate_eqdl<R: RngCore + ?Sized>(
    params: &GroupParams,
    stmt: &EqDlStatement,
    challenge: &Scalar,
    rng: &mut R,
) -> EqDlProof {
    let s = params.random_scalar(rng);
    let neg_c = params.scalar_neg(challenge);
    let t1 = params.mul(&params.exp_g(&s), &params.pow(&stmt.public_key, &neg_c));
    let t2 = params.mul(&params.pow(&stmt.base, &s), &params.pow(&stmt.value, &neg_c));
    EqDlProof {
        commit_g: t1,
        commit_base: t2,
        challenge: challenge.clone(),
        response: s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::make_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn setup() -> (GroupParams, ChaCha20Rng) {
        (make_params(64, 24, 32, b"eqdl").unwrap(), ChaCha20Rng::seed_from_u64(1))
    }

    #[test]
    fn honest_empty_ciphertext_verifies() {
        let (params, mut rng) = setup();
        let x = params.random_nonzero_scalar(&mut rng);
        let a = params.random_element(&mut rng);
        let stmt = EqDlStatement::new(a.clone(), params.pow(&a, &x), params.exp_g(&x));
        let proof = prove_eqdl(&params, &stmt, &x, &mut rng).unwrap();
        assert!(verify_eqdl(&params, &stmt, &proof));
    }

    #[test]
    fn prover_refuses_false_statement_and_forgeries_fail() {
        let (params, mut rng) = setup();
        let x = params.random_nonzero_scalar(&mut rng);
        let a = params.random_element(&mut rng);
        let m = params.encode_message(&[0x12, 0x34]).unwrap();
        let tampered = params.mul(&params.pow(&a, &x), &m);
        let stmt = EqDlStatement::new(a, tampered, params.exp_g(&x));
        assert_eq!(prove_eqdl(&params, &stmt, &x, &mut rng), Err(ZkpError::WitnessMismatch));
        for _ in 0..200 {
            let forged = EqDlProof {
                commit_g: params.random_element(&mut rng),
                commit_base: params.random_element(&mut rng),
                challenge: params.random_scalar(&mut rng),
                response: params.random_scalar(&mut rng),
            };
            assert!(!verify_eqdl(&params, &stmt, &forged));
            // Simulated transcripts pass the interactive check but not Fiat-Shamir.
            let c = params.random_scalar(&mut rng);
            let sim = simulate_eqdl(&params, &stmt, &c, &mut rng);
            assert!(verify_eqdl_with_challenge(&params, &stmt, &sim));
            assert!(!verify_eqdl(&params, &stmt, &sim));
        }
    }

    #[test]
    fn replay_under_other_bases_fails() {
        let (params, mut rng) = setup();
        let x = params.random_nonzero_scalar(&mut rng);
        let a1 = params.random_element(&mut rng);
        let a2 = params.random_element(&mut rng);
        let s1 = EqDlStatement::new(a1.clone(), params.pow(&a1, &x), params.exp_g(&x));
        let s2 = EqDlStatement::new(a2.clone(), params.pow(&a2, &x), params.exp_g(&x));
        let proof = prove_eqdl(&params, &s1, &x, &mut rng).unwrap();
        assert!(!verify_eqdl(&params, &s2, &proof));
    }
}
