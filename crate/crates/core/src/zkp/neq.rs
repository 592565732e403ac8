//! Proof that `log_B V ≠ log_g y`.
//!
//! The prover picks `s ≠ 0` and publishes `D = (B^x / V)^s`, then proves
//! knowledge of `(α, β) = (x·s, s)` with `D = B^α·V^−β` and
//! `1 = g^α·y^−β`. The second relation forces `α = x·β`, so `D = (B^x/V)^β`,
//! and the verifier's check `D ≠ 1` rules out `V = B^x`.

use rand::RngCore;

use super::{ChallengeHasher, NeqDlStatement, ZkpError};
use crate::group::{GroupElement, GroupParams, Scalar};

const TAG: &[u8] = b"dcnet/neqdl/v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeqDlProof {
    pub aux: GroupElement,
    pub commit_base: GroupElement,
    pub commit_g: GroupElement,
    pub challenge: Scalar,
    pub response_alpha: Scalar,
    pub response_beta: Scalar,
}

fn challenge(
    params: &GroupParams,
    stmt: &NeqDlStatement,
    aux: &GroupElement,
    t1: &GroupElement,
    t2: &GroupElement,
) -> Scalar {
    let mut h = ChallengeHasher::new(params, TAG);
    h.element(&stmt.base)
        .element(&stmt.value)
        .element(&stmt.public_key)
        .element(aux)
        .element(t1)
        .element(t2);
    h.finish()
}

/// `B^a · V^−b`
fn two_base(params: &GroupParams, b: &GroupElement, v: &GroupElement, a: &Scalar, bb: &Scalar) -> GroupElement {
    params.mul(&params.pow(b, a), &params.pow(v, &params.scalar_neg(bb)))
}

pub fn prove_neqdl<R: RngCore + ?Sized>(
    params: &GroupParams,
    stmt: &NeqDlStatement,
    x: &Scalar,
    rng: &mut R,
) -> Result<NeqDlProof, ZkpError> {
    if params.exp_g(x) != stmt.public_key {
        return Err(ZkpError::WitnessMismatch);
    }
    let bx = params.pow(&stmt.base, x);
    if bx == stmt.value {
        return Err(ZkpError::WitnessMismatch);
    }
    let s = params.random_nonzero_scalar(rng);
    let aux = params.pow(&params.div(&bx, &stmt.value), &s);
    let alpha = params.scalar_mul(x, &s);

    let wa = params.random_scalar(rng);
    let wb = params.random_scalar(rng);
    let t1 = two_base(params, &stmt.base, &stmt.value, &wa, &wb);
    let t2 = two_base(params, params.generator(), &stmt.public_key, &wa, &wb);
    let c = challenge(params, stmt, &aux, &t1, &t2);
    Ok(NeqDlProof {
        aux,
        commit_base: t1,
        commit_g: t2,
        response_alpha: params.scalar_add(&wa, &params.scalar_mul(&c, &alpha)),
        response_beta: params.scalar_add(&wb, &params.scalar_mul(&c, &s)),
        challenge: c,
    })
}

pub fn verify_neqdl(params: &GroupParams, stmt: &NeqDlStatement, proof: &NeqDlProof) -> bool {
    if proof.aux.is_identity() || stmt.base.is_identity() {
        return false;
    }
    let c = challenge(params, stmt, &proof.aux, &proof.commit_base, &proof.commit_g);
    if c != proof.challenge {
        return false;
    }
    let lhs1 = two_base(params, &stmt.base, &stmt.value, &proof.response_alpha, &proof.response_beta);
    let rhs1 = params.mul(&proof.commit_base, &params.pow(&proof.aux, &c));
    if lhs1 != rhs1 {
        return false;
    }
    let lhs2 = two_base(
        params,
        params.generator(),
        &stmt.public_key,
        &proof.response_alpha,
        &proof.response_beta,
    );
    lhs2 == proof.commit_g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::make_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn non_sender_proves_sender_cannot() {
        let params = make_params(64, 24, 32, b"neq").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let x = params.random_nonzero_scalar(&mut rng);
        let y = params.exp_g(&x);
        let a = params.random_element(&mut rng);
        let m = params.encode_message(&[0, 0, 7]).unwrap();

        // Empty ciphertext: O/M differs from A^x.
        let empty = params.pow(&a, &x);
        let stmt = NeqDlStatement::new(a.clone(), params.div(&empty, &m), y.clone()).unwrap();
        let p = prove_neqdl(&params, &stmt, &x, &mut rng).unwrap();
        assert!(verify_neqdl(&params, &stmt, &p));

        // Sender of M: O/M = A^x.
        let sent = params.mul(&empty, &m);
        let stmt = NeqDlStatement::new(a.clone(), params.div(&sent, &m), y.clone()).unwrap();
        assert_eq!(prove_neqdl(&params, &stmt, &x, &mut rng), Err(ZkpError::WitnessMismatch));
        // Reusing the other proof, or zeroing the auxiliary element, fails.
        assert!(!verify_neqdl(&params, &stmt, &p));
        let mut degenerate = p.clone();
        degenerate.aux = params.identity();
        assert!(!verify_neqdl(&params, &stmt, &degenerate));
    }

    #[test]
    fn random_values_verify() {
        let params = make_params(64, 24, 32, b"neq").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        for _ in 0..50 {
            let x = params.random_nonzero_scalar(&mut rng);
            let stmt = NeqDlStatement::new(
                params.random_element(&mut rng),
                params.random_element(&mut rng),
                params.exp_g(&x),
            )
            .unwrap();
            let p = prove_neqdl(&params, &stmt, &x, &mut rng).unwrap();
            assert!(verify_neqdl(&params, &stmt, &p));
        }
    }
}
