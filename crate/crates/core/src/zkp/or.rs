//! Disjunction of two equality-of-logs statements.
//!
//! The prover runs the real protocol on the branch it can satisfy and the
//! simulator on the other one. The two sub-challenges must add up to the
//! Fiat-Shamir challenge over the whole statement and all four commitments,
//! so the prover controls only one of them.

use rand::RngCore;

use super::eqdl::{absorb_statement, commit, simulate_eqdl, verify_eqdl_with_challenge, EqDlProof};
use super::{ChallengeHasher, OrStatement, ZkpError};
use crate::group::{GroupParams, Scalar};

const TAG: &[u8] = b"dcnet/or2/v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrProof {
    /// Sub-proofs for the left and right branch, in order.
    pub branches: [EqDlProof; 2],
}

fn challenge(params: &GroupParams, stmt: &OrStatement, branches: [&EqDlProof; 2]) -> Scalar {
    let mut h = ChallengeHasher::new(params, TAG);
    absorb_statement(&mut h, &stmt.left);
    absorb_statement(&mut h, &stmt.right);
    for b in branches {
        h.element(&b.commit_g).element(&b.commit_base);
    }
    h.finish()
}

/// Prove `stmt` using a witness for branch `which` (1 = left, 2 = right).
pub fn prove_or2<R: RngCore + ?Sized>(
    params: &GroupParams,
    stmt: &OrStatement,
    which: u8,
    x: &Scalar,
    rng: &mut R,
) -> Result<OrProof, ZkpError> {
    let real = stmt.branch(which)?;
    if !real.holds_for(params, x) {
        return Err(ZkpError::WitnessMismatch);
    }
    let other = stmt.branch(3 - which)?;

    let fake_challenge = params.random_scalar(rng);
    let simulated = simulate_eqdl(params, other, &fake_challenge, rng);

    let w = params.random_scalar(rng);
    let (t1, t2) = commit(params, real, &w);
    let mut real_proof = EqDlProof {
        commit_g: t1,
        commit_base: t2,
        challenge: fake_challenge.clone(),
        response: w.clone(),
    };

    let total = if which == 1 {
        challenge(params, stmt, [&real_proof, &simulated])
    } else {
        challenge(params, stmt, [&simulated, &real_proof])
    };
    let c = params.scalar_sub(&total, &fake_challenge);
    real_proof.response = params.scalar_add(&w, &params.scalar_mul(&c, x));
    real_proof.challenge = c;

    let branches = if which == 1 {
        [real_proof, simulated]
    } else {
        [simulated, real_proof]
    };
    Ok(OrProof { branches })
}

pub fn verify_or2(params: &GroupParams, stmt: &OrStatement, proof: &OrProof) -> bool {
    let [l, r] = &proof.branches;
    let total = challenge(params, stmt, [l, r]);
    params.scalar_add(&l.challenge, &r.challenge) == total
        && verify_eqdl_with_challenge(params, &stmt.left, l)
        && verify_eqdl_with_challenge(params, &stmt.right, r)
}

/// What a cheater without a witness can produce: both branches simulated
/// with independent challenges. Rejected except with probability `1/q`.
pub fn forge_or2<R: RngCore + ?Sized>(params: &GroupParams, stmt: &OrStatement, rng: &mut R) -> OrProof {
    let c1 = params.random_scalar(rng);
    let c2 = params.random_scalar(rng);
    OrProof {
        branches: [
            simulate_eqdl(params, &stmt.left, &c1, rng),
            simulate_eqdl(params, &stmt.right, &c2, rng),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::make_params;
    use crate::zkp::EqDlStatement;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn either_branch_proves_and_verifies() {
        let params = make_params(64, 24, 32, b"or").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let x = params.random_nonzero_scalar(&mut rng);
        let y = params.exp_g(&x);
        let a = params.random_element(&mut rng);
        let b = params.random_element(&mut rng);
        let junk = params.random_element(&mut rng);

        let left_true = OrStatement::new(
            EqDlStatement::new(a.clone(), params.pow(&a, &x), y.clone()),
            EqDlStatement::new(b.clone(), junk.clone(), y.clone()),
        )
        .unwrap();
        let p = prove_or2(&params, &left_true, 1, &x, &mut rng).unwrap();
        assert!(verify_or2(&params, &left_true, &p));
        assert_eq!(prove_or2(&params, &left_true, 2, &x, &mut rng), Err(ZkpError::WitnessMismatch));

        let right_true = OrStatement::new(
            EqDlStatement::new(a.clone(), junk.clone(), y.clone()),
            EqDlStatement::new(b.clone(), params.pow(&b, &x), y.clone()),
        )
        .unwrap();
        let p = prove_or2(&params, &right_true, 2, &x, &mut rng).unwrap();
        assert!(verify_or2(&params, &right_true, &p));
        assert!(!verify_or2(&params, &left_true, &p));

        let neither = OrStatement::new(
            EqDlStatement::new(a, junk.clone(), y.clone()),
            EqDlStatement::new(b, junk, y),
        )
        .unwrap();
        for _ in 0..100 {
            assert!(!verify_or2(&params, &neither, &forge_or2(&params, &neither, &mut rng)));
        }
        assert_eq!(prove_or2(&params, &neither, 3, &x, &mut rng), Err(ZkpError::BadBranch(3)));
    }

    #[test]
    fn branches_must_share_public_key() {
        let params = make_params(64, 24, 32, b"or").unwrap();
        let g = params.generator().clone();
        let one = params.identity();
        assert!(OrStatement::new(
            EqDlStatement::new(g.clone(), g.clone(), g.clone()),
            EqDlStatement::new(g.clone(), g, one),
        )
        .is_err());
    }
}
