//! Retransmission statements.
//!
//! A participant's ciphertext at an even node `2j` must either repeat what
//! it contributed to the parent slot, or be empty. When the parent was
//! inferred rather than transmitted, its contribution is reconstructed by
//! walking up the chain `j_1 = 2j`, `j_k = j_{k−1}/2 − 1` until the parent
//! `j_t/2` was itself transmitted:
//!
//! ```text
//! ( log_{A_a / A_{j_1}···A_{j_t}} (O_a / O_{j_1}···O_{j_t}) = log_g y )
//!   ∨ ( log_{A_{2j}} O_{2j} = log_g y )          with a = j_t / 2
//! ```

use super::{EqDlStatement, OrStatement, ZkpError};
use crate::group::{GroupElement, GroupParams};

/// Whether a node's combined value is sent over the channel (root and left
/// children) or inferred (right children).
pub fn is_transmitted(node: u64) -> bool {
    node == 1 || node.is_multiple_of(2)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetransmissionChain {
    /// Nearest transmitted ancestor.
    pub anchor: u64,
    /// `j_1 = 2j, j_2, …, j_t`, all transmitted.
    pub chain: Vec<u64>,
}

pub fn retransmission_chain(node: u64) -> Result<RetransmissionChain, ZkpError> {
    if node < 2 || node % 2 == 1 {
        return Err(ZkpError::NoObligation(node));
    }
    let mut chain = vec![node];
    let mut cur = node;
    loop {
        let parent = cur / 2;
        if is_transmitted(parent) {
            return Ok(RetransmissionChain { anchor: parent, chain });
        }
        cur = parent - 1;
        chain.push(cur);
    }
}

/// Build the statement due at `node` for a participant with public key
/// `public_key`. `lookup` returns that participant's `(A, O)` for a
/// transmitted node of the current epoch.
pub fn build_retransmission_statement<F>(
    params: &GroupParams,
    node: u64,
    public_key: &GroupElement,
    lookup: F,
) -> Result<OrStatement, ZkpError>
where
    F: Fn(u64) -> Option<(GroupElement, GroupElement)>,
{
    let rc = retransmission_chain(node)?;
    let get = |n: u64| lookup(n).ok_or(ZkpError::MissingRound(n));
    let (anchor_base, anchor_value) = get(rc.anchor)?;
    let mut base_den = params.identity();
    let mut value_den = params.identity();
    for &n in &rc.chain {
        let (a, o) = get(n)?;
        base_den = params.mul(&base_den, &a);
        value_den = params.mul(&value_den, &o);
    }
    let (own_base, own_value) = get(node)?;
    let left = EqDlStatement::new(
        params.div(&anchor_base, &base_den),
        params.div(&anchor_value, &value_den),
        public_key.clone(),
    );
    let right = EqDlStatement::new(own_base, own_value, public_key.clone());
    OrStatement::new(left, right)
}

impl OrStatement {
    /// Which branch, if any, the witness satisfies (left preferred).
    pub fn satisfied_branch(&self, params: &GroupParams, x: &crate::group::Scalar) -> Option<u8> {
        if self.left.holds_for(params, x) {
            Some(1)
        } else if self.right.holds_for(params, x) {
            Some(2)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::make_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::collections::BTreeMap;

    #[test]
    fn chains_for_figure_one_nodes() {
        let c = |n| retransmission_chain(n).unwrap();
        assert_eq!(c(2), RetransmissionChain { anchor: 1, chain: vec![2] });
        assert_eq!(c(4), RetransmissionChain { anchor: 2, chain: vec![4] });
        assert_eq!(c(6), RetransmissionChain { anchor: 1, chain: vec![6, 2] });
        assert_eq!(c(14), RetransmissionChain { anchor: 1, chain: vec![14, 6, 2] });
        assert_eq!(c(12), RetransmissionChain { anchor: 6, chain: vec![12] });
        assert_eq!(c(30), RetransmissionChain { anchor: 1, chain: vec![30, 14, 6, 2] });
        assert!(retransmission_chain(1).is_err());
        assert!(retransmission_chain(7).is_err());
    }

    #[test]
    fn statement_bases_match_chain_products() {
        let params = make_params(64, 24, 32, b"stmt").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let x = params.random_nonzero_scalar(&mut rng);
        let y = params.exp_g(&x);
        let rounds: BTreeMap<u64, (GroupElement, GroupElement)> = [1u64, 2, 4, 6, 14]
            .iter()
            .map(|&n| {
                let a = params.random_element(&mut rng);
                (n, (a.clone(), params.pow(&a, &x)))
            })
            .collect();
        let look = |n: u64| rounds.get(&n).cloned();
        let a = |n: u64| rounds[&n].0.clone();

        let s14 = build_retransmission_statement(&params, 14, &y, look).unwrap();
        let den = params.product([a(2), a(6), a(14)].iter());
        assert_eq!(s14.left.base, params.div(&a(1), &den));
        assert_eq!(s14.right.base, a(14));
        assert_eq!(s14.satisfied_branch(&params, &x), Some(1));

        let s2 = build_retransmission_statement(&params, 2, &y, look).unwrap();
        assert_eq!(s2.left.base, params.div(&a(1), &a(2)));
        assert_eq!(
            build_retransmission_statement(&params, 8, &y, look),
            Err(ZkpError::MissingRound(8))
        );
    }

    /// A participant that adds `E` at node 2 and removes it again at node 6
    /// leaves the channel sums intact, but cannot satisfy both statements.
    #[test]
    fn example_two_canceller_is_unprovable() {
        let params = make_params(64, 24, 32, b"stmt").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for with_root_message in [false, true] {
            for _ in 0..20 {
                let x = params.random_nonzero_scalar(&mut rng);
                let y = params.exp_g(&x);
                let a: BTreeMap<u64, GroupElement> = [1u64, 2, 6]
                    .iter()
                    .map(|&n| (n, params.random_element(&mut rng)))
                    .collect();
                let m = if with_root_message {
                    params.encode_message(&[1, 2, 3]).unwrap()
                } else {
                    params.identity()
                };
                let e = params.random_element(&mut rng);
                if e.is_identity() || e == params.inv(&m) {
                    continue;
                }
                let o: BTreeMap<u64, GroupElement> = [
                    (1, params.mul(&params.pow(&a[&1], &x), &m)),
                    (2, params.mul(&params.mul(&params.pow(&a[&2], &x), &m), &e)),
                    (6, params.div(&params.pow(&a[&6], &x), &e)),
                ]
                .into_iter()
                .collect();
                let look = |n: u64| Some((a.get(&n)?.clone(), o.get(&n)?.clone()));
                let s2 = build_retransmission_statement(&params, 2, &y, look).unwrap();
                let s6 = build_retransmission_statement(&params, 6, &y, look).unwrap();
                let provable = s2.satisfied_branch(&params, &x).is_some()
                    && s6.satisfied_branch(&params, &x).is_some();
                assert!(!provable);
            }
        }
    }
}
