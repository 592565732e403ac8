use num_bigint::BigUint;
use proptest::prelude::*;

use dcnet::analytics::expected_rounds;
use dcnet::group::SlotOutcome;
use dcnet::pad::{combine, derive_bases, form_ciphertext, keygen, RoundId, TransparentBackend};
use dcnet::sim::{default_params, replay_verify, run_protocol_demo, toy_params, DemoConfig};
use dcnet::zkp::statements::is_transmitted;
use dcnet::zkp::retransmission_chain;
use dcnet::Variant;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn encode_decode_round_trip(payload in proptest::collection::vec(any::<u8>(), 16)) {
        let params = default_params();
        let v = BigUint::from_bytes_be(&payload);
        prop_assume!(v > BigUint::from(0u32));
        let e = params.encode_message(&payload).unwrap();
        prop_assert_eq!(params.classify(&e), SlotOutcome::Message(payload.clone()));
        let d = params.decode(&e).unwrap();
        prop_assert_eq!(d.code.modpow(&BigUint::from(2u32), params.modulus()), e.as_biguint().clone());
    }

    #[test]
    fn pads_cancel_and_messages_multiply(
        n in 2usize..7,
        seed in any::<[u8; 8]>(),
        node in 1u64..64,
        senders in proptest::collection::btree_set(1usize..7, 0..4),
    ) {
        let params = default_params();
        let keys = keygen(params, n, &seed).unwrap();
        let roster: Vec<usize> = (1..=n).collect();
        let backend = TransparentBackend::new(&keys);
        let round = RoundId::new(0, node, 0);
        let bases = derive_bases(params, &backend, &seed, &roster, round).unwrap();
        let mut expected = params.identity();
        let cts: Vec<_> = keys
            .iter()
            .zip(&bases)
            .map(|(k, a)| {
                let m = senders.contains(&k.index).then(|| {
                    params.encode_message(&params.payload_from_text(&format!("p{}", k.index))).unwrap()
                });
                if let Some(m) = &m {
                    expected = params.mul(&expected, m);
                }
                form_ciphertext(params, k, round, a, m.as_ref())
            })
            .collect();
        prop_assert_eq!(combine(params, &roster, &cts).unwrap(), expected);
    }

    #[test]
    fn chains_walk_left_siblings(half in 1u64..(1 << 20)) {
        let node = half * 2;
        let rc = retransmission_chain(node).unwrap();
        prop_assert_eq!(rc.chain[0], node);
        prop_assert!(is_transmitted(rc.anchor));
        prop_assert_eq!(rc.chain.last().unwrap() / 2, rc.anchor);
        for w in rc.chain.windows(2) {
            prop_assert_eq!(w[1], w[0] / 2 - 1);
            prop_assert!(!is_transmitted(w[0] / 2));
        }
        for &j in &rc.chain {
            prop_assert!(is_transmitted(j));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn toy_demos_deliver_everything_and_replay(
        seed in any::<u64>(),
        senders in 1usize..7,
        optimized in any::<bool>(),
    ) {
        let config = DemoConfig {
            n: 6,
            senders,
            seed,
            toy: true,
            variant: if optimized { Variant::Optimized } else { Variant::Standard },
            ..Default::default()
        };
        let out = run_protocol_demo(&config).unwrap();
        prop_assert!(out.verdicts.is_empty());
        prop_assert_eq!(out.undelivered, 0);
        let mut got = out.delivered.clone();
        got.sort();
        let mut want: Vec<Vec<u8>> = (1..=senders)
            .map(|i| dcnet::sim::demo_payload(toy_params(), i))
            .collect();
        want.sort();
        prop_assert_eq!(got, want);
        let report = replay_verify(&out.transcript, Some(&out.key_file)).unwrap();
        prop_assert!(report.accepted, "{:?}", report.problems);
    }
}

#[test]
fn expected_rounds_grow_with_k() {
    for variant in [Variant::Standard, Variant::Optimized] {
        let mut prev = expected_rounds(1, variant);
        for k in 2..40 {
            let s = expected_rounds(k, variant);
            assert!(s > prev, "{variant} k={k}");
            prev = s;
        }
    }
}
