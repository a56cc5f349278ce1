use ace::adversary::{AttackStrategy, KeyView, SeedSource, StrategyKind};
use ace::gf::{derive_rng, seeded_rng};
use ace::keyio::{
    deserialize_ciphertext, deserialize_key, serialize_ciphertext, serialize_party_key,
    serialize_sanitizer_key, KeyFile,
};
use ace::matrix::Matrix;
use ace::pair::{
    keygen_variant, pair_decrypt, pair_encrypt, pair_sanitize, KeygenVariant, PairCiphertext,
    PairParams,
};
use ace::policy::{
    policy_decrypt, policy_encrypt, policy_keygen, policy_keygen_material, policy_sanitize, Policy,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = PairParams> {
    (
        prop::sample::select(vec![2u64, 3, 7, 257, 65_537]),
        prop::sample::select(vec![(1usize, 3usize), (1, 4), (2, 5), (2, 6), (3, 7)]),
    )
        .prop_map(|(q, (l, n))| PairParams::new(q, l, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn keygens_stay_in_keyspace(p in params(), seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        for v in KeygenVariant::ALL {
            let (keys, s) = keygen_variant(v, &p, &mut rng).unwrap();
            prop_assert!(keys.validate(&p).is_ok());
            prop_assert_eq!(s.derive_keys(&p).unwrap(), keys.clone());
            prop_assert!(keys.transpose_dual().validate(&p).is_ok());
        }
    }

    #[test]
    fn pair_round_trip(p in params(), seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let (keys, _) = keygen_variant(KeygenVariant::Standard, &p, &mut rng).unwrap();
        let m = Matrix::sample_nonzero_vector(&mut rng, p.msg_len(), p.field());
        let c = pair_encrypt(&keys.enc_key, &m).unwrap();
        prop_assert!(!c.vector().is_zero());
        let d = pair_decrypt(&keys.dec_key, &pair_sanitize(&keys.san_key, &c).unwrap()).unwrap();
        prop_assert!(d.in_message_space);
        prop_assert_eq!(d.message, m);
    }

    #[test]
    fn policy_round_trip_and_serialization(p in params(), n in 2u32..5, seed in any::<u64>()) {
        let policy = Policy::bell_lapadula(n).unwrap();
        let mut rng = seeded_rng(seed);
        let (san, parties) = policy_keygen(&policy, &p, &mut rng).unwrap();

        let san_bytes = serialize_sanitizer_key(&san);
        prop_assert_eq!(deserialize_key(&san_bytes).unwrap(), KeyFile::Sanitizer(san.clone()));
        for pk in &parties {
            let bytes = serialize_party_key(pk);
            let back = deserialize_key(&bytes).unwrap();
            prop_assert_eq!(&back, &KeyFile::Party(pk.clone()));
        }

        for e in policy.edges() {
            let m = Matrix::sample_nonzero_vector(&mut rng, p.msg_len(), p.field());
            let ct = policy_encrypt(e.from, e.to, &parties[e.from as usize - 1], &m, &mut rng).unwrap();
            let bytes = serialize_ciphertext(&ct);
            prop_assert_eq!(deserialize_ciphertext(&bytes, false).unwrap(), ct.clone());
            let out = policy_sanitize(&san, &ct).unwrap();
            let out_bytes = serialize_ciphertext(&out);
            prop_assert_eq!(serialize_ciphertext(&deserialize_ciphertext(&out_bytes, true).unwrap()), out_bytes);
            let d = policy_decrypt(e.from, e.to, &parties[e.to as usize - 1], &out).unwrap();
            prop_assert_eq!(d.message, m);
        }
    }
}

/// Sanity of the decoder: when the leaker may legitimately write to the
/// listener, the encrypting bit strategy recovers every bit.
#[test]
fn decoder_works_on_a_legitimate_channel() {
    let policy = Policy::single_pair();
    let params = PairParams::new(17, 1, 6).unwrap();
    let strategy = AttackStrategy {
        kind: StrategyKind::BitEncrypt,
        leakers: vec![1],
        listeners: vec![2],
    };
    let mut hits = 0;
    for t in 0..1000 {
        let mut rng = derive_rng(5, t);
        let material =
            policy_keygen_material(&policy, &params, KeygenVariant::Standard, &mut rng).unwrap();
        let bit = (t % 2) as u8;
        let leaker = KeyView::for_parties(
            &policy,
            &params,
            &material.edge_keys,
            &[1],
            SeedSource::None,
        );
        let slots = strategy.encode(&leaker, Some(bit), &mut rng);
        let out: Vec<Matrix> = slots
            .into_iter()
            .zip(&material.edge_keys)
            .map(|(c, k)| {
                pair_sanitize(&k.san_key, &PairCiphertext::new(c).unwrap())
                    .unwrap()
                    .into_vector()
            })
            .collect();
        let listener = KeyView::for_parties(
            &policy,
            &params,
            &material.edge_keys,
            &[2],
            SeedSource::None,
        );
        hits += u32::from(strategy.decode(&listener, &out) == bit);
    }
    assert_eq!(hits, 1000);
}
