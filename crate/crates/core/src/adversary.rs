//! Attack models.
//!
//! Two insecure baselines (a one-time-pad pair and a square-matrix pair)
//! together with the collusion attacks that break them, and a battery of
//! leaker/listener strategies run against the real scheme by `statcheck`.
//!
//! Strategies only ever see a [`KeyView`]: the key material of the parties
//! in their declared set, built by [`KeyView::for_parties`].

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::error::{AceError, Result};
use crate::gf::Field;
use crate::matrix::Matrix;
use crate::pair::{KeygenSeed, PairKeys, PairParams};
use crate::policy::{PartyId, Policy};

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

fn xor(a: &[bool], b: &[bool]) -> Vec<bool> {
    assert_eq!(a.len(), b.len(), "bit strings differ in length");
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

/// One-time pad for both layers: `K_0 = K_1 xor K_2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OtpBaseline {
    pub sanitizer: Vec<bool>,
    pub sender: Vec<bool>,
    pub receiver: Vec<bool>,
}

pub fn otp_scheme<R: Rng + ?Sized>(bits: usize, rng: &mut R) -> OtpBaseline {
    assert!(bits >= 1, "need at least one bit");
    let sender: Vec<bool> = (0..bits).map(|_| rng.gen()).collect();
    let receiver: Vec<bool> = (0..bits).map(|_| rng.gen()).collect();
    OtpBaseline {
        sanitizer: xor(&sender, &receiver),
        sender,
        receiver,
    }
}

impl OtpBaseline {
    pub fn from_keys(sender: Vec<bool>, receiver: Vec<bool>) -> Self {
        OtpBaseline {
            sanitizer: xor(&sender, &receiver),
            sender,
            receiver,
        }
    }

    pub fn encrypt(&self, m: &[bool]) -> Vec<bool> {
        xor(m, &self.sender)
    }

    pub fn sanitize(&self, c: &[bool]) -> Vec<bool> {
        xor(c, &self.sanitizer)
    }

    pub fn decrypt(&self, c: &[bool]) -> Vec<bool> {
        xor(c, &self.receiver)
    }
}

/// The receiver writes back to the sender by padding with its own key.
pub fn otp_reverse_attack(receiver_key: &[bool], forged: &[bool]) -> Vec<bool> {
    xor(forged, receiver_key)
}

/// The sender strips the sanitized forgery with its own key.
pub fn otp_reverse_decode(sender_key: &[bool], sanitized: &[bool]) -> Vec<bool> {
    xor(sanitized, sender_key)
}

/// Square invertible keys with `san = dec^-1 enc^-1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NaiveBaseline {
    pub enc_key: Matrix,
    pub dec_key: Matrix,
    pub san_key: Matrix,
}

pub fn naive_matrix_scheme<R: Rng + ?Sized>(
    field: Field,
    len: usize,
    rng: &mut R,
) -> Result<NaiveBaseline> {
    let enc_key = Matrix::sample_full_rank(rng, len, len, field)?;
    let dec_key = Matrix::sample_full_rank(rng, len, len, field)?;
    let san_key = dec_key.inverse()?.mul(&enc_key.inverse()?)?;
    Ok(NaiveBaseline {
        enc_key,
        dec_key,
        san_key,
    })
}

impl NaiveBaseline {
    pub fn encrypt(&self, m: &Matrix) -> Result<Matrix> {
        if m.is_zero() {
            return Err(AceError::MessageOutOfSpace);
        }
        self.enc_key.mul(m)
    }

    pub fn sanitize(&self, c: &Matrix) -> Result<Matrix> {
        self.san_key.mul(c)
    }

    pub fn decrypt(&self, c: &Matrix) -> Result<Matrix> {
        self.dec_key.mul(c)
    }
}

/// Colluding holders of both party keys recover `san = dec^-1 enc^-1` and
/// pre-invert it, so the sanitizer emits the forged message verbatim.
pub fn naive_collusion_attack(
    enc_key: &Matrix,
    dec_key: &Matrix,
    forged: &Matrix,
) -> Result<Matrix> {
    if forged.is_zero() {
        return Err(AceError::MessageOutOfSpace);
    }
    // san^-1 = enc * dec
    enc_key.mul(dec_key)?.mul(forged)
}

// ---------------------------------------------------------------------------
// Key views
// ---------------------------------------------------------------------------

/// Key material of one edge visible to a participant.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct EdgeView {
    pub enc_key: Option<Matrix>,
    pub dec_key: Option<Matrix>,
    /// Seed factor behind `enc_key`.
    pub s_e: Option<Matrix>,
    /// Seed factor behind `dec_key` (`S_D`, `S_F` or `S_G`).
    pub partner: Option<Matrix>,
}

/// Everything a leaker or listener knows: per-edge views in policy order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KeyView {
    pub params: PairParams,
    pub edges: Vec<EdgeView>,
}

/// Where seed material for a view comes from.
#[derive(Clone, Copy, Debug)]
pub enum SeedSource<'a> {
    /// No seeds.
    None,
    /// Sampled seeds, one per edge.
    Sampled(&'a [KeygenSeed]),
    /// Canonical completions of the visible keys (used when enumerating the
    /// keyspace, where no seed exists).
    Canonical,
}

impl KeyView {
    /// Collects the keys of `parties`: an edge's encryption key is visible
    /// when its tail is in the set, its decryption key when its head is.
    pub fn for_parties(
        policy: &Policy,
        params: &PairParams,
        keys: &[PairKeys],
        parties: &[PartyId],
        seeds: SeedSource<'_>,
    ) -> KeyView {
        let edges = policy
            .edges()
            .iter()
            .zip(keys)
            .enumerate()
            .map(|(i, (edge, k))| {
                let sees_enc = parties.contains(&edge.from);
                let sees_dec = parties.contains(&edge.to);
                let mut view = EdgeView {
                    enc_key: sees_enc.then(|| k.enc_key.clone()),
                    dec_key: sees_dec.then(|| k.dec_key.clone()),
                    ..EdgeView::default()
                };
                match seeds {
                    SeedSource::None => {}
                    SeedSource::Sampled(s) => {
                        view.s_e = sees_enc.then(|| s[i].s_e().clone());
                        view.partner = sees_dec.then(|| s[i].partner().clone());
                    }
                    SeedSource::Canonical => {
                        view.s_e =
                            sees_enc.then(|| k.enc_key.complete_columns().expect("full rank"));
                        view.partner =
                            sees_dec.then(|| k.dec_key.complete_rows().expect("full rank"));
                    }
                }
                view
            })
            .collect();
        KeyView {
            params: *params,
            edges,
        }
    }

    /// A short deterministic digest in `[0, q)`: a fixed linear functional of
    /// every visible key entry.
    pub fn fingerprint(&self) -> u32 {
        let field = self.params.field();
        let mut acc = 0u32;
        let mut weight = 1u64;
        for e in &self.edges {
            for m in [&e.enc_key, &e.dec_key].into_iter().flatten() {
                for &v in m.data() {
                    acc = field.add(acc, field.mul(field.element(weight).value(), v));
                    weight += 1;
                }
            }
        }
        acc
    }

    /// All visible key entries, concatenated; identifies the view exactly.
    pub fn key_entries(&self) -> Vec<u32> {
        let mut out = Vec::new();
        for e in &self.edges {
            for m in [&e.enc_key, &e.dec_key].into_iter().flatten() {
                out.extend_from_slice(m.data());
            }
        }
        out
    }

    /// A generator seeded only from this view, so a randomized strategy
    /// driven by it is a deterministic function of the visible keys.
    /// The digest is FNV-1a, so it is stable across toolchains.
    pub fn derived_rng(&self, salt: u64) -> ChaCha20Rng {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut absorb = |word: u64| {
            for b in word.to_le_bytes() {
                h = (h ^ u64::from(b)).wrapping_mul(PRIME);
            }
        };
        absorb(salt);
        for e in &self.edges {
            for m in [&e.enc_key, &e.dec_key, &e.s_e, &e.partner] {
                match m {
                    None => absorb(u64::MAX),
                    Some(m) => {
                        absorb(m.rows() as u64);
                        m.data().iter().for_each(|&v| absorb(u64::from(v)));
                    }
                }
            }
        }
        ChaCha20Rng::seed_from_u64(h)
    }
}

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

/// The strategy battery. Ids are stable strings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Fixed `e_1` in every slot.
    ConstVector,
    /// Fresh uniform nonzero vectors.
    FreshRandom,
    /// A row of a visible decryption key (else a column of an encryption key).
    KeyImage,
    /// A column of the inverted receiver seed factor (else of `S_E`).
    SeedAware,
    /// One of two fixed basis vectors.
    BitConst,
    /// A genuine encryption of one of two messages, when an encryption key is visible.
    BitEncrypt,
    /// Scaled key rows.
    BitKeyImage,
    /// Two distinct columns of an inverted seed factor.
    BitSeedAware,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 8] = [
        Self::ConstVector,
        Self::FreshRandom,
        Self::KeyImage,
        Self::SeedAware,
        Self::BitConst,
        Self::BitEncrypt,
        Self::BitKeyImage,
        Self::BitSeedAware,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::ConstVector => "const_vector",
            Self::FreshRandom => "fresh_random",
            Self::KeyImage => "key_image",
            Self::SeedAware => "seed_aware",
            Self::BitConst => "bit_const",
            Self::BitEncrypt => "bit_encrypt",
            Self::BitKeyImage => "bit_key_image",
            Self::BitSeedAware => "bit_seed_aware",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.id() == id)
            .ok_or_else(|| AceError::InvalidStrategy(format!("unknown strategy id {id:?}")))
    }

    pub fn is_bit_encoder(self) -> bool {
        matches!(
            self,
            Self::BitConst | Self::BitEncrypt | Self::BitKeyImage | Self::BitSeedAware
        )
    }

    pub fn uses_seeds(self) -> bool {
        matches!(self, Self::SeedAware | Self::BitSeedAware)
    }

    pub fn is_randomized(self) -> bool {
        matches!(self, Self::FreshRandom)
    }
}

/// Every strategy in the battery.
pub fn strategy_library() -> Vec<StrategyKind> {
    StrategyKind::ALL.to_vec()
}

/// The bit-encoding subset of the battery.
pub fn bit_strategies() -> Vec<StrategyKind> {
    StrategyKind::ALL
        .into_iter()
        .filter(|k| k.is_bit_encoder())
        .collect()
}

/// A strategy bound to leaker set `A` and listener set `B`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackStrategy {
    pub kind: StrategyKind,
    pub leakers: Vec<PartyId>,
    pub listeners: Vec<PartyId>,
}

impl AttackStrategy {
    /// Rejects `(A, B)` when some leaker may legitimately write to some listener.
    pub fn new(
        kind: StrategyKind,
        leakers: Vec<PartyId>,
        listeners: Vec<PartyId>,
        policy: &Policy,
    ) -> Result<Self> {
        let out_of_range = leakers
            .iter()
            .chain(&listeners)
            .find(|&&p| p == 0 || p > policy.parties());
        if let Some(p) = out_of_range {
            return Err(AceError::InvalidStrategy(format!(
                "party {p} is not in the policy"
            )));
        }
        if policy.connects(&leakers, &listeners) {
            return Err(AceError::InvalidStrategy(format!(
                "leakers {leakers:?} may legitimately write to listeners {listeners:?}"
            )));
        }
        Ok(AttackStrategy {
            kind,
            leakers,
            listeners,
        })
    }

    pub fn id(&self) -> &'static str {
        self.kind.id()
    }

    /// Leaker's ciphertext: one nonzero length-`N` slot per edge. `bit` is
    /// `None` for the plain no-write experiment. `rng` is only consulted by
    /// randomized strategies.
    pub fn encode(&self, leaker: &KeyView, bit: Option<u8>, rng: &mut dyn RngCore) -> Vec<Matrix> {
        let bit = bit.unwrap_or(0);
        leaker
            .edges
            .iter()
            .map(|edge| encode_slot(self.kind, &leaker.params, edge, bit, rng))
            .collect()
    }

    /// Listener's guess of the bit, from its own keys and the sanitized slots.
    pub fn decode(&self, listener: &KeyView, sanitized: &[Matrix]) -> u8 {
        let pick = listener
            .edges
            .iter()
            .position(|e| e.dec_key.is_some())
            .or_else(|| listener.edges.iter().position(|e| e.enc_key.is_some()))
            .unwrap_or(0);
        decode_slot(&listener.params, &listener.edges[pick], &sanitized[pick])
    }
}

fn basis(params: &PairParams, i: usize) -> Matrix {
    Matrix::basis_vector(params.field(), params.ct_len(), i)
}

/// Scales by 2 when that stays distinct and nonzero, otherwise perturbs the
/// last coordinate.
fn alternate(params: &PairParams, v: &Matrix) -> Matrix {
    let field = params.field();
    if field.modulus() > 2 {
        let data: Vec<u32> = v.data().iter().map(|&x| field.add(x, x)).collect();
        return Matrix::from_vec(field, v.rows(), 1, data).expect("reduced");
    }
    let mut w = v.clone();
    let last = w.rows() - 1;
    w.set(last, 0, field.add(w.get(last, 0), 1));
    if w.is_zero() {
        w = basis(params, 0);
    }
    w
}

fn encode_slot(
    kind: StrategyKind,
    params: &PairParams,
    edge: &EdgeView,
    bit: u8,
    rng: &mut dyn RngCore,
) -> Matrix {
    let n = params.ct_len();
    let field = params.field();
    let key_image = || {
        if let Some(d) = &edge.dec_key {
            d.submatrix(0, 0, 1, n).expect("row").transpose()
        } else if let Some(e) = &edge.enc_key {
            e.submatrix(0, 0, n, 1).expect("column")
        } else {
            basis(params, 0)
        }
    };
    let seed_column = |col: usize| {
        if let Some(p) = &edge.partner {
            p.inverse()
                .expect("seed factor is invertible")
                .submatrix(0, col, n, 1)
                .expect("column")
        } else if let Some(s) = &edge.s_e {
            s.submatrix(0, n - 1 - col, n, 1).expect("column")
        } else {
            basis(params, col)
        }
    };
    let pick = |v0: Matrix, v1: Matrix| if bit == 0 { v0 } else { v1 };
    match kind {
        StrategyKind::ConstVector => basis(params, 0),
        StrategyKind::FreshRandom => Matrix::sample_nonzero_vector(rng, n, field),
        StrategyKind::KeyImage => key_image(),
        StrategyKind::SeedAware => seed_column(0),
        StrategyKind::BitConst => pick(basis(params, 0), basis(params, 1)),
        StrategyKind::BitEncrypt => match &edge.enc_key {
            Some(e) => {
                let c0 = e.submatrix(0, 0, n, 1).expect("column");
                let c1 = if params.msg_len() >= 2 {
                    e.submatrix(0, 1, n, 1).expect("column")
                } else {
                    alternate(params, &c0)
                };
                pick(c0, c1)
            }
            None => pick(basis(params, 0), basis(params, 1)),
        },
        StrategyKind::BitKeyImage => {
            let v = key_image();
            let w = alternate(params, &v);
            pick(v, w)
        }
        StrategyKind::BitSeedAware => pick(seed_column(0), seed_column(1)),
    }
}

/// Guess 1 iff the listener's statistic equals 2 (the second message value
/// under legitimate decryption), else 0.
fn decode_slot(params: &PairParams, edge: &EdgeView, c: &Matrix) -> u8 {
    let field = params.field();
    let stat = if let Some(d) = &edge.dec_key {
        d.mul(c).expect("shapes").get(0, 0)
    } else if let Some(e) = &edge.enc_key {
        let left_inverse = e
            .complete_columns()
            .and_then(|s| s.inverse())
            .expect("full rank");
        left_inverse.mul(c).expect("shapes").get(0, 0)
    } else {
        c.get(0, 0)
    };
    let target = if field.modulus() > 2 { 2 } else { 0 };
    u8::from(stat == target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf::seeded_rng;
    use crate::pair::pair_keygen_alt;

    #[test]
    fn otp_identities() {
        let mut rng = seeded_rng(40);
        let scheme = otp_scheme(8, &mut rng);
        let zero = vec![false; 8];
        assert_eq!(scheme.encrypt(&zero), scheme.sender);
        let m: Vec<bool> = (0..8).map(|i| i % 3 == 0).collect();
        assert_eq!(scheme.decrypt(&scheme.sanitize(&scheme.encrypt(&m))), m);

        let plain = OtpBaseline::from_keys(zero.clone(), zero.clone());
        assert_eq!(plain.encrypt(&m), m);
        assert_eq!(plain.sanitize(&m), m);
    }

    #[test]
    fn otp_reverse_channel() {
        let mut rng = seeded_rng(41);
        for _ in 0..1000 {
            let scheme = otp_scheme(16, &mut rng);
            let forged: Vec<bool> = (0..16).map(|_| rng.gen()).collect();
            let c = otp_reverse_attack(&scheme.receiver, &forged);
            let out = otp_reverse_decode(&scheme.sender, &scheme.sanitize(&c));
            assert_eq!(out, forged);
        }
        let scheme = otp_scheme(4, &mut rng);
        assert_eq!(
            otp_reverse_attack(&scheme.receiver, &[false; 4]),
            scheme.receiver
        );
    }

    #[test]
    fn naive_collusion_outputs_forgery() {
        let field = Field::new(7).unwrap();
        let mut rng = seeded_rng(42);
        for _ in 0..1000 {
            let s = naive_matrix_scheme(field, 3, &mut rng).unwrap();
            let m = Matrix::sample_nonzero_vector(&mut rng, 3, field);
            assert_eq!(
                s.decrypt(&s.sanitize(&s.encrypt(&m).unwrap()).unwrap())
                    .unwrap(),
                m
            );
            let forged = naive_collusion_attack(&s.enc_key, &s.dec_key, &m).unwrap();
            assert_eq!(s.sanitize(&forged).unwrap(), m);
        }
        let s = naive_matrix_scheme(field, 3, &mut rng).unwrap();
        let e1 = Matrix::basis_vector(field, 3, 0);
        let forged = naive_collusion_attack(&s.enc_key, &s.dec_key, &e1).unwrap();
        assert_eq!(s.sanitize(&forged).unwrap(), e1);
    }

    #[test]
    fn strategy_ids_round_trip() {
        for k in strategy_library() {
            assert_eq!(StrategyKind::from_id(k.id()).unwrap(), k);
        }
        assert!(StrategyKind::from_id("nope").is_err());
        assert_eq!(bit_strategies().len(), 4);
    }

    #[test]
    fn write_precondition_enforced() {
        let p = Policy::single_pair();
        assert!(AttackStrategy::new(StrategyKind::ConstVector, vec![2], vec![1, 2], &p).is_ok());
        assert!(AttackStrategy::new(StrategyKind::ConstVector, vec![1, 2], vec![1], &p).is_ok());
        assert!(matches!(
            AttackStrategy::new(StrategyKind::ConstVector, vec![1], vec![2], &p),
            Err(AceError::InvalidStrategy(_))
        ));
        assert!(AttackStrategy::new(StrategyKind::ConstVector, vec![3], vec![1], &p).is_err());
    }

    #[test]
    fn views_respect_party_sets() {
        let policy = Policy::bell_lapadula(3).unwrap();
        let params = PairParams::new(7, 1, 3).unwrap();
        let mut rng = seeded_rng(43);
        let material = crate::policy::policy_keygen_material(
            &policy,
            &params,
            crate::pair::KeygenVariant::Alt,
            &mut rng,
        )
        .unwrap();
        let view = KeyView::for_parties(
            &policy,
            &params,
            &material.edge_keys,
            &[2],
            SeedSource::Sampled(&material.seeds),
        );
        // edges: 1->2, 1->3, 2->3
        assert!(view.edges[0].enc_key.is_none() && view.edges[0].dec_key.is_some());
        assert!(view.edges[0].partner.is_some() && view.edges[0].s_e.is_none());
        assert!(view.edges[1] == EdgeView::default());
        assert!(view.edges[2].enc_key.is_some() && view.edges[2].dec_key.is_none());
        assert_eq!(view.key_entries().len(), 6);
        assert!(view.fingerprint() < 7);
    }

    #[test]
    fn encoders_emit_nonzero_slots() {
        let policy = Policy::single_pair();
        for q in [2u64, 3, 17] {
            let params = PairParams::new(q, 1, 4).unwrap();
            let mut rng = seeded_rng(44 + q);
            for _ in 0..50 {
                let (keys, seed) = pair_keygen_alt(&params, &mut rng, None).unwrap();
                let keys = [keys];
                let seeds = [seed];
                for parties in [vec![2], vec![1, 2], vec![1], vec![]] {
                    for source in [
                        SeedSource::Sampled(&seeds),
                        SeedSource::Canonical,
                        SeedSource::None,
                    ] {
                        let view = KeyView::for_parties(&policy, &params, &keys, &parties, source);
                        for kind in strategy_library() {
                            let s = AttackStrategy {
                                kind,
                                leakers: parties.clone(),
                                listeners: vec![],
                            };
                            for bit in [None, Some(0), Some(1)] {
                                let slots = s.encode(&view, bit, &mut rng);
                                assert_eq!(slots.len(), 1);
                                assert_eq!(slots[0].rows(), 4);
                                assert!(!slots[0].is_zero(), "{} q={q}", kind.id());
                            }
                            if kind.is_bit_encoder() {
                                let a = s.encode(&view, Some(0), &mut rng);
                                let b = s.encode(&view, Some(1), &mut rng);
                                assert_ne!(a, b, "{} must separate the bits", kind.id());
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn canonical_seeds_reproduce_keys() {
        let params = PairParams::new(3, 1, 4).unwrap();
        let mut rng = seeded_rng(45);
        let (keys, _) = crate::pair::pair_keygen(&params, &mut rng).unwrap();
        let view = KeyView::for_parties(
            &Policy::single_pair(),
            &params,
            std::slice::from_ref(&keys),
            &[1, 2],
            SeedSource::Canonical,
        );
        let e = &view.edges[0];
        assert_eq!(
            e.s_e.as_ref().unwrap().submatrix(0, 0, 4, 1).unwrap(),
            keys.enc_key
        );
        assert_eq!(
            e.partner.as_ref().unwrap().submatrix(0, 0, 1, 4).unwrap(),
            keys.dec_key
        );
    }
}
