//! General policies: one independent pair-scheme instance per policy edge.
//!
//! A ciphertext has one length-`N` slot per edge, in canonical
//! (lexicographic) edge order. The sender fills the slot of its edge with a
//! real encryption and every other slot with a uniform nonzero dummy.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::error::{AceError, Result};
use crate::matrix::Matrix;
use crate::pair::{keygen_variant, Decrypted, KeygenSeed, KeygenVariant, PairKeys, PairParams};

/// Party ids are 1-based.
pub type PartyId = u32;

/// Directed edge `from -> to`: `from` may write to `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Edge {
    pub from: PartyId,
    pub to: PartyId,
}

impl Edge {
    pub fn new(from: PartyId, to: PartyId) -> Self {
        Edge { from, to }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Directed graph over parties `1..=n`, edges kept in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Policy {
    parties: u32,
    edges: Vec<Edge>,
}

impl Policy {
    pub fn new(parties: u32, edges: impl IntoIterator<Item = (PartyId, PartyId)>) -> Result<Self> {
        if parties == 0 {
            return Err(AceError::InvalidArgument(
                "policy needs at least one party".into(),
            ));
        }
        let mut list: Vec<Edge> = edges.into_iter().map(|(a, b)| Edge::new(a, b)).collect();
        if list.is_empty() {
            return Err(AceError::InvalidArgument("policy has no edges".into()));
        }
        for e in &list {
            if e.from == 0 || e.to == 0 || e.from > parties || e.to > parties {
                return Err(AceError::InvalidArgument(format!(
                    "edge {e} has an endpoint outside 1..={parties}"
                )));
            }
        }
        list.sort();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(AceError::InvalidArgument(format!(
                "duplicate edge {}",
                w[0]
            )));
        }
        Ok(Policy {
            parties,
            edges: list,
        })
    }

    /// `E = {(i, j) : i < j}`: writes only flow up the hierarchy.
    pub fn bell_lapadula(parties: u32) -> Result<Self> {
        let edges = (1..=parties).flat_map(|i| (i + 1..=parties).map(move |j| (i, j)));
        Self::new(parties, edges)
    }

    /// Two parties, party 1 writes to party 2.
    pub fn single_pair() -> Self {
        Self::new(2, [(1, 2)]).expect("valid")
    }

    pub fn parties(&self) -> u32 {
        self.parties
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_index(&self, from: PartyId, to: PartyId) -> Option<usize> {
        self.edges.binary_search(&Edge::new(from, to)).ok()
    }

    pub fn allows(&self, from: PartyId, to: PartyId) -> bool {
        self.edge_index(from, to).is_some()
    }

    /// True when some `a` in `writers` may write to some `b` in `readers`.
    pub fn connects(&self, writers: &[PartyId], readers: &[PartyId]) -> bool {
        writers
            .iter()
            .any(|&a| readers.iter().any(|&b| self.allows(a, b)))
    }

    /// Parses `bell-lapadula:<n>` or the text format written by [`Policy::to_text`].
    pub fn parse(text: &str) -> Result<Self> {
        if let Some(n) = text.trim().strip_prefix("bell-lapadula:") {
            let n = n
                .parse()
                .map_err(|_| AceError::InvalidArgument(format!("bad party count in {text:?}")))?;
            return Self::bell_lapadula(n);
        }
        let mut parties = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || AceError::InvalidArgument(format!("policy line {}: {raw:?}", lineno + 1));
            let mut words = line.split_whitespace();
            let first = words.next().ok_or_else(bad)?;
            if first == "parties" {
                parties = Some(words.next().ok_or_else(bad)?.parse().map_err(|_| bad())?);
            } else {
                let to = words.next().ok_or_else(bad)?;
                if words.next().is_some() {
                    return Err(bad());
                }
                edges.push((
                    first.parse().map_err(|_| bad())?,
                    to.parse().map_err(|_| bad())?,
                ));
            }
        }
        let parties = parties.ok_or_else(|| {
            AceError::InvalidArgument("policy text lacks a `parties <n>` line".into())
        })?;
        Self::new(parties, edges)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("parties {}\n", self.parties);
        for e in &self.edges {
            s.push_str(&format!("{} {}\n", e.from, e.to));
        }
        s
    }
}

/// Per-edge sanitizer matrices, aligned with the policy's edge order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SanitizerKey {
    pub policy: Policy,
    pub params: PairParams,
    pub keys: Vec<Matrix>,
}

/// Key bundle of one party.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartyKey {
    pub party: PartyId,
    pub policy: Policy,
    pub params: PairParams,
    /// Encryption keys for edges leaving `party`.
    pub outgoing: BTreeMap<Edge, Matrix>,
    /// Decryption keys for edges entering `party`.
    pub incoming: BTreeMap<Edge, Matrix>,
}

/// All key material of a policy instance, including seeds.
#[derive(Clone, Debug)]
pub struct PolicyKeyMaterial {
    pub policy: Policy,
    pub params: PairParams,
    pub edge_keys: Vec<PairKeys>,
    pub seeds: Vec<KeygenSeed>,
}

impl PolicyKeyMaterial {
    pub fn sanitizer_key(&self) -> SanitizerKey {
        SanitizerKey {
            policy: self.policy.clone(),
            params: self.params,
            keys: self.edge_keys.iter().map(|k| k.san_key.clone()).collect(),
        }
    }

    pub fn party_key(&self, party: PartyId) -> PartyKey {
        let mut outgoing = BTreeMap::new();
        let mut incoming = BTreeMap::new();
        for (edge, keys) in self.policy.edges.iter().zip(&self.edge_keys) {
            if edge.from == party {
                outgoing.insert(*edge, keys.enc_key.clone());
            }
            if edge.to == party {
                incoming.insert(*edge, keys.dec_key.clone());
            }
        }
        PartyKey {
            party,
            policy: self.policy.clone(),
            params: self.params,
            outgoing,
            incoming,
        }
    }

    pub fn party_keys(&self) -> Vec<PartyKey> {
        (1..=self.policy.parties)
            .map(|p| self.party_key(p))
            .collect()
    }
}

/// Independent keygen per edge with the chosen sampler.
pub fn policy_keygen_material<R: Rng + ?Sized>(
    policy: &Policy,
    params: &PairParams,
    variant: KeygenVariant,
    rng: &mut R,
) -> Result<PolicyKeyMaterial> {
    let mut edge_keys = Vec::with_capacity(policy.edge_count());
    let mut seeds = Vec::with_capacity(policy.edge_count());
    for _ in policy.edges() {
        let (k, s) = keygen_variant(variant, params, rng)?;
        edge_keys.push(k);
        seeds.push(s);
    }
    Ok(PolicyKeyMaterial {
        policy: policy.clone(),
        params: *params,
        edge_keys,
        seeds,
    })
}

/// Sanitizer key and the keys of parties `1..=n`, in order.
pub fn policy_keygen<R: Rng + ?Sized>(
    policy: &Policy,
    params: &PairParams,
    rng: &mut R,
) -> Result<(SanitizerKey, Vec<PartyKey>)> {
    let material = policy_keygen_material(policy, params, KeygenVariant::Standard, rng)?;
    Ok((material.sanitizer_key(), material.party_keys()))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PolicyCiphertext {
    pub params: PairParams,
    pub slots: Vec<Matrix>,
    /// Local bookkeeping only; never written to the wire.
    pub sanitized: bool,
}

impl PolicyCiphertext {
    /// Checks slot shapes and the nonzero invariant.
    pub fn new(params: PairParams, slots: Vec<Matrix>, sanitized: bool) -> Result<Self> {
        for (i, s) in slots.iter().enumerate() {
            if s.field() != params.field() || s.rows() != params.ct_len() || s.cols() != 1 {
                return Err(AceError::MalformedCiphertext(format!(
                    "slot {i} is not a length-{} column over GF({})",
                    params.ct_len(),
                    params.q()
                )));
            }
            if s.is_zero() {
                return Err(AceError::MalformedCiphertext(format!("slot {i} is zero")));
            }
        }
        Ok(PolicyCiphertext {
            params,
            slots,
            sanitized,
        })
    }
}

pub fn policy_encrypt<R: Rng + ?Sized>(
    from: PartyId,
    to: PartyId,
    key: &PartyKey,
    message: &Matrix,
    rng: &mut R,
) -> Result<PolicyCiphertext> {
    if key.party != from {
        return Err(AceError::NotAuthorized(format!(
            "key belongs to party {}, not sender {from}",
            key.party
        )));
    }
    let target = Edge::new(from, to);
    let enc_key = key
        .outgoing
        .get(&target)
        .ok_or_else(|| AceError::NotAuthorized(format!("policy has no edge {target}")))?;
    let real = crate::pair::pair_encrypt(enc_key, message)?.into_vector();
    let n = key.params.ct_len();
    let field = key.params.field();
    let mut real = Some(real);
    let slots = key
        .policy
        .edges()
        .iter()
        .map(|e| {
            if *e == target {
                real.take().expect("edges are unique")
            } else {
                Matrix::sample_nonzero_vector(rng, n, field)
            }
        })
        .collect();
    Ok(PolicyCiphertext {
        params: key.params,
        slots,
        sanitized: false,
    })
}

pub fn policy_sanitize(key: &SanitizerKey, ct: &PolicyCiphertext) -> Result<PolicyCiphertext> {
    if ct.sanitized {
        return Err(AceError::MalformedCiphertext("already sanitized".into()));
    }
    if ct.params != key.params {
        return Err(AceError::MalformedCiphertext(
            "ciphertext parameters differ from the sanitizer key".into(),
        ));
    }
    if ct.slots.len() != key.keys.len() {
        return Err(AceError::MalformedCiphertext(format!(
            "{} slots for a policy with {} edges",
            ct.slots.len(),
            key.keys.len()
        )));
    }
    let checked = PolicyCiphertext::new(ct.params, ct.slots.clone(), false)?;
    let slots = checked
        .slots
        .iter()
        .zip(&key.keys)
        .map(|(c, k)| k.mul_unchecked(c))
        .collect();
    Ok(PolicyCiphertext {
        params: ct.params,
        slots,
        sanitized: true,
    })
}

pub fn policy_decrypt(
    from: PartyId,
    to: PartyId,
    key: &PartyKey,
    ct: &PolicyCiphertext,
) -> Result<Decrypted> {
    if key.party != to {
        return Err(AceError::NotAuthorized(format!(
            "key belongs to party {}, not receiver {to}",
            key.party
        )));
    }
    let edge = Edge::new(from, to);
    let dec_key = key
        .incoming
        .get(&edge)
        .ok_or_else(|| AceError::NotAuthorized(format!("no decryption key for edge {edge}")))?;
    if !ct.sanitized {
        return Err(AceError::MalformedCiphertext(
            "ciphertext was not sanitized".into(),
        ));
    }
    if ct.params != key.params || ct.slots.len() != key.policy.edge_count() {
        return Err(AceError::MalformedCiphertext(
            "ciphertext does not match the key's policy".into(),
        ));
    }
    let idx = key
        .policy
        .edge_index(from, to)
        .expect("incoming edge is in policy");
    let slot = crate::pair::PairCiphertext::new(ct.slots[idx].clone())?;
    crate::pair::pair_decrypt(dec_key, &slot)
}
