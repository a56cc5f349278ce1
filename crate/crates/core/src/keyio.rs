//! Byte formats for keys, ciphertexts and policies.
//!
//! Key file (all integers little-endian):
//!
//! ```text
//! "ACEK" | version u16 | role u8 (0 sanitizer, 1 party)
//! q u64 | L u32 | N u32 | n u32 | edge_count u32 | (from u32, to u32) * edge_count
//! [party u32]                                   role 1 only
//! matrices, row-major, each entry in w bytes    w = ceil(bits(q - 1) / 8)
//! one check element per matrix, w bytes         sum of its entries mod q
//! ```
//!
//! A sanitizer file holds `K_R` for every edge. A party file holds `K_E` for
//! each outgoing edge, then `K_D` for each incoming edge, all in policy order.
//!
//! Ciphertext: `q u64 | L u32 | N u32 | edge_count u32` followed by the slots,
//! each `N` entries of `w` bytes. Whether it has been sanitized is not encoded.
//!
//! Loading is fail-closed: out-of-range entries, rank defects and check
//! mismatches are all rejected.

use std::fs;
use std::path::Path;

use crate::error::{AceError, Result};
use crate::gf::Field;
use crate::matrix::Matrix;
use crate::pair::PairParams;
use crate::policy::{Edge, PartyId, PartyKey, Policy, PolicyCiphertext, SanitizerKey};

pub const KEY_MAGIC: &[u8; 4] = b"ACEK";
pub const KEY_VERSION: u16 = 1;
pub const CIPHERTEXT_HEADER_LEN: usize = 20;

const ROLE_SANITIZER: u8 = 0;
const ROLE_PARTY: u8 = 1;

/// A decoded key file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeyFile {
    Sanitizer(SanitizerKey),
    Party(PartyKey),
}

impl KeyFile {
    pub fn params(&self) -> &PairParams {
        match self {
            KeyFile::Sanitizer(k) => &k.params,
            KeyFile::Party(k) => &k.params,
        }
    }

    pub fn policy(&self) -> &Policy {
        match self {
            KeyFile::Sanitizer(k) => &k.policy,
            KeyFile::Party(k) => &k.policy,
        }
    }
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

fn put_element(out: &mut Vec<u8>, value: u32, width: usize) {
    out.extend_from_slice(&value.to_le_bytes()[..width]);
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    let w = m.field().element_width();
    for &v in m.data() {
        put_element(out, v, w);
    }
}

fn checksum(m: &Matrix) -> u32 {
    let field = m.field();
    m.data().iter().fold(0, |acc, &v| field.add(acc, v))
}

fn put_header(out: &mut Vec<u8>, role: u8, policy: &Policy, params: &PairParams) {
    out.extend_from_slice(KEY_MAGIC);
    out.extend_from_slice(&KEY_VERSION.to_le_bytes());
    out.push(role);
    out.extend_from_slice(&(params.q() as u64).to_le_bytes());
    out.extend_from_slice(&(params.msg_len() as u32).to_le_bytes());
    out.extend_from_slice(&(params.ct_len() as u32).to_le_bytes());
    out.extend_from_slice(&policy.parties().to_le_bytes());
    out.extend_from_slice(&(policy.edge_count() as u32).to_le_bytes());
    for e in policy.edges() {
        out.extend_from_slice(&e.from.to_le_bytes());
        out.extend_from_slice(&e.to.to_le_bytes());
    }
}

fn put_body(out: &mut Vec<u8>, matrices: &[&Matrix]) {
    for m in matrices {
        put_matrix(out, m);
    }
    for m in matrices {
        put_element(out, checksum(m), m.field().element_width());
    }
}

pub fn serialize_sanitizer_key(key: &SanitizerKey) -> Vec<u8> {
    let mut out = Vec::new();
    put_header(&mut out, ROLE_SANITIZER, &key.policy, &key.params);
    let matrices: Vec<&Matrix> = key.keys.iter().collect();
    put_body(&mut out, &matrices);
    out
}

pub fn serialize_party_key(key: &PartyKey) -> Vec<u8> {
    let mut out = Vec::new();
    put_header(&mut out, ROLE_PARTY, &key.policy, &key.params);
    out.extend_from_slice(&key.party.to_le_bytes());
    let matrices: Vec<&Matrix> = key.outgoing.values().chain(key.incoming.values()).collect();
    put_body(&mut out, &matrices);
    out
}

pub fn serialize_key(key: &KeyFile) -> Vec<u8> {
    match key {
        KeyFile::Sanitizer(k) => serialize_sanitizer_key(k),
        KeyFile::Party(k) => serialize_party_key(k),
    }
}

pub fn serialize_ciphertext(ct: &PolicyCiphertext) -> Vec<u8> {
    let params = &ct.params;
    let w = params.field().element_width();
    let mut out = Vec::with_capacity(CIPHERTEXT_HEADER_LEN + ct.slots.len() * params.ct_len() * w);
    out.extend_from_slice(&(params.q() as u64).to_le_bytes());
    out.extend_from_slice(&(params.msg_len() as u32).to_le_bytes());
    out.extend_from_slice(&(params.ct_len() as u32).to_le_bytes());
    out.extend_from_slice(&(ct.slots.len() as u32).to_le_bytes());
    for s in &ct.slots {
        put_matrix(&mut out, s);
    }
    out
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                AceError::FormatError(format!("truncated input at byte {}", self.pos))
            })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn element(&mut self, field: Field) -> Result<u32> {
        let w = field.element_width();
        let mut bytes = [0u8; 4];
        bytes[..w].copy_from_slice(self.take(w)?);
        let v = u32::from_le_bytes(bytes);
        if v >= field.modulus() {
            return Err(AceError::FormatError(format!(
                "entry {v} out of range for GF({})",
                field.modulus()
            )));
        }
        Ok(v)
    }

    fn matrix(&mut self, field: Field, rows: usize, cols: usize) -> Result<Matrix> {
        let data = (0..rows * cols)
            .map(|_| self.element(field))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(field, rows, cols, data).map_err(|e| AceError::FormatError(e.to_string()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(AceError::FormatError(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn params_from(q: u64, l: u32, n: u32) -> Result<PairParams> {
    PairParams::new(q, l as usize, n as usize).map_err(|e| AceError::FormatError(e.to_string()))
}

/// Reads matrices of the given shapes and then their check elements.
fn read_body(r: &mut Reader<'_>, field: Field, shapes: &[(usize, usize)]) -> Result<Vec<Matrix>> {
    let matrices = shapes
        .iter()
        .map(|&(rows, cols)| r.matrix(field, rows, cols))
        .collect::<Result<Vec<_>>>()?;
    for (i, m) in matrices.iter().enumerate() {
        let stored = r.element(field)?;
        if stored != checksum(m) {
            return Err(AceError::IntegrityError(format!(
                "check element mismatch on matrix {i}"
            )));
        }
    }
    Ok(matrices)
}

fn require_full_rank(m: &Matrix, what: &str, edge: &Edge) -> Result<()> {
    if !m.is_full_rank() {
        return Err(AceError::IntegrityError(format!(
            "{what} for edge {edge} is rank deficient"
        )));
    }
    Ok(())
}

pub fn deserialize_key(bytes: &[u8]) -> Result<KeyFile> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != KEY_MAGIC {
        return Err(AceError::FormatError("bad magic".into()));
    }
    let version = r.u16()?;
    if version != KEY_VERSION {
        return Err(AceError::FormatError(format!(
            "unsupported version {version}"
        )));
    }
    let role = r.u8()?;
    if role != ROLE_SANITIZER && role != ROLE_PARTY {
        return Err(AceError::FormatError(format!("unknown role {role}")));
    }
    let q = r.u64()?;
    let (l, n) = (r.u32()?, r.u32()?);
    let params = params_from(q, l, n)?;
    let parties = r.u32()?;
    let edge_count = r.u32()? as usize;
    // each edge needs 8 bytes; reject absurd counts before allocating
    if edge_count > bytes.len() / 8 {
        return Err(AceError::FormatError("edge count exceeds input".into()));
    }
    let mut edges = Vec::with_capacity(edge_count);
    for _ in 0..edge_count {
        edges.push(Edge::new(r.u32()?, r.u32()?));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AceError::FormatError(
            "edges not in strictly increasing order".into(),
        ));
    }
    let policy = Policy::new(parties, edges.iter().map(|e| (e.from, e.to)))
        .map_err(|e| AceError::FormatError(e.to_string()))?;
    let field = params.field();
    let (l, n) = (params.msg_len(), params.ct_len());

    let key = if role == ROLE_SANITIZER {
        let keys = read_body(&mut r, field, &vec![(n, n); edge_count])?;
        for (k, e) in keys.iter().zip(policy.edges()) {
            require_full_rank(k, "K_R", e)?;
        }
        KeyFile::Sanitizer(SanitizerKey {
            policy,
            params,
            keys,
        })
    } else {
        let party: PartyId = r.u32()?;
        if party == 0 || party > parties {
            return Err(AceError::FormatError(format!(
                "party {party} outside 1..={parties}"
            )));
        }
        let outgoing: Vec<Edge> = policy
            .edges()
            .iter()
            .filter(|e| e.from == party)
            .copied()
            .collect();
        let incoming: Vec<Edge> = policy
            .edges()
            .iter()
            .filter(|e| e.to == party)
            .copied()
            .collect();
        let shapes: Vec<(usize, usize)> = outgoing
            .iter()
            .map(|_| (n, l))
            .chain(incoming.iter().map(|_| (l, n)))
            .collect();
        let mut matrices = read_body(&mut r, field, &shapes)?.into_iter();
        let mut key = PartyKey {
            party,
            policy: policy.clone(),
            params,
            outgoing: Default::default(),
            incoming: Default::default(),
        };
        for e in outgoing {
            let m = matrices.next().expect("shape count");
            require_full_rank(&m, "K_E", &e)?;
            key.outgoing.insert(e, m);
        }
        for e in incoming {
            let m = matrices.next().expect("shape count");
            require_full_rank(&m, "K_D", &e)?;
            key.incoming.insert(e, m);
        }
        KeyFile::Party(key)
    };
    r.finish()?;
    Ok(key)
}

/// Decodes a ciphertext. `sanitized` is the caller's knowledge of which
/// side of the sanitizer the bytes came from.
pub fn deserialize_ciphertext(bytes: &[u8], sanitized: bool) -> Result<PolicyCiphertext> {
    let mut r = Reader::new(bytes);
    let q = r.u64()?;
    let (l, n) = (r.u32()?, r.u32()?);
    let params = params_from(q, l, n)?;
    let slots = r.u32()? as usize;
    let field = params.field();
    let n = params.ct_len();
    let expected = slots
        .checked_mul(n * field.element_width())
        .filter(|&len| len == bytes.len() - CIPHERTEXT_HEADER_LEN);
    if expected.is_none() {
        return Err(AceError::FormatError(format!(
            "payload is {} bytes, expected {slots} slots of {n} entries",
            bytes.len() - CIPHERTEXT_HEADER_LEN
        )));
    }
    let mut out = Vec::with_capacity(slots);
    for i in 0..slots {
        let s = r.matrix(field, n, 1)?;
        if s.is_zero() {
            return Err(AceError::IntegrityError(format!("slot {i} is zero")));
        }
        out.push(s);
    }
    r.finish()?;
    PolicyCiphertext::new(params, out, sanitized)
}

pub fn write_key_file(path: &Path, key: &KeyFile) -> Result<()> {
    fs::write(path, serialize_key(key))
        .map_err(|e| AceError::FormatError(format!("writing {}: {e}", path.display())))
}

pub fn read_key_file(path: &Path) -> Result<KeyFile> {
    let bytes = fs::read(path)
        .map_err(|e| AceError::FormatError(format!("reading {}: {e}", path.display())))?;
    deserialize_key(&bytes)
}

pub fn read_sanitizer_key(path: &Path) -> Result<SanitizerKey> {
    match read_key_file(path)? {
        KeyFile::Sanitizer(k) => Ok(k),
        KeyFile::Party(_) => Err(AceError::FormatError(format!(
            "{} holds a party key, not a sanitizer key",
            path.display()
        ))),
    }
}

pub fn read_party_key(path: &Path) -> Result<PartyKey> {
    match read_key_file(path)? {
        KeyFile::Party(k) => Ok(k),
        KeyFile::Sanitizer(_) => Err(AceError::FormatError(format!(
            "{} holds a sanitizer key, not a party key",
            path.display()
        ))),
    }
}

/// Policy text form, as accepted by [`Policy::parse`].
pub fn serialize_policy(policy: &Policy) -> String {
    policy.to_text()
}

pub fn deserialize_policy(text: &str) -> Result<Policy> {
    Policy::parse(text)
}
