//! The random matrix scheme for a single sender/receiver pair.
//!
//! A key is a triple `(san_key, enc_key, dec_key)` of full-rank matrices of
//! shapes `N x N`, `N x L` and `L x N` with `dec_key * san_key * enc_key = I_L`.
//! The sender computes `c = enc_key * m`, the sanitizer `c' = san_key * c`,
//! and the receiver `m = dec_key * c'`.
//!
//! Three samplers are provided. They induce the same (uniform) distribution
//! over the keyspace; the two alternatives expose different seed material,
//! which the attack experiments hand to the leaker.

use std::ops::Range;

use rand::Rng;
use serde::Serialize;

use crate::error::{AceError, Result};
use crate::gf::Field;
use crate::matrix::{all_matrices, count_full_rank, full_rank_matrices, Matrix};

/// Default refusal threshold for exhaustive enumerations.
pub const DEFAULT_FEASIBILITY_CAP: u128 = 10_000_000;

/// Field, message length `L` and ciphertext length `N > 2L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct PairParams {
    #[serde(serialize_with = "ser_field")]
    field: Field,
    #[serde(rename = "L")]
    msg_len: usize,
    #[serde(rename = "N")]
    ct_len: usize,
}

fn ser_field<S: serde::Serializer>(f: &Field, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u32(f.modulus())
}

impl PairParams {
    pub fn new(q: u64, msg_len: usize, ct_len: usize) -> Result<Self> {
        Self::with_field(Field::new(q)?, msg_len, ct_len)
    }

    pub fn with_field(field: Field, msg_len: usize, ct_len: usize) -> Result<Self> {
        if msg_len < 1 {
            return Err(AceError::InvalidParams(
                "message length must be >= 1".into(),
            ));
        }
        if ct_len <= 2 * msg_len {
            return Err(AceError::InvalidParams(format!(
                "ciphertext length {ct_len} must exceed twice the message length {msg_len}"
            )));
        }
        Ok(PairParams {
            field,
            msg_len,
            ct_len,
        })
    }

    #[inline]
    pub fn field(&self) -> Field {
        self.field
    }

    #[inline]
    pub fn q(&self) -> u32 {
        self.field.modulus()
    }

    /// Message length `L`.
    #[inline]
    pub fn msg_len(&self) -> usize {
        self.msg_len
    }

    /// Ciphertext length `N`.
    #[inline]
    pub fn ct_len(&self) -> usize {
        self.ct_len
    }

    /// Distance parameter of the no-write guarantee: `2 q^-(N/2 - L)`.
    pub fn epsilon(&self) -> f64 {
        2.0 * self.decay()
    }

    /// The sharper constant `5/4 q^-(N/2 - L)` obtained by the full argument;
    /// reported alongside [`PairParams::epsilon`] but never used as a gate.
    pub fn tight_epsilon(&self) -> f64 {
        1.25 * self.decay()
    }

    /// Distance parameter when `edges` independent copies are composed.
    pub fn policy_epsilon(&self, edges: usize) -> f64 {
        edges as f64 * self.epsilon()
    }

    fn decay(&self) -> f64 {
        let exponent = self.ct_len as f64 / 2.0 - self.msg_len as f64;
        (self.q() as f64).powf(-exponent)
    }

    /// `|FR(N x N)| * |FR(N x L)| * q^(L (N - L))`.
    pub fn keyspace_size(&self) -> u128 {
        let (q, l, n) = (self.q() as u64, self.msg_len, self.ct_len);
        count_full_rank(q, n, n)
            .saturating_mul(count_full_rank(q, n, l))
            .saturating_mul((q as u128).saturating_pow((l * (n - l)) as u32))
    }

    /// Nonzero messages: `q^L - 1`.
    pub fn message_space_size(&self) -> u128 {
        (self.q() as u128).saturating_pow(self.msg_len as u32) - 1
    }

    /// Nonzero ciphertexts: `q^N - 1`.
    pub fn ciphertext_space_size(&self) -> u128 {
        (self.q() as u128).saturating_pow(self.ct_len as u32) - 1
    }

    fn embed(&self) -> Matrix {
        // [I_L ; 0]
        let mut m = Matrix::zeros(self.field, self.ct_len, self.msg_len);
        for i in 0..self.msg_len {
            m.set(i, i, 1);
        }
        m
    }

    fn project(&self) -> Matrix {
        // [I_L | 0]
        self.embed().transpose()
    }
}

/// One keyspace element.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PairKeys {
    /// `N x N`, invertible; held by the sanitizer.
    pub san_key: Matrix,
    /// `N x L`, full rank; held by the sender.
    pub enc_key: Matrix,
    /// `L x N`, full rank; held by the receiver.
    pub dec_key: Matrix,
}

impl PairKeys {
    /// Checks shapes, ranks and `dec * san * enc = I_L`.
    pub fn validate(&self, params: &PairParams) -> Result<()> {
        let (l, n) = (params.msg_len, params.ct_len);
        let shapes = [
            (&self.san_key, n, n, "sanitizer"),
            (&self.enc_key, n, l, "encryption"),
            (&self.dec_key, l, n, "decryption"),
        ];
        for (m, r, c, name) in shapes {
            if m.field() != params.field {
                return Err(AceError::ParamsMismatch {
                    left: params.q(),
                    right: m.field().modulus(),
                });
            }
            if m.rows() != r || m.cols() != c {
                return Err(AceError::DimensionError(format!(
                    "{name} key is {}x{}, expected {r}x{c}",
                    m.rows(),
                    m.cols()
                )));
            }
            if !m.is_full_rank() {
                return Err(AceError::IntegrityError(format!(
                    "{name} key is rank deficient"
                )));
            }
        }
        let product = self
            .dec_key
            .mul_unchecked(&self.san_key)
            .mul_unchecked(&self.enc_key);
        if !product.is_identity() {
            return Err(AceError::IntegrityError(
                "decryption * sanitizer * encryption is not the identity".into(),
            ));
        }
        Ok(())
    }

    /// `(san^T, dec^T, enc^T)`, which lies in the keyspace iff `self` does.
    pub fn transpose_dual(&self) -> PairKeys {
        PairKeys {
            san_key: self.san_key.transpose(),
            enc_key: self.dec_key.transpose(),
            dec_key: self.enc_key.transpose(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KeygenVariant {
    Standard,
    Alt,
    Alt2,
}

impl KeygenVariant {
    pub const ALL: [KeygenVariant; 3] = [Self::Standard, Self::Alt, Self::Alt2];

    pub fn name(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Alt => "alt",
            Self::Alt2 => "alt2",
        }
    }
}

/// Randomness a keygen consumed. Honest deployments drop it; attack
/// experiments may hand parts of it to the leaker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeygenSeed {
    /// `enc = S_E [I;0]`, `dec = [I|T] S_D`, `san = S_D^-1 S_E^-1`.
    Standard { s_e: Matrix, s_d: Matrix, t: Matrix },
    /// `dec = [I|0] S_F`, `san = S_F^-1 [[I, T], [0, Z]] S_E^-1`.
    Alt {
        s_e: Matrix,
        s_f: Matrix,
        t: Matrix,
        z: Matrix,
    },
    /// `dec = [I|0] S_G`, `san = S_G^-1 [[I, 0], [U, Z]] S_E^-1`.
    Alt2 {
        s_e: Matrix,
        s_g: Matrix,
        u: Matrix,
        z: Matrix,
    },
}

impl KeygenSeed {
    pub fn variant(&self) -> KeygenVariant {
        match self {
            Self::Standard { .. } => KeygenVariant::Standard,
            Self::Alt { .. } => KeygenVariant::Alt,
            Self::Alt2 { .. } => KeygenVariant::Alt2,
        }
    }

    /// The `S_E` factor; every variant has one.
    pub fn s_e(&self) -> &Matrix {
        match self {
            Self::Standard { s_e, .. } | Self::Alt { s_e, .. } | Self::Alt2 { s_e, .. } => s_e,
        }
    }

    /// The receiver-side factor: `S_D`, `S_F` or `S_G`.
    pub fn partner(&self) -> &Matrix {
        match self {
            Self::Standard { s_d, .. } => s_d,
            Self::Alt { s_f, .. } => s_f,
            Self::Alt2 { s_g, .. } => s_g,
        }
    }

    /// Deterministically maps seed material to keys. Assumes shapes match
    /// `params`; ranks are checked where an inverse is required.
    pub fn derive_keys(&self, params: &PairParams) -> Result<PairKeys> {
        let (l, n) = (params.msg_len, params.ct_len);
        let field = params.field;
        let s_e = self.s_e();
        let enc_key = s_e.mul(&params.embed())?;
        let s_e_inv = s_e.inverse()?;
        match self {
            Self::Standard { s_d, t, .. } => {
                let dec_key = Matrix::hstack(&Matrix::identity(field, l), t)?.mul(s_d)?;
                let san_key = s_d.inverse()?.mul(&s_e_inv)?;
                Ok(PairKeys {
                    san_key,
                    enc_key,
                    dec_key,
                })
            }
            Self::Alt { s_f, t, z, .. } => {
                let middle = Matrix::block(&[
                    &[&Matrix::identity(field, l), t],
                    &[&Matrix::zeros(field, n - l, l), z],
                ])?;
                let san_key = s_f.inverse()?.mul(&middle)?.mul(&s_e_inv)?;
                let dec_key = params.project().mul(s_f)?;
                Ok(PairKeys {
                    san_key,
                    enc_key,
                    dec_key,
                })
            }
            Self::Alt2 { s_g, u, z, .. } => {
                let middle = Matrix::block(&[
                    &[&Matrix::identity(field, l), &Matrix::zeros(field, l, n - l)],
                    &[u, z],
                ])?;
                let san_key = s_g.inverse()?.mul(&middle)?.mul(&s_e_inv)?;
                let dec_key = params.project().mul(s_g)?;
                Ok(PairKeys {
                    san_key,
                    enc_key,
                    dec_key,
                })
            }
        }
    }
}

/// Samples a standard seed and derives the keys.
pub fn pair_keygen<R: Rng + ?Sized>(
    params: &PairParams,
    rng: &mut R,
) -> Result<(PairKeys, KeygenSeed)> {
    let (l, n, field) = (params.msg_len, params.ct_len, params.field);
    let s_e = Matrix::sample_full_rank(rng, n, n, field)?;
    let s_d = Matrix::sample_full_rank(rng, n, n, field)?;
    let t = Matrix::sample_uniform(rng, l, n - l, field);
    let seed = KeygenSeed::Standard { s_e, s_d, t };
    Ok((seed.derive_keys(params)?, seed))
}

/// Alternative sampler through `S_F`; `fixed_z` pins the lower-right block.
pub fn pair_keygen_alt<R: Rng + ?Sized>(
    params: &PairParams,
    rng: &mut R,
    fixed_z: Option<&Matrix>,
) -> Result<(PairKeys, KeygenSeed)> {
    let (l, n, field) = (params.msg_len, params.ct_len, params.field);
    let z = match fixed_z {
        Some(z) => {
            check_z(params, z)?;
            z.clone()
        }
        None => Matrix::sample_full_rank(rng, n - l, n - l, field)?,
    };
    let s_e = Matrix::sample_full_rank(rng, n, n, field)?;
    let s_f = Matrix::sample_full_rank(rng, n, n, field)?;
    let t = Matrix::sample_uniform(rng, l, n - l, field);
    let seed = KeygenSeed::Alt { s_e, s_f, t, z };
    Ok((seed.derive_keys(params)?, seed))
}

/// Transposed alternative sampler through `S_G`.
pub fn pair_keygen_alt2<R: Rng + ?Sized>(
    params: &PairParams,
    rng: &mut R,
    fixed_z: Option<&Matrix>,
) -> Result<(PairKeys, KeygenSeed)> {
    let (l, n, field) = (params.msg_len, params.ct_len, params.field);
    let z = match fixed_z {
        Some(z) => {
            check_z(params, z)?;
            z.clone()
        }
        None => Matrix::sample_full_rank(rng, n - l, n - l, field)?,
    };
    let s_e = Matrix::sample_full_rank(rng, n, n, field)?;
    let s_g = Matrix::sample_full_rank(rng, n, n, field)?;
    let u = Matrix::sample_uniform(rng, n - l, l, field);
    let seed = KeygenSeed::Alt2 { s_e, s_g, u, z };
    Ok((seed.derive_keys(params)?, seed))
}

/// Dispatches on the variant.
pub fn keygen_variant<R: Rng + ?Sized>(
    variant: KeygenVariant,
    params: &PairParams,
    rng: &mut R,
) -> Result<(PairKeys, KeygenSeed)> {
    match variant {
        KeygenVariant::Standard => pair_keygen(params, rng),
        KeygenVariant::Alt => pair_keygen_alt(params, rng, None),
        KeygenVariant::Alt2 => pair_keygen_alt2(params, rng, None),
    }
}

fn check_z(params: &PairParams, z: &Matrix) -> Result<()> {
    let k = params.ct_len - params.msg_len;
    if z.field() != params.field || z.rows() != k || z.cols() != k || z.rank() != k {
        return Err(AceError::InvalidArgument(format!(
            "fixed Z must be an invertible {k}x{k} matrix over GF({})",
            params.q()
        )));
    }
    Ok(())
}

/// A nonzero length-`N` column.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PairCiphertext(Matrix);

impl PairCiphertext {
    pub fn new(c: Matrix) -> Result<Self> {
        if c.cols() != 1 {
            return Err(AceError::DimensionError(format!(
                "ciphertext must be a column, got {}x{}",
                c.rows(),
                c.cols()
            )));
        }
        if c.is_zero() {
            return Err(AceError::MalformedCiphertext("zero vector".into()));
        }
        Ok(PairCiphertext(c))
    }

    pub fn vector(&self) -> &Matrix {
        &self.0
    }

    pub fn into_vector(self) -> Matrix {
        self.0
    }
}

/// Receiver output. A forged ciphertext may decode to zero, which is outside
/// the message space; it is returned flagged rather than rejected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decrypted {
    pub message: Matrix,
    pub in_message_space: bool,
}

pub fn pair_encrypt(enc_key: &Matrix, message: &Matrix) -> Result<PairCiphertext> {
    if message.cols() != 1 || message.rows() != enc_key.cols() {
        return Err(AceError::DimensionError(format!(
            "message must be {}x1, got {}x{}",
            enc_key.cols(),
            message.rows(),
            message.cols()
        )));
    }
    if message.is_zero() {
        return Err(AceError::MessageOutOfSpace);
    }
    PairCiphertext::new(enc_key.mul(message)?)
}

pub fn pair_sanitize(san_key: &Matrix, c: &PairCiphertext) -> Result<PairCiphertext> {
    if c.0.is_zero() {
        return Err(AceError::MalformedCiphertext("zero vector".into()));
    }
    let out = san_key.mul(&c.0)?;
    PairCiphertext::new(out)
}

pub fn pair_decrypt(dec_key: &Matrix, c: &PairCiphertext) -> Result<Decrypted> {
    let message = dec_key.mul(&c.0)?;
    let in_message_space = !message.is_zero();
    Ok(Decrypted {
        message,
        in_message_space,
    })
}

/// The whole keyspace, laid out for deterministic enumeration.
///
/// Elements are visited sanitizer key first, then encryption key, then the
/// free `L x (N-L)` tail `T`. For a fixed `(san, enc)`, let `S` be the
/// canonical completion of `san * enc` to an invertible matrix; the valid
/// decryption keys are exactly `[I | T] S^-1`.
pub struct Keyspace {
    params: PairParams,
    san_keys: Vec<Matrix>,
    enc_keys: Vec<Matrix>,
    tails: Vec<Matrix>,
}

impl Keyspace {
    pub fn new(params: &PairParams, cap: u128) -> Result<Self> {
        let size = params.keyspace_size();
        if size > cap {
            return Err(AceError::FeasibilityError { size, cap });
        }
        let (l, n, field) = (params.msg_len, params.ct_len, params.field);
        Ok(Keyspace {
            params: *params,
            san_keys: full_rank_matrices(field, n, n),
            enc_keys: full_rank_matrices(field, n, l),
            tails: all_matrices(field, l, n - l).collect(),
        })
    }

    pub fn params(&self) -> &PairParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.san_keys.len() * self.enc_keys.len() * self.tails.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of distinct sanitizer keys, i.e. enumeration cells.
    pub fn cell_count(&self) -> usize {
        self.san_keys.len()
    }

    pub fn san_keys(&self) -> &[Matrix] {
        &self.san_keys
    }

    pub fn enc_keys(&self) -> &[Matrix] {
        &self.enc_keys
    }

    /// All elements sharing the sanitizer key with index `cell`.
    pub fn cell(&self, cell: usize) -> impl Iterator<Item = PairKeys> + '_ {
        let san = &self.san_keys[cell];
        let identity = Matrix::identity(self.params.field, self.params.msg_len);
        self.enc_keys.iter().flat_map(move |enc| {
            let image = san.mul_unchecked(enc);
            let basis_inv = image
                .complete_columns()
                .and_then(|s| s.inverse())
                .expect("image of a full-rank key under an invertible map is full rank");
            let identity = identity.clone();
            self.tails.iter().map(move |t| {
                let head = Matrix::hstack(&identity, t).expect("shapes agree");
                PairKeys {
                    san_key: san.clone(),
                    enc_key: enc.clone(),
                    dec_key: head.mul_unchecked(&basis_inv),
                }
            })
        })
    }

    /// Elements whose sanitizer-key index lies in `cells`.
    pub fn iter_cells(&self, cells: Range<usize>) -> impl Iterator<Item = PairKeys> + '_ {
        cells.flat_map(move |c| self.cell(c))
    }

    pub fn iter(&self) -> impl Iterator<Item = PairKeys> + '_ {
        self.iter_cells(0..self.san_keys.len())
    }
}

/// Streams every keyspace element exactly once, refusing above `cap`.
pub fn enumerate_keyspace(params: &PairParams, cap: u128) -> Result<Keyspace> {
    Keyspace::new(params, cap)
}
