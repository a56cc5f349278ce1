//! C ABI over the `ace` library.
//!
//! Every object crosses the boundary as an opaque handle that the caller
//! releases with the matching `*_free` function. Every fallible call returns
//! an [`AceStatus`]; the text of the most recent failure on the calling
//! thread is available from [`ace_last_error_message`].
//!
//! Byte outputs use a two-call protocol: pass a null buffer (or one that is
//! too small) to learn the required length through `out_len`, then call
//! again with a large enough buffer.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use ace::gf::{seeded_rng, AceRng};
use ace::keyio::{
    deserialize_ciphertext, deserialize_key, serialize_ciphertext, serialize_party_key,
    serialize_sanitizer_key, KeyFile,
};
use ace::matrix::Matrix;
use ace::pair::PairParams;
use ace::policy::{
    policy_decrypt, policy_encrypt, policy_keygen, policy_sanitize, PartyKey, Policy,
    PolicyCiphertext, SanitizerKey,
};
use ace::AceError;
use rand::SeedableRng;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AceStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidParams = 3,
    NotAuthorized = 4,
    MessageOutOfSpace = 5,
    MalformedCiphertext = 6,
    Format = 7,
    Integrity = 8,
    BufferTooSmall = 9,
    Internal = 10,
    Panic = 11,
}

/// Key material of a whole policy instance, as produced by `ace_keygen`.
pub struct AceKeySet {
    sanitizer: SanitizerKey,
    parties: Vec<PartyKey>,
}

/// The sanitizer's key.
pub struct AceSanitizerKey(SanitizerKey);

/// One party's key bundle.
pub struct AcePartyKey(PartyKey);

/// A policy ciphertext, sanitized or not.
pub struct AceCiphertext(PolicyCiphertext);

/// Randomness source for encryption.
pub struct AceRandom(AceRng);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &AceError) -> AceStatus {
    match e {
        AceError::InvalidParams(_) => AceStatus::InvalidParams,
        AceError::NotAuthorized(_) => AceStatus::NotAuthorized,
        AceError::MessageOutOfSpace => AceStatus::MessageOutOfSpace,
        AceError::MalformedCiphertext(_) => AceStatus::MalformedCiphertext,
        AceError::FormatError(_) => AceStatus::Format,
        AceError::IntegrityError(_) => AceStatus::Integrity,
        AceError::SamplingFailure(_) => AceStatus::Internal,
        _ => AceStatus::InvalidArgument,
    }
}

struct Fail(AceStatus, String);

impl From<AceError> for Fail {
    fn from(e: AceError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AceStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, recording any failure or panic for the calling thread.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AceStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AceStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn bytes<'a>(data: *const u8, len: usize) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null("data"));
    }
    Ok(slice::from_raw_parts(data, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_out(src: &[u8], buf: *mut u8, cap: usize, out_len: *mut usize) -> Result<(), Fail> {
    if out_len.is_null() {
        return Err(null("out_len"));
    }
    *out_len = src.len();
    if buf.is_null() || cap < src.len() {
        return Err(Fail(
            AceStatus::BufferTooSmall,
            format!("need {} bytes, have {cap}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn ace_status_string(status: AceStatus) -> *const c_char {
    let s: &'static CStr = match status {
        AceStatus::Ok => c"ok",
        AceStatus::NullPointer => c"null pointer",
        AceStatus::InvalidArgument => c"invalid argument",
        AceStatus::InvalidParams => c"invalid parameters",
        AceStatus::NotAuthorized => c"not authorized",
        AceStatus::MessageOutOfSpace => c"message out of space",
        AceStatus::MalformedCiphertext => c"malformed ciphertext",
        AceStatus::Format => c"format error",
        AceStatus::Integrity => c"integrity check failed",
        AceStatus::BufferTooSmall => c"buffer too small",
        AceStatus::Internal => c"internal error",
        AceStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Copies the last error message of this thread, NUL-terminated and
/// truncated to `cap` bytes. Returns the untruncated length without the NUL.
#[no_mangle]
pub unsafe extern "C" fn ace_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            ptr::copy_nonoverlapping(e.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

// ---------------------------------------------------------------------------
// Randomness
// ---------------------------------------------------------------------------

/// A deterministic generator; for tests and reproducible runs.
#[no_mangle]
pub unsafe extern "C" fn ace_random_from_seed(seed: u64, out: *mut *mut AceRandom) -> AceStatus {
    guard(|| put(out, AceRandom(seeded_rng(seed))))
}

/// A generator seeded from the operating system.
#[no_mangle]
pub unsafe extern "C" fn ace_random_from_entropy(out: *mut *mut AceRandom) -> AceStatus {
    guard(|| put(out, AceRandom(AceRng::from_entropy())))
}

#[no_mangle]
pub unsafe extern "C" fn ace_random_free(rng: *mut AceRandom) {
    free(rng)
}

// ---------------------------------------------------------------------------
// Key generation
// ---------------------------------------------------------------------------

/// Generates keys for `policy` over GF(q) with messages of length `msg_len`
/// and ciphertext slots of length `ct_len`. The policy is either
/// `"bell-lapadula:<n>"` or lines `"parties <n>"` and `"<from> <to>"`.
#[no_mangle]
pub unsafe extern "C" fn ace_keygen(
    policy: *const c_char,
    q: u64,
    msg_len: u32,
    ct_len: u32,
    rng: *mut AceRandom,
    out: *mut *mut AceKeySet,
) -> AceStatus {
    guard(|| {
        if policy.is_null() {
            return Err(null("policy"));
        }
        let text = CStr::from_ptr(policy)
            .to_str()
            .map_err(|_| Fail(AceStatus::InvalidArgument, "policy is not UTF-8".into()))?;
        let rng = rng.as_mut().ok_or_else(|| null("rng"))?;
        let policy = Policy::parse(text)?;
        let params = PairParams::new(q, msg_len as usize, ct_len as usize)?;
        let (sanitizer, parties) = policy_keygen(&policy, &params, &mut rng.0)?;
        put(out, AceKeySet { sanitizer, parties })
    })
}

#[no_mangle]
pub unsafe extern "C" fn ace_keyset_party_count(set: *const AceKeySet) -> u32 {
    set.as_ref().map_or(0, |s| s.parties.len() as u32)
}

/// A copy of the sanitizer key held by `set`.
#[no_mangle]
pub unsafe extern "C" fn ace_keyset_sanitizer(
    set: *const AceKeySet,
    out: *mut *mut AceSanitizerKey,
) -> AceStatus {
    guard(|| put(out, AceSanitizerKey(deref(set, "set")?.sanitizer.clone())))
}

/// A copy of the key of `party` (numbered from 1).
#[no_mangle]
pub unsafe extern "C" fn ace_keyset_party(
    set: *const AceKeySet,
    party: u32,
    out: *mut *mut AcePartyKey,
) -> AceStatus {
    guard(|| {
        let set = deref(set, "set")?;
        let key = party
            .checked_sub(1)
            .and_then(|i| set.parties.get(i as usize))
            .ok_or_else(|| Fail(AceStatus::InvalidArgument, format!("no party {party}")))?;
        put(out, AcePartyKey(key.clone()))
    })
}

#[no_mangle]
pub unsafe extern "C" fn ace_keyset_free(set: *mut AceKeySet) {
    free(set)
}

// ---------------------------------------------------------------------------
// Key files
// ---------------------------------------------------------------------------

#[no_mangle]
pub unsafe extern "C" fn ace_sanitizer_key_load(
    data: *const u8,
    len: usize,
    out: *mut *mut AceSanitizerKey,
) -> AceStatus {
    guard(|| match deserialize_key(bytes(data, len)?)? {
        KeyFile::Sanitizer(k) => put(out, AceSanitizerKey(k)),
        KeyFile::Party(_) => Err(Fail(
            AceStatus::InvalidArgument,
            "this is a party key".into(),
        )),
    })
}

#[no_mangle]
pub unsafe extern "C" fn ace_sanitizer_key_serialize(
    key: *const AceSanitizerKey,
    buf: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> AceStatus {
    guard(|| {
        copy_out(
            &serialize_sanitizer_key(&deref(key, "key")?.0),
            buf,
            cap,
            out_len,
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn ace_sanitizer_key_free(key: *mut AceSanitizerKey) {
    free(key)
}

#[no_mangle]
pub unsafe extern "C" fn ace_party_key_load(
    data: *const u8,
    len: usize,
    out: *mut *mut AcePartyKey,
) -> AceStatus {
    guard(|| match deserialize_key(bytes(data, len)?)? {
        KeyFile::Party(k) => put(out, AcePartyKey(k)),
        KeyFile::Sanitizer(_) => Err(Fail(
            AceStatus::InvalidArgument,
            "this is a sanitizer key".into(),
        )),
    })
}

#[no_mangle]
pub unsafe extern "C" fn ace_party_key_serialize(
    key: *const AcePartyKey,
    buf: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> AceStatus {
    guard(|| {
        copy_out(
            &serialize_party_key(&deref(key, "key")?.0),
            buf,
            cap,
            out_len,
        )
    })
}

/// The party a key belongs to, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ace_party_key_party(key: *const AcePartyKey) -> u32 {
    key.as_ref().map_or(0, |k| k.0.party)
}

#[no_mangle]
pub unsafe extern "C" fn ace_party_key_free(key: *mut AcePartyKey) {
    free(key)
}

// ---------------------------------------------------------------------------
// Ciphertexts
// ---------------------------------------------------------------------------

/// Encrypts `msg` (`msg_len` field elements) from party `from` to party `to`.
#[no_mangle]
pub unsafe extern "C" fn ace_encrypt(
    key: *const AcePartyKey,
    from: u32,
    to: u32,
    msg: *const u32,
    msg_len: usize,
    rng: *mut AceRandom,
    out: *mut *mut AceCiphertext,
) -> AceStatus {
    guard(|| {
        let key = &deref(key, "key")?.0;
        let rng = rng.as_mut().ok_or_else(|| null("rng"))?;
        if msg.is_null() && msg_len > 0 {
            return Err(null("msg"));
        }
        let entries: Vec<u64> = if msg_len == 0 {
            Vec::new()
        } else {
            slice::from_raw_parts(msg, msg_len)
                .iter()
                .map(|&v| u64::from(v))
                .collect()
        };
        let q = key.params.q();
        if entries.iter().any(|&v| v >= u64::from(q)) {
            return Err(Fail(
                AceStatus::InvalidArgument,
                format!("message entries must be below {q}"),
            ));
        }
        let m = Matrix::column(key.params.field(), &entries)?;
        put(
            out,
            AceCiphertext(policy_encrypt(from, to, key, &m, &mut rng.0)?),
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn ace_sanitize(
    key: *const AceSanitizerKey,
    ct: *const AceCiphertext,
    out: *mut *mut AceCiphertext,
) -> AceStatus {
    guard(|| {
        let out_ct = policy_sanitize(&deref(key, "key")?.0, &deref(ct, "ct")?.0)?;
        put(out, AceCiphertext(out_ct))
    })
}

/// Decrypts a sanitized ciphertext on edge `from -> to` into `msg`, which
/// must hold the message length of the key's parameters. `in_space` is set
/// to false when the result is the zero vector, which no honest sender
/// produces.
#[no_mangle]
pub unsafe extern "C" fn ace_decrypt(
    key: *const AcePartyKey,
    from: u32,
    to: u32,
    ct: *const AceCiphertext,
    msg: *mut u32,
    msg_cap: usize,
    in_space: *mut bool,
) -> AceStatus {
    guard(|| {
        let key = &deref(key, "key")?.0;
        let d = policy_decrypt(from, to, key, &deref(ct, "ct")?.0)?;
        let n = d.message.rows();
        if msg.is_null() || msg_cap < n {
            return Err(Fail(
                AceStatus::BufferTooSmall,
                format!("need {n} elements, have {msg_cap}"),
            ));
        }
        ptr::copy_nonoverlapping(d.message.data().as_ptr(), msg, n);
        if !in_space.is_null() {
            *in_space = d.in_message_space;
        }
        Ok(())
    })
}

/// Parses a serialized ciphertext; `sanitized` records which side of the
/// sanitizer it came from.
#[no_mangle]
pub unsafe extern "C" fn ace_ciphertext_load(
    data: *const u8,
    len: usize,
    sanitized: bool,
    out: *mut *mut AceCiphertext,
) -> AceStatus {
    guard(|| {
        put(
            out,
            AceCiphertext(deserialize_ciphertext(bytes(data, len)?, sanitized)?),
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn ace_ciphertext_serialize(
    ct: *const AceCiphertext,
    buf: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> AceStatus {
    guard(|| {
        copy_out(
            &serialize_ciphertext(&deref(ct, "ct")?.0),
            buf,
            cap,
            out_len,
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn ace_ciphertext_is_sanitized(ct: *const AceCiphertext) -> bool {
    ct.as_ref().is_some_and(|c| c.0.sanitized)
}

#[no_mangle]
pub unsafe extern "C" fn ace_ciphertext_free(ct: *mut AceCiphertext) {
    free(ct)
}
