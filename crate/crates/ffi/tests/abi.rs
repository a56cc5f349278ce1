use std::ffi::{c_char, CStr};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ace_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as c_char; 512];
    unsafe {
        ace_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

struct Fixture {
    rng: *mut AceRandom,
    set: *mut AceKeySet,
    san: *mut AceSanitizerKey,
    parties: Vec<*mut AcePartyKey>,
}

impl Fixture {
    fn new(policy: &CStr, q: u64, l: u32, n: u32) -> Fixture {
        unsafe {
            let mut rng = ptr::null_mut();
            assert_eq!(ace_random_from_seed(3, &mut rng), AceStatus::Ok);
            let mut set = ptr::null_mut();
            assert_eq!(
                ace_keygen(policy.as_ptr(), q, l, n, rng, &mut set),
                AceStatus::Ok,
                "{}",
                last_error()
            );
            let mut san = ptr::null_mut();
            assert_eq!(ace_keyset_sanitizer(set, &mut san), AceStatus::Ok);
            let parties = (1..=ace_keyset_party_count(set))
                .map(|p| {
                    let mut k = ptr::null_mut();
                    assert_eq!(ace_keyset_party(set, p, &mut k), AceStatus::Ok);
                    k
                })
                .collect();
            Fixture {
                rng,
                set,
                san,
                parties,
            }
        }
    }

    fn encrypt(&self, from: u32, to: u32, msg: &[u32]) -> Result<*mut AceCiphertext, AceStatus> {
        let mut ct = ptr::null_mut();
        let s = unsafe {
            ace_encrypt(
                self.parties[from as usize - 1],
                from,
                to,
                msg.as_ptr(),
                msg.len(),
                self.rng,
                &mut ct,
            )
        };
        if s == AceStatus::Ok {
            Ok(ct)
        } else {
            assert!(ct.is_null());
            Err(s)
        }
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            for &k in &self.parties {
                ace_party_key_free(k);
            }
            ace_sanitizer_key_free(self.san);
            ace_keyset_free(self.set);
            ace_random_free(self.rng);
        }
    }
}

fn serialize(f: impl Fn(*mut u8, usize, *mut usize) -> AceStatus) -> Vec<u8> {
    let mut len = 0;
    assert_eq!(f(ptr::null_mut(), 0, &mut len), AceStatus::BufferTooSmall);
    let mut buf = vec![0u8; len];
    assert_eq!(f(buf.as_mut_ptr(), buf.len(), &mut len), AceStatus::Ok);
    assert_eq!(len, buf.len());
    buf
}

#[test]
fn round_trip_through_handles_and_bytes() {
    let fx = Fixture::new(c"bell-lapadula:3", 257, 2, 5);
    assert_eq!(fx.parties.len(), 3);
    unsafe {
        let ct = fx.encrypt(1, 3, &[200, 13]).unwrap();
        assert!(!ace_ciphertext_is_sanitized(ct));
        let bytes = serialize(|b, c, l| ace_ciphertext_serialize(ct, b, c, l));
        let mut loaded = ptr::null_mut();
        assert_eq!(
            ace_ciphertext_load(bytes.as_ptr(), bytes.len(), false, &mut loaded),
            AceStatus::Ok
        );

        let san_bytes = serialize(|b, c, l| ace_sanitizer_key_serialize(fx.san, b, c, l));
        let mut san = ptr::null_mut();
        assert_eq!(
            ace_sanitizer_key_load(san_bytes.as_ptr(), san_bytes.len(), &mut san),
            AceStatus::Ok
        );

        let mut out = ptr::null_mut();
        assert_eq!(ace_sanitize(san, loaded, &mut out), AceStatus::Ok);
        assert!(ace_ciphertext_is_sanitized(out));
        let mut msg = [0u32; 2];
        let mut in_space = false;
        assert_eq!(
            ace_decrypt(fx.parties[2], 1, 3, out, msg.as_mut_ptr(), 2, &mut in_space),
            AceStatus::Ok
        );
        assert!(in_space);
        assert_eq!(msg, [200, 13]);

        // party key bytes are stable through load and re-serialize
        let pk = serialize(|b, c, l| ace_party_key_serialize(fx.parties[1], b, c, l));
        let mut back = ptr::null_mut();
        assert_eq!(
            ace_party_key_load(pk.as_ptr(), pk.len(), &mut back),
            AceStatus::Ok
        );
        assert_eq!(ace_party_key_party(back), 2);
        assert_eq!(
            serialize(|b, c, l| ace_party_key_serialize(back, b, c, l)),
            pk
        );

        for p in [ct, loaded, out] {
            ace_ciphertext_free(p);
        }
        ace_sanitizer_key_free(san);
        ace_party_key_free(back);
    }
}

#[test]
fn error_codes() {
    let fx = Fixture::new(c"parties 2\n1 2\n", 7, 1, 3);
    unsafe {
        assert_eq!(
            fx.encrypt(2, 1, &[1]).unwrap_err(),
            AceStatus::NotAuthorized
        );
        assert!(last_error().contains("not authorized"));
        assert_eq!(
            fx.encrypt(1, 2, &[0]).unwrap_err(),
            AceStatus::MessageOutOfSpace
        );
        assert_eq!(
            fx.encrypt(1, 2, &[7]).unwrap_err(),
            AceStatus::InvalidArgument
        );
        assert_eq!(
            fx.encrypt(1, 2, &[1, 2]).unwrap_err(),
            AceStatus::InvalidArgument
        );

        let mut out = ptr::null_mut();
        assert_eq!(
            ace_sanitize(ptr::null(), ptr::null(), &mut out),
            AceStatus::NullPointer
        );
        assert!(out.is_null());
        let mut set = ptr::null_mut();
        assert_eq!(
            ace_keygen(ptr::null(), 7, 1, 3, fx.rng, &mut set),
            AceStatus::NullPointer
        );
        assert_eq!(
            ace_keygen(c"bell-lapadula:2".as_ptr(), 8, 1, 3, fx.rng, &mut set),
            AceStatus::InvalidParams
        );
        assert_eq!(
            ace_keygen(c"nonsense".as_ptr(), 7, 1, 3, fx.rng, &mut set),
            AceStatus::InvalidArgument
        );
        assert!(set.is_null());

        let mut k = ptr::null_mut();
        assert_eq!(
            ace_keyset_party(fx.set, 0, &mut k),
            AceStatus::InvalidArgument
        );
        assert_eq!(
            ace_keyset_party(fx.set, 3, &mut k),
            AceStatus::InvalidArgument
        );

        // a party key is not a sanitizer key, and garbage is neither
        let pk = serialize(|b, c, l| ace_party_key_serialize(fx.parties[0], b, c, l));
        let mut san = ptr::null_mut();
        assert_eq!(
            ace_sanitizer_key_load(pk.as_ptr(), pk.len(), &mut san),
            AceStatus::InvalidArgument
        );
        assert_eq!(
            ace_sanitizer_key_load(b"ACEK".as_ptr(), 4, &mut san),
            AceStatus::Format
        );
        let mut corrupt = pk.clone();
        let n = corrupt.len();
        corrupt[n - 1] ^= 1;
        let mut pkey = ptr::null_mut();
        let s = ace_party_key_load(corrupt.as_ptr(), n, &mut pkey);
        assert!(
            matches!(s, AceStatus::Integrity | AceStatus::Format),
            "{s:?}"
        );

        // a zero slot is rejected at the sanitizer
        let ct = fx.encrypt(1, 2, &[3]).unwrap();
        let mut bytes = serialize(|b, c, l| ace_ciphertext_serialize(ct, b, c, l));
        let n = bytes.len();
        bytes[n - 3..].fill(0);
        let mut bad = ptr::null_mut();
        assert_eq!(
            ace_ciphertext_load(bytes.as_ptr(), n, false, &mut bad),
            AceStatus::Integrity
        );
        ace_ciphertext_free(ct);

        let mut small = [0u32; 0];
        let ct = fx.encrypt(1, 2, &[3]).unwrap();
        let mut sct = ptr::null_mut();
        assert_eq!(ace_sanitize(fx.san, ct, &mut sct), AceStatus::Ok);
        assert_eq!(
            ace_decrypt(
                fx.parties[1],
                1,
                2,
                sct,
                small.as_mut_ptr(),
                0,
                ptr::null_mut()
            ),
            AceStatus::BufferTooSmall
        );
        ace_ciphertext_free(ct);
        ace_ciphertext_free(sct);

        // freeing null is a no-op
        ace_ciphertext_free(ptr::null_mut());
        ace_keyset_free(ptr::null_mut());
        assert_eq!(ace_keyset_party_count(ptr::null()), 0);
    }
}

#[test]
fn status_strings_and_entropy() {
    let s = unsafe { CStr::from_ptr(ace_status_string(AceStatus::Integrity)) };
    assert_eq!(s.to_str().unwrap(), "integrity check failed");
    let mut rng = ptr::null_mut();
    unsafe {
        assert_eq!(ace_random_from_entropy(&mut rng), AceStatus::Ok);
        ace_random_free(rng);
    }
    let mut buf = [0 as c_char; 4];
    unsafe {
        ace_sanitize(ptr::null(), ptr::null(), &mut ptr::null_mut());
        let full = ace_last_error_message(buf.as_mut_ptr(), buf.len());
        assert!(full > 3);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_bytes().len(), 3);
    }
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = manifest.join("include/ace.h");
    assert!(header.exists(), "header was not generated");
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = profile_dir.join("libace_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let out = std::env::temp_dir().join(format!("ace_ffi_c_{}", std::process::id()));
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c11", "-Wall", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/roundtrip.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "200 13");
}
