#ifndef ACE_H
#define ACE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum AceStatus {
  ACE_STATUS_OK = 0,
  ACE_STATUS_NULL_POINTER = 1,
  ACE_STATUS_INVALID_ARGUMENT = 2,
  ACE_STATUS_INVALID_PARAMS = 3,
  ACE_STATUS_NOT_AUTHORIZED = 4,
  ACE_STATUS_MESSAGE_OUT_OF_SPACE = 5,
  ACE_STATUS_MALFORMED_CIPHERTEXT = 6,
  ACE_STATUS_FORMAT = 7,
  ACE_STATUS_INTEGRITY = 8,
  ACE_STATUS_BUFFER_TOO_SMALL = 9,
  ACE_STATUS_INTERNAL = 10,
  ACE_STATUS_PANIC = 11,
} AceStatus;

// A policy ciphertext, sanitized or not.
typedef struct AceCiphertext AceCiphertext;

// Key material of a whole policy instance, as produced by `ace_keygen`.
typedef struct AceKeySet AceKeySet;

// One party's key bundle.
typedef struct AcePartyKey AcePartyKey;

// Randomness source for encryption.
typedef struct AceRandom AceRandom;

// The sanitizer's key.
typedef struct AceSanitizerKey AceSanitizerKey;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static description of a status code.
const char *ace_status_string(enum AceStatus status);

// Copies the last error message of this thread, NUL-terminated and
// truncated to `cap` bytes. Returns the untruncated length without the NUL.
uintptr_t ace_last_error_message(char *buf, uintptr_t cap);

// A deterministic generator; for tests and reproducible runs.
enum AceStatus ace_random_from_seed(uint64_t seed, struct AceRandom **out);

// A generator seeded from the operating system.
enum AceStatus ace_random_from_entropy(struct AceRandom **out);

void ace_random_free(struct AceRandom *rng);

// Generates keys for `policy` over GF(q) with messages of length `msg_len`
// and ciphertext slots of length `ct_len`. The policy is either
// `"bell-lapadula:<n>"` or lines `"parties <n>"` and `"<from> <to>"`.
enum AceStatus ace_keygen(const char *policy,
                          uint64_t q,
                          uint32_t msg_len,
                          uint32_t ct_len,
                          struct AceRandom *rng,
                          struct AceKeySet **out);

uint32_t ace_keyset_party_count(const struct AceKeySet *set);

// A copy of the sanitizer key held by `set`.
enum AceStatus ace_keyset_sanitizer(const struct AceKeySet *set, struct AceSanitizerKey **out);

// A copy of the key of `party` (numbered from 1).
enum AceStatus ace_keyset_party(const struct AceKeySet *set,
                                uint32_t party,
                                struct AcePartyKey **out);

void ace_keyset_free(struct AceKeySet *set);

enum AceStatus ace_sanitizer_key_load(const uint8_t *data,
                                      uintptr_t len,
                                      struct AceSanitizerKey **out);

enum AceStatus ace_sanitizer_key_serialize(const struct AceSanitizerKey *key,
                                           uint8_t *buf,
                                           uintptr_t cap,
                                           uintptr_t *out_len);

void ace_sanitizer_key_free(struct AceSanitizerKey *key);

enum AceStatus ace_party_key_load(const uint8_t *data, uintptr_t len, struct AcePartyKey **out);

enum AceStatus ace_party_key_serialize(const struct AcePartyKey *key,
                                       uint8_t *buf,
                                       uintptr_t cap,
                                       uintptr_t *out_len);

// The party a key belongs to, or 0 for a null handle.
uint32_t ace_party_key_party(const struct AcePartyKey *key);

void ace_party_key_free(struct AcePartyKey *key);

// Encrypts `msg` (`msg_len` field elements) from party `from` to party `to`.
enum AceStatus ace_encrypt(const struct AcePartyKey *key,
                           uint32_t from,
                           uint32_t to,
                           const uint32_t *msg,
                           uintptr_t msg_len,
                           struct AceRandom *rng,
                           struct AceCiphertext **out);

enum AceStatus ace_sanitize(const struct AceSanitizerKey *key,
                            const struct AceCiphertext *ct,
                            struct AceCiphertext **out);

// Decrypts a sanitized ciphertext on edge `from -> to` into `msg`, which
// must hold the message length of the key's parameters. `in_space` is set
// to false when the result is the zero vector, which no honest sender
// produces.
enum AceStatus ace_decrypt(const struct AcePartyKey *key,
                           uint32_t from,
                           uint32_t to,
                           const struct AceCiphertext *ct,
                           uint32_t *msg,
                           uintptr_t msg_cap,
                           bool *in_space);

// Parses a serialized ciphertext; `sanitized` records which side of the
// sanitizer it came from.
enum AceStatus ace_ciphertext_load(const uint8_t *data,
                                   uintptr_t len,
                                   bool sanitized,
                                   struct AceCiphertext **out);

enum AceStatus ace_ciphertext_serialize(const struct AceCiphertext *ct,
                                        uint8_t *buf,
                                        uintptr_t cap,
                                        uintptr_t *out_len);

bool ace_ciphertext_is_sanitized(const struct AceCiphertext *ct);

void ace_ciphertext_free(struct AceCiphertext *ct);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACE_H */
