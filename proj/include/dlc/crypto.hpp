#pragma once

// Cryptographic building blocks behind stable abstractions: 256-bit digest,
// deterministic seeded keypairs, detached signatures, and public-key envelope
// encryption. Concrete algorithms (SHA-256, Ed25519, X25519 sealed boxes via
// libsodium) are an implementation detail of this header; nothing outside it
// names an algorithm.

#include <sodium.h>

#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <functional>
#include <stdexcept>

#include "dlc/bytes.hpp"

namespace dlc::crypto {

struct CryptoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct SeedLengthError : CryptoError {
    using CryptoError::CryptoError;
};
struct CryptoFormatError : CryptoError {
    using CryptoError::CryptoError;
};
struct DecryptError : CryptoError {
    using CryptoError::CryptoError;
};

inline void init() {
    static const int rc = sodium_init();
    if (rc < 0) throw CryptoError("crypto library initialization failed");
}

inline constexpr std::size_t kDigestSize = 32;
inline constexpr std::size_t kSeedSize = 32;
inline constexpr std::size_t kPublicKeySize = 32;
inline constexpr std::size_t kSecretKeySize = 64;
inline constexpr std::size_t kSignatureSize = 64;
inline constexpr std::size_t kSealOverhead = 48;  // ephemeral pk + MAC

/// 32-byte digest value; equality is byte equality.
struct Digest {
    std::array<std::uint8_t, kDigestSize> bytes{};

    auto operator<=>(const Digest&) const = default;

    bool is_zero() const {
        for (auto b : bytes)
            if (b != 0) return false;
        return true;
    }
    std::string hex() const { return to_hex(bytes); }
};

struct PublicKey {
    std::array<std::uint8_t, kPublicKeySize> bytes{};
    auto operator<=>(const PublicKey&) const = default;
    std::string hex() const { return to_hex(bytes); }
};

struct SecretKey {
    std::array<std::uint8_t, kSecretKeySize> bytes{};
    auto operator<=>(const SecretKey&) const = default;
};

struct Signature {
    std::array<std::uint8_t, kSignatureSize> bytes{};
    auto operator<=>(const Signature&) const = default;
};

struct KeyPair {
    PublicKey pk;
    SecretKey sk;
};

inline Digest digest(ByteView data) {
    init();
    Digest d;
    crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
    return d;
}

/// Deterministic keypair from a 32-byte seed. Distinct seeds give distinct
/// public keys (up to key-derivation collisions, which tests sample for).
inline KeyPair keygen(ByteView seed) {
    init();
    if (seed.size() != kSeedSize)
        throw SeedLengthError("keygen seed must be exactly 32 bytes");
    KeyPair kp;
    crypto_sign_seed_keypair(kp.pk.bytes.data(), kp.sk.bytes.data(), seed.data());
    return kp;
}

inline Signature sign(const SecretKey& sk, ByteView msg) {
    init();
    Signature sig;
    crypto_sign_detached(sig.bytes.data(), nullptr, msg.data(), msg.size(),
                         sk.bytes.data());
    return sig;
}

/// Total: returns false on any malformed or mismatching input, never aborts.
inline bool verify(const PublicKey& pk, ByteView msg, const Signature& sig) {
    init();
    return crypto_sign_verify_detached(sig.bytes.data(), msg.data(), msg.size(),
                                       pk.bytes.data()) == 0;
}

/// Envelope ciphertext addressed to a recipient public key. The ephemeral key
/// material the scheme needs is embedded in the ciphertext (48-byte overhead).
struct SealedBox {
    Bytes ciphertext;
    bool operator==(const SealedBox&) const = default;
};

inline SealedBox seal(const PublicKey& recipient, ByteView plaintext) {
    init();
    std::array<std::uint8_t, crypto_scalarmult_curve25519_BYTES> xpk{};
    if (crypto_sign_ed25519_pk_to_curve25519(xpk.data(), recipient.bytes.data()) != 0)
        throw CryptoFormatError("recipient public key is not encryption-capable");
    SealedBox box;
    box.ciphertext.resize(plaintext.size() + kSealOverhead);
    crypto_box_seal(box.ciphertext.data(), plaintext.data(), plaintext.size(),
                    xpk.data());
    return box;
}

/// Sealed box with a caller-derived ephemeral key. Byte-compatible with the
/// randomized form (open() cannot tell them apart); the sender derandomizes
/// so that an identical run of the protocol produces identical ciphertext.
inline SealedBox seal(const PublicKey& recipient, ByteView plaintext,
                      const std::array<std::uint8_t, 32>& ephemeral_seed) {
    init();
    std::array<std::uint8_t, crypto_scalarmult_curve25519_BYTES> xpk{};
    if (crypto_sign_ed25519_pk_to_curve25519(xpk.data(), recipient.bytes.data()) != 0)
        throw CryptoFormatError("recipient public key is not encryption-capable");

    std::array<std::uint8_t, crypto_box_PUBLICKEYBYTES> epk{};
    std::array<std::uint8_t, crypto_box_SECRETKEYBYTES> esk{};
    crypto_box_seed_keypair(epk.data(), esk.data(), ephemeral_seed.data());

    // The scheme's nonce convention: H(ephemeral_pk || recipient_pk).
    std::array<std::uint8_t, crypto_box_NONCEBYTES> nonce{};
    crypto_generichash_state st;
    crypto_generichash_init(&st, nullptr, 0, nonce.size());
    crypto_generichash_update(&st, epk.data(), epk.size());
    crypto_generichash_update(&st, xpk.data(), xpk.size());
    crypto_generichash_final(&st, nonce.data(), nonce.size());

    SealedBox box;
    box.ciphertext.resize(plaintext.size() + kSealOverhead);
    std::copy(epk.begin(), epk.end(), box.ciphertext.begin());
    std::uint8_t scratch = 0;
    const std::uint8_t* src = plaintext.empty() ? &scratch : plaintext.data();
    if (crypto_box_easy(box.ciphertext.data() + epk.size(), src, plaintext.size(),
                        nonce.data(), xpk.data(), esk.data()) != 0)
        throw CryptoFormatError("sealing failed");
    return box;
}

inline Bytes open(const KeyPair& recipient, const SealedBox& box) {
    init();
    if (box.ciphertext.size() < kSealOverhead)
        throw DecryptError("sealed box shorter than scheme overhead");
    std::array<std::uint8_t, crypto_scalarmult_curve25519_BYTES> xpk{};
    std::array<std::uint8_t, crypto_scalarmult_curve25519_SCALARBYTES> xsk{};
    if (crypto_sign_ed25519_pk_to_curve25519(xpk.data(), recipient.pk.bytes.data()) != 0)
        throw CryptoFormatError("recipient public key is not encryption-capable");
    if (crypto_sign_ed25519_sk_to_curve25519(xsk.data(), recipient.sk.bytes.data()) != 0)
        throw CryptoFormatError("recipient secret key is not encryption-capable");
    Bytes out(box.ciphertext.size() - kSealOverhead);
    std::uint8_t scratch = 0;  // libsodium wants a non-null buffer even for empty plaintext
    std::uint8_t* dst = out.empty() ? &scratch : out.data();
    if (crypto_box_seal_open(dst, box.ciphertext.data(), box.ciphertext.size(),
                             xpk.data(), xsk.data()) != 0)
        throw DecryptError("sealed box rejected (wrong key or tampered ciphertext)");
    return out;
}

// Cheap hashes for unordered containers; digest/key bytes are already uniform.
struct DigestHash {
    std::size_t operator()(const Digest& d) const {
        std::uint64_t v;
        std::memcpy(&v, d.bytes.data(), sizeof v);
        return static_cast<std::size_t>(v);
    }
};
struct PublicKeyHash {
    std::size_t operator()(const PublicKey& pk) const {
        std::uint64_t v;
        std::memcpy(&v, pk.bytes.data(), sizeof v);
        return static_cast<std::size_t>(v);
    }
};

}  // namespace dlc::crypto
