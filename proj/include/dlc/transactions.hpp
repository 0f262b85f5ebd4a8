#pragma once

// Constructors, signing helpers, and admissibility rules for the three
// transaction kinds. Admissibility is evaluated against a LedgerView so the
// same rules apply to live appends and to full-chain re-verification.

#include "dlc/codec.hpp"

namespace dlc {

struct KeyMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Secret preimage: secret_value(32) || nonce u64 BE || data u64 BE || flag.
/// Binds sender identity, freshness, payload, and payload kind; any in-flight
/// change to the transaction is detectable by the verifier.
inline crypto::Digest dl_secret(const std::array<std::uint8_t, 32>& secret_value,
                                std::uint64_t nonce, std::uint64_t data_wh,
                                DlKind kind) {
    Bytes preimage;
    preimage.reserve(49);
    put_bytes(preimage, secret_value);
    put_u64be(preimage, nonce);
    put_u64be(preimage, data_wh);
    put_u8(preimage, static_cast<std::uint8_t>(kind));
    return crypto::digest(preimage);
}

/// Build a report from the node's current credentials. Does not mutate the
/// credentials; rotation happens when the send is acted on.
inline DlTransaction make_dl(const NodeCredentials& cred, std::uint64_t data_wh,
                             DlKind kind) {
    DlTransaction tx;
    tx.id = cred.current_id;
    tx.data_wh = data_wh;
    tx.kind = kind;
    tx.secret = dl_secret(cred.secret_value, cred.nonce, data_wh, kind);
    return tx;
}

/// Digest of the zero-filled encoding; invariant under signature population.
inline crypto::Digest compute_tid(const LoadControlTransaction& tx) {
    LoadControlTransaction unkeyed = tx;
    unkeyed.t_id = crypto::Digest{};  // t_id cannot cover itself
    return crypto::digest(signing_bytes(unkeyed));
}

inline crypto::Digest genesis_tid(const GenesisTransaction& g) {
    return crypto::digest(signing_bytes(g));
}

inline crypto::Digest block_hash(const Block& b) { return crypto::digest(encode(b)); }

inline LoadControlTransaction sign_as_generator(LoadControlTransaction tx,
                                                const crypto::KeyPair& keys) {
    if (keys.pk != tx.pk_gen)
        throw KeyMismatchError("signing key does not match pk_gen");
    tx.sign_gen = crypto::sign(keys.sk, signing_bytes(tx));
    return tx;
}

inline LoadControlTransaction countersign_as_receiver(LoadControlTransaction tx,
                                                      const crypto::KeyPair& keys) {
    if (keys.pk != tx.pk_rec)
        throw KeyMismatchError("countersigning key does not match pk_rec");
    tx.sign_rec = crypto::sign(keys.sk, signing_bytes(tx));
    return tx;
}

inline GenesisTransaction sign_genesis_as_authority(GenesisTransaction g,
                                                    const crypto::KeyPair& keys) {
    g.disco_sig = crypto::sign(keys.sk, signing_bytes(g));
    return g;
}

inline GenesisTransaction countersign_genesis_as_customer(GenesisTransaction g,
                                                          const crypto::KeyPair& keys) {
    g.customer_sig = crypto::sign(keys.sk, signing_bytes(g));
    return g;
}

enum class AdmitReason : std::uint8_t {
    None,
    MissingSignature,
    BadSignature,
    BadTid,
    BadChain,
    BadRef,
};

inline const char* to_string(AdmitReason r) {
    switch (r) {
        case AdmitReason::None: return "ok";
        case AdmitReason::MissingSignature: return "MissingSignature";
        case AdmitReason::BadSignature: return "BadSignature";
        case AdmitReason::BadTid: return "BadTid";
        case AdmitReason::BadChain: return "BadChain";
        case AdmitReason::BadRef: return "BadRef";
    }
    return "?";
}

struct Admissibility {
    bool ok = false;
    AdmitReason reason = AdmitReason::None;

    static Admissibility pass() { return {true, AdmitReason::None}; }
    static Admissibility fail(AdmitReason r) { return {false, r}; }
};

/// Read-only view of ledger state that admissibility rules consult.
class LedgerView {
public:
    virtual ~LedgerView() = default;

    virtual const crypto::PublicKey& authority_pk() const = 0;

    /// Expected p_t_id for `pk`'s next transaction: the t_id of its latest
    /// on-ledger transaction, its genesis tid right after admission, all-zero
    /// for the authority's first transaction. nullopt for unknown actors.
    virtual std::optional<crypto::Digest> head_of(const crypto::PublicKey& pk) const = 0;

    virtual const LoadControlTransaction* find_load_control(const crypto::Digest& tid) const = 0;

    virtual bool contains_tid(const crypto::Digest& tid) const = 0;

    virtual bool is_admitted(const crypto::PublicKey& pk) const = 0;
};

inline Admissibility is_admissible(const LoadControlTransaction& tx,
                                   const LedgerView& view) {
    if (!tx.sign_gen || !tx.sign_rec)
        return Admissibility::fail(AdmitReason::MissingSignature);
    if (compute_tid(tx) != tx.t_id) return Admissibility::fail(AdmitReason::BadTid);

    Bytes preimage = signing_bytes(tx);
    if (!crypto::verify(tx.pk_gen, preimage, *tx.sign_gen) ||
        !crypto::verify(tx.pk_rec, preimage, *tx.sign_rec))
        return Admissibility::fail(AdmitReason::BadSignature);

    auto head = view.head_of(tx.pk_gen);
    if (!head || *head != tx.p_t_id) return Admissibility::fail(AdmitReason::BadChain);

    if (tx.pk_gen == view.authority_pk()) {
        if (!tx.ref_disco_id.is_zero()) return Admissibility::fail(AdmitReason::BadRef);
    } else {
        const auto* request = view.find_load_control(tx.ref_disco_id);
        if (tx.ref_disco_id.is_zero() || request == nullptr ||
            request->pk_gen != view.authority_pk())
            return Admissibility::fail(AdmitReason::BadRef);
    }
    return Admissibility::pass();
}

inline Admissibility is_admissible(const GenesisTransaction& g, const LedgerView& view) {
    if (!g.disco_sig) return Admissibility::fail(AdmitReason::MissingSignature);

    Bytes preimage = signing_bytes(g);
    if (!crypto::verify(view.authority_pk(), preimage, *g.disco_sig))
        return Admissibility::fail(AdmitReason::BadSignature);

    if (g.is_sensor_genesis()) {
        const auto* contract = view.find_load_control(g.contract_ref);
        if (contract == nullptr) return Admissibility::fail(AdmitReason::BadRef);
        if (!g.customer_sig) return Admissibility::fail(AdmitReason::MissingSignature);
        if (!crypto::verify(contract->pk_rec, preimage, *g.customer_sig))
            return Admissibility::fail(AdmitReason::BadSignature);
    }
    // A stray customer signature on a plain participant genesis is ignored so
    // that adding signatures can never flip an admissible record to rejected.

    if (view.is_admitted(g.subject_pk)) return Admissibility::fail(AdmitReason::BadChain);
    return Admissibility::pass();
}

inline Admissibility is_admissible(const BlockEntry& entry, const LedgerView& view) {
    if (const auto* lc = std::get_if<LoadControlTransaction>(&entry))
        return is_admissible(*lc, view);
    if (const auto* g = std::get_if<GenesisTransaction>(&entry))
        return is_admissible(*g, view);
    return Admissibility::pass();  // root entries have no signature rules here
}

}  // namespace dlc
