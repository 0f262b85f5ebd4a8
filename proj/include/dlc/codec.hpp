#pragma once

// Canonical, bit-exact encoding for every record. Integers are fixed-width
// big-endian, variable-length fields carry a 4-byte big-endian length prefix,
// and every record starts with a 1-byte type tag. decode(encode(x)) == x for
// every well-formed x and encode is injective; docs/FORMAT.md spells out the
// layouts byte by byte.
//
// Signatures and transaction ids are computed over the "signing form": the
// canonical encoding with each signature field forced to a 64-byte zeroed
// body (length prefix present). That keeps t_id stable while signatures are
// collected and lets both parties of a multisig sign identical bytes.

#include <cstdint>
#include <variant>

#include "dlc/records.hpp"

namespace dlc {

inline constexpr std::uint8_t kTagDl = 0x01;
inline constexpr std::uint8_t kTagLoadControl = 0x02;
inline constexpr std::uint8_t kTagGenesis = 0x03;
inline constexpr std::uint8_t kTagBlock = 0x04;
inline constexpr std::uint8_t kTagMerkleProof = 0x05;
inline constexpr std::uint8_t kTagMerkleRoot = 0x06;

inline constexpr std::size_t kDlEncodedSize = 62;  // 1+16+(4+8)+1+32

struct CodecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncatedError : CodecError {
    using CodecError::CodecError;
};
struct UnknownTagError : CodecError {
    using CodecError::CodecError;
};
struct TrailingBytesError : CodecError {
    using CodecError::CodecError;
};
struct LengthError : CodecError {
    using CodecError::CodecError;
};
struct InvalidFieldError : CodecError {
    using CodecError::CodecError;
};

namespace codec {

class Reader {
public:
    explicit Reader(ByteView buf) : buf_(buf) {}

    std::uint8_t u8() { return take(1)[0]; }
    std::uint32_t u32be() { return get_u32be(take(4).data()); }
    std::uint64_t u64be() { return get_u64be(take(8).data()); }
    NodeId id128() { return NodeId::from_bytes(take(16)); }

    crypto::Digest digest32() {
        crypto::Digest d;
        auto b = take(crypto::kDigestSize);
        std::copy(b.begin(), b.end(), d.bytes.begin());
        return d;
    }

    crypto::PublicKey pk32() {
        crypto::PublicKey pk;
        auto b = take(crypto::kPublicKeySize);
        std::copy(b.begin(), b.end(), pk.bytes.begin());
        return pk;
    }

    /// Length-prefixed field whose length must be one of the permitted
    /// values; pass 0 allowed values to accept any length.
    ByteView var(std::initializer_list<std::uint32_t> allowed = {}) {
        std::uint32_t n = u32be();
        if (n > remaining()) throw LengthError("length prefix exceeds remaining bytes");
        if (allowed.size() > 0) {
            bool ok = false;
            for (auto a : allowed) ok = ok || (a == n);
            if (!ok) throw LengthError("field length not permitted here");
        }
        return take(n);
    }

    std::optional<crypto::Signature> signature_field() {
        auto body = var({0, static_cast<std::uint32_t>(crypto::kSignatureSize)});
        if (body.empty()) return std::nullopt;
        crypto::Signature sig;
        std::copy(body.begin(), body.end(), sig.bytes.begin());
        return sig;
    }

    std::size_t remaining() const { return buf_.size() - pos_; }

    void expect_done() const {
        if (remaining() != 0) throw TrailingBytesError("trailing bytes after record");
    }

private:
    ByteView take(std::size_t n) {
        if (remaining() < n) throw TruncatedError("input ends mid-field");
        ByteView out = buf_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    ByteView buf_;
    std::size_t pos_ = 0;
};

inline void put_var(Bytes& out, ByteView body) {
    put_u32be(out, static_cast<std::uint32_t>(body.size()));
    put_bytes(out, body);
}

enum class SigForm { AsIs, ZeroFilled };

inline void put_signature(Bytes& out, const std::optional<crypto::Signature>& sig,
                          SigForm form) {
    if (form == SigForm::ZeroFilled) {
        put_u32be(out, static_cast<std::uint32_t>(crypto::kSignatureSize));
        out.insert(out.end(), crypto::kSignatureSize, 0);
    } else if (sig) {
        put_var(out, sig->bytes);
    } else {
        put_u32be(out, 0);
    }
}

inline void encode_dl_into(Bytes& out, const DlTransaction& tx) {
    put_u8(out, kTagDl);
    put_bytes(out, tx.id.to_bytes());
    put_u32be(out, 8);
    put_u64be(out, tx.data_wh);
    put_u8(out, static_cast<std::uint8_t>(tx.kind));
    put_bytes(out, tx.secret.bytes);
}

inline void encode_lc_into(Bytes& out, const LoadControlTransaction& tx, SigForm form) {
    put_u8(out, kTagLoadControl);
    put_bytes(out, tx.t_id.bytes);
    put_bytes(out, tx.p_t_id.bytes);
    put_bytes(out, tx.pk_gen.bytes);
    put_signature(out, tx.sign_gen, form);
    put_bytes(out, tx.pk_rec.bytes);
    put_signature(out, tx.sign_rec, form);
    put_bytes(out, tx.ref_disco_id.bytes);
    put_var(out, tx.metadata);
}

inline void encode_genesis_into(Bytes& out, const GenesisTransaction& g, SigForm form) {
    put_u8(out, kTagGenesis);
    put_bytes(out, g.subject_pk.bytes);
    put_signature(out, g.disco_sig, form);
    put_signature(out, g.customer_sig, form);
    put_bytes(out, g.contract_ref.bytes);
}

inline void encode_root_entry_into(Bytes& out, const MerkleRootEntry& e) {
    put_u8(out, kTagMerkleRoot);
    put_u64be(out, e.period_id);
    put_bytes(out, e.root.bytes);
    put_u32be(out, e.leaf_count);
}

inline void encode_proof_into(Bytes& out, const MerkleProof& p) {
    put_u8(out, kTagMerkleProof);
    put_u32be(out, p.leaf_index);
    put_u32be(out, static_cast<std::uint32_t>(p.steps.size()));
    for (const auto& step : p.steps) {
        put_u8(out, step.sibling_side);
        put_bytes(out, step.sibling.bytes);
    }
}

inline void encode_entry_into(Bytes& out, const BlockEntry& entry) {
    std::visit(
        [&](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, MerkleRootEntry>)
                encode_root_entry_into(out, e);
            else if constexpr (std::is_same_v<T, LoadControlTransaction>)
                encode_lc_into(out, e, SigForm::AsIs);
            else
                encode_genesis_into(out, e, SigForm::AsIs);
        },
        entry);
}

inline void encode_block_into(Bytes& out, const Block& b, SigForm producer_form) {
    put_u8(out, kTagBlock);
    put_u64be(out, b.height);
    put_bytes(out, b.prev_hash.bytes);
    put_u64be(out, b.period_id);
    put_u32be(out, static_cast<std::uint32_t>(b.entries.size()));
    for (const auto& entry : b.entries) encode_entry_into(out, entry);
    put_signature(out, b.producer_sig, producer_form);
}

}  // namespace codec

inline Bytes encode(const DlTransaction& tx) {
    Bytes out;
    out.reserve(kDlEncodedSize);
    codec::encode_dl_into(out, tx);
    return out;
}

inline Bytes encode(const LoadControlTransaction& tx) {
    Bytes out;
    codec::encode_lc_into(out, tx, codec::SigForm::AsIs);
    return out;
}

inline Bytes encode(const GenesisTransaction& g) {
    Bytes out;
    codec::encode_genesis_into(out, g, codec::SigForm::AsIs);
    return out;
}

inline Bytes encode(const MerkleRootEntry& e) {
    Bytes out;
    codec::encode_root_entry_into(out, e);
    return out;
}

inline Bytes encode(const MerkleProof& p) {
    Bytes out;
    codec::encode_proof_into(out, p);
    return out;
}

inline Bytes encode(const Block& b) {
    Bytes out;
    codec::encode_block_into(out, b, codec::SigForm::AsIs);
    return out;
}

/// Encoding with every signature body zero-filled; the preimage of t_id,
/// multisig signatures, and the block producer signature.
inline Bytes signing_bytes(const LoadControlTransaction& tx) {
    Bytes out;
    codec::encode_lc_into(out, tx, codec::SigForm::ZeroFilled);
    return out;
}

inline Bytes signing_bytes(const GenesisTransaction& g) {
    Bytes out;
    codec::encode_genesis_into(out, g, codec::SigForm::ZeroFilled);
    return out;
}

inline Bytes signing_bytes(const Block& b) {
    Bytes out;
    codec::encode_block_into(out, b, codec::SigForm::ZeroFilled);
    return out;
}

namespace codec {

inline DlTransaction decode_dl_body(Reader& r) {
    DlTransaction tx;
    tx.id = r.id128();
    auto data = r.var({8});
    tx.data_wh = get_u64be(data.data());
    std::uint8_t flag = r.u8();
    if (flag > 1) throw InvalidFieldError("dl flag must be 0 or 1");
    tx.kind = static_cast<DlKind>(flag);
    tx.secret = r.digest32();
    return tx;
}

inline LoadControlTransaction decode_lc_body(Reader& r) {
    LoadControlTransaction tx;
    tx.t_id = r.digest32();
    tx.p_t_id = r.digest32();
    tx.pk_gen = r.pk32();
    tx.sign_gen = r.signature_field();
    tx.pk_rec = r.pk32();
    tx.sign_rec = r.signature_field();
    tx.ref_disco_id = r.digest32();
    auto meta = r.var();
    tx.metadata.assign(meta.begin(), meta.end());
    return tx;
}

inline GenesisTransaction decode_genesis_body(Reader& r) {
    GenesisTransaction g;
    g.subject_pk = r.pk32();
    g.disco_sig = r.signature_field();
    g.customer_sig = r.signature_field();
    g.contract_ref = r.digest32();
    return g;
}

inline MerkleRootEntry decode_root_entry_body(Reader& r) {
    MerkleRootEntry e;
    e.period_id = r.u64be();
    e.root = r.digest32();
    e.leaf_count = r.u32be();
    if (e.leaf_count == 0) throw InvalidFieldError("root entry leaf count must be >= 1");
    return e;
}

inline MerkleProof decode_proof_body(Reader& r) {
    MerkleProof p;
    p.leaf_index = r.u32be();
    std::uint32_t n = r.u32be();
    if (static_cast<std::size_t>(n) * 33 > r.remaining())
        throw LengthError("proof step count exceeds remaining bytes");
    p.steps.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        ProofStep step;
        step.sibling_side = r.u8();
        if (step.sibling_side > 1) throw InvalidFieldError("proof side must be 0 or 1");
        step.sibling = r.digest32();
        p.steps.push_back(step);
    }
    return p;
}

inline BlockEntry decode_entry(Reader& r) {
    std::uint8_t tag = r.u8();
    switch (tag) {
        case kTagMerkleRoot:
            return decode_root_entry_body(r);
        case kTagLoadControl:
            return decode_lc_body(r);
        case kTagGenesis:
            return decode_genesis_body(r);
        case kTagDl:
        case kTagBlock:
        case kTagMerkleProof:
            throw InvalidFieldError("record kind not admissible as a block entry");
        default:
            throw UnknownTagError("unknown block entry tag");
    }
}

inline Block decode_block_body(Reader& r) {
    Block b;
    b.height = r.u64be();
    b.prev_hash = r.digest32();
    b.period_id = r.u64be();
    std::uint32_t n = r.u32be();
    if (static_cast<std::size_t>(n) * 2 > r.remaining() + 2)
        throw LengthError("entry count exceeds remaining bytes");
    b.entries.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) b.entries.push_back(decode_entry(r));
    b.producer_sig = r.signature_field();
    return b;
}

}  // namespace codec

using Record = std::variant<DlTransaction, LoadControlTransaction, GenesisTransaction,
                            Block, MerkleProof, MerkleRootEntry>;

/// Parse any tagged record; throws a CodecError subclass on malformed input,
/// never crashes.
inline Record decode_record(ByteView bytes) {
    codec::Reader r(bytes);
    std::uint8_t tag = r.u8();
    Record out = [&]() -> Record {
        switch (tag) {
            case kTagDl:
                return codec::decode_dl_body(r);
            case kTagLoadControl:
                return codec::decode_lc_body(r);
            case kTagGenesis:
                return codec::decode_genesis_body(r);
            case kTagBlock:
                return codec::decode_block_body(r);
            case kTagMerkleProof:
                return codec::decode_proof_body(r);
            case kTagMerkleRoot:
                return codec::decode_root_entry_body(r);
            default:
                throw UnknownTagError("unknown record tag");
        }
    }();
    r.expect_done();
    return out;
}

template <typename T>
inline T decode_as(ByteView bytes) {
    Record rec = decode_record(bytes);
    if (auto* p = std::get_if<T>(&rec)) return std::move(*p);
    throw InvalidFieldError("record has a different type tag");
}

inline Bytes encode_record(const Record& rec) {
    return std::visit([](const auto& r) { return encode(r); }, rec);
}

}  // namespace dlc
