#pragma once

// Domain record types that cross the wire or land in the ledger. Byte
// layouts live in codec.hpp; protocol rules in transactions.hpp and
// ledger.hpp.

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "dlc/crypto.hpp"
#include "dlc/identity.hpp"

namespace dlc {

using crypto::Digest;
using crypto::PublicKey;
using crypto::Signature;

enum class DlKind : std::uint8_t { Demand = 0, Load = 1 };

/// Hash-authenticated demand/load report. Carries no key material, no
/// signature, and no explicit nonce; the Secret field binds sender identity,
/// freshness, and payload through the shared secret.
struct DlTransaction {
    NodeId id;
    std::uint64_t data_wh = 0;
    DlKind kind = DlKind::Demand;
    Digest secret;

    bool operator==(const DlTransaction&) const = default;
};

/// Multi-signed load-control transaction. t_id is the digest of the canonical
/// encoding with both signature bodies zero-filled, so it is stable while
/// signatures are collected. ref_disco_id is all-zero for transactions the
/// distribution company generates and otherwise names the request transaction
/// being answered.
struct LoadControlTransaction {
    Digest t_id;
    Digest p_t_id;  // all-zero for an actor's first transaction
    PublicKey pk_gen;
    std::optional<Signature> sign_gen;
    PublicKey pk_rec;
    std::optional<Signature> sign_rec;
    Digest ref_disco_id;  // all-zero = none
    Bytes metadata;

    bool operator==(const LoadControlTransaction&) const = default;
};

/// Admission record anchoring a node's transaction chain. Plain participants
/// need the authority's signature; sensors additionally need the site owner's
/// signature and a link to the signed contract (contract_ref non-zero).
struct GenesisTransaction {
    PublicKey subject_pk;
    std::optional<Signature> disco_sig;
    std::optional<Signature> customer_sig;
    Digest contract_ref;  // all-zero = plain participant genesis

    bool operator==(const GenesisTransaction&) const = default;

    bool is_sensor_genesis() const { return !contract_ref.is_zero(); }
};

/// Period commitment: only the Merkle root of a period's accepted reports is
/// stored on-chain, never the reports themselves.
struct MerkleRootEntry {
    std::uint64_t period_id = 0;
    Digest root;
    std::uint32_t leaf_count = 0;  // >= 1

    bool operator==(const MerkleRootEntry&) const = default;
};

using BlockEntry = std::variant<MerkleRootEntry, LoadControlTransaction, GenesisTransaction>;

struct Block {
    std::uint64_t height = 0;
    Digest prev_hash;  // all-zero for the first block
    std::uint64_t period_id = 0;
    std::vector<BlockEntry> entries;
    std::optional<Signature> producer_sig;

    bool operator==(const Block&) const = default;
};

struct ProofStep {
    std::uint8_t sibling_side = 0;  // 0 = sibling on the left, 1 = on the right
    Digest sibling;

    bool operator==(const ProofStep&) const = default;
};

struct MerkleProof {
    std::uint32_t leaf_index = 0;
    std::vector<ProofStep> steps;

    bool operator==(const MerkleProof&) const = default;
};

}  // namespace dlc
