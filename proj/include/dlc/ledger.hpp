#pragma once

// Permissioned, hash-chained, append-only block store. The distribution
// company is the sole block producer; every append re-checks the chain link,
// the producer signature, and the admissibility of each entry against the
// ledger state as it stood just before that entry. verify_chain rebuilds a
// chain from its blocks through the same path, so a chain that loaded and
// appended cleanly is valid by construction.

#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "dlc/transactions.hpp"

namespace dlc {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ChainError : std::uint8_t {
    None,
    BadHeight,
    BadPrevHash,
    BadProducerSig,
    InadmissibleEntry,
    BadEncoding,
};

inline const char* to_string(ChainError e) {
    switch (e) {
        case ChainError::None: return "ok";
        case ChainError::BadHeight: return "BadHeight";
        case ChainError::BadPrevHash: return "BadPrevHash";
        case ChainError::BadProducerSig: return "BadProducerSig";
        case ChainError::InadmissibleEntry: return "InadmissibleEntry";
        case ChainError::BadEncoding: return "BadEncoding";
    }
    return "?";
}

struct ChainViolation {
    std::uint64_t height = 0;
    ChainError code = ChainError::None;
    AdmitReason admit_reason = AdmitReason::None;
    std::uint32_t entry_index = 0;
    std::string detail;
};

struct AppendResult {
    bool ok = false;
    ChainViolation violation;
};

class Chain final : public LedgerView {
public:
    explicit Chain(crypto::PublicKey authority) : authority_(authority) {
        heads_.emplace(authority_, crypto::Digest{});  // authority chains from zero
    }

    // LedgerView
    const crypto::PublicKey& authority_pk() const override { return authority_; }

    std::optional<crypto::Digest> head_of(const crypto::PublicKey& pk) const override {
        if (auto it = heads_.find(pk); it != heads_.end()) return it->second;
        return std::nullopt;
    }

    const LoadControlTransaction* find_load_control(const crypto::Digest& tid) const override {
        if (auto loc = find_transaction(tid))
            return std::get_if<LoadControlTransaction>(loc->entry);
        return nullptr;
    }

    bool contains_tid(const crypto::Digest& tid) const override {
        return tid_index_.contains(tid);
    }

    bool is_admitted(const crypto::PublicKey& pk) const override {
        return pk != authority_ && heads_.contains(pk);
    }

    const std::vector<Block>& blocks() const { return blocks_; }
    std::uint64_t next_height() const { return blocks_.size(); }
    crypto::Digest head_hash() const { return head_hash_; }

    struct Located {
        std::uint64_t height;
        const BlockEntry* entry;
    };

    std::optional<Located> find_transaction(const crypto::Digest& tid) const {
        auto it = tid_index_.find(tid);
        if (it == tid_index_.end()) return std::nullopt;
        const auto& [height, entry_index] = it->second;
        return Located{height, &blocks_[height].entries[entry_index]};
    }

    const MerkleRootEntry* root_of_period(std::uint64_t period_id) const {
        auto it = root_index_.find(period_id);
        if (it == root_index_.end()) return nullptr;
        const auto& [height, entry_index] = it->second;
        return std::get_if<MerkleRootEntry>(&blocks_[height].entries[entry_index]);
    }

    AppendResult append(Block block) {
        auto fail = [&](ChainError code, AdmitReason reason, std::uint32_t idx,
                        std::string detail) {
            return AppendResult{false,
                                ChainViolation{block.height, code, reason, idx,
                                               std::move(detail)}};
        };

        if (block.height != blocks_.size())
            return fail(ChainError::BadHeight, AdmitReason::None, 0,
                        "height not consecutive");
        if (block.prev_hash != head_hash_)
            return fail(ChainError::BadPrevHash, AdmitReason::None, 0,
                        "prev_hash does not match chain head");
        if (!block.producer_sig ||
            !crypto::verify(authority_, signing_bytes(block), *block.producer_sig))
            return fail(ChainError::BadProducerSig, AdmitReason::None, 0,
                        "producer signature missing or invalid");

        PendingView staged(*this);
        for (std::uint32_t i = 0; i < block.entries.size(); ++i) {
            const auto& entry = block.entries[i];
            if (const auto* root = std::get_if<MerkleRootEntry>(&entry)) {
                if (root->leaf_count == 0)
                    return fail(ChainError::InadmissibleEntry, AdmitReason::None, i,
                                "root entry with zero leaves");
                if (root->period_id != block.period_id)
                    return fail(ChainError::InadmissibleEntry, AdmitReason::None, i,
                                "root entry period differs from block period");
                if (root_index_.contains(root->period_id) ||
                    staged.roots.contains(root->period_id))
                    return fail(ChainError::InadmissibleEntry, AdmitReason::None, i,
                                "period already has a committed root");
                staged.roots.insert(root->period_id);
            } else if (const auto* lc = std::get_if<LoadControlTransaction>(&entry)) {
                if (staged.contains_tid(lc->t_id))
                    return fail(ChainError::InadmissibleEntry, AdmitReason::BadTid, i,
                                "duplicate t_id");
                if (auto adm = is_admissible(*lc, staged); !adm.ok)
                    return fail(ChainError::InadmissibleEntry, adm.reason, i,
                                to_string(adm.reason));
                staged.lc_by_tid.emplace(lc->t_id, lc);
                staged.tids.insert(lc->t_id);
                staged.heads[lc->pk_gen] = lc->t_id;
            } else {
                const auto& g = std::get<GenesisTransaction>(entry);
                crypto::Digest gtid = genesis_tid(g);
                if (staged.contains_tid(gtid))
                    return fail(ChainError::InadmissibleEntry, AdmitReason::BadTid, i,
                                "duplicate genesis t_id");
                if (auto adm = is_admissible(g, staged); !adm.ok)
                    return fail(ChainError::InadmissibleEntry, adm.reason, i,
                                to_string(adm.reason));
                staged.tids.insert(gtid);
                staged.heads[g.subject_pk] = gtid;
                staged.admitted.insert(g.subject_pk);
            }
        }

        // Commit.
        std::uint64_t height = block.height;
        head_hash_ = crypto::digest(encode(block));
        blocks_.push_back(std::move(block));
        const Block& stored = blocks_.back();
        for (std::uint32_t i = 0; i < stored.entries.size(); ++i) {
            const auto& entry = stored.entries[i];
            if (const auto* root = std::get_if<MerkleRootEntry>(&entry)) {
                root_index_.emplace(root->period_id, Location{height, i});
            } else if (const auto* lc = std::get_if<LoadControlTransaction>(&entry)) {
                tid_index_.emplace(lc->t_id, Location{height, i});
                heads_[lc->pk_gen] = lc->t_id;
            } else {
                const auto& g = std::get<GenesisTransaction>(entry);
                crypto::Digest gtid = genesis_tid(g);
                tid_index_.emplace(gtid, Location{height, i});
                heads_[g.subject_pk] = gtid;
            }
        }
        return AppendResult{true, {}};
    }

    /// Re-validate every block from scratch through the append path.
    std::optional<ChainViolation> verify() const {
        Chain fresh(authority_);
        for (const auto& block : blocks_) {
            if (auto res = fresh.append(block); !res.ok) return res.violation;
        }
        return std::nullopt;
    }

private:
    struct Location {
        std::uint64_t height;
        std::uint32_t entry_index;
    };

    /// Ledger view over the committed chain plus the effects of entries
    /// already accepted earlier in the block being appended.
    struct PendingView final : LedgerView {
        explicit PendingView(const Chain& base_) : base(base_) {}

        const crypto::PublicKey& authority_pk() const override {
            return base.authority_pk();
        }
        std::optional<crypto::Digest> head_of(const crypto::PublicKey& pk) const override {
            if (auto it = heads.find(pk); it != heads.end()) return it->second;
            return base.head_of(pk);
        }
        const LoadControlTransaction* find_load_control(
            const crypto::Digest& tid) const override {
            if (auto it = lc_by_tid.find(tid); it != lc_by_tid.end()) return it->second;
            return base.find_load_control(tid);
        }
        bool contains_tid(const crypto::Digest& tid) const override {
            return tids.contains(tid) || base.contains_tid(tid);
        }
        bool is_admitted(const crypto::PublicKey& pk) const override {
            return admitted.contains(pk) || base.is_admitted(pk);
        }

        const Chain& base;
        std::unordered_map<crypto::PublicKey, crypto::Digest, crypto::PublicKeyHash> heads;
        std::unordered_map<crypto::Digest, const LoadControlTransaction*, crypto::DigestHash>
            lc_by_tid;
        std::unordered_set<crypto::Digest, crypto::DigestHash> tids;
        std::unordered_set<crypto::PublicKey, crypto::PublicKeyHash> admitted;
        std::unordered_set<std::uint64_t> roots;
    };

    crypto::PublicKey authority_;
    std::vector<Block> blocks_;
    crypto::Digest head_hash_;
    std::unordered_map<crypto::Digest, Location, crypto::DigestHash> tid_index_;
    std::unordered_map<crypto::PublicKey, crypto::Digest, crypto::PublicKeyHash> heads_;
    std::unordered_map<std::uint64_t, Location> root_index_;
};

struct VerifyResult {
    bool ok = false;
    std::optional<ChainViolation> violation;
};

inline VerifyResult verify_chain(const std::vector<Block>& blocks,
                                 const crypto::PublicKey& authority) {
    Chain fresh(authority);
    for (const auto& block : blocks) {
        if (auto res = fresh.append(block); !res.ok) return {false, res.violation};
    }
    return {true, std::nullopt};
}

// Chain file: a bare sequence of [u32 BE length | canonical block encoding].

inline void save_chain(const std::filesystem::path& path,
                       const std::vector<Block>& blocks) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open chain file for writing: " + path.string());
    for (const auto& block : blocks) {
        Bytes bytes = encode(block);
        Bytes framed;
        put_u32be(framed, static_cast<std::uint32_t>(bytes.size()));
        out.write(reinterpret_cast<const char*>(framed.data()),
                  static_cast<std::streamsize>(framed.size()));
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::vector<Block> decode_chain(ByteView bytes) {
    std::vector<Block> blocks;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        if (bytes.size() - pos < 4) throw TruncatedError("chain file ends mid-frame");
        std::uint32_t len = get_u32be(bytes.data() + pos);
        pos += 4;
        if (bytes.size() - pos < len) throw TruncatedError("chain file ends mid-block");
        blocks.push_back(decode_as<Block>(bytes.subspan(pos, len)));
        pos += len;
    }
    return blocks;
}

inline std::vector<Block> load_chain(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open chain file: " + path.string());
    Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_chain(bytes);
}

}  // namespace dlc
