#pragma once

// Rotating-ID scheme and the registry of per-participant secrets kept by the
// distribution company. A node and the registry advance in lockstep: each
// accepted report rotates the 128-bit transport id by a per-node additive
// constant and bumps the nonce by one.

#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "dlc/bytes.hpp"
#include "dlc/crypto.hpp"

namespace dlc {

struct DuplicateIdError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// 16-byte unsigned transport identifier with wrapping addition.
struct NodeId {
    unsigned __int128 value = 0;

    auto operator<=>(const NodeId&) const = default;

    NodeId operator+(NodeId other) const { return NodeId{value + other.value}; }

    std::array<std::uint8_t, 16> to_bytes() const {
        std::array<std::uint8_t, 16> out{};
        unsigned __int128 v = value;
        for (int i = 15; i >= 0; --i) {
            out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
            v >>= 8;
        }
        return out;
    }

    static NodeId from_bytes(ByteView b) {
        if (b.size() != 16) throw std::invalid_argument("node id must be 16 bytes");
        unsigned __int128 v = 0;
        for (std::uint8_t byte : b) v = (v << 8) | byte;
        return NodeId{v};
    }

    std::string hex() const { return to_hex(to_bytes()); }
};

struct NodeIdHash {
    std::size_t operator()(const NodeId& id) const {
        return static_cast<std::size_t>(static_cast<std::uint64_t>(id.value) ^
                                        static_cast<std::uint64_t>(id.value >> 64));
    }
};

/// Per-node rotating identity state. Mirrored between the node and the
/// registry; advance() is the only way the id evolves.
struct NodeCredentials {
    NodeId current_id;
    NodeId pattern_delta;
    std::array<std::uint8_t, 32> secret_value{};
    std::uint64_t nonce = 0;

    void advance() {
        current_id = current_id + pattern_delta;
        ++nonce;
    }

    bool operator==(const NodeCredentials&) const = default;
};

struct RegistryRecord {
    NodeCredentials cred;
    crypto::PublicKey owner_pk;
};

/// Registry of admitted senders, indexed by their current transport id.
///
/// With resync window W > 0 the registry also recognizes the next W ids a
/// sender would rotate through (tolerating up to W lost messages) and keeps
/// the last W retired ids so replays of already-consumed reports can be
/// classified as such. W = 0 is the strict drop-on-mismatch behavior.
class Registry {
public:
    explicit Registry(unsigned resync_window = 0) : window_(resync_window) {}

    enum class LookupKind { Match, Stale, Miss };
    struct LookupResult {
        LookupKind kind = LookupKind::Miss;
        std::size_t slot = 0;
        unsigned offset = 0;  // how many advances ahead of the record the id sits
    };

    std::size_t register_node(NodeId id, NodeId pattern_delta,
                              const std::array<std::uint8_t, 32>& secret_value,
                              const crypto::PublicKey& owner_pk) {
        if (auto hit = lookup(id); hit.kind != LookupKind::Miss)
            throw DuplicateIdError("id already registered");
        std::size_t slot = records_.size();
        records_.push_back(RegistryRecord{
            NodeCredentials{id, pattern_delta, secret_value, 0}, owner_pk});
        retired_.emplace_back();
        index_slot(slot);
        return slot;
    }

    LookupResult lookup(NodeId id) const {
        if (auto it = index_.find(id); it != index_.end())
            return LookupResult{LookupKind::Match, it->second.slot, it->second.offset};
        if (auto it = stale_.find(id); it != stale_.end())
            return LookupResult{LookupKind::Stale, it->second, 0};
        return LookupResult{};
    }

    const RegistryRecord& record(std::size_t slot) const { return records_.at(slot); }
    std::size_t size() const { return records_.size(); }
    unsigned window() const { return window_; }

    /// Rotate a record forward by `steps` accepted positions, retiring the
    /// ids it passes over.
    void advance_slot(std::size_t slot, unsigned steps = 1) {
        unindex_slot(slot);
        auto& rec = records_.at(slot);
        for (unsigned i = 0; i < steps; ++i) {
            retire(slot, rec.cred.current_id);
            rec.cred.advance();
        }
        index_slot(slot);
    }

    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const auto& rec : records_) fn(rec);
    }

private:
    struct Slot {
        std::size_t slot;
        unsigned offset;
    };

    void index_slot(std::size_t slot) {
        const auto& cred = records_[slot].cred;
        NodeId id = cred.current_id;
        for (unsigned k = 0; k <= window_; ++k) {
            index_.emplace(id, Slot{slot, k});  // first writer wins on collision
            id = id + cred.pattern_delta;
        }
    }

    void unindex_slot(std::size_t slot) {
        const auto& cred = records_[slot].cred;
        NodeId id = cred.current_id;
        for (unsigned k = 0; k <= window_; ++k) {
            if (auto it = index_.find(id); it != index_.end() && it->second.slot == slot)
                index_.erase(it);
            id = id + cred.pattern_delta;
        }
    }

    void retire(std::size_t slot, NodeId id) {
        if (window_ == 0) return;
        auto& trail = retired_[slot];
        trail.push_back(id);
        stale_.emplace(id, slot);
        while (trail.size() > window_) {
            NodeId old = trail.front();
            trail.pop_front();
            if (auto it = stale_.find(old); it != stale_.end() && it->second == slot)
                stale_.erase(it);
        }
    }

    unsigned window_;
    std::vector<RegistryRecord> records_;
    std::vector<std::deque<NodeId>> retired_;
    std::unordered_map<NodeId, Slot, NodeIdHash> index_;
    std::unordered_map<NodeId, std::size_t, NodeIdHash> stale_;
};

}  // namespace dlc
