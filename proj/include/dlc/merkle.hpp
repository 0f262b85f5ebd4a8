#pragma once

// Merkle tree over a period's report digests: root commitment plus inclusion
// proofs. Parent = digest(left || right); an odd node at any level is paired
// with itself; a single-leaf tree's root is the leaf itself.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dlc/records.hpp"

namespace dlc {

struct EmptyTreeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

inline crypto::Digest parent_digest(const crypto::Digest& left,
                                    const crypto::Digest& right) {
    Bytes buf;
    buf.reserve(2 * crypto::kDigestSize);
    put_bytes(buf, left.bytes);
    put_bytes(buf, right.bytes);
    return crypto::digest(buf);
}

class MerkleTree {
public:
    static MerkleTree build(std::vector<crypto::Digest> leaves) {
        if (leaves.empty()) throw EmptyTreeError("cannot build a tree with no leaves");
        MerkleTree tree;
        tree.levels_.push_back(std::move(leaves));
        while (tree.levels_.back().size() > 1) {
            const auto& below = tree.levels_.back();
            std::vector<crypto::Digest> level;
            level.reserve((below.size() + 1) / 2);
            for (std::size_t i = 0; i < below.size(); i += 2) {
                const auto& left = below[i];
                const auto& right = (i + 1 < below.size()) ? below[i + 1] : below[i];
                level.push_back(parent_digest(left, right));
            }
            tree.levels_.push_back(std::move(level));
        }
        return tree;
    }

    const crypto::Digest& root() const { return levels_.back().front(); }
    std::size_t leaf_count() const { return levels_.front().size(); }
    const std::vector<crypto::Digest>& leaves() const { return levels_.front(); }

    MerkleProof prove(std::size_t index) const {
        if (index >= leaf_count()) throw IndexError("leaf index out of range");
        MerkleProof proof;
        proof.leaf_index = static_cast<std::uint32_t>(index);
        std::size_t pos = index;
        for (std::size_t lvl = 0; lvl + 1 < levels_.size(); ++lvl) {
            const auto& level = levels_[lvl];
            ProofStep step;
            if (pos % 2 == 0) {
                step.sibling_side = 1;  // sibling (or duplicated self) on the right
                step.sibling = (pos + 1 < level.size()) ? level[pos + 1] : level[pos];
            } else {
                step.sibling_side = 0;
                step.sibling = level[pos - 1];
            }
            proof.steps.push_back(step);
            pos /= 2;
        }
        return proof;
    }

private:
    MerkleTree() = default;
    std::vector<std::vector<crypto::Digest>> levels_;
};

/// Replays the proof from the leaf and checks both the reconstructed root and
/// that the claimed leaf index matches the recorded path.
inline bool verify_proof(const crypto::Digest& root, const crypto::Digest& leaf,
                         const MerkleProof& proof) {
    crypto::Digest acc = leaf;
    std::size_t pos = proof.leaf_index;
    for (const auto& step : proof.steps) {
        std::uint8_t expected_side = (pos % 2 == 0) ? 1 : 0;
        if (step.sibling_side != expected_side) return false;
        acc = (step.sibling_side == 1) ? parent_digest(acc, step.sibling)
                                       : parent_digest(step.sibling, acc);
        pos /= 2;
    }
    if (pos != 0) return false;  // index wider than the proof path allows
    return acc == root;
}

}  // namespace dlc
