#pragma once

// Deterministic message fabric: a tick-ordered bus plus the adversary
// toolkit (replayer, tamperer, forger, eavesdropper). Everything an
// adversary does is a pure function of its seed and the message stream.

#include <algorithm>
#include <map>
#include <random>

#include "dlc/disco.hpp"

namespace dlc {

enum class MsgKind : std::uint8_t {
    DlReport,
    LcOffer,
    LcCountersigned,
    LcReject,
    LcResponse,
    GenesisOffer,
    GenesisSigned,
    SensorIntro,
    BlockAnnounce,
    ReceiptMsg,
};

inline const char* to_string(MsgKind k) {
    switch (k) {
        case MsgKind::DlReport: return "dl_report";
        case MsgKind::LcOffer: return "lc_offer";
        case MsgKind::LcCountersigned: return "lc_countersigned";
        case MsgKind::LcReject: return "lc_reject";
        case MsgKind::LcResponse: return "lc_response";
        case MsgKind::GenesisOffer: return "genesis_offer";
        case MsgKind::GenesisSigned: return "genesis_signed";
        case MsgKind::SensorIntro: return "sensor_intro";
        case MsgKind::BlockAnnounce: return "block_announce";
        case MsgKind::ReceiptMsg: return "receipt";
    }
    return "?";
}

struct Message {
    MsgKind kind{};
    crypto::PublicKey from;
    crypto::PublicKey to;
    Bytes payload;
    // Transport-level provenance flags, never serialized. They let the
    // harness audit outcomes (a forgery that gets accepted is a finding);
    // no verifier ever reads them.
    bool replayed = false;
    bool forged = false;
};

// Wire forms for the payloads that are not already canonical records.

inline Bytes encode_reject(const crypto::Digest& tid) {
    return Bytes(tid.bytes.begin(), tid.bytes.end());
}

inline crypto::Digest decode_reject(ByteView b) {
    if (b.size() != crypto::kDigestSize)
        throw LengthError("reject payload must be one digest");
    crypto::Digest d;
    std::copy(b.begin(), b.end(), d.bytes.begin());
    return d;
}

/// Credential handoff a customer sends when introducing a sensor.
struct SensorIntroPayload {
    crypto::PublicKey sensor_pk;
    NodeId id;
    NodeId pattern_delta;
    std::array<std::uint8_t, 32> secret_value{};
    crypto::Digest contract_tid;
};

inline Bytes encode_sensor_intro(const SensorIntroPayload& p) {
    Bytes out;
    put_bytes(out, p.sensor_pk.bytes);
    put_bytes(out, p.id.to_bytes());
    put_bytes(out, p.pattern_delta.to_bytes());
    put_bytes(out, p.secret_value);
    put_bytes(out, p.contract_tid.bytes);
    return out;
}

inline SensorIntroPayload decode_sensor_intro(ByteView b) {
    if (b.size() != 32 + 16 + 16 + 32 + 32)
        throw LengthError("sensor intro payload has a fixed 128-byte layout");
    SensorIntroPayload p;
    std::copy(b.begin(), b.begin() + 32, p.sensor_pk.bytes.begin());
    p.id = NodeId::from_bytes(b.subspan(32, 16));
    p.pattern_delta = NodeId::from_bytes(b.subspan(48, 16));
    std::copy(b.begin() + 64, b.begin() + 96, p.secret_value.begin());
    std::copy(b.begin() + 96, b.end(), p.contract_tid.bytes.begin());
    return p;
}

inline Bytes encode_receipt(const Receipt& r) {
    Bytes out;
    put_bytes(out, r.owner.bytes);
    put_u64be(out, r.period_id);
    codec::put_var(out, encode(r.tx));
    codec::put_var(out, encode(r.proof));
    return out;
}

inline Receipt decode_receipt(ByteView b) {
    codec::Reader r(b);
    Receipt out;
    out.owner = r.pk32();
    out.period_id = r.u64be();
    out.tx = decode_as<DlTransaction>(r.var());
    out.proof = decode_as<MerkleProof>(r.var());
    r.expect_done();
    return out;
}

/// Tick-ordered queue; messages posted to the same tick deliver in
/// insertion order, so the whole trace is a function of the posts.
class Bus {
public:
    void post(std::uint64_t tick, Message m) {
        queue_[tick].push_back(std::move(m));
        ++posted_;
    }

    std::vector<Message> take_due(std::uint64_t tick) {
        auto it = queue_.find(tick);
        if (it == queue_.end()) return {};
        auto out = std::move(it->second);
        queue_.erase(it);
        return out;
    }

    bool idle() const { return queue_.empty(); }
    std::uint64_t posted() const { return posted_; }

    std::optional<std::uint64_t> next_tick() const {
        if (queue_.empty()) return std::nullopt;
        return queue_.begin()->first;
    }

private:
    std::map<std::uint64_t, std::vector<Message>> queue_;
    std::uint64_t posted_ = 0;
};

/// Seeded coin flip: deterministic and portable (no distribution objects).
inline bool chance(std::mt19937_64& rng, double p) {
    return static_cast<double>(rng()) < p * 18446744073709551616.0;
}

/// Records messages bound for the authority and re-posts byte-identical
/// copies a fixed delay later. Duplicates are never themselves replayed.
class Replayer {
public:
    Replayer(std::uint64_t seed, double intensity, std::uint64_t delay,
             crypto::PublicKey authority)
        : rng_(seed), intensity_(intensity), delay_(delay), authority_(authority) {}

    std::optional<std::pair<std::uint64_t, Message>> observe(const Message& m,
                                                             std::uint64_t now) {
        if (m.replayed || m.to != authority_) return std::nullopt;
        if (!chance(rng_, intensity_)) return std::nullopt;
        Message copy = m;
        copy.replayed = true;
        ++replays_;
        return std::make_pair(now + delay_, std::move(copy));
    }

    std::uint64_t replays() const { return replays_; }

private:
    std::mt19937_64 rng_;
    double intensity_;
    std::uint64_t delay_;
    crypto::PublicKey authority_;
    std::uint64_t replays_ = 0;
};

/// Flips one random byte of a protocol message in flight. Block announces
/// and receipts are left alone: their integrity is the chain's own story.
class Tamperer {
public:
    Tamperer(std::uint64_t seed, double intensity)
        : rng_(seed), intensity_(intensity) {}

    bool maybe_tamper(Message& m) {
        if (m.kind == MsgKind::BlockAnnounce || m.kind == MsgKind::ReceiptMsg)
            return false;
        if (m.payload.empty() || !chance(rng_, intensity_)) return false;
        std::size_t pos = rng_() % m.payload.size();
        m.payload[pos] ^= static_cast<std::uint8_t>(1 + rng_() % 255);
        ++tampered_;
        return true;
    }

    std::uint64_t tampered() const { return tampered_; }

private:
    std::mt19937_64 rng_;
    double intensity_;
    std::uint64_t tampered_ = 0;
};

/// Fabricates DL transactions: either a random identifier, or an identifier
/// sniffed off the wire paired with a wrong secret value.
class Forger {
public:
    Forger(std::uint64_t seed, std::uint32_t per_tick)
        : rng_(seed), per_tick_(per_tick) {}

    void observe_id(NodeId id) { seen_ids_.push_back(id); }

    std::vector<Message> forge(const crypto::PublicKey& self,
                               const crypto::PublicKey& authority) {
        std::vector<Message> out;
        for (std::uint32_t i = 0; i < per_tick_; ++i) {
            NodeCredentials fake;
            bool known = !seen_ids_.empty() && forged_ % 2 == 1;
            fake.current_id =
                known ? seen_ids_[rng_() % seen_ids_.size()] : random_id();
            for (auto& b : fake.secret_value) b = static_cast<std::uint8_t>(rng_());
            fake.nonce = rng_() % 4;
            auto tx = make_dl(fake, rng_() % 5000,
                              (rng_() & 1) != 0 ? DlKind::Load : DlKind::Demand);
            Message m{MsgKind::DlReport, self, authority, encode(tx)};
            m.forged = true;
            out.push_back(std::move(m));
            ++forged_;
        }
        return out;
    }

    std::uint64_t forged() const { return forged_; }

private:
    NodeId random_id() {
        unsigned __int128 hi = rng_();
        return NodeId{(hi << 64) | rng_()};
    }

    std::mt19937_64 rng_;
    std::uint32_t per_tick_;
    std::vector<NodeId> seen_ids_;
    std::uint64_t forged_ = 0;
};

/// Passive wiretap measuring pseudonymity. It learns a sender's transport
/// identity the first time it sees an identifier (a one-off physical
/// attribution); afterwards it can link a report only if the identifier
/// repeats. Identifier rotation drives the score toward zero; disabling
/// rotation drives it toward one.
class Eavesdropper {
public:
    void observe(const Message& m) {
        if (m.kind != MsgKind::DlReport) return;
        DlTransaction tx;
        try {
            tx = decode_as<DlTransaction>(m.payload);
        } catch (const CodecError&) {
            return;
        }
        auto it = first_seen_.find(tx.id);
        if (it == first_seen_.end()) {
            first_seen_.emplace(tx.id, m.from);
            return;
        }
        ++opportunities_;
        if (it->second == m.from) ++correct_;
    }

    std::uint64_t opportunities() const { return opportunities_; }
    std::uint64_t correct() const { return correct_; }

    double linkage_score() const {
        if (opportunities_ == 0) return 0.0;
        return static_cast<double>(correct_) / static_cast<double>(opportunities_);
    }

private:
    std::map<NodeId, crypto::PublicKey> first_seen_;
    std::uint64_t opportunities_ = 0;
    std::uint64_t correct_ = 0;
};

}  // namespace dlc
