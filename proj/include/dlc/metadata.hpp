#pragma once

// Structured payloads carried in load-control metadata. Three envelope kinds:
// a sealed contract offer (ciphertext only the customer can open), a plaintext
// action request, and a plaintext action result. Contract terms cover exactly
// three categories: controllable device classes, the daily hour window in
// which control is allowed, and sensor installation quotas.

#include <string>

#include "dlc/codec.hpp"
#include "dlc/crypto.hpp"

namespace dlc {

struct HourRange {
    std::uint8_t first = 0;
    std::uint8_t last = 23;  // inclusive

    bool contains(std::uint8_t hour) const { return hour >= first && hour <= last; }
    bool operator==(const HourRange&) const = default;
};

struct SensorQuota {
    std::string type;
    std::uint32_t count = 0;
    std::uint32_t cadence_ticks = 1;  // reporting interval once deployed

    bool operator==(const SensorQuota&) const = default;
};

struct ContractTerms {
    std::vector<std::string> device_classes;
    HourRange hours;
    std::vector<SensorQuota> sensors;

    bool operator==(const ContractTerms&) const = default;

    bool allows_class(const std::string& cls) const {
        for (const auto& c : device_classes)
            if (c == cls) return true;
        return false;
    }
};

enum class ActionKind : std::uint8_t { Off = 0, Reduce = 1 };

inline const char* to_string(ActionKind a) {
    return a == ActionKind::Off ? "off" : "reduce";
}

/// Direct load control instruction for one contracted device class.
struct ActionRequest {
    std::string device_class;
    ActionKind action = ActionKind::Off;
    std::uint64_t amount_wh = 0;  // meaningful for Reduce
    std::uint8_t hour = 0;        // hour of day the instruction applies to

    bool operator==(const ActionRequest&) const = default;
};

/// Echo of an executed instruction, carried by the response transaction.
struct ActionResult {
    std::string device_class;
    ActionKind action = ActionKind::Off;
    std::uint64_t amount_wh = 0;

    bool operator==(const ActionResult&) const = default;
};

struct ContractEnvelope {
    Bytes sealed;  // crypto::SealedBox ciphertext of encoded ContractTerms

    bool operator==(const ContractEnvelope&) const = default;
};

using MetadataEnvelope = std::variant<ContractEnvelope, ActionRequest, ActionResult>;

inline constexpr std::uint8_t kMetaContract = 0x01;
inline constexpr std::uint8_t kMetaAction = 0x02;
inline constexpr std::uint8_t kMetaResult = 0x03;

namespace codec {

inline void put_string(Bytes& out, const std::string& s) {
    put_u32be(out, static_cast<std::uint32_t>(s.size()));
    for (char c : s) out.push_back(static_cast<std::uint8_t>(c));
}

inline std::string read_string(Reader& r) {
    auto b = r.var();
    return std::string(b.begin(), b.end());
}

}  // namespace codec

inline Bytes encode_terms(const ContractTerms& t) {
    Bytes out;
    put_u32be(out, static_cast<std::uint32_t>(t.device_classes.size()));
    for (const auto& c : t.device_classes) codec::put_string(out, c);
    put_u8(out, t.hours.first);
    put_u8(out, t.hours.last);
    put_u32be(out, static_cast<std::uint32_t>(t.sensors.size()));
    for (const auto& s : t.sensors) {
        codec::put_string(out, s.type);
        put_u32be(out, s.count);
        put_u32be(out, s.cadence_ticks);
    }
    return out;
}

inline ContractTerms decode_terms(ByteView bytes) {
    codec::Reader r(bytes);
    ContractTerms t;
    std::uint32_t nc = r.u32be();
    for (std::uint32_t i = 0; i < nc; ++i) t.device_classes.push_back(codec::read_string(r));
    t.hours.first = r.u8();
    t.hours.last = r.u8();
    if (t.hours.first > 23 || t.hours.last > 23 || t.hours.first > t.hours.last)
        throw InvalidFieldError("hour range out of order or beyond 23");
    std::uint32_t ns = r.u32be();
    for (std::uint32_t i = 0; i < ns; ++i) {
        SensorQuota q;
        q.type = codec::read_string(r);
        q.count = r.u32be();
        q.cadence_ticks = r.u32be();
        if (q.cadence_ticks == 0) throw InvalidFieldError("sensor cadence must be >= 1");
        t.sensors.push_back(std::move(q));
    }
    r.expect_done();
    return t;
}

inline Bytes encode_metadata(const ContractEnvelope& e) {
    Bytes out;
    put_u8(out, kMetaContract);
    codec::put_var(out, e.sealed);
    return out;
}

inline Bytes encode_metadata(const ActionRequest& a) {
    Bytes out;
    put_u8(out, kMetaAction);
    codec::put_string(out, a.device_class);
    put_u8(out, static_cast<std::uint8_t>(a.action));
    put_u64be(out, a.amount_wh);
    put_u8(out, a.hour);
    return out;
}

inline Bytes encode_metadata(const ActionResult& a) {
    Bytes out;
    put_u8(out, kMetaResult);
    codec::put_string(out, a.device_class);
    put_u8(out, static_cast<std::uint8_t>(a.action));
    put_u64be(out, a.amount_wh);
    return out;
}

inline MetadataEnvelope decode_metadata(ByteView bytes) {
    codec::Reader r(bytes);
    std::uint8_t kind = r.u8();
    MetadataEnvelope out = [&]() -> MetadataEnvelope {
        switch (kind) {
            case kMetaContract: {
                ContractEnvelope e;
                auto body = r.var();
                e.sealed.assign(body.begin(), body.end());
                return e;
            }
            case kMetaAction: {
                ActionRequest a;
                a.device_class = codec::read_string(r);
                std::uint8_t act = r.u8();
                if (act > 1) throw InvalidFieldError("unknown action kind");
                a.action = static_cast<ActionKind>(act);
                a.amount_wh = r.u64be();
                a.hour = r.u8();
                if (a.hour > 23) throw InvalidFieldError("hour beyond 23");
                return a;
            }
            case kMetaResult: {
                ActionResult a;
                a.device_class = codec::read_string(r);
                std::uint8_t act = r.u8();
                if (act > 1) throw InvalidFieldError("unknown action kind");
                a.action = static_cast<ActionKind>(act);
                a.amount_wh = r.u64be();
                return a;
            }
            default:
                throw UnknownTagError("unknown metadata envelope kind");
        }
    }();
    r.expect_done();
    return out;
}

/// Non-throwing variant for scanning ledgers that may hold foreign payloads.
inline std::optional<MetadataEnvelope> try_decode_metadata(ByteView bytes) {
    try {
        return decode_metadata(bytes);
    } catch (const CodecError&) {
        return std::nullopt;
    }
}

/// Seal contract terms to the customer's key for transport in metadata.
inline Bytes sealed_contract_metadata(const crypto::PublicKey& customer,
                                      const ContractTerms& terms) {
    auto box = crypto::seal(customer, encode_terms(terms));
    return encode_metadata(ContractEnvelope{std::move(box.ciphertext)});
}

inline Bytes sealed_contract_metadata(const crypto::PublicKey& customer,
                                      const ContractTerms& terms,
                                      const std::array<std::uint8_t, 32>& seal_seed) {
    auto box = crypto::seal(customer, encode_terms(terms), seal_seed);
    return encode_metadata(ContractEnvelope{std::move(box.ciphertext)});
}

}  // namespace dlc
