#pragma once

// Scenario harness: builds a whole deployment (authority, reporters,
// consumers, devices, sensors) from a config, runs it on the tick bus with
// the configured adversaries in the path, and distills the outcome into a
// run report. Every key, identifier, and coin flip derives from the scenario
// seed, so a config maps to exactly one chain and one report, byte for byte.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlc/netsim.hpp"
#include "dlc/participant.hpp"

namespace dlc {

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Scenario description

struct DeviceSpec {
    std::string name;
    std::string device_class;
};

struct SensorSpec {
    std::string name;
    std::string type;
    std::uint64_t data_min = 0;
    std::uint64_t data_max = 100;
};

struct ContractSpec {
    std::vector<std::string> device_classes;
    HourRange hours;
    std::vector<SensorQuota> sensors;
    std::uint64_t offer_tick = 1;
};

struct ParticipantSpec {
    std::string name;
    Role role = Role::Consumer;
    std::uint64_t cadence = 0;  // report every N ticks; 0 = never
    std::uint64_t data_min = 0;
    std::uint64_t data_max = 0;
    bool rotate = true;  // false pins the transport id (for linkage studies)
    std::optional<AcceptancePolicy> accepts;
    std::vector<DeviceSpec> devices;
    std::vector<SensorSpec> sensors;
    std::optional<ContractSpec> contract;
};

struct AdversaryConfig {
    double replay_intensity = 0.0;
    std::uint64_t replay_delay = 2;
    double tamper_intensity = 0.0;
    std::uint32_t forge_per_tick = 0;
    double loss = 0.0;
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    std::uint64_t ticks = 64;
    std::uint64_t period_length = 8;
    std::uint64_t hour_length = 0;   // 0: one period per hour
    std::uint64_t drain_ticks = 0;   // 0: three extra periods to settle
    unsigned resync_window = 2;
    std::uint64_t offer_timeout = 40;
    LoadControlPolicy control;
    AdversaryConfig adversary;
    std::vector<ParticipantSpec> participants;
    std::uint64_t bench_iterations = 10'000;
    std::string output_dir = ".";  // where `run` drops chain, report, keys
};

// Seed-keyed derivation. Labels partition the space so a key can never
// collide with an identifier or a secret.

inline crypto::Digest derive_digest(std::uint64_t seed, std::string_view label,
                                    std::string_view name) {
    Bytes pre;
    put_u64be(pre, seed);
    pre.insert(pre.end(), label.begin(), label.end());
    pre.push_back(0x00);
    pre.insert(pre.end(), name.begin(), name.end());
    return crypto::digest(pre);
}

inline std::uint64_t derive_u64(std::uint64_t seed, std::string_view label,
                                std::string_view name) {
    return get_u64be(derive_digest(seed, label, name).bytes.data());
}

inline std::array<std::uint8_t, 32> derive_seed_bytes(std::uint64_t seed,
                                                      const std::string& name) {
    return derive_digest(seed, "key", name).bytes;
}

inline crypto::KeyPair derive_keys(std::uint64_t seed, const std::string& name) {
    return crypto::keygen(derive_seed_bytes(seed, name));
}

inline NodeId id_from_digest(const crypto::Digest& d) {
    unsigned __int128 v = 0;
    for (std::size_t i = 0; i < 16; ++i) v = (v << 8) | d.bytes[i];
    return NodeId{v};
}

inline NodeCredentials derive_credentials(std::uint64_t seed, const std::string& name,
                                          bool rotate) {
    NodeCredentials c;
    c.current_id = id_from_digest(derive_digest(seed, "id", name));
    c.pattern_delta =
        rotate ? id_from_digest(derive_digest(seed, "delta", name)) : NodeId{};
    c.secret_value = derive_digest(seed, "secret", name).bytes;
    return c;
}

// Config parsing

namespace cfgjson {

using nlohmann::json;

inline const json& field(const json& j, const char* key, const std::string& ctx) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(ctx + ": missing field '" + key + "'");
    return *it;
}

template <typename T>
T get(const json& j, const char* key, const std::string& ctx) {
    try {
        return field(j, key, ctx).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(ctx + ": bad value for '" + key + "': " + e.what());
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& ctx) {
    if (!j.contains(key)) return fallback;
    return get<T>(j, key, ctx);
}

inline double ratio(const json& j, const char* key, double fallback,
                    const std::string& ctx) {
    double v = get_or<double>(j, key, fallback, ctx);
    if (v < 0.0 || v > 1.0)
        throw ConfigError(ctx + ": '" + key + "' must lie in [0, 1]");
    return v;
}

inline HourRange hour_range(const json& j, const std::string& ctx) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError(ctx + ": hours must be a [first, last] pair");
    auto first = j[0].get<int>();
    auto last = j[1].get<int>();
    if (first < 0 || last > 23 || first > last)
        throw ConfigError(ctx + ": hours must satisfy 0 <= first <= last <= 23");
    return HourRange{static_cast<std::uint8_t>(first), static_cast<std::uint8_t>(last)};
}

inline Role parse_role(const std::string& s, const std::string& ctx) {
    if (s == "producer") return Role::Producer;
    if (s == "consumer") return Role::Consumer;
    if (s == "storage") return Role::Storage;
    throw ConfigError(ctx + ": unknown role '" + s +
                      "' (devices and sensors are nested under their owner)");
}

}  // namespace cfgjson

inline ScenarioConfig parse_scenario(const nlohmann::json& j) {
    using namespace cfgjson;
    ScenarioConfig cfg;
    cfg.name = get_or<std::string>(j, "name", "scenario", "scenario");
    cfg.seed = get_or<std::uint64_t>(j, "seed", 1, "scenario");
    cfg.ticks = get_or<std::uint64_t>(j, "ticks", 64, "scenario");
    cfg.period_length = get_or<std::uint64_t>(j, "period_length", 8, "scenario");
    cfg.hour_length = get_or<std::uint64_t>(j, "hour_length", 0, "scenario");
    cfg.drain_ticks = get_or<std::uint64_t>(j, "drain_ticks", 0, "scenario");
    cfg.resync_window = get_or<unsigned>(j, "resync_window", 2, "scenario");
    cfg.offer_timeout = get_or<std::uint64_t>(j, "offer_timeout", 40, "scenario");
    cfg.bench_iterations =
        get_or<std::uint64_t>(j, "bench_iterations", 10'000, "scenario");
    cfg.output_dir = get_or<std::string>(j, "output_dir", ".", "scenario");
    if (cfg.ticks == 0) throw ConfigError("scenario: ticks must be positive");
    if (cfg.period_length == 0)
        throw ConfigError("scenario: period_length must be positive");

    if (j.contains("control")) {
        const auto& c = j.at("control");
        cfg.control.capacity_threshold_wh =
            get_or<std::uint64_t>(c, "capacity_threshold_wh", 0, "control");
        cfg.control.per_device_reduction_wh =
            get_or<std::uint64_t>(c, "per_device_reduction_wh", 0, "control");
        cfg.control.curtailment_order =
            get_or<std::vector<std::string>>(c, "order", {}, "control");
        auto action = get_or<std::string>(c, "action", "off", "control");
        if (action == "off")
            cfg.control.action = ActionKind::Off;
        else if (action == "reduce")
            cfg.control.action = ActionKind::Reduce;
        else
            throw ConfigError("control: action must be 'off' or 'reduce'");
    }

    if (j.contains("adversary")) {
        const auto& a = j.at("adversary");
        cfg.adversary.replay_intensity = ratio(a, "replay_intensity", 0.0, "adversary");
        cfg.adversary.replay_delay =
            get_or<std::uint64_t>(a, "replay_delay", 2, "adversary");
        cfg.adversary.tamper_intensity = ratio(a, "tamper_intensity", 0.0, "adversary");
        cfg.adversary.forge_per_tick =
            get_or<std::uint32_t>(a, "forge_per_tick", 0, "adversary");
        cfg.adversary.loss = ratio(a, "loss", 0.0, "adversary");
    }

    std::set<std::string> names;
    for (const auto& pj : get_or<std::vector<nlohmann::json>>(
             j, "participants", {}, "scenario")) {
        ParticipantSpec p;
        p.name = get<std::string>(pj, "name", "participant");
        std::string ctx = "participant '" + p.name + "'";
        p.role = parse_role(get<std::string>(pj, "role", ctx), ctx);
        p.cadence = get_or<std::uint64_t>(pj, "cadence", 0, ctx);
        p.data_min = get_or<std::uint64_t>(pj, "data_min", 0, ctx);
        p.data_max = get_or<std::uint64_t>(pj, "data_max", p.data_min, ctx);
        p.rotate = get_or<bool>(pj, "rotate", true, ctx);
        if (p.data_max < p.data_min)
            throw ConfigError(ctx + ": data_max must be >= data_min");

        if (pj.contains("accepts")) {
            const auto& aj = pj.at("accepts");
            AcceptancePolicy pol;
            pol.allowed_classes =
                get_or<std::vector<std::string>>(aj, "classes", {}, ctx);
            if (aj.contains("hours")) pol.allowed_hours = hour_range(aj.at("hours"), ctx);
            p.accepts = pol;
        }

        for (const auto& dj :
             get_or<std::vector<nlohmann::json>>(pj, "devices", {}, ctx)) {
            DeviceSpec d;
            d.name = get<std::string>(dj, "name", ctx + " device");
            d.device_class = get<std::string>(dj, "class", ctx + " device");
            p.devices.push_back(std::move(d));
        }
        for (const auto& sj :
             get_or<std::vector<nlohmann::json>>(pj, "sensors", {}, ctx)) {
            SensorSpec s;
            s.name = get<std::string>(sj, "name", ctx + " sensor");
            s.type = get<std::string>(sj, "type", ctx + " sensor");
            s.data_min = get_or<std::uint64_t>(sj, "data_min", 0, ctx);
            s.data_max = get_or<std::uint64_t>(sj, "data_max", 100, ctx);
            p.sensors.push_back(std::move(s));
        }

        if (pj.contains("contract")) {
            const auto& cj = pj.at("contract");
            if (p.role != Role::Consumer)
                throw ConfigError(ctx + ": only consumers hold contracts");
            ContractSpec c;
            c.device_classes =
                get_or<std::vector<std::string>>(cj, "classes", {}, ctx);
            c.hours = hour_range(field(cj, "hours", ctx), ctx);
            c.offer_tick = get_or<std::uint64_t>(cj, "offer_tick", 1, ctx);
            for (const auto& qj :
                 get_or<std::vector<nlohmann::json>>(cj, "sensors", {}, ctx)) {
                SensorQuota q;
                q.type = get<std::string>(qj, "type", ctx + " quota");
                q.count = get_or<std::uint32_t>(qj, "count", 1, ctx);
                q.cadence_ticks = get_or<std::uint32_t>(qj, "cadence_ticks", 1, ctx);
                if (q.cadence_ticks == 0)
                    throw ConfigError(ctx + ": quota cadence_ticks must be positive");
                c.sensors.push_back(std::move(q));
            }
            p.contract = std::move(c);
        }
        if ((!p.devices.empty() || !p.sensors.empty()) && p.role != Role::Consumer)
            throw ConfigError(ctx + ": only consumers own devices or sensors");

        if (!names.insert(p.name).second)
            throw ConfigError("duplicate participant name '" + p.name + "'");
        for (const auto& d : p.devices)
            if (!names.insert(d.name).second)
                throw ConfigError("duplicate participant name '" + d.name + "'");
        for (const auto& s : p.sensors)
            if (!names.insert(s.name).second)
                throw ConfigError("duplicate participant name '" + s.name + "'");
        cfg.participants.push_back(std::move(p));
    }
    return cfg;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_scenario(j);
}

// Run outcome

struct RunReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::uint64_t ticks = 0;
    std::uint64_t drain_ticks = 0;
    std::uint64_t period_length = 0;
    std::uint64_t messages_posted = 0;
    std::uint64_t lost_messages = 0;

    std::uint64_t dl_sent = 0;
    std::uint64_t dl_delivered = 0;
    std::uint64_t dl_accepted = 0;
    std::map<std::string, std::uint64_t> dl_dropped;
    std::uint64_t dl_dropped_total = 0;
    bool accounting_ok = false;
    std::map<std::string, std::uint64_t> undecodable;

    std::uint64_t blocks = 0;
    std::uint64_t root_entries = 0;
    std::uint64_t lc_entries = 0;
    std::uint64_t genesis_entries = 0;
    std::uint64_t report_entries = 0;  // raw reports on the ledger: none, ever
    bool chain_valid = false;

    std::uint64_t receipts_issued = 0;
    std::uint64_t receipts_delivered = 0;
    std::uint64_t receipts_verified = 0;
    double receipt_rate = 1.0;

    std::uint64_t contracts_offered = 0;
    std::uint64_t contracts_countersigned = 0;
    std::uint64_t contracts_rejected = 0;
    std::uint64_t contracts_committed = 0;
    std::uint64_t sensor_intros = 0;
    std::uint64_t sensors_admitted = 0;

    std::uint64_t actions_requested = 0;
    std::uint64_t actions_executed = 0;
    std::uint64_t actions_refused = 0;
    std::uint64_t responses_committed = 0;
    std::uint64_t responses_resent = 0;
    bool actions_gated_ok = true;
    bool response_refs_resolve = true;

    std::uint64_t forged_sent = 0;
    std::uint64_t forged_accepted = 0;
    std::uint64_t replays_posted = 0;
    std::uint64_t tampered_messages = 0;

    std::uint64_t linkage_opportunities = 0;
    std::uint64_t linkage_correct = 0;
    double linkage_score = 0.0;

    bool lockstep_ok = true;
    std::uint64_t reporters_checked = 0;
};

struct ConsumerAudit {
    std::string name;
    AccessReport report;
};

struct RunResult {
    RunReport report;
    std::vector<Block> blocks;
    std::vector<ConsumerAudit> audits;
};

inline Bytes encode_chain(const std::vector<Block>& blocks) {
    Bytes out;
    for (const auto& b : blocks) {
        Bytes e = encode(b);
        put_u32be(out, static_cast<std::uint32_t>(e.size()));
        put_bytes(out, e);
    }
    return out;
}

// The engine

class ScenarioEngine {
public:
    explicit ScenarioEngine(ScenarioConfig cfg)
        : cfg_(std::move(cfg)),
          hour_length_(cfg_.hour_length ? cfg_.hour_length : cfg_.period_length),
          // Default drain: enough boundaries for the slowest piece of work, a
          // request that must expire and be rebuilt, to still settle.
          drain_(cfg_.drain_ticks ? cfg_.drain_ticks
                                  : std::max(3 * cfg_.period_length,
                                             cfg_.offer_timeout +
                                                 2 * cfg_.period_length)),
          disco_(derive_keys(cfg_.seed, "disco"), cfg_.resync_window, cfg_.control,
                 cfg_.offer_timeout),
          loss_rng_(derive_u64(cfg_.seed, "loss", "")),
          replayer_(derive_u64(cfg_.seed, "replay", ""),
                    cfg_.adversary.replay_intensity, cfg_.adversary.replay_delay,
                    disco_.pk()),
          tamperer_(derive_u64(cfg_.seed, "tamper", ""),
                    cfg_.adversary.tamper_intensity),
          forger_(derive_u64(cfg_.seed, "forge", ""), cfg_.adversary.forge_per_tick),
          mallory_(derive_keys(cfg_.seed, "mallory").pk) {
        build_world();
    }

    RunResult run() {
        const std::uint64_t horizon = cfg_.ticks + drain_;
        for (std::uint64_t t = 0; t < horizon; ++t) {
            for (auto& m : bus_.take_due(t)) deliver(std::move(m), t);
            if (t < cfg_.ticks) {
                emit_reports(t);
                emit_offers(t);
                emit_forgeries(t);
            }
            if ((t + 1) % cfg_.period_length == 0) commit_boundary(t);
        }
        return finalize();
    }

    const DiscoNode& disco() const { return disco_; }

private:
    struct Actor {
        ParticipantNode node;
        std::uint64_t cadence = 0;
        std::uint64_t data_min = 0;
        std::uint64_t data_max = 0;
        bool alternate = false;  // storage: charge one tick, discharge the next
        DlKind next_kind = DlKind::Demand;
        std::mt19937_64 data_rng{0};
        bool reporting = false;
        std::string owner;  // devices and sensors: the consumer they belong to
        std::optional<ContractSpec> contract;
        crypto::Digest offer_tid;  // latest outstanding contract offer
        bool offer_sent = false;
        std::uint64_t last_offer_boundary = 0;
        std::set<std::string> intro_sent;
        std::uint64_t last_intro_tick = 0;
        std::set<crypto::Digest> provisioned;
        std::set<crypto::Digest> executed;
    };

    void build_world() {
        for (const auto& spec : cfg_.participants) {
            add_actor(spec.name, spec.role, derive_credentials(cfg_.seed, spec.name,
                                                               spec.rotate),
                      default_policy(spec), "");
            Actor& a = actors_.back();
            a.cadence = spec.cadence;
            a.data_min = spec.data_min;
            a.data_max = spec.data_max;
            a.alternate = spec.role == Role::Storage;
            a.data_rng.seed(derive_u64(cfg_.seed, "data", spec.name));
            a.reporting = spec.cadence > 0;
            a.contract = spec.contract;

            for (const auto& d : spec.devices) {
                add_actor(d.name, Role::Device, NodeCredentials{}, {}, d.device_class);
                actors_.back().owner = spec.name;
            }
            for (const auto& s : spec.sensors) {
                add_actor(s.name, Role::Sensor,
                          derive_credentials(cfg_.seed, s.name, true), {}, "");
                Actor& sa = actors_.back();
                sa.owner = spec.name;
                sa.data_min = s.data_min;
                sa.data_max = s.data_max;
                sa.data_rng.seed(derive_u64(cfg_.seed, "data", s.name));
            }
        }

        // Ownership wiring and authority-side registration.
        for (auto& a : actors_) {
            if (a.node.role() == Role::Device) {
                Actor& owner = actor_named(a.owner);
                owner.node.add_owned_device(a.node.pk(), a.node.device_class());
                disco_.register_device(a.node.pk(), owner.node.pk(),
                                       a.node.device_class());
                disco_.admit_participant(a.node.pk());
            } else if (a.node.role() == Role::Sensor) {
                actor_named(a.owner).node.add_owned_sensor(a.node.pk());
            } else {
                disco_.register_reporter(a.node.pk(), a.node.credentials().current_id,
                                         a.node.credentials().pattern_delta,
                                         a.node.credentials().secret_value);
                disco_.admit_participant(a.node.pk());
            }
        }

        // Bootstrap provisioning happens at installation, not over the wire.
        Block genesis_block = disco_.commit_bootstrap();
        for (auto& a : actors_) a.node.handle_block(genesis_block);
    }

    AcceptancePolicy default_policy(const ParticipantSpec& spec) const {
        if (spec.accepts) return *spec.accepts;
        AcceptancePolicy pol;  // sign whatever the scenario intends to offer
        if (spec.contract) pol.allowed_classes = spec.contract->device_classes;
        return pol;
    }

    void add_actor(const std::string& name, Role role, NodeCredentials creds,
                   AcceptancePolicy policy, const std::string& cls) {
        Actor a{ParticipantNode(name, role, derive_keys(cfg_.seed, name), disco_.pk(),
                                creds, std::move(policy), cls)};
        index_.emplace(a.node.pk(), actors_.size());
        by_name_.emplace(name, actors_.size());
        actors_.push_back(std::move(a));
    }

    Actor& actor_named(const std::string& name) { return actors_.at(by_name_.at(name)); }

    Actor* actor_for(const crypto::PublicKey& pk) {
        auto it = index_.find(pk);
        return it == index_.end() ? nullptr : &actors_[it->second];
    }

    std::uint8_t hour_of(std::uint64_t t) const {
        return static_cast<std::uint8_t>((t / hour_length_) % 24);
    }

    void post(std::uint64_t tick, Message m) { bus_.post(tick, std::move(m)); }

    // Emission phases

    void emit_reports(std::uint64_t t) {
        for (auto& a : actors_) {
            if (!a.reporting || a.cadence == 0 || t % a.cadence != 0) continue;
            std::uint64_t span = a.data_max - a.data_min + 1;
            std::uint64_t data = a.data_min + (span ? a.data_rng() % span : 0);
            DlKind kind = a.next_kind;
            if (a.alternate)
                a.next_kind =
                    a.next_kind == DlKind::Demand ? DlKind::Load : DlKind::Demand;
            else if (a.node.role() == Role::Producer)
                kind = DlKind::Load;
            auto tx = a.node.report(data, kind);
            ++report_.dl_sent;
            post(t + 1, Message{MsgKind::DlReport, a.node.pk(), disco_.pk(),
                                encode(tx)});
        }
    }

    void emit_offers(std::uint64_t t) {
        for (auto& a : actors_) {
            if (!a.contract || a.offer_sent || t != a.contract->offer_tick) continue;
            send_offer(a, t);
        }
    }

    void send_offer(Actor& a, std::uint64_t t) {
        ContractTerms terms{a.contract->device_classes, a.contract->hours,
                            a.contract->sensors};
        auto offer = disco_.initiate_contract(a.node.pk(), terms, t);
        a.offer_tid = offer.t_id;
        a.offer_sent = true;
        a.last_offer_boundary = t / cfg_.period_length;
        ++report_.contracts_offered;
        post(t + 1, Message{MsgKind::LcOffer, disco_.pk(), a.node.pk(),
                            encode(offer)});
    }

    void emit_forgeries(std::uint64_t t) {
        for (auto& m : forger_.forge(mallory_, disco_.pk())) post(t + 1, std::move(m));
    }

    // Delivery path: wiretaps first, then loss, then tampering, then the
    // destination. Adversaries tap the sender's uplink, so they see honest
    // originals only.

    void deliver(Message m, std::uint64_t now) {
        if (!m.replayed && !m.forged) {
            eaves_.observe(m);
            if (m.kind == MsgKind::DlReport) sniff(m);
        }
        if (auto dup = replayer_.observe(m, now)) post(dup->first, std::move(dup->second));
        if (m.kind != MsgKind::BlockAnnounce && cfg_.adversary.loss > 0.0 &&
            chance(loss_rng_, cfg_.adversary.loss)) {
            ++report_.lost_messages;
            return;
        }
        tamperer_.maybe_tamper(m);
        dispatch(std::move(m), now);
    }

    void sniff(const Message& m) {
        try {
            forger_.observe_id(decode_as<DlTransaction>(m.payload).id);
        } catch (const CodecError&) {
        }
    }

    template <typename T>
    std::optional<T> decode_payload(const Message& m) {
        try {
            return decode_as<T>(m.payload);
        } catch (const CodecError&) {
            ++report_.undecodable[to_string(m.kind)];
            return std::nullopt;
        }
    }

    void dispatch(Message m, std::uint64_t now) {
        switch (m.kind) {
            case MsgKind::DlReport: {
                ++report_.dl_delivered;
                auto out = disco_.handle_dl(m.payload);
                if (out.accepted) {
                    ++report_.dl_accepted;
                    if (m.forged) ++report_.forged_accepted;
                } else {
                    ++report_.dl_dropped[to_string(out.reason)];
                }
                break;
            }
            case MsgKind::LcOffer: {
                Actor* a = actor_for(m.to);
                auto lc = decode_payload<LoadControlTransaction>(m);
                if (!a || !lc) break;
                if (a->node.role() == Role::Device)
                    device_request(*a, *lc, now);
                else
                    consumer_offer(*a, *lc, now);
                break;
            }
            case MsgKind::LcCountersigned: {
                if (auto lc = decode_payload<LoadControlTransaction>(m))
                    disco_.receive_countersigned(*lc);
                break;
            }
            case MsgKind::LcReject: {
                try {
                    disco_.receive_reject(decode_reject(m.payload));
                } catch (const CodecError&) {
                    ++report_.undecodable[to_string(m.kind)];
                }
                break;
            }
            case MsgKind::LcResponse: {
                if (auto lc = decode_payload<LoadControlTransaction>(m))
                    disco_.receive_response(*lc, now);
                break;
            }
            case MsgKind::SensorIntro: {
                try {
                    auto p = decode_sensor_intro(m.payload);
                    auto g = disco_.receive_sensor_intro(p.sensor_pk, p.id,
                                                         p.pattern_delta,
                                                         p.secret_value,
                                                         p.contract_tid);
                    post(now + 1, Message{MsgKind::GenesisOffer, disco_.pk(), m.from,
                                          encode(g)});
                } catch (const CodecError&) {
                    ++report_.undecodable[to_string(m.kind)];
                } catch (const BadRefError&) {
                } catch (const DuplicateIdError&) {
                    // A mangled intro can claim a taken identifier; refuse it.
                }
                break;
            }
            case MsgKind::GenesisOffer: {
                Actor* a = actor_for(m.to);
                auto g = decode_payload<GenesisTransaction>(m);
                if (!a || !g) break;
                if (auto s = a->node.countersign_sensor_genesis(*g))
                    post(now + 1, Message{MsgKind::GenesisSigned, a->node.pk(),
                                          disco_.pk(), encode(*s)});
                break;
            }
            case MsgKind::GenesisSigned: {
                if (auto g = decode_payload<GenesisTransaction>(m))
                    disco_.receive_genesis_signed(*g);
                break;
            }
            case MsgKind::BlockAnnounce: {
                Actor* a = actor_for(m.to);
                auto b = decode_payload<Block>(m);
                if (!a || !b) break;
                a->node.handle_block(*b);
                if (a->node.role() == Role::Consumer) consumer_settled(*a, now);
                break;
            }
            case MsgKind::ReceiptMsg: {
                Actor* a = actor_for(m.to);
                if (!a) break;
                try {
                    auto r = decode_receipt(m.payload);
                    ++report_.receipts_delivered;
                    if (a->node.receive_receipt(r, disco_.chain()))
                        ++report_.receipts_verified;
                } catch (const CodecError&) {
                    ++report_.undecodable[to_string(m.kind)];
                }
                break;
            }
        }
    }

    void consumer_offer(Actor& a, const LoadControlTransaction& lc, std::uint64_t now) {
        if (auto signed_lc = a.node.countersign_contract(lc)) {
            ++report_.contracts_countersigned;
            post(now + 1, Message{MsgKind::LcCountersigned, a.node.pk(), disco_.pk(),
                                  encode(*signed_lc)});
        } else {
            ++report_.contracts_rejected;
            post(now + 1, Message{MsgKind::LcReject, a.node.pk(), disco_.pk(),
                                  encode_reject(lc.t_id)});
        }
    }

    void device_request(Actor& a, const LoadControlTransaction& lc, std::uint64_t now) {
        if (a.executed.contains(lc.t_id)) {
            // A repeat means the authority never saw our ack; send it again.
            if (auto rq = exec_requests_.find(lc.t_id); rq != exec_requests_.end())
                post(now + 1, Message{MsgKind::LcCountersigned, a.node.pk(),
                                      disco_.pk(), encode(rq->second)});
            for (const auto& tx : a.node.unconfirmed_responses())
                if (tx.ref_disco_id == lc.t_id) {
                    post(now + 1, Message{MsgKind::LcResponse, a.node.pk(),
                                          disco_.pk(), encode(tx)});
                    sent_at_[tx.t_id] = now;
                }
            return;
        }
        auto outcome = a.node.execute_action(lc, now, cfg_.offer_timeout);
        if (!outcome) return;  // refusal is silent by design; counted at the end
        a.executed.insert(lc.t_id);
        ++report_.actions_executed;
        exec_log_.push_back(ExecRecord{index_.at(a.node.pk()), lc.t_id, lc.metadata});
        post(now + 1, Message{MsgKind::LcCountersigned, a.node.pk(), disco_.pk(),
                              encode(outcome->countersigned_request)});
        post(now + 1, Message{MsgKind::LcResponse, a.node.pk(), disco_.pk(),
                              encode(outcome->response)});
        sent_at_[outcome->response.t_id] = now;
        exec_requests_[lc.t_id] = outcome->countersigned_request;
    }

    // A consumer just processed a block: provision devices under any newly
    // committed contract and introduce its sensors to the authority.
    void consumer_settled(Actor& a, std::uint64_t now) {
        const auto* contracts = a.node.signed_contracts();
        for (const auto& [tid, terms] : *contracts) {
            if (a.provisioned.contains(tid)) continue;
            a.provisioned.insert(tid);
            for (const auto& [name, idx] : by_name_) {
                Actor& d = actors_[idx];
                if (d.node.role() == Role::Device && d.owner == a.node.name())
                    d.node.provision(tid, terms);
            }
            send_intros(a, tid, now);
        }
        activate_sensors(a);
    }

    void send_intros(Actor& a, const crypto::Digest& contract_tid, std::uint64_t now) {
        for (auto& s : actors_) {
            if (s.node.role() != Role::Sensor || s.owner != a.node.name()) continue;
            if (a.intro_sent.contains(s.node.name())) continue;
            a.intro_sent.insert(s.node.name());
            a.last_intro_tick = now;
            ++report_.sensor_intros;
            SensorIntroPayload p;
            p.sensor_pk = s.node.pk();
            p.id = s.node.credentials().current_id;
            p.pattern_delta = s.node.credentials().pattern_delta;
            p.secret_value = s.node.credentials().secret_value;
            p.contract_tid = contract_tid;
            post(now + 1, Message{MsgKind::SensorIntro, a.node.pk(), disco_.pk(),
                                  encode_sensor_intro(p)});
        }
    }

    void activate_sensors(Actor& a) {
        for (const auto& pk : a.node.admitted_sensors()) {
            Actor* s = actor_for(pk);
            if (!s || s->reporting) continue;
            s->reporting = true;
            s->cadence = sensor_cadence(a, *s);
        }
    }

    std::uint64_t sensor_cadence(const Actor& owner, const Actor& sensor) const {
        if (owner.contract) {
            auto it = std::find_if(cfg_.participants.begin(), cfg_.participants.end(),
                                   [&](const ParticipantSpec& p) {
                                       return p.name == owner.node.name();
                                   });
            if (it != cfg_.participants.end()) {
                for (const auto& ss : it->sensors)
                    if (ss.name == sensor.node.name())
                        for (const auto& q : owner.contract->sensors)
                            if (q.type == ss.type) return q.cadence_ticks;
            }
        }
        return cfg_.period_length;
    }

    // Boundary bookkeeping: commit the period, announce the block, hand out
    // receipts, push rebuilt offers and fresh action requests, retry what
    // looks stuck.

    void commit_boundary(std::uint64_t t) {
        std::uint64_t period = (t + 1) / cfg_.period_length;
        auto res = disco_.commit_period(period, t);

        for (auto& a : actors_)
            post(t + 1, Message{MsgKind::BlockAnnounce, disco_.pk(), a.node.pk(),
                                encode(res.block)});

        report_.receipts_issued += res.receipts.size();
        for (const auto& r : res.receipts)
            post(t + 1, Message{MsgKind::ReceiptMsg, disco_.pk(), r.owner,
                                encode_receipt(r)});

        for (const auto& tx : res.rebroadcast) {
            // A rebuilt contract offer replaces the tid we were tracking.
            if (Actor* a = actor_for(tx.pk_rec); a && a->offer_sent &&
                                                 a->node.role() != Role::Device)
                a->offer_tid = tx.t_id;
            post(t + 1, Message{MsgKind::LcOffer, disco_.pk(), tx.pk_rec, encode(tx)});
        }

        for (const auto& req : disco_.determine_actions(res.summary, hour_of(t), t)) {
            ++report_.actions_requested;
            post(t + 1, Message{MsgKind::LcOffer, disco_.pk(), req.pk_rec,
                                encode(req)});
        }

        if (t + 1 < cfg_.ticks) retry_offers(t, period);
        resend_responses(t);
        retry_intros(t);
    }

    // A contract offer that is neither queued at the authority nor committed
    // was lost in flight; issue a fresh one.
    void retry_offers(std::uint64_t t, std::uint64_t boundary) {
        for (auto& a : actors_) {
            if (!a.contract || !a.offer_sent) continue;
            if (boundary < a.last_offer_boundary + 2) continue;
            if (disco_.offer_in_flight(a.offer_tid)) continue;
            if (disco_.chain().find_load_control(a.offer_tid) != nullptr) continue;
            send_offer(a, t);
        }
    }

    void resend_responses(std::uint64_t t) {
        for (auto& a : actors_) {
            if (a.node.role() != Role::Device) continue;
            // First shed acknowledgments whose request the authority dropped;
            // the re-chained survivors go out fresh.
            for (const auto& tx : a.node.expire_responses(t, t + cfg_.offer_timeout)) {
                sent_at_[tx.t_id] = t;
                ++report_.responses_resent;
                post(t + 1, Message{MsgKind::LcResponse, a.node.pk(), disco_.pk(),
                                    encode(tx)});
            }
            for (const auto& tx : a.node.unconfirmed_responses()) {
                auto it = sent_at_.find(tx.t_id);
                if (it != sent_at_.end() && t - it->second < cfg_.period_length)
                    continue;
                sent_at_[tx.t_id] = t;
                ++report_.responses_resent;
                // The countersigned request rides along: if it was the leg
                // that got lost, the response can never commit without it.
                if (auto rq = exec_requests_.find(tx.ref_disco_id);
                    rq != exec_requests_.end())
                    post(t + 1, Message{MsgKind::LcCountersigned, a.node.pk(),
                                        disco_.pk(), encode(rq->second)});
                post(t + 1, Message{MsgKind::LcResponse, a.node.pk(), disco_.pk(),
                                    encode(tx)});
            }
        }
    }

    // Intro or signed genesis lost in flight: introduce the sensor again.
    // The handshake spans three legs plus a block announcement, so give it
    // two full periods before concluding a leg was dropped.
    void retry_intros(std::uint64_t t) {
        for (auto& a : actors_) {
            if (a.node.role() != Role::Consumer || a.provisioned.empty()) continue;
            if (t + 1 < a.last_intro_tick + 2 * cfg_.period_length) continue;
            bool resent = false;
            for (auto& s : actors_) {
                if (s.node.role() != Role::Sensor || s.owner != a.node.name()) continue;
                if (s.reporting) continue;
                const auto& admitted = a.node.admitted_sensors();
                if (std::find(admitted.begin(), admitted.end(), s.node.pk()) !=
                    admitted.end())
                    continue;
                if (a.intro_sent.erase(s.node.name()) > 0) resent = true;
            }
            if (resent) send_intros(a, *a.provisioned.begin(), t);
        }
    }

    // Post-run analysis

    RunResult finalize() {
        RunReport& r = report_;
        r.scenario = cfg_.name;
        r.seed = cfg_.seed;
        r.ticks = cfg_.ticks;
        r.drain_ticks = drain_;
        r.period_length = cfg_.period_length;
        r.messages_posted = bus_.posted();

        for (const auto& [reason, n] : r.dl_dropped) r.dl_dropped_total += n;
        r.accounting_ok = r.dl_accepted + r.dl_dropped_total == r.dl_delivered;

        r.forged_sent = forger_.forged();
        r.replays_posted = replayer_.replays();
        r.tampered_messages = tamperer_.tampered();
        r.linkage_opportunities = eaves_.opportunities();
        r.linkage_correct = eaves_.correct();
        r.linkage_score = eaves_.linkage_score();

        scan_chain(r);
        check_gating(r);
        check_lockstep(r);

        r.receipt_rate = r.receipts_issued == 0
                             ? 1.0
                             : static_cast<double>(r.receipts_verified) /
                                   static_cast<double>(r.receipts_issued);

        RunResult out;
        out.report = r;
        out.blocks = disco_.chain().blocks();
        for (auto& a : actors_)
            if (a.node.role() == Role::Consumer)
                out.audits.push_back(
                    ConsumerAudit{a.node.name(), a.node.audit(disco_.chain())});
        return out;
    }

    void scan_chain(RunReport& r) {
        const auto& blocks = disco_.chain().blocks();
        r.blocks = blocks.size();
        for (const auto& b : blocks) {
            for (const auto& e : b.entries) {
                if (std::holds_alternative<MerkleRootEntry>(e)) {
                    ++r.root_entries;
                } else if (const auto* lc = std::get_if<LoadControlTransaction>(&e)) {
                    ++r.lc_entries;
                    auto env = try_decode_metadata(lc->metadata);
                    if (env && std::holds_alternative<ContractEnvelope>(*env))
                        ++r.contracts_committed;
                    if (env && std::holds_alternative<ActionResult>(*env))
                        ++r.responses_committed;
                    if (!lc->ref_disco_id.is_zero() &&
                        disco_.chain().find_load_control(lc->ref_disco_id) == nullptr)
                        r.response_refs_resolve = false;
                } else if (std::holds_alternative<GenesisTransaction>(e)) {
                    ++r.genesis_entries;
                }
            }
        }
        for (const auto& a : actors_) {
            if (a.node.role() == Role::Sensor && a.reporting) ++r.sensors_admitted;
            if (a.node.role() == Role::Device) r.actions_refused += a.node.refused_actions();
        }
        r.chain_valid = verify_chain(blocks, disco_.pk()).ok &&
                        disco_.chain().verify() == std::nullopt;
    }

    struct ExecRecord {
        std::size_t device_idx;
        crypto::Digest request_tid;
        Bytes metadata;
    };

    // Every status change a device underwent must trace to a committed,
    // authority-signed request whose terms a committed contract covers.
    // A request can die in flight and be rebuilt under a fresh identifier;
    // the executed copy is then vouched for by its committed twin, the entry
    // carrying the same instruction bytes to the same device.
    const LoadControlTransaction* committed_request(const ExecRecord& rec,
                                                    const Actor& dev) const {
        const auto* exact = disco_.chain().find_load_control(rec.request_tid);
        if (exact != nullptr) return exact;
        for (const auto& b : disco_.chain().blocks())
            for (const auto& e : b.entries)
                if (const auto* lc = std::get_if<LoadControlTransaction>(&e))
                    if (lc->pk_rec == dev.node.pk() &&
                        lc->metadata == rec.metadata && lc->ref_disco_id.is_zero())
                        return lc;
        return nullptr;
    }

    void check_gating(RunReport& r) {
        for (const auto& rec : exec_log_) {
            const Actor& dev = actors_[rec.device_idx];
            const auto* lc = committed_request(rec, dev);
            if (lc == nullptr || lc->pk_gen != disco_.pk() ||
                lc->pk_rec != dev.node.pk()) {
                r.actions_gated_ok = false;
                continue;
            }
            auto env = try_decode_metadata(lc->metadata);
            const auto* req = env ? std::get_if<ActionRequest>(&*env) : nullptr;
            if (req == nullptr || req->device_class != dev.node.device_class()) {
                r.actions_gated_ok = false;
                continue;
            }
            const Actor& owner = actors_.at(by_name_.at(dev.owner));
            bool covered = false;
            for (const auto& [tid, terms] : *owner.node.signed_contracts())
                if (disco_.chain().find_load_control(tid) != nullptr &&
                    terms.allows_class(req->device_class) &&
                    terms.hours.contains(req->hour))
                    covered = true;
            if (!covered) r.actions_gated_ok = false;
        }
    }

    void check_lockstep(RunReport& r) {
        for (const auto& a : actors_) {
            Role role = a.node.role();
            if (role == Role::Device) continue;
            if (role == Role::Sensor && !a.reporting) continue;
            ++r.reporters_checked;
            auto hit = disco_.registry().lookup(a.node.credentials().current_id);
            if (hit.kind != Registry::LookupKind::Match || hit.offset != 0 ||
                disco_.registry().record(hit.slot).cred != a.node.credentials())
                r.lockstep_ok = false;
        }
    }

    ScenarioConfig cfg_;
    std::uint64_t hour_length_;
    std::uint64_t drain_;
    DiscoNode disco_;
    std::vector<Actor> actors_;
    std::map<crypto::PublicKey, std::size_t> index_;
    std::map<std::string, std::size_t> by_name_;
    Bus bus_;
    std::mt19937_64 loss_rng_;
    Replayer replayer_;
    Tamperer tamperer_;
    Forger forger_;
    Eavesdropper eaves_;
    crypto::PublicKey mallory_;
    RunReport report_;
    std::vector<ExecRecord> exec_log_;
    std::map<crypto::Digest, std::uint64_t> sent_at_;
    std::map<crypto::Digest, LoadControlTransaction> exec_requests_;
};

inline RunResult run_scenario(const ScenarioConfig& cfg) {
    return ScenarioEngine(cfg).run();
}

// Serialization of outcomes. nlohmann::json keeps object keys sorted, so a
// dump is a pure function of the values.

inline nlohmann::json audit_json(const AccessReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : report.rows) {
        rows.push_back({{"requester", row.requester.hex()},
                        {"subject", row.subject},
                        {"request_tid", row.request_tid.hex()},
                        {"first_period", row.first_period},
                        {"last_period", row.last_period},
                        {"count", row.count}});
    }
    return {{"auditor", report.auditor.hex()}, {"rows", rows}};
}

inline nlohmann::json report_json(const RunResult& result) {
    const RunReport& r = result.report;
    nlohmann::json j;
    j["scenario"] = {{"name", r.scenario},
                     {"seed", r.seed},
                     {"ticks", r.ticks},
                     {"drain_ticks", r.drain_ticks},
                     {"period_length", r.period_length}};
    j["traffic"] = {{"messages_posted", r.messages_posted},
                    {"lost", r.lost_messages},
                    {"undecodable", r.undecodable}};
    j["reports"] = {{"sent", r.dl_sent},
                    {"delivered", r.dl_delivered},
                    {"accepted", r.dl_accepted},
                    {"dropped", r.dl_dropped},
                    {"dropped_total", r.dl_dropped_total},
                    {"accounting_ok", r.accounting_ok}};
    j["ledger"] = {{"blocks", r.blocks},
                   {"root_entries", r.root_entries},
                   {"load_control_entries", r.lc_entries},
                   {"genesis_entries", r.genesis_entries},
                   {"report_entries", r.report_entries},
                   {"chain_valid", r.chain_valid}};
    j["receipts"] = {{"issued", r.receipts_issued},
                     {"delivered", r.receipts_delivered},
                     {"verified", r.receipts_verified},
                     {"rate", r.receipt_rate}};
    j["contracts"] = {{"offered", r.contracts_offered},
                      {"countersigned", r.contracts_countersigned},
                      {"rejected", r.contracts_rejected},
                      {"committed", r.contracts_committed}};
    j["sensors"] = {{"intros", r.sensor_intros}, {"admitted", r.sensors_admitted}};
    j["actions"] = {{"requested", r.actions_requested},
                    {"executed", r.actions_executed},
                    {"refused", r.actions_refused},
                    {"responses_committed", r.responses_committed},
                    {"responses_resent", r.responses_resent},
                    {"gated_ok", r.actions_gated_ok},
                    {"refs_resolve", r.response_refs_resolve}};
    j["adversary"] = {{"forged_sent", r.forged_sent},
                      {"forged_accepted", r.forged_accepted},
                      {"replays_posted", r.replays_posted},
                      {"tampered", r.tampered_messages}};
    j["privacy"] = {{"linkage_opportunities", r.linkage_opportunities},
                    {"linkage_correct", r.linkage_correct},
                    {"linkage_score", r.linkage_score}};
    j["identity"] = {{"lockstep_ok", r.lockstep_ok},
                     {"reporters_checked", r.reporters_checked}};
    nlohmann::json audits = nlohmann::json::array();
    for (const auto& a : result.audits)
        audits.push_back({{"name", a.name}, {"audit", audit_json(a.report)}});
    j["audits"] = audits;
    return j;
}

inline nlohmann::json keys_manifest_json(const ScenarioConfig& cfg) {
    nlohmann::json actors = nlohmann::json::array();
    auto entry = [&](const std::string& name, const char* role,
                     const std::string& cls, const std::string& owner) {
        auto seed = derive_seed_bytes(cfg.seed, name);
        nlohmann::json e = {{"name", name},
                            {"role", role},
                            {"seed", to_hex(seed)},
                            {"pk", crypto::keygen(seed).pk.hex()}};
        if (!cls.empty()) e["device_class"] = cls;
        if (!owner.empty()) e["owner"] = owner;
        return e;
    };
    for (const auto& p : cfg.participants) {
        actors.push_back(entry(p.name, to_string(p.role), "", ""));
        for (const auto& d : p.devices)
            actors.push_back(entry(d.name, "device", d.device_class, p.name));
        for (const auto& s : p.sensors)
            actors.push_back(entry(s.name, "sensor", "", p.name));
    }
    return {{"authority_pk", derive_keys(cfg.seed, "disco").pk.hex()},
            {"actors", actors}};
}

// Microbenchmark: the per-report cost of the hash-based authentication
// pipeline next to a conventional per-report signature scheme.

struct BenchStats {
    std::uint64_t iterations = 0;
    double median_ns = 0.0;
    double p95_ns = 0.0;
};

struct BenchReport {
    BenchStats hash_auth;
    BenchStats signature_auth;
    double median_ratio = 0.0;  // signature / hash
};

namespace bench_detail {

inline BenchStats summarize(std::vector<double>& samples) {
    BenchStats s;
    s.iterations = samples.size();
    if (samples.empty()) return s;
    std::sort(samples.begin(), samples.end());
    s.median_ns = samples[samples.size() / 2];
    s.p95_ns = samples[std::min(samples.size() - 1, (samples.size() * 95) / 100)];
    return s;
}

template <typename Fn>
std::vector<double> time_each(std::uint64_t n, Fn&& op) {
    std::vector<double> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        op(i);
        auto t1 = std::chrono::steady_clock::now();
        out.push_back(
            std::chrono::duration<double, std::nano>(t1 - t0).count());
    }
    return out;
}

}  // namespace bench_detail

inline BenchReport run_bench(std::uint64_t iterations, std::uint64_t seed) {
    BenchReport rep;
    if (iterations == 0) return rep;

    NodeCredentials sender = derive_credentials(seed, "bench-sender", true);
    NodeCredentials mirror = sender;  // the registry's view
    std::uint64_t sink = 0;

    std::uint64_t warmup = std::min<std::uint64_t>(1000, iterations);
    for (std::uint64_t i = 0; i < warmup; ++i) {
        auto tx = make_dl(sender, i, DlKind::Demand);
        sink ^= tx.secret.bytes[0];
        sender.advance();
        mirror.advance();
    }

    // Hash path: build the report, then verify it the way the authority does.
    auto hash_samples = bench_detail::time_each(iterations, [&](std::uint64_t i) {
        auto tx = make_dl(sender, i, DlKind::Demand);
        auto expect = dl_secret(mirror.secret_value, mirror.nonce, tx.data_wh, tx.kind);
        sink ^= static_cast<std::uint64_t>(expect == tx.secret);
        sender.advance();
        mirror.advance();
    });

    // Signature baseline: same payload, Ed25519 over the body instead of the
    // one-time secret.
    auto keys = derive_keys(seed, "bench-signer");
    auto sig_samples = bench_detail::time_each(iterations, [&](std::uint64_t i) {
        Bytes body;
        put_bytes(body, sender.current_id.to_bytes());
        put_u64be(body, sender.nonce);
        put_u64be(body, i);
        put_u8(body, 0);
        auto sig = crypto::sign(keys.sk, body);
        sink ^= static_cast<std::uint64_t>(crypto::verify(keys.pk, body, sig));
    });

    static volatile std::uint64_t observable;
    observable = sink;  // the measured work must not be optimized away

    rep.hash_auth = bench_detail::summarize(hash_samples);
    rep.signature_auth = bench_detail::summarize(sig_samples);
    if (rep.hash_auth.median_ns > 0.0)
        rep.median_ratio = rep.signature_auth.median_ns / rep.hash_auth.median_ns;
    return rep;
}

inline nlohmann::json bench_json(const BenchReport& r) {
    auto stats = [](const BenchStats& s) {
        return nlohmann::json{{"iterations", s.iterations},
                              {"median_ns", s.median_ns},
                              {"p95_ns", s.p95_ns}};
    };
    return {{"hash_auth", stats(r.hash_auth)},
            {"signature_auth", stats(r.signature_auth)},
            {"median_ratio", r.median_ratio}};
}

}  // namespace dlc
