#pragma once

// Customer-side actors: meters and sensors that report, consumers that sign
// contracts and audit the ledger, and controllable devices that execute
// authority requests.

#include <algorithm>
#include <map>
#include <tuple>

#include "dlc/disco.hpp"

namespace dlc {

enum class Role : std::uint8_t { Producer, Consumer, Storage, Sensor, Device };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::Producer: return "producer";
        case Role::Consumer: return "consumer";
        case Role::Storage: return "storage";
        case Role::Sensor: return "sensor";
        case Role::Device: return "device";
    }
    return "?";
}

/// What a participant is willing to put under direct control.
struct AcceptancePolicy {
    std::vector<std::string> allowed_classes;
    HourRange allowed_hours{0, 23};

    bool accepts(const ContractTerms& t) const {
        for (const auto& cls : t.device_classes)
            if (std::find(allowed_classes.begin(), allowed_classes.end(), cls) ==
                allowed_classes.end())
                return false;
        return allowed_hours.first <= t.hours.first &&
               t.hours.last <= allowed_hours.last;
    }
};

struct DeviceStatus {
    enum class Mode : std::uint8_t { On, Off, Reduced };
    Mode mode = Mode::On;
    std::uint64_t reduced_by_wh = 0;

    bool operator==(const DeviceStatus&) const = default;
};

inline const char* to_string(DeviceStatus::Mode m) {
    switch (m) {
        case DeviceStatus::Mode::On: return "on";
        case DeviceStatus::Mode::Off: return "off";
        case DeviceStatus::Mode::Reduced: return "reduced";
    }
    return "?";
}

struct StoredReceipt {
    DlTransaction tx;
    MerkleProof proof;
    std::uint64_t period_id = 0;
};

/// One audited access: who touched which of my assets, under which request.
struct AccessRow {
    crypto::PublicKey requester;
    std::string subject;  // device class, or sensor pk hex
    crypto::Digest request_tid;
    std::uint64_t first_period = 0;
    std::uint64_t last_period = 0;
    std::uint32_t count = 0;
};

struct AccessReport {
    crypto::PublicKey auditor;
    std::vector<AccessRow> rows;
};

class ParticipantNode {
public:
    ParticipantNode(std::string name, Role role, crypto::KeyPair keys,
                    crypto::PublicKey authority, NodeCredentials creds = {},
                    AcceptancePolicy policy = {}, std::string device_class = "")
        : name_(std::move(name)),
          role_(role),
          keys_(std::move(keys)),
          authority_(authority),
          creds_(creds),
          policy_(std::move(policy)),
          device_class_(std::move(device_class)) {}

    const std::string& name() const { return name_; }
    Role role() const { return role_; }
    const crypto::PublicKey& pk() const { return keys_.pk; }
    const crypto::KeyPair& keys() const { return keys_; }
    const NodeCredentials& credentials() const { return creds_; }
    const std::string& device_class() const { return device_class_; }
    const DeviceStatus& status() const { return status_; }
    bool admitted() const { return genesis_tid_.has_value(); }
    const std::vector<StoredReceipt>& receipts() const { return receipts_; }
    std::uint64_t refused_actions() const { return refused_; }

    void add_owned_sensor(const crypto::PublicKey& sensor_pk) {
        owned_sensors_.push_back(sensor_pk);
    }
    void add_owned_device(const crypto::PublicKey& device_pk, const std::string& cls) {
        owned_devices_.emplace_back(device_pk, cls);
    }
    const std::vector<crypto::PublicKey>& owned_sensors() const { return owned_sensors_; }

    // Reporting. Credentials advance at send time; under reliable delivery
    // this stays in lockstep with the registry.

    DlTransaction report(std::uint64_t data_wh, DlKind kind) {
        auto tx = make_dl(creds_, data_wh, kind);
        creds_.advance();
        return tx;
    }

    // Contract workflow.

    /// Open the sealed terms and countersign when they fall inside the
    /// acceptance policy. Returns nothing on any defect: a reject, which the
    /// caller reports back to the generator.
    std::optional<LoadControlTransaction> countersign_contract(
        const LoadControlTransaction& offer) {
        if (offer.pk_rec != keys_.pk || offer.pk_gen != authority_) return std::nullopt;
        if (!offer.sign_gen || offer.sign_rec.has_value()) return std::nullopt;
        if (compute_tid(offer) != offer.t_id) return std::nullopt;
        if (!crypto::verify(offer.pk_gen, signing_bytes(offer), *offer.sign_gen))
            return std::nullopt;
        auto env = try_decode_metadata(offer.metadata);
        if (!env || !std::holds_alternative<ContractEnvelope>(*env)) return std::nullopt;
        ContractTerms terms;
        try {
            terms = decode_terms(crypto::open(
                keys_, crypto::SealedBox{std::get<ContractEnvelope>(*env).sealed}));
        } catch (const crypto::DecryptError&) {
            return std::nullopt;  // tampered or misdirected seal
        } catch (const CodecError&) {
            return std::nullopt;
        }
        if (!policy_.accepts(terms)) return std::nullopt;
        countersigned_terms_.emplace(offer.t_id, terms);
        return countersign_as_receiver(offer, keys_);
    }

    /// Sensor admission: check the authority's half and our ownership of both
    /// the sensor and the referenced contract, then add the owner signature.
    std::optional<GenesisTransaction> countersign_sensor_genesis(
        const GenesisTransaction& g) {
        if (!g.is_sensor_genesis() || !g.disco_sig) return std::nullopt;
        if (!crypto::verify(authority_, signing_bytes(g), *g.disco_sig))
            return std::nullopt;
        if (!signed_contracts_.contains(g.contract_ref)) return std::nullopt;
        if (std::find(owned_sensors_.begin(), owned_sensors_.end(), g.subject_pk) ==
            owned_sensors_.end())
            return std::nullopt;
        return countersign_genesis_as_customer(g, keys_);
    }

    /// Owner pushes committed contract terms down to a device it controls.
    void provision(const crypto::Digest& contract_tid, const ContractTerms& terms) {
        provisioned_.emplace(contract_tid, terms);
    }

    const std::map<crypto::Digest, ContractTerms>* signed_contracts() const {
        return &signed_contracts_;
    }

    // Device behavior.

    struct ActionOutcome {
        LoadControlTransaction countersigned_request;
        LoadControlTransaction response;
    };

    /// Verify the request signature under the authority key and the action
    /// against the provisioned contract terms; apply the status change and
    /// chain a response via ref_disco_id. Refusal is silent: no state change,
    /// no response.
    std::optional<ActionOutcome> execute_action(const LoadControlTransaction& request,
                                                std::uint64_t now,
                                                std::uint64_t resend_deadline = 40) {
        if (request.pk_rec != keys_.pk || request.pk_gen != authority_)
            return refuse();
        if (!request.sign_gen || compute_tid(request) != request.t_id) return refuse();
        if (!crypto::verify(request.pk_gen, signing_bytes(request), *request.sign_gen))
            return refuse();
        auto env = try_decode_metadata(request.metadata);
        if (!env || !std::holds_alternative<ActionRequest>(*env)) return refuse();
        const auto& req = std::get<ActionRequest>(*env);
        if (req.device_class != device_class_) return refuse();
        bool covered = false;
        for (const auto& [tid, terms] : provisioned_)
            if (terms.allows_class(req.device_class) && terms.hours.contains(req.hour))
                covered = true;
        if (!covered || !genesis_tid_) return refuse();

        switch (req.action) {
            case ActionKind::Off:
                status_ = DeviceStatus{DeviceStatus::Mode::Off, 0};
                break;
            case ActionKind::Reduce:
                status_ = DeviceStatus{DeviceStatus::Mode::Reduced, req.amount_wh};
                break;
        }

        ActionOutcome out;
        out.countersigned_request = countersign_as_receiver(request, keys_);

        LoadControlTransaction resp;
        resp.p_t_id = responses_.tail();
        resp.pk_gen = keys_.pk;
        resp.pk_rec = authority_;
        resp.ref_disco_id = request.t_id;
        resp.metadata =
            encode_metadata(ActionResult{req.device_class, req.action, req.amount_wh});
        resp.t_id = compute_tid(resp);
        resp = sign_as_generator(resp, keys_);
        responses_.push(resp, now + resend_deadline, true);
        out.response = resp;
        return out;
    }

    /// Responses not yet observed on-chain, for periodic re-send.
    std::vector<LoadControlTransaction> unconfirmed_responses() const {
        std::vector<LoadControlTransaction> out;
        responses_.for_each([&](const LoadControlTransaction& tx) { out.push_back(tx); });
        return out;
    }

    /// Give up on responses whose referenced request never committed by their
    /// deadline: the authority dropped that request, so the acknowledgment has
    /// nothing left to answer and would wedge every response chained after it.
    /// Successors are re-chained and returned for re-sending.
    std::vector<LoadControlTransaction> expire_responses(std::uint64_t now,
                                                         std::uint64_t new_deadline) {
        std::vector<crypto::Digest> doomed;
        responses_.for_each_item([&](const LoadControlTransaction& tx,
                                     std::uint64_t deadline, bool) {
            if (deadline < now && !committed_lc_tids_.contains(tx.ref_disco_id))
                doomed.push_back(tx.t_id);
        });
        if (doomed.empty()) return {};
        for (const auto& tid : doomed) responses_.mark_dead(tid);
        return responses_.sweep(
            now, new_deadline,
            [this](LoadControlTransaction tx) {
                return sign_as_generator(std::move(tx), keys_);
            },
            true);
    }

    // Chain observation.

    void handle_block(const Block& b) {
        for (const auto& entry : b.entries) {
            if (const auto* g = std::get_if<GenesisTransaction>(&entry)) {
                if (g->subject_pk == keys_.pk) {
                    genesis_tid_ = genesis_tid(*g);
                    responses_ = PendingChain(*genesis_tid_);
                }
                if (g->is_sensor_genesis()) {
                    auto it = std::find(owned_sensors_.begin(), owned_sensors_.end(),
                                        g->subject_pk);
                    if (it != owned_sensors_.end())
                        admitted_sensors_.push_back(g->subject_pk);
                }
                continue;
            }
            if (const auto* lc = std::get_if<LoadControlTransaction>(&entry)) {
                committed_lc_tids_.insert(lc->t_id);
                if (lc->pk_gen == keys_.pk) responses_.confirm_committed(lc->t_id);
                if (auto it = countersigned_terms_.find(lc->t_id);
                    it != countersigned_terms_.end()) {
                    signed_contracts_.emplace(it->first, it->second);
                    countersigned_terms_.erase(it);
                }
            }
        }
    }

    const std::vector<crypto::PublicKey>& admitted_sensors() const {
        return admitted_sensors_;
    }

    /// Store a post-commit inclusion receipt, verifying it against the
    /// committed root for its period first.
    bool receive_receipt(const Receipt& r, const Chain& chain) {
        const auto* root = chain.root_of_period(r.period_id);
        if (root == nullptr) return false;
        if (!verify_proof(root->root, crypto::digest(encode(r.tx)), r.proof))
            return false;
        receipts_.push_back(StoredReceipt{r.tx, r.proof, r.period_id});
        return true;
    }

    // Auditing: who accessed my sensors and devices, how often, and when.

    /// One row per (requester, asset, request). A request and its responses
    /// form one access; count is the number of exchanges under that request
    /// (responses observed, or 1 for an unanswered request), and the period
    /// span covers every involved block.
    AccessReport audit(const Chain& chain) const {
        AccessReport rep;
        rep.auditor = keys_.pk;
        using Key = std::tuple<crypto::PublicKey, std::string, crypto::Digest>;
        struct Tally {
            AccessRow row;
            bool request_seen = false;
            std::uint32_t responses = 0;
        };
        std::map<Key, Tally> rows;

        auto touch = [&](const crypto::PublicKey& requester, std::string subject,
                         const crypto::Digest& request_tid, std::uint64_t period,
                         bool is_response) -> Tally& {
            auto [it, fresh] = rows.try_emplace(
                Key{requester, subject, request_tid},
                Tally{AccessRow{requester, std::move(subject), request_tid, period,
                                period, 0},
                      false, 0});
            auto& t = it->second;
            t.row.first_period = std::min(t.row.first_period, period);
            t.row.last_period = std::max(t.row.last_period, period);
            if (is_response)
                ++t.responses;
            else
                t.request_seen = true;
            return t;
        };

        for (const auto& b : chain.blocks()) {
            for (const auto& entry : b.entries) {
                const auto* lc = std::get_if<LoadControlTransaction>(&entry);
                if (lc == nullptr) continue;

                if (lc->ref_disco_id.is_zero()) {
                    // A request: does it target one of my assets?
                    auto subject = subject_label(lc->pk_rec);
                    if (!subject) continue;
                    auto env = try_decode_metadata(lc->metadata);
                    if (env && std::holds_alternative<ActionRequest>(*env))
                        touch(lc->pk_gen, *subject, lc->t_id, b.period_id, false);
                    continue;
                }
                // A response: was it drawn out of one of my sensors/devices?
                if (auto subject = subject_label_generated(lc->pk_gen)) {
                    const auto* req = chain.find_load_control(lc->ref_disco_id);
                    if (req != nullptr)
                        touch(req->pk_gen, *subject, lc->ref_disco_id, b.period_id,
                              true);
                }
            }
        }
        for (auto& [key, tally] : rows) {
            tally.row.count = std::max<std::uint32_t>(tally.responses, 1);
            rep.rows.push_back(std::move(tally.row));
        }
        return rep;
    }

private:
    std::optional<ActionOutcome> refuse() {
        ++refused_;
        return std::nullopt;
    }

    /// Label for an asset of mine targeted as a receiver, if it is mine.
    std::optional<std::string> subject_label(const crypto::PublicKey& target) const {
        if (target == keys_.pk && role_ == Role::Device) return device_class_;
        if (target == keys_.pk && role_ == Role::Sensor) return "sensor:" + short_hex(target);
        for (const auto& [pk, cls] : owned_devices_)
            if (pk == target) return cls;
        for (const auto& pk : owned_sensors_)
            if (pk == target) return "sensor:" + short_hex(pk);
        return std::nullopt;
    }

    /// Label for an asset of mine that generated a response, if it is mine.
    std::optional<std::string> subject_label_generated(
        const crypto::PublicKey& gen) const {
        if (gen == keys_.pk && role_ == Role::Device) return device_class_;
        if (gen == keys_.pk && role_ == Role::Sensor) return "sensor:" + short_hex(gen);
        for (const auto& pk : owned_sensors_)
            if (pk == gen) return "sensor:" + short_hex(pk);
        for (const auto& [pk, cls] : owned_devices_)
            if (pk == gen) return cls;
        return std::nullopt;
    }

    static std::string short_hex(const crypto::PublicKey& pk) {
        return to_hex(ByteView(pk.bytes.data(), 8));
    }

    std::string name_;
    Role role_;
    crypto::KeyPair keys_;
    crypto::PublicKey authority_;
    NodeCredentials creds_;
    AcceptancePolicy policy_;
    std::string device_class_;

    std::optional<crypto::Digest> genesis_tid_;
    DeviceStatus status_;
    PendingChain responses_;
    std::unordered_set<crypto::Digest, crypto::DigestHash> committed_lc_tids_;
    std::uint64_t refused_ = 0;

    std::vector<crypto::PublicKey> owned_sensors_;
    std::vector<std::pair<crypto::PublicKey, std::string>> owned_devices_;
    std::vector<crypto::PublicKey> admitted_sensors_;

    std::map<crypto::Digest, ContractTerms> countersigned_terms_;  // awaiting commit
    std::map<crypto::Digest, ContractTerms> signed_contracts_;     // on-ledger
    std::map<crypto::Digest, ContractTerms> provisioned_;          // device side
    std::vector<StoredReceipt> receipts_;
};

}  // namespace dlc
