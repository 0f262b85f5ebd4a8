#pragma once

// The distribution company: sole block producer, holder of the credential
// registry, verifier of hash-authenticated reports, and originator of the
// multisig contract / sensor-admission / load-control workflows.

#include <cassert>

#include "dlc/ledger.hpp"
#include "dlc/merkle.hpp"
#include "dlc/metadata.hpp"
#include "dlc/workflow.hpp"

namespace dlc {

struct NotAdmittedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadRefError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DropReason : std::uint8_t { UnknownId, BadSecret, DuplicateNonce, Malformed };

inline const char* to_string(DropReason r) {
    switch (r) {
        case DropReason::UnknownId: return "unknown_id";
        case DropReason::BadSecret: return "bad_secret";
        case DropReason::DuplicateNonce: return "duplicate_nonce";
        case DropReason::Malformed: return "malformed";
    }
    return "?";
}

struct VerifyOutcome {
    bool accepted = false;
    DropReason reason = DropReason::Malformed;
    crypto::PublicKey owner;  // meaningful only on accept
};

struct PeriodSummary {
    std::uint64_t period_id = 0;
    std::uint32_t accepted = 0;
    std::uint32_t sensor_readings = 0;
    std::uint64_t total_demand_wh = 0;  // metered only, sensor telemetry excluded
    std::uint64_t total_load_wh = 0;
};

/// Inclusion-proof receipt handed back to the reporter after commit.
struct Receipt {
    crypto::PublicKey owner;
    std::uint64_t period_id = 0;
    DlTransaction tx;
    MerkleProof proof;
};

struct LoadControlPolicy {
    std::uint64_t capacity_threshold_wh = 0;  // 0 disables curtailment
    std::vector<std::string> curtailment_order;
    std::uint64_t per_device_reduction_wh = 0;
    ActionKind action = ActionKind::Off;
};

class DiscoNode {
public:
    DiscoNode(crypto::KeyPair keys, unsigned resync_window, LoadControlPolicy policy,
              std::uint64_t offer_timeout_ticks = 40)
        : keys_(std::move(keys)),
          chain_(keys_.pk),
          registry_(resync_window),
          policy_(std::move(policy)),
          offer_timeout_(offer_timeout_ticks) {}

    const crypto::PublicKey& pk() const { return keys_.pk; }
    const Chain& chain() const { return chain_; }
    const Registry& registry() const { return registry_; }
    const LoadControlPolicy& policy() const { return policy_; }
    std::size_t pending_report_count() const { return pending_dl_.size(); }

    // Admission.

    /// Record a reporter's shared credentials (id, rotation constant, secret).
    std::size_t register_reporter(const crypto::PublicKey& subject, NodeId id,
                                  NodeId pattern_delta,
                                  const std::array<std::uint8_t, 32>& secret_value) {
        return registry_.register_node(id, pattern_delta, secret_value, subject);
    }

    /// Sign and stage a participant genesis for the next block.
    GenesisTransaction admit_participant(const crypto::PublicKey& subject) {
        GenesisTransaction g;
        g.subject_pk = subject;
        g = sign_genesis_as_authority(g, keys_);
        stage_genesis(g);
        return g;
    }

    /// Known controllable device, used by the curtailment policy.
    void register_device(const crypto::PublicKey& device_pk,
                         const crypto::PublicKey& owner_pk, const std::string& cls) {
        devices_.push_back(DeviceRecord{device_pk, owner_pk, cls});
    }

    /// Authority-signed block carrying everything staged so far (bootstrap:
    /// the admission geneses). No Merkle root entry is produced here.
    Block commit_bootstrap() {
        std::vector<BlockEntry> entries;
        for (auto& g : staged_geneses_) entries.emplace_back(std::move(g));
        staged_geneses_.clear();
        staged_genesis_pks_.clear();
        return append_block(std::move(entries), 0);
    }

    // Reporting path.

    VerifyOutcome handle_dl(ByteView payload) {
        DlTransaction tx;
        try {
            tx = decode_as<DlTransaction>(payload);
        } catch (const CodecError&) {
            return VerifyOutcome{false, DropReason::Malformed, {}};
        }
        auto hit = registry_.lookup(tx.id);
        if (hit.kind == Registry::LookupKind::Miss)
            return VerifyOutcome{false, DropReason::UnknownId, {}};
        if (hit.kind == Registry::LookupKind::Stale)
            return VerifyOutcome{false, DropReason::DuplicateNonce, {}};

        const auto& rec = registry_.record(hit.slot);
        auto expect = dl_secret(rec.cred.secret_value, rec.cred.nonce + hit.offset,
                                tx.data_wh, tx.kind);
        if (expect != tx.secret) return VerifyOutcome{false, DropReason::BadSecret, {}};

        crypto::PublicKey owner = rec.owner_pk;
        registry_.advance_slot(hit.slot, hit.offset + 1);
        pending_dl_.push_back(PendingDl{tx, owner});
        return VerifyOutcome{true, DropReason::Malformed, owner};
    }

    // Contract workflow.

    LoadControlTransaction initiate_contract(const crypto::PublicKey& customer,
                                             const ContractTerms& terms,
                                             std::uint64_t now) {
        if (!chain_.is_admitted(customer))
            throw NotAdmittedError("customer has no genesis on the ledger");
        LoadControlTransaction tx;
        tx.p_t_id = pending_.tail();
        tx.pk_gen = keys_.pk;
        tx.pk_rec = customer;
        // Derandomized seal: the ephemeral key comes from our own secret and
        // the offer context, so re-running the protocol re-creates the exact
        // ciphertext while outsiders still cannot predict it.
        Bytes seed_pre;
        put_bytes(seed_pre, keys_.sk.bytes);
        put_bytes(seed_pre, customer.bytes);
        put_bytes(seed_pre, tx.p_t_id.bytes);
        put_bytes(seed_pre, encode_terms(terms));
        tx.metadata =
            sealed_contract_metadata(customer, terms, crypto::digest(seed_pre).bytes);
        tx.t_id = compute_tid(tx);
        tx = sign_as_generator(tx, keys_);
        pending_.push(tx, now + offer_timeout_);
        offers_.emplace(tx.t_id, OfferInfo{customer, OfferKind::Contract, terms, {}});
        return tx;
    }

    /// Countersigned copy of a queued offer returned by the receiver.
    bool receive_countersigned(const LoadControlTransaction& tx) {
        const auto* queued = pending_.find(tx.t_id);
        if (queued == nullptr) return false;
        if (compute_tid(tx) != tx.t_id) return false;
        if (!tx.sign_gen || !tx.sign_rec) return false;
        Bytes pre = signing_bytes(tx);
        if (!crypto::verify(tx.pk_gen, pre, *tx.sign_gen) ||
            !crypto::verify(tx.pk_rec, pre, *tx.sign_rec))
            return false;
        return pending_.mark_ready(tx);
    }

    bool receive_reject(const crypto::Digest& tid) {
        if (auto it = offers_.find(tid); it != offers_.end())
            it->second.status = OfferStatus::Dead;
        return pending_.mark_dead(tid);
    }

    /// Customer/device response: validate, countersign as receiver, pool for
    /// the next block.
    bool receive_response(LoadControlTransaction tx, std::uint64_t now) {
        if (tx.pk_rec != keys_.pk || tx.sign_rec.has_value()) return false;
        if (!tx.sign_gen || compute_tid(tx) != tx.t_id) return false;
        if (!crypto::verify(tx.pk_gen, signing_bytes(tx), *tx.sign_gen)) return false;
        // The reference must name one of this authority's own requests.
        bool known = offers_.contains(tx.ref_disco_id);
        if (!known) {
            const auto* req = chain_.find_load_control(tx.ref_disco_id);
            known = req != nullptr && req->pk_gen == keys_.pk;
        }
        if (!known) return false;
        for (const auto& p : response_pool_)  // periodic resends, keep one copy
            if (p.tx.t_id == tx.t_id) return true;
        auto full = countersign_as_receiver(std::move(tx), keys_);
        response_pool_.push_back(PooledResponse{std::move(full), now + offer_timeout_});
        return true;
    }

    // Sensor admission workflow.

    /// Register a sensor's reporting credentials and produce the DISCO-signed
    /// genesis awaiting the site owner's countersignature.
    GenesisTransaction receive_sensor_intro(const crypto::PublicKey& sensor_pk,
                                            NodeId id, NodeId pattern_delta,
                                            const std::array<std::uint8_t, 32>& secret,
                                            const crypto::Digest& contract_tid) {
        auto g = issue_sensor_genesis(sensor_pk, contract_tid);
        // Idempotent: a customer may resend the intro if the signed genesis
        // got lost in transit. The credentials registered first time stand.
        if (!sensor_pks_.contains(sensor_pk)) {
            registry_.register_node(id, pattern_delta, secret, sensor_pk);
            sensor_pks_.insert(sensor_pk);
        }
        return g;
    }

    GenesisTransaction issue_sensor_genesis(const crypto::PublicKey& sensor_pk,
                                            const crypto::Digest& contract_tid) {
        const auto* contract = chain_.find_load_control(contract_tid);
        if (contract == nullptr || contract->pk_gen != keys_.pk)
            throw BadRefError("contract reference does not resolve on the ledger");
        GenesisTransaction g;
        g.subject_pk = sensor_pk;
        g.contract_ref = contract_tid;
        return sign_genesis_as_authority(g, keys_);
    }

    bool receive_genesis_signed(const GenesisTransaction& g) {
        if (staged_genesis_pks_.contains(g.subject_pk)) return false;
        if (!is_admissible(g, chain_).ok) return false;
        stage_genesis(g);
        return true;
    }

    // Period commitment.

    struct CommitResult {
        Block block;
        PeriodSummary summary;
        std::vector<Receipt> receipts;
        std::vector<LoadControlTransaction> rebroadcast;  // rebuilt pending offers
    };

    CommitResult commit_period(std::uint64_t period_id, std::uint64_t now) {
        CommitResult res;
        res.summary.period_id = period_id;

        std::vector<crypto::Digest> swept;
        res.rebroadcast = pending_.sweep(
            now, now + offer_timeout_,
            [this](LoadControlTransaction tx) {
                return sign_as_generator(std::move(tx), keys_);
            },
            false, &swept);
        for (const auto& tid : swept) {
            if (auto it = offers_.find(tid); it != offers_.end())
                it->second.status = OfferStatus::Dead;
            // Responses to a dropped request can never commit; shed them.
            std::erase_if(response_pool_, [&](const PooledResponse& p) {
                return p.tx.ref_disco_id == tid;
            });
        }

        std::vector<BlockEntry> entries;
        std::optional<MerkleTree> tree;
        if (!pending_dl_.empty()) {
            std::vector<crypto::Digest> leaves;
            leaves.reserve(pending_dl_.size());
            for (const auto& p : pending_dl_) leaves.push_back(crypto::digest(encode(p.tx)));
            tree = MerkleTree::build(std::move(leaves));
            entries.emplace_back(MerkleRootEntry{
                period_id, tree->root(), static_cast<std::uint32_t>(pending_dl_.size())});
        }

        std::unordered_set<crypto::Digest, crypto::DigestHash> staged_tids;
        std::unordered_map<crypto::PublicKey, crypto::Digest, crypto::PublicKeyHash> heads;

        for (auto& tx : pending_.take_ready()) {
            staged_tids.insert(tx.t_id);
            if (auto it = offers_.find(tx.t_id); it != offers_.end())
                it->second.status = OfferStatus::Committed;
            entries.emplace_back(std::move(tx));
        }

        // Anything still queued without a countersignature lost a leg
        // somewhere; send it again rather than letting it idle to its
        // deadline. Receivers treat a repeat as a cue to re-ack.
        {
            std::unordered_set<crypto::Digest, crypto::DigestHash> queued;
            for (const auto& tx : res.rebroadcast) queued.insert(tx.t_id);
            pending_.for_each_item(
                [&](const LoadControlTransaction& tx, std::uint64_t, bool ready) {
                    if (!ready && !queued.contains(tx.t_id))
                        res.rebroadcast.push_back(tx);
                });
        }
        for (auto& g : staged_geneses_) entries.emplace_back(std::move(g));
        staged_geneses_.clear();
        staged_genesis_pks_.clear();

        // Stage pooled responses whose reference and chain position have
        // resolved. Responses can arrive out of order, so scan to a fixpoint;
        // what remains waits for a later block or expires.
        bool progressed = true;
        while (progressed) {
            progressed = false;
            for (auto it = response_pool_.begin(); it != response_pool_.end();) {
                const auto& tx = it->tx;
                bool ref_ok = staged_tids.contains(tx.ref_disco_id) ||
                              chain_.contains_tid(tx.ref_disco_id);
                auto head = heads.contains(tx.pk_gen)
                                ? std::optional<crypto::Digest>(heads.at(tx.pk_gen))
                                : chain_.head_of(tx.pk_gen);
                if (ref_ok && head && *head == tx.p_t_id) {
                    heads[tx.pk_gen] = tx.t_id;
                    if (auto off = offers_.find(tx.ref_disco_id); off != offers_.end())
                        off->second.status = OfferStatus::Answered;
                    entries.emplace_back(it->tx);
                    it = response_pool_.erase(it);
                    progressed = true;
                } else {
                    ++it;
                }
            }
        }
        std::erase_if(response_pool_,
                      [&](const PooledResponse& p) { return p.deadline < now; });

        res.block = append_block(std::move(entries), period_id);

        // Promote committed contract offers into the curtailment directory.
        for (const auto& entry : res.block.entries) {
            const auto* lc = std::get_if<LoadControlTransaction>(&entry);
            if (lc == nullptr) continue;
            auto it = offers_.find(lc->t_id);
            if (it != offers_.end() && it->second.kind == OfferKind::Contract)
                contracts_.push_back(CommittedContract{lc->t_id, it->second.customer,
                                                       it->second.terms});
        }

        res.summary.accepted = static_cast<std::uint32_t>(pending_dl_.size());
        for (std::size_t i = 0; i < pending_dl_.size(); ++i) {
            const auto& p = pending_dl_[i];
            // Sensor streams reuse the reporting pipeline but carry telemetry,
            // not energy; only metered figures feed the balancing decision.
            if (sensor_pks_.contains(p.owner))
                ++res.summary.sensor_readings;
            else if (p.tx.kind == DlKind::Demand)
                res.summary.total_demand_wh += p.tx.data_wh;
            else
                res.summary.total_load_wh += p.tx.data_wh;
            res.receipts.push_back(Receipt{p.owner, period_id, p.tx, tree->prove(i)});
        }
        pending_dl_.clear();
        return res;
    }

    /// Curtailment round: one request per contracted device, in policy order,
    /// until the projected reduction covers the excess demand.
    std::vector<LoadControlTransaction> determine_actions(const PeriodSummary& s,
                                                          std::uint8_t hour,
                                                          std::uint64_t now) {
        std::vector<LoadControlTransaction> out;
        if (policy_.capacity_threshold_wh == 0 || policy_.per_device_reduction_wh == 0)
            return out;
        if (s.total_demand_wh <= policy_.capacity_threshold_wh) return out;

        std::uint64_t excess = s.total_demand_wh - policy_.capacity_threshold_wh;
        std::uint64_t wanted = (excess + policy_.per_device_reduction_wh - 1) /
                               policy_.per_device_reduction_wh;

        for (const auto& cls : policy_.curtailment_order) {
            for (const auto& dev : devices_) {
                if (out.size() == wanted) return out;
                if (dev.cls != cls) continue;
                const auto* contract = contract_for(dev.owner_pk, cls, hour);
                if (contract == nullptr) continue;

                ActionRequest req{cls, policy_.action, policy_.per_device_reduction_wh,
                                  hour};
                LoadControlTransaction tx;
                tx.p_t_id = pending_.tail();
                tx.pk_gen = keys_.pk;
                tx.pk_rec = dev.device_pk;
                tx.metadata = encode_metadata(req);
                tx.t_id = compute_tid(tx);
                tx = sign_as_generator(tx, keys_);
                pending_.push(tx, now + offer_timeout_);
                offers_.emplace(tx.t_id,
                                OfferInfo{dev.owner_pk, OfferKind::Action, {}, req});
                out.push_back(tx);
            }
        }
        return out;
    }

    /// Outstanding request lookup (tests and the response invariant).
    bool request_outstanding(const crypto::Digest& tid) const {
        auto it = offers_.find(tid);
        return it != offers_.end() && it->second.status != OfferStatus::Dead;
    }

    /// Whether an offer is still queued for countersigning (neither committed
    /// nor swept away). Lets a caller decide when a lost offer needs reissuing.
    bool offer_in_flight(const crypto::Digest& tid) const {
        return pending_.find(tid) != nullptr;
    }

private:
    struct PendingDl {
        DlTransaction tx;
        crypto::PublicKey owner;
    };
    struct DeviceRecord {
        crypto::PublicKey device_pk;
        crypto::PublicKey owner_pk;
        std::string cls;
    };
    enum class OfferKind : std::uint8_t { Contract, Action };
    enum class OfferStatus : std::uint8_t { Pending, Committed, Answered, Dead };
    struct OfferInfo {
        crypto::PublicKey customer;
        OfferKind kind;
        ContractTerms terms;  // contract offers only
        ActionRequest action;  // action offers only
        OfferStatus status = OfferStatus::Pending;
    };
    struct CommittedContract {
        crypto::Digest tid;
        crypto::PublicKey customer;
        ContractTerms terms;
    };
    struct PooledResponse {
        LoadControlTransaction tx;
        std::uint64_t deadline;
    };

    void stage_genesis(const GenesisTransaction& g) {
        staged_geneses_.push_back(g);
        staged_genesis_pks_.insert(g.subject_pk);
    }

    const CommittedContract* contract_for(const crypto::PublicKey& owner,
                                          const std::string& cls,
                                          std::uint8_t hour) const {
        for (const auto& c : contracts_) {
            if (c.customer == owner && c.terms.allows_class(cls) &&
                c.terms.hours.contains(hour))
                return &c;
        }
        return nullptr;
    }

    Block append_block(std::vector<BlockEntry> entries, std::uint64_t period_id) {
        Block b;
        b.height = chain_.next_height();
        b.prev_hash = chain_.head_hash();
        b.period_id = period_id;
        b.entries = std::move(entries);
        b.producer_sig = crypto::sign(keys_.sk, signing_bytes(b));
        auto res = chain_.append(b);
        if (!res.ok)
            throw std::logic_error(std::string("authority staged an invalid block: ") +
                                   to_string(res.violation.code));
        return b;
    }

    crypto::KeyPair keys_;
    Chain chain_;
    Registry registry_;
    LoadControlPolicy policy_;
    std::uint64_t offer_timeout_;

    PendingChain pending_;
    std::vector<PendingDl> pending_dl_;
    std::vector<GenesisTransaction> staged_geneses_;
    std::unordered_set<crypto::PublicKey, crypto::PublicKeyHash> staged_genesis_pks_;
    std::unordered_set<crypto::PublicKey, crypto::PublicKeyHash> sensor_pks_;
    std::vector<PooledResponse> response_pool_;
    std::unordered_map<crypto::Digest, OfferInfo, crypto::DigestHash> offers_;
    std::vector<CommittedContract> contracts_;
    std::vector<DeviceRecord> devices_;
};

}  // namespace dlc
