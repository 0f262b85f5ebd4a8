#pragma once

// Pending-transaction queue behind the multisig workflow. Every in-flight
// transaction chains optimistically off the queue tail; when one dies
// (rejected or expired) the queue rebuilds every successor with a corrected
// p_t_id so the generator's on-ledger chain never gaps.

#include <deque>
#include <functional>

#include "dlc/transactions.hpp"

namespace dlc {

class PendingChain {
public:
    explicit PendingChain(crypto::Digest committed_head = {})
        : head_(committed_head) {}

    /// p_t_id for the next transaction this generator emits.
    crypto::Digest tail() const { return items_.empty() ? head_ : items_.back().tx.t_id; }

    crypto::Digest committed_head() const { return head_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }

    /// Queue a freshly signed transaction. `ready` means it needs no further
    /// signature before staging (a generator-complete response); offers start
    /// not-ready and become ready via mark_ready.
    void push(LoadControlTransaction tx, std::uint64_t deadline, bool ready = false) {
        items_.push_back(Item{std::move(tx), deadline, ready, false});
    }

    /// Replace a queued offer with its countersigned copy. Returns false when
    /// no live queued item carries that t_id (e.g. it was rebuilt meanwhile).
    bool mark_ready(const LoadControlTransaction& countersigned) {
        for (auto& item : items_) {
            if (!item.dead && item.tx.t_id == countersigned.t_id) {
                item.tx = countersigned;
                item.ready = true;
                return true;
            }
        }
        return false;
    }

    bool mark_dead(const crypto::Digest& tid) {
        for (auto& item : items_) {
            if (!item.dead && item.tx.t_id == tid) {
                item.dead = true;
                return true;
            }
        }
        return false;
    }

    const LoadControlTransaction* find(const crypto::Digest& tid) const {
        for (const auto& item : items_)
            if (!item.dead && item.tx.t_id == tid) return &item.tx;
        return nullptr;
    }

    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const auto& item : items_)
            if (!item.dead) fn(item.tx);
    }

    /// Like for_each but exposes queue state: fn(tx, deadline, ready).
    template <typename Fn>
    void for_each_item(Fn&& fn) const {
        for (const auto& item : items_)
            if (!item.dead) fn(item.tx, item.deadline, item.ready);
    }

    /// Remove dead and expired items and re-chain everything behind them.
    /// `resign(tx)` receives the transaction with a corrected p_t_id, a
    /// recomputed t_id, and cleared signatures, and must return it re-signed
    /// by the generator. Rebuilt items drop to not-ready unless
    /// `rebuilt_stay_ready` (generator-complete queues). Returns the rebuilt
    /// transactions for rebroadcast; `dropped`, when given, collects the
    /// t_ids of removed items.
    std::vector<LoadControlTransaction> sweep(
        std::uint64_t now, std::uint64_t new_deadline,
        const std::function<LoadControlTransaction(LoadControlTransaction)>& resign,
        bool rebuilt_stay_ready = false,
        std::vector<crypto::Digest>* dropped = nullptr) {
        std::vector<LoadControlTransaction> rebroadcast;
        std::deque<Item> kept;
        crypto::Digest prev = head_;
        bool rebuild = false;
        for (auto& item : items_) {
            if (item.dead || (!item.ready && item.deadline < now)) {
                rebuild = true;  // successors chained through a dropped tid
                if (dropped != nullptr) dropped->push_back(item.tx.t_id);
                continue;
            }
            if (rebuild) {
                LoadControlTransaction tx = std::move(item.tx);
                tx.p_t_id = prev;
                tx.sign_gen.reset();
                tx.sign_rec.reset();
                tx.t_id = compute_tid(tx);
                tx = resign(std::move(tx));
                item.tx = tx;
                item.ready = rebuilt_stay_ready;
                item.deadline = new_deadline;
                rebroadcast.push_back(item.tx);
            }
            prev = item.tx.t_id;
            kept.push_back(std::move(item));
        }
        items_ = std::move(kept);
        return rebroadcast;
    }

    /// Pop the maximal ready prefix for staging into a block, advancing the
    /// committed head past it. The caller must append these in order.
    std::vector<LoadControlTransaction> take_ready() {
        std::vector<LoadControlTransaction> out;
        while (!items_.empty() && items_.front().ready && !items_.front().dead) {
            out.push_back(std::move(items_.front().tx));
            head_ = out.back().t_id;
            items_.pop_front();
        }
        return out;
    }

    /// Commitment observed on-chain (participant mode): drop the front item
    /// if it matches and advance the head. Blocks arrive in order, so only
    /// the front can commit.
    bool confirm_committed(const crypto::Digest& tid) {
        if (items_.empty() || items_.front().tx.t_id != tid) return false;
        head_ = tid;
        items_.pop_front();
        return true;
    }

private:
    struct Item {
        LoadControlTransaction tx;
        std::uint64_t deadline;
        bool ready;
        bool dead;
    };

    crypto::Digest head_;
    std::deque<Item> items_;
};

}  // namespace dlc
