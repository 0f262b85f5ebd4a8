#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dlc/netsim.hpp"
#include "test_support.hpp"

using namespace dlc;

namespace {

Message dl_message(const crypto::PublicKey& from, const crypto::PublicKey& to,
                   const DlTransaction& tx) {
    return Message{MsgKind::DlReport, from, to, encode(tx)};
}

NodeCredentials creds_of(std::uint64_t id, std::uint64_t delta, std::uint8_t fill) {
    NodeCredentials c;
    c.current_id = NodeId{id};
    c.pattern_delta = NodeId{delta};
    c.secret_value.fill(fill);
    return c;
}

}  // namespace

TEST_CASE("reject payload is exactly one digest", "[netsim]") {
    std::mt19937_64 rng(0x9001);
    auto tid = dlctest::random_digest(rng);

    auto bytes = encode_reject(tid);
    REQUIRE(bytes.size() == 32);
    CHECK(decode_reject(bytes) == tid);

    Bytes short_buf(bytes.begin(), bytes.end() - 1);
    CHECK_THROWS_AS(decode_reject(short_buf), LengthError);
    Bytes long_buf = bytes;
    long_buf.push_back(0x00);
    CHECK_THROWS_AS(decode_reject(long_buf), LengthError);
}

TEST_CASE("sensor intro payload has a fixed hand-checkable layout", "[netsim]") {
    std::mt19937_64 rng(0x9002);

    SensorIntroPayload p;
    p.sensor_pk = dlctest::keys_from(0x77).pk;
    p.id = NodeId{0x0102030405060708ULL};
    p.pattern_delta = NodeId{0x1122334455667788ULL};
    for (auto& b : p.secret_value) b = static_cast<std::uint8_t>(rng());
    p.contract_tid = dlctest::random_digest(rng);

    auto bytes = encode_sensor_intro(p);
    REQUIRE(bytes.size() == 128);

    // The four fields sit at fixed offsets; ids are 16-byte big-endian.
    CHECK(std::equal(p.sensor_pk.bytes.begin(), p.sensor_pk.bytes.end(),
                     bytes.begin()));
    for (std::size_t i = 0; i < 8; ++i) CHECK(bytes[32 + i] == 0);
    CHECK(bytes[40] == 0x01);
    CHECK(bytes[47] == 0x08);
    CHECK(bytes[56] == 0x11);
    CHECK(bytes[63] == 0x88);
    CHECK(std::equal(p.secret_value.begin(), p.secret_value.end(),
                     bytes.begin() + 64));
    CHECK(std::equal(p.contract_tid.bytes.begin(), p.contract_tid.bytes.end(),
                     bytes.begin() + 96));

    auto back = decode_sensor_intro(bytes);
    CHECK(back.sensor_pk == p.sensor_pk);
    CHECK(back.id == p.id);
    CHECK(back.pattern_delta == p.pattern_delta);
    CHECK(back.secret_value == p.secret_value);
    CHECK(back.contract_tid == p.contract_tid);

    bytes.pop_back();
    CHECK_THROWS_AS(decode_sensor_intro(bytes), LengthError);
}

TEST_CASE("receipt payload round-trips through its wire form", "[netsim]") {
    std::mt19937_64 rng(0x9003);

    auto cred = creds_of(42, 5, 0xC1);
    Receipt r;
    r.owner = dlctest::keys_from(0x66).pk;
    r.period_id = 9;
    r.tx = make_dl(cred, 1234, DlKind::Demand);

    std::vector<crypto::Digest> leaves;
    for (int i = 0; i < 5; ++i) leaves.push_back(dlctest::random_digest(rng));
    leaves[2] = crypto::digest(encode(r.tx));
    auto tree = MerkleTree::build(leaves);
    r.proof = tree.prove(2);

    auto bytes = encode_receipt(r);
    auto back = decode_receipt(bytes);
    CHECK(back.owner == r.owner);
    CHECK(back.period_id == r.period_id);
    CHECK(encode(back.tx) == encode(r.tx));
    CHECK(verify_proof(tree.root(), crypto::digest(encode(back.tx)), back.proof));

    bytes.push_back(0x00);
    CHECK_THROWS_AS(decode_receipt(bytes), CodecError);
    bytes.pop_back();
    bytes.pop_back();
    CHECK_THROWS_AS(decode_receipt(bytes), CodecError);
}

TEST_CASE("bus delivers per tick in insertion order", "[netsim]") {
    Bus bus;
    auto a = dlctest::keys_from(0x01).pk;
    auto b = dlctest::keys_from(0x02).pk;

    CHECK(bus.idle());
    CHECK(!bus.next_tick().has_value());

    bus.post(5, Message{MsgKind::LcReject, a, b, Bytes{1}});
    bus.post(3, Message{MsgKind::LcReject, a, b, Bytes{2}});
    bus.post(5, Message{MsgKind::LcReject, b, a, Bytes{3}});
    REQUIRE(bus.posted() == 3);
    REQUIRE(bus.next_tick() == 3);

    CHECK(bus.take_due(4).empty());

    auto at3 = bus.take_due(3);
    REQUIRE(at3.size() == 1);
    CHECK(at3[0].payload == Bytes{2});

    auto at5 = bus.take_due(5);
    REQUIRE(at5.size() == 2);
    CHECK(at5[0].payload == Bytes{1});
    CHECK(at5[1].payload == Bytes{3});

    CHECK(bus.take_due(5).empty());  // drained
    CHECK(bus.idle());
}

TEST_CASE("seeded coin flips are deterministic and respect the edges", "[netsim]") {
    std::mt19937_64 a(77), b(77);
    for (int i = 0; i < 200; ++i) CHECK(chance(a, 0.35) == chance(b, 0.35));

    std::mt19937_64 rng(123);
    int always = 0, never = 0;
    for (int i = 0; i < 1000; ++i) {
        if (chance(rng, 1.0)) ++always;
        if (chance(rng, 0.0)) ++never;
    }
    CHECK(always == 1000);
    CHECK(never == 0);
}

TEST_CASE("replayer duplicates authority-bound traffic once", "[netsim]") {
    auto authority = dlctest::keys_from(0xA0).pk;
    auto sender = dlctest::keys_from(0xA1).pk;
    auto cred = creds_of(7, 3, 0x55);

    SECTION("full intensity: every original replayed exactly once, never twice") {
        Replayer rep(1, 1.0, 4, authority);
        for (std::uint64_t t = 0; t < 50; ++t) {
            auto m = dl_message(sender, authority, make_dl(cred, 100 + t, DlKind::Demand));
            cred.advance();
            auto dup = rep.observe(m, t);
            REQUIRE(dup.has_value());
            CHECK(dup->first == t + 4);
            CHECK(dup->second.replayed);
            CHECK(dup->second.payload == m.payload);
            // the copy itself is never replayed again
            CHECK(!rep.observe(dup->second, t + 4).has_value());
        }
        CHECK(rep.replays() == 50);
    }

    SECTION("traffic not bound for the authority is ignored") {
        Replayer rep(1, 1.0, 4, authority);
        auto m = dl_message(sender, sender, make_dl(cred, 5, DlKind::Demand));
        CHECK(!rep.observe(m, 0).has_value());
        CHECK(rep.replays() == 0);
    }

    SECTION("intensity scales the duplicate count") {
        Replayer quiet(9, 0.0, 2, authority);
        Replayer noisy(9, 0.3, 2, authority);
        int dups = 0;
        for (std::uint64_t t = 0; t < 2000; ++t) {
            auto m = dl_message(sender, authority, make_dl(cred, t, DlKind::Load));
            cred.advance();
            CHECK(!quiet.observe(m, t).has_value());
            if (noisy.observe(m, t)) ++dups;
        }
        CHECK(dups > 480);
        CHECK(dups < 720);
        CHECK(noisy.replays() == static_cast<std::uint64_t>(dups));
    }
}

TEST_CASE("tamperer flips exactly one byte of flippable traffic", "[netsim]") {
    auto a = dlctest::keys_from(0xB0).pk;
    auto b = dlctest::keys_from(0xB1).pk;

    SECTION("full intensity alters one byte") {
        Tamperer tam(3, 1.0);
        for (int i = 0; i < 40; ++i) {
            auto cred = creds_of(100 + i, 1, 0x10);
            auto m = dl_message(a, b, make_dl(cred, i, DlKind::Demand));
            Bytes before = m.payload;
            REQUIRE(tam.maybe_tamper(m));
            REQUIRE(m.payload.size() == before.size());
            int diffs = 0;
            for (std::size_t j = 0; j < before.size(); ++j)
                if (before[j] != m.payload[j]) ++diffs;
            CHECK(diffs == 1);
        }
        CHECK(tam.tampered() == 40);
    }

    SECTION("block announces, receipts, and empty payloads pass untouched") {
        Tamperer tam(3, 1.0);
        Message ann{MsgKind::BlockAnnounce, a, b, Bytes{1, 2, 3}};
        Message rec{MsgKind::ReceiptMsg, a, b, Bytes{4, 5}};
        Message hollow{MsgKind::LcReject, a, b, Bytes{}};
        CHECK(!tam.maybe_tamper(ann));
        CHECK(!tam.maybe_tamper(rec));
        CHECK(!tam.maybe_tamper(hollow));
        CHECK(ann.payload == Bytes{1, 2, 3});
        CHECK(tam.tampered() == 0);
    }

    SECTION("zero intensity is a no-op") {
        Tamperer tam(3, 0.0);
        Message m{MsgKind::LcOffer, a, b, Bytes{9, 9, 9}};
        CHECK(!tam.maybe_tamper(m));
        CHECK(m.payload == Bytes{9, 9, 9});
    }
}

TEST_CASE("forged reports never clear a real verifier", "[netsim]") {
    auto disco_keys = dlctest::keys_from(0xC0);
    auto customer = dlctest::keys_from(0xC1);
    auto mallory = dlctest::keys_from(0xCC);

    DiscoNode disco(disco_keys, 2, LoadControlPolicy{});
    auto honest = creds_of(0xBEEF, 13, 0x4D);
    disco.register_reporter(customer.pk, honest.current_id, honest.pattern_delta,
                            honest.secret_value);
    disco.admit_participant(customer.pk);
    disco.commit_bootstrap();

    Forger forger(0xF00D, 4);
    forger.observe_id(honest.current_id);  // sniffed off the wire

    std::uint64_t accepted = 0;
    for (int tick = 0; tick < 50; ++tick) {
        for (auto& m : forger.forge(mallory.pk, disco_keys.pk)) {
            CHECK(m.forged);
            REQUIRE_NOTHROW(decode_as<DlTransaction>(m.payload));  // well-formed
            if (disco.handle_dl(m.payload).accepted) ++accepted;
        }
    }
    CHECK(forger.forged() == 200);
    CHECK(accepted == 0);

    // the sniffed identifier still works for its rightful owner
    auto genuine = make_dl(honest, 777, DlKind::Demand);
    CHECK(disco.handle_dl(encode(genuine)).accepted);
}

TEST_CASE("eavesdropper linkage tracks identifier reuse", "[netsim]") {
    auto authority = dlctest::keys_from(0xD0).pk;
    auto alice = dlctest::keys_from(0xD1).pk;
    auto bob = dlctest::keys_from(0xD2).pk;

    SECTION("rotation leaves no linkable repeats") {
        Eavesdropper eve;
        auto a = creds_of(1000, 17, 0x01);
        auto b = creds_of(9000, 23, 0x02);
        for (int i = 0; i < 20; ++i) {
            eve.observe(dl_message(alice, authority, make_dl(a, i, DlKind::Demand)));
            a.advance();
            eve.observe(dl_message(bob, authority, make_dl(b, i, DlKind::Load)));
            b.advance();
        }
        CHECK(eve.opportunities() == 0);
        CHECK(eve.linkage_score() == 0.0);
    }

    SECTION("static identifiers are fully linkable") {
        Eavesdropper eve;
        auto a = creds_of(1000, 0, 0x01);  // rotation disabled
        auto b = creds_of(9000, 0, 0x02);
        for (int i = 0; i < 20; ++i) {
            eve.observe(dl_message(alice, authority, make_dl(a, i, DlKind::Demand)));
            a.advance();
            eve.observe(dl_message(bob, authority, make_dl(b, i, DlKind::Load)));
            b.advance();
        }
        CHECK(eve.opportunities() == 38);  // 19 repeats per sender
        CHECK(eve.correct() == 38);
        CHECK(eve.linkage_score() == 1.0);
    }

    SECTION("non-report and undecodable traffic is ignored") {
        Eavesdropper eve;
        eve.observe(Message{MsgKind::LcOffer, alice, authority, Bytes{1, 2}});
        eve.observe(Message{MsgKind::DlReport, alice, authority, Bytes{0xFF}});
        CHECK(eve.opportunities() == 0);
    }
}
