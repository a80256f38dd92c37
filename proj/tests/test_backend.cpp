#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "dp3t/backend.hpp"

using namespace dp3t;

namespace {

constexpr Timestamp kT0 = 1000 * 86400;  // slot boundary: multiple of 2 h
const EpochParams kParams{15, 240};

BackendConfig make_config(Design d, RegionId region = "CH") {
    BackendConfig c;
    c.design = d;
    c.region = std::move(region);
    c.params = kParams;
    return c;
}

UploadPayload low_cost_payload(Rng& rng, DayIndex day = 1000) {
    UploadPayload p;
    p.design = Design::low_cost;
    p.day_seed = random_day_seed(day, rng);
    return p;
}

UploadEnvelope envelope_of(const UploadPayload& p, Timestamp received_at,
                           bool authorized = true) {
    return {encode_upload(p, kParams, 14), authorized, received_at};
}

}  // namespace

TEST_CASE("upload wire round-trips and every variant has a fixed size") {
    Rng rng(1);

    UploadPayload lc = low_cost_payload(rng);
    lc.visited_regions = {"CH", "DE"};
    Bytes w = encode_upload(lc, kParams, 14);
    CHECK(w.size() == upload_wire_size(Design::low_cost, kParams, 14));
    auto back = decode_upload(w, kParams, 14);
    CHECK(back.day_seed == lc.day_seed);
    CHECK(back.visited_regions == lc.visited_regions);

    UploadPayload ul;
    ul.design = Design::unlinkable;
    for (int i = 0; i < 480; ++i)
        ul.epoch_seeds.push_back(random_epoch_seed(96000 + i, rng));
    Bytes wu = encode_upload(ul, kParams, 14);
    CHECK(wu.size() == upload_wire_size(Design::unlinkable, kParams, 14));
    CHECK(decode_upload(wu, kParams, 14).epoch_seeds == ul.epoch_seeds);

    UploadPayload hy;
    hy.design = Design::hybrid;
    for (int i = 0; i < 30; ++i)
        hy.window_seeds.push_back(random_window_seed(6000 + i, rng));
    Bytes wh = encode_upload(hy, kParams, 14);
    CHECK(wh.size() == upload_wire_size(Design::hybrid, kParams, 14));
    CHECK(decode_upload(wh, kParams, 14).window_seeds == hy.window_seeds);

    // Real and dummy payloads of one variant are length-indistinguishable.
    UploadPayload one_seed;
    one_seed.design = Design::unlinkable;
    one_seed.epoch_seeds.push_back(random_epoch_seed(96000, rng));
    CHECK(encode_upload(one_seed, kParams, 14).size() == wu.size());
}

TEST_CASE("malformed uploads are rejected") {
    Backend be(make_config(Design::low_cost), kT0);

    Bytes short_wire(33, 0x01);
    CHECK_FALSE(be.accept_upload({short_wire, true, kT0}).accepted);

    Bytes bad_tag(upload_wire_size(Design::low_cost, kParams, 14), 0x00);
    bad_tag[0] = 0x07;
    CHECK_FALSE(be.accept_upload({bad_tag, true, kT0}).accepted);

    Rng rng(2);
    Bytes wrong_len = encode_upload(low_cost_payload(rng), kParams, 14);
    wrong_len.push_back(0);
    CHECK_FALSE(be.accept_upload({wrong_len, true, kT0}).accepted);

    CHECK(be.pending_records() == 0);
}

TEST_CASE("accepted uploads appear in the next slot's batch") {
    Backend be(make_config(Design::low_cost), kT0);
    Rng rng(3);
    auto p = low_cost_payload(rng);
    CHECK(be.accept_upload(envelope_of(p, kT0 + 100)).accepted);

    CHECK_FALSE(be.publish_slot(kT0 + 3600).has_value());  // slot still open
    auto batch = be.publish_slot(kT0 + 2 * 3600 + 1);
    REQUIRE(batch.has_value());
    CHECK(batch->slot_id == be.slot_of(kT0));
    CHECK(batch->publication_time == kT0 + 2 * 3600);
    REQUIRE(batch->body.size() == 34);
    CHECK(std::equal(p.day_seed->bytes.begin(), p.day_seed->bytes.end(),
                     batch->body.begin()));
    CHECK(get_u16_be(batch->body, 32) == 1000);
}

TEST_CASE("empty slots still publish an empty-bodied batch") {
    Backend be(make_config(Design::hybrid), kT0);
    Rng rng(4);
    UploadPayload p;
    p.design = Design::hybrid;
    p.window_seeds.push_back(random_window_seed(kParams.window_of(kT0), rng));
    be.accept_upload(envelope_of(p, kT0 + 10));

    auto batches = be.publish_due(kT0 + 4 * 3600 + 1);  // two slots elapsed
    REQUIRE(batches.size() == 2);
    CHECK(batches[0].body.size() == 20);
    CHECK(batches[1].body.empty());
    CHECK(batches[1].slot_id == batches[0].slot_id + 1);
}

TEST_CASE("dummy uploads ack identically and never reach a batch") {
    Backend be(make_config(Design::low_cost), kT0);
    Rng rng(5);
    auto real = be.accept_upload(envelope_of(low_cost_payload(rng), kT0 + 10));
    auto dummy = be.accept_upload(envelope_of(low_cost_payload(rng), kT0 + 20, false));
    CHECK(real.accepted);
    CHECK(dummy.accepted);
    CHECK(real.response == dummy.response);

    // Batches from {real} vs {real + dummies} are byte-identical.
    Backend clean(make_config(Design::low_cost), kT0);
    Rng rng2(5);
    clean.accept_upload(envelope_of(low_cost_payload(rng2), kT0 + 10));
    auto with_dummy = be.publish_slot(kT0 + 2 * 3600 + 1);
    auto without = clean.publish_slot(kT0 + 2 * 3600 + 1);
    REQUIRE(with_dummy.has_value());
    REQUIRE(without.has_value());
    CHECK(with_dummy->body == without->body);
}

TEST_CASE("batch record order is independent of arrival order") {
    Rng rng(6);
    std::vector<UploadPayload> uploads;
    for (int i = 0; i < 20; ++i) uploads.push_back(low_cost_payload(rng, 990 + i % 10));

    std::optional<Bytes> reference;
    for (int trial = 0; trial < 100; ++trial) {
        shuffle(uploads, rng);
        Backend be(make_config(Design::low_cost), kT0);
        for (const auto& u : uploads) be.accept_upload(envelope_of(u, kT0 + 10));
        auto batch = be.publish_slot(kT0 + 2 * 3600 + 1);
        REQUIRE(batch.has_value());
        if (!reference) reference = batch->body;
        CHECK(batch->body == *reference);
    }
}

TEST_CASE("one unlinkable patient's slot serializes near 2880 filter-body bytes") {
    Backend be(make_config(Design::unlinkable), kT0);
    Rng rng(7);
    UploadPayload p;
    p.design = Design::unlinkable;
    for (int i = 0; i < 5 * 96; ++i)  // 5 days x 96 epochs
        p.epoch_seeds.push_back(random_epoch_seed(96000 + i, rng));
    CHECK(be.accept_upload(envelope_of(p, kT0 + 10)).accepted);

    auto batch = be.publish_slot(kT0 + 2 * 3600 + 1);
    REQUIRE(batch.has_value());
    auto filter = CuckooFilter::deserialize(batch->body);
    CHECK(filter.item_count() == 480);
    CHECK(filter.body_bytes() == 2880);
    for (const auto& s : p.epoch_seeds) CHECK(filter.contains(cuckoo_entry(s)));
}

TEST_CASE("fetch_batches filters by slot and is byte-deterministic") {
    Backend be(make_config(Design::low_cost), kT0);
    Rng rng(8);
    be.accept_upload(envelope_of(low_cost_payload(rng), kT0 + 10));
    be.publish_due(kT0 + 6 * 3600 + 1);  // three slots

    auto all = be.fetch_batches("CH", -1);
    REQUIRE(all.size() == 3);
    CHECK(be.fetch_batches("CH", all.back().slot_id).empty());
    CHECK(be.fetch_batches("CH", all[0].slot_id).size() == 2);

    auto again = be.fetch_batches("CH", -1);
    for (std::size_t i = 0; i < all.size(); ++i) {
        CHECK(again[i].body == all[i].body);
        CHECK(again[i].slot_id == all[i].slot_id);
    }
    CHECK_THROWS_AS(be.fetch_batches("FR", -1), std::invalid_argument);
}

TEST_CASE("duplicate uploads are content-addressed to a single record") {
    Backend be(make_config(Design::low_cost), kT0);
    Rng rng(9);
    auto p = low_cost_payload(rng);
    be.accept_upload(envelope_of(p, kT0 + 10));
    be.accept_upload(envelope_of(p, kT0 + 20));  // duplicate delivery
    auto batch = be.publish_slot(kT0 + 2 * 3600 + 1);
    REQUIRE(batch.has_value());
    CHECK(batch->body.size() == 34);
}

TEST_CASE("federation delivers to home and visited regions") {
    Backend a(make_config(Design::low_cost, "AA"), kT0);
    Backend b(make_config(Design::low_cost, "BB"), kT0);
    Federation fed;
    fed.add_region(&a);
    fed.add_region(&b);

    Rng rng(10);
    auto p = low_cost_payload(rng);
    p.visited_regions = {"AA", "BB"};
    auto receipts = fed.submit("AA", envelope_of(p, kT0 + 10));
    REQUIRE(receipts.size() == 2);
    CHECK(receipts[0].status == "delivered");
    CHECK(receipts[1].status == "delivered");

    // Duplicate forward of the same payload appears once in B's batch.
    fed.submit("AA", envelope_of(p, kT0 + 50));
    auto batch_b = b.publish_slot(kT0 + 2 * 3600 + 1);
    REQUIRE(batch_b.has_value());
    CHECK(batch_b->body.size() == 34);

    // Unknown region goes to the retry queue, then delivers once reachable.
    auto p2 = low_cost_payload(rng, 999);
    p2.visited_regions = {"CC"};
    auto r2 = fed.submit("AA", envelope_of(p2, kT0 + 60));
    REQUIRE(r2.size() == 2);
    CHECK(r2[1].status == "retry-queued");
    Backend c(make_config(Design::low_cost, "CC"), kT0);
    fed.add_region(&c);
    auto flushed = fed.flush_retries();
    REQUIRE(flushed.size() == 1);
    CHECK(flushed[0].status == "delivered");
    CHECK(c.pending_records() == 1);
}

TEST_CASE("a forwarded low-cost seed expands into an unlinkable region's filter") {
    Backend lc(make_config(Design::low_cost, "AA"), kT0);
    Backend ul(make_config(Design::unlinkable, "BB"), kT0);
    Federation fed;
    fed.add_region(&lc);
    fed.add_region(&ul);

    // A low-cost sender broadcast near an unlinkable receiver.
    DeviceConfig tx_cfg;
    tx_cfg.design = Design::low_cost;
    tx_cfg.params = kParams;
    Device tx(tx_cfg, 11);
    DeviceConfig rx_cfg = tx_cfg;
    rx_cfg.design = Design::unlinkable;
    Device rx(rx_cfg, 12);

    const Timestamp contact = kT0 + 3600;
    rx.record_beacon(tx.broadcast_ephid(contact).bytes, contact, 45.0);

    auto payload = tx.build_upload(kT0, kT0 + 5000);
    payload.visited_regions = {"BB"};
    fed.submit("AA", envelope_of(payload, kT0 + 5000));

    auto batch = ul.publish_slot(kT0 + 2 * 3600 + 1);
    REQUIRE(batch.has_value());
    auto filter = CuckooFilter::deserialize(batch->body);
    auto matches = rx.match_unlinkable(filter, kT0 + 2 * 3600);
    REQUIRE(matches.size() == 1);
    CHECK(matches[0].coarse_time == 1000);
}

TEST_CASE("crash recovery replays the upload log to identical state") {
    auto dir = std::filesystem::temp_directory_path() / "dp3t-backend-test";
    std::filesystem::remove_all(dir);

    BackendConfig cfg = make_config(Design::low_cost);
    cfg.data_dir = dir.string();

    Rng rng(13);
    auto p1 = low_cost_payload(rng, 998);
    auto p2 = low_cost_payload(rng, 999);
    Bytes published_body;
    {
        Backend be(cfg, kT0);
        be.accept_upload(envelope_of(p1, kT0 + 10));
        auto batch = be.publish_slot(kT0 + 2 * 3600 + 1);
        REQUIRE(batch.has_value());
        published_body = batch->body;
        be.accept_upload(envelope_of(p2, kT0 + 2 * 3600 + 30));  // still pending
    }
    Backend recovered(cfg, kT0 + 2 * 3600 + 40);
    REQUIRE(recovered.published().size() == 1);
    CHECK(recovered.published()[0].body == published_body);
    CHECK(recovered.pending_records() == 1);

    auto batch2 = recovered.publish_slot(kT0 + 4 * 3600 + 1);
    REQUIRE(batch2.has_value());
    CHECK(batch2->body.size() == 34);
    std::filesystem::remove_all(dir);
}

TEST_CASE("batches beyond the retention horizon are deleted") {
    Backend be(make_config(Design::low_cost), kT0);
    be.publish_due(kT0 + 15 * 86400 + 1);  // 15 days of empty slots
    auto batches = be.fetch_batches("CH", -1);
    REQUIRE_FALSE(batches.empty());
    const Timestamp newest = batches.back().publication_time;
    for (const auto& b : batches) CHECK(b.publication_time >= newest - 14 * 86400);
}
