#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dp3t/sim.hpp"

using namespace dp3t;

namespace {

constexpr Timestamp kDay1000 = 1000 * 86400;

Scenario contact_scenario(Design d, std::uint64_t seed = 1) {
    Scenario sc;
    sc.design = d;
    sc.start = kDay1000;
    sc.duration = 1800;
    sc.seed = seed;
    sc.agents.push_back({"alice", {{0, 0.0, 0.0}}, kDay1000 + 2000, kDay1000});
    sc.agents.push_back({"bob", {{0, 1.0, 0.0}}, std::nullopt, kDay1000});
    return sc;
}

// Source and companion at the capture site, victim reachable only from the
// adversary's rebroadcast point.
Scenario relay_scenario(Design d, Timestamp delay, std::uint64_t seed) {
    Scenario sc;
    sc.design = d;
    sc.start = kDay1000;
    sc.duration = 1800;
    sc.seed = seed;
    sc.agents.push_back(
        {"source", {{0, 0.0, 0.0}}, kDay1000 + delay + sc.duration + 100, kDay1000});
    sc.agents.push_back({"companion", {{0, 1.5, 0.0}}, std::nullopt, kDay1000});
    sc.agents.push_back({"victim", {{0, 1000.0, 0.0}}, std::nullopt, kDay1000});
    AdversaryConfig adv;
    adv.kind = "relay";
    adv.capture = {0, 1.0, 0.0};
    adv.rebroadcast = {0, 1001.0, 0.0};
    adv.delay = delay;
    sc.adversary = adv;
    return sc;
}

}  // namespace

TEST_CASE("channel model hits its calibration anchors") {
    auto ch = ChannelModel::calibrated();
    CHECK(ch.attenuation(5.0) == doctest::Approx(40.0 + 20.0 * std::log10(5.0)));
    CHECK(ch.reception_prob(5.0) == doctest::Approx(0.9));
    CHECK(ch.reception_prob(16.0) == doctest::Approx(0.1));
    CHECK(ch.reception_prob(1.0) > ch.reception_prob(5.0));
    CHECK(ch.reception_prob(16.0) > ch.reception_prob(50.0));
    CHECK(ch.reception_prob(151.0) == 0.0);
    CHECK(ch.attenuation(10.0) > ch.attenuation(5.0));
}

TEST_CASE("scenario json parses, validates, and names bad fields") {
    auto sc = Scenario::from_json_text(R"({
        "name": "pair", "design": "hybrid", "start": 86400000, "duration": 900,
        "seed": 7, "beacon_interval_seconds": 30,
        "agents": [
            {"id": "a", "position": [0, 0], "diagnosis_time": 86400950},
            {"id": "b", "trace": [[86400000, 5, 0], [86400900, 8, 0]]}
        ]
    })");
    CHECK(sc.design == Design::hybrid);
    CHECK(sc.agents.size() == 2);
    CHECK(sc.agents[0].diagnosis_time == 86400950);
    CHECK(sc.agents[1].x_at(86400450) == doctest::Approx(6.5));

    CHECK_THROWS_WITH_AS(Scenario::from_json_text(R"({"duration": 10})"),
                         doctest::Contains("agents"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        Scenario::from_json_text(
            R"({"design": "quantum", "agents": [{"id": "a", "position": [0,0]}]})"),
        doctest::Contains("design"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(
        Scenario::from_json_text(
            R"({"duration": 60, "agents": [{"id": "a", "position": [0,0]}, {"id": "a", "position": [1,0]}]})"),
        doctest::Contains("duplicate"), std::invalid_argument);
    CHECK_THROWS_AS(Scenario::from_json_text("not json"), std::invalid_argument);
}

TEST_CASE("close contact leads to notification in every design") {
    for (Design d : {Design::low_cost, Design::unlinkable, Design::hybrid}) {
        CAPTURE(design_name(d));
        auto res = run(contact_scenario(d));
        CHECK(res.metrics.receives > 0);
        CHECK(res.metrics.uploads == 1);
        CHECK(res.metrics.match_count > 0);
        CHECK(res.metrics.notified == std::vector<std::string>{"bob"});
    }
}

TEST_CASE("agents out of radio range never interact") {
    auto sc = contact_scenario(Design::low_cost);
    sc.agents[1].trace = {{0, 200.0, 0.0}};
    auto res = run(sc);
    CHECK(res.metrics.receives == 0);
    CHECK(res.metrics.match_count == 0);
    CHECK(res.metrics.notified.empty());
}

TEST_CASE("identical scenario and seed replay to an identical event log") {
    for (Design d : {Design::low_cost, Design::unlinkable, Design::hybrid}) {
        auto a = run(contact_scenario(d, 99));
        auto b = run(contact_scenario(d, 99));
        CHECK(a.log == b.log);
        CHECK(a.metrics.receives == b.metrics.receives);
    }
    // A different seed draws different secrets.
    auto c = run(contact_scenario(Design::low_cost, 100));
    auto d = run(contact_scenario(Design::low_cost, 99));
    REQUIRE(c.published_day_seeds.size() == 1);
    REQUIRE(d.published_day_seeds.size() == 1);
    CHECK(c.published_day_seeds[0].seed.bytes != d.published_day_seeds[0].seed.bytes);
}

TEST_CASE("relay attack outcomes follow each design's binding interval") {
    // Low-cost, 1 h delay, same day: replay succeeds.
    auto lc_same_day = run_relay_attack(relay_scenario(Design::low_cost, 3600, 1));
    CHECK(lc_same_day.victims_falsely_matched == 1);

    // Low-cost, 25 h delay: day rule rejects it.
    auto lc_next_day = run_relay_attack(relay_scenario(Design::low_cost, 25 * 3600, 2));
    CHECK(lc_next_day.victims_falsely_matched == 0);
    CHECK(lc_next_day.false_match_count == 0);

    // Unlinkable, one-epoch delay: the stored hash binds the receive epoch.
    auto ul = run_relay_attack(relay_scenario(Design::unlinkable, 900, 3));
    CHECK(ul.victims_falsely_matched == 0);

    // Hybrid: cross-window fails, intra-window succeeds.
    auto hy_cross = run_relay_attack(relay_scenario(Design::hybrid, 4 * 3600, 4));
    CHECK(hy_cross.victims_falsely_matched == 0);
    auto hy_intra = run_relay_attack(relay_scenario(Design::hybrid, 600, 5));
    CHECK(hy_intra.victims_falsely_matched == 1);
}

TEST_CASE("linkage: track length shrinks from chain to window to epoch scope") {
    // Patient lingers at antenna A during the first window, then at antenna B
    // during the second; one beacon per epoch, so every sighting is in a
    // distinct epoch. A companion walks along so the patient has close
    // contacts in both windows.
    auto make = [](Design d) {
        Scenario sc;
        sc.design = d;
        sc.start = kDay1000;  // aligned with a 4 h window boundary
        sc.duration = 5 * 3600;
        sc.seed = 11;
        sc.beacon_interval_seconds = 900;
        std::vector<Waypoint> walk{{kDay1000, 0.0, 0.0},
                                   {kDay1000 + 10000, 0.0, 0.0},
                                   {kDay1000 + 14000, 1000.0, 0.0},
                                   {kDay1000 + 5 * 3600, 1000.0, 0.0}};
        sc.agents.push_back({"patient", walk, kDay1000 + 5 * 3600, kDay1000});
        for (auto& w : walk) w.y = 1.0;
        sc.agents.push_back({"companion", walk, std::nullopt, kDay1000});
        AdversaryConfig adv;
        adv.kind = "linkage";
        adv.antennas = {{0, 0.0, 0.0}, {0, 1000.0, 0.0}};
        sc.adversary = adv;
        return sc;
    };

    auto lc = run_linkage_analysis(make(Design::low_cost));
    const std::size_t total = lc.total_observations.at("patient");
    REQUIRE(total >= 4);  // sightings at both antennas
    CHECK(lc.max_track.at("patient") == total);

    auto hy = run_linkage_analysis(make(Design::hybrid));
    const std::size_t hy_total = hy.total_observations.at("patient");
    CHECK(hy.max_track.at("patient") < hy_total);
    CHECK(hy.max_track.at("patient") >= 1);

    auto ul = run_linkage_analysis(make(Design::unlinkable));
    CHECK(ul.total_observations.at("patient") >= 4);
    CHECK(ul.max_track.at("patient") == 1);
}

TEST_CASE("eavesdrop monte carlo agrees with the exact binomial") {
    auto ch = ChannelModel::calibrated();
    Rng rng(17);

    SharingParams k1{1, 6};
    auto r = run_eavesdrop_experiment(16.0, 60, k1, 20000, ch, rng);
    // k=1 closed form: 1 - (1-p)^n.
    const double closed = 1.0 - std::pow(1.0 - r.per_share_prob, r.shares_total);
    CHECK(r.analytic_rate == doctest::Approx(closed).epsilon(1e-9));
    CHECK(std::abs(r.empirical_rate - r.analytic_rate) <= 3 * r.standard_error + 1e-9);

    const int k = tune_share_threshold(ch.reception_prob(5.0), ch.reception_prob(16.0),
                                       kSharesPerContact);
    SharingParams tuned{k, 255};
    auto near = run_eavesdrop_experiment(5.0, kContactSeconds, tuned, 5000, ch, rng);
    CHECK(near.analytic_rate > 0.999);
    CHECK(std::abs(near.empirical_rate - near.analytic_rate) <=
          3 * near.standard_error + 1e-3);
    auto far = run_eavesdrop_experiment(16.0, kContactSeconds, tuned, 5000, ch, rng);
    CHECK(far.analytic_rate < 0.01);
    CHECK(std::abs(far.empirical_rate - far.analytic_rate) <= 3 * far.standard_error + 1e-3);
}

TEST_CASE("production matchers equal the brute-force reference on random scenarios") {
    Rng meta(23);
    const Design designs[] = {Design::low_cost, Design::unlinkable, Design::hybrid};
    for (int trial = 0; trial < 30; ++trial) {
        Scenario sc;
        sc.design = designs[trial % 3];
        sc.start = kDay1000 + static_cast<Timestamp>(meta.below(12 * 3600));
        sc.duration = 900 + static_cast<Timestamp>(meta.below(5400));
        sc.seed = meta.next();
        sc.beacon_interval_seconds = 300;
        const std::size_t n = 2 + meta.below(4);
        for (std::size_t i = 0; i < n; ++i) {
            AgentSpec a;
            a.id = "agent" + std::to_string(i);
            a.trace = {{0, static_cast<double>(meta.below(25)),
                        static_cast<double>(meta.below(25))}};
            a.contagion_start = sc.start;
            sc.agents.push_back(a);
        }
        sc.agents[meta.below(n)].diagnosis_time = sc.start + sc.duration;

        CAPTURE(trial);
        auto res = run(sc);
        CHECK(production_match_set(res) == reference_match_set(res, sc.design, sc.params));
    }
}
