#include "dp3t/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace dp3t {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

double dist(double ax, double ay, double bx, double by) {
    return std::hypot(ax - bx, ay - by);
}

Design parse_design(const std::string& s) {
    if (s == "low_cost" || s == "low-cost") return Design::low_cost;
    if (s == "unlinkable") return Design::unlinkable;
    if (s == "hybrid") return Design::hybrid;
    throw std::invalid_argument("design: unknown value '" + s + "'");
}

}  // namespace

ChannelModel ChannelModel::calibrated(double d_near, double p_near, double d_far,
                                      double p_far) {
    auto att = [](double d) { return 40.0 + 20.0 * std::log10(d); };
    const double ln_near = std::log(1.0 / p_near - 1.0);
    const double ln_far = std::log(1.0 / p_far - 1.0);
    ChannelModel m;
    m.scale_db = (att(d_far) - att(d_near)) / (ln_far - ln_near);
    m.midpoint_db = att(d_near) - m.scale_db * ln_near;
    return m;
}

double ChannelModel::attenuation(double distance_m) const {
    return 40.0 + 20.0 * std::log10(std::max(distance_m, 0.1));
}

double ChannelModel::reception_prob(double distance_m) const {
    if (distance_m > max_range_m) return 0.0;
    return 1.0 / (1.0 + std::exp((attenuation(distance_m) - midpoint_db) / scale_db));
}

double AgentSpec::x_at(Timestamp t) const {
    if (trace.size() == 1 || t <= trace.front().time) return trace.front().x;
    for (std::size_t i = 1; i < trace.size(); ++i) {
        if (t <= trace[i].time) {
            const auto& a = trace[i - 1];
            const auto& b = trace[i];
            const double f = static_cast<double>(t - a.time) / (b.time - a.time);
            return a.x + f * (b.x - a.x);
        }
    }
    return trace.back().x;
}

double AgentSpec::y_at(Timestamp t) const {
    if (trace.size() == 1 || t <= trace.front().time) return trace.front().y;
    for (std::size_t i = 1; i < trace.size(); ++i) {
        if (t <= trace[i].time) {
            const auto& a = trace[i - 1];
            const auto& b = trace[i];
            const double f = static_cast<double>(t - a.time) / (b.time - a.time);
            return a.y + f * (b.y - a.y);
        }
    }
    return trace.back().y;
}

void Scenario::validate() const {
    params.validate();
    validate_region(region);
    if (duration <= 0) throw std::invalid_argument("duration: must be positive");
    if (beacon_interval_seconds <= 0)
        throw std::invalid_argument("beacon_interval_seconds: must be positive");
    if (slot_minutes <= 0) throw std::invalid_argument("slot_minutes: must be positive");
    if (agents.empty()) throw std::invalid_argument("agents: at least one required");
    std::set<std::string> ids;
    for (const auto& a : agents) {
        if (a.id.empty()) throw std::invalid_argument("agents[].id: must be non-empty");
        if (!ids.insert(a.id).second)
            throw std::invalid_argument("agents[].id: duplicate '" + a.id + "'");
        if (a.trace.empty())
            throw std::invalid_argument("agents[].trace: '" + a.id + "' has no positions");
        for (std::size_t i = 1; i < a.trace.size(); ++i)
            if (a.trace[i].time <= a.trace[i - 1].time)
                throw std::invalid_argument("agents[].trace: '" + a.id +
                                            "' times must strictly increase");
    }
    if (adversary) {
        const auto& k = adversary->kind;
        if (k != "relay" && k != "linkage" && k != "eavesdrop")
            throw std::invalid_argument("adversary.kind: unknown value '" + k + "'");
        if (k == "relay" && adversary->delay < 0)
            throw std::invalid_argument("adversary.delay: must be non-negative");
        if (k == "linkage" && adversary->antennas.empty())
            throw std::invalid_argument("adversary.antennas: at least one required");
    }
    if (sharing) sharing->validate();
    exposure.validate();
}

Scenario Scenario::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("scenario: not valid JSON: ") + e.what());
    }
    Scenario s;
    auto field = [&](const char* name) { return j.contains(name); };
    try {
        if (field("name")) s.name = j["name"].get<std::string>();
        if (field("design")) s.design = parse_design(j["design"].get<std::string>());
        if (field("start")) s.start = j["start"].get<Timestamp>();
        if (field("duration")) s.duration = j["duration"].get<Timestamp>();
        if (field("seed")) s.seed = j["seed"].get<std::uint64_t>();
        if (field("epoch_minutes")) s.params.epoch_minutes = j["epoch_minutes"].get<int>();
        if (field("window_minutes")) s.params.window_minutes = j["window_minutes"].get<int>();
        if (field("beacon_interval_seconds"))
            s.beacon_interval_seconds = j["beacon_interval_seconds"].get<int>();
        if (field("slot_minutes")) s.slot_minutes = j["slot_minutes"].get<int>();
        if (field("region")) s.region = j["region"].get<std::string>();
        if (!field("agents")) throw std::invalid_argument("agents: missing");
        for (const auto& ja : j["agents"]) {
            AgentSpec a;
            a.id = ja.at("id").get<std::string>();
            if (ja.contains("position")) {
                a.trace.push_back(
                    {0, ja["position"].at(0).get<double>(), ja["position"].at(1).get<double>()});
            }
            if (ja.contains("trace")) {
                for (const auto& w : ja["trace"])
                    a.trace.push_back({w.at(0).get<Timestamp>(), w.at(1).get<double>(),
                                       w.at(2).get<double>()});
            }
            if (ja.contains("diagnosis_time"))
                a.diagnosis_time = ja["diagnosis_time"].get<Timestamp>();
            a.contagion_start = ja.value("contagion_start", s.start);
            s.agents.push_back(std::move(a));
        }
        if (field("adversary")) {
            AdversaryConfig adv;
            const auto& jv = j["adversary"];
            adv.kind = jv.at("kind").get<std::string>();
            if (jv.contains("capture"))
                adv.capture = {0, jv["capture"].at(0).get<double>(),
                               jv["capture"].at(1).get<double>()};
            if (jv.contains("rebroadcast"))
                adv.rebroadcast = {0, jv["rebroadcast"].at(0).get<double>(),
                                   jv["rebroadcast"].at(1).get<double>()};
            adv.delay = jv.value("delay", Timestamp{0});
            if (jv.contains("antennas"))
                for (const auto& w : jv["antennas"])
                    adv.antennas.push_back({0, w.at(0).get<double>(), w.at(1).get<double>()});
            s.adversary = std::move(adv);
        }
        if (field("sharing")) {
            SharingParams sp;
            sp.required_shares = j["sharing"].at("k").get<int>();
            sp.total_shares = j["sharing"].at("n").get<int>();
            s.sharing = sp;
        }
        if (field("channel")) {
            const auto& jc = j["channel"];
            s.channel = ChannelModel::calibrated(
                jc.value("d_near", 5.0), jc.value("p_near", 0.9), jc.value("d_far", 16.0),
                jc.value("p_far", 0.1));
            s.channel.max_range_m = jc.value("max_range", 150.0);
        }
        if (field("exposure")) s.exposure = ExposureConfig::from_json_text(j["exposure"].dump());
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("scenario: ") + e.what());
    }
    s.validate();
    return s;
}

namespace {

struct Event {
    Timestamp time;
    int kind;  // 0 beacon, 1 rebroadcast, 2 upload
    std::size_t idx;
    EphID ephid;  // rebroadcast payload
    std::uint64_t seq;
};

struct EventOrder {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time != b.time) return a.time > b.time;
        if (a.kind != b.kind) return a.kind > b.kind;
        return a.seq > b.seq;
    }
};

}  // namespace

SimResult run(const Scenario& sc) {
    sc.validate();
    SimResult res;
    Rng rng(sc.seed);

    DeviceConfig dc;
    dc.design = sc.design;
    dc.params = sc.params;
    std::vector<Device> devices;
    devices.reserve(sc.agents.size());
    for (std::size_t i = 0; i < sc.agents.size(); ++i) devices.emplace_back(dc, rng.next());

    BackendConfig bc;
    bc.design = sc.design;
    bc.region = sc.region;
    bc.params = sc.params;
    bc.slot_minutes = sc.slot_minutes;
    Backend backend(bc, sc.start);

    std::priority_queue<Event, std::vector<Event>, EventOrder> queue;
    std::uint64_t seq = 0;
    const Timestamp end = sc.start + sc.duration;
    for (Timestamp t = sc.start; t < end; t += sc.beacon_interval_seconds)
        for (std::size_t i = 0; i < sc.agents.size(); ++i)
            queue.push({t, 0, i, {}, seq++});
    for (std::size_t i = 0; i < sc.agents.size(); ++i)
        if (sc.agents[i].diagnosis_time) queue.push({*sc.agents[i].diagnosis_time, 2, i, {}, seq++});

    const bool relay = sc.adversary && sc.adversary->kind == "relay";
    const bool linkage = sc.adversary && sc.adversary->kind == "linkage";

    auto log_event = [&](Timestamp t, const std::string& line) {
        res.log.push_back("t=" + std::to_string(t) + " " + line);
    };

    Timestamp last_time = sc.start;
    while (!queue.empty()) {
        Event ev = queue.top();
        queue.pop();
        last_time = std::max(last_time, ev.time);

        if (ev.kind == 0) {
            const auto& sender = sc.agents[ev.idx];
            const EphID e = devices[ev.idx].broadcast_ephid(ev.time);
            ++res.metrics.broadcasts;
            log_event(ev.time, "broadcast agent=" + sender.id);
            const double sx = sender.x_at(ev.time), sy = sender.y_at(ev.time);
            for (std::size_t r = 0; r < sc.agents.size(); ++r) {
                if (r == ev.idx) continue;
                const auto& rx = sc.agents[r];
                const double d = dist(sx, sy, rx.x_at(ev.time), rx.y_at(ev.time));
                if (d > sc.channel.max_range_m) continue;
                if (!rng.bernoulli(sc.channel.reception_prob(d))) continue;
                const double att = sc.channel.attenuation(d);
                devices[r].record_beacon(e.bytes, ev.time, att);
                res.receives.push_back({rx.id, sender.id, e, ev.time, att});
                ++res.metrics.receives;
                log_event(ev.time, "receive agent=" + rx.id + " from=" + sender.id +
                                       " att=" + fmt(att));
            }
            if (relay) {
                const double d =
                    dist(sx, sy, sc.adversary->capture.x, sc.adversary->capture.y);
                if (d <= sc.channel.max_range_m &&
                    rng.bernoulli(sc.channel.reception_prob(d))) {
                    log_event(ev.time, "adversary-observe from=" + sender.id);
                    queue.push({ev.time + sc.adversary->delay, 1, ev.idx, e, seq++});
                }
            }
            if (linkage) {
                for (std::size_t ai = 0; ai < sc.adversary->antennas.size(); ++ai) {
                    const auto& ant = sc.adversary->antennas[ai];
                    const double d = dist(sx, sy, ant.x, ant.y);
                    if (d > sc.channel.max_range_m) continue;
                    if (!rng.bernoulli(sc.channel.reception_prob(d))) continue;
                    const double att = sc.channel.attenuation(d);
                    res.antenna_observations.push_back(
                        {ai, {"antenna-" + std::to_string(ai), sender.id, e, ev.time, att}});
                    log_event(ev.time, "adversary-observe antenna=" + std::to_string(ai) +
                                           " from=" + sender.id);
                }
            }
        } else if (ev.kind == 1) {
            // Adversary rebroadcast of a captured beacon.
            for (std::size_t r = 0; r < sc.agents.size(); ++r) {
                const auto& rx = sc.agents[r];
                const double d = dist(sc.adversary->rebroadcast.x, sc.adversary->rebroadcast.y,
                                      rx.x_at(ev.time), rx.y_at(ev.time));
                if (d > sc.channel.max_range_m) continue;
                if (!rng.bernoulli(sc.channel.reception_prob(d))) continue;
                const double att = sc.channel.attenuation(d);
                devices[r].record_beacon(ev.ephid.bytes, ev.time, att);
                res.receives.push_back({rx.id, "adversary", ev.ephid, ev.time, att});
                ++res.metrics.receives;
                log_event(ev.time, "receive agent=" + rx.id + " from=adversary att=" + fmt(att));
            }
        } else {
            const auto& agent = sc.agents[ev.idx];
            auto payload = devices[ev.idx].build_upload(agent.contagion_start, ev.time);
            const Timestamp pub =
                (backend.slot_of(ev.time) + 1) * backend.config().slot_seconds();
            if (payload.day_seed) res.published_day_seeds.push_back({*payload.day_seed, pub});
            for (const auto& s : payload.epoch_seeds)
                res.published_epoch_seeds.push_back({s, pub});
            for (const auto& s : payload.window_seeds)
                res.published_window_seeds.push_back({s, pub});
            Bytes wire =
                encode_upload(payload, sc.params, backend.config().retention_days);
            backend.accept_upload({wire, true, ev.time});
            ++res.metrics.uploads;
            log_event(ev.time, "upload agent=" + agent.id +
                                   " design=" + design_name(sc.design));
        }
    }

    // Publish every closed slot, then one more boundary so the final slot's
    // uploads are out.
    const Timestamp publish_horizon =
        (backend.slot_of(last_time) + 2) * backend.config().slot_seconds();
    auto batches = backend.publish_due(publish_horizon);
    res.metrics.batches = batches.size();
    for (const auto& b : batches) {
        res.metrics.download_bytes_per_user += b.body.size();
        log_event(b.publication_time,
                  "publish slot=" + std::to_string(b.slot_id) +
                      " bytes=" + std::to_string(b.body.size()));
    }

    // Download and match.
    std::vector<PublishedDaySeed> day_pubs;
    std::vector<PublishedWindowSeed> window_pubs;
    for (const auto& b : batches) {
        if (sc.design == Design::low_cost) {
            for (std::size_t off = 0; off + 34 <= b.body.size(); off += 34) {
                PublishedDaySeed p;
                std::copy_n(b.body.begin() + off, 32, p.seed.bytes.begin());
                p.seed.day = get_u16_be(b.body, off + 32);
                p.publication_time = b.publication_time;
                day_pubs.push_back(p);
            }
        } else if (sc.design == Design::hybrid) {
            for (std::size_t off = 0; off + 20 <= b.body.size(); off += 20) {
                PublishedWindowSeed p;
                p.seed.window = get_u32_be(b.body, off);
                std::copy_n(b.body.begin() + off + 4, 16, p.seed.bytes.begin());
                p.publication_time = b.publication_time;
                window_pubs.push_back(p);
            }
        }
    }
    for (std::size_t i = 0; i < sc.agents.size(); ++i) {
        std::vector<MatchResult> m;
        switch (sc.design) {
            case Design::low_cost: m = devices[i].match_low_cost(day_pubs); break;
            case Design::hybrid: m = devices[i].match_hybrid(window_pubs); break;
            case Design::unlinkable:
                for (const auto& b : batches) {
                    auto filter = CuckooFilter::deserialize(b.body);
                    auto part = devices[i].match_unlinkable(filter, b.publication_time);
                    m.insert(m.end(), part.begin(), part.end());
                }
                break;
        }
        res.metrics.match_count += m.size();
        for (const auto& mr : m)
            log_event(last_time, "match agent=" + sc.agents[i].id +
                                     " coarse=" + std::to_string(mr.coarse_time) +
                                     " att=" + fmt(mr.attenuation_db));
        if (!m.empty()) res.matches[sc.agents[i].id] = std::move(m);
    }

    // Exposure scoring and notification.
    for (std::size_t i = 0; i < sc.agents.size(); ++i) {
        auto it = res.matches.find(sc.agents[i].id);
        if (it == res.matches.end()) continue;
        std::vector<ExposureMatch> ems;
        for (const auto& mr : it->second) {
            DayIndex day = sc.design == Design::hybrid
                               ? day_of(sc.params.window_start(mr.coarse_time))
                               : mr.coarse_time;
            ems.push_back({day, mr.attenuation_db});
        }
        auto scores = score_matches(ems, day_of(last_time), sc.exposure);
        if (decide_notification(scores, sc.exposure).notify) {
            res.metrics.notified.push_back(sc.agents[i].id);
            log_event(last_time, "notify agent=" + sc.agents[i].id);
        }
    }
    std::sort(res.metrics.notified.begin(), res.metrics.notified.end());
    return res;
}

RelayOutcome run_relay_attack(const Scenario& sc) {
    if (!sc.adversary || sc.adversary->kind != "relay")
        throw std::invalid_argument("adversary.kind: relay scenario required");
    RelayOutcome out;
    out.result = run(sc);

    std::set<std::string> authentic, via_adversary;
    for (const auto& r : out.result.receives)
        (r.source == "adversary" ? via_adversary : authentic).insert(r.receiver);
    for (const auto& [agent, matches] : out.result.matches) {
        if (!via_adversary.contains(agent) || authentic.contains(agent)) continue;
        ++out.victims_falsely_matched;
        out.false_match_count += matches.size();
    }
    return out;
}

LinkageStats run_linkage_analysis(const Scenario& sc) {
    if (!sc.adversary || sc.adversary->kind != "linkage")
        throw std::invalid_argument("adversary.kind: linkage scenario required");
    LinkageStats stats;
    stats.result = run(sc);
    const auto& obs = stats.result.antenna_observations;

    for (const auto& agent : sc.agents) {
        if (!agent.diagnosis_time) continue;
        std::vector<const ReceiveRecord*> own;
        for (const auto& [ai, r] : obs)
            if (r.source == agent.id) own.push_back(&r);
        stats.total_observations[agent.id] = own.size();

        std::size_t best = 0;
        switch (sc.design) {
            case Design::low_cost: {
                // Every EphID of the published chain links to one identity.
                std::set<EphID> chain;
                for (const auto& p : stats.result.published_day_seeds) {
                    DaySeed walker = p.seed;
                    for (DayIndex d = p.seed.day; d <= day_of(p.publication_time);
                         ++d, walker = rotate_day_seed(walker))
                        for (const auto& e : derive_day_ephids(walker, sc.params))
                            chain.insert(e);
                }
                std::size_t linked = 0;
                for (const auto* r : own)
                    if (chain.contains(r->ephid)) ++linked;
                best = linked;
                break;
            }
            case Design::hybrid: {
                // Linkable only inside one window.
                std::map<WindowIndex, std::set<EphID>> per_window;
                for (const auto& p : stats.result.published_window_seeds)
                    for (const auto& e : derive_window_ephids(p.seed, sc.params))
                        per_window[p.seed.window].insert(e);
                std::map<WindowIndex, std::size_t> linked;
                for (const auto* r : own) {
                    const WindowIndex w = sc.params.window_of(r->time);
                    auto it = per_window.find(w);
                    if (it != per_window.end() && it->second.contains(r->ephid)) ++linked[w];
                }
                for (const auto& [w, n] : linked) best = std::max(best, n);
                break;
            }
            case Design::unlinkable: {
                // One identity per (epoch, EphID): epochs stay isolated.
                std::map<std::pair<EpochIndex, EphID>, std::size_t> linked;
                std::set<std::pair<EpochIndex, EphID>> published;
                for (const auto& p : stats.result.published_epoch_seeds)
                    published.insert({p.seed.epoch, derive_unlinkable_ephid(p.seed)});
                for (const auto* r : own) {
                    const EpochIndex i = sc.params.epoch_of(r->time);
                    if (published.contains({i, r->ephid})) ++linked[{i, r->ephid}];
                }
                for (const auto& [key, n] : linked) best = std::max(best, n);
                break;
            }
        }
        stats.max_track[agent.id] = best;
    }
    return stats;
}

EavesdropResult run_eavesdrop_experiment(double distance_m, int duration_seconds,
                                         const SharingParams& params, int trials,
                                         const ChannelModel& channel, Rng& rng) {
    params.validate();
    if (trials <= 0) throw std::invalid_argument("trials must be positive");
    EavesdropResult out;
    out.shares_total = duration_seconds * 1000 / kBeaconIntervalMs;
    out.required = params.required_shares;
    out.per_share_prob = channel.reception_prob(distance_m);

    int successes = 0;
    for (int t = 0; t < trials; ++t) {
        int got = 0;
        for (int s = 0; s < out.shares_total && got < out.required; ++s)
            if (rng.bernoulli(out.per_share_prob)) ++got;
        if (got >= out.required) ++successes;
    }
    out.empirical_rate = static_cast<double>(successes) / trials;
    out.analytic_rate =
        reception_probability(out.per_share_prob, out.required, out.shares_total);
    out.standard_error =
        std::sqrt(std::max(out.analytic_rate * (1.0 - out.analytic_rate), 1e-12) / trials);
    return out;
}

std::multiset<MatchKey> reference_match_set(const SimResult& result, Design design,
                                            const EpochParams& params) {
    std::multiset<MatchKey> keys;
    switch (design) {
        case Design::low_cost:
            for (const auto& p : result.published_day_seeds) {
                DaySeed walker = p.seed;
                for (DayIndex d = p.seed.day; d <= day_of(p.publication_time);
                     ++d, walker = rotate_day_seed(walker)) {
                    std::set<EphID> ephids;
                    for (const auto& e : derive_day_ephids(walker, params)) ephids.insert(e);
                    for (const auto& r : result.receives)
                        if (ephids.contains(r.ephid) && day_of(r.time) == d &&
                            r.time < p.publication_time)
                            keys.insert({r.receiver, d, r.attenuation_db});
                }
            }
            break;
        case Design::unlinkable:
            for (const auto& p : result.published_epoch_seeds) {
                const EphID e = derive_unlinkable_ephid(p.seed);
                for (const auto& r : result.receives)
                    if (r.ephid == e && params.epoch_of(r.time) == p.seed.epoch &&
                        r.time < p.publication_time)
                        keys.insert({r.receiver, day_of(r.time), r.attenuation_db});
            }
            break;
        case Design::hybrid:
            for (const auto& p : result.published_window_seeds) {
                std::set<EphID> ephids;
                for (const auto& e : derive_window_ephids(p.seed, params)) ephids.insert(e);
                for (const auto& r : result.receives)
                    if (ephids.contains(r.ephid) &&
                        params.window_of(r.time) == p.seed.window &&
                        r.time < p.publication_time)
                        keys.insert({r.receiver, p.seed.window, r.attenuation_db});
            }
            break;
    }
    return keys;
}

std::multiset<MatchKey> production_match_set(const SimResult& result) {
    std::multiset<MatchKey> keys;
    for (const auto& [agent, matches] : result.matches)
        for (const auto& m : matches) keys.insert({agent, m.coarse_time, m.attenuation_db});
    return keys;
}

}  // namespace dp3t
