#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "dp3t/backend.hpp"
#include "dp3t/scalability.hpp"
#include "dp3t/sim.hpp"

namespace {

using namespace dp3t;

// Scenarios shipped inside the binary; simulate/attack also accept a path.
const std::map<std::string, const char*> kBundledScenarios = {
    {"two-agents", R"({
        "name": "two-agents", "design": "low_cost",
        "start": 86400000, "duration": 1800, "seed": 1,
        "agents": [
            {"id": "alice", "position": [0, 0], "diagnosis_time": 86402000},
            {"id": "bob", "position": [1, 0]}
        ]
    })"},
    {"two-agents-unlinkable", R"({
        "name": "two-agents-unlinkable", "design": "unlinkable",
        "start": 86400000, "duration": 1800, "seed": 1,
        "agents": [
            {"id": "alice", "position": [0, 0], "diagnosis_time": 86402000},
            {"id": "bob", "position": [1, 0]}
        ]
    })"},
    {"two-agents-hybrid", R"({
        "name": "two-agents-hybrid", "design": "hybrid",
        "start": 86400000, "duration": 1800, "seed": 1,
        "agents": [
            {"id": "alice", "position": [0, 0], "diagnosis_time": 86402000},
            {"id": "bob", "position": [1, 0]}
        ]
    })"},
    {"relay-1h-lowcost", R"({
        "name": "relay-1h-lowcost", "design": "low_cost",
        "start": 86400000, "duration": 1800, "seed": 1,
        "agents": [
            {"id": "source", "position": [0, 0], "diagnosis_time": 86405500},
            {"id": "companion", "position": [1.5, 0]},
            {"id": "victim", "position": [1000, 0]}
        ],
        "adversary": {"kind": "relay", "capture": [1, 0],
                      "rebroadcast": [1001, 0], "delay": 3600}
    })"},
    {"relay-25h-lowcost", R"({
        "name": "relay-25h-lowcost", "design": "low_cost",
        "start": 86400000, "duration": 1800, "seed": 1,
        "agents": [
            {"id": "source", "position": [0, 0], "diagnosis_time": 86491900},
            {"id": "companion", "position": [1.5, 0]},
            {"id": "victim", "position": [1000, 0]}
        ],
        "adversary": {"kind": "relay", "capture": [1, 0],
                      "rebroadcast": [1001, 0], "delay": 90000}
    })"},
    {"linkage-antennas", R"({
        "name": "linkage-antennas", "design": "low_cost",
        "start": 86400000, "duration": 18000, "seed": 1,
        "beacon_interval_seconds": 900,
        "agents": [
            {"id": "patient", "diagnosis_time": 86418000,
             "trace": [[86400000, 0, 0], [86410000, 0, 0],
                       [86414000, 1000, 0], [86418000, 1000, 0]]},
            {"id": "companion",
             "trace": [[86400000, 0, 1], [86410000, 0, 1],
                       [86414000, 1000, 1], [86418000, 1000, 1]]}
        ],
        "adversary": {"kind": "linkage", "antennas": [[0, 0], [1000, 0]]}
    })"},
};

std::string load_scenario_text(const std::string& ref) {
    auto it = kBundledScenarios.find(ref);
    if (it != kBundledScenarios.end()) return it->second;
    std::ifstream f(ref);
    if (!f) throw std::invalid_argument("scenario: no bundled scenario or file named '" + ref + "'");
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
}

std::string metrics_json(const SimResult& res) {
    nlohmann::json j;
    j["broadcasts"] = res.metrics.broadcasts;
    j["receives"] = res.metrics.receives;
    j["uploads"] = res.metrics.uploads;
    j["batches"] = res.metrics.batches;
    j["matches"] = res.metrics.match_count;
    j["download_bytes_per_user"] = res.metrics.download_bytes_per_user;
    j["notified"] = res.metrics.notified;
    return j.dump(2) + "\n";
}

int cmd_simulate(const std::string& scenario_ref, const std::string& output_dir,
                 std::optional<std::uint64_t> seed) {
    Scenario sc = Scenario::from_json_text(load_scenario_text(scenario_ref));
    if (seed) sc.seed = *seed;
    auto res = run(sc);
    if (!output_dir.empty()) {
        std::filesystem::create_directories(output_dir);
        std::string events;
        for (const auto& line : res.log) events += line + "\n";
        write_file(std::filesystem::path(output_dir) / "events.log", events);
        write_file(std::filesystem::path(output_dir) / "metrics.json", metrics_json(res));
    }
    std::cout << "scenario: " << sc.name << " (" << design_name(sc.design) << ")\n"
              << "broadcasts: " << res.metrics.broadcasts << "\n"
              << "receives: " << res.metrics.receives << "\n"
              << "uploads: " << res.metrics.uploads << "\n"
              << "batches: " << res.metrics.batches << "\n"
              << "matches: " << res.metrics.match_count << "\n"
              << "download bytes per user: " << res.metrics.download_bytes_per_user << "\n";
    std::cout << "notified:";
    for (const auto& id : res.metrics.notified) std::cout << " " << id;
    std::cout << "\n";
    return 0;
}

int cmd_attack(const std::string& scenario_ref, std::optional<std::uint64_t> seed,
               double distance, int duration, int k, int trials) {
    if (!scenario_ref.empty()) {
        Scenario sc = Scenario::from_json_text(load_scenario_text(scenario_ref));
        if (seed) sc.seed = *seed;
        if (!sc.adversary) throw std::invalid_argument("adversary: scenario has none");
        if (sc.adversary->kind == "relay") {
            auto out = run_relay_attack(sc);
            std::cout << "relay attack on " << design_name(sc.design) << ", delay "
                      << sc.adversary->delay << " s\n"
                      << "victims falsely matched: " << out.victims_falsely_matched << "\n"
                      << "false match count: " << out.false_match_count << "\n";
        } else if (sc.adversary->kind == "linkage") {
            auto out = run_linkage_analysis(sc);
            std::cout << "linkage analysis, " << design_name(sc.design) << "\n";
            for (const auto& [id, track] : out.max_track)
                std::cout << id << ": max linkable track " << track << " of "
                          << out.total_observations[id] << " observations\n";
        } else {
            throw std::invalid_argument("adversary.kind: use --distance for eavesdrop runs");
        }
        return 0;
    }
    auto ch = ChannelModel::calibrated();
    SharingParams params;
    params.required_shares =
        k > 0 ? k
              : tune_share_threshold(ch.reception_prob(5.0), ch.reception_prob(16.0),
                                     duration * 1000 / kBeaconIntervalMs);
    params.total_shares = 255;
    Rng rng(seed.value_or(1));
    auto out = run_eavesdrop_experiment(distance, duration, params, trials, ch, rng);
    std::cout << "eavesdrop at " << distance << " m for " << duration << " s, k="
              << out.required << ", shares=" << out.shares_total << "\n"
              << "per-share reception probability: " << out.per_share_prob << "\n"
              << "empirical reconstruction rate: " << out.empirical_rate << "\n"
              << "analytic reconstruction rate: " << out.analytic_rate << "\n";
    return 0;
}

int cmd_scalability(const std::string& design_str, std::int64_t cases, int contagious_days,
                    int window_minutes, int redacted_hours, int per_record_bytes,
                    bool table, const std::string& output) {
    if (table) {
        std::string csv = "cases,low_cost_mb,unlinkable_mb,hybrid_4h_mb\n";
        const std::int64_t case_counts[] = {1390, 58, 6294, 933, 7578, 708, 9181, 849, 6557, 1402};
        for (auto n : case_counts) {
            ScalabilityInputs in;
            in.daily_new_cases = n;
            in.design = Design::low_cost;
            auto lc = compute_scalability(in);
            in.design = Design::unlinkable;
            auto ul = compute_scalability(in);
            in.design = Design::hybrid;
            auto hy = compute_scalability(in);
            csv += std::to_string(n) + "," + format_mb(lc.daily_mb) + "," +
                   format_mb(ul.daily_mb) + "," + format_mb(hy.daily_mb) + "\n";
        }
        if (!output.empty())
            write_file(output, csv);
        else
            std::cout << csv;
        return 0;
    }
    ScalabilityInputs in;
    if (design_str == "low-cost" || design_str == "low_cost")
        in.design = Design::low_cost;
    else if (design_str == "unlinkable")
        in.design = Design::unlinkable;
    else if (design_str == "hybrid")
        in.design = Design::hybrid;
    else
        throw std::invalid_argument("design: unknown value '" + design_str + "'");
    in.daily_new_cases = cases;
    in.contagious_days = contagious_days;
    in.window_minutes = window_minutes;
    in.redacted_hours = redacted_hours;
    if (per_record_bytes > 0) in.per_record_bytes = per_record_bytes;
    auto r = compute_scalability(in);
    std::cout << "per-patient bytes: " << r.per_patient_bytes << "\n"
              << "daily per-user download: " << format_mb(r.daily_mb) << " MB\n";
    return 0;
}

int cmd_filter_tune(std::size_t items, double fp_target, std::uint64_t queries) {
    FilterTuning tuning{items, fp_target, queries};
    auto p = tune_filter(tuning);
    const double bytes_per_item =
        static_cast<double>(p.bucket_count) * p.slots_per_bucket * p.fingerprint_bits /
        (8.0 * static_cast<double>(items));
    std::cout << "fingerprint bits: " << p.fingerprint_bits << "\n"
              << "slots per bucket: " << p.slots_per_bucket << "\n"
              << "bucket count: " << p.bucket_count << "\n"
              << "bytes per item: " << bytes_per_item << "\n"
              << "per-query false-positive bound: " << p.fp_bound() << "\n";
    return 0;
}

std::atomic<bool> g_stop{false};

int cmd_serve(const std::string& design_str, const std::string& region, int slot_minutes,
              int retention_days, const std::string& data_dir,
              const std::string& listen_address) {
    BackendConfig cfg;
    if (design_str == "low-cost" || design_str == "low_cost")
        cfg.design = Design::low_cost;
    else if (design_str == "unlinkable")
        cfg.design = Design::unlinkable;
    else if (design_str == "hybrid")
        cfg.design = Design::hybrid;
    else
        throw std::invalid_argument("design: unknown value '" + design_str + "'");
    cfg.region = region;
    cfg.slot_minutes = slot_minutes;
    cfg.retention_days = retention_days;
    cfg.data_dir = data_dir;

    auto now = [] {
        return static_cast<Timestamp>(
            std::chrono::duration_cast<std::chrono::seconds>(
                std::chrono::system_clock::now().time_since_epoch())
                .count());
    };
    Backend backend(cfg, now());
    std::mutex mu;

    auto host_port = listen_address;
    std::string host = "127.0.0.1";
    int port = 8321;
    if (auto colon = host_port.rfind(':'); colon != std::string::npos) {
        host = host_port.substr(0, colon);
        port = std::stoi(host_port.substr(colon + 1));
    } else if (!host_port.empty()) {
        host = host_port;
    }

    httplib::Server svr;
    svr.Post("/v1/upload", [&](const httplib::Request& req, httplib::Response& res) {
        UploadEnvelope env;
        env.wire.assign(req.body.begin(), req.body.end());
        env.authorized = req.get_header_value("X-Dummy") != "1";
        env.received_at = now();
        std::lock_guard lock(mu);
        auto ack = backend.accept_upload(env);
        res.status = ack.accepted ? 200 : 400;
        res.set_content(std::string(ack.response.begin(), ack.response.end()),
                        "application/octet-stream");
    });
    svr.Get(R"(/v1/([^/]+)/batches)", [&](const httplib::Request& req, httplib::Response& res) {
        std::int64_t since = -1;
        if (req.has_param("since")) since = std::stoll(req.get_param_value("since"));
        std::lock_guard lock(mu);
        try {
            nlohmann::json j = nlohmann::json::array();
            for (const auto& b : backend.fetch_batches(req.matches[1], since))
                j.push_back({{"slot", b.slot_id},
                             {"bytes", b.body.size()},
                             {"published", b.publication_time}});
            res.set_content(j.dump(), "application/json");
        } catch (const std::invalid_argument& e) {
            res.status = 404;
            res.set_content(e.what(), "text/plain");
        }
    });
    svr.Get(R"(/v1/([^/]+)/batch/(\d+))", [&](const httplib::Request& req,
                                              httplib::Response& res) {
        const std::int64_t slot = std::stoll(req.matches[2]);
        std::lock_guard lock(mu);
        try {
            for (const auto& b : backend.fetch_batches(req.matches[1], slot - 1)) {
                if (b.slot_id != slot) continue;
                res.set_content(std::string(b.body.begin(), b.body.end()),
                                "application/octet-stream");
                return;
            }
            res.status = 404;
        } catch (const std::invalid_argument& e) {
            res.status = 404;
            res.set_content(e.what(), "text/plain");
        }
    });

    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });

    std::thread publisher([&] {
        while (!g_stop) {
            {
                std::lock_guard lock(mu);
                backend.publish_due(now());
            }
            std::this_thread::sleep_for(std::chrono::seconds(1));
        }
    });
    std::thread stopper([&] {
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
        svr.stop();
    });

    std::cout << "serving " << design_name(cfg.design) << " region " << cfg.region << " on "
              << host << ":" << port << "\n";
    svr.listen(host, port);
    g_stop = true;
    publisher.join();
    stopper.join();
    {
        // Complete the slot that was open at shutdown.
        std::lock_guard lock(mu);
        const Timestamp t = now();
        backend.publish_due((backend.slot_of(t) + 1) * cfg.slot_seconds() + 1);
    }
    return 0;
}

int cmd_report(const std::string& kind, const std::string& output) {
    std::string csv;
    if (kind == "download-cost") {
        csv = "cases,low_cost_mb,unlinkable_mb,hybrid_4h_mb\n";
        for (std::int64_t cases = 500; cases <= 20000; cases += 500) {
            ScalabilityInputs in;
            in.daily_new_cases = cases;
            in.design = Design::low_cost;
            auto lc = compute_scalability(in);
            in.design = Design::unlinkable;
            auto ul = compute_scalability(in);
            in.design = Design::hybrid;
            auto hy = compute_scalability(in);
            csv += std::to_string(cases) + "," + format_mb(lc.daily_mb) + "," +
                   format_mb(ul.daily_mb) + "," + format_mb(hy.daily_mb) + "\n";
        }
    } else if (kind == "sharing") {
        auto ch = ChannelModel::calibrated();
        const int k = tune_share_threshold(ch.reception_prob(5.0), ch.reception_prob(16.0),
                                           kSharesPerContact);
        csv = "distance_m,per_share_prob,reconstruction_prob_k" + std::to_string(k) + "\n";
        for (double d = 1.0; d <= 30.0; d += 1.0) {
            const double p = ch.reception_prob(d);
            char row[96];
            std::snprintf(row, sizeof row, "%.0f,%.6f,%.6f\n", d, p,
                          reception_probability(p, k, kSharesPerContact));
            csv += row;
        }
    } else {
        throw std::invalid_argument("kind: expected download-cost or sharing");
    }
    if (!output.empty())
        write_file(output, csv);
    else
        std::cout << csv;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decentralized proximity tracing toolkit"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::string output;
    app.add_option("--seed", seed, "Override the scenario RNG seed");
    app.add_option("--output", output, "Output file or directory");

    std::string scenario_ref;
    auto* simulate = app.add_subcommand("simulate", "Run a scenario end to end");
    simulate->add_option("--scenario", scenario_ref, "Bundled scenario name or JSON file")
        ->required();

    std::string attack_scenario;
    double distance = 16.0;
    int duration = kContactSeconds, shares_k = 0, trials = 100000;
    auto* attack = app.add_subcommand("attack", "Run an adversary scenario");
    attack->add_option("--scenario", attack_scenario, "Relay or linkage scenario");
    attack->add_option("--distance", distance, "Eavesdropper distance (m)");
    attack->add_option("--duration", duration, "Eavesdrop duration (s)");
    attack->add_option("--k", shares_k, "Share threshold (0 = tuned)");
    attack->add_option("--trials", trials, "Monte Carlo trials");

    std::string design_str = "low-cost";
    std::int64_t cases = 0;
    int contagious_days = 5, window_minutes = 240, redacted_hours = 0, per_record_bytes = 0;
    bool table = false;
    auto* scal = app.add_subcommand("scalability", "Per-patient bytes and download cost");
    scal->add_option("--design", design_str, "low-cost | unlinkable | hybrid");
    scal->add_option("--cases", cases, "Daily new cases");
    scal->add_option("--contagious-days", contagious_days, "Contagious window (days)");
    scal->add_option("--window-minutes", window_minutes, "Hybrid window length");
    scal->add_option("--redacted-hours", redacted_hours, "Hybrid redacted hours per day");
    scal->add_option("--per-record-bytes", per_record_bytes, "Low-cost record size override");
    scal->add_flag("--table", table, "Print the per-country table");

    std::size_t items = 480;
    double fp_target = 1e-6;
    std::uint64_t queries = 1;
    auto* tune = app.add_subcommand("filter-tune", "Tune Cuckoo filter parameters");
    tune->add_option("--items", items, "Expected items");
    tune->add_option("--fp", fp_target, "Target false-positive budget");
    tune->add_option("--queries", queries, "Queries over the exposure horizon");

    std::string region = "ZZ", data_dir, listen_address = "127.0.0.1:8321";
    int slot_minutes = 120, retention_days = 14;
    auto* serve = app.add_subcommand("serve", "Run the publication server");
    serve->add_option("--design", design_str, "low-cost | unlinkable | hybrid");
    serve->add_option("--region", region, "Region code");
    serve->add_option("--slot-minutes", slot_minutes, "Download slot length");
    serve->add_option("--retention-days", retention_days, "Server retention");
    serve->add_option("--data-dir", data_dir, "Append-only log directory");
    serve->add_option("--listen-address", listen_address, "host:port");

    std::string report_kind = "download-cost";
    auto* report = app.add_subcommand("report", "Emit plot-data tables");
    report->add_option("--kind", report_kind, "download-cost | sharing");

    CLI11_PARSE(app, argc, argv);

    try {
        if (simulate->parsed()) return cmd_simulate(scenario_ref, output, seed);
        if (attack->parsed())
            return cmd_attack(attack_scenario, seed, distance, duration, shares_k, trials);
        if (scal->parsed())
            return cmd_scalability(design_str, cases, contagious_days, window_minutes,
                                   redacted_hours, per_record_bytes, table, output);
        if (tune->parsed()) return cmd_filter_tune(items, fp_target, queries);
        if (serve->parsed())
            return cmd_serve(design_str, region, slot_minutes, retention_days, data_dir,
                             listen_address);
        if (report->parsed()) return cmd_report(report_kind, output);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
