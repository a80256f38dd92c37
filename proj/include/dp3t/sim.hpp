#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "dp3t/backend.hpp"
#include "dp3t/device.hpp"
#include "dp3t/exposure.hpp"
#include "dp3t/secret_sharing.hpp"

namespace dp3t {

// Log-distance path loss with a logistic per-beacon reception probability.
// attenuation(d) = 40 + 20 log10(d); reception is calibrated through two
// (distance, probability) anchor points.
struct ChannelModel {
    double midpoint_db = 0.0;  // attenuation at reception probability 1/2
    double scale_db = 1.0;
    double max_range_m = 150.0;

    static ChannelModel calibrated(double d_near = 5.0, double p_near = 0.9,
                                   double d_far = 16.0, double p_far = 0.1);

    double attenuation(double distance_m) const;
    double reception_prob(double distance_m) const;
};

struct Waypoint {
    Timestamp time = 0;
    double x = 0.0;
    double y = 0.0;
};

struct AgentSpec {
    std::string id;
    std::vector<Waypoint> trace;  // one waypoint = static position
    std::optional<Timestamp> diagnosis_time;
    Timestamp contagion_start = 0;  // first uploaded day/epoch/window

    double x_at(Timestamp t) const;
    double y_at(Timestamp t) const;
};

struct AdversaryConfig {
    std::string kind;  // relay | linkage | eavesdrop
    // relay
    Waypoint capture{};      // position only
    Waypoint rebroadcast{};  // position only
    Timestamp delay = 0;
    // linkage
    std::vector<Waypoint> antennas;  // positions only
};

struct Scenario {
    std::string name = "scenario";
    Design design = Design::low_cost;
    Timestamp start = 0;
    Timestamp duration = 0;
    std::uint64_t seed = 0;
    EpochParams params{};
    int beacon_interval_seconds = 60;
    int slot_minutes = 120;
    RegionId region = "ZZ";
    std::vector<AgentSpec> agents;
    std::optional<AdversaryConfig> adversary;
    std::optional<SharingParams> sharing;
    ChannelModel channel = ChannelModel::calibrated();
    ExposureConfig exposure{};

    void validate() const;  // std::invalid_argument naming the bad field
    static Scenario from_json_text(const std::string& text);
};

struct ReceiveRecord {
    std::string receiver;
    std::string source;  // broadcasting agent, or "adversary"
    EphID ephid;
    Timestamp time = 0;
    double attenuation_db = 0.0;
};

struct PublishedEpochSeed {
    EpochSeed seed;
    Timestamp publication_time = 0;
};

struct SimMetrics {
    std::size_t broadcasts = 0;
    std::size_t receives = 0;
    std::size_t uploads = 0;
    std::size_t batches = 0;
    std::size_t match_count = 0;
    std::size_t download_bytes_per_user = 0;
    std::vector<std::string> notified;  // sorted agent ids
};

struct SimResult {
    std::vector<std::string> log;  // time-ordered, deterministic
    SimMetrics metrics;
    std::map<std::string, std::vector<MatchResult>> matches;
    std::vector<ReceiveRecord> receives;
    // Everything honestly published, with slot publication times.
    std::vector<PublishedDaySeed> published_day_seeds;
    std::vector<PublishedEpochSeed> published_epoch_seeds;
    std::vector<PublishedWindowSeed> published_window_seeds;
    // Adversary antenna sightings (linkage scenarios): antenna index per record.
    std::vector<std::pair<std::size_t, ReceiveRecord>> antenna_observations;
};

SimResult run(const Scenario& scenario);

struct RelayOutcome {
    std::size_t victims_falsely_matched = 0;  // victims with >= 1 match
    std::size_t false_match_count = 0;
    SimResult result;
};

// Victims are agents whose every reception came from the adversary's
// rebroadcast point.
RelayOutcome run_relay_attack(const Scenario& scenario);

struct LinkageStats {
    // Diagnosed agent id -> longest antenna-observation track attributable
    // to one linked identity under the design's published data.
    std::map<std::string, std::size_t> max_track;
    std::map<std::string, std::size_t> total_observations;
    SimResult result;
};

LinkageStats run_linkage_analysis(const Scenario& scenario);

struct EavesdropResult {
    int shares_total = 0;
    int required = 0;
    double per_share_prob = 0.0;
    double empirical_rate = 0.0;
    double analytic_rate = 0.0;
    double standard_error = 0.0;
};

// Monte Carlo reconstruction rate for an eavesdropper at fixed distance,
// one share per 250 ms beacon, against the analytic binomial tail.
EavesdropResult run_eavesdrop_experiment(double distance_m, int duration_seconds,
                                         const SharingParams& params, int trials,
                                         const ChannelModel& channel, Rng& rng);

// Exhaustive reference matcher: regenerates every published EphID and applies
// the time rules directly to the logged receives. Keys are
// (receiver, coarse_time, attenuation) so the unlinkable design is comparable.
using MatchKey = std::tuple<std::string, std::int64_t, double>;
std::multiset<MatchKey> reference_match_set(const SimResult& result, Design design,
                                            const EpochParams& params);
std::multiset<MatchKey> production_match_set(const SimResult& result);

}  // namespace dp3t
