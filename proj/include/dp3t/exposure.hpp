#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dp3t/crypto_core.hpp"

namespace dp3t {

// One matched beacon, normalised to day granularity for scoring.
struct ExposureMatch {
    DayIndex day = 0;
    double attenuation_db = 0.0;
};

struct AttenuationBucket {
    double max_db = 0.0;
    double weight = 0.0;
};

// Health-authority scoring parameters. Score unit is weighted exposure
// minutes: each match contributes weight(attenuation) * L.
struct ExposureConfig {
    std::vector<AttenuationBucket> buckets{{55.0, 1.0}, {63.0, 0.5}};
    double threshold = 15.0;  // strict ">" per the notification rule
    int window_days = 14;
    int epoch_minutes = 15;

    void validate() const;
    double weight_for(double attenuation_db) const;

    // JSON config with keys: buckets ([[max_db, weight], ...]), threshold,
    // window_days, epoch_minutes.
    static ExposureConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

struct DailyExposureScore {
    DayIndex day = 0;
    double score = 0.0;

    friend bool operator==(const DailyExposureScore&, const DailyExposureScore&) = default;
};

// All matches must share one day.
DailyExposureScore score_day(const std::vector<ExposureMatch>& matches, const ExposureConfig& cfg);

// Per-day scores for every day with at least one match inside the horizon
// [today - window_days + 1, today]; older matches contribute nothing.
std::vector<DailyExposureScore> score_matches(const std::vector<ExposureMatch>& matches,
                                              DayIndex today, const ExposureConfig& cfg);

struct NotificationDecision {
    bool notify = false;
    std::vector<DayIndex> triggering_days;
};

NotificationDecision decide_notification(const std::vector<DailyExposureScore>& scores,
                                         const ExposureConfig& cfg);

}  // namespace dp3t
