#include "dp3t/exposure.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace dp3t {

void ExposureConfig::validate() const {
    if (threshold <= 0) throw std::invalid_argument("threshold must be positive");
    if (window_days <= 0) throw std::invalid_argument("window_days must be positive");
    if (epoch_minutes <= 0) throw std::invalid_argument("epoch_minutes must be positive");
    double prev = -1.0;
    for (const auto& b : buckets) {
        if (b.max_db <= prev)
            throw std::invalid_argument("bucket boundaries must be strictly increasing");
        if (b.weight < 0) throw std::invalid_argument("bucket weights must be non-negative");
        prev = b.max_db;
    }
}

double ExposureConfig::weight_for(double attenuation_db) const {
    for (const auto& b : buckets)
        if (b.max_db >= attenuation_db) return b.weight;
    return 0.0;
}

ExposureConfig ExposureConfig::from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ExposureConfig cfg;
    if (j.contains("buckets")) {
        cfg.buckets.clear();
        for (const auto& b : j.at("buckets"))
            cfg.buckets.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    }
    if (j.contains("threshold")) cfg.threshold = j.at("threshold").get<double>();
    if (j.contains("window_days")) cfg.window_days = j.at("window_days").get<int>();
    if (j.contains("epoch_minutes")) cfg.epoch_minutes = j.at("epoch_minutes").get<int>();
    cfg.validate();
    return cfg;
}

std::string ExposureConfig::to_json_text() const {
    nlohmann::json j;
    j["buckets"] = nlohmann::json::array();
    for (const auto& b : buckets) j["buckets"].push_back({b.max_db, b.weight});
    j["threshold"] = threshold;
    j["window_days"] = window_days;
    j["epoch_minutes"] = epoch_minutes;
    return j.dump(2);
}

DailyExposureScore score_day(const std::vector<ExposureMatch>& matches,
                             const ExposureConfig& cfg) {
    cfg.validate();
    if (matches.empty()) return {};
    DailyExposureScore out{matches.front().day, 0.0};
    for (const auto& m : matches) {
        if (m.day != out.day) throw std::invalid_argument("matches span multiple days");
        out.score += cfg.weight_for(m.attenuation_db) * cfg.epoch_minutes;
    }
    return out;
}

std::vector<DailyExposureScore> score_matches(const std::vector<ExposureMatch>& matches,
                                              DayIndex today, const ExposureConfig& cfg) {
    cfg.validate();
    std::map<DayIndex, std::vector<ExposureMatch>> by_day;
    for (const auto& m : matches) {
        if (m.day > today || m.day <= today - cfg.window_days) continue;
        by_day[m.day].push_back(m);
    }
    std::vector<DailyExposureScore> out;
    out.reserve(by_day.size());
    for (auto& [day, day_matches] : by_day) out.push_back(score_day(day_matches, cfg));
    return out;
}

NotificationDecision decide_notification(const std::vector<DailyExposureScore>& scores,
                                         const ExposureConfig& cfg) {
    cfg.validate();
    NotificationDecision d;
    for (const auto& s : scores)
        if (s.score > cfg.threshold) d.triggering_days.push_back(s.day);
    std::sort(d.triggering_days.begin(), d.triggering_days.end());
    d.notify = !d.triggering_days.empty();
    return d;
}

}  // namespace dp3t
