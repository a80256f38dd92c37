#include "dp3t/device.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace dp3t {

namespace {

bool precedes_publication(const StoredObservation& obs, Timestamp publication_time,
                          std::int64_t coarse_interval_seconds) {
    if (obs.precise_time) return *obs.precise_time < publication_time;
    // Conservative: without a precise timestamp, the whole coarse interval
    // must lie before the publication.
    return (obs.coarse_time + 1) * coarse_interval_seconds <= publication_time;
}

}  // namespace

const char* design_name(Design d) {
    switch (d) {
        case Design::low_cost: return "low-cost";
        case Design::unlinkable: return "unlinkable";
        case Design::hybrid: return "hybrid";
    }
    return "?";
}

void validate_region(const RegionId& r) {
    if (r.empty() || r.size() > 8) throw std::invalid_argument("region id must be 1..8 bytes");
    for (char c : r)
        if (!std::isprint(static_cast<unsigned char>(c)) || c == ' ')
            throw std::invalid_argument("region id must be printable, no spaces");
}

Device::Device(DeviceConfig config, std::uint64_t rng_seed)
    : config_(config), rng_(rng_seed) {
    config_.params.validate();
    if (config_.retention_days <= 0) throw std::invalid_argument("retention_days must be positive");
}

void Device::add_visited_region(const RegionId& region) {
    validate_region(region);
    if (std::find(visited_regions_.begin(), visited_regions_.end(), region) ==
        visited_regions_.end())
        visited_regions_.push_back(region);
}

void Device::ensure_day_seed(DayIndex day) {
    if (day_seeds_.empty()) {
        day_seeds_.push_back(random_day_seed(day, rng_));
        return;
    }
    while (day_seeds_.back().day < day)
        day_seeds_.push_back(rotate_day_seed(day_seeds_.back()));
}

EphID Device::broadcast_ephid(Timestamp now) {
    switch (config_.design) {
        case Design::low_cost: {
            const DayIndex day = day_of(now);
            ensure_day_seed(day);
            auto it = day_schedule_.find(day);
            if (it == day_schedule_.end()) {
                const auto* seed = &day_seeds_.back();
                for (const auto& s : day_seeds_)
                    if (s.day == day) seed = &s;
                it = day_schedule_
                         .emplace(day, shuffle_broadcast_order(
                                           derive_day_ephids(*seed, config_.params), rng_))
                         .first;
            }
            const auto slot = (now - day_start(day)) / (60 * config_.params.epoch_minutes);
            return it->second[static_cast<std::size_t>(slot)];
        }
        case Design::unlinkable: {
            const EpochIndex epoch = config_.params.epoch_of(now);
            for (const auto& s : epoch_seeds_)
                if (s.epoch == epoch) return derive_unlinkable_ephid(s);
            epoch_seeds_.push_back(random_epoch_seed(epoch, rng_));
            return derive_unlinkable_ephid(epoch_seeds_.back());
        }
        case Design::hybrid: {
            const WindowIndex window = config_.params.window_of(now);
            auto it = window_schedule_.find(window);
            if (it == window_schedule_.end()) {
                window_seeds_.push_back(random_window_seed(window, rng_));
                it = window_schedule_
                         .emplace(window,
                                  shuffle_broadcast_order(
                                      derive_window_ephids(window_seeds_.back(), config_.params),
                                      rng_))
                         .first;
            }
            const auto slot = (now - config_.params.window_start(window)) /
                              (60 * config_.params.epoch_minutes);
            return it->second[static_cast<std::size_t>(slot)];
        }
    }
    throw std::logic_error("unreachable");
}

std::vector<std::int64_t> Device::coarse_times_for_rx(Timestamp rx, bool windows) const {
    const std::int64_t interval =
        60 * (windows ? config_.params.window_minutes : config_.params.epoch_minutes);
    const std::int64_t idx = rx / interval;
    std::vector<std::int64_t> out{idx};
    const std::int64_t skew = config_.clock_skew_seconds;
    if (skew > 0) {
        if (rx - idx * interval < skew && idx > 0) out.push_back(idx - 1);
        if ((idx + 1) * interval - rx <= skew) out.push_back(idx + 1);
    }
    return out;
}

void Device::record_beacon(std::span<const std::uint8_t> payload, Timestamp rx_time,
                           double attenuation_db) {
    if (payload.size() != kEphIdLen) {
        ++malformed_dropped_;
        return;
    }
    EphID ephid;
    std::copy(payload.begin(), payload.end(), ephid.bytes.begin());

    auto append = [&](Bytes identifier, std::int64_t coarse) {
        auto& group = store_[identifier];
        if (group.identifier.empty()) group.identifier = std::move(identifier);
        group.entries.push_back({attenuation_db, coarse, rx_time});
    };

    switch (config_.design) {
        case Design::low_cost:
            append(Bytes(ephid.bytes.begin(), ephid.bytes.end()), day_of(rx_time));
            break;
        case Design::unlinkable:
            // Store H(EphID || i), never the raw EphID.
            for (std::int64_t epoch : coarse_times_for_rx(rx_time, false)) {
                auto hashed = hash_observation(ephid, epoch);
                append(Bytes(hashed.bytes.begin(), hashed.bytes.end()), day_of(rx_time));
            }
            break;
        case Design::hybrid:
            for (std::int64_t window : coarse_times_for_rx(rx_time, true))
                append(Bytes(ephid.bytes.begin(), ephid.bytes.end()), window);
            break;
    }
}

void Device::downloads_processed(Timestamp processed_time) {
    last_processed_download_ = std::max(last_processed_download_, processed_time);
}

void Device::coarsen_and_prune(Timestamp now) {
    const Timestamp cutoff = now - static_cast<Timestamp>(config_.retention_days) * 86400;
    const std::int64_t coarse_interval =
        config_.design == Design::hybrid ? 60 * config_.params.window_minutes : 86400;

    for (auto it = store_.begin(); it != store_.end();) {
        auto& entries = it->second.entries;
        for (auto& e : entries) {
            if (e.precise_time && *e.precise_time <= last_processed_download_)
                e.precise_time.reset();
        }
        std::erase_if(entries, [&](const StoredObservation& e) {
            const Timestamp anchor =
                e.precise_time ? *e.precise_time : e.coarse_time * coarse_interval;
            return anchor < cutoff;
        });
        it = entries.empty() ? store_.erase(it) : std::next(it);
    }

    const DayIndex day_cutoff = day_of(now) - config_.retention_days;
    std::erase_if(day_seeds_, [&](const DaySeed& s) { return s.day < day_cutoff; });
    std::erase_if(epoch_seeds_, [&](const EpochSeed& s) {
        return config_.params.epoch_start(s.epoch) < cutoff;
    });
    std::erase_if(window_seeds_, [&](const WindowSeed& s) {
        return config_.params.window_start(s.window) < cutoff;
    });
    std::erase_if(day_schedule_, [&](const auto& kv) { return kv.first < day_cutoff; });
    std::erase_if(window_schedule_, [&](const auto& kv) {
        return config_.params.window_start(kv.first) < cutoff;
    });
}

std::vector<MatchResult> Device::match_low_cost(
    const std::vector<PublishedDaySeed>& published) const {
    if (config_.design != Design::low_cost) throw std::logic_error("wrong design");
    std::vector<MatchResult> out;
    for (const auto& pub : published) {
        DaySeed walker = pub.seed;
        const DayIndex last_day = day_of(pub.publication_time);
        for (DayIndex day = pub.seed.day; day <= last_day;
             walker = rotate_day_seed(walker), ++day) {
            for (const EphID& ephid : derive_day_ephids(walker, config_.params)) {
                auto it = store_.find(Bytes(ephid.bytes.begin(), ephid.bytes.end()));
                if (it == store_.end()) continue;
                for (const auto& obs : it->second.entries) {
                    if (obs.coarse_time == day &&
                        precedes_publication(obs, pub.publication_time, 86400))
                        out.push_back({day, obs.attenuation_db, ephid});
                }
            }
        }
    }
    return out;
}

std::vector<MatchResult> Device::match_unlinkable(const CuckooFilter& filter,
                                                  Timestamp publication_time) const {
    if (config_.design != Design::unlinkable) throw std::logic_error("wrong design");
    std::vector<MatchResult> out;
    for (const auto& [id, group] : store_) {
        if (id.size() != kDigestLen) continue;
        HashedObservation h;
        std::copy(id.begin(), id.end(), h.bytes.begin());
        if (!filter.contains(h)) continue;
        for (const auto& obs : group.entries) {
            if (precedes_publication(obs, publication_time, 86400))
                out.push_back({obs.coarse_time, obs.attenuation_db, std::nullopt});
        }
    }
    return out;
}

std::vector<MatchResult> Device::match_hybrid(
    const std::vector<PublishedWindowSeed>& published) const {
    if (config_.design != Design::hybrid) throw std::logic_error("wrong design");
    const std::int64_t window_seconds = 60 * config_.params.window_minutes;
    std::vector<MatchResult> out;
    for (const auto& pub : published) {
        for (const EphID& ephid : derive_window_ephids(pub.seed, config_.params)) {
            auto it = store_.find(Bytes(ephid.bytes.begin(), ephid.bytes.end()));
            if (it == store_.end()) continue;
            for (const auto& obs : it->second.entries) {
                if (obs.coarse_time == pub.seed.window &&
                    precedes_publication(obs, pub.publication_time, window_seconds))
                    out.push_back({pub.seed.window, obs.attenuation_db, ephid});
            }
        }
    }
    return out;
}

UploadPayload Device::build_upload(Timestamp contagion_start, Timestamp now,
                                   const std::set<std::int64_t>& redactions) {
    if (day_of(contagion_start) < day_of(now) - config_.retention_days)
        throw std::invalid_argument("contagion_start older than the retention window");

    UploadPayload payload;
    payload.design = config_.design;
    payload.visited_regions = visited_regions_;

    switch (config_.design) {
        case Design::low_cost: {
            ensure_day_seed(day_of(now));
            const DayIndex target = day_of(contagion_start);
            auto it = std::find_if(day_seeds_.begin(), day_seeds_.end(),
                                   [&](const DaySeed& s) { return s.day >= target; });
            if (it == day_seeds_.end())
                throw std::invalid_argument("no day seed covers the contagious window");
            payload.day_seed = *it;
            // Delete the reported chain and restart from fresh randomness so
            // no future EphID derives from anything uploaded.
            day_seeds_.clear();
            day_schedule_.clear();
            day_seeds_.push_back(random_day_seed(day_of(now), rng_));
            break;
        }
        case Design::unlinkable: {
            const EpochIndex first = config_.params.epoch_of(contagion_start);
            const EpochIndex last = config_.params.epoch_of(now);
            for (const auto& s : epoch_seeds_) {
                if (s.epoch >= first && s.epoch <= last && !redactions.contains(s.epoch))
                    payload.epoch_seeds.push_back(s);
            }
            std::erase_if(epoch_seeds_, [&](const EpochSeed& s) {
                return std::any_of(payload.epoch_seeds.begin(), payload.epoch_seeds.end(),
                                   [&](const EpochSeed& u) { return u.epoch == s.epoch; });
            });
            break;
        }
        case Design::hybrid: {
            const WindowIndex first = config_.params.window_of(contagion_start);
            const WindowIndex last = config_.params.window_of(now);
            for (const auto& s : window_seeds_) {
                if (s.window < first || s.window > last || redactions.contains(s.window))
                    continue;
                // Skip windows with no sufficiently close observed contact.
                bool had_contact = false;
                for (const auto& [id, group] : store_) {
                    if (id.size() != kEphIdLen) continue;
                    for (const auto& obs : group.entries) {
                        if (obs.coarse_time == s.window &&
                            obs.attenuation_db < config_.close_contact_max_db) {
                            had_contact = true;
                            break;
                        }
                    }
                    if (had_contact) break;
                }
                if (had_contact) payload.window_seeds.push_back(s);
            }
            std::erase_if(window_seeds_, [&](const WindowSeed& s) {
                return std::any_of(payload.window_seeds.begin(), payload.window_seeds.end(),
                                   [&](const WindowSeed& u) { return u.window == s.window; });
            });
            break;
        }
    }
    return payload;
}

UploadPayload Device::build_dummy_upload(Timestamp now) {
    UploadPayload payload;
    payload.design = config_.design;
    payload.is_dummy = true;
    payload.visited_regions = visited_regions_;
    switch (config_.design) {
        case Design::low_cost:
            payload.day_seed = random_day_seed(day_of(now) - 2, rng_);
            break;
        case Design::unlinkable: {
            const EpochIndex last = config_.params.epoch_of(now);
            for (int i = 0; i < 5 * config_.params.epochs_per_day(); ++i)
                payload.epoch_seeds.push_back(random_epoch_seed(last - i, rng_));
            break;
        }
        case Design::hybrid: {
            const WindowIndex last = config_.params.window_of(now);
            for (int i = 0; i < 5 * config_.params.windows_per_day(); ++i)
                payload.window_seeds.push_back(random_window_seed(last - i, rng_));
            break;
        }
    }
    return payload;
}

StorageReport Device::storage_report() const {
    StorageReport r;
    r.group_count = store_.size();
    for (const auto& [id, group] : store_) r.entry_count += group.entries.size();
    const std::size_t per_group = config_.design == Design::unlinkable ? 52 : 36;
    r.bytes = r.group_count * per_group;
    r.malformed_dropped = malformed_dropped_;
    return r;
}

std::size_t Device::own_seed_count() const {
    return day_seeds_.size() + epoch_seeds_.size() + window_seeds_.size();
}

}  // namespace dp3t
