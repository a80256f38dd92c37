#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dp3t/crypto_core.hpp"
#include "dp3t/cuckoo_filter.hpp"
#include "dp3t/rng.hpp"

namespace dp3t {

enum class Design { low_cost, unlinkable, hybrid };

const char* design_name(Design d);

using RegionId = std::string;  // non-empty printable ASCII, <= 8 bytes
void validate_region(const RegionId& r);

// One logical stored beacon. The identifier is the raw EphID (low-cost,
// hybrid) or H(EphID || epoch) (unlinkable); coarse_time is a DayIndex
// (low-cost, unlinkable) or WindowIndex (hybrid).
struct StoredObservation {
    double attenuation_db = 0.0;
    std::int64_t coarse_time = 0;
    // Kept only until the observation has been checked against every
    // published batch, then coarsened away.
    std::optional<Timestamp> precise_time;
};

struct ObservationGroup {
    Bytes identifier;  // 16 bytes (raw EphID) or 32 bytes (hashed)
    std::vector<StoredObservation> entries;
};

struct StorageReport {
    std::size_t group_count = 0;
    std::size_t entry_count = 0;
    std::size_t bytes = 0;  // group_count x 36 (raw) or x 52 (hashed)
    std::size_t malformed_dropped = 0;
};

struct MatchResult {
    std::int64_t coarse_time = 0;  // day or window, design-specific
    double attenuation_db = 0.0;
    std::optional<EphID> matched_ephid;  // absent for unlinkable
};

struct UploadPayload {
    Design design = Design::low_cost;
    bool is_dummy = false;
    std::optional<DaySeed> day_seed;     // low-cost: (SK_t, t)
    std::vector<EpochSeed> epoch_seeds;  // unlinkable: {(i, seed_i)}
    std::vector<WindowSeed> window_seeds;  // hybrid: {(w, seed_w)}
    std::vector<RegionId> visited_regions;
};

struct PublishedDaySeed {
    DaySeed seed;
    Timestamp publication_time = 0;
};

struct PublishedWindowSeed {
    WindowSeed seed;
    Timestamp publication_time = 0;
};

struct DeviceConfig {
    Design design = Design::low_cost;
    EpochParams params{};
    int retention_days = 14;
    // Hybrid window omission: a window had a reportable contact if any
    // observation in it is below this attenuation.
    double close_contact_max_db = 60.0;
    // Epoch/window assignment tolerance at receive time. When positive, a
    // beacon received within this margin of an epoch/window boundary is also
    // stored under the adjacent index. Off by default: the margin re-admits
    // cross-interval replays at boundaries.
    int clock_skew_seconds = 0;
};

// The smartphone model: seed generation and rotation, broadcast scheduling,
// beacon storage, matching against published data, and upload construction.
class Device {
public:
    Device(DeviceConfig config, std::uint64_t rng_seed);

    Design design() const { return config_.design; }
    const DeviceConfig& config() const { return config_; }

    // The EphID this device broadcasts at `now`. Generates seeds and
    // shuffled schedules on demand.
    EphID broadcast_ephid(Timestamp now);

    void add_visited_region(const RegionId& region);
    const std::vector<RegionId>& visited_regions() const { return visited_regions_; }

    // Stores a received beacon in the design-specific form. Payloads that
    // are not exactly 16 bytes are dropped and counted.
    void record_beacon(std::span<const std::uint8_t> payload, Timestamp rx_time,
                       double attenuation_db);

    // Marks all downloads up to `processed_time` as handled; precise receive
    // timestamps older than that are coarsened on the next prune.
    void downloads_processed(Timestamp processed_time);

    // Coarsens processed timestamps and deletes observations and own seeds
    // older than the retention horizon.
    void coarsen_and_prune(Timestamp now);

    std::vector<MatchResult> match_low_cost(const std::vector<PublishedDaySeed>& published) const;
    std::vector<MatchResult> match_unlinkable(const CuckooFilter& filter,
                                              Timestamp publication_time) const;
    std::vector<MatchResult> match_hybrid(
        const std::vector<PublishedWindowSeed>& published) const;

    // Redactions are epoch indices (unlinkable) or window indices (hybrid).
    // Low-cost reseeds afterwards; unlinkable/hybrid delete uploaded seeds.
    UploadPayload build_upload(Timestamp contagion_start, Timestamp now,
                               const std::set<std::int64_t>& redactions = {});

    // Dummy payload of this device's variant; content is random, never any
    // real seed. Wire encoding pads all variants to the same length anyway.
    UploadPayload build_dummy_upload(Timestamp now);

    StorageReport storage_report() const;

    // Test/introspection access.
    const std::map<Bytes, ObservationGroup>& observations() const { return store_; }
    std::size_t own_seed_count() const;

private:
    void ensure_day_seed(DayIndex day);
    std::vector<std::int64_t> coarse_times_for_rx(Timestamp rx, bool windows) const;

    DeviceConfig config_;
    Rng rng_;

    // Own seeds per design. Low-cost keeps the hash chain for the retention
    // window; a fresh chain starts after each upload.
    std::vector<DaySeed> day_seeds_;
    std::vector<EpochSeed> epoch_seeds_;
    std::vector<WindowSeed> window_seeds_;

    // Shuffled broadcast schedules, keyed by day (low-cost) or window (hybrid).
    std::map<DayIndex, std::vector<EphID>> day_schedule_;
    std::map<WindowIndex, std::vector<EphID>> window_schedule_;

    std::map<Bytes, ObservationGroup> store_;
    std::size_t malformed_dropped_ = 0;
    Timestamp last_processed_download_ = 0;
    std::vector<RegionId> visited_regions_;
};

}  // namespace dp3t
