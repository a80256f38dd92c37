#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dp3t/bytes.hpp"
#include "dp3t/rng.hpp"

namespace dp3t {

using DayIndex = std::int64_t;     // UTC days since the Unix epoch
using EpochIndex = std::int64_t;   // L-minute intervals since the Unix epoch
using WindowIndex = std::int64_t;  // window_minutes intervals since the Unix epoch
using Timestamp = std::int64_t;    // UTC seconds since the Unix epoch

inline constexpr std::size_t kEphIdLen = 16;
inline constexpr std::size_t kDaySeedLen = 32;
inline constexpr std::size_t kEpochSeedLen = 32;
inline constexpr std::size_t kWindowSeedLen = 16;
inline constexpr std::size_t kDigestLen = 32;

// Secret day seed SK_t for the low-cost design, hash-chained forward each day.
struct DaySeed {
    std::array<std::uint8_t, kDaySeedLen> bytes{};
    DayIndex day = 0;

    friend bool operator==(const DaySeed&, const DaySeed&) = default;
};

// Random per-epoch seed for the unlinkable design.
struct EpochSeed {
    std::array<std::uint8_t, kEpochSeedLen> bytes{};
    EpochIndex epoch = 0;

    friend bool operator==(const EpochSeed&, const EpochSeed&) = default;
};

// Random per-window seed for the hybrid design.
struct WindowSeed {
    std::array<std::uint8_t, kWindowSeedLen> bytes{};
    WindowIndex window = 0;

    friend bool operator==(const WindowSeed&, const WindowSeed&) = default;
};

// 16-byte ephemeral broadcast identifier.
struct EphID {
    std::array<std::uint8_t, kEphIdLen> bytes{};

    friend auto operator<=>(const EphID&, const EphID&) = default;
};

// 32-byte digest of (EphID || epoch); the stored/published form in the
// unlinkable design.
struct HashedObservation {
    std::array<std::uint8_t, kDigestLen> bytes{};

    friend auto operator<=>(const HashedObservation&, const HashedObservation&) = default;
};

// Shared timing parameters. Epoch/window/day indices all count from the Unix
// epoch, UTC, which every party agrees on.
struct EpochParams {
    int epoch_minutes = 15;    // L
    int window_minutes = 240;  // hybrid only; integer multiple of L

    void validate() const;  // throws std::invalid_argument
    int epochs_per_day() const { return (24 * 60) / epoch_minutes; }
    int epochs_per_window() const { return window_minutes / epoch_minutes; }
    int windows_per_day() const { return (24 * 60) / window_minutes; }

    EpochIndex epoch_of(Timestamp t) const { return t / (60 * epoch_minutes); }
    WindowIndex window_of(Timestamp t) const { return t / (60 * window_minutes); }
    Timestamp epoch_start(EpochIndex i) const { return i * 60 * epoch_minutes; }
    Timestamp window_start(WindowIndex w) const { return w * 60 * window_minutes; }
};

inline DayIndex day_of(Timestamp t) { return t / 86400; }
inline Timestamp day_start(DayIndex d) { return d * 86400; }

// SHA-256 of arbitrary bytes.
std::array<std::uint8_t, kDigestLen> sha256(std::span<const std::uint8_t> data);

// SK_t = H(SK_{t-1})
DaySeed rotate_day_seed(const DaySeed& prev);

DaySeed random_day_seed(DayIndex day, Rng& rng);
EpochSeed random_epoch_seed(EpochIndex epoch, Rng& rng);
WindowSeed random_window_seed(WindowIndex window, Rng& rng);

// EphID_1 || ... || EphID_n = PRG(PRF(SK_t, "broadcast key")), n = (24*60)/L.
std::vector<EphID> derive_day_ephids(const DaySeed& seed, const EpochParams& params);

// EphID_i = LEFTMOST128(H(seed_i))
EphID derive_unlinkable_ephid(const EpochSeed& seed);

// m EphIDs from PRG(PRF(seed_w, "DP3T-HYBRID")), m = window_minutes / L.
std::vector<EphID> derive_window_ephids(const WindowSeed& seed, const EpochParams& params);

// H(EphID || i) with i as a 4-byte big-endian unsigned integer.
HashedObservation hash_observation(const EphID& ephid, EpochIndex epoch);

// The value the backend inserts into the Cuckoo filter for an uploaded
// (i, seed_i): identical by construction to
// hash_observation(derive_unlinkable_ephid(seed), seed.epoch).
HashedObservation cuckoo_entry(const EpochSeed& seed);

// Uniformly random assignment of EphIDs to the slots of one day/window.
// Slot s of the result is broadcast for the s-th L-minute interval.
std::vector<EphID> shuffle_broadcast_order(std::vector<EphID> ephids, Rng& rng);

}  // namespace dp3t
