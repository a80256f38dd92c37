#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dp3t/bytes.hpp"
#include "dp3t/crypto_core.hpp"

namespace dp3t {

struct FilterParams {
    int fingerprint_bits = 45;       // f; default sized for ~6 bytes/item
    int slots_per_bucket = 4;        // b
    std::uint32_t bucket_count = 1;  // power of two

    void validate() const;
    std::size_t capacity() const {
        return static_cast<std::size_t>(bucket_count) * slots_per_bucket;
    }
    // Classic per-query false-positive bound 2b / 2^f.
    double fp_bound() const;
};

struct FilterTuning {
    std::size_t expected_items = 480;
    double target_fp_per_user_over_horizon = 1e-6;
    std::uint64_t queries_per_user_over_horizon = 1;
};

// Derives (f, b, bucket_count) such that fp_bound * queries stays within the
// target and the expected items fit at load factor <= 0.95. Throws if no
// f <= 64 can reach the target.
FilterParams tune_filter(const FilterTuning& tuning);

// Partial-key cuckoo filter over 32-byte hashed observations. Insert-only;
// the backend builds a fresh filter per download slot, so deletion is not
// supported. Immutable once published.
class CuckooFilter {
public:
    explicit CuckooFilter(FilterParams params);

    // False when the eviction chain (500 kicks) exhausts, which signals an
    // under-provisioned filter. The filter stays usable; the displaced
    // fingerprint is re-inserted so no earlier item is lost.
    bool insert(const HashedObservation& item);

    bool contains(const HashedObservation& item) const;

    const FilterParams& params() const { return params_; }
    std::size_t item_count() const { return item_count_; }
    double load_factor() const {
        return static_cast<double>(item_count_) / static_cast<double>(params_.capacity());
    }

    // Wire format (big-endian):
    //   "DP3TCF01" | version u16 | f u8 | b u8 | bucket_count u32 |
    //   item_count u32 | packed fingerprints (bucket-major, slot-minor,
    //   MSB-first, zero = empty) | SHA-256 over all preceding bytes.
    Bytes serialize() const;
    static CuckooFilter deserialize(std::span<const std::uint8_t> wire);

    // Size of the packed fingerprint array alone.
    std::size_t body_bytes() const { return packed_.size(); }

private:
    std::uint64_t read_slot(std::size_t bucket, std::size_t slot) const;
    void write_slot(std::size_t bucket, std::size_t slot, std::uint64_t fp);
    bool bucket_insert(std::size_t bucket, std::uint64_t fp);

    FilterParams params_;
    std::size_t item_count_ = 0;
    std::vector<std::uint8_t> packed_;
    std::uint64_t evict_state_;  // deterministic eviction-slot chooser
};

}  // namespace dp3t
