#include "dp3t/cuckoo_filter.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace dp3t {

namespace {

constexpr char kMagic[8] = {'D', 'P', '3', 'T', 'C', 'F', '0', '1'};
constexpr std::uint16_t kVersion = 1;
constexpr int kMaxKicks = 500;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t load_le64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace

void FilterParams::validate() const {
    if (fingerprint_bits < 1 || fingerprint_bits > 64)
        throw std::invalid_argument("fingerprint_bits must be in [1, 64]");
    if (slots_per_bucket < 1 || slots_per_bucket > 8)
        throw std::invalid_argument("slots_per_bucket must be in [1, 8]");
    if (bucket_count == 0 || (bucket_count & (bucket_count - 1)) != 0)
        throw std::invalid_argument("bucket_count must be a power of two");
}

double FilterParams::fp_bound() const {
    return 2.0 * slots_per_bucket * std::pow(2.0, -fingerprint_bits);
}

FilterParams tune_filter(const FilterTuning& tuning) {
    if (tuning.expected_items == 0 || tuning.queries_per_user_over_horizon == 0 ||
        tuning.target_fp_per_user_over_horizon <= 0 ||
        tuning.target_fp_per_user_over_horizon >= 1)
        throw std::invalid_argument("invalid filter tuning");

    FilterParams p;
    p.slots_per_bucket = 4;
    const double per_query_target = tuning.target_fp_per_user_over_horizon /
                                    static_cast<double>(tuning.queries_per_user_over_horizon);
    int f = 1;
    while (f <= 64 && 2.0 * p.slots_per_bucket * std::pow(2.0, -f) > per_query_target) ++f;
    if (f > 64)
        throw std::invalid_argument("false-positive target unreachable with f <= 64");
    p.fingerprint_bits = f;

    std::uint32_t buckets = 1;
    while (static_cast<double>(buckets) * p.slots_per_bucket * 0.95 <
           static_cast<double>(tuning.expected_items)) {
        if (buckets > (1u << 30)) throw std::invalid_argument("filter too large");
        buckets <<= 1;
    }
    p.bucket_count = buckets;
    p.validate();
    return p;
}

CuckooFilter::CuckooFilter(FilterParams params)
    : params_(params), evict_state_(0x6370726f78696d79ULL) {
    params_.validate();
    const std::size_t bits = params_.capacity() * params_.fingerprint_bits;
    packed_.assign((bits + 7) / 8, 0);
}

std::uint64_t CuckooFilter::read_slot(std::size_t bucket, std::size_t slot) const {
    const int f = params_.fingerprint_bits;
    std::size_t bitpos = (bucket * params_.slots_per_bucket + slot) * f;
    std::uint64_t v = 0;
    for (int i = 0; i < f; ++i, ++bitpos) {
        v = (v << 1) | ((packed_[bitpos >> 3] >> (7 - (bitpos & 7))) & 1);
    }
    return v;
}

void CuckooFilter::write_slot(std::size_t bucket, std::size_t slot, std::uint64_t fp) {
    const int f = params_.fingerprint_bits;
    std::size_t bitpos = (bucket * params_.slots_per_bucket + slot) * f;
    for (int i = f - 1; i >= 0; --i, ++bitpos) {
        std::uint8_t bit = static_cast<std::uint8_t>((fp >> i) & 1);
        std::uint8_t mask = static_cast<std::uint8_t>(1 << (7 - (bitpos & 7)));
        if (bit)
            packed_[bitpos >> 3] |= mask;
        else
            packed_[bitpos >> 3] &= static_cast<std::uint8_t>(~mask);
    }
}

bool CuckooFilter::bucket_insert(std::size_t bucket, std::uint64_t fp) {
    for (int s = 0; s < params_.slots_per_bucket; ++s) {
        if (read_slot(bucket, s) == 0) {
            write_slot(bucket, s, fp);
            return true;
        }
    }
    return false;
}

bool CuckooFilter::insert(const HashedObservation& item) {
    const std::uint64_t index_mask = params_.bucket_count - 1;
    const std::uint64_t fp_mask =
        params_.fingerprint_bits == 64 ? ~0ULL : (1ULL << params_.fingerprint_bits) - 1;

    // Bucket index and fingerprint come from disjoint halves of the digest,
    // with an extra mix so they stay independent hashes of the item.
    std::size_t i1 = load_le64(item.bytes.data()) & index_mask;
    std::uint64_t fp = splitmix64(load_le64(item.bytes.data() + 16)) & fp_mask;
    if (fp == 0) fp = 1;

    std::size_t bucket = i1;
    for (int kick = 0; kick <= kMaxKicks; ++kick) {
        if (bucket_insert(bucket, fp)) {
            ++item_count_;
            return true;
        }
        std::size_t alt = (bucket ^ splitmix64(fp)) & index_mask;
        if (kick == 0 && bucket_insert(alt, fp)) {
            ++item_count_;
            return true;
        }
        // Evict a pseudo-random victim slot and continue from its alternate.
        evict_state_ = splitmix64(evict_state_);
        std::size_t victim =
            static_cast<std::size_t>(evict_state_ % params_.slots_per_bucket);
        std::uint64_t displaced = read_slot(bucket, victim);
        write_slot(bucket, victim, fp);
        fp = displaced;
        bucket = (bucket ^ splitmix64(fp)) & index_mask;
    }
    // Chain exhausted: re-home the displaced fingerprint so previously
    // inserted items keep their membership, then report failure.
    std::size_t alt = (bucket ^ splitmix64(fp)) & index_mask;
    if (!bucket_insert(bucket, fp)) bucket_insert(alt, fp);
    return false;
}

bool CuckooFilter::contains(const HashedObservation& item) const {
    const std::uint64_t index_mask = params_.bucket_count - 1;
    const std::uint64_t fp_mask =
        params_.fingerprint_bits == 64 ? ~0ULL : (1ULL << params_.fingerprint_bits) - 1;

    std::size_t i1 = load_le64(item.bytes.data()) & index_mask;
    std::uint64_t fp = splitmix64(load_le64(item.bytes.data() + 16)) & fp_mask;
    if (fp == 0) fp = 1;
    std::size_t i2 = (i1 ^ splitmix64(fp)) & index_mask;

    for (int s = 0; s < params_.slots_per_bucket; ++s) {
        if (read_slot(i1, s) == fp) return true;
        if (read_slot(i2, s) == fp) return true;
    }
    return false;
}

Bytes CuckooFilter::serialize() const {
    Bytes out;
    out.reserve(20 + packed_.size() + kDigestLen);
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u16_be(out, kVersion);
    out.push_back(static_cast<std::uint8_t>(params_.fingerprint_bits));
    out.push_back(static_cast<std::uint8_t>(params_.slots_per_bucket));
    put_u32_be(out, params_.bucket_count);
    put_u32_be(out, static_cast<std::uint32_t>(item_count_));
    out.insert(out.end(), packed_.begin(), packed_.end());
    auto digest = sha256(out);
    out.insert(out.end(), digest.begin(), digest.end());
    return out;
}

CuckooFilter CuckooFilter::deserialize(std::span<const std::uint8_t> wire) {
    if (wire.size() < 20 + kDigestLen) throw std::invalid_argument("cuckoo filter: truncated");
    if (std::memcmp(wire.data(), kMagic, 8) != 0)
        throw std::invalid_argument("cuckoo filter: bad magic");
    if (get_u16_be(wire, 8) != kVersion)
        throw std::invalid_argument("cuckoo filter: unsupported version");

    FilterParams p;
    p.fingerprint_bits = wire[10];
    p.slots_per_bucket = wire[11];
    p.bucket_count = get_u32_be(wire, 12);
    if (p.bucket_count == 0 || (p.bucket_count & (p.bucket_count - 1)) != 0)
        throw std::invalid_argument("cuckoo filter: bucket_count not a power of two");
    p.validate();

    const std::size_t bits = p.capacity() * p.fingerprint_bits;
    const std::size_t body = (bits + 7) / 8;
    if (wire.size() != 20 + body + kDigestLen)
        throw std::invalid_argument("cuckoo filter: length mismatch");

    auto digest = sha256(wire.subspan(0, 20 + body));
    if (!std::equal(digest.begin(), digest.end(), wire.begin() + 20 + body))
        throw std::invalid_argument("cuckoo filter: integrity digest mismatch");

    CuckooFilter f(p);
    f.item_count_ = get_u32_be(wire, 16);
    if (f.item_count_ > p.capacity())
        throw std::invalid_argument("cuckoo filter: item_count exceeds capacity");
    std::copy(wire.begin() + 20, wire.begin() + 20 + body, f.packed_.begin());
    return f;
}

}  // namespace dp3t
