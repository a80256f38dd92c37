#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dp3t/crypto_core.hpp"
#include "dp3t/rng.hpp"

namespace dp3t {

// k-of-n spreading of one EphID across beacon-sized shares. Shamir's scheme
// over GF(2^8), applied bytewise: 16 parallel polynomials of degree k-1, the
// share index is the x-coordinate. GF(2^8) caps n at 255 distinct indices.
struct SharingParams {
    int required_shares = 3;   // k
    int total_shares = 6;      // n, shares generated per epoch (<= 255)

    void validate() const;
};

struct Share {
    EpochIndex epoch = 0;
    std::uint8_t index = 0;                       // x-coordinate, 1..n
    std::array<std::uint8_t, kEphIdLen> value{};  // one byte per EphID byte

    // 17-byte beacon payload: index || value.
    std::array<std::uint8_t, kEphIdLen + 1> payload() const;
};

std::vector<Share> split(const EphID& ephid, EpochIndex epoch, const SharingParams& params,
                         Rng& rng);

// Lagrange interpolation at x = 0 per byte. nullopt with fewer than k shares;
// throws on mixed epochs or duplicate indices.
std::optional<EphID> reconstruct(const std::vector<Share>& shares, const SharingParams& params);

// P[Bin(n_total, p) >= k]: probability that a receiver hearing n_total share
// transmissions, each independently with probability p, can reconstruct.
// Exact summation.
double reception_probability(double per_beacon_prob, int required_shares, int total_transmitted);

// Beacon cadence used for the eavesdropping analysis: one share per beacon,
// every 250 ms, so a 5-minute contact carries 1200 shares.
inline constexpr int kBeaconIntervalMs = 250;
inline constexpr int kContactSeconds = 300;
inline constexpr int kSharesPerContact = kContactSeconds * 1000 / kBeaconIntervalMs;  // 1200

// Smallest k such that a legitimate receiver (per-beacon probability p_near)
// reconstructs with probability > p_near_target while a distant eavesdropper
// (p_far) stays below p_far_target, over n_total transmitted shares.
// Throws if no such k exists.
int tune_share_threshold(double p_near, double p_far, int total_transmitted,
                         double p_near_target = 0.999, double p_far_target = 0.01);

}  // namespace dp3t
