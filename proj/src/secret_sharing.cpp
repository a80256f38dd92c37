#include "dp3t/secret_sharing.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace dp3t {

namespace {

// GF(2^8) with the AES reduction polynomial x^8 + x^4 + x^3 + x + 1.
std::uint8_t gf_mul(std::uint8_t a, std::uint8_t b) {
    std::uint8_t p = 0;
    while (b) {
        if (b & 1) p ^= a;
        bool hi = a & 0x80;
        a = static_cast<std::uint8_t>(a << 1);
        if (hi) a ^= 0x1b;
        b >>= 1;
    }
    return p;
}

std::uint8_t gf_pow(std::uint8_t a, int e) {
    std::uint8_t r = 1;
    while (e) {
        if (e & 1) r = gf_mul(r, a);
        a = gf_mul(a, a);
        e >>= 1;
    }
    return r;
}

std::uint8_t gf_inv(std::uint8_t a) {
    if (a == 0) throw std::domain_error("GF(2^8) inverse of zero");
    return gf_pow(a, 254);
}

}  // namespace

void SharingParams::validate() const {
    if (required_shares < 1) throw std::invalid_argument("k must be >= 1");
    if (total_shares < required_shares) throw std::invalid_argument("n must be >= k");
    if (total_shares > 255) throw std::invalid_argument("n must be <= 255 over GF(2^8)");
}

std::array<std::uint8_t, kEphIdLen + 1> Share::payload() const {
    std::array<std::uint8_t, kEphIdLen + 1> out{};
    out[0] = index;
    std::copy(value.begin(), value.end(), out.begin() + 1);
    return out;
}

std::vector<Share> split(const EphID& ephid, EpochIndex epoch, const SharingParams& params,
                         Rng& rng) {
    params.validate();
    const int k = params.required_shares;
    const int n = params.total_shares;

    // Fresh random coefficients per call: retransmission never reuses shares.
    std::vector<std::array<std::uint8_t, kEphIdLen>> coeffs(k - 1);
    for (auto& c : coeffs) rng.fill(c.data(), c.size());

    std::vector<Share> shares(n);
    for (int x = 1; x <= n; ++x) {
        Share& s = shares[x - 1];
        s.epoch = epoch;
        s.index = static_cast<std::uint8_t>(x);
        for (std::size_t byte = 0; byte < kEphIdLen; ++byte) {
            // Horner evaluation of secret + c_1 x + ... + c_{k-1} x^{k-1}.
            std::uint8_t acc = 0;
            for (int d = k - 2; d >= 0; --d)
                acc = static_cast<std::uint8_t>(gf_mul(acc, s.index) ^ coeffs[d][byte]);
            s.value[byte] = static_cast<std::uint8_t>(gf_mul(acc, s.index) ^ ephid.bytes[byte]);
        }
    }
    return shares;
}

std::optional<EphID> reconstruct(const std::vector<Share>& shares, const SharingParams& params) {
    params.validate();
    if (shares.empty()) return std::nullopt;

    std::set<std::uint8_t> indices;
    for (const auto& s : shares) {
        if (s.epoch != shares.front().epoch)
            throw std::invalid_argument("shares from mixed epochs");
        if (s.index == 0) throw std::invalid_argument("share index must be nonzero");
        if (!indices.insert(s.index).second)
            throw std::invalid_argument("duplicate share index");
    }
    if (static_cast<int>(shares.size()) < params.required_shares) return std::nullopt;

    // Any k shares determine the polynomial; use the first k.
    const int k = params.required_shares;
    EphID out;
    for (int i = 0; i < k; ++i) {
        // Lagrange basis at x=0: prod_{j!=i} x_j / (x_i ^ x_j)  (GF addition is XOR).
        std::uint8_t basis = 1;
        for (int j = 0; j < k; ++j) {
            if (i == j) continue;
            basis = gf_mul(basis, gf_mul(shares[j].index,
                                         gf_inv(shares[i].index ^ shares[j].index)));
        }
        for (std::size_t byte = 0; byte < kEphIdLen; ++byte)
            out.bytes[byte] ^= gf_mul(shares[i].value[byte], basis);
    }
    return out;
}

double reception_probability(double p, int k, int n_total) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("probability out of range");
    if (k < 0 || n_total < 0) throw std::invalid_argument("negative count");
    if (k == 0) return 1.0;
    if (k > n_total) return 0.0;
    if (p == 0.0) return 0.0;
    if (p == 1.0) return 1.0;

    const double lp = std::log(p);
    const double lq = std::log1p(-p);
    double tail = 0.0;
    for (int j = k; j <= n_total; ++j) {
        double lterm = std::lgamma(n_total + 1.0) - std::lgamma(j + 1.0) -
                       std::lgamma(n_total - j + 1.0) + j * lp + (n_total - j) * lq;
        tail += std::exp(lterm);
    }
    return std::min(tail, 1.0);
}

int tune_share_threshold(double p_near, double p_far, int total_transmitted,
                         double p_near_target, double p_far_target) {
    for (int k = 1; k <= total_transmitted; ++k) {
        if (reception_probability(p_far, k, total_transmitted) < p_far_target) {
            if (reception_probability(p_near, k, total_transmitted) > p_near_target) return k;
            break;  // tails are monotone in k: larger k only hurts the legitimate receiver
        }
    }
    throw std::runtime_error("no share threshold satisfies both probability targets");
}

}  // namespace dp3t
