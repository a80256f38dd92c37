#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "dp3t/secret_sharing.hpp"

using namespace dp3t;

namespace {

EphID random_ephid(Rng& rng) {
    EphID e;
    rng.fill(e.bytes.data(), e.bytes.size());
    return e;
}

// Brute-force oracle: P[Bin(n,p) >= k] by direct pmf recursion.
double binom_tail_recursive(double p, int k, int n) {
    if (k <= 0) return 1.0;
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return k <= n ? 1.0 : 0.0;
    // pmf(0) = q^n, pmf(j+1) = pmf(j) * (n-j)/(j+1) * p/q
    long double pmf = std::pow(1.0L - p, n);
    long double cdf_below = 0.0L;
    for (int j = 0; j < k; ++j) {
        cdf_below += pmf;
        pmf *= static_cast<long double>(n - j) / (j + 1) * p / (1.0L - p);
    }
    return static_cast<double>(1.0L - cdf_below);
}

}  // namespace

TEST_CASE("degenerate 1-of-1 scheme returns the EphID") {
    Rng rng(1);
    EphID e = random_ephid(rng);
    SharingParams params{1, 1};
    auto shares = split(e, 5, params, rng);
    REQUIRE(shares.size() == 1);
    auto back = reconstruct(shares, params);
    REQUIRE(back.has_value());
    CHECK(*back == e);
}

TEST_CASE("every k-subset reconstructs at n=6, k=3 over 100 random EphIDs") {
    Rng rng(2);
    SharingParams params{3, 6};
    for (int trial = 0; trial < 100; ++trial) {
        EphID e = random_ephid(rng);
        auto shares = split(e, trial, params, rng);
        REQUIRE(shares.size() == 6);
        for (int a = 0; a < 6; ++a)
            for (int b = a + 1; b < 6; ++b)
                for (int c = b + 1; c < 6; ++c) {
                    auto got = reconstruct({shares[a], shares[b], shares[c]}, params);
                    REQUIRE(got.has_value());
                    CHECK(*got == e);
                }
        // Full set agrees with the subsets.
        CHECK(*reconstruct(shares, params) == e);
    }
}

TEST_CASE("fewer than k shares is insufficient") {
    Rng rng(3);
    SharingParams params{3, 6};
    auto shares = split(random_ephid(rng), 0, params, rng);
    CHECK_FALSE(reconstruct({shares[0], shares[1]}, params).has_value());
    CHECK_FALSE(reconstruct({}, params).has_value());
}

TEST_CASE("mixed epochs and duplicate indices are input errors") {
    Rng rng(4);
    SharingParams params{2, 4};
    auto a = split(random_ephid(rng), 10, params, rng);
    auto b = split(random_ephid(rng), 11, params, rng);
    CHECK_THROWS_AS(reconstruct({a[0], b[1]}, params), std::invalid_argument);
    CHECK_THROWS_AS(reconstruct({a[0], a[0]}, params), std::invalid_argument);
}

TEST_CASE("re-splitting generates fresh shares") {
    Rng rng(5);
    SharingParams params{3, 6};
    EphID e = random_ephid(rng);
    for (int trial = 0; trial < 200; ++trial) {
        auto s1 = split(e, 7, params, rng);
        auto s2 = split(e, 7, params, rng);
        int equal_payloads = 0;
        for (int i = 0; i < 6; ++i)
            if (s1[i].value == s2[i].value) ++equal_payloads;
        // A collision on a 16-byte share value is negligible.
        CHECK(equal_payloads == 0);
    }
}

TEST_CASE("share payload is 17 bytes: index then value") {
    Rng rng(6);
    SharingParams params{2, 3};
    auto shares = split(random_ephid(rng), 0, params, rng);
    auto payload = shares[1].payload();
    CHECK(payload.size() == 17);
    CHECK(payload[0] == 2);
    CHECK(std::equal(payload.begin() + 1, payload.end(), shares[1].value.begin()));
}

TEST_CASE("k-1 shares of a 1-byte secret are uniform regardless of the secret") {
    // Chi-square over the first byte of a single share, for two fixed secrets.
    Rng rng(7);
    SharingParams params{2, 2};
    const int samples = 100'000;
    for (std::uint8_t secret_byte : {std::uint8_t{0x00}, std::uint8_t{0xd7}}) {
        EphID e;
        e.bytes[0] = secret_byte;
        std::array<int, 256> counts{};
        for (int i = 0; i < samples; ++i) {
            auto shares = split(e, 0, params, rng);
            counts[shares[0].value[0]]++;
        }
        const double expected = samples / 256.0;
        double chi2 = 0;
        for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
        // 255 dof, significance 0.001 -> critical value ~330.5
        CHECK(chi2 < 330.5);
    }
}

TEST_CASE("reception probability edge cases and oracle agreement") {
    CHECK(reception_probability(1.0, 100, 1200) == 1.0);
    CHECK(reception_probability(0.0, 1, 1200) == 0.0);
    CHECK(reception_probability(0.5, 0, 10) == 1.0);
    CHECK(reception_probability(0.5, 11, 10) == 0.0);

    for (double p : {0.05, 0.1, 0.5, 0.9, 0.999}) {
        for (int k : {1, 10, 100, 600, 1200}) {
            CHECK(reception_probability(p, k, 1200) ==
                  doctest::Approx(binom_tail_recursive(p, k, 1200)).epsilon(1e-9));
        }
    }
}

TEST_CASE("reception probability is monotone in p and duration, anti-monotone in k") {
    double base = reception_probability(0.5, 210, 400);
    CHECK(reception_probability(0.6, 210, 400) > base);
    CHECK(reception_probability(0.5, 210, 500) > base);
    CHECK(reception_probability(0.5, 230, 400) < base);
}

TEST_CASE("threshold tuner separates 5m receivers from 16m eavesdroppers") {
    // Default channel model endpoints: p = 0.9 per beacon at 5 m, 0.1 at 16 m.
    int k = tune_share_threshold(0.9, 0.1, kSharesPerContact);
    CHECK(reception_probability(0.9, k, kSharesPerContact) > 0.999);
    CHECK(reception_probability(0.1, k, kSharesPerContact) < 0.01);
    CHECK(k > 1);
    // Smallest such k: k-1 must violate the eavesdropper bound.
    CHECK(reception_probability(0.1, k - 1, kSharesPerContact) >= 0.01);
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS((SharingParams{0, 1}).validate(), std::invalid_argument);
    CHECK_THROWS_AS((SharingParams{5, 4}).validate(), std::invalid_argument);
    CHECK_THROWS_AS((SharingParams{3, 256}).validate(), std::invalid_argument);
    SharingParams{3, 255}.validate();
}
