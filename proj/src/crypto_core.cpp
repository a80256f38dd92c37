#include "dp3t/crypto_core.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <stdexcept>
#include <string_view>

namespace dp3t {

namespace {

constexpr std::string_view kBroadcastKey = "broadcast key";
constexpr std::string_view kHybridKey = "DP3T-HYBRID";

std::array<std::uint8_t, 32> hmac_sha256(std::span<const std::uint8_t> key,
                                         std::string_view message) {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()),
              reinterpret_cast<const unsigned char*>(message.data()), message.size(),
              out.data(), &len) ||
        len != out.size()) {
        throw std::runtime_error("HMAC-SHA256 failed");
    }
    return out;
}

// AES-128-CTR keystream with zero IV, keyed by the leftmost 16 bytes of the
// PRF output.
Bytes prg_keystream(const std::array<std::uint8_t, 32>& prf_out, std::size_t len) {
    std::array<std::uint8_t, 16> key{};
    std::copy(prf_out.begin(), prf_out.begin() + 16, key.begin());
    std::array<std::uint8_t, 16> iv{};

    EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
    if (!ctx) throw std::runtime_error("EVP_CIPHER_CTX_new failed");
    Bytes out(len);
    Bytes zeros(len, 0);
    int outl = 0;
    bool ok = EVP_EncryptInit_ex(ctx, EVP_aes_128_ctr(), nullptr, key.data(), iv.data()) &&
              EVP_EncryptUpdate(ctx, out.data(), &outl, zeros.data(), static_cast<int>(len)) &&
              outl == static_cast<int>(len);
    EVP_CIPHER_CTX_free(ctx);
    if (!ok) throw std::runtime_error("AES-128-CTR keystream failed");
    return out;
}

std::vector<EphID> chunk_ephids(const Bytes& keystream, std::size_t n) {
    std::vector<EphID> out(n);
    for (std::size_t i = 0; i < n; ++i)
        std::copy(keystream.begin() + i * kEphIdLen, keystream.begin() + (i + 1) * kEphIdLen,
                  out[i].bytes.begin());
    return out;
}

}  // namespace

void EpochParams::validate() const {
    if (epoch_minutes <= 0) throw std::invalid_argument("epoch_minutes must be positive");
    if ((24 * 60) % epoch_minutes != 0)
        throw std::invalid_argument("epoch_minutes must divide 24*60");
    if (window_minutes <= 0) throw std::invalid_argument("window_minutes must be positive");
    if (window_minutes % epoch_minutes != 0)
        throw std::invalid_argument("window_minutes must be a multiple of epoch_minutes");
}

std::array<std::uint8_t, kDigestLen> sha256(std::span<const std::uint8_t> data) {
    std::array<std::uint8_t, kDigestLen> out{};
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) ||
        len != kDigestLen) {
        throw std::runtime_error("SHA-256 failed");
    }
    return out;
}

DaySeed rotate_day_seed(const DaySeed& prev) {
    return DaySeed{sha256(prev.bytes), prev.day + 1};
}

DaySeed random_day_seed(DayIndex day, Rng& rng) {
    DaySeed s;
    s.day = day;
    rng.fill(s.bytes.data(), s.bytes.size());
    return s;
}

EpochSeed random_epoch_seed(EpochIndex epoch, Rng& rng) {
    EpochSeed s;
    s.epoch = epoch;
    rng.fill(s.bytes.data(), s.bytes.size());
    return s;
}

WindowSeed random_window_seed(WindowIndex window, Rng& rng) {
    WindowSeed s;
    s.window = window;
    rng.fill(s.bytes.data(), s.bytes.size());
    return s;
}

std::vector<EphID> derive_day_ephids(const DaySeed& seed, const EpochParams& params) {
    params.validate();
    const std::size_t n = static_cast<std::size_t>(params.epochs_per_day());
    const auto prf = hmac_sha256(seed.bytes, kBroadcastKey);
    return chunk_ephids(prg_keystream(prf, n * kEphIdLen), n);
}

EphID derive_unlinkable_ephid(const EpochSeed& seed) {
    const auto digest = sha256(seed.bytes);
    EphID id;
    std::copy(digest.begin(), digest.begin() + kEphIdLen, id.bytes.begin());
    return id;
}

std::vector<EphID> derive_window_ephids(const WindowSeed& seed, const EpochParams& params) {
    params.validate();
    const std::size_t m = static_cast<std::size_t>(params.epochs_per_window());
    const auto prf = hmac_sha256(seed.bytes, kHybridKey);
    return chunk_ephids(prg_keystream(prf, m * kEphIdLen), m);
}

HashedObservation hash_observation(const EphID& ephid, EpochIndex epoch) {
    Bytes buf(ephid.bytes.begin(), ephid.bytes.end());
    put_u32_be(buf, static_cast<std::uint32_t>(epoch));
    return HashedObservation{sha256(buf)};
}

HashedObservation cuckoo_entry(const EpochSeed& seed) {
    return hash_observation(derive_unlinkable_ephid(seed), seed.epoch);
}

std::vector<EphID> shuffle_broadcast_order(std::vector<EphID> ephids, Rng& rng) {
    if (ephids.empty()) throw std::invalid_argument("cannot shuffle an empty EphID list");
    shuffle(ephids, rng);
    return ephids;
}

}  // namespace dp3t
