#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dp3t/cuckoo_filter.hpp"
#include "dp3t/device.hpp"

namespace dp3t {

// Upload wire formats, big-endian throughout. Every variant is padded to a
// fixed per-tag size so payload length reveals only the variant.
//   0x01 | 32-byte SK | u16 day
//   0x02 | u16 count | count x (u32 epoch | 32-byte seed)
//   0x03 | u16 count | count x (u32 window | 16-byte seed)
// followed by u8 region-count | count x (u8 len | ASCII), zero-padded.
inline constexpr std::uint8_t kTagLowCost = 0x01;
inline constexpr std::uint8_t kTagUnlinkable = 0x02;
inline constexpr std::uint8_t kTagHybrid = 0x03;
inline constexpr std::size_t kMaxUploadRegions = 8;

std::size_t upload_wire_size(Design design, const EpochParams& params, int retention_days);
Bytes encode_upload(const UploadPayload& payload, const EpochParams& params,
                    int retention_days);
// Throws std::invalid_argument on any malformed input.
UploadPayload decode_upload(std::span<const std::uint8_t> wire, const EpochParams& params,
                            int retention_days);

// An upload as received by the server. The dummy property is carried by the
// (out of scope) authorisation channel, never by the payload bytes.
struct UploadEnvelope {
    Bytes wire;
    bool authorized = true;  // dummy uploads lack a valid authorisation
    Timestamp received_at = 0;
};

struct PublishedBatch {
    std::int64_t slot_id = 0;
    Design design = Design::low_cost;
    Bytes body;
    Timestamp publication_time = 0;
};

struct BackendConfig {
    Design design = Design::low_cost;
    RegionId region = "ZZ";
    EpochParams params{};
    int slot_minutes = 120;
    int retention_days = 14;
    int fingerprint_bits = 45;  // unlinkable publication width
    std::string data_dir;       // empty: in-memory only

    void validate() const;
    std::int64_t slot_seconds() const { return std::int64_t{slot_minutes} * 60; }
};

// Converts a decoded payload into this backend's download record form:
// 34-byte (SK | day) for low-cost, 32-byte filter entries for unlinkable,
// 20-byte (window | seed) for hybrid. Cross-protocol: low-cost and hybrid
// seeds expand to unlinkable filter entries (every derived EphID paired with
// every epoch of its day or window, since broadcast order is shuffled).
// nullopt when the conversion is impossible.
std::optional<std::vector<Bytes>> extract_records(const UploadPayload& payload, Design dst,
                                                  const EpochParams& params,
                                                  Timestamp received_at);

class Backend {
public:
    Backend(BackendConfig config, Timestamp start_time);

    struct Ack {
        bool accepted = false;
        Bytes response;  // byte-identical for every accepted upload
    };

    Ack accept_upload(const UploadEnvelope& envelope);

    // Publishes the batch for the oldest closed, unpublished slot. nullopt
    // until `now` has crossed that slot's boundary. Empty slots still
    // publish an empty-bodied batch.
    std::optional<PublishedBatch> publish_slot(Timestamp now);
    std::vector<PublishedBatch> publish_due(Timestamp now);

    // Batches with slot_id > since_slot, oldest first. Throws on a region
    // this server does not host.
    std::vector<PublishedBatch> fetch_batches(const RegionId& region,
                                              std::int64_t since_slot) const;

    const BackendConfig& config() const { return config_; }
    std::int64_t slot_of(Timestamp t) const { return t / config_.slot_seconds(); }
    std::size_t pending_records() const { return pending_.size(); }
    const std::vector<PublishedBatch>& published() const { return batches_; }

private:
    void queue_records(const UploadPayload& payload, Timestamp received_at);
    void log_line(const std::string& line);
    void recover();
    Bytes build_body(const std::vector<Bytes>& records) const;

    BackendConfig config_;
    std::int64_t next_slot_;
    // Record bytes keyed by content digest: publication order is a
    // deterministic function of content, never of arrival.
    std::map<std::array<std::uint8_t, 32>, Bytes> pending_;
    std::map<std::array<std::uint8_t, 32>, std::int64_t> pending_slot_;
    std::set<std::array<std::uint8_t, 32>> seen_payloads_;
    std::vector<PublishedBatch> batches_;
};

// In-process federation of regional servers: delivers a real upload to its
// home region and every visited region, content-addressed so duplicate
// deliveries are idempotent.
class Federation {
public:
    void add_region(Backend* backend);

    struct Receipt {
        RegionId region;
        std::string status;  // delivered | duplicate | unsupported | retry-queued
    };

    std::vector<Receipt> submit(const RegionId& home, const UploadEnvelope& envelope);
    std::vector<Receipt> flush_retries();

private:
    Receipt deliver(const RegionId& region, const UploadEnvelope& envelope);

    std::map<RegionId, Backend*> regions_;
    std::vector<std::pair<RegionId, UploadEnvelope>> retry_queue_;
};

}  // namespace dp3t
