#include "dp3t/backend.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dp3t {

namespace {

constexpr std::size_t kRegionBlockMax = 1 + kMaxUploadRegions * 9;  // count + 8 x (len | 8 B)
constexpr std::size_t kLowCostRecordLen = 34;
constexpr std::size_t kUnlinkableEntryLen = 32;
constexpr std::size_t kHybridRecordLen = 20;

std::size_t max_seed_count(Design design, const EpochParams& params, int retention_days) {
    switch (design) {
        case Design::low_cost: return 1;
        case Design::unlinkable:
            return static_cast<std::size_t>(retention_days) * params.epochs_per_day();
        case Design::hybrid:
            return static_cast<std::size_t>(retention_days) * params.windows_per_day();
    }
    throw std::invalid_argument("unknown design");
}

void append_regions(Bytes& out, const std::vector<RegionId>& regions) {
    if (regions.size() > kMaxUploadRegions)
        throw std::invalid_argument("too many visited regions");
    out.push_back(static_cast<std::uint8_t>(regions.size()));
    for (const auto& r : regions) {
        validate_region(r);
        out.push_back(static_cast<std::uint8_t>(r.size()));
        out.insert(out.end(), r.begin(), r.end());
    }
}

std::array<std::uint8_t, 32> digest_of(const Bytes& data) { return sha256(data); }

// Filter entries covering every (EphID, epoch) pairing of one broadcast
// interval: the sender shuffles its schedule, so the receive epoch of any
// derived EphID is unknown to the server.
void cross_product_entries(std::vector<Bytes>& out, const std::vector<EphID>& ephids,
                           EpochIndex first_epoch, int epoch_count) {
    for (const auto& e : ephids)
        for (int k = 0; k < epoch_count; ++k) {
            auto h = hash_observation(e, first_epoch + k);
            out.emplace_back(h.bytes.begin(), h.bytes.end());
        }
}

}  // namespace

std::size_t upload_wire_size(Design design, const EpochParams& params, int retention_days) {
    params.validate();
    switch (design) {
        case Design::low_cost: return 1 + 32 + 2 + kRegionBlockMax;
        case Design::unlinkable:
            return 1 + 2 + max_seed_count(design, params, retention_days) * 36 +
                   kRegionBlockMax;
        case Design::hybrid:
            return 1 + 2 + max_seed_count(design, params, retention_days) * 20 +
                   kRegionBlockMax;
    }
    throw std::invalid_argument("unknown design");
}

Bytes encode_upload(const UploadPayload& payload, const EpochParams& params,
                    int retention_days) {
    Bytes out;
    switch (payload.design) {
        case Design::low_cost: {
            if (!payload.day_seed) throw std::invalid_argument("low-cost upload needs a seed");
            out.push_back(kTagLowCost);
            out.insert(out.end(), payload.day_seed->bytes.begin(),
                       payload.day_seed->bytes.end());
            put_u16_be(out, static_cast<std::uint16_t>(payload.day_seed->day & 0xffff));
            break;
        }
        case Design::unlinkable: {
            if (payload.epoch_seeds.size() >
                max_seed_count(payload.design, params, retention_days))
                throw std::invalid_argument("too many epoch seeds");
            out.push_back(kTagUnlinkable);
            put_u16_be(out, static_cast<std::uint16_t>(payload.epoch_seeds.size()));
            for (const auto& s : payload.epoch_seeds) {
                put_u32_be(out, static_cast<std::uint32_t>(s.epoch));
                out.insert(out.end(), s.bytes.begin(), s.bytes.end());
            }
            break;
        }
        case Design::hybrid: {
            if (payload.window_seeds.size() >
                max_seed_count(payload.design, params, retention_days))
                throw std::invalid_argument("too many window seeds");
            out.push_back(kTagHybrid);
            put_u16_be(out, static_cast<std::uint16_t>(payload.window_seeds.size()));
            for (const auto& s : payload.window_seeds) {
                put_u32_be(out, static_cast<std::uint32_t>(s.window));
                out.insert(out.end(), s.bytes.begin(), s.bytes.end());
            }
            break;
        }
    }
    append_regions(out, payload.visited_regions);
    out.resize(upload_wire_size(payload.design, params, retention_days), 0x00);
    return out;
}

UploadPayload decode_upload(std::span<const std::uint8_t> wire, const EpochParams& params,
                            int retention_days) {
    if (wire.empty()) throw std::invalid_argument("empty upload");
    UploadPayload p;
    std::size_t pos = 1;
    auto need = [&](std::size_t n) {
        if (pos + n > wire.size()) throw std::invalid_argument("truncated upload");
    };
    switch (wire[0]) {
        case kTagLowCost: {
            p.design = Design::low_cost;
            need(34);
            DaySeed s;
            std::copy_n(wire.begin() + pos, 32, s.bytes.begin());
            pos += 32;
            s.day = get_u16_be(wire, pos);
            pos += 2;
            p.day_seed = s;
            break;
        }
        case kTagUnlinkable: {
            p.design = Design::unlinkable;
            need(2);
            std::size_t count = get_u16_be(wire, pos);
            pos += 2;
            if (count > max_seed_count(p.design, params, retention_days))
                throw std::invalid_argument("epoch seed count out of range");
            need(count * 36);
            for (std::size_t i = 0; i < count; ++i) {
                EpochSeed s;
                s.epoch = get_u32_be(wire, pos);
                pos += 4;
                std::copy_n(wire.begin() + pos, 32, s.bytes.begin());
                pos += 32;
                p.epoch_seeds.push_back(s);
            }
            break;
        }
        case kTagHybrid: {
            p.design = Design::hybrid;
            need(2);
            std::size_t count = get_u16_be(wire, pos);
            pos += 2;
            if (count > max_seed_count(p.design, params, retention_days))
                throw std::invalid_argument("window seed count out of range");
            need(count * 20);
            for (std::size_t i = 0; i < count; ++i) {
                WindowSeed s;
                s.window = get_u32_be(wire, pos);
                pos += 4;
                std::copy_n(wire.begin() + pos, 16, s.bytes.begin());
                pos += 16;
                p.window_seeds.push_back(s);
            }
            break;
        }
        default: throw std::invalid_argument("unknown upload tag");
    }
    need(1);
    std::size_t region_count = wire[pos++];
    if (region_count > kMaxUploadRegions)
        throw std::invalid_argument("region count out of range");
    for (std::size_t i = 0; i < region_count; ++i) {
        need(1);
        std::size_t len = wire[pos++];
        need(len);
        RegionId r(wire.begin() + pos, wire.begin() + pos + len);
        pos += len;
        validate_region(r);
        p.visited_regions.push_back(r);
    }
    if (wire.size() != upload_wire_size(p.design, params, retention_days))
        throw std::invalid_argument("upload length does not match its variant");
    return p;
}

void BackendConfig::validate() const {
    params.validate();
    validate_region(region);
    if (slot_minutes <= 0) throw std::invalid_argument("slot_minutes must be positive");
    if (retention_days <= 0) throw std::invalid_argument("retention_days must be positive");
    if (fingerprint_bits < 1 || fingerprint_bits > 64)
        throw std::invalid_argument("fingerprint_bits out of range");
}

std::optional<std::vector<Bytes>> extract_records(const UploadPayload& payload, Design dst,
                                                  const EpochParams& params,
                                                  Timestamp received_at) {
    std::vector<Bytes> records;
    if (payload.design == dst) {
        switch (dst) {
            case Design::low_cost: {
                Bytes r(payload.day_seed->bytes.begin(), payload.day_seed->bytes.end());
                put_u16_be(r, static_cast<std::uint16_t>(payload.day_seed->day & 0xffff));
                records.push_back(std::move(r));
                break;
            }
            case Design::unlinkable:
                for (const auto& s : payload.epoch_seeds) {
                    auto h = cuckoo_entry(s);
                    records.emplace_back(h.bytes.begin(), h.bytes.end());
                }
                break;
            case Design::hybrid:
                for (const auto& s : payload.window_seeds) {
                    Bytes r;
                    put_u32_be(r, static_cast<std::uint32_t>(s.window));
                    r.insert(r.end(), s.bytes.begin(), s.bytes.end());
                    records.push_back(std::move(r));
                }
                break;
        }
        return records;
    }
    // Cross-protocol: only expansions into the unlinkable entry form exist.
    if (dst != Design::unlinkable) return std::nullopt;
    const int per_day = params.epochs_per_day();
    if (payload.design == Design::low_cost) {
        DaySeed seed = *payload.day_seed;
        const DayIndex last = day_of(received_at);
        for (DayIndex d = seed.day; d <= last; ++d, seed = rotate_day_seed(seed))
            cross_product_entries(records, derive_day_ephids(seed, params),
                                  static_cast<EpochIndex>(d) * per_day, per_day);
        return records;
    }
    const int per_window = params.epochs_per_window();
    for (const auto& s : payload.window_seeds)
        cross_product_entries(records, derive_window_ephids(s, params),
                              s.window * per_window, per_window);
    return records;
}

Backend::Backend(BackendConfig config, Timestamp start_time) : config_(std::move(config)) {
    config_.validate();
    next_slot_ = start_time / config_.slot_seconds();
    if (!config_.data_dir.empty()) {
        std::filesystem::create_directories(config_.data_dir);
        recover();
    }
}

Backend::Ack Backend::accept_upload(const UploadEnvelope& envelope) {
    static const Bytes kAccept{'A', 'C', 'C', 'E', 'P', 'T', 'E', 'D'};
    static const Bytes kReject{'R', 'E', 'J', 'E', 'C', 'T', 'E', 'D'};
    UploadPayload payload;
    try {
        payload = decode_upload(envelope.wire, config_.params, config_.retention_days);
    } catch (const std::invalid_argument&) {
        return {false, kReject};
    }
    // Dummies are discarded here, before any batch state is touched, with a
    // response byte-identical to a real accept.
    if (!envelope.authorized) return {true, kAccept};
    auto payload_digest = digest_of(envelope.wire);
    if (seen_payloads_.insert(payload_digest).second) {
        queue_records(payload, envelope.received_at);
        log_line("U " + std::to_string(envelope.received_at) + " " + to_hex(envelope.wire));
    }
    return {true, kAccept};
}

void Backend::queue_records(const UploadPayload& payload, Timestamp received_at) {
    auto records = extract_records(payload, config_.design, config_.params, received_at);
    if (!records) throw std::invalid_argument("payload not convertible to this region");
    const std::int64_t slot = slot_of(received_at);
    for (auto& r : *records) {
        auto d = digest_of(r);
        pending_.emplace(d, std::move(r));
        pending_slot_.emplace(d, slot);
    }
}

Bytes Backend::build_body(const std::vector<Bytes>& records) const {
    if (config_.design == Design::unlinkable) {
        FilterParams fp;
        fp.fingerprint_bits = config_.fingerprint_bits;
        fp.bucket_count = 1;
        while (0.95 * fp.capacity() < static_cast<double>(records.size()))
            fp.bucket_count <<= 1;
        for (;;) {
            CuckooFilter filter(fp);
            bool ok = true;
            for (const auto& r : records) {
                HashedObservation h;
                std::copy_n(r.begin(), 32, h.bytes.begin());
                ok = filter.insert(h) && ok;
            }
            if (ok) return filter.serialize();
            fp.bucket_count <<= 1;  // eviction chain exhausted; resize
        }
    }
    Bytes body;
    for (const auto& r : records) body.insert(body.end(), r.begin(), r.end());
    return body;
}

std::optional<PublishedBatch> Backend::publish_slot(Timestamp now) {
    const std::int64_t closed = now / config_.slot_seconds();
    if (next_slot_ >= closed) return std::nullopt;

    std::vector<Bytes> records;
    for (auto it = pending_.begin(); it != pending_.end();) {
        if (pending_slot_.at(it->first) <= next_slot_) {
            records.push_back(it->second);
            pending_slot_.erase(it->first);
            it = pending_.erase(it);
        } else {
            ++it;
        }
    }

    PublishedBatch batch;
    batch.slot_id = next_slot_;
    batch.design = config_.design;
    batch.publication_time = (next_slot_ + 1) * config_.slot_seconds();
    batch.body = build_body(records);
    batches_.push_back(batch);
    ++next_slot_;

    log_line("P " + std::to_string(batch.slot_id));
    if (!config_.data_dir.empty()) {
        auto path = std::filesystem::path(config_.data_dir) /
                    ("batch-" + std::to_string(batch.slot_id) + ".bin");
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(reinterpret_cast<const char*>(batch.body.data()),
                static_cast<std::streamsize>(batch.body.size()));
    }

    // 14-day server-side retention.
    const Timestamp horizon = batch.publication_time - Timestamp{config_.retention_days} * 86400;
    std::erase_if(batches_, [&](const PublishedBatch& b) {
        return b.publication_time < horizon;
    });
    return batch;
}

std::vector<PublishedBatch> Backend::publish_due(Timestamp now) {
    std::vector<PublishedBatch> out;
    while (auto b = publish_slot(now)) out.push_back(*b);
    return out;
}

std::vector<PublishedBatch> Backend::fetch_batches(const RegionId& region,
                                                   std::int64_t since_slot) const {
    if (region != config_.region) throw std::invalid_argument("unknown region: " + region);
    std::vector<PublishedBatch> out;
    for (const auto& b : batches_)
        if (b.slot_id > since_slot) out.push_back(b);
    return out;
}

void Backend::log_line(const std::string& line) {
    if (config_.data_dir.empty()) return;
    std::ofstream f(std::filesystem::path(config_.data_dir) / "upload.log", std::ios::app);
    f << line << '\n';
}

void Backend::recover() {
    auto path = std::filesystem::path(config_.data_dir) / "upload.log";
    std::ifstream f(path);
    if (!f) return;
    // Replaying the log reconstructs queue and batches; batch bodies are a
    // deterministic function of the uploads, so no batch file is read back.
    std::string kind;
    while (f >> kind) {
        if (kind == "U") {
            Timestamp received_at;
            std::string hex;
            f >> received_at >> hex;
            Bytes wire = from_hex(hex);
            auto payload = decode_upload(wire, config_.params, config_.retention_days);
            if (seen_payloads_.insert(digest_of(wire)).second)
                queue_records(payload, received_at);
        } else if (kind == "P") {
            std::int64_t slot;
            f >> slot;
            // Republish through the normal path with logging suppressed.
            auto dir = std::move(config_.data_dir);
            config_.data_dir.clear();
            next_slot_ = std::min(next_slot_, slot);
            publish_slot((slot + 1) * config_.slot_seconds() + config_.slot_seconds());
            config_.data_dir = std::move(dir);
        } else {
            throw std::runtime_error("corrupt upload log");
        }
    }
}

void Federation::add_region(Backend* backend) {
    regions_[backend->config().region] = backend;
}

Federation::Receipt Federation::deliver(const RegionId& region,
                                        const UploadEnvelope& envelope) {
    auto it = regions_.find(region);
    if (it == regions_.end()) {
        retry_queue_.emplace_back(region, envelope);
        return {region, "retry-queued"};
    }
    try {
        auto ack = it->second->accept_upload(envelope);
        return {region, ack.accepted ? "delivered" : "rejected"};
    } catch (const std::invalid_argument&) {
        return {region, "unsupported"};
    }
}

std::vector<Federation::Receipt> Federation::submit(const RegionId& home,
                                                    const UploadEnvelope& envelope) {
    std::vector<Receipt> receipts;
    auto home_it = regions_.find(home);
    if (home_it == regions_.end()) throw std::invalid_argument("unknown home region");
    auto ack = home_it->second->accept_upload(envelope);
    receipts.push_back({home, ack.accepted ? "delivered" : "rejected"});
    if (!ack.accepted || !envelope.authorized) return receipts;

    auto payload = decode_upload(envelope.wire, home_it->second->config().params,
                                 home_it->second->config().retention_days);
    for (const auto& r : payload.visited_regions) {
        if (r == home) continue;
        receipts.push_back(deliver(r, envelope));
    }
    return receipts;
}

std::vector<Federation::Receipt> Federation::flush_retries() {
    auto queued = std::move(retry_queue_);
    retry_queue_.clear();
    std::vector<Receipt> receipts;
    for (auto& [region, env] : queued) receipts.push_back(deliver(region, env));
    return receipts;
}

}  // namespace dp3t
