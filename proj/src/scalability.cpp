#include "dp3t/scalability.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace dp3t {

void ScalabilityInputs::validate() const {
    if (daily_new_cases <= 0) throw std::invalid_argument("daily_new_cases must be positive");
    if (contagious_days <= 0) throw std::invalid_argument("contagious_days must be positive");
    EpochParams{epoch_minutes, window_minutes}.validate();
    if (redacted_hours < 0 || redacted_hours >= 24)
        throw std::invalid_argument("redacted_hours out of range");
    if ((redacted_hours * 60) % window_minutes != 0)
        throw std::invalid_argument("redacted_hours must remove whole windows");
    if (per_record_bytes && *per_record_bytes <= 0)
        throw std::invalid_argument("per_record_bytes must be positive");
}

ScalabilityResult compute_scalability(const ScalabilityInputs& in) {
    in.validate();
    ScalabilityResult out;
    switch (in.design) {
        case Design::low_cost:
            out.per_patient_bytes = in.per_record_bytes.value_or(32);
            break;
        case Design::unlinkable: {
            // Serialized filter body for the patient's entries at the
            // publication defaults: 45-bit fingerprints, 4 slots per bucket,
            // power-of-two buckets at load <= 0.95.
            const std::int64_t items =
                std::int64_t{in.contagious_days} * ((24 * 60) / in.epoch_minutes);
            std::int64_t buckets = 1;
            while (0.95 * 4 * static_cast<double>(buckets) < static_cast<double>(items))
                buckets <<= 1;
            out.per_patient_bytes = buckets * 4 * 45 / 8;
            break;
        }
        case Design::hybrid: {
            const int windows_per_day = (24 - in.redacted_hours) * 60 / in.window_minutes;
            out.per_patient_bytes =
                std::int64_t{in.contagious_days} * windows_per_day * kWindowSeedLen;
            break;
        }
    }
    out.daily_mb = static_cast<double>(out.per_patient_bytes * in.daily_new_cases) /
                   static_cast<double>(1 << 20);
    return out;
}

std::string format_mb(double mb) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", mb);
    return buf;
}

}  // namespace dp3t
