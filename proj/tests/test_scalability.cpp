#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dp3t/scalability.hpp"

using namespace dp3t;

namespace {

double mb_for(Design d, std::int64_t cases, int redacted_hours = 0) {
    ScalabilityInputs in;
    in.design = d;
    in.daily_new_cases = cases;
    in.redacted_hours = redacted_hours;
    return compute_scalability(in).daily_mb;
}

}  // namespace

TEST_CASE("per-patient byte constants at the defaults") {
    ScalabilityInputs in;
    in.daily_new_cases = 1;

    in.design = Design::low_cost;
    CHECK(compute_scalability(in).per_patient_bytes == 32);
    in.per_record_bytes = 36;
    CHECK(compute_scalability(in).per_patient_bytes == 36);
    in.per_record_bytes.reset();

    in.design = Design::unlinkable;
    CHECK(compute_scalability(in).per_patient_bytes == 2880);

    in.design = Design::hybrid;
    CHECK(compute_scalability(in).per_patient_bytes == 480);  // 5 d x 6 windows x 16 B
    in.window_minutes = 120;
    CHECK(compute_scalability(in).per_patient_bytes == 960);  // 2 h windows

    // Reduced mode: redacting 8 hours leaves 5 x 4 and 5 x 8 seeds.
    in.window_minutes = 240;
    in.redacted_hours = 8;
    CHECK(compute_scalability(in).per_patient_bytes == 320);
    in.window_minutes = 120;
    CHECK(compute_scalability(in).per_patient_bytes == 640);
}

TEST_CASE("the published per-country download table reproduces to the cent") {
    struct Row {
        std::int64_t cases;
        double low_cost, unlinkable, hybrid;
    };
    // Peak and recent daily case counts for CH, DE, FR, ES, IT.
    const Row rows[] = {
        {1390, 0.04, 3.82, 0.64}, {58, 0.00, 0.16, 0.03},
        {6294, 0.19, 17.29, 2.88}, {933, 0.03, 2.56, 0.43},
        {7578, 0.23, 20.81, 3.47}, {708, 0.02, 1.94, 0.32},
        {9181, 0.28, 25.22, 4.20}, {849, 0.03, 2.33, 0.39},
        {6557, 0.20, 18.01, 3.00}, {1402, 0.04, 3.85, 0.64},
    };
    for (const auto& r : rows) {
        CAPTURE(r.cases);
        CHECK(std::abs(mb_for(Design::low_cost, r.cases) - r.low_cost) <= 0.01);
        CHECK(std::abs(mb_for(Design::unlinkable, r.cases) - r.unlinkable) <= 0.01);
        CHECK(std::abs(mb_for(Design::hybrid, r.cases) - r.hybrid) <= 0.01);
    }
}

TEST_CASE("download cost is linear in the case count") {
    CHECK(mb_for(Design::unlinkable, 2000) ==
          doctest::Approx(2 * mb_for(Design::unlinkable, 1000)));
}

TEST_CASE("formatting and validation") {
    CHECK(format_mb(17.2859) == "17.29");
    CHECK(format_mb(0.0) == "0.00");

    ScalabilityInputs bad;
    bad.daily_new_cases = 0;
    CHECK_THROWS_AS(compute_scalability(bad), std::invalid_argument);
    bad.daily_new_cases = 10;
    bad.redacted_hours = 7;  // not a whole number of 4 h windows
    bad.design = Design::hybrid;
    CHECK_THROWS_AS(compute_scalability(bad), std::invalid_argument);
}
