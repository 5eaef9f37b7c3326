#include <doctest.h>

#include "mteq/selftest.hpp"

using namespace mteq::selftest;

TEST_CASE("selftest passes on a working build") {
    const auto rows = run_all();
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        INFO(r.name << ": " << r.detail);
        CHECK(r.passed);
    }
    const auto table = format_table(rows);
    CHECK(table.find("PASS") != std::string::npos);
    CHECK(table.find("FAIL") == std::string::npos);
}

TEST_CASE("selftest catches a flipped CDC sign") {
    const auto r = cdc_inversion(Options{.sabotage_cdc_sign = true});
    CHECK_FALSE(r.passed);
    const auto rows = run_all(Options{.sabotage_cdc_sign = true});
    int failed = 0;
    for (const auto& x : rows) failed += !x.passed;
    CHECK(failed == 1);
    CHECK(format_table(rows).find("FAIL") != std::string::npos);
}
