#pragma once

#include <string>
#include <vector>

namespace mteq::selftest {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct Options {
    // Test hook: compensate dispersion with the wrong sign. The CDC check must
    // then fail, proving the suite can detect a broken build.
    bool sabotage_cdc_sign = false;
};

CheckResult energy_conservation();
CheckResult cdc_inversion(const Options& opt = {});
CheckResult gradient_check();
CheckResult ber_to_q();

std::vector<CheckResult> run_all(const Options& opt = {});

std::string format_table(const std::vector<CheckResult>& rows);

}  // namespace mteq::selftest
