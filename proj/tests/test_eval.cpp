#include <doctest.h>

#include <boost/math/special_functions/erf.hpp>
#include <cmath>

#include "mteq/errors.hpp"
#include "mteq/eval.hpp"
#include "mteq/fft.hpp"

using namespace mteq;
using namespace mteq::eval;

namespace {

EvalConfig quiet_linear() {
    EvalConfig c;
    c.sim.linear_only = true;
    c.sim.amp.ase_enabled = false;
    c.n_symbols = 10000;
    return c;
}

}  // namespace

TEST_CASE("bit error ratio") {
    std::vector<std::uint8_t> a(1000, 0), b(1000, 0);
    CHECK(ber(a, b) == 0.0);
    b[417] = 1;
    CHECK(ber(a, b) == 0.001);
    std::vector<std::uint8_t> c(1000, 1);
    CHECK(ber(a, c) == 1.0);
    CHECK_THROWS_AS(ber(a, std::vector<std::uint8_t>(999)), InvalidLength);
    CHECK_THROWS_AS(ber(std::vector<std::uint8_t>{}, std::vector<std::uint8_t>{}), InvalidLength);
}

TEST_CASE("erfc inverse agrees with an independent implementation") {
    double worst = 0.0;
    for (int k = 1; k < 400; ++k) {
        const double y = 2.0 * k / 400.0;
        const double ref = boost::math::erfc_inv(y);
        const double got = erfc_inv(y);
        worst = std::max(worst, std::abs(got - ref) / std::max(1.0, std::abs(ref)));
    }
    for (double y : {1e-300, 1e-100, 1e-20, 1e-12, 1e-6, 1.999999}) {
        const double ref = boost::math::erfc_inv(y);
        worst = std::max(worst, std::abs(erfc_inv(y) - ref) / std::abs(ref));
    }
    CHECK(worst < 1e-12);
    CHECK(erfc_inv(1.0) == 0.0);
    CHECK_THROWS_AS(erfc_inv(0.0), ConfigError);
    CHECK_THROWS_AS(erfc_inv(2.0), ConfigError);
}

TEST_CASE("Q factor from BER") {
    // 20 log10(sqrt(2) erfcinv(0.002)) evaluated at 50 digits.
    CHECK(std::abs(q_factor_from_ber(1e-3) - 9.799822569) < 1e-8);
    CHECK(q_factor_from_ber(0.49) < -20.0);
    CHECK(std::abs(q_factor_from_ber(0.49) - (-32.017)) < 1e-3);
    CHECK_THROWS_AS(q_factor_from_ber(0.5), QUndefined);
    CHECK_THROWS_AS(q_factor_from_ber(0.7), QUndefined);
    CHECK_THROWS_AS(q_factor_from_ber(0.0), ConfigError);

    double prev = std::numeric_limits<double>::infinity();
    bool strictly = true;
    double worst_rt = 0.0;
    for (int k = 0; k < 100; ++k) {
        const double b = std::pow(10.0, -12.0 + k * (std::log10(0.49) + 12.0) / 99.0);
        const double q = q_factor_from_ber(b);
        strictly &= q < prev;
        prev = q;
        const double back = 0.5 * std::erfc(std::pow(10.0, q / 20.0) / std::sqrt(2.0));
        worst_rt = std::max(worst_rt, std::abs(back - b) / b);
    }
    CHECK(strictly);
    CHECK(worst_rt < 1e-9);
}

TEST_CASE("zero-error clamp") {
    const auto q = q_factor_counted(0, 400000);
    CHECK(q.clamped);
    CHECK(q.ber == 0.0);
    CHECK(q.ber_used == 1.0 / 800000.0);
    CHECK(q.q_db == q_factor_from_ber(1.0 / 800000.0));
    const auto r = q_factor_counted(400, 400000);
    CHECK_FALSE(r.clamped);
    CHECK(r.q_db == q_factor_from_ber(1e-3));
    CHECK_THROWS_AS(q_factor_counted(250, 500), QUndefined);
}

TEST_CASE("fast FFT sizes") {
    CHECK(next_fast_size(1) == 1);
    CHECK(next_fast_size(11) == 12);
    CHECK(next_fast_size(97) == 98);
    CHECK(next_fast_size(100000) == 100000);
    CHECK(next_fast_size(100001) == 100352);
    for (std::size_t n : {1000u, 54321u, 131073u}) {
        const auto m = next_fast_size(n);
        CHECK(m >= n);
        CHECK(m < n + n / 10);
    }
}

TEST_CASE("method and axis names") {
    for (auto m : {Method::CDC, Method::STL, Method::MTL_Spans, Method::MTL_Power, Method::MTL_Rate,
                   Method::MTL_Universal})
        CHECK(method_from_string(to_string(m)) == m);
    CHECK(method_for_mode(dataset::SamplerMode::Universal) == Method::MTL_Universal);
    CHECK_THROWS_AS(method_from_string("cdc2"), ConfigError);
    CHECK(sweep_axis_from_string("rate") == SweepAxis::Rate);
    CHECK_THROWS_AS(sweep_axis_from_string("snr"), ConfigError);
    CHECK(SweepSpec::paper_grid(SweepAxis::Spans).grid.size() == 9);
    CHECK(SweepSpec::paper_grid(SweepAxis::Power).grid.size() == 7);
    CHECK(SweepSpec::paper_grid(SweepAxis::Rate).grid.size() == 9);
}

TEST_CASE("CDC on the noiseless linear channel is error-free and clamped") {
    const auto cfg = quiet_linear();
    const dataset::Scenario s{5.0, 40.0, 20, derive_seed(1, SeedNamespace::Eval)};
    const auto r = evaluate(Method::CDC, nullptr, s, cfg);
    CHECK(r.ber == 0.0);
    CHECK(r.clamped);
    CHECK(r.n_symbols_evaluated == 10000);
    const auto again = evaluate(Method::CDC, nullptr, s, cfg);
    CHECK(again.q_db == r.q_db);

    auto train_seeded = s;
    train_seeded.seed = derive_seed(1, SeedNamespace::Train);
    CHECK_THROWS_AS(evaluate(Method::CDC, nullptr, train_seeded, cfg), ConfigError);
    auto small = cfg;
    small.n_symbols = 5000;
    CHECK_THROWS_AS(evaluate(Method::CDC, nullptr, s, small), ConfigError);
    CHECK_THROWS_AS(evaluate(Method::STL, nullptr, s, cfg), ConfigError);
}

TEST_CASE("long points are scored over several sub-frames") {
    auto cfg = quiet_linear();
    cfg.n_symbols = 10001;
    cfg.subframe_symbols = 3000;  // 4 frames: 2501 + 2500 x 3
    const dataset::Scenario s{5.0, 40.0, 4, derive_seed(3, SeedNamespace::Eval)};
    const auto r = evaluate(Method::CDC, nullptr, s, cfg);
    CHECK(r.clamped);
    CHECK(r.n_symbols_evaluated == 10001);
    // clamp is 1 / (2 n_bits) over all frames
    CHECK(r.ber == 0.0);
    CHECK(r.q_db == doctest::Approx(q_factor_from_ber(1.0 / (2.0 * 4 * 10001))).epsilon(1e-12));
    auto bad = cfg;
    bad.subframe_symbols = 0;
    CHECK_THROWS_AS(evaluate(Method::CDC, nullptr, s, bad), ConfigError);
}

TEST_CASE("CDC baseline at 10 spans, 5 dBm, 40 GBd") {
    EvalConfig cfg;
    cfg.n_symbols = 20000;
    const dataset::Scenario s{5.0, 40.0, 10, derive_seed(2, SeedNamespace::Eval)};
    const auto a = evaluate(Method::CDC, nullptr, s, cfg);
    MESSAGE("CDC Q at 10 spans: " << a.q_db << " dB (BER " << a.ber << ")");
    CHECK(a.q_db > 8.6);
    CHECK(a.q_db < 10.6);
    const auto b = evaluate(Method::CDC, nullptr, s, cfg);
    CHECK(b.ber == a.ber);
}

TEST_CASE("sweeps produce one row per point and method") {
    auto cfg = quiet_linear();
    cfg.sim.amp.ase_enabled = true;
    cfg.threads = 2;
    SweepSpec spec;
    spec.axis = SweepAxis::Power;
    spec.fixed = {5.0, 40.0, 2, 0};
    spec.grid = {-1, 2, 5};
    spec.master_seed = 3;

    nn::TrainConfig tc;
    tc.sampler = dataset::SamplerSpec::for_mode(dataset::SamplerMode::StlFixed);
    tc.sampler.fixed_n_spans = 2;
    tc.data.sim = cfg.sim;
    tc.data.window = 9;
    tc.data.subframe_symbols = 512;
    tc.n_layers = 1;
    tc.hidden = 4;
    tc.epochs = 1;
    tc.epoch_size = 64;
    tc.batch = 64;
    const auto model = nn::train(tc);

    const auto rows = sweep(spec, {{Method::CDC, nullptr}, {Method::STL, &model}}, cfg);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].method == Method::CDC);
    CHECK(rows[1].method == Method::STL);
    CHECK(rows[2].scenario.p_dbm == 2.0);
    CHECK(rows[0].scenario.seed == rows[1].scenario.seed);
    CHECK(rows[0].scenario.seed != rows[2].scenario.seed);
    CHECK(seed_namespace(rows[4].scenario.seed) == SeedNamespace::Eval);

    auto serial = cfg;
    serial.threads = 1;
    const auto again = sweep(spec, {{Method::CDC, nullptr}, {Method::STL, &model}}, serial);
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(again[i].ber == rows[i].ber);

    const auto csv = sweep_csv(rows);
    CHECK(csv.rfind(std::string(kSweepCsvHeader) + "\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
    CHECK(csv.find("\nSTL,5,40,2,10000,") != std::string::npos);

    auto narrow = cfg;
    narrow.window = 5;
    CHECK_THROWS_AS(sweep(spec, {{Method::STL, &model}}, narrow), ConfigError);
}
