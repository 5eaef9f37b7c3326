#include <doctest.h>

#include <bit>
#include <cmath>
#include <numbers>
#include <set>

#include "mteq/dsp.hpp"
#include "mteq/errors.hpp"
#include "mteq/fft.hpp"
#include "mteq/rng.hpp"
#include "mteq/signal.hpp"

using namespace mteq;
using namespace mteq::signal;

namespace {

unsigned word_of(const Bits& bits, std::size_t k) {
    return (bits[4 * k] << 3) | (bits[4 * k + 1] << 2) | (bits[4 * k + 2] << 1) | bits[4 * k + 3];
}

}  // namespace

TEST_CASE("generate_frame is deterministic and sized") {
    const auto a = generate_frame(4, 1);
    const auto b = generate_frame(4, 1);
    CHECK(a.x_symbols == b.x_symbols);
    CHECK(a.y_symbols == b.y_symbols);
    CHECK(a.bits_x == b.bits_x);
    CHECK(a.bits_y == b.bits_y);
    CHECK(a.bits_x != generate_frame(4, 2).bits_x);

    const auto big = generate_frame(std::size_t{1} << 18, 77);
    CHECK(big.x_symbols.size() == (std::size_t{1} << 18));
    CHECK(big.y_symbols.size() == (std::size_t{1} << 18));
    CHECK(big.bits_x.size() == 4 * big.x_symbols.size());
    CHECK(big.bits_y.size() == 4 * big.y_symbols.size());

    // Every symbol is a canonical point consistent with its bits.
    const auto& pts = constellation();
    for (std::size_t k = 0; k < 1000; ++k) {
        CHECK(big.x_symbols[k] == pts[word_of(big.bits_x, k)]);
        CHECK(big.y_symbols[k] == pts[word_of(big.bits_y, k)]);
    }

    // Bits are roughly fair.
    double ones = 0;
    for (auto b : big.bits_x) ones += b;
    CHECK(ones / static_cast<double>(big.bits_x.size()) == doctest::Approx(0.5).epsilon(0.01));

    CHECK_THROWS_AS(generate_frame(0, 1), InvalidLength);
}

TEST_CASE("16-QAM map: normalization, anchor point, distinctness") {
    const auto& pts = constellation();
    double mean_power = 0.0;
    std::set<std::pair<double, double>> distinct;
    for (const auto& p : pts) {
        mean_power += std::norm(p);
        distinct.insert({p.real(), p.imag()});
    }
    mean_power /= 16.0;
    CHECK(std::abs(mean_power - 1.0) < 1e-12);
    CHECK(distinct.size() == 16);

    const Bits zero{0, 0, 0, 0};
    const auto s = map_bits_to_16qam(zero);
    REQUIRE(s.size() == 1);
    CHECK(s[0].real() == doctest::Approx(-3.0 / std::sqrt(10.0)).epsilon(1e-15));
    CHECK(s[0].imag() == doctest::Approx(-3.0 / std::sqrt(10.0)).epsilon(1e-15));

    CHECK(map_bits_to_16qam(Bits{}).empty());
    CHECK_THROWS_AS(map_bits_to_16qam(Bits{0, 1, 1}), InvalidLength);
}

TEST_CASE("16-QAM map is Gray: nearest neighbours differ in one bit") {
    const auto& pts = constellation();
    const double d_min = 2.0 * kQamScale;
    int pairs = 0;
    for (unsigned a = 0; a < 16; ++a) {
        for (unsigned b = a + 1; b < 16; ++b) {
            if (std::abs(std::abs(pts[a] - pts[b]) - d_min) < 1e-12) {
                ++pairs;
                CHECK(std::popcount(a ^ b) == 1);
            }
        }
    }
    CHECK(pairs == 24);  // 4x4 grid: 2 * 4 * 3 adjacent pairs
}

TEST_CASE("hard demapper") {
    const auto frame = generate_frame(2000, 3);
    CHECK(demap_16qam_hard(frame.x_symbols) == frame.bits_x);

    const cplx p = cplx(-3.0, -3.0) * kQamScale + cplx(0.01, 0.01);
    const auto bits = demap_16qam_hard(std::vector<cplx>{p});
    CHECK(bits == Bits{0, 0, 0, 0});

    RngStream rng(11);
    std::vector<cplx> junk(500);
    for (auto& z : junk) z = cplx(200.0 * (rng.uniform01() - 0.5), 200.0 * (rng.uniform01() - 0.5));
    const auto out = demap_16qam_hard(junk);
    CHECK(out.size() == 4 * junk.size());
    for (auto b : out) CHECK(b <= 1);
}

TEST_CASE("RRC taps are symmetric and energy-normalized") {
    PulseShapeConfig cfg;
    const auto taps = rrc_taps(cfg);
    CHECK(taps.size() == static_cast<std::size_t>(cfg.filter_span_symbols * cfg.sps_tx + 1));
    double e = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
        CHECK(taps[i] == doctest::Approx(taps[taps.size() - 1 - i]).epsilon(1e-14));
        e += taps[i] * taps[i];
    }
    CHECK(e == doctest::Approx(cfg.sps_tx).epsilon(1e-12));

    CHECK_THROWS_AS((PulseShapeConfig{0.0, 32, 8}.validate()), ConfigError);
    CHECK_THROWS_AS((PulseShapeConfig{0.1, 15, 8}.validate()), ConfigError);
    CHECK_THROWS_AS((PulseShapeConfig{0.1, 14, 8}.validate()), ConfigError);
}

TEST_CASE("shape_pulse of a single centered symbol is the RRC impulse response") {
    PulseShapeConfig cfg;
    const std::size_t n_sym = 64;
    SymbolFrame frame;
    frame.x_symbols.assign(n_sym, cplx{});
    frame.y_symbols.assign(n_sym, cplx{});
    const cplx a(0.7, -0.2);
    frame.x_symbols[n_sym / 2] = a;
    const auto w = shape_pulse(frame, cfg, 40e9);
    const auto taps = rrc_taps(cfg);
    const auto half = static_cast<std::ptrdiff_t>(taps.size() / 2);
    const auto center = static_cast<std::ptrdiff_t>(n_sym / 2 * cfg.sps_tx);
    double max_err = 0.0;
    for (std::ptrdiff_t j = -half; j <= half; ++j) {
        const cplx expect = a * taps[static_cast<std::size_t>(j + half)];
        max_err = std::max(max_err, std::abs(w.x[static_cast<std::size_t>(center + j)] - expect));
    }
    CHECK(max_err < 1e-13);
    CHECK(w.sample_rate == doctest::Approx(320e9));
    CHECK(w.sps == 8);
}

TEST_CASE("shaped spectrum stays inside (1 + rolloff) Rs / 2") {
    PulseShapeConfig cfg;
    const std::size_t n_sym = 4096;
    SymbolFrame frame;
    const cplx a = cplx(3.0, 3.0) * kQamScale;
    for (std::size_t k = 0; k < n_sym; ++k) {
        frame.x_symbols.push_back((k % 2 == 0) ? a : -a);
        frame.y_symbols.push_back((k % 2 == 0) ? a : -a);
    }
    const double rs = 40e9;
    const auto w = shape_pulse(frame, cfg, rs);
    Fft fft(w.size());
    std::copy(w.x.begin(), w.x.end(), fft.data().begin());
    fft.forward();
    const double edge = (1.0 + cfg.rolloff) * rs / 2.0;
    double in_band = 0.0, out_band = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double f = std::abs(fft_angular_frequency(k, w.size(), w.sample_rate)) / (2.0 * std::numbers::pi);
        (f <= edge ? in_band : out_band) += std::norm(fft.data()[k]);
    }
    CHECK(in_band > 0.0);
    CHECK(10.0 * std::log10(out_band / in_band) < -40.0);
}

TEST_CASE("shape -> matched filter round trip is the identity on symbols") {
    PulseShapeConfig cfg;
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
        const auto frame = generate_frame(2048, seed);
        const auto w = shape_pulse(frame, cfg, 40e9);
        CHECK(w.mean_total_power() == doctest::Approx(2.0).epsilon(0.03));
        const auto rx = matched_filter_and_downsample(w, cfg, frame.size());
        CHECK(dsp::evm_db(rx.x, frame.x_symbols) < -40.0);
        CHECK(dsp::evm_db(rx.y, frame.y_symbols) < -40.0);
    }
}

TEST_CASE("matched filter: delay equivariance and bounds") {
    PulseShapeConfig cfg;
    const auto frame = generate_frame(1024, 9);
    auto w = shape_pulse(frame, cfg, 40e9);
    const int k = 5;
    std::rotate(w.x.rbegin(), w.x.rbegin() + k * cfg.sps_tx, w.x.rend());
    std::rotate(w.y.rbegin(), w.y.rbegin() + k * cfg.sps_tx, w.y.rend());
    const auto rx = matched_filter_and_downsample(w, cfg, frame.size());
    CHECK(dsp::find_symbol_delay(rx.x, frame.x_symbols, 10) == k);
    CHECK(dsp::find_symbol_delay(rx.y, frame.y_symbols, 10) == k);
    CHECK(std::abs(rx.x[k + 3] - frame.x_symbols[3]) < 0.05);

    CHECK_THROWS_AS(matched_filter_and_downsample(w, cfg, frame.size() + 1), InvalidLength);
    PulseShapeConfig other = cfg;
    other.sps_tx = 4;
    CHECK_THROWS_AS(matched_filter_and_downsample(w, other, 10), ConfigError);
}

TEST_CASE("set_launch_power") {
    PulseShapeConfig cfg;
    const auto frame = generate_frame(512, 21);
    auto w = shape_pulse(frame, cfg, 40e9);
    for (auto& s : w.y) s *= 0.5;  // unequal X/Y split
    double ratio_before = 0.0, ey = 0.0;
    for (auto& s : w.x) ratio_before += std::norm(s);
    for (auto& s : w.y) ey += std::norm(s);
    ratio_before /= ey;

    const auto p0 = set_launch_power(w, 0.0);
    CHECK(p0.mean_total_power() == doctest::Approx(1e-3).epsilon(1e-12));
    const auto p5 = set_launch_power(w, 5.0);
    CHECK(p5.mean_total_power() == doctest::Approx(3.16227766e-3).epsilon(1e-8));
    for (double p : {-1.0, 2.5, 5.0}) {
        CHECK(std::abs(watts_to_dbm(set_launch_power(w, p).mean_total_power()) - p) < 1e-9);
    }

    const auto twice = set_launch_power(p5, 5.0);
    for (std::size_t i = 0; i < twice.size(); i += 97) {
        CHECK(std::abs(twice.x[i] - p5.x[i]) < 1e-15);
    }

    double ratio_after = 0.0;
    ey = 0.0;
    for (auto& s : p5.x) ratio_after += std::norm(s);
    for (auto& s : p5.y) ey += std::norm(s);
    ratio_after /= ey;
    CHECK(ratio_after == doctest::Approx(ratio_before).epsilon(1e-12));

    DualPolWaveform zero = w;
    std::fill(zero.x.begin(), zero.x.end(), cplx{});
    std::fill(zero.y.begin(), zero.y.end(), cplx{});
    CHECK_THROWS_AS(set_launch_power(zero, 0.0), DegenerateInput);
}
