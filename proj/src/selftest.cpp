#include "mteq/selftest.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mteq/channel.hpp"
#include "mteq/dsp.hpp"
#include "mteq/eval.hpp"
#include "mteq/nn.hpp"
#include "mteq/rng.hpp"
#include "mteq/signal.hpp"

namespace mteq::selftest {

namespace {

template <typename Fn>
CheckResult timed(const char* name, Fn&& fn) {
    CheckResult r;
    r.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        fn(r);
    } catch (const std::exception& e) {
        r.passed = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::string fmt(const char* f, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

CheckResult energy_conservation() {
    return timed("energy conservation", [](CheckResult& r) {
        const auto frame = signal::generate_frame(1024, 11);
        auto w = signal::set_launch_power(signal::shape_pulse(frame, {}, 40e9), 5.0);
        channel::FiberParams f;
        f.alpha_db_per_km = 0.0;
        const double e0 = w.total_energy();
        for (int k = 0; k < 10; ++k) w = channel::ssfm_span(w, f, {}, nullptr);
        const double rel = std::abs(w.total_energy() / e0 - 1.0);
        r.passed = rel < 1e-9;
        r.detail = fmt("10 lossless spans, relative energy drift %.2e (limit 1e-9)", rel);
    });
}

CheckResult cdc_inversion(const Options& opt) {
    return timed("CDC inversion", [&](CheckResult& r) {
        const auto frame = signal::generate_frame(2048, 12);
        const auto w = signal::shape_pulse(frame, {}, 40e9);
        const channel::FiberParams f;
        const double length = 2500e3;
        const auto disp = channel::dispersion_halfstep(w, f.beta2(), 0.0, length);
        const double b2 = opt.sabotage_cdc_sign ? -f.beta2() : f.beta2();
        const auto back = dsp::cdc(disp, {length, b2});
        double e = 0.0, n = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            e += std::norm(back.x[k] - w.x[k]) + std::norm(back.y[k] - w.y[k]);
            n += std::norm(w.x[k]) + std::norm(w.y[k]);
        }
        const double rel = std::sqrt(e / n);
        r.passed = rel < 1e-10;
        r.detail = fmt("2500 km dispersion then CDC, relative L2 error %.2e (limit 1e-10)", rel);
    });
}

CheckResult gradient_check() {
    return timed("BPTT gradient", [](CheckResult& r) {
        nn::ModelConfig cfg{2, 4, 4, 9, 2};
        nn::Model<double> m(cfg);
        RngStream rng(derive_seed(3, SeedNamespace::Init));
        for (auto& p : m.params) p = 1.2 * rng.uniform01() - 0.6;
        const int B = 3;
        std::vector<double> in(B * 9 * 4), tgt(B * 2);
        for (auto& v : in) v = 2.0 * rng.uniform01() - 1.0;
        for (auto& v : tgt) v = 2.0 * rng.uniform01() - 1.0;

        nn::Engine<double> eng(cfg);
        std::vector<double> pred(B * 2), grad(m.params.size(), 0.0);
        eng.forward(m, in, B, pred);
        eng.backward(m, tgt, B * 2.0, grad);
        auto loss = [&](const nn::Model<double>& mm) {
            std::vector<double> p(B * 2);
            nn::Engine<double> e(cfg);
            e.forward(mm, in, B, p, {.keep_cache = false});
            return nn::mse_loss<double>(p, tgt);
        };
        double worst = 0.0;
        for (std::size_t k = 0; k < m.params.size(); ++k) {
            auto mp = m, mm = m;
            mp.params[k] += 1e-5;
            mm.params[k] -= 1e-5;
            const double num = (loss(mp) - loss(mm)) / 2e-5;
            worst = std::max(worst, std::abs(num - grad[k]) / std::max({std::abs(num), std::abs(grad[k]), 1e-7}));
        }
        r.passed = worst < 1e-4;
        r.detail = fmt("2x4 biLSTM, window 9: max relative error %.2e (limit 1e-4)", worst);
    });
}

CheckResult ber_to_q() {
    return timed("BER to Q", [](CheckResult& r) {
        const double q = eval::q_factor_from_ber(1e-3);
        bool mono = true;
        double prev = 1e300;
        for (int k = 0; k < 100; ++k) {
            const double b = std::pow(10.0, -12.0 + k * (std::log10(0.49) + 12.0) / 99.0);
            const double v = eval::q_factor_from_ber(b);
            mono &= v < prev;
            prev = v;
        }
        r.passed = std::abs(q - 9.80) <= 0.01 && mono;
        r.detail = fmt("Q(1e-3) = %.4f dB (expect 9.80 +- 0.01)", q) + (mono ? ", monotone" : ", NOT monotone");
    });
}

std::vector<CheckResult> run_all(const Options& opt) {
    return {energy_conservation(), cdc_inversion(opt), gradient_check(), ber_to_q()};
}

std::string format_table(const std::vector<CheckResult>& rows) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-22s %-6s %8s  %s\n", "check", "result", "time[s]", "detail");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-22s %-6s %8.2f  %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                      r.seconds, r.detail.c_str());
        os << buf;
    }
    return os.str();
}

}  // namespace mteq::selftest
