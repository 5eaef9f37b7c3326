#include "mteq/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mteq/errors.hpp"
#include "mteq/rng.hpp"

namespace mteq::signal {

namespace {

constexpr std::array<int, 4> kGrayLevels = {-3, -1, +3, +1};  // index = (b_hi << 1) | b_lo

std::array<cplx, 16> build_constellation() {
    std::array<cplx, 16> pts{};
    for (unsigned word = 0; word < 16; ++word) {
        const int i_level = gray_level((word >> 2) & 3u);
        const int q_level = gray_level(word & 3u);
        pts[word] = cplx(i_level * kQamScale, q_level * kQamScale);
    }
    return pts;
}

// Nearest Gray label for one rail; decision thresholds at -2, 0, +2.
unsigned slice_rail(double v) {
    const double level = v / kQamScale;
    if (level < -2.0) return 0b00;
    if (level < 0.0) return 0b01;
    if (level < 2.0) return 0b11;
    return 0b10;
}

double rrc_impulse(double t, double beta) {
    constexpr double pi = std::numbers::pi;
    if (std::abs(t) < 1e-12) {
        return 1.0 - beta + 4.0 * beta / pi;
    }
    if (beta > 0.0 && std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
        return beta / std::numbers::sqrt2 *
               ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
    }
    const double num = std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta));
    const double den = pi * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
    return num / den;
}

// Spectrum of the taps laid out circularly (tap center at index 0) over n points.
std::vector<cplx> circular_filter_spectrum(const std::vector<double>& taps, std::size_t n) {
    Fft fft(n);
    auto buf = fft.data();
    const auto half = static_cast<std::ptrdiff_t>(taps.size() / 2);
    const auto nn = static_cast<std::ptrdiff_t>(n);
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(taps.size()); ++j) {
        std::ptrdiff_t pos = (j - half) % nn;
        if (pos < 0) pos += nn;
        buf[static_cast<std::size_t>(pos)] += taps[static_cast<std::size_t>(j)];
    }
    fft.forward();
    return {buf.begin(), buf.end()};
}

void circular_filter(std::vector<cplx>& samples, const std::vector<cplx>& spectrum, Fft& fft) {
    auto buf = fft.data();
    std::copy(samples.begin(), samples.end(), buf.begin());
    fft.forward();
    for (std::size_t k = 0; k < buf.size(); ++k) {
        buf[k] *= spectrum[k];
    }
    fft.inverse();
    std::copy(buf.begin(), buf.end(), samples.begin());
}

}  // namespace

int gray_level(unsigned two_bits) {
    return kGrayLevels[two_bits & 3u];
}

const std::array<cplx, 16>& constellation() {
    static const std::array<cplx, 16> pts = build_constellation();
    return pts;
}

double DualPolWaveform::total_energy() const {
    double e = 0.0;
    for (const auto& s : x) e += std::norm(s);
    for (const auto& s : y) e += std::norm(s);
    return e;
}

double DualPolWaveform::mean_total_power() const {
    return x.empty() ? 0.0 : total_energy() / static_cast<double>(x.size());
}

void PulseShapeConfig::validate() const {
    if (!(rolloff > 0.0 && rolloff <= 1.0)) {
        throw ConfigError("pulse.rolloff must be in (0, 1], got " + std::to_string(rolloff));
    }
    if (filter_span_symbols < 16 || filter_span_symbols % 2 != 0) {
        throw ConfigError("pulse.filter_span_symbols must be even and >= 16, got " +
                          std::to_string(filter_span_symbols));
    }
    if (sps_tx < 2) {
        throw ConfigError("pulse.sps_tx must be >= 2, got " + std::to_string(sps_tx));
    }
}

SymbolFrame generate_frame(std::size_t n_symbols, std::uint64_t seed) {
    if (n_symbols == 0) {
        throw InvalidLength("generate_frame: n_symbols must be >= 1");
    }
    SymbolFrame frame;
    frame.seed = seed;
    RngStream rx(split_seed(seed, 0));
    RngStream ry(split_seed(seed, 1));
    auto draw_bits = [n_symbols](RngStream& rng) {
        Bits bits(4 * n_symbols);
        std::uint64_t word = 0;
        int left = 0;
        for (auto& b : bits) {
            if (left == 0) {
                word = rng.next_u64();
                left = 64;
            }
            b = static_cast<std::uint8_t>(word & 1u);
            word >>= 1;
            --left;
        }
        return bits;
    };
    frame.bits_x = draw_bits(rx);
    frame.bits_y = draw_bits(ry);
    frame.x_symbols = map_bits_to_16qam(frame.bits_x);
    frame.y_symbols = map_bits_to_16qam(frame.bits_y);
    return frame;
}

Symbols map_bits_to_16qam(std::span<const std::uint8_t> bits) {
    if (bits.size() % 4 != 0) {
        throw InvalidLength("map_bits_to_16qam: bit count " + std::to_string(bits.size()) +
                            " is not a multiple of 4");
    }
    const auto& pts = constellation();
    Symbols out(bits.size() / 4);
    for (std::size_t k = 0; k < out.size(); ++k) {
        unsigned word = 0;
        for (int j = 0; j < 4; ++j) {
            word = (word << 1) | (bits[4 * k + static_cast<std::size_t>(j)] & 1u);
        }
        out[k] = pts[word];
    }
    return out;
}

Bits demap_16qam_hard(std::span<const cplx> received) {
    Bits bits(4 * received.size());
    for (std::size_t k = 0; k < received.size(); ++k) {
        const unsigned i_label = slice_rail(received[k].real());
        const unsigned q_label = slice_rail(received[k].imag());
        bits[4 * k + 0] = static_cast<std::uint8_t>((i_label >> 1) & 1u);
        bits[4 * k + 1] = static_cast<std::uint8_t>(i_label & 1u);
        bits[4 * k + 2] = static_cast<std::uint8_t>((q_label >> 1) & 1u);
        bits[4 * k + 3] = static_cast<std::uint8_t>(q_label & 1u);
    }
    return bits;
}

std::vector<double> rrc_taps(const PulseShapeConfig& cfg) {
    cfg.validate();
    const int half = cfg.filter_span_symbols * cfg.sps_tx / 2;
    std::vector<double> taps(static_cast<std::size_t>(2 * half + 1));
    double energy = 0.0;
    for (int j = -half; j <= half; ++j) {
        const double t = static_cast<double>(j) / cfg.sps_tx;
        const double v = rrc_impulse(t, cfg.rolloff);
        taps[static_cast<std::size_t>(j + half)] = v;
        energy += v * v;
    }
    const double scale = std::sqrt(static_cast<double>(cfg.sps_tx) / energy);
    for (auto& v : taps) v *= scale;
    return taps;
}

DualPolWaveform shape_pulse(const SymbolFrame& frame, const PulseShapeConfig& cfg, double symbol_rate) {
    cfg.validate();
    const auto sps = static_cast<std::size_t>(cfg.sps_tx);
    const std::size_t n = frame.size() * sps;
    DualPolWaveform w;
    w.sps = cfg.sps_tx;
    w.symbol_rate = symbol_rate;
    w.sample_rate = symbol_rate * cfg.sps_tx;
    w.x.assign(n, cplx{});
    w.y.assign(n, cplx{});
    for (std::size_t k = 0; k < frame.size(); ++k) {
        w.x[k * sps] = frame.x_symbols[k];
        w.y[k * sps] = frame.y_symbols[k];
    }
    const auto spectrum = circular_filter_spectrum(rrc_taps(cfg), n);
    Fft fft(n);
    circular_filter(w.x, spectrum, fft);
    circular_filter(w.y, spectrum, fft);
    return w;
}

double dbm_to_watts(double p_dbm) {
    return std::pow(10.0, (p_dbm - 30.0) / 10.0);
}

double watts_to_dbm(double watts) {
    return 10.0 * std::log10(watts) + 30.0;
}

DualPolWaveform set_launch_power(const DualPolWaveform& w, double p_dbm) {
    const double current = w.mean_total_power();
    if (!(current > 0.0)) {
        throw DegenerateInput("set_launch_power: waveform has zero power");
    }
    const double scale = std::sqrt(dbm_to_watts(p_dbm) / current);
    DualPolWaveform out = w;
    for (auto& s : out.x) s *= scale;
    for (auto& s : out.y) s *= scale;
    return out;
}

RxSymbols matched_filter_and_downsample(const DualPolWaveform& w, const PulseShapeConfig& cfg,
                                        std::size_t n_symbols) {
    cfg.validate();
    if (w.sps != cfg.sps_tx) {
        throw ConfigError("matched filter: waveform sps " + std::to_string(w.sps) +
                          " differs from pulse.sps_tx " + std::to_string(cfg.sps_tx));
    }
    const auto sps = static_cast<std::size_t>(cfg.sps_tx);
    if (n_symbols * sps > w.size()) {
        throw InvalidLength("matched filter: " + std::to_string(n_symbols) + " symbols requested but only " +
                            std::to_string(w.size() / sps) + " available");
    }
    const std::size_t n = w.size();
    const auto spectrum = circular_filter_spectrum(rrc_taps(cfg), n);
    Fft fft(n);
    std::vector<cplx> fx = w.x;
    std::vector<cplx> fy = w.y;
    circular_filter(fx, spectrum, fft);
    circular_filter(fy, spectrum, fft);
    // Cascade peak is sum h^2 == sps.
    const double inv_peak = 1.0 / static_cast<double>(sps);
    RxSymbols rx;
    rx.x.resize(n_symbols);
    rx.y.resize(n_symbols);
    for (std::size_t k = 0; k < n_symbols; ++k) {
        rx.x[k] = fx[k * sps] * inv_peak;
        rx.y[k] = fy[k * sps] * inv_peak;
    }
    return rx;
}

}  // namespace mteq::signal
