#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mteq/fft.hpp"

namespace mteq::signal {

using Bits = std::vector<std::uint8_t>;
using Symbols = std::vector<cplx>;

// Gray-coded 16-QAM, unit average energy. A 4-bit word b0 b1 b2 b3 (b0 sent
// first) selects the in-phase level from (b0, b1) and the quadrature level from
// (b2, b3) using the per-rail Gray code
//
//     00 -> -3    01 -> -1    11 -> +1    10 -> +3
//
// and the point is (I + jQ) / sqrt(10).
inline constexpr double kQamScale = 0.31622776601683794;  // 1 / sqrt(10)

// Per-rail level (in units of kQamScale) for a 2-bit Gray label (b_hi << 1 | b_lo).
int gray_level(unsigned two_bits);

// The 16 constellation points indexed by the 4-bit word (b0 << 3 | b1 << 2 | b2 << 1 | b3).
const std::array<cplx, 16>& constellation();

struct SymbolFrame {
    Symbols x_symbols;
    Symbols y_symbols;
    Bits bits_x;
    Bits bits_y;
    std::uint64_t seed = 0;

    std::size_t size() const { return x_symbols.size(); }
};

struct DualPolWaveform {
    std::vector<cplx> x;
    std::vector<cplx> y;
    double sample_rate = 0.0;  // Hz
    double symbol_rate = 0.0;  // Hz
    int sps = 0;

    std::size_t size() const { return x.size(); }
    double total_energy() const;      // sum |x|^2 + |y|^2 over samples
    double mean_total_power() const;  // total_energy / samples
};

struct PulseShapeConfig {
    double rolloff = 0.1;
    int filter_span_symbols = 32;
    int sps_tx = 8;

    void validate() const;
};

SymbolFrame generate_frame(std::size_t n_symbols, std::uint64_t seed);

Symbols map_bits_to_16qam(std::span<const std::uint8_t> bits);

Bits demap_16qam_hard(std::span<const cplx> received);

// Root-raised-cosine taps for the config, energy-normalized so that
// sum h^2 == sps. Length filter_span_symbols * sps + 1, centered.
std::vector<double> rrc_taps(const PulseShapeConfig& cfg);

// Upsample by sps and filter with the RRC. Convolution is circular over the
// frame, so the waveform is one period of a periodic signal, and the filter is
// zero-phase (no group delay to track downstream).
DualPolWaveform shape_pulse(const SymbolFrame& frame, const PulseShapeConfig& cfg, double symbol_rate);

DualPolWaveform set_launch_power(const DualPolWaveform& w, double p_dbm);

double dbm_to_watts(double p_dbm);
double watts_to_dbm(double watts);

struct RxSymbols {
    Symbols x;
    Symbols y;
};

// Circular RRC matched filter followed by sampling at symbol centers.
// Returns exactly n_symbols per polarization starting at symbol 0.
RxSymbols matched_filter_and_downsample(const DualPolWaveform& w, const PulseShapeConfig& cfg,
                                        std::size_t n_symbols);

}  // namespace mteq::signal
