#pragma once

#include <span>
#include <vector>

#include "mteq/signal.hpp"

namespace mteq::dsp {

using signal::DualPolWaveform;
using signal::Symbols;

struct CdcConfig {
    double total_length_m = 0.0;
    double beta2 = 0.0;          // s^2/m
    bool whole_frame = true;     // single FFT over the full (periodic) frame

    void validate() const;
};

// Frequency-domain CD compensation: multiply by exp(-i (beta2/2) w^2 L), the
// exact inverse of channel::dispersion_halfstep with alpha = 0.
DualPolWaveform cdc(const DualPolWaveform& w, const CdcConfig& cfg);

struct PolNormalization {
    double scale = 1.0;          // applied real factor
    double rotation_deg = 0.0;   // applied rotation
};

struct NormalizationRecord {
    PolNormalization x;
    PolNormalization y;
};

struct NormalizedSymbols {
    Symbols x;
    Symbols y;
    NormalizationRecord record;
};

// Per-polarization unit-power scaling plus data-aided common phase removal
// (rotation maximizing Re sum tx * conj(rx)). tx is the known transmitted frame.
NormalizedSymbols normalize_symbols(std::span<const cplx> rx_x, std::span<const cplx> rx_y,
                                    std::span<const cplx> tx_x, std::span<const cplx> tx_y);

// Single-polarization form of the above.
Symbols normalize_polarization(std::span<const cplx> rx, std::span<const cplx> tx, PolNormalization* record);

inline constexpr double kEvmFloorDb = -300.0;

struct DistortionMetrics {
    double evm_db = kEvmFloorDb;
    std::vector<cplx> error;  // rx - tx
};

// EVM = 10 log10(E|rx - tx|^2 / E|tx|^2); an exact match reports kEvmFloorDb.
DistortionMetrics residual_distortion_metrics(std::span<const cplx> rx, std::span<const cplx> tx);

double evm_db(std::span<const cplx> rx, std::span<const cplx> tx);

// Integer symbol lag d in [-max_lag, max_lag] maximizing |sum_k rx[k + d] conj(tx[k])|
// (circular indexing). Used to confirm alignment in tests; the pipeline itself
// knows its delays.
int find_symbol_delay(std::span<const cplx> rx, std::span<const cplx> tx, int max_lag);

}  // namespace mteq::dsp
