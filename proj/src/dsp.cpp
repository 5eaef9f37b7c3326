#include "mteq/dsp.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mteq/errors.hpp"

namespace mteq::dsp {

void CdcConfig::validate() const {
    if (!(total_length_m >= 0.0)) throw ConfigError("cdc.total_length_m must be >= 0");
}

DualPolWaveform cdc(const DualPolWaveform& w, const CdcConfig& cfg) {
    cfg.validate();
    const std::size_t n = w.size();
    if (cfg.total_length_m == 0.0 || cfg.beta2 == 0.0 || n == 0) {
        return w;
    }
    Fft fft(n);
    DualPolWaveform out = w;
    std::vector<cplx> factor(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double om = fft_angular_frequency(k, n, w.sample_rate);
        const double ph = -0.5 * cfg.beta2 * om * om * cfg.total_length_m;
        factor[k] = cplx(std::cos(ph), std::sin(ph));
    }
    for (auto* pol : {&out.x, &out.y}) {
        auto buf = fft.data();
        std::copy(pol->begin(), pol->end(), buf.begin());
        fft.forward();
        for (std::size_t k = 0; k < n; ++k) buf[k] *= factor[k];
        fft.inverse();
        std::copy(buf.begin(), buf.end(), pol->begin());
    }
    return out;
}

Symbols normalize_polarization(std::span<const cplx> rx, std::span<const cplx> tx, PolNormalization* record) {
    if (rx.empty()) throw DegenerateInput("normalize_symbols: empty input");
    if (rx.size() != tx.size()) {
        throw InvalidLength("normalize_symbols: rx/tx length mismatch (" + std::to_string(rx.size()) + " vs " +
                            std::to_string(tx.size()) + ")");
    }
    double power = 0.0;
    cplx corr{};
    for (std::size_t k = 0; k < rx.size(); ++k) {
        power += std::norm(rx[k]);
        corr += tx[k] * std::conj(rx[k]);
    }
    power /= static_cast<double>(rx.size());
    if (!(power > 0.0)) throw DegenerateInput("normalize_symbols: all-zero input");
    const double scale = 1.0 / std::sqrt(power);
    const double angle = (std::abs(corr) > 0.0) ? std::arg(corr) : 0.0;
    const cplx factor = std::polar(scale, angle);
    Symbols out(rx.size());
    for (std::size_t k = 0; k < rx.size(); ++k) out[k] = rx[k] * factor;
    if (record != nullptr) {
        record->scale = scale;
        record->rotation_deg = angle * 180.0 / std::numbers::pi;
    }
    return out;
}

NormalizedSymbols normalize_symbols(std::span<const cplx> rx_x, std::span<const cplx> rx_y,
                                    std::span<const cplx> tx_x, std::span<const cplx> tx_y) {
    NormalizedSymbols out;
    out.x = normalize_polarization(rx_x, tx_x, &out.record.x);
    out.y = normalize_polarization(rx_y, tx_y, &out.record.y);
    return out;
}

DistortionMetrics residual_distortion_metrics(std::span<const cplx> rx, std::span<const cplx> tx) {
    if (rx.size() != tx.size()) {
        throw InvalidLength("residual_distortion_metrics: length mismatch (" + std::to_string(rx.size()) +
                            " vs " + std::to_string(tx.size()) + ")");
    }
    if (rx.empty()) throw InvalidLength("residual_distortion_metrics: empty input");
    DistortionMetrics m;
    m.error.resize(rx.size());
    double err = 0.0;
    double ref = 0.0;
    for (std::size_t k = 0; k < rx.size(); ++k) {
        m.error[k] = rx[k] - tx[k];
        err += std::norm(m.error[k]);
        ref += std::norm(tx[k]);
    }
    if (!(ref > 0.0)) throw DegenerateInput("residual_distortion_metrics: zero reference power");
    m.evm_db = (err > 0.0) ? std::max(kEvmFloorDb, 10.0 * std::log10(err / ref)) : kEvmFloorDb;
    return m;
}

double evm_db(std::span<const cplx> rx, std::span<const cplx> tx) {
    return residual_distortion_metrics(rx, tx).evm_db;
}

int find_symbol_delay(std::span<const cplx> rx, std::span<const cplx> tx, int max_lag) {
    if (rx.size() != tx.size() || rx.empty()) {
        throw InvalidLength("find_symbol_delay: rx/tx must be equal-length and nonempty");
    }
    const auto n = static_cast<std::ptrdiff_t>(rx.size());
    int best = 0;
    double best_mag = -1.0;
    for (int d = -max_lag; d <= max_lag; ++d) {
        cplx acc{};
        for (std::ptrdiff_t k = 0; k < n; ++k) {
            std::ptrdiff_t j = (k + d) % n;
            if (j < 0) j += n;
            acc += rx[static_cast<std::size_t>(j)] * std::conj(tx[static_cast<std::size_t>(k)]);
        }
        if (std::abs(acc) > best_mag) {
            best_mag = std::abs(acc);
            best = d;
        }
    }
    return best;
}

}  // namespace mteq::dsp
