#include "mteq/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "mteq/errors.hpp"
#include "mteq/rng.hpp"

namespace mteq::channel {

namespace {

// cos/sin by Taylor series through phi^14; truncation error below 1e-15 for
// |phi| <= kSeriesMaxPhase. Vectorizes, unlike sincos.
constexpr double kSeriesMaxPhase = 0.5;

inline void series_expi(double phi, double& c, double& s) {
    const double p2 = phi * phi;
    c = 1.0 + p2 * (-1.0 / 2 + p2 * (1.0 / 24 + p2 * (-1.0 / 720 + p2 * (1.0 / 40320 +
        p2 * (-1.0 / 3628800 + p2 * (1.0 / 479001600 + p2 * (-1.0 / 87178291200.0)))))));
    s = phi * (1.0 + p2 * (-1.0 / 6 + p2 * (1.0 / 120 + p2 * (-1.0 / 5040 + p2 * (1.0 / 362880 +
        p2 * (-1.0 / 39916800 + p2 * (1.0 / 6227020800.0 + p2 * (-1.0 / 1307674368000.0))))))));
}

// Per-bin linear propagator exp(i (beta2/2) w^2 dz - (alpha/2) dz) / N, with the
// inverse-FFT normalization folded in. w^2 is even in the bin index, so only
// bins 0..N/2 are stored. The phase c b^2 is built by the rotation recurrence
// e(b+1) = e(b) r(b), r(b+1) = r(b) q, re-anchored with an exact sincos every
// kAnchor bins so rounding drift stays near 1e-14.
class LinearOperator {
public:
    LinearOperator(std::size_t n, double sample_rate, double beta2, double alpha)
        : n_(n), alpha_(alpha), half_(n / 2 + 1), re_(half_), im_(half_) {
        const double dw = 2.0 * std::numbers::pi * sample_rate / static_cast<double>(n);
        phase_per_bin2_ = 0.5 * beta2 * dw * dw;
    }

    void apply(std::span<cplx> x, std::span<cplx> y, double dz) {
        if (dz != cached_dz_) rebuild(dz);
        auto* xp = reinterpret_cast<double*>(x.data());
        auto* yp = reinterpret_cast<double*>(y.data());
        auto mul = [&](std::size_t k, std::size_t b) {
            const double fr = re_[b], fi = im_[b];
            const double xr = xp[2 * k], xi = xp[2 * k + 1];
            const double yr = yp[2 * k], yi = yp[2 * k + 1];
            xp[2 * k] = xr * fr - xi * fi;
            xp[2 * k + 1] = xr * fi + xi * fr;
            yp[2 * k] = yr * fr - yi * fi;
            yp[2 * k + 1] = yr * fi + yi * fr;
        };
        const std::size_t mid = std::min(half_, n_);
        for (std::size_t k = 0; k < mid; ++k) mul(k, k);
        for (std::size_t k = mid; k < n_; ++k) mul(k, n_ - k);
    }

private:
    static constexpr std::size_t kAnchor = 32;

    void rebuild(double dz) {
        const double c = phase_per_bin2_ * dz;
        const double amp = std::exp(-0.5 * alpha_ * dz) / static_cast<double>(n_);
        for (std::size_t b0 = 0; b0 < half_; b0 += kAnchor) {
            const double bb = static_cast<double>(b0);
            double er = std::cos(c * bb * bb), ei = std::sin(c * bb * bb);
            double rr = std::cos(c * (2.0 * bb + 1.0)), ri = std::sin(c * (2.0 * bb + 1.0));
            const double qr = std::cos(2.0 * c), qi = std::sin(2.0 * c);
            const std::size_t end = std::min(half_, b0 + kAnchor);
            for (std::size_t b = b0; b < end; ++b) {
                re_[b] = amp * er;
                im_[b] = amp * ei;
                const double ner = er * rr - ei * ri;
                const double nei = er * ri + ei * rr;
                er = ner;
                ei = nei;
                const double nrr = rr * qr - ri * qi;
                const double nri = rr * qi + ri * qr;
                rr = nrr;
                ri = nri;
            }
        }
        cached_dz_ = dz;
    }

    std::size_t n_;
    double alpha_;
    double phase_per_bin2_ = 0.0;
    std::size_t half_;
    std::vector<double> re_, im_;
    double cached_dz_ = -1.0;
};

void apply_linear(Fft& fx, Fft& fy, LinearOperator& op, double dz) {
    fx.forward();
    fy.forward();
    op.apply(fx.data(), fy.data(), dz);
    fx.inverse_unscaled();
    fy.inverse_unscaled();
}

// Applies the nonlinear phase and returns the peak total power (unchanged by
// the phase rotation). `scratch` holds per-sample power between the two passes
// so both loops vectorize.
double apply_nonlinear(std::span<cplx> x, std::span<cplx> y, double k_phase, std::vector<double>& scratch) {
    auto* xp = reinterpret_cast<double*>(x.data());
    auto* yp = reinterpret_cast<double*>(y.data());
    const std::size_t n = x.size();
    scratch.resize(n);
    double* pw = scratch.data();
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = xp[2 * i] * xp[2 * i] + xp[2 * i + 1] * xp[2 * i + 1] + yp[2 * i] * yp[2 * i] +
                         yp[2 * i + 1] * yp[2 * i + 1];
        pw[i] = p;
        peak = p > peak ? p : peak;
    }
    if (k_phase * peak <= kSeriesMaxPhase) {
        for (std::size_t i = 0; i < n; ++i) {
            double c, s;
            series_expi(k_phase * pw[i], c, s);
            const double xr = xp[2 * i], xi = xp[2 * i + 1];
            const double yr = yp[2 * i], yi = yp[2 * i + 1];
            xp[2 * i] = xr * c - xi * s;
            xp[2 * i + 1] = xr * s + xi * c;
            yp[2 * i] = yr * c - yi * s;
            yp[2 * i + 1] = yr * s + yi * c;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            const double phi = k_phase * pw[i];
            const double c = std::cos(phi), s = std::sin(phi);
            const double xr = xp[2 * i], xi = xp[2 * i + 1];
            const double yr = yp[2 * i], yi = yp[2 * i + 1];
            xp[2 * i] = xr * c - xi * s;
            xp[2 * i + 1] = xr * s + xi * c;
            yp[2 * i] = yr * c - yi * s;
            yp[2 * i + 1] = yr * s + yi * c;
        }
    }
    return peak;
}

double peak_power(std::span<const cplx> x, std::span<const cplx> y) {
    double peak = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        peak = std::max(peak, std::norm(x[i]) + std::norm(y[i]));
    }
    return peak;
}

}  // namespace

void FiberParams::validate() const {
    if (!(gamma > 0.0)) throw ConfigError("fiber.gamma must be > 0");
    if (!(span_length_km > 0.0)) throw ConfigError("fiber.span_length_km must be > 0");
    if (!(alpha_db_per_km >= 0.0)) throw ConfigError("fiber.alpha_db_per_km must be >= 0");
    if (!(wavelength_nm > 0.0)) throw ConfigError("fiber.wavelength_nm must be > 0");
}

double FiberParams::beta2() const {
    return beta2_from_D(dispersion_D, wavelength_nm);
}

double FiberParams::alpha_neper_per_m() const {
    return alpha_db_per_km * std::log(10.0) / 10.0 * 1e-3;
}

void AmplifierParams::validate() const {
    if (!(noise_figure_db >= 3.0)) {
        throw ConfigError("amplifier.noise_figure_db must be >= 3 dB (quantum limit), got " +
                          std::to_string(noise_figure_db));
    }
    if (!(gain_db >= 0.0)) throw ConfigError("amplifier.gain_db must be >= 0");
}

void SsfmConfig::validate() const {
    if (!(step_km > 0.0)) throw ConfigError("ssfm.step_km must be > 0");
    if (!(max_nonlinear_phase_rad > 0.0 && max_nonlinear_phase_rad <= 0.1)) {
        throw ConfigError("ssfm.max_nonlinear_phase_rad must be in (0, 0.1]");
    }
}

double beta2_from_D(double D_ps_per_nm_km, double wavelength_nm) {
    const double D = D_ps_per_nm_km * 1e-6;  // s/m^2
    const double lambda = wavelength_nm * 1e-9;
    return -D * lambda * lambda / (2.0 * std::numbers::pi * kSpeedOfLight);
}

DualPolWaveform dispersion_halfstep(const DualPolWaveform& w, double beta2, double alpha_neper_per_m,
                                    double dz_m) {
    if (dz_m < 0.0) throw ConfigError("dispersion_halfstep: dz must be >= 0");
    const std::size_t n = w.size();
    if (dz_m == 0.0 || n == 0) return w;
    LinearOperator op(n, w.sample_rate, beta2, alpha_neper_per_m);
    Fft fx(n), fy(n);
    std::copy(w.x.begin(), w.x.end(), fx.data().begin());
    std::copy(w.y.begin(), w.y.end(), fy.data().begin());
    apply_linear(fx, fy, op, dz_m);
    DualPolWaveform out = w;
    std::copy(fx.data().begin(), fx.data().end(), out.x.begin());
    std::copy(fy.data().begin(), fy.data().end(), out.y.begin());
    return out;
}

DualPolWaveform nonlinear_step(const DualPolWaveform& w, double gamma_per_w_m, double dz_m) {
    if (dz_m < 0.0) throw ConfigError("nonlinear_step: dz must be >= 0");
    DualPolWaveform out = w;
    if (dz_m == 0.0) return out;
    std::vector<double> scratch;
    apply_nonlinear(out.x, out.y, kManakovFactor * gamma_per_w_m * dz_m, scratch);
    return out;
}

DualPolWaveform ssfm_span(const DualPolWaveform& w, const FiberParams& fiber, const SsfmConfig& cfg,
                          SpanStats* stats) {
    fiber.validate();
    cfg.validate();
    if (w.sps < 4) {
        throw ConfigError("ssfm_span: sample rate must be >= 4x symbol rate (sps " + std::to_string(w.sps) + ")");
    }
    const std::size_t n = w.size();
    const double length = fiber.span_length_km * 1e3;
    const double gamma = fiber.gamma_per_w_m();
    const double k_nl = kManakovFactor * gamma;
    const double step_max = cfg.step_km * 1e3;

    LinearOperator op(n, w.sample_rate, fiber.beta2(), fiber.alpha_neper_per_m());
    Fft fx(n), fy(n);
    std::copy(w.x.begin(), w.x.end(), fx.data().begin());
    std::copy(w.y.begin(), w.y.end(), fy.data().begin());

    auto choose_step = [&](double peak, double remaining) {
        double h = step_max;
        if (peak > 0.0) {
            h = std::min(h, cfg.max_nonlinear_phase_rad / (k_nl * peak));
        }
        // Avoid leaving a sliver at the end of the span.
        if (h >= remaining || remaining - h < 1e-9 * length) {
            h = remaining;
        }
        return h;
    };

    std::vector<double> scratch(n);
    SpanStats st;
    st.min_step_m = length;
    auto record = [&](double h) {
        ++st.steps;
        st.min_step_m = std::min(st.min_step_m, h);
        st.max_step_m = std::max(st.max_step_m, h);
    };

    double remaining = length;
    double h = choose_step(peak_power(fx.data(), fy.data()), remaining);
    if (cfg.symmetric) {
        apply_linear(fx, fy, op, 0.5 * h);
        while (true) {
            const double peak = apply_nonlinear(fx.data(), fy.data(), k_nl * h, scratch);
            record(h);
            remaining -= h;
            if (remaining <= 0.0) {
                apply_linear(fx, fy, op, 0.5 * h);
                break;
            }
            const double h_next = choose_step(peak, remaining);
            // Adjacent half steps merged into one linear step.
            apply_linear(fx, fy, op, 0.5 * (h + h_next));
            h = h_next;
        }
    } else {
        // First-order scheme (linear full step, then nonlinear), kept for
        // convergence-order comparisons.
        while (remaining > 0.0) {
            apply_linear(fx, fy, op, h);
            const double peak = apply_nonlinear(fx.data(), fy.data(), k_nl * h, scratch);
            record(h);
            remaining -= h;
            if (remaining > 0.0) h = choose_step(peak, remaining);
        }
    }

    if (stats != nullptr) *stats = st;
    DualPolWaveform out = w;
    std::copy(fx.data().begin(), fx.data().end(), out.x.begin());
    std::copy(fy.data().begin(), fy.data().end(), out.y.begin());
    return out;
}

double spontaneous_emission_factor(double noise_figure_db) {
    return std::pow(10.0, noise_figure_db / 10.0) / 2.0;
}

double ase_psd_per_pol(const AmplifierParams& amp, double carrier_frequency_hz) {
    const double gain = std::pow(10.0, amp.gain_db / 10.0);
    return (gain - 1.0) * kPlanck * carrier_frequency_hz * spontaneous_emission_factor(amp.noise_figure_db);
}

DualPolWaveform edfa_amplify(const DualPolWaveform& w, const AmplifierParams& amp, double carrier_frequency_hz,
                             std::uint64_t seed) {
    amp.validate();
    const double gain = std::pow(10.0, amp.gain_db / 10.0);
    const double field_gain = std::sqrt(gain);
    DualPolWaveform out = w;
    for (auto& s : out.x) s *= field_gain;
    for (auto& s : out.y) s *= field_gain;
    if (!amp.ase_enabled || gain == 1.0) {
        return out;
    }
    const double noise_power = ase_psd_per_pol(amp, carrier_frequency_hz) * w.sample_rate;
    const double sigma = std::sqrt(noise_power / 2.0);  // per real quadrature
    RngStream rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    for (auto* pol : {&out.x, &out.y}) {
        for (auto& s : *pol) {
            const double re = gauss(rng.engine());
            const double im = gauss(rng.engine());
            s += cplx(re, im);
        }
    }
    return out;
}

DualPolWaveform propagate_link(const DualPolWaveform& w, int n_spans, const FiberParams& fiber,
                               const AmplifierParams& amp, const SsfmConfig& cfg, std::uint64_t seed) {
    if (n_spans < 1) throw ConfigError("propagate_link: n_spans must be >= 1");
    if (std::abs(amp.gain_db - fiber.span_loss_db()) > 1e-9) {
        throw ConfigError("propagate_link: amplifier gain " + std::to_string(amp.gain_db) +
                          " dB does not match span loss " + std::to_string(fiber.span_loss_db()) + " dB");
    }
    const double nu = fiber.carrier_frequency_hz();
    DualPolWaveform cur = w;
    for (int k = 0; k < n_spans; ++k) {
        cur = ssfm_span(cur, fiber, cfg);
        cur = edfa_amplify(cur, amp, nu, split_seed(seed, static_cast<std::uint64_t>(k)));
    }
    return cur;
}

double link_length_km(int n_spans, const FiberParams& fiber) {
    return n_spans * fiber.span_length_km;
}

}  // namespace mteq::channel
