#pragma once

#include <cstdint>

#include "mteq/signal.hpp"

namespace mteq::channel {

using signal::DualPolWaveform;

inline constexpr double kSpeedOfLight = 2.99792458e8;  // m/s
inline constexpr double kPlanck = 6.62607015e-34;      // J s

// Standard single-mode fiber, one span.
struct FiberParams {
    double gamma = 1.2;              // 1/(W km)
    double dispersion_D = 16.8;      // ps/(nm km)
    double alpha_db_per_km = 0.21;   // dB/km
    double span_length_km = 50.0;
    double wavelength_nm = 1550.0;

    void validate() const;

    double beta2() const;                  // s^2/m
    double alpha_neper_per_m() const;      // power attenuation, 1/m
    double gamma_per_w_m() const { return gamma * 1e-3; }
    double span_loss_db() const { return alpha_db_per_km * span_length_km; }
    double carrier_frequency_hz() const { return kSpeedOfLight / (wavelength_nm * 1e-9); }
};

struct AmplifierParams {
    double noise_figure_db = 4.5;
    double gain_db = 10.5;
    bool ase_enabled = true;  // false is a debug override for noiseless links

    void validate() const;
};

// Split-step control. The step actually taken is
//   min(step_km, max_nonlinear_phase_rad / ((8/9) gamma P_peak))
// with P_peak the current peak of |Ax|^2 + |Ay|^2.
struct SsfmConfig {
    double step_km = 1.0;
    bool symmetric = true;
    double max_nonlinear_phase_rad = 3e-3;

    void validate() const;
};

inline constexpr double kManakovFactor = 8.0 / 9.0;

// beta2 = -D lambda^2 / (2 pi c), SI units.
double beta2_from_D(double D_ps_per_nm_km, double wavelength_nm);

// Linear operator over dz metres: each frequency bin is multiplied by
// exp(+i (beta2/2) w^2 dz - (alpha/2) dz); both polarizations alike.
DualPolWaveform dispersion_halfstep(const DualPolWaveform& w, double beta2, double alpha_neper_per_m, double dz_m);

// Manakov nonlinear operator over dz metres: phase rotation by
// (8/9) gamma (|Ax|^2 + |Ay|^2) dz on both polarizations. gamma in 1/(W m).
DualPolWaveform nonlinear_step(const DualPolWaveform& w, double gamma_per_w_m, double dz_m);

struct SpanStats {
    int steps = 0;
    double min_step_m = 0.0;
    double max_step_m = 0.0;
};

// One span of fiber with the symmetric split-step Fourier method.
DualPolWaveform ssfm_span(const DualPolWaveform& w, const FiberParams& fiber, const SsfmConfig& cfg,
                          SpanStats* stats = nullptr);

// Amplified spontaneous emission PSD per polarization, W/Hz:
// (G - 1) h nu n_sp with n_sp = 10^(NF/10) / 2.
double spontaneous_emission_factor(double noise_figure_db);
double ase_psd_per_pol(const AmplifierParams& amp, double carrier_frequency_hz);

// Gain sqrt(G) on the field, plus white circular Gaussian ASE over the whole
// simulation bandwidth (= sample rate) on each polarization.
DualPolWaveform edfa_amplify(const DualPolWaveform& w, const AmplifierParams& amp, double carrier_frequency_hz,
                             std::uint64_t seed);

// n_spans x (ssfm_span, edfa_amplify). Span k draws its ASE from split_seed(seed, k).
DualPolWaveform propagate_link(const DualPolWaveform& w, int n_spans, const FiberParams& fiber,
                               const AmplifierParams& amp, const SsfmConfig& cfg, std::uint64_t seed);

double link_length_km(int n_spans, const FiberParams& fiber);

}  // namespace mteq::channel
