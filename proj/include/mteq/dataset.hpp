#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mteq/channel.hpp"
#include "mteq/dsp.hpp"
#include "mteq/rng.hpp"
#include "mteq/signal.hpp"

namespace mteq::dataset {

struct Scenario {
    double p_dbm = 5.0;
    double rs_gbd = 40.0;
    int n_spans = 50;
    std::uint64_t seed = 0;

    bool same_parameters(const Scenario& o) const {
        return p_dbm == o.p_dbm && rs_gbd == o.rs_gbd && n_spans == o.n_spans;
    }
};

// Admissible scenario box. Defaults are the paper's ranges; the desk-scale
// preset widens the span axis.
struct ScenarioRange {
    double p_min_dbm = -1.0;
    double p_max_dbm = 5.0;
    double rs_min_gbd = 30.0;
    double rs_max_gbd = 70.0;
    int spans_min = 10;
    int spans_max = 50;

    void check(const Scenario& s, const std::string& where = "scenario") const;
};

enum class SamplerMode { StlFixed, MtlSpans, MtlPower, MtlRate, Universal };

const char* to_string(SamplerMode m);
SamplerMode sampler_mode_from_string(const std::string& s);

struct SamplerSpec {
    SamplerMode mode = SamplerMode::StlFixed;
    // Values held on the axes a mode does not vary.
    double fixed_p_dbm = 5.0;
    double fixed_rs_gbd = 40.0;
    int fixed_n_spans = 50;
    std::vector<double> power_grid = {-1, 0, 1, 2, 3, 4, 5};
    std::vector<double> rate_grid = {30, 35, 40, 45, 50, 55, 60, 65, 70};
    std::vector<int> span_grid = {10, 15, 20, 25, 30, 35, 40, 45, 50};

    static SamplerSpec for_mode(SamplerMode mode);

    // Only the MTL-power regime sees the launch power as a fifth feature.
    bool power_feature() const { return mode == SamplerMode::MtlPower; }
    int feature_count() const { return power_feature() ? 5 : 4; }
    bool varies_power() const { return mode == SamplerMode::MtlPower || mode == SamplerMode::Universal; }
    bool varies_rate() const { return mode == SamplerMode::MtlRate || mode == SamplerMode::Universal; }
    bool varies_spans() const { return mode == SamplerMode::MtlSpans || mode == SamplerMode::Universal; }

    void validate(const ScenarioRange& range) const;
};

// Launch power feature: p_norm = (p_dbm - 2) / 3, mapping [-1, 5] dBm onto [-1, 1].
inline constexpr double kPowerNormCenter = 2.0;
inline constexpr double kPowerNormHalfWidth = 3.0;
inline double normalized_power(double p_dbm) { return (p_dbm - kPowerNormCenter) / kPowerNormHalfWidth; }

Scenario sample_scenario(const SamplerSpec& spec, RngStream& rng);

struct SimulationConfig {
    channel::FiberParams fiber;
    channel::AmplifierParams amp;  // gain is forced to the span loss
    channel::SsfmConfig ssfm;
    signal::PulseShapeConfig pulse;
    bool linear_only = false;      // debug: gamma = 0 (exact linear spans)

    void validate() const;
    channel::AmplifierParams amplifier() const;
    std::string describe() const;  // canonical text used for digests
};

// Symbols discarded at each frame edge: accumulated CD memory plus the RRC span.
std::size_t guard_symbols(const Scenario& s, const SimulationConfig& sim);

struct AlignedSymbols {
    signal::Symbols rx_x, rx_y;
    signal::Symbols tx_x, tx_y;
    signal::Bits tx_bits_x;
    dsp::NormalizationRecord normalization;
    std::size_t guard = 0;
    Scenario scenario;
};

// TX -> link -> CDC -> matched filter -> normalization, guard removed at both edges.
AlignedSymbols generate_scenario_data(const Scenario& s, std::size_t n_symbols, const SimulationConfig& sim);

// Example-major feature storage: example e, time t, feature f at
// features[(e * window + t) * n_features + f]; targets[2 e + {0, 1}].
struct Windows {
    int window = 0;
    int n_features = 0;
    std::vector<float> features;
    std::vector<float> targets;

    std::size_t size() const { return targets.size() / 2; }
    std::span<const float> example(std::size_t e) const {
        const auto stride = static_cast<std::size_t>(window) * static_cast<std::size_t>(n_features);
        return {features.data() + e * stride, stride};
    }
};

inline constexpr int kPaperWindow = 141;

// Stride-1 windows; columns (X_I, X_Q, Y_I, Y_Q[, p_norm]); target is tx_x at
// the window center (index window / 2).
Windows build_windows(std::span<const cplx> rx_x, std::span<const cplx> rx_y, std::span<const cplx> tx_x,
                      int window, std::optional<double> power_feature);

struct DataGenConfig {
    SimulationConfig sim;
    int window = kPaperWindow;
    std::size_t subframe_symbols = std::size_t{1} << 14;
    int threads = 1;

    std::string describe() const;
};

struct EpochDataset {
    int window = 0;
    int n_features = 0;
    SamplerMode mode = SamplerMode::StlFixed;
    std::uint64_t master_seed = 0;
    std::uint64_t epoch_index = 0;
    std::uint64_t generation_config_hash = 0;
    double power_norm_center = kPowerNormCenter;
    double power_norm_half_width = kPowerNormHalfWidth;
    std::vector<Scenario> scenarios;
    std::vector<dsp::NormalizationRecord> normalization;  // one per scenario
    std::vector<std::uint32_t> example_scenario;          // provenance per example
    std::vector<float> features;
    std::vector<float> targets;

    std::size_t size() const { return example_scenario.size(); }
    std::uint64_t digest() const;
};

EpochDataset generate_epoch(const SamplerSpec& spec, std::size_t epoch_size, std::uint64_t epoch_index,
                            std::uint64_t master_seed, const DataGenConfig& cfg);

inline constexpr std::uint16_t kDatasetVersion = 1;

void save_dataset(const EpochDataset& d, const std::string& path);
EpochDataset load_dataset(const std::string& path);

}  // namespace mteq::dataset
