#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mteq/dataset.hpp"
#include "mteq/trainer.hpp"

namespace mteq::eval {

// Hamming distance / length. Raises InvalidLength on mismatched or empty input.
double ber(std::span<const std::uint8_t> tx_bits, std::span<const std::uint8_t> rx_bits);

// Inverse complementary error function on (0, 2), by Newton iteration on
// std::erfc with a bisection fallback; |erfc(x) - y| / y below ~1e-15.
double erfc_inv(double y);

// Q_dB = 20 log10(sqrt(2) erfc^-1(2 BER)) for 0 < ber < 0.5; QUndefined for
// ber >= 0.5; ConfigError for ber <= 0 (use q_factor_counted for clamping).
double q_factor_from_ber(double ber);

struct QEstimate {
    double ber = 0.0;       // measured
    double ber_used = 0.0;  // after the zero-error clamp
    double q_db = 0.0;
    bool clamped = false;
};

// Zero errors are replaced by 1 / (2 n_bits) and flagged.
QEstimate q_factor_counted(std::size_t errors, std::size_t n_bits);

enum class Method { CDC, STL, MTL_Spans, MTL_Power, MTL_Rate, MTL_Universal };

const char* to_string(Method m);
Method method_from_string(const std::string& s);
Method method_for_mode(dataset::SamplerMode mode);

struct SweepResult {
    Method method = Method::CDC;
    dataset::Scenario scenario;
    double q_db = 0.0;
    double ber = 0.0;
    bool clamped = false;
    std::size_t n_symbols_evaluated = 0;
};

struct EvalConfig {
    dataset::SimulationConfig sim;
    std::size_t n_symbols = 100000;  // evaluated X-pol symbols per point
    std::size_t min_symbols = 10000;
    // Scored symbols per simulated frame. Longer points are split into
    // independently seeded frames; short frames stay cache resident.
    std::size_t subframe_symbols = std::size_t{1} << 14;
    // Context needed by the widest model compared on a grid; CDC is scored on
    // the same symbols so every method sees an identical test set.
    int window = dataset::kPaperWindow;
    nn::Precision precision = nn::Precision::F32;
    int threads = 1;

    void validate() const;
};

// Runs a fresh test frame through the chain and scores X-pol BER. `model` is
// null for the CDC baseline. The scenario seed must be in the Eval namespace.
SweepResult evaluate(Method method, const nn::EqualizerModel* model, const dataset::Scenario& s,
                     const EvalConfig& cfg);

enum class SweepAxis { Spans, Power, Rate };

const char* to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

struct SweepMethod {
    Method method = Method::CDC;
    const nn::EqualizerModel* model = nullptr;
};

struct SweepSpec {
    SweepAxis axis = SweepAxis::Spans;
    dataset::Scenario fixed{5.0, 40.0, 50, 0};
    std::vector<double> grid;
    std::uint64_t master_seed = 1;

    static SweepSpec paper_grid(SweepAxis axis);
};

// Evaluates every method at every grid point. All methods at one grid point
// share the test frame; points are spread over cfg.threads and the output is
// ordered by (grid index, method index).
std::vector<SweepResult> sweep(const SweepSpec& spec, const std::vector<SweepMethod>& methods, const EvalConfig& cfg);

inline constexpr const char* kSweepCsvHeader = "method,p_dbm,rs_gbd,n_spans,n_symbols,ber,q_db,seed";

std::string sweep_csv(const std::vector<SweepResult>& rows);
void write_sweep_csv(const std::vector<SweepResult>& rows, const std::string& path);

}  // namespace mteq::eval
