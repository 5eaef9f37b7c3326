#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mteq/dataset.hpp"
#include "mteq/eval.hpp"
#include "mteq/trainer.hpp"

namespace mteq::config {

// Desk-scale minibatch: 2^13 / 64 = 128 Adam steps per epoch.
inline constexpr std::size_t kDeskBatch = 64;

// Everything a command needs, as one tree. Grids left unset fall back to the
// defaults of the sampler or sweep; setting a grid on an axis the mode does
// not vary is a configuration error.
struct ExperimentConfig {
    dataset::SimulationConfig sim;
    dataset::ScenarioRange range;

    dataset::SamplerMode mode = dataset::SamplerMode::StlFixed;
    dataset::Scenario fixed{5.0, 40.0, 50, 0};
    std::optional<std::vector<double>> power_grid;
    std::optional<std::vector<double>> rate_grid;
    std::optional<std::vector<int>> span_grid;

    int n_layers = 4;
    int hidden = 100;
    int window = dataset::kPaperWindow;

    std::optional<std::size_t> epochs;  // unset: 1200 for universal, 1000 otherwise
    std::size_t epoch_size = std::size_t{1} << 18;
    std::size_t batch = 2000;
    nn::AdamHyper adam;
    std::size_t micro_batch = 125;
    nn::Precision precision = nn::Precision::F32;
    std::size_t checkpoint_every = 10;
    std::size_t subframe_symbols = std::size_t{1} << 14;

    std::size_t eval_symbols = 100000;
    std::size_t eval_min_symbols = 10000;
    std::size_t eval_subframe_symbols = std::size_t{1} << 14;
    std::vector<int> sweep_spans = {10, 15, 20, 25, 30, 35, 40, 45, 50};
    std::vector<double> sweep_power = {-1, 0, 1, 2, 3, 4, 5};
    std::vector<double> sweep_rate = {30, 35, 40, 45, 50, 55, 60, 65, 70};
    dataset::Scenario sweep_fixed{5.0, 40.0, 50, 0};

    std::uint64_t master_seed = 1;
    std::uint64_t eval_seed = 1;
    std::string output_dir = "out";
    int threads = 1;

    static ExperimentConfig paper();
    // Laptop-sized preset: window 41, 2 x 16 biLSTM, 2^13-example epochs,
    // 30 epochs, spans 2..10, smaller sweeps.
    void apply_desk_scale();

    std::size_t effective_epochs() const;
    dataset::SamplerSpec sampler() const;
    nn::TrainConfig train_config() const;
    dataset::DataGenConfig datagen() const;
    eval::EvalConfig eval_config() const;
    eval::SweepSpec sweep_spec(eval::SweepAxis axis) const;

    void validate() const;
    std::string to_json() const;  // canonical, pretty-printed
    std::uint64_t digest() const;
};

// Overlay a JSON document onto `base`. Unknown keys and type errors raise
// ConfigError naming the field path (e.g. "train.batch").
ExperimentConfig parse_json(const std::string& text, ExperimentConfig base = ExperimentConfig::paper());
ExperimentConfig load_file(const std::string& path, ExperimentConfig base = ExperimentConfig::paper());

}  // namespace mteq::config
