#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mteq/dataset.hpp"
#include "mteq/nn.hpp"

namespace mteq::nn {

enum class Precision : std::uint8_t { F32 = 0, F64 = 1 };

struct EpochRecord {
    std::uint64_t epoch = 0;  // 0-based
    double loss = 0.0;        // mean of the epoch's batch losses
    double wall_seconds = 0.0;
    std::uint64_t scenario_digest = 0;
    std::uint64_t batches = 0;
};

struct TrainingProvenance {
    std::string mode;
    std::uint64_t master_seed = 0;
    std::uint64_t config_digest = 0;
    std::uint64_t epochs_completed = 0;
    std::uint64_t epoch_size = 0;
    std::uint64_t batch = 0;
    Precision precision = Precision::F32;
};

// What gets saved: parameters, optimizer state, provenance and loss history.
struct EqualizerModel {
    Model<double> model;
    AdamState<double> optimizer;
    TrainingProvenance provenance;
    std::vector<EpochRecord> history;
};

struct TrainConfig {
    dataset::SamplerSpec sampler;
    dataset::DataGenConfig data;
    int n_layers = 4;
    int hidden = 100;
    std::size_t epochs = 1000;
    std::size_t epoch_size = std::size_t{1} << 18;
    std::size_t batch = 2000;
    AdamHyper adam;
    std::uint64_t master_seed = 1;
    Precision precision = Precision::F32;
    // Examples per gradient chunk. Chunk gradients are summed in chunk order,
    // which makes the result independent of the thread count.
    std::size_t micro_batch = 125;
    int threads = 1;

    ModelConfig model_config() const;
    std::size_t batches_per_epoch() const { return epoch_size / batch; }  // remainder dropped
    void validate() const;
    std::string describe() const;
    std::uint64_t digest() const;
};

struct CheckpointPolicy {
    std::string path;            // empty: no checkpoints
    std::size_t every_epochs = 1;
    bool resume = true;          // continue from an existing checkpoint at path
    std::string loss_csv;        // empty: no CSV
};

using EpochCallback = std::function<void(const EpochRecord&)>;

EqualizerModel train(const TrainConfig& cfg, const CheckpointPolicy& policy = {}, const EpochCallback& on_epoch = {});

// One pass of minibatch Adam over n examples stored example-major in float.
// Batches are consecutive slices of `batch` examples; a trailing partial batch
// is dropped. Returns the mean batch loss (measured before each update).
template <typename T>
double fit_epoch(Model<T>& model, AdamState<T>& opt, std::span<const float> features, std::span<const float> targets,
                 std::size_t n_examples, std::size_t batch, std::size_t micro_batch, int threads);

// X-pol symbol estimates for every window.
std::vector<std::complex<double>> predict_symbols(const EqualizerModel& m, const dataset::Windows& w,
                                                  Precision precision = Precision::F32);

inline constexpr std::uint16_t kModelVersion = 1;

void save_model(const EqualizerModel& m, const std::string& path);
EqualizerModel load_model(const std::string& path);

void write_loss_csv(const std::vector<EpochRecord>& history, const std::string& path);

}  // namespace mteq::nn
