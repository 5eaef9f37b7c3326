#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mteq::nn {

struct ModelConfig {
    int n_layers = 4;
    int hidden = 100;
    int input_features = 4;
    int window = 141;
    int output_dim = 2;

    void validate() const;
    int center() const { return window / 2; }
    bool operator==(const ModelConfig&) const = default;
};

// Location of one tensor inside the flat parameter buffer (row-major).
struct TensorSlot {
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

// LSTM gate rows are stacked in the order input, forget, cell (g), output.
struct LstmDirectionSlots {
    TensorSlot W;  // 4H x D_in
    TensorSlot U;  // 4H x H
    TensorSlot b;  // 4H x 1
};

struct ParamLayout {
    std::vector<LstmDirectionSlots> fwd;
    std::vector<LstmDirectionSlots> bwd;
    TensorSlot dense_W;  // output_dim x 2H
    TensorSlot dense_b;  // output_dim x 1
    std::size_t total = 0;

    static ParamLayout build(const ModelConfig& cfg);
    int layer_input_dim(const ModelConfig& cfg, int layer) const;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Stacked biLSTM + dense readout on the center time step. All parameters live
// in one contiguous buffer laid out by ParamLayout, so optimizer state and
// serialization are flat loops.
template <typename T>
struct Model {
    ModelConfig config;
    ParamLayout layout;
    std::vector<T> params;

    Model() = default;
    explicit Model(const ModelConfig& cfg);

    MatrixMap<T> tensor(const TensorSlot& s) { return {params.data() + s.offset, s.rows, s.cols}; }
    ConstMatrixMap<T> tensor(const TensorSlot& s) const { return {params.data() + s.offset, s.rows, s.cols}; }

    std::size_t parameter_count() const { return params.size(); }

    template <typename U>
    Model<U> cast() const {
        Model<U> m;
        m.config = config;
        m.layout = layout;
        m.params.assign(params.begin(), params.end());
        return m;
    }
};

// Uniform(-1/sqrt(H), 1/sqrt(H)) kernels, zero biases except forget gate = 1.
template <typename T>
void initialize(Model<T>& m, std::uint64_t seed);

// ---- single-cell reference API (used by tests and the scalar oracle) ----

template <typename T>
struct CellCache {
    std::vector<T> gates;  // activated i, f, g, o (4H)
    std::vector<T> c_prev;
    std::vector<T> c;
    std::vector<T> h;
};

// One LSTM step for a single example: returns h_t, c_t and the cache.
template <typename T>
CellCache<T> lstm_cell_forward(std::span<const T> x, std::span<const T> h_prev, std::span<const T> c_prev,
                               ConstMatrixMap<T> W, ConstMatrixMap<T> U, ConstMatrixMap<T> b);

// ---- batched forward / backward ----

// Batch inputs are example-major: element (e, t, f) at
// inputs[(e * window + t) * input_features + f].
template <typename T>
struct LayerOutputs {
    RowMatrix<T> sequence;  // (window * batch) x 2H, time-major rows t * batch + e
};

// Full forward pass through every layer for every time step; returns each
// layer's concatenated (forward | backward) output sequence.
template <typename T>
std::vector<LayerOutputs<T>> bilstm_stack_forward(const Model<T>& m, std::span<const T> inputs, std::size_t batch);

template <typename T>
void dense_readout(const Model<T>& m, std::span<const T> h_center, std::span<T> out);

// Mean over batch and output components of squared error.
template <typename T>
T mse_loss(std::span<const T> pred, std::span<const T> target);

struct ForwardOptions {
    bool keep_cache = true;
    bool full_sequence = false;  // also run the last layer past the center step
};

// Training engine: forward caches for one micro-batch and the backward pass.
template <typename T>
class Engine {
public:
    explicit Engine(const ModelConfig& cfg);

    // Predictions (batch x output_dim). With keep_cache the activations needed
    // by backward() are retained. The last layer is evaluated only up to the
    // center step, which is all the readout consumes.
    void forward(const Model<T>& m, std::span<const T> inputs, std::size_t batch, std::span<T> pred,
                 ForwardOptions opt = {});

    // Accumulates into grad (same layout as params) the gradient of
    //   sum_{e, j} (pred - target)^2 / loss_normalizer
    // for the batch last passed to forward(). Throws StateError without caches.
    void backward(const Model<T>& m, std::span<const T> target, T loss_normalizer, std::span<T> grad);

    // Per-layer output sequences of the last forward().
    std::vector<LayerOutputs<T>> sequences() const;

private:
    struct DirCache {
        RowMatrix<T> act;   // (T*B) x 4H activated gates; reused for gate gradients
        RowMatrix<T> c;     // (T*B) x H
        RowMatrix<T> tc;    // tanh(c)
        RowMatrix<T> h;     // (T*B) x H
        int steps = 0;
    };
    struct LayerCache {
        RowMatrix<T> input;  // (T*B) x D_in
        DirCache fwd, bwd;
    };

    void run_direction(const Model<T>& m, int layer, bool backward_dir, int steps, LayerCache& lc);
    void backprop_direction(const Model<T>& m, int layer, bool backward_dir, LayerCache& lc,
                            const RowMatrix<T>& d_out, int col0, RowMatrix<T>* d_input, std::span<T> grad);

    ModelConfig cfg_;
    std::size_t batch_ = 0;
    bool have_cache_ = false;
    std::vector<LayerCache> layers_;
    RowMatrix<T> center_;  // batch x 2H
    std::vector<T> pred_;
};

// Batched inference helper: returns batch x output_dim predictions.
template <typename T>
std::vector<T> predict(const Model<T>& m, std::span<const T> inputs, std::size_t batch, std::size_t chunk = 256);

// ---- Adam ----

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    AdamHyper hyper;
    std::vector<T> m;
    std::vector<T> v;
    std::uint64_t t = 0;

    void reset(std::size_t n) {
        m.assign(n, T(0));
        v.assign(n, T(0));
        t = 0;
    }
};

// One Adam update over a parameter range; throws NumericsError on a
// non-finite gradient before touching any state.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state);

}  // namespace mteq::nn
