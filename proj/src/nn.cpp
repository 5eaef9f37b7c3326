#include "mteq/nn.hpp"

#include <cmath>
#include <string>

#include "mteq/errors.hpp"
#include "mteq/rng.hpp"

namespace mteq::nn {

void ModelConfig::validate() const {
    if (n_layers < 1) throw ConfigError("model.n_layers must be >= 1");
    if (hidden < 1) throw ConfigError("model.hidden must be >= 1");
    if (input_features != 4 && input_features != 5) throw ConfigError("model.input_features must be 4 or 5");
    if (window < 1) throw ConfigError("model.window must be >= 1");
    if (output_dim < 1) throw ConfigError("model.output_dim must be >= 1");
}

int ParamLayout::layer_input_dim(const ModelConfig& cfg, int layer) const {
    return layer == 0 ? cfg.input_features : 2 * cfg.hidden;
}

ParamLayout ParamLayout::build(const ModelConfig& cfg) {
    cfg.validate();
    ParamLayout L;
    std::size_t off = 0;
    auto slot = [&](int r, int c) {
        TensorSlot s{off, r, c};
        off += s.size();
        return s;
    };
    const int H = cfg.hidden;
    for (int l = 0; l < cfg.n_layers; ++l) {
        const int din = L.layer_input_dim(cfg, l);
        for (auto* v : {&L.fwd, &L.bwd}) {
            LstmDirectionSlots d;
            d.W = slot(4 * H, din);
            d.U = slot(4 * H, H);
            d.b = slot(4 * H, 1);
            v->push_back(d);
        }
    }
    L.dense_W = slot(cfg.output_dim, 2 * H);
    L.dense_b = slot(cfg.output_dim, 1);
    L.total = off;
    return L;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : config(cfg), layout(ParamLayout::build(cfg)), params(layout.total, T(0)) {}

template <typename T>
void initialize(Model<T>& m, std::uint64_t seed) {
    RngStream rng(seed);
    const double k = 1.0 / std::sqrt(static_cast<double>(m.config.hidden));
    auto fill = [&](const TensorSlot& s) {
        for (std::size_t i = 0; i < s.size(); ++i) m.params[s.offset + i] = static_cast<T>((2.0 * rng.uniform01() - 1.0) * k);
    };
    const int H = m.config.hidden;
    for (int l = 0; l < m.config.n_layers; ++l) {
        for (const auto* d : {&m.layout.fwd[l], &m.layout.bwd[l]}) {
            fill(d->W);
            fill(d->U);
            for (int r = 0; r < 4 * H; ++r) m.params[d->b.offset + r] = (r >= H && r < 2 * H) ? T(1) : T(0);
        }
    }
    fill(m.layout.dense_W);
    for (std::size_t i = 0; i < m.layout.dense_b.size(); ++i) m.params[m.layout.dense_b.offset + i] = T(0);
}

namespace {

template <typename T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

template <typename T>
Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> row_vector(const Model<T>& m, const TensorSlot& s) {
    return {m.params.data() + s.offset, static_cast<Eigen::Index>(s.size())};
}

}  // namespace

template <typename T>
CellCache<T> lstm_cell_forward(std::span<const T> x, std::span<const T> h_prev, std::span<const T> c_prev,
                               ConstMatrixMap<T> W, ConstMatrixMap<T> U, ConstMatrixMap<T> b) {
    const auto H = static_cast<Eigen::Index>(h_prev.size());
    require(c_prev.size() == h_prev.size(), "lstm_cell_forward: c_prev size");
    require(W.rows() == 4 * H && W.cols() == static_cast<Eigen::Index>(x.size()), "lstm_cell_forward: W shape");
    require(U.rows() == 4 * H && U.cols() == H, "lstm_cell_forward: U shape");
    require(b.size() == 4 * H, "lstm_cell_forward: b shape");

    using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
    Eigen::Map<const Vec> xv(x.data(), x.size()), hv(h_prev.data(), H), cv(c_prev.data(), H);
    Vec z = W * xv + U * hv + Eigen::Map<const Vec>(b.data(), 4 * H);

    CellCache<T> out;
    out.gates.resize(4 * H);
    out.c_prev.assign(c_prev.begin(), c_prev.end());
    out.c.resize(H);
    out.h.resize(H);
    for (Eigen::Index j = 0; j < H; ++j) {
        const T i = sigmoid(z[j]);
        const T f = sigmoid(z[H + j]);
        const T g = std::tanh(z[2 * H + j]);
        const T o = sigmoid(z[3 * H + j]);
        out.gates[j] = i;
        out.gates[H + j] = f;
        out.gates[2 * H + j] = g;
        out.gates[3 * H + j] = o;
        out.c[j] = f * cv[j] + i * g;
        out.h[j] = o * std::tanh(out.c[j]);
    }
    return out;
}

template <typename T>
void dense_readout(const Model<T>& m, std::span<const T> h_center, std::span<T> out) {
    const int H2 = 2 * m.config.hidden;
    require(static_cast<int>(h_center.size()) == H2, "dense_readout: input size");
    require(static_cast<int>(out.size()) == m.config.output_dim, "dense_readout: output size");
    auto W = m.tensor(m.layout.dense_W);
    auto b = m.tensor(m.layout.dense_b);
    for (int r = 0; r < m.config.output_dim; ++r) {
        T acc = b(r, 0);
        for (int k = 0; k < H2; ++k) acc += W(r, k) * h_center[k];
        out[r] = acc;
    }
}

template <typename T>
T mse_loss(std::span<const T> pred, std::span<const T> target) {
    require(pred.size() == target.size(), "mse_loss: shape mismatch");
    require(!pred.empty(), "mse_loss: empty batch");
    T acc = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<T>(pred.size());
}

// ---------------------------------------------------------------------------

template <typename T>
Engine<T>::Engine(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    layers_.resize(cfg_.n_layers);
}

template <typename T>
void Engine<T>::run_direction(const Model<T>& m, int layer, bool backward_dir, int steps, LayerCache& lc) {
    const int H = cfg_.hidden;
    const int Tw = cfg_.window;
    const auto B = static_cast<Eigen::Index>(batch_);
    const auto& slots = backward_dir ? m.layout.bwd[layer] : m.layout.fwd[layer];
    auto W = m.tensor(slots.W);
    auto U = m.tensor(slots.U);
    auto b = row_vector(m, slots.b);
    DirCache& dc = backward_dir ? lc.bwd : lc.fwd;
    const Eigen::Index rows = Tw * B;
    dc.act.resize(rows, 4 * H);
    dc.c.resize(rows, H);
    dc.tc.resize(rows, H);
    dc.h.setZero(rows, H);
    dc.steps = steps;

    const Eigen::Index r0 = backward_dir ? (Tw - steps) * B : 0;
    const Eigen::Index nr = steps * B;
    dc.act.middleRows(r0, nr).noalias() = lc.input.middleRows(r0, nr) * W.transpose();
    dc.act.middleRows(r0, nr).rowwise() += b;

    for (int s = 0; s < steps; ++s) {
        const int t = backward_dir ? Tw - 1 - s : s;
        const int tp = backward_dir ? t + 1 : t - 1;
        auto g = dc.act.middleRows(t * B, B);
        if (s > 0) g.noalias() += dc.h.middleRows(tp * B, B) * U.transpose();
        auto a = g.array();
        a.leftCols(2 * H) = T(1) / (T(1) + (-a.leftCols(2 * H)).exp());
        a.middleCols(2 * H, H) = a.middleCols(2 * H, H).tanh();
        a.rightCols(H) = T(1) / (T(1) + (-a.rightCols(H)).exp());
        auto c = dc.c.middleRows(t * B, B).array();
        if (s > 0) {
            c = a.middleCols(H, H) * dc.c.middleRows(tp * B, B).array() + a.leftCols(H) * a.middleCols(2 * H, H);
        } else {
            c = a.leftCols(H) * a.middleCols(2 * H, H);
        }
        dc.tc.middleRows(t * B, B).array() = c.tanh();
        dc.h.middleRows(t * B, B).array() = a.rightCols(H) * dc.tc.middleRows(t * B, B).array();
    }
}

template <typename T>
void Engine<T>::forward(const Model<T>& m, std::span<const T> inputs, std::size_t batch, std::span<T> pred,
                        ForwardOptions opt) {
    require(m.config == cfg_, "Engine::forward: model config differs from engine config");
    const int Tw = cfg_.window;
    const int D = cfg_.input_features;
    const int H = cfg_.hidden;
    require(batch > 0, "Engine::forward: empty batch");
    require(inputs.size() == batch * static_cast<std::size_t>(Tw) * static_cast<std::size_t>(D),
            "Engine::forward: input size does not match batch x window x features");
    require(pred.size() == batch * static_cast<std::size_t>(cfg_.output_dim), "Engine::forward: output size");
    batch_ = batch;
    const auto B = static_cast<Eigen::Index>(batch);

    auto& in0 = layers_[0].input;
    in0.resize(Tw * B, D);
    for (Eigen::Index e = 0; e < B; ++e)
        for (int t = 0; t < Tw; ++t)
            for (int f = 0; f < D; ++f) in0(t * B + e, f) = inputs[(e * Tw + t) * D + f];

    const int last = cfg_.n_layers - 1;
    const int c = cfg_.center();
    for (int l = 0; l <= last; ++l) {
        auto& lc = layers_[l];
        const int steps = (l == last && !opt.full_sequence) ? c + 1 : Tw;
        run_direction(m, l, false, steps, lc);
        run_direction(m, l, true, steps, lc);
        if (l < last) {
            auto& nxt = layers_[l + 1].input;
            nxt.resize(Tw * B, 2 * H);
            nxt.leftCols(H) = lc.fwd.h;
            nxt.rightCols(H) = lc.bwd.h;
        }
    }
    center_.resize(B, 2 * H);
    center_.leftCols(H) = layers_[last].fwd.h.middleRows(c * B, B);
    center_.rightCols(H) = layers_[last].bwd.h.middleRows(c * B, B);

    auto Wd = m.tensor(m.layout.dense_W);
    auto bd = row_vector(m, m.layout.dense_b);
    MatrixMap<T> out(pred.data(), B, cfg_.output_dim);
    out.noalias() = center_ * Wd.transpose();
    out.rowwise() += bd;
    pred_.assign(pred.begin(), pred.end());
    have_cache_ = opt.keep_cache;
}

template <typename T>
std::vector<LayerOutputs<T>> Engine<T>::sequences() const {
    const int H = cfg_.hidden;
    std::vector<LayerOutputs<T>> out(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& lc = layers_[l];
        out[l].sequence.resize(lc.fwd.h.rows(), 2 * H);
        out[l].sequence.leftCols(H) = lc.fwd.h;
        out[l].sequence.rightCols(H) = lc.bwd.h;
    }
    return out;
}

template <typename T>
void Engine<T>::backprop_direction(const Model<T>& m, int layer, bool backward_dir, LayerCache& lc,
                                   const RowMatrix<T>& d_out, int col0, RowMatrix<T>* d_input,
                                   std::span<T> grad) {
    const int H = cfg_.hidden;
    const int Tw = cfg_.window;
    const auto B = static_cast<Eigen::Index>(batch_);
    const auto& slots = backward_dir ? m.layout.bwd[layer] : m.layout.fwd[layer];
    auto W = m.tensor(slots.W);
    auto U = m.tensor(slots.U);
    MatrixMap<T> gW(grad.data() + slots.W.offset, slots.W.rows, slots.W.cols);
    MatrixMap<T> gU(grad.data() + slots.U.offset, slots.U.rows, slots.U.cols);
    MatrixMap<T> gb(grad.data() + slots.b.offset, slots.b.rows, 1);
    DirCache& dc = backward_dir ? lc.bwd : lc.fwd;
    const int steps = dc.steps;

    RowMatrix<T> dh_next = RowMatrix<T>::Zero(B, H);
    RowMatrix<T> dc_next = RowMatrix<T>::Zero(B, H);
    RowMatrix<T> dh(B, H), dcell(B, H);
    for (int s = steps - 1; s >= 0; --s) {
        const int t = backward_dir ? Tw - 1 - s : s;
        const int tp = backward_dir ? t + 1 : t - 1;
        auto a = dc.act.middleRows(t * B, B).array();
        auto tc = dc.tc.middleRows(t * B, B).array();
        dh = d_out.block(t * B, col0, B, H) + dh_next;
        auto dha = dh.array();
        auto i = a.leftCols(H);
        auto f = a.middleCols(H, H);
        auto g = a.middleCols(2 * H, H);
        auto o = a.rightCols(H);
        dcell.array() = dc_next.array() + dha * o * (T(1) - tc * tc);
        auto dca = dcell.array();
        // Overwrite activations with gate pre-activation gradients, in an
        // order that reads each gate before it is replaced.
        o = dha * tc * o * (T(1) - o);
        dc_next.array() = dca * f;
        if (s > 0) {
            f = dca * dc.c.middleRows(tp * B, B).array() * f * (T(1) - f);
        } else {
            f.setZero();
        }
        const auto i_old = i.eval();
        i = dca * g * i * (T(1) - i);
        g = dca * i_old * (T(1) - g * g);
        dh_next.noalias() = dc.act.middleRows(t * B, B) * U;
    }

    const Eigen::Index r0 = backward_dir ? (Tw - steps) * B : 0;
    const Eigen::Index nr = steps * B;
    auto dG = dc.act.middleRows(r0, nr);
    gW.noalias() += dG.transpose() * lc.input.middleRows(r0, nr);
    gb.noalias() += dG.colwise().sum().transpose();
    if (steps > 1) {
        const Eigen::Index n = (steps - 1) * B;
        if (backward_dir) {
            gU.noalias() += dc.act.middleRows(r0, n).transpose() * dc.h.middleRows(r0 + B, n);
        } else {
            gU.noalias() += dc.act.middleRows(B, n).transpose() * dc.h.middleRows(0, n);
        }
    }
    if (d_input) d_input->middleRows(r0, nr).noalias() += dG * W;
}

template <typename T>
void Engine<T>::backward(const Model<T>& m, std::span<const T> target, T loss_normalizer, std::span<T> grad) {
    if (!have_cache_) throw StateError("backward: no forward cache available");
    require(m.config == cfg_, "Engine::backward: model config differs from engine config");
    require(grad.size() == m.params.size(), "Engine::backward: gradient buffer size");
    require(target.size() == pred_.size(), "Engine::backward: target size");
    have_cache_ = false;

    const int H = cfg_.hidden;
    const int Tw = cfg_.window;
    const auto B = static_cast<Eigen::Index>(batch_);
    const int O = cfg_.output_dim;

    RowMatrix<T> dpred(B, O);
    for (Eigen::Index e = 0; e < B; ++e)
        for (int j = 0; j < O; ++j) dpred(e, j) = T(2) * (pred_[e * O + j] - target[e * O + j]) / loss_normalizer;

    MatrixMap<T> gWd(grad.data() + m.layout.dense_W.offset, O, 2 * H);
    MatrixMap<T> gbd(grad.data() + m.layout.dense_b.offset, O, 1);
    gWd.noalias() += dpred.transpose() * center_;
    gbd.noalias() += dpred.colwise().sum().transpose();

    const int last = cfg_.n_layers - 1;
    const int c = cfg_.center();
    RowMatrix<T> d_out = RowMatrix<T>::Zero(Tw * B, 2 * H);
    d_out.middleRows(c * B, B).noalias() = dpred * m.tensor(m.layout.dense_W);

    RowMatrix<T> d_in;
    for (int l = last; l >= 0; --l) {
        auto& lc = layers_[l];
        RowMatrix<T>* dip = nullptr;
        if (l > 0) {
            d_in.setZero(Tw * B, 2 * H);
            dip = &d_in;
        }
        backprop_direction(m, l, false, lc, d_out, 0, dip, grad);
        backprop_direction(m, l, true, lc, d_out, H, dip, grad);
        if (l > 0) d_out.swap(d_in);
    }
}

template <typename T>
std::vector<LayerOutputs<T>> bilstm_stack_forward(const Model<T>& m, std::span<const T> inputs, std::size_t batch) {
    Engine<T> eng(m.config);
    std::vector<T> pred(batch * static_cast<std::size_t>(m.config.output_dim));
    eng.forward(m, inputs, batch, pred, ForwardOptions{.keep_cache = false, .full_sequence = true});
    return eng.sequences();
}

template <typename T>
std::vector<T> predict(const Model<T>& m, std::span<const T> inputs, std::size_t batch, std::size_t chunk) {
    const std::size_t stride = static_cast<std::size_t>(m.config.window) * static_cast<std::size_t>(m.config.input_features);
    require(inputs.size() == batch * stride, "predict: feature count or window does not match the model");
    const auto O = static_cast<std::size_t>(m.config.output_dim);
    std::vector<T> out(batch * O);
    if (batch == 0) return out;
    Engine<T> eng(m.config);
    chunk = std::max<std::size_t>(1, chunk);
    for (std::size_t s = 0; s < batch; s += chunk) {
        const std::size_t n = std::min(chunk, batch - s);
        eng.forward(m, inputs.subspan(s * stride, n * stride), n, std::span<T>(out).subspan(s * O, n * O),
                    ForwardOptions{.keep_cache = false});
    }
    return out;
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& st) {
    if (params.size() != grads.size() || st.m.size() != params.size() || st.v.size() != params.size())
        throw ShapeError("adam_step: parameter, gradient and state sizes differ");
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (!std::isfinite(grads[k])) throw NumericsError("adam_step: non-finite gradient at index " + std::to_string(k));
    }
    const auto& hp = st.hyper;
    st.t += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(st.t));
    const T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
    const T lr = static_cast<T>(hp.lr), eps = static_cast<T>(hp.eps);
    const T ibc1 = static_cast<T>(1.0 / bc1), ibc2 = static_cast<T>(1.0 / bc2);
    for (std::size_t k = 0; k < params.size(); ++k) {
        const T g = grads[k];
        st.m[k] = b1 * st.m[k] + (T(1) - b1) * g;
        st.v[k] = b2 * st.v[k] + (T(1) - b2) * g * g;
        const T mh = st.m[k] * ibc1;
        const T vh = st.v[k] * ibc2;
        params[k] -= lr * mh / (std::sqrt(vh) + eps);
    }
}

#define MTEQ_NN_INSTANTIATE(T)                                                                                   \
    template struct Model<T>;                                                                                    \
    template void initialize<T>(Model<T>&, std::uint64_t);                                                       \
    template CellCache<T> lstm_cell_forward<T>(std::span<const T>, std::span<const T>, std::span<const T>,       \
                                               ConstMatrixMap<T>, ConstMatrixMap<T>, ConstMatrixMap<T>);         \
    template void dense_readout<T>(const Model<T>&, std::span<const T>, std::span<T>);                           \
    template T mse_loss<T>(std::span<const T>, std::span<const T>);                                              \
    template class Engine<T>;                                                                                    \
    template std::vector<LayerOutputs<T>> bilstm_stack_forward<T>(const Model<T>&, std::span<const T>,           \
                                                                  std::size_t);                                 \
    template std::vector<T> predict<T>(const Model<T>&, std::span<const T>, std::size_t, std::size_t);           \
    template void adam_step<T>(std::span<T>, std::span<const T>, AdamState<T>&);

MTEQ_NN_INSTANTIATE(float)
MTEQ_NN_INSTANTIATE(double)

}  // namespace mteq::nn
