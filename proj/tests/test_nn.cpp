#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mteq/errors.hpp"
#include "mteq/nn.hpp"

using namespace mteq;
using namespace mteq::nn;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void randomize(Model<double>& m, std::uint64_t seed, double scale = 0.5) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& p : m.params) p = u(g);
}

std::vector<double> random_inputs(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> d;
    std::vector<double> v(n);
    for (auto& x : v) x = d(g);
    return v;
}

// Plain nested-loop stacked biLSTM. seq[l][b][t][k], k < H forward, k >= H backward.
using Seq = std::vector<std::vector<std::vector<double>>>;

struct Oracle {
    std::vector<Seq> layers;
    std::vector<double> pred;
};

Oracle scalar_stack(const Model<double>& m, const std::vector<double>& in, int batch) {
    const auto& cfg = m.config;
    const int H = cfg.hidden, T = cfg.window, D = cfg.input_features;
    Oracle o;
    Seq cur(batch, std::vector<std::vector<double>>(T));
    for (int b = 0; b < batch; ++b)
        for (int t = 0; t < T; ++t)
            for (int f = 0; f < D; ++f) cur[b][t].push_back(in[(b * T + t) * D + f]);
    for (int l = 0; l < cfg.n_layers; ++l) {
        Seq out(batch, std::vector<std::vector<double>>(T, std::vector<double>(2 * H, 0.0)));
        for (int dir = 0; dir < 2; ++dir) {
            const auto& s = dir == 0 ? m.layout.fwd[l] : m.layout.bwd[l];
            const int din = s.W.cols;
            auto W = [&](int r, int c) { return m.params[s.W.offset + r * din + c]; };
            auto U = [&](int r, int c) { return m.params[s.U.offset + r * H + c]; };
            auto bias = [&](int r) { return m.params[s.b.offset + r]; };
            for (int b = 0; b < batch; ++b) {
                std::vector<double> h(H, 0.0), c(H, 0.0);
                for (int s_ = 0; s_ < T; ++s_) {
                    const int t = dir == 0 ? s_ : T - 1 - s_;
                    std::vector<double> z(4 * H);
                    for (int r = 0; r < 4 * H; ++r) {
                        double acc = bias(r);
                        for (int k = 0; k < din; ++k) acc += W(r, k) * cur[b][t][k];
                        for (int k = 0; k < H; ++k) acc += U(r, k) * h[k];
                        z[r] = acc;
                    }
                    for (int j = 0; j < H; ++j) {
                        const double ig = sig(z[j]), fg = sig(z[H + j]), gg = std::tanh(z[2 * H + j]),
                                     og = sig(z[3 * H + j]);
                        c[j] = fg * c[j] + ig * gg;
                        h[j] = og * std::tanh(c[j]);
                        out[b][t][dir * H + j] = h[j];
                    }
                }
            }
        }
        o.layers.push_back(out);
        cur = out;
    }
    const int ctr = cfg.center();
    for (int b = 0; b < batch; ++b) {
        for (int r = 0; r < cfg.output_dim; ++r) {
            double acc = m.params[m.layout.dense_b.offset + r];
            for (int k = 0; k < 2 * H; ++k) acc += m.params[m.layout.dense_W.offset + r * 2 * H + k] * cur[b][ctr][k];
            o.pred.push_back(acc);
        }
    }
    return o;
}

std::vector<double> run_pred(const Model<double>& m, const std::vector<double>& in, int batch) {
    Engine<double> eng(m.config);
    std::vector<double> pred(batch * m.config.output_dim);
    eng.forward(m, in, batch, pred);
    return pred;
}

double loss_of(const Model<double>& m, const std::vector<double>& in, const std::vector<double>& tgt, int batch) {
    const auto p = run_pred(m, in, batch);
    return mse_loss<double>(p, tgt);
}

}  // namespace

TEST_CASE("parameter layout has the documented shapes") {
    ModelConfig cfg;
    const auto L = ParamLayout::build(cfg);
    CHECK(L.fwd[0].W.rows == 400);
    CHECK(L.fwd[0].W.cols == 4);
    CHECK(L.bwd[3].W.cols == 200);
    CHECK(L.fwd[2].U.cols == 100);
    CHECK(L.dense_W.rows == 2);
    CHECK(L.dense_W.cols == 200);
    const std::size_t first = 2 * (400 * 4 + 400 * 100 + 400);
    const std::size_t deeper = 2 * (400 * 200 + 400 * 100 + 400);
    CHECK(L.total == first + 3 * deeper + 2 * 200 + 2);

    cfg.input_features = 3;
    CHECK_THROWS_AS(ParamLayout::build(cfg), ConfigError);
}

TEST_CASE("initialization bounds and forget bias") {
    ModelConfig cfg{2, 16, 5, 41, 2};
    Model<float> m(cfg);
    initialize(m, 77);
    const float k = 1.0f / 4.0f;
    for (int l = 0; l < 2; ++l) {
        auto W = m.tensor(m.layout.fwd[l].W);
        CHECK(W.maxCoeff() <= k);
        CHECK(W.minCoeff() >= -k);
        auto b = m.tensor(m.layout.bwd[l].b);
        for (int r = 0; r < 64; ++r) CHECK(b(r, 0) == ((r >= 16 && r < 32) ? 1.0f : 0.0f));
    }
    Model<float> m2(cfg);
    initialize(m2, 77);
    CHECK(m.params == m2.params);
    initialize(m2, 78);
    CHECK(m.params != m2.params);
}

TEST_CASE("LSTM cell matches a scalar oracle") {
    const int H = 3, D = 2;
    std::mt19937_64 g(5);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> W(4 * H * D), U(4 * H * H), b(4 * H), x(D), h(H), c(H);
    for (auto* v : {&W, &U, &b, &x, &h, &c})
        for (auto& e : *v) e = u(g);
    const auto out = lstm_cell_forward<double>(x, h, c, ConstMatrixMap<double>(W.data(), 4 * H, D),
                                               ConstMatrixMap<double>(U.data(), 4 * H, H),
                                               ConstMatrixMap<double>(b.data(), 4 * H, 1));
    for (int j = 0; j < H; ++j) {
        double z[4];
        for (int q = 0; q < 4; ++q) {
            const int r = q * H + j;
            z[q] = b[r];
            for (int k = 0; k < D; ++k) z[q] += W[r * D + k] * x[k];
            for (int k = 0; k < H; ++k) z[q] += U[r * H + k] * h[k];
        }
        const double cn = sig(z[1]) * c[j] + sig(z[0]) * std::tanh(z[2]);
        CHECK(std::abs(out.c[j] - cn) < 1e-12);
        CHECK(std::abs(out.h[j] - sig(z[3]) * std::tanh(cn)) < 1e-12);
    }

    std::vector<double> bad(5);
    CHECK_THROWS_AS(lstm_cell_forward<double>(x, h, c, ConstMatrixMap<double>(W.data(), 4 * H, D),
                                              ConstMatrixMap<double>(U.data(), 4 * H, H),
                                              ConstMatrixMap<double>(bad.data(), 5, 1)),
                    ShapeError);
}

TEST_CASE("LSTM cell with zero weights and saturated forget gate") {
    const int H = 4, D = 3;
    std::vector<double> W(4 * H * D, 0.0), U(4 * H * H, 0.0), b(4 * H, 0.0), x{0.3, -2.0, 7.0}, h(H, 0.5);
    std::vector<double> c{0.1, -0.4, 2.0, 0.0};
    auto run = [&] {
        return lstm_cell_forward<double>(x, h, std::vector<double>(H, 0.0), ConstMatrixMap<double>(W.data(), 4 * H, D),
                                         ConstMatrixMap<double>(U.data(), 4 * H, H),
                                         ConstMatrixMap<double>(b.data(), 4 * H, 1));
    };
    const auto z = run();
    for (int j = 0; j < H; ++j) {
        CHECK(z.h[j] == 0.0);
        CHECK(z.c[j] == 0.0);
    }
    // Large forget bias, input gate driven shut: c_t tracks c_prev.
    for (int j = 0; j < H; ++j) {
        b[H + j] = 40.0;
        b[j] = -40.0;
    }
    const auto s = lstm_cell_forward<double>(x, h, c, ConstMatrixMap<double>(W.data(), 4 * H, D),
                                             ConstMatrixMap<double>(U.data(), 4 * H, H),
                                             ConstMatrixMap<double>(b.data(), 4 * H, 1));
    for (int j = 0; j < H; ++j) CHECK(std::abs(s.c[j] - c[j]) < 1e-6);
}

TEST_CASE("stacked biLSTM forward matches the scalar oracle") {
    for (auto cfg : {ModelConfig{1, 2, 4, 3, 2}, ModelConfig{2, 3, 5, 7, 2}, ModelConfig{3, 4, 4, 9, 2}}) {
        Model<double> m(cfg);
        randomize(m, 11 + cfg.n_layers);
        const int B = 3;
        const auto in = random_inputs(B * cfg.window * cfg.input_features, 3);
        const auto ref = scalar_stack(m, in, B);
        const auto seqs = bilstm_stack_forward<double>(m, in, B);
        REQUIRE(seqs.size() == static_cast<std::size_t>(cfg.n_layers));
        double err = 0.0;
        for (int l = 0; l < cfg.n_layers; ++l) {
            CHECK(seqs[l].sequence.cols() == 2 * cfg.hidden);
            for (int b = 0; b < B; ++b)
                for (int t = 0; t < cfg.window; ++t)
                    for (int k = 0; k < 2 * cfg.hidden; ++k)
                        err = std::max(err, std::abs(seqs[l].sequence(t * B + b, k) - ref.layers[l][b][t][k]));
        }
        CHECK(err < 1e-12);
        const auto p = run_pred(m, in, B);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - ref.pred[i]) < 1e-12);
    }
}

TEST_CASE("full-size stack produces window x 2H per layer") {
    ModelConfig cfg;
    Model<float> m(cfg);
    initialize(m, 1);
    std::vector<float> in(141 * 4, 0.1f);
    const auto seqs = bilstm_stack_forward<float>(m, in, 1);
    REQUIRE(seqs.size() == 4);
    for (const auto& s : seqs) {
        CHECK(s.sequence.rows() == 141);
        CHECK(s.sequence.cols() == 200);
    }
}

TEST_CASE("bidirectional symmetry under input reversal") {
    for (int layers : {1, 2, 3}) {
        ModelConfig cfg{layers, 3, 4, 7, 2};
        Model<double> m(cfg);
        randomize(m, 21);
        Model<double> sw = m;
        for (int l = 0; l < cfg.n_layers; ++l) {
            const auto& f = m.layout.fwd[l];
            const auto& b = m.layout.bwd[l];
            for (auto [a, c] : {std::pair{f.W, b.W}, std::pair{f.U, b.U}, std::pair{f.b, b.b}}) {
                std::copy_n(m.params.begin() + a.offset, a.size(), sw.params.begin() + c.offset);
                std::copy_n(m.params.begin() + c.offset, c.size(), sw.params.begin() + a.offset);
            }
            // Deeper layers read (fwd | bwd) halves, which also swap under reversal.
            if (l > 0) {
                for (const auto* d : {&sw.layout.fwd[l], &sw.layout.bwd[l]}) {
                    auto W = sw.tensor(d->W);
                    const RowMatrix<double> left = W.leftCols(cfg.hidden);
                    W.leftCols(cfg.hidden) = W.rightCols(cfg.hidden);
                    W.rightCols(cfg.hidden) = left;
                }
            }
        }
        const int B = 2, T = cfg.window, D = cfg.input_features, H = cfg.hidden;
        const auto in = random_inputs(B * T * D, 9);
        std::vector<double> rev(in.size());
        for (int b = 0; b < B; ++b)
            for (int t = 0; t < T; ++t)
                for (int f = 0; f < D; ++f) rev[(b * T + t) * D + f] = in[(b * T + (T - 1 - t)) * D + f];
        const auto s1 = bilstm_stack_forward<double>(m, in, B);
        const auto s2 = bilstm_stack_forward<double>(sw, rev, B);
        double diff = 0.0;
        for (int l = 0; l < cfg.n_layers; ++l)
            for (int b = 0; b < B; ++b)
                for (int t = 0; t < T; ++t)
                    for (int k = 0; k < H; ++k) {
                        diff = std::max(diff, std::abs(s1[l].sequence(t * B + b, k) - s2[l].sequence((T - 1 - t) * B + b, H + k)));
                        diff = std::max(diff, std::abs(s1[l].sequence(t * B + b, H + k) - s2[l].sequence((T - 1 - t) * B + b, k)));
                    }
        MESSAGE(layers << " layers: max deviation " << diff);
        if (layers == 1) {
            CHECK(diff == 0.0);
        } else {
            // Swapped input halves reorder the input-kernel dot products.
            CHECK(diff < 1e-14);
        }
    }
}

TEST_CASE("dense readout and MSE") {
    ModelConfig cfg{1, 2, 4, 3, 2};
    Model<double> m(cfg);
    m.tensor(m.layout.dense_b)(0, 0) = 0.25;
    m.tensor(m.layout.dense_b)(1, 0) = -1.5;
    std::vector<double> h{1, 2, 3, 4}, out(2);
    dense_readout<double>(m, h, out);
    CHECK(out[0] == 0.25);
    CHECK(out[1] == -1.5);

    m.tensor(m.layout.dense_b).setZero();
    auto W = m.tensor(m.layout.dense_W);
    W.setZero();
    W(0, 1) = 1.0;
    W(1, 3) = 1.0;
    dense_readout<double>(m, h, out);
    CHECK(out[0] == 2.0);
    CHECK(out[1] == 4.0);

    randomize(m, 4);
    const auto hr = random_inputs(4, 8);
    dense_readout<double>(m, hr, out);
    for (int r = 0; r < 2; ++r) {
        double acc = m.tensor(m.layout.dense_b)(r, 0);
        for (int k = 0; k < 4; ++k) acc += m.tensor(m.layout.dense_W)(r, k) * hr[k];
        CHECK(std::abs(out[r] - acc) < 1e-14);
    }
    CHECK_THROWS_AS(dense_readout<double>(m, std::vector<double>(3), out), ShapeError);

    std::vector<double> p{1, 2, 3, 4}, t{0, 1, 2, 3};
    CHECK(mse_loss<double>(p, p) == 0.0);
    CHECK(mse_loss<double>(p, t) == 1.0);
    const auto a = random_inputs(50, 1), b = random_inputs(50, 2);
    double ref = 0.0;
    for (int i = 0; i < 50; ++i) ref += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(std::abs(mse_loss<double>(a, b) - ref / 50.0) < 1e-14);
    CHECK_THROWS_AS(mse_loss<double>(a, std::vector<double>(3)), ShapeError);
}

TEST_CASE("BPTT matches central finite differences") {
    ModelConfig cfg{2, 4, 4, 9, 2};
    Model<double> m(cfg);
    randomize(m, 31, 0.6);
    const int B = 3;
    const auto in = random_inputs(B * cfg.window * cfg.input_features, 12);
    const auto tgt = random_inputs(B * 2, 13);

    Engine<double> eng(cfg);
    std::vector<double> pred(B * 2), grad(m.params.size(), 0.0);
    eng.forward(m, in, B, pred);
    eng.backward(m, tgt, static_cast<double>(B * 2), grad);

    const double delta = 1e-5;
    double worst = 0.0;
    for (std::size_t k = 0; k < m.params.size(); ++k) {
        Model<double> mp = m, mm = m;
        mp.params[k] += delta;
        mm.params[k] -= delta;
        const double num = (loss_of(mp, in, tgt, B) - loss_of(mm, in, tgt, B)) / (2 * delta);
        const double den = std::max({std::abs(num), std::abs(grad[k]), 1e-7});
        worst = std::max(worst, std::abs(num - grad[k]) / den);
    }
    MESSAGE("max relative error " << worst);
    CHECK(worst < 1e-4);
}

TEST_CASE("gradients vanish for a zero-error batch; dense bias closed form") {
    ModelConfig cfg{2, 3, 5, 5, 2};
    Model<double> m(cfg);
    randomize(m, 41);
    const int B = 4;
    const auto in = random_inputs(B * cfg.window * cfg.input_features, 5);
    Engine<double> eng(cfg);
    std::vector<double> pred(B * 2), grad(m.params.size(), 0.0);
    eng.forward(m, in, B, pred);
    eng.backward(m, pred, 8.0, grad);
    CHECK(std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; }));

    const auto tgt = random_inputs(B * 2, 6);
    std::fill(grad.begin(), grad.end(), 0.0);
    eng.forward(m, in, B, pred);
    eng.backward(m, tgt, 8.0, grad);
    // d/db_j of (1/(2B)) sum (p - t)^2 = (1/B) sum_e (p_ej - t_ej).
    for (int j = 0; j < 2; ++j) {
        double s = 0.0;
        for (int e = 0; e < B; ++e) s += 2.0 * (pred[e * 2 + j] - tgt[e * 2 + j]);
        CHECK(std::abs(grad[m.layout.dense_b.offset + j] - s / (2.0 * B)) < 1e-12);
    }
    CHECK_THROWS_AS(eng.backward(m, tgt, 8.0, grad), StateError);
}

TEST_CASE("engine rejects mismatched shapes") {
    ModelConfig cfg{1, 2, 4, 5, 2};
    Model<double> m(cfg);
    Engine<double> eng(cfg);
    std::vector<double> pred(2);
    CHECK_THROWS_AS(eng.forward(m, std::vector<double>(19), 1, pred), ShapeError);
    CHECK_THROWS_AS(predict<double>(m, std::vector<double>(25), 1), ShapeError);
}

TEST_CASE("zero model predicts zero; chunked prediction matches one batch") {
    ModelConfig cfg{2, 3, 4, 7, 2};
    Model<double> m(cfg);
    const auto in = random_inputs(10 * 7 * 4, 2);
    const auto z = predict<double>(m, in, 10);
    CHECK(z.size() == 20);
    CHECK(std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; }));

    randomize(m, 3);
    const auto a = predict<double>(m, in, 10, 3);
    const auto b = predict<double>(m, in, 10, 10);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
}

TEST_CASE("Adam update rule") {
    AdamState<double> st;
    st.reset(1);
    std::vector<double> p{0.0};
    std::vector<double> g{1.0};
    adam_step<double>(p, g, st);
    CHECK(std::abs(p[0] - (-0.0009999999900000003)) < 1e-18);
    CHECK(st.t == 1);

    AdamState<double> z;
    z.reset(3);
    std::vector<double> q{0.5, -1.0, 2.0};
    const auto q0 = q;
    adam_step<double>(q, std::vector<double>(3, 0.0), z);
    CHECK(q == q0);

    // Independent per-parameter updates: splitting the vector gives the same result.
    const auto grads = random_inputs(6, 3);
    std::vector<double> whole(6, 0.1);
    AdamState<double> sw;
    sw.reset(6);
    for (int k = 0; k < 3; ++k) adam_step<double>(whole, grads, sw);
    std::vector<double> lo(3, 0.1), hi(3, 0.1);
    AdamState<double> sl, sh;
    sl.reset(3);
    sh.reset(3);
    for (int k = 0; k < 3; ++k) {
        adam_step<double>(hi, std::span<const double>(grads).subspan(3), sh);
        adam_step<double>(lo, std::span<const double>(grads).subspan(0, 3), sl);
    }
    for (int k = 0; k < 3; ++k) {
        CHECK(whole[k] == lo[k]);
        CHECK(whole[3 + k] == hi[k]);
    }

    std::vector<double> bad{std::nan("")};
    std::vector<double> pp{1.0};
    AdamState<double> sb;
    sb.reset(1);
    CHECK_THROWS_AS(adam_step<double>(pp, bad, sb), NumericsError);
    CHECK(sb.t == 0);
    CHECK(pp[0] == 1.0);
}
