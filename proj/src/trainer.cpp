#include "mteq/trainer.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mteq/binio.hpp"
#include "mteq/errors.hpp"
#include "mteq/parallel.hpp"
#include "mteq/rng.hpp"

namespace mteq::nn {

namespace {

constexpr char kMagic[5] = {'M', 'T', 'E', 'Q', 'M'};

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

template <typename To, typename From>
AdamState<To> cast_state(const AdamState<From>& s) {
    AdamState<To> r;
    r.hyper = s.hyper;
    r.m.assign(s.m.begin(), s.m.end());
    r.v.assign(s.v.begin(), s.v.end());
    r.t = s.t;
    return r;
}

template <typename T>
void run_epochs(EqualizerModel& em, const TrainConfig& cfg, const CheckpointPolicy& policy,
                const EpochCallback& on_epoch) {
    Model<T> model = em.model.template cast<T>();
    AdamState<T> opt = cast_state<T>(em.optimizer);

    auto sync = [&] {
        em.model = model.template cast<double>();
        em.optimizer = cast_state<double>(opt);
    };

    for (std::size_t epoch = em.provenance.epochs_completed; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto data = dataset::generate_epoch(cfg.sampler, cfg.epoch_size, epoch, cfg.master_seed, cfg.data);
        const double loss = fit_epoch(model, opt, data.features, data.targets, data.size(), cfg.batch,
                                      cfg.micro_batch, cfg.threads);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        EpochRecord rec{epoch, loss, secs, data.digest(), cfg.batches_per_epoch()};
        em.history.push_back(rec);
        em.provenance.epochs_completed = epoch + 1;
        if (!std::isfinite(loss)) throw NumericsError("train: non-finite loss at epoch " + std::to_string(epoch));
        const bool last = epoch + 1 == cfg.epochs;
        if (!policy.path.empty() && (last || (policy.every_epochs > 0 && (epoch + 1) % policy.every_epochs == 0))) {
            sync();
            save_model(em, policy.path);
        }
        if (!policy.loss_csv.empty()) write_loss_csv(em.history, policy.loss_csv);
        if (on_epoch) on_epoch(rec);
    }
    sync();
}

}  // namespace

ModelConfig TrainConfig::model_config() const {
    return ModelConfig{n_layers, hidden, sampler.feature_count(), data.window, 2};
}

void TrainConfig::validate() const {
    model_config().validate();
    data.sim.validate();
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch < 1) throw ConfigError("train.batch must be >= 1");
    if (epoch_size < batch) throw ConfigError("train.epoch_size must be >= train.batch");
    if (micro_batch < 1) throw ConfigError("train.micro_batch must be >= 1");
    if (threads < 1) throw ConfigError("train.threads must be >= 1");
    if (!(adam.lr > 0.0)) throw ConfigError("train.adam.lr must be > 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("train.adam.beta1 must be in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("train.adam.beta2 must be in [0, 1)");
    if (!(adam.eps > 0.0)) throw ConfigError("train.adam.eps must be > 0");
}

// Thread count and micro-batch size are excluded: they do not change results.
std::string TrainConfig::describe() const {
    std::ostringstream os;
    os << std::setprecision(17) << "sampler{" << dataset::to_string(sampler.mode) << ";" << sampler.fixed_p_dbm << ";"
       << sampler.fixed_rs_gbd << ";" << sampler.fixed_n_spans << ";" << join(sampler.power_grid) << ";"
       << join(sampler.rate_grid) << ";" << join(sampler.span_grid) << "}" << data.describe() << "model{"
       << n_layers << "," << hidden << "}train{" << epoch_size << "," << batch << "," << adam.lr << ","
       << adam.beta1 << "," << adam.beta2 << "," << adam.eps << "," << master_seed << ","
       << static_cast<int>(precision) << "}";
    return os.str();
}

std::uint64_t TrainConfig::digest() const { return fnv1a64(describe()); }

template <typename T>
double fit_epoch(Model<T>& model, AdamState<T>& opt, std::span<const float> features, std::span<const float> targets,
                 std::size_t n_examples, std::size_t batch, std::size_t micro_batch, int threads) {
    const auto& mc = model.config;
    const std::size_t stride = static_cast<std::size_t>(mc.window) * static_cast<std::size_t>(mc.input_features);
    const auto O = static_cast<std::size_t>(mc.output_dim);
    if (features.size() != n_examples * stride) throw ShapeError("fit_epoch: features do not match the model input");
    if (targets.size() != n_examples * O) throw ShapeError("fit_epoch: targets size");
    if (batch < 1 || micro_batch < 1) throw ConfigError("fit_epoch: batch sizes must be >= 1");
    const std::size_t n_batches = n_examples / batch;
    if (n_batches == 0) throw ConfigError("fit_epoch: fewer examples than one batch");
    if (opt.m.size() != model.params.size()) opt.reset(model.params.size());

    const std::size_t n_chunks = (batch + micro_batch - 1) / micro_batch;
    const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(threads, static_cast<int>(n_chunks))));
    const std::size_t P = model.params.size();
    std::vector<Engine<T>> engines;
    for (std::size_t w = 0; w < workers; ++w) engines.emplace_back(mc);
    std::vector<std::vector<T>> chunk_grad(n_chunks, std::vector<T>(P));
    std::vector<double> chunk_sq(n_chunks);
    std::vector<T> grad(P);
    std::vector<T> xin, tgt, pred;
    std::vector<std::vector<T>> wx(workers), wt(workers), wp(workers);

    double loss_sum = 0.0;
    const T norm = static_cast<T>(batch * O);
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
        const std::size_t base = bi * batch;
        parallel_for(workers, static_cast<int>(workers), [&](std::size_t w) {
            for (std::size_t c = w; c < n_chunks; c += workers) {
                const std::size_t s = c * micro_batch;
                const std::size_t n = std::min(micro_batch, batch - s);
                auto& x = wx[w];
                auto& t = wt[w];
                auto& p = wp[w];
                const auto* fsrc = features.data() + (base + s) * stride;
                x.assign(fsrc, fsrc + n * stride);
                const auto* tsrc = targets.data() + (base + s) * O;
                t.assign(tsrc, tsrc + n * O);
                p.resize(n * O);
                engines[w].forward(model, x, n, p);
                double sq = 0.0;
                for (std::size_t k = 0; k < n * O; ++k) {
                    const double d = static_cast<double>(p[k]) - static_cast<double>(t[k]);
                    sq += d * d;
                }
                chunk_sq[c] = sq;
                std::fill(chunk_grad[c].begin(), chunk_grad[c].end(), T(0));
                engines[w].backward(model, t, norm, chunk_grad[c]);
            }
        });
        std::fill(grad.begin(), grad.end(), T(0));
        double sq = 0.0;
        for (std::size_t c = 0; c < n_chunks; ++c) {
            const auto& g = chunk_grad[c];
            for (std::size_t k = 0; k < P; ++k) grad[k] += g[k];
            sq += chunk_sq[c];
        }
        loss_sum += sq / static_cast<double>(batch * O);
        adam_step<T>(model.params, grad, opt);
    }
    return loss_sum / static_cast<double>(n_batches);
}

template double fit_epoch<float>(Model<float>&, AdamState<float>&, std::span<const float>, std::span<const float>,
                                 std::size_t, std::size_t, std::size_t, int);
template double fit_epoch<double>(Model<double>&, AdamState<double>&, std::span<const float>,
                                  std::span<const float>, std::size_t, std::size_t, std::size_t, int);

EqualizerModel train(const TrainConfig& cfg, const CheckpointPolicy& policy, const EpochCallback& on_epoch) {
    cfg.validate();
    const auto mc = cfg.model_config();
    EqualizerModel em;
    bool resumed = false;
    if (!policy.path.empty() && policy.resume && std::filesystem::exists(policy.path)) {
        em = load_model(policy.path);
        if (!(em.model.config == mc))
            throw ConfigError("train: checkpoint " + policy.path + " has a different model configuration");
        if (em.provenance.config_digest != cfg.digest())
            throw ConfigError("train: checkpoint " + policy.path + " was produced by a different training configuration");
        if (em.provenance.epochs_completed > cfg.epochs)
            throw ConfigError("train: checkpoint is past the requested epoch count");
        resumed = true;
    }
    if (!resumed) {
        em.model = Model<double>(mc);
        initialize(em.model, derive_seed(cfg.master_seed, SeedNamespace::Init));
        em.optimizer.hyper = cfg.adam;
        em.optimizer.reset(em.model.params.size());
        em.provenance = TrainingProvenance{dataset::to_string(cfg.sampler.mode),
                                           cfg.master_seed,
                                           cfg.digest(),
                                           0,
                                           cfg.epoch_size,
                                           cfg.batch,
                                           cfg.precision};
    }
    if (cfg.precision == Precision::F32) {
        run_epochs<float>(em, cfg, policy, on_epoch);
    } else {
        run_epochs<double>(em, cfg, policy, on_epoch);
    }
    return em;
}

std::vector<std::complex<double>> predict_symbols(const EqualizerModel& m, const dataset::Windows& w,
                                                  Precision precision) {
    const auto& mc = m.model.config;
    if (w.window != mc.window || w.n_features != mc.input_features)
        throw ShapeError("predict: windows are " + std::to_string(w.window) + "x" + std::to_string(w.n_features) +
                         ", model expects " + std::to_string(mc.window) + "x" + std::to_string(mc.input_features));
    const std::size_t n = w.size();
    std::vector<std::complex<double>> out(n);
    if (n == 0) return out;
    if (precision == Precision::F32) {
        const auto mf = m.model.cast<float>();
        const auto p = predict<float>(mf, w.features, n);
        for (std::size_t e = 0; e < n; ++e) out[e] = {p[2 * e], p[2 * e + 1]};
    } else {
        std::vector<double> x(w.features.begin(), w.features.end());
        const auto p = predict<double>(m.model, x, n);
        for (std::size_t e = 0; e < n; ++e) out[e] = {p[2 * e], p[2 * e + 1]};
    }
    return out;
}

void save_model(const EqualizerModel& m, const std::string& path) {
    binio::Writer w;
    w.put_bytes(std::string_view(kMagic, 5));
    w.put<std::uint16_t>(kModelVersion);
    const auto& c = m.model.config;
    for (int v : {c.n_layers, c.hidden, c.input_features, c.window, c.output_dim}) w.put<std::uint32_t>(v);

    const auto& p = m.provenance;
    w.put_string(p.mode);
    w.put<std::uint64_t>(p.master_seed);
    w.put<std::uint64_t>(p.config_digest);
    w.put<std::uint64_t>(p.epochs_completed);
    w.put<std::uint64_t>(p.epoch_size);
    w.put<std::uint64_t>(p.batch);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p.precision));

    w.put<std::uint64_t>(m.history.size());
    for (const auto& r : m.history) {
        w.put<std::uint64_t>(r.epoch);
        w.put<double>(r.loss);
        w.put<double>(r.wall_seconds);
        w.put<std::uint64_t>(r.scenario_digest);
        w.put<std::uint64_t>(r.batches);
    }

    const std::size_t P = m.model.params.size();
    w.put<std::uint64_t>(P);
    w.put_array<double>(m.model.params);
    const auto& o = m.optimizer;
    w.put<double>(o.hyper.lr);
    w.put<double>(o.hyper.beta1);
    w.put<double>(o.hyper.beta2);
    w.put<double>(o.hyper.eps);
    w.put<std::uint64_t>(o.t);
    const bool has_state = o.m.size() == P && o.v.size() == P;
    w.put<std::uint8_t>(has_state ? 1 : 0);
    if (has_state) {
        w.put_array<double>(o.m);
        w.put_array<double>(o.v);
    }
    w.put<std::uint32_t>(binio::crc32(w.bytes()));
    binio::write_file(path, w.bytes());
}

EqualizerModel load_model(const std::string& path) {
    const auto bytes = binio::read_file(path);
    binio::Reader r(bytes, "model " + path);
    if (r.get_bytes(5) != std::string_view(kMagic, 5)) throw FormatError("model " + path + ": bad magic");
    const auto version = r.get<std::uint16_t>();
    if (version != kModelVersion)
        throw FormatError("model " + path + ": unsupported version " + std::to_string(version));
    EqualizerModel m;
    ModelConfig c;
    c.n_layers = static_cast<int>(r.get<std::uint32_t>());
    c.hidden = static_cast<int>(r.get<std::uint32_t>());
    c.input_features = static_cast<int>(r.get<std::uint32_t>());
    c.window = static_cast<int>(r.get<std::uint32_t>());
    c.output_dim = static_cast<int>(r.get<std::uint32_t>());
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError("model " + path + ": invalid config block (" + e.what() + ")");
    }

    auto& p = m.provenance;
    p.mode = r.get_string(64);
    p.master_seed = r.get<std::uint64_t>();
    p.config_digest = r.get<std::uint64_t>();
    p.epochs_completed = r.get<std::uint64_t>();
    p.epoch_size = r.get<std::uint64_t>();
    p.batch = r.get<std::uint64_t>();
    const auto prec = r.get<std::uint8_t>();
    if (prec > 1) throw FormatError("model " + path + ": bad precision tag");
    p.precision = static_cast<Precision>(prec);

    const auto n_hist = r.get<std::uint64_t>();
    if (n_hist > r.remaining() / 40) throw FormatError("model " + path + ": history length out of range");
    m.history.resize(n_hist);
    for (auto& h : m.history) {
        h.epoch = r.get<std::uint64_t>();
        h.loss = r.get<double>();
        h.wall_seconds = r.get<double>();
        h.scenario_digest = r.get<std::uint64_t>();
        h.batches = r.get<std::uint64_t>();
    }

    m.model = Model<double>(c);
    const auto P = r.get<std::uint64_t>();
    if (P != m.model.params.size())
        throw FormatError("model " + path + ": parameter count " + std::to_string(P) + " does not match config");
    r.get_array<double>(m.model.params);
    auto& o = m.optimizer;
    o.hyper.lr = r.get<double>();
    o.hyper.beta1 = r.get<double>();
    o.hyper.beta2 = r.get<double>();
    o.hyper.eps = r.get<double>();
    o.t = r.get<std::uint64_t>();
    if (r.get<std::uint8_t>()) {
        o.m.resize(P);
        o.v.resize(P);
        r.get_array<double>(o.m);
        r.get_array<double>(o.v);
    }
    const std::size_t body_end = r.position();
    const auto stored = r.get<std::uint32_t>();
    if (r.remaining() != 0) throw FormatError("model " + path + ": trailing bytes");
    if (stored != binio::crc32(r.span_from(0, body_end))) throw FormatError("model " + path + ": CRC mismatch");
    return m;
}

void write_loss_csv(const std::vector<EpochRecord>& history, const std::string& path) {
    std::ostringstream os;
    os << "epoch,loss,wall_time_s,scenario_digest\n";
    for (const auto& r : history) {
        os << r.epoch << "," << std::setprecision(10) << r.loss << "," << std::setprecision(6) << r.wall_seconds
           << "," << std::hex << std::setw(16) << std::setfill('0') << r.scenario_digest << std::dec
           << std::setfill(' ') << "\n";
    }
    const auto s = os.str();
    binio::write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

}  // namespace mteq::nn
