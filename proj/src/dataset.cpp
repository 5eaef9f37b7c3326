#include "mteq/dataset.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "mteq/binio.hpp"
#include "mteq/errors.hpp"
#include "mteq/parallel.hpp"

namespace mteq::dataset {

namespace {

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

void write_window(float* dst, std::span<const cplx> rx_x, std::span<const cplx> rx_y, std::size_t start,
                  int window, std::optional<double> p_norm) {
    const int nf = p_norm ? 5 : 4;
    for (int t = 0; t < window; ++t) {
        const auto k = start + static_cast<std::size_t>(t);
        float* row = dst + static_cast<std::size_t>(t) * static_cast<std::size_t>(nf);
        row[0] = static_cast<float>(rx_x[k].real());
        row[1] = static_cast<float>(rx_x[k].imag());
        row[2] = static_cast<float>(rx_y[k].real());
        row[3] = static_cast<float>(rx_y[k].imag());
        if (p_norm) row[4] = static_cast<float>(*p_norm);
    }
}

void shuffle_indices(std::vector<std::uint64_t>& v, RngStream& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_index(i));
        std::swap(v[i - 1], v[j]);
    }
}

template <typename T>
T pick(const std::vector<T>& grid, RngStream& rng, const char* name) {
    if (grid.empty()) throw ConfigError(std::string("sampler.") + name + " grid is empty");
    return grid[static_cast<std::size_t>(rng.uniform_index(grid.size()))];
}

constexpr char kMagic[4] = {'M', 'T', 'E', 'Q'};

}  // namespace

void ScenarioRange::check(const Scenario& s, const std::string& where) const {
    auto fail = [&](const std::string& field, double v, double lo, double hi) {
        std::ostringstream os;
        os << where << "." << field << " = " << v << " outside [" << lo << ", " << hi << "]";
        throw ConfigError(os.str());
    };
    if (!(s.p_dbm >= p_min_dbm && s.p_dbm <= p_max_dbm)) fail("p_dbm", s.p_dbm, p_min_dbm, p_max_dbm);
    if (!(s.rs_gbd >= rs_min_gbd && s.rs_gbd <= rs_max_gbd)) fail("rs_gbd", s.rs_gbd, rs_min_gbd, rs_max_gbd);
    if (s.n_spans < spans_min || s.n_spans > spans_max) fail("n_spans", s.n_spans, spans_min, spans_max);
}

const char* to_string(SamplerMode m) {
    switch (m) {
        case SamplerMode::StlFixed: return "stl";
        case SamplerMode::MtlSpans: return "mtl-spans";
        case SamplerMode::MtlPower: return "mtl-power";
        case SamplerMode::MtlRate: return "mtl-rate";
        case SamplerMode::Universal: return "universal";
    }
    return "?";
}

SamplerMode sampler_mode_from_string(const std::string& s) {
    for (auto m : {SamplerMode::StlFixed, SamplerMode::MtlSpans, SamplerMode::MtlPower, SamplerMode::MtlRate,
                   SamplerMode::Universal}) {
        if (s == to_string(m)) return m;
    }
    throw ConfigError("unknown sampler mode '" + s + "' (expected stl, mtl-spans, mtl-power, mtl-rate, universal)");
}

SamplerSpec SamplerSpec::for_mode(SamplerMode mode) {
    SamplerSpec s;
    s.mode = mode;
    return s;
}

void SamplerSpec::validate(const ScenarioRange& range) const {
    Scenario fixed{fixed_p_dbm, fixed_rs_gbd, fixed_n_spans, 0};
    range.check(fixed, "sampler.fixed");
    if (varies_power()) {
        for (double p : power_grid) range.check({p, fixed_rs_gbd, fixed_n_spans, 0}, "sampler.power_grid");
        if (power_grid.empty()) throw ConfigError("sampler.power_grid is empty");
    }
    if (varies_rate()) {
        for (double r : rate_grid) range.check({fixed_p_dbm, r, fixed_n_spans, 0}, "sampler.rate_grid");
        if (rate_grid.empty()) throw ConfigError("sampler.rate_grid is empty");
    }
    if (varies_spans()) {
        for (int n : span_grid) range.check({fixed_p_dbm, fixed_rs_gbd, n, 0}, "sampler.span_grid");
        if (span_grid.empty()) throw ConfigError("sampler.span_grid is empty");
    }
}

Scenario sample_scenario(const SamplerSpec& spec, RngStream& rng) {
    Scenario s{spec.fixed_p_dbm, spec.fixed_rs_gbd, spec.fixed_n_spans, 0};
    if (spec.varies_spans()) s.n_spans = pick(spec.span_grid, rng, "span_grid");
    if (spec.varies_rate()) s.rs_gbd = pick(spec.rate_grid, rng, "rate_grid");
    if (spec.varies_power()) s.p_dbm = pick(spec.power_grid, rng, "power_grid");
    s.seed = rng.child_seed();
    return s;
}

void SimulationConfig::validate() const {
    fiber.validate();
    amplifier().validate();
    ssfm.validate();
    pulse.validate();
}

channel::AmplifierParams SimulationConfig::amplifier() const {
    channel::AmplifierParams a = amp;
    a.gain_db = fiber.span_loss_db();
    return a;
}

std::string SimulationConfig::describe() const {
    std::ostringstream os;
    os.precision(17);
    os << "fiber{" << fiber.gamma << "," << fiber.dispersion_D << "," << fiber.alpha_db_per_km << ","
       << fiber.span_length_km << "," << fiber.wavelength_nm << "}"
       << "amp{" << amp.noise_figure_db << "," << amp.ase_enabled << "}"
       << "ssfm{" << ssfm.step_km << "," << ssfm.symmetric << "," << ssfm.max_nonlinear_phase_rad << "}"
       << "pulse{" << pulse.rolloff << "," << pulse.filter_span_symbols << "," << pulse.sps_tx << "}"
       << "linear_only{" << linear_only << "}";
    return os.str();
}

std::size_t guard_symbols(const Scenario& s, const SimulationConfig& sim) {
    const double rs = s.rs_gbd * 1e9;
    const double length = channel::link_length_km(s.n_spans, sim.fiber) * 1e3;
    const double bandwidth = 2.0 * std::numbers::pi * (1.0 + sim.pulse.rolloff) * rs;
    const double spread_s = std::abs(sim.fiber.beta2()) * length * bandwidth;
    return static_cast<std::size_t>(std::ceil(spread_s * rs)) + static_cast<std::size_t>(sim.pulse.filter_span_symbols);
}

AlignedSymbols generate_scenario_data(const Scenario& s, std::size_t n_symbols, const SimulationConfig& sim) {
    sim.validate();
    const std::size_t guard = guard_symbols(s, sim);
    if (n_symbols <= 2 * guard) {
        throw InvalidLength("generate_scenario_data: " + std::to_string(n_symbols) +
                            " symbols do not exceed the 2 x " + std::to_string(guard) + " guard");
    }
    const auto frame = signal::generate_frame(n_symbols, split_seed(s.seed, 0));
    auto w = signal::shape_pulse(frame, sim.pulse, s.rs_gbd * 1e9);
    w = signal::set_launch_power(w, s.p_dbm);

    const auto amp = sim.amplifier();
    const std::uint64_t link_seed = split_seed(s.seed, 1);
    if (sim.linear_only) {
        const double nu = sim.fiber.carrier_frequency_hz();
        for (int k = 0; k < s.n_spans; ++k) {
            w = channel::dispersion_halfstep(w, sim.fiber.beta2(), sim.fiber.alpha_neper_per_m(),
                                             sim.fiber.span_length_km * 1e3);
            w = channel::edfa_amplify(w, amp, nu, split_seed(link_seed, static_cast<std::uint64_t>(k)));
        }
    } else {
        w = channel::propagate_link(w, s.n_spans, sim.fiber, amp, sim.ssfm, link_seed);
    }

    w = dsp::cdc(w, {channel::link_length_km(s.n_spans, sim.fiber) * 1e3, sim.fiber.beta2()});
    const auto rx = signal::matched_filter_and_downsample(w, sim.pulse, n_symbols);
    auto norm = dsp::normalize_symbols(rx.x, rx.y, frame.x_symbols, frame.y_symbols);

    AlignedSymbols out;
    out.guard = guard;
    out.scenario = s;
    out.normalization = norm.record;
    const auto first = static_cast<std::ptrdiff_t>(guard);
    const auto last = static_cast<std::ptrdiff_t>(n_symbols - guard);
    out.rx_x.assign(norm.x.begin() + first, norm.x.begin() + last);
    out.rx_y.assign(norm.y.begin() + first, norm.y.begin() + last);
    out.tx_x.assign(frame.x_symbols.begin() + first, frame.x_symbols.begin() + last);
    out.tx_y.assign(frame.y_symbols.begin() + first, frame.y_symbols.begin() + last);
    out.tx_bits_x.assign(frame.bits_x.begin() + 4 * first, frame.bits_x.begin() + 4 * last);
    return out;
}

Windows build_windows(std::span<const cplx> rx_x, std::span<const cplx> rx_y, std::span<const cplx> tx_x,
                      int window, std::optional<double> power_feature) {
    if (window < 1) throw ShapeError("build_windows: window must be >= 1");
    if (rx_x.size() != rx_y.size() || rx_x.size() != tx_x.size()) {
        throw InvalidLength("build_windows: rx/tx lengths differ");
    }
    const auto w = static_cast<std::size_t>(window);
    if (rx_x.size() < w) {
        throw InvalidLength("build_windows: " + std::to_string(rx_x.size()) + " symbols shorter than window " +
                            std::to_string(window));
    }
    Windows out;
    out.window = window;
    out.n_features = power_feature ? 5 : 4;
    const std::size_t n = rx_x.size() - w + 1;
    const std::size_t stride = w * static_cast<std::size_t>(out.n_features);
    out.features.resize(n * stride);
    out.targets.resize(2 * n);
    const std::size_t center = w / 2;
    for (std::size_t e = 0; e < n; ++e) {
        write_window(out.features.data() + e * stride, rx_x, rx_y, e, window, power_feature);
        out.targets[2 * e] = static_cast<float>(tx_x[e + center].real());
        out.targets[2 * e + 1] = static_cast<float>(tx_x[e + center].imag());
    }
    return out;
}

std::string DataGenConfig::describe() const {
    return sim.describe() + "window{" + std::to_string(window) + "}subframe{" + std::to_string(subframe_symbols) +
           "}";
}

std::uint64_t EpochDataset::digest() const {
    auto bytes = [](const auto& v) {
        return std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(v[0]));
    };
    std::uint64_t h = fnv1a64(bytes(features));
    h = fnv1a64(bytes(targets), h);
    h = fnv1a64(bytes(example_scenario), h);
    for (const auto& s : scenarios) {
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&s.seed), sizeof(s.seed)), h);
    }
    return h;
}

EpochDataset generate_epoch(const SamplerSpec& spec, std::size_t epoch_size, std::uint64_t epoch_index,
                            std::uint64_t master_seed, const DataGenConfig& cfg) {
    if (epoch_size < 1) throw ConfigError("generate_epoch: epoch_size must be >= 1");
    if (cfg.window < 1) throw ConfigError("generate_epoch: window must be >= 1");
    cfg.sim.validate();

    // Plan sub-frames sequentially so scenario draws never depend on threading.
    RngStream rng(derive_seed(master_seed, SeedNamespace::Train, epoch_index));
    EpochDataset d;
    d.window = cfg.window;
    d.n_features = spec.feature_count();
    d.mode = spec.mode;
    d.master_seed = master_seed;
    d.epoch_index = epoch_index;
    d.generation_config_hash = fnv1a64(cfg.describe());
    std::vector<std::size_t> yields;
    std::size_t total = 0;
    while (total < epoch_size) {
        const Scenario s = sample_scenario(spec, rng);
        const std::size_t guard = guard_symbols(s, cfg.sim);
        const auto w = static_cast<std::size_t>(cfg.window);
        if (cfg.subframe_symbols < 2 * guard + w) {
            throw ConfigError("generate_epoch: subframe of " + std::to_string(cfg.subframe_symbols) +
                              " symbols cannot hold a " + std::to_string(cfg.window) + "-symbol window plus 2 x " +
                              std::to_string(guard) + " guard symbols");
        }
        const std::size_t y = cfg.subframe_symbols - 2 * guard - w + 1;
        d.scenarios.push_back(s);
        yields.push_back(y);
        total += y;
    }

    std::vector<AlignedSymbols> data(d.scenarios.size());
    parallel_for(data.size(), cfg.threads, [&](std::size_t i) {
        data[i] = generate_scenario_data(d.scenarios[i], cfg.subframe_symbols, cfg.sim);
    });
    d.normalization.reserve(data.size());
    for (const auto& a : data) d.normalization.push_back(a.normalization);

    // Pool (scenario, offset) pairs, shuffle with a seeded permutation, keep epoch_size.
    std::vector<std::uint64_t> pool;
    pool.reserve(total);
    for (std::size_t i = 0; i < yields.size(); ++i) {
        for (std::size_t j = 0; j < yields[i]; ++j) pool.push_back((static_cast<std::uint64_t>(i) << 32) | j);
    }
    RngStream shuffle_rng(derive_seed(master_seed, SeedNamespace::Shuffle, epoch_index));
    shuffle_indices(pool, shuffle_rng);
    pool.resize(epoch_size);

    const auto stride = static_cast<std::size_t>(d.window) * static_cast<std::size_t>(d.n_features);
    d.features.resize(epoch_size * stride);
    d.targets.resize(2 * epoch_size);
    d.example_scenario.resize(epoch_size);
    const std::size_t center = static_cast<std::size_t>(d.window) / 2;
    for (std::size_t e = 0; e < epoch_size; ++e) {
        const auto i = static_cast<std::size_t>(pool[e] >> 32);
        const auto j = static_cast<std::size_t>(pool[e] & 0xffffffffu);
        const auto& a = data[i];
        std::optional<double> p_norm;
        if (spec.power_feature()) p_norm = normalized_power(d.scenarios[i].p_dbm);
        write_window(d.features.data() + e * stride, a.rx_x, a.rx_y, j, d.window, p_norm);
        d.targets[2 * e] = static_cast<float>(a.tx_x[j + center].real());
        d.targets[2 * e + 1] = static_cast<float>(a.tx_x[j + center].imag());
        d.example_scenario[e] = static_cast<std::uint32_t>(i);
    }
    return d;
}

void save_dataset(const EpochDataset& d, const std::string& path) {
    binio::Writer w;
    w.put_bytes(std::string_view(kMagic, 4));
    w.put<std::uint16_t>(kDatasetVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.window));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.n_features));
    w.put<std::uint64_t>(d.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(d.mode));
    w.put<std::uint64_t>(d.master_seed);
    w.put<std::uint64_t>(d.epoch_index);
    w.put<std::uint64_t>(d.generation_config_hash);
    w.put<double>(d.power_norm_center);
    w.put<double>(d.power_norm_half_width);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(d.scenarios.size()));
    for (std::size_t i = 0; i < d.scenarios.size(); ++i) {
        const auto& s = d.scenarios[i];
        const auto& r = d.normalization.at(i);
        w.put<double>(s.p_dbm);
        w.put<double>(s.rs_gbd);
        w.put<std::int32_t>(s.n_spans);
        w.put<std::uint64_t>(s.seed);
        w.put<double>(r.x.scale);
        w.put<double>(r.x.rotation_deg);
        w.put<double>(r.y.scale);
        w.put<double>(r.y.rotation_deg);
    }
    w.put_array<std::uint32_t>(d.example_scenario);
    const std::size_t payload_start = w.size();
    w.put_array<float>(d.features);
    w.put_array<float>(d.targets);
    const auto& bytes = w.bytes();
    const auto crc = binio::crc32(std::span(bytes).subspan(payload_start));
    w.put<std::uint32_t>(crc);
    binio::write_file(path, w.bytes());
}

EpochDataset load_dataset(const std::string& path) {
    const auto bytes = binio::read_file(path);
    binio::Reader r(bytes, "dataset '" + path + "'");
    if (r.get_bytes(4) != std::string_view(kMagic, 4)) {
        throw FormatError("dataset '" + path + "': bad magic (not an MTEQ dataset)");
    }
    const auto version = r.get<std::uint16_t>();
    if (version != kDatasetVersion) {
        throw FormatError("dataset '" + path + "': unsupported version " + std::to_string(version) +
                          " (this build reads version " + std::to_string(kDatasetVersion) + ")");
    }
    EpochDataset d;
    d.window = static_cast<int>(r.get<std::uint32_t>());
    d.n_features = static_cast<int>(r.get<std::uint32_t>());
    const auto n = r.get<std::uint64_t>();
    const auto mode = r.get<std::uint8_t>();
    if (mode > static_cast<std::uint8_t>(SamplerMode::Universal)) {
        throw FormatError("dataset '" + path + "': bad sampler mode " + std::to_string(mode));
    }
    d.mode = static_cast<SamplerMode>(mode);
    if (d.window < 1 || (d.n_features != 4 && d.n_features != 5)) {
        throw FormatError("dataset '" + path + "': bad shape header");
    }
    d.master_seed = r.get<std::uint64_t>();
    d.epoch_index = r.get<std::uint64_t>();
    d.generation_config_hash = r.get<std::uint64_t>();
    d.power_norm_center = r.get<double>();
    d.power_norm_half_width = r.get<double>();
    const auto n_scen = r.get<std::uint32_t>();
    // 60 bytes per scenario record; reject counts the file cannot hold.
    if (static_cast<std::uint64_t>(n_scen) * 60 > r.remaining()) {
        throw FormatError("dataset '" + path + "': truncated scenario table");
    }
    d.scenarios.resize(n_scen);
    d.normalization.resize(n_scen);
    for (std::uint32_t i = 0; i < n_scen; ++i) {
        auto& s = d.scenarios[i];
        auto& rec = d.normalization[i];
        s.p_dbm = r.get<double>();
        s.rs_gbd = r.get<double>();
        s.n_spans = r.get<std::int32_t>();
        s.seed = r.get<std::uint64_t>();
        rec.x.scale = r.get<double>();
        rec.x.rotation_deg = r.get<double>();
        rec.y.scale = r.get<double>();
        rec.y.rotation_deg = r.get<double>();
    }
    const auto stride = static_cast<std::uint64_t>(d.window) * static_cast<std::uint64_t>(d.n_features);
    const std::uint64_t need = n * 4 + n * stride * 4 + n * 2 * 4 + 4;
    if (need > r.remaining()) throw FormatError("dataset '" + path + "': truncated payload");
    d.example_scenario.resize(n);
    r.get_array<std::uint32_t>(d.example_scenario);
    for (auto i : d.example_scenario) {
        if (i >= n_scen) throw FormatError("dataset '" + path + "': provenance index out of range");
    }
    const std::size_t payload_start = r.position();
    d.features.resize(n * stride);
    d.targets.resize(2 * n);
    r.get_array<float>(d.features);
    r.get_array<float>(d.targets);
    const auto crc = binio::crc32(r.span_from(payload_start, r.position()));
    if (r.get<std::uint32_t>() != crc) throw FormatError("dataset '" + path + "': payload CRC mismatch");
    if (r.remaining() != 0) throw FormatError("dataset '" + path + "': trailing bytes after CRC");
    return d;
}

}  // namespace mteq::dataset
