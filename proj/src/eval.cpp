#include "mteq/eval.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <iomanip>
#include <sstream>

#include "mteq/binio.hpp"
#include "mteq/errors.hpp"
#include "mteq/fft.hpp"
#include "mteq/parallel.hpp"
#include "mteq/signal.hpp"

namespace mteq::eval {

double ber(std::span<const std::uint8_t> tx_bits, std::span<const std::uint8_t> rx_bits) {
    if (tx_bits.size() != rx_bits.size())
        throw InvalidLength("ber: " + std::to_string(tx_bits.size()) + " vs " + std::to_string(rx_bits.size()) +
                            " bits");
    if (tx_bits.empty()) throw InvalidLength("ber: empty bit streams");
    std::size_t e = 0;
    for (std::size_t k = 0; k < tx_bits.size(); ++k) e += (tx_bits[k] != 0) != (rx_bits[k] != 0);
    return static_cast<double>(e) / static_cast<double>(tx_bits.size());
}

double erfc_inv(double y) {
    if (!(y > 0.0 && y < 2.0)) throw ConfigError("erfc_inv: argument must be in (0, 2)");
    if (y == 1.0) return 0.0;
    // erfc(-x) = 2 - erfc(x); 2 - y is exact for y in [1, 2).
    if (y > 1.0) return -erfc_inv(2.0 - y);
    // Newton on log erfc(x) - log y, which stays well scaled deep in the tail,
    // safeguarded by a bisection bracket.
    double lo = 0.0, hi = 1.0;
    while (std::erfc(hi) > y) hi *= 2.0;
    const double k = 2.0 / std::sqrt(std::numbers::pi);
    const double ly = std::log(y);
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 300; ++it) {
        const double e = std::erfc(x);
        const double f = std::log(e) - ly;
        if (f == 0.0) return x;
        if (f > 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        const double d = -k * std::exp(-x * x) / e;
        double nx = x - f / d;
        if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
        if (std::abs(nx - x) <= 4e-16 * x) return nx;
        x = nx;
    }
    return x;
}

double q_factor_from_ber(double b) {
    if (!(b > 0.0)) throw ConfigError("q_factor_from_ber: BER must be > 0 (zero-error counts need the clamp policy)");
    if (!(b < 0.5)) throw QUndefined("q_factor_from_ber: BER " + std::to_string(b) + " >= 0.5 has no Q");
    return 20.0 * std::log10(std::numbers::sqrt2 * erfc_inv(2.0 * b));
}

QEstimate q_factor_counted(std::size_t errors, std::size_t n_bits) {
    if (n_bits == 0) throw InvalidLength("q_factor_counted: no bits");
    QEstimate q;
    q.ber = static_cast<double>(errors) / static_cast<double>(n_bits);
    q.ber_used = q.ber;
    if (errors == 0) {
        q.ber_used = 1.0 / (2.0 * static_cast<double>(n_bits));
        q.clamped = true;
    }
    q.q_db = q_factor_from_ber(q.ber_used);
    return q;
}

const char* to_string(Method m) {
    switch (m) {
        case Method::CDC: return "CDC";
        case Method::STL: return "STL";
        case Method::MTL_Spans: return "MTL_Spans";
        case Method::MTL_Power: return "MTL_Power";
        case Method::MTL_Rate: return "MTL_Rate";
        case Method::MTL_Universal: return "MTL_Universal";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    for (auto m : {Method::CDC, Method::STL, Method::MTL_Spans, Method::MTL_Power, Method::MTL_Rate,
                   Method::MTL_Universal}) {
        if (s == to_string(m)) return m;
    }
    throw ConfigError("unknown method '" + s + "'");
}

Method method_for_mode(dataset::SamplerMode mode) {
    switch (mode) {
        case dataset::SamplerMode::StlFixed: return Method::STL;
        case dataset::SamplerMode::MtlSpans: return Method::MTL_Spans;
        case dataset::SamplerMode::MtlPower: return Method::MTL_Power;
        case dataset::SamplerMode::MtlRate: return Method::MTL_Rate;
        case dataset::SamplerMode::Universal: return Method::MTL_Universal;
    }
    return Method::STL;
}

void EvalConfig::validate() const {
    sim.validate();
    if (n_symbols < min_symbols)
        throw ConfigError("eval.n_symbols = " + std::to_string(n_symbols) + " below the floor of " +
                          std::to_string(min_symbols));
    if (window < 1) throw ConfigError("eval.window must be >= 1");
    if (subframe_symbols < 1) throw ConfigError("eval.subframe_symbols must be >= 1");
    if (threads < 1) throw ConfigError("eval.threads must be >= 1");
}

SweepResult evaluate(Method method, const nn::EqualizerModel* model, const dataset::Scenario& s,
                     const EvalConfig& cfg) {
    cfg.validate();
    if (seed_namespace(s.seed) != SeedNamespace::Eval)
        throw ConfigError("evaluate: scenario seed is not in the evaluation namespace");
    if (!(s.p_dbm > -100.0 && s.p_dbm < 40.0) || !(s.rs_gbd > 0.0) || s.n_spans < 1)
        throw ConfigError("evaluate: scenario out of range");
    if ((method == Method::CDC) != (model == nullptr))
        throw ConfigError(std::string("evaluate: method ") + to_string(method) +
                          (model ? " takes no model" : " needs a model"));
    int window = cfg.window;
    if (model) {
        window = model->model.config.window;
        if (window > cfg.window)
            throw ConfigError("evaluate: model window " + std::to_string(window) + " exceeds eval.window " +
                              std::to_string(cfg.window));
    }

    // Test symbols are the centers of full-width windows, so every method
    // scores the same symbols for a given seed.
    const std::size_t guard = dataset::guard_symbols(s, cfg.sim);
    const auto half = static_cast<std::size_t>(cfg.window / 2);
    const std::size_t n_frames = (cfg.n_symbols + cfg.subframe_symbols - 1) / cfg.subframe_symbols;
    std::size_t errors = 0, n_bits = 0;
    for (std::size_t f = 0; f < n_frames; ++f) {
        const std::size_t n = cfg.n_symbols / n_frames + (f < cfg.n_symbols % n_frames ? 1 : 0);
        dataset::Scenario sf = s;
        sf.seed = split_seed(s.seed, f);
        const std::size_t frame = next_fast_size(n + 2 * guard + 2 * half);
        const auto a = dataset::generate_scenario_data(sf, frame, cfg.sim);

        const std::size_t first = half;  // aligned index of the first scored symbol
        std::vector<cplx> eq(n);
        if (!model) {
            std::copy_n(a.rx_x.begin() + static_cast<std::ptrdiff_t>(first), n, eq.begin());
        } else {
            const auto mh = static_cast<std::size_t>(window / 2);
            const std::size_t start = first - mh;
            const std::size_t len = n + 2 * mh;
            std::optional<double> p_norm;
            if (model->model.config.input_features == 5) p_norm = dataset::normalized_power(s.p_dbm);
            const auto sub = [&](const std::vector<cplx>& v) {
                return std::span<const cplx>(v).subspan(start, len);
            };
            const auto w = dataset::build_windows(sub(a.rx_x), sub(a.rx_y), sub(a.tx_x), window, p_norm);
            eq = nn::predict_symbols(*model, w, cfg.precision);
        }
        const auto rx_bits = signal::demap_16qam_hard(eq);
        const auto tx_bits = std::span<const std::uint8_t>(a.tx_bits_x).subspan(4 * first, 4 * n);
        for (std::size_t k = 0; k < tx_bits.size(); ++k) errors += tx_bits[k] != rx_bits[k];
        n_bits += tx_bits.size();
    }
    const auto q = q_factor_counted(errors, n_bits);

    SweepResult r;
    r.method = method;
    r.scenario = s;
    r.ber = q.ber;
    r.q_db = q.q_db;
    r.clamped = q.clamped;
    r.n_symbols_evaluated = cfg.n_symbols;
    return r;
}

const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::Spans: return "spans";
        case SweepAxis::Power: return "power";
        case SweepAxis::Rate: return "rate";
    }
    return "?";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
    for (auto a : {SweepAxis::Spans, SweepAxis::Power, SweepAxis::Rate}) {
        if (s == to_string(a)) return a;
    }
    throw ConfigError("unknown sweep axis '" + s + "' (expected spans, power or rate)");
}

SweepSpec SweepSpec::paper_grid(SweepAxis axis) {
    SweepSpec s;
    s.axis = axis;
    switch (axis) {
        case SweepAxis::Spans:
            s.fixed = {5.0, 40.0, 50, 0};
            s.grid = {10, 15, 20, 25, 30, 35, 40, 45, 50};
            break;
        case SweepAxis::Power:
            s.fixed = {5.0, 40.0, 50, 0};
            s.grid = {-1, 0, 1, 2, 3, 4, 5};
            break;
        case SweepAxis::Rate:
            s.fixed = {5.0, 40.0, 50, 0};
            s.grid = {30, 35, 40, 45, 50, 55, 60, 65, 70};
            break;
    }
    return s;
}

std::vector<SweepResult> sweep(const SweepSpec& spec, const std::vector<SweepMethod>& methods, const EvalConfig& cfg) {
    cfg.validate();
    if (spec.grid.empty()) throw ConfigError("sweep.grid is empty");
    if (methods.empty()) throw ConfigError("sweep: no methods");
    std::vector<dataset::Scenario> points;
    for (std::size_t i = 0; i < spec.grid.size(); ++i) {
        auto s = spec.fixed;
        const double v = spec.grid[i];
        switch (spec.axis) {
            case SweepAxis::Spans:
                if (v != std::floor(v) || v < 1) throw ConfigError("sweep.grid: span counts must be positive integers");
                s.n_spans = static_cast<int>(v);
                break;
            case SweepAxis::Power: s.p_dbm = v; break;
            case SweepAxis::Rate: s.rs_gbd = v; break;
        }
        s.seed = derive_seed(spec.master_seed, SeedNamespace::Eval, i);
        points.push_back(s);
    }
    std::vector<SweepResult> out(points.size() * methods.size());
    auto inner = cfg;
    inner.threads = 1;
    parallel_for(points.size(), cfg.threads, [&](std::size_t i) {
        for (std::size_t m = 0; m < methods.size(); ++m)
            out[i * methods.size() + m] = evaluate(methods[m].method, methods[m].model, points[i], inner);
    });
    return out;
}

std::string sweep_csv(const std::vector<SweepResult>& rows) {
    std::ostringstream os;
    os << kSweepCsvHeader << "\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(r.scenario.seed));
        os << to_string(r.method) << "," << r.scenario.p_dbm << "," << r.scenario.rs_gbd << "," << r.scenario.n_spans
           << "," << r.n_symbols_evaluated << "," << std::setprecision(8) << r.ber << "," << std::setprecision(6)
           << r.q_db << "," << buf << "\n";
        os << std::setprecision(6);
    }
    return os.str();
}

void write_sweep_csv(const std::vector<SweepResult>& rows, const std::string& path) {
    const auto s = sweep_csv(rows);
    binio::write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

}  // namespace mteq::eval
