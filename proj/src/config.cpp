#include "mteq/config.hpp"

#include <json.hpp>

#include "mteq/binio.hpp"
#include "mteq/errors.hpp"
#include "mteq/rng.hpp"

namespace mteq::config {

using nlohmann::json;

namespace {

// Walks one JSON object, consuming known keys and rejecting the rest.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.push_back(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        out = convert<T>(*it, field(key));
    }

    template <typename T>
    void get(const char* key, std::optional<T>& out) {
        seen_.push_back(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        if (it->is_null()) {
            out.reset();
            return;
        }
        out = convert<T>(*it, field(key));
    }

    bool has(const char* key) const { return j_.contains(key); }

    Obj child(const char* key) {
        seen_.push_back(key);
        static const json empty = json::object();
        auto it = j_.find(key);
        return Obj(it == j_.end() ? empty : *it, field(key));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
                throw ConfigError(field(it.key().c_str()) + ": unknown key");
        }
    }

    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    template <typename T>
    static T convert(const json& v, const std::string& path) {
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError(path + " must be a boolean");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError(path + " must be an integer");
                if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
                    throw ConfigError(path + " must be non-negative");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError(path + " must be a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(path + " must be a string");
            } else {
                if (!v.is_array()) throw ConfigError(path + " must be an array");
            }
            return v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }

    const json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

void read_scenario(Obj o, dataset::Scenario& s) {
    o.get("p_dbm", s.p_dbm);
    o.get("rs_gbd", s.rs_gbd);
    o.get("n_spans", s.n_spans);
    o.finish();
}

json scenario_json(const dataset::Scenario& s) {
    return json{{"p_dbm", s.p_dbm}, {"rs_gbd", s.rs_gbd}, {"n_spans", s.n_spans}};
}

const char* precision_name(nn::Precision p) { return p == nn::Precision::F32 ? "f32" : "f64"; }

}  // namespace

ExperimentConfig ExperimentConfig::paper() { return ExperimentConfig{}; }

void ExperimentConfig::apply_desk_scale() {
    window = 41;
    hidden = 16;
    n_layers = 2;
    epoch_size = std::size_t{1} << 13;
    epochs = 30;
    batch = kDeskBatch;
    micro_batch = kDeskBatch;
    subframe_symbols = std::size_t{1} << 11;
    range.spans_min = 2;
    range.spans_max = 10;
    fixed.n_spans = 10;
    if (span_grid) span_grid.reset();
    eval_symbols = 10000;
    sweep_spans = {2, 4, 6, 8, 10};
    sweep_power = {-1, 1, 3, 5};
    sweep_rate = {30, 40, 50, 60, 70};
    sweep_fixed = {5.0, 40.0, 10, 0};
    checkpoint_every = 5;
}

std::size_t ExperimentConfig::effective_epochs() const {
    if (epochs) return *epochs;
    return mode == dataset::SamplerMode::Universal ? 1200 : 1000;
}

dataset::SamplerSpec ExperimentConfig::sampler() const {
    auto s = dataset::SamplerSpec::for_mode(mode);
    s.fixed_p_dbm = fixed.p_dbm;
    s.fixed_rs_gbd = fixed.rs_gbd;
    s.fixed_n_spans = fixed.n_spans;
    if (power_grid) s.power_grid = *power_grid;
    if (rate_grid) s.rate_grid = *rate_grid;
    if (span_grid) {
        s.span_grid = *span_grid;
    } else {
        s.span_grid.clear();
        const int step = range.spans_max - range.spans_min >= 20 ? 5 : 1;
        for (int n = range.spans_min; n <= range.spans_max; n += step) s.span_grid.push_back(n);
    }
    return s;
}

dataset::DataGenConfig ExperimentConfig::datagen() const {
    dataset::DataGenConfig d;
    d.sim = sim;
    d.window = window;
    d.subframe_symbols = subframe_symbols;
    d.threads = threads;
    return d;
}

nn::TrainConfig ExperimentConfig::train_config() const {
    nn::TrainConfig t;
    t.sampler = sampler();
    t.data = datagen();
    t.n_layers = n_layers;
    t.hidden = hidden;
    t.epochs = effective_epochs();
    t.epoch_size = epoch_size;
    t.batch = batch;
    t.adam = adam;
    t.master_seed = master_seed;
    t.precision = precision;
    t.micro_batch = micro_batch;
    t.threads = threads;
    return t;
}

eval::EvalConfig ExperimentConfig::eval_config() const {
    eval::EvalConfig e;
    e.sim = sim;
    e.n_symbols = eval_symbols;
    e.min_symbols = eval_min_symbols;
    e.subframe_symbols = eval_subframe_symbols;
    e.window = window;
    e.precision = precision;
    e.threads = threads;
    return e;
}

eval::SweepSpec ExperimentConfig::sweep_spec(eval::SweepAxis axis) const {
    eval::SweepSpec s;
    s.axis = axis;
    s.fixed = sweep_fixed;
    s.master_seed = eval_seed;
    switch (axis) {
        case eval::SweepAxis::Spans: s.grid.assign(sweep_spans.begin(), sweep_spans.end()); break;
        case eval::SweepAxis::Power: s.grid = sweep_power; break;
        case eval::SweepAxis::Rate: s.grid = sweep_rate; break;
    }
    return s;
}

void ExperimentConfig::validate() const {
    sim.validate();
    if (range.p_min_dbm > range.p_max_dbm) throw ConfigError("range.p_min_dbm exceeds range.p_max_dbm");
    if (range.rs_min_gbd > range.rs_max_gbd || !(range.rs_min_gbd > 0.0))
        throw ConfigError("range.rs_min_gbd must be positive and not exceed range.rs_max_gbd");
    if (range.spans_min < 1 || range.spans_min > range.spans_max)
        throw ConfigError("range.spans_min must be >= 1 and not exceed range.spans_max");

    const auto spec = sampler();
    if (power_grid && !spec.varies_power())
        throw ConfigError(std::string("sampler.power_grid is set but mode ") + dataset::to_string(mode) +
                          " does not vary the launch power");
    if (rate_grid && !spec.varies_rate())
        throw ConfigError(std::string("sampler.rate_grid is set but mode ") + dataset::to_string(mode) +
                          " does not vary the symbol rate");
    if (span_grid && !spec.varies_spans())
        throw ConfigError(std::string("sampler.span_grid is set but mode ") + dataset::to_string(mode) +
                          " does not vary the span count");
    spec.validate(range);
    train_config().validate();
    if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
    eval_config().validate();

    for (int n : sweep_spans) range.check({sweep_fixed.p_dbm, sweep_fixed.rs_gbd, n, 0}, "eval.sweep_spans");
    for (double p : sweep_power) range.check({p, sweep_fixed.rs_gbd, sweep_fixed.n_spans, 0}, "eval.sweep_power");
    for (double r : sweep_rate) range.check({sweep_fixed.p_dbm, r, sweep_fixed.n_spans, 0}, "eval.sweep_rate");
    range.check(sweep_fixed, "eval.fixed");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
    if (threads < 1) throw ConfigError("threads must be >= 1");
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["fiber"] = {{"gamma", sim.fiber.gamma},
                  {"dispersion_D", sim.fiber.dispersion_D},
                  {"alpha_db_per_km", sim.fiber.alpha_db_per_km},
                  {"span_length_km", sim.fiber.span_length_km},
                  {"wavelength_nm", sim.fiber.wavelength_nm}};
    j["amplifier"] = {{"noise_figure_db", sim.amp.noise_figure_db}, {"ase_enabled", sim.amp.ase_enabled}};
    j["ssfm"] = {{"step_km", sim.ssfm.step_km},
                 {"symmetric", sim.ssfm.symmetric},
                 {"max_nonlinear_phase_rad", sim.ssfm.max_nonlinear_phase_rad}};
    j["pulse"] = {{"rolloff", sim.pulse.rolloff},
                  {"filter_span_symbols", sim.pulse.filter_span_symbols},
                  {"sps", sim.pulse.sps_tx}};
    j["channel"] = {{"linear_only", sim.linear_only}};
    j["range"] = {{"p_min_dbm", range.p_min_dbm},   {"p_max_dbm", range.p_max_dbm},
                  {"rs_min_gbd", range.rs_min_gbd}, {"rs_max_gbd", range.rs_max_gbd},
                  {"spans_min", range.spans_min},   {"spans_max", range.spans_max}};
    json s = {{"mode", dataset::to_string(mode)}, {"fixed", scenario_json(fixed)}};
    s["power_grid"] = power_grid ? json(*power_grid) : json(nullptr);
    s["rate_grid"] = rate_grid ? json(*rate_grid) : json(nullptr);
    s["span_grid"] = span_grid ? json(*span_grid) : json(nullptr);
    j["sampler"] = s;
    j["model"] = {{"n_layers", n_layers}, {"hidden", hidden}, {"window", window}};
    j["train"] = {{"epochs", epochs ? json(*epochs) : json(nullptr)},
                  {"epoch_size", epoch_size},
                  {"batch", batch},
                  {"lr", adam.lr},
                  {"beta1", adam.beta1},
                  {"beta2", adam.beta2},
                  {"eps", adam.eps},
                  {"micro_batch", micro_batch},
                  {"precision", precision_name(precision)},
                  {"checkpoint_every", checkpoint_every}};
    j["data"] = {{"subframe_symbols", subframe_symbols}};
    j["eval"] = {{"n_symbols", eval_symbols},   {"min_symbols", eval_min_symbols},
                 {"subframe_symbols", eval_subframe_symbols},
                 {"sweep_spans", sweep_spans},  {"sweep_power", sweep_power},
                 {"sweep_rate", sweep_rate},    {"fixed", scenario_json(sweep_fixed)}};
    j["seeds"] = {{"master", master_seed}, {"eval", eval_seed}};
    j["output_dir"] = output_dir;
    j["threads"] = threads;
    return j.dump(2);
}

std::uint64_t ExperimentConfig::digest() const {
    // Thread count and output location do not change results.
    auto c = *this;
    c.threads = 1;
    c.output_dir = "-";
    return fnv1a64(c.to_json());
}

ExperimentConfig parse_json(const std::string& text, ExperimentConfig c) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    Obj root(j, "");
    {
        auto o = root.child("fiber");
        o.get("gamma", c.sim.fiber.gamma);
        o.get("dispersion_D", c.sim.fiber.dispersion_D);
        o.get("alpha_db_per_km", c.sim.fiber.alpha_db_per_km);
        o.get("span_length_km", c.sim.fiber.span_length_km);
        o.get("wavelength_nm", c.sim.fiber.wavelength_nm);
        o.finish();
    }
    {
        auto o = root.child("amplifier");
        o.get("noise_figure_db", c.sim.amp.noise_figure_db);
        o.get("ase_enabled", c.sim.amp.ase_enabled);
        o.finish();
    }
    {
        auto o = root.child("ssfm");
        o.get("step_km", c.sim.ssfm.step_km);
        o.get("symmetric", c.sim.ssfm.symmetric);
        o.get("max_nonlinear_phase_rad", c.sim.ssfm.max_nonlinear_phase_rad);
        o.finish();
    }
    {
        auto o = root.child("pulse");
        o.get("rolloff", c.sim.pulse.rolloff);
        o.get("filter_span_symbols", c.sim.pulse.filter_span_symbols);
        o.get("sps", c.sim.pulse.sps_tx);
        o.finish();
    }
    {
        auto o = root.child("channel");
        o.get("linear_only", c.sim.linear_only);
        o.finish();
    }
    {
        auto o = root.child("range");
        o.get("p_min_dbm", c.range.p_min_dbm);
        o.get("p_max_dbm", c.range.p_max_dbm);
        o.get("rs_min_gbd", c.range.rs_min_gbd);
        o.get("rs_max_gbd", c.range.rs_max_gbd);
        o.get("spans_min", c.range.spans_min);
        o.get("spans_max", c.range.spans_max);
        o.finish();
    }
    {
        auto o = root.child("sampler");
        std::string mode = dataset::to_string(c.mode);
        o.get("mode", mode);
        try {
            c.mode = dataset::sampler_mode_from_string(mode);
        } catch (const ConfigError& e) {
            throw ConfigError(o.field("mode") + ": " + e.what());
        }
        read_scenario(o.child("fixed"), c.fixed);
        o.get("power_grid", c.power_grid);
        o.get("rate_grid", c.rate_grid);
        o.get("span_grid", c.span_grid);
        o.finish();
    }
    {
        auto o = root.child("model");
        o.get("n_layers", c.n_layers);
        o.get("hidden", c.hidden);
        o.get("window", c.window);
        o.finish();
    }
    {
        auto o = root.child("train");
        o.get("epochs", c.epochs);
        o.get("epoch_size", c.epoch_size);
        o.get("batch", c.batch);
        o.get("lr", c.adam.lr);
        o.get("beta1", c.adam.beta1);
        o.get("beta2", c.adam.beta2);
        o.get("eps", c.adam.eps);
        o.get("micro_batch", c.micro_batch);
        std::string prec = precision_name(c.precision);
        o.get("precision", prec);
        if (prec == "f32") {
            c.precision = nn::Precision::F32;
        } else if (prec == "f64") {
            c.precision = nn::Precision::F64;
        } else {
            throw ConfigError(o.field("precision") + " must be \"f32\" or \"f64\"");
        }
        o.get("checkpoint_every", c.checkpoint_every);
        o.finish();
    }
    {
        auto o = root.child("data");
        o.get("subframe_symbols", c.subframe_symbols);
        o.finish();
    }
    {
        auto o = root.child("eval");
        o.get("n_symbols", c.eval_symbols);
        o.get("min_symbols", c.eval_min_symbols);
        o.get("subframe_symbols", c.eval_subframe_symbols);
        o.get("sweep_spans", c.sweep_spans);
        o.get("sweep_power", c.sweep_power);
        o.get("sweep_rate", c.sweep_rate);
        read_scenario(o.child("fixed"), c.sweep_fixed);
        o.finish();
    }
    {
        auto o = root.child("seeds");
        o.get("master", c.master_seed);
        o.get("eval", c.eval_seed);
        o.finish();
    }
    root.get("output_dir", c.output_dir);
    root.get("threads", c.threads);
    root.finish();
    return c;
}

ExperimentConfig load_file(const std::string& path, ExperimentConfig base) {
    const auto bytes = binio::read_file(path);
    return parse_json(std::string(bytes.begin(), bytes.end()), std::move(base));
}

}  // namespace mteq::config
