// mteq: simulate | train | sweep | selftest

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "mteq/binio.hpp"
#include "mteq/config.hpp"
#include "mteq/errors.hpp"
#include "mteq/eval.hpp"
#include "mteq/selftest.hpp"
#include "mteq/trainer.hpp"

using namespace mteq;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

struct Common {
    std::string config_path;
    bool desk_scale = false;
    std::optional<int> threads;
    std::optional<std::string> mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::vector<double> power_grid;
    std::vector<double> rate_grid;
    std::vector<int> span_grid;
    bool linear_only = false;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
        app->add_flag("--desk-scale", desk_scale, "laptop-sized preset (window 41, 2x16 biLSTM, 2^13 examples)");
        app->add_option("--threads", threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
        app->add_option("--mode", mode, "sampler mode: stl, mtl-spans, mtl-power, mtl-rate, universal");
        app->add_option("--seed", seed, "master seed");
        app->add_option("--out-dir", out_dir, "output directory");
        app->add_option("--power-grid", power_grid, "launch powers sampled in training [dBm]");
        app->add_option("--rate-grid", rate_grid, "symbol rates sampled in training [GBd]");
        app->add_option("--span-grid", span_grid, "span counts sampled in training");
        app->add_flag("--linear-only", linear_only, "debug: gamma = 0 link");
    }

    config::ExperimentConfig resolve() const {
        auto c = config::ExperimentConfig::paper();
        if (!config_path.empty()) c = config::load_file(config_path, c);
        if (desk_scale) c.apply_desk_scale();
        if (threads) c.threads = *threads;
        if (mode) c.mode = dataset::sampler_mode_from_string(*mode);
        if (seed) c.master_seed = *seed;
        if (out_dir) c.output_dir = *out_dir;
        if (!power_grid.empty()) c.power_grid = power_grid;
        if (!rate_grid.empty()) c.rate_grid = rate_grid;
        if (!span_grid.empty()) c.span_grid = span_grid;
        if (linear_only) c.sim.linear_only = true;
        return c;
    }
};

std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void ensure_dir(const fs::path& p) {
    std::error_code ec;
    if (!p.empty()) fs::create_directories(p, ec);
    if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

void write_text(const fs::path& p, const std::string& s) {
    binio::write_file(p.string(), std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

int cmd_simulate(const config::ExperimentConfig& c, std::optional<std::string> out, std::uint64_t epoch,
                 std::optional<std::size_t> examples) {
    c.validate();
    const std::size_t n = examples.value_or(c.epoch_size);
    const auto spec = c.sampler();
    const fs::path path = out ? fs::path(*out)
                              : fs::path(c.output_dir) / ("dataset_" + std::string(dataset::to_string(c.mode)) + "_e" +
                                                          std::to_string(epoch) + ".bin");
    ensure_dir(path.parent_path());
    std::cout << "simulate: mode " << dataset::to_string(c.mode) << ", " << n << " examples, epoch " << epoch
              << ", config " << hex(c.digest()) << std::endl;
    const auto d = dataset::generate_epoch(spec, n, epoch, c.master_seed, c.datagen());
    dataset::save_dataset(d, path.string());
    std::cout << "wrote " << path.string() << " (" << d.scenarios.size() << " sub-frames)\n"
              << "dataset digest " << hex(d.digest()) << "\n";
    return kExitOk;
}

int cmd_train(const config::ExperimentConfig& c, std::optional<std::string> out, bool resume,
              std::optional<std::size_t> epochs) {
    auto cfg = c;
    if (epochs) cfg.epochs = *epochs;
    cfg.validate();
    const auto tc = cfg.train_config();
    const std::string stem = "model_" + std::string(dataset::to_string(cfg.mode));
    const fs::path model_path = out ? fs::path(*out) : fs::path(cfg.output_dir) / (stem + ".mteqm");
    ensure_dir(model_path.parent_path());
    fs::path csv = model_path;
    csv.replace_extension(".loss.csv");
    fs::path sidecar = model_path;
    sidecar.replace_extension(".json");

    nlohmann::json meta;
    meta["config_digest"] = hex(cfg.digest());
    meta["training_digest"] = hex(tc.digest());
    meta["config"] = nlohmann::json::parse(cfg.to_json());
    write_text(sidecar, meta.dump(2) + "\n");

    std::cout << "train: mode " << dataset::to_string(cfg.mode) << ", " << tc.model_config().n_layers << "x"
              << tc.model_config().hidden << " biLSTM, window " << tc.model_config().window << ", "
              << tc.model_config().input_features << " features, " << tc.epochs << " epochs x " << tc.epoch_size
              << " examples, batch " << tc.batch << " (" << tc.batches_per_epoch() << " batches/epoch)" << std::endl;
    nn::CheckpointPolicy policy{model_path.string(), cfg.checkpoint_every, resume, csv.string()};
    const auto m = nn::train(tc, policy, [&](const nn::EpochRecord& r) {
        std::printf("epoch %5llu  loss %.6g  %.1f s  data %s\n", static_cast<unsigned long long>(r.epoch + 1),
                    r.loss, r.wall_seconds, hex(r.scenario_digest).c_str());
        std::fflush(stdout);
    });
    std::cout << "wrote " << model_path.string() << ", " << csv.string() << "\n";
    return m.history.empty() || std::isfinite(m.history.back().loss) ? kExitOk : kExitFail;
}

int cmd_sweep(const config::ExperimentConfig& c, const std::vector<std::string>& model_paths,
              const std::string& axis_name, std::optional<std::size_t> symbols) {
    auto cfg = c;
    if (symbols) cfg.eval_symbols = *symbols;
    cfg.validate();

    std::vector<nn::EqualizerModel> models;
    models.reserve(model_paths.size());
    std::vector<eval::SweepMethod> methods{{eval::Method::CDC, nullptr}};
    nlohmann::json model_meta = nlohmann::json::array();
    auto ec = cfg.eval_config();
    for (const auto& p : model_paths) {
        models.push_back(nn::load_model(p));
        const auto& m = models.back();
        const auto mode = dataset::sampler_mode_from_string(m.provenance.mode);
        const int want = dataset::SamplerSpec::for_mode(mode).feature_count();
        if (m.model.config.input_features != want)
            throw ConfigError("model " + p + ": mode " + m.provenance.mode + " expects " + std::to_string(want) +
                              " input features, file has " + std::to_string(m.model.config.input_features));
        ec.window = std::max(ec.window, m.model.config.window);
        model_meta.push_back({{"path", p},
                              {"mode", m.provenance.mode},
                              {"config_digest", hex(m.provenance.config_digest)},
                              {"epochs_completed", m.provenance.epochs_completed}});
    }
    for (const auto& m : models)
        methods.push_back({eval::method_for_mode(dataset::sampler_mode_from_string(m.provenance.mode)), &m});

    std::vector<eval::SweepAxis> axes;
    if (axis_name == "all") {
        axes = {eval::SweepAxis::Spans, eval::SweepAxis::Power, eval::SweepAxis::Rate};
    } else {
        axes = {eval::sweep_axis_from_string(axis_name)};
    }
    const fs::path dir(cfg.output_dir);
    ensure_dir(dir);
    for (auto axis : axes) {
        const auto spec = cfg.sweep_spec(axis);
        std::cout << "sweep " << eval::to_string(axis) << ": " << spec.grid.size() << " points x " << methods.size()
                  << " methods, " << ec.n_symbols << " symbols/point" << std::endl;
        const auto rows = eval::sweep(spec, methods, ec);
        const auto csv = dir / ("sweep_" + std::string(eval::to_string(axis)) + ".csv");
        eval::write_sweep_csv(rows, csv.string());
        nlohmann::json meta;
        meta["axis"] = eval::to_string(axis);
        meta["config_digest"] = hex(cfg.digest());
        meta["models"] = model_meta;
        meta["config"] = nlohmann::json::parse(cfg.to_json());
        auto side = csv;
        side.replace_extension(".json");
        write_text(side, meta.dump(2) + "\n");
        for (const auto& r : rows) {
            std::printf("  %-14s p=%5.1f rs=%5.1f spans=%3d  BER %.3e  Q %7.3f dB%s\n", eval::to_string(r.method),
                        r.scenario.p_dbm, r.scenario.rs_gbd, r.scenario.n_spans, r.ber, r.q_db,
                        r.clamped ? " (clamped)" : "");
        }
        std::cout << "wrote " << csv.string() << "\n";
    }
    return kExitOk;
}

int cmd_selftest(bool sabotage) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = selftest::run_all({sabotage});
    std::cout << selftest::format_table(rows);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > 300.0) std::cout << "warning: selftest took " << secs << " s (budget 300 s)\n";
    bool ok = true;
    for (const auto& r : rows) ok &= r.passed;
    std::cout << (ok ? "selftest: all checks passed\n" : "selftest: FAILED\n");
    return ok ? kExitOk : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-task biLSTM equalizer lab for dual-polarization 16-QAM links"};
    app.require_subcommand(1);

    Common sim_opts, train_opts, sweep_opts;

    auto* sim = app.add_subcommand("simulate", "generate one epoch of training data");
    sim_opts.attach(sim);
    std::optional<std::string> sim_out;
    std::uint64_t sim_epoch = 0;
    std::optional<std::size_t> sim_examples;
    sim->add_option("-o,--out", sim_out, "dataset file");
    sim->add_option("--epoch", sim_epoch, "epoch index");
    sim->add_option("--examples", sim_examples, "number of examples (default: train.epoch_size)");

    auto* tr = app.add_subcommand("train", "train an equalizer");
    train_opts.attach(tr);
    std::optional<std::string> train_out;
    std::optional<std::size_t> train_epochs;
    bool no_resume = false;
    tr->add_option("-o,--out", train_out, "model file (checkpoints are written here too)");
    tr->add_option("--epochs", train_epochs, "number of epochs")->check(CLI::PositiveNumber);
    tr->add_flag("--no-resume", no_resume, "ignore an existing checkpoint and start over");

    auto* sw = app.add_subcommand("sweep", "Q-factor sweeps for CDC and trained models");
    sweep_opts.attach(sw);
    std::vector<std::string> sweep_models;
    std::string sweep_axis = "all";
    std::optional<std::size_t> sweep_symbols;
    sw->add_option("-m,--model", sweep_models, "model file (repeatable)");
    sw->add_option("--axis", sweep_axis, "spans, power, rate or all");
    sw->add_option("--symbols", sweep_symbols, "evaluated symbols per point");

    auto* st = app.add_subcommand("selftest", "fast invariant checks");
    bool sabotage = false;
    st->add_flag("--sabotage-cdc", sabotage, "test hook: flip the CDC sign (the suite must fail)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*sim) return cmd_simulate(sim_opts.resolve(), sim_out, sim_epoch, sim_examples);
        if (*tr) return cmd_train(train_opts.resolve(), train_out, !no_resume, train_epochs);
        if (*sw) return cmd_sweep(sweep_opts.resolve(), sweep_models, sweep_axis, sweep_symbols);
        if (*st) return cmd_selftest(sabotage);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFail;
    }
    return kExitUsage;
}
