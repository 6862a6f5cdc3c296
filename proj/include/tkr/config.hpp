#pragma once

// Experiment configuration: a JSON document with nested sections, strictly
// validated (unknown keys are rejected, every field type-checked).

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tkr/flow/arch.hpp"
#include "tkr/loss.hpp"
#include "tkr/systems.hpp"
#include "tkr/train.hpp"

namespace tkr {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridExportConfig {
    int resolution{0};  // 0 disables density grids
    std::vector<double> times;
    std::vector<std::pair<double, double>> box;  // 2 axes; empty = system box
};

struct ExperimentConfig {
    // system
    std::string system_name;
    double T{-1.0};  // <= 0 means the system default
    int lorenz_d{40};
    double lorenz_F{1.0};
    // architecture
    int blocks{1};
    int pairs_per_block{6};
    int hidden_width{32};
    int hidden_layers{2};
    double alpha{0.6};
    bool nonlinear_layer{true};
    int mesh_m{32};
    double bound_a{50.0};
    // training
    int epochs{20};
    int adaptive_iters{3};
    int batches{50};
    double lr{1e-3};
    std::uint64_t seed{1};
    std::string loss{"log"};
    double weight_decay{0.01};
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};
    double ce_weight{1.0};
    // time grid
    int grid_J{100};
    int grid_M{200};
    // temporal decomposition
    std::string temporal_mode{"none"};
    int subintervals{1};
    // evaluation
    int n_reference{2000};
    std::vector<double> eval_times;
    int model_samples{10000};
    GridExportConfig grid;
    // execution
    std::string out_dir{"run"};
    int threads{0};  // 0 = hardware concurrency
    bool deterministic{true};
};

namespace cfgdetail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& where,
                       const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("config section '" + where + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in config section '" + where + "'");
    }
}

template <class T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field '" + key + "' has the wrong type");
    }
}

inline void require_positive(long v, const std::string& name) {
    if (v <= 0) throw ConfigError("config field '" + name + "' must be positive");
}

}  // namespace cfgdetail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using cfgdetail::check_keys;
    using cfgdetail::get_or;
    ExperimentConfig c;

    check_keys(j, "root",
               {"system", "architecture", "training", "time_grid", "temporal", "evaluation",
                "output", "threads", "deterministic"});

    if (!j.contains("system")) throw ConfigError("config needs a 'system' section");
    const auto& sys = j.at("system");
    check_keys(sys, "system", {"name", "T", "d", "F"});
    if (!sys.contains("name")) throw ConfigError("config field 'system.name' is required");
    c.system_name = sys.at("name").get<std::string>();
    c.T = get_or(sys, "T", c.T);
    c.lorenz_d = get_or(sys, "d", c.lorenz_d);
    c.lorenz_F = get_or(sys, "F", c.lorenz_F);

    if (j.contains("architecture")) {
        const auto& a = j.at("architecture");
        check_keys(a, "architecture",
                   {"blocks", "pairs_per_block", "hidden_width", "hidden_layers", "alpha",
                    "nonlinear_layer", "mesh_m", "bound_a"});
        c.blocks = get_or(a, "blocks", c.blocks);
        c.pairs_per_block = get_or(a, "pairs_per_block", c.pairs_per_block);
        c.hidden_width = get_or(a, "hidden_width", c.hidden_width);
        c.hidden_layers = get_or(a, "hidden_layers", c.hidden_layers);
        c.alpha = get_or(a, "alpha", c.alpha);
        c.nonlinear_layer = get_or(a, "nonlinear_layer", c.nonlinear_layer);
        c.mesh_m = get_or(a, "mesh_m", c.mesh_m);
        c.bound_a = get_or(a, "bound_a", c.bound_a);
    }

    if (j.contains("training")) {
        const auto& t = j.at("training");
        check_keys(t, "training",
                   {"epochs", "adaptive_iters", "batches", "lr", "seed", "loss", "weight_decay",
                    "beta1", "beta2", "eps", "ce_weight"});
        c.epochs = get_or(t, "epochs", c.epochs);
        c.adaptive_iters = get_or(t, "adaptive_iters", c.adaptive_iters);
        c.batches = get_or(t, "batches", c.batches);
        c.lr = get_or(t, "lr", c.lr);
        c.seed = get_or(t, "seed", c.seed);
        c.loss = get_or(t, "loss", c.loss);
        c.weight_decay = get_or(t, "weight_decay", c.weight_decay);
        c.beta1 = get_or(t, "beta1", c.beta1);
        c.beta2 = get_or(t, "beta2", c.beta2);
        c.eps = get_or(t, "eps", c.eps);
        c.ce_weight = get_or(t, "ce_weight", c.ce_weight);
    }

    if (j.contains("time_grid")) {
        const auto& g = j.at("time_grid");
        check_keys(g, "time_grid", {"J", "points_per_time"});
        c.grid_J = get_or(g, "J", c.grid_J);
        c.grid_M = get_or(g, "points_per_time", c.grid_M);
    }

    if (j.contains("temporal")) {
        const auto& t = j.at("temporal");
        check_keys(t, "temporal", {"mode", "subintervals"});
        c.temporal_mode = get_or<std::string>(t, "mode", c.temporal_mode);
        c.subintervals = get_or(t, "subintervals", c.subintervals);
    }

    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        check_keys(e, "evaluation", {"n_reference", "times", "model_samples", "grid"});
        c.n_reference = get_or(e, "n_reference", c.n_reference);
        c.eval_times = get_or(e, "times", c.eval_times);
        c.model_samples = get_or(e, "model_samples", c.model_samples);
        if (e.contains("grid")) {
            const auto& g = e.at("grid");
            check_keys(g, "evaluation.grid", {"resolution", "times", "box"});
            c.grid.resolution = get_or(g, "resolution", c.grid.resolution);
            c.grid.times = get_or(g, "times", c.grid.times);
            if (g.contains("box")) {
                for (const auto& axis : g.at("box")) {
                    if (!axis.is_array() || axis.size() != 2)
                        throw ConfigError("evaluation.grid.box axes must be [lo, hi] pairs");
                    c.grid.box.emplace_back(axis[0].get<double>(), axis[1].get<double>());
                }
            }
        }
    }

    c.out_dir = get_or<std::string>(j, "output", c.out_dir);
    c.threads = get_or(j, "threads", c.threads);
    c.deterministic = get_or(j, "deterministic", c.deterministic);

    // validation beyond types
    cfgdetail::require_positive(c.blocks, "architecture.blocks");
    cfgdetail::require_positive(c.pairs_per_block, "architecture.pairs_per_block");
    cfgdetail::require_positive(c.hidden_width, "architecture.hidden_width");
    cfgdetail::require_positive(c.hidden_layers, "architecture.hidden_layers");
    cfgdetail::require_positive(c.epochs, "training.epochs");
    cfgdetail::require_positive(c.adaptive_iters, "training.adaptive_iters");
    cfgdetail::require_positive(c.batches, "training.batches");
    cfgdetail::require_positive(c.grid_J, "time_grid.J");
    cfgdetail::require_positive(c.grid_M, "time_grid.points_per_time");
    cfgdetail::require_positive(c.subintervals, "temporal.subintervals");
    cfgdetail::require_positive(c.n_reference, "evaluation.n_reference");
    if (c.lr <= 0.0) throw ConfigError("config field 'training.lr' must be positive");
    if (c.alpha <= 0.0 || c.alpha >= 1.0)
        throw ConfigError("config field 'architecture.alpha' must lie in (0, 1)");
    if (c.loss != "log" && c.loss != "plain")
        throw ConfigError("config field 'training.loss' must be 'log' or 'plain'");
    if (c.temporal_mode != "none" && c.temporal_mode != "choice1" && c.temporal_mode != "choice2")
        throw ConfigError("config field 'temporal.mode' must be none, choice1, or choice2");
    if (c.temporal_mode == "none" && c.subintervals != 1)
        throw ConfigError("temporal.subintervals > 1 requires a temporal mode");
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// Resolved snapshot: re-serializing and re-parsing reproduces this config.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["system"] = {{"name", c.system_name}, {"T", c.T}, {"d", c.lorenz_d}, {"F", c.lorenz_F}};
    j["architecture"] = {{"blocks", c.blocks},
                         {"pairs_per_block", c.pairs_per_block},
                         {"hidden_width", c.hidden_width},
                         {"hidden_layers", c.hidden_layers},
                         {"alpha", c.alpha},
                         {"nonlinear_layer", c.nonlinear_layer},
                         {"mesh_m", c.mesh_m},
                         {"bound_a", c.bound_a}};
    j["training"] = {{"epochs", c.epochs},
                     {"adaptive_iters", c.adaptive_iters},
                     {"batches", c.batches},
                     {"lr", c.lr},
                     {"seed", c.seed},
                     {"loss", c.loss},
                     {"weight_decay", c.weight_decay},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"eps", c.eps},
                     {"ce_weight", c.ce_weight}};
    j["time_grid"] = {{"J", c.grid_J}, {"points_per_time", c.grid_M}};
    j["temporal"] = {{"mode", c.temporal_mode}, {"subintervals", c.subintervals}};
    nlohmann::json ev = {{"n_reference", c.n_reference},
                         {"times", c.eval_times},
                         {"model_samples", c.model_samples}};
    if (c.grid.resolution > 0) {
        nlohmann::json g = {{"resolution", c.grid.resolution}, {"times", c.grid.times}};
        if (!c.grid.box.empty()) {
            nlohmann::json box = nlohmann::json::array();
            for (const auto& [lo, hi] : c.grid.box) box.push_back({lo, hi});
            g["box"] = box;
        }
        ev["grid"] = g;
    }
    j["evaluation"] = ev;
    j["output"] = c.out_dir;
    j["threads"] = c.threads;
    j["deterministic"] = c.deterministic;
    return j;
}

// ----- derived pieces ---------------------------------------------------------

inline SystemSpec system_from_config(const ExperimentConfig& c) {
    return system_by_name(c.system_name, c.T, c.lorenz_d, c.lorenz_F);
}

inline ArchConfig arch_from_config(const ExperimentConfig& c, const SystemSpec& sys) {
    ArchConfig a;
    a.d = sys.dim;
    a.T_horizon = sys.T_final;
    a.blocks = c.blocks;
    a.pairs_per_block = c.pairs_per_block;
    a.hidden_width = c.hidden_width;
    a.hidden_layers = c.hidden_layers;
    a.alpha = c.alpha;
    a.nonlinear_layer = c.nonlinear_layer;
    a.mesh_m = c.mesh_m;
    a.bound_a = c.bound_a;
    return a;
}

inline TrainConfig train_from_config(const ExperimentConfig& c) {
    TrainConfig t;
    t.epochs = c.epochs;
    t.adaptive_iters = c.adaptive_iters;
    t.n_batches = c.batches;
    t.lr = c.lr;
    t.adamw = AdamWConfig{c.beta1, c.beta2, c.eps, c.weight_decay};
    t.seed = c.seed;
    t.variant = (c.loss == "plain") ? LossVariant::PlainResidual : LossVariant::LogResidual;
    t.ce_weight = c.ce_weight;
    t.grid_J = c.grid_J;
    t.grid_M = c.grid_M;
    t.threads = (c.threads > 0) ? c.threads : default_threads();
    t.deterministic = c.deterministic;
    return t;
}

inline std::vector<double> eval_times_from_config(const ExperimentConfig& c, const SystemSpec& sys) {
    if (!c.eval_times.empty()) return c.eval_times;
    std::vector<double> ts;
    for (int i = 1; i <= 10; ++i)
        ts.push_back(sys.T_final * static_cast<double>(i) / 10.0);
    return ts;
}

}  // namespace tkr
