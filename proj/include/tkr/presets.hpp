#pragma once

// Bundled experiment presets: each benchmark at reported scale plus a desk
// scale that runs on a laptop CPU in minutes, and a micro preset for smoke
// and determinism checks.

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tkr/config.hpp"

namespace tkr {

inline const std::map<std::string, const char*>& preset_table() {
    static const std::map<std::string, const char*> table{
        {"double_gyre_desk", R"json({
  "system": {"name": "double_gyre", "T": 5.0},
  "architecture": {"blocks": 1, "pairs_per_block": 6, "hidden_width": 24, "hidden_layers": 2},
  "training": {"epochs": 20, "adaptive_iters": 3, "batches": 50, "lr": 0.002, "seed": 2024},
  "time_grid": {"J": 100, "points_per_time": 200},
  "evaluation": {"n_reference": 2000, "times": [0.5,1.0,1.5,2.0,2.5,3.0,3.5,4.0,4.5,5.0],
                 "model_samples": 10000,
                 "grid": {"resolution": 101, "times": [1.0, 2.5, 5.0], "box": [[-0.5,2.5],[-0.5,1.5]]}},
  "output": "runs/double_gyre_desk"
})json"},
        {"double_gyre_micro", R"json({
  "system": {"name": "double_gyre", "T": 5.0},
  "architecture": {"blocks": 1, "pairs_per_block": 2, "hidden_width": 8, "hidden_layers": 1},
  "training": {"epochs": 2, "adaptive_iters": 2, "batches": 5, "lr": 0.002, "seed": 7},
  "time_grid": {"J": 10, "points_per_time": 20},
  "evaluation": {"n_reference": 100, "times": [2.5, 5.0], "model_samples": 400,
                 "grid": {"resolution": 21, "times": [5.0], "box": [[-0.5,2.5],[-0.5,1.5]]}},
  "output": "runs/double_gyre_micro"
})json"},
        {"double_gyre_paper", R"json({
  "system": {"name": "double_gyre", "T": 5.0},
  "architecture": {"blocks": 1, "pairs_per_block": 10, "hidden_width": 32, "hidden_layers": 2},
  "training": {"epochs": 100, "adaptive_iters": 6, "batches": 251, "lr": 0.001, "seed": 1},
  "time_grid": {"J": 250, "points_per_time": 1000},
  "evaluation": {"n_reference": 10000, "times": [0.5,1.0,1.5,2.0,2.5,3.0,3.5,4.0,4.5,5.0],
                 "model_samples": 10000,
                 "grid": {"resolution": 201, "times": [1.0, 2.5, 5.0], "box": [[-0.5,2.5],[-0.5,1.5]]}},
  "output": "runs/double_gyre_paper"
})json"},
        {"double_gyre_long_choice1", R"json({
  "system": {"name": "double_gyre", "T": 20.0},
  "architecture": {"blocks": 1, "pairs_per_block": 10, "hidden_width": 32, "hidden_layers": 2},
  "training": {"epochs": 100, "adaptive_iters": 6, "batches": 100, "lr": 0.001, "seed": 1},
  "time_grid": {"J": 100, "points_per_time": 1000},
  "temporal": {"mode": "choice1", "subintervals": 10},
  "evaluation": {"n_reference": 10000, "times": [1.0,2.0,4.0,6.0,8.0,10.0,12.0,14.0,16.0,18.0,20.0],
                 "model_samples": 10000,
                 "grid": {"resolution": 201, "times": [1.0, 10.0, 20.0], "box": [[-0.5,2.5],[-0.5,1.5]]}},
  "output": "runs/double_gyre_long_choice1"
})json"},
        {"double_gyre_long_choice2", R"json({
  "system": {"name": "double_gyre", "T": 20.0},
  "architecture": {"blocks": 1, "pairs_per_block": 10, "hidden_width": 32, "hidden_layers": 2},
  "training": {"epochs": 100, "adaptive_iters": 6, "batches": 100, "lr": 0.001, "seed": 1,
               "loss": "plain"},
  "time_grid": {"J": 100, "points_per_time": 1000},
  "temporal": {"mode": "choice2", "subintervals": 10},
  "evaluation": {"n_reference": 10000, "times": [1.0,2.0,4.0,6.0,8.0,10.0,12.0,14.0,16.0,18.0,20.0],
                 "model_samples": 10000,
                 "grid": {"resolution": 201, "times": [1.0, 10.0, 20.0], "box": [[-0.5,2.5],[-0.5,1.5]]}},
  "output": "runs/double_gyre_long_choice2"
})json"},
        {"kraichnan_orszag_desk", R"json({
  "system": {"name": "kraichnan_orszag", "T": 3.0},
  "architecture": {"blocks": 2, "pairs_per_block": 4, "hidden_width": 24, "hidden_layers": 2},
  "training": {"epochs": 15, "adaptive_iters": 3, "batches": 40, "lr": 0.002, "seed": 2024},
  "time_grid": {"J": 60, "points_per_time": 200},
  "evaluation": {"n_reference": 2000, "times": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0], "model_samples": 10000},
  "output": "runs/kraichnan_orszag_desk"
})json"},
        {"kraichnan_orszag_paper", R"json({
  "system": {"name": "kraichnan_orszag", "T": 3.0},
  "architecture": {"blocks": 2, "pairs_per_block": 8, "hidden_width": 32, "hidden_layers": 3},
  "training": {"epochs": 50, "adaptive_iters": 10, "batches": 1204, "lr": 0.001, "seed": 1},
  "time_grid": {"J": 300, "points_per_time": 4000},
  "evaluation": {"n_reference": 10000, "times": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0], "model_samples": 10000},
  "output": "runs/kraichnan_orszag_paper"
})json"},
        {"duffing_desk", R"json({
  "system": {"name": "duffing", "T": 2.0},
  "architecture": {"blocks": 3, "pairs_per_block": 2, "hidden_width": 16, "hidden_layers": 2},
  "training": {"epochs": 10, "adaptive_iters": 2, "batches": 30, "lr": 0.002, "seed": 2024},
  "time_grid": {"J": 40, "points_per_time": 150},
  "evaluation": {"n_reference": 2000, "times": [0.5, 1.0, 1.5, 2.0], "model_samples": 10000},
  "output": "runs/duffing_desk"
})json"},
        {"duffing_paper", R"json({
  "system": {"name": "duffing", "T": 2.0},
  "architecture": {"blocks": 3, "pairs_per_block": 4, "hidden_width": 32, "hidden_layers": 2},
  "training": {"epochs": 100, "adaptive_iters": 6, "batches": 804, "lr": 0.001, "seed": 1},
  "time_grid": {"J": 200, "points_per_time": 4000},
  "evaluation": {"n_reference": 10000, "times": [0.5, 1.0, 1.5, 2.0], "model_samples": 10000},
  "output": "runs/duffing_paper"
})json"},
        {"lorenz96_desk", R"json({
  "system": {"name": "lorenz96", "T": 1.0, "d": 10, "F": 1.0},
  "architecture": {"blocks": 3, "pairs_per_block": 2, "hidden_width": 32, "hidden_layers": 2},
  "training": {"epochs": 10, "adaptive_iters": 2, "batches": 25, "lr": 0.002, "seed": 2024},
  "time_grid": {"J": 50, "points_per_time": 100},
  "evaluation": {"n_reference": 2000, "times": [0.25, 0.5, 0.75, 1.0], "model_samples": 10000},
  "output": "runs/lorenz96_desk"
})json"},
        {"lorenz96_paper", R"json({
  "system": {"name": "lorenz96", "T": 1.0, "d": 40, "F": 1.0},
  "architecture": {"blocks": 5, "pairs_per_block": 4, "hidden_width": 128, "hidden_layers": 2},
  "training": {"epochs": 50, "adaptive_iters": 10, "batches": 202, "lr": 0.001, "seed": 1},
  "time_grid": {"J": 100, "points_per_time": 2000},
  "evaluation": {"n_reference": 10000, "times": [0.25, 0.5, 0.75, 1.0], "model_samples": 10000},
  "output": "runs/lorenz96_paper"
})json"},
    };
    return table;
}

inline std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : preset_table()) names.push_back(k);
    return names;
}

inline ExperimentConfig load_preset(const std::string& name) {
    const auto& table = preset_table();
    auto it = table.find(name);
    if (it == table.end()) throw ConfigError("unknown preset: " + name);
    return parse_config_text(it->second);
}

}  // namespace tkr
