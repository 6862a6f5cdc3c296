#pragma once

// Shared helpers for flow tests: small architectures and parameter surgery.

#include <string>
#include <vector>

#include "tkr/flow/model.hpp"
#include "tkr/rng.hpp"

namespace testflow {

inline tkr::ArchConfig arch_1d(bool nonlinear = false) {
    tkr::ArchConfig a;
    a.d = 1;
    a.T_horizon = 1.0;
    a.blocks = 1;
    a.pairs_per_block = 1;
    a.hidden_width = 8;
    a.hidden_layers = 1;
    a.nonlinear_layer = nonlinear;
    a.mesh_m = 4;
    a.bound_a = 50.0;
    return a;
}

inline tkr::ArchConfig arch_small(int d, int K, int L, int dh = 16, bool nonlinear = true) {
    tkr::ArchConfig a;
    a.d = d;
    a.T_horizon = 1.0;
    a.blocks = K;
    a.pairs_per_block = L;
    a.hidden_width = dh;
    a.hidden_layers = 2;
    a.nonlinear_layer = nonlinear;
    a.mesh_m = 8;
    a.bound_a = 50.0;
    return a;
}

// Gives the non-network parameters nonzero values so every layer acts.
inline void perturb(tkr::Model& m, std::uint64_t seed, double scale = 0.3) {
    tkr::Rng rng(seed);
    for (const tkr::Segment& s : m.store.segments()) {
        if (!s.trainable) continue;
        const bool is_weight = s.name.find(".w") != std::string::npos ||
                               s.name.find(".bias") != std::string::npos;
        if (is_weight) continue;  // keep initialized nets
        for (std::size_t i = 0; i < s.size; ++i)
            m.store.values()[s.offset + i] = rng.uniform(-scale, scale);
    }
}

inline void zero_segments_matching(tkr::Model& m, const std::string& needle) {
    for (const tkr::Segment& s : m.store.segments()) {
        if (s.name.find(needle) == std::string::npos) continue;
        for (std::size_t i = 0; i < s.size; ++i) m.store.values()[s.offset + i] = 0.0;
    }
}

}  // namespace testflow
