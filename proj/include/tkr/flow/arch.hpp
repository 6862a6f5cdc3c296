#pragma once

// Architecture description and parameter layout of the time-dependent
// Knothe-Rosenblatt flow: K triangular blocks of L (scale-bias, coupling)
// pairs with partition freezing between blocks, plus an optional final
// elementwise monotone nonlinear layer.

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "tkr/params.hpp"
#include "tkr/rng.hpp"

namespace tkr {

struct ArchConfig {
    int d{1};
    double T_horizon{1.0};
    int blocks{1};            // K
    int pairs_per_block{4};   // L
    int hidden_width{32};     // d_h
    int hidden_layers{2};     // fully connected layers before the output layer
    double alpha{0.6};
    bool nonlinear_layer{true};
    int mesh_m{32};           // interior node count of the [0,1] mesh
    double bound_a{50.0};
};

// Near-equal partition with larger parts first (d=3,K=2 -> [2,1]).
inline std::vector<int> make_partition(int d, int K) {
    if (K < 1 || K > d) throw std::invalid_argument("partition count must satisfy 1 <= K <= d");
    std::vector<int> part(K, d / K);
    for (int i = 0; i < d % K; ++i) part[i] += 1;
    return part;
}

struct CouplingLayout {
    int n_active{0};
    int cond_lo{0}, cond_n{0};
    int trans_lo{0}, trans_n{0};
    int d_h{0};
    int n_hidden{0};
    double alpha{0.6};
    std::size_t sigma_off{0};
    std::size_t beta_off{0};
    std::size_t fourier_off{0};  // frozen, (d_h/2) x (cond_n+1), row-major
    std::size_t b0_off{0};       // frozen, d_h/2
    // Fully connected stack: w_off/b_off[l] for l = 0..n_hidden, where the
    // last entry is the output layer producing 2*trans_n values.
    std::vector<std::size_t> w_off, b_off;
    std::vector<std::pair<int, int>> w_shape;  // rows x cols
};

struct ScaleBiasLayout {
    int n_active{0};
    std::size_t a_off{0}, b_off{0}, rho_off{0};
};

struct PairLayout {
    ScaleBiasLayout sb;
    CouplingLayout cp;
};

struct BlockLayout {
    int n_active{0};
    std::vector<PairLayout> pairs;
};

struct NonlinearLayout {
    int m{0};  // interior nodes; nodes = m+2, cells = m+1
    double a_bound{0.0};
    std::size_t psi_off{0}, rho_off{0}, mesh_off{0};  // mesh frozen
    int n_nodes() const { return m + 2; }
    int n_cells() const { return m + 1; }
};

struct FlowLayout {
    std::vector<int> partition;
    std::vector<BlockLayout> blocks;
    bool has_nonlinear{false};
    NonlinearLayout nl;
};

namespace detail {

inline CouplingLayout add_coupling(ParameterStore& store, const std::string& prefix, int n_active,
                                   int d_h, int n_hidden, double alpha, bool swap) {
    if (d_h % 2 != 0) throw std::invalid_argument("hidden width must be even");
    CouplingLayout L;
    L.n_active = n_active;
    L.alpha = alpha;
    const int k = n_active / 2;
    if (n_active == 1 || k == 0) {
        L.cond_lo = 0;
        L.cond_n = 0;
        L.trans_lo = 0;
        L.trans_n = n_active;
    } else if (!swap) {
        L.cond_lo = 0;
        L.cond_n = k;
        L.trans_lo = k;
        L.trans_n = n_active - k;
    } else {
        L.cond_lo = k;
        L.cond_n = n_active - k;
        L.trans_lo = 0;
        L.trans_n = k;
    }
    L.d_h = d_h;
    L.n_hidden = n_hidden;
    const int in0 = L.cond_n + 1;

    L.sigma_off = store.add_segment(prefix + ".sigma", 1, true);
    L.beta_off = store.add_segment(prefix + ".beta", L.trans_n, true);
    L.fourier_off = store.add_segment(prefix + ".F", (d_h / 2) * in0, false);
    L.b0_off = store.add_segment(prefix + ".b0", d_h / 2, false);

    int in_dim = d_h + in0;  // [sin; cos; h0]
    for (int l = 0; l <= n_hidden; ++l) {
        const int out_dim = (l == n_hidden) ? 2 * L.trans_n : d_h;
        L.w_shape.emplace_back(out_dim, in_dim);
        L.w_off.push_back(store.add_segment(prefix + ".w" + std::to_string(l), out_dim * in_dim, true));
        L.b_off.push_back(store.add_segment(prefix + ".bias" + std::to_string(l), out_dim, true));
        in_dim = out_dim;
    }
    return L;
}

}  // namespace detail

struct BuiltFlow {
    FlowLayout layout;
    ParameterStore store;
};

// Creates the parameter store (with frozen buffers drawn from `seed`) and the
// layout. Initialization: coupling weights uniform +-1/sqrt(fan_in), biases 0,
// sigma 0, beta 0; scale-bias a=b=0 and rho=0 (phi=1); nonlinear psi=0,
// rho=0; Fourier matrix N(0,1), b0 U(0,2pi). The whole map is the identity at
// t=0 by construction.
inline BuiltFlow build_flow(const ArchConfig& cfg, std::uint64_t seed) {
    BuiltFlow out;
    out.layout.partition = make_partition(cfg.d, cfg.blocks);
    const int K = cfg.blocks;

    int active = cfg.d;
    for (int bi = 0; bi < K; ++bi) {
        BlockLayout blk;
        blk.n_active = active;
        for (int pj = 0; pj < cfg.pairs_per_block; ++pj) {
            const std::string prefix = "b" + std::to_string(bi) + ".p" + std::to_string(pj);
            PairLayout pair;
            pair.sb.n_active = active;
            pair.sb.a_off = out.store.add_segment(prefix + ".sb.a", active, true);
            pair.sb.b_off = out.store.add_segment(prefix + ".sb.b", active, true);
            pair.sb.rho_off = out.store.add_segment(prefix + ".sb.rho", active, true);
            pair.cp = detail::add_coupling(out.store, prefix + ".cp", active, cfg.hidden_width,
                                           cfg.hidden_layers, cfg.alpha, pj % 2 == 1);
            blk.pairs.push_back(std::move(pair));
        }
        out.layout.blocks.push_back(std::move(blk));
        if (bi < K - 1) active -= out.layout.partition[static_cast<std::size_t>(K - 1 - bi)];
    }

    if (cfg.nonlinear_layer) {
        out.layout.has_nonlinear = true;
        out.layout.nl.m = cfg.mesh_m;
        out.layout.nl.a_bound = cfg.bound_a;
        const int nn = out.layout.nl.n_nodes();
        out.layout.nl.psi_off = out.store.add_segment("ln.psi", nn, true);
        out.layout.nl.rho_off = out.store.add_segment("ln.rho", nn, true);
        out.layout.nl.mesh_off = out.store.add_segment("ln.mesh", nn, false);
    }

    // Fill values. Trainable segments start at zero except coupling weights.
    Rng rng(split_seed(seed, "flow-init"));
    for (const BlockLayout& blk : out.layout.blocks) {
        for (const PairLayout& pair : blk.pairs) {
            const CouplingLayout& cp = pair.cp;
            double* v = out.store.values().data();
            const int in0 = cp.cond_n + 1;
            for (int i = 0; i < (cp.d_h / 2) * in0; ++i) v[cp.fourier_off + i] = rng.normal();
            for (int i = 0; i < cp.d_h / 2; ++i) v[cp.b0_off + i] = rng.uniform(0.0, 6.283185307179586476925286766559);
            for (std::size_t l = 0; l < cp.w_off.size(); ++l) {
                const auto [rows, cols] = cp.w_shape[l];
                const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
                for (int i = 0; i < rows * cols; ++i) v[cp.w_off[l] + i] = rng.uniform(-bound, bound);
            }
        }
    }
    if (out.layout.has_nonlinear) {
        double* v = out.store.values().data();
        const int nn = out.layout.nl.n_nodes();
        const double h = 1.0 / static_cast<double>(out.layout.nl.n_cells());
        for (int i = 0; i < nn; ++i) v[out.layout.nl.mesh_off + i] = (i == nn - 1) ? 1.0 : i * h;
    }
    return out;
}

}  // namespace tkr
