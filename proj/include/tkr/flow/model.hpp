#pragma once

// Generic evaluation of the flow (forward, inverse, log-determinant,
// log-density, sampling). Every routine is templated on the scalar type S and
// a parameter accessor PA, so the same code runs as a plain map (S = double),
// carries input tangents (S = Dual<N>), or records a parameter tape
// (S = TVar<B>). All sublayers are exact identity maps at t = 0, which makes
// the density equal the prior there to the last bit.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "tkr/dual.hpp"
#include "tkr/flow/arch.hpp"
#include "tkr/gaussian.hpp"
#include "tkr/params.hpp"
#include "tkr/rng.hpp"
#include "tkr/tape.hpp"

namespace tkr {

template <class S>
struct FlowScratch {
    std::vector<S> x;        // state workspace (model dimension)
    std::vector<S> net_in;   // coupling net ping-pong buffers
    std::vector<S> net_out;
    std::vector<S> what, delta, dpre, acoef;  // nonlinear-layer shared arrays
};

namespace flowdetail {

// Scale and translation nets of a coupling layer. On return the activations
// buffer ws.net_in holds [s (trans_n), t_out (trans_n)].
template <class S, class PA>
void coupling_net(const CouplingLayout& L, const PA& pa, std::span<const S> x, const S& t,
                  FlowScratch<S>& ws) {
    const int c = L.cond_n;
    const int half = L.d_h / 2;
    const int in0 = c + 1;

    auto& h = ws.net_in;
    h.resize(static_cast<std::size_t>(L.d_h + in0));
    S inv_es = exp(-pa.get(L.sigma_off));
    for (int j = 0; j < half; ++j) {
        const std::size_t row = L.fourier_off + static_cast<std::size_t>(j) * in0;
        S acc = pa.get(row + c) * t;
        for (int i = 0; i < c; ++i) acc = acc + pa.get(row + i) * x[static_cast<std::size_t>(L.cond_lo + i)];
        S pre = inv_es * acc + pa.get(L.b0_off + static_cast<std::size_t>(j));
        h[static_cast<std::size_t>(j)] = sin(pre);
        h[static_cast<std::size_t>(half + j)] = cos(pre);
    }
    for (int i = 0; i < c; ++i) h[static_cast<std::size_t>(L.d_h + i)] = x[static_cast<std::size_t>(L.cond_lo + i)];
    h[static_cast<std::size_t>(L.d_h + c)] = t;

    for (int l = 0; l <= L.n_hidden; ++l) {
        const auto [rows, cols] = L.w_shape[static_cast<std::size_t>(l)];
        auto& o = ws.net_out;
        o.resize(static_cast<std::size_t>(rows));
        for (int r = 0; r < rows; ++r) {
            S acc = pa.get(L.b_off[static_cast<std::size_t>(l)] + static_cast<std::size_t>(r));
            const std::size_t row = L.w_off[static_cast<std::size_t>(l)] + static_cast<std::size_t>(r) * cols;
            for (int i = 0; i < cols; ++i) acc = acc + pa.get(row + i) * h[static_cast<std::size_t>(i)];
            if (l < L.n_hidden) {
                o[static_cast<std::size_t>(r)] = acc / (1.0 + exp(-acc));  // SiLU
            } else {
                o[static_cast<std::size_t>(r)] = acc;
            }
        }
        std::swap(h, o);
    }
}

template <class S, class PA>
void coupling_forward(const CouplingLayout& L, const PA& pa, std::span<S> x, const S& t,
                      const S& tg, S& logdet, FlowScratch<S>& ws) {
    coupling_net(L, pa, std::span<const S>(x.data(), x.size()), t, ws);
    const auto& net = ws.net_in;
    S atg = tg * L.alpha;
    for (int j = 0; j < L.trans_n; ++j) {
        S fac = 1.0 + atg * tanh(net[static_cast<std::size_t>(j)]);
        S shift = tg * exp(pa.get(L.beta_off + static_cast<std::size_t>(j))) *
                  tanh(net[static_cast<std::size_t>(L.trans_n + j)]);
        auto& xt = x[static_cast<std::size_t>(L.trans_lo + j)];
        xt = xt * fac + shift;
        logdet = logdet + log(fac);
    }
}

template <class S, class PA>
void coupling_inverse(const CouplingLayout& L, const PA& pa, std::span<S> x, const S& t,
                      const S& tg, FlowScratch<S>& ws) {
    coupling_net(L, pa, std::span<const S>(x.data(), x.size()), t, ws);
    const auto& net = ws.net_in;
    S atg = tg * L.alpha;
    for (int j = 0; j < L.trans_n; ++j) {
        S fac = 1.0 + atg * tanh(net[static_cast<std::size_t>(j)]);  // >= 1 - alpha > 0
        S shift = tg * exp(pa.get(L.beta_off + static_cast<std::size_t>(j))) *
                  tanh(net[static_cast<std::size_t>(L.trans_n + j)]);
        auto& xt = x[static_cast<std::size_t>(L.trans_lo + j)];
        xt = (xt - shift) / fac;
    }
}

template <class S, class PA>
void scale_bias_forward(const ScaleBiasLayout& L, const PA& pa, std::span<S> x, const S& t,
                        S& logdet) {
    for (int i = 0; i < L.n_active; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        S u = tanh(exp(pa.get(L.rho_off + ii)) * t);
        S ua = u * pa.get(L.a_off + ii);
        x[ii] = exp(ua) * x[ii] + u * pa.get(L.b_off + ii);
        logdet = logdet + ua;
    }
}

template <class S, class PA>
void scale_bias_inverse(const ScaleBiasLayout& L, const PA& pa, std::span<S> x, const S& t) {
    for (int i = 0; i < L.n_active; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        S u = tanh(exp(pa.get(L.rho_off + ii)) * t);
        S ua = u * pa.get(L.a_off + ii);
        x[ii] = (x[ii] - u * pa.get(L.b_off + ii)) * exp(-ua);
    }
}

// Shared node weights of the nonlinear layer, in deviation form
// (delta_i = w_i - 1, dpre_i = cumulative F offset minus the node position,
// acoef_i = quadratic coefficient per cell). All three vanish identically
// when tanh(phi t) psi = 0, so the layer is an exact identity at t = 0.
template <class S, class PA>
void nonlinear_weights(const NonlinearLayout& L, const PA& pa, const double* mesh, const S& t,
                       FlowScratch<S>& ws) {
    const int nn = L.n_nodes();
    ws.what.resize(static_cast<std::size_t>(nn));
    ws.delta.resize(static_cast<std::size_t>(nn));
    ws.dpre.resize(static_cast<std::size_t>(nn));
    ws.acoef.resize(static_cast<std::size_t>(nn - 1));
    for (int i = 0; i < nn; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        ws.what[ii] = exp(tanh(exp(pa.get(L.rho_off + ii)) * t) * pa.get(L.psi_off + ii));
    }
    S cw(0.0);
    for (int i = 0; i + 1 < nn; ++i) {
        const double hi = mesh[i + 1] - mesh[i];
        cw = cw + (ws.what[static_cast<std::size_t>(i)] + ws.what[static_cast<std::size_t>(i + 1)]) * (0.5 * hi);
    }
    for (int i = 0; i < nn; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        ws.delta[ii] = (ws.what[ii] - cw) / cw;
    }
    ws.dpre[0] = S(0.0);
    for (int i = 0; i + 1 < nn; ++i) {
        const double hi = mesh[i + 1] - mesh[i];
        const auto ii = static_cast<std::size_t>(i);
        ws.dpre[ii + 1] = ws.dpre[ii] + (ws.delta[ii] + ws.delta[ii + 1]) * (0.5 * hi);
        ws.acoef[ii] = (ws.delta[ii + 1] - ws.delta[ii]) / (2.0 * hi);
    }
}

template <class S>
void nonlinear_forward_coord(const NonlinearLayout& L, const double* mesh, FlowScratch<S>& ws,
                             S& xc, S& logdet) {
    const double a = L.a_bound;
    const double xv = value_of(xc);
    if (xv < -a || xv > a) return;  // beta_s = 1: identity tails
    S u = (xc + a) * (1.0 / (2.0 * a));
    int cell = static_cast<int>(std::floor(value_of(u) * L.n_cells()));
    cell = std::clamp(cell, 0, L.n_cells() - 1);
    const auto ci = static_cast<std::size_t>(cell);
    S xi = u - mesh[cell];
    S g = (ws.acoef[ci] * xi + ws.delta[ci]) * xi + ws.dpre[ci];
    xc = xc + (2.0 * a) * g;
    S fprime = 1.0 + (2.0 * (ws.acoef[ci] * xi) + ws.delta[ci]);
    logdet = logdet + log(fprime);
}

template <class S>
void nonlinear_inverse_coord(const NonlinearLayout& L, const double* mesh, FlowScratch<S>& ws,
                             S& yc) {
    const double a = L.a_bound;
    const double yv = value_of(yc);
    if (yv < -a || yv > a) return;
    S uy = (yc + a) * (1.0 / (2.0 * a));
    const double uv = value_of(uy);
    // F(node i) = mesh[i] + dpre[i], increasing in i; find the cell holding uy.
    int lo = 0, hi = L.n_cells();  // node index range [0, nn-1); cell = lo
    while (hi - lo > 1) {
        const int mid = lo + (hi - lo) / 2;
        const double fm = mesh[mid] + value_of(ws.dpre[static_cast<std::size_t>(mid)]);
        if (fm <= uv) lo = mid; else hi = mid;
    }
    const auto ci = static_cast<std::size_t>(lo);
    S dy = uy - (ws.dpre[ci] + mesh[lo]);
    S w = 1.0 + ws.delta[ci];
    S rad = w * w + 4.0 * (ws.acoef[ci] * dy);
    rad = select(value_of(rad) >= 0.0, rad, S(0.0));
    S xi = (2.0 * dy) / (w + sqrt(rad));
    yc = (2.0 * a) * (xi + mesh[lo]) - a;
}

}  // namespace flowdetail

struct Model {
    ArchConfig cfg;
    FlowLayout layout;
    ParameterStore store;
    GaussianDiag prior;
    std::uint64_t seed{0};

    static Model build(const ArchConfig& cfg, GaussianDiag prior, std::uint64_t seed) {
        if (static_cast<int>(prior.dim()) != cfg.d)
            throw std::invalid_argument("prior dimension does not match flow dimension");
        BuiltFlow bf = build_flow(cfg, seed);
        Model m;
        m.cfg = cfg;
        m.layout = std::move(bf.layout);
        m.store = std::move(bf.store);
        m.prior = std::move(prior);
        m.seed = seed;
        return m;
    }

    int dim() const { return cfg.d; }
    double horizon() const { return cfg.T_horizon; }
    std::size_t n_params() const { return store.size(); }

    void check_time(double t) const {
        if (t < 0.0 || t > cfg.T_horizon)
            throw std::domain_error("time outside [0, T]");
    }

    const double* mesh_nodes() const {
        return layout.has_nonlinear ? store.values().data() + layout.nl.mesh_off : nullptr;
    }

    // z = T(x, t); logdet accumulates log|det dT/dx|. x is transformed in place.
    template <class S, class PA>
    void forward_g(const PA& pa, std::span<S> x, const S& t, S& logdet, FlowScratch<S>& ws) const {
        check_time(value_of(t));
        S tg = t * (1.0 / cfg.T_horizon);
        for (std::size_t bi = 0; bi < layout.blocks.size(); ++bi) {
            const BlockLayout& blk = layout.blocks[bi];
            std::span<S> xa = x.subspan(0, static_cast<std::size_t>(blk.n_active));
            for (const PairLayout& pair : blk.pairs) {
                flowdetail::scale_bias_forward(pair.sb, pa, xa, t, logdet);
                flowdetail::coupling_forward(pair.cp, pa, xa, t, tg, logdet, ws);
            }
        }
        if (layout.has_nonlinear) {
            flowdetail::nonlinear_weights(layout.nl, pa, mesh_nodes(), t, ws);
            for (int i = 0; i < cfg.d; ++i)
                flowdetail::nonlinear_forward_coord(layout.nl, mesh_nodes(), ws, x[static_cast<std::size_t>(i)], logdet);
        }
    }

    // x = T^{-1}(z, t), in place.
    template <class S, class PA>
    void inverse_g(const PA& pa, std::span<S> x, const S& t, FlowScratch<S>& ws) const {
        check_time(value_of(t));
        S tg = t * (1.0 / cfg.T_horizon);
        if (layout.has_nonlinear) {
            flowdetail::nonlinear_weights(layout.nl, pa, mesh_nodes(), t, ws);
            for (int i = 0; i < cfg.d; ++i)
                flowdetail::nonlinear_inverse_coord(layout.nl, mesh_nodes(), ws, x[static_cast<std::size_t>(i)]);
        }
        for (std::size_t bi = layout.blocks.size(); bi-- > 0;) {
            const BlockLayout& blk = layout.blocks[bi];
            std::span<S> xa = x.subspan(0, static_cast<std::size_t>(blk.n_active));
            for (std::size_t pj = blk.pairs.size(); pj-- > 0;) {
                flowdetail::coupling_inverse(blk.pairs[pj].cp, pa, xa, t, tg, ws);
                flowdetail::scale_bias_inverse(blk.pairs[pj].sb, pa, xa, t);
            }
        }
    }

    template <class S, class PA>
    S log_density_g(const PA& pa, std::span<const S> x, const S& t, FlowScratch<S>& ws) const {
        ws.x.assign(x.begin(), x.end());
        S logdet(0.0);
        forward_g(pa, std::span<S>(ws.x), t, logdet, ws);
        return prior.template log_pdf<S>(std::span<const S>(ws.x.data(), ws.x.size())) + logdet;
    }

    // Density-view surface used by the residual machinery: parameters held
    // constant (log_density_s) or recorded as tape leaves (log_density_taped).
    const ParameterStore& parameters() const { return store; }

    template <class S>
    S log_density_s(std::span<const S> x, const S& t, FlowScratch<S>& ws) const {
        return log_density_g(ParamConst<S>{&store}, x, t, ws);
    }

    template <class B>
    TVar<B> log_density_taped(Tape<B>& tape, std::span<const TVar<B>> x, const TVar<B>& t,
                              FlowScratch<TVar<B>>& ws) const {
        return log_density_g(ParamLeaf<B>{&tape, &store}, x, t, ws);
    }

    // Exact draws at time t supplied through the common sampler surface.
    void sample_at(double t, std::size_t n, Rng& rng, std::span<double> out) const {
        auto pts = sample(t, n, rng);
        std::copy(pts.begin(), pts.end(), out.begin());
    }

    // ----- plain double convenience -----

    void forward(std::span<const double> x, double t, std::span<double> z, double* logdet = nullptr) const {
        FlowScratch<double> ws;
        std::copy(x.begin(), x.end(), z.begin());
        double ld = 0.0;
        forward_g(ParamConst<double>{&store}, z, t, ld, ws);
        if (logdet) *logdet = ld;
    }

    void inverse(std::span<const double> z, double t, std::span<double> x) const {
        FlowScratch<double> ws;
        std::copy(z.begin(), z.end(), x.begin());
        inverse_g(ParamConst<double>{&store}, x, t, ws);
    }

    double log_density(std::span<const double> x, double t) const {
        FlowScratch<double> ws;
        return log_density_g(ParamConst<double>{&store}, x, t, ws);
    }

    // Exact draws from the modeled density at time t (prior draw + inverse map).
    std::vector<double> sample(double t, std::size_t n, Rng& rng) const {
        const auto d = static_cast<std::size_t>(cfg.d);
        std::vector<double> pts(n * d);
        FlowScratch<double> ws;
        std::vector<double> z(d);
        for (std::size_t k = 0; k < n; ++k) {
            prior.sample(rng, z);
            std::span<double> row{pts.data() + k * d, d};
            std::copy(z.begin(), z.end(), row.begin());
            inverse_g(ParamConst<double>{&store}, row, t, ws);
        }
        return pts;
    }
};

}  // namespace tkr
