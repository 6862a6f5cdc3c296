#pragma once

// Transport-equation residuals and their empirical losses.
//
// A density view V provides
//   int dim() const;
//   const ParameterStore& parameters() const;
//   template <class S> S log_density_s(span<const S> x, const S& t, FlowScratch<S>&) const;
//   template <class B> TVar<B> log_density_taped(Tape<B>&, span<const TVar<B>> x,
//                                                const TVar<B>& t, FlowScratch<TVar<B>>&) const;
//
// The residual of the logarithmic transport equation,
//   r_log = d/dt log p + (grad_x log p) . f + div f,
// is evaluated with a single forward tangent along the space-time direction
// (f(x,t), 1); the plain residual uses r = p * r_log, which avoids expanding
// the divergence of p f at small densities.

#include <cmath>
#include <cstddef>
#include <mutex>
#include <span>
#include <vector>

#include "tkr/derivatives.hpp"
#include "tkr/dual.hpp"
#include "tkr/flow/model.hpp"
#include "tkr/parallel.hpp"
#include "tkr/params.hpp"
#include "tkr/systems.hpp"
#include "tkr/tape.hpp"

namespace tkr {

enum class LossVariant { LogResidual, PlainResidual };

template <class View>
Dual1 logp_spacetime_dual(const View& v, const SystemSpec& sys, std::span<const double> x,
                          double t, FlowScratch<Dual1>& ws, std::vector<Dual1>& xbuf,
                          std::vector<double>& fbuf) {
    const std::size_t d = x.size();
    fbuf.resize(d);
    sys.f(x, t, fbuf);
    xbuf.resize(d);
    for (std::size_t i = 0; i < d; ++i) xbuf[i] = Dual1(x[i], {fbuf[i]});
    Dual1 td(t, {1.0});
    return v.template log_density_s<Dual1>(std::span<const Dual1>(xbuf), td, ws);
}

template <class View>
double residual_log(const View& v, const SystemSpec& sys, std::span<const double> x, double t) {
    FlowScratch<Dual1> ws;
    std::vector<Dual1> xbuf;
    std::vector<double> fbuf;
    Dual1 lp = logp_spacetime_dual(v, sys, x, t, ws, xbuf, fbuf);
    return lp.d[0] + sys.div_f(x, t);
}

template <class View>
double residual(const View& v, const SystemSpec& sys, std::span<const double> x, double t) {
    FlowScratch<Dual1> ws;
    std::vector<Dual1> xbuf;
    std::vector<double> fbuf;
    Dual1 lp = logp_spacetime_dual(v, sys, x, t, ws, xbuf, fbuf);
    return std::exp(lp.v) * (lp.d[0] + sys.div_f(x, t));
}

// Value, time derivative, and spatial gradient of log p, all exact.
struct LogpDerivatives {
    double value{0.0};
    double dt{0.0};
    std::vector<double> dx;
};

template <class View>
LogpDerivatives logp_derivatives(const View& v, std::span<const double> x, double t) {
    auto program = [&](auto xs, auto tt) {
        using S = std::remove_cvref_t<decltype(tt)>;
        FlowScratch<S> ws;
        return v.template log_density_s<S>(xs, tt, ws);
    };
    DirectionalResult r = gradient_and_time_derivative(program, x, t);
    LogpDerivatives out;
    out.value = r.value;
    out.dt = r.derivs[x.size()];
    out.dx.assign(r.derivs.begin(), r.derivs.begin() + static_cast<std::ptrdiff_t>(x.size()));
    return out;
}

struct LossGrad {
    double value{0.0};
    std::vector<double> grad;
};

inline constexpr std::size_t kLossChunk = 64;

namespace lossdetail {

// Deterministic mode buffers every chunk and reduces them in index order, so
// the result is independent of scheduling and thread count; otherwise chunks
// accumulate into shared buffers as they finish.
template <class PerPoint>
LossGrad chunked_loss(const ParameterStore& store, std::size_t n, int threads, double scale,
                      bool deterministic, PerPoint&& per_point) {
    const std::size_t nchunks = (n + kLossChunk - 1) / kLossChunk;
    LossGrad out;
    out.grad.assign(store.size(), 0.0);
    double total = 0.0;

    if (deterministic || threads <= 1) {
        std::vector<std::vector<double>> grads(nchunks);
        std::vector<double> partial(nchunks, 0.0);
        parallel_for(nchunks, threads, [&](std::size_t ci) {
            const std::size_t lo = ci * kLossChunk;
            const std::size_t hi = std::min(n, lo + kLossChunk);
            partial[ci] = per_point(ci, lo, hi, grads[ci]);
        });
        for (std::size_t ci = 0; ci < nchunks; ++ci) {  // fixed reduction order
            total += partial[ci];
            for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += grads[ci][i];
        }
    } else {
        std::mutex mtx;
        parallel_for(nchunks, threads, [&](std::size_t ci) {
            const std::size_t lo = ci * kLossChunk;
            const std::size_t hi = std::min(n, lo + kLossChunk);
            std::vector<double> g;
            const double p = per_point(ci, lo, hi, g);
            std::lock_guard<std::mutex> lock(mtx);
            total += p;
            for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += g[i];
        });
    }
    out.value = total * scale;
    for (double& g : out.grad) g *= scale;
    return out;
}

}  // namespace lossdetail

// Mean squared residual over a batch of collocation points, with the exact
// parameter gradient. xs is row-major (n x d).
template <class View>
LossGrad batch_residual_loss(const View& v, const SystemSpec& sys, std::span<const double> xs,
                             std::span<const double> ts, LossVariant variant, int threads,
                             bool deterministic = true) {
    const ParameterStore& store = v.parameters();
    const auto d = static_cast<std::size_t>(v.dim());
    const std::size_t n = ts.size();
    const double scale = 1.0 / static_cast<double>(n);

    return lossdetail::chunked_loss(store, n, threads, scale, deterministic,
        [&](std::size_t, std::size_t lo, std::size_t hi, std::vector<double>& grad) {
            Tape<Dual1> tape;
            tape.begin(store.values());
            FlowScratch<TVar<Dual1>> ws;
            std::vector<TVar<Dual1>> xd(d);
            std::vector<double> fbuf(d);
            double acc = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                tape.rewind();
                std::span<const double> x{xs.data() + i * d, d};
                const double t = ts[i];
                sys.f(x, t, fbuf);
                for (std::size_t j = 0; j < d; ++j) xd[j] = TVar<Dual1>(Dual1(x[j], {fbuf[j]}));
                TVar<Dual1> td(Dual1(t, {1.0}));
                auto lp = v.log_density_taped(tape, std::span<const TVar<Dual1>>(xd), td, ws);
                const double rlog = lp.val.d[0] + sys.div_f(x, t);
                if (variant == LossVariant::LogResidual) {
                    acc += rlog * rlog;
                    tape.add_seed(lp, Dual1{0.0, {2.0 * rlog}});
                } else {
                    const double p = std::exp(lp.val.v);
                    const double r = p * rlog;
                    acc += r * r;
                    tape.add_seed(lp, Dual1{2.0 * r * r, {2.0 * r * p}});
                }
                tape.propagate();
            }
            grad.assign(store.size(), 0.0);
            tape.accumulate_leaf_gradient(grad);
            return acc;
        });
}

// Interface consistency term of the temporal decomposition: the negative mean
// log-density of the current model at samples drawn from the previous one.
template <class View>
LossGrad cross_entropy_term(const View& v, std::span<const double> xs, double t_interface,
                            int threads, double weight = 1.0, bool deterministic = true) {
    const ParameterStore& store = v.parameters();
    const auto d = static_cast<std::size_t>(v.dim());
    const std::size_t n = xs.size() / d;
    const double scale = -weight / static_cast<double>(n);

    return lossdetail::chunked_loss(store, n, threads, scale, deterministic,
        [&](std::size_t, std::size_t lo, std::size_t hi, std::vector<double>& grad) {
            Tape<double> tape;
            tape.begin(store.values());
            FlowScratch<TVar<double>> ws;
            std::vector<TVar<double>> xd(d);
            double acc = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                tape.rewind();
                for (std::size_t j = 0; j < d; ++j) xd[j] = TVar<double>(xs[i * d + j]);
                TVar<double> td(t_interface);
                auto lp = v.log_density_taped(tape, std::span<const TVar<double>>(xd), td, ws);
                acc += lp.val;
                tape.add_seed(lp, 1.0);
                tape.propagate();
            }
            grad.assign(store.size(), 0.0);
            tape.accumulate_leaf_gradient(grad);
            return acc;
        });
}

// ----- flow-map (characteristics) residual, the PDE-free alternative -------
//
// l_ode = || d/dt T^{-1}(z, t) - f(T^{-1}(z, t), t) ||^2 with z = T(x, t)
// held fixed under the time derivative and the parameter gradient.

template <class ModelLike>
double ode_residual_sq(const ModelLike& m, const SystemSpec& sys, std::span<const double> x,
                       double t) {
    const auto d = static_cast<std::size_t>(m.dim());
    std::vector<double> z(d);
    m.forward(x, t, z);

    FlowScratch<Dual1> ws;
    std::vector<Dual1> xrec(d);
    for (std::size_t i = 0; i < d; ++i) xrec[i] = Dual1(z[i]);
    Dual1 td(t, {1.0});
    m.inverse_g(ParamConst<Dual1>{&m.parameters()}, std::span<Dual1>(xrec), td, ws);

    std::vector<double> xv(d), fv(d);
    for (std::size_t i = 0; i < d; ++i) xv[i] = xrec[i].v;
    sys.f(xv, t, fv);
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double r = xrec[i].d[0] - fv[i];
        acc += r * r;
    }
    return acc;
}

template <class ModelLike>
LossGrad ode_batch_loss(const ModelLike& m, const SystemSpec& sys, std::span<const double> xs,
                        std::span<const double> ts, int threads, bool deterministic = true) {
    const ParameterStore& store = m.parameters();
    const auto d = static_cast<std::size_t>(m.dim());
    const std::size_t n = ts.size();
    const double scale = 1.0 / static_cast<double>(n);

    return lossdetail::chunked_loss(store, n, threads, scale, deterministic,
        [&](std::size_t, std::size_t lo, std::size_t hi, std::vector<double>& grad) {
            Tape<Dual1> tape;
            tape.begin(store.values());
            FlowScratch<TVar<Dual1>> ws;
            std::vector<TVar<Dual1>> state(d), fx(d);
            double acc = 0.0;
            ParamLeaf<Dual1> pa{&tape, &store};
            for (std::size_t i = lo; i < hi; ++i) {
                tape.rewind();
                const double t = ts[i];
                // z = T(x, t): parameters participate, but the time tangent is
                // held at zero so z is fixed under the inner d/dt.
                for (std::size_t j = 0; j < d; ++j) state[j] = TVar<Dual1>(Dual1(xs[i * d + j]));
                TVar<Dual1> t_fwd{Dual1(t)};
                TVar<Dual1> logdet{Dual1(0.0)};
                m.forward_g(pa, std::span<TVar<Dual1>>(state), t_fwd, logdet, ws);
                // x(t) = T^{-1}(z, t) with the time tangent active
                TVar<Dual1> t_inv(Dual1(t, {1.0}));
                m.inverse_g(pa, std::span<TVar<Dual1>>(state), t_inv, ws);
                sys.f_taped(std::span<const TVar<Dual1>>(state), t_inv, fx);
                for (std::size_t j = 0; j < d; ++j) {
                    const double r = state[j].val.d[0] - fx[j].val.v;
                    acc += r * r;
                    tape.add_seed(state[j], Dual1{0.0, {2.0 * r}});
                    tape.add_seed(fx[j], Dual1{-2.0 * r, {0.0}});
                }
                tape.propagate();
            }
            grad.assign(store.size(), 0.0);
            tape.accumulate_leaf_gradient(grad);
            return acc;
        });
}

}  // namespace tkr
