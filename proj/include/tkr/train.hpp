#pragma once

// Adaptive physics-informed training: the outer sampling/optimization loop
// (warm-started across adaptivity iterations, optimizer and schedule fresh
// per iteration) and the two temporal-decomposition schemes for long
// horizons. The first keeps one model per sub-interval and glues them with an
// interface cross-entropy term; the second stacks per-interval flows, using
// the previous stack (at its right endpoint) as the prior of the next net.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tkr/collocation.hpp"
#include "tkr/flow/model.hpp"
#include "tkr/loss.hpp"
#include "tkr/optim.hpp"
#include "tkr/parallel.hpp"
#include "tkr/rng.hpp"
#include "tkr/systems.hpp"

namespace tkr {

struct TrainConfig {
    int epochs{20};
    int adaptive_iters{3};
    int n_batches{50};
    double lr{1e-3};
    double eta_min{0.0};
    AdamWConfig adamw;
    std::uint64_t seed{1};
    LossVariant variant{LossVariant::LogResidual};
    double ce_weight{1.0};
    int grid_J{100};
    int grid_M{200};
    int threads{1};
    bool deterministic{true};
};

struct StepInfo {
    int adapt_iter{0};
    int epoch{0};
    int batch{0};
    double loss{0.0};
    double lr{0.0};
};

struct TrainHooks {
    std::function<void(const StepInfo&)> on_step;
    // Called with Theta^{*,(k)} in place, before resampling.
    std::function<void(int k, const Collocation&)> on_iteration;
};

namespace traindetail {

// Inner optimizer run of one adaptivity iteration: fresh AdamW and cosine
// schedule, epoch loop, mini-batch shuffle between epochs.
template <class BatchLossFn>
void optimize_iteration(ParameterStore& store, const TrainConfig& cfg, int k,
                        MiniBatcher& batcher, Rng& shuffle_rng, BatchLossFn&& batch_loss,
                        const TrainHooks& hooks) {
    AdamW opt(store, cfg.adamw);
    CosineSchedule sched{cfg.lr, cfg.eta_min,
                         static_cast<long>(cfg.epochs) * static_cast<long>(cfg.n_batches)};
    long step = 0;
    for (int e = 1; e <= cfg.epochs; ++e) {
        for (int b = 0; b < cfg.n_batches; ++b) {
            const double lr = sched(step);
            LossGrad lg = batch_loss(b);
            if (!std::isfinite(lg.value))
                throw TrainError("non-finite loss at adaptivity iteration " + std::to_string(k) +
                                 ", epoch " + std::to_string(e) + ", batch " + std::to_string(b));
            store.check_gradient_finite(lg.grad);
            opt.step(store, lg.grad, lr);
            ++step;
            if (hooks.on_step) hooks.on_step({k, e, b, lg.value, lr});
        }
        if (e < cfg.epochs) batcher.shuffle(shuffle_rng);
    }
}

}  // namespace traindetail

// Algorithm: initial uniform collocation, then N_adaptive rounds of
// (optimize, resample from the current density).
// Stream tags are shared with the temporal decomposition (interval index 1),
// so a single-interval decomposition reproduces plain training bit for bit.
inline void train_adaptive_model(Model& model, const SystemSpec& sys, const TrainConfig& cfg,
                                 const TrainHooks& hooks = {}) {
    const std::vector<double> stamps = make_time_grid(sys.T_final, cfg.grid_J, cfg.grid_M);
    Collocation colloc =
        init_collocation(sys.init_box, stamps, split_seed(cfg.seed, "colloc-init", 1));

    std::vector<double> xs_b, ts_b;
    for (int k = 1; k <= cfg.adaptive_iters; ++k) {
        MiniBatcher batcher(colloc.n, cfg.n_batches);
        Rng shuffle_rng(split_seed(cfg.seed, "shuffle", 1000 + static_cast<std::uint64_t>(k)));
        auto batch_loss = [&](int b) {
            batcher.gather(colloc, b, xs_b, ts_b);
            return batch_residual_loss(model, sys, xs_b, ts_b, cfg.variant, cfg.threads,
                                       cfg.deterministic);
        };
        traindetail::optimize_iteration(model.store, cfg, k, batcher, shuffle_rng, batch_loss, hooks);
        if (hooks.on_iteration) hooks.on_iteration(k, colloc);
        if (k < cfg.adaptive_iters)
            colloc = resample_collocation(
                model, stamps, split_seed(cfg.seed, "resample", 1000 + static_cast<std::uint64_t>(k)),
                cfg.threads);
    }
}

inline Model train_adaptive(const SystemSpec& sys, const ArchConfig& arch, const TrainConfig& cfg,
                            const TrainHooks& hooks = {}) {
    Model model = Model::build(arch, sys.p0, split_seed(cfg.seed, "model-init", 1));
    train_adaptive_model(model, sys, cfg, hooks);
    return model;
}

// ---------------------------------------------------------------------------
// Temporal decomposition, first choice: same flow per sub-interval (global
// time inputs, prior p0), interface cross-entropy against the previous
// interval's model at T_{i-1}; the first interval trains on the residual only.

struct IntervalModels {
    std::vector<Model> models;
    std::vector<double> bounds;  // T_0 = 0 .. T_{N_sub} = T

    int dim() const { return models.empty() ? 0 : models.front().dim(); }

    int interval_of(double t) const {
        for (std::size_t i = 1; i + 1 < bounds.size(); ++i)
            if (t <= bounds[i]) return static_cast<int>(i - 1);
        return static_cast<int>(bounds.size()) - 2;
    }

    const Model& model_for(double t) const { return models[static_cast<std::size_t>(interval_of(t))]; }

    double log_density(std::span<const double> x, double t) const {
        return model_for(t).log_density(x, t);
    }
    template <class S>
    S log_density_s(std::span<const S> x, const S& t, FlowScratch<S>& ws) const {
        return model_for(value_of(t)).template log_density_s<S>(x, t, ws);
    }
    void sample_at(double t, std::size_t n, Rng& rng, std::span<double> out) const {
        model_for(t).sample_at(t, n, rng, out);
    }
};

inline std::vector<double> subinterval_bounds(double T, int n_sub) {
    std::vector<double> b(static_cast<std::size_t>(n_sub) + 1);
    for (int i = 0; i <= n_sub; ++i)
        b[static_cast<std::size_t>(i)] =
            (i == n_sub) ? T : T * static_cast<double>(i) / static_cast<double>(n_sub);
    return b;
}

inline IntervalModels train_temporal_choice1(const SystemSpec& sys, const ArchConfig& arch,
                                             const TrainConfig& cfg, int n_sub,
                                             const TrainHooks& hooks = {}) {
    if (n_sub < 1) throw std::invalid_argument("temporal decomposition needs n_sub >= 1");
    IntervalModels out;
    out.bounds = subinterval_bounds(sys.T_final, n_sub);

    ArchConfig local_arch = arch;
    local_arch.T_horizon = sys.T_final;  // global time inputs on every interval

    std::vector<double> xs_b, ts_b, if_b;
    for (int i = 1; i <= n_sub; ++i) {
        const double t_lo = out.bounds[static_cast<std::size_t>(i - 1)];
        const double t_hi = out.bounds[static_cast<std::size_t>(i)];
        Model model = Model::build(local_arch, sys.p0,
                                   split_seed(cfg.seed, "model-init", static_cast<std::uint64_t>(i)));

        const std::vector<double> stamps = make_time_grid_shifted(t_lo, t_hi, cfg.grid_J, cfg.grid_M);
        Collocation colloc = init_collocation(
            sys.init_box, stamps, split_seed(cfg.seed, "colloc-init", static_cast<std::uint64_t>(i)));
        const std::uint64_t itag = static_cast<std::uint64_t>(i) * 1000;

        // Interface samples from the previous interval's trained model.
        std::vector<double> interface_pts;
        if (i > 1) {
            Rng rng(split_seed(cfg.seed, "interface", static_cast<std::uint64_t>(i)));
            interface_pts = out.models.back().sample(t_lo, colloc.n, rng);
        }

        for (int k = 1; k <= cfg.adaptive_iters; ++k) {
            MiniBatcher batcher(colloc.n, cfg.n_batches);
            MiniBatcher if_batcher(colloc.n, cfg.n_batches);  // fixed partition of the interface set
            Rng shuffle_rng(split_seed(cfg.seed, "shuffle", itag + static_cast<std::uint64_t>(k)));
            auto batch_loss = [&](int b) {
                batcher.gather(colloc, b, xs_b, ts_b);
                LossGrad lg = batch_residual_loss(model, sys, xs_b, ts_b, cfg.variant, cfg.threads,
                                                  cfg.deterministic);
                if (!interface_pts.empty()) {
                    if_batcher.gather_points(interface_pts, model.dim(), b, if_b);
                    LossGrad ce = cross_entropy_term(model, if_b, t_lo, cfg.threads, cfg.ce_weight,
                                                     cfg.deterministic);
                    lg.value += ce.value;
                    for (std::size_t j = 0; j < lg.grad.size(); ++j) lg.grad[j] += ce.grad[j];
                }
                return lg;
            };
            traindetail::optimize_iteration(model.store, cfg, k, batcher, shuffle_rng, batch_loss,
                                            hooks);
            if (hooks.on_iteration) hooks.on_iteration((i - 1) * cfg.adaptive_iters + k, colloc);
            if (k < cfg.adaptive_iters)
                colloc = resample_collocation(
                    model, stamps, split_seed(cfg.seed, "resample", itag + static_cast<std::uint64_t>(k)),
                    cfg.threads);
        }
        out.models.push_back(std::move(model));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Temporal decomposition, second choice: per-interval nets on local time,
// each using the previous stack (frozen, at its right endpoint) as prior.

struct StackedModel {
    std::vector<Model> nets;     // net i covers (bounds[i], bounds[i+1]]
    std::vector<double> bounds;
    GaussianDiag base_prior;
    int active{-1};  // net whose parameters are trainable; -1 = all frozen

    int dim() const { return nets.empty() ? 0 : nets.front().dim(); }
    const ParameterStore& parameters() const { return nets[static_cast<std::size_t>(active)].store; }

    int interval_of(double t) const {
        for (std::size_t i = 1; i + 1 < bounds.size(); ++i)
            if (t <= bounds[i]) return static_cast<int>(i - 1);
        return static_cast<int>(bounds.size()) - 2;
    }

    double local_time(int i, double t) const {
        const double t0 = bounds[static_cast<std::size_t>(i)];
        const double t1 = bounds[static_cast<std::size_t>(i + 1)];
        return (t == t1) ? nets[static_cast<std::size_t>(i)].horizon() : t - t0;
    }

    double full_span(int i) const { return nets[static_cast<std::size_t>(i)].horizon(); }

    // log p at (x, t) for t in interval `iv`: push through the local net at
    // local time, then through every earlier net at its right endpoint.
    template <class S, class PA>
    S log_density_interval_g(const PA& pa, int iv, std::span<const S> x, const S& t_local,
                             FlowScratch<S>& ws) const {
        ws.x.assign(x.begin(), x.end());
        std::span<S> u(ws.x);
        S logdet(0.0);
        for (int j = iv; j >= 0; --j) {
            const Model& net = nets[static_cast<std::size_t>(j)];
            const S tj = (j == iv) ? t_local : S(full_span(j));
            if (j == active) {
                net.forward_g(pa, u, tj, logdet, ws);
            } else {
                net.forward_g(ParamConst<S>{&net.store}, u, tj, logdet, ws);
            }
        }
        return base_prior.template log_pdf<S>(std::span<const S>(u.data(), u.size())) + logdet;
    }

    double log_density(std::span<const double> x, double t) const {
        FlowScratch<double> ws;
        return log_density_s<double>(x, t, ws);
    }

    // Generic evaluation at a global time; the interval's right endpoint maps
    // to exactly the local horizon because both come from the same bounds.
    template <class S>
    S log_density_s(std::span<const S> x, const S& t, FlowScratch<S>& ws) const {
        const int iv = interval_of(value_of(t));
        S t_loc = t - bounds[static_cast<std::size_t>(iv)];
        return log_density_interval_g(ParamConst<S>{&nets[0].store}, iv, x, t_loc, ws);
    }

    // Draw z from the base prior and invert the chain: earliest net first at
    // its right endpoint, the local net last at local time.
    void sample_at(double t, std::size_t n, Rng& rng, std::span<double> out) const {
        const int iv = interval_of(t);
        const auto d = static_cast<std::size_t>(dim());
        FlowScratch<double> ws;
        std::vector<double> z(d);
        for (std::size_t k = 0; k < n; ++k) {
            base_prior.sample(rng, z);
            std::span<double> row{out.data() + k * d, d};
            std::copy(z.begin(), z.end(), row.begin());
            for (int j = 0; j <= iv; ++j) {
                const Model& net = nets[static_cast<std::size_t>(j)];
                const double tj = (j == iv) ? local_time(iv, t) : full_span(j);
                net.inverse_g(ParamConst<double>{&net.store}, row, tj, ws);
            }
        }
    }

    std::vector<double> sample(double t, std::size_t n, Rng& rng) const {
        std::vector<double> pts(n * static_cast<std::size_t>(dim()));
        sample_at(t, n, rng, pts);
        return pts;
    }
};

// Training view pinned to one interval of the stack (global times in,
// local times down to the net).
struct StackTrainView {
    StackedModel* stack;
    int interval;

    int dim() const { return stack->dim(); }
    const ParameterStore& parameters() const {
        return stack->nets[static_cast<std::size_t>(interval)].store;
    }

    template <class S>
    S log_density_s(std::span<const S> x, const S& t, FlowScratch<S>& ws) const {
        const double t0 = stack->bounds[static_cast<std::size_t>(interval)];
        return stack->log_density_interval_g(
            ParamConst<S>{&stack->nets[static_cast<std::size_t>(interval)].store}, interval, x,
            t - t0, ws);
    }

    template <class B>
    TVar<B> log_density_taped(Tape<B>& tape, std::span<const TVar<B>> x, const TVar<B>& t,
                              FlowScratch<TVar<B>>& ws) const {
        const double t0 = stack->bounds[static_cast<std::size_t>(interval)];
        return stack->log_density_interval_g(
            ParamLeaf<B>{&tape, &stack->nets[static_cast<std::size_t>(interval)].store}, interval,
            x, t - t0, ws);
    }
};

inline StackedModel train_temporal_choice2(const SystemSpec& sys, const ArchConfig& arch,
                                           const TrainConfig& cfg, int n_sub,
                                           const TrainHooks& hooks = {}) {
    if (n_sub < 1) throw std::invalid_argument("temporal decomposition needs n_sub >= 1");
    StackedModel stack;
    stack.bounds = subinterval_bounds(sys.T_final, n_sub);
    stack.base_prior = sys.p0;

    TrainConfig local_cfg = cfg;
    local_cfg.variant = LossVariant::PlainResidual;  // log form is off on purpose here

    std::vector<double> xs_b, ts_b;
    for (int i = 0; i < n_sub; ++i) {
        const double t_lo = stack.bounds[static_cast<std::size_t>(i)];
        const double t_hi = stack.bounds[static_cast<std::size_t>(i + 1)];
        ArchConfig local_arch = arch;
        local_arch.T_horizon = t_hi - t_lo;
        local_arch.nonlinear_layer = false;
        stack.nets.push_back(Model::build(
            local_arch, sys.p0,
            split_seed(cfg.seed, "model-init", static_cast<std::uint64_t>(i) + 1)));
        const std::uint64_t itag = (static_cast<std::uint64_t>(i) + 1) * 1000;
        stack.active = i;
        StackTrainView view{&stack, i};

        const std::vector<double> stamps =
            make_time_grid_shifted(t_lo, t_hi, cfg.grid_J, cfg.grid_M);
        Collocation colloc = init_collocation(
            sys.init_box, stamps,
            split_seed(cfg.seed, "colloc-init", static_cast<std::uint64_t>(i) + 1));

        for (int k = 1; k <= cfg.adaptive_iters; ++k) {
            MiniBatcher batcher(colloc.n, cfg.n_batches);
            Rng shuffle_rng(split_seed(cfg.seed, "shuffle", itag + static_cast<std::uint64_t>(k)));
            auto batch_loss = [&](int b) {
                batcher.gather(colloc, b, xs_b, ts_b);
                return batch_residual_loss(view, sys, xs_b, ts_b, local_cfg.variant, cfg.threads,
                                           cfg.deterministic);
            };
            traindetail::optimize_iteration(view.stack->nets[static_cast<std::size_t>(i)].store,
                                            local_cfg, k, batcher, shuffle_rng, batch_loss, hooks);
            if (hooks.on_iteration) hooks.on_iteration(i * cfg.adaptive_iters + k, colloc);
            if (k < cfg.adaptive_iters)
                colloc = resample_collocation(
                    stack, stamps, split_seed(cfg.seed, "resample", itag + static_cast<std::uint64_t>(k)),
                    cfg.threads);
        }
    }
    stack.active = -1;
    return stack;
}

}  // namespace tkr
