#pragma once

// Adaptive Dormand-Prince 5(4) integration with PI step-size control, plus
// log-density transport along characteristics: d(log p)/dt = -div f.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tkr/parallel.hpp"
#include "tkr/rng.hpp"
#include "tkr/systems.hpp"

namespace tkr {

struct IntegratorConfig {
    double rtol{1e-8};
    double atol{1e-10};
    long max_steps{2'000'000};
};

struct OdeError : std::runtime_error {
    long trajectory{-1};
    explicit OdeError(const std::string& what, long traj = -1)
        : std::runtime_error(traj >= 0 ? what + " (trajectory " + std::to_string(traj) + ")" : what),
          trajectory(traj) {}
};

namespace rk {

// Dormand-Prince coefficients.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace rk

template <class F>
class DormandPrince {
public:
    DormandPrince(F f, std::size_t dim) : f_(f), n_(dim) {
        for (auto* k : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_}) k->resize(n_);
        ytmp_.resize(n_);
    }

    // One fifth-order step from (t, y) with size h; fills y_out and the
    // embedded error estimate. k1 must hold f(t, y) on entry.
    void step(double t, std::span<const double> y, double h, std::span<double> y_out,
              std::span<double> err) {
        using namespace rk;
        auto stage = [&](double frac, std::initializer_list<std::pair<const std::vector<double>*, double>> terms,
                         std::vector<double>& k_out) {
            for (std::size_t i = 0; i < n_; ++i) {
                double acc = y[i];
                for (const auto& [k, a] : terms) acc += h * a * (*k)[i];
                ytmp_[i] = acc;
            }
            f_(std::span<const double>(ytmp_), t + frac * h, std::span<double>(k_out));
        };
        stage(c2, {{&k1_, a21}}, k2_);
        stage(c3, {{&k1_, a31}, {&k2_, a32}}, k3_);
        stage(c4, {{&k1_, a41}, {&k2_, a42}, {&k3_, a43}}, k4_);
        stage(c5, {{&k1_, a51}, {&k2_, a52}, {&k3_, a53}, {&k4_, a54}}, k5_);
        stage(1.0, {{&k1_, a61}, {&k2_, a62}, {&k3_, a63}, {&k4_, a64}, {&k5_, a65}}, k6_);
        for (std::size_t i = 0; i < n_; ++i)
            y_out[i] = y[i] + h * (b1 * k1_[i] + b3 * k3_[i] + b4 * k4_[i] + b5 * k5_[i] + b6 * k6_[i]);
        f_(std::span<const double>(y_out.data(), n_), t + h, std::span<double>(k7_));
        for (std::size_t i = 0; i < n_; ++i)
            err[i] = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] +
                          e7 * k7_[i]);
    }

    void prime(double t, std::span<const double> y) { f_(y, t, std::span<double>(k1_)); }
    void accept_fsal() { std::swap(k1_, k7_); }
    const std::vector<double>& k1() const { return k1_; }

private:
    F f_;
    std::size_t n_;
    std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, k7_, ytmp_;
};

// Integrates dy/dt = f(y, t) from t = 0 through the strictly increasing
// `times`, writing the solution rows into `states` (times.size() x dim).
template <class F>
void integrate(F&& f, std::span<const double> x0, std::span<const double> times,
               const IntegratorConfig& cfg, std::span<double> states, long trajectory_id = -1) {
    const std::size_t n = x0.size();
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
        if (times[i + 1] <= times[i]) throw OdeError("output times must be strictly increasing");
    if (!times.empty() && times.front() < 0.0) throw OdeError("output times must start at t >= 0");

    DormandPrince<F&> stepper(f, n);
    std::vector<double> y(x0.begin(), x0.end());
    std::vector<double> ynew(n), err(n);
    double t = 0.0;
    stepper.prime(t, y);

    // initial step heuristic from the scaled magnitudes of y and f
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sc = cfg.atol + cfg.rtol * std::abs(y[i]);
        d0 += (y[i] / sc) * (y[i] / sc);
        d1 += (stepper.k1()[i] / sc) * (stepper.k1()[i] / sc);
    }
    d0 = std::sqrt(d0 / static_cast<double>(n));
    d1 = std::sqrt(d1 / static_cast<double>(n));
    const double t_end = times.empty() ? 0.0 : times.back();
    double h = (d1 > 1e-10) ? 0.01 * d0 / d1 : 1e-6;
    h = std::clamp(h, 1e-8, std::max(t_end, 1e-8));

    long steps = 0;
    double err_prev = 1.0;
    std::size_t next_out = 0;
    while (next_out < times.size() && times[next_out] <= t) {
        std::copy(y.begin(), y.end(), states.begin() + static_cast<std::ptrdiff_t>(next_out * n));
        ++next_out;
    }

    while (next_out < times.size()) {
        const double t_target = times[next_out];
        bool hit = false;
        const double h_free = h;  // controller's preferred step, before clipping
        double h_try = h;
        if (t + h_try >= t_target) {
            h_try = t_target - t;
            hit = true;
        }
        if (h_try < 1e-14 * std::max(1.0, std::abs(t)))
            throw OdeError("step size underflow", trajectory_id);
        if (++steps > cfg.max_steps) throw OdeError("max step count exceeded", trajectory_id);

        stepper.step(t, y, h_try, ynew, err);
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double sc = cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            norm += (err[i] / sc) * (err[i] / sc);
        }
        norm = std::sqrt(norm / static_cast<double>(n));

        if (norm <= 1.0) {
            t += h_try;
            y.swap(ynew);
            stepper.accept_fsal();
            const double e = std::max(norm, 1e-10);
            double fac = 0.9 * std::pow(e, -0.17) * std::pow(err_prev, 0.04);
            err_prev = e;
            h = h_try * std::clamp(fac, 0.2, 5.0);
            if (hit) {
                std::copy(y.begin(), y.end(),
                          states.begin() + static_cast<std::ptrdiff_t>(next_out * n));
                ++next_out;
                h = std::max(h, h_free);  // a clipped step says nothing about accuracy
            }
        } else {
            h = h_try * std::max(0.2, 0.9 * std::pow(norm, -0.2));
        }
    }
}

// Characteristics of the density transport: state plus log-density, with
// d(log p)/dt = -div f along the trajectory and log p(0) = log p0(x0).
template <class FF, class DivF>
void integrate_with_logdensity_fn(FF&& f, DivF&& divf, double logp0, std::span<const double> x0,
                                  std::span<const double> times, const IntegratorConfig& cfg,
                                  std::span<double> states, std::span<double> logp,
                                  long trajectory_id = -1) {
    const std::size_t d = x0.size();
    std::vector<double> y0(d + 1);
    std::copy(x0.begin(), x0.end(), y0.begin());
    y0[d] = logp0;
    auto rhs = [&](std::span<const double> y, double t, std::span<double> out) {
        std::span<const double> xs(y.data(), d);
        f(xs, t, out.subspan(0, d));
        out[d] = -divf(xs, t);
    };
    std::vector<double> aug(times.size() * (d + 1));
    integrate(rhs, y0, times, cfg, aug, trajectory_id);
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        std::copy_n(aug.begin() + static_cast<std::ptrdiff_t>(ti * (d + 1)), d,
                    states.begin() + static_cast<std::ptrdiff_t>(ti * d));
        logp[ti] = aug[ti * (d + 1) + d];
    }
}

inline void integrate_with_logdensity(const SystemSpec& sys, std::span<const double> x0,
                                      std::span<const double> times, const IntegratorConfig& cfg,
                                      std::span<double> states, std::span<double> logp,
                                      long trajectory_id = -1) {
    integrate_with_logdensity_fn(sys.f, sys.div_f, sys.log_p0(x0), x0, times, cfg, states, logp,
                                 trajectory_id);
}

// Ensemble of characteristics; states laid out [traj][time][dim].
struct CharacteristicEnsemble {
    int dim{0};
    std::size_t n_traj{0};
    std::vector<double> times;
    std::vector<double> states;
    std::vector<double> logp;

    std::span<const double> state(std::size_t traj, std::size_t ti) const {
        const auto d = static_cast<std::size_t>(dim);
        return {states.data() + (traj * times.size() + ti) * d, d};
    }
    double log_density(std::size_t traj, std::size_t ti) const {
        return logp[traj * times.size() + ti];
    }
};

inline CharacteristicEnsemble integrate_ensemble(const SystemSpec& sys,
                                                 std::span<const double> initial_states,
                                                 std::size_t n_traj,
                                                 std::span<const double> times,
                                                 const IntegratorConfig& cfg, int threads) {
    CharacteristicEnsemble ens;
    ens.dim = sys.dim;
    ens.n_traj = n_traj;
    ens.times.assign(times.begin(), times.end());
    const auto d = static_cast<std::size_t>(sys.dim);
    ens.states.resize(n_traj * times.size() * d);
    ens.logp.resize(n_traj * times.size());
    parallel_for(n_traj, threads, [&](std::size_t k) {
        std::span<const double> x0{initial_states.data() + k * d, d};
        integrate_with_logdensity(sys, x0, times, cfg,
                                  {ens.states.data() + k * times.size() * d, times.size() * d},
                                  {ens.logp.data() + k * times.size(), times.size()},
                                  static_cast<long>(k));
    });
    return ens;
}

}  // namespace tkr
