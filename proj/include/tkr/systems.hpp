#pragma once

// Benchmark dynamical systems: vector fields with analytic divergences,
// Gaussian initial densities, and the parameter-augmentation construction
// x = [y, xi] with f = [g, 0].

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tkr/dual.hpp"
#include "tkr/gaussian.hpp"
#include "tkr/rng.hpp"
#include "tkr/tape.hpp"

namespace tkr {

inline constexpr double kPi = 3.1415926535897932384626433832795;

struct SystemSpec {
    std::string name;
    int dim{0};
    double T_final{1.0};
    GaussianDiag p0;
    std::vector<std::pair<double, double>> init_box;
    std::function<void(std::span<const double>, double, std::span<double>)> f;
    std::function<double(std::span<const double>, double)> div_f;
    std::function<void(std::span<const TDual1>, const TDual1&, std::span<TDual1>)> f_taped;

    double log_p0(std::span<const double> x) const { return p0.log_pdf_d(x); }
    void sample_p0(Rng& rng, std::span<double> out) const { p0.sample(rng, out); }

    std::vector<double> eval_f(std::span<const double> x, double t) const {
        std::vector<double> out(static_cast<std::size_t>(dim));
        f(x, t, out);
        return out;
    }
};

namespace sysdetail {

template <class Field>
void bind_field(SystemSpec& s, Field field) {
    s.f = [field](std::span<const double> x, double t, std::span<double> out) { field(x, t, out); };
    s.f_taped = [field](std::span<const TDual1> x, const TDual1& t, std::span<TDual1> out) {
        field(x, t, out);
    };
}

}  // namespace sysdetail

// --- double gyre -----------------------------------------------------------

inline double double_gyre_a(double t) { return 0.25 * std::sin(0.2 * kPi * t); }
inline double double_gyre_b(double t) { return 1.0 - 0.5 * std::sin(0.2 * kPi * t); }

struct DoubleGyreField {
    template <class S>
    void operator()(std::span<const S> x, const S& t, std::span<S> out) const {
        const double A = 0.1;
        S at = 0.25 * sin((0.2 * kPi) * t);
        S bt = 1.0 - 2.0 * at;
        S fx = (at * x[0] + bt) * x[0];
        S fpx = 2.0 * (at * x[0]) + bt;
        out[0] = -(kPi * A) * sin(kPi * fx) * cos(kPi * x[1]);
        out[1] = (kPi * A) * cos(kPi * fx) * sin(kPi * x[1]) * fpx;
    }
};

inline SystemSpec double_gyre(double T = 5.0) {
    SystemSpec s;
    s.name = "double_gyre";
    s.dim = 2;
    s.T_final = T;
    s.p0 = GaussianDiag::isotropic({1.0, 0.5}, 0.05);
    s.init_box = {{0.0, 2.0}, {0.0, 1.0}};
    sysdetail::bind_field(s, DoubleGyreField{});
    s.div_f = [](std::span<const double>, double) { return 0.0; };
    return s;
}

// --- Kraichnan-Orszag three-mode problem ------------------------------------

struct KraichnanOrszagField {
    template <class S>
    void operator()(std::span<const S> x, const S& t, std::span<S> out) const {
        (void)t;
        out[0] = x[0] * x[2];
        out[1] = -(x[1] * x[2]);
        out[2] = x[1] * x[1] - x[0] * x[0];
    }
};

inline SystemSpec kraichnan_orszag(double T = 3.0) {
    SystemSpec s;
    s.name = "kraichnan_orszag";
    s.dim = 3;
    s.T_final = T;
    s.p0 = GaussianDiag::isotropic({1.0, 0.0, 0.0}, 0.5);
    s.init_box = {{-5.0, 5.0}, {-5.0, 5.0}, {-5.0, 5.0}};
    sysdetail::bind_field(s, KraichnanOrszagField{});
    s.div_f = [](std::span<const double>, double) { return 0.0; };
    return s;
}

// --- parameter augmentation --------------------------------------------------

template <class G>
struct AugmentedField {
    G g;
    int n, m;
    template <class S>
    void operator()(std::span<const S> x, const S& t, std::span<S> out) const {
        g(x, t, out);  // writes the first n components
        for (int i = n; i < n + m; ++i) out[static_cast<std::size_t>(i)] = S(0.0);
    }
};

// State x = [y, xi]; the last m components are constant along trajectories and
// p0 factorizes as p_y * p_xi.
template <class G>
SystemSpec augment(std::string name, int n, int m, G g,
                   std::function<double(std::span<const double>, double)> div_g, GaussianDiag y0,
                   GaussianDiag xi, std::vector<std::pair<double, double>> box, double T) {
    if (static_cast<int>(y0.dim()) != n || static_cast<int>(xi.dim()) != m)
        throw std::invalid_argument("augment: prior dimensions do not match n, m");
    SystemSpec s;
    s.name = std::move(name);
    s.dim = n + m;
    s.T_final = T;
    s.p0 = y0.concat(xi);
    s.init_box = std::move(box);
    sysdetail::bind_field(s, AugmentedField<G>{std::move(g), n, m});
    s.div_f = std::move(div_g);
    return s;
}

// --- forced Duffing oscillator (augmented with 5 uncertain parameters) ------

struct DuffingField {
    // x = [y1, y2, delta, alpha, beta, gamma, omega]
    template <class S>
    void operator()(std::span<const S> x, const S& t, std::span<S> out) const {
        const S& y1 = x[0];
        const S& y2 = x[1];
        out[0] = y2;
        out[1] = -(x[2] * y2) - y1 * (x[3] + x[4] * (y1 * y1)) + x[5] * cos(x[6] * t);
    }
};

inline SystemSpec duffing(double T = 2.0) {
    SystemSpec s = augment(
        "duffing", 2, 5, DuffingField{},
        [](std::span<const double> x, double) { return -x[2]; },
        GaussianDiag::standard(2), GaussianDiag::isotropic({0.5, -1.0, 1.0, 0.5, 1.0}, 0.25),
        std::vector<std::pair<double, double>>(7, {-5.0, 5.0}), T);
    return s;
}

// --- Lorenz-96 ---------------------------------------------------------------

struct Lorenz96Field {
    int d;
    double F;
    template <class S>
    void operator()(std::span<const S> x, const S& t, std::span<S> out) const {
        (void)t;
        for (int i = 0; i < d; ++i) {
            const int ip1 = (i + 1) % d;
            const int im1 = (i - 1 + d) % d;
            const int im2 = (i - 2 + d) % d;
            out[static_cast<std::size_t>(i)] =
                (x[static_cast<std::size_t>(ip1)] - x[static_cast<std::size_t>(im2)]) *
                    x[static_cast<std::size_t>(im1)] -
                x[static_cast<std::size_t>(i)] + F;
        }
    }
};

inline SystemSpec lorenz96(int d = 40, double F = 1.0, double T = 1.0) {
    if (d < 4) throw std::invalid_argument("lorenz96 needs d >= 4");
    SystemSpec s;
    s.name = "lorenz96";
    s.dim = d;
    s.T_final = T;
    std::vector<double> mean(static_cast<std::size_t>(d));
    for (int i = 1; i <= d; ++i)
        mean[static_cast<std::size_t>(i - 1)] =
            0.5 - std::abs(static_cast<double>(i) / static_cast<double>(d) - 0.5);
    s.p0 = GaussianDiag::isotropic(std::move(mean), 0.2);
    s.init_box.assign(static_cast<std::size_t>(d), {-5.0, 5.0});
    sysdetail::bind_field(s, Lorenz96Field{d, F});
    s.div_f = [d](std::span<const double>, double) { return -static_cast<double>(d); };
    return s;
}

// Name-based lookup used by the CLI configuration.
inline SystemSpec system_by_name(const std::string& name, double T_override = -1.0, int d = 40,
                                 double F = 1.0) {
    SystemSpec s;
    if (name == "double_gyre") s = double_gyre();
    else if (name == "kraichnan_orszag") s = kraichnan_orszag();
    else if (name == "duffing") s = duffing();
    else if (name == "lorenz96") s = lorenz96(d, F);
    else throw std::invalid_argument("unknown system: " + name);
    if (T_override > 0.0) s.T_final = T_override;
    return s;
}

}  // namespace tkr
