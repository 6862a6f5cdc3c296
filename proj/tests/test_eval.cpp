#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "support/flows.hpp"
#include "support/oracles.hpp"
#include "tkr/eval.hpp"
#include "tkr/train.hpp"

using namespace tkr;

namespace {

struct DecayField {
    template <class S>
    void operator()(std::span<const S> x, const S&, std::span<S> out) const {
        out[0] = -x[0];
    }
};

SystemSpec decay_system(double T = 1.0) {
    SystemSpec s;
    s.name = "decay";
    s.dim = 1;
    s.T_final = T;
    s.p0 = GaussianDiag::standard(1);
    s.init_box = {{-3.0, 3.0}};
    sysdetail::bind_field(s, DecayField{});
    s.div_f = [](std::span<const double>, double) { return -1.0; };
    return s;
}

// Exact transported density of the decay system.
struct AnalyticDecayView {
    int dim() const { return 1; }
    double log_density(std::span<const double> x, double t) const {
        return t - 0.5 * kLogTwoPi - 0.5 * x[0] * x[0] * std::exp(2.0 * t);
    }
    template <class S>
    S log_density_s(std::span<const S> x, const S& t, FlowScratch<S>&) const {
        return t - 0.5 * kLogTwoPi - 0.5 * (x[0] * x[0]) * exp(2.0 * t);
    }
};

// Same family with a perturbed decay rate: smoothly wrong for t > 0.
struct MistunedDecayView {
    double rate{1.8};  // exact value is 2
    int dim() const { return 1; }
    double log_density(std::span<const double> x, double t) const {
        return 0.5 * rate * t - 0.5 * kLogTwoPi - 0.5 * x[0] * x[0] * std::exp(rate * t);
    }
    template <class S>
    S log_density_s(std::span<const S> x, const S& t, FlowScratch<S>&) const {
        return 0.5 * rate * t - 0.5 * kLogTwoPi - 0.5 * (x[0] * x[0]) * exp(rate * t);
    }
};

// Static Gaussian with selectable scale (for the KL closed form).
struct ScaledGaussianView {
    double sigma{1.0};
    int dim() const { return 1; }
    double log_density(std::span<const double> x, double) const {
        const double z = x[0] / sigma;
        return -0.5 * kLogTwoPi - std::log(sigma) - 0.5 * z * z;
    }
};

CharacteristicEnsemble gaussian_ensemble(std::size_t n, double t, std::uint64_t seed) {
    CharacteristicEnsemble ens;
    ens.dim = 1;
    ens.n_traj = n;
    ens.times = {t};
    ens.states.resize(n);
    ens.logp.resize(n);
    Rng rng(seed);
    for (std::size_t k = 0; k < n; ++k) {
        ens.states[k] = rng.normal();
        ens.logp[k] = -0.5 * kLogTwoPi - 0.5 * ens.states[k] * ens.states[k];
    }
    return ens;
}

}  // namespace

TEST_CASE("reference ensemble: initial densities, transport, determinism") {
    SystemSpec sys = decay_system();
    IntegratorConfig cfg;
    std::vector<double> times{0.0, 0.5, 1.0};
    auto ens = reference_ensemble(sys, 64, times, cfg, 11, 2);
    for (std::size_t k = 0; k < ens.n_traj; ++k) {
        CHECK(ens.log_density(k, 0) == sys.log_p0(ens.state(k, 0)));
        // d(log p)/dt = -div f = 1 along characteristics
        CHECK(std::abs(ens.log_density(k, 2) - (ens.log_density(k, 0) + 1.0)) < 1e-7);
    }
    auto again = reference_ensemble(sys, 64, times, cfg, 11, 1);
    CHECK(ens.states == again.states);
    CHECK(ens.logp == again.logp);
}

TEST_CASE("injected reference values give exactly zero error and KL") {
    std::vector<double> lp{-0.3, -1.7, -2.2, -0.9};
    CHECK(relative_error_core(lp, lp) == 0.0);
    CHECK(kl_core(lp, lp).mean == 0.0);
}

TEST_CASE("relative error of a doubled density is one") {
    std::vector<double> lpr{-0.5, -1.5, -2.5};
    std::vector<double> lpm = lpr;
    for (double& v : lpm) v += std::log(2.0);
    CHECK(relative_error_core(lpr, lpm) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("KL at t = 0 vanishes for a freshly initialized model") {
    SystemSpec sys = decay_system();
    Model m = Model::build(testflow::arch_1d(true), sys.p0, 5);
    testflow::perturb(m, 6);
    IntegratorConfig cfg;
    std::vector<double> times{0.0, 0.5};
    auto ens = reference_ensemble(sys, 128, times, cfg, 12, 2);
    auto kl0 = kl_estimate_at(m, ens, 0, 2);
    CHECK(std::abs(kl0.mean) <= 1e-12);
    auto rel0 = relative_error_at(m, ens, 0, 2);
    CHECK(rel0 <= 1e-12);
}

TEST_CASE("KL estimate matches the Gaussian closed form within 3 SE") {
    auto ens = gaussian_ensemble(20000, 0.5, 21);
    ScaledGaussianView wide{std::sqrt(2.0)};  // variance doubled
    auto kl = kl_estimate_at(wide, ens, 0, 2);
    const double closed = 0.5 * (0.5 + std::log(2.0) - 1.0);  // KL(N(0,1) || N(0,2))
    CHECK(std::abs(kl.mean - closed) < 3.0 * kl.se);

    SECTION("and is nonnegative in the statistical sense") {
        CHECK(kl.mean > -3.0 * kl.se);
    }
}

TEST_CASE("moment errors vanish statistically when the sampler is exact") {
    SystemSpec sys = decay_system();
    // f = -x contracts the state; use t = 0 so the reference equals the prior
    IntegratorConfig icfg;
    std::vector<double> times{0.0};
    auto ens = reference_ensemble(sys, 4000, times, icfg, 31, 2);
    Model m = Model::build(testflow::arch_1d(false), sys.p0, 7);
    testflow::zero_segments_matching(m, ".cp.w");
    testflow::zero_segments_matching(m, ".cp.bias");
    auto rows = moment_errors(m, ens, 4000, 32);
    REQUIRE(rows.size() == 1);
    const double se_mean = std::sqrt(2.0) / std::sqrt(4000.0);
    CHECK(rows[0].mean_err() < 4.0 * se_mean);
    const double se_var = std::sqrt(2.0) * std::sqrt(2.0 / 4000.0);
    CHECK(rows[0].var_err() < 4.0 * se_var);
}

TEST_CASE("sample variance uses the n/(n-1) correction") {
    std::vector<double> pts{0.0, 2.0};
    std::vector<double> mean, var;
    sample_moments(pts, 2, 1, mean, var);
    CHECK(mean[0] == 1.0);
    CHECK(var[0] == 2.0);  // n/(n-1) * (E[x^2] - E[x]^2) = 2 * 1
}

TEST_CASE("KL-rate diagnostic stays quiet on the exact density") {
    SystemSpec sys = decay_system();
    AnalyticDecayView exact;
    IntegratorConfig icfg;
    std::vector<double> times;
    for (int i = 0; i <= 10; ++i) times.push_back(0.05 + 0.09 * i);
    auto ens = reference_ensemble(sys, 512, times, icfg, 41, 2);
    auto rows = kl_bound_diagnostic(exact, sys, ens, 2);
    REQUIRE(rows.size() == times.size() - 2);
    for (const auto& r : rows) {
        CHECK_FALSE(r.flagged);
        CHECK(std::abs(r.dkl_dt) < 1e-6);
        CHECK(r.bound < 1e-6);
    }
}

TEST_CASE("KL-rate diagnostic respects the bound on a mistuned model") {
    SystemSpec sys = decay_system();
    MistunedDecayView wrong;
    IntegratorConfig icfg;
    std::vector<double> times;
    for (int i = 0; i <= 10; ++i) times.push_back(0.05 + 0.09 * i);
    auto ens = reference_ensemble(sys, 4000, times, icfg, 42, 2);
    auto rows = kl_bound_diagnostic(wrong, sys, ens, 2);
    for (const auto& r : rows) CHECK_FALSE(r.flagged);
}

TEST_CASE("widening the stencil moves the KL derivative within its error bars") {
    SystemSpec sys = decay_system();
    MistunedDecayView wrong;
    IntegratorConfig icfg;
    const double t0 = 0.5, dt = 0.05;
    std::vector<double> narrow{t0 - dt, t0, t0 + dt};
    std::vector<double> wide{t0 - 2.0 * dt, t0, t0 + 2.0 * dt};
    auto ens_n = reference_ensemble(sys, 4000, narrow, icfg, 43, 2);
    auto ens_w = reference_ensemble(sys, 4000, wide, icfg, 44, 2);  // independent draw
    auto rows_n = kl_bound_diagnostic(wrong, sys, ens_n, 2);
    auto rows_w = kl_bound_diagnostic(wrong, sys, ens_w, 2);
    REQUIRE(rows_n.size() == 1);
    REQUIRE(rows_w.size() == 1);
    CHECK(std::abs(rows_n[0].dkl_dt - rows_w[0].dkl_dt) <
          3.0 * (rows_n[0].se_dkl + rows_w[0].se_dkl) + 1e-3);
}

TEST_CASE("density grids reproduce the initial density and conserve mass") {
    SystemSpec sys = double_gyre();
    ArchConfig a = testflow::arch_small(2, 1, 4, 16, true);
    a.T_horizon = sys.T_final;
    Model m = Model::build(a, sys.p0, 51);
    testflow::perturb(m, 52, 0.15);

    SECTION("the t = 0 grid equals p0 exactly") {
        auto g = density_grid_export(m, 0.0, {0.0, 2.0}, {0.0, 1.0}, 21, {}, 2);
        for (int i = 0; i < 21; ++i)
            for (int j = 0; j < 21; ++j) {
                std::vector<double> x{g.coord1(i), g.coord2(j)};
                CHECK(g.p[static_cast<std::size_t>(i) * 21 + j] ==
                      Catch::Approx(std::exp(sys.log_p0(x))).epsilon(1e-13));
            }
    }

    SECTION("trapezoid mass approximates the box mass and is grid-stable") {
        auto g1 = density_grid_export(m, 1.0, {-1.0, 3.0}, {-1.0, 2.0}, 201, {}, 2);
        auto g2 = density_grid_export(m, 1.0, {-1.0, 3.0}, {-1.0, 2.0}, 401, {}, 2);
        CHECK(std::abs(g1.trapezoid_mass() - 1.0) < 1e-3);
        CHECK(std::abs(g1.trapezoid_mass() - g2.trapezoid_mass()) < 1e-3);
    }
}

TEST_CASE("grids for d > 2 slice through the supplied coordinates") {
    SystemSpec sys = kraichnan_orszag();
    Model m = Model::build(testflow::arch_small(3, 2, 2, 16, true), sys.p0, 53);
    std::vector<double> slice{sys.p0.mean[2]};
    auto g = density_grid_export(m, 0.0, {-2.0, 2.0}, {-2.0, 2.0}, 5, slice, 1);
    std::vector<double> x{g.coord1(1), g.coord2(3), slice[0]};
    CHECK(g.p[1 * 5 + 3] == Catch::Approx(std::exp(sys.log_p0(x))).epsilon(1e-13));
}
