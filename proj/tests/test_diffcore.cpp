#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <span>
#include <vector>

#include "support/oracles.hpp"
#include "tkr/derivatives.hpp"
#include "tkr/dual.hpp"
#include "tkr/params.hpp"
#include "tkr/tape.hpp"

using namespace tkr;

namespace {

std::vector<std::vector<double>> unit_dirs(std::size_t d_plus_1) {
    std::vector<std::vector<double>> dirs(d_plus_1, std::vector<double>(d_plus_1, 0.0));
    for (std::size_t i = 0; i < d_plus_1; ++i) dirs[i][i] = 1.0;
    return dirs;
}

}  // namespace

TEST_CASE("directional derivative follows the product rule") {
    auto program = [](auto x, auto t) { return x[0] * t; };
    std::vector<double> x{2.0};
    std::vector<std::vector<double>> e_t{{0.0, 1.0}};
    auto r = directional_derivatives(program, x, 3.0, e_t);
    CHECK(r.value == Catch::Approx(6.0));
    CHECK(r.derivs[0] == Catch::Approx(2.0));
}

TEST_CASE("directional derivative of a constant program is zero") {
    auto program = [](auto x, auto t) {
        (void)x;
        (void)t;
        return decltype(t)(5.0);
    };
    std::vector<double> x{0.3, -1.2};
    auto dirs = unit_dirs(3);
    auto r = directional_derivatives(program, x, 0.7, dirs);
    CHECK(r.value == 5.0);
    for (double d : r.derivs) CHECK(d == 0.0);
}

TEST_CASE("directional derivative matches a central finite difference") {
    auto program = [](auto x, auto t) {
        (void)t;
        return log(1.0 + 0.6 * tanh(x[0]));
    };
    std::vector<double> x{0.5};
    std::vector<std::vector<double>> e_x{{1.0, 0.0}};
    auto r = directional_derivatives(program, x, 0.0, e_x);
    const double fd = oracle::central_diff(
        [](double v) { return std::log(1.0 + 0.6 * std::tanh(v)); }, 0.5, 1e-5);
    CHECK(oracle::rel_err(r.derivs[0], fd) < 1e-8);
}

TEST_CASE("polynomial directional derivatives are exact") {
    // p(x, t) = 3x0^3 - 2x0 x1 t + t^2 - 4, degree <= 3
    auto program = [](auto x, auto t) {
        return 3.0 * x[0] * x[0] * x[0] - 2.0 * x[0] * x[1] * t + t * t - 4.0;
    };
    const double x0 = 1.3, x1 = -0.7, t = 0.9;
    std::vector<double> x{x0, x1};
    auto dirs = unit_dirs(3);
    auto r = directional_derivatives(program, x, t, dirs);
    const double want_dx0 = 9.0 * x0 * x0 - 2.0 * x1 * t;
    const double want_dx1 = -2.0 * x0 * t;
    const double want_dt = -2.0 * x0 * x1 + 2.0 * t;
    CHECK(oracle::rel_err(r.derivs[0], want_dx0) < 1e-12);
    CHECK(oracle::rel_err(r.derivs[1], want_dx1) < 1e-12);
    CHECK(oracle::rel_err(r.derivs[2], want_dt) < 1e-12);
}

TEST_CASE("non-finite intermediates raise EvalError with the operation index") {
    auto program = [](auto x, auto t) {
        (void)t;
        auto u = x[0] - 2.0;  // op 0
        return log(u) + 1.0;  // log of a negative number
    };
    std::vector<double> x{1.0};
    std::vector<std::vector<double>> e_x{{1.0, 0.0}};
    CHECK_THROWS_AS(directional_derivatives(program, x, 0.0, e_x), EvalError);
    try {
        directional_derivatives(program, x, 0.0, e_x);
    } catch (const EvalError& e) {
        CHECK(e.op_index >= 1);  // the log, not the subtraction
    }
}

TEST_CASE("parameter gradient of a quadratic") {
    ParameterStore store;
    store.add_segment("theta", 2, true);
    store.segment("theta")[0] = 1.0;
    store.segment("theta")[1] = 2.0;

    Tape<double> tape;
    tape.begin(store.values());
    auto th0 = tape.leaf(0);
    auto th1 = tape.leaf(1);
    auto loss = th0 * th0 + th1 * th1;
    tape.add_seed(loss, 1.0);
    tape.propagate();
    std::vector<double> grad(2, 0.0);
    tape.accumulate_leaf_gradient(grad);
    CHECK(grad[0] == Catch::Approx(2.0));
    CHECK(grad[1] == Catch::Approx(4.0));
}

TEST_CASE("parameters absent from the program get zero gradient") {
    ParameterStore store;
    store.add_segment("theta", 3, true);
    store.segment("theta")[0] = 0.4;
    store.segment("theta")[2] = -1.1;

    Tape<double> tape;
    tape.begin(store.values());
    auto loss = exp(tape.leaf(0)) * 2.0;
    tape.add_seed(loss, 1.0);
    tape.propagate();
    std::vector<double> grad(3, 0.0);
    tape.accumulate_leaf_gradient(grad);
    CHECK(grad[1] == 0.0);
    CHECK(grad[2] == 0.0);
}

TEST_CASE("gradient of a constant program is zero") {
    ParameterStore store;
    store.add_segment("theta", 1, true);
    Tape<double> tape;
    tape.begin(store.values());
    TVar<double> c(3.5);  // constant, never recorded
    auto loss = c * c + 1.0;
    tape.add_seed(loss, 1.0);
    tape.propagate();
    std::vector<double> grad(1, 0.0);
    tape.accumulate_leaf_gradient(grad);
    CHECK(grad[0] == 0.0);
    CHECK(tape.n_nodes() == 0);
}

TEST_CASE("backward of a sum of programs equals the sum of gradients") {
    ParameterStore store;
    store.add_segment("theta", 2, true);
    store.segment("theta")[0] = 0.8;
    store.segment("theta")[1] = -0.3;

    auto grad_of = [&](bool first, bool second) {
        Tape<double> tape;
        tape.begin(store.values());
        if (first) {
            auto l1 = sin(tape.leaf(0)) * tape.leaf(1);
            tape.add_seed(l1, 1.0);
            tape.propagate();
            tape.rewind();
        }
        if (second) {
            auto l2 = exp(tape.leaf(1)) + tape.leaf(0) * tape.leaf(0);
            tape.add_seed(l2, 1.0);
            tape.propagate();
        }
        std::vector<double> g(2, 0.0);
        tape.accumulate_leaf_gradient(g);
        return g;
    };

    auto g1 = grad_of(true, false);
    auto g2 = grad_of(false, true);
    auto gsum = grad_of(true, true);
    CHECK(gsum[0] == Catch::Approx(g1[0] + g2[0]));
    CHECK(gsum[1] == Catch::Approx(g1[1] + g2[1]));
}

TEST_CASE("nested gradient of squared input-derivatives is exact") {
    // loss = (d/dx [theta * x])^2 at x = 1  ->  dloss/dtheta = 2 theta
    ParameterStore store;
    store.add_segment("theta", 1, true);
    const double theta = 1.7;
    store.segment("theta")[0] = theta;

    Tape<Dual1> tape;
    tape.begin(store.values());
    {
        TVar<Dual1> x(Dual1{1.0, {1.0}});  // x carries tangent seed
        auto u = tape.leaf(0) * x;
        const double rdot = u.val.d[0];
        CHECK(rdot == Catch::Approx(theta));
        tape.add_seed(u, Dual1{0.0, {2.0 * rdot}});  // d(rdot^2)/d rdot
        tape.propagate();
        std::vector<double> grad(1, 0.0);
        tape.accumulate_leaf_gradient(grad);
        CHECK(grad[0] == Catch::Approx(2.0 * theta));
    }

    // loss = (d/dt [theta * t^2])^2 at t = 1  ->  dloss/dtheta = 8 theta
    tape.begin(store.values());
    {
        TVar<Dual1> t(Dual1{1.0, {1.0}});
        auto u = tape.leaf(0) * t * t;
        const double rdot = u.val.d[0];
        CHECK(rdot == Catch::Approx(2.0 * theta));
        tape.add_seed(u, Dual1{0.0, {2.0 * rdot}});
        tape.propagate();
        std::vector<double> grad(1, 0.0);
        tape.accumulate_leaf_gradient(grad);
        CHECK(grad[0] == Catch::Approx(8.0 * theta));
    }
}

namespace {

// Two-parameter toy density: log p(x, t) = -(x - a tanh(t))^2 * exp(b t).
// Generic over scalar and parameter accessor, like the real models.
template <class S, class PA>
S toy_logp(const PA& pa, const S& x, const S& t) {
    auto a = pa.get(0);
    auto b = pa.get(1);
    auto u = x - a * tanh(t);
    return -(u * u) * exp(b * t);
}

double toy_batch_loss(std::span<const double> theta, std::span<const double> xs,
                      std::span<const double> ts) {
    // independent scalar evaluation used by the finite-difference oracle
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double a = theta[0], b = theta[1];
        const double x = xs[i], t = ts[i];
        const double f = -x;
        const double expbt = std::exp(b * t);
        const double u = x - a * std::tanh(t);
        const double th2 = 1.0 - std::tanh(t) * std::tanh(t);
        const double dlogp_dt = 2.0 * u * a * th2 * expbt - u * u * b * expbt;
        const double dlogp_dx = -2.0 * u * expbt;
        const double rlog = dlogp_dt + dlogp_dx * f - 1.0;  // div f = -1
        acc += rlog * rlog;
    }
    return acc / static_cast<double>(xs.size());
}

}  // namespace

TEST_CASE("nested batch-mean gradient matches finite differences") {
    std::vector<double> theta{0.7, -0.4};
    std::vector<double> xs{0.3, -1.1, 0.8, 1.9, -0.2};
    std::vector<double> ts{0.2, 0.5, 0.9, 1.3, 0.1};
    const double n = static_cast<double>(xs.size());

    ParameterStore store;
    store.add_segment("theta", 2, true);
    store.segment("theta")[0] = theta[0];
    store.segment("theta")[1] = theta[1];

    Tape<Dual1> tape;
    tape.begin(store.values());
    double loss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        tape.rewind();
        ParamLeaf<Dual1> pa{&tape, &store};
        const double f = -xs[i];
        TVar<Dual1> x(Dual1{xs[i], {f}});
        TVar<Dual1> t(Dual1{ts[i], {1.0}});
        auto lp = toy_logp<TVar<Dual1>>(pa, x, t);
        const double rlog = lp.val.d[0] + (-1.0);  // + div f
        loss += rlog * rlog / n;
        tape.add_seed(lp, Dual1{0.0, {2.0 * rlog / n}});
        tape.propagate();
    }
    std::vector<double> grad(2, 0.0);
    tape.accumulate_leaf_gradient(grad);

    CHECK(loss == Catch::Approx(toy_batch_loss(theta, xs, ts)));
    auto fd = oracle::fd_gradient(
        [&](std::span<const double> th) { return toy_batch_loss(th, xs, ts); }, theta, 1e-6);
    CHECK(oracle::rel_err(grad[0], fd[0]) < 1e-4);
    CHECK(oracle::rel_err(grad[1], fd[1]) < 1e-4);
}

TEST_CASE("forward-over-reverse is consistent with differencing the reverse gradient in t") {
    // g(theta, t) = d/dt [ exp(theta * tanh(t)) * t ] ; compare d g / d theta
    std::vector<double> theta{0.6};
    ParameterStore store;
    store.add_segment("theta", 1, true);
    store.segment("theta")[0] = theta[0];
    const double t0 = 0.8;

    // reverse gradient of h(theta, t) = exp(theta tanh t) * t at fixed t
    auto reverse_grad = [&](double tv) {
        Tape<double> tape;
        tape.begin(store.values());
        auto h = exp(tape.leaf(0) * std::tanh(tv)) * tv;
        tape.add_seed(h, 1.0);
        tape.propagate();
        std::vector<double> g(1, 0.0);
        tape.accumulate_leaf_gradient(g);
        return g[0];
    };

    // forward-over-reverse: tape over Dual1 with t-tangent seeded
    Tape<Dual1> tape;
    tape.begin(store.values());
    TVar<Dual1> t(Dual1{t0, {1.0}});
    auto h = exp(tape.leaf(0) * tanh(t)) * t;
    tape.add_seed(h, Dual1{0.0, {1.0}});  // adjoint of the t-derivative channel
    tape.propagate();
    std::vector<double> g(1, 0.0);
    tape.accumulate_leaf_gradient(g);

    const double fd = (reverse_grad(t0 + 1e-6) - reverse_grad(t0 - 1e-6)) / 2e-6;
    CHECK(oracle::rel_err(g[0], fd) < 1e-6);
}
