#pragma once

// Input-direction derivatives of scalar programs over (x, t).
//
// A "program" here is any callable evaluable on a generic scalar:
//   template <class S> S program(std::span<const S> x, const S& t)
// composed of the elementary operations in dual.hpp / tape.hpp. Derivatives
// are exact (forward mode); finite differences never appear outside tests.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tkr/dual.hpp"
#include "tkr/tape.hpp"

namespace tkr {

inline bool all_finite(double x) { return std::isfinite(x); }
template <int N> inline bool all_finite(const Dual<N>& x) {
    if (!std::isfinite(x.v)) return false;
    for (int i = 0; i < N; ++i)
        if (!std::isfinite(x.d[i])) return false;
    return true;
}

// Scalar wrapper that counts elementary operations and throws EvalError at
// the first non-finite intermediate. Used on the error path only; the counter
// is thread-local so constants can be created freely.
template <class S>
struct Checked {
    S val{};

    Checked() = default;
    Checked(double c) : val(c) {}
    Checked(const S& v) requires(!std::is_same_v<S, double>) : val(v) {}

    inline static thread_local std::size_t counter = 0;

    static Checked wrap(const S& r) {
        ++counter;
        if (!all_finite(r)) throw EvalError(counter - 1, "non-finite intermediate value");
        return Checked(r);
    }

    friend Checked operator+(const Checked& a, const Checked& b) { return wrap(a.val + b.val); }
    friend Checked operator-(const Checked& a, const Checked& b) { return wrap(a.val - b.val); }
    friend Checked operator*(const Checked& a, const Checked& b) { return wrap(a.val * b.val); }
    friend Checked operator/(const Checked& a, const Checked& b) { return wrap(a.val / b.val); }
    friend Checked operator-(const Checked& a) { return wrap(-a.val); }
    friend Checked operator+(const Checked& a, double c) { return wrap(a.val + c); }
    friend Checked operator+(double c, const Checked& a) { return wrap(c + a.val); }
    friend Checked operator-(const Checked& a, double c) { return wrap(a.val - c); }
    friend Checked operator-(double c, const Checked& a) { return wrap(c - a.val); }
    friend Checked operator*(const Checked& a, double c) { return wrap(a.val * c); }
    friend Checked operator*(double c, const Checked& a) { return wrap(c * a.val); }
    friend Checked operator/(const Checked& a, double c) { return wrap(a.val / c); }
    friend Checked operator/(double c, const Checked& a) { return wrap(c / a.val); }
    friend bool operator<(const Checked& a, const Checked& b) { return value_of(a.val) < value_of(b.val); }
    friend bool operator>(const Checked& a, const Checked& b) { return value_of(a.val) > value_of(b.val); }
    friend bool operator<=(const Checked& a, const Checked& b) { return value_of(a.val) <= value_of(b.val); }
    friend bool operator>=(const Checked& a, const Checked& b) { return value_of(a.val) >= value_of(b.val); }
    friend Checked exp(const Checked& a) { return wrap(exp(a.val)); }
    friend Checked log(const Checked& a) { return wrap(log(a.val)); }
    friend Checked tanh(const Checked& a) { return wrap(tanh(a.val)); }
    friend Checked sin(const Checked& a) { return wrap(sin(a.val)); }
    friend Checked cos(const Checked& a) { return wrap(cos(a.val)); }
    friend Checked sqrt(const Checked& a) { return wrap(sqrt(a.val)); }
    friend Checked pow(const Checked& a, double p) { return wrap(pow(a.val, p)); }
};

template <class S>
inline double value_of(const Checked<S>& a) { return value_of(a.val); }

struct DirectionalResult {
    double value;
    std::vector<double> derivs;  // one per direction
};

namespace detail {

template <int K, class Program>
void directional_chunk(Program&& program, std::span<const double> x, double t,
                       std::span<const std::vector<double>> dirs, std::size_t first,
                       std::size_t count, DirectionalResult& out) {
    const std::size_t d = x.size();
    std::vector<Dual<K>> xs(d);
    for (std::size_t i = 0; i < d; ++i) {
        xs[i] = Dual<K>(x[i]);
        for (std::size_t c = 0; c < count; ++c) xs[i].d[c] = dirs[first + c][i];
    }
    Dual<K> td(t);
    for (std::size_t c = 0; c < count; ++c) td.d[c] = dirs[first + c][d];

    Dual<K> r = program(std::span<const Dual<K>>(xs), td);
    if (!all_finite(r)) {
        // Locate the offending elementary operation with a counted re-run.
        Checked<Dual<K>>::counter = 0;
        std::vector<Checked<Dual<K>>> cxs(d);
        for (std::size_t i = 0; i < d; ++i) cxs[i] = Checked<Dual<K>>(xs[i]);
        Checked<Dual<K>> ct(td);
        program(std::span<const Checked<Dual<K>>>(cxs), ct);
        throw EvalError(Checked<Dual<K>>::counter, "non-finite result not reproduced by checked re-run");
    }
    out.value = r.v;
    for (std::size_t c = 0; c < count; ++c) out.derivs[first + c] = r.d[c];
}

}  // namespace detail

// Exact directional derivatives of `program` at (x, t) along `dirs`, where
// each direction is a (d+1)-vector (x components followed by the t
// component). Directions are processed in fixed-size chunks so bundle
// arithmetic stays allocation-free.
template <class Program>
DirectionalResult directional_derivatives(Program&& program, std::span<const double> x, double t,
                                          std::span<const std::vector<double>> dirs) {
    DirectionalResult out;
    out.derivs.resize(dirs.size());
    std::size_t i = 0;
    while (i < dirs.size()) {
        std::size_t left = dirs.size() - i;
        if (left == 1) {
            detail::directional_chunk<1>(program, x, t, dirs, i, 1, out);
            i += 1;
        } else if (left == 2) {
            detail::directional_chunk<2>(program, x, t, dirs, i, 2, out);
            i += 2;
        } else if (left == 3) {
            detail::directional_chunk<3>(program, x, t, dirs, i, 3, out);
            i += 3;
        } else {
            detail::directional_chunk<4>(program, x, t, dirs, i, 4, out);
            i += 4;
        }
    }
    return out;
}

// Value, time derivative, and full spatial gradient in one call.
template <class Program>
DirectionalResult gradient_and_time_derivative(Program&& program, std::span<const double> x, double t) {
    const std::size_t d = x.size();
    std::vector<std::vector<double>> dirs(d + 1, std::vector<double>(d + 1, 0.0));
    for (std::size_t i = 0; i <= d; ++i) dirs[i][i] = 1.0;  // e_x1..e_xd, e_t
    return directional_derivatives(program, x, t, dirs);
}

}  // namespace tkr
