#pragma once

// Forward-mode scalar carrying a fixed number of tangent directions.
// Generic numeric code in this library is templated on the scalar type S,
// where S is one of: double, Dual<N>, TVar<double>, TVar<Dual<N>> (tape.hpp).
// The free functions at the bottom give double the same surface so the same
// templated code runs un-instrumented.

#include <array>
#include <cmath>
#include <cstddef>

namespace tkr {

template <int N>
struct Dual {
    double v{0.0};
    std::array<double, N> d{};

    Dual() = default;
    Dual(double value) : v(value) {}  // tangents zero: behaves as a plain real
    Dual(double value, const std::array<double, N>& tangents) : v(value), d(tangents) {}

    static Dual seeded(double value, int dir, double scale = 1.0) {
        Dual r(value);
        r.d[dir] = scale;
        return r;
    }

    Dual& operator+=(const Dual& o) {
        v += o.v;
        for (int i = 0; i < N; ++i) d[i] += o.d[i];
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        for (int i = 0; i < N; ++i) d[i] -= o.d[i];
        return *this;
    }
    Dual& operator*=(const Dual& o) { return *this = *this * o; }
    Dual& operator/=(const Dual& o) { return *this = *this / o; }

    friend Dual operator-(const Dual& a) {
        Dual r(-a.v);
        for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
        return r;
    }
    friend Dual operator+(const Dual& a, const Dual& b) {
        Dual r(a.v + b.v);
        for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
        return r;
    }
    friend Dual operator-(const Dual& a, const Dual& b) {
        Dual r(a.v - b.v);
        for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
        return r;
    }
    friend Dual operator*(const Dual& a, const Dual& b) {
        Dual r(a.v * b.v);
        for (int i = 0; i < N; ++i) r.d[i] = a.v * b.d[i] + b.v * a.d[i];
        return r;
    }
    friend Dual operator/(const Dual& a, const Dual& b) {
        Dual r(a.v / b.v);
        for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) / b.v;
        return r;
    }

    friend Dual operator+(const Dual& a, double b) { Dual r(a); r.v += b; return r; }
    friend Dual operator+(double a, const Dual& b) { Dual r(b); r.v += a; return r; }
    friend Dual operator-(const Dual& a, double b) { Dual r(a); r.v -= b; return r; }
    friend Dual operator-(double a, const Dual& b) { return Dual(a) - b; }
    friend Dual operator*(const Dual& a, double b) {
        Dual r(a.v * b);
        for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b;
        return r;
    }
    friend Dual operator*(double a, const Dual& b) { return b * a; }
    friend Dual operator/(const Dual& a, double b) { return a * (1.0 / b); }
    friend Dual operator/(double a, const Dual& b) { return Dual(a) / b; }

    friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
    friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
    friend bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
    friend bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
};

template <int N>
inline Dual<N> chain(double fv, double dfv, const Dual<N>& a) {
    Dual<N> r(fv);
    for (int i = 0; i < N; ++i) r.d[i] = dfv * a.d[i];
    return r;
}

template <int N> inline Dual<N> exp(const Dual<N>& a) {
    double e = std::exp(a.v);
    return chain(e, e, a);
}
template <int N> inline Dual<N> log(const Dual<N>& a) { return chain(std::log(a.v), 1.0 / a.v, a); }
template <int N> inline Dual<N> tanh(const Dual<N>& a) {
    double th = std::tanh(a.v);
    return chain(th, 1.0 - th * th, a);
}
template <int N> inline Dual<N> sin(const Dual<N>& a) { return chain(std::sin(a.v), std::cos(a.v), a); }
template <int N> inline Dual<N> cos(const Dual<N>& a) { return chain(std::cos(a.v), -std::sin(a.v), a); }
template <int N> inline Dual<N> sqrt(const Dual<N>& a) {
    double s = std::sqrt(a.v);
    return chain(s, 0.5 / s, a);
}
template <int N> inline Dual<N> pow(const Dual<N>& a, double p) {
    return chain(std::pow(a.v, p), p * std::pow(a.v, p - 1.0), a);
}

template <int N> inline double value_of(const Dual<N>& a) { return a.v; }
inline double value_of(double a) { return a; }

// Comparison-gated piecewise selection: the active branch alone is
// differentiated; branch boundaries are measure-zero.
template <class S> inline S select(bool take_first, const S& a, const S& b) { return take_first ? a : b; }

// double passthroughs so generic code compiles without std:: qualification
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double tanh(double x) { return std::tanh(x); }
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline double pow(double x, double p) { return std::pow(x, p); }

using Dual1 = Dual<1>;
using Dual4 = Dual<4>;

}  // namespace tkr
