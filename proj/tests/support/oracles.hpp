#pragma once

// Test-only oracles: finite differences and small dense linear algebra.
// These never enter any library code path; they exist to check the exact
// derivatives independently.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace oracle {

inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Central-difference gradient of f over a parameter vector.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f,
                                       std::vector<double> theta, double h = 1e-6) {
    std::vector<double> g(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        const double fp = f(theta);
        theta[i] = keep - h;
        const double fm = f(theta);
        theta[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double rel_err(double got, double want, double floor = 1e-12) {
    return std::abs(got - want) / std::max(std::abs(want), floor);
}

// log |det A| by Gaussian elimination with partial pivoting (small d).
inline double log_abs_det(std::vector<double> a, int n) {
    double logdet = 0.0;
    for (int c = 0; c < n; ++c) {
        int piv = c;
        for (int r = c + 1; r < n; ++r)
            if (std::abs(a[static_cast<std::size_t>(r) * n + c]) > std::abs(a[static_cast<std::size_t>(piv) * n + c])) piv = r;
        if (piv != c)
            for (int k = 0; k < n; ++k)
                std::swap(a[static_cast<std::size_t>(piv) * n + k], a[static_cast<std::size_t>(c) * n + k]);
        const double d = a[static_cast<std::size_t>(c) * n + c];
        if (d == 0.0) throw std::runtime_error("singular matrix in log_abs_det");
        logdet += std::log(std::abs(d));
        for (int r = c + 1; r < n; ++r) {
            const double m = a[static_cast<std::size_t>(r) * n + c] / d;
            for (int k = c; k < n; ++k)
                a[static_cast<std::size_t>(r) * n + k] -= m * a[static_cast<std::size_t>(c) * n + k];
        }
    }
    return logdet;
}

// Dense finite-difference Jacobian of a vector map, column-major by input.
inline std::vector<double> fd_jacobian(const std::function<std::vector<double>(std::span<const double>)>& f,
                                       std::vector<double> x, double h = 1e-6) {
    const std::size_t n = x.size();
    std::vector<double> jac(n * n);
    for (std::size_t c = 0; c < n; ++c) {
        const double keep = x[c];
        x[c] = keep + h;
        const std::vector<double> fp = f(x);
        x[c] = keep - h;
        const std::vector<double> fm = f(x);
        x[c] = keep;
        for (std::size_t r = 0; r < n; ++r) jac[r * n + c] = (fp[r] - fm[r]) / (2.0 * h);
    }
    return jac;
}

}  // namespace oracle
