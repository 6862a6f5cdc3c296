#pragma once

// Diagonal Gaussian density: closed-form log-pdf (evaluable on any scalar
// type) and an exact sampler.

#include <cmath>
#include <span>
#include <vector>

#include "tkr/dual.hpp"
#include "tkr/rng.hpp"

namespace tkr {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

struct GaussianDiag {
    std::vector<double> mean;
    std::vector<double> stddev;

    std::size_t dim() const { return mean.size(); }

    static GaussianDiag isotropic(std::vector<double> mu, double sigma) {
        GaussianDiag g;
        g.stddev.assign(mu.size(), sigma);
        g.mean = std::move(mu);
        return g;
    }

    static GaussianDiag standard(std::size_t d) {
        return GaussianDiag{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
    }

    GaussianDiag concat(const GaussianDiag& other) const {
        GaussianDiag g = *this;
        g.mean.insert(g.mean.end(), other.mean.begin(), other.mean.end());
        g.stddev.insert(g.stddev.end(), other.stddev.begin(), other.stddev.end());
        return g;
    }

    template <class S>
    S log_pdf(std::span<const S> x) const {
        S acc(0.0);
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double inv_sigma = 1.0 / stddev[i];
            const double c = -0.5 * kLogTwoPi - std::log(stddev[i]);
            S z = (x[i] - mean[i]) * inv_sigma;
            acc = acc + (c - 0.5 * z * z);
        }
        return acc;
    }

    double log_pdf_d(std::span<const double> x) const { return log_pdf<double>(x); }

    void sample(Rng& rng, std::span<double> out) const {
        for (std::size_t i = 0; i < mean.size(); ++i) out[i] = mean[i] + stddev[i] * rng.normal();
    }

    std::vector<double> sample_n(Rng& rng, std::size_t n) const {
        std::vector<double> pts(n * dim());
        for (std::size_t k = 0; k < n; ++k) sample(rng, {pts.data() + k * dim(), dim()});
        return pts;
    }
};

}  // namespace tkr
