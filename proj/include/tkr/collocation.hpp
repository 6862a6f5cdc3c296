#pragma once

// Space-time collocation sets: the repeated time grid on (0, T], the initial
// uniform draw, model-based resampling, and the mini-batch partition.

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tkr/parallel.hpp"
#include "tkr/rng.hpp"

namespace tkr {

// Stamps t_i = ceil(i/M) * dt for i = 1..MJ with dt = T/J, so each of the J
// grid times carries M spatial points and the largest stamp is exactly T.
inline std::vector<double> make_time_grid(double T, int J, int M) {
    if (J < 1 || M < 1) throw std::invalid_argument("time grid needs J >= 1 and M >= 1");
    std::vector<double> ts(static_cast<std::size_t>(J) * static_cast<std::size_t>(M));
    const double dt = T / static_cast<double>(J);
    std::size_t idx = 0;
    for (int k = 1; k <= J; ++k) {
        const double t = (k == J) ? T : dt * static_cast<double>(k);
        for (int j = 0; j < M; ++j) ts[idx++] = t;
    }
    return ts;
}

// Same grid shifted into (t0, t1]; the final stamp is exactly t1.
inline std::vector<double> make_time_grid_shifted(double t0, double t1, int J, int M) {
    std::vector<double> ts = make_time_grid(t1 - t0, J, M);
    for (std::size_t i = 0; i < ts.size(); ++i)
        ts[i] = (ts[i] == t1 - t0) ? t1 : t0 + ts[i];
    return ts;
}

struct Collocation {
    std::size_t n{0};
    int d{0};
    std::vector<double> xs;  // n x d, row-major
    std::vector<double> ts;  // n

    std::span<const double> point(std::size_t i) const {
        return {xs.data() + i * static_cast<std::size_t>(d), static_cast<std::size_t>(d)};
    }
};

inline Collocation init_collocation(const std::vector<std::pair<double, double>>& box,
                                    std::span<const double> stamps, std::uint64_t seed) {
    Collocation c;
    c.n = stamps.size();
    c.d = static_cast<int>(box.size());
    c.ts.assign(stamps.begin(), stamps.end());
    c.xs.resize(c.n * box.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < c.n; ++i)
        for (std::size_t j = 0; j < box.size(); ++j)
            c.xs[i * box.size() + j] = rng.uniform(box[j].first, box[j].second);
    return c;
}

// Draws x_i from the model's density at stamp t_i (prior draw + inverse map).
// Each point gets its own derived stream, so the result is independent of the
// thread count.
template <class Sampler>
Collocation resample_collocation(const Sampler& model, std::span<const double> stamps,
                                 std::uint64_t seed, int threads) {
    Collocation c;
    c.n = stamps.size();
    c.d = model.dim();
    c.ts.assign(stamps.begin(), stamps.end());
    c.xs.resize(c.n * static_cast<std::size_t>(c.d));
    const auto d = static_cast<std::size_t>(c.d);
    parallel_for(c.n, threads, [&](std::size_t i) {
        Rng rng(split_seed(seed, "resample-point", i));
        model.sample_at(stamps[i], 1, rng, {c.xs.data() + i * d, d});
    });
    return c;
}

// Near-equal contiguous batches over a permutation of the point indices.
// Shuffling permutes assignments but keeps the partition exact.
class MiniBatcher {
public:
    MiniBatcher(std::size_t n, int n_batches) : n_(n), nb_(n_batches), perm_(n) {
        if (n_batches < 1 || static_cast<std::size_t>(n_batches) > n)
            throw std::invalid_argument("batch count must satisfy 1 <= N_b <= N_r");
        for (std::size_t i = 0; i < n; ++i) perm_[i] = static_cast<std::uint32_t>(i);
    }

    int n_batches() const { return nb_; }

    std::pair<std::size_t, std::size_t> batch_range(int b) const {
        const std::size_t base = n_ / static_cast<std::size_t>(nb_);
        const std::size_t rem = n_ % static_cast<std::size_t>(nb_);
        const auto bu = static_cast<std::size_t>(b);
        const std::size_t lo = bu * base + std::min(bu, rem);
        const std::size_t size = base + (bu < rem ? 1 : 0);
        return {lo, lo + size};
    }

    void shuffle(Rng& rng) {
        for (std::size_t i = n_; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
            std::swap(perm_[i - 1], perm_[j]);
        }
    }

    // Copies batch b into contiguous buffers.
    void gather(const Collocation& c, int b, std::vector<double>& xs, std::vector<double>& ts) const {
        const auto [lo, hi] = batch_range(b);
        const auto d = static_cast<std::size_t>(c.d);
        xs.resize((hi - lo) * d);
        ts.resize(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) {
            const std::size_t src = perm_[i];
            std::copy_n(c.xs.begin() + static_cast<std::ptrdiff_t>(src * d), d,
                        xs.begin() + static_cast<std::ptrdiff_t>((i - lo) * d));
            ts[i - lo] = c.ts[src];
        }
    }

    // Gathers batch b of a flat point set (rows of width d, no time stamps).
    void gather_points(std::span<const double> pts, int d, int b, std::vector<double>& xs) const {
        const auto [lo, hi] = batch_range(b);
        const auto du = static_cast<std::size_t>(d);
        xs.resize((hi - lo) * du);
        for (std::size_t i = lo; i < hi; ++i)
            std::copy_n(pts.begin() + static_cast<std::ptrdiff_t>(perm_[i] * du), du,
                        xs.begin() + static_cast<std::ptrdiff_t>((i - lo) * du));
    }

    const std::vector<std::uint32_t>& permutation() const { return perm_; }

private:
    std::size_t n_;
    int nb_;
    std::vector<std::uint32_t> perm_;
};

}  // namespace tkr
