#pragma once

// AdamW with decoupled multiplicative weight decay, and the cosine-annealing
// learning-rate schedule. Frozen buffers are never touched (and therefore
// never decayed).

#include <cmath>
#include <span>
#include <vector>

#include "tkr/params.hpp"

namespace tkr {

struct AdamWConfig {
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};
    double weight_decay{0.01};
};

class AdamW {
public:
    AdamW(const ParameterStore& store, AdamWConfig cfg)
        : cfg_(cfg), m_(store.size(), 0.0), v_(store.size(), 0.0) {}

    void step(ParameterStore& store, std::span<const double> grad, double lr) {
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        const double decay = 1.0 - lr * cfg_.weight_decay;
        for (const Segment& seg : store.segments()) {
            if (!seg.trainable) continue;
            for (std::size_t i = seg.offset; i < seg.offset + seg.size; ++i) {
                store[i] *= decay;
                const double g = grad[i];
                m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
                v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
                store[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.eps);
            }
        }
    }

    long step_count() const { return step_; }

private:
    AdamWConfig cfg_;
    std::vector<double> m_, v_;
    long step_{0};
};

struct CosineSchedule {
    double eta_max{1e-3};
    double eta_min{0.0};
    long total_steps{1};

    double operator()(long step) const {
        if (total_steps <= 0) return eta_max;
        if (step <= 0) return eta_max;
        if (step >= total_steps) return eta_min;
        const double phase = 3.1415926535897932384626433832795 * static_cast<double>(step) /
                             static_cast<double>(total_steps);
        return eta_min + (eta_max - eta_min) * 0.5 * (1.0 + std::cos(phase));
    }
};

}  // namespace tkr
