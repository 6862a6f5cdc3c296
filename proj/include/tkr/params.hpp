#pragma once

// Flat trainable parameter vector with named segments plus frozen buffers
// (random Fourier matrices, mesh nodes, ...). Gradients are aligned with the
// full vector; frozen entries are never updated.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tkr/dual.hpp"
#include "tkr/tape.hpp"

namespace tkr {

struct Segment {
    std::string name;
    std::size_t offset{0};
    std::size_t size{0};
    bool trainable{true};
};

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ParameterStore {
public:
    // Returns the flat offset of the new segment.
    std::size_t add_segment(const std::string& name, std::size_t size, bool trainable) {
        Segment s{name, values_.size(), size, trainable};
        segments_.push_back(s);
        values_.resize(values_.size() + size, 0.0);
        trainable_.resize(values_.size(), trainable ? 1 : 0);
        return s.offset;
    }

    bool trainable_at(std::size_t flat_index) const { return trainable_[flat_index] != 0; }

    std::span<double> segment(std::size_t idx) {
        const Segment& s = segments_[idx];
        return {values_.data() + s.offset, s.size};
    }
    std::span<const double> segment(std::size_t idx) const {
        const Segment& s = segments_[idx];
        return {values_.data() + s.offset, s.size};
    }
    std::span<double> segment(const std::string& name) { return segment(index_of(name)); }
    std::span<const double> segment(const std::string& name) const { return segment(index_of(name)); }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t i = 0; i < segments_.size(); ++i)
            if (segments_[i].name == name) return i;
        throw std::out_of_range("no parameter segment named " + name);
    }

    const std::vector<Segment>& segments() const { return segments_; }
    std::size_t size() const { return values_.size(); }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    const Segment& segment_containing(std::size_t flat_index) const {
        for (const Segment& s : segments_)
            if (flat_index >= s.offset && flat_index < s.offset + s.size) return s;
        throw std::out_of_range("flat index outside any segment");
    }

    // Throws TrainError naming the segment of the first non-finite entry.
    void check_gradient_finite(std::span<const double> grad) const {
        for (std::size_t i = 0; i < grad.size(); ++i) {
            if (!std::isfinite(grad[i])) {
                throw TrainError("non-finite gradient entry in segment '" +
                                 segment_containing(i).name + "'");
            }
        }
    }

private:
    std::vector<double> values_;
    std::vector<Segment> segments_;
    std::vector<char> trainable_;
};

// Parameter access policies for generic evaluation code. ParamConst yields
// plain scalars (no recording); ParamLeaf yields tracked leaves of a tape
// whose leaf order is the store's flat order.
template <class S>
struct ParamConst {
    const ParameterStore* store;
    S get(std::size_t i) const { return S((*store)[i]); }
};

// Trainable entries become tape leaves; frozen buffers stay constants so
// they never generate adjoint work and get no gradient.
template <class B>
struct ParamLeaf {
    Tape<B>* tape;
    const ParameterStore* store;
    TVar<B> get(std::size_t i) const {
        if (store->trainable_at(i)) return tape->leaf(i);
        return TVar<B>((*store)[i]);
    }
};

}  // namespace tkr
