#pragma once

// Reverse-mode differentiation over a generic base scalar B.
//
// B = double          : plain parameter gradients.
// B = Dual<N>         : gradients of programs whose scalars carry input
//                       tangents, i.e. exact parameter derivatives of
//                       quantities that are themselves input derivatives
//                       (reverse-over-forward).
//
// The tape stores, per elementary operation, the operand indices and the
// local partials evaluated at record time, so the backward sweep is a single
// opcode-free pass. Adjoints are B-valued pairs (dL/d value, dL/d tangent_j);
// propagation uses
//   A_in      += A_out * p.v + sum_j At_out[j] * p.d[j]
//   At_in[j]  += At_out[j] * p.v
// which is exact because the tangent of a recorded partial equals the
// derivative of the node tangent with respect to the operand value.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "tkr/dual.hpp"

namespace tkr {

struct EvalError : std::runtime_error {
    std::size_t op_index;
    EvalError(std::size_t idx, const std::string& what)
        : std::runtime_error(what), op_index(idx) {}
};

inline double adjoint_mul(double adj, double partial) { return adj * partial; }
template <int N>
inline Dual<N> adjoint_mul(const Dual<N>& adj, const Dual<N>& partial) {
    Dual<N> r;
    r.v = adj.v * partial.v;
    for (int i = 0; i < N; ++i) {
        r.v += adj.d[i] * partial.d[i];
        r.d[i] = adj.d[i] * partial.v;
    }
    return r;
}

template <class B> class Tape;

// Tracked scalar. idx < 0 marks a constant (not recorded); arithmetic where
// every operand is constant folds into a constant, so quantities that do not
// depend on any leaf never touch the tape.
template <class B>
struct TVar {
    Tape<B>* tape{nullptr};
    std::int32_t idx{-1};
    B val{};

    TVar() = default;
    TVar(double c) : val(c) {}
    TVar(const B& c) requires(!std::is_same_v<B, double>) : val(c) {}

    bool is_const() const { return idx < 0; }

    friend bool operator<(const TVar& a, const TVar& b) { return value_of(a.val) < value_of(b.val); }
    friend bool operator>(const TVar& a, const TVar& b) { return value_of(a.val) > value_of(b.val); }
    friend bool operator<=(const TVar& a, const TVar& b) { return value_of(a.val) <= value_of(b.val); }
    friend bool operator>=(const TVar& a, const TVar& b) { return value_of(a.val) >= value_of(b.val); }
};

template <class B>
inline double value_of(const TVar<B>& x) { return value_of(x.val); }

template <class B>
class Tape {
public:
    struct Node {
        std::int32_t a;
        std::int32_t b;  // -1 for unary
        B pa;
        B pb;
    };

    // Registers the leaves (one per parameter, in order) and clears all nodes.
    void begin(std::span<const double> leaf_values) {
        leaves_.assign(leaf_values.begin(), leaf_values.end());
        nodes_.clear();
        adj_.assign(leaves_.size(), B{});
    }

    std::size_t n_leaves() const { return leaves_.size(); }
    std::size_t n_nodes() const { return nodes_.size(); }

    TVar<B> leaf(std::size_t i) {
        TVar<B> v;
        v.tape = this;
        v.idx = static_cast<std::int32_t>(i);
        v.val = B(leaves_[i]);
        return v;
    }

    TVar<B> constant(const B& c) const { return TVar<B>(c); }

    // Drops every node (keeping leaves) so the next program can be recorded.
    // Leaf adjoints are preserved: per-program seeds accumulate into them,
    // which is what a sum of programs needs.
    void rewind() {
        nodes_.clear();
        adj_.resize(leaves_.size());
    }

    void clear_leaf_adjoints() {
        adj_.assign(leaves_.size(), B{});
    }

    TVar<B> record1(const B& val, std::int32_t a, const B& pa) {
        std::int32_t idx = static_cast<std::int32_t>(leaves_.size() + nodes_.size());
        nodes_.push_back(Node{a, -1, pa, B{}});
        adj_.push_back(B{});
        TVar<B> v;
        v.tape = this;
        v.idx = idx;
        v.val = val;
        return v;
    }

    TVar<B> record2(const B& val, std::int32_t a, const B& pa, std::int32_t b, const B& pb) {
        std::int32_t idx = static_cast<std::int32_t>(leaves_.size() + nodes_.size());
        nodes_.push_back(Node{a, b, pa, pb});
        adj_.push_back(B{});
        TVar<B> v;
        v.tape = this;
        v.idx = idx;
        v.val = val;
        return v;
    }

    void add_seed(const TVar<B>& at, const B& seed) {
        if (at.is_const()) return;  // constant program: gradient is zero
        adj_[static_cast<std::size_t>(at.idx)] += seed;
    }

    // One backward sweep over the recorded nodes. Leaf adjoints accumulate.
    void propagate() {
        const std::size_t nl = leaves_.size();
        for (std::size_t k = nodes_.size(); k-- > 0;) {
            const Node& n = nodes_[k];
            const B a = adj_[nl + k];
            adj_[static_cast<std::size_t>(n.a)] += adjoint_mul(a, n.pa);
            if (n.b >= 0) adj_[static_cast<std::size_t>(n.b)] += adjoint_mul(a, n.pb);
        }
    }

    // Adds the leaf adjoint values into out (out.size() == n_leaves()).
    void accumulate_leaf_gradient(std::span<double> out) const {
        for (std::size_t i = 0; i < leaves_.size(); ++i) out[i] += value_of(adj_[i]);
    }

    const B& leaf_adjoint(std::size_t i) const { return adj_[i]; }

private:
    std::vector<double> leaves_;
    std::vector<Node> nodes_;
    std::vector<B> adj_;
};

namespace detail {
template <class B>
inline Tape<B>* tape_of(const TVar<B>& a, const TVar<B>& b) {
    return a.tape ? a.tape : b.tape;
}
}  // namespace detail

template <class B>
inline TVar<B> operator+(const TVar<B>& a, const TVar<B>& b) {
    if (a.is_const() && b.is_const()) return TVar<B>(a.val + b.val);
    Tape<B>* t = detail::tape_of(a, b);
    if (a.is_const()) return t->record1(a.val + b.val, b.idx, B(1.0));
    if (b.is_const()) return t->record1(a.val + b.val, a.idx, B(1.0));
    return t->record2(a.val + b.val, a.idx, B(1.0), b.idx, B(1.0));
}

template <class B>
inline TVar<B> operator-(const TVar<B>& a, const TVar<B>& b) {
    if (a.is_const() && b.is_const()) return TVar<B>(a.val - b.val);
    Tape<B>* t = detail::tape_of(a, b);
    if (a.is_const()) return t->record1(a.val - b.val, b.idx, B(-1.0));
    if (b.is_const()) return t->record1(a.val - b.val, a.idx, B(1.0));
    return t->record2(a.val - b.val, a.idx, B(1.0), b.idx, B(-1.0));
}

template <class B>
inline TVar<B> operator-(const TVar<B>& a) {
    if (a.is_const()) return TVar<B>(-a.val);
    return a.tape->record1(-a.val, a.idx, B(-1.0));
}

template <class B>
inline TVar<B> operator*(const TVar<B>& a, const TVar<B>& b) {
    if (a.is_const() && b.is_const()) return TVar<B>(a.val * b.val);
    Tape<B>* t = detail::tape_of(a, b);
    if (a.is_const()) return t->record1(a.val * b.val, b.idx, a.val);
    if (b.is_const()) return t->record1(a.val * b.val, a.idx, b.val);
    return t->record2(a.val * b.val, a.idx, b.val, b.idx, a.val);
}

template <class B>
inline TVar<B> operator/(const TVar<B>& a, const TVar<B>& b) {
    B inv = B(1.0) / b.val;
    B val = a.val * inv;
    if (a.is_const() && b.is_const()) return TVar<B>(val);
    Tape<B>* t = detail::tape_of(a, b);
    if (a.is_const()) return t->record1(val, b.idx, -val * inv);
    if (b.is_const()) return t->record1(val, a.idx, inv);
    return t->record2(val, a.idx, inv, b.idx, -val * inv);
}

template <class B> inline TVar<B> operator+(const TVar<B>& a, double c) { return a + TVar<B>(c); }
template <class B> inline TVar<B> operator+(double c, const TVar<B>& a) { return TVar<B>(c) + a; }
template <class B> inline TVar<B> operator-(const TVar<B>& a, double c) { return a - TVar<B>(c); }
template <class B> inline TVar<B> operator-(double c, const TVar<B>& a) { return TVar<B>(c) - a; }
template <class B> inline TVar<B> operator*(const TVar<B>& a, double c) { return a * TVar<B>(c); }
template <class B> inline TVar<B> operator*(double c, const TVar<B>& a) { return TVar<B>(c) * a; }
template <class B> inline TVar<B> operator/(const TVar<B>& a, double c) { return a / TVar<B>(c); }
template <class B> inline TVar<B> operator/(double c, const TVar<B>& a) { return TVar<B>(c) / a; }

template <class B>
inline TVar<B> exp(const TVar<B>& a) {
    B e = exp(a.val);
    if (a.is_const()) return TVar<B>(e);
    return a.tape->record1(e, a.idx, e);
}

template <class B>
inline TVar<B> log(const TVar<B>& a) {
    B val = log(a.val);
    if (a.is_const()) return TVar<B>(val);
    return a.tape->record1(val, a.idx, B(1.0) / a.val);
}

template <class B>
inline TVar<B> tanh(const TVar<B>& a) {
    B th = tanh(a.val);
    if (a.is_const()) return TVar<B>(th);
    return a.tape->record1(th, a.idx, B(1.0) - th * th);
}

template <class B>
inline TVar<B> sin(const TVar<B>& a) {
    if (a.is_const()) return TVar<B>(sin(a.val));
    return a.tape->record1(sin(a.val), a.idx, cos(a.val));
}

template <class B>
inline TVar<B> cos(const TVar<B>& a) {
    if (a.is_const()) return TVar<B>(cos(a.val));
    return a.tape->record1(cos(a.val), a.idx, -sin(a.val));
}

template <class B>
inline TVar<B> sqrt(const TVar<B>& a) {
    B s = sqrt(a.val);
    if (a.is_const()) return TVar<B>(s);
    return a.tape->record1(s, a.idx, B(0.5) / s);
}

template <class B>
inline TVar<B> pow(const TVar<B>& a, double p) {
    B val = pow(a.val, p);
    if (a.is_const()) return TVar<B>(val);
    return a.tape->record1(val, a.idx, B(p) * pow(a.val, p - 1.0));
}

using TDouble = TVar<double>;
using TDual1 = TVar<Dual1>;

}  // namespace tkr
