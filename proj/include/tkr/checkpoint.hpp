#pragma once

// Self-describing text checkpoints: key/value header plus flat numeric
// arrays. Doubles are serialized as C hexfloats, so a load reproduces every
// bit. One file can hold several models (temporal decomposition) together
// with their interval bounds.

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tkr/flow/model.hpp"
#include "tkr/train.hpp"

namespace tkr {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    std::string mode;    // "single", "choice1", "choice2"
    std::string system;
    std::vector<Model> models;
    std::vector<double> bounds;  // interval bounds (size models+1) for temporal modes
};

namespace ckptdetail {

inline std::string hex(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", x);
    return buf;
}

inline void write_array(std::ostream& os, const std::string& key, std::span<const double> v) {
    os << key << ' ' << v.size();
    for (double x : v) os << ' ' << hex(x);
    os << '\n';
}

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path) {
        if (!in_) throw CheckpointError("cannot open checkpoint: " + path);
    }

    std::string key() {
        std::string k;
        if (!(in_ >> k)) throw CheckpointError("unexpected end of checkpoint");
        return k;
    }

    void expect(const std::string& want) {
        const std::string got = key();
        if (got != want)
            throw CheckpointError("corrupt checkpoint: expected '" + want + "', got '" + got + "'");
    }

    std::string word() { return key(); }
    long integer() { return std::stol(key()); }
    std::uint64_t u64() { return std::stoull(key()); }
    double number() {
        const std::string w = key();
        return std::strtod(w.c_str(), nullptr);
    }
    std::vector<double> array() {
        const long n = integer();
        std::vector<double> v(static_cast<std::size_t>(n));
        for (double& x : v) x = number();
        return v;
    }

private:
    std::ifstream in_;
};

inline void write_model(std::ostream& os, const Model& m) {
    const ArchConfig& c = m.cfg;
    os << "d " << c.d << '\n'
       << "T " << hex(c.T_horizon) << '\n'
       << "blocks " << c.blocks << '\n'
       << "pairs_per_block " << c.pairs_per_block << '\n'
       << "hidden_width " << c.hidden_width << '\n'
       << "hidden_layers " << c.hidden_layers << '\n'
       << "alpha " << hex(c.alpha) << '\n'
       << "nonlinear " << (c.nonlinear_layer ? 1 : 0) << '\n'
       << "mesh_m " << c.mesh_m << '\n'
       << "bound_a " << hex(c.bound_a) << '\n'
       << "seed " << m.seed << '\n';
    write_array(os, "prior_mean", m.prior.mean);
    write_array(os, "prior_std", m.prior.stddev);
    os << "segments " << m.store.segments().size() << '\n';
    for (const Segment& s : m.store.segments()) {
        os << "segment " << s.name << ' ' << (s.trainable ? 1 : 0) << ' ';
        write_array(os, "values", m.store.segment(s.name));
    }
}

inline Model read_model(Reader& r) {
    ArchConfig c;
    r.expect("d");
    c.d = static_cast<int>(r.integer());
    r.expect("T");
    c.T_horizon = r.number();
    r.expect("blocks");
    c.blocks = static_cast<int>(r.integer());
    r.expect("pairs_per_block");
    c.pairs_per_block = static_cast<int>(r.integer());
    r.expect("hidden_width");
    c.hidden_width = static_cast<int>(r.integer());
    r.expect("hidden_layers");
    c.hidden_layers = static_cast<int>(r.integer());
    r.expect("alpha");
    c.alpha = r.number();
    r.expect("nonlinear");
    c.nonlinear_layer = r.integer() != 0;
    r.expect("mesh_m");
    c.mesh_m = static_cast<int>(r.integer());
    r.expect("bound_a");
    c.bound_a = r.number();
    r.expect("seed");
    const std::uint64_t seed = r.u64();
    r.expect("prior_mean");
    GaussianDiag prior;
    prior.mean = r.array();
    r.expect("prior_std");
    prior.stddev = r.array();

    Model m = Model::build(c, prior, seed);
    r.expect("segments");
    const long nseg = r.integer();
    if (nseg != static_cast<long>(m.store.segments().size()))
        throw CheckpointError("corrupt checkpoint: segment count mismatch");
    for (long i = 0; i < nseg; ++i) {
        r.expect("segment");
        const std::string name = r.word();
        const bool trainable = r.integer() != 0;
        r.expect("values");
        const std::vector<double> vals = r.array();
        const Segment& seg = m.store.segments()[m.store.index_of(name)];
        if (seg.trainable != trainable || seg.size != vals.size())
            throw CheckpointError("corrupt checkpoint: segment '" + name + "' mismatch");
        auto dst = m.store.segment(name);
        std::copy(vals.begin(), vals.end(), dst.begin());
    }
    return m;
}

}  // namespace ckptdetail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot write checkpoint: " + path);
    os << "tkrnet-checkpoint 1\n";
    os << "mode " << ck.mode << '\n';
    os << "system " << ck.system << '\n';
    ckptdetail::write_array(os, "bounds", ck.bounds);
    os << "models " << ck.models.size() << '\n';
    for (std::size_t i = 0; i < ck.models.size(); ++i) {
        os << "model " << i << '\n';
        ckptdetail::write_model(os, ck.models[i]);
    }
    os << "end\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    ckptdetail::Reader r(path);
    r.expect("tkrnet-checkpoint");
    if (r.integer() != 1) throw CheckpointError("unsupported checkpoint version");
    Checkpoint ck;
    r.expect("mode");
    ck.mode = r.word();
    r.expect("system");
    ck.system = r.word();
    r.expect("bounds");
    ck.bounds = r.array();
    r.expect("models");
    const long n = r.integer();
    for (long i = 0; i < n; ++i) {
        r.expect("model");
        r.integer();
        ck.models.push_back(ckptdetail::read_model(r));
    }
    r.expect("end");
    return ck;
}

inline Checkpoint checkpoint_of(const Model& m, const std::string& system) {
    Checkpoint ck;
    ck.mode = "single";
    ck.system = system;
    ck.models.push_back(m);
    ck.bounds = {0.0, m.cfg.T_horizon};
    return ck;
}

inline Checkpoint checkpoint_of(const IntervalModels& im, const std::string& system) {
    Checkpoint ck;
    ck.mode = "choice1";
    ck.system = system;
    ck.models = im.models;
    ck.bounds = im.bounds;
    return ck;
}

inline Checkpoint checkpoint_of(const StackedModel& sm, const std::string& system) {
    Checkpoint ck;
    ck.mode = "choice2";
    ck.system = system;
    ck.models = sm.nets;
    ck.bounds = sm.bounds;
    return ck;
}

inline IntervalModels interval_models_from(const Checkpoint& ck) {
    IntervalModels im;
    im.models = ck.models;
    im.bounds = ck.bounds;
    return im;
}

inline StackedModel stacked_from(const Checkpoint& ck) {
    StackedModel sm;
    sm.nets = ck.models;
    sm.bounds = ck.bounds;
    sm.base_prior = ck.models.front().prior;
    sm.active = -1;
    return sm;
}

}  // namespace tkr
