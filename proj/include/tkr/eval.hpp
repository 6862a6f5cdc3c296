#pragma once

// Reference solutions (method of characteristics) and the reported metrics:
// pointwise relative error, Monte Carlo KL estimate, moment errors, the
// KL-rate bound diagnostic, and density grids for plotting.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tkr/csv.hpp"
#include "tkr/loss.hpp"
#include "tkr/odeint.hpp"
#include "tkr/parallel.hpp"
#include "tkr/rng.hpp"
#include "tkr/systems.hpp"

namespace tkr {

inline CharacteristicEnsemble reference_ensemble(const SystemSpec& sys, std::size_t n_traj,
                                                 std::span<const double> times,
                                                 const IntegratorConfig& cfg, std::uint64_t seed,
                                                 int threads) {
    Rng rng(split_seed(seed, "reference-init"));
    std::vector<double> inits(n_traj * static_cast<std::size_t>(sys.dim));
    for (std::size_t k = 0; k < n_traj; ++k)
        sys.sample_p0(rng, {inits.data() + k * static_cast<std::size_t>(sys.dim),
                            static_cast<std::size_t>(sys.dim)});
    return integrate_ensemble(sys, inits, n_traj, times, cfg, threads);
}

// ----- metric cores on precomputed log-density columns ----------------------
// Separated so tests can inject reference values for both sides.

inline double relative_error_core(std::span<const double> logp_ref,
                                  std::span<const double> logp_model) {
    double acc = 0.0;
    for (std::size_t i = 0; i < logp_ref.size(); ++i)
        acc += std::abs(1.0 - std::exp(logp_model[i] - logp_ref[i]));
    return acc / static_cast<double>(logp_ref.size());
}

struct MeanWithSe {
    double mean{0.0};
    double se{0.0};
};

inline MeanWithSe mean_with_se(std::span<const double> v) {
    const auto n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= (n - 1.0);
    return {mean, std::sqrt(var / n)};
}

inline MeanWithSe kl_core(std::span<const double> logp_ref, std::span<const double> logp_model) {
    std::vector<double> diff(logp_ref.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = logp_ref[i] - logp_model[i];
    return mean_with_se(diff);
}

// ----- ensemble-based evaluation --------------------------------------------

struct MetricsRow {
    double t{0.0};
    double rel_err{0.0};
    double kl{0.0};
    double kl_se{0.0};
    double mean_abs_rlog{0.0};
    double rlog_se{0.0};
};

struct MetricsTable {
    std::vector<MetricsRow> rows;
};

template <class View>
std::vector<double> model_logp_at_states(const View& view, const CharacteristicEnsemble& ens,
                                         std::size_t ti, int threads) {
    std::vector<double> out(ens.n_traj);
    parallel_for(ens.n_traj, threads, [&](std::size_t k) {
        out[k] = view.log_density(ens.state(k, ti), ens.times[ti]);
    });
    return out;
}

template <class View>
double relative_error_at(const View& view, const CharacteristicEnsemble& ens, std::size_t ti,
                         int threads) {
    auto lpm = model_logp_at_states(view, ens, ti, threads);
    std::vector<double> lpr(ens.n_traj);
    for (std::size_t k = 0; k < ens.n_traj; ++k) lpr[k] = ens.log_density(k, ti);
    return relative_error_core(lpr, lpm);
}

template <class View>
MeanWithSe kl_estimate_at(const View& view, const CharacteristicEnsemble& ens, std::size_t ti,
                          int threads) {
    auto lpm = model_logp_at_states(view, ens, ti, threads);
    std::vector<double> lpr(ens.n_traj);
    for (std::size_t k = 0; k < ens.n_traj; ++k) lpr[k] = ens.log_density(k, ti);
    return kl_core(lpr, lpm);
}

// E_p |r_log| estimated at the reference states (they are draws from p).
template <class View>
MeanWithSe mean_abs_rlog_at(const View& view, const SystemSpec& sys,
                            const CharacteristicEnsemble& ens, std::size_t ti, int threads) {
    std::vector<double> vals(ens.n_traj);
    parallel_for(ens.n_traj, threads, [&](std::size_t k) {
        vals[k] = std::abs(residual_log(view, sys, ens.state(k, ti), ens.times[ti]));
    });
    return mean_with_se(vals);
}

template <class View>
MetricsTable evaluate_against_ensemble(const View& view, const SystemSpec& sys,
                                       const CharacteristicEnsemble& ens, int threads) {
    MetricsTable table;
    for (std::size_t ti = 0; ti < ens.times.size(); ++ti) {
        MetricsRow row;
        row.t = ens.times[ti];
        row.rel_err = relative_error_at(view, ens, ti, threads);
        MeanWithSe kl = kl_estimate_at(view, ens, ti, threads);
        row.kl = kl.mean;
        row.kl_se = kl.se;
        MeanWithSe rl = mean_abs_rlog_at(view, sys, ens, ti, threads);
        row.mean_abs_rlog = rl.mean;
        row.rlog_se = rl.se;
        table.rows.push_back(row);
    }
    return table;
}

// ----- moment errors ---------------------------------------------------------

struct MomentRow {
    double t{0.0};
    int dim{0};
    double mean_ref{0.0}, mean_model{0.0};
    double var_ref{0.0}, var_model{0.0};

    double mean_err() const { return std::abs(mean_ref - mean_model); }
    double var_err() const { return std::abs(var_ref - var_model); }
};

// Sample moments with the n/(n-1) variance correction.
inline void sample_moments(std::span<const double> pts, std::size_t n, std::size_t d,
                           std::vector<double>& mean, std::vector<double>& var) {
    mean.assign(d, 0.0);
    var.assign(d, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < d; ++j) mean[j] += pts[k * d + j];
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < d; ++j) {
            const double c = pts[k * d + j] - mean[j];
            var[j] += c * c;
        }
    const double corr = static_cast<double>(n) / (static_cast<double>(n) - 1.0);
    for (std::size_t j = 0; j < d; ++j) var[j] = corr * (var[j] / static_cast<double>(n));
}

template <class View>
std::vector<MomentRow> moment_errors(const View& view, const CharacteristicEnsemble& ens,
                                     std::size_t n_model_samples, std::uint64_t seed) {
    const auto d = static_cast<std::size_t>(ens.dim);
    std::vector<MomentRow> rows;
    std::vector<double> ref_pts(ens.n_traj * d);
    std::vector<double> mean_r, var_r, mean_m, var_m;
    for (std::size_t ti = 0; ti < ens.times.size(); ++ti) {
        for (std::size_t k = 0; k < ens.n_traj; ++k) {
            auto st = ens.state(k, ti);
            std::copy(st.begin(), st.end(), ref_pts.begin() + static_cast<std::ptrdiff_t>(k * d));
        }
        sample_moments(ref_pts, ens.n_traj, d, mean_r, var_r);

        Rng rng(split_seed(seed, "moment-samples", ti));
        std::vector<double> pts(n_model_samples * d);
        view.sample_at(ens.times[ti], n_model_samples, rng, pts);
        sample_moments(pts, n_model_samples, d, mean_m, var_m);

        for (std::size_t j = 0; j < d; ++j) {
            MomentRow row;
            row.t = ens.times[ti];
            row.dim = static_cast<int>(j);
            row.mean_ref = mean_r[j];
            row.mean_model = mean_m[j];
            row.var_ref = var_r[j];
            row.var_model = var_m[j];
            rows.push_back(row);
        }
    }
    return rows;
}

// ----- KL-rate bound diagnostic ----------------------------------------------
// Checks d/dt KL(p || p_model) <= E_p |r_log| at interior ensemble times,
// with the left side from central differences of the KL series and both
// sides carrying Monte Carlo standard errors.

struct KlBoundRow {
    double t{0.0};
    double dkl_dt{0.0};
    double se_dkl{0.0};
    double bound{0.0};
    double se_bound{0.0};
    bool flagged{false};
};

// `abs_floor` absorbs the deterministic part of the error budget (reference
// integration tolerance and stencil truncation), which the Monte Carlo
// standard errors cannot see; it only matters when both sides are near zero.
template <class View>
std::vector<KlBoundRow> kl_bound_diagnostic(const View& view, const SystemSpec& sys,
                                            const CharacteristicEnsemble& ens, int threads,
                                            double abs_floor = 1e-6) {
    const std::size_t nt = ens.times.size();
    std::vector<MeanWithSe> kl(nt), bound(nt);
    for (std::size_t ti = 0; ti < nt; ++ti) {
        kl[ti] = kl_estimate_at(view, ens, ti, threads);
        bound[ti] = mean_abs_rlog_at(view, sys, ens, ti, threads);
    }
    std::vector<KlBoundRow> rows;
    for (std::size_t ti = 1; ti + 1 < nt; ++ti) {
        KlBoundRow row;
        row.t = ens.times[ti];
        const double span = ens.times[ti + 1] - ens.times[ti - 1];
        row.dkl_dt = (kl[ti + 1].mean - kl[ti - 1].mean) / span;
        row.se_dkl = std::sqrt(kl[ti + 1].se * kl[ti + 1].se + kl[ti - 1].se * kl[ti - 1].se) / span;
        row.bound = bound[ti].mean;
        row.se_bound = bound[ti].se;
        const double slack = 3.0 * std::sqrt(row.se_dkl * row.se_dkl + row.se_bound * row.se_bound);
        row.flagged = row.dkl_dt > row.bound + slack + abs_floor;
        rows.push_back(row);
    }
    return rows;
}

// ----- density grids ----------------------------------------------------------

struct DensityGrid {
    double t{0.0};
    int axis1{0}, axis2{1};
    int resolution{0};
    double lo1{0.0}, hi1{0.0}, lo2{0.0}, hi2{0.0};
    std::vector<double> slice;  // fixed values of the remaining coordinates
    std::vector<double> p;      // resolution x resolution, row-major over axis1

    double coord1(int i) const {
        return lo1 + (hi1 - lo1) * static_cast<double>(i) / static_cast<double>(resolution - 1);
    }
    double coord2(int j) const {
        return lo2 + (hi2 - lo2) * static_cast<double>(j) / static_cast<double>(resolution - 1);
    }

    // Trapezoid mass of the exported field over the box (2D slice mass).
    double trapezoid_mass() const {
        const double h1 = (hi1 - lo1) / (resolution - 1);
        const double h2 = (hi2 - lo2) / (resolution - 1);
        double acc = 0.0;
        for (int i = 0; i < resolution; ++i) {
            const double wi = (i == 0 || i == resolution - 1) ? 0.5 : 1.0;
            for (int j = 0; j < resolution; ++j) {
                const double wj = (j == 0 || j == resolution - 1) ? 0.5 : 1.0;
                acc += wi * wj * p[static_cast<std::size_t>(i) * resolution + j];
            }
        }
        return acc * h1 * h2;
    }
};

// Evaluates the density on a tensor grid over a 2D box; for d > 2 the
// remaining coordinates sit at `slice` (by default the initial mean).
template <class View>
DensityGrid density_grid_export(const View& view, double t,
                                std::pair<double, double> box1, std::pair<double, double> box2,
                                int resolution, std::span<const double> slice, int threads) {
    DensityGrid g;
    g.t = t;
    g.resolution = resolution;
    g.lo1 = box1.first;
    g.hi1 = box1.second;
    g.lo2 = box2.first;
    g.hi2 = box2.second;
    g.slice.assign(slice.begin(), slice.end());
    g.p.resize(static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution));
    const auto d = static_cast<std::size_t>(view.dim());
    parallel_for(static_cast<std::size_t>(resolution), threads, [&](std::size_t i) {
        std::vector<double> x(d);
        for (std::size_t j = 2; j < d; ++j) x[j] = g.slice[j - 2];
        x[0] = g.coord1(static_cast<int>(i));
        for (int j = 0; j < resolution; ++j) {
            x[1] = g.coord2(j);
            g.p[i * static_cast<std::size_t>(resolution) + static_cast<std::size_t>(j)] =
                std::exp(view.log_density(x, t));
        }
    });
    return g;
}

// ----- CSV emission ------------------------------------------------------------

inline void write_errors_csv(const std::string& path, const MetricsTable& table) {
    CsvFile csv(path);
    csv.header({"t", "rel_err", "kl", "mean_abs_rlog"});
    for (const MetricsRow& r : table.rows)
        csv.line({fmt_double(r.t), fmt_double(r.rel_err), fmt_double(r.kl),
                  fmt_double(r.mean_abs_rlog)});
}

inline void write_moments_csv(const std::string& path, const std::vector<MomentRow>& rows) {
    CsvFile csv(path);
    csv.header({"t", "dim", "mean_ref", "mean_model", "var_ref", "var_model"});
    for (const MomentRow& r : rows)
        csv.line({fmt_double(r.t), std::to_string(r.dim), fmt_double(r.mean_ref),
                  fmt_double(r.mean_model), fmt_double(r.var_ref), fmt_double(r.var_model)});
}

inline void write_klbound_csv(const std::string& path, const std::vector<KlBoundRow>& rows) {
    CsvFile csv(path);
    csv.header({"t", "dkl_dt", "se_dkl", "bound", "se_bound", "flagged"});
    for (const KlBoundRow& r : rows)
        csv.line({fmt_double(r.t), fmt_double(r.dkl_dt), fmt_double(r.se_dkl),
                  fmt_double(r.bound), fmt_double(r.se_bound), r.flagged ? "1" : "0"});
}

inline void write_density_csv(const std::string& path, const DensityGrid& g) {
    CsvFile csv(path);
    csv.header({"coord1", "coord2", "t", "p"});
    for (int i = 0; i < g.resolution; ++i)
        for (int j = 0; j < g.resolution; ++j)
            csv.line({fmt_double(g.coord1(i)), fmt_double(g.coord2(j)), fmt_double(g.t),
                      fmt_double(g.p[static_cast<std::size_t>(i) * g.resolution + j])});
}

inline void write_reference_csv(const std::string& path, const CharacteristicEnsemble& ens) {
    CsvFile csv(path);
    std::vector<std::string> cols{"traj", "t"};
    for (int j = 0; j < ens.dim; ++j) cols.push_back("x" + std::to_string(j + 1));
    cols.push_back("logp");
    csv.header(cols);
    for (std::size_t k = 0; k < ens.n_traj; ++k)
        for (std::size_t ti = 0; ti < ens.times.size(); ++ti) {
            std::vector<std::string> cells{std::to_string(k), fmt_double(ens.times[ti])};
            for (double x : ens.state(k, ti)) cells.push_back(fmt_double(x));
            cells.push_back(fmt_double(ens.log_density(k, ti)));
            csv.line(cells);
        }
}

}  // namespace tkr
