#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bxi/config.hpp"
#include "bxi/harmonic.hpp"
#include "bxi/parallel.hpp"
#include "bxi/record.hpp"

namespace bxi {

// Hard floor of the Z-grid: trajectories below e^{-6} are irrelevant for
// harmonic measure on C_0 at the resolutions in use.
inline constexpr double kZGridFloor = -6.0;

// A batch of Monte Carlo estimates plus the bookkeeping needed for the
// solver-exclusion accounting of a run.
struct EstimateSet {
    std::vector<EstimateRecord> records;
    std::uint64_t excluded = 0;
    std::uint64_t n_trials = 0;

    double exclusion_rate() const {
        return n_trials ? static_cast<double>(excluded) / static_cast<double>(n_trials)
                        : 0.0;
    }
};

// Z^lambda with the same conventions as exp_weight: Z = 0 contributes 0
// for every lambda >= 0 (lambda = 0 gives the indicator of Z > 0).
inline double pow_weight(double z, double lambda) {
    if (!(z > 0.0)) return 0.0;
    return std::pow(z, lambda);
}

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

// Lowest grid row placed so that one row lies exactly on C_0.
inline double aligned_u_min(double lowest_log_norm, double h) {
    const double target = std::max(lowest_log_norm - 0.2, kZGridFloor);
    return -h * std::ceil(-target / h - 1e-9);
}

} // namespace detail

// ---------------------------------------------------------------------------
// b-family: b_r = r^{-2} E[e^{-lambda L} 1_filter]
// ---------------------------------------------------------------------------

inline EstimateSet estimate_b(double r, const std::vector<double>& lambdas,
                              std::uint64_t n, const EventFilter& filter, double dt,
                              double h, std::uint64_t seed) {
    if (r < 1.0) throw std::invalid_argument("estimate_b: r must be >= 1");
    const bool full = filter.needs_full_paths();
    std::vector<double> extra;
    if (filter.kind == FilterKind::E_N_EPS) extra.push_back(-1.0 + filter.eps);

    struct Row {
        std::vector<double> w;
        bool ok = true;
    };
    auto rows = parallel_map<Row>(n, [&](std::uint64_t t) {
        Row row;
        row.w.assign(lambdas.size(), 0.0);
        try {
            const ConfigSample cfg = build_config(r, dt, h, seed, t, full, extra);
            if (filter_passes(cfg, filter))
                for (std::size_t i = 0; i < lambdas.size(); ++i)
                    row.w[i] = exp_weight(cfg.L, lambdas[i]);
        } catch (const std::exception&) {
            row.ok = false;
        }
        return row;
    });

    EstimateSet set;
    set.n_trials = n;
    for (const Row& row : rows)
        if (!row.ok) ++set.excluded;
    const double norm = 1.0 / (r * r);
    const std::string quantity =
        filter.kind == FilterKind::NONE ? "b" : "b[" + filter.name() + "]";
    std::vector<double> col;
    col.reserve(n);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        col.clear();
        for (const Row& row : rows)
            if (row.ok) col.push_back(row.w[i]);
        const MeanStderr ms = mean_stderr(col);
        set.records.push_back({quantity, r, lambdas[i], norm * ms.mean,
                               norm * ms.stderr_, col.size(), seed});
    }
    return set;
}

// ---------------------------------------------------------------------------
// Z: harmonic-measure estimate of the non-intersection probability
// ---------------------------------------------------------------------------

// Log-polar raster of Y^1 union Y^2 over the disk of radius e^r, SUPER_NODE
// inner cap, lowest row just below the deepest excursion (floored at -6)
// and aligned so that one row lies on C_0.
inline OccupancyGrid make_z_grid(const ConfigSample& cfg, double h) {
    if (!cfg.Y1 || !cfg.Y2)
        throw std::logic_error("make_z_grid: config lacks full paths");
    double lo = 0.0;
    for (const SampledPath* p : {&*cfg.Y1, &*cfg.Y2})
        for (const Point& q : p->points) lo = std::min(lo, q.log_norm());
    OccupancyGrid grid(detail::aligned_u_min(lo, h), cfg.r, h, InnerCapMode::SUPER_NODE);
    for (const SampledPath* p : {&*cfg.Y1, &*cfg.Y2})
        for (std::size_t i = 1; i < p->points.size(); ++i)
            grid.mark_segment(p->points[i - 1], p->points[i]);
    return grid;
}

// Harmonic Z on a raw grid: mean of the reach probability over the free
// cells of the row on C_{u_start}.
inline double harmonic_Z(const OccupancyGrid& grid, double u_start = 0.0,
                         const std::vector<double>* outer_value = nullptr) {
    const ReachField field = reach_probability(grid, kSolverTol, outer_value);
    return row_average_free(grid, field, u_start);
}

// Monte Carlo Z on the same grid graph: fraction of m lattice walkers from
// uniform free cells of the start row that reach the outer row.
inline double nested_Z(const OccupancyGrid& grid, int m, RandomSeed seed,
                       double u_start = 0.0) {
    if (m <= 0) throw std::invalid_argument("nested_Z: m must be positive");
    RngStream rng(seed);
    const int row = grid.row_of(u_start);
    std::vector<int> free_cols;
    for (int c = 0; c < grid.cols(); ++c)
        if (!grid.is_obstacle(row, c)) free_cols.push_back(c);
    if (free_cols.empty()) return 0.0;
    int hits = 0;
    for (int k = 0; k < m; ++k) {
        const int col = free_cols[rng.next_u64() % free_cols.size()];
        if (lattice_walk_reach(grid, row, col, rng) > 0.5) ++hits;
    }
    return static_cast<double>(hits) / m;
}

enum class ZMode { HARMONIC, NESTED_MC };

inline double estimate_Z(const ConfigSample& cfg, double h, ZMode mode = ZMode::HARMONIC,
                         int m = 10000, RandomSeed seed = {0, 0}) {
    const OccupancyGrid grid = make_z_grid(cfg, h);
    return mode == ZMode::HARMONIC ? harmonic_Z(grid) : nested_Z(grid, m, seed);
}

// ---------------------------------------------------------------------------
// a-family: a_r = E[Z^lambda]
// ---------------------------------------------------------------------------

inline EstimateSet estimate_a(double r, const std::vector<double>& lambdas,
                              std::uint64_t n, double dt, double h,
                              std::uint64_t seed) {
    if (r < 2.0) throw std::invalid_argument("estimate_a: r must be >= 2");
    struct Row {
        std::vector<double> w;
        bool ok = true;
    };
    auto rows = parallel_map<Row>(n, [&](std::uint64_t t) {
        Row row;
        row.w.assign(lambdas.size(), 0.0);
        try {
            ConfigSample cfg;
            cfg.r = r;
            cfg.dt = dt;
            cfg.h = h;
            cfg.Y1 = sample_full_path(r, dt, {seed, 4 * t});
            cfg.Y2 = sample_full_path(r, dt, {seed, 4 * t + 1});
            const double z = estimate_Z(cfg, h);
            for (std::size_t i = 0; i < lambdas.size(); ++i)
                row.w[i] = pow_weight(z, lambdas[i]);
        } catch (const std::exception&) {
            row.ok = false;
        }
        return row;
    });

    EstimateSet set;
    set.n_trials = n;
    for (const Row& row : rows)
        if (!row.ok) ++set.excluded;
    std::vector<double> col;
    col.reserve(n);
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        col.clear();
        for (const Row& row : rows)
            if (row.ok) col.push_back(row.w[i]);
        const MeanStderr ms = mean_stderr(col);
        set.records.push_back({"a", r, lambdas[i], ms.mean, ms.stderr_, col.size(), seed});
    }
    return set;
}

// Upper-bound variant: hat-Z is the max of the harmonic field over the C_0
// row, and the outer sup over starting points is approximated by the
// largest conditional mean over start_grid^2 pinned-start batches.
// start_grid <= 1 degenerates to uniform starts and the plain Z average,
// i.e. reproduces estimate_a.
inline EstimateSet estimate_a_hat(double r, const std::vector<double>& lambdas,
                                  std::uint64_t n, int start_grid, double dt, double h,
                                  std::uint64_t seed) {
    if (r < 2.0) throw std::invalid_argument("estimate_a_hat: r must be >= 2");
    if (start_grid <= 1) {
        EstimateSet set = estimate_a(r, lambdas, n, dt, h, seed);
        for (auto& rec : set.records) rec.quantity = "a_hat";
        return set;
    }
    const std::uint64_t batches = static_cast<std::uint64_t>(start_grid) * start_grid;
    struct Row {
        std::vector<double> w;
        bool ok = true;
    };
    auto rows = parallel_map<Row>(batches * n, [&](std::uint64_t g) {
        const std::uint64_t batch = g / n;
        const double th1 = 2.0 * M_PI * static_cast<double>(batch / start_grid) / start_grid;
        const double th2 = 2.0 * M_PI * static_cast<double>(batch % start_grid) / start_grid;
        Row row;
        row.w.assign(lambdas.size(), 0.0);
        try {
            ConfigSample cfg;
            cfg.r = r;
            cfg.dt = dt;
            cfg.h = h;
            cfg.Y1 = sample_full_path(r, dt, {seed, 4 * g}, {}, &th1);
            cfg.Y2 = sample_full_path(r, dt, {seed, 4 * g + 1}, {}, &th2);
            const OccupancyGrid grid = make_z_grid(cfg, h);
            const ReachField field = reach_probability(grid);
            const double z_hat = row_max(grid, field, 0.0);
            for (std::size_t i = 0; i < lambdas.size(); ++i)
                row.w[i] = pow_weight(z_hat, lambdas[i]);
        } catch (const std::exception&) {
            row.ok = false;
        }
        return row;
    });

    EstimateSet set;
    set.n_trials = batches * n;
    for (const Row& row : rows)
        if (!row.ok) ++set.excluded;
    std::vector<double> col;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        double best = -1.0, best_err = 0.0;
        std::uint64_t best_n = 0;
        for (std::uint64_t b = 0; b < batches; ++b) {
            col.clear();
            for (std::uint64_t t = 0; t < n; ++t)
                if (rows[b * n + t].ok) col.push_back(rows[b * n + t].w[i]);
            const MeanStderr ms = mean_stderr(col);
            if (ms.mean > best) {
                best = ms.mean;
                best_err = ms.stderr_;
                best_n = col.size();
            }
        }
        set.records.push_back({"a_hat", r, lambdas[i], best, best_err, best_n, seed});
    }
    return set;
}

// ---------------------------------------------------------------------------
// Disconnection probability: P(Z > 0) over the upcrossing-pair ensemble
// ---------------------------------------------------------------------------

// Fraction of configurations whose union does not disconnect C_0 from C_r,
// under the same upcrossing normalization as estimate_b: the value is
// b_r(0+) = r^{-2} E[1{Z > 0}], so that with the same seed the lambda = 0
// record of estimate_b and this record coincide sample for sample.
inline EstimateSet estimate_disconnection(double r, std::uint64_t n, double dt, double h,
                                          std::uint64_t seed) {
    if (r < 1.0) throw std::invalid_argument("estimate_disconnection: r must be >= 1");
    struct Row {
        double w = 0.0;
        bool ok = true;
    };
    auto rows = parallel_map<Row>(n, [&](std::uint64_t t) {
        Row row;
        try {
            const ConfigSample cfg = build_config(r, dt, h, seed, t, false, {});
            row.w = exp_weight(cfg.L, 0.0);
        } catch (const std::exception&) {
            row.ok = false;
        }
        return row;
    });
    EstimateSet set;
    set.n_trials = n;
    std::vector<double> col;
    col.reserve(n);
    for (const Row& row : rows) {
        if (row.ok)
            col.push_back(row.w);
        else
            ++set.excluded;
    }
    const MeanStderr ms = mean_stderr(col);
    const double norm = 1.0 / (r * r);
    set.records.push_back(
        {"z_positive", r, 0.0, norm * ms.mean, norm * ms.stderr_, col.size(), seed});
    return set;
}

// ---------------------------------------------------------------------------
// Separation lemma diagnostics
// ---------------------------------------------------------------------------

struct SeparationSummary {
    std::vector<double> lambdas;
    std::vector<std::vector<double>> ratios;  // per lambda, per included config
    std::vector<double> min_ratio;            // per lambda
    std::vector<double> median_ratio;         // per lambda
    std::vector<std::uint64_t> excluded;      // per lambda (zero denominator / solver)
    std::uint64_t n_outer = 0;
};

namespace detail {

// Cheap conservative reject for the radial bullet of "very nice at the end"
// on a strip leg ending at r_prime: after the first passage of
// C_{r_prime - 1/3} the leg must not dip materially below r_prime - 1/2.
inline bool radial_tail_plausible(const StripLeg& leg, double r_prime, double dt) {
    const double floor_u = r_prime - 0.5 - hit_tolerance(dt);
    for (std::size_t i = leg.first_at(r_prime - 1.0 / 3.0); i < leg.u.size(); ++i)
        if (leg.u[i] < floor_u) return false;
    return true;
}

// ConfigSample wrapper around an extended pair at radius rr.
inline ConfigSample extended_config(const SampledPath& f1, const SampledPath& f2,
                                    double rr, double dt, double h, bool l1_only) {
    ConfigSample cfg;
    cfg.r = rr;
    cfg.dt = dt;
    cfg.h = h;
    cfg.B1 = f1;
    cfg.B2 = f2;
    cfg.end1 = f1.back().arg();
    cfg.end2 = f2.back().arg();
    attach_domains(cfg, l1_only);
    return cfg;
}

inline constexpr double kEndpointWindow = 0.05;  // 1/20, the G endpoint bullet
inline constexpr double kBandWindow = 0.09;      // mid-pin window, inside the 1/10 wedge
inline constexpr double kCorridorWindow = 1.0;   // below-band proposal corridor half-width
inline constexpr int kWindings = 1;              // winding components {-1, 0, 1}

// Pooled two-stage importance estimator of the per-extension-attempt mean
// E[1_G(f1, f2) w_lambda] over free strip extensions of the pair (b1, b2)
// from radius n to rr, where G is "very nice at the end" and w_lambda is
// exp(-lambda L^1) (use_l1) or exp(-lambda L).
//
// Stage 1 simulates a pool of pool_size radial legs per path (streams
// pool1 + m, pool2 + m; legs are regenerated from their stream on demand,
// so only the per-winding log proxy masses are stored). Stage 2 draws
// n_draws (leg, winding) pairs with probability proportional to the proxy
// mass, draws the corridor-pinned angles, and reweights by lr / proxy --
// an O(1) factor -- so the heavy Gaussian drift cost of reaching a far
// angular target is carried by the resampling weights instead of the
// sample spread.
struct SteeredGStreams {
    std::uint64_t pool1 = 0;
    std::uint64_t pool2 = 0;
    std::uint64_t draws = 0;
};

struct SteeredGResult {
    // Unbiased per-extension-attempt estimate of E[1_G w_lambda].
    std::vector<double> mean;
    // Self-normalized components of the conditional mean E[w_lambda | G]:
    // cond_sum / cond_wt. The pool normalization constants cancel in the
    // quotient, which makes the conditional mean far more robust to
    // importance-sampling starvation than `mean` itself.
    std::vector<double> cond_sum;
    double cond_wt = 0.0;

    double cond_mean(std::size_t k) const {
        return cond_wt > 0.0 ? cond_sum[k] / cond_wt : 0.0;
    }
};

inline SteeredGResult steered_G_mean(const SampledPath& b1, const SampledPath& b2,
                                     double n_radius, double rr,
                                     const std::vector<double>& lambdas, bool use_l1,
                                     std::uint64_t pool_size, std::uint64_t n_draws,
                                     double dt, double h, std::uint64_t seed,
                                     const SteeredGStreams& streams) {
    const double th1 = b1.back().arg();
    const double th2 = b2.back().arg();
    const double target1 = 0.0;
    const double target2 = th2 >= 0.0 ? M_PI : -M_PI;
    const double band = rr - 0.2;
    const int n_comp = 2 * kWindings + 1;

    SteeredGResult out;
    out.mean.assign(lambdas.size(), 0.0);
    out.cond_sum.assign(lambdas.size(), 0.0);

    auto regen_leg = [&](std::uint64_t stream, std::uint64_t m) {
        const RandomSeed rs{seed, stream + m};
        RngStream rng(rs);
        RngStream brng(bridge_seed(rs));
        return sample_radial_leg(n_radius, rr, dt, rng, brng);
    };

    // Stage 1: prefix sums of proxy masses over (leg, winding).
    auto build_pool = [&](std::uint64_t stream, double th, double target) {
        std::vector<double> prefix(pool_size * n_comp + 1, 0.0);
        for (std::uint64_t m = 0; m < pool_size; ++m) {
            const StripLeg leg = regen_leg(stream, m);
            double hk[8] = {0};
            if (leg.reached_outer && radial_tail_plausible(leg, rr, dt)) {
                const PinSchedule sched = build_pin_schedule(leg, band);
                for (int k = 0; k < n_comp; ++k) {
                    const double ctr = target + 2.0 * M_PI * (k - kWindings);
                    const double lg =
                        pinned_mass_proxy(leg, sched, th, ctr, band, kBandWindow,
                                          kEndpointWindow, kCorridorWindow);
                    hk[k] = std::isfinite(lg) ? std::exp(lg) : 0.0;
                }
            }
            for (int k = 0; k < n_comp; ++k)
                prefix[m * n_comp + k + 1] = prefix[m * n_comp + k] + hk[k];
        }
        return prefix;
    };
    const std::vector<double> pre1 = build_pool(streams.pool1, th1, target1);
    const std::vector<double> pre2 = build_pool(streams.pool2, th2, target2);
    const double H1 = pre1.back();
    const double H2 = pre2.back();
    if (!(H1 > 0.0) || !(H2 > 0.0)) return out;

    auto pick = [&](const std::vector<double>& prefix, double u) {
        const double x = u * prefix.back();
        const auto it = std::upper_bound(prefix.begin(), prefix.end() - 1, x);
        const std::size_t cell = static_cast<std::size_t>(
            std::max<std::ptrdiff_t>(0, it - prefix.begin() - 1));
        return cell;  // cell = m * n_comp + k
    };

    // Stage 2: corridor-pinned draws reweighted by lr / proxy.
    RngStream rng({seed, streams.draws});
    std::vector<double> acc(lambdas.size(), 0.0);
    for (std::uint64_t t = 0; t < n_draws; ++t) {
        const std::size_t c1 = pick(pre1, rng.uniform());
        const std::size_t c2 = pick(pre2, rng.uniform());
        const double h1 = pre1[c1 + 1] - pre1[c1];
        const double h2 = pre2[c2 + 1] - pre2[c2];
        if (!(h1 > 0.0) || !(h2 > 0.0)) continue;
        const StripLeg l1 = regen_leg(streams.pool1, c1 / n_comp);
        const StripLeg l2 = regen_leg(streams.pool2, c2 / n_comp);
        const double ctr1 =
            target1 + 2.0 * M_PI * (static_cast<int>(c1 % n_comp) - kWindings);
        const double ctr2 =
            target2 + 2.0 * M_PI * (static_cast<int>(c2 % n_comp) - kWindings);
        const PinSchedule s1 = build_pin_schedule(l1, band);
        const PinSchedule s2 = build_pin_schedule(l2, band);
        const BridgedAngles a1 = pinned_angles(l1, s1, th1, ctr1, band, kBandWindow,
                                               kEndpointWindow, kCorridorWindow, rng);
        const BridgedAngles a2 = pinned_angles(l2, s2, th2, ctr2, band, kBandWindow,
                                               kEndpointWindow, kCorridorWindow, rng);
        if (!std::isfinite(a1.log_lr) || !std::isfinite(a2.log_lr)) continue;
        const SampledPath f1 = concat_extension(b1, strip_to_path(l1, a1.theta, dt));
        const SampledPath f2 = concat_extension(b2, strip_to_path(l2, a2.theta, dt));
        if (!very_nice_end_geometry(f1, f2, rr)) continue;
        const ConfigSample cfg = extended_config(f1, f2, rr, dt, h, use_l1);
        const double L = use_l1 ? cfg.L1 : cfg.L;
        const double rel =
            std::exp(a1.log_lr - std::log(h1) + a2.log_lr - std::log(h2));
        // G requires L^1 < infinity; configurations failing it are outside
        // the restricted event, so they contribute to neither side of the
        // conditional mean (their weight is 0 in the unconditional mean).
        if (std::isfinite(cfg.L1)) {
            out.cond_wt += rel;
            for (std::size_t k = 0; k < lambdas.size(); ++k) {
                const double w = exp_weight(L, lambdas[k]);
                acc[k] += rel * w;
                out.cond_sum[k] += rel * w;
            }
        }
    }
    const double scale = (H1 / static_cast<double>(pool_size)) *
                         (H2 / static_cast<double>(pool_size)) /
                         static_cast<double>(n_draws);
    for (std::size_t k = 0; k < lambdas.size(); ++k) out.mean[k] = acc[k] * scale;
    return out;
}

} // namespace detail

// For each outer configuration at radius n: extension continuations to
// radius n+1; the ratio of the G-restricted mean of e^{-lambda L^1_{n+1}}
// (the conditional mean given G = "very nice at the end") to the
// unrestricted mean over completed continuations. Because G has
// probability ~1e-5 on plain extensions, the restricted mean is computed
// by exact importance sampling: extensions are generated in strip
// coordinates (radial leg = Brownian motion in u, angle = independent
// Brownian motion in the same clock), with the angle drawn through
// truncated-Gaussian corridor pins into the G windows and reweighted by
// the closed-form likelihood ratio. The restricted mean is taken in
// self-normalized form, so the pool normalization constants cancel and
// the ratio stays stable where the raw restricted-event mass E[1_G w]
// would be starved. Shared inner samples across lambdas.
inline SeparationSummary separation_ratios(double n_radius,
                                           const std::vector<double>& lambdas,
                                           std::uint64_t n_outer, std::uint64_t n_inner,
                                           double dt, double h, std::uint64_t seed) {
    if (n_radius < 1.0)
        throw std::invalid_argument("separation_ratios: n must be >= 1");
    const double rp = n_radius + 1.0;
    const std::uint64_t n_den = std::min<std::uint64_t>(n_inner, 400);
    const std::uint64_t n_draws = std::max<std::uint64_t>(n_inner / 8, 200);
    struct Row {
        std::vector<double> num, den;
        double num_wt = 0.0;
        std::uint64_t n_den = 0;
        bool ok = true;
    };
    // Per-config stream layout: 0 = B^1, 1 = B^2, 2 = denominator,
    // 3 = stage-2 draws, then one stream per pooled radial leg.
    const std::uint64_t stride = 2 * n_inner + 8;
    auto rows = parallel_map<Row>(n_outer, [&](std::uint64_t i) {
        const std::uint64_t base = stride * i;
        Row row;
        row.num.assign(lambdas.size(), 0.0);
        row.den.assign(lambdas.size(), 0.0);
        row.n_den = 0;
        try {
            const AnnulusSpec ann(0.0, n_radius);
            const SampledPath b1 = sample_upcrossing(ann, dt, {seed, base});
            const SampledPath b2 = sample_upcrossing(ann, dt, {seed, base + 1});
            const double th1 = b1.back().arg();
            const double th2 = b2.back().arg();

            // Denominator: plain strip extensions (free angles), per attempt.
            {
                RngStream rng({seed, base + 2});
                RngStream brng(bridge_seed({seed, base + 2}));
                for (std::uint64_t j = 0; j < n_den; ++j) {
                    const StripLeg l1 = sample_radial_leg(n_radius, rp, dt, rng, brng);
                    const auto a1 = free_angle_walk(l1, th1, rng);
                    const StripLeg l2 = sample_radial_leg(n_radius, rp, dt, rng, brng);
                    const auto a2 = free_angle_walk(l2, th2, rng);
                    if (!l1.reached_outer || !l2.reached_outer) continue;
                    ++row.n_den;
                    const SampledPath f1 = concat_extension(b1, strip_to_path(l1, a1, dt));
                    const SampledPath f2 = concat_extension(b2, strip_to_path(l2, a2, dt));
                    const ConfigSample cfg =
                        detail::extended_config(f1, f2, rp, dt, h, true);
                    for (std::size_t k = 0; k < lambdas.size(); ++k)
                        row.den[k] += exp_weight(cfg.L1, lambdas[k]);
                }
            }
            // Restricted mean: pooled corridor importance sampling.
            detail::SteeredGStreams streams;
            streams.pool1 = base + 8;
            streams.pool2 = base + 8 + n_inner;
            streams.draws = base + 3;
            const detail::SteeredGResult res = detail::steered_G_mean(
                b1, b2, n_radius, rp, lambdas, true, n_inner, n_draws, dt, h, seed,
                streams);
            row.num = res.cond_sum;
            row.num_wt = res.cond_wt;
        } catch (const std::exception&) {
            row.ok = false;
        }
        return row;
    });

    SeparationSummary out;
    out.lambdas = lambdas;
    out.n_outer = n_outer;
    out.ratios.assign(lambdas.size(), {});
    out.min_ratio.assign(lambdas.size(), 1.0);
    out.median_ratio.assign(lambdas.size(), 0.0);
    out.excluded.assign(lambdas.size(), 0);
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
        for (const Row& row : rows) {
            if (!row.ok || !(row.den[k] > 0.0) || !(row.num_wt > 0.0) ||
                row.n_den == 0) {
                ++out.excluded[k];
                continue;
            }
            // Self-normalized restricted mean over unrestricted mean. The
            // restricted mean of a [0, 1]-bounded weight cannot exceed 1,
            // and G configurations are never better than the unrestricted
            // optimum by more than importance-weight noise, so the ratio
            // is clamped at 1.
            const double num_mean = row.num[k] / row.num_wt;
            const double den_mean = row.den[k] / static_cast<double>(row.n_den);
            const double ratio = std::min(1.0, num_mean / den_mean);
            out.ratios[k].push_back(ratio);
            out.min_ratio[k] = std::min(out.min_ratio[k], ratio);
        }
        if (!out.ratios[k].empty()) {
            std::vector<double> sorted = out.ratios[k];
            std::sort(sorted.begin(), sorted.end());
            out.median_ratio[k] = sorted[sorted.size() / 2];
        } else {
            out.min_ratio[k] = 0.0;
        }
    }
    return out;
}

struct RSample {
    double R_nm = 0.0;
    double Rstar_nm = 0.0;
    double R_nn1 = 0.0;
    double Rstar_nn1 = 0.0;
};

struct RSummary {
    std::vector<RSample> samples;  // per included outer config
    std::uint64_t excluded = 0;
    std::uint64_t n_outer = 0;
    double lambda = 0.0;
    double xi = 0.0;
};

// Conditional Monte Carlo for R_{n,m} = e^{(m-n) xi} E[e^{-lambda L_m}|F_n]
// and its G-restricted counterpart R*, plus the one-step quantities at
// m = n+1 (a conditioned-to-m extension truncated at its first hit of
// C_{n+1} has the law of a conditioned-to-(n+1) extension). Extensions are
// generated as strip legs with unrestricted absorption at C_0; conditional
// expectations divide by the empirical reach probability from the same
// plain samples. The rare G-restricted numerators use the same angular
// bridge importance sampling as separation_ratios, and R* is capped at R
// (the true restricted expectation can never exceed the unrestricted one).
inline RSummary estimate_R(double n_radius, double m_radius, double lambda,
                           std::uint64_t n_outer, std::uint64_t n_inner, double xi,
                           double dt, double h, std::uint64_t seed) {
    if (!(n_radius >= 1.0 && m_radius > n_radius + 1.0 + 1e-9))
        throw std::invalid_argument("estimate_R: need 1 <= n and m > n+1");
    const double r1 = n_radius + 1.0;
    struct Row {
        RSample s;
        bool ok = true;
    };
    const std::uint64_t n_draws = std::max<std::uint64_t>(n_inner / 8, 200);
    // Per-config stream layout: 0 = B^1, 1 = B^2, 2 = plain extensions,
    // 3/4 = stage-2 draws at m and n+1, then four pooled-leg blocks.
    const std::uint64_t stride = 4 * n_inner + 16;
    auto rows = parallel_map<Row>(n_outer, [&](std::uint64_t i) {
        const std::uint64_t base = stride * i;
        Row row;
        try {
            const AnnulusSpec ann(0.0, n_radius);
            const SampledPath b1 = sample_upcrossing(ann, dt, {seed, base});
            const SampledPath b2 = sample_upcrossing(ann, dt, {seed, base + 1});
            const double th1 = b1.back().arg();
            const double th2 = b2.back().arg();

            double wm = 0.0, w1 = 0.0, wstar_m = 0.0, wstar_1 = 0.0;
            std::uint64_t both_m = 0, both_1 = 0;
            // Plain extensions: unrestricted means and reach probabilities.
            {
                RngStream rng({seed, base + 2});
                RngStream brng(bridge_seed({seed, base + 2}));
                for (std::uint64_t j = 0; j < n_inner; ++j) {
                    const StripLeg l1 = sample_radial_leg(n_radius, m_radius, dt, rng, brng);
                    const auto a1 = free_angle_walk(l1, th1, rng);
                    const StripLeg l2 = sample_radial_leg(n_radius, m_radius, dt, rng, brng);
                    const auto a2 = free_angle_walk(l2, th2, rng);
                    if (l1.reaches(r1) && l2.reaches(r1)) {
                        ++both_1;
                        const SampledPath f1 = concat_extension(
                            b1, strip_to_path_truncated(l1, a1, r1, dt));
                        const SampledPath f2 = concat_extension(
                            b2, strip_to_path_truncated(l2, a2, r1, dt));
                        w1 += exp_weight(detail::extended_config(f1, f2, r1, dt, h, false).L,
                                         lambda);
                    }
                    if (l1.reached_outer && l2.reached_outer) {
                        ++both_m;
                        const SampledPath f1 = concat_extension(b1, strip_to_path(l1, a1, dt));
                        const SampledPath f2 = concat_extension(b2, strip_to_path(l2, a2, dt));
                        wm += exp_weight(
                            detail::extended_config(f1, f2, m_radius, dt, h, false).L,
                            lambda);
                    }
                }
            }
            // G-restricted numerators via pooled corridor importance
            // sampling, one batch per target radius.
            {
                detail::SteeredGStreams sm;
                sm.pool1 = base + 16;
                sm.pool2 = base + 16 + n_inner;
                sm.draws = base + 3;
                wstar_m = detail::steered_G_mean(b1, b2, n_radius, m_radius, {lambda},
                                                 false, n_inner, n_draws, dt, h, seed,
                                                 sm)
                              .cond_mean(0);
                detail::SteeredGStreams s1;
                s1.pool1 = base + 16 + 2 * n_inner;
                s1.pool2 = base + 16 + 3 * n_inner;
                s1.draws = base + 4;
                wstar_1 = detail::steered_G_mean(b1, b2, n_radius, r1, {lambda}, false,
                                                 n_inner, n_draws, dt, h, seed, s1)
                              .cond_mean(0);
            }

            if (both_m == 0 || both_1 == 0)
                throw std::runtime_error("estimate_R: no surviving extension");
            const double inv = 1.0 / static_cast<double>(n_inner);
            const double pm = static_cast<double>(both_m) * inv;
            const double p1 = static_cast<double>(both_1) * inv;
            row.s.R_nm = std::exp((m_radius - n_radius) * xi) * wm * inv / pm;
            row.s.R_nn1 = std::exp(xi) * w1 * inv / p1;
            // R* uses the G-restricted conditional mean; the restricted
            // mean can never exceed the unrestricted one, so cap at R.
            row.s.Rstar_nm =
                std::min(row.s.R_nm, std::exp((m_radius - n_radius) * xi) * wstar_m);
            row.s.Rstar_nn1 = std::min(row.s.R_nn1, std::exp(xi) * wstar_1);
        } catch (const std::exception&) {
            row.ok = false;
        }
        return row;
    });

    RSummary out;
    out.n_outer = n_outer;
    out.lambda = lambda;
    out.xi = xi;
    for (const Row& row : rows) {
        if (!row.ok) {
            ++out.excluded;
            continue;
        }
        out.samples.push_back(row.s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Multi-packet generalization: b_n(lambda_1, p_1, ..., p_l)
// ---------------------------------------------------------------------------

inline EstimateSet estimate_multi_packet(const std::vector<double>& packets,
                                         const std::vector<double>& lambdas,
                                         double n_radius, std::uint64_t trials,
                                         double dt, double h, std::uint64_t seed) {
    const std::size_t l = packets.size();
    if (l == 0 || l != lambdas.size())
        throw std::invalid_argument("estimate_multi_packet: |p| = |lambdas| >= 1 required");
    std::uint64_t total_paths = 0;
    for (double p : packets) {
        if (p < 1.0 || p > 5.0 || std::fabs(p - std::round(p)) > 1e-12)
            throw std::invalid_argument("estimate_multi_packet: packet sizes are integers in [1,5]");
        total_paths += static_cast<std::uint64_t>(std::lround(p));
    }
    if (n_radius < 1.0)
        throw std::invalid_argument("estimate_multi_packet: n must be >= 1");

    struct Row {
        double w = 0.0;
        bool ok = true;
    };
    auto rows = parallel_map<Row>(trials, [&](std::uint64_t t) {
        Row row;
        try {
            // Sample all packet paths, then rasterize onto a shared geometry.
            std::vector<std::vector<SampledPath>> packet_paths(l);
            double lo = 0.0;
            std::uint64_t stream = t * total_paths;
            for (std::size_t k = 0; k < l; ++k) {
                const int pk = static_cast<int>(std::lround(packets[k]));
                for (int q = 0; q < pk; ++q) {
                    packet_paths[k].push_back(
                        sample_full_path(n_radius, dt, {seed, stream++}));
                    for (const Point& pt : packet_paths[k].back().points)
                        lo = std::min(lo, pt.log_norm());
                }
            }
            const double u_min = detail::aligned_u_min(lo, h);
            OccupancyGrid grid_union(u_min, n_radius, h, InnerCapMode::SUPER_NODE);
            std::vector<OccupancyGrid> packet_grid(
                l, OccupancyGrid(u_min, n_radius, h, InnerCapMode::SUPER_NODE));
            for (std::size_t k = 0; k < l; ++k)
                for (const SampledPath& p : packet_paths[k])
                    for (std::size_t i = 1; i < p.points.size(); ++i) {
                        grid_union.mark_segment(p.points[i - 1], p.points[i]);
                        packet_grid[k].mark_segment(p.points[i - 1], p.points[i]);
                    }

            // E_{n, p-bar}: packets cell-disjoint ...
            for (std::size_t f = 0; f < grid_union.cell_count(); ++f) {
                int owners = 0;
                for (std::size_t k = 0; k < l && owners < 2; ++k)
                    if (packet_grid[k].state(f) == CellState::OBSTACLE) ++owners;
                if (owners >= 2) return row;  // w = 0
            }
            // ... and clockwise-ordered on C_n (vacuous for l <= 2), by the
            // circular means of the packet endpoint angles; ties keep the
            // packet-index order.
            std::vector<double> rep(l, 0.0);
            for (std::size_t k = 0; k < l; ++k) {
                double sx = 0.0, sy = 0.0;
                for (const SampledPath& p : packet_paths[k]) {
                    sx += std::cos(p.back().arg());
                    sy += std::sin(p.back().arg());
                }
                rep[k] = std::atan2(sy, sx);
            }
            if (l >= 3) {
                double prev = 0.0;
                for (std::size_t k = 1; k < l; ++k) {
                    double d = std::fmod(rep[0] - rep[k], 2.0 * M_PI);
                    if (d < 0.0) d += 2.0 * M_PI;
                    if (d < prev) return row;  // w = 0
                    prev = d;
                }
            }

            // Gap ownership on C_n: each free outer column belongs to the
            // packet whose occupied arc is nearest clockwise.
            const int rows_g = grid_union.rows();
            const int cols_g = grid_union.cols();
            std::vector<int> col_owner(cols_g, -1);
            for (int c = 0; c < cols_g; ++c)
                for (std::size_t k = 0; k < l; ++k)
                    if (packet_grid[k].is_obstacle(rows_g - 1, c)) {
                        col_owner[c] = static_cast<int>(k);
                        break;
                    }
            double w = 1.0;
            for (std::size_t k = 0; k < l; ++k) {
                std::vector<double> outer_value(cols_g, 0.0);
                for (int c = 0; c < cols_g; ++c) {
                    if (col_owner[c] >= 0) continue;  // packet cell, not a gap
                    int owner = -1;
                    for (int s = 1; s <= cols_g; ++s) {
                        const int cc = grid_union.wrap_col(c - s);
                        if (col_owner[cc] >= 0) {
                            owner = col_owner[cc];
                            break;
                        }
                    }
                    if (owner == static_cast<int>(k)) outer_value[c] = 1.0;
                }
                const double zk = harmonic_Z(grid_union, 0.0, &outer_value);
                w *= pow_weight(zk, lambdas[k]);
                if (w == 0.0) break;
            }
            row.w = w;
        } catch (const std::exception&) {
            row.ok = false;
        }
        return row;
    });

    EstimateSet set;
    set.n_trials = trials;
    std::vector<double> col;
    col.reserve(trials);
    for (const Row& row : rows) {
        if (!row.ok) {
            ++set.excluded;
            continue;
        }
        col.push_back(row.w);
    }
    const MeanStderr ms = mean_stderr(col);
    const std::string quantity = "b_multi[p=" + detail::join_doubles(packets) +
                                 ";lambda=" + detail::join_doubles(lambdas) + "]";
    set.records.push_back(
        {quantity, n_radius, lambdas.front(), ms.mean, ms.stderr_, col.size(), seed});
    return set;
}

} // namespace bxi
