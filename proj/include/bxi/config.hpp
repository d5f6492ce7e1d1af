#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bxi/domain.hpp"
#include "bxi/grid.hpp"
#include "bxi/harmonic.hpp"
#include "bxi/sampler.hpp"

namespace bxi {

// One sampled two-path configuration in A(0, r): the pair of upcrossings
// B^1, B^2, optionally the full Brownian motions Y^1, Y^2 they came from,
// and the pi-extremal distances of the two path domains.
struct ConfigSample {
    double r = 0.0;
    double dt = 0.0;
    double h = 0.0;
    SampledPath B1, B2;
    std::optional<SampledPath> Y1, Y2;
    double end1 = 0.0, end2 = 0.0;  // endpoint angles on C_r
    double L1 = kInfiniteL, L2 = kInfiniteL, L = kInfiniteL;
    bool has_O2 = false;
    int discarded_inner_arcs = 0;
    bool flag_En = false;  // meaningful only when full paths were sampled
    bool flag_Hn = false;  // idem
};

enum class FilterKind {
    NONE,
    E_N,
    E_N_EPS,
    H_N,
    DELTA_NICE,
    VERY_NICE_END,
    NICE_BEGIN_VERY_NICE_END,
};

enum class NiceWhere { BEGIN, END, BOTH };

struct EventFilter {
    FilterKind kind = FilterKind::NONE;
    double eps = 0.1;    // for E_N_EPS, in (0, 1/4)
    double delta = 0.1;  // for the niceness filters, in (0, 1/4)
    NiceWhere where = NiceWhere::BOTH;

    static EventFilter none() { return {}; }
    static EventFilter e_n() { return {FilterKind::E_N}; }
    static EventFilter e_n_eps(double eps) {
        if (!(eps > 0.0 && eps < 0.25))
            throw std::invalid_argument("EventFilter: eps must be in (0, 1/4)");
        return {FilterKind::E_N_EPS, eps};
    }
    static EventFilter h_n() { return {FilterKind::H_N}; }
    static EventFilter delta_nice(double delta, NiceWhere where = NiceWhere::BOTH) {
        if (!(delta > 0.0 && delta < 0.25))
            throw std::invalid_argument("EventFilter: delta must be in (0, 1/4)");
        return {FilterKind::DELTA_NICE, 0.1, delta, where};
    }
    static EventFilter very_nice_end() { return {FilterKind::VERY_NICE_END}; }
    static EventFilter nice_begin_very_nice_end(double delta) {
        auto f = delta_nice(delta, NiceWhere::BEGIN);
        f.kind = FilterKind::NICE_BEGIN_VERY_NICE_END;
        return f;
    }

    bool needs_full_paths() const {
        return kind == FilterKind::E_N || kind == FilterKind::E_N_EPS ||
               kind == FilterKind::H_N;
    }

    std::string name() const {
        switch (kind) {
            case FilterKind::NONE: return "none";
            case FilterKind::E_N: return "E_n";
            case FilterKind::E_N_EPS: return "E_n_eps";
            case FilterKind::H_N: return "H_n";
            case FilterKind::DELTA_NICE: return "delta_nice";
            case FilterKind::VERY_NICE_END: return "very_nice_end";
            case FilterKind::NICE_BEGIN_VERY_NICE_END: return "nice_begin_very_nice_end";
        }
        return "?";
    }
};

// Rasterizes B^1 and B^2 over A(0, r), extracts the path domains O^1/O^2
// and computes L1, L2, L. Throws on malformed rasters or solver failure.
// `l1_only` skips the O^2 solve (for quantities that only involve L^1).
inline void attach_domains(ConfigSample& cfg, bool l1_only = false) {
    std::vector<const SampledPath*> paths{&cfg.B1, &cfg.B2};
    OccupancyGrid grid = rasterize(paths, 0.0, cfg.r, cfg.h);
    auto [o1, o2] = extract_domains(grid, cfg.end1, cfg.end2);
    cfg.L1 = kInfiniteL;
    cfg.L2 = kInfiniteL;
    cfg.discarded_inner_arcs = 0;
    if (o1) {
        cfg.L1 = pi_extremal_distance(*o1).L;
        cfg.discarded_inner_arcs += o1->discarded_inner_arcs;
    }
    cfg.has_O2 = o2.has_value();
    if (o2 && !l1_only) {
        cfg.L2 = pi_extremal_distance(*o2).L;
        cfg.discarded_inner_arcs += o2->discarded_inner_arcs;
    }
    cfg.L = std::min(cfg.L1, cfg.L2);
}

// Samples one configuration. Per-trial streams are (seed, 4*trial + j).
// When `with_full_paths`, B^j is the terminal upcrossing part of Y^j and
// the E_n / H_n flags are evaluated; `extra_levels` adds tracked circles
// (e.g. C_{-1+eps} for the E_{n,eps} filter).
inline ConfigSample build_config(double r, double dt, double h, std::uint64_t seed,
                                 std::uint64_t trial, bool with_full_paths,
                                 const std::vector<double>& extra_levels = {}) {
    if (r < 1.0) throw std::invalid_argument("build_config: r must be >= 1");
    ConfigSample cfg;
    cfg.r = r;
    cfg.dt = dt;
    cfg.h = h;
    if (with_full_paths) {
        cfg.Y1 = sample_full_path(r, dt, {seed, 4 * trial}, extra_levels);
        cfg.Y2 = sample_full_path(r, dt, {seed, 4 * trial + 1}, extra_levels);
        cfg.B1 = extract_upcrossing_part(*cfg.Y1);
        cfg.B2 = extract_upcrossing_part(*cfg.Y2);
        cfg.flag_En = !cfg.Y1->touched(-1.0) && !cfg.Y2->touched(-1.0);
        const AnnulusSpec ring(-1.0, 0.0);
        cfg.flag_Hn = !loop_in_annulus(*cfg.Y1, ring) && !loop_in_annulus(*cfg.Y2, ring);
    } else {
        const AnnulusSpec ann(0.0, r);
        cfg.B1 = sample_upcrossing(ann, dt, {seed, 4 * trial});
        cfg.B2 = sample_upcrossing(ann, dt, {seed, 4 * trial + 1});
    }
    cfg.end1 = cfg.B1.back().arg();
    cfg.end2 = cfg.B2.back().arg();
    attach_domains(cfg);
    return cfg;
}

namespace detail {

inline double point_dist(const Point& a, const Point& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

// The path-geometry bullets of "delta-nice at the beginning" for a pair of
// upcrossings of A(inner_u, .): endpoint separation, initial confinement at
// dyadic scales eta in {delta/2, delta/4, delta/8}, and avoidance of the
// thin annuli A(inner_u, inner_u + 4 eta) after the respective first exits.
inline bool nice_begin_geometry(const SampledPath& b1, const SampledPath& b2,
                                double delta, double inner_u) {
    const double scale = std::exp(inner_u);
    if (point_dist(b1.front(), b2.front()) <= std::pow(delta, 1.0 / 8.0) * scale)
        return false;
    for (const SampledPath* b : {&b1, &b2}) {
        const std::size_t i_one = b->first_index_at(inner_u + 1.0);
        for (double eta : {delta / 2.0, delta / 4.0, delta / 8.0}) {
            const std::size_t i_eta = b->first_index_at(inner_u + std::sqrt(eta));
            const double rad = std::pow(eta, 0.25) * scale;
            for (std::size_t i = 0; i <= std::min(i_eta, b->size() - 1); ++i)
                if (point_dist(b->points[i], b->front()) > rad) return false;
            const double band = inner_u + 4.0 * eta;
            for (std::size_t i = i_eta + 1; i <= std::min(i_one, b->size() - 1); ++i) {
                const double u = b->points[i].log_norm();
                if (u > inner_u && u < band) return false;
            }
        }
        const double band = inner_u + 4.0 * delta;
        for (std::size_t i = i_one + 1; i < b->size(); ++i) {
            const double u = b->points[i].log_norm();
            if (u > inner_u && u < band) return false;
        }
    }
    return true;
}

// The path-geometry bullets of "very nice at the end" for upcrossings of
// A(0, r): terminal confinement to A(r-1/2, r), the two paths pinned to
// opposite 1/10-wedges near C_r, endpoint angles within 1/20 of 0 and pi.
inline bool very_nice_end_geometry(const SampledPath& b1, const SampledPath& b2,
                                   double r) {
    const double tol = hit_tolerance(b1.dt);
    for (const SampledPath* b : {&b1, &b2}) {
        const std::size_t i_third = b->first_index_at(r - 1.0 / 3.0);
        for (std::size_t i = i_third + 1; i < b->size(); ++i)
            if (b->points[i].log_norm() < r - 0.5 - tol) return false;
    }
    const double wedge_u = r - 0.2;
    for (std::size_t i = 0; i < b1.size(); ++i)
        if (b1.points[i].log_norm() > wedge_u &&
            std::fabs(b1.points[i].arg()) > 0.1)
            return false;
    for (std::size_t i = 0; i < b2.size(); ++i)
        if (b2.points[i].log_norm() > wedge_u &&
            std::fabs(std::fabs(b2.points[i].arg()) - M_PI) > 0.1)
            return false;
    if (std::fabs(b1.back().arg()) > 0.05) return false;
    if (std::fabs(std::fabs(b2.back().arg()) - M_PI) > 0.05) return false;
    return true;
}

} // namespace detail

// delta-nice classifier; "end" applies the beginning conditions to the
// inverted-and-reversed pair (an upcrossing of A(-r, 0)).
inline bool classify_nice(const ConfigSample& cfg, double delta, NiceWhere where) {
    if (!(delta > 0.0 && delta < 0.25))
        throw std::invalid_argument("classify_nice: delta must be in (0, 1/4)");
    if (!std::isfinite(cfg.L1)) return false;
    if (where == NiceWhere::BEGIN || where == NiceWhere::BOTH)
        if (!detail::nice_begin_geometry(cfg.B1, cfg.B2, delta, 0.0)) return false;
    if (where == NiceWhere::END || where == NiceWhere::BOTH) {
        const SampledPath inv1 = invert_reverse(cfg.B1);
        const SampledPath inv2 = invert_reverse(cfg.B2);
        if (!detail::nice_begin_geometry(inv1, inv2, delta, -cfg.r)) return false;
    }
    return true;
}

inline bool classify_very_nice_end(const ConfigSample& cfg) {
    if (!std::isfinite(cfg.L1)) return false;
    return detail::very_nice_end_geometry(cfg.B1, cfg.B2, cfg.r);
}

// Evaluates a filter indicator on a configuration.
inline bool filter_passes(const ConfigSample& cfg, const EventFilter& filter) {
    switch (filter.kind) {
        case FilterKind::NONE:
            return true;
        case FilterKind::E_N:
        case FilterKind::E_N_EPS:
        case FilterKind::H_N:
            if (!cfg.Y1 || !cfg.Y2)
                throw std::logic_error("filter_passes: filter needs full paths");
            if (filter.kind == FilterKind::E_N) return cfg.flag_En;
            if (filter.kind == FilterKind::H_N) return cfg.flag_Hn;
            return !cfg.Y1->touched(-1.0 + filter.eps) &&
                   !cfg.Y2->touched(-1.0 + filter.eps);
        case FilterKind::DELTA_NICE:
            return classify_nice(cfg, filter.delta, filter.where);
        case FilterKind::VERY_NICE_END:
            return classify_very_nice_end(cfg);
        case FilterKind::NICE_BEGIN_VERY_NICE_END:
            return classify_nice(cfg, filter.delta, NiceWhere::BEGIN) &&
                   classify_very_nice_end(cfg);
    }
    return false;
}

// Concatenation of an upcrossing of A(0, r) with a conditioned extension to
// C_{r'} — an upcrossing of A(0, r'). The shared junction point appears once.
inline SampledPath concat_extension(const SampledPath& up, const SampledPath& ext) {
    SampledPath out;
    out.dt = up.dt;
    out.kind = PathKind::UPCROSSING;
    out.points = up.points;
    const std::size_t offset = up.points.size() - 1;
    out.points.insert(out.points.end(), ext.points.begin() + 1, ext.points.end());
    out.hit_indices = up.hit_indices;
    for (const auto& [u, idx] : ext.hit_indices)
        if (!out.hit_indices.count(u)) out.hit_indices[u] = idx + offset;
    return out;
}

} // namespace bxi
