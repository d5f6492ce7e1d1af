#pragma once

#include <cmath>
#include <queue>
#include <stdexcept>
#include <vector>

#include "bxi/domain.hpp"
#include "bxi/harmonic.hpp"

namespace bxi {

// Slack contracts for the three extremal-distance lemmas. The disk-removal
// bound is the lemma's own constant; the subarc and serial-cut bounds come
// from the area of the auxiliary metric bump used in the respective proofs
// ((1/delta)^2 times area 2*pi*delta, resp. 4*pi*delta, times pi).
inline constexpr double kDiskRemovalSlackBound = 6.0 * M_PI * M_PI;
inline double subarc_slack_bound(double delta) { return 2.0 * M_PI * M_PI / delta; }
inline double serial_cut_slack_bound(double delta) { return 4.0 * M_PI * M_PI / delta; }

namespace detail {

inline double dist_to_cells(const PathDomainSpec& dom, const CylPoint& z,
                            const std::vector<std::size_t>& cells) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t f : cells) best = std::min(best, cyl_distance(z, dom.cell_pos(f)));
    return best;
}

// The two junction points of d1 with the side boundaries: z1 on the d3
// side, z2 on the d4 side (arc-end positions on C_{u_min}).
inline std::pair<CylPoint, CylPoint> corner_points(const PathDomainSpec& dom) {
    if (dom.d1_cols.empty())
        throw std::invalid_argument("corner_points: domain has empty inner arc");
    const OccupancyGrid& g = *dom.grid;
    CylPoint first{g.u_min(), g.theta_of_col(dom.d1_cols.front())};
    CylPoint last{g.u_min(), g.theta_of_col(dom.d1_cols.back())};
    if (!dom.d3_cells.empty() &&
        dist_to_cells(dom, last, dom.d3_cells) < dist_to_cells(dom, first, dom.d3_cells))
        std::swap(first, last);
    return {first, last};  // {z1 (d3 side), z2 (d4 side)}
}

} // namespace detail

struct DiskRemovalResult {
    double L_before = 0.0;
    double L_after = 0.0;
    double slack = 0.0;
    CylPoint z1, z2;
};

// Lemma "disk removal": deleting the delta-disks around the two inner
// corner points raises L by at most 6*pi^2. Hypotheses (checked):
// delta < width - 1, and the 4*delta-disk around each corner avoids the
// opposite side boundary.
inline DiskRemovalResult verify_disk_removal(const PathDomainSpec& domain, double delta,
                                             double tol = kSolverTol) {
    const OccupancyGrid& g = *domain.grid;
    if (!(delta > 0.0) || delta >= (g.u_max() - g.u_min()) - 1.0)
        throw std::invalid_argument("verify_disk_removal: need 0 < delta < width - 1");
    auto [z1, z2] = detail::corner_points(domain);
    if (cyl_distance(z1, z2) < 4.0 * delta)
        throw std::invalid_argument("verify_disk_removal: corner points closer than 4*delta");
    if (!domain.d4_cells.empty() &&
        detail::dist_to_cells(domain, z1, domain.d4_cells) < 4.0 * delta)
        throw std::invalid_argument("verify_disk_removal: D(z1,4delta) meets d4");
    if (!domain.d3_cells.empty() &&
        detail::dist_to_cells(domain, z2, domain.d3_cells) < 4.0 * delta)
        throw std::invalid_argument("verify_disk_removal: D(z2,4delta) meets d3");

    DiskRemovalResult res;
    res.z1 = z1;
    res.z2 = z2;
    res.L_before = pi_extremal_distance(domain, tol).L;

    PathDomainSpec cut = domain;
    for (std::size_t f = 0; f < cut.component.size(); ++f) {
        if (!cut.component[f]) continue;
        const CylPoint p = cut.cell_pos(f);
        if (cyl_distance(p, z1) <= delta || cyl_distance(p, z2) <= delta)
            cut.component[f] = 0;
    }
    std::vector<int> kept;
    for (int c : cut.d1_cols) {
        const CylPoint p{g.u_min(), g.theta_of_col(c)};
        if (cyl_distance(p, z1) > delta && cyl_distance(p, z2) > delta) kept.push_back(c);
    }
    cut.d1_cols = std::move(kept);
    res.L_after = pi_extremal_distance(cut, tol).L;
    res.slack = res.L_after - res.L_before;
    return res;
}

struct SubarcResult {
    double L_full = 0.0;
    double L_subarc = 0.0;
    double slack = 0.0;
    std::vector<int> v_cols;
};

// Lemma "subarc": restricting the inner Dirichlet arc to a sub-arc V costs
// at most c(delta) when V has length >= delta, keeps distance > delta from
// the side boundaries, and its delta-neighborhood disconnects d3 from d4
// inside the first delta-slab. V is given as a fraction range of d1.
inline SubarcResult verify_subarc(const PathDomainSpec& domain, double frac_lo,
                                  double frac_hi, double delta,
                                  double tol = kSolverTol) {
    const OccupancyGrid& g = *domain.grid;
    if (domain.d1_cols.empty())
        throw std::invalid_argument("verify_subarc: empty inner arc");
    if (!(0.0 <= frac_lo && frac_lo < frac_hi && frac_hi <= 1.0))
        throw std::invalid_argument("verify_subarc: bad fraction range");
    const int n = static_cast<int>(domain.d1_cols.size());
    const int lo = std::min(n - 1, static_cast<int>(std::floor(frac_lo * n)));
    const int hi = std::max(lo, static_cast<int>(std::ceil(frac_hi * n)) - 1);
    std::vector<int> v_cols(domain.d1_cols.begin() + lo, domain.d1_cols.begin() + hi + 1);

    if (static_cast<double>(v_cols.size()) * g.dtheta() < delta)
        throw std::invalid_argument("verify_subarc: V shorter than delta");
    std::vector<CylPoint> v_pts;
    for (int c : v_cols) v_pts.push_back({g.u_min(), g.theta_of_col(c)});
    auto min_dist = [&](const std::vector<std::size_t>& cells) {
        double best = std::numeric_limits<double>::infinity();
        for (const CylPoint& p : v_pts)
            best = std::min(best, detail::dist_to_cells(domain, p, cells));
        return best;
    };
    if (!domain.d3_cells.empty() && min_dist(domain.d3_cells) <= delta)
        throw std::invalid_argument("verify_subarc: V within delta of d3");
    if (!domain.d4_cells.empty() && min_dist(domain.d4_cells) <= delta)
        throw std::invalid_argument("verify_subarc: V within delta of d4");

    // Delta-slab disconnection check: inside the slab {u - u_min < delta},
    // remove the delta-neighborhood of V; the two sides must not connect.
    {
        const int cols = g.cols();
        std::vector<std::uint8_t> slab(g.cell_count(), 0);
        for (std::size_t f = 0; f < g.cell_count(); ++f) {
            if (!domain.component[f]) continue;
            const int r = static_cast<int>(f) / cols;
            if (g.u_of_row(r) - g.u_min() >= delta) continue;
            const CylPoint p = domain.cell_pos(f);
            bool near_v = false;
            for (const CylPoint& q : v_pts)
                if (cyl_distance(p, q) <= delta) {
                    near_v = true;
                    break;
                }
            if (!near_v) slab[f] = 1;
        }
        auto side_cells = [&](const std::vector<std::size_t>& cluster,
                              bool before_v) {
            std::vector<std::size_t> side;
            if (!cluster.empty()) {
                for (std::size_t f : cluster)
                    if (slab[f]) side.push_back(f);
            } else {
                // No obstacle sides (e.g. rectangle): use the row-1 cells
                // over the d1 columns on the respective side of V.
                const auto begin = domain.d1_cols.begin();
                auto range_lo = before_v ? begin : begin + hi + 1;
                auto range_hi = before_v ? begin + lo : domain.d1_cols.end();
                for (auto it = range_lo; it != range_hi; ++it) {
                    const std::size_t f = g.index(1, *it);
                    if (slab[f]) side.push_back(f);
                }
            }
            return side;
        };
        const auto side_a = side_cells(domain.d3_cells, true);
        const auto side_b = side_cells(domain.d4_cells, false);
        std::vector<std::uint8_t> seen(g.cell_count(), 0);
        std::queue<std::size_t> q;
        for (std::size_t f : side_a)
            if (!seen[f]) {
                seen[f] = 1;
                q.push(f);
            }
        while (!q.empty()) {
            const std::size_t f = q.front();
            q.pop();
            const int r = static_cast<int>(f) / cols;
            const int c = static_cast<int>(f) % cols;
            const int nr[4] = {r - 1, r + 1, r, r};
            const int nc[4] = {c, c, g.wrap_col(c - 1), g.wrap_col(c + 1)};
            for (int k = 0; k < 4; ++k) {
                if (nr[k] < 0 || nr[k] >= g.rows()) continue;
                const std::size_t nf = g.index(nr[k], nc[k]);
                if (slab[nf] && !seen[nf]) {
                    seen[nf] = 1;
                    q.push(nf);
                }
            }
        }
        for (std::size_t f : side_b)
            if (seen[f])
                throw std::invalid_argument(
                    "verify_subarc: delta-neighborhood of V fails to disconnect the slab");
    }

    SubarcResult res;
    res.v_cols = v_cols;
    res.L_full = pi_extremal_distance(domain, tol).L;
    PathDomainSpec sub = domain;
    sub.d1_cols = std::move(v_cols);
    res.L_subarc = pi_extremal_distance(sub, tol).L;
    res.slack = res.L_subarc - res.L_full;
    res.v_cols = sub.d1_cols;
    return res;
}

struct SerialCutResult {
    double L = 0.0;
    double L1 = 0.0;
    double L2 = 0.0;
    double slack = 0.0;  // L - (L1 + L2); contract: -tol <= slack <= C(delta)
    std::vector<int> v_cols;
};

// Lemma "serial cut": cutting the domain along the unique cross-cut V at
// abscissa s satisfies L1 + L2 <= L <= L1 + L2 + C(delta), provided the
// side boundaries near the cut have diameter < delta^{1/6} and mutual
// distance >= delta^{1/7}.
inline SerialCutResult verify_serial_cut(const PathDomainSpec& domain, double s,
                                         double delta, double tol = kSolverTol) {
    const OccupancyGrid& g = *domain.grid;
    const int cols = g.cols();
    const double width = g.u_max() - g.u_min();
    const double s_rel = s - g.u_min();
    if (!(s_rel > 1.0 && s_rel < width - 1.0))
        throw std::invalid_argument("verify_serial_cut: need 1 < s - u_min < width - 1");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("verify_serial_cut: delta out of range");

    // Hypotheses on the side boundaries restricted to the cut slab.
    auto near_cut = [&](const std::vector<std::size_t>& cells) {
        std::vector<std::size_t> out;
        for (std::size_t f : cells) {
            const double u = g.u_of_row(static_cast<int>(f) / cols);
            if (std::fabs(u - s) < delta) out.push_back(f);
        }
        return out;
    };
    const auto d3p = near_cut(domain.d3_cells);
    const auto d4p = near_cut(domain.d4_cells);
    auto diameter = [&](const std::vector<std::size_t>& cells) {
        double d = 0.0;
        for (std::size_t i = 0; i < cells.size(); ++i)
            for (std::size_t j = i + 1; j < cells.size(); ++j)
                d = std::max(d, cyl_distance(domain.cell_pos(cells[i]),
                                             domain.cell_pos(cells[j])));
        return d;
    };
    const double dia_bound = std::pow(delta, 1.0 / 6.0);
    if (diameter(d3p) >= dia_bound || diameter(d4p) >= dia_bound)
        throw std::invalid_argument("verify_serial_cut: slab side boundary too large");
    if (!d3p.empty() && !d4p.empty()) {
        double sep = std::numeric_limits<double>::infinity();
        for (std::size_t a : d3p)
            for (std::size_t b : d4p)
                sep = std::min(sep, cyl_distance(domain.cell_pos(a), domain.cell_pos(b)));
        if (sep < std::pow(delta, 1.0 / 7.0))
            throw std::invalid_argument("verify_serial_cut: slab side boundaries too close");
    }

    // The cross-cut: the unique circular arc of component cells at the cut
    // row whose removal disconnects d1 from d2.
    const int row_s = g.row_of(s);
    std::vector<std::uint8_t> on(cols, 0);
    for (int c = 0; c < cols; ++c)
        if (domain.component[g.index(row_s, c)]) on[c] = 1;
    auto arcs = detail::circular_arcs(on, cols, -1);
    if (arcs.empty())
        throw std::invalid_argument("verify_serial_cut: domain pinched at the cut row");
    std::vector<int> v_cols;
    if (arcs.size() == 1) {
        v_cols = arcs.front();
    } else {
        int found = 0;
        for (const auto& arc : arcs) {
            // Does removing this arc disconnect the below-part from the
            // above-part of the component?
            std::vector<std::uint8_t> blocked(g.cell_count(), 0);
            for (int c : arc) blocked[g.index(row_s, c)] = 1;
            std::vector<std::uint8_t> seen(g.cell_count(), 0);
            std::queue<std::size_t> q;
            for (std::size_t f = 0; f < g.cell_count(); ++f)
                if (domain.component[f] && !blocked[f] &&
                    static_cast<int>(f) / cols < row_s) {
                    seen[f] = 1;
                    q.push(f);
                }
            while (!q.empty()) {
                const std::size_t f = q.front();
                q.pop();
                const int r = static_cast<int>(f) / cols;
                const int c = static_cast<int>(f) % cols;
                const int nr[4] = {r - 1, r + 1, r, r};
                const int nc[4] = {c, c, g.wrap_col(c - 1), g.wrap_col(c + 1)};
                for (int k = 0; k < 4; ++k) {
                    if (nr[k] < 0 || nr[k] >= g.rows()) continue;
                    const std::size_t nf = g.index(nr[k], nc[k]);
                    if (domain.component[nf] && !blocked[nf] && !seen[nf]) {
                        seen[nf] = 1;
                        q.push(nf);
                    }
                }
            }
            bool reaches_top = false;
            for (std::size_t f = 0; f < g.cell_count() && !reaches_top; ++f)
                reaches_top = seen[f] && static_cast<int>(f) / cols > row_s;
            if (!reaches_top) {
                ++found;
                v_cols = arc;
            }
        }
        if (found != 1)
            throw std::invalid_argument("verify_serial_cut: cross-cut not unique");
    }

    SerialCutResult res;
    res.v_cols = v_cols;
    res.L = pi_extremal_distance(domain, tol).L;

    // Lower piece: rows [0, row_s] with V as outer Dirichlet arc.
    {
        OccupancyGrid g1(g.u_min(), g.u_of_row(row_s), g.h(), g.inner_cap_mode());
        for (int c = 0; c < cols; ++c)
            if (g.is_obstacle(0, c)) g1.at(0, c) = CellState::OBSTACLE;
        PathDomainSpec low;
        low.grid = &g1;
        low.component.assign(g1.cell_count(), 0);
        for (int r = 1; r < g1.rows() - 1; ++r)
            for (int c = 0; c < cols; ++c)
                if (domain.component[g.index(r, c)]) low.component[g1.index(r, c)] = 1;
        low.d1_cols = domain.d1_cols;
        low.d2_cols = v_cols;
        res.L1 = pi_extremal_distance(low, tol).L;
    }
    // Upper piece: rows [row_s, rows-1] with V as inner Dirichlet arc.
    {
        OccupancyGrid g2(g.u_of_row(row_s), g.u_max(), g.h(), InnerCapMode::ABSORB);
        for (int c = 0; c < cols; ++c)
            if (!on[c]) g2.at(0, c) = CellState::OBSTACLE;
        PathDomainSpec high;
        high.grid = &g2;
        high.component.assign(g2.cell_count(), 0);
        for (int r = 1; r < g2.rows() - 1; ++r)
            for (int c = 0; c < cols; ++c)
                if (domain.component[g.index(row_s + r, c)])
                    high.component[g2.index(r, c)] = 1;
        high.d1_cols = v_cols;
        high.d2_cols = domain.d2_cols;
        res.L2 = pi_extremal_distance(high, tol).L;
    }
    res.slack = res.L - (res.L1 + res.L2);
    return res;
}

} // namespace bxi
