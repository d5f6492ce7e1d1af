#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <stdexcept>
#include <vector>

#include "bxi/grid.hpp"

namespace bxi {

// Point in cylinder coordinates (u = log-radius, theta).
struct CylPoint {
    double u = 0.0;
    double theta = 0.0;
};

inline double cyl_distance(const CylPoint& a, const CylPoint& b) {
    const double du = a.u - b.u;
    double dth = std::fabs(a.theta - b.theta);
    dth = std::min(dth, 2.0 * M_PI - dth);
    return std::sqrt(du * du + dth * dth);
}

// A connected component of FREE cells in an annulus raster, with its four
// labeled boundary arcs: d1 on C_{u_min}, d2 on C_{u_max} (column lists in
// counterclockwise order), d3/d4 the obstacle-adjacent frontier cells.
struct PathDomainSpec {
    const OccupancyGrid* grid = nullptr;
    std::vector<std::uint8_t> component;   // interior cells, flat mask
    std::vector<int> d1_cols;
    std::vector<int> d2_cols;
    std::vector<std::size_t> d3_cells;
    std::vector<std::size_t> d4_cells;
    int discarded_inner_arcs = 0;  // smaller inner arcs dropped (diagnostic)

    bool has_inner_arc() const { return !d1_cols.empty(); }

    CylPoint cell_pos(std::size_t flat) const {
        const int row = static_cast<int>(flat) / grid->cols();
        const int col = static_cast<int>(flat) % grid->cols();
        return {grid->u_of_row(row), grid->theta_of_col(col)};
    }
};

namespace detail {

// Groups a set of boundary-row columns into circular arcs and returns them
// as counterclockwise column lists, longest first. `anchor_col`, when >= 0,
// moves the arc containing that column to the front.
inline std::vector<std::vector<int>> circular_arcs(const std::vector<std::uint8_t>& on,
                                                   int n_cols, int anchor_col) {
    std::vector<std::vector<int>> arcs;
    std::vector<std::uint8_t> used(n_cols, 0);
    for (int c = 0; c < n_cols; ++c) {
        if (!on[c] || used[c]) continue;
        // Walk clockwise to the arc start.
        int start = c;
        while (on[(start + n_cols - 1) % n_cols] && (start + n_cols - 1) % n_cols != c)
            start = (start + n_cols - 1) % n_cols;
        std::vector<int> arc;
        int cur = start;
        while (on[cur] && !used[cur]) {
            used[cur] = 1;
            arc.push_back(cur);
            cur = (cur + 1) % n_cols;
        }
        arcs.push_back(std::move(arc));
    }
    std::stable_sort(arcs.begin(), arcs.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    if (anchor_col >= 0)
        for (std::size_t i = 0; i < arcs.size(); ++i)
            if (std::find(arcs[i].begin(), arcs[i].end(), anchor_col) != arcs[i].end()) {
                std::swap(arcs[0], arcs[i]);
                break;
            }
    return arcs;
}

} // namespace detail

// Builds the PathDomainSpec for the interior component containing
// `seed_flat`. `anchor_outer_col`, when >= 0, selects which outer arc is
// d2 if the component touches several.
inline PathDomainSpec make_domain(const OccupancyGrid& grid, std::size_t seed_flat,
                                  int anchor_outer_col = -1) {
    const int rows = grid.rows();
    const int cols = grid.cols();
    PathDomainSpec dom;
    dom.grid = &grid;
    dom.component.assign(grid.cell_count(), 0);

    // 4-connected flood fill over interior FREE cells.
    {
        std::queue<std::size_t> q;
        if (grid.state(seed_flat) != CellState::FREE)
            throw std::invalid_argument("make_domain: seed cell is not FREE");
        dom.component[seed_flat] = 1;
        q.push(seed_flat);
        while (!q.empty()) {
            const std::size_t f = q.front();
            q.pop();
            const int r = static_cast<int>(f) / cols;
            const int c = static_cast<int>(f) % cols;
            const int nr[4] = {r - 1, r + 1, r, r};
            const int nc[4] = {c, c, grid.wrap_col(c - 1), grid.wrap_col(c + 1)};
            for (int k = 0; k < 4; ++k) {
                if (nr[k] <= 0 || nr[k] >= rows - 1) continue;
                const std::size_t g = grid.index(nr[k], nc[k]);
                if (dom.component[g] || grid.state(g) != CellState::FREE) continue;
                dom.component[g] = 1;
                q.push(g);
            }
        }
    }

    // Boundary arcs: boundary-row cells that are not obstacles and sit next
    // to a component cell.
    auto boundary_cols = [&](int row, int adj_row) {
        std::vector<std::uint8_t> on(cols, 0);
        for (int c = 0; c < cols; ++c)
            if (!grid.is_obstacle(row, c) && dom.component[grid.index(adj_row, c)]) on[c] = 1;
        return on;
    };
    {
        auto arcs = detail::circular_arcs(boundary_cols(rows - 1, rows - 2), cols,
                                          anchor_outer_col);
        if (!arcs.empty()) dom.d2_cols = arcs.front();
    }
    {
        auto arcs = detail::circular_arcs(boundary_cols(0, 1), cols, -1);
        if (!arcs.empty()) {
            dom.d1_cols = arcs.front();
            dom.discarded_inner_arcs = static_cast<int>(arcs.size()) - 1;
        }
    }

    // Frontier: component cells with an obstacle among their 8 neighbors,
    // clustered by 8-adjacency, then split into d3/d4.
    std::vector<std::size_t> frontier;
    std::vector<std::uint8_t> is_frontier(grid.cell_count(), 0);
    for (std::size_t f = 0; f < grid.cell_count(); ++f) {
        if (!dom.component[f]) continue;
        const int r = static_cast<int>(f) / cols;
        const int c = static_cast<int>(f) % cols;
        bool touch = false;
        for (int dr = -1; dr <= 1 && !touch; ++dr)
            for (int dc = -1; dc <= 1 && !touch; ++dc) {
                if (dr == 0 && dc == 0) continue;
                const int rr = r + dr;
                if (rr < 0 || rr >= rows) continue;
                touch = grid.is_obstacle(rr, grid.wrap_col(c + dc));
            }
        if (touch) {
            frontier.push_back(f);
            is_frontier[f] = 1;
        }
    }
    std::vector<std::vector<std::size_t>> clusters;
    {
        std::vector<std::uint8_t> used(grid.cell_count(), 0);
        for (std::size_t f : frontier) {
            if (used[f]) continue;
            std::vector<std::size_t> cl;
            std::queue<std::size_t> q;
            used[f] = 1;
            q.push(f);
            while (!q.empty()) {
                const std::size_t g = q.front();
                q.pop();
                cl.push_back(g);
                const int r = static_cast<int>(g) / cols;
                const int c = static_cast<int>(g) % cols;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = r + dr;
                        if ((dr == 0 && dc == 0) || rr < 0 || rr >= rows) continue;
                        const std::size_t nb = grid.index(rr, grid.wrap_col(c + dc));
                        if (is_frontier[nb] && !used[nb]) {
                            used[nb] = 1;
                            q.push(nb);
                        }
                    }
            }
            clusters.push_back(std::move(cl));
        }
    }
    if (!clusters.empty()) {
        // d3 is the cluster met first counterclockwise from the end of d2
        // (equivalently, containing the first obstacle counterclockwise
        // from d2's start). Score clusters by the counterclockwise column
        // offset of their near-outer cells from the end of the d2 arc.
        int ref_col = dom.d2_cols.empty() ? 0 : dom.d2_cols.back();
        std::size_t best = 0;
        int best_score = cols + 1;
        for (std::size_t i = 0; i < clusters.size(); ++i) {
            int score = cols + 1;
            int top_row = 0;
            for (std::size_t f : clusters[i])
                top_row = std::max(top_row, static_cast<int>(f) / cols);
            for (std::size_t f : clusters[i]) {
                const int r = static_cast<int>(f) / cols;
                if (r < top_row - 1) continue;
                const int c = static_cast<int>(f) % cols;
                const int ccw = (c - ref_col + cols) % cols;
                score = std::min(score, ccw);
            }
            if (score < best_score) {
                best_score = score;
                best = i;
            }
        }
        dom.d3_cells = clusters[best];
        for (std::size_t i = 0; i < clusters.size(); ++i)
            if (i != best)
                dom.d4_cells.insert(dom.d4_cells.end(), clusters[i].begin(),
                                    clusters[i].end());
    }
    return dom;
}

// The two path domains O^1, O^2 of an annulus raster built from two
// upcrossings, identified by the endpoint angles of B^1 and B^2. O^1 owns
// the counterclockwise outer arc from end1 to end2.
inline std::pair<std::optional<PathDomainSpec>, std::optional<PathDomainSpec>>
extract_domains(const OccupancyGrid& grid, double end1, double end2) {
    const int rows = grid.rows();
    const int cols = grid.cols();

    auto component_from_angle = [&](double angle) -> std::optional<PathDomainSpec> {
        const int start = grid.col_of(angle);
        int free_col = -1;
        for (int k = 1; k <= cols; ++k) {
            const int c = grid.wrap_col(start + k);
            if (!grid.is_obstacle(rows - 1, c)) {
                free_col = c;
                break;
            }
        }
        if (free_col < 0)
            throw std::invalid_argument(
                "extract_domains: no FREE outer arc adjacent to endpoint angle");
        // Seed interior cell below the free outer arc.
        for (int k = 0; k < cols; ++k) {
            const int c = grid.wrap_col(free_col + k);
            if (grid.is_obstacle(rows - 1, c)) break;
            if (grid.state(grid.index(rows - 2, c)) == CellState::FREE)
                return make_domain(grid, grid.index(rows - 2, c), free_col);
        }
        return std::nullopt;
    };

    auto o1 = component_from_angle(end1);
    auto o2 = component_from_angle(end2);
    if (o1 && o2 && !o2->d2_cols.empty() && !o1->d2_cols.empty() &&
        o1->d2_cols.front() == o2->d2_cols.front())
        o2.reset();  // single component reaching the outer circle
    return {std::move(o1), std::move(o2)};
}

} // namespace bxi
