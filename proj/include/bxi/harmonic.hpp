#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bxi/domain.hpp"
#include "bxi/grid.hpp"
#include "bxi/rng.hpp"

namespace bxi {

inline constexpr double kInfiniteL = std::numeric_limits<double>::infinity();
inline constexpr double kSolverTol = 1e-8;
inline constexpr long kSolverIterCap = 1'000'000;

// e^{-lambda L}, with the convention e^{-lambda * inf} = 0 for every
// lambda >= 0 (including lambda = 0, where the weight is the indicator of
// L < infinity).
inline double exp_weight(double L, double lambda) {
    if (std::isinf(L)) return 0.0;
    return std::exp(-lambda * L);
}

struct HarmonicSolution {
    std::vector<double> potential;  // one value per unknown node
    double energy = 0.0;            // Dirichlet energy incl. boundary edges
    double residual = 0.0;
    long iterations = 0;
};

struct ExtremalResult {
    double L = kInfiniteL;
    std::optional<HarmonicSolution> solution;

    bool finite() const { return std::isfinite(L); }
};

namespace detail {

// Sparse unit-conductance Laplace system: unknown nodes with neighbor lists
// (CSR) plus a right-hand side collecting Dirichlet-1 couplings. Each
// Dirichlet neighbor (value 0 or 1) contributes 1 to the diagonal; value-1
// neighbors also contribute to rhs.
struct LaplaceSystem {
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::uint32_t> cols;
    std::vector<double> diag;
    std::vector<double> rhs;

    std::size_t size() const { return diag.size(); }

    void begin_node() {
        diag.push_back(0.0);
        rhs.push_back(0.0);
    }
    void add_unknown_edge(std::uint32_t other) {
        cols.push_back(other);
        diag.back() += 1.0;
    }
    void add_dirichlet_edge(double value) {
        diag.back() += 1.0;
        rhs.back() += value;
    }
    void end_node() { row_ptr.push_back(cols.size()); }

    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        const std::size_t n = size();
        for (std::size_t i = 0; i < n; ++i) {
            double acc = diag[i] * x[i];
            for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
                acc -= x[cols[k]];
            y[i] = acc;
        }
    }
};

// Jacobi-preconditioned conjugate gradient. Throws on iteration-cap
// exhaustion (the matrix is SPD once at least one Dirichlet edge grounds
// the system).
inline HarmonicSolution solve_cg(const LaplaceSystem& sys, double tol, long iter_cap) {
    const std::size_t n = sys.size();
    HarmonicSolution sol;
    sol.potential.assign(n, 0.0);
    if (n == 0) return sol;

    std::vector<double> r = sys.rhs, z(n), p(n), Ap(n);
    double rr0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) rr0 += r[i] * r[i];
    if (rr0 == 0.0) return sol;
    const double stop = tol * tol * std::max(1.0, rr0);

    double rz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = r[i] / sys.diag[i];
        rz += r[i] * z[i];
    }
    p = z;
    long it = 0;
    double rr = rr0;
    for (; it < iter_cap && rr > stop; ++it) {
        sys.apply(p, Ap);
        double pAp = 0.0;
        for (std::size_t i = 0; i < n; ++i) pAp += p[i] * Ap[i];
        const double alpha = rz / pAp;
        rr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sol.potential[i] += alpha * p[i];
            r[i] -= alpha * Ap[i];
            rr += r[i] * r[i];
        }
        double rz_new = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = r[i] / sys.diag[i];
            rz_new += r[i] * z[i];
        }
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    sol.iterations = it;
    sol.residual = std::sqrt(rr / std::max(1.0, rr0));
    if (rr > stop)
        throw std::runtime_error("solve_cg: no convergence after iteration cap, residual " +
                                 std::to_string(sol.residual));
    return sol;
}

} // namespace detail

// pi-extremal distance L(O; d1, d2) of a path domain: Dirichlet data 0 on
// d1, 1 on d2, zero flux on d3/d4, unit-conductance 5-point Laplacian;
// L = pi / energy. With SUPER_NODE inner cap, the free non-d1 cells of the
// lowest row join one auxiliary reflecting node (harmonic continuation
// into the obstacle-free inner disk).
inline ExtremalResult pi_extremal_distance(const PathDomainSpec& domain,
                                           double tol = kSolverTol) {
    const OccupancyGrid& grid = *domain.grid;
    const int rows = grid.rows();
    const int cols = grid.cols();
    if (domain.d1_cols.empty() || domain.d2_cols.empty()) return {};

    std::vector<std::uint8_t> d1_mask(cols, 0), d2_mask(cols, 0);
    for (int c : domain.d1_cols) d1_mask[c] = 1;
    for (int c : domain.d2_cols) d2_mask[c] = 1;

    // Keep only cells connected to a Dirichlet arc; floating reflecting
    // pockets carry no flux and would make the system singular.
    std::vector<std::uint8_t> keep(grid.cell_count(), 0);
    {
        std::queue<std::size_t> q;
        auto seed = [&](std::size_t f) {
            if (domain.component[f] && !keep[f]) {
                keep[f] = 1;
                q.push(f);
            }
        };
        for (int c : domain.d1_cols)
            if (!grid.is_obstacle(0, c)) seed(grid.index(1, c));
        for (int c : domain.d2_cols) seed(grid.index(rows - 2, c));
        while (!q.empty()) {
            const std::size_t f = q.front();
            q.pop();
            const int r = static_cast<int>(f) / cols;
            const int c = static_cast<int>(f) % cols;
            const int nr[4] = {r - 1, r + 1, r, r};
            const int nc[4] = {c, c, grid.wrap_col(c - 1), grid.wrap_col(c + 1)};
            for (int k = 0; k < 4; ++k) {
                if (nr[k] <= 0 || nr[k] >= rows - 1) continue;
                seed(grid.index(nr[k], nc[k]));
            }
        }
    }

    constexpr std::uint32_t kNone = 0xffffffffu;
    std::vector<std::uint32_t> id(grid.cell_count(), kNone);
    std::vector<std::size_t> nodes;
    for (std::size_t f = 0; f < grid.cell_count(); ++f)
        if (keep[f]) {
            id[f] = static_cast<std::uint32_t>(nodes.size());
            nodes.push_back(f);
        }

    // Optional reflecting super node for the truncated inner cap.
    const bool super = grid.inner_cap_mode() == InnerCapMode::SUPER_NODE;
    std::uint32_t super_id = kNone;
    if (super) {
        for (int c = 0; c < cols && super_id == kNone; ++c)
            if (!grid.is_obstacle(0, c) && !d1_mask[c] &&
                id[grid.index(1, c)] != kNone)
                super_id = static_cast<std::uint32_t>(nodes.size());
    }

    detail::LaplaceSystem sys;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const int r = static_cast<int>(nodes[i]) / cols;
        const int c = static_cast<int>(nodes[i]) % cols;
        sys.begin_node();
        // Down.
        if (r == 1) {
            if (!grid.is_obstacle(0, c)) {
                if (d1_mask[c])
                    sys.add_dirichlet_edge(0.0);
                else if (super)
                    sys.add_unknown_edge(super_id);
                // ABSORB mode without d1 membership: reflecting (no edge);
                // the truncation row outside d1 carries no data.
            }
        } else if (id[grid.index(r - 1, c)] != kNone) {
            sys.add_unknown_edge(id[grid.index(r - 1, c)]);
        }
        // Up.
        if (r == rows - 2) {
            if (d2_mask[c]) sys.add_dirichlet_edge(1.0);
        } else if (id[grid.index(r + 1, c)] != kNone) {
            sys.add_unknown_edge(id[grid.index(r + 1, c)]);
        }
        // Sides.
        for (int dc : {-1, 1}) {
            const std::size_t nb = grid.index(r, c + dc);
            if (id[nb] != kNone) sys.add_unknown_edge(id[nb]);
        }
        sys.end_node();
    }
    if (super_id != kNone) {
        sys.begin_node();
        for (int c = 0; c < cols; ++c)
            if (!grid.is_obstacle(0, c) && !d1_mask[c] &&
                id[grid.index(1, c)] != kNone)
                sys.add_unknown_edge(id[grid.index(1, c)]);
        sys.end_node();
    }

    ExtremalResult res;
    res.solution = detail::solve_cg(sys, tol, kSolverIterCap);
    auto& sol = *res.solution;

    // Dirichlet energy: sum over edges (once each) of squared differences,
    // including edges to the Dirichlet rows.
    double energy = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const int r = static_cast<int>(nodes[i]) / cols;
        const int c = static_cast<int>(nodes[i]) % cols;
        const double v = sol.potential[i];
        if (r == 1 && !grid.is_obstacle(0, c) && d1_mask[c]) energy += v * v;
        if (r == rows - 2 && d2_mask[c]) energy += (1.0 - v) * (1.0 - v);
        // Up and right unknown edges, counted once.
        if (r + 1 <= rows - 2 && id[grid.index(r + 1, c)] != kNone) {
            const double d = v - sol.potential[id[grid.index(r + 1, c)]];
            energy += d * d;
        }
        const std::size_t nb = grid.index(r, c + 1);
        if (id[nb] != kNone) {
            const double d = v - sol.potential[id[nb]];
            energy += d * d;
        }
        if (super_id != kNone && r == 1 && !grid.is_obstacle(0, c) && !d1_mask[c]) {
            const double d = v - sol.potential[super_id];
            energy += d * d;
        }
    }
    sol.energy = energy;
    if (energy <= 0.0) {
        // d1 exists but carries no flux: the arcs are not connected
        // through the component.
        res.solution.reset();
        res.L = kInfiniteL;
        return res;
    }
    res.L = M_PI / energy;
    return res;
}

// Harmonic reach probability on a raw grid: value 1 on the outer boundary
// row, 0 on obstacle cells, zero-flux or super-node closure at the inner
// row per the grid's inner_cap_mode (ABSORB grounds the inner row to 0).
// Returns the full per-cell field (0 on obstacles, 1 on the outer row).
struct ReachField {
    std::vector<double> value;  // per flat cell index
    double residual = 0.0;
    long iterations = 0;
};

// `outer_value`, when given, supplies the Dirichlet datum of each free
// outer-row column in place of the default 1 (used to split the reach
// probability by arrival arc).
inline ReachField reach_probability(const OccupancyGrid& grid, double tol = kSolverTol,
                                    const std::vector<double>* outer_value = nullptr) {
    const int rows = grid.rows();
    const int cols = grid.cols();
    constexpr std::uint32_t kNone = 0xffffffffu;
    std::vector<std::uint32_t> id(grid.cell_count(), kNone);
    std::vector<std::size_t> nodes;
    for (int r = 1; r < rows - 1; ++r)
        for (int c = 0; c < cols; ++c) {
            const std::size_t f = grid.index(r, c);
            if (grid.state(f) != CellState::OBSTACLE) {
                id[f] = static_cast<std::uint32_t>(nodes.size());
                nodes.push_back(f);
            }
        }
    const bool super = grid.inner_cap_mode() == InnerCapMode::SUPER_NODE;
    std::uint32_t super_id = kNone;
    if (super) {
        for (int c = 0; c < cols && super_id == kNone; ++c)
            if (!grid.is_obstacle(0, c) && id[grid.index(1, c)] != kNone)
                super_id = static_cast<std::uint32_t>(nodes.size());
    }

    detail::LaplaceSystem sys;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const int r = static_cast<int>(nodes[i]) / cols;
        const int c = static_cast<int>(nodes[i]) % cols;
        sys.begin_node();
        // Down.
        if (r == 1) {
            if (grid.is_obstacle(0, c))
                sys.add_dirichlet_edge(0.0);
            else if (super)
                sys.add_unknown_edge(super_id);
            else
                sys.add_dirichlet_edge(0.0);  // ABSORB
        } else if (grid.is_obstacle(r - 1, c)) {
            sys.add_dirichlet_edge(0.0);
        } else {
            sys.add_unknown_edge(id[grid.index(r - 1, c)]);
        }
        // Up.
        if (r == rows - 2)
            sys.add_dirichlet_edge(grid.is_obstacle(rows - 1, c)
                                       ? 0.0
                                       : (outer_value ? (*outer_value)[c] : 1.0));
        else if (grid.is_obstacle(r + 1, c))
            sys.add_dirichlet_edge(0.0);
        else
            sys.add_unknown_edge(id[grid.index(r + 1, c)]);
        // Sides.
        for (int dc : {-1, 1}) {
            const std::size_t nb = grid.index(r, c + dc);
            if (grid.state(nb) == CellState::OBSTACLE)
                sys.add_dirichlet_edge(0.0);
            else
                sys.add_unknown_edge(id[nb]);
        }
        sys.end_node();
    }
    if (super_id != kNone) {
        sys.begin_node();
        for (int c = 0; c < cols; ++c)
            if (!grid.is_obstacle(0, c)) {
                if (grid.is_obstacle(1, c))
                    sys.add_dirichlet_edge(0.0);
                else
                    sys.add_unknown_edge(id[grid.index(1, c)]);
            }
        sys.end_node();
    }

    auto sol = detail::solve_cg(sys, tol, kSolverIterCap);
    ReachField field;
    field.residual = sol.residual;
    field.iterations = sol.iterations;
    field.value.assign(grid.cell_count(), 0.0);
    for (std::size_t i = 0; i < nodes.size(); ++i) field.value[nodes[i]] = sol.potential[i];
    for (int c = 0; c < cols; ++c) {
        if (!grid.is_obstacle(rows - 1, c))
            field.value[grid.index(rows - 1, c)] = outer_value ? (*outer_value)[c] : 1.0;
        if (super && super_id != kNone && !grid.is_obstacle(0, c))
            field.value[grid.index(0, c)] = sol.potential[super_id];
    }
    return field;
}

// Mean of a reach field over the row of cells on C_u (obstacle cells count
// as 0) — the harmonic-measure estimate Z.
inline double row_average(const OccupancyGrid& grid, const ReachField& field, double u) {
    const int row = grid.row_of(u);
    double acc = 0.0;
    for (int c = 0; c < grid.cols(); ++c) acc += field.value[grid.index(row, c)];
    return acc / grid.cols();
}

// Mean over the free (non-obstacle) cells of the row only; 0 when the row
// is fully blocked.
inline double row_average_free(const OccupancyGrid& grid, const ReachField& field,
                               double u) {
    const int row = grid.row_of(u);
    double acc = 0.0;
    int free_cells = 0;
    for (int c = 0; c < grid.cols(); ++c)
        if (!grid.is_obstacle(row, c)) {
            acc += field.value[grid.index(row, c)];
            ++free_cells;
        }
    return free_cells > 0 ? acc / free_cells : 0.0;
}

inline double row_max(const OccupancyGrid& grid, const ReachField& field, double u) {
    const int row = grid.row_of(u);
    double best = 0.0;
    for (int c = 0; c < grid.cols(); ++c)
        best = std::max(best, field.value[grid.index(row, c)]);
    return best;
}

// Lattice walk on the same grid graph as reach_probability: starting from
// (row, col), uniform steps among the 4 neighbors (theta wraps), absorbed
// with value 0 at obstacles and (in ABSORB mode) at the inner row, value 1
// at the outer boundary row. In SUPER_NODE mode a step below row 1 moves
// to the super node, which re-emits uniformly over the free inner columns.
// Exactly dual to the CG solve, so the two Z estimators share one
// discretization.
inline double lattice_walk_reach(const OccupancyGrid& grid, int row, int col,
                                 RngStream& rng) {
    const int rows = grid.rows();
    const bool super = grid.inner_cap_mode() == InnerCapMode::SUPER_NODE;
    std::vector<int> free_inner;
    if (super)
        for (int c = 0; c < grid.cols(); ++c)
            if (!grid.is_obstacle(0, c)) free_inner.push_back(c);

    int r = row, c = col;
    if (grid.is_obstacle(r, c)) return 0.0;
    while (true) {
        const int k = static_cast<int>(rng.next_u64() & 3u);
        int nr = r, nc = c;
        switch (k) {
            case 0: nr = r - 1; break;
            case 1: nr = r + 1; break;
            case 2: nc = grid.wrap_col(c - 1); break;
            default: nc = grid.wrap_col(c + 1); break;
        }
        if (nr < 0) {
            // Only reachable when walking on row 0 in SUPER_NODE mode;
            // treated as staying at the super node.
            continue;
        }
        if (nr == 0) {
            if (grid.is_obstacle(0, nc)) return 0.0;
            if (!super) return 0.0;
            // Enter the super node, re-emit uniformly over free columns.
            if (free_inner.empty()) return 0.0;
            nc = free_inner[rng.next_u64() % free_inner.size()];
            nr = 1;
            if (grid.is_obstacle(1, nc)) return 0.0;
            r = nr;
            c = nc;
            continue;
        }
        if (nr == rows - 1) return grid.is_obstacle(nr, nc) ? 0.0 : 1.0;
        if (grid.is_obstacle(nr, nc)) return 0.0;
        r = nr;
        c = nc;
    }
}

// Test helper: a rectangle (0, L) x (0, pi) realized in cylinder
// coordinates, with the vertical sides u = 0 and u = L as d1/d2 and the
// horizontal sides as reflecting d3/d4. Grid and domain are returned
// together; the grid must outlive the domain.
struct RectangleDomain {
    OccupancyGrid grid;
    PathDomainSpec domain;
};

inline RectangleDomain make_rectangle_domain(double L, double h,
                                             double theta_lo = 0.0,
                                             double theta_hi = M_PI) {
    RectangleDomain rd{OccupancyGrid(0.0, L, h), {}};
    OccupancyGrid& g = rd.grid;
    PathDomainSpec& d = rd.domain;
    d.grid = &g;
    d.component.assign(g.cell_count(), 0);
    const int c_lo = g.col_of(theta_lo + 1e-12);
    const int c_hi = g.col_of(theta_hi - 1e-12);
    auto in_band = [&](int c) {
        return c_lo <= c_hi ? (c >= c_lo && c <= c_hi)
                            : (c >= c_lo || c <= c_hi);
    };
    for (int r = 1; r < g.rows() - 1; ++r)
        for (int c = 0; c < g.cols(); ++c)
            if (in_band(c)) d.component[g.index(r, c)] = 1;
    for (int c = 0; c < g.cols(); ++c)
        if (in_band(c)) {
            d.d1_cols.push_back(c);
            d.d2_cols.push_back(c);
        }
    return rd;
}

} // namespace bxi
