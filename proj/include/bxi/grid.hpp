#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <vector>

#include "bxi/path.hpp"

namespace bxi {

enum class CellState : std::uint8_t { FREE, OBSTACLE, INNER_BOUNDARY, OUTER_BOUNDARY };
enum class InnerCapMode : std::uint8_t { SUPER_NODE, ABSORB };

inline constexpr double kMaxCellSize = 0.05;

// Log-polar raster of an annulus. Rows are circles of constant log-radius:
// row 0 sits on C_{u_min}, the top row on C_{u_max}, so cell centers of the
// boundary rows lie exactly on the bounding circles. The theta dimension
// wraps with ceil(2*pi/h) cells.
class OccupancyGrid {
public:
    OccupancyGrid(double u_min, double u_max, double h,
                  InnerCapMode cap = InnerCapMode::ABSORB)
        : u_min_(u_min), h_(h), cap_(cap) {
        if (!(h > 0.0) || h > kMaxCellSize + 1e-12)
            throw std::invalid_argument("OccupancyGrid: cell size h must be in (0, 0.05]");
        if (!(u_max > u_min)) throw std::invalid_argument("OccupancyGrid: u_max <= u_min");
        n_rows_ = static_cast<int>(std::ceil((u_max - u_min) / h - 1e-9)) + 1;
        if (n_rows_ < 3) throw std::invalid_argument("OccupancyGrid: fewer than 3 rows");
        n_cols_ = static_cast<int>(std::ceil(2.0 * M_PI / h));
        u_max_ = u_min_ + (n_rows_ - 1) * h_;
        cells_.assign(static_cast<std::size_t>(n_rows_) * n_cols_, CellState::FREE);
        for (int c = 0; c < n_cols_; ++c) {
            at(0, c) = CellState::INNER_BOUNDARY;
            at(n_rows_ - 1, c) = CellState::OUTER_BOUNDARY;
        }
    }

    int rows() const { return n_rows_; }
    int cols() const { return n_cols_; }
    double u_min() const { return u_min_; }
    double u_max() const { return u_max_; }
    double h() const { return h_; }
    double dtheta() const { return 2.0 * M_PI / n_cols_; }
    InnerCapMode inner_cap_mode() const { return cap_; }
    void set_inner_cap_mode(InnerCapMode m) { cap_ = m; }

    CellState& at(int row, int col) { return cells_[index(row, col)]; }
    CellState at(int row, int col) const { return cells_[index(row, col)]; }
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * n_cols_ + wrap_col(col);
    }
    std::size_t cell_count() const { return cells_.size(); }
    CellState state(std::size_t flat) const { return cells_[flat]; }

    int wrap_col(int col) const {
        col %= n_cols_;
        return col < 0 ? col + n_cols_ : col;
    }

    int row_of(double u) const {
        const int r = static_cast<int>(std::lround((u - u_min_) / h_));
        return std::clamp(r, 0, n_rows_ - 1);
    }
    int col_of(double theta) const {
        double t = std::fmod(theta, 2.0 * M_PI);
        if (t < 0.0) t += 2.0 * M_PI;
        int c = static_cast<int>(t / dtheta());
        return c >= n_cols_ ? n_cols_ - 1 : c;
    }
    double u_of_row(int row) const { return u_min_ + row * h_; }
    double theta_of_col(int col) const { return (col + 0.5) * dtheta(); }

    bool is_obstacle(int row, int col) const { return at(row, col) == CellState::OBSTACLE; }

    void mark_cell(double u, double theta) {
        const int r = static_cast<int>(std::floor((u - u_min_) / h_ + 0.5));
        if (r < 0 || r >= n_rows_) return;
        at(r, col_of(theta)) = CellState::OBSTACLE;
    }

    // Marks every cell touched by the segment [a, b], resampled at
    // cylindrical arclength <= h/2.
    void mark_segment(const Point& a, const Point& b) {
        const double floor_r = std::exp(u_min_);
        if (a.norm2() < floor_r * floor_r && b.norm2() < floor_r * floor_r)
            return;  // the whole chord lies inside the disk below the grid
        const double dx = b.x - a.x;
        const double dy = b.y - a.y;
        const double chord = std::sqrt(dx * dx + dy * dy);
        // Resampling density follows the smallest radius the chord can
        // reach, but portions below the grid never need resolving.
        const double r_min = std::max(std::sqrt(std::min(a.norm2(), b.norm2())), floor_r);
        int n_sub = 1;
        if (chord > 0.0) n_sub = 1 + static_cast<int>(chord / (0.5 * h_ * r_min));
        for (int k = 0; k <= n_sub; ++k) {
            const double t = static_cast<double>(k) / n_sub;
            const Point p{a.x + t * dx, a.y + t * dy};
            mark_cell(p.log_norm(), p.arg());
        }
    }

    std::size_t count(CellState s) const {
        return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), s));
    }

private:
    double u_min_, u_max_ = 0.0, h_;
    int n_rows_ = 0, n_cols_ = 0;
    InnerCapMode cap_;
    std::vector<CellState> cells_;
};

inline OccupancyGrid rasterize(const std::vector<const SampledPath*>& paths, double u_min,
                               double u_max, double h,
                               InnerCapMode cap = InnerCapMode::ABSORB) {
    OccupancyGrid grid(u_min, u_max, h, cap);
    for (const SampledPath* p : paths)
        for (std::size_t i = 1; i < p->points.size(); ++i)
            grid.mark_segment(p->points[i - 1], p->points[i]);
    return grid;
}

inline OccupancyGrid rasterize(const std::vector<SampledPath>& paths, double u_min,
                               double u_max, double h,
                               InnerCapMode cap = InnerCapMode::ABSORB) {
    std::vector<const SampledPath*> ptrs;
    ptrs.reserve(paths.size());
    for (const auto& p : paths) ptrs.push_back(&p);
    return rasterize(ptrs, u_min, u_max, h, cap);
}

// True iff the two rasterized traces share a cell at resolution h.
inline bool paths_intersect(const SampledPath& a, const SampledPath& b, double h) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const SampledPath* p : {&a, &b})
        for (const Point& q : p->points) {
            const double u = q.log_norm();
            lo = std::min(lo, u);
            hi = std::max(hi, u);
        }
    if (!(lo <= hi)) return false;
    OccupancyGrid grid(lo - 2.0 * h, hi + 2.0 * h, h);
    for (std::size_t i = 1; i < a.points.size(); ++i)
        grid.mark_segment(a.points[i - 1], a.points[i]);
    // Walk b's resampled trace against a's raster.
    bool hit = false;
    OccupancyGrid probe(lo - 2.0 * h, hi + 2.0 * h, h);
    for (std::size_t i = 1; i < b.points.size() && !hit; ++i) {
        probe.mark_segment(b.points[i - 1], b.points[i]);
    }
    for (std::size_t f = 0; f < grid.cell_count(); ++f)
        if (grid.state(f) == CellState::OBSTACLE && probe.state(f) == CellState::OBSTACLE)
            return true;
    return false;
}

// Streaming detector for a closed loop about zero inside a closed annulus:
// true once some excursion of the fed polyline inside the annulus
// accumulates winding angle >= 2*pi between consecutive exits.
class LoopDetector {
public:
    explicit LoopDetector(const AnnulusSpec& annulus)
        : sq_lo_(std::exp(2.0 * annulus.r_in)), sq_hi_(std::exp(2.0 * annulus.r_out)) {}

    void feed(const Point& p) {
        const double n2 = p.norm2();
        const bool inside = n2 >= sq_lo_ && n2 <= sq_hi_;
        if (inside) {
            if (in_excursion_) {
                // Incremental winding: angle between successive position vectors.
                const double cross = prev_.x * p.y - prev_.y * p.x;
                const double dot = prev_.x * p.x + prev_.y * p.y;
                winding_ += std::atan2(cross, dot);
                if (std::fabs(winding_) >= 2.0 * M_PI) found_ = true;
            } else {
                in_excursion_ = true;
                winding_ = 0.0;
            }
            prev_ = p;
        } else {
            in_excursion_ = false;
        }
    }

    bool found() const { return found_; }

private:
    double sq_lo_, sq_hi_;
    Point prev_;
    double winding_ = 0.0;
    bool in_excursion_ = false;
    bool found_ = false;
};

inline bool loop_in_annulus(const SampledPath& path, const AnnulusSpec& annulus) {
    LoopDetector det(annulus);
    for (const Point& p : path.points) {
        det.feed(p);
        if (det.found()) return true;
    }
    return false;
}

// BFS over non-obstacle cells (4-adjacency, theta wraps) from every
// non-obstacle cell of `from_row`; returns the visited mask.
inline std::vector<std::uint8_t> reachable_from_row(const OccupancyGrid& grid, int from_row) {
    std::vector<std::uint8_t> seen(grid.cell_count(), 0);
    std::queue<std::pair<int, int>> q;
    for (int c = 0; c < grid.cols(); ++c)
        if (!grid.is_obstacle(from_row, c)) {
            seen[grid.index(from_row, c)] = 1;
            q.push({from_row, c});
        }
    while (!q.empty()) {
        auto [r, c] = q.front();
        q.pop();
        const int nr[4] = {r - 1, r + 1, r, r};
        const int nc[4] = {c, c, grid.wrap_col(c - 1), grid.wrap_col(c + 1)};
        for (int k = 0; k < 4; ++k) {
            if (nr[k] < 0 || nr[k] >= grid.rows()) continue;
            const std::size_t f = grid.index(nr[k], nc[k]);
            if (seen[f] || grid.state(f) == CellState::OBSTACLE) continue;
            seen[f] = 1;
            q.push({nr[k], nc[k]});
        }
    }
    return seen;
}

// True iff some non-obstacle cell on the row of C_{u_start} connects to the
// outer boundary row through non-obstacle cells — the combinatorial version
// of "Z > 0" on the same grid as the harmonic solve. In SUPER_NODE mode the
// free cells of the lowest (truncation) row are mutually connected, since a
// walker can cross the obstacle-free inner disk.
inline bool reaches_outer_from(const OccupancyGrid& grid, double u_start) {
    const int start_row = grid.row_of(u_start);
    std::vector<std::uint8_t> seen(grid.cell_count(), 0);
    std::queue<std::pair<int, int>> q;
    bool super_entered = false;
    auto visit = [&](int r, int c) {
        const std::size_t f = grid.index(r, c);
        if (seen[f] || grid.state(f) == CellState::OBSTACLE) return;
        seen[f] = 1;
        q.push({r, c});
    };
    for (int c = 0; c < grid.cols(); ++c) visit(start_row, c);
    while (!q.empty()) {
        auto [r, c] = q.front();
        q.pop();
        if (r == grid.rows() - 1) return true;
        if (r == 0 && grid.inner_cap_mode() == InnerCapMode::SUPER_NODE &&
            !super_entered) {
            super_entered = true;
            for (int cc = 0; cc < grid.cols(); ++cc) visit(0, cc);
        }
        const int nr[4] = {r - 1, r + 1, r, r};
        const int nc[4] = {c, c, grid.wrap_col(c - 1), grid.wrap_col(c + 1)};
        for (int k = 0; k < 4; ++k) {
            if (nr[k] < 0 || nr[k] >= grid.rows()) continue;
            visit(nr[k], nc[k]);
        }
    }
    return false;
}

// True iff the obstacles disconnect the inner boundary row from the outer
// boundary row.
inline bool disconnection_test(const OccupancyGrid& grid) {
    const auto seen = reachable_from_row(grid, 0);
    for (int c = 0; c < grid.cols(); ++c)
        if (seen[grid.index(grid.rows() - 1, c)]) return false;
    return true;
}

} // namespace bxi
