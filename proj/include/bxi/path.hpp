#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <vector>

namespace bxi {

struct Point {
    double x = 0.0;
    double y = 0.0;

    double norm2() const { return x * x + y * y; }
    double log_norm() const { return 0.5 * std::log(norm2()); }
    double arg() const { return std::atan2(y, x); }
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }

// Annulus between the circles of radius e^r_in and e^r_out, identified by
// log-radii.
struct AnnulusSpec {
    double r_in = 0.0;
    double r_out = 1.0;

    AnnulusSpec(double rin, double rout) : r_in(rin), r_out(rout) {
        if (!(r_in < r_out)) throw std::invalid_argument("AnnulusSpec: r_in must be < r_out");
    }

    double width() const { return r_out - r_in; }
};

enum class PathKind { FULL_PATH, UPCROSSING, EXTENSION };

// Hit-detection tolerance for a given Euler step, in log-radius units.
inline double hit_tolerance(double dt) { return 5.0 * std::sqrt(dt); }

// A discrete planar trajectory. `hit_indices` maps a log-radius to the
// first index at which the polyline reaches the circle of that radius
// (crossing points are placed on the circle by interpolation, so the point
// at a recorded index lies on the circle up to roundoff).
struct SampledPath {
    std::vector<Point> points;
    double dt = 0.0;
    std::map<double, std::size_t> hit_indices;
    // First touch of each tracked circle with the Brownian-bridge crossing
    // correction: a superset of the interpolation-detected hits, used for
    // visit events (e.g. "did the path reach C_{-1}") where the O(sqrt(dt))
    // one-sided bias of pure interpolation would be material.
    std::map<double, std::size_t> touch_indices;
    PathKind kind = PathKind::FULL_PATH;
    // For FULL_PATH: index of the last exit from C_0 before the final hit.
    std::size_t last_exit_index = 0;

    bool touched(double u) const {
        return touch_indices.count(u) > 0 || hit_indices.count(u) > 0;
    }

    std::size_t size() const { return points.size(); }
    const Point& front() const { return points.front(); }
    const Point& back() const { return points.back(); }

    // First index at which the path's log-norm reaches `u` (by linear
    // interpolation between consecutive points), or size() if never.
    std::size_t first_index_at(double u) const {
        auto it = hit_indices.find(u);
        if (it != hit_indices.end()) return it->second;
        if (points.empty()) return 0;
        double prev = points[0].log_norm();
        if (prev >= u && kind != PathKind::FULL_PATH) return 0;
        for (std::size_t i = 1; i < points.size(); ++i) {
            const double cur = points[i].log_norm();
            if ((prev < u && cur >= u) || (prev > u && cur <= u)) return i;
            prev = cur;
        }
        return points.size();
    }
};

} // namespace bxi
