#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "bxi/rng.hpp"

namespace bxi {

// Exact total excursion-measure mass of the rectangle (0,L) x (0,pi):
// (pi/eps) P[exit right | start uniform on the segment at abscissa eps]
// in the eps -> 0 limit. Separation of variables for the mixed problem
// gives the series sum_{k odd} 8 / (k pi sinh(kL)).
inline double excursion_mass_series(double L) {
    if (!(L > 0.0)) throw std::invalid_argument("excursion_mass_series: L must be > 0");
    double acc = 0.0;
    for (int k = 1;; k += 2) {
        const double term = 8.0 / (k * M_PI * std::sinh(k * L));
        acc += term;
        if (term < 1e-16 * std::max(acc, 1.0)) break;
    }
    return acc;
}

struct MassEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::uint64_t n = 0;
    std::uint64_t successes = 0;
};

// Monte Carlo excursion mass: Brownian motions from uniform points on the
// segment {eps} x (0,pi), absorbed on the rectangle boundary; the estimate
// is (pi/eps) times the right-exit frequency. Absorption combines the
// segment-crossing test with the exact Brownian-bridge touch probability
// exp(-2 d0 d1 / dt) on each of the four boundary lines, so starting within
// one step of the left side carries no survival bias; when several bridges
// fire in one step the earlier one (larger bridge mass, i.e. the nearer
// line) wins, an O(dt) approximation of the crossing order.
inline MassEstimate excursion_mass_rectangle(double L, double eps, double dt,
                                             std::uint64_t n, std::uint64_t seed_value) {
    if (!(eps > 0.0 && eps < L))
        throw std::invalid_argument("excursion_mass_rectangle: need 0 < eps < L");
    if (!(dt > 0.0)) throw std::invalid_argument("excursion_mass_rectangle: dt must be > 0");
    const double sd = std::sqrt(dt);
    std::uint64_t hits = 0;
    for (std::uint64_t trial = 0; trial < n; ++trial) {
        RngStream rng({seed_value, trial});
        double x = eps;
        double y = rng.uniform(0.0, M_PI);
        while (true) {
            double gx, gy;
            rng.normal_pair(gx, gy);
            const double nx = x + sd * gx;
            const double ny = y + sd * gy;
            // Earliest boundary crossing along the straight segment.
            double t_exit = 2.0;
            bool right = false;
            auto consider = [&](double t, bool is_right) {
                if (t >= 0.0 && t < t_exit) {
                    t_exit = t;
                    right = is_right;
                }
            };
            if (nx <= 0.0) consider((0.0 - x) / (nx - x), false);
            if (nx >= L) consider((L - x) / (nx - x), true);
            if (ny <= 0.0) consider((0.0 - y) / (ny - y), false);
            if (ny >= M_PI) consider((M_PI - y) / (ny - y), false);
            if (t_exit <= 1.0) {
                hits += right ? 1 : 0;
                break;
            }
            // Bridge touches of the boundary lines the skeleton stepped over.
            double best_mass = 0.0;
            bool bridge_right = false;
            bool absorbed = false;
            auto bridge = [&](double d0, double d1, bool is_right) {
                const double mass = std::exp(-2.0 * d0 * d1 / dt);
                if (rng.uniform() < mass) {
                    absorbed = true;
                    if (mass > best_mass) {
                        best_mass = mass;
                        bridge_right = is_right;
                    }
                }
            };
            bridge(x, nx, false);
            bridge(L - x, L - nx, true);
            bridge(y, ny, false);
            bridge(M_PI - y, M_PI - ny, false);
            if (absorbed) {
                hits += bridge_right ? 1 : 0;
                break;
            }
            x = nx;
            y = ny;
        }
    }
    MassEstimate est;
    est.n = n;
    est.successes = hits;
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    const double scale = M_PI / eps;
    est.value = scale * p;
    est.stderr_ = scale * std::sqrt(std::max(p * (1.0 - p), 1.0 / n) / n);
    return est;
}

} // namespace bxi
