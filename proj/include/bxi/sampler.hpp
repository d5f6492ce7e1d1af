#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "bxi/path.hpp"
#include "bxi/rng.hpp"

namespace bxi {

inline constexpr std::uint64_t kStepCap = 10'000'000'000ULL;

inline Point circle_point(double u, double theta) {
    const double radius = std::exp(u);
    return {radius * std::cos(theta), radius * std::sin(theta)};
}

inline Point uniform_circle_point(double u, RngStream& rng) {
    return circle_point(u, rng.uniform(0.0, 2.0 * M_PI));
}

// Independent sub-stream for Brownian-bridge barrier tests: keeping the
// bridge draws off the main stream means the simulated point sequence does
// not depend on which circles are being watched.
inline RandomSeed bridge_seed(RandomSeed seed) {
    return {seed.value ^ 0xb5ad4eceda1ce2a9ULL, seed.stream_id};
}

// Records first arrival indices at a fixed sorted set of log-radius levels,
// plus the last crossing of the level u = 0 (for last-exit extraction).
// Crossings are detected by straddling of consecutive squared radii, which
// is equivalent to linear interpolation of the log-norm.
class LevelTracker {
public:
    LevelTracker() = default;

    explicit LevelTracker(std::vector<double> levels) : levels_(std::move(levels)) {
        sq_.reserve(levels_.size());
        for (double u : levels_) sq_.push_back(std::exp(2.0 * u));
        first_hit_.assign(levels_.size(), kNever);
        first_touch_.assign(levels_.size(), kNever);
        zero_index_ = static_cast<std::size_t>(
            std::find(levels_.begin(), levels_.end(), 0.0) - levels_.begin());
    }

    // Turns on bridge-corrected touch detection: for every step that ends on
    // the same side of a nearby circle, a touch is registered with the exact
    // Brownian-bridge crossing probability exp(-2 d0 d1 / dt) in local
    // Cartesian distances. The rng must outlive the tracker.
    void enable_bridge(double dt, RngStream* rng) {
        bridge_dt_ = dt;
        bridge_rng_ = rng;
        const double margin = 6.0 * std::sqrt(dt);
        radius_.clear();
        sq_touch_lo_.clear();
        sq_touch_hi_.clear();
        for (double u : levels_) {
            const double rho = std::exp(u);
            radius_.push_back(rho);
            const double lo = std::max(rho - margin, 0.0);
            sq_touch_lo_.push_back(lo * lo);
            const double hi = rho + margin;
            sq_touch_hi_.push_back(hi * hi);
        }
    }

    // Standard level set: integer and half-integer log-radii in [lo, hi].
    static LevelTracker half_integer(double lo, double hi) {
        std::vector<double> levels;
        for (double u = std::ceil(lo * 2.0) / 2.0; u <= hi + 1e-12; u += 0.5)
            levels.push_back(u);
        return LevelTracker(std::move(levels));
    }

    void reset(double start_norm2, std::size_t start_index) {
        std::fill(first_hit_.begin(), first_hit_.end(), kNever);
        std::fill(first_touch_.begin(), first_touch_.end(), kNever);
        last_zero_cross_ = 0;
        band_ = static_cast<int>(
            std::upper_bound(sq_.begin(), sq_.end(), start_norm2) - sq_.begin());
        if (band_ > 0 && sq_[band_ - 1] == start_norm2) {
            // Starting exactly on a level circle counts as an initial hit.
            record(static_cast<std::size_t>(band_ - 1), start_index);
        }
    }

    void update(double norm2, std::size_t index) {
        while (band_ < static_cast<int>(sq_.size()) && norm2 >= sq_[band_]) {
            record(static_cast<std::size_t>(band_), index);
            ++band_;
        }
        while (band_ > 0 && norm2 < sq_[band_ - 1]) {
            --band_;
            record(static_cast<std::size_t>(band_), index);
        }
    }

    // Straddle detection plus bridge-corrected touch tests against the two
    // circles adjacent to the current band (when enabled via enable_bridge).
    void update_segment(double prev_norm2, double norm2, std::size_t index) {
        update(norm2, index);
        if (!bridge_rng_) return;
        const int below = band_ - 1;
        if (below >= 0 && first_touch_[below] == kNever &&
            (norm2 < sq_touch_hi_[below] || prev_norm2 < sq_touch_hi_[below])) {
            const double d0 = std::sqrt(prev_norm2) - radius_[below];
            const double d1 = std::sqrt(norm2) - radius_[below];
            if (d0 > 0.0 && d1 > 0.0 &&
                bridge_rng_->uniform() < std::exp(-2.0 * d0 * d1 / bridge_dt_))
                first_touch_[below] = index;
        }
        const int above = band_;
        if (above < static_cast<int>(sq_.size()) && first_touch_[above] == kNever &&
            (norm2 > sq_touch_lo_[above] || prev_norm2 > sq_touch_lo_[above])) {
            const double d0 = radius_[above] - std::sqrt(prev_norm2);
            const double d1 = radius_[above] - std::sqrt(norm2);
            if (d0 > 0.0 && d1 > 0.0 &&
                bridge_rng_->uniform() < std::exp(-2.0 * d0 * d1 / bridge_dt_))
                first_touch_[above] = index;
        }
    }

    static constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();

    const std::vector<double>& levels() const { return levels_; }
    std::size_t first_hit(std::size_t level_index) const { return first_hit_[level_index]; }
    std::size_t first_touch(std::size_t level_index) const { return first_touch_[level_index]; }
    bool touched(std::size_t level_index) const { return first_touch_[level_index] != kNever; }
    std::size_t last_zero_cross() const { return last_zero_cross_; }

    void fill_hit_indices(SampledPath& path) const {
        for (std::size_t k = 0; k < levels_.size(); ++k) {
            if (first_hit_[k] != kNever) path.hit_indices[levels_[k]] = first_hit_[k];
            if (first_touch_[k] != kNever) path.touch_indices[levels_[k]] = first_touch_[k];
        }
    }

private:
    void record(std::size_t level_index, std::size_t index) {
        if (first_hit_[level_index] == kNever) first_hit_[level_index] = index;
        if (first_touch_[level_index] == kNever) first_touch_[level_index] = index;
        if (level_index == zero_index_) last_zero_cross_ = index;
    }

    std::vector<double> levels_;
    std::vector<double> sq_;
    std::vector<std::size_t> first_hit_;
    std::vector<std::size_t> first_touch_;
    std::size_t zero_index_ = kNever;
    std::size_t last_zero_cross_ = 0;
    int band_ = 0;
    // Bridge state (inactive until enable_bridge).
    double bridge_dt_ = 0.0;
    RngStream* bridge_rng_ = nullptr;
    std::vector<double> radius_, sq_touch_lo_, sq_touch_hi_;
};

enum class WalkExit { OUTER, INNER };

struct WalkOutcome {
    WalkExit exit = WalkExit::OUTER;
    Point end;               // placed exactly on the absorbing circle
    std::size_t end_index = 0;  // point index of the absorbed endpoint
};

struct NoObserver {
    void operator()(const Point&, const Point&, std::size_t) const {}
};

// Fixed-dt Euler walk in Cartesian coordinates, absorbed at the circle of
// log-radius `outer_u` and (when inner_u > -inf) at `inner_u`. The observer
// sees every raw segment (p0, p1, arrival_index) including the final
// overshooting one; the returned endpoint is interpolated onto the circle.
// When `bridge_rng` is given, absorption additionally fires on
// Brownian-bridge touches of the inner or outer circle that the discrete
// skeleton stepped over, removing the O(sqrt(dt)) one-sided survival bias
// at both barriers. The two bridge events live in disjoint radial bands, so
// each in-band step consumes exactly one uniform.
template <class OnSegment = NoObserver>
WalkOutcome run_euler_walk(Point start, double dt, double inner_u, double outer_u,
                           RngStream& rng, OnSegment&& on_segment = {},
                           LevelTracker* tracker = nullptr,
                           RngStream* bridge_rng = nullptr) {
    if (dt <= 0.0) throw std::invalid_argument("run_euler_walk: dt must be positive");
    const double sq_out = std::exp(2.0 * outer_u);
    const bool has_inner = inner_u > -std::numeric_limits<double>::infinity();
    const double sq_in = has_inner ? std::exp(2.0 * inner_u) : 0.0;
    const double rho_in = has_inner ? std::exp(inner_u) : 0.0;
    const double bridge_band =
        has_inner ? (rho_in + 6.0 * std::sqrt(dt)) * (rho_in + 6.0 * std::sqrt(dt)) : 0.0;
    const double rho_out = std::exp(outer_u);
    const double out_edge = std::max(rho_out - 6.0 * std::sqrt(dt), 0.0);
    const double sq_bridge_out = out_edge * out_edge;
    const double sigma = std::sqrt(dt);

    Point p = start;
    double n2 = p.norm2();
    if (tracker) tracker->reset(n2, 0);

    for (std::uint64_t step = 1;; ++step) {
        if (step > kStepCap)
            throw std::runtime_error(
                "run_euler_walk: step cap 1e10 exceeded; check dt against the target radius");
        double g1, g2;
        rng.normal_pair(g1, g2);
        const Point q{p.x + sigma * g1, p.y + sigma * g2};
        const double q2 = q.norm2();
        const std::size_t idx = static_cast<std::size_t>(step);
        on_segment(p, q, idx);
        if (tracker) tracker->update_segment(n2, q2, idx);

        if (q2 >= sq_out || (has_inner && q2 <= sq_in)) {
            const bool outer = q2 >= sq_out;
            const double target_u = outer ? outer_u : inner_u;
            const double u0 = 0.5 * std::log(n2);
            const double u1 = 0.5 * std::log(q2);
            const double t = (u1 == u0) ? 1.0 : (target_u - u0) / (u1 - u0);
            Point e{p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
            const double scale = std::exp(target_u) / std::sqrt(e.norm2());
            e.x *= scale;
            e.y *= scale;
            return {outer ? WalkExit::OUTER : WalkExit::INNER, e, idx};
        }
        if (has_inner && bridge_rng && (q2 < bridge_band || n2 < bridge_band)) {
            const double d0 = std::sqrt(n2) - rho_in;
            const double d1 = std::sqrt(q2) - rho_in;
            if (d0 > 0.0 && d1 > 0.0 &&
                bridge_rng->uniform() < std::exp(-2.0 * d0 * d1 / dt)) {
                const double scale = rho_in / std::sqrt(q2);
                return {WalkExit::INNER, {q.x * scale, q.y * scale}, idx};
            }
        } else if (bridge_rng && (q2 > sq_bridge_out || n2 > sq_bridge_out)) {
            const double d0 = rho_out - std::sqrt(n2);
            const double d1 = rho_out - std::sqrt(q2);
            if (d0 > 0.0 && d1 > 0.0 &&
                bridge_rng->uniform() < std::exp(-2.0 * d0 * d1 / dt)) {
                const double scale = rho_out / std::sqrt(q2);
                return {WalkExit::OUTER, {q.x * scale, q.y * scale}, idx};
            }
        }
        p = q;
        n2 = q2;
    }
}

// The standard tracked-circle set of a full path: every integer and
// half-integer log-radius in [-2, r], plus any extra levels requested.
inline LevelTracker full_path_tracker(double r, const std::vector<double>& extra_levels) {
    if (extra_levels.empty()) return LevelTracker::half_integer(-2.0, r);
    std::vector<double> levels;
    for (double u = -2.0; u <= r + 1e-12; u += 0.5) levels.push_back(u);
    levels.insert(levels.end(), extra_levels.begin(), extra_levels.end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    return LevelTracker(std::move(levels));
}

// Planar Brownian motion from a point on C_0 (uniform unless a start angle
// is pinned), run to its first hit of C_r. Records first-hit indices at
// every integer and half-integer log-radius in [-2, r] that the path
// visits, the bridge-corrected touch set, and the last exit from C_0.
inline SampledPath sample_full_path(double r, double dt, RandomSeed seed,
                                    const std::vector<double>& extra_levels = {},
                                    const double* start_theta = nullptr) {
    if (r <= 0.0) throw std::invalid_argument("sample_full_path: r must be positive");
    RngStream rng(seed);
    RngStream bridge_rng(bridge_seed(seed));
    SampledPath path;
    path.dt = dt;
    path.kind = PathKind::FULL_PATH;
    path.points.push_back(start_theta ? circle_point(0.0, *start_theta)
                                      : uniform_circle_point(0.0, rng));

    LevelTracker tracker = full_path_tracker(r, extra_levels);
    tracker.enable_bridge(dt, &bridge_rng);
    auto store = [&path](const Point&, const Point& q, std::size_t) {
        path.points.push_back(q);
    };
    const WalkOutcome out = run_euler_walk(path.points.front(), dt,
                                           -std::numeric_limits<double>::infinity(), r,
                                           rng, store, &tracker);
    path.points.back() = out.end;
    tracker.fill_hit_indices(path);
    path.hit_indices[r] = out.end_index;
    const std::size_t cross = tracker.last_zero_cross();
    path.last_exit_index = cross > 0 ? cross - 1 : 0;
    return path;
}

// Brownian upcrossing of an annulus: radial log-coordinate is the norm of a
// 3-dimensional Gaussian walk started at 0 (a Bessel(3) process, exact in
// law at grid times), angular coordinate an independent Gaussian walk from
// a uniform angle; stopped at the first hit of the outer circle.
inline SampledPath sample_upcrossing(const AnnulusSpec& annulus, double dt, RandomSeed seed) {
    RngStream rng(seed);
    SampledPath path;
    path.dt = dt;
    path.kind = PathKind::UPCROSSING;

    const double width = annulus.width();
    const double sigma = std::sqrt(dt);
    double wx = 0.0, wy = 0.0, wz = 0.0;
    double u = 0.0;
    double theta = rng.uniform(0.0, 2.0 * M_PI);

    LevelTracker tracker = LevelTracker::half_integer(annulus.r_in, annulus.r_out);
    path.points.push_back(circle_point(annulus.r_in, theta));
    tracker.reset(std::exp(2.0 * annulus.r_in), 0);

    for (std::uint64_t step = 1;; ++step) {
        if (step > kStepCap)
            throw std::runtime_error("sample_upcrossing: step cap 1e10 exceeded");
        double g1, g2, g3, g4;
        rng.normal_pair(g1, g2);
        rng.normal_pair(g3, g4);
        wx += sigma * g1;
        wy += sigma * g2;
        wz += sigma * g3;
        const double u_new = std::sqrt(wx * wx + wy * wy + wz * wz);
        const double theta_new = theta + sigma * g4;
        const std::size_t idx = static_cast<std::size_t>(step);

        if (u_new >= width) {
            const double t = (u_new == u) ? 1.0 : (width - u) / (u_new - u);
            const double theta_end = theta + t * (theta_new - theta);
            path.points.push_back(circle_point(annulus.r_out, theta_end));
            tracker.update(std::exp(2.0 * annulus.r_out), idx);
            tracker.fill_hit_indices(path);
            path.hit_indices[annulus.r_out] = idx;
            break;
        }
        path.points.push_back(circle_point(annulus.r_in + u_new, theta_new));
        tracker.update(std::exp(2.0 * (annulus.r_in + u_new)), idx);
        u = u_new;
        theta = theta_new;
    }
    return path;
}

// Brownian motion from the endpoint of `path` (on C_r), conditioned to hit
// C_{r_prime} before C_0, implemented by rejection. The attempt count is
// reported through `attempts` when given; the acceptance rate is r/r_prime.
inline SampledPath extend_conditioned(const SampledPath& path, double r_prime, double dt,
                                      RandomSeed seed, std::uint64_t* attempts = nullptr) {
    if (path.points.empty()) throw std::invalid_argument("extend_conditioned: empty path");
    const Point start = path.back();
    const double r = start.log_norm();
    if (r <= 0.0) throw std::invalid_argument("extend_conditioned: path must end outside C_0");
    if (!(r_prime > r + hit_tolerance(dt)))
        throw std::invalid_argument("extend_conditioned: degenerate target r_prime <= r");

    RngStream rng(seed);
    RngStream bridge_rng(bridge_seed(seed));
    SampledPath ext;
    ext.dt = dt;
    ext.kind = PathKind::EXTENSION;
    std::uint64_t tries = 0;
    for (;;) {
        ++tries;
        ext.points.clear();
        ext.points.push_back(start);
        auto store = [&ext](const Point&, const Point& q, std::size_t) {
            ext.points.push_back(q);
        };
        const WalkOutcome out =
            run_euler_walk(start, dt, 0.0, r_prime, rng, store, nullptr, &bridge_rng);
        if (out.exit == WalkExit::OUTER) {
            ext.points.back() = out.end;
            ext.hit_indices[r_prime] = out.end_index;
            break;
        }
    }
    if (attempts) *attempts = tries;
    return ext;
}

// ---------------------------------------------------------------------------
// Strip-coordinate extension legs.  In log-polar ("strip") coordinates a
// planar Brownian path is a complex Brownian motion up to a time change, so
// the radial and angular components are independent Brownian motions in the
// strip clock.  The time change does not affect any path-geometry
// functional (rasters, extremal distances, wedge events), which lets the
// angular component be importance-sampled exactly: conditionally on the
// radial leg, the angle is a Gaussian bridge with a closed-form density.
// ---------------------------------------------------------------------------

// Radial component of one extension attempt: Brownian motion in u from
// u_start, absorbed at 0 (with the Brownian-bridge touch correction) or at
// u_out (interpolated onto the level). ds[i] is the duration of step i.
struct StripLeg {
    std::vector<double> u;
    std::vector<double> ds;
    double total = 0.0;  // sum of ds
    bool reached_outer = false;

    // First index whose u-value reaches `level` by interpolation, or
    // u.size() if never.
    std::size_t first_at(double level) const {
        for (std::size_t i = 1; i < u.size(); ++i)
            if ((u[i - 1] < level && u[i] >= level) || (u[i - 1] > level && u[i] <= level))
                return i;
        return u.size();
    }

    bool reaches(double level) const { return first_at(level) < u.size(); }
};

inline StripLeg sample_radial_leg(double u_start, double u_out, double dt,
                                  RngStream& rng, RngStream& bridge_rng) {
    if (!(u_start > 0.0 && u_out > u_start))
        throw std::invalid_argument("sample_radial_leg: need 0 < u_start < u_out");
    StripLeg leg;
    leg.u.push_back(u_start);
    const double sigma = std::sqrt(dt);
    double u = u_start;
    for (std::uint64_t step = 1;; ++step) {
        if (step > kStepCap) throw std::runtime_error("sample_radial_leg: step cap exceeded");
        const double v = u + sigma * rng.normal();
        if (v >= u_out) {
            const double t = (v == u) ? 1.0 : (u_out - u) / (v - u);
            leg.u.push_back(u_out);
            leg.ds.push_back(t * dt);
            leg.total += t * dt;
            leg.reached_outer = true;
            return leg;
        }
        if (v <= 0.0) {
            const double t = (v == u) ? 1.0 : (0.0 - u) / (v - u);
            leg.u.push_back(0.0);
            leg.ds.push_back(t * dt);
            leg.total += t * dt;
            return leg;
        }
        // Bridge touches of u = 0 or u = u_out that the skeleton stepped
        // over; the two events are disjoint sub-intervals of one uniform.
        const double p_in = std::exp(-2.0 * u * v / dt);
        const double p_out = std::exp(-2.0 * (u_out - u) * (u_out - v) / dt);
        const double draw = bridge_rng.uniform();
        if (draw < p_in) {
            leg.u.push_back(0.0);
            leg.ds.push_back(dt);
            leg.total += dt;
            return leg;
        }
        if (draw > 1.0 - p_out) {
            leg.u.push_back(u_out);
            leg.ds.push_back(dt);
            leg.total += dt;
            leg.reached_outer = true;
            return leg;
        }
        leg.u.push_back(v);
        leg.ds.push_back(dt);
        leg.total += dt;
        u = v;
    }
}

// Free angular walk along the radial clock: theta_i+1 = theta_i + sqrt(ds) g.
inline std::vector<double> free_angle_walk(const StripLeg& leg, double theta0,
                                           RngStream& rng) {
    std::vector<double> th;
    th.reserve(leg.u.size());
    th.push_back(theta0);
    for (double ds : leg.ds) th.push_back(th.back() + std::sqrt(ds) * rng.normal());
    return th;
}

// Angular Brownian bridge from theta0 to thetaS along the leg's clock,
// sampled by sequential conditioning (exact, per-step durations honored).
inline std::vector<double> bridge_angle_walk(const StripLeg& leg, double theta0,
                                             double thetaS, RngStream& rng) {
    std::vector<double> th;
    th.reserve(leg.u.size());
    th.push_back(theta0);
    double remaining = leg.total;
    for (std::size_t i = 0; i < leg.ds.size(); ++i) {
        const double ds = leg.ds[i];
        if (i + 1 == leg.ds.size() || remaining <= ds) {
            th.push_back(thetaS);
            break;
        }
        const double mean = th.back() + (thetaS - th.back()) * ds / remaining;
        const double var = ds * (remaining - ds) / remaining;
        th.push_back(mean + std::sqrt(std::max(var, 0.0)) * rng.normal());
        remaining -= ds;
    }
    while (th.size() < leg.u.size()) th.push_back(thetaS);
    return th;
}

// Standard normal CDF and quantile. The quantile is Acklam's rational
// approximation refined by one Halley step, accurate to machine precision
// over (0, 1) including the far tails (where the input comes from erfc).
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double norm_quantile(double p) {
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // One Halley refinement against the erfc-based CDF.
    const double e = norm_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

// N(mean, sd^2) mass of the interval [lo, hi], evaluated on the side of the
// nearer tail so far-tail windows keep relative precision.
inline double norm_window_mass(double mean, double sd, double lo, double hi) {
    const double z1 = (lo - mean) / sd;
    const double z2 = (hi - mean) / sd;
    if (z1 >= 0.0) return norm_cdf(-z1) - norm_cdf(-z2);
    return norm_cdf(z2) - norm_cdf(z1);
}

// Exact draw from N(mean, sd^2) truncated to [lo, hi] by CDF inversion,
// carried out on the nearer-tail side for numerical stability.
inline double trunc_normal(double mean, double sd, double lo, double hi, RngStream& rng) {
    const double z1 = (lo - mean) / sd;
    const double z2 = (hi - mean) / sd;
    const double u = rng.uniform();
    double z;
    if (z1 >= 0.0) {
        const double t1 = norm_cdf(-z1);
        const double t2 = norm_cdf(-z2);
        z = -norm_quantile(t2 + u * (t1 - t2));
    } else {
        const double t1 = norm_cdf(z1);
        const double t2 = norm_cdf(z2);
        z = norm_quantile(t1 + u * (t2 - t1));
    }
    return mean + sd * std::clamp(z, z1, z2);
}

// Angular path importance-sampled with up to two pins. The pin at the
// leg's first passage of `band_level` is drawn from the free walk's exact
// Gaussian law truncated to the union of windows of half-width w_mid
// around target + 2 pi k, k in {-n_wind..n_wind} (winding component chosen
// with its true conditional probability); the endpoint pin is the
// truncated Gaussian on the same component's window of half-width w_end.
// Between pins the path is an exact Brownian bridge. Therefore exp(log_lr)
// is dP/dQ against the free angular walk restricted to the proposal
// support -- a product of window masses, so it lies in [0, 1] -- and
// E_free[f] = E_Q[exp(log_lr) f] for any f supported on paths whose pin
// values fall in a common winding component's windows. log_lr is -inf when
// the windows carry no mass (the trial contributes zero).
struct BridgedAngles {
    std::vector<double> theta;
    double log_lr = -std::numeric_limits<double>::infinity();
};

// Pin schedule over a strip leg: a pin at every crossing of the band
// level, a refresh pin each kPinAbove of clock time while above the band
// (where the wedge constraint applies) and each kPinBelow below it, and
// the endpoint. s_first is the clock time at the first above-band pin; the
// corridor center drifts linearly in the clock from the start angle to the
// winding center over that stretch and stays at the center afterwards.
struct PinSchedule {
    std::vector<std::size_t> idx;
    std::vector<double> span;  // clock time since the previous pin
    double s_first = 0.0;

    // Corridor window [center - w, center + w] of pin p for winding
    // center ctr; theta0 is the leg's start angle.
    struct Window {
        double center, w;
    };
    Window window(const StripLeg& leg, std::size_t p, double cum_s, double theta0,
                  double ctr, double band_level, double w_mid, double w_end,
                  double w_low) const {
        if (leg.u[idx[p]] >= band_level)
            return {ctr, idx[p] == leg.ds.size() ? w_end : w_mid};
        const double frac = std::clamp(cum_s / std::max(s_first, 1e-300), 0.0, 1.0);
        return {theta0 + (ctr - theta0) * frac, w_low};
    }
};

inline PinSchedule build_pin_schedule(const StripLeg& leg, double band_level) {
    constexpr double kPinAbove = 0.0025;
    constexpr double kPinBelow = 0.01;
    PinSchedule sched;
    const std::size_t n_steps = leg.ds.size();
    double since_pin = 0.0;
    double since_prev = 0.0;
    for (std::size_t i = 1; i <= n_steps; ++i) {
        const double ds = leg.ds[i - 1];
        since_prev += ds;
        since_pin += ds;
        const bool above_prev = leg.u[i - 1] >= band_level;
        const bool above = leg.u[i] >= band_level;
        const bool refresh = since_pin >= (above_prev && above ? kPinAbove : kPinBelow);
        if (i == n_steps || above_prev != above || refresh) {
            sched.idx.push_back(i);
            sched.span.push_back(since_prev);
            since_prev = 0.0;
            since_pin = 0.0;
        }
    }
    double cum = 0.0;
    sched.s_first = leg.total;
    for (std::size_t p = 0; p < sched.idx.size(); ++p) {
        cum += sched.span[p];
        if (leg.u[sched.idx[p]] >= band_level) {
            sched.s_first = cum;
            break;
        }
    }
    return sched;
}

// Deterministic proxy for the proposal's total window mass along the
// corridor of winding center ctr: the product of window masses evaluated
// as if each pin landed exactly on its window center. Shares the dominant
// Gaussian drift cost with the sampled likelihood ratio, so lr/proxy is
// O(1); used as a resampling weight over (leg, winding) pools. Returns the
// log, or -inf when some factor underflows.
inline double pinned_mass_proxy(const StripLeg& leg, const PinSchedule& sched,
                                double theta0, double ctr, double band_level,
                                double w_mid, double w_end, double w_low) {
    double log_mass = 0.0;
    double prev_center = theta0;
    double cum_s = 0.0;
    for (std::size_t p = 0; p < sched.idx.size(); ++p) {
        cum_s += sched.span[p];
        const auto win = sched.window(leg, p, cum_s, theta0, ctr, band_level, w_mid,
                                      w_end, w_low);
        const double sd = std::sqrt(std::max(sched.span[p], 1e-300));
        const double m =
            norm_window_mass(prev_center, sd, win.center - win.w, win.center + win.w);
        if (!(m > 0.0)) return -std::numeric_limits<double>::infinity();
        log_mass += std::log(m);
        prev_center = win.center;
    }
    return log_mass;
}

// Angular path pinned to the corridor of the fixed winding center ctr;
// log_lr is the log-product of window masses (so dP/dQ against the free
// angular walk restricted to the corridor support).
inline BridgedAngles pinned_angles(const StripLeg& leg, const PinSchedule& sched,
                                   double theta0, double ctr, double band_level,
                                   double w_mid, double w_end, double w_low,
                                   RngStream& rng) {
    BridgedAngles out;
    out.theta.assign(leg.u.size(), theta0);
    if (leg.ds.empty()) return out;

    // Sequential-conditioning Brownian bridge from index i0 to the pin at
    // index i1 over clock time `span`.
    auto fill_bridge = [&](std::size_t i0, std::size_t i1, double pin, double span) {
        double remaining = span;
        for (std::size_t i = i0; i + 1 < i1; ++i) {
            const double ds = leg.ds[i];
            if (remaining - ds <= 0.0) {
                out.theta[i + 1] = pin;
            } else {
                const double cur = out.theta[i];
                const double mean = cur + (pin - cur) * ds / remaining;
                const double var = ds * (remaining - ds) / remaining;
                out.theta[i + 1] = mean + std::sqrt(std::max(var, 0.0)) * rng.normal();
            }
            remaining -= ds;
        }
        out.theta[i1] = pin;
    };

    double log_lr = 0.0;
    double prev_val = theta0;
    std::size_t prev_idx = 0;
    double cum_s = 0.0;
    for (std::size_t p = 0; p < sched.idx.size(); ++p) {
        cum_s += sched.span[p];
        const auto win = sched.window(leg, p, cum_s, theta0, ctr, band_level, w_mid,
                                      w_end, w_low);
        const double sd = std::sqrt(std::max(sched.span[p], 1e-300));
        const double m =
            norm_window_mass(prev_val, sd, win.center - win.w, win.center + win.w);
        if (!(m > 0.0)) return out;
        const double pin_val =
            trunc_normal(prev_val, sd, win.center - win.w, win.center + win.w, rng);
        log_lr += std::log(m);
        fill_bridge(prev_idx, sched.idx[p], pin_val, sched.span[p]);
        prev_val = pin_val;
        prev_idx = sched.idx[p];
    }
    out.log_lr = log_lr;
    return out;
}

// Uniform winding-mixture wrapper: component centers target + 2 pi k, k in
// {-n_wind..n_wind}, have disjoint support (endpoint windows 2 pi apart),
// so the mixture likelihood ratio is n_comp times the component's.
inline BridgedAngles winding_pin_angles(const StripLeg& leg, double theta0, double target,
                                        double band_level, double w_mid, double w_end,
                                        double w_low, int n_wind, RngStream& rng) {
    const int n_comp = 2 * n_wind + 1;
    const int j = std::min<int>(static_cast<int>(rng.uniform() * n_comp), n_comp - 1);
    const double ctr = target + 2.0 * M_PI * (j - n_wind);
    const PinSchedule sched = build_pin_schedule(leg, band_level);
    BridgedAngles out =
        pinned_angles(leg, sched, theta0, ctr, band_level, w_mid, w_end, w_low, rng);
    if (std::isfinite(out.log_lr)) out.log_lr += std::log(static_cast<double>(n_comp));
    return out;
}

// Cartesian polyline of a strip leg; an EXTENSION whose endpoint lies on
// C_{u_out} when the leg reached the outer level.
inline SampledPath strip_to_path(const StripLeg& leg, const std::vector<double>& theta,
                                 double dt) {
    if (theta.size() != leg.u.size())
        throw std::invalid_argument("strip_to_path: component length mismatch");
    SampledPath path;
    path.dt = dt;
    path.kind = PathKind::EXTENSION;
    path.points.reserve(leg.u.size());
    for (std::size_t i = 0; i < leg.u.size(); ++i)
        path.points.push_back(circle_point(leg.u[i], theta[i]));
    if (leg.reached_outer) path.hit_indices[leg.u.back()] = leg.u.size() - 1;
    return path;
}

// Truncation of a strip leg (and its angle path) at the first crossing of
// `level`, with the crossing point interpolated onto the level.
inline SampledPath strip_to_path_truncated(const StripLeg& leg,
                                           const std::vector<double>& theta,
                                           double level, double dt) {
    const std::size_t k = leg.first_at(level);
    if (k >= leg.u.size())
        throw std::invalid_argument("strip_to_path_truncated: leg never reaches level");
    SampledPath path;
    path.dt = dt;
    path.kind = PathKind::EXTENSION;
    for (std::size_t i = 0; i < k; ++i)
        path.points.push_back(circle_point(leg.u[i], theta[i]));
    const double du = leg.u[k] - leg.u[k - 1];
    const double t = (du == 0.0) ? 1.0 : (level - leg.u[k - 1]) / du;
    path.points.push_back(circle_point(level, theta[k - 1] + t * (theta[k] - theta[k - 1])));
    path.hit_indices[level] = path.points.size() - 1;
    return path;
}

// Pointwise complex inverse, order-reversed: an upcrossing of A(r, r')
// becomes an upcrossing of A(-r', -r). Hit indices are rebuilt by scanning.
inline SampledPath invert_reverse(const SampledPath& path) {
    SampledPath out;
    out.dt = path.dt;
    out.kind = path.kind;
    out.points.reserve(path.points.size());
    for (auto it = path.points.rbegin(); it != path.points.rend(); ++it) {
        const double n2 = it->norm2();
        out.points.push_back({it->x / n2, -it->y / n2});
    }
    if (!out.points.empty()) {
        const double lo = out.points.front().log_norm();
        const double hi = out.points.back().log_norm();
        for (double u = std::ceil(lo * 2.0) / 2.0; u <= hi + 1e-12; u += 0.5) {
            const std::size_t idx = out.first_index_at(u);
            if (idx < out.points.size()) out.hit_indices[u] = idx;
        }
    }
    return out;
}

// Splits an upcrossing of A(0, r') at its first hit of C_{r_mid}: the first
// part is an upcrossing of A(0, r_mid), the remainder is distributed as a
// conditioned extension. The two point sequences concatenate (sharing the
// split point) to the input.
inline std::pair<SampledPath, SampledPath> decompose_upcrossing(const SampledPath& path,
                                                                double r_mid) {
    if (path.kind != PathKind::UPCROSSING)
        throw std::invalid_argument("decompose_upcrossing: input must be an upcrossing");
    const double r_out = path.back().log_norm();
    const double r_in = path.front().log_norm();
    if (!(r_mid > r_in && r_mid < r_out))
        throw std::invalid_argument("decompose_upcrossing: r_mid must be strictly interior");

    const std::size_t split = path.first_index_at(r_mid);
    if (split >= path.points.size())
        throw std::invalid_argument("decompose_upcrossing: path never reaches r_mid");

    SampledPath head;
    head.dt = path.dt;
    head.kind = PathKind::UPCROSSING;
    head.points.assign(path.points.begin(), path.points.begin() + split + 1);
    for (const auto& [u, idx] : path.hit_indices)
        if (idx <= split) head.hit_indices[u] = idx;

    SampledPath tail;
    tail.dt = path.dt;
    tail.kind = PathKind::EXTENSION;
    tail.points.assign(path.points.begin() + split, path.points.end());
    for (const auto& [u, idx] : path.hit_indices)
        if (idx >= split) tail.hit_indices[u] = idx - split;
    return {std::move(head), std::move(tail)};
}

// The terminal upcrossing part Y[S_r, T_r] of a full path, prefixed by the
// interpolated last-exit point on C_0.
inline SampledPath extract_upcrossing_part(const SampledPath& full) {
    if (full.kind != PathKind::FULL_PATH)
        throw std::invalid_argument("extract_upcrossing_part: expects a FULL_PATH");
    const std::size_t s = full.last_exit_index;
    SampledPath up;
    up.dt = full.dt;
    up.kind = PathKind::UPCROSSING;

    // Place the first point exactly on C_0 along the crossing segment.
    if (s + 1 < full.points.size()) {
        const Point& a = full.points[s];
        const Point& b = full.points[s + 1];
        const double u0 = a.log_norm();
        const double u1 = b.log_norm();
        const double t = (u1 == u0) ? 0.0 : (0.0 - u0) / (u1 - u0);
        Point e{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
        const double scale = 1.0 / std::sqrt(e.norm2());
        up.points.push_back({e.x * scale, e.y * scale});
    }
    up.points.insert(up.points.end(), full.points.begin() + s + 1, full.points.end());
    for (const auto& [u, idx] : full.hit_indices)
        if (idx > s && u >= 0.0) up.hit_indices[u] = idx - s;
    return up;
}

} // namespace bxi
