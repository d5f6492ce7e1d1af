#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bxi/record.hpp"

namespace bxi {

// Exact exponent functions (cascade-relation closed forms).
inline double U(double x) {
    if (x < 0.0) throw std::invalid_argument("U: negative argument");
    return (std::sqrt(24.0 * x + 1.0) - 1.0) / std::sqrt(24.0);
}

inline double V(double x) { return (6.0 * x * x - 1.0) / 12.0; }

inline double xi_exact(double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("xi_exact: negative lambda");
    return lambda / 2.0 + 11.0 / 24.0 + (5.0 / 24.0) * std::sqrt(24.0 * lambda + 1.0);
}

// General packet exponent: V applied to the sum of U over all packet sizes
// and all lambda weights.
inline double xi_exact_general(const std::vector<double>& packets,
                               const std::vector<double>& lambdas) {
    if (packets.empty()) throw std::invalid_argument("xi_exact_general: no packets");
    double s = 0.0;
    for (double p : packets) {
        if (p < 1.0) throw std::invalid_argument("xi_exact_general: packet size < 1");
        s += U(p);
    }
    for (double l : lambdas) s += U(l);
    return V(s);
}

struct ExponentFit {
    double xi_hat = 0.0;
    double stderr_ = 0.0;
    double intercept = 0.0;  // log-prefactor
    std::vector<double> r_values;
};

// Weighted least squares of log(value) against r: value ~ A e^{-xi r}.
// Weights are 1/var(log value) with var(log value) = (stderr/value)^2 by
// the delta method; records with zero stderr get unit weight.
inline ExponentFit fit_exponent(const std::vector<EstimateRecord>& records) {
    if (records.size() < 3)
        throw std::invalid_argument("fit_exponent: need at least 3 radii");
    std::vector<double> x, y, w;
    for (const auto& rec : records) {
        if (!(rec.value > 0.0))
            throw std::invalid_argument("fit_exponent: nonpositive estimate at r = " +
                                        std::to_string(rec.r));
        x.push_back(rec.r);
        y.push_back(std::log(rec.value));
        const double rel = rec.stderr_ / rec.value;
        w.push_back(rel > 0.0 ? 1.0 / (rel * rel) : 1.0);
    }
    double sw = 0.0, swx = 0.0, swy = 0.0, swxx = 0.0, swxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        swx += w[i] * x[i];
        swy += w[i] * y[i];
        swxx += w[i] * x[i] * x[i];
        swxy += w[i] * x[i] * y[i];
    }
    const double det = sw * swxx - swx * swx;
    if (!(det > 0.0)) throw std::invalid_argument("fit_exponent: degenerate radii");
    const double slope = (sw * swxy - swx * swy) / det;
    const double icept = (swxx * swy - swx * swxy) / det;
    ExponentFit fit;
    fit.xi_hat = -slope;
    fit.intercept = icept;
    fit.stderr_ = std::sqrt(sw / det);
    for (double xi : x) fit.r_values.push_back(xi);
    return fit;
}

struct FlatnessReport {
    std::map<double, double> values;  // r -> e^{r xi} * estimate
    double c_min = 0.0;
    double c_max = 0.0;

    double band_ratio() const { return c_min > 0.0 ? c_max / c_min : std::numeric_limits<double>::infinity(); }
};

inline FlatnessReport flatness(const std::vector<EstimateRecord>& records, double xi) {
    if (records.empty()) throw std::invalid_argument("flatness: no records");
    FlatnessReport rep;
    rep.c_min = std::numeric_limits<double>::infinity();
    rep.c_max = -rep.c_min;
    for (const auto& rec : records) {
        if (!(rec.value > 0.0))
            throw std::invalid_argument("flatness: nonpositive estimate at r = " +
                                        std::to_string(rec.r));
        const double v = std::exp(rec.r * xi) * rec.value;
        rep.values[rec.r] = v;
        rep.c_min = std::min(rep.c_min, v);
        rep.c_max = std::max(rep.c_max, v);
    }
    return rep;
}

struct SubadditivityReport {
    double max_ratio = 0.0;
    double min_ratio = 0.0;
    std::pair<double, double> argmax{0.0, 0.0};  // (m, n) of the maximal ratio
};

// Ratios value_{m+n+1} / (value_m * value_n) over all integer pairs present
// in the records (submultiplicativity check: the max is the fitted c-hat).
inline SubadditivityReport subadditivity_report(const std::vector<EstimateRecord>& records) {
    std::map<long, double> by_r;
    for (const auto& rec : records) {
        const long r = std::lround(rec.r);
        if (std::fabs(rec.r - r) > 1e-9) continue;  // integer radii only
        by_r[r] = rec.value;
    }
    SubadditivityReport rep;
    rep.max_ratio = -std::numeric_limits<double>::infinity();
    rep.min_ratio = std::numeric_limits<double>::infinity();
    bool any = false;
    for (const auto& [m, vm] : by_r)
        for (const auto& [n, vn] : by_r) {
            auto it = by_r.find(m + n + 1);
            if (it == by_r.end()) continue;
            if (!(vm > 0.0 && vn > 0.0 && it->second > 0.0)) continue;
            const double ratio = it->second / (vm * vn);
            if (ratio > rep.max_ratio) {
                rep.max_ratio = ratio;
                rep.argmax = {static_cast<double>(m), static_cast<double>(n)};
            }
            rep.min_ratio = std::min(rep.min_ratio, ratio);
            any = true;
        }
    if (!any)
        throw std::invalid_argument("subadditivity_report: no (m, n, m+n+1) triple covered");
    return rep;
}

} // namespace bxi
