#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bxi/exponents.hpp"

using namespace bxi;

TEST_CASE("closed-form exponent values") {
    REQUIRE(xi_exact(1.0) == Catch::Approx(2.0).margin(1e-13));
    REQUIRE(xi_exact(0.0) == Catch::Approx(2.0 / 3.0).margin(1e-13));
    // xi(2,2) = 1 + 11/24 + (5/24) * 7 = 35/12
    REQUIRE(xi_exact(2.0) == Catch::Approx(35.0 / 12.0).margin(1e-13));
}

TEST_CASE("U and V compose to the cascade identity") {
    for (int i = 0; i <= 100; ++i) {
        const double lam = 0.1 * i;
        REQUIRE(V(U(2.0) + U(lam)) == Catch::Approx(xi_exact(lam)).margin(1e-12));
    }
    REQUIRE_THROWS_AS(U(-0.1), std::invalid_argument);
    REQUIRE_THROWS_AS(xi_exact(-1e-9), std::invalid_argument);
}

TEST_CASE("general packet exponent reproduces known special cases") {
    // Two one-path packets, no lambda weights: the mutual-avoidance
    // exponent of two Brownian motions, exactly 5/4.
    REQUIRE(xi_exact_general({1.0, 1.0}, {}) == Catch::Approx(1.25).margin(1e-13));
    // One packet of two paths with a single lambda weight: xi(2, lambda).
    for (double lam : {0.0, 0.5, 1.0, 2.0})
        REQUIRE(xi_exact_general({2.0}, {lam}) ==
                Catch::Approx(xi_exact(lam)).margin(1e-13));
    REQUIRE_THROWS_AS(xi_exact_general({}, {1.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(xi_exact_general({0.5}, {}), std::invalid_argument);
}

static std::vector<EstimateRecord> synthetic_series(double xi, double A,
                                                    double rel_err) {
    std::vector<EstimateRecord> recs;
    for (double r : {2.0, 3.0, 4.0, 5.0, 6.0}) {
        EstimateRecord rec;
        rec.quantity = "b";
        rec.r = r;
        rec.value = A * std::exp(-xi * r);
        rec.stderr_ = rel_err * rec.value;
        rec.n = 1000;
        recs.push_back(rec);
    }
    return recs;
}

TEST_CASE("fit_exponent recovers exact exponential decay") {
    const auto recs = synthetic_series(1.7, 3.0, 0.05);
    const ExponentFit fit = fit_exponent(recs);
    REQUIRE(fit.xi_hat == Catch::Approx(1.7).margin(1e-12));
    REQUIRE(fit.intercept == Catch::Approx(std::log(3.0)).margin(1e-12));
    REQUIRE(fit.r_values.size() == 5);
}

TEST_CASE("fit_exponent input validation") {
    auto recs = synthetic_series(2.0, 1.0, 0.1);
    recs.resize(2);
    REQUIRE_THROWS_AS(fit_exponent(recs), std::invalid_argument);
    auto bad = synthetic_series(2.0, 1.0, 0.1);
    bad[1].value = 0.0;
    REQUIRE_THROWS_AS(fit_exponent(bad), std::invalid_argument);
}

TEST_CASE("flatness band of an exact series is 1") {
    const auto recs = synthetic_series(2.0, 5.0, 0.0);
    const FlatnessReport rep = flatness(recs, 2.0);
    REQUIRE(rep.band_ratio() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(rep.c_min == Catch::Approx(5.0).margin(1e-10));
    // A wrong exponent tilts the band.
    const FlatnessReport off = flatness(recs, 2.2);
    REQUIRE(off.band_ratio() == Catch::Approx(std::exp(0.2 * 4.0)).margin(1e-9));
}

TEST_CASE("subadditivity report on exact exponential data") {
    std::vector<EstimateRecord> recs;
    for (double r : {1.0, 2.0, 3.0, 4.0, 5.0, 6.0}) {
        EstimateRecord rec;
        rec.r = r;
        rec.value = std::exp(-2.0 * r);
        recs.push_back(rec);
    }
    // value_{m+n+1} / (value_m value_n) = exp(-2) for every pair.
    const SubadditivityReport rep = subadditivity_report(recs);
    REQUIRE(rep.max_ratio == Catch::Approx(std::exp(-2.0)).margin(1e-12));
    REQUIRE(rep.min_ratio == Catch::Approx(std::exp(-2.0)).margin(1e-12));

    std::vector<EstimateRecord> sparse(recs.begin(), recs.begin() + 2);
    REQUIRE_THROWS_AS(subadditivity_report(sparse), std::invalid_argument);
}

TEST_CASE("xi_exact bounds and shape on a grid") {
    double prev = xi_exact(0.0);
    double prev_diff = 1e300;
    for (int i = 1; i <= 100; ++i) {
        const double lam = 0.1 * i;
        const double cur = xi_exact(lam);
        REQUIRE(cur <= 2.0 + lam + 1e-12);
        REQUIRE(cur > prev);  // strictly increasing
        const double diff = cur - prev;
        REQUIRE(diff <= prev_diff + 1e-12);  // concave: increments shrink
        prev = cur;
        prev_diff = diff;
    }
}
