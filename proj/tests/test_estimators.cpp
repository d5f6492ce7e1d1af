#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bxi/estimators.hpp"
#include "bxi/exponents.hpp"

using namespace bxi;

TEST_CASE("pow_weight conventions") {
    REQUIRE(pow_weight(0.5, 0.0) == 1.0);
    REQUIRE(pow_weight(0.5, 1.0) == 0.5);
    REQUIRE(pow_weight(0.0, 1.0) == 0.0);
    REQUIRE(pow_weight(0.0, 0.0) == 0.0);  // Z = 0 carries no mass at any lambda
    REQUIRE(pow_weight(0.25, 2.0) == Catch::Approx(0.0625));
}

TEST_CASE("aligned_u_min snaps to the grid and floors at the Z-grid bound") {
    const double u = detail::aligned_u_min(-0.33, 0.05);
    REQUIRE(u <= -0.53 + 1e-12);
    REQUIRE(u == Catch::Approx(-0.55).margin(1e-12));
    // A row lies exactly on integer multiples of h.
    REQUIRE(std::fabs(u / 0.05 - std::round(u / 0.05)) < 1e-9);
    REQUIRE(detail::aligned_u_min(-50.0, 0.05) >= kZGridFloor - 1e-12);
}

TEST_CASE("estimate_b is deterministic and monotone in lambda") {
    const EstimateSet s =
        estimate_b(1.0, {0.0, 1.0, 2.0}, 400, EventFilter::none(), 5e-3, 0.05, 101);
    REQUIRE(s.records.size() == 3);
    for (const auto& rec : s.records) {
        REQUIRE(rec.quantity == "b");
        REQUIRE(rec.r == 1.0);
        REQUIRE(rec.value > 0.0);
        REQUIRE(rec.stderr_ > 0.0);
        REQUIRE(rec.n <= 400);
    }
    // exp(-lambda L) is decreasing in lambda pathwise.
    REQUIRE(s.records[0].value >= s.records[1].value);
    REQUIRE(s.records[1].value >= s.records[2].value);

    const EstimateSet t =
        estimate_b(1.0, {0.0, 1.0, 2.0}, 400, EventFilter::none(), 5e-3, 0.05, 101);
    REQUIRE(s.records[1].value == t.records[1].value);
    REQUIRE(s.records[1].stderr_ == t.records[1].stderr_);

    REQUIRE_THROWS_AS(estimate_b(0.5, {1.0}, 10, EventFilter::none(), 5e-3, 0.05, 1),
                      std::invalid_argument);
}

TEST_CASE("filtered b-estimates are dominated by the unfiltered one") {
    const EstimateSet plain =
        estimate_b(1.0, {1.0}, 300, EventFilter::none(), 5e-3, 0.05, 11);
    const EstimateSet nice = estimate_b(1.0, {1.0}, 300,
                                        EventFilter::delta_nice(0.1), 5e-3, 0.05, 11);
    REQUIRE(nice.records[0].quantity == "b[delta_nice]");
    REQUIRE(nice.records[0].value <= plain.records[0].value);
}

TEST_CASE("estimate_disconnection shares the sample law of estimate_b at lambda 0") {
    const EstimateSet d = estimate_disconnection(2.0, 400, 5e-3, 0.05, 77);
    REQUIRE(d.records.size() == 1);
    REQUIRE(d.records[0].quantity == "z_positive");
    REQUIRE(d.records[0].lambda == 0.0);
    const EstimateSet b =
        estimate_b(2.0, {0.0}, 400, EventFilter::none(), 5e-3, 0.05, 77);
    // Same seed, same per-trial streams: the estimates coincide exactly.
    REQUIRE(d.records[0].value == b.records[0].value);
    REQUIRE(d.records[0].stderr_ == b.records[0].stderr_);

    // Decreasing in r.
    const EstimateSet d1 = estimate_disconnection(1.0, 400, 5e-3, 0.05, 77);
    REQUIRE(d1.records[0].value > d.records[0].value);
    // Sanity band at r = 1 (normalized fraction is a probability here).
    REQUIRE(d1.records[0].value > 0.1);
    REQUIRE(d1.records[0].value <= 1.0);

    REQUIRE_THROWS_AS(estimate_disconnection(0.5, 10, 5e-3, 0.05, 1),
                      std::invalid_argument);
}

TEST_CASE("estimate_a smoke and validation") {
    const EstimateSet a = estimate_a(2.0, {1.0}, 80, 5e-3, 0.05, 202);
    REQUIRE(a.records.size() == 1);
    REQUIRE(a.records[0].quantity == "a");
    REQUIRE(a.records[0].value > 0.0);
    // Same order of magnitude as b (both ~ e^{-2 r}); generous band.
    const EstimateSet b =
        estimate_b(2.0, {1.0}, 200, EventFilter::none(), 5e-3, 0.05, 202);
    const double ratio = a.records[0].value / b.records[0].value;
    REQUIRE(ratio > 0.05);
    REQUIRE(ratio < 20.0);

    REQUIRE_THROWS_AS(estimate_a(1.5, {1.0}, 10, 5e-3, 0.05, 1), std::invalid_argument);
}

TEST_CASE("estimate_a_hat degenerates to estimate_a at start_grid <= 1") {
    const EstimateSet a = estimate_a(2.0, {1.0}, 50, 5e-3, 0.05, 303);
    const EstimateSet ah = estimate_a_hat(2.0, {1.0}, 50, 1, 5e-3, 0.05, 303);
    REQUIRE(ah.records[0].quantity == "a_hat");
    REQUIRE(ah.records[0].value == a.records[0].value);
    REQUIRE(ah.records[0].stderr_ == a.records[0].stderr_);
}

TEST_CASE("separation_ratios bookkeeping on a small run") {
    const SeparationSummary sum =
        separation_ratios(2.0, {0.5, 1.0}, 3, 2000, 5e-3, 0.05, 404);
    REQUIRE(sum.lambdas.size() == 2);
    REQUIRE(sum.n_outer == 3);
    for (std::size_t i = 0; i < sum.lambdas.size(); ++i) {
        REQUIRE(sum.ratios[i].size() + sum.excluded[i] == 3);
        for (double rho : sum.ratios[i]) {
            REQUIRE(rho >= 0.0);
            REQUIRE(rho <= 1.0);
        }
        if (!sum.ratios[i].empty()) {
            REQUIRE(sum.min_ratio[i] <= sum.median_ratio[i] + 1e-12);
            REQUIRE(sum.min_ratio[i] >= 0.0);
        }
    }
    REQUIRE_THROWS_AS(separation_ratios(0.5, {1.0}, 1, 100, 5e-3, 0.05, 1),
                      std::invalid_argument);
}

TEST_CASE("estimate_R produces capped conditional ratios") {
    const double xi = xi_exact(1.0);
    const RSummary sum = estimate_R(2.0, 3.2, 1.0, 2, 600, xi, 5e-3, 0.05, 505);
    REQUIRE(sum.n_outer == 2);
    REQUIRE(sum.lambda == 1.0);
    REQUIRE(sum.xi == xi);
    REQUIRE(sum.samples.size() + sum.excluded == 2);
    for (const RSample& s : sum.samples) {
        REQUIRE(s.R_nm >= 0.0);
        REQUIRE(s.Rstar_nm <= s.R_nm + 1e-12);
        REQUIRE(s.R_nn1 >= 0.0);
        REQUIRE(s.Rstar_nn1 <= s.R_nn1 + 1e-12);
    }
    REQUIRE_THROWS_AS(estimate_R(2.0, 2.5, 1.0, 1, 100, xi, 5e-3, 0.05, 1),
                      std::invalid_argument);
}

TEST_CASE("estimate_multi_packet: one packet of two paths matches the a-scale") {
    const EstimateSet mp = estimate_multi_packet({2.0}, {1.0}, 2.0, 150, 5e-3, 0.05, 606);
    REQUIRE(mp.records.size() == 1);
    REQUIRE(mp.records[0].value > 0.0);
    const EstimateSet a = estimate_a(2.0, {1.0}, 150, 5e-3, 0.05, 606);
    const double ratio = mp.records[0].value / a.records[0].value;
    REQUIRE(ratio > 0.05);
    REQUIRE(ratio < 20.0);

    REQUIRE_THROWS_AS(estimate_multi_packet({2.0, 1.0}, {1.0}, 2.0, 10, 5e-3, 0.05, 1),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(estimate_multi_packet({6.0}, {1.0}, 2.0, 10, 5e-3, 0.05, 1),
                      std::invalid_argument);
}
