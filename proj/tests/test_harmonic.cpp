#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bxi/harmonic.hpp"
#include "bxi/rng.hpp"

using namespace bxi;

TEST_CASE("exp_weight conventions") {
    REQUIRE(exp_weight(2.0, 1.0) == Catch::Approx(std::exp(-2.0)));
    REQUIRE(exp_weight(0.0, 5.0) == 1.0);
    // Infinite extremal distance contributes zero mass, including at
    // lambda = 0 where the limit-from-above convention applies.
    REQUIRE(exp_weight(kInfiniteL, 1.0) == 0.0);
    REQUIRE(exp_weight(kInfiniteL, 0.0) == 0.0);
    REQUIRE(exp_weight(3.0, 0.0) == 1.0);
}

TEST_CASE("rectangle pi-extremal distance matches L exactly in the limit") {
    // For the rectangle (0, L) x (0, pi) between its two vertical sides the
    // pi-extremal distance is L itself.
    for (double L : {1.0, 2.0}) {
        const RectangleDomain dom = make_rectangle_domain(L, 0.02);
        const ExtremalResult res = pi_extremal_distance(dom.domain);
        REQUIRE(res.finite());
        REQUIRE(res.L == Catch::Approx(L).epsilon(0.02));
    }
}

TEST_CASE("theta-band rectangle halves the aspect ratio") {
    // Restricting the cross-section to (0, pi/2) doubles the pi-extremal
    // distance of the unit-length rectangle.
    const RectangleDomain dom = make_rectangle_domain(1.0, 0.02, 0.0, M_PI / 2.0);
    const ExtremalResult res = pi_extremal_distance(dom.domain);
    REQUIRE(res.finite());
    REQUIRE(res.L == Catch::Approx(2.0).epsilon(0.02));
}

TEST_CASE("blocked rectangle has infinite extremal distance") {
    RectangleDomain dom = make_rectangle_domain(2.0, 0.05);
    // Wall across the full cross-section at mid-length.
    const int wall_row = dom.grid.rows() / 2;
    for (int c = 0; c < dom.grid.cols(); ++c) {
        if (dom.grid.at(wall_row, c) == CellState::FREE)
            dom.grid.at(wall_row, c) = CellState::OBSTACLE;
    }
    // Rebuild the component mask against the blocked grid, seeding below the
    // wall.
    const int seed = dom.grid.index(1, dom.grid.col_of(M_PI / 2.0));
    const ExtremalResult res = pi_extremal_distance(make_domain(dom.grid, seed));
    REQUIRE_FALSE(res.finite());
    REQUIRE(exp_weight(res.L, 1.0) == 0.0);
}

TEST_CASE("reach probability on the empty annulus is linear in u") {
    // Harmonic measure of the outer circle from C_u in an annulus A(0, 1)
    // is u / 1 (the log-polar Laplace problem is one-dimensional).
    OccupancyGrid g(0.0, 1.0, 0.05);
    const ReachField field = reach_probability(g, 1e-10);
    for (double u : {0.25, 0.5, 0.75}) {
        REQUIRE(row_average(g, field, u) == Catch::Approx(u).margin(1e-6));
    }
    REQUIRE(row_average(g, field, 0.0) == Catch::Approx(0.0).margin(1e-9));
    REQUIRE(row_average(g, field, 1.0) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("reach probability with a partial wall is depressed behind it") {
    OccupancyGrid g(0.0, 1.0, 0.05);
    const int wall_row = g.row_of(0.6);
    // Obstacle over three quarters of the circle.
    for (int c = 0; c < (3 * g.cols()) / 4; ++c) g.at(wall_row, c) = CellState::OBSTACLE;
    const ReachField field = reach_probability(g, 1e-10);
    const double shielded = field.value[g.index(g.row_of(0.3), g.cols() / 4)];
    const double open_side = field.value[g.index(g.row_of(0.3), (7 * g.cols()) / 8)];
    REQUIRE(shielded < 0.3);
    REQUIRE(open_side > shielded);
    REQUIRE(row_average_free(g, field, 0.3) < 0.3);
    REQUIRE(row_max(g, field, 0.3) >= open_side);
}

TEST_CASE("per-column outer boundary values are honored") {
    OccupancyGrid g(0.0, 1.0, 0.05);
    std::vector<double> outer(g.cols(), 0.0);
    for (int c = 0; c < g.cols() / 2; ++c) outer[c] = 1.0;
    const ReachField field = reach_probability(g, 1e-10, &outer);
    // Deep inside, the field approaches u * (average outer value).
    REQUIRE(row_average(g, field, 0.5) == Catch::Approx(0.25).margin(5e-3));
}

TEST_CASE("lattice walkers agree with the harmonic solution") {
    OccupancyGrid g(0.0, 1.0, 0.05);
    const int wall_row = g.row_of(0.6);
    for (int c = 0; c < g.cols() / 2; ++c) g.at(wall_row, c) = CellState::OBSTACLE;
    const ReachField field = reach_probability(g, 1e-10);
    const int row = g.row_of(0.3);
    const int col = g.cols() / 4;
    RngStream rng({2718, 0});
    const int n = 20000;
    double hits = 0.0;
    for (int i = 0; i < n; ++i) hits += lattice_walk_reach(g, row, col, rng);
    const double p_mc = hits / n;
    const double p_harm = field.value[g.index(row, col)];
    const double sigma = std::sqrt(p_harm * (1.0 - p_harm) / n);
    REQUIRE(std::fabs(p_mc - p_harm) < 4.0 * sigma + 1e-9);
}
