#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bxi/domain.hpp"
#include "bxi/grid.hpp"

using namespace bxi;

// A radial polyline at a fixed angle from C_{u_lo} to C_{u_hi}.
static SampledPath ray_path(double theta, double u_lo, double u_hi, int n_pts) {
    SampledPath p;
    p.kind = PathKind::UPCROSSING;
    p.dt = 1e-3;
    for (int i = 0; i < n_pts; ++i) {
        const double u = u_lo + (u_hi - u_lo) * i / (n_pts - 1);
        p.points.push_back({std::exp(u) * std::cos(theta), std::exp(u) * std::sin(theta)});
    }
    p.hit_indices[u_hi] = n_pts - 1;
    return p;
}

TEST_CASE("OccupancyGrid geometry and validation") {
    REQUIRE_THROWS_AS(OccupancyGrid(0.0, 1.0, 0.2), std::invalid_argument);
    REQUIRE_THROWS_AS(OccupancyGrid(1.0, 1.0, 0.05), std::invalid_argument);
    REQUIRE_THROWS_AS(OccupancyGrid(0.0, 0.04, 0.05), std::invalid_argument);

    OccupancyGrid g(0.0, 1.0, 0.05);
    REQUIRE(g.rows() == 21);
    REQUIRE(g.cols() == static_cast<int>(std::ceil(2.0 * M_PI / 0.05)));
    REQUIRE(g.u_of_row(0) == Catch::Approx(0.0));
    REQUIRE(g.u_of_row(g.rows() - 1) == Catch::Approx(1.0));
    REQUIRE(g.row_of(0.5) == 10);
    REQUIRE(g.wrap_col(-1) == g.cols() - 1);
    REQUIRE(g.wrap_col(g.cols()) == 0);
    // Boundary rows are labeled.
    REQUIRE(g.at(0, 3) == CellState::INNER_BOUNDARY);
    REQUIRE(g.at(g.rows() - 1, 3) == CellState::OUTER_BOUNDARY);
    // col_of/theta_of_col roundtrip.
    for (int c : {0, 5, 77, g.cols() - 1}) REQUIRE(g.col_of(g.theta_of_col(c)) == c);
}

TEST_CASE("mark_segment covers a dense arc without gaps") {
    OccupancyGrid g(0.0, 1.0, 0.05);
    // A chord through the annulus at u ~ 0.5, spanning about a quarter turn.
    const double u = 0.5;
    const Point a{std::exp(u), 0.0};
    const Point b{0.0, std::exp(u)};
    g.mark_segment(a, b);
    // The chord dips toward the origin; every column it passes should have
    // some obstacle cell.
    int marked = 0;
    for (int c = 0; c < g.cols(); ++c) {
        bool col_hit = false;
        for (int r = 0; r < g.rows(); ++r) col_hit = col_hit || g.is_obstacle(r, c);
        if (col_hit) ++marked;
    }
    const int quarter = g.cols() / 4;
    REQUIRE(marked >= quarter - 2);
}

TEST_CASE("paths_intersect distinguishes crossing from disjoint traces") {
    const SampledPath r1 = ray_path(0.3, 0.0, 1.0, 200);
    const SampledPath r2 = ray_path(0.3 + M_PI, 0.0, 1.0, 200);
    REQUIRE_FALSE(paths_intersect(r1, r2, 0.05));
    REQUIRE(paths_intersect(r1, ray_path(0.3, 0.0, 1.0, 100), 0.05));
    // A full circle at u = 0.5 crosses the ray.
    SampledPath circ;
    circ.dt = 1e-3;
    for (int i = 0; i <= 400; ++i) {
        const double th = 2.0 * M_PI * i / 400;
        circ.points.push_back({std::exp(0.5) * std::cos(th), std::exp(0.5) * std::sin(th)});
    }
    REQUIRE(paths_intersect(r1, circ, 0.05));
}

TEST_CASE("LoopDetector fires on a closed loop and not on a ray") {
    const AnnulusSpec ring(0.0, 1.0);
    SampledPath circ;
    for (int i = 0; i <= 500; ++i) {
        const double th = 2.2 * M_PI * i / 500;
        circ.points.push_back({std::exp(0.5) * std::cos(th), std::exp(0.5) * std::sin(th)});
    }
    REQUIRE(loop_in_annulus(circ, ring));
    REQUIRE_FALSE(loop_in_annulus(ray_path(1.0, -0.5, 1.5, 500), ring));
    // A loop outside the annulus does not count.
    SampledPath high;
    for (int i = 0; i <= 500; ++i) {
        const double th = 2.2 * M_PI * i / 500;
        high.points.push_back({std::exp(1.5) * std::cos(th), std::exp(1.5) * std::sin(th)});
    }
    REQUIRE_FALSE(loop_in_annulus(high, ring));
}

TEST_CASE("disconnection_test and reaches_outer_from on synthetic rasters") {
    OccupancyGrid open_grid(0.0, 1.0, 0.05);
    REQUIRE_FALSE(disconnection_test(open_grid));
    REQUIRE(reaches_outer_from(open_grid, 0.0));

    OccupancyGrid blocked(0.0, 1.0, 0.05);
    for (int c = 0; c < blocked.cols(); ++c) blocked.at(10, c) = CellState::OBSTACLE;
    REQUIRE(disconnection_test(blocked));
    REQUIRE_FALSE(reaches_outer_from(blocked, 0.0));

    // A ring with one free column still connects.
    OccupancyGrid gap(0.0, 1.0, 0.05);
    for (int c = 1; c < gap.cols(); ++c) gap.at(10, c) = CellState::OBSTACLE;
    REQUIRE_FALSE(disconnection_test(gap));
    REQUIRE(reaches_outer_from(gap, 0.0));
}

TEST_CASE("super-node mode lets walkers cross the inner cap") {
    // Wall across all columns except where the start row sits below it:
    // block every column of an interior row, but leave the inner row free;
    // in SUPER_NODE mode the start row cells connect through the cap, in
    // ABSORB they do not gain connectivity (wall still blocks: stays
    // disconnected either way). Instead: block half the columns through
    // all interior rows; both modes stay connected; then block the start
    // row's own free arc except under the cap.
    OccupancyGrid g(-0.5, 1.0, 0.05, InnerCapMode::SUPER_NODE);
    const int start_row = g.row_of(0.0);
    // Obstacle wall on the start row except columns [0, 3].
    for (int c = 4; c < g.cols(); ++c)
        for (int r = start_row; r < g.rows() - 1; ++r) g.at(r, c) = CellState::OBSTACLE;
    REQUIRE(reaches_outer_from(g, 0.0));
}

TEST_CASE("make_domain labels the four boundary arcs of a split annulus") {
    const SampledPath r1 = ray_path(0.1, 0.0, 2.0, 600);
    const SampledPath r2 = ray_path(0.1 + M_PI, 0.0, 2.0, 600);
    OccupancyGrid grid = rasterize(std::vector<const SampledPath*>{&r1, &r2}, 0.0, 2.0,
                                   0.05);
    auto [o1, o2] = extract_domains(grid, 0.1, 0.1 + M_PI);
    REQUIRE(o1.has_value());
    REQUIRE(o2.has_value());
    for (const auto& dom : {*o1, *o2}) {
        REQUIRE(dom.has_inner_arc());
        REQUIRE_FALSE(dom.d2_cols.empty());
        REQUIRE_FALSE(dom.d3_cells.empty());
        REQUIRE_FALSE(dom.d4_cells.empty());
    }
    // O^1 owns the counterclockwise arc from end1 = 0.1 to end2 = pi + 0.1,
    // so the half-plane angle pi/2 lies in O^1 and 3 pi/2 in O^2.
    const int mid_row = grid.rows() / 2;
    REQUIRE(o1->component[grid.index(mid_row, grid.col_of(M_PI / 2.0))] == 1);
    REQUIRE(o1->component[grid.index(mid_row, grid.col_of(3.0 * M_PI / 2.0))] == 0);
    REQUIRE(o2->component[grid.index(mid_row, grid.col_of(3.0 * M_PI / 2.0))] == 1);
    // Arc lengths: each outer arc covers just under half the circle.
    REQUIRE(o1->d2_cols.size() > static_cast<std::size_t>(grid.cols() / 3));
    REQUIRE(o2->d2_cols.size() > static_cast<std::size_t>(grid.cols() / 3));
}

TEST_CASE("extract_domains merges when only one component reaches C_r") {
    // One ray only: the annulus minus a single wall is one domain; both
    // endpoint angles find the same component and O^2 is dropped.
    const SampledPath r1 = ray_path(0.1, 0.0, 2.0, 600);
    OccupancyGrid grid = rasterize(std::vector<const SampledPath*>{&r1}, 0.0, 2.0, 0.05);
    auto [o1, o2] = extract_domains(grid, 0.1, 0.1);
    REQUIRE(o1.has_value());
    REQUIRE_FALSE(o2.has_value());
}

TEST_CASE("make_domain rejects a non-FREE seed") {
    OccupancyGrid g(0.0, 1.0, 0.05);
    g.at(5, 5) = CellState::OBSTACLE;
    REQUIRE_THROWS_AS(make_domain(g, g.index(5, 5)), std::invalid_argument);
}
