#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bxi/lemmas.hpp"

using namespace bxi;

TEST_CASE("slack-bound constants") {
    REQUIRE(kDiskRemovalSlackBound == Catch::Approx(6.0 * M_PI * M_PI));
    REQUIRE(subarc_slack_bound(0.5) == Catch::Approx(4.0 * M_PI * M_PI));
    REQUIRE(serial_cut_slack_bound(0.5) == Catch::Approx(8.0 * M_PI * M_PI));
}

TEST_CASE("disk removal on a rectangle obeys the lemma contract") {
    const RectangleDomain rd = make_rectangle_domain(4.0, 0.04);
    const DiskRemovalResult res = verify_disk_removal(rd.domain, 0.5, 1e-9);
    REQUIRE(res.L_before == Catch::Approx(4.0).epsilon(0.03));
    // Monotone: removing boundary can only raise L; bounded by the lemma.
    REQUIRE(res.slack >= -1e-6);
    REQUIRE(res.slack <= kDiskRemovalSlackBound);
    // The corners sit at the ends of the inner arc.
    REQUIRE(res.z1.u == Catch::Approx(0.0));
    REQUIRE(cyl_distance(res.z1, res.z2) > 2.0);
}

TEST_CASE("disk removal hypothesis violations throw") {
    const RectangleDomain rd = make_rectangle_domain(4.0, 0.04);
    // delta >= width - 1
    REQUIRE_THROWS_AS(verify_disk_removal(rd.domain, 3.2), std::invalid_argument);
    // Narrow band: corner points closer than 4*delta.
    const RectangleDomain narrow = make_rectangle_domain(4.0, 0.04, 0.0, 0.5);
    REQUIRE_THROWS_AS(verify_disk_removal(narrow.domain, 0.4), std::invalid_argument);
}

TEST_CASE("subarc restriction on a rectangle obeys the lemma contract") {
    const RectangleDomain rd = make_rectangle_domain(4.0, 0.04);
    const double delta = 0.3;
    const SubarcResult res = verify_subarc(rd.domain, 0.25, 0.75, delta, 1e-9);
    REQUIRE(res.L_full == Catch::Approx(4.0).epsilon(0.03));
    REQUIRE(res.L_subarc >= res.L_full - 1e-6);
    REQUIRE(res.slack >= -1e-6);
    REQUIRE(res.slack <= subarc_slack_bound(delta));
    // V is roughly the middle half of the inner side.
    REQUIRE(res.v_cols.size() > rd.domain.d1_cols.size() / 3);
    REQUIRE(res.v_cols.size() < (2 * rd.domain.d1_cols.size()) / 3 + 2);
}

TEST_CASE("subarc hypothesis violations throw") {
    const RectangleDomain rd = make_rectangle_domain(4.0, 0.04);
    REQUIRE_THROWS_AS(verify_subarc(rd.domain, 0.75, 0.25, 0.3), std::invalid_argument);
    // A sub-arc shorter than delta.
    REQUIRE_THROWS_AS(verify_subarc(rd.domain, 0.49, 0.51, 0.5), std::invalid_argument);
}

TEST_CASE("serial cut on a rectangle is nearly additive") {
    const RectangleDomain rd = make_rectangle_domain(4.0, 0.04);
    const SerialCutResult res = verify_serial_cut(rd.domain, 2.0, 0.3, 1e-9);
    REQUIRE(res.L == Catch::Approx(4.0).epsilon(0.03));
    REQUIRE(res.L1 == Catch::Approx(2.0).epsilon(0.05));
    REQUIRE(res.L2 == Catch::Approx(2.0).epsilon(0.05));
    // Exact additivity for a product domain, up to discretization.
    REQUIRE(std::fabs(res.slack) < 0.2);
    REQUIRE(res.slack <= serial_cut_slack_bound(0.3));
    // The cross-cut spans the full band.
    REQUIRE(res.v_cols.size() == rd.domain.d1_cols.size());
}

TEST_CASE("serial cut hypothesis violations throw") {
    const RectangleDomain rd = make_rectangle_domain(4.0, 0.04);
    REQUIRE_THROWS_AS(verify_serial_cut(rd.domain, 0.5, 0.3), std::invalid_argument);
    REQUIRE_THROWS_AS(verify_serial_cut(rd.domain, 3.5, 0.3), std::invalid_argument);
    REQUIRE_THROWS_AS(verify_serial_cut(rd.domain, 2.0, 1.5), std::invalid_argument);
}

TEST_CASE("serial cut detects a pinched cut row") {
    RectangleDomain rd = make_rectangle_domain(4.0, 0.04);
    const int row_s = rd.grid.row_of(2.0);
    PathDomainSpec dom = rd.domain;
    for (int c = 0; c < rd.grid.cols(); ++c) dom.component[rd.grid.index(row_s, c)] = 0;
    REQUIRE_THROWS_AS(verify_serial_cut(dom, 2.0, 0.3), std::invalid_argument);
}
