#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bxi/experiment.hpp"

using namespace bxi;

namespace {

nlohmann::json base_config() {
    nlohmann::json j;
    j["experiment"] = "B_SERIES";
    j["r_values"] = {1.0, 2.0};
    j["lambda_values"] = {1.0};
    j["n_samples"] = 60;
    j["dt"] = 5e-3;
    j["h"] = 0.05;
    j["seed"] = 9;
    return j;
}

} // namespace

TEST_CASE("parse_config accepts a valid description") {
    const ExperimentConfig cfg = parse_config(base_config());
    REQUIRE(cfg.experiment == ExperimentKind::B_SERIES);
    REQUIRE(cfg.r_values == std::vector<double>{1.0, 2.0});
    REQUIRE(cfg.n_samples == 60);
    REQUIRE(cfg.seed == 9);
    REQUIRE(cfg.filter == "none");
}

TEST_CASE("parse_config rejects malformed descriptions") {
    auto j = base_config();
    j["not_a_key"] = 1;
    REQUIRE_THROWS_AS(parse_config(j), std::invalid_argument);

    j = base_config();
    j["experiment"] = "b_series";
    REQUIRE_THROWS_AS(parse_config(j), std::invalid_argument);

    j = base_config();
    j["r_values"] = {2.0, 1.0};
    REQUIRE_THROWS_AS(parse_config(j), std::invalid_argument);

    j = base_config();
    j["r_values"] = nlohmann::json::array();
    REQUIRE_THROWS_AS(parse_config(j), std::invalid_argument);

    j = base_config();
    j["dt"] = 0.0;
    REQUIRE_THROWS_AS(parse_config(j), std::invalid_argument);

    j = base_config();
    j["h"] = -0.05;
    REQUIRE_THROWS_AS(parse_config(j), std::invalid_argument);
}

TEST_CASE("config_hash is stable and parameter-sensitive") {
    const ExperimentConfig cfg = parse_config(base_config());
    const std::string h1 = config_hash(cfg);
    REQUIRE(h1.size() == 16);
    REQUIRE(config_hash(cfg) == h1);

    ExperimentConfig other = cfg;
    other.seed = 10;
    REQUIRE(config_hash(other) != h1);
    other = cfg;
    other.dt = 1e-3;
    REQUIRE(config_hash(other) != h1);
    // The output directory is presentation-only and must not affect the hash.
    other = cfg;
    other.output_dir = "/elsewhere";
    REQUIRE(config_hash(other) == h1);
}

TEST_CASE("CSV round-trip is exact") {
    std::vector<ResultRow> rows;
    EstimateRecord rec{"b", 2.0, 1.0, 1.2345678901234567e-3, 6.5e-5, 1000, 42};
    rows.push_back({"B_SERIES", rec, "deadbeefdeadbeef"});
    rec.quantity = "z_positive";
    rec.value = 0.1 + 0.2;  // not exactly representable: exercises %.17g
    rows.push_back({"DISCONNECT", rec, "deadbeefdeadbeef"});

    const std::string csv = to_csv(rows);
    std::istringstream in(csv);
    const auto back = parse_csv(in);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(back[i].experiment == rows[i].experiment);
        REQUIRE(back[i].record.quantity == rows[i].record.quantity);
        REQUIRE(back[i].record.value == rows[i].record.value);
        REQUIRE(back[i].record.stderr_ == rows[i].record.stderr_);
        REQUIRE(back[i].record.n == rows[i].record.n);
        REQUIRE(back[i].hash == rows[i].hash);
    }

    std::istringstream bad("wrong,header\n");
    REQUIRE_THROWS_AS(parse_csv(bad), std::invalid_argument);
}

TEST_CASE("merge_rows pools compatible estimates") {
    EstimateRecord a{"b", 2.0, 1.0, 0.04, 0.004, 1000, 1};
    EstimateRecord b{"b", 2.0, 1.0, 0.02, 0.003, 3000, 2};
    EstimateRecord other{"b", 3.0, 1.0, 0.01, 0.002, 1000, 1};
    const std::vector<ResultRow> rows{
        {"B_SERIES", a, "h1"}, {"B_SERIES", b, "h2"}, {"B_SERIES", other, "h1"}};
    const auto merged = merge_rows(rows);
    REQUIRE(merged.size() == 2);
    const ResultRow* pooled = nullptr;
    for (const auto& row : merged)
        if (row.record.r == 2.0) pooled = &row;
    REQUIRE(pooled != nullptr);
    // n-weighted mean and quadrature-combined stderr.
    const double wa = 1000.0, wb = 3000.0;
    const double mean = (wa * 0.04 + wb * 0.02) / (wa + wb);
    REQUIRE(pooled->record.value == Catch::Approx(mean).epsilon(1e-12));
    const double se = std::sqrt(wa * wa * 0.004 * 0.004 + wb * wb * 0.003 * 0.003) /
                      (wa + wb);
    REQUIRE(pooled->record.stderr_ == Catch::Approx(se).epsilon(1e-9));
    REQUIRE(pooled->record.n == 4000);
    REQUIRE(pooled->hash == "merged");
}

TEST_CASE("run_experiment is deterministic and worker-count invariant") {
    ExperimentConfig cfg = parse_config(base_config());
    cfg.workers = 1;
    const ExperimentResult r1 = run_experiment(cfg);
    REQUIRE_FALSE(r1.rows.empty());
    REQUIRE_FALSE(r1.failed);
    const ExperimentResult r2 = run_experiment(cfg);
    REQUIRE(to_csv(r1.rows) == to_csv(r2.rows));

    cfg.workers = 3;
    const ExperimentResult r3 = run_experiment(cfg);
    REQUIRE(to_csv(r1.rows) == to_csv(r3.rows));
    set_worker_count(0);
}

TEST_CASE("DISCONNECT experiment summarizes the exponent fit") {
    nlohmann::json j;
    j["experiment"] = "DISCONNECT";
    j["r_values"] = {1.0, 2.0, 3.0};
    j["n_samples"] = 120;
    j["dt"] = 5e-3;
    j["h"] = 0.05;
    j["seed"] = 3;
    const ExperimentResult res = run_experiment(parse_config(j));
    REQUIRE(res.rows.size() == 3);
    for (const auto& row : res.rows) REQUIRE(row.record.quantity == "z_positive");
    REQUIRE(res.summary.contains("xi_fit"));
    REQUIRE(res.summary.contains("xi_exact"));
    REQUIRE(res.summary["xi_exact"].get<double>() ==
            Catch::Approx(xi_exact(0.0)).margin(1e-12));
    set_worker_count(0);
}

TEST_CASE("render_report tabulates a fitted series") {
    std::vector<ResultRow> rows;
    for (double r : {2.0, 3.0, 4.0}) {
        EstimateRecord rec{"b", r, 1.0, 3.0 * std::exp(-2.0 * r), 1e-4, 1000, 7};
        rows.push_back({"B_SERIES", rec, "h"});
    }
    const std::string report = render_report(merge_rows(rows));
    REQUIRE(report.find("xi_fit") != std::string::npos);
    // The synthetic series decays at exactly 2: the fitted value is printed.
    REQUIRE(report.find("2.00") != std::string::npos);
    REQUIRE(std::count(report.begin(), report.end(), '\n') >= 2);
}
