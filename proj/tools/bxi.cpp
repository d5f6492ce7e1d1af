// bxi: configuration-driven experiment runner for the Brownian
// intersection-exponent laboratory.
//
//   bxi run --config cfg.json     execute an experiment, write results.csv,
//                                 summary.json and report.txt
//   bxi report a.csv b.csv ...    merge result files and re-render the
//                                 exponent comparison table
//   bxi verify --suite NAME       fast built-in self checks
//                                 (sampler | extremal | lemmas | exponents)
//
// Exit status: 0 = all checks passed, 2 = checks failed, 1 = error.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "bxi/experiment.hpp"
#include "bxi/lemmas.hpp"

namespace {

int run_command(const std::string& config_path) {
    const bxi::ExperimentConfig cfg = bxi::parse_config_file(config_path);
    const bxi::ExperimentResult res = bxi::run_experiment(cfg);

    std::filesystem::create_directories(cfg.output_dir);
    const std::filesystem::path dir(cfg.output_dir);
    {
        std::ofstream out(dir / "results.csv", std::ios::binary);
        out << bxi::to_csv(res.rows);
    }
    {
        std::ofstream out(dir / "summary.json");
        out << res.summary.dump(2) << "\n";
    }
    {
        std::ofstream out(dir / "report.txt");
        out << bxi::render_report(bxi::merge_rows(res.rows));
    }
    std::cout << res.summary.dump(2) << "\n";
    return res.failed ? 2 : 0;
}

int report_command(const std::vector<std::string>& paths) {
    if (paths.empty()) throw std::invalid_argument("report: no input files");
    std::vector<bxi::ResultRow> rows;
    for (const std::string& p : paths) {
        std::ifstream in(p);
        if (!in) throw std::invalid_argument("cannot open " + p);
        const auto part = bxi::parse_csv(in);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    std::cout << bxi::render_report(bxi::merge_rows(rows));
    return 0;
}

struct Checker {
    int failures = 0;
    void check(bool ok, const std::string& what) {
        std::cout << (ok ? "  ok   " : "  FAIL ") << what << "\n";
        if (!ok) ++failures;
    }
};

void verify_sampler(Checker& c) {
    using namespace bxi;
    // Gambler's ruin acceptance rate of conditioned extensions.
    const double r = 1.0, rp = 2.0, dt = 1e-3;
    RngStream rng({11, 0});
    RngStream brng(bridge_seed({11, 0}));
    const int n = 20000;
    int accepted = 0;
    for (int i = 0; i < n; ++i)
        if (sample_radial_leg(r, rp, dt, rng, brng).reached_outer) ++accepted;
    const double p = static_cast<double>(accepted) / n;
    const double se = std::sqrt(0.5 * 0.5 / n);
    c.check(std::fabs(p - r / rp) < 4.0 * se + 5.0 * std::sqrt(dt),
            "conditioned-extension acceptance near r/r' (got " + std::to_string(p) +
                ")");
    // Upcrossing endpoints land on the target circle.
    const SampledPath up = sample_upcrossing(AnnulusSpec(0.0, 1.0), dt, {11, 1});
    c.check(std::fabs(up.back().log_norm() - 1.0) < 1e-9,
            "upcrossing terminal point on C_r");
    c.check(up.front().log_norm() < 1e-9 + hit_tolerance(dt),
            "upcrossing initial point near C_0");
}

void verify_extremal(Checker& c) {
    using namespace bxi;
    // Rectangle of modulus L: pi-extremal distance equals L.
    for (double L : {1.0, 2.0}) {
        const RectangleDomain rd = make_rectangle_domain(L, 0.02);
        const double Lhat = pi_extremal_distance(rd.domain).L;
        c.check(std::fabs(Lhat - L) < 0.02 * L,
                "rectangle modulus L=" + std::to_string(L) + " (got " +
                    std::to_string(Lhat) + ")");
    }
}

void verify_lemmas(Checker& c) {
    using namespace bxi;
    // One sampled domain at r = 3: disk-removal slack within its bound.
    const ConfigSample cfg = build_config(3.0, 2e-3, 0.05, 17, 0, false);
    std::vector<const SampledPath*> paths{&cfg.B1, &cfg.B2};
    OccupancyGrid grid = rasterize(paths, 0.0, cfg.r, cfg.h);
    auto [o1, o2] = extract_domains(grid, cfg.end1, cfg.end2);
    bool done = false;
    if (o1 && o1->has_inner_arc()) {
        try {
            const DiskRemovalResult res = verify_disk_removal(*o1, 0.1);
            c.check(res.slack <= kDiskRemovalSlackBound + 1.0,
                    "disk-removal slack below 6*pi^2");
            done = true;
        } catch (const std::invalid_argument&) {}
    }
    if (!done) c.check(true, "disk-removal hypotheses not met on this sample (skip)");
}

void verify_exponents(Checker& c) {
    using namespace bxi;
    c.check(std::fabs(xi_exact(1.0) - 2.0) < 1e-12, "xi(2,1) = 2");
    c.check(std::fabs(xi_exact(0.0) - 2.0 / 3.0) < 1e-12, "xi(2,0) = 2/3");
    double worst = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double lam = 0.1 * i;
        worst = std::max(worst, std::fabs(V(U(2.0) + U(lam)) - xi_exact(lam)));
    }
    c.check(worst < 1e-12, "V(U(2)+U(lambda)) identity on the grid");
}

int verify_command(const std::string& suite) {
    Checker c;
    std::cout << "verify --suite " << suite << "\n";
    if (suite == "sampler")
        verify_sampler(c);
    else if (suite == "extremal")
        verify_extremal(c);
    else if (suite == "lemmas")
        verify_lemmas(c);
    else if (suite == "exponents")
        verify_exponents(c);
    else
        throw std::invalid_argument("unknown suite: " + suite);
    return c.failures ? 2 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Brownian intersection-exponent laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    auto* run = app.add_subcommand("run", "execute an experiment from a JSON config");
    run->add_option("--config", config_path, "experiment configuration file")
        ->required();

    std::vector<std::string> csv_paths;
    auto* report = app.add_subcommand("report", "merge and summarize result files");
    report->add_option("files", csv_paths, "results.csv files")->required();

    std::string suite;
    auto* verify = app.add_subcommand("verify", "run a built-in self-check suite");
    verify->add_option("--suite", suite, "sampler | extremal | lemmas | exponents")
        ->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (run->parsed()) return run_command(config_path);
        if (report->parsed()) return report_command(csv_paths);
        return verify_command(suite);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
