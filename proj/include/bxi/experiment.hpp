#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bxi/estimators.hpp"
#include "bxi/excursion.hpp"
#include "bxi/exponents.hpp"
#include "bxi/lemmas.hpp"
#include "bxi/parallel.hpp"

namespace bxi {

enum class ExperimentKind {
    B_SERIES,
    A_SERIES,
    DISCONNECT,
    SEPARATION,
    LEMMA_VERIFY,
    MULTI_PACKET,
    MASS_RECT,
};

inline const char* experiment_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::B_SERIES: return "B_SERIES";
        case ExperimentKind::A_SERIES: return "A_SERIES";
        case ExperimentKind::DISCONNECT: return "DISCONNECT";
        case ExperimentKind::SEPARATION: return "SEPARATION";
        case ExperimentKind::LEMMA_VERIFY: return "LEMMA_VERIFY";
        case ExperimentKind::MULTI_PACKET: return "MULTI_PACKET";
        case ExperimentKind::MASS_RECT: return "MASS_RECT";
    }
    return "?";
}

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::B_SERIES;
    std::vector<double> r_values;
    std::vector<double> lambda_values;
    std::uint64_t n_samples = 1000;
    double dt = 1e-3;
    double h = 0.05;
    double delta = 0.1;
    std::string filter = "none";
    double filter_eps = 0.1;
    std::uint64_t seed = 1;
    int workers = 0;  // 0 = library default / BXI_WORKERS
    std::string output_dir = ".";
    // Experiment-specific knobs.
    std::uint64_t n_inner = 2000;           // SEPARATION
    std::vector<double> packets;            // MULTI_PACKET
    int start_grid = 0;                     // A_SERIES sup-over-starts grid
    double mass_eps = 0.05;                 // MASS_RECT
};

inline EventFilter make_filter(const ExperimentConfig& cfg) {
    if (cfg.filter == "none") return EventFilter::none();
    if (cfg.filter == "E_n") return EventFilter::e_n();
    if (cfg.filter == "E_n_eps") return EventFilter::e_n_eps(cfg.filter_eps);
    if (cfg.filter == "H_n") return EventFilter::h_n();
    if (cfg.filter == "delta_nice") return EventFilter::delta_nice(cfg.delta);
    if (cfg.filter == "very_nice_end") return EventFilter::very_nice_end();
    if (cfg.filter == "nice_begin_very_nice_end")
        return EventFilter::nice_begin_very_nice_end(cfg.delta);
    throw std::invalid_argument("unknown filter name: " + cfg.filter);
}

// Strict parse: every key must be known, every value well-typed.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    static const std::map<std::string, ExperimentKind> kinds = {
        {"B_SERIES", ExperimentKind::B_SERIES},
        {"A_SERIES", ExperimentKind::A_SERIES},
        {"DISCONNECT", ExperimentKind::DISCONNECT},
        {"SEPARATION", ExperimentKind::SEPARATION},
        {"LEMMA_VERIFY", ExperimentKind::LEMMA_VERIFY},
        {"MULTI_PACKET", ExperimentKind::MULTI_PACKET},
        {"MASS_RECT", ExperimentKind::MASS_RECT},
    };
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "experiment") {
            const auto it = kinds.find(value.get<std::string>());
            if (it == kinds.end())
                throw std::invalid_argument("unknown experiment: " +
                                            value.get<std::string>());
            cfg.experiment = it->second;
        } else if (key == "r_values") {
            cfg.r_values = value.get<std::vector<double>>();
        } else if (key == "lambda_values") {
            cfg.lambda_values = value.get<std::vector<double>>();
        } else if (key == "n_samples") {
            cfg.n_samples = value.get<std::uint64_t>();
        } else if (key == "dt") {
            cfg.dt = value.get<double>();
        } else if (key == "h") {
            cfg.h = value.get<double>();
        } else if (key == "delta") {
            cfg.delta = value.get<double>();
        } else if (key == "filter") {
            cfg.filter = value.get<std::string>();
        } else if (key == "filter_eps") {
            cfg.filter_eps = value.get<double>();
        } else if (key == "seed") {
            cfg.seed = value.get<std::uint64_t>();
        } else if (key == "workers") {
            cfg.workers = value.get<int>();
        } else if (key == "output_dir") {
            cfg.output_dir = value.get<std::string>();
        } else if (key == "n_inner") {
            cfg.n_inner = value.get<std::uint64_t>();
        } else if (key == "packets") {
            cfg.packets = value.get<std::vector<double>>();
        } else if (key == "start_grid") {
            cfg.start_grid = value.get<int>();
        } else if (key == "mass_eps") {
            cfg.mass_eps = value.get<double>();
        } else {
            throw std::invalid_argument("unknown config key: " + key);
        }
    }
    if (cfg.r_values.empty() && cfg.experiment != ExperimentKind::MASS_RECT)
        throw std::invalid_argument("r_values must be nonempty");
    for (std::size_t i = 1; i < cfg.r_values.size(); ++i)
        if (!(cfg.r_values[i - 1] < cfg.r_values[i]))
            throw std::invalid_argument("r_values must be sorted ascending");
    if (!(cfg.dt > 0.0 && cfg.h > 0.0 && cfg.n_samples > 0))
        throw std::invalid_argument("dt, h and n_samples must be positive");
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    nlohmann::json j;
    in >> j;
    return parse_config(j);
}

// Canonical digest of the configuration (FNV-1a over the sorted-key dump;
// nlohmann::json objects already serialize with sorted keys).
inline std::string config_hash(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["experiment"] = experiment_name(cfg.experiment);
    j["r_values"] = cfg.r_values;
    j["lambda_values"] = cfg.lambda_values;
    j["n_samples"] = cfg.n_samples;
    j["dt"] = cfg.dt;
    j["h"] = cfg.h;
    j["delta"] = cfg.delta;
    j["filter"] = cfg.filter;
    j["filter_eps"] = cfg.filter_eps;
    j["seed"] = cfg.seed;
    j["n_inner"] = cfg.n_inner;
    j["packets"] = cfg.packets;
    j["start_grid"] = cfg.start_grid;
    j["mass_eps"] = cfg.mass_eps;
    const std::string dump = j.dump();
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char c : dump) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

struct ResultRow {
    std::string experiment;
    EstimateRecord record;
    std::string hash;
};

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::uint64_t n_trials = 0;
    std::uint64_t excluded = 0;
    nlohmann::json summary;
    bool failed = false;

    double exclusion_rate() const {
        return n_trials ? static_cast<double>(excluded) / static_cast<double>(n_trials)
                        : 0.0;
    }
};

namespace detail {

inline void absorb(ExperimentResult& out, const EstimateSet& set,
                   const std::string& exp_name, const std::string& hash) {
    out.n_trials += set.n_trials;
    out.excluded += set.excluded;
    for (const auto& rec : set.records) out.rows.push_back({exp_name, rec, hash});
}

// Samples configurations at radius r and runs the three extremal-distance
// lemma verifications on O^1. Hypothesis rejections (thrown by the
// verifiers) are counted as ineligible, not as violations; `tol_slack`
// absorbs grid-resolution noise in the inequality checks.
struct LemmaCounts {
    std::uint64_t eligible = 0;
    std::uint64_t violations = 0;
    double worst_slack = 0.0;
};

inline void lemma_trials(double r, std::uint64_t n, double dt, double h, double delta,
                         std::uint64_t seed, LemmaCounts& disk, LemmaCounts& subarc,
                         LemmaCounts& serial, std::uint64_t& sampled) {
    const double tol_slack = 20.0 * h;
    struct Row {
        bool have = false;
        int disk = -1, sub = -1, serial = -1;  // -1 ineligible, else violation flag
        double s_disk = 0.0, s_sub = 0.0, s_serial = 0.0;
    };
    auto rows = parallel_map<Row>(n, [&](std::uint64_t t) {
        Row row;
        try {
            const ConfigSample cfg = build_config(r, dt, h, seed, t, false);
            if (!std::isfinite(cfg.L1)) return row;
            std::vector<const SampledPath*> paths{&cfg.B1, &cfg.B2};
            OccupancyGrid grid = rasterize(paths, 0.0, cfg.r, h);
            auto [o1, o2] = extract_domains(grid, cfg.end1, cfg.end2);
            if (!o1 || !o1->has_inner_arc()) return row;
            row.have = true;
            try {
                const DiskRemovalResult res = verify_disk_removal(*o1, delta);
                row.s_disk = res.slack;
                row.disk = res.slack > kDiskRemovalSlackBound + tol_slack ? 1 : 0;
            } catch (const std::invalid_argument&) {}
            try {
                const SubarcResult res = verify_subarc(*o1, 0.25, 0.75, delta);
                row.s_sub = res.slack;
                row.sub = (res.slack < -tol_slack ||
                           res.slack > subarc_slack_bound(delta) + tol_slack)
                              ? 1
                              : 0;
            } catch (const std::invalid_argument&) {}
            try {
                const SerialCutResult res = verify_serial_cut(*o1, r / 2.0, delta);
                row.s_serial = res.slack;
                row.serial = (res.slack < -tol_slack ||
                              res.slack > serial_cut_slack_bound(delta) + tol_slack)
                                 ? 1
                                 : 0;
            } catch (const std::invalid_argument&) {}
        } catch (const std::exception&) {}
        return row;
    });
    sampled = n;
    auto tally = [](LemmaCounts& c, int flag, double slack) {
        if (flag < 0) return;
        ++c.eligible;
        if (flag > 0) ++c.violations;
        c.worst_slack = std::max(c.worst_slack, slack);
    };
    for (const Row& row : rows) {
        if (!row.have) continue;
        tally(disk, row.disk, row.s_disk);
        tally(subarc, row.sub, row.s_sub);
        tally(serial, row.serial, row.s_serial);
    }
}

} // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    if (cfg.workers > 0) set_worker_count(cfg.workers);
    const std::string hash = config_hash(cfg);
    const std::string name = experiment_name(cfg.experiment);
    const std::vector<double> lambdas =
        cfg.lambda_values.empty() ? std::vector<double>{1.0} : cfg.lambda_values;
    ExperimentResult out;
    out.summary["experiment"] = name;
    out.summary["config_hash"] = hash;

    switch (cfg.experiment) {
        case ExperimentKind::B_SERIES: {
            const EventFilter filter = make_filter(cfg);
            for (double r : cfg.r_values)
                detail::absorb(out,
                               estimate_b(r, lambdas, cfg.n_samples, filter, cfg.dt,
                                          cfg.h, cfg.seed),
                               name, hash);
            break;
        }
        case ExperimentKind::A_SERIES: {
            for (double r : cfg.r_values) {
                detail::absorb(out,
                               estimate_a(r, lambdas, cfg.n_samples, cfg.dt, cfg.h,
                                          cfg.seed),
                               name, hash);
                if (cfg.start_grid > 1)
                    detail::absorb(out,
                                   estimate_a_hat(r, lambdas, cfg.n_samples,
                                                  cfg.start_grid, cfg.dt, cfg.h,
                                                  cfg.seed),
                                   name, hash);
            }
            break;
        }
        case ExperimentKind::DISCONNECT: {
            for (double r : cfg.r_values)
                detail::absorb(out,
                               estimate_disconnection(r, cfg.n_samples, cfg.dt, cfg.h,
                                                      cfg.seed),
                               name, hash);
            break;
        }
        case ExperimentKind::SEPARATION: {
            for (double r : cfg.r_values) {
                const SeparationSummary sum = separation_ratios(
                    r, lambdas, cfg.n_samples, cfg.n_inner, cfg.dt, cfg.h, cfg.seed);
                for (std::size_t k = 0; k < lambdas.size(); ++k) {
                    out.n_trials += sum.n_outer;
                    out.excluded += sum.excluded[k];
                    const std::uint64_t kept = sum.ratios[k].size();
                    out.rows.push_back({name,
                                        {"sep_ratio_min", r, lambdas[k],
                                         sum.min_ratio[k], 0.0, kept, cfg.seed},
                                        hash});
                    out.rows.push_back({name,
                                        {"sep_ratio_median", r, lambdas[k],
                                         sum.median_ratio[k], 0.0, kept, cfg.seed},
                                        hash});
                }
            }
            break;
        }
        case ExperimentKind::LEMMA_VERIFY: {
            for (double r : cfg.r_values) {
                detail::LemmaCounts disk, subarc, serial;
                std::uint64_t sampled = 0;
                detail::lemma_trials(r, cfg.n_samples, cfg.dt, cfg.h, cfg.delta,
                                     cfg.seed, disk, subarc, serial, sampled);
                out.n_trials += sampled;
                auto emit = [&](const char* q, const detail::LemmaCounts& c) {
                    const double rate =
                        c.eligible ? static_cast<double>(c.violations) / c.eligible : 0.0;
                    out.rows.push_back(
                        {name, {q, r, cfg.delta, rate, 0.0, c.eligible, cfg.seed}, hash});
                };
                emit("lemma_disk_violation_rate", disk);
                emit("lemma_subarc_violation_rate", subarc);
                emit("lemma_serial_violation_rate", serial);
                out.summary["lemma_worst_slack"] = {
                    {"disk", disk.worst_slack},
                    {"subarc", subarc.worst_slack},
                    {"serial", serial.worst_slack}};
            }
            break;
        }
        case ExperimentKind::MULTI_PACKET: {
            if (cfg.packets.empty())
                throw std::invalid_argument("MULTI_PACKET requires packets");
            for (double r : cfg.r_values)
                detail::absorb(out,
                               estimate_multi_packet(cfg.packets, lambdas, r,
                                                     cfg.n_samples, cfg.dt, cfg.h,
                                                     cfg.seed),
                               name, hash);
            break;
        }
        case ExperimentKind::MASS_RECT: {
            const std::vector<double> Ls =
                cfg.r_values.empty() ? std::vector<double>{1.0, 2.0, 3.0, 4.0}
                                     : cfg.r_values;
            for (double L : Ls) {
                const MassEstimate est = excursion_mass_rectangle(
                    L, cfg.mass_eps, cfg.dt, cfg.n_samples, cfg.seed);
                out.n_trials += est.n;
                out.rows.push_back(
                    {name, {"mass_rect", L, 0.0, est.value, est.stderr_, est.n, cfg.seed},
                     hash});
                out.rows.push_back({name,
                                    {"mass_rect_exact", L, 0.0, excursion_mass_series(L),
                                     0.0, 0, cfg.seed},
                                    hash});
            }
            break;
        }
    }

    // Exponent fit / flatness when the run spans enough radii.
    auto fit_block = [&](const char* quantity, double exact_xi) {
        std::vector<EstimateRecord> recs;
        for (const auto& row : out.rows)
            if (row.record.quantity == quantity && row.record.value > 0.0)
                recs.push_back(row.record);
        if (recs.size() >= 3) {
            try {
                const ExponentFit fit = fit_exponent(recs);
                out.summary["xi_fit"] = fit.xi_hat;
                out.summary["xi_fit_stderr"] = fit.stderr_;
                out.summary["xi_exact"] = exact_xi;
                out.summary["xi_abs_error"] = std::fabs(fit.xi_hat - exact_xi);
                out.summary["flatness_band_ratio"] =
                    flatness(recs, exact_xi).band_ratio();
            } catch (const std::exception&) {}
        }
    };
    if (cfg.experiment == ExperimentKind::B_SERIES && lambdas.size() == 1 &&
        cfg.filter == "none")
        fit_block("b", xi_exact(lambdas[0]));
    if (cfg.experiment == ExperimentKind::DISCONNECT)
        fit_block("z_positive", xi_exact(0.0));

    out.failed = out.exclusion_rate() > 0.01;
    out.summary["n_trials"] = out.n_trials;
    out.summary["excluded"] = out.excluded;
    out.summary["exclusion_rate"] = out.exclusion_rate();
    out.summary["status"] = out.failed ? "FAILED" : "OK";
    return out;
}

// ---------------------------------------------------------------------------
// CSV persistence: fixed schema, 17 significant digits, deterministic.
// ---------------------------------------------------------------------------

inline constexpr const char* kCsvHeader =
    "experiment,quantity,r,lambda,value,stderr,n,seed,config_hash";

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string to_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    os << kCsvHeader << "\n";
    for (const auto& row : rows) {
        const EstimateRecord& r = row.record;
        os << row.experiment << "," << r.quantity << "," << format_g17(r.r) << ","
           << format_g17(r.lambda) << "," << format_g17(r.value) << ","
           << format_g17(r.stderr_) << "," << r.n << "," << r.seed << "," << row.hash
           << "\n";
    }
    return os.str();
}

inline std::vector<ResultRow> parse_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty results file");
    if (line != kCsvHeader)
        throw std::invalid_argument("results schema mismatch: " + line);
    std::vector<ResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) fields.push_back(tok);
        if (fields.size() != 9)
            throw std::invalid_argument("malformed results row: " + line);
        ResultRow row;
        row.experiment = fields[0];
        row.record.quantity = fields[1];
        row.record.r = std::stod(fields[2]);
        row.record.lambda = std::stod(fields[3]);
        row.record.value = std::stod(fields[4]);
        row.record.stderr_ = std::stod(fields[5]);
        row.record.n = std::stoull(fields[6]);
        row.record.seed = std::stoull(fields[7]);
        row.hash = fields[8];
        rows.push_back(std::move(row));
    }
    return rows;
}

// Pools rows with identical (experiment, quantity, r, lambda): sample-size
// weighted mean, standard errors combined in quadrature of the weighted
// contributions.
inline std::vector<ResultRow> merge_rows(const std::vector<ResultRow>& rows) {
    struct Acc {
        ResultRow first;
        double wsum = 0.0, var = 0.0;
        std::uint64_t n = 0;
    };
    std::vector<std::pair<std::string, Acc>> pools;
    for (const auto& row : rows) {
        std::ostringstream key;
        key << row.experiment << "|" << row.record.quantity << "|"
            << format_g17(row.record.r) << "|" << format_g17(row.record.lambda);
        Acc* acc = nullptr;
        for (auto& [k, a] : pools)
            if (k == key.str()) acc = &a;
        if (!acc) {
            pools.push_back({key.str(), {}});
            acc = &pools.back().second;
            acc->first = row;
        }
        const double w = static_cast<double>(row.record.n);
        acc->wsum += w * row.record.value;
        acc->var += (w * row.record.stderr_) * (w * row.record.stderr_);
        acc->n += row.record.n;
    }
    std::vector<ResultRow> out;
    for (auto& [key, acc] : pools) {
        ResultRow row = acc.first;
        if (acc.n > 0) {
            row.record.value = acc.wsum / static_cast<double>(acc.n);
            row.record.stderr_ = std::sqrt(acc.var) / static_cast<double>(acc.n);
            row.record.n = acc.n;
        }
        row.hash = "merged";
        out.push_back(std::move(row));
    }
    return out;
}

// Renders the comparison table of a merged record set: per lambda the
// fitted exponent against the closed form, with the flatness band.
inline std::string render_report(const std::vector<ResultRow>& merged) {
    std::ostringstream os;
    os << "quantity        lambda   xi_fit     xi_exact   band_ratio  radii\n";
    auto block = [&](const std::string& quantity, double lambda, double exact) {
        std::vector<EstimateRecord> recs;
        for (const auto& row : merged)
            if (row.record.quantity == quantity &&
                std::fabs(row.record.lambda - lambda) < 1e-12 && row.record.value > 0.0)
                recs.push_back(row.record);
        if (recs.size() < 3) return;
        const ExponentFit fit = fit_exponent(recs);
        const double band = flatness(recs, exact).band_ratio();
        char line[160];
        std::snprintf(line, sizeof(line), "%-15s %-8.3g %-10.4f %-10.4f %-11.3g %zu\n",
                      quantity.c_str(), lambda, fit.xi_hat, exact, band, recs.size());
        os << line;
    };
    std::vector<std::pair<std::string, double>> seen;
    for (const auto& row : merged) {
        const std::string& q = row.record.quantity;
        if (q != "b" && q != "a" && q != "z_positive") continue;
        const std::pair<std::string, double> key{q, row.record.lambda};
        bool dup = false;
        for (const auto& s : seen) dup = dup || s == key;
        if (dup) continue;
        seen.push_back(key);
        block(q, row.record.lambda, q == "z_positive" ? xi_exact(0.0)
                                                      : xi_exact(row.record.lambda));
    }
    if (os.str().find('\n') == os.str().size() - 1)
        os << "(no fittable series: need >= 3 radii of b, a or z_positive)\n";
    return os.str();
}

} // namespace bxi
