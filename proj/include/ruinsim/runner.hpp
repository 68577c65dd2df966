#pragma once

// Experiment runner behind the ruinsim command line: validate, run and
// asymptotic, writing report.csv, summary.txt, meta.json and side tables.

#include "asymptotics.hpp"
#include "config.hpp"
#include "estimators.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ruinsim {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kSeedEnv = "RUINSIM_SEED";

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_invalid = 2 };

/// One line of report.csv.
struct ReportRow {
    double x = 0.0;
    std::string estimator;
    double estimate = 0.0;
    double stderr_value = 0.0;
    std::optional<double> asymptotic;
    std::optional<double> ratio;
    std::optional<double> ratio_ci_lo;
    std::optional<double> ratio_ci_hi;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
};

inline std::string format_g17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows)
{
    const auto opt = [](const std::optional<double>& v) { return v ? format_g17(*v) : std::string(); };
    os << "x,estimator,estimate,stderr,asymptotic,ratio,ratio_ci_lo,ratio_ci_hi,n_paths,seed\n";
    for (const auto& r : rows)
        os << format_g17(r.x) << ',' << r.estimator << ',' << format_g17(r.estimate) << ','
           << format_g17(r.stderr_value) << ',' << opt(r.asymptotic) << ',' << opt(r.ratio) << ','
           << opt(r.ratio_ci_lo) << ',' << opt(r.ratio_ci_hi) << ',' << r.n_paths << ',' << r.seed << '\n';
}

struct RunOptions {
    std::optional<unsigned> workers;
    std::filesystem::path out_dir = "ruinsim-out";
    /// Replaces the config seed; normally read from RUINSIM_SEED.
    std::optional<std::uint64_t> seed_override;
};

/// Parses RUINSIM_SEED; throws ConfigError on a malformed value.
inline std::optional<std::uint64_t> seed_from_env()
{
    const char* raw = std::getenv(kSeedEnv);
    if (!raw || !*raw)
        return std::nullopt;
    const std::string text(raw);
    if (text.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError(kSeedEnv, "expected a non-negative integer, got '" + text + "'");
    try {
        return std::stoull(text);
    } catch (const std::exception&) {
        throw ConfigError(kSeedEnv, "value out of range: '" + text + "'");
    }
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("$", "cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

namespace detail {

inline ReportRow row_from(const EstimateReport& rep)
{
    ReportRow row{rep.x,     rep.estimator, rep.estimate,   rep.stderr_value, std::nullopt,
                  rep.ratio, rep.ratio_ci_lo, rep.ratio_ci_hi, rep.n_paths,   rep.seed};
    if (rep.asymptotic)
        row.asymptotic = rep.asymptotic->value;
    return row;
}

inline ReportRow ratio_row(double x, std::string name, const Stat& s, double reference, std::size_t n,
                           std::uint64_t seed)
{
    ReportRow row{x, std::move(name), s.estimate, s.stderr_value, reference, std::nullopt,
                  std::nullopt, std::nullopt, n, seed};
    if (reference > 0.0) {
        row.ratio = s.estimate / reference;
        row.ratio_ci_lo = (s.estimate - kNormalQuantile95 * s.stderr_value) / reference;
        row.ratio_ci_hi = (s.estimate + kNormalQuantile95 * s.stderr_value) / reference;
    }
    return row;
}

inline void write_lemma31_csv(std::ostream& os, const Lemma31Table& t)
{
    os << "n,weights,x,numerator,numerator_stderr,hits,denominator,ratio,ratio_stderr,mixed,mixed_stderr,"
          "mixed_ratio\n";
    for (const auto& r : t.rows) {
        std::string w;
        for (std::size_t i = 0; i < r.weights.size(); ++i)
            w += (i ? ";" : "") + format_g17(r.weights[i]);
        os << t.n << ',' << w << ',' << format_g17(r.x) << ',' << format_g17(r.numerator.estimate) << ','
           << format_g17(r.numerator.stderr_value) << ',' << r.hits << ',' << format_g17(r.denominator) << ','
           << format_g17(r.ratio.estimate) << ',' << format_g17(r.ratio.stderr_value) << ','
           << format_g17(r.mixed.estimate) << ',' << format_g17(r.mixed.stderr_value) << ','
           << format_g17(r.mixed_ratio.estimate) << '\n';
    }
}

inline void write_factorial_csv(std::ostream& os, const FactorialMomentReport& f)
{
    os << "i,j,ratio,ratio_stderr\n";
    for (std::size_t i = 0; i < f.cells; ++i)
        for (std::size_t j = 0; j < f.cells; ++j)
            if (i != j)
                os << i << ',' << j << ',' << format_g17(f.at(i, j)) << ','
                   << format_g17(f.ratio_stderr[i * f.cells + j]) << '\n';
}

inline void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

struct Loaded {
    Experiment experiment;
    ValidationReport validation;
    std::string seed_source = "config";
};

inline std::optional<Loaded> load_and_validate(const std::filesystem::path& path,
                                               std::optional<std::uint64_t> seed_override, std::ostream& err)
{
    try {
        auto cfg = load_config(path);
        std::string source = "config";
        if (seed_override) {
            cfg.seed = *seed_override;
            source = kSeedEnv;
        }
        auto ex = assemble(cfg);
        auto rep = validate_experiment(ex);
        return Loaded{std::move(ex), std::move(rep), source};
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return std::nullopt;
    }
}

inline void print_validation(std::ostream& os, const ValidationReport& rep)
{
    for (const auto& n : rep.notes)
        os << "note: " << n << '\n';
    for (const auto& e : rep.errors)
        os << "error: " << e << '\n';
}

inline std::vector<AsymptoticRow> asymptotic_rows(const Experiment& ex)
{
    const auto& cfg = ex.config;
    const EntranceProblem pb{ex.claims, ex.arrivals, ex.target_set(), cfg.r, cfg.horizon, ex.truncation,
                             cfg.truncation ? cfg.truncation->q1 : 0.0, cfg.truncation ? cfg.truncation->q2 : 0.0};
    std::vector<AsymptoticRow> rows;
    for (double x : cfg.x_grid)
        rows.push_back({x, matched_asymptotic(pb, x)});
    return rows;
}

inline std::string horizon_text(const ExperimentConfig& cfg)
{
    return cfg.infinite() ? std::string("inf") : format_g17(cfg.horizon);
}

} // namespace detail

/// Assembly and assumption checks only.
inline int validate_command(const std::filesystem::path& config, std::optional<std::uint64_t> seed,
                            std::ostream& out, std::ostream& err)
{
    auto loaded = detail::load_and_validate(config, seed, err);
    if (!loaded)
        return exit_invalid;
    detail::print_validation(out, loaded->validation);
    out << (loaded->validation.ok() ? "valid\n" : "invalid\n");
    return loaded->validation.ok() ? exit_ok : exit_invalid;
}

/// Right-hand sides on the x grid, printed and written to asymptotic.csv.
inline int asymptotic_command(const std::filesystem::path& config, const RunOptions& options, std::ostream& out,
                              std::ostream& err)
{
    auto loaded = detail::load_and_validate(config, options.seed_override, err);
    if (!loaded)
        return exit_invalid;
    if (!loaded->validation.ok()) {
        detail::print_validation(err, loaded->validation);
        return exit_invalid;
    }
    try {
        const auto rows = detail::asymptotic_rows(loaded->experiment);
        std::ostringstream csv;
        write_asymptotic_csv(csv, rows);
        std::filesystem::create_directories(options.out_dir);
        detail::write_file(options.out_dir / "asymptotic.csv", csv.str());
        out << csv.str();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_ok;
}

/// Full run: every listed estimator on the x grid.
inline int run_command(const std::filesystem::path& config, const RunOptions& options, std::ostream& out,
                       std::ostream& err)
{
    using clock = std::chrono::steady_clock;
    const auto started = clock::now();
    auto loaded = detail::load_and_validate(config, options.seed_override, err);
    if (!loaded)
        return exit_invalid;
    if (!loaded->validation.ok()) {
        detail::print_validation(err, loaded->validation);
        return exit_invalid;
    }
    auto& ex = loaded->experiment;
    const auto& cfg = ex.config;
    const unsigned workers = options.workers ? *options.workers : static_cast<unsigned>(cfg.workers);
    const RunSettings settings{cfg.n_paths, cfg.seed, workers};
    const double q1 = cfg.truncation ? cfg.truncation->q1 : 0.0;
    const double q2 = cfg.truncation ? cfg.truncation->q2 : 0.0;
    const EntranceProblem pb{ex.claims, ex.arrivals, ex.target_set(), cfg.r, cfg.horizon, ex.truncation, q1, q2};

    std::vector<ReportRow> rows;
    std::vector<std::string> flags;
    std::ostringstream tables;
    nlohmann::json timing = nlohmann::json::object();
    std::optional<Lemma31Table> lemma;
    try {
        std::filesystem::create_directories(options.out_dir);
        for (const auto& name : cfg.estimators) {
            const auto t0 = clock::now();
            std::vector<EstimateReport> reps;
            if (name == "crude")
                reps = crude_mc(pb, cfg.x_grid, settings);
            else if (name == "conditional")
                reps = conditional_mc(pb, cfg.x_grid, settings);
            else if (name == "max_conditional")
                reps = max_conditional_mc(pb, cfg.x_grid, settings);
            else if (name == "ruin")
                reps = ruin_mc(*ex.risk, ex.claims, ex.arrivals, cfg.x_grid, settings,
                               RuinOptions{cfg.ruin.refinement_check});
            else if (name == "decomposition") {
                for (const auto& d : decomposition_diag(pb, cfg.x_grid, settings)) {
                    const double lam = d.lambda.value;
                    rows.push_back(detail::ratio_row(d.x, "decomp_j_ge1", d.j_ge1, lam, d.n_paths, d.seed));
                    rows.push_back(detail::ratio_row(d.x, "decomp_j_ge2", d.j_ge2, lam, d.n_paths, d.seed));
                    rows.push_back(detail::ratio_row(d.x, "decomp_j_eq1", d.j_eq1, lam, d.n_paths, d.seed));
                    rows.push_back(detail::ratio_row(d.x, "decomp_d_in", d.d_in, lam, d.n_paths, d.seed));
                    rows.push_back(detail::ratio_row(d.x, "decomp_d_in_j0", d.d_in_j0, lam, d.n_paths, d.seed));
                    for (const auto& w : d.warnings)
                        flags.push_back("decomposition x=" + format_g17(d.x) + ": " + w);
                }
            } else if (name == "lemma31") {
                const auto& spec = *cfg.lemma31;
                const auto grid = weight_grid(spec.a, spec.b, spec.points, spec.n);
                lemma = lemma31_ratio(ex.claims, ex.target_set(), spec.n, grid, cfg.x_grid, settings);
                // One row per x: the weight vector with the largest deviation.
                for (const auto& [x, dev] : lemma->max_deviation) {
                    const Lemma31Row* worst = nullptr;
                    for (const auto& r : lemma->rows)
                        if (r.x == x && (!worst || std::abs(r.ratio.estimate - 1.0) >
                                                       std::abs(worst->ratio.estimate - 1.0)))
                            worst = &r;
                    if (worst)
                        rows.push_back(detail::ratio_row(x, "lemma31", worst->numerator, worst->denominator,
                                                         lemma->n_paths, lemma->seed));
                }
                for (const auto& w : lemma->warnings)
                    flags.push_back("lemma31: " + w);
            }
            for (const auto& rep : reps) {
                rows.push_back(detail::row_from(rep));
                for (const auto& w : rep.warnings)
                    flags.push_back(rep.estimator + " x=" + format_g17(rep.x) + ": " + w);
            }
            timing[name] = std::chrono::duration<double>(clock::now() - t0).count();
        }

        std::ostringstream report;
        write_report_csv(report, rows);
        detail::write_file(options.out_dir / "report.csv", report.str());

        const auto asym = detail::asymptotic_rows(ex);
        std::ostringstream asym_csv;
        write_asymptotic_csv(asym_csv, asym);
        detail::write_file(options.out_dir / "asymptotic.csv", asym_csv.str());

        std::vector<std::string> outputs{"report.csv", "summary.txt", "meta.json", "asymptotic.csv"};
        if (lemma) {
            std::ostringstream l;
            detail::write_lemma31_csv(l, *lemma);
            detail::write_file(options.out_dir / "lemma31.csv", l.str());
            outputs.push_back("lemma31.csv");
        }
        if (loaded->validation.factorial) {
            std::ostringstream f;
            detail::write_factorial_csv(f, *loaded->validation.factorial);
            detail::write_file(options.out_dir / "factorial.csv", f.str());
            outputs.push_back("factorial.csv");
        }

        std::ostringstream summary;
        summary << "ruinsim " << kVersion << ": " << cfg.name << '\n';
        summary << "claims " << ex.claims.radial.name() << ", arrivals " << ex.arrivals.name() << ", r "
                << detail::num(cfg.r) << ", horizon " << detail::horizon_text(cfg) << ", set '"
                << ex.target_set().label() << "'\n";
        summary << "paths " << cfg.n_paths << ", seed " << cfg.seed << " (" << loaded->seed_source << "), workers "
                << workers << "\n\n";
        for (const auto& n : loaded->validation.notes)
            summary << "check: " << n << '\n';
        summary << '\n';
        char line[256];
        std::snprintf(line, sizeof line, "%-16s %12s %12s %12s %12s %10s %21s\n", "estimator", "x", "estimate",
                      "stderr", "asymptotic", "ratio", "ratio 95% ci");
        summary << line;
        for (const auto& r : rows) {
            std::string ci = "-";
            if (r.ratio_ci_lo && r.ratio_ci_hi) {
                char b[64];
                std::snprintf(b, sizeof b, "[%.4f, %.4f]", *r.ratio_ci_lo, *r.ratio_ci_hi);
                ci = b;
            }
            const std::string asym_text = r.asymptotic ? ([&] {
                char b[32];
                std::snprintf(b, sizeof b, "%.4e", *r.asymptotic);
                return std::string(b);
            })()
                                                       : std::string("-");
            const std::string ratio_text = r.ratio ? ([&] {
                char b[32];
                std::snprintf(b, sizeof b, "%.4f", *r.ratio);
                return std::string(b);
            })()
                                                   : std::string("-");
            std::snprintf(line, sizeof line, "%-16s %12.6g %12.4e %12.4e %12s %10s %21s\n", r.estimator.c_str(), r.x,
                          r.estimate, r.stderr_value, asym_text.c_str(), ratio_text.c_str(), ci.c_str());
            summary << line;
        }
        if (lemma) {
            summary << "\nlemma31 max |ratio - 1| over the weight grid:\n";
            for (const auto& [x, dev] : lemma->max_deviation) {
                std::snprintf(line, sizeof line, "  x = %-10.6g %.4f\n", x, dev);
                summary << line;
            }
        }
        summary << "\nflags:" << (flags.empty() ? " none\n" : "\n");
        for (const auto& f : flags)
            summary << "  " << f << '\n';
        detail::write_file(options.out_dir / "summary.txt", summary.str());

        nlohmann::json meta;
        meta["version"] = kVersion;
        meta["config"] = to_json(cfg);
        meta["seed"] = cfg.seed;
        meta["seed_source"] = loaded->seed_source;
        meta["seed_scheme"] = kSeedScheme;
        meta["workers"] = workers;
        meta["truncation"] = ex.truncation;
        meta["checks"] = loaded->validation.notes;
        meta["flags"] = flags;
        meta["outputs"] = outputs;
        timing["total"] = std::chrono::duration<double>(clock::now() - started).count();
        meta["timing_seconds"] = timing;
        detail::write_file(options.out_dir / "meta.json", meta.dump(2) + "\n");
        out << summary.str();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_ok;
}

} // namespace ruinsim
