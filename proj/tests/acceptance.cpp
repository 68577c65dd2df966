// Acceptance run: one PASS/FAIL line per criterion.
// Usage: acceptance <ruinsim binary> <configs dir>

#include "oracles.hpp"

#include <ruinsim.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace ruinsim;
namespace fs = std::filesystem;

namespace {

const std::vector<double> kHalf{0.5, 0.5};
const std::vector<double> kOnes{1.0, 1.0};

fs::path g_cli;
fs::path g_configs;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... v)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, v...);
    return buf;
}

double hyp(double a, double b) { return std::sqrt(a * a + b * b); }

ClaimModel pareto_polar()
{
    return ClaimModel(RadialLaw::pareto(2.0), SpectralMeasure({{1.0, 0.0}, {0.0, 1.0}}, {0.5, 0.5}));
}

Experiment load(const std::string& file)
{
    auto ex = assemble(load_config(g_configs / file));
    const auto rep = validate_experiment(ex);
    if (!rep.ok())
        throw std::runtime_error(file + ": " + rep.errors.front());
    return ex;
}

Outcome c1()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = pareto_polar();
    const oracle::Mat atoms{{1.0, 0.0}, {0.0, 1.0}};
    const oracle::Vec weights{0.5, 0.5};
    const std::vector<std::pair<RareSet, oracle::Mat>> sets{
        {make_sum_set(kHalf, 1.0), {{0.5, 0.5}}},
        {make_orthant_set(kOnes), {{1.0, 0.0}, {0.0, 1.0}}},
    };
    const std::vector<double> xs{2.0, 5.0, 10.0};
    const std::size_t n = 1000000;
    bool ok = true;
    double worst = 0.0;
    for (const auto& [set, dirs] : sets) {
        Rng rng(derive_seed(101, set.size(), 0));
        ClaimSampler sampler(m);
        std::vector<double> z(2);
        std::vector<std::size_t> hits(xs.size(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            sampler.next(rng, z);
            const double xa = set.functional_unchecked(z);
            for (std::size_t k = 0; k < xs.size(); ++k)
                hits[k] += xa > xs[k];
        }
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const double p = tail_FA(m, set, xs[k]).value;
            const double exact = oracle::polar_tail(2.0, atoms, weights, dirs, xs[k]);
            const double se = std::sqrt(p * (1.0 - p) / n);
            const double z_score = std::abs(double(hits[k]) / n - p) / se;
            worst = std::max(worst, z_score);
            ok = ok && z_score < 4.0 && std::abs(p - exact) <= 1e-14 * exact;
        }
    }
    const double t = seconds_since(t0);
    return {ok && t < 30.0, fmt("max |z| = %.2f over 6 cells, %.1f s", worst, t)};
}

Outcome c2()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = pareto_polar();
    const auto set = make_sum_set(kHalf, 1.0);
    const double mu = mu_of_set(m, set);
    const auto vbar = [](double x) { return std::pow(x, -2.0); };
    const std::vector<ArrivalModel> laws{ArrivalModel::poisson(1.0), ArrivalModel::inhomogeneous_poisson(1.0, 0.5, 2.0)};
    const double r = 0.05;
    RhsOptions numeric;
    numeric.allow_closed_form = false;
    double worst = 0.0;
    double worst_oracle = 0.0;
    for (std::size_t a = 0; a < laws.size(); ++a) {
        for (double x : {2.0, 10.0, 100.0}) {
            for (double T : {1.0, 5.0, 10.0}) {
                const double lhs = mrv_rhs(2.0, mu, vbar, laws[a], r, T, x, numeric).value;
                const double rhs = finite_rhs(m, laws[a], set, r, T, x, numeric).value;
                worst = std::max(worst, std::abs(lhs - rhs) / rhs);
                if (a == 0) {
                    const double ref = 0.25 * std::pow(x, -2.0) * oracle::poisson_discount(1.0, 2.0 * r, T);
                    worst_oracle = std::max(worst_oracle, std::abs(rhs - ref) / ref);
                }
            }
        }
    }
    const double t = seconds_since(t0);
    return {worst < 1e-9 && worst_oracle < 1e-9 && t < 1.0,
            fmt("max rel diff %.2e (closed-form oracle %.2e), %.3f s", worst, worst_oracle, t)};
}

/// Ratios decrease toward the limit with 2-sigma slack between neighbours.
bool trends_to_one(const std::vector<double>& dev, const std::vector<double>& se)
{
    for (std::size_t k = 1; k < dev.size(); ++k)
        if (dev[k] > dev[k - 1] + 2.0 * hyp(se[k], se[k - 1]))
            return false;
    return dev.back() < dev.front();
}

Outcome c3()
{
    const auto t0 = std::chrono::steady_clock::now();
    auto ex = load("cor31_validation.json");
    const auto& cfg = ex.config;
    const auto set = ex.target_set();
    const double unit = finite_rhs(ex.claims, ex.arrivals, set, cfg.r, cfg.horizon, 1.0).value;
    const double x_star = std::sqrt(unit / 1e-4);
    const std::vector<double> xs{5.0, 10.0, 20.0, 40.0, x_star};
    const EntranceProblem pb{ex.claims, ex.arrivals, set, cfg.r, cfg.horizon};
    const auto reps = conditional_mc(pb, xs, {1000000, cfg.seed, 0});
    std::vector<double> dev, se;
    std::string curve;
    for (std::size_t k = 0; k + 1 < reps.size(); ++k) {
        dev.push_back(std::abs(1.0 - *reps[k].ratio));
        se.push_back(reps[k].stderr_value / reps[k].asymptotic->value);
        curve += fmt(" %.4f", *reps[k].ratio);
    }
    const double ratio = *reps.back().ratio;
    const double t = seconds_since(t0);
    const bool ok = ratio >= 0.85 && ratio <= 1.15 && trends_to_one(dev, se) && t < 300.0;
    return {ok, fmt("x* = %.2f, ratio %.4f; ratios at 5,10,20,40:%s; %.1f s", x_star, ratio, curve.c_str(), t)};
}

Outcome c4()
{
    const auto t0 = std::chrono::steady_clock::now();
    auto ex = load("infinite_horizon.json");
    const auto& cfg = ex.config;
    const auto set = ex.target_set();
    const double unit = infinite_rhs(ex.claims, ex.arrivals, set, cfg.r, 1.0).value;
    const double x_star = std::sqrt(unit / 1e-4);
    const std::vector<double> xs{x_star};
    const EntranceProblem pb{ex.claims,          ex.arrivals,       set, cfg.r, cfg.horizon, ex.truncation,
                             cfg.truncation->q1, cfg.truncation->q2};
    const auto rep = conditional_mc(pb, xs, {1000000, cfg.seed, 0}).front();
    const double ratio = *rep.ratio;
    const double rb = rep.remainder_bound.value_or(INFINITY);
    const double t = seconds_since(t0);
    const bool ok = rb < 0.01 * rep.estimate && ratio >= 0.8 && ratio <= 1.2 && t < 600.0;
    return {ok, fmt("x* = %.2f, M = %zu, remainder %.2e vs estimate %.3e, ratio %.4f, %.1f s", x_star, ex.truncation,
                    rb, rep.estimate, ratio, t)};
}

Outcome c5()
{
    const auto t0 = std::chrono::steady_clock::now();
    auto ex = load("cor31_validation.json");
    const auto& cfg = ex.config;
    const auto set = ex.target_set();
    const EntranceProblem pb{ex.claims, ex.arrivals, set, cfg.r, cfg.horizon};
    const std::vector<double> xs{5.0, 10.0, 20.0, 40.0, 80.0, 160.0, 320.0};
    const auto d = decomposition_diag(pb, xs, {1000000, cfg.seed, 0});
    bool ok = true;
    std::string line;
    for (std::size_t k = 1; k < d.size(); ++k) {
        line += fmt(" x=%g:(%.4f,%.4f)", d[k].x, d[k].ratio_j_ge2.estimate, d[k].ratio_d_in_j0.estimate);
        if (k == 1)
            continue;
        const auto& a = d[k - 1];
        const auto& b = d[k];
        ok = ok &&
             b.ratio_j_ge2.estimate <=
                 a.ratio_j_ge2.estimate + 2.0 * hyp(a.ratio_j_ge2.stderr_value, b.ratio_j_ge2.stderr_value) &&
             b.ratio_d_in_j0.estimate <=
                 a.ratio_d_in_j0.estimate + 2.0 * hyp(a.ratio_d_in_j0.stderr_value, b.ratio_d_in_j0.stderr_value);
    }
    const auto& last = d.back();
    ok = ok && last.ratio_j_ge2.estimate + 2.0 * last.ratio_j_ge2.stderr_value < 0.1 &&
         last.ratio_d_in_j0.estimate + 2.0 * last.ratio_d_in_j0.stderr_value < 0.1;
    ok = ok && d[1].ratio_j_ge2.estimate > last.ratio_j_ge2.estimate &&
         d[1].ratio_d_in_j0.estimate > last.ratio_d_in_j0.estimate;
    return {ok, fmt("(J>=2, D in xA with J=0)/Lambda:%s; x=5 (not gated): (%.4f,%.4f); %.1f s", line.c_str(),
                    d[0].ratio_j_ge2.estimate, d[0].ratio_d_in_j0.estimate, seconds_since(t0))};
}

/// x with P(c1 Z1 + c2 Z2 in x A2(1,1)) = level.
double level_x(double c1, double c2, double level)
{
    double lo = 1.0, hi = 1e6;
    for (int i = 0; i < 200; ++i) {
        const double mid = std::sqrt(lo * hi);
        (oracle::orthant_pair_sf(2.0, c1, c2, mid) > level ? lo : hi) = mid;
    }
    return std::sqrt(lo * hi);
}

Outcome c6()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = pareto_polar();
    const auto set = make_orthant_set(kOnes);
    bool ok = true;
    double worst_z = 0.0, worst_dev = 0.0;
    std::uint64_t k = 0;
    for (const auto& c : weight_grid(0.5, 1.5, 3, 2)) {
        const double x = level_x(c[0], c[1], 1e-3);
        const std::vector<double> xs{x};
        const auto row = lemma31_ratio(m, set, 2, {c}, xs, {4000000, 3100 + k++, 0}).rows.front();
        const double exact = oracle::orthant_pair_sf(2.0, c[0], c[1], x) / oracle::orthant_single_sum(2.0, c[0], c[1], x);
        const double z = std::abs(row.ratio.estimate - exact) / row.ratio.stderr_value;
        worst_z = std::max(worst_z, z);
        worst_dev = std::max({worst_dev, std::abs(row.ratio.estimate - 1.0), std::abs(exact - 1.0)});
        ok = ok && z < 4.0 && std::abs(row.ratio.estimate - 1.0) < 0.1 && std::abs(exact - 1.0) < 0.1;
    }
    // Negative control, reported only.
    const ClaimModel dep(RadialLaw::pareto(2.0), SpectralMeasure({{1.0, 0.0}, {0.0, 1.0}}, {0.5, 0.5}),
                         Dependence::ar1(0.99));
    const std::vector<double> xs{level_x(1.0, 1.0, 1e-3)};
    const auto ctrl = lemma31_ratio(dep, set, 2, {{1.0, 1.0}}, xs, {1000000, 3199, 0}).rows.front();
    return {ok, fmt("9 weight vectors, max |z| vs oracle %.2f, max |ratio-1| %.4f; ar1(0.99) control ratio %.3f; %.1f s",
                    worst_z, worst_dev, ctrl.ratio.estimate, seconds_since(t0))};
}

Outcome c7()
{
    const auto t0 = std::chrono::steady_clock::now();
    auto ex = load("ruin_perturbed.json");
    const auto& cfg = ex.config;
    const std::vector<double> xs{25.0, 50.0, 100.0, 200.0};
    const RunSettings s{200000, cfg.seed, 0};
    auto risk = *ex.risk;
    const auto noisy = ruin_mc(risk, ex.claims, ex.arrivals, xs, s, RuinOptions{true});
    auto flat_cfg = risk;
    flat_cfg.diffusion.assign(flat_cfg.diffusion.size(), 0.0);
    const auto flat = ruin_mc(flat_cfg, ex.claims, ex.arrivals, xs, s);
    // Rows: base estimates then refined estimates, one per x.
    const std::size_t last = xs.size() - 1;
    const auto& a = noisy[last];
    const auto& b = flat[last];
    const double se = hyp(a.stderr_value, b.stderr_value) / a.asymptotic->value;
    const double diff = std::abs(*a.ratio - *b.ratio);
    double shift = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const auto& base = noisy[k];
        const auto& refined = noisy[xs.size() + k];
        if (refined.estimator != "ruin_refined" || refined.x != base.x)
            return {false, "unexpected refinement layout"};
        shift = std::max(shift, std::abs(refined.estimate - base.estimate) / base.stderr_value);
    }
    const bool ok = diff < 4.0 * se && shift < 1.0;
    return {ok, fmt("x=%g: ratio %.4f with diffusion, %.4f without, |diff| %.4f < 4 se = %.4f; "
                    "refinement max shift %.2f se; %.1f s",
                    xs.back(), *a.ratio, *b.ratio, diff, 4.0 * se, shift, seconds_since(t0))};
}

Outcome c8()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto pois = check_factorial_moment_bound(ArrivalModel::poisson(1.0), 5.0, 0.5, 100000, 801);
    const auto inhom =
        check_factorial_moment_bound(ArrivalModel::inhomogeneous_poisson(1.0, 0.5, 2.0), 2.0, 0.2, 100000, 802);
    const auto covers = [](const FactorialMomentReport& f) {
        return f.cells == 10 && !f.all_empty && f.ci_lo <= 1.0 && 1.0 <= f.ci_hi;
    };
    return {covers(pois) && covers(inhom),
            fmt("poisson C_hat %.3f [%.3f, %.3f]; inhom-poisson C_hat %.3f [%.3f, %.3f]; %.1f s", pois.c_hat,
                pois.ci_lo, pois.ci_hi, inhom.c_hat, inhom.ci_lo, inhom.ci_hi, seconds_since(t0))};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome c9()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto root = fs::temp_directory_path() / "ruinsim-acceptance-repro";
    fs::remove_all(root);
    std::size_t compared = 0;
    std::string bad;
    for (const auto& e : fs::directory_iterator(g_configs)) {
        if (e.path().extension() != ".json")
            continue;
        std::string reports[2];
        for (int run = 0; run < 2; ++run) {
            const auto out = root / (e.path().stem().string() + "-" + std::to_string(run));
            const std::string cmd = "env -u " + std::string(kSeedEnv) + " '" + g_cli.string() + "' run '" +
                                    e.path().string() + "' --workers 2 --out '" + out.string() + "' > /dev/null";
            if (std::system(cmd.c_str()) != 0) {
                bad += " " + e.path().filename().string() + "(exit)";
                break;
            }
            reports[run] = slurp(out / "report.csv");
        }
        if (reports[0].empty() || reports[0] != reports[1])
            bad += " " + e.path().filename().string();
        ++compared;
    }
    fs::remove_all(root);
    return {bad.empty() && compared > 0,
            fmt("%zu configs, mismatches:%s; %.1f s", compared, bad.empty() ? " none" : bad.c_str(), seconds_since(t0))};
}

} // namespace

int main(int argc, char** argv)
{
    if (argc != 3) {
        std::cerr << "usage: acceptance <ruinsim binary> <configs dir>\n";
        return 2;
    }
    g_cli = argv[1];
    g_configs = argv[2];
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"C1 projected tail vs exact oracle", c1},
        {"C2 regular-variation form equals the integral", c2},
        {"C3 finite-horizon ratio", c3},
        {"C4 infinite-horizon ratio", c4},
        {"C5 big-jump decomposition", c5},
        {"C6 two-claim sum ratio", c6},
        {"C7 ruin under perturbation", c7},
        {"C8 factorial-moment constant for Poisson kinds", c8},
        {"C9 reproducible report.csv", c9},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    }
    std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
