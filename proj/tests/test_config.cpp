#include <catch_amalgamated.hpp>

#include <ruinsim/config.hpp>
#include <ruinsim/runner.hpp>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ruinsim;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(RUINSIM_SOURCE_DIR) / "configs";

json read_json(const fs::path& p)
{
    std::ifstream in(p);
    return json::parse(in);
}

json base() { return read_json(kConfigs / "cor31_validation.json"); }

json infinite_base()
{
    auto j = base();
    j["horizon"] = "inf";
    j["r"] = 0.5;
    j["truncation"] = {{"q1", 1.9}, {"q2", 2.1}, {"max_remainder", 1e-7}};
    j["estimators"] = {"conditional"};
    return j;
}

ValidationReport check(const json& j)
{
    auto ex = assemble(parse_config(j));
    return validate_experiment(ex);
}

bool any_contains(const std::vector<std::string>& lines, const std::string& needle)
{
    for (const auto& l : lines)
        if (l.find(needle) != std::string::npos)
            return true;
    return false;
}

std::string error_of(const json& j)
{
    try {
        assemble(parse_config(j));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

fs::path temp_dir(const std::string& tag)
{
    auto d = fs::temp_directory_path() / ("ruinsim-test-" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_CASE("bundled configs round-trip byte for byte")
{
    int seen = 0;
    for (const auto& e : fs::directory_iterator(kConfigs)) {
        if (e.path().extension() != ".json")
            continue;
        ++seen;
        const auto text = slurp(e.path());
        const auto cfg = parse_config_text(text);
        CHECK(serialize(cfg) == text);
        CHECK(serialize(parse_config_text(serialize(cfg))) == serialize(cfg));
    }
    CHECK(seen >= 5);
}

TEST_CASE("bundled configs validate")
{
    for (const auto& e : fs::directory_iterator(kConfigs)) {
        if (e.path().extension() != ".json")
            continue;
        INFO(e.path().string());
        auto ex = assemble(load_config(e.path()));
        const auto rep = validate_experiment(ex);
        CHECK(rep.errors.empty());
    }
}

TEST_CASE("errors carry a JSON path")
{
    auto j = base();
    j["claims"]["radial"]["alpha"] = "two";
    CHECK(error_of(j).rfind("$.claims.radial.alpha:", 0) == 0);

    j = base();
    j["x_grid"][2] = -1.0;
    CHECK(error_of(j).rfind("$.x_grid[2]:", 0) == 0);

    j = base();
    j["claims"]["spectral"]["atoms"][1] = json::array({0.0});
    CHECK(error_of(j).rfind("$.claims.spectral", 0) == 0);

    j = base();
    j["estimators"] = {"crude", "magic"};
    CHECK(error_of(j) == "$.estimators[1]: unknown estimator 'magic'");
}

TEST_CASE("unknown keys are rejected")
{
    auto j = base();
    j["arrivals"]["lamda"] = 1.0;
    CHECK(error_of(j) == "$.arrivals.lamda: unknown key");
    j = base();
    j["extra"] = true;
    CHECK(error_of(j) == "$.extra: unknown key");
}

TEST_CASE("missing keys and malformed JSON")
{
    auto j = base();
    j.erase("n_paths");
    CHECK(error_of(j) == "$.n_paths: missing required key");
    CHECK_THROWS_AS(parse_config_text("{ not json"), ConfigError);
}

TEST_CASE("infinite horizon needs positive discounting")
{
    auto j = infinite_base();
    j["r"] = 0.0;
    const auto rep = check(j);
    REQUIRE_FALSE(rep.ok());
    CHECK(any_contains(rep.errors, "r > 0"));
    CHECK(any_contains(rep.errors, "$.r"));
}

TEST_CASE("moment window is checked against the tail indices")
{
    auto j = infinite_base();
    j["truncation"]["q1"] = 3.0;
    j["truncation"]["q2"] = 5.0;
    const auto rep = check(j);
    REQUIRE_FALSE(rep.ok());
    CHECK(any_contains(rep.errors, "q1 < J- = 2"));
    CHECK(any_contains(rep.errors, "q1 = 3"));

    j["truncation"]["q1"] = 1.5;
    j["truncation"]["q2"] = 1.9;
    CHECK(any_contains(check(j).errors, "q2 > J+ = 2"));
}

TEST_CASE("unbounded tails cannot use an infinite horizon")
{
    auto j = infinite_base();
    j["claims"]["radial"] = {{"kind", "weibull"}, {"shape", 0.5}, {"scale", 1.0}};
    const auto rep = check(j);
    REQUIRE_FALSE(rep.ok());
    CHECK(any_contains(rep.errors, "unbounded upper Matuszewska index"));
}

TEST_CASE("Poisson arrivals need no factorial check")
{
    const auto rep = check(base());
    CHECK(rep.ok());
    CHECK(any_contains(rep.notes, "C = 1"));
}

TEST_CASE("bounded-below series is finite and reported")
{
    auto j = infinite_base();
    j["r"] = 1.0;
    j["arrivals"] = {{"kind", "bounded-below"}, {"a", 0.1}, {"rate", 1.0}};
    auto ex = assemble(parse_config(j));
    const auto rep = validate_experiment(ex);
    CHECK(rep.ok());
    CHECK(any_contains(rep.notes, "(finite)"));
    CHECK(any_contains(rep.notes, "truncation: first"));
    CHECK(ex.truncation > 0);
}

TEST_CASE("explicit truncation count is used as given")
{
    auto j = infinite_base();
    j["truncation"].erase("max_remainder");
    j["truncation"]["count"] = 77;
    auto ex = assemble(parse_config(j));
    CHECK(validate_experiment(ex).ok());
    CHECK(ex.truncation == 77);

    j["truncation"]["max_remainder"] = 1e-6;
    CHECK(error_of(j).rfind("$.truncation:", 0) == 0);
}

TEST_CASE("dependent claims reject the conditional estimator")
{
    auto j = base();
    j["claims"]["dependence"] = {{"kind", "ar1"}, {"rho", 0.5}};
    auto rep = check(j);
    CHECK_FALSE(rep.ok());
    CHECK(any_contains(rep.errors, "'conditional'"));
    j["estimators"] = {"crude"};
    CHECK(check(j).ok());
}

TEST_CASE("estimator compatibility")
{
    auto j = base();
    j["estimators"] = {"crude", "crude"};
    CHECK(any_contains(check(j).errors, "listed twice"));
    j["estimators"] = {"ruin"};
    CHECK(any_contains(check(j).errors, "needs a ruin target"));
    j["estimators"] = {"lemma31"};
    CHECK(any_contains(check(j).errors, "$.lemma31: required"));
}

TEST_CASE("renewal arrivals without a spot check get a note")
{
    auto j = base();
    j["arrivals"] = {{"kind", "renewal"}, {"inter_arrival", {{"law", "gamma"}, {"shape", 2.0}, {"scale", 0.5}}}};
    const auto rep = check(j);
    CHECK(rep.ok());
    CHECK(any_contains(rep.notes, "not checked"));
}

TEST_CASE("seed override from the environment")
{
    ::setenv(kSeedEnv, "12345", 1);
    CHECK(seed_from_env() == std::optional<std::uint64_t>(12345));
    ::setenv(kSeedEnv, "12x", 1);
    CHECK_THROWS_AS(seed_from_env(), ConfigError);
    ::unsetenv(kSeedEnv);
    CHECK_FALSE(seed_from_env().has_value());
}

TEST_CASE("run command writes the three outputs")
{
    auto j = base();
    j["n_paths"] = 5000;
    j["x_grid"] = {5.0, 20.0};
    const auto dir = temp_dir("run");
    {
        std::ofstream(dir / "cfg.json") << j.dump(2);
    }
    RunOptions opts;
    opts.out_dir = dir / "out";
    opts.seed_override = 99;
    std::ostringstream out, err;
    REQUIRE(run_command(dir / "cfg.json", opts, out, err) == exit_ok);
    const auto report = slurp(opts.out_dir / "report.csv");
    CHECK(report.rfind("x,estimator,estimate,stderr,asymptotic,ratio,ratio_ci_lo,ratio_ci_hi,n_paths,seed\n", 0) == 0);
    CHECK(report.find(",5000,99\n") != std::string::npos);
    CHECK(fs::exists(opts.out_dir / "summary.txt"));
    const auto meta = read_json(opts.out_dir / "meta.json");
    CHECK(meta["seed"] == 99);
    CHECK(meta["seed_source"] == kSeedEnv);
    auto effective = parse_config(j);
    effective.seed = 99;
    CHECK(meta["config"] == to_json(effective));

    // Same seed, different worker count.
    RunOptions again = opts;
    again.out_dir = dir / "out3";
    again.workers = 3;
    REQUIRE(run_command(dir / "cfg.json", again, out, err) == exit_ok);
    CHECK(slurp(again.out_dir / "report.csv") == report);
}

TEST_CASE("exit codes")
{
    const auto dir = temp_dir("exit");
    std::ostringstream out, err;
    RunOptions opts;
    opts.out_dir = dir / "out";
    CHECK(validate_command(dir / "missing.json", std::nullopt, out, err) == exit_invalid);
    CHECK(validate_command(fs::path(RUINSIM_SOURCE_DIR) / "tests/data/infinite_r0.json", std::nullopt, out, err) ==
          exit_invalid);
    CHECK(run_command(fs::path(RUINSIM_SOURCE_DIR) / "tests/data/infinite_r0.json", opts, out, err) == exit_invalid);
    CHECK_FALSE(fs::exists(opts.out_dir / "report.csv"));
    CHECK(validate_command(kConfigs / "cor31_validation.json", std::nullopt, out, err) == exit_ok);
    CHECK(asymptotic_command(kConfigs / "cor31_validation.json", opts, out, err) == exit_ok);
    CHECK(fs::exists(opts.out_dir / "asymptotic.csv"));
}
