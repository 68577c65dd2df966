#pragma once

// Experiment configuration: strict JSON schema with path-addressed errors,
// canonical serialization, and assembly into model objects.

#include "arrival_models.hpp"
#include "estimators.hpp"
#include "claim_models.hpp"
#include "rare_sets.hpp"
#include "risk_sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ruinsim {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(path)
    {
    }
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

namespace detail {

class Reader {
public:
    Reader(const json& j, std::string path) : j_(&j), path_(std::move(path))
    {
        if (!j.is_object())
            throw ConfigError(path_, "expected an object");
    }

    const std::string& path() const noexcept { return path_; }
    std::string at(const std::string& key) const { return path_ + "." + key; }
    bool has(const std::string& key) const { return j_->contains(key); }

    void allow_only(std::initializer_list<const char*> keys) const
    {
        std::set<std::string> allowed(keys.begin(), keys.end());
        for (auto it = j_->begin(); it != j_->end(); ++it)
            if (!allowed.count(it.key()))
                throw ConfigError(at(it.key()), "unknown key");
    }

    const json& raw(const std::string& key) const
    {
        if (!has(key))
            throw ConfigError(at(key), "missing required key");
        return (*j_)[key];
    }

    Reader object(const std::string& key) const { return Reader(raw(key), at(key)); }

    double number(const std::string& key) const { return as_number(raw(key), at(key)); }
    std::optional<double> number_opt(const std::string& key) const
    {
        return has(key) ? std::optional<double>(number(key)) : std::nullopt;
    }

    std::uint64_t unsigned_int(const std::string& key) const
    {
        const auto& v = raw(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
            throw ConfigError(at(key), "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    std::string string(const std::string& key) const
    {
        const auto& v = raw(key);
        if (!v.is_string())
            throw ConfigError(at(key), "expected a string");
        return v.get<std::string>();
    }

    bool boolean(const std::string& key) const
    {
        const auto& v = raw(key);
        if (!v.is_boolean())
            throw ConfigError(at(key), "expected true or false");
        return v.get<bool>();
    }

    std::vector<double> vector(const std::string& key) const
    {
        const auto& v = raw(key);
        if (!v.is_array())
            throw ConfigError(at(key), "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i)
            out.push_back(as_number(v[i], at(key) + "[" + std::to_string(i) + "]"));
        return out;
    }

    std::vector<std::vector<double>> matrix(const std::string& key) const
    {
        const auto& v = raw(key);
        if (!v.is_array())
            throw ConfigError(at(key), "expected an array of arrays");
        std::vector<std::vector<double>> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::string p = at(key) + "[" + std::to_string(i) + "]";
            if (!v[i].is_array())
                throw ConfigError(p, "expected an array of numbers");
            std::vector<double> row;
            for (std::size_t k = 0; k < v[i].size(); ++k)
                row.push_back(as_number(v[i][k], p + "[" + std::to_string(k) + "]"));
            out.push_back(std::move(row));
        }
        return out;
    }

    std::vector<std::string> strings(const std::string& key) const
    {
        const auto& v = raw(key);
        if (!v.is_array())
            throw ConfigError(at(key), "expected an array of strings");
        std::vector<std::string> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_string())
                throw ConfigError(at(key) + "[" + std::to_string(i) + "]", "expected a string");
            out.push_back(v[i].get<std::string>());
        }
        return out;
    }

private:
    static double as_number(const json& v, const std::string& path)
    {
        if (!v.is_number())
            throw ConfigError(path, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d))
            throw ConfigError(path, "expected a finite number");
        return d;
    }

    const json* j_;
    std::string path_;
};

// Turns a model constructor's invalid_argument into a path-addressed error.
template <typename F>
auto guarded(const std::string& path, F&& f)
{
    try {
        return f();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
}

} // namespace detail

struct RadialSpec {
    std::string kind = "pareto";
    double alpha = 2.0;
    double shape = 0.5;
    double scale = 1.0;
    double mu = 0.0;
    double sigma = 1.0;
};

struct ClaimSpec {
    RadialSpec radial;
    std::vector<std::vector<double>> atoms;
    std::vector<double> weights;
    std::string dependence = "iid";
    double rho = 0.0;
};

struct CacheSpec {
    std::optional<double> horizon;
    std::optional<std::uint64_t> nodes;
    std::optional<std::uint64_t> paths;
    std::optional<std::uint64_t> seed;
    bool empty() const { return !horizon && !nodes && !paths && !seed; }
};

struct ArrivalSpec {
    std::string kind = "poisson";
    double lambda = 1.0; // poisson, wlod
    double lambda0 = 1.0;
    double beta = 0.0;
    double period = 1.0;
    double shape = 1.0; // renewal gamma
    double scale = 1.0;
    double coupling = 0.5; // wlod
    double a = 0.1;        // bounded-below
    double rate = 1.0;
    std::vector<double> mixing_values{1.0};
    std::vector<double> mixing_probs{1.0};
    std::vector<double> times; // fixed
    CacheSpec cache;
};

struct SetSpec {
    std::string kind = "sum";
    std::vector<double> l;
    double c = 1.0;
    std::vector<double> thresholds;
    std::vector<std::vector<double>> directions;
};

struct PremiumSpec {
    std::string kind = "constant";
    double rate = 0.0;      // constant
    double base = 0.0;      // sinusoid
    double amplitude = 0.0;
    double period = 1.0;
};

struct RuinSpec {
    std::string ruin_set = "any-negative";
    std::vector<double> allocation;
    std::vector<PremiumSpec> premiums;
    std::vector<double> diffusion;
    std::vector<std::vector<double>> correlation;
    double grid_step = 0.01;
    bool refinement_check = false;
};

struct TruncationSpec {
    double q1 = 0.0;
    double q2 = 0.0;
    std::optional<std::uint64_t> count;
    std::optional<double> max_remainder;
};

struct FactorialSpec {
    double T = 1.0;
    double h = 0.1;
    std::uint64_t paths = 100000;
};

struct Lemma31Spec {
    std::uint64_t n = 2;
    double a = 0.5;
    double b = 1.5;
    std::uint64_t points = 3;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::string name;
    ClaimSpec claims;
    ArrivalSpec arrivals;
    std::string target_kind = "entrance";
    SetSpec set;
    RuinSpec ruin;
    double r = 0.0;
    double horizon = 1.0; // +infinity for "inf"
    std::optional<TruncationSpec> truncation;
    std::vector<double> x_grid;
    std::vector<std::string> estimators;
    std::uint64_t n_paths = 100000;
    std::uint64_t seed = 1;
    std::uint64_t workers = 1;
    std::optional<FactorialSpec> factorial_check;
    std::optional<Lemma31Spec> lemma31;

    bool infinite() const noexcept { return !std::isfinite(horizon); }
    bool ruin_target() const noexcept { return target_kind == "ruin"; }
};

inline const std::vector<std::string>& known_estimators()
{
    static const std::vector<std::string> names{"crude",         "conditional", "max_conditional",
                                                "decomposition", "lemma31",     "ruin"};
    return names;
}

namespace detail {

inline ClaimSpec parse_claims(const Reader& in)
{
    in.allow_only({"radial", "spectral", "dependence"});
    ClaimSpec spec;
    const auto radial = in.object("radial");
    spec.radial.kind = radial.string("kind");
    if (spec.radial.kind == "pareto") {
        radial.allow_only({"kind", "alpha"});
        spec.radial.alpha = radial.number("alpha");
    } else if (spec.radial.kind == "weibull") {
        radial.allow_only({"kind", "shape", "scale"});
        spec.radial.shape = radial.number("shape");
        spec.radial.scale = radial.number("scale");
    } else if (spec.radial.kind == "lognormal") {
        radial.allow_only({"kind", "mu", "sigma"});
        spec.radial.mu = radial.number("mu");
        spec.radial.sigma = radial.number("sigma");
    } else {
        throw ConfigError(radial.at("kind"), "unknown radial kind '" + spec.radial.kind +
                                                 "' (expected pareto, weibull or lognormal)");
    }
    const auto spectral = in.object("spectral");
    spectral.allow_only({"atoms", "weights"});
    spec.atoms = spectral.matrix("atoms");
    spec.weights = spectral.vector("weights");
    if (in.has("dependence")) {
        const auto dep = in.object("dependence");
        spec.dependence = dep.string("kind");
        if (spec.dependence == "iid") {
            dep.allow_only({"kind"});
        } else if (spec.dependence == "ar1") {
            dep.allow_only({"kind", "rho"});
            spec.rho = dep.number("rho");
        } else {
            throw ConfigError(dep.at("kind"), "unknown dependence kind '" + spec.dependence +
                                                  "' (expected iid or ar1)");
        }
    }
    return spec;
}

inline ArrivalSpec parse_arrivals(const Reader& in)
{
    ArrivalSpec spec;
    spec.kind = in.string("kind");
    if (in.has("cache")) {
        const auto c = in.object("cache");
        c.allow_only({"horizon", "nodes", "paths", "seed"});
        spec.cache.horizon = c.number_opt("horizon");
        if (c.has("nodes"))
            spec.cache.nodes = c.unsigned_int("nodes");
        if (c.has("paths"))
            spec.cache.paths = c.unsigned_int("paths");
        if (c.has("seed"))
            spec.cache.seed = c.unsigned_int("seed");
    }
    if (spec.kind == "poisson") {
        in.allow_only({"kind", "lambda", "cache"});
        spec.lambda = in.number("lambda");
    } else if (spec.kind == "inhom-poisson") {
        in.allow_only({"kind", "lambda0", "beta", "period", "cache"});
        spec.lambda0 = in.number("lambda0");
        spec.beta = in.number("beta");
        spec.period = in.number("period");
    } else if (spec.kind == "renewal") {
        in.allow_only({"kind", "inter_arrival", "cache"});
        const auto law = in.object("inter_arrival");
        law.allow_only({"law", "shape", "scale"});
        if (law.string("law") != "gamma")
            throw ConfigError(law.at("law"), "only the gamma inter-arrival law is supported");
        spec.shape = law.number("shape");
        spec.scale = law.number("scale");
    } else if (spec.kind == "wlod") {
        in.allow_only({"kind", "lambda", "coupling", "cache"});
        spec.lambda = in.number("lambda");
        spec.coupling = in.number("coupling");
    } else if (spec.kind == "bounded-below") {
        in.allow_only({"kind", "a", "rate", "mixing", "cache"});
        spec.a = in.number("a");
        spec.rate = in.number("rate");
        if (in.has("mixing")) {
            const auto m = in.object("mixing");
            m.allow_only({"values", "probs"});
            spec.mixing_values = m.vector("values");
            spec.mixing_probs = m.vector("probs");
        }
    } else if (spec.kind == "fixed") {
        in.allow_only({"kind", "times", "cache"});
        spec.times = in.vector("times");
    } else {
        throw ConfigError(in.at("kind"), "unknown arrival kind '" + spec.kind +
                                             "' (expected poisson, inhom-poisson, renewal, wlod, bounded-below "
                                             "or fixed)");
    }
    return spec;
}

inline SetSpec parse_set(const Reader& in)
{
    SetSpec spec;
    spec.kind = in.string("kind");
    if (spec.kind == "sum") {
        in.allow_only({"kind", "l", "c"});
        spec.l = in.vector("l");
        spec.c = in.number("c");
    } else if (spec.kind == "orthant") {
        in.allow_only({"kind", "c"});
        spec.thresholds = in.vector("c");
    } else if (spec.kind == "polyhedral") {
        in.allow_only({"kind", "directions"});
        spec.directions = in.matrix("directions");
    } else {
        throw ConfigError(in.at("kind"), "unknown set kind '" + spec.kind + "' (expected sum, orthant or polyhedral)");
    }
    return spec;
}

inline RuinSpec parse_ruin(const Reader& in)
{
    in.allow_only({"kind", "ruin_set", "allocation", "premiums", "diffusion", "correlation", "grid_step",
                   "refinement_check"});
    RuinSpec spec;
    spec.ruin_set = in.string("ruin_set");
    if (spec.ruin_set != "sum-negative" && spec.ruin_set != "any-negative")
        throw ConfigError(in.at("ruin_set"), "expected sum-negative or any-negative");
    spec.allocation = in.vector("allocation");
    const auto& premiums = in.raw("premiums");
    if (!premiums.is_array())
        throw ConfigError(in.at("premiums"), "expected an array of premium objects");
    for (std::size_t i = 0; i < premiums.size(); ++i) {
        const Reader p(premiums[i], in.at("premiums") + "[" + std::to_string(i) + "]");
        PremiumSpec ps;
        ps.kind = p.string("kind");
        if (ps.kind == "constant") {
            p.allow_only({"kind", "rate"});
            ps.rate = p.number("rate");
        } else if (ps.kind == "sinusoid") {
            p.allow_only({"kind", "base", "amplitude", "period"});
            ps.base = p.number("base");
            ps.amplitude = p.number("amplitude");
            ps.period = p.number("period");
        } else {
            throw ConfigError(p.at("kind"), "unknown premium kind '" + ps.kind + "' (expected constant or sinusoid)");
        }
        spec.premiums.push_back(ps);
    }
    spec.diffusion = in.vector("diffusion");
    spec.correlation = in.matrix("correlation");
    spec.grid_step = in.number("grid_step");
    if (in.has("refinement_check"))
        spec.refinement_check = in.boolean("refinement_check");
    return spec;
}

} // namespace detail

inline ExperimentConfig parse_config(const json& j)
{
    using detail::Reader;
    const Reader in(j, "$");
    in.allow_only({"schema_version", "name", "claims", "arrivals", "target", "r", "horizon", "truncation", "x_grid",
                   "estimators", "n_paths", "seed", "workers", "factorial_check", "lemma31"});
    ExperimentConfig cfg;
    const auto version = in.unsigned_int("schema_version");
    if (version != static_cast<std::uint64_t>(kSchemaVersion))
        throw ConfigError(in.at("schema_version"), "unsupported schema version " + std::to_string(version) +
                                                       " (expected " + std::to_string(kSchemaVersion) + ")");
    cfg.name = in.string("name");
    cfg.claims = detail::parse_claims(in.object("claims"));
    cfg.arrivals = detail::parse_arrivals(in.object("arrivals"));

    const auto target = in.object("target");
    cfg.target_kind = target.string("kind");
    if (cfg.target_kind == "entrance") {
        target.allow_only({"kind", "set"});
        cfg.set = detail::parse_set(target.object("set"));
    } else if (cfg.target_kind == "ruin") {
        cfg.ruin = detail::parse_ruin(target);
    } else {
        throw ConfigError(target.at("kind"), "unknown target kind '" + cfg.target_kind + "' (expected entrance or ruin)");
    }

    cfg.r = in.number("r");
    const auto& h = in.raw("horizon");
    if (h.is_string()) {
        if (h.get<std::string>() != "inf")
            throw ConfigError(in.at("horizon"), "expected a number or \"inf\"");
        cfg.horizon = std::numeric_limits<double>::infinity();
    } else {
        cfg.horizon = in.number("horizon");
    }
    if (in.has("truncation")) {
        const auto t = in.object("truncation");
        t.allow_only({"q1", "q2", "count", "max_remainder"});
        TruncationSpec ts;
        ts.q1 = t.number("q1");
        ts.q2 = t.number("q2");
        if (t.has("count"))
            ts.count = t.unsigned_int("count");
        ts.max_remainder = t.number_opt("max_remainder");
        if (ts.count.has_value() == ts.max_remainder.has_value())
            throw ConfigError(in.at("truncation"), "give exactly one of count or max_remainder");
        cfg.truncation = ts;
    }
    cfg.x_grid = in.vector("x_grid");
    cfg.estimators = in.strings("estimators");
    for (std::size_t i = 0; i < cfg.estimators.size(); ++i) {
        const auto& names = known_estimators();
        if (std::find(names.begin(), names.end(), cfg.estimators[i]) == names.end())
            throw ConfigError(in.at("estimators") + "[" + std::to_string(i) + "]",
                              "unknown estimator '" + cfg.estimators[i] + "'");
    }
    cfg.n_paths = in.unsigned_int("n_paths");
    cfg.seed = in.unsigned_int("seed");
    if (in.has("workers"))
        cfg.workers = in.unsigned_int("workers");
    if (in.has("factorial_check")) {
        const auto f = in.object("factorial_check");
        f.allow_only({"T", "h", "paths"});
        cfg.factorial_check = FactorialSpec{f.number("T"), f.number("h"), f.unsigned_int("paths")};
    }
    if (in.has("lemma31")) {
        const auto l = in.object("lemma31");
        l.allow_only({"n", "a", "b", "points"});
        cfg.lemma31 = Lemma31Spec{l.unsigned_int("n"), l.number("a"), l.number("b"), l.unsigned_int("points")};
    }
    return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("$", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline json to_json(const ExperimentConfig& cfg)
{
    json j;
    j["schema_version"] = cfg.schema_version;
    j["name"] = cfg.name;

    json radial{{"kind", cfg.claims.radial.kind}};
    if (cfg.claims.radial.kind == "pareto") {
        radial["alpha"] = cfg.claims.radial.alpha;
    } else if (cfg.claims.radial.kind == "weibull") {
        radial["shape"] = cfg.claims.radial.shape;
        radial["scale"] = cfg.claims.radial.scale;
    } else {
        radial["mu"] = cfg.claims.radial.mu;
        radial["sigma"] = cfg.claims.radial.sigma;
    }
    json dependence{{"kind", cfg.claims.dependence}};
    if (cfg.claims.dependence == "ar1")
        dependence["rho"] = cfg.claims.rho;
    j["claims"] = {{"radial", radial},
                   {"spectral", {{"atoms", cfg.claims.atoms}, {"weights", cfg.claims.weights}}},
                   {"dependence", dependence}};

    const auto& a = cfg.arrivals;
    json arr{{"kind", a.kind}};
    if (a.kind == "poisson") {
        arr["lambda"] = a.lambda;
    } else if (a.kind == "inhom-poisson") {
        arr["lambda0"] = a.lambda0;
        arr["beta"] = a.beta;
        arr["period"] = a.period;
    } else if (a.kind == "renewal") {
        arr["inter_arrival"] = {{"law", "gamma"}, {"shape", a.shape}, {"scale", a.scale}};
    } else if (a.kind == "wlod") {
        arr["lambda"] = a.lambda;
        arr["coupling"] = a.coupling;
    } else if (a.kind == "bounded-below") {
        arr["a"] = a.a;
        arr["rate"] = a.rate;
        arr["mixing"] = {{"values", a.mixing_values}, {"probs", a.mixing_probs}};
    } else if (a.kind == "fixed") {
        arr["times"] = a.times;
    }
    if (!a.cache.empty()) {
        json c = json::object();
        if (a.cache.horizon)
            c["horizon"] = *a.cache.horizon;
        if (a.cache.nodes)
            c["nodes"] = *a.cache.nodes;
        if (a.cache.paths)
            c["paths"] = *a.cache.paths;
        if (a.cache.seed)
            c["seed"] = *a.cache.seed;
        arr["cache"] = c;
    }
    j["arrivals"] = arr;

    if (cfg.ruin_target()) {
        const auto& ru = cfg.ruin;
        json premiums = json::array();
        for (const auto& p : ru.premiums) {
            if (p.kind == "constant")
                premiums.push_back({{"kind", "constant"}, {"rate", p.rate}});
            else
                premiums.push_back(
                    {{"kind", "sinusoid"}, {"base", p.base}, {"amplitude", p.amplitude}, {"period", p.period}});
        }
        j["target"] = {{"kind", "ruin"},           {"ruin_set", ru.ruin_set},
                       {"allocation", ru.allocation}, {"premiums", premiums},
                       {"diffusion", ru.diffusion},   {"correlation", ru.correlation},
                       {"grid_step", ru.grid_step},   {"refinement_check", ru.refinement_check}};
    } else {
        json set{{"kind", cfg.set.kind}};
        if (cfg.set.kind == "sum") {
            set["l"] = cfg.set.l;
            set["c"] = cfg.set.c;
        } else if (cfg.set.kind == "orthant") {
            set["c"] = cfg.set.thresholds;
        } else {
            set["directions"] = cfg.set.directions;
        }
        j["target"] = {{"kind", "entrance"}, {"set", set}};
    }

    j["r"] = cfg.r;
    if (cfg.infinite())
        j["horizon"] = "inf";
    else
        j["horizon"] = cfg.horizon;
    if (cfg.truncation) {
        json t{{"q1", cfg.truncation->q1}, {"q2", cfg.truncation->q2}};
        if (cfg.truncation->count)
            t["count"] = *cfg.truncation->count;
        if (cfg.truncation->max_remainder)
            t["max_remainder"] = *cfg.truncation->max_remainder;
        j["truncation"] = t;
    }
    j["x_grid"] = cfg.x_grid;
    j["estimators"] = cfg.estimators;
    j["n_paths"] = cfg.n_paths;
    j["seed"] = cfg.seed;
    j["workers"] = cfg.workers;
    if (cfg.factorial_check)
        j["factorial_check"] = {
            {"T", cfg.factorial_check->T}, {"h", cfg.factorial_check->h}, {"paths", cfg.factorial_check->paths}};
    if (cfg.lemma31)
        j["lemma31"] = {{"n", cfg.lemma31->n},
                        {"a", cfg.lemma31->a},
                        {"b", cfg.lemma31->b},
                        {"points", cfg.lemma31->points}};
    return j;
}

/// Canonical text: sorted keys, two-space indent, trailing newline.
inline std::string serialize(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

/// Model objects built from a parsed config.
struct Experiment {
    ExperimentConfig config;
    ClaimModel claims;
    ArrivalModel arrivals;
    std::optional<RareSet> set;
    std::optional<RiskConfig> risk;
    /// Arrivals used for the truncated infinite horizon, when applicable.
    std::size_t truncation = 0;

    /// The entrance set, or the mapped set of a ruin target.
    const RareSet& target_set() const { return *set; }
};

namespace detail {

inline ClaimModel build_claims(const ClaimSpec& spec)
{
    const auto radial = guarded("$.claims.radial", [&] {
        if (spec.radial.kind == "pareto")
            return RadialLaw::pareto(spec.radial.alpha);
        if (spec.radial.kind == "weibull")
            return RadialLaw::weibull(spec.radial.shape, spec.radial.scale);
        return RadialLaw::lognormal(spec.radial.mu, spec.radial.sigma);
    });
    auto spectral = guarded("$.claims.spectral", [&] { return SpectralMeasure(spec.atoms, spec.weights); });
    const auto dependence = guarded("$.claims.dependence", [&] {
        return spec.dependence == "ar1" ? Dependence::ar1(spec.rho) : Dependence::iid();
    });
    return ClaimModel(radial, std::move(spectral), dependence);
}

inline ArrivalModel build_arrivals(const ArrivalSpec& a, const CacheSettings& cache)
{
    return guarded("$.arrivals", [&]() -> ArrivalModel {
        if (a.kind == "poisson")
            return ArrivalModel(PoissonArrivals{a.lambda}, cache);
        if (a.kind == "inhom-poisson")
            return ArrivalModel(InhomogeneousPoissonArrivals{a.lambda0, a.beta, a.period}, cache);
        if (a.kind == "renewal")
            return ArrivalModel(GammaRenewalArrivals{a.shape, a.scale}, cache);
        if (a.kind == "wlod")
            return ArrivalModel(WlodArrivals{a.lambda, a.coupling}, cache);
        if (a.kind == "bounded-below")
            return ArrivalModel(BoundedBelowArrivals{a.a, a.rate, a.mixing_values, a.mixing_probs}, cache);
        return ArrivalModel(FixedArrivals{a.times}, cache);
    });
}

inline RareSet build_set(const SetSpec& s)
{
    return guarded("$.target.set", [&] {
        if (s.kind == "sum")
            return make_sum_set(s.l, s.c);
        if (s.kind == "orthant")
            return make_orthant_set(s.thresholds);
        return RareSet(s.directions);
    });
}

inline CacheSettings cache_settings(const ExperimentConfig& cfg, double q1)
{
    CacheSettings cache;
    if (std::isfinite(cfg.horizon))
        cache.horizon = cfg.horizon;
    else if (cfg.r > 0.0 && q1 > 0.0)
        cache.horizon = 50.0 / (cfg.r * q1);
    const auto& spec = cfg.arrivals.cache;
    if (spec.horizon)
        cache.horizon = *spec.horizon;
    if (spec.nodes)
        cache.nodes = *spec.nodes;
    if (spec.paths)
        cache.paths = *spec.paths;
    if (spec.seed)
        cache.seed = *spec.seed;
    return cache;
}

} // namespace detail

/// Builds the models. Structural problems throw ConfigError; assumption checks
/// on the combination are left to validate_experiment.
inline Experiment assemble(const ExperimentConfig& cfg)
{
    const double q1 = cfg.truncation ? cfg.truncation->q1 : 0.0;
    auto claims = detail::build_claims(cfg.claims);
    auto arrivals = detail::build_arrivals(cfg.arrivals, detail::cache_settings(cfg, q1));
    Experiment ex{cfg, std::move(claims), std::move(arrivals), std::nullopt, std::nullopt, 0};

    if (!(cfg.r >= 0.0))
        throw ConfigError("$.r", "must be >= 0");
    if (!(cfg.horizon > 0.0))
        throw ConfigError("$.horizon", "must be positive or \"inf\"");
    if (cfg.x_grid.empty())
        throw ConfigError("$.x_grid", "must not be empty");
    for (std::size_t i = 0; i < cfg.x_grid.size(); ++i)
        if (!(cfg.x_grid[i] > 0.0))
            throw ConfigError("$.x_grid[" + std::to_string(i) + "]", "must be positive");
    if (cfg.estimators.empty())
        throw ConfigError("$.estimators", "must name at least one estimator");
    if (cfg.n_paths < 1000)
        throw ConfigError("$.n_paths", "must be at least 1000");

    if (cfg.ruin_target()) {
        const auto& ru = cfg.ruin;
        RiskConfig risk;
        risk.r = cfg.r;
        risk.T = cfg.horizon;
        risk.allocation = ru.allocation;
        for (std::size_t i = 0; i < ru.premiums.size(); ++i) {
            const auto& p = ru.premiums[i];
            risk.premiums.push_back(detail::guarded("$.target.premiums[" + std::to_string(i) + "]", [&] {
                return p.kind == "constant" ? Premium::constant(p.rate)
                                            : Premium::sinusoid(p.base, p.amplitude, p.period);
            }));
        }
        risk.diffusion = ru.diffusion;
        risk.correlation = ru.correlation;
        risk.grid_step = ru.grid_step;
        const auto kind = ru.ruin_set == "sum-negative" ? RuinKind::sum_negative : RuinKind::any_negative;
        detail::guarded("$.target.allocation", [&] {
            risk.ruin = RuinSet(kind, ru.allocation.size());
            return 0;
        });
        detail::guarded("$.target.correlation", [&] {
            correlation_factor(risk.correlation);
            return 0;
        });
        ex.set = detail::guarded("$.target", [&] { return ruin_to_rare(risk.ruin, risk.allocation); });
        if (cfg.truncation) {
            risk.q1 = cfg.truncation->q1;
            risk.q2 = cfg.truncation->q2;
        }
        ex.risk = risk;
    } else {
        ex.set = detail::build_set(cfg.set);
    }
    if (ex.set->dim() != ex.claims.dim())
        throw ConfigError("$.target", "set dimension " + std::to_string(ex.set->dim()) +
                                          " does not match claim dimension " + std::to_string(ex.claims.dim()));
    return ex;
}

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> notes;
    std::optional<FactorialMomentReport> factorial;

    bool ok() const noexcept { return errors.empty(); }
};

namespace detail {

inline std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

inline bool contains_name(const std::vector<std::string>& names, const char* name)
{
    return std::find(names.begin(), names.end(), name) != names.end();
}

inline void check_estimators(const Experiment& ex, ValidationReport& rep)
{
    const auto& cfg = ex.config;
    std::set<std::string> seen;
    for (const auto& e : cfg.estimators) {
        if (!seen.insert(e).second)
            rep.errors.push_back("$.estimators: '" + e + "' is listed twice");
        if (cfg.ruin_target() && e != "ruin")
            rep.errors.push_back("$.estimators: '" + e + "' needs an entrance target; a ruin target supports only 'ruin'");
        if (!cfg.ruin_target() && e == "ruin")
            rep.errors.push_back("$.estimators: 'ruin' needs a ruin target");
        if ((e == "conditional" || e == "max_conditional") && !ex.claims.independent())
            rep.errors.push_back("$.estimators: '" + e +
                                 "' conditions on independent claims; the configured claims are dependent (" +
                                 cfg.claims.dependence + ", rho = " + num(cfg.claims.rho) + ")");
        if (e == "decomposition" && cfg.n_paths < 10000)
            rep.errors.push_back("$.n_paths: 'decomposition' needs at least 10000 paths");
    }
    if (contains_name(cfg.estimators, "lemma31")) {
        if (!cfg.lemma31)
            rep.errors.push_back("$.lemma31: required when the 'lemma31' estimator is listed");
        else if (cfg.lemma31->n != 2 && cfg.lemma31->n != 3)
            rep.errors.push_back("$.lemma31.n: must be 2 or 3, got " + std::to_string(cfg.lemma31->n));
        else
            try {
                weight_grid(cfg.lemma31->a, cfg.lemma31->b, cfg.lemma31->points, cfg.lemma31->n);
            } catch (const std::invalid_argument& e) {
                rep.errors.push_back(std::string("$.lemma31: ") + e.what());
            }
    }
}

inline void check_horizon(Experiment& ex, ValidationReport& rep)
{
    const auto& cfg = ex.config;
    if (!cfg.infinite()) {
        if (cfg.truncation)
            rep.notes.push_back("finite horizon: the truncation block is ignored");
        return;
    }
    if (!(cfg.r > 0.0)) {
        rep.errors.push_back("$.r: an infinite horizon requires r > 0, got r = " + num(cfg.r));
        return;
    }
    if (!cfg.truncation) {
        rep.errors.push_back("$.truncation: an infinite horizon requires q1, q2 and a truncation policy");
        return;
    }
    const auto idx = matuszewska_bounds(ex.claims);
    const double q1 = cfg.truncation->q1;
    const double q2 = cfg.truncation->q2;
    if (idx.upper_unbounded) {
        rep.errors.push_back("$.claims.radial: an infinite horizon requires 0 < q1 < J- <= J+ < q2 < inf; the " +
                             ex.claims.radial.name() +
                             " tail has unbounded upper Matuszewska index, so no finite q2 exists");
        return;
    }
    const bool window = 0.0 < q1 && q1 < idx.lower && idx.upper < q2 && std::isfinite(q2);
    const std::string window_text = "0 < q1 < J- <= J+ < q2 < inf with q1 = " + num(q1) + ", J- = " +
                                    num(idx.lower) + ", J+ = " + num(idx.upper) + ", q2 = " + num(q2);
    if (!window) {
        std::string which;
        if (!(q1 > 0.0))
            which = "q1 > 0";
        else if (!(q1 < idx.lower))
            which = "q1 < J- = " + num(idx.lower);
        else
            which = "q2 > J+ = " + num(idx.upper);
        rep.errors.push_back("$.truncation: violates " + which + " (need " + window_text + ")");
        return;
    }
    rep.notes.push_back("moment window holds: " + window_text);

    std::optional<MomentSeries> series;
    try {
        series = infinite_horizon_series(ex.claims, ex.arrivals, cfg.r, q1, q2);
    } catch (const std::invalid_argument& e) {
        rep.errors.push_back(std::string("$.arrivals: ") + e.what());
        return;
    }
    const double total = series->total();
    const double q = moment_exponent(ex.claims, q2);
    if (!std::isfinite(total)) {
        rep.errors.push_back("$.arrivals: the discounted moment series diverges (q = " + num(q) + ")");
        return;
    }
    rep.notes.push_back("discounted moment series, q = " + num(q) + ": bound " + num(total) + " (finite)");
    std::size_t M = 0;
    if (cfg.truncation->count) {
        M = *cfg.truncation->count;
    } else {
        try {
            M = series->truncation_for(*cfg.truncation->max_remainder);
        } catch (const std::exception& e) {
            rep.errors.push_back(std::string("$.truncation.max_remainder: ") + e.what());
            return;
        }
    }
    if (M == 0) {
        rep.errors.push_back("$.truncation.count: must be positive");
        return;
    }
    ex.truncation = M;
    if (ex.risk)
        ex.risk->truncation = M;
    rep.notes.push_back("truncation: first " + std::to_string(M) + " arrivals, remainder bound " +
                        num(series->remainder(M)));
}

inline void check_arrivals(const Experiment& ex, ValidationReport& rep)
{
    const auto& cfg = ex.config;
    const auto& a = ex.arrivals;
    if (a.as<PoissonArrivals>() || a.as<InhomogeneousPoissonArrivals>()) {
        rep.notes.push_back("factorial-moment bound holds with C = 1 for Poisson arrivals");
    } else if (a.as<FixedArrivals>()) {
        rep.notes.push_back("factorial-moment bound holds with C = 1 for deterministic arrival times");
    } else if (!cfg.factorial_check) {
        rep.notes.push_back("factorial-moment bound not checked for " + a.name() +
                            " arrivals; add factorial_check to estimate C");
    }
    if (auto w = a.as<WlodArrivals>()) {
        const auto idx = matuszewska_bounds(ex.claims);
        if (cfg.r > 0.0 && !idx.lower_unbounded) {
            const double edge = std::log1p(cfg.r * idx.lower / w->rate);
            rep.notes.push_back("dependence window: delta in (0, " + num(edge) +
                                "); the Gaussian MA(1) construction is negatively associated with g_L = 1, so "
                                "every delta in the window is admissible");
        } else {
            rep.notes.push_back("dependence window: the Gaussian MA(1) construction has g_L = 1");
        }
    }
}

inline void check_factorial(const Experiment& ex, ValidationReport& rep)
{
    const auto& f = ex.config.factorial_check;
    if (!f)
        return;
    try {
        auto fm = check_factorial_moment_bound(ex.arrivals, f->T, f->h, f->paths, ex.config.seed);
        if (fm.all_empty)
            rep.notes.push_back("factorial-moment spot check: every cell pair was empty; the bound holds trivially");
        else
            rep.notes.push_back("factorial-moment spot check on " + std::to_string(fm.cells) + " cells: C_hat = " +
                                num(fm.c_hat) + ", 95% interval [" + num(fm.ci_lo) + ", " + num(fm.ci_hi) + "]");
        for (const auto& w : fm.warnings)
            rep.notes.push_back("factorial-moment spot check: " + w);
        rep.factorial = std::move(fm);
    } catch (const std::exception& e) {
        rep.errors.push_back(std::string("$.factorial_check: ") + e.what());
    }
}

} // namespace detail

/// Assumption checks on an assembled experiment. Sets the truncation count for
/// infinite horizons. Runs the factorial spot check when requested.
inline ValidationReport validate_experiment(Experiment& ex)
{
    ValidationReport rep;
    detail::check_estimators(ex, rep);
    detail::check_horizon(ex, rep);
    detail::check_arrivals(ex, rep);
    if (ex.risk) {
        try {
            ex.risk->validate();
        } catch (const std::invalid_argument& e) {
            rep.errors.push_back(std::string("$.target: ") + e.what());
        }
    }
    const ProjectedTail tail(ex.claims, ex.target_set());
    if (tail.unreachable())
        rep.notes.push_back("the spectral measure puts no mass on the target set; every probability is 0");
    else if (ex.claims.radial.kind != RadialKind::pareto)
        rep.notes.push_back("the " + ex.claims.radial.name() + " tail is not regularly varying; no limit measure");
    else
        rep.notes.push_back("mu(A) = " + detail::num(tail.limit_mass()) + " for set '" + ex.target_set().label() +
                            "'");
    if (rep.ok())
        detail::check_factorial(ex, rep);
    return rep;
}

} // namespace ruinsim
