#pragma once

// Claim-arrival processes: samplers, mean measures (closed form where one
// exists, otherwise an empirical cache) and moment checks on the counts.

#include "quadrature.hpp"
#include "rng.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace ruinsim {

struct PoissonArrivals {
    double rate = 1.0;
};

/// Rate lambda0 * (1 + beta * sin(2 pi s / period)), |beta| < 1.
struct InhomogeneousPoissonArrivals {
    double lambda0 = 1.0;
    double beta = 0.0;
    double period = 1.0;

    double rate(double s) const noexcept
    {
        return lambda0 * (1.0 + beta * std::sin(2.0 * std::numbers::pi * s / period));
    }
    double envelope() const noexcept { return lambda0 * (1.0 + std::abs(beta)); }
};

/// Renewal process with Gamma(shape, scale) inter-arrival times.
struct GammaRenewalArrivals {
    double shape = 1.0;
    double scale = 1.0;
};

/// Quasi-renewal process with exponential(rate) inter-arrivals coupled through a
/// Gaussian MA(1) latent sequence g_i = (e_i - c e_{i-1}) / sqrt(1 + c^2), c in [0, 1].
/// All pairwise latent correlations are <= 0, so the inter-arrivals are negatively
/// associated and lower orthant dependent with dominating coefficient 1.
struct WlodArrivals {
    double rate = 1.0;
    double coupling = 0.5;
};

/// theta_i = a + W * E_i with one mixing draw W per path (discrete law) and
/// iid exponential(rate) E_i.
struct BoundedBelowArrivals {
    double a = 0.1;
    double rate = 1.0;
    std::vector<double> mixing_values{1.0};
    std::vector<double> mixing_probs{1.0};
};

/// Deterministic arrival schedule.
struct FixedArrivals {
    std::vector<double> times;
};

using ArrivalParams = std::variant<PoissonArrivals, InhomogeneousPoissonArrivals, GammaRenewalArrivals,
                                   WlodArrivals, BoundedBelowArrivals, FixedArrivals>;

struct CacheSettings {
    double horizon = 20.0;
    std::size_t nodes = 512;
    std::size_t paths = 100000;
    std::uint64_t seed = 0x5eedcafeULL;
};

/// Empirical mean function on a uniform grid t_k = k * horizon / (nodes - 1).
struct EmpiricalMeanMeasure {
    double horizon = 0.0;
    std::size_t paths = 0;
    std::vector<double> t;
    std::vector<double> m;
    std::vector<double> stderr_m;

    double step() const noexcept { return t.size() > 1 ? t[1] - t[0] : 0.0; }

    /// Linear interpolation between nodes; requires 0 <= s <= horizon.
    std::pair<double, double> at(double s) const
    {
        if (s < 0.0 || s > horizon * (1.0 + 1e-12))
            throw std::out_of_range("empirical mean measure: t outside cached horizon");
        const double h = step();
        const auto k = std::min<std::size_t>(static_cast<std::size_t>(s / h), t.size() - 2);
        const double w = std::clamp((s - t[k]) / h, 0.0, 1.0);
        return {m[k] + w * (m[k + 1] - m[k]), stderr_m[k] + w * (stderr_m[k + 1] - stderr_m[k])};
    }

    void write_csv(std::ostream& os) const
    {
        os << "t,m,stderr\n";
        char buf[128];
        for (std::size_t k = 0; k < t.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", t[k], m[k], stderr_m[k]);
            os << buf;
        }
    }
};

class ArrivalModel;
EmpiricalMeanMeasure build_mean_cache(const ArrivalModel& model, const CacheSettings& settings);

class ArrivalModel {
public:
    explicit ArrivalModel(ArrivalParams params, CacheSettings cache = {})
        : params_(std::move(params)), cache_settings_(cache), slot_(std::make_shared<Slot>())
    {
        validate();
    }

    static ArrivalModel poisson(double rate) { return ArrivalModel(PoissonArrivals{rate}); }
    static ArrivalModel inhomogeneous_poisson(double lambda0, double beta, double period)
    {
        return ArrivalModel(InhomogeneousPoissonArrivals{lambda0, beta, period});
    }
    static ArrivalModel gamma_renewal(double shape, double scale, CacheSettings cache = {})
    {
        return ArrivalModel(GammaRenewalArrivals{shape, scale}, cache);
    }
    static ArrivalModel wlod(double rate, double coupling, CacheSettings cache = {})
    {
        return ArrivalModel(WlodArrivals{rate, coupling}, cache);
    }
    static ArrivalModel bounded_below(double a, double rate, std::vector<double> values = {1.0},
                                      std::vector<double> probs = {1.0})
    {
        return ArrivalModel(BoundedBelowArrivals{a, rate, std::move(values), std::move(probs)});
    }
    static ArrivalModel fixed(std::vector<double> times) { return ArrivalModel(FixedArrivals{std::move(times)}); }

    const ArrivalParams& params() const noexcept { return params_; }
    const CacheSettings& cache_settings() const noexcept { return cache_settings_; }

    template <typename T>
    const T* as() const noexcept
    {
        return std::get_if<T>(&params_);
    }

    /// Mean function available in closed form.
    bool analytic() const noexcept
    {
        return !(as<GammaRenewalArrivals>() || as<WlodArrivals>());
    }

    std::string name() const
    {
        static constexpr const char* names[] = {"poisson", "inhom-poisson", "renewal-gamma",
                                                "wlod",    "bounded-below", "fixed"};
        return names[params_.index()];
    }

    /// Built once on first use; later reads take no lock.
    const EmpiricalMeanMeasure& cache() const
    {
        std::call_once(slot_->once, [this] { slot_->value = build_mean_cache(*this, cache_settings_); });
        return *slot_->value;
    }

private:
    struct Slot {
        std::once_flag once;
        std::optional<EmpiricalMeanMeasure> value;
    };

    void validate() const
    {
        if (auto p = as<PoissonArrivals>(); p && !(p->rate > 0.0))
            throw std::invalid_argument("poisson arrivals: rate must be positive");
        if (auto p = as<InhomogeneousPoissonArrivals>()) {
            if (!(p->lambda0 > 0.0))
                throw std::invalid_argument("inhom-poisson arrivals: lambda0 must be positive");
            if (!(std::abs(p->beta) < 1.0))
                throw std::invalid_argument("inhom-poisson arrivals: |beta| must be < 1");
            if (!(p->period > 0.0))
                throw std::invalid_argument("inhom-poisson arrivals: period must be positive");
        }
        if (auto p = as<GammaRenewalArrivals>(); p && !(p->shape > 0.0 && p->scale > 0.0))
            throw std::invalid_argument("renewal arrivals: gamma shape and scale must be positive");
        if (auto p = as<WlodArrivals>()) {
            if (!(p->rate > 0.0))
                throw std::invalid_argument("wlod arrivals: rate must be positive");
            if (!(p->coupling >= 0.0 && p->coupling <= 1.0))
                throw std::invalid_argument("wlod arrivals: coupling must lie in [0, 1]");
        }
        if (auto p = as<BoundedBelowArrivals>()) {
            if (!(p->a > 0.0))
                throw std::invalid_argument("bounded-below arrivals: a must be positive");
            if (!(p->rate > 0.0))
                throw std::invalid_argument("bounded-below arrivals: rate must be positive");
            if (p->mixing_values.empty() || p->mixing_values.size() != p->mixing_probs.size())
                throw std::invalid_argument("bounded-below arrivals: one probability per mixing value");
            double sum = 0.0;
            for (std::size_t k = 0; k < p->mixing_values.size(); ++k) {
                if (!(p->mixing_values[k] > 0.0))
                    throw std::invalid_argument("bounded-below arrivals: mixing values must be positive");
                if (!(p->mixing_probs[k] >= 0.0))
                    throw std::invalid_argument("bounded-below arrivals: mixing probabilities must be >= 0");
                sum += p->mixing_probs[k];
            }
            if (std::abs(sum - 1.0) > 1e-12)
                throw std::invalid_argument("bounded-below arrivals: mixing probabilities must sum to 1");
        }
        if (auto p = as<FixedArrivals>()) {
            for (std::size_t i = 0; i < p->times.size(); ++i) {
                if (!(p->times[i] >= 0.0) || !std::isfinite(p->times[i]))
                    throw std::invalid_argument("fixed arrivals: times must be finite and >= 0");
                if (i > 0 && !(p->times[i] >= p->times[i - 1]))
                    throw std::invalid_argument("fixed arrivals: times must be non-decreasing");
            }
        }
        if (!(cache_settings_.horizon > 0.0) || cache_settings_.nodes < 2 || cache_settings_.paths < 1)
            throw std::invalid_argument("arrival cache settings: need horizon > 0, nodes >= 2, paths >= 1");
    }

    ArrivalParams params_;
    CacheSettings cache_settings_;
    std::shared_ptr<Slot> slot_;
};

/// Sequential generator of tau_1 < tau_2 < ... for one path.
class ArrivalStream {
public:
    explicit ArrivalStream(const ArrivalModel& model) : model_(&model) {}

    /// Next arrival time, or +infinity once a finite schedule is exhausted.
    double next(Rng& rng)
    {
        ++count_;
        const auto& params = model_->params();
        if (auto p = std::get_if<PoissonArrivals>(&params)) {
            now_ += rng.exponential(p->rate);
        } else if (auto p = std::get_if<InhomogeneousPoissonArrivals>(&params)) {
            const double env = p->envelope();
            for (;;) {
                now_ += rng.exponential(env);
                if (rng.uniform() * env <= p->rate(now_))
                    break;
            }
        } else if (auto p = std::get_if<GammaRenewalArrivals>(&params)) {
            now_ += rng.gamma(p->shape, p->scale);
        } else if (auto p = std::get_if<WlodArrivals>(&params)) {
            const double eps = rng.normal();
            const double c = p->coupling;
            const double g = count_ == 1 ? eps : (eps - c * prev_eps_) / std::sqrt(1.0 + c * c);
            prev_eps_ = eps;
            // theta = F^{-1}(Phi(g)) for the exponential law, via the upper tail for accuracy
            const double upper = 0.5 * std::erfc(g / std::numbers::sqrt2);
            now_ += -std::log(upper) / p->rate;
        } else if (auto p = std::get_if<BoundedBelowArrivals>(&params)) {
            if (count_ == 1) {
                mixing_ = p->mixing_values.back();
                const double u = rng.uniform();
                double acc = 0.0;
                for (std::size_t k = 0; k < p->mixing_values.size(); ++k) {
                    acc += p->mixing_probs[k];
                    if (u < acc) {
                        mixing_ = p->mixing_values[k];
                        break;
                    }
                }
            }
            now_ += p->a + mixing_ * rng.exponential(p->rate);
        } else if (auto p = std::get_if<FixedArrivals>(&params)) {
            now_ = count_ <= p->times.size() ? p->times[count_ - 1] : std::numeric_limits<double>::infinity();
        }
        return now_;
    }

    std::size_t count() const noexcept { return count_; }

private:
    const ArrivalModel* model_;
    double now_ = 0.0;
    double prev_eps_ = 0.0;
    double mixing_ = 1.0;
    std::size_t count_ = 0;
};

struct Horizon {
    double value;
};
struct ArrivalCount {
    std::size_t value;
};

inline std::vector<double> sample_arrivals(const ArrivalModel& model, Horizon horizon, Rng& rng)
{
    if (!(horizon.value > 0.0) || !std::isfinite(horizon.value))
        throw std::invalid_argument("sample_arrivals: horizon must be positive and finite");
    ArrivalStream stream(model);
    std::vector<double> out;
    for (double t = stream.next(rng); t <= horizon.value; t = stream.next(rng))
        out.push_back(t);
    return out;
}

inline std::vector<double> sample_arrivals(const ArrivalModel& model, ArrivalCount count, Rng& rng)
{
    ArrivalStream stream(model);
    std::vector<double> out;
    out.reserve(count.value);
    for (std::size_t i = 0; i < count.value; ++i) {
        const double t = stream.next(rng);
        if (!std::isfinite(t))
            break;
        out.push_back(t);
    }
    return out;
}

inline EmpiricalMeanMeasure build_mean_cache(const ArrivalModel& model, const CacheSettings& settings)
{
    EmpiricalMeanMeasure cache;
    cache.horizon = settings.horizon;
    cache.paths = settings.paths;
    const std::size_t nodes = settings.nodes;
    const double h = settings.horizon / static_cast<double>(nodes - 1);
    cache.t.resize(nodes);
    for (std::size_t k = 0; k < nodes; ++k)
        cache.t[k] = h * static_cast<double>(k);
    cache.t.back() = settings.horizon;

    std::vector<double> sum(nodes, 0.0);
    std::vector<double> sum_sq(nodes, 0.0);
    std::vector<std::uint32_t> cell(nodes, 0);
    for (std::size_t path = 0; path < settings.paths; ++path) {
        Rng rng(derive_seed(settings.seed, path, 1));
        std::fill(cell.begin(), cell.end(), 0u);
        ArrivalStream stream(model);
        for (double t = stream.next(rng); t <= settings.horizon; t = stream.next(rng))
            ++cell[static_cast<std::size_t>(std::ceil(t / h - 1e-12))];
        double running = 0.0;
        for (std::size_t k = 0; k < nodes; ++k) {
            running += cell[k];
            sum[k] += running;
            sum_sq[k] += running * running;
        }
    }
    const double n = static_cast<double>(settings.paths);
    cache.m.resize(nodes);
    cache.stderr_m.resize(nodes);
    for (std::size_t k = 0; k < nodes; ++k) {
        const double mean = sum[k] / n;
        const double var = n > 1 ? std::max(0.0, (sum_sq[k] - n * mean * mean) / (n - 1.0)) : 0.0;
        cache.m[k] = mean;
        cache.stderr_m[k] = std::sqrt(var / n);
    }
    return cache;
}

namespace detail {

// Regularized P(Gamma(n, rate) <= y) with shortcuts far from the bulk.
inline double gamma_cdf(double n, double rate_y)
{
    if (rate_y <= 0.0)
        return 0.0;
    const double spread = 40.0 * std::sqrt(n) + 40.0;
    if (rate_y > n + spread)
        return 1.0;
    if (rate_y < n - spread)
        return 0.0;
    return boost::math::gamma_p(n, rate_y);
}

inline double gamma_density(double n, double rate, double y)
{
    if (y <= 0.0)
        return 0.0;
    const double spread = 40.0 * std::sqrt(n) + 40.0;
    const double z = rate * y;
    if (z > n + spread || z < n - spread)
        return 0.0;
    return rate * boost::math::gamma_p_derivative(n, z);
}

inline double bounded_below_mean(const BoundedBelowArrivals& p, double t)
{
    double total = 0.0;
    for (std::size_t k = 0; k < p.mixing_values.size(); ++k) {
        const double rate = p.rate / p.mixing_values[k];
        double part = 0.0;
        for (double n = 1.0; p.a * n < t; n += 1.0) {
            const double term = gamma_cdf(n, rate * (t - p.a * n));
            if (term == 0.0 && rate * (t - p.a * n) < n)
                break;
            part += term;
        }
        total += p.mixing_probs[k] * part;
    }
    return total;
}

inline double bounded_below_density(const BoundedBelowArrivals& p, double t)
{
    double total = 0.0;
    for (std::size_t k = 0; k < p.mixing_values.size(); ++k) {
        const double rate = p.rate / p.mixing_values[k];
        double part = 0.0;
        for (double n = 1.0; p.a * n < t; n += 1.0) {
            const double y = t - p.a * n;
            if (rate * y < n - 40.0 * std::sqrt(n) - 40.0)
                break;
            part += gamma_density(n, rate, y);
        }
        total += p.mixing_probs[k] * part;
    }
    return total;
}

} // namespace detail

struct MeanValue {
    double value = 0.0;
    double stderr_value = 0.0;
    bool analytic = true;
};

/// m(t) = E N(t): exact where a closed form exists, cached-empirical otherwise.
inline MeanValue mean_function(const ArrivalModel& model, double t)
{
    if (!(t >= 0.0))
        throw std::invalid_argument("mean_function: t must be >= 0");
    if (auto p = model.as<PoissonArrivals>())
        return {p->rate * t};
    if (auto p = model.as<InhomogeneousPoissonArrivals>()) {
        const double w = 2.0 * std::numbers::pi / p->period;
        return {p->lambda0 * (t + p->beta / w * (1.0 - std::cos(w * t)))};
    }
    if (auto p = model.as<FixedArrivals>())
        return {static_cast<double>(std::upper_bound(p->times.begin(), p->times.end(), t) - p->times.begin())};
    if (auto p = model.as<BoundedBelowArrivals>())
        return {detail::bounded_below_mean(*p, t)};
    const auto [m, se] = model.cache().at(t);
    return {m, se, false};
}

/// Density of m(ds) for kinds with an absolutely continuous mean measure.
inline std::optional<double> mean_density(const ArrivalModel& model, double t)
{
    if (auto p = model.as<PoissonArrivals>())
        return p->rate;
    if (auto p = model.as<InhomogeneousPoissonArrivals>())
        return p->rate(t);
    if (auto p = model.as<BoundedBelowArrivals>())
        return detail::bounded_below_density(*p, t);
    return std::nullopt;
}

enum class IntegralMethod { exact_sum, quadrature, stieltjes_cache };

inline const char* to_string(IntegralMethod m)
{
    switch (m) {
    case IntegralMethod::exact_sum: return "exact-sum";
    case IntegralMethod::quadrature: return "quadrature";
    case IntegralMethod::stieltjes_cache: return "stieltjes-cache";
    }
    return "?";
}

struct MeasureIntegral {
    double value = 0.0;
    double error = 0.0;
    IntegralMethod method = IntegralMethod::quadrature;
    bool converged = true;
    bool diverged = false;
};

struct MeasureIntegralOptions {
    QuadratureOptions quadrature{};
    /// Extra breakpoints for the integrand (kinks, discontinuities).
    std::vector<double> breakpoints{};
    /// Infinite horizon: stop once a doubling chunk adds less than this fraction.
    double tail_fraction = 1e-16;
    std::size_t max_doublings = 64;
};

namespace detail {

inline std::vector<double> density_breakpoints(const ArrivalModel& model)
{
    std::vector<double> out;
    if (auto p = model.as<BoundedBelowArrivals>())
        for (int n = 1; n <= 4; ++n)
            out.push_back(p->a * n);
    return out;
}

template <typename F>
MeasureIntegral density_integral(const ArrivalModel& model, const F& f, double lo, double hi,
                                 const MeasureIntegralOptions& options)
{
    auto breaks = density_breakpoints(model);
    breaks.insert(breaks.end(), options.breakpoints.begin(), options.breakpoints.end());
    const auto integrand = [&](double s) { return f(s) * *mean_density(model, s); };
    const auto q = integrate(integrand, lo, hi, options.quadrature, breaks);
    return {q.value, q.error, IntegralMethod::quadrature, q.converged, false};
}

} // namespace detail

/// Integral of f against m(ds) over [0, T]; T may be +infinity for kinds with a
/// closed-form mean measure, in which case the range grows by doubling until the
/// last chunk is negligible.
template <typename F>
MeasureIntegral mean_measure_integral(const ArrivalModel& model, const F& f, double T,
                                      const MeasureIntegralOptions& options = {})
{
    if (!(T >= 0.0))
        throw std::invalid_argument("mean_measure_integral: T must be >= 0");
    MeasureIntegral out;
    if (T == 0.0)
        return out;

    if (auto p = model.as<FixedArrivals>()) {
        out.method = IntegralMethod::exact_sum;
        for (double t : p->times)
            if (t <= T)
                out.value += f(t);
        return out;
    }

    if (!model.analytic()) {
        const auto& cache = model.cache();
        out.method = IntegralMethod::stieltjes_cache;
        double upper = T;
        if (!std::isfinite(T)) {
            upper = cache.horizon;
            // A truncated infinite integral is only trusted if f has died out by the cache end.
            out.diverged = !(std::abs(f(upper)) * cache.m.back() <= 1e-12);
        } else if (T > cache.horizon * (1.0 + 1e-12)) {
            throw std::out_of_range("mean_measure_integral: T beyond cached mean-measure horizon");
        }
        double sup_f = 0.0;
        double variation = 0.0;
        for (std::size_t k = 1; k < cache.t.size() && cache.t[k - 1] < upper; ++k) {
            const double lo = cache.t[k - 1];
            const double hi = std::min(cache.t[k], upper);
            const double dm = cache.at(hi).first - cache.m[k - 1];
            const double flo = f(lo);
            const double fhi = f(hi);
            out.value += f(0.5 * (lo + hi)) * dm;
            sup_f = std::max({sup_f, std::abs(flo), std::abs(fhi)});
            variation += std::abs(fhi - flo) * dm;
        }
        out.error = sup_f * cache.at(upper).second + 0.5 * variation;
        return out;
    }

    if (std::isfinite(T))
        return detail::density_integral(model, f, 0.0, T, options);

    // Infinite horizon on an analytic density: integrate chunks [0,c], [c,2c], ...
    double chunk_end = 1.0;
    for (double b : options.breakpoints)
        if (b > 0.0 && std::isfinite(b))
            chunk_end = std::max(chunk_end, b);
    for (double b : detail::density_breakpoints(model))
        chunk_end = std::max(chunk_end, b);
    out = detail::density_integral(model, f, 0.0, chunk_end, options);
    for (std::size_t i = 0; i < options.max_doublings; ++i) {
        const auto part = detail::density_integral(model, f, chunk_end, 2.0 * chunk_end, options);
        out.value += part.value;
        out.error += part.error;
        out.converged = out.converged && part.converged;
        chunk_end *= 2.0;
        if (std::abs(part.value) <= options.tail_fraction * std::abs(out.value) ||
            (part.value == 0.0 && out.value == 0.0 && i > 8))
            return out;
    }
    out.diverged = true;
    return out;
}

/// Upper bounds E[exp(-s tau_n)] <= sum_k c_k rho_k(s)^n, exact for renewal kinds.
struct GeometricBound {
    std::vector<double> coefficients;
    std::vector<double> ratios;
    bool exact = false;
};

inline std::optional<GeometricBound> laplace_bound(const ArrivalModel& model, double s)
{
    if (!(s > 0.0))
        throw std::invalid_argument("laplace_bound: s must be positive");
    if (auto p = model.as<PoissonArrivals>())
        return GeometricBound{{1.0}, {p->rate / (p->rate + s)}, true};
    if (auto p = model.as<InhomogeneousPoissonArrivals>()) {
        // The process is a thinning of a Poisson(envelope) process, so tau_n is
        // stochastically larger than the envelope's n-th arrival.
        const double env = p->envelope();
        return GeometricBound{{1.0}, {env / (env + s)}, false};
    }
    if (auto p = model.as<GammaRenewalArrivals>())
        return GeometricBound{{1.0}, {std::pow(1.0 + s * p->scale, -p->shape)}, true};
    if (auto p = model.as<WlodArrivals>())
        return GeometricBound{{1.0}, {p->rate / (p->rate + s)}, p->coupling == 0.0};
    if (auto p = model.as<BoundedBelowArrivals>())
        return GeometricBound{{1.0}, {std::exp(-s * p->a)}, false};
    return std::nullopt;
}

/// Closed-form partial sums of sum_i (E e^{-q1 r tau_i} v E e^{-q2 r tau_i})^{1/q},
/// bounded term-wise by sum_k g_k^i.
struct MomentSeries {
    std::vector<double> ratios;
    double coefficient = 1.0;
    bool finite_schedule = false;
    std::vector<double> schedule_terms;

    double remainder(std::size_t M) const
    {
        if (finite_schedule) {
            double total = 0.0;
            for (std::size_t i = M; i < schedule_terms.size(); ++i)
                total += schedule_terms[i];
            return total;
        }
        double total = 0.0;
        for (double g : ratios)
            total += std::pow(g, static_cast<double>(M + 1)) / (1.0 - g);
        return coefficient * total;
    }
    double total() const { return remainder(0); }

    /// Smallest M with remainder(M) <= target.
    std::size_t truncation_for(double target) const
    {
        if (!(target > 0.0))
            throw std::invalid_argument("truncation_for: target must be positive");
        if (finite_schedule) {
            std::size_t M = 0;
            while (remainder(M) > target)
                ++M;
            return M;
        }
        std::size_t lo = 0;
        std::size_t hi = 1;
        while (remainder(hi) > target) {
            hi *= 2;
            if (hi > (std::size_t{1} << 40))
                throw std::runtime_error("truncation_for: remainder does not reach target");
        }
        while (lo < hi) {
            const std::size_t mid = lo + (hi - lo) / 2;
            if (remainder(mid) <= target)
                hi = mid;
            else
                lo = mid + 1;
        }
        return lo;
    }
};

inline std::optional<MomentSeries> moment_series(const ArrivalModel& model, double r, double q1, double q2,
                                                 double q)
{
    if (!(r > 0.0))
        throw std::invalid_argument("moment_series: r must be positive");
    if (!(q1 > 0.0 && q2 > q1 && q > 0.0))
        throw std::invalid_argument("moment_series: need 0 < q1 < q2 and q > 0");
    MomentSeries series;
    if (auto p = model.as<FixedArrivals>()) {
        series.finite_schedule = true;
        for (double t : p->times)
            series.schedule_terms.push_back(std::pow(std::exp(-q1 * r * t), 1.0 / q));
        return series;
    }
    if (auto p = model.as<BoundedBelowArrivals>()) {
        const double g1 = std::exp(-q1 * r * p->a);
        const double g2 = std::exp(-q2 * r * p->a);
        // (x + y)^p <= x^p + y^p for p <= 1 and <= 2^(p-1) (x^p + y^p) otherwise.
        series.ratios = {std::pow(g1, 1.0 / q), std::pow(g2, 1.0 / q)};
        series.coefficient = std::pow(2.0, std::max(0.0, 1.0 / q - 1.0));
        return series;
    }
    const auto bound = laplace_bound(model, q1 * r);
    if (!bound)
        return std::nullopt;
    // The q1 transform dominates the q2 one since tau_i >= 0.
    series.ratios = {std::pow(bound->ratios.front(), 1.0 / q)};
    return series;
}

struct FactorialMomentReport {
    std::size_t cells = 0;
    double cell_width = 0.0;
    std::size_t paths = 0;
    double c_hat = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool all_empty = false;
    std::vector<double> ratio;        // cells x cells, NaN on the diagonal and for empty cells
    std::vector<double> ratio_stderr; // same layout
    std::vector<double> cell_mean;    // estimated m-increment per cell
    std::vector<std::string> warnings;

    double at(std::size_t i, std::size_t j) const { return ratio[i * cells + j]; }
};

/// Estimates alpha2(ds, dt) / (m(ds) m(dt)) on off-diagonal cells of a grid of width h
/// over [0, T]; c_hat is the largest ratio with a Bonferroni-adjusted normal interval.
inline FactorialMomentReport check_factorial_moment_bound(const ArrivalModel& model, double T, double h,
                                                          std::size_t paths, std::uint64_t seed)
{
    if (!(T > 0.0) || !std::isfinite(T))
        throw std::invalid_argument("check_factorial_moment_bound: T must be finite and positive");
    if (!(h > 0.0) || h > T)
        throw std::invalid_argument("check_factorial_moment_bound: need 0 < h <= T");
    if (paths < 10000)
        throw std::invalid_argument("check_factorial_moment_bound: need at least 1e4 paths");

    FactorialMomentReport rep;
    rep.cells = static_cast<std::size_t>(std::llround(T / h));
    rep.cells = std::max<std::size_t>(rep.cells, 1);
    rep.cell_width = T / static_cast<double>(rep.cells);
    rep.paths = paths;
    const std::size_t K = rep.cells;

    std::vector<float> counts(paths * K, 0.0f);
    for (std::size_t path = 0; path < paths; ++path) {
        Rng rng(derive_seed(seed, path, 1));
        ArrivalStream stream(model);
        float* row = counts.data() + path * K;
        for (double t = stream.next(rng); t <= T; t = stream.next(rng)) {
            auto k = static_cast<std::size_t>(t / rep.cell_width);
            row[std::min(k, K - 1)] += 1.0f;
        }
    }

    const double n = static_cast<double>(paths);
    std::vector<double> mean(K, 0.0);
    std::vector<double> var(K, 0.0);
    for (std::size_t path = 0; path < paths; ++path)
        for (std::size_t k = 0; k < K; ++k)
            mean[k] += counts[path * K + k];
    for (auto& v : mean)
        v /= n;
    for (std::size_t path = 0; path < paths; ++path)
        for (std::size_t k = 0; k < K; ++k) {
            const double d = counts[path * K + k] - mean[k];
            var[k] += d * d;
        }
    for (std::size_t k = 0; k < K; ++k) {
        var[k] /= (n - 1.0);
        const double se = std::sqrt(var[k] / n);
        if (mean[k] > 0.0 && mean[k] < 10.0 * se)
            rep.warnings.push_back("cell " + std::to_string(k) +
                                   ": m-increment below 10 standard errors, ratio unreliable");
    }
    rep.cell_mean = mean;

    const double nan = std::numeric_limits<double>::quiet_NaN();
    rep.ratio.assign(K * K, nan);
    rep.ratio_stderr.assign(K * K, nan);
    const std::size_t pairs = K * (K - 1) / 2;
    // Two-sided 95% normal quantile with a Bonferroni correction over the cell pairs.
    const double level = 0.05 / static_cast<double>(std::max<std::size_t>(pairs, 1));
    const double z = -boost::math::erfc_inv(2.0 * (1.0 - level / 2.0)) * std::numbers::sqrt2;

    bool any = false;
    double best = -1.0;
    double best_se = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = i + 1; j < K; ++j) {
            if (mean[i] <= 0.0 || mean[j] <= 0.0)
                continue;
            double sa = 0.0;
            for (std::size_t path = 0; path < paths; ++path)
                sa += static_cast<double>(counts[path * K + i]) * counts[path * K + j];
            const double ma = sa / n;
            // Delta method on a / (b c) with per-path (a, b, c) = (n_i n_j, n_i, n_j).
            const double ga = 1.0 / (mean[i] * mean[j]);
            const double gb = -ma / (mean[i] * mean[i] * mean[j]);
            const double gc = -ma / (mean[i] * mean[j] * mean[j]);
            double v = 0.0;
            for (std::size_t path = 0; path < paths; ++path) {
                const double b = counts[path * K + i];
                const double c = counts[path * K + j];
                const double lin = ga * (b * c - ma) + gb * (b - mean[i]) + gc * (c - mean[j]);
                v += lin * lin;
            }
            const double se = std::sqrt(v / (n - 1.0) / n);
            const double ratio = ma * ga;
            rep.ratio[i * K + j] = rep.ratio[j * K + i] = ratio;
            rep.ratio_stderr[i * K + j] = rep.ratio_stderr[j * K + i] = se;
            any = true;
            if (ratio > best) {
                best = ratio;
                best_se = se;
            }
        }
    }
    if (!any) {
        rep.all_empty = true;
        rep.c_hat = 0.0;
        rep.ci_lo = rep.ci_hi = 0.0;
        rep.warnings.push_back("no pair of cells carries mass; the bound holds trivially");
        return rep;
    }
    rep.c_hat = best;
    rep.ci_lo = best - z * best_se;
    rep.ci_hi = best + z * best_se;
    return rep;
}

} // namespace ruinsim
