#pragma once

// Path simulation: discounted aggregate claims D(T), its truncated infinite
// horizon version, and the perturbed surplus path.

#include "arrival_models.hpp"
#include "claim_models.hpp"
#include "rare_sets.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ruinsim {

struct PathRecord {
    std::vector<double> D;
    std::size_t arrivals_used = 0;
    /// Per claim: discounted claim X e^{-r tau} lies in x A for the diagnostic x.
    std::vector<std::uint8_t> jump_flags;
    /// Per claim: X_A of the discounted claim, so J_x can be read off for any x.
    std::vector<double> jump_xa;
    std::optional<double> first_entrance;
    std::optional<double> remainder_bound;
    /// X_A(D) for entrance runs; sup over checked times of X_A(net loss) for surplus runs.
    double loss_functional = 0.0;

    std::size_t jumps() const noexcept
    {
        return static_cast<std::size_t>(std::count(jump_flags.begin(), jump_flags.end(), std::uint8_t{1}));
    }

    std::size_t jumps_above(double x) const noexcept
    {
        return static_cast<std::size_t>(
            std::count_if(jump_xa.begin(), jump_xa.end(), [x](double v) { return v > x; }));
    }

    void reset(std::size_t dim)
    {
        D.assign(dim, 0.0);
        arrivals_used = 0;
        jump_flags.clear();
        jump_xa.clear();
        first_entrance.reset();
        remainder_bound.reset();
        loss_functional = 0.0;
    }
};

/// Called once per claim with (claim index, tau, claim vector, discount factor, running D).
using TraceSink = std::function<void(std::size_t, double, std::span<const double>, double,
                                     std::span<const double>)>;

/// CSV trace writer: path_id, claim_index, tau, x_1..x_d, discount, D_1..D_d.
class TraceWriter {
public:
    TraceWriter(std::ostream& os, std::size_t dim) : os_(&os)
    {
        *os_ << "path_id,claim_index,tau";
        for (std::size_t i = 0; i < dim; ++i)
            *os_ << ",x" << i + 1;
        *os_ << ",discount";
        for (std::size_t i = 0; i < dim; ++i)
            *os_ << ",D" << i + 1;
        *os_ << '\n';
    }

    void set_path(std::size_t path) noexcept { path_ = path; }

    TraceSink sink()
    {
        return [this](std::size_t k, double tau, std::span<const double> x, double discount,
                      std::span<const double> d) {
            char buf[64];
            *os_ << path_ << ',' << k;
            const auto put = [&](double v) {
                std::snprintf(buf, sizeof buf, ",%.17g", v);
                *os_ << buf;
            };
            put(tau);
            for (double v : x)
                put(v);
            put(discount);
            for (double v : d)
                put(v);
            *os_ << '\n';
        };
    }

private:
    std::ostream* os_;
    std::size_t path_ = 0;
};

namespace detail {

inline void check_dims(const ClaimModel& claims, const RareSet& set)
{
    if (claims.dim() != set.dim())
        throw std::invalid_argument("simulation: claim dimension does not match the set");
}

// Adds one discounted claim to the record.
inline void absorb_claim(PathRecord& out, const RareSet& set, double x, double tau, double discount,
                         std::span<double> claim, const TraceSink* trace)
{
    for (std::size_t i = 0; i < claim.size(); ++i)
        out.D[i] += claim[i] * discount;
    const double xa = discount * set.functional_unchecked(claim);
    out.jump_xa.push_back(xa);
    out.jump_flags.push_back(xa > x ? 1 : 0);
    if (trace)
        (*trace)(out.arrivals_used, tau, claim, discount, out.D);
    ++out.arrivals_used;
}

} // namespace detail

/// D(T) = sum over tau_i <= T of X_i e^{-r tau_i}.
inline void simulate_D(const ClaimModel& claims, const ArrivalModel& arrivals, double r, double T,
                       const RareSet& set, double x, PathStreams& streams, PathRecord& out,
                       const TraceSink* trace = nullptr)
{
    if (!(r >= 0.0) || !std::isfinite(r))
        throw std::invalid_argument("simulate_D: r must be finite and >= 0");
    if (!(T > 0.0) || !std::isfinite(T))
        throw std::invalid_argument("simulate_D: T must be positive and finite");
    detail::check_dims(claims, set);
    out.reset(claims.dim());
    ArrivalStream stream(arrivals);
    ClaimSampler sampler(claims);
    std::vector<double> claim(claims.dim());
    for (double tau = stream.next(streams.arrivals); tau <= T; tau = stream.next(streams.arrivals)) {
        sampler.next(streams.claims, claim);
        detail::absorb_claim(out, set, x, tau, std::exp(-r * tau), claim, trace);
    }
    out.loss_functional = set.functional_unchecked(out.D);
}

inline PathRecord simulate_D(const ClaimModel& claims, const ArrivalModel& arrivals, double r, double T,
                             const RareSet& set, double x, PathStreams& streams)
{
    PathRecord out;
    simulate_D(claims, arrivals, r, T, set, x, streams, out);
    return out;
}

/// q = 1 when the upper index is below 1, else q2.
inline double moment_exponent(const ClaimModel& claims, double q2)
{
    const auto idx = matuszewska_bounds(claims);
    return (!idx.upper_unbounded && idx.upper < 1.0) ? 1.0 : q2;
}

inline MomentSeries infinite_horizon_series(const ClaimModel& claims, const ArrivalModel& arrivals, double r,
                                            double q1, double q2)
{
    auto series = moment_series(arrivals, r, q1, q2, moment_exponent(claims, q2));
    if (!series)
        throw std::invalid_argument("infinite horizon: no closed-form moment bound for arrival kind '" +
                                    arrivals.name() + "'");
    return *series;
}

/// Partial sum over the first M arrivals with the certified series remainder.
inline void simulate_D_infinite(const ClaimModel& claims, const ArrivalModel& arrivals, double r, std::size_t M,
                                double q1, double q2, const RareSet& set, double x, PathStreams& streams,
                                PathRecord& out, const TraceSink* trace = nullptr)
{
    if (!(r > 0.0) || !std::isfinite(r))
        throw std::invalid_argument("simulate_D_infinite: r must be positive");
    detail::check_dims(claims, set);
    const auto series = infinite_horizon_series(claims, arrivals, r, q1, q2);
    out.reset(claims.dim());
    ArrivalStream stream(arrivals);
    ClaimSampler sampler(claims);
    std::vector<double> claim(claims.dim());
    for (std::size_t i = 0; i < M; ++i) {
        const double tau = stream.next(streams.arrivals);
        if (!std::isfinite(tau))
            break;
        sampler.next(streams.claims, claim);
        detail::absorb_claim(out, set, x, tau, std::exp(-r * tau), claim, trace);
    }
    out.loss_functional = set.functional_unchecked(out.D);
    out.remainder_bound = series.remainder(M);
}

inline PathRecord simulate_D_infinite(const ClaimModel& claims, const ArrivalModel& arrivals, double r,
                                      std::size_t M, double q1, double q2, const RareSet& set, double x,
                                      PathStreams& streams)
{
    PathRecord out;
    simulate_D_infinite(claims, arrivals, r, M, q1, q2, set, x, streams, out);
    return out;
}

/// Premium density: constant, or base * (1 + kappa sin(2 pi s / period)) with |kappa| <= 1.
struct Premium {
    enum class Kind { constant, sinusoid };
    Kind kind = Kind::constant;
    double base = 0.0;
    double kappa = 0.0;
    double period = 1.0;

    static Premium constant(double c) { return validated({Kind::constant, c, 0.0, 1.0}); }
    static Premium sinusoid(double base, double kappa, double period)
    {
        return validated({Kind::sinusoid, base, kappa, period});
    }

    /// M_i with 0 <= c(s) <= M_i.
    double bound() const noexcept { return base * (1.0 + std::abs(kappa)); }

    double rate(double s) const noexcept
    {
        if (kind == Kind::constant)
            return base;
        return base * (1.0 + kappa * std::sin(2.0 * std::numbers::pi * s / period));
    }

    /// Closed form of the discounted premium integral over [0, t].
    double discounted_integral(double r, double t) const noexcept
    {
        const double flat = r == 0.0 ? t : -std::expm1(-r * t) / r;
        if (kind == Kind::constant)
            return base * flat;
        const double w = 2.0 * std::numbers::pi / period;
        const double wave = (w - std::exp(-r * t) * (r * std::sin(w * t) + w * std::cos(w * t))) / (r * r + w * w);
        return base * (flat + kappa * wave);
    }

private:
    static Premium validated(Premium p)
    {
        if (!(p.base >= 0.0) || !std::isfinite(p.base))
            throw std::invalid_argument("premium: density level must be finite and >= 0");
        if (!(std::abs(p.kappa) <= 1.0))
            throw std::invalid_argument("premium: sinusoid amplitude must satisfy |kappa| <= 1");
        if (!(p.period > 0.0))
            throw std::invalid_argument("premium: period must be positive");
        return p;
    }
};

/// Lower-triangular factor of a symmetric PSD matrix with unit diagonal.
inline std::vector<double> correlation_factor(const std::vector<std::vector<double>>& c)
{
    const std::size_t d = c.size();
    for (std::size_t i = 0; i < d; ++i) {
        if (c[i].size() != d)
            throw std::invalid_argument("correlation: matrix must be square");
        if (std::abs(c[i][i] - 1.0) > 1e-12)
            throw std::invalid_argument("correlation: diagonal entries must be 1");
        for (std::size_t j = 0; j < i; ++j) {
            if (std::abs(c[i][j] - c[j][i]) > 1e-12)
                throw std::invalid_argument("correlation: matrix must be symmetric");
            if (std::abs(c[i][j]) > 1.0)
                throw std::invalid_argument("correlation: entries must lie in [-1, 1]");
        }
    }
    constexpr double tol = 1e-10;
    std::vector<double> L(d * d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double pivot = c[j][j];
        for (std::size_t k = 0; k < j; ++k)
            pivot -= L[j * d + k] * L[j * d + k];
        if (pivot < -tol)
            throw std::invalid_argument("correlation: matrix is not positive semidefinite");
        const double diag = pivot > tol ? std::sqrt(pivot) : 0.0;
        L[j * d + j] = diag;
        for (std::size_t i = j + 1; i < d; ++i) {
            double v = c[i][j];
            for (std::size_t k = 0; k < j; ++k)
                v -= L[i * d + k] * L[j * d + k];
            if (diag == 0.0) {
                if (std::abs(v) > 1e-8)
                    throw std::invalid_argument("correlation: matrix is not positive semidefinite");
                L[i * d + j] = 0.0;
            } else {
                L[i * d + j] = v / diag;
            }
        }
    }
    return L;
}

struct RiskConfig {
    double r = 0.0;
    /// Finite horizon, or +infinity with `truncation` arrivals.
    double T = 1.0;
    std::size_t truncation = 0;
    double q1 = 0.0;
    double q2 = 0.0;
    std::vector<double> allocation;
    std::vector<Premium> premiums;
    std::vector<double> diffusion;
    std::vector<std::vector<double>> correlation;
    RuinSet ruin{RuinKind::any_negative, 1};
    double grid_step = 0.01;

    std::size_t dim() const noexcept { return allocation.size(); }

    void validate() const
    {
        const std::size_t d = dim();
        detail::require_probability_vector(allocation, "risk config allocation", true);
        if (ruin.dim != d)
            throw std::invalid_argument("risk config: ruin set dimension does not match the allocation");
        if (premiums.size() != d || diffusion.size() != d)
            throw std::invalid_argument("risk config: need one premium and one diffusion entry per line");
        for (double v : diffusion)
            if (!(v >= 0.0) || !std::isfinite(v))
                throw std::invalid_argument("risk config: diffusion coefficients must be >= 0");
        if (!(r >= 0.0) || !std::isfinite(r))
            throw std::invalid_argument("risk config: r must be finite and >= 0");
        if (!(T > 0.0))
            throw std::invalid_argument("risk config: horizon must be positive");
        if (!std::isfinite(T) && !(r > 0.0))
            throw std::invalid_argument("risk config: an infinite horizon requires r > 0");
        if (!std::isfinite(T) && truncation == 0)
            throw std::invalid_argument("risk config: an infinite horizon requires a truncation count");
        if (!(grid_step > 0.0))
            throw std::invalid_argument("risk config: grid step must be positive");
        if (correlation.size() != d)
            throw std::invalid_argument("risk config: correlation matrix must be d x d");
        correlation_factor(correlation);
    }
};

/// Simulates U on grid nodes and arrival instants, at capital x. The sup of
/// X_A(net loss) over checked times is stored, so ruin at any other capital y
/// is the event loss_functional > y.
class SurplusSimulator {
public:
    SurplusSimulator(const RiskConfig& config, const ClaimModel& claims, const ArrivalModel& arrivals)
        : config_(config), claims_(&claims), arrivals_(&arrivals),
          set_(ruin_to_rare(config.ruin, config.allocation)), factor_(correlation_factor(config.correlation))
    {
        config_.validate();
        if (claims.dim() != config.dim())
            throw std::invalid_argument("simulate_surplus: claim dimension does not match the allocation");
        if (!std::isfinite(config.T))
            series_ = infinite_horizon_series(claims, arrivals, config.r, config.q1, config.q2);
        diffusive_ = std::any_of(config.diffusion.begin(), config.diffusion.end(), [](double v) { return v > 0.0; });
    }

    const RareSet& mapped_set() const noexcept { return set_; }

    void run(double x, PathStreams& streams, PathRecord& out, const TraceSink* trace = nullptr) const
    {
        if (!(x >= 0.0))
            throw std::invalid_argument("simulate_surplus: capital must be >= 0");
        const std::size_t d = config_.dim();
        const double r = config_.r;
        const double h = config_.grid_step;
        const bool infinite = !std::isfinite(config_.T);
        out.reset(d);

        ArrivalStream stream(*arrivals_);
        ClaimSampler sampler(*claims_);
        std::vector<double> claim(d);
        std::vector<double> brownian(d, 0.0);
        std::vector<double> loss(d, 0.0);
        std::vector<double> z(d, 0.0);

        double horizon = config_.T;
        double next_arrival = stream.next(streams.arrivals);
        std::size_t taken = 0;
        if (infinite) {
            // Run the grid up to the last retained arrival.
            horizon = 0.0;
            out.remainder_bound = series_.remainder(config_.truncation);
        }
        std::size_t node = 1;
        double last_time = 0.0;
        double sup = -std::numeric_limits<double>::infinity();

        const auto evaluate = [&](double t) {
            for (std::size_t i = 0; i < d; ++i)
                loss[i] = out.D[i] - config_.premiums[i].discounted_integral(r, t) -
                          config_.diffusion[i] * brownian[i];
            const double value = set_.functional_unchecked(loss);
            if (value > sup)
                sup = value;
            if (!out.first_entrance && value > x)
                out.first_entrance = t;
        };
        const auto advance_brownian = [&](double t) {
            if (!diffusive_ || t <= last_time)
                return;
            const double var = r == 0.0 ? t - last_time
                                        : std::exp(-2.0 * r * last_time) * -std::expm1(-2.0 * r * (t - last_time)) /
                                              (2.0 * r);
            const double sd = std::sqrt(var);
            for (std::size_t i = 0; i < d; ++i)
                z[i] = streams.diffusion.normal();
            for (std::size_t i = 0; i < d; ++i) {
                double inc = 0.0;
                for (std::size_t k = 0; k <= i; ++k)
                    inc += factor_[i * d + k] * z[k];
                brownian[i] += sd * inc;
            }
        };

        for (;;) {
            const bool more_claims = infinite ? taken < config_.truncation && std::isfinite(next_arrival)
                                              : next_arrival <= horizon;
            const double grid_time = static_cast<double>(node) * h;
            const double grid_limit = infinite ? (more_claims ? next_arrival : horizon) : horizon;
            if (grid_time < grid_limit && (!more_claims || grid_time < next_arrival)) {
                advance_brownian(grid_time);
                last_time = grid_time;
                evaluate(grid_time);
                ++node;
                continue;
            }
            if (more_claims) {
                const double tau = next_arrival;
                advance_brownian(tau);
                last_time = tau;
                sampler.next(streams.claims, claim);
                detail::absorb_claim(out, set_, x, tau, std::exp(-r * tau), claim, trace);
                ++taken;
                if (infinite)
                    horizon = tau;
                evaluate(tau);
                if (infinite && taken >= config_.truncation)
                    break;
                next_arrival = stream.next(streams.arrivals);
                continue;
            }
            // Final node at the horizon itself.
            if (!infinite && last_time < horizon) {
                advance_brownian(horizon);
                last_time = horizon;
                evaluate(horizon);
            }
            break;
        }
        out.loss_functional = std::isfinite(sup) ? sup : 0.0;
    }

private:
    RiskConfig config_;
    const ClaimModel* claims_;
    const ArrivalModel* arrivals_;
    RareSet set_;
    std::vector<double> factor_;
    MomentSeries series_{};
    bool diffusive_ = false;
};

inline PathRecord simulate_surplus(const RiskConfig& config, const ClaimModel& claims, const ArrivalModel& arrivals,
                                   double x, PathStreams& streams)
{
    SurplusSimulator sim(config, claims, arrivals);
    PathRecord out;
    sim.run(x, streams, out);
    return out;
}

} // namespace ruinsim
