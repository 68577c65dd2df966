#pragma once

// Asymptotic right-hand sides: integrals of the projected claim tail at
// x e^{rs} against the mean measure of the arrivals, on finite and infinite
// horizons, plus the regularly varying shortcut mu(A) V(x) int e^{-alpha r s} m(ds).

#include "arrival_models.hpp"
#include "claim_models.hpp"
#include "rare_sets.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ruinsim {

enum class AsymptoticMethod { exact_closed_form, quadrature, mc_assisted };

inline const char* to_string(AsymptoticMethod m)
{
    switch (m) {
    case AsymptoticMethod::exact_closed_form: return "exact-closed-form";
    case AsymptoticMethod::quadrature: return "quadrature";
    case AsymptoticMethod::mc_assisted: return "mc-assisted";
    }
    return "?";
}

struct AsymptoticValue {
    double value = 0.0;
    AsymptoticMethod method = AsymptoticMethod::exact_closed_form;
    double error_bound = 0.0;
    bool converged = true;
    bool diverged = false;
};

struct RhsOptions {
    bool allow_closed_form = true;
    QuadratureOptions quadrature{};
};

namespace detail {

inline AsymptoticValue from_integral(const MeasureIntegral& m)
{
    AsymptoticValue v;
    v.value = std::max(0.0, m.value);
    v.error_bound = m.error;
    v.converged = m.converged;
    v.diverged = m.diverged;
    switch (m.method) {
    case IntegralMethod::exact_sum: v.method = AsymptoticMethod::exact_closed_form; break;
    case IntegralMethod::quadrature: v.method = AsymptoticMethod::quadrature; break;
    case IntegralMethod::stieltjes_cache: v.method = AsymptoticMethod::mc_assisted; break;
    }
    return v;
}

// s at which x e^{rs} crosses a kink of the projected tail.
inline std::vector<double> tail_breakpoints(const ProjectedTail& tail, double r, double x)
{
    std::vector<double> out;
    if (r <= 0.0)
        return out;
    for (double theta : tail.kink_points())
        if (theta > x)
            out.push_back(std::log(theta / x) / r);
    return out;
}

// Closed form of int_0^T e^{-s u} m(ds) for u > 0 where one exists.
inline std::optional<double> discount_transform(const ArrivalModel& arrivals, double u, double T)
{
    if (auto p = arrivals.as<PoissonArrivals>()) {
        if (u == 0.0)
            return std::isfinite(T) ? std::optional<double>(p->rate * T) : std::nullopt;
        return std::isfinite(T) ? p->rate * -std::expm1(-u * T) / u : p->rate / u;
    }
    if (std::isfinite(T) || !(u > 0.0))
        return std::nullopt;
    if (auto p = arrivals.as<BoundedBelowArrivals>()) {
        double total = 0.0;
        for (std::size_t k = 0; k < p->mixing_values.size(); ++k) {
            const double rho = std::exp(-u * p->a) * p->rate / (p->rate + u * p->mixing_values[k]);
            total += p->mixing_probs[k] * rho / (1.0 - rho);
        }
        return total;
    }
    if (auto p = arrivals.as<GammaRenewalArrivals>()) {
        const double rho = std::pow(1.0 + u * p->scale, -p->shape);
        return rho / (1.0 - rho);
    }
    return std::nullopt;
}

inline AsymptoticValue rhs_integral(const ProjectedTail& tail, const ArrivalModel& arrivals, double r, double T,
                                    double x, const RhsOptions& options)
{
    const auto& radial = tail.radial();
    if (options.allow_closed_form && radial.kind == RadialKind::pareto && x >= tail.pure_power_threshold()) {
        if (auto w = discount_transform(arrivals, radial.alpha * r, T)) {
            AsymptoticValue v;
            v.value = tail.limit_mass() * std::pow(x, -radial.alpha) * *w;
            return v;
        }
    }
    MeasureIntegralOptions mopt;
    mopt.quadrature = options.quadrature;
    mopt.breakpoints = tail_breakpoints(tail, r, x);
    const auto f = [&](double s) { return tail.survival(x * std::exp(r * s)); };
    return from_integral(mean_measure_integral(arrivals, f, T, mopt));
}

} // namespace detail

/// int_0^T P(X e^{-rs} in xA) m(ds) for finite T.
inline AsymptoticValue finite_rhs(const ClaimModel& claims, const ArrivalModel& arrivals, const RareSet& set,
                                  double r, double T, double x, const RhsOptions& options = {})
{
    if (!(x > 0.0))
        throw std::invalid_argument("finite_rhs: x must be positive");
    if (!(T > 0.0) || !std::isfinite(T))
        throw std::invalid_argument("finite_rhs: T must be positive and finite");
    if (!(r >= 0.0))
        throw std::invalid_argument("finite_rhs: r must be >= 0");
    ProjectedTail tail(claims, set);
    if (tail.unreachable())
        return {};
    auto v = detail::rhs_integral(tail, arrivals, r, T, x, options);
    if (!v.converged)
        throw std::runtime_error("finite_rhs: quadrature did not converge");
    return v;
}

/// Same integral over [0, infinity); requires r > 0.
inline AsymptoticValue infinite_rhs(const ClaimModel& claims, const ArrivalModel& arrivals, const RareSet& set,
                                    double r, double x, const RhsOptions& options = {})
{
    if (!(x > 0.0))
        throw std::invalid_argument("infinite_rhs: x must be positive");
    if (!(r > 0.0))
        throw std::invalid_argument("infinite_rhs: r must be positive");
    ProjectedTail tail(claims, set);
    if (tail.unreachable())
        return {};
    auto v = detail::rhs_integral(tail, arrivals, r, std::numeric_limits<double>::infinity(), x, options);
    if (!v.converged)
        throw std::runtime_error("infinite_rhs: quadrature did not converge");
    return v;
}

/// mu(A) V(x) int_0^T e^{-alpha r s} m(ds); T may be +infinity.
template <typename Tail>
AsymptoticValue mrv_rhs(double alpha, double mu_A, const Tail& Vbar, const ArrivalModel& arrivals, double r,
                        double T, double x, const RhsOptions& options = {})
{
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw std::invalid_argument("mrv_rhs: alpha must be positive");
    if (!(mu_A > 0.0) || !std::isfinite(mu_A))
        throw std::invalid_argument("mrv_rhs: mu(A) must be positive and finite");
    if (!(x > 0.0))
        throw std::invalid_argument("mrv_rhs: x must be positive");
    if (!std::isfinite(T) && !(r > 0.0))
        throw std::invalid_argument("mrv_rhs: an infinite horizon requires r > 0");
    const double scale = mu_A * Vbar(x);
    const double u = alpha * r;
    if (options.allow_closed_form) {
        if (auto w = detail::discount_transform(arrivals, u, T)) {
            AsymptoticValue v;
            v.value = scale * *w;
            return v;
        }
        if (u == 0.0 && arrivals.analytic()) {
            AsymptoticValue v;
            v.value = scale * mean_function(arrivals, T).value;
            return v;
        }
    }
    MeasureIntegralOptions mopt;
    mopt.quadrature = options.quadrature;
    const auto m = mean_measure_integral(arrivals, [u](double s) { return std::exp(-u * s); }, T, mopt);
    auto v = detail::from_integral(m);
    v.value *= scale;
    v.error_bound *= scale;
    return v;
}

struct AsymptoticRow {
    double x;
    AsymptoticValue value;
};

inline void write_asymptotic_csv(std::ostream& os, std::span<const AsymptoticRow> rows)
{
    os << "x,asymptotic,method,error_bound\n";
    char buf[160];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%s,%.17g\n", row.x, row.value.value, to_string(row.value.method),
                      row.value.error_bound);
        os << buf;
    }
}

} // namespace ruinsim
