#pragma once

// Reference values computed without the library: closed forms and boost
// quadrature over the raw model parameters.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

/// Unit-scale Pareto survival P(R > y).
inline double pareto_sf(double alpha, double y) { return y <= 1.0 ? 1.0 : std::pow(y, -alpha); }

/// Scale of atom theta with respect to the set max_p p.z > 1.
inline double atom_scale(const Mat& directions, const Vec& theta)
{
    double s = 0.0;
    for (const auto& p : directions) {
        double v = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i)
            v += p[i] * theta[i];
        s = std::max(s, v);
    }
    return s;
}

/// P(X in xA) for Pareto radius and discrete spectral measure.
inline double polar_tail(double alpha, const Mat& atoms, const Vec& weights, const Mat& directions, double x)
{
    double total = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
        const double s = atom_scale(directions, atoms[j]);
        if (s > 0.0)
            total += weights[j] * pareto_sf(alpha, x / s);
    }
    return total;
}

/// int_0^T e^{-u s} lambda ds.
inline double poisson_discount(double lambda, double u, double T)
{
    if (!std::isfinite(T))
        return lambda / u;
    return u == 0.0 ? lambda * T : lambda * (1.0 - std::exp(-u * T)) / u;
}

/// Mean of the Poisson process with rate lambda0 (1 + beta sin(2 pi s / P)).
inline double inhom_mean(double lambda0, double beta, double period, double t)
{
    const double w = 2.0 * M_PI / period;
    return lambda0 * (t + beta / w * (1.0 - std::cos(w * t)));
}

/// Renewal function of gamma(k, theta) inter-arrivals: sum_n P(Gamma(nk, theta) <= t).
inline double gamma_renewal_mean(double k, double theta, double t)
{
    double total = 0.0;
    for (int n = 1; n < 100000; ++n) {
        const double term = boost::math::gamma_p(n * k, t / theta);
        total += term;
        if (term < 1e-17)
            break;
    }
    return total;
}

/// P(a R1 + b R2 > x) for independent unit Pareto radii, a, b >= 0.
inline double pareto_pair_sum_sf(double alpha, double a, double b, double x)
{
    if (a == 0.0 && b == 0.0)
        return 0.0;
    if (a == 0.0)
        return pareto_sf(alpha, x / b);
    if (b == 0.0)
        return pareto_sf(alpha, x / a);
    if (x <= a + b)
        return 1.0;
    // Condition on R1 = r: need R2 > (x - a r) / b.
    const double r_max = (x - b) / a; // beyond this R2 >= 1 already suffices
    const auto integrand = [&](double r) {
        return pareto_sf(alpha, (x - a * r) / b) * alpha * std::pow(r, -alpha - 1.0);
    };
    double inner = 0.0;
    if (r_max > 1.0) {
        // Split at the midpoint where both factors are smooth.
        const double mid = 0.5 * (1.0 + r_max);
        inner = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, 1.0, mid, 15, 1e-13) +
                boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, mid, r_max, 15, 1e-13);
    }
    return inner + pareto_sf(alpha, std::max(1.0, r_max));
}

/// P(c1 Z1 + c2 Z2 in x A2(1,1)) for iid claims with atoms e1, e2 at weight 1/2.
inline double orthant_pair_sf(double alpha, double c1, double c2, double x)
{
    // Same atom: one coordinate carries c1 R1 + c2 R2.
    const double same = pareto_pair_sum_sf(alpha, c1, c2, x);
    // Different atoms: either coordinate exceeds on its own.
    const double diff = 1.0 - (1.0 - pareto_sf(alpha, x / c1)) * (1.0 - pareto_sf(alpha, x / c2));
    return 0.5 * same + 0.5 * diff;
}

/// Sum of single-claim probabilities for the same set.
inline double orthant_single_sum(double alpha, double c1, double c2, double x)
{
    return pareto_sf(alpha, x / c1) + pareto_sf(alpha, x / c2);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

} // namespace oracle
