#include <catch_amalgamated.hpp>

#include "oracles.hpp"

#include <ruinsim/asymptotics.hpp>
#include <ruinsim/risk_sim.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

using namespace ruinsim;
using Catch::Approx;

namespace {

ClaimModel pareto_polar(double alpha = 2.0)
{
    return ClaimModel(RadialLaw::pareto(alpha), SpectralMeasure({{1.0, 0.0}, {0.0, 1.0}}, {0.5, 0.5}));
}

const std::vector<double> kHalf{0.5, 0.5};
const std::vector<double> kOnes{1.0, 1.0};
constexpr double kInf = std::numeric_limits<double>::infinity();

RhsOptions quadrature_only()
{
    RhsOptions o;
    o.allow_closed_form = false;
    return o;
}

} // namespace

TEST_CASE("finite right-hand side in the pure-power regime")
{
    const auto m = pareto_polar();
    const auto a1 = make_sum_set(kHalf, 1.0);
    const auto pois = ArrivalModel::poisson(1.0);
    const double expected = 0.25 * 0.01 * oracle::poisson_discount(1.0, 0.1, 10.0);
    const auto closed = finite_rhs(m, pois, a1, 0.05, 10.0, 10.0);
    CHECK(closed.value == Approx(expected).epsilon(1e-12));
    CHECK(closed.value == Approx(0.25 * 0.01 * 6.32121).epsilon(1e-5));
    CHECK(closed.method == AsymptoticMethod::exact_closed_form);
    const auto quad = finite_rhs(m, pois, a1, 0.05, 10.0, 10.0, quadrature_only());
    CHECK(quad.value == Approx(expected).epsilon(1e-9));
    CHECK(quad.method == AsymptoticMethod::quadrature);
}

TEST_CASE("finite right-hand side below the pure-power threshold")
{
    // x e^{rs} crosses the atom scale inside [0, T]; compare with direct quadrature of the oracle tail.
    const auto m = pareto_polar();
    const auto a2 = make_orthant_set(kOnes);
    const auto pois = ArrivalModel::poisson(2.0);
    const double r = 0.3, T = 5.0, x = 0.5;
    const auto f = [&](double s) {
        return 2.0 * oracle::polar_tail(2.0, {{1, 0}, {0, 1}}, {0.5, 0.5}, a2.directions(), x * std::exp(r * s));
    };
    const double kink = std::log(1.0 / x) / r;
    const double q = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, kink, 10, 1e-14) +
                     boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, kink, T, 10, 1e-14);
    CHECK(finite_rhs(m, pois, a2, r, T, x).value == Approx(q).epsilon(1e-9));
}

TEST_CASE("undiscounted reduction")
{
    const auto m = pareto_polar();
    const auto a1 = make_sum_set(kHalf, 1.0);
    const auto inh = ArrivalModel::inhomogeneous_poisson(1.0, 0.5, 1.0);
    CHECK(finite_rhs(m, inh, a1, 0.0, 3.3, 4.0).value ==
          Approx(tail_FA(m, a1, 4.0).value * oracle::inhom_mean(1.0, 0.5, 1.0, 3.3)).epsilon(1e-9));
}

TEST_CASE("no arrivals before the horizon")
{
    const auto m = pareto_polar();
    const auto a1 = make_sum_set(kHalf, 1.0);
    CHECK(finite_rhs(m, ArrivalModel::bounded_below(2.0, 1.0), a1, 0.1, 1.5, 3.0).value == 0.0);
}

TEST_CASE("infinite right-hand side")
{
    const auto m = pareto_polar();
    const auto a2 = make_orthant_set(kOnes);
    const auto pois = ArrivalModel::poisson(1.0);
    CHECK(infinite_rhs(m, pois, a2, 0.05, 10.0).value == Approx(0.1).epsilon(1e-12));
    CHECK(infinite_rhs(m, pois, a2, 0.05, 10.0, quadrature_only()).value == Approx(0.1).epsilon(1e-8));
    CHECK(infinite_rhs(m, pois, a2, 0.05, 20.0).value / infinite_rhs(m, pois, a2, 0.05, 10.0).value ==
          Approx(0.25).epsilon(1e-12));
    CHECK_THROWS(infinite_rhs(m, pois, a2, 0.0, 10.0));
}

TEST_CASE("bounded-below arrivals push mass later")
{
    const auto m = pareto_polar();
    const auto a2 = make_orthant_set(kOnes);
    const auto bb = ArrivalModel::bounded_below(0.1, 1.0, {0.5, 1.5}, {0.5, 0.5});
    const auto closed = infinite_rhs(m, bb, a2, 0.5, 10.0);
    const auto quad = infinite_rhs(m, bb, a2, 0.5, 10.0, quadrature_only());
    CHECK(closed.value == Approx(quad.value).epsilon(1e-7));
    // With W = 1 the gaps are a + Exp(1), so every tau_n sits later than for Poisson(1).
    const auto shifted = ArrivalModel::bounded_below(0.1, 1.0);
    const auto pois = ArrivalModel::poisson(1.0);
    CHECK(infinite_rhs(m, shifted, a2, 0.5, 10.0).value < infinite_rhs(m, pois, a2, 0.5, 10.0).value);
}

TEST_CASE("regularly varying shortcut")
{
    const auto pois = ArrivalModel::poisson(1.0);
    const auto V = [](double x) { return std::pow(x, -2.0); };
    CHECK(mrv_rhs(2.0, 0.25, V, pois, 0.05, 10.0, 10.0).value == Approx(0.25 * 0.01 * 6.32121).epsilon(1e-5));
    CHECK(mrv_rhs(2.0, 0.25, V, pois, 0.05, kInf, 10.0).value == Approx(0.025).epsilon(1e-12));
    CHECK(mrv_rhs(2.0, 0.25, V, pois, 0.0, 4.0, 10.0).value == Approx(0.25 * 0.01 * 4.0));
    CHECK_THROWS(mrv_rhs(2.0, 0.25, V, pois, 0.0, kInf, 10.0));
}

TEST_CASE("regularly varying identity on a grid")
{
    const auto m = pareto_polar();
    const auto a1 = make_sum_set(kHalf, 1.0);
    const auto pois = ArrivalModel::poisson(1.0);
    const double mu = mu_of_set(m, a1);
    const auto V = [](double x) { return std::pow(x, -2.0); };
    for (double x : {1.0, 10.0, 100.0})
        for (double T : {1.0, 5.0, 10.0}) {
            const double a = mrv_rhs(2.0, mu, V, pois, 0.05, T, x).value;
            const double b = finite_rhs(m, pois, a1, 0.05, T, x, quadrature_only()).value;
            CHECK(std::abs(a - b) / b <= 1e-9);
        }
}

TEST_CASE("monotonicity in x, T and r")
{
    const auto m = pareto_polar(1.5);
    const auto a2 = make_orthant_set(kOnes);
    const auto inh = ArrivalModel::inhomogeneous_poisson(1.0, 0.7, 2.0);
    double prev = kInf;
    for (double x : {0.3, 1.0, 3.0, 10.0}) {
        const double v = finite_rhs(m, inh, a2, 0.1, 5.0, x).value;
        CHECK(v <= prev);
        prev = v;
    }
    prev = 0.0;
    for (double T : {0.5, 1.0, 3.0, 8.0}) {
        const double v = finite_rhs(m, inh, a2, 0.1, T, 2.0).value;
        CHECK(v >= prev);
        prev = v;
    }
    prev = kInf;
    for (double r : {0.0, 0.05, 0.2, 1.0}) {
        const double v = finite_rhs(m, inh, a2, r, 5.0, 2.0).value;
        CHECK(v <= prev);
        prev = v;
    }
}

TEST_CASE("expected number of big jumps")
{
    // Lambda_x = E sum_i 1{X_i e^{-r tau_i} in xA}, estimated directly.
    const auto m = pareto_polar();
    const auto a1 = make_sum_set(kHalf, 1.0);
    const auto pois = ArrivalModel::poisson(1.0);
    const double r = 0.05, T = 10.0, x = 2.0;
    const std::size_t n = 200000;
    double s = 0.0, s2 = 0.0;
    PathRecord rec;
    for (std::size_t p = 0; p < n; ++p) {
        auto streams = PathStreams::for_path(31, p);
        simulate_D(m, pois, r, T, a1, x, streams, rec);
        const double j = static_cast<double>(rec.jumps());
        s += j;
        s2 += j * j;
    }
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(mean - finite_rhs(m, pois, a1, r, T, x).value) < 4.0 * se);
}

TEST_CASE("renewal right-hand side through the cache")
{
    CacheSettings cache;
    cache.horizon = 10.0;
    cache.paths = 50000;
    const auto m = pareto_polar();
    const auto a1 = make_sum_set(kHalf, 1.0);
    const auto ren = ArrivalModel::gamma_renewal(2.0, 0.5, cache);
    const auto v = finite_rhs(m, ren, a1, 0.05, 10.0, 10.0);
    CHECK(v.method == AsymptoticMethod::mc_assisted);
    // gamma(2, 0.5) has mean 1, so the rate is close to Poisson(1) after the first unit of time.
    const double pois = finite_rhs(m, ArrivalModel::poisson(1.0), a1, 0.05, 10.0, 10.0).value;
    CHECK(v.value == Approx(pois).epsilon(0.1));
    CHECK(v.error_bound > 0.0);
}

TEST_CASE("asymptotic csv")
{
    std::ostringstream os;
    std::vector<AsymptoticRow> rows{{10.0, AsymptoticValue{0.5, AsymptoticMethod::quadrature, 1e-12, true, false}}};
    write_asymptotic_csv(os, rows);
    CHECK(os.str() == "x,asymptotic,method,error_bound\n10,0.5,quadrature,9.9999999999999998e-13\n");
}
