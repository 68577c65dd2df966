#pragma once

// Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals,
// with optional interior breakpoints for integrands with kinks or jumps.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

namespace ruinsim {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    bool converged = true;
    std::size_t evaluations = 0;
};

struct QuadratureOptions {
    double abs_tol = 1e-12;
    double rel_tol = 1e-8;
    std::size_t max_intervals = 4000;
};

namespace detail {

inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};

inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
    double lo;
    double hi;
    double value;
    double error;
    bool operator<(const Segment& other) const { return error < other.error; }
};

template <typename F>
Segment gauss_kronrod_15(const F& f, double lo, double hi)
{
    const double centre = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    const double fc = f(centre);
    double kronrod = fc * kKronrodWeights[7];
    double gauss = fc * kGaussWeights[3];
    for (std::size_t j = 0; j < 7; ++j) {
        const double dx = half * kKronrodNodes[j];
        const double sum = f(centre - dx) + f(centre + dx);
        kronrod += kKronrodWeights[j] * sum;
        if (j % 2 == 1)
            gauss += kGaussWeights[j / 2] * sum;
    }
    kronrod *= half;
    gauss *= half;
    return Segment{lo, hi, kronrod, std::abs(kronrod - gauss)};
}

} // namespace detail

/// Integrates f over [lo, hi]. Breakpoints outside (lo, hi) are ignored.
template <typename F>
QuadratureResult integrate(const F& f, double lo, double hi, QuadratureOptions options = {},
                           std::span<const double> breakpoints = {})
{
    if (!(lo <= hi))
        throw std::invalid_argument("integrate: lower limit exceeds upper limit");
    QuadratureResult result;
    if (lo == hi)
        return result;

    std::vector<double> cuts{lo};
    for (double b : breakpoints)
        if (b > lo && b < hi)
            cuts.push_back(b);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    std::priority_queue<detail::Segment> heap;
    double total = 0.0;
    double total_error = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        auto seg = detail::gauss_kronrod_15(f, cuts[i], cuts[i + 1]);
        result.evaluations += 15;
        total += seg.value;
        total_error += seg.error;
        heap.push(seg);
    }

    while (total_error > std::max(options.abs_tol, options.rel_tol * std::abs(total))) {
        if (heap.size() >= options.max_intervals) {
            result.converged = false;
            break;
        }
        const auto worst = heap.top();
        const double mid = 0.5 * (worst.lo + worst.hi);
        if (!(mid > worst.lo && mid < worst.hi)) {
            result.converged = false;
            break;
        }
        heap.pop();
        const auto left = detail::gauss_kronrod_15(f, worst.lo, mid);
        const auto right = detail::gauss_kronrod_15(f, mid, worst.hi);
        result.evaluations += 30;
        total += left.value + right.value - worst.value;
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    // Re-sum from the segments to shed accumulated cancellation error.
    double value = 0.0;
    double error = 0.0;
    while (!heap.empty()) {
        value += heap.top().value;
        error += heap.top().error;
        heap.pop();
    }
    result.value = value;
    result.error = error;
    return result;
}

} // namespace ruinsim
