#pragma once

// Monte Carlo estimators of entrance and ruin probabilities, with the
// diagnostics of the single-big-jump decomposition. All estimators take an
// x-grid and reuse the same paths for every x.

#include "arrival_models.hpp"
#include "asymptotics.hpp"
#include "claim_models.hpp"
#include "parallel.hpp"
#include "rare_sets.hpp"
#include "risk_sim.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace ruinsim {

struct EntranceProblem {
    const ClaimModel& claims;
    const ArrivalModel& arrivals;
    const RareSet& set;
    double r = 0.0;
    /// Finite horizon, or +infinity meaning the first `truncation` arrivals.
    double T = 1.0;
    std::size_t truncation = 0;
    double q1 = 0.0;
    double q2 = 0.0;

    bool infinite() const noexcept { return !std::isfinite(T); }
};

struct RunSettings {
    std::size_t n_paths = 100000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

inline constexpr double kNormalQuantile95 = 1.959963984540054;

struct Stat {
    double estimate = 0.0;
    double stderr_value = 0.0;
};

struct EstimateReport {
    std::string estimator;
    double x = 0.0;
    double estimate = 0.0;
    double stderr_value = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::string ci_method = "normal";
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    std::optional<std::size_t> hits;
    std::optional<AsymptoticValue> asymptotic;
    std::optional<double> ratio;
    std::optional<double> ratio_ci_lo;
    std::optional<double> ratio_ci_hi;
    std::optional<double> remainder_bound;
    std::vector<std::string> warnings;
};

/// Wilson score interval for a binomial proportion.
inline std::pair<double, double> wilson_interval(double hits, double n, double z = kNormalQuantile95)
{
    if (n <= 0.0)
        return {0.0, 1.0};
    const double p = hits / n;
    const double z2 = z * z;
    const double centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

namespace detail {

inline EstimateReport binomial_report(std::string name, double x, std::size_t hits, const RunSettings& s)
{
    EstimateReport rep;
    rep.estimator = std::move(name);
    rep.x = x;
    rep.n_paths = s.n_paths;
    rep.seed = s.seed;
    rep.hits = hits;
    const double n = static_cast<double>(s.n_paths);
    const double p = static_cast<double>(hits) / n;
    rep.estimate = p;
    rep.stderr_value = std::sqrt(p * (1.0 - p) / n);
    if (hits < 100) {
        std::tie(rep.ci_lo, rep.ci_hi) = wilson_interval(static_cast<double>(hits), n);
        rep.ci_method = "wilson";
    } else {
        rep.ci_lo = std::max(0.0, p - kNormalQuantile95 * rep.stderr_value);
        rep.ci_hi = std::min(1.0, p + kNormalQuantile95 * rep.stderr_value);
    }
    if (hits < 20)
        rep.warnings.push_back("fewer than 20 hits; interval unreliable");
    return rep;
}

inline EstimateReport mean_report(std::string name, double x, const MeanAccumulator& acc, const RunSettings& s)
{
    EstimateReport rep;
    rep.estimator = std::move(name);
    rep.x = x;
    rep.n_paths = s.n_paths;
    rep.seed = s.seed;
    rep.estimate = std::clamp(acc.mean, 0.0, 1.0);
    rep.stderr_value = acc.stderr_of_mean();
    rep.ci_lo = std::max(0.0, rep.estimate - kNormalQuantile95 * rep.stderr_value);
    rep.ci_hi = std::min(1.0, rep.estimate + kNormalQuantile95 * rep.stderr_value);
    return rep;
}

inline void attach_asymptotic(EstimateReport& rep, const AsymptoticValue& a)
{
    rep.asymptotic = a;
    if (!(a.value > 0.0))
        return;
    const double rel = a.error_bound / a.value;
    rep.ratio = rep.estimate / a.value;
    rep.ratio_ci_lo = std::max(0.0, rep.ci_lo / a.value * (1.0 - rel));
    rep.ratio_ci_hi = rep.ci_hi / a.value * (1.0 + rel);
}

inline void require_grid(std::span<const double> xs)
{
    if (xs.empty())
        throw std::invalid_argument("estimator: x grid is empty");
    for (double x : xs)
        if (!(x > 0.0) || !std::isfinite(x))
            throw std::invalid_argument("estimator: x grid values must be positive and finite");
}

inline void require_problem(const EntranceProblem& pb)
{
    if (pb.claims.dim() != pb.set.dim())
        throw std::invalid_argument("estimator: claim dimension does not match the set");
    if (!(pb.r >= 0.0) || !std::isfinite(pb.r))
        throw std::invalid_argument("estimator: r must be finite and >= 0");
    if (pb.infinite()) {
        if (!(pb.r > 0.0))
            throw std::invalid_argument("estimator: an infinite horizon requires r > 0");
        if (pb.truncation == 0)
            throw std::invalid_argument("estimator: an infinite horizon requires a truncation count");
    } else if (!(pb.T > 0.0)) {
        throw std::invalid_argument("estimator: T must be positive");
    }
}

inline void require_independent(const ClaimModel& claims, const char* who)
{
    if (!claims.independent())
        throw std::invalid_argument(std::string(who) +
                                    ": requires independent claims; conditioning on arrivals is biased otherwise");
}

inline std::optional<double> remainder_of(const EntranceProblem& pb)
{
    if (!pb.infinite())
        return std::nullopt;
    return infinite_horizon_series(pb.claims, pb.arrivals, pb.r, pb.q1, pb.q2).remainder(pb.truncation);
}

// Arrival times of one path within the horizon or truncation.
inline void draw_arrivals(const EntranceProblem& pb, Rng& rng, std::vector<double>& taus)
{
    taus.clear();
    ArrivalStream stream(pb.arrivals);
    if (pb.infinite()) {
        for (std::size_t i = 0; i < pb.truncation; ++i) {
            const double t = stream.next(rng);
            if (!std::isfinite(t))
                break;
            taus.push_back(t);
        }
    } else {
        for (double t = stream.next(rng); t <= pb.T; t = stream.next(rng))
            taus.push_back(t);
    }
}

// Probabilities of J = 0, J = 1, J >= 2 given the arrivals, and E[J | arrivals].
struct JumpLaw {
    double none = 1.0;
    double one = 0.0;
    double many = 0.0;
    double mean = 0.0;

    void absorb(double p) noexcept
    {
        many += one * p;
        one = one * (1.0 - p) + none * p;
        none *= 1.0 - p;
        mean += p;
    }
    double at_least_one() const noexcept { return one + many; }
};

struct PolarPath {
    std::vector<double> taus;
    std::vector<double> discount;
    std::vector<double> radius;
    std::vector<std::size_t> atom;
};

inline void draw_polar_path(const EntranceProblem& pb, PathStreams& streams, PolarPath& path)
{
    draw_arrivals(pb, streams.arrivals, path.taus);
    const std::size_t n = path.taus.size();
    path.discount.resize(n);
    path.radius.resize(n);
    path.atom.resize(n);
    ClaimSampler sampler(pb.claims);
    for (std::size_t i = 0; i < n; ++i) {
        const auto draw = sampler.next_polar(streams.claims);
        path.discount[i] = std::exp(-pb.r * path.taus[i]);
        path.radius[i] = draw.radius;
        path.atom[i] = draw.atom;
    }
}

// Conditional-on-the-largest-claim estimates of P(D in xA) and P(D in xA, J = 0)
// for one path: the radius of the claim with the largest projection is
// integrated out exactly given all other claims.
class MaxConditional {
public:
    MaxConditional(const EntranceProblem& pb, const ProjectedTail& tail) : pb_(&pb), tail_(&tail)
    {
        const auto& spectral = pb.claims.spectral;
        atoms_ = spectral.size();
        dirs_ = pb.set.size();
        proj_.resize(dirs_ * atoms_);
        for (std::size_t q = 0; q < dirs_; ++q) {
            const auto p = pb.set.direction(q);
            for (std::size_t j = 0; j < atoms_; ++j) {
                double dot = 0.0;
                for (std::size_t i = 0; i < p.size(); ++i)
                    dot += p[i] * spectral.atom(j)[i];
                proj_[q * atoms_ + j] = dot;
            }
        }
    }

    /// Adds per-x contributions into in_set[x] and in_set_no_jump[x].
    void evaluate(const PolarPath& path, std::span<const double> xs, std::span<double> in_set,
                  std::span<double> in_set_no_jump)
    {
        std::fill(in_set.begin(), in_set.end(), 0.0);
        std::fill(in_set_no_jump.begin(), in_set_no_jump.end(), 0.0);
        const std::size_t n = path.taus.size();
        if (n == 0)
            return;
        const auto& spectral = pb_->claims.spectral;
        const auto& scales = tail_->atom_scales();
        const auto& radial = tail_->radial();
        const std::size_t d = pb_->claims.dim();

        D_.assign(d, 0.0);
        y_.resize(n);
        std::size_t top = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = path.discount[i] * path.radius[i];
            const auto& theta = spectral.atom(path.atom[i]);
            for (std::size_t c = 0; c < d; ++c)
                D_[c] += w * theta[c];
            y_[i] = w * scales[path.atom[i]];
            if (y_[i] > y_[top])
                top = i;
        }
        double second = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (i != top)
                second = std::max(second, y_[i]);

        Dk_.resize(d);
        pd_.resize(dirs_);
        for (std::size_t k = 0; k < n; ++k) {
            const double ck = path.discount[k];
            const double others_max = k == top ? second : y_[top];
            const double w = ck * path.radius[k];
            const auto& theta = spectral.atom(path.atom[k]);
            for (std::size_t c = 0; c < d; ++c)
                Dk_[c] = D_[c] - w * theta[c];
            for (std::size_t q = 0; q < dirs_; ++q) {
                const auto p = pb_->set.direction(q);
                double dot = 0.0;
                for (std::size_t c = 0; c < d; ++c)
                    dot += p[c] * Dk_[c];
                pd_[q] = dot;
            }
            for (std::size_t j = 0; j < atoms_; ++j) {
                const double wj = spectral.weight(j);
                const double sj = scales[j];
                if (!(wj > 0.0) || !(sj > 0.0))
                    continue;
                const double unit = ck * sj;
                for (std::size_t ix = 0; ix < xs.size(); ++ix) {
                    const double x = xs[ix];
                    double threshold = std::numeric_limits<double>::infinity();
                    for (std::size_t q = 0; q < dirs_; ++q) {
                        if (pd_[q] > x) {
                            threshold = 0.0;
                            break;
                        }
                        const double s = proj_[q * atoms_ + j];
                        if (s > 0.0)
                            threshold = std::min(threshold, (x - pd_[q]) / (ck * s));
                    }
                    if (!std::isfinite(threshold))
                        continue;
                    const double lo = std::max(others_max / unit, threshold);
                    const double hi = x / unit;
                    const double upper = radial.survival(lo);
                    in_set[ix] += wj * upper;
                    if (lo < hi)
                        in_set_no_jump[ix] += wj * (upper - radial.survival(hi));
                }
            }
        }
    }

private:
    const EntranceProblem* pb_;
    const ProjectedTail* tail_;
    std::size_t atoms_ = 0;
    std::size_t dirs_ = 0;
    std::vector<double> proj_;
    std::vector<double> D_;
    std::vector<double> Dk_;
    std::vector<double> y_;
    std::vector<double> pd_;
};

struct GridMeans {
    std::vector<MeanAccumulator> acc;
    void merge(const GridMeans& o)
    {
        for (std::size_t i = 0; i < acc.size(); ++i)
            acc[i].merge(o.acc[i]);
    }
};

struct GridCounts {
    std::vector<std::size_t> hits;
    void merge(const GridCounts& o)
    {
        for (std::size_t i = 0; i < hits.size(); ++i)
            hits[i] += o.hits[i];
    }
};

inline AsymptoticValue matched_asymptotic(const EntranceProblem& pb, double x)
{
    return pb.infinite() ? infinite_rhs(pb.claims, pb.arrivals, pb.set, pb.r, x)
                         : finite_rhs(pb.claims, pb.arrivals, pb.set, pb.r, pb.T, x);
}

inline void finish(EntranceProblem const& pb, std::vector<EstimateReport>& reports)
{
    const auto remainder = remainder_of(pb);
    for (auto& rep : reports) {
        attach_asymptotic(rep, matched_asymptotic(pb, rep.x));
        rep.remainder_bound = remainder;
    }
}

} // namespace detail

/// Empirical frequency of {D in xA}.
inline std::vector<EstimateReport> crude_mc(const EntranceProblem& pb, std::span<const double> xs,
                                            const RunSettings& s)
{
    detail::require_problem(pb);
    detail::require_grid(xs);
    if (s.n_paths < 1000)
        throw std::invalid_argument("crude_mc: need at least 1000 paths");
    const std::size_t K = xs.size();
    const auto counts = run_blocked<detail::GridCounts>(
        s.n_paths, s.workers, [K] { return detail::GridCounts{std::vector<std::size_t>(K, 0)}; },
        [&](detail::GridCounts& acc, std::size_t begin, std::size_t end) {
            PathRecord rec;
            for (std::size_t path = begin; path < end; ++path) {
                auto streams = PathStreams::for_path(s.seed, path);
                if (pb.infinite())
                    simulate_D_infinite(pb.claims, pb.arrivals, pb.r, pb.truncation, pb.q1, pb.q2, pb.set, xs[0],
                                        streams, rec);
                else
                    simulate_D(pb.claims, pb.arrivals, pb.r, pb.T, pb.set, xs[0], streams, rec);
                for (std::size_t k = 0; k < K; ++k)
                    acc.hits[k] += rec.loss_functional > xs[k] ? 1 : 0;
            }
        });
    std::vector<EstimateReport> out;
    for (std::size_t k = 0; k < K; ++k)
        out.push_back(detail::binomial_report("crude", xs[k], counts.hits[k], s));
    detail::finish(pb, out);
    return out;
}

/// Rao-Blackwellized estimate of P(J_x >= 1): the average over paths of
/// 1 - prod_i (1 - P(X e^{-r tau_i} in xA)) given the arrival times.
inline std::vector<EstimateReport> conditional_mc(const EntranceProblem& pb, std::span<const double> xs,
                                                  const RunSettings& s)
{
    detail::require_problem(pb);
    detail::require_grid(xs);
    detail::require_independent(pb.claims, "conditional_mc");
    if (s.n_paths < 1000)
        throw std::invalid_argument("conditional_mc: need at least 1000 paths");
    const ProjectedTail tail(pb.claims, pb.set);
    const std::size_t K = xs.size();
    const auto means = run_blocked<detail::GridMeans>(
        s.n_paths, s.workers, [K] { return detail::GridMeans{std::vector<MeanAccumulator>(K)}; },
        [&](detail::GridMeans& acc, std::size_t begin, std::size_t end) {
            std::vector<detail::JumpLaw> law(K);
            for (std::size_t path = begin; path < end; ++path) {
                Rng rng(derive_seed(s.seed, path, 1));
                std::fill(law.begin(), law.end(), detail::JumpLaw{});
                ArrivalStream stream(pb.arrivals);
                const std::size_t limit = pb.infinite() ? pb.truncation : std::numeric_limits<std::size_t>::max();
                for (std::size_t i = 0; i < limit; ++i) {
                    const double tau = stream.next(rng);
                    if (!std::isfinite(tau) || (!pb.infinite() && tau > pb.T))
                        break;
                    const double growth = std::exp(pb.r * tau);
                    // Tail terms decrease in tau, so (remaining count) * p bounds what is left.
                    bool negligible = pb.infinite();
                    const double left = static_cast<double>(limit - i - 1);
                    for (std::size_t k = 0; k < K; ++k) {
                        const double p = tail.survival(xs[k] * growth);
                        law[k].absorb(p);
                        if (negligible && left * p > 1e-17 * law[k].at_least_one())
                            negligible = false;
                    }
                    if (negligible)
                        break;
                }
                for (std::size_t k = 0; k < K; ++k)
                    acc.acc[k].add(law[k].at_least_one());
            }
        });
    std::vector<EstimateReport> out;
    for (std::size_t k = 0; k < K; ++k)
        out.push_back(detail::mean_report("conditional", xs[k], means.acc[k], s));
    detail::finish(pb, out);
    return out;
}

/// Estimate of P(D in xA) obtained by integrating out the radius of the claim
/// with the largest projection, given everything else. Independent polar claims only.
inline std::vector<EstimateReport> max_conditional_mc(const EntranceProblem& pb, std::span<const double> xs,
                                                      const RunSettings& s)
{
    detail::require_problem(pb);
    detail::require_grid(xs);
    detail::require_independent(pb.claims, "max_conditional_mc");
    if (s.n_paths < 1000)
        throw std::invalid_argument("max_conditional_mc: need at least 1000 paths");
    const ProjectedTail tail(pb.claims, pb.set);
    const std::size_t K = xs.size();
    const auto means = run_blocked<detail::GridMeans>(
        s.n_paths, s.workers, [K] { return detail::GridMeans{std::vector<MeanAccumulator>(K)}; },
        [&](detail::GridMeans& acc, std::size_t begin, std::size_t end) {
            detail::MaxConditional kernel(pb, tail);
            detail::PolarPath path;
            std::vector<double> in_set(K), no_jump(K);
            for (std::size_t p = begin; p < end; ++p) {
                auto streams = PathStreams::for_path(s.seed, p);
                detail::draw_polar_path(pb, streams, path);
                kernel.evaluate(path, xs, in_set, no_jump);
                for (std::size_t k = 0; k < K; ++k)
                    acc.acc[k].add(in_set[k]);
            }
        });
    std::vector<EstimateReport> out;
    for (std::size_t k = 0; k < K; ++k)
        out.push_back(detail::mean_report("max_conditional", xs[k], means.acc[k], s));
    detail::finish(pb, out);
    return out;
}

struct DecompositionReport {
    double x = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    /// "conditional" when claims are independent, otherwise "crude".
    std::string method;
    Stat j_ge1;
    Stat j_ge2;
    Stat j_eq1;
    Stat d_in;
    Stat d_in_j0;
    Stat lambda_mc;
    /// Lambda_x evaluated by quadrature or closed form.
    AsymptoticValue lambda;
    Stat ratio_j_ge2;
    Stat ratio_d_in_j0;
    // Indicator versions from the same paths.
    Stat crude_j_ge1;
    Stat crude_j_ge2;
    Stat crude_j_eq1;
    Stat crude_d_in;
    Stat crude_d_in_j0;
    Stat crude_lambda;
    std::size_t crude_hits = 0;
    std::vector<std::string> warnings;
};

/// The three quantities of the big-jump decomposition along an x grid.
inline std::vector<DecompositionReport> decomposition_diag(const EntranceProblem& pb, std::span<const double> xs,
                                                           const RunSettings& s)
{
    detail::require_problem(pb);
    detail::require_grid(xs);
    if (s.n_paths < 10000)
        throw std::invalid_argument("decomposition_diag: need at least 1e4 paths");
    const bool rb = pb.claims.independent();
    const ProjectedTail tail(pb.claims, pb.set);
    const std::size_t K = xs.size();
    enum : std::size_t { kJ1, kJ2, kJeq1, kD, kD0, kLam, kCJ1, kCJ2, kCJeq1, kCD, kCD0, kCLam, kFields };

    const auto means = run_blocked<detail::GridMeans>(
        s.n_paths, s.workers, [K] { return detail::GridMeans{std::vector<MeanAccumulator>(K * kFields)}; },
        [&](detail::GridMeans& acc, std::size_t begin, std::size_t end) {
            detail::MaxConditional kernel(pb, tail);
            detail::PolarPath path;
            std::vector<double> in_set(K), no_jump(K), D(pb.claims.dim());
            for (std::size_t p = begin; p < end; ++p) {
                auto streams = PathStreams::for_path(s.seed, p);
                detail::draw_polar_path(pb, streams, path);
                const std::size_t n = path.taus.size();
                std::fill(D.begin(), D.end(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    const auto& theta = pb.claims.spectral.atom(path.atom[i]);
                    for (std::size_t c = 0; c < D.size(); ++c)
                        D[c] += path.discount[i] * path.radius[i] * theta[c];
                }
                const double xa_D = pb.set.functional_unchecked(D);
                if (rb)
                    kernel.evaluate(path, xs, in_set, no_jump);
                for (std::size_t k = 0; k < K; ++k) {
                    const double x = xs[k];
                    std::size_t jumps = 0;
                    detail::JumpLaw law;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double y = path.discount[i] * path.radius[i] * tail.atom_scales()[path.atom[i]];
                        jumps += y > x ? 1 : 0;
                        if (rb)
                            law.absorb(tail.survival(x / path.discount[i]));
                    }
                    const bool in = xa_D > x;
                    MeanAccumulator* a = &acc.acc[k * kFields];
                    a[kCJ1].add(jumps >= 1);
                    a[kCJ2].add(jumps >= 2);
                    a[kCJeq1].add(jumps == 1);
                    a[kCD].add(in);
                    a[kCD0].add(in && jumps == 0);
                    a[kCLam].add(static_cast<double>(jumps));
                    if (rb) {
                        a[kJ1].add(law.at_least_one());
                        a[kJ2].add(law.many);
                        a[kJeq1].add(law.one);
                        a[kD].add(in_set[k]);
                        a[kD0].add(no_jump[k]);
                        a[kLam].add(law.mean);
                    }
                }
            }
        });

    const auto stat = [](const MeanAccumulator& a) { return Stat{a.mean, a.stderr_of_mean()}; };
    std::vector<DecompositionReport> out;
    for (std::size_t k = 0; k < K; ++k) {
        const MeanAccumulator* a = &means.acc[k * kFields];
        DecompositionReport rep;
        rep.x = xs[k];
        rep.n_paths = s.n_paths;
        rep.seed = s.seed;
        rep.method = rb ? "conditional" : "crude";
        rep.crude_j_ge1 = stat(a[kCJ1]);
        rep.crude_j_ge2 = stat(a[kCJ2]);
        rep.crude_j_eq1 = stat(a[kCJeq1]);
        rep.crude_d_in = stat(a[kCD]);
        rep.crude_d_in_j0 = stat(a[kCD0]);
        rep.crude_lambda = stat(a[kCLam]);
        rep.crude_hits = static_cast<std::size_t>(std::llround(a[kCD].mean * a[kCD].n));
        if (rb) {
            rep.j_ge1 = stat(a[kJ1]);
            rep.j_ge2 = stat(a[kJ2]);
            rep.j_eq1 = stat(a[kJeq1]);
            rep.d_in = stat(a[kD]);
            rep.d_in_j0 = stat(a[kD0]);
            rep.lambda_mc = stat(a[kLam]);
        } else {
            rep.j_ge1 = rep.crude_j_ge1;
            rep.j_ge2 = rep.crude_j_ge2;
            rep.j_eq1 = rep.crude_j_eq1;
            rep.d_in = rep.crude_d_in;
            rep.d_in_j0 = rep.crude_d_in_j0;
            rep.lambda_mc = rep.crude_lambda;
            if (rep.crude_hits < 20)
                rep.warnings.push_back("fewer than 20 hits; interval unreliable");
        }
        rep.lambda = detail::matched_asymptotic(pb, xs[k]);
        if (rep.lambda.value > 0.0) {
            rep.ratio_j_ge2 = {rep.j_ge2.estimate / rep.lambda.value, rep.j_ge2.stderr_value / rep.lambda.value};
            rep.ratio_d_in_j0 = {rep.d_in_j0.estimate / rep.lambda.value,
                                 rep.d_in_j0.stderr_value / rep.lambda.value};
        }
        out.push_back(std::move(rep));
    }
    return out;
}

/// Cartesian grid {a, ..., b}^n with `points` values per axis.
inline std::vector<std::vector<double>> weight_grid(double a, double b, std::size_t points, std::size_t n)
{
    if (!(a > 0.0) || !(b >= a))
        throw std::invalid_argument("weight_grid: need 0 < a <= b");
    if (points == 0 || n == 0)
        throw std::invalid_argument("weight_grid: need at least one point and one weight");
    if (points == 1 && b != a)
        throw std::invalid_argument("weight_grid: a single point requires a == b");
    std::vector<double> axis(points);
    for (std::size_t i = 0; i < points; ++i)
        axis[i] = points == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1);
    std::vector<std::vector<double>> grid{{}};
    for (std::size_t dim = 0; dim < n; ++dim) {
        std::vector<std::vector<double>> next;
        for (const auto& g : grid)
            for (double v : axis) {
                auto h = g;
                h.push_back(v);
                next.push_back(std::move(h));
            }
        grid = std::move(next);
    }
    return grid;
}

struct Lemma31Row {
    std::vector<double> weights;
    double x = 0.0;
    Stat numerator;
    std::size_t hits = 0;
    double denominator = 0.0;
    Stat ratio;
    /// Sum in xA while every weighted summand stays outside xA.
    Stat mixed;
    Stat mixed_ratio;
};

struct Lemma31Table {
    std::size_t n = 0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    std::vector<Lemma31Row> rows;
    /// Per x: max over the weight grid of |ratio - 1|.
    std::vector<std::pair<double, double>> max_deviation;
    std::vector<std::string> warnings;
};

/// P(sum c_i Z_i in xA) / sum_i P(c_i Z_i in xA) for consecutive claims Z_1..Z_n
/// of one claim sequence; the denominator is exact.
inline Lemma31Table lemma31_ratio(const ClaimModel& claims, const RareSet& set, std::size_t n,
                                  const std::vector<std::vector<double>>& weights, std::span<const double> xs,
                                  const RunSettings& s)
{
    if (n != 2 && n != 3)
        throw std::invalid_argument("lemma31_ratio: n must be 2 or 3");
    if (claims.dim() != set.dim())
        throw std::invalid_argument("lemma31_ratio: claim dimension does not match the set");
    if (weights.empty())
        throw std::invalid_argument("lemma31_ratio: weight grid is empty");
    for (const auto& c : weights) {
        if (c.size() != n)
            throw std::invalid_argument("lemma31_ratio: every weight vector needs n entries");
        for (double v : c)
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::invalid_argument("lemma31_ratio: weights must be positive");
    }
    detail::require_grid(xs);
    if (s.n_paths < 1000)
        throw std::invalid_argument("lemma31_ratio: need at least 1000 paths");

    const std::size_t G = weights.size();
    const std::size_t K = xs.size();
    const std::size_t d = claims.dim();
    const ProjectedTail tail(claims, set);
    struct Acc {
        std::vector<std::size_t> sum_hits;
        std::vector<std::size_t> mixed_hits;
        void merge(const Acc& o)
        {
            for (std::size_t i = 0; i < sum_hits.size(); ++i) {
                sum_hits[i] += o.sum_hits[i];
                mixed_hits[i] += o.mixed_hits[i];
            }
        }
    };
    const auto acc = run_blocked<Acc>(
        s.n_paths, s.workers,
        [&] { return Acc{std::vector<std::size_t>(G * K, 0), std::vector<std::size_t>(G * K, 0)}; },
        [&](Acc& a, std::size_t begin, std::size_t end) {
            std::vector<PolarDraw> z(n);
            std::vector<double> sum(d);
            for (std::size_t p = begin; p < end; ++p) {
                Rng rng(derive_seed(s.seed, p, 2));
                ClaimSampler sampler(claims);
                for (auto& draw : z)
                    draw = sampler.next_polar(rng);
                for (std::size_t g = 0; g < G; ++g) {
                    const auto& c = weights[g];
                    std::fill(sum.begin(), sum.end(), 0.0);
                    double largest = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        const auto& theta = claims.spectral.atom(z[i].atom);
                        const double w = c[i] * z[i].radius;
                        for (std::size_t k = 0; k < d; ++k)
                            sum[k] += w * theta[k];
                        largest = std::max(largest, w * tail.atom_scales()[z[i].atom]);
                    }
                    const double xa = set.functional_unchecked(sum);
                    for (std::size_t k = 0; k < K; ++k) {
                        if (xa > xs[k]) {
                            ++a.sum_hits[g * K + k];
                            if (largest <= xs[k])
                                ++a.mixed_hits[g * K + k];
                        }
                    }
                }
            }
        });

    Lemma31Table table;
    table.n = n;
    table.n_paths = s.n_paths;
    table.seed = s.seed;
    const double N = static_cast<double>(s.n_paths);
    std::vector<double> worst(K, 0.0);
    bool rare = false;
    for (std::size_t g = 0; g < G; ++g) {
        for (std::size_t k = 0; k < K; ++k) {
            Lemma31Row row;
            row.weights = weights[g];
            row.x = xs[k];
            row.hits = acc.sum_hits[g * K + k];
            const double p = static_cast<double>(row.hits) / N;
            row.numerator = {p, std::sqrt(p * (1.0 - p) / N)};
            const double m = static_cast<double>(acc.mixed_hits[g * K + k]) / N;
            row.mixed = {m, std::sqrt(m * (1.0 - m) / N)};
            for (double c : weights[g])
                row.denominator += tail.survival(xs[k] / c);
            if (row.denominator > 0.0) {
                row.ratio = {p / row.denominator, row.numerator.stderr_value / row.denominator};
                row.mixed_ratio = {m / row.denominator, row.mixed.stderr_value / row.denominator};
                worst[k] = std::max(worst[k], std::abs(row.ratio.estimate - 1.0));
            }
            rare = rare || row.hits < 20;
            table.rows.push_back(std::move(row));
        }
    }
    for (std::size_t k = 0; k < K; ++k)
        table.max_deviation.emplace_back(xs[k], worst[k]);
    if (rare)
        table.warnings.push_back("fewer than 20 hits in some cells; intervals unreliable");
    return table;
}

struct RuinOptions {
    /// Rerun on the same seeds with half the grid step and compare.
    bool refinement_check = false;
};

/// Frequency of {U(t) in L for some checked t}, matched against the entrance
/// asymptotics of A = l - L.
inline std::vector<EstimateReport> ruin_mc(const RiskConfig& config, const ClaimModel& claims,
                                           const ArrivalModel& arrivals, std::span<const double> xs,
                                           const RunSettings& s, const RuinOptions& options = {})
{
    detail::require_grid(xs);
    if (s.n_paths < 1000)
        throw std::invalid_argument("ruin_mc: need at least 1000 paths");
    const std::size_t K = xs.size();
    const auto run = [&](const RiskConfig& cfg) {
        const SurplusSimulator sim(cfg, claims, arrivals);
        return run_blocked<detail::GridCounts>(
            s.n_paths, s.workers, [K] { return detail::GridCounts{std::vector<std::size_t>(K, 0)}; },
            [&](detail::GridCounts& acc, std::size_t begin, std::size_t end) {
                PathRecord rec;
                for (std::size_t p = begin; p < end; ++p) {
                    auto streams = PathStreams::for_path(s.seed, p);
                    sim.run(xs[0], streams, rec);
                    for (std::size_t k = 0; k < K; ++k)
                        acc.hits[k] += rec.loss_functional > xs[k] ? 1 : 0;
                }
            });
    };

    const SurplusSimulator probe(config, claims, arrivals);
    const RareSet& set = probe.mapped_set();
    const EntranceProblem pb{claims, arrivals, set, config.r, config.T, config.truncation, config.q1, config.q2};
    std::vector<EstimateReport> out;
    const auto base = run(config);
    for (std::size_t k = 0; k < K; ++k)
        out.push_back(detail::binomial_report("ruin", xs[k], base.hits[k], s));
    if (options.refinement_check) {
        RiskConfig fine = config;
        fine.grid_step = config.grid_step / 2.0;
        const auto refined = run(fine);
        for (std::size_t k = 0; k < K; ++k) {
            auto rep = detail::binomial_report("ruin_refined", xs[k], refined.hits[k], s);
            auto& coarse = out[k];
            if (std::abs(rep.estimate - coarse.estimate) > coarse.stderr_value)
                coarse.warnings.push_back("grid refinement moved the estimate by more than one standard error");
            out.push_back(std::move(rep));
        }
    }
    detail::finish(pb, out);
    return out;
}

} // namespace ruinsim
