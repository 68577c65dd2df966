#pragma once

// Polar claim vectors X = R * Theta: a heavy-tailed radial law times a
// discrete spectral measure on the non-negative part of the l1 sphere.
// Temporal dependence acts on the radial sequence only, through a
// stationary Gaussian AR(1) copula.

#include "rare_sets.hpp"
#include "rng.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ruinsim {

inline double normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

enum class RadialKind { pareto, weibull, lognormal };

struct RadialLaw {
    RadialKind kind = RadialKind::pareto;
    double alpha = 2.0; // pareto, unit scale
    double shape = 0.5; // weibull k in (0, 1)
    double scale = 1.0; // weibull scale
    double mu = 0.0;    // lognormal log-mean
    double sigma = 1.0; // lognormal log-sd

    static RadialLaw pareto(double alpha)
    {
        RadialLaw law;
        law.kind = RadialKind::pareto;
        law.alpha = alpha;
        law.validate();
        return law;
    }
    static RadialLaw weibull(double shape, double scale)
    {
        RadialLaw law;
        law.kind = RadialKind::weibull;
        law.shape = shape;
        law.scale = scale;
        law.validate();
        return law;
    }
    static RadialLaw lognormal(double mu, double sigma)
    {
        RadialLaw law;
        law.kind = RadialKind::lognormal;
        law.mu = mu;
        law.sigma = sigma;
        law.validate();
        return law;
    }

    void validate() const
    {
        switch (kind) {
        case RadialKind::pareto:
            if (!(alpha > 0.0) || !std::isfinite(alpha))
                throw std::invalid_argument("pareto radial law: alpha must be positive");
            break;
        case RadialKind::weibull:
            if (!(shape > 0.0 && shape < 1.0))
                throw std::invalid_argument("weibull radial law: shape must lie in (0, 1)");
            if (!(scale > 0.0))
                throw std::invalid_argument("weibull radial law: scale must be positive");
            break;
        case RadialKind::lognormal:
            if (!(sigma > 0.0) || !std::isfinite(mu))
                throw std::invalid_argument("lognormal radial law: sigma must be positive");
            break;
        }
    }

    /// P(R > r).
    double survival(double r) const noexcept
    {
        switch (kind) {
        case RadialKind::pareto:
            return r <= 1.0 ? 1.0 : std::pow(r, -alpha);
        case RadialKind::weibull:
            return r <= 0.0 ? 1.0 : std::exp(-std::pow(r / scale, shape));
        case RadialKind::lognormal:
            return r <= 0.0 ? 1.0
                            : 0.5 * std::erfc((std::log(r) - mu) / (sigma * std::numbers::sqrt2));
        }
        return 0.0;
    }

    /// R as a function of a standard normal score g (increasing in g).
    double from_normal_score(double g) const noexcept
    {
        switch (kind) {
        case RadialKind::pareto:
            return from_survival_uniform(normal_cdf(-g));
        case RadialKind::weibull:
            return from_survival_uniform(normal_cdf(-g));
        case RadialKind::lognormal:
            return std::exp(mu + sigma * g);
        }
        return 0.0;
    }

    /// Inverse of the survival function at v in (0, 1].
    double from_survival_uniform(double v) const noexcept
    {
        switch (kind) {
        case RadialKind::pareto:
            return std::pow(v, -1.0 / alpha);
        case RadialKind::weibull:
            return scale * std::pow(-std::log(v), 1.0 / shape);
        case RadialKind::lognormal:
            break;
        }
        return std::numeric_limits<double>::quiet_NaN();
    }

    double sample(Rng& rng) const noexcept
    {
        if (kind == RadialKind::lognormal)
            return std::exp(mu + sigma * rng.normal());
        return from_survival_uniform(rng.uniform());
    }

    /// E[R], infinite for pareto with alpha <= 1.
    double mean() const noexcept
    {
        switch (kind) {
        case RadialKind::pareto:
            return alpha > 1.0 ? alpha / (alpha - 1.0) : std::numeric_limits<double>::infinity();
        case RadialKind::weibull:
            return scale * std::tgamma(1.0 + 1.0 / shape);
        case RadialKind::lognormal:
            return std::exp(mu + 0.5 * sigma * sigma);
        }
        return 0.0;
    }

    std::string name() const
    {
        switch (kind) {
        case RadialKind::pareto: return "pareto";
        case RadialKind::weibull: return "weibull";
        case RadialKind::lognormal: return "lognormal";
        }
        return "?";
    }
};

class SpectralMeasure {
public:
    SpectralMeasure(std::vector<std::vector<double>> atoms, std::vector<double> weights)
    {
        if (atoms.empty() || atoms.size() != weights.size())
            throw std::invalid_argument("SpectralMeasure: need one weight per atom");
        dim_ = atoms.front().size();
        if (dim_ == 0)
            throw std::invalid_argument("SpectralMeasure: atoms must have positive dimension");
        double wsum = 0.0;
        for (std::size_t j = 0; j < atoms.size(); ++j) {
            const auto& a = atoms[j];
            if (a.size() != dim_)
                throw std::invalid_argument("SpectralMeasure: atoms must share one dimension");
            double norm = 0.0;
            for (double v : a) {
                if (!(v >= 0.0))
                    throw std::invalid_argument("SpectralMeasure: atom entries must be >= 0");
                norm += v;
            }
            if (std::abs(norm - 1.0) > 1e-12)
                throw std::invalid_argument("SpectralMeasure: atoms must have unit l1 norm");
            if (!(weights[j] >= 0.0))
                throw std::invalid_argument("SpectralMeasure: weights must be >= 0");
            wsum += weights[j];
        }
        if (std::abs(wsum - 1.0) > 1e-12)
            throw std::invalid_argument("SpectralMeasure: weights must sum to 1");
        atoms_ = std::move(atoms);
        weights_ = std::move(weights);
        cumulative_.resize(weights_.size());
        double acc = 0.0;
        for (std::size_t j = 0; j < weights_.size(); ++j) {
            acc += weights_[j];
            cumulative_[j] = acc;
        }
        cumulative_.back() = 1.0;
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return atoms_.size(); }
    const std::vector<double>& atom(std::size_t j) const noexcept { return atoms_[j]; }
    double weight(std::size_t j) const noexcept { return weights_[j]; }
    const std::vector<std::vector<double>>& atoms() const noexcept { return atoms_; }
    const std::vector<double>& weights() const noexcept { return weights_; }

    std::size_t sample_index(Rng& rng) const noexcept
    {
        if (atoms_.size() == 1)
            return 0;
        const double u = rng.uniform();
        std::size_t j = 0;
        while (j + 1 < cumulative_.size() && u >= cumulative_[j])
            ++j;
        return j;
    }

private:
    std::vector<std::vector<double>> atoms_;
    std::vector<double> weights_;
    std::vector<double> cumulative_;
    std::size_t dim_ = 0;
};

enum class DependenceKind { iid, ar1_copula };

struct Dependence {
    DependenceKind kind = DependenceKind::iid;
    double rho = 0.0;

    static Dependence iid() { return {}; }
    static Dependence ar1(double rho)
    {
        if (!(rho >= 0.0 && rho < 1.0))
            throw std::invalid_argument("ar1 copula: rho must lie in [0, 1)");
        return {DependenceKind::ar1_copula, rho};
    }
};

struct ClaimModel {
    RadialLaw radial;
    SpectralMeasure spectral;
    Dependence dependence;

    ClaimModel(RadialLaw r, SpectralMeasure s, Dependence d = Dependence::iid())
        : radial(r), spectral(std::move(s)), dependence(d)
    {
        radial.validate();
        if (dependence.kind == DependenceKind::ar1_copula &&
            !(dependence.rho >= 0.0 && dependence.rho < 1.0))
            throw std::invalid_argument("ClaimModel: ar1 rho must lie in [0, 1)");
    }

    std::size_t dim() const noexcept { return spectral.dim(); }
    bool independent() const noexcept { return dependence.kind == DependenceKind::iid; }
};

struct PolarDraw {
    double radius;
    std::size_t atom;
};

/// Sequential sampler for one claim sequence; holds the copula state.
class ClaimSampler {
public:
    explicit ClaimSampler(const ClaimModel& model) : model_(&model) {}

    void restart() noexcept { started_ = false; }

    PolarDraw next_polar(Rng& rng) noexcept
    {
        double radius;
        if (model_->dependence.kind == DependenceKind::iid) {
            radius = model_->radial.sample(rng);
        } else {
            const double rho = model_->dependence.rho;
            const double eps = rng.normal();
            latent_ = started_ ? rho * latent_ + std::sqrt(1.0 - rho * rho) * eps : eps;
            started_ = true;
            radius = model_->radial.from_normal_score(latent_);
        }
        return {radius, model_->spectral.sample_index(rng)};
    }

    void next(Rng& rng, std::span<double> out) noexcept
    {
        const auto draw = next_polar(rng);
        const auto& theta = model_->spectral.atom(draw.atom);
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = draw.radius * theta[i];
    }

private:
    const ClaimModel* model_;
    double latent_ = 0.0;
    bool started_ = false;
};

/// n claim vectors from one sequence.
inline std::vector<std::vector<double>> sample_claims(const ClaimModel& model, std::size_t n,
                                                      Rng& rng)
{
    if (n < 1)
        throw std::invalid_argument("sample_claims: n must be >= 1");
    ClaimSampler sampler(model);
    std::vector<std::vector<double>> out(n, std::vector<double>(model.dim()));
    for (auto& x : out)
        sampler.next(rng, x);
    return out;
}

/// Law of X_A for a polar model: a mixture of scaled copies of the radial law,
/// P(X_A > x) = sum_j w_j P(R > x / (theta_j)_A).
class ProjectedTail {
public:
    ProjectedTail(const ClaimModel& model, const RareSet& set) : radial_(model.radial)
    {
        if (set.dim() != model.dim())
            throw std::invalid_argument("ProjectedTail: set and claim dimensions differ");
        for (std::size_t j = 0; j < model.spectral.size(); ++j) {
            const double s = set.functional_unchecked(model.spectral.atom(j));
            scales_.push_back(s);
            if (s > 0.0 && model.spectral.weight(j) > 0.0) {
                weights_.push_back(model.spectral.weight(j));
                active_scales_.push_back(s);
                max_scale_ = std::max(max_scale_, s);
            }
        }
    }

    /// No atom reaches the set; every tail is zero.
    bool unreachable() const noexcept { return active_scales_.empty(); }

    /// (theta_j)_A for every atom, including unreachable ones.
    const std::vector<double>& atom_scales() const noexcept { return scales_; }

    double max_scale() const noexcept { return max_scale_; }

    const RadialLaw& radial() const noexcept { return radial_; }

    double survival(double x) const noexcept
    {
        double total = 0.0;
        for (std::size_t j = 0; j < weights_.size(); ++j)
            total += weights_[j] * radial_.survival(x / active_scales_[j]);
        return total;
    }

    /// Smallest x above which a pareto tail is exactly mu(A) x^-alpha.
    double pure_power_threshold() const noexcept { return max_scale_; }

    /// sum_j w_j (theta_j)_A^alpha.
    double limit_mass() const
    {
        if (radial_.kind != RadialKind::pareto)
            throw std::invalid_argument("mu_of_set: limit measure requires a pareto radial law");
        double total = 0.0;
        for (std::size_t j = 0; j < weights_.size(); ++j)
            total += weights_[j] * std::pow(active_scales_[j], radial_.alpha);
        return total;
    }

    /// Points where the integrand x -> survival(x) changes analytic form.
    const std::vector<double>& kink_points() const noexcept { return active_scales_; }

private:
    RadialLaw radial_;
    std::vector<double> weights_;
    std::vector<double> active_scales_;
    std::vector<double> scales_;
    double max_scale_ = 0.0;
};

struct TailValue {
    double value = 0.0;
    bool unreachable = false;
};

inline TailValue tail_FA(const ClaimModel& model, const RareSet& set, double x)
{
    if (!(x > 0.0))
        throw std::invalid_argument("tail_FA: x must be positive");
    ProjectedTail tail(model, set);
    return {tail.survival(x), tail.unreachable()};
}

inline double mu_of_set(const ClaimModel& model, const RareSet& set)
{
    return ProjectedTail(model, set).limit_mass();
}

struct MatuszewskaIndices {
    double lower = 0.0;
    double upper = 0.0;
    bool lower_unbounded = false;
    bool upper_unbounded = false;
};

inline MatuszewskaIndices matuszewska_bounds(const ClaimModel& model)
{
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (model.radial.kind == RadialKind::pareto)
        return {model.radial.alpha, model.radial.alpha, false, false};
    // Rapidly varying tails: the ratio of tails at vx and x vanishes for v > 1.
    return {inf, inf, true, true};
}

} // namespace ruinsim
