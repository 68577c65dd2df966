#pragma once

// Rare sets represented as A = { z : max_p p.z > 1 } over a finite set of
// non-negative directions, together with the two standard ruin sets and the
// mapping that turns ruin of the surplus into entrance of the net loss.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ruinsim {

class RareSet {
public:
    /// Directions are stored as given; the set is normalized at level 1.
    RareSet(std::vector<std::vector<double>> directions, std::string label = "polyhedral")
        : label_(std::move(label))
    {
        if (directions.empty())
            throw std::invalid_argument("RareSet: at least one direction is required");
        dim_ = directions.front().size();
        if (dim_ == 0)
            throw std::invalid_argument("RareSet: directions must have positive dimension");
        flat_.reserve(dim_ * directions.size());
        for (const auto& p : directions) {
            if (p.size() != dim_)
                throw std::invalid_argument("RareSet: all directions must share one dimension");
            bool positive = false;
            for (double v : p) {
                if (!(v >= 0.0) || !std::isfinite(v))
                    throw std::invalid_argument("RareSet: direction entries must be finite and >= 0");
                positive = positive || v > 0.0;
            }
            if (!positive)
                throw std::invalid_argument("RareSet: direction must have a positive entry");
            flat_.insert(flat_.end(), p.begin(), p.end());
        }
        count_ = directions.size();
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return count_; }
    const std::string& label() const noexcept { return label_; }

    std::span<const double> direction(std::size_t k) const noexcept
    {
        return {flat_.data() + k * dim_, dim_};
    }

    std::vector<std::vector<double>> directions() const
    {
        std::vector<std::vector<double>> out;
        for (std::size_t k = 0; k < count_; ++k) {
            auto p = direction(k);
            out.emplace_back(p.begin(), p.end());
        }
        return out;
    }

    /// X_A = max over directions of p.z. Unchecked; callers guarantee the dimension.
    double functional_unchecked(std::span<const double> z) const noexcept
    {
        double best = 0.0;
        const double* p = flat_.data();
        for (std::size_t k = 0; k < count_; ++k, p += dim_) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim_; ++i)
                dot += p[i] * z[i];
            best = std::max(best, dot);
        }
        return best;
    }

    double functional(std::span<const double> z) const
    {
        if (z.size() != dim_)
            throw std::invalid_argument("functional_XA: dimension mismatch");
        return functional_unchecked(z);
    }

    /// True iff z lies in scale * A (strict: A is open).
    bool contains(std::span<const double> z, double scale) const
    {
        if (!(scale > 0.0))
            throw std::invalid_argument("contains: scale must be positive");
        return functional(z) > scale;
    }

private:
    std::vector<double> flat_;
    std::size_t dim_ = 0;
    std::size_t count_ = 0;
    std::string label_;
};

namespace detail {

inline void require_probability_vector(std::span<const double> l, const char* what,
                                       bool strictly_positive)
{
    if (l.empty())
        throw std::invalid_argument(std::string(what) + ": empty weight vector");
    double sum = 0.0;
    for (double v : l) {
        if (!std::isfinite(v) || v < 0.0 || (strictly_positive && v <= 0.0))
            throw std::invalid_argument(std::string(what) +
                                        (strictly_positive ? ": weights must be > 0"
                                                           : ": weights must be >= 0"));
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument(std::string(what) + ": weights must sum to 1");
}

} // namespace detail

/// A1 = { z : sum_i l_i z_i > c }.
inline RareSet make_sum_set(std::span<const double> l, double c)
{
    detail::require_probability_vector(l, "make_sum_set", false);
    if (!(c > 0.0) || !std::isfinite(c))
        throw std::invalid_argument("make_sum_set: c must be positive");
    std::vector<double> p(l.begin(), l.end());
    for (double& v : p)
        v /= c;
    return RareSet({std::move(p)}, "sum");
}

/// A2 = { z : z_i > c_i for some i }.
inline RareSet make_orthant_set(std::span<const double> c)
{
    if (c.empty())
        throw std::invalid_argument("make_orthant_set: empty threshold vector");
    std::vector<std::vector<double>> dirs;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (!(c[i] > 0.0) || !std::isfinite(c[i]))
            throw std::invalid_argument("make_orthant_set: thresholds must be positive");
        std::vector<double> e(c.size(), 0.0);
        e[i] = 1.0 / c[i];
        dirs.push_back(std::move(e));
    }
    return RareSet(std::move(dirs), "orthant");
}

inline double functional_XA(const RareSet& set, std::span<const double> x)
{
    return set.functional(x);
}

inline bool contains(const RareSet& set, std::span<const double> z, double scale)
{
    return set.contains(z, scale);
}

enum class RuinKind {
    sum_negative, // L1
    any_negative  // L2
};

struct RuinSet {
    RuinKind kind;
    std::size_t dim;

    RuinSet(RuinKind k, std::size_t d) : kind(k), dim(d)
    {
        if (d == 0)
            throw std::invalid_argument("RuinSet: dimension must be positive");
    }

    bool contains(std::span<const double> u) const
    {
        if (u.size() != dim)
            throw std::invalid_argument("RuinSet: dimension mismatch");
        if (kind == RuinKind::sum_negative)
            return std::accumulate(u.begin(), u.end(), 0.0) < 0.0;
        return std::any_of(u.begin(), u.end(), [](double v) { return v < 0.0; });
    }
};

/// A = l - L at unit capital: U in L at capital x iff (x l - U) in x A.
inline RareSet ruin_to_rare(const RuinSet& ruin, std::span<const double> l)
{
    if (l.size() != ruin.dim)
        throw std::invalid_argument("ruin_to_rare: allocation dimension mismatch");
    detail::require_probability_vector(l, "ruin_to_rare", true);
    if (ruin.kind == RuinKind::sum_negative) {
        // sum_i (x l_i - loss_i) < 0  <=>  sum_i loss_i > x
        return RareSet({std::vector<double>(ruin.dim, 1.0)}, "sum");
    }
    return make_orthant_set(l);
}

} // namespace ruinsim
