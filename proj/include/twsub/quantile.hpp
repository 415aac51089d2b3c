#pragma once

#include "twsub/error.hpp"
#include "twsub/panel.hpp"
#include "twsub/subsample.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace twsub {

enum class IntervalSide { one_sided_lower, one_sided_upper, two_sided_equal_tail };

struct ConfidenceInterval {
    double lower = -std::numeric_limits<double>::infinity();
    double upper = std::numeric_limits<double>::infinity();
    double level = 0.95;
    IntervalSide side = IntervalSide::two_sided_equal_tail;

    [[nodiscard]] bool contains(double value) const noexcept {
        return lower <= value && value <= upper;
    }
};

/**
 * @brief Empirical distribution of the roots tau_bl * (theta_sub - theta_full).
 *
 * Roots are sorted ascending. cdf() is the right-continuous step function with
 * jumps of size 1/M; quantile() is its left-continuous inverse.
 */
class RootDistribution {
public:
    RootDistribution(std::vector<double> roots, double tau_full, double tau_sub, double center)
        : roots_(std::move(roots)), tau_full_(tau_full), tau_sub_(tau_sub), center_(center) {
        if (roots_.empty()) throw Error(ErrorCode::EmptyStatistics, "no subsample roots");
        std::sort(roots_.begin(), roots_.end());
    }

    [[nodiscard]] std::span<const double> roots() const noexcept { return roots_; }
    [[nodiscard]] std::size_t size() const noexcept { return roots_.size(); }
    [[nodiscard]] double tau_full() const noexcept { return tau_full_; }
    [[nodiscard]] double tau_sub() const noexcept { return tau_sub_; }
    [[nodiscard]] double center() const noexcept { return center_; }

    /// L(x) = #{roots <= x} / M.
    [[nodiscard]] double cdf(double x) const {
        const auto count = std::upper_bound(roots_.begin(), roots_.end(), x) - roots_.begin();
        return static_cast<double>(count) / static_cast<double>(roots_.size());
    }

    /// inf{x : L(x) >= p}, i.e. the ceil(p M)-th smallest root.
    [[nodiscard]] double quantile(double p) const {
        if (!(p > 0.0 && p < 1.0)) {
            throw Error(ErrorCode::InvalidProbability, "p=" + std::to_string(p));
        }
        const auto m = static_cast<double>(roots_.size());
        // Decimal levels such as 0.95 are not exact in binary, so 0.95 * 20 comes out as
        // 19.000000000000004. Products within a few ulps of an integer count as that integer.
        const double x = p * m;
        const double nearest = std::nearbyint(x);
        const double k_real = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
        const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(k_real), 1, roots_.size());
        return roots_[k - 1];
    }

private:
    std::vector<double> roots_;
    double tau_full_;
    double tau_sub_;
    double center_;
};

/// Roots for one coordinate; tau_bl and tau_NT both come from the plan's rate.
[[nodiscard]] inline RootDistribution build_root_distribution(const SubsampleStatistics& stats,
                                                              std::span<const double> full_estimate,
                                                              std::size_t coordinate,
                                                              std::size_t n_units,
                                                              std::size_t n_periods) {
    if (stats.empty()) throw Error(ErrorCode::EmptyStatistics, "no subsample statistics");
    if (coordinate >= stats.dim() || coordinate >= full_estimate.size()) {
        throw Error(ErrorCode::DimensionMismatch, "coordinate " + std::to_string(coordinate));
    }
    const double tau_sub = stats.plan().tau_sub();
    const double center = full_estimate[coordinate];
    std::vector<double> roots(stats.size());
    for (std::size_t m = 0; m < roots.size(); ++m) {
        roots[m] = tau_sub * (stats.row(m)[coordinate] - center);
    }
    return {std::move(roots), stats.plan().rate.tau(n_units, n_periods), tau_sub, center};
}

[[nodiscard]] inline double subsample_quantile(const RootDistribution& dist, double p) {
    return dist.quantile(p);
}

/**
 * @brief Subsampling confidence interval with reversed endpoints.
 *
 * one_sided_lower: (theta - c(1-a)/tau, +inf); one_sided_upper: (-inf, theta - c(a)/tau);
 * two-sided: [theta - c(1-a/2)/tau, theta - c(a/2)/tau].
 */
[[nodiscard]] inline ConfidenceInterval quantile_ci(const RootDistribution& dist, double level,
                                                    IntervalSide side) {
    if (!(level > 0.0 && level < 1.0)) {
        throw Error(ErrorCode::InvalidLevel, "level=" + std::to_string(level));
    }
    const double alpha = 1.0 - level;
    const double theta = dist.center();
    const double tau = dist.tau_full();
    ConfidenceInterval ci;
    ci.level = level;
    ci.side = side;
    switch (side) {
        case IntervalSide::one_sided_lower:
            ci.lower = theta - dist.quantile(level) / tau;
            break;
        case IntervalSide::one_sided_upper:
            ci.upper = theta - dist.quantile(alpha) / tau;
            break;
        case IntervalSide::two_sided_equal_tail:
            ci.lower = theta - dist.quantile(1.0 - alpha / 2.0) / tau;
            ci.upper = theta - dist.quantile(alpha / 2.0) / tau;
            break;
    }
    return ci;
}

}  // namespace twsub
