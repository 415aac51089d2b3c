#pragma once

#include "twsub/error.hpp"
#include "twsub/linalg.hpp"
#include "twsub/quantile.hpp"
#include "twsub/subsample.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

namespace twsub {

struct SmallSizes {
    std::size_t b = 1;
    std::size_t l = 1;
};

/**
 * @brief Subsampling variance estimate of lim Var(tau_NT * theta_NT).
 *
 * value is d x d. Uncorrected estimates are symmetric PSD; bias-corrected ones
 * can be indefinite and carry corrected = true.
 */
struct VarianceEstimate {
    Matrix value;
    SubsamplePlan plan;
    bool corrected = false;
    std::optional<SmallSizes> small_plan;

    [[nodiscard]] double scalar(std::size_t coord = 0) const {
        const auto j = static_cast<Eigen::Index>(coord);
        return value(j, j);
    }
};

/// (floor(sqrt(b)), floor(sqrt(l))), each at least 1.
[[nodiscard]] inline SmallSizes default_small_sizes(std::size_t b, std::size_t l) {
    auto isqrt = [](std::size_t x) {
        auto r = static_cast<std::size_t>(std::sqrt(static_cast<double>(x)));
        while (r * r > x) --r;
        while ((r + 1) * (r + 1) <= x) ++r;
        return std::max<std::size_t>(r, 1);
    };
    return {isqrt(b), isqrt(l)};
}

/// tau_bl^2 / M * sum (theta_sub - theta_bar)(theta_sub - theta_bar)'.
[[nodiscard]] inline VarianceEstimate sigma_hat(const SubsampleStatistics& stats) {
    if (stats.empty()) throw Error(ErrorCode::EmptyStatistics, "no subsample statistics");
    const auto d = static_cast<Eigen::Index>(stats.dim());
    const auto m = static_cast<double>(stats.size());
    Vector mean = Vector::Zero(d);
    for (std::size_t r = 0; r < stats.size(); ++r) {
        mean += Eigen::Map<const Vector>(stats.row(r).data(), d);
    }
    mean /= m;
    Matrix acc = Matrix::Zero(d, d);
    for (std::size_t r = 0; r < stats.size(); ++r) {
        const Vector dev = Eigen::Map<const Vector>(stats.row(r).data(), d) - mean;
        acc.noalias() += dev * dev.transpose();
    }
    const double tau = stats.plan().tau_sub();
    Matrix value = acc;
    value *= tau * tau / m;
    return {std::move(value), stats.plan(), false, std::nullopt};
}

/// Bias correction factor D = l_small / (l - l_small).
[[nodiscard]] inline double correction_factor(std::size_t l, std::size_t l_small) {
    if (l_small >= l) {
        throw Error(ErrorCode::DegenerateCorrection,
                    "l_small=" + std::to_string(l_small) + " must be below l=" + std::to_string(l));
    }
    return static_cast<double>(l_small) / static_cast<double>(l - l_small);
}

/// sigma - D * (sigma_small - sigma), entrywise.
[[nodiscard]] inline VarianceEstimate bias_correct(const VarianceEstimate& full,
                                                   const VarianceEstimate& small) {
    const double d = correction_factor(full.plan.l, small.plan.l);
    if (full.value.rows() != small.value.rows()) {
        throw Error(ErrorCode::DimensionMismatch, "variance dimensions differ");
    }
    VarianceEstimate out = full;
    out.value = full.value - d * (small.value - full.value);
    out.corrected = true;
    out.small_plan = SmallSizes{small.plan.b, small.plan.l};
    return out;
}

[[nodiscard]] inline VarianceEstimate sigma_hat_bc(const SubsampleStatistics& stats,
                                                   const SubsampleStatistics& small_stats) {
    return bias_correct(sigma_hat(stats), sigma_hat(small_stats));
}

[[nodiscard]] inline double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

struct NormalInterval {
    ConfidenceInterval ci;
    bool clipped = false;
};

/**
 * @brief theta +/- z_{1-a/2} * sqrt(variance) / tau_full.
 *
 * A negative variance (possible after bias correction) is clipped to zero and
 * flagged, or raises NegativeVariance when allow_clip is false.
 */
[[nodiscard]] inline NormalInterval normal_ci(double estimate, double variance, double tau_full,
                                              double level, bool allow_clip = true) {
    if (!(level > 0.0 && level < 1.0)) {
        throw Error(ErrorCode::InvalidLevel, "level=" + std::to_string(level));
    }
    NormalInterval out;
    if (variance < 0.0) {
        if (!allow_clip) {
            throw Error(ErrorCode::NegativeVariance, "variance=" + std::to_string(variance));
        }
        variance = 0.0;
        out.clipped = true;
    }
    const double half = normal_quantile(1.0 - (1.0 - level) / 2.0) * std::sqrt(variance) / tau_full;
    out.ci = {estimate - half, estimate + half, level, IntervalSide::two_sided_equal_tail};
    return out;
}

[[nodiscard]] inline NormalInterval normal_ci(double estimate, const VarianceEstimate& variance,
                                              double tau_full, double level,
                                              std::size_t coord = 0, bool allow_clip = true) {
    return normal_ci(estimate, variance.scalar(coord), tau_full, level, allow_clip);
}

}  // namespace twsub
