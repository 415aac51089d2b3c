#pragma once

#include "twsub/error.hpp"
#include "twsub/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

namespace twsub {

/// Estimated time-effect autocovariances R_b(0..max_lag); R_b(-k) = R_b(k).
struct AutocovSeries {
    std::vector<double> values;
    std::size_t n_periods = 0;
    std::size_t n_units = 0;

    [[nodiscard]] std::size_t max_lag() const noexcept { return values.size() - 1; }
    [[nodiscard]] double at(long k) const {
        const auto lag = static_cast<std::size_t>(k < 0 ? -k : k);
        return lag < values.size() ? values[lag] : 0.0;
    }
};

/**
 * @brief Cross-unit autocovariance estimator of the time component.
 *
 *   R(k) = 1 / (N (N-1) T) * sum_{n != m} sum_{t=1}^{T-k} X_nt X_{m,t+k}
 *
 * computed through sum_{n != m} X_nt X_{m,t+k} = S_t S_{t+k} - sum_n X_nt X_{n,t+k}
 * with S_t the cross-sectional sum. Dividing by T rather than T - k damps the
 * noisy long lags. The coordinate is centered at its grand mean first unless
 * center is false.
 */
[[nodiscard]] inline AutocovSeries autocov_hat(const PanelData& panel, std::size_t max_lag,
                                               std::size_t coordinate = 0, bool center = true) {
    const std::size_t n = panel.n_units();
    const std::size_t t_len = panel.n_periods();
    if (n < 2) throw Error(ErrorCode::SingleUnit, "autocovariance needs N >= 2");
    if (max_lag >= t_len) {
        throw Error(ErrorCode::InvalidWindowLength,
                    "max_lag=" + std::to_string(max_lag) + " with T=" + std::to_string(t_len));
    }
    if (coordinate >= panel.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "coordinate " + std::to_string(coordinate));
    }

    std::vector<double> x(n * t_len);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t t = 0; t < t_len; ++t) x[u * t_len + t] = panel.at(u, t, coordinate);
    }
    if (center) {
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(x.size());
        for (double& v : x) v -= mean;
    }
    std::vector<double> cross_sum(t_len, 0.0);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t t = 0; t < t_len; ++t) cross_sum[t] += x[u * t_len + t];
    }

    AutocovSeries out;
    out.n_periods = t_len;
    out.n_units = n;
    out.values.assign(max_lag + 1, 0.0);
    const double scale =
        1.0 / (static_cast<double>(n) * static_cast<double>(n - 1) * static_cast<double>(t_len));
    for (std::size_t k = 0; k <= max_lag; ++k) {
        double all_pairs = 0.0;
        for (std::size_t t = 0; t + k < t_len; ++t) all_pairs += cross_sum[t] * cross_sum[t + k];
        double same_unit = 0.0;
        for (std::size_t u = 0; u < n; ++u) {
            const double* row = x.data() + u * t_len;
            for (std::size_t t = 0; t + k < t_len; ++t) same_unit += row[t] * row[t + k];
        }
        out.values[k] = (all_pairs - same_unit) * scale;
    }
    return out;
}

enum class LagWindow { bartlett, tukey_hanning, split_cosine };

[[nodiscard]] inline double window_eval(LagWindow kind, double x) {
    const double ax = std::abs(x);
    switch (kind) {
        case LagWindow::bartlett:
            return std::max(0.0, 1.0 - ax);
        case LagWindow::tukey_hanning:
            return ax <= 1.0 ? (1.0 + std::cos(std::numbers::pi * ax)) / 2.0 : 0.0;
        case LagWindow::split_cosine:
            // Flat top on [0, 4/5), cosine taper down to 0 at |x| = 1.
            if (ax < 0.8) return 1.0;
            if (ax <= 1.0) return (1.0 + std::cos(std::numbers::pi * (5.0 * ax - 4.0))) / 2.0;
            return 0.0;
    }
    return 0.0;
}

struct SizeSelection {
    std::size_t l_opt = 1;
    std::size_t l = 1;
    std::size_t b = 1;
    double w_opt = 0.0;
    std::vector<double> w_trace;  ///< w_0 .. w_L
    bool floor_applied = false;
    bool degenerate = false;
    std::size_t coordinate = 0;
};

inline constexpr std::size_t kDefaultIterations = 20;
inline constexpr std::size_t kMinIterations = 4;
inline constexpr double kDegenerateRatio = 1e-12;

/**
 * @brief Iterative plug-in choice of the window length l_opt.
 *
 * Starting from w_0 = 1/T, each global step re-estimates the bandwidth from the
 * split-cosine-weighted second moment of the autocovariances; the final step
 * combines a Tukey-Hanning estimate of sum R(k) with a split-cosine estimate
 * of sum |k| R(k). l_opt is the nearest integer (ties to even) to 1/w_opt.
 * A vanishing denominator (white-noise time effect) yields l_opt = 1 with the
 * degenerate flag set.
 */
[[nodiscard]] inline SizeSelection buhlmann_l_opt(const AutocovSeries& autocov,
                                                  std::size_t n_iterations = kDefaultIterations) {
    if (n_iterations < kMinIterations) {
        throw Error(ErrorCode::InvalidIterations,
                    "need at least 4 iterations, got " + std::to_string(n_iterations));
    }
    const auto t_len = static_cast<double>(autocov.n_periods);
    const std::size_t max_lag = autocov.max_lag();
    const double stretch = std::pow(t_len, 4.0 / 21.0);
    const double t_cbrt = std::cbrt(t_len);
    const auto& r = autocov.values;

    SizeSelection out;
    auto degenerate = [&out] {
        out.degenerate = true;
        out.l_opt = 1;
        out.w_opt = 1.0;
        return out;
    };

    double r2_sum = r[0] * r[0];
    for (std::size_t k = 1; k <= max_lag; ++k) r2_sum += 2.0 * r[k] * r[k];

    double w = 1.0 / t_len;
    out.w_trace.push_back(w);
    for (std::size_t i = 1; i <= n_iterations; ++i) {
        double weighted = 0.0;
        for (std::size_t k = 1; k <= max_lag; ++k) {
            const double kk = static_cast<double>(k);
            const double sc = window_eval(LagWindow::split_cosine, kk * w * stretch);
            weighted += 2.0 * sc * sc * kk * kk * r[k] * r[k];
        }
        const double den = 6.0 * weighted;
        if (!(r2_sum > 0.0) || den <= kDegenerateRatio * r2_sum) return degenerate();
        w = std::cbrt(r2_sum / den) / t_cbrt;
        out.w_trace.push_back(w);
    }

    double level = r[0];
    double slope = 0.0;
    for (std::size_t k = 1; k <= max_lag; ++k) {
        const double kk = static_cast<double>(k);
        level += 2.0 * window_eval(LagWindow::tukey_hanning, kk * w * stretch) * r[k];
        slope += 2.0 * window_eval(LagWindow::split_cosine, kk * w * stretch) * kk * r[k];
    }
    const double num = 2.0 * level * level;
    const double den = 3.0 * slope * slope;
    if (!(num > 0.0) || den <= kDegenerateRatio * num) return degenerate();
    out.w_opt = std::cbrt(num / den) / t_cbrt;
    out.l_opt = std::max<std::size_t>(1, static_cast<std::size_t>(std::nearbyint(1.0 / out.w_opt)));
    out.l = out.l_opt;
    return out;
}

/**
 * @brief Data-driven (b, l): l = max(l_min, l_opt), b = round(N/T * l).
 *
 * l_opt is the largest over the panel's coordinates. l is capped at T - 1 and
 * b is kept in [1, N - 1] so that each dimension yields at least two subsamples.
 */
[[nodiscard]] inline SizeSelection select_sizes(const PanelData& panel, std::size_t l_min = 4,
                                                std::size_t n_iterations = kDefaultIterations) {
    const std::size_t n = panel.n_units();
    const std::size_t t_len = panel.n_periods();
    if (n < 2) throw Error(ErrorCode::SingleUnit, "size selection needs N >= 2");
    if (t_len < 2) throw Error(ErrorCode::InvalidWindowLength, "size selection needs T >= 2");

    SizeSelection best;
    for (std::size_t j = 0; j < panel.dim(); ++j) {
        SizeSelection s = buhlmann_l_opt(autocov_hat(panel, t_len - 1, j), n_iterations);
        s.coordinate = j;
        if (j == 0 || s.l_opt > best.l_opt) best = std::move(s);
    }
    best.floor_applied = l_min > best.l_opt;
    best.l = std::clamp<std::size_t>(std::max(l_min, best.l_opt), 1, t_len - 1);
    const double ratio = static_cast<double>(n) / static_cast<double>(t_len);
    const auto b = static_cast<std::size_t>(
        std::max(1.0, std::nearbyint(ratio * static_cast<double>(best.l))));
    best.b = std::clamp<std::size_t>(b, 1, n - 1);
    return best;
}

}  // namespace twsub
