#pragma once

#include "twsub/error.hpp"
#include "twsub/linalg.hpp"
#include "twsub/panel.hpp"
#include "twsub/statistics.hpp"
#include "twsub/subsample.hpp"
#include "twsub/variance.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace twsub {

/// Outcome y (d = 1), regressors x (d = p, intercept included by the caller),
/// and optionally the true errors u for simulation.
struct RegressionPanel {
    PanelData y;
    PanelData x;
    std::optional<PanelData> u;

    void validate() const {
        auto same_shape = [](const PanelData& a, const PanelData& b) {
            return a.n_units() == b.n_units() && a.n_periods() == b.n_periods();
        };
        if (y.dim() != 1) throw Error(ErrorCode::DimensionMismatch, "outcome must have d=1");
        if (!same_shape(y, x)) throw Error(ErrorCode::DimensionMismatch, "y and x differ in N, T");
        if (u && (u->dim() != 1 || !same_shape(y, *u))) {
            throw Error(ErrorCode::DimensionMismatch, "u must be N x T with d=1");
        }
    }

    [[nodiscard]] std::size_t n_units() const noexcept { return y.n_units(); }
    [[nodiscard]] std::size_t n_periods() const noexcept { return y.n_periods(); }
    [[nodiscard]] std::size_t n_regressors() const noexcept { return x.dim(); }

    /// Panel with coordinate 0 = y and coordinates 1..p = x, the layout OlsStatistic expects.
    [[nodiscard]] PanelData stacked() const {
        const std::size_t p = x.dim();
        std::vector<double> values;
        values.reserve(n_units() * n_periods() * (p + 1));
        for (std::size_t n = 0; n < n_units(); ++n) {
            for (std::size_t t = 0; t < n_periods(); ++t) {
                values.push_back(y.at(n, t));
                auto c = x.cell(n, t);
                values.insert(values.end(), c.begin(), c.end());
            }
        }
        return {n_units(), n_periods(), p + 1, std::move(values)};
    }
};

struct OlsFit {
    Vector beta;
    Matrix phi;      ///< (1/NT) sum X X'
    Matrix phi_inv;
    PanelData residuals;
};

[[nodiscard]] inline OlsFit ols_fit(const RegressionPanel& data) {
    data.validate();
    const auto p = static_cast<Eigen::Index>(data.n_regressors());
    Matrix xtx = Matrix::Zero(p, p);
    Vector xty = Vector::Zero(p);
    for (std::size_t n = 0; n < data.n_units(); ++n) {
        for (std::size_t t = 0; t < data.n_periods(); ++t) {
            const Eigen::Map<const Vector> xv(data.x.cell(n, t).data(), p);
            xtx.noalias() += xv * xv.transpose();
            xty += xv * data.y.at(n, t);
        }
    }
    const double cells = static_cast<double>(data.n_units() * data.n_periods());
    Matrix phi = xtx / cells;
    Matrix phi_inv = guarded_inverse(phi);
    Vector beta = phi_inv * (xty / cells);

    std::vector<double> resid(data.n_units() * data.n_periods());
    for (std::size_t n = 0; n < data.n_units(); ++n) {
        for (std::size_t t = 0; t < data.n_periods(); ++t) {
            const Eigen::Map<const Vector> xv(data.x.cell(n, t).data(), p);
            resid[n * data.n_periods() + t] = data.y.at(n, t) - xv.dot(beta);
        }
    }
    return {std::move(beta), std::move(phi), std::move(phi_inv),
            PanelData(data.n_units(), data.n_periods(), 1, std::move(resid))};
}

enum class ScoreMode { infeasible, feasible };

/// Panel of X_nt * e_nt for an arbitrary error panel e (d = 1).
[[nodiscard]] inline PanelData score_from_errors(const PanelData& x, const PanelData& errors) {
    const std::size_t p = x.dim();
    std::vector<double> values(x.n_units() * x.n_periods() * p);
    for (std::size_t n = 0; n < x.n_units(); ++n) {
        for (std::size_t t = 0; t < x.n_periods(); ++t) {
            auto c = x.cell(n, t);
            const double e = errors.at(n, t);
            for (std::size_t j = 0; j < p; ++j) values[(n * x.n_periods() + t) * p + j] = c[j] * e;
        }
    }
    return {x.n_units(), x.n_periods(), p, std::move(values)};
}

/// X U (infeasible, true errors) or X U_hat (feasible, OLS residuals).
[[nodiscard]] inline PanelData score_panel(const RegressionPanel& data, const OlsFit& fit,
                                           ScoreMode mode) {
    if (mode == ScoreMode::infeasible) {
        if (!data.u) throw Error(ErrorCode::MissingTrueErrors, "infeasible scores need true errors");
        return score_from_errors(data.x, *data.u);
    }
    return score_from_errors(data.x, fit.residuals);
}

struct SandwichVariance {
    VarianceEstimate variance;  ///< phi^-1 Sigma phi^-1, estimates lim Var(sqrt(N)(beta_hat - beta))
    VarianceEstimate score;     ///< Sigma, subsampling variance of the score mean
    bool size_warning = false;  ///< b > sqrt(N) or l > sqrt(T)
};

/**
 * @brief Score-subsampling sandwich variance of the OLS coefficients.
 *
 * The score panel is subsampled with the mean statistic and the plan's rate
 * (sqrt(b) for the usual sqrt(N) regression rate); the sandwich is applied
 * afterwards. With small sizes supplied, the score variance is bias-corrected
 * before sandwiching.
 */
[[nodiscard]] inline SandwichVariance sandwich_variance(const RegressionPanel& data,
                                                        const OlsFit& fit,
                                                        const SubsamplePlan& plan, ScoreMode mode,
                                                        std::optional<SmallSizes> small = {}) {
    const PanelData scores = score_panel(data, fit, mode);
    VarianceEstimate sigma = sigma_hat(evaluate_subsamples(scores, plan, MeanStatistic{}));
    if (small) {
        SubsamplePlan small_plan = plan;
        small_plan.b = small->b;
        small_plan.l = small->l;
        sigma = bias_correct(sigma,
                             sigma_hat(evaluate_subsamples(scores, small_plan, MeanStatistic{})));
    }
    VarianceEstimate v = sigma;
    const Matrix raw = fit.phi_inv * sigma.value * fit.phi_inv;
    v.value = (raw + raw.transpose()) / 2.0;
    const bool warn = static_cast<double>(plan.b) > std::sqrt(static_cast<double>(data.n_units())) ||
                      static_cast<double>(plan.l) > std::sqrt(static_cast<double>(data.n_periods()));
    return {std::move(v), std::move(sigma), warn};
}

/// sqrt(N) (beta_j - null) / sqrt(V_jj).
[[nodiscard]] inline double t_statistic(const OlsFit& fit, const VarianceEstimate& variance,
                                        std::size_t coordinate, double null_value) {
    const double vjj = variance.scalar(coordinate);
    if (!(vjj > 0.0)) {
        throw Error(ErrorCode::ZeroVariance, "V_jj=" + std::to_string(vjj));
    }
    const double n = static_cast<double>(fit.residuals.n_units());
    return std::sqrt(n) * (fit.beta(static_cast<Eigen::Index>(coordinate)) - null_value) /
           std::sqrt(vjj);
}

/// Normal interval beta_j +/- z sqrt(V_jj / N).
[[nodiscard]] inline NormalInterval regression_ci(const OlsFit& fit,
                                                  const VarianceEstimate& variance,
                                                  std::size_t coordinate, double level) {
    return normal_ci(fit.beta(static_cast<Eigen::Index>(coordinate)), variance.scalar(coordinate),
                     std::sqrt(static_cast<double>(fit.residuals.n_units())), level);
}

}  // namespace twsub
