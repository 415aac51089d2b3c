#pragma once

#include "twsub/linalg.hpp"
#include "twsub/subsample.hpp"

#include <cstddef>
#include <vector>

namespace twsub {

/// Coordinate-wise sample mean over all cells of the sub-panel.
struct MeanStatistic {
    [[nodiscard]] std::vector<double> operator()(const SubPanel& view) const {
        std::vector<double> sum(view.dim(), 0.0);
        for (std::size_t i = 0; i < view.n_units(); ++i) {
            for (std::size_t s = 0; s < view.n_periods(); ++s) {
                auto c = view.cell(i, s);
                for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += c[j];
            }
        }
        const double cells = static_cast<double>(view.n_units() * view.n_periods());
        for (double& v : sum) v /= cells;
        return sum;
    }
};

/**
 * OLS coefficients on a stacked panel whose coordinate 0 is the outcome and
 * coordinates 1..p are the regressors (intercept column included by the caller).
 */
struct OlsStatistic {
    [[nodiscard]] std::vector<double> operator()(const SubPanel& view) const {
        const auto p = static_cast<Eigen::Index>(view.dim() - 1);
        Matrix xtx = Matrix::Zero(p, p);
        Vector xty = Vector::Zero(p);
        for (std::size_t i = 0; i < view.n_units(); ++i) {
            for (std::size_t s = 0; s < view.n_periods(); ++s) {
                auto c = view.cell(i, s);
                for (Eigen::Index a = 0; a < p; ++a) {
                    const double xa = c[static_cast<std::size_t>(a) + 1];
                    xty(a) += xa * c[0];
                    for (Eigen::Index b = 0; b <= a; ++b) {
                        xtx(a, b) += xa * c[static_cast<std::size_t>(b) + 1];
                    }
                }
            }
        }
        xtx = xtx.selfadjointView<Eigen::Lower>();
        const Vector beta = guarded_inverse(xtx) * xty;
        return {beta.data(), beta.data() + beta.size()};
    }
};

}  // namespace twsub
