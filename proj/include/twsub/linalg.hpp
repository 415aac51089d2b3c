#pragma once

#include "twsub/error.hpp"

#include <Eigen/Dense>

#include <limits>
#include <string>

namespace twsub {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kMaxConditionNumber = 1e12;

/// 2-norm condition number of a square matrix via SVD; +inf when singular.
[[nodiscard]] inline double condition_number(const Matrix& a) {
    Eigen::JacobiSVD<Matrix> svd(a);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(s.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / s(s.size() - 1);
}

/// Inverse of a symmetric positive-definite design matrix, rejecting cond >= 1e12.
[[nodiscard]] inline Matrix guarded_inverse(const Matrix& a) {
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || !(s(s.size() - 1) > 0.0) || s(0) / s(s.size() - 1) >= kMaxConditionNumber) {
        throw Error(ErrorCode::SingularDesign,
                    "condition number " + std::to_string(s.size() ? s(0) / s(s.size() - 1) : 0.0));
    }
    return svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

}  // namespace twsub
