#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace twsub {

enum class ErrorCode {
    MissingCell,
    DuplicateCell,
    NonFiniteValue,
    InconsistentWidth,
    InvalidRate,
    InvalidBlockSize,
    InvalidWindowLength,
    StatisticFailure,
    EmptyStatistics,
    InvalidProbability,
    InvalidLevel,
    DegenerateCorrection,
    NegativeVariance,
    SingleUnit,
    InvalidIterations,
    SingularDesign,
    MissingTrueErrors,
    DimensionMismatch,
    ZeroVariance,
    InvalidRho,
    InvalidConfig,
    ParseError,
};

[[nodiscard]] constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MissingCell: return "MissingCell";
        case ErrorCode::DuplicateCell: return "DuplicateCell";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::InconsistentWidth: return "InconsistentWidth";
        case ErrorCode::InvalidRate: return "InvalidRate";
        case ErrorCode::InvalidBlockSize: return "InvalidBlockSize";
        case ErrorCode::InvalidWindowLength: return "InvalidWindowLength";
        case ErrorCode::StatisticFailure: return "StatisticFailure";
        case ErrorCode::EmptyStatistics: return "EmptyStatistics";
        case ErrorCode::InvalidProbability: return "InvalidProbability";
        case ErrorCode::InvalidLevel: return "InvalidLevel";
        case ErrorCode::DegenerateCorrection: return "DegenerateCorrection";
        case ErrorCode::NegativeVariance: return "NegativeVariance";
        case ErrorCode::SingleUnit: return "SingleUnit";
        case ErrorCode::InvalidIterations: return "InvalidIterations";
        case ErrorCode::SingularDesign: return "SingularDesign";
        case ErrorCode::MissingTrueErrors: return "MissingTrueErrors";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::InvalidRho: return "InvalidRho";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

/// Every failure raised by the library. The code identifies the failure class;
/// the message carries context (cell indices, file line, offending value).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace twsub
