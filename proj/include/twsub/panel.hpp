#pragma once

#include "twsub/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace twsub {

/**
 * @brief Balanced N x T panel of d-dimensional observations.
 *
 * Storage is unit-major: the d values of cell (n, t) are contiguous and cell
 * (n, t + 1) follows cell (n, t). Indices are zero-based internally; the
 * 1..N / 1..T labelling only appears at the CSV boundary. Instances are
 * immutable after construction.
 */
class PanelData {
public:
    PanelData(std::size_t n_units, std::size_t n_periods, std::size_t dim,
              std::vector<double> values)
        : n_units_(n_units), n_periods_(n_periods), dim_(dim), values_(std::move(values)) {
        if (n_units_ == 0 || n_periods_ == 0 || dim_ == 0) {
            throw Error(ErrorCode::DimensionMismatch, "panel dimensions must be positive");
        }
        if (values_.size() != n_units_ * n_periods_ * dim_) {
            throw Error(ErrorCode::DimensionMismatch,
                        "expected " + std::to_string(n_units_ * n_periods_ * dim_) +
                            " values, got " + std::to_string(values_.size()));
        }
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i])) {
                const std::size_t cell = i / dim_;
                throw Error(ErrorCode::NonFiniteValue,
                            "unit " + std::to_string(cell / n_periods_ + 1) + ", period " +
                                std::to_string(cell % n_periods_ + 1));
            }
        }
    }

    [[nodiscard]] std::size_t n_units() const noexcept { return n_units_; }
    [[nodiscard]] std::size_t n_periods() const noexcept { return n_periods_; }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }

    [[nodiscard]] double at(std::size_t unit, std::size_t period, std::size_t coord = 0) const {
        return values_[(unit * n_periods_ + period) * dim_ + coord];
    }

    [[nodiscard]] std::span<const double> cell(std::size_t unit, std::size_t period) const {
        return {values_.data() + (unit * n_periods_ + period) * dim_, dim_};
    }

    [[nodiscard]] std::span<const double> raw() const noexcept { return values_; }

    /// Single-coordinate panel.
    [[nodiscard]] PanelData coordinate(std::size_t coord) const {
        if (coord >= dim_) {
            throw Error(ErrorCode::DimensionMismatch, "coordinate " + std::to_string(coord) +
                                                          " out of range for d=" +
                                                          std::to_string(dim_));
        }
        std::vector<double> out(n_units_ * n_periods_);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] = values_[c * dim_ + coord];
        return {n_units_, n_periods_, 1, std::move(out)};
    }

    /// Applies f elementwise; f(value) -> double.
    template <typename F>
    [[nodiscard]] PanelData map(F&& f) const {
        std::vector<double> out(values_.size());
        std::transform(values_.begin(), values_.end(), out.begin(), std::forward<F>(f));
        return {n_units_, n_periods_, dim_, std::move(out)};
    }

    friend bool operator==(const PanelData&, const PanelData&) = default;

private:
    std::size_t n_units_;
    std::size_t n_periods_;
    std::size_t dim_;
    std::vector<double> values_;
};

/// One long-format input row: integer labels plus the observation vector.
struct PanelRow {
    std::int64_t unit;
    std::int64_t time;
    std::vector<double> values;
};

/**
 * @brief Builds a balanced panel from long-format rows.
 *
 * Unit and time labels are relabelled to contiguous indices in ascending label
 * order. Rows may arrive in any order.
 *
 * @throws Error MissingCell, DuplicateCell, NonFiniteValue, InconsistentWidth
 */
[[nodiscard]] inline PanelData validate_panel(std::span<const PanelRow> rows) {
    if (rows.empty()) throw Error(ErrorCode::MissingCell, "no rows");
    const std::size_t dim = rows.front().values.size();
    if (dim == 0) throw Error(ErrorCode::InconsistentWidth, "rows carry no values");

    std::map<std::int64_t, std::size_t> units;
    std::map<std::int64_t, std::size_t> times;
    for (const auto& row : rows) {
        if (row.values.size() != dim) {
            throw Error(ErrorCode::InconsistentWidth,
                        "row (" + std::to_string(row.unit) + "," + std::to_string(row.time) +
                            ") has " + std::to_string(row.values.size()) + " values, expected " +
                            std::to_string(dim));
        }
        for (double v : row.values) {
            if (!std::isfinite(v)) {
                throw Error(ErrorCode::NonFiniteValue, "row (" + std::to_string(row.unit) + "," +
                                                           std::to_string(row.time) + ")");
            }
        }
        units.emplace(row.unit, 0);
        times.emplace(row.time, 0);
    }
    std::size_t next = 0;
    for (auto& [label, index] : units) index = next++;
    next = 0;
    for (auto& [label, index] : times) index = next++;

    const std::size_t n = units.size();
    const std::size_t t = times.size();
    std::vector<double> values(n * t * dim);
    std::vector<char> seen(n * t, 0);
    for (const auto& row : rows) {
        const std::size_t c = units[row.unit] * t + times[row.time];
        if (seen[c]) {
            throw Error(ErrorCode::DuplicateCell, "unit " + std::to_string(row.unit) + ", time " +
                                                      std::to_string(row.time));
        }
        seen[c] = 1;
        std::copy(row.values.begin(), row.values.end(), values.begin() + c * dim);
    }
    for (std::size_t c = 0; c < seen.size(); ++c) {
        if (!seen[c]) {
            auto u = std::next(units.begin(), static_cast<std::ptrdiff_t>(c / t))->first;
            auto s = std::next(times.begin(), static_cast<std::ptrdiff_t>(c % t))->first;
            throw Error(ErrorCode::MissingCell,
                        "unit " + std::to_string(u) + ", time " + std::to_string(s));
        }
    }
    return {n, t, dim, std::move(values)};
}

/// Exports with labels 1..N and 1..T.
[[nodiscard]] inline std::vector<PanelRow> panel_to_rows(const PanelData& panel) {
    std::vector<PanelRow> rows;
    rows.reserve(panel.n_units() * panel.n_periods());
    for (std::size_t n = 0; n < panel.n_units(); ++n) {
        for (std::size_t t = 0; t < panel.n_periods(); ++t) {
            auto c = panel.cell(n, t);
            rows.push_back({static_cast<std::int64_t>(n + 1), static_cast<std::int64_t>(t + 1),
                            {c.begin(), c.end()}});
        }
    }
    return rows;
}

/**
 * @brief Normalizing rate tau(m, s) = m^p * s^q for m units and s periods.
 *
 * p = 1/2, q = 0 gives the sqrt(N) rate of the mean and regression cases;
 * p = q = 1/2 gives the sqrt(NT) rate of degenerate product-structure limits.
 */
struct RateSpec {
    double unit_exponent = 0.5;
    double period_exponent = 0.0;

    [[nodiscard]] static RateSpec sqrt_units() noexcept { return {0.5, 0.0}; }
    [[nodiscard]] static RateSpec sqrt_cells() noexcept { return {0.5, 0.5}; }

    void validate() const {
        if (!(unit_exponent >= 0.0) || !(period_exponent >= 0.0) ||
            !(unit_exponent + period_exponent > 0.0) || !std::isfinite(unit_exponent) ||
            !std::isfinite(period_exponent)) {
            throw Error(ErrorCode::InvalidRate, "exponents must be >= 0 with positive sum");
        }
    }

    [[nodiscard]] double tau(std::size_t units, std::size_t periods) const {
        return std::pow(static_cast<double>(units), unit_exponent) *
               std::pow(static_cast<double>(periods), period_exponent);
    }

    friend bool operator==(const RateSpec&, const RateSpec&) = default;
};

/// Subsample sizes: b units per block, windows of l consecutive periods.
struct SubsamplePlan {
    std::size_t b = 1;
    std::size_t l = 1;
    RateSpec rate{};
    std::uint64_t partition_seed = 0;
    bool include_remainder_block = true;

    void validate_for(const PanelData& panel) const {
        rate.validate();
        if (b < 1 || b > panel.n_units()) {
            throw Error(ErrorCode::InvalidBlockSize, "b=" + std::to_string(b) + " with N=" +
                                                         std::to_string(panel.n_units()));
        }
        if (l < 1 || l > panel.n_periods()) {
            throw Error(ErrorCode::InvalidWindowLength, "l=" + std::to_string(l) + " with T=" +
                                                            std::to_string(panel.n_periods()));
        }
    }

    [[nodiscard]] static std::size_t n_blocks(std::size_t n_units, std::size_t b) noexcept {
        return (n_units + b - 1) / b;
    }

    /// Number of unit blocks that actually enter the subsampling distribution.
    [[nodiscard]] std::size_t used_blocks(std::size_t n_units) const noexcept {
        const std::size_t nb = n_blocks(n_units, b);
        return (!include_remainder_block && n_units % b != 0) ? nb - 1 : nb;
    }

    [[nodiscard]] std::size_t n_windows(std::size_t n_periods) const noexcept {
        return n_periods - l + 1;
    }

    [[nodiscard]] std::size_t n_subsamples(std::size_t n_units, std::size_t n_periods) const {
        return used_blocks(n_units) * n_windows(n_periods);
    }

    [[nodiscard]] double tau_sub() const { return rate.tau(b, l); }
};

namespace detail {

[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace detail

/**
 * @brief Addressable pseudo-random stream.
 *
 * The engine for (master_seed, stream_index) is seeded through std::seed_seq,
 * whose output is fixed by the standard, so draws are reproducible across runs
 * and independent of how streams are scheduled over threads. Distinct indices
 * give independent streams. A stream is owned by one consumer at a time.
 */
class SeedStream {
public:
    using engine_type = std::mt19937_64;

    constexpr SeedStream(std::uint64_t master_seed, std::uint64_t stream_index) noexcept
        : master_seed_(master_seed), stream_index_(stream_index) {}

    [[nodiscard]] constexpr std::uint64_t master_seed() const noexcept { return master_seed_; }
    [[nodiscard]] constexpr std::uint64_t stream_index() const noexcept { return stream_index_; }

    [[nodiscard]] engine_type engine() const {
        std::seed_seq seq{static_cast<std::uint32_t>(master_seed_),
                          static_cast<std::uint32_t>(master_seed_ >> 32),
                          static_cast<std::uint32_t>(stream_index_),
                          static_cast<std::uint32_t>(stream_index_ >> 32)};
        return engine_type(seq);
    }

    /// Child stream j of this stream, itself independent of every sibling.
    [[nodiscard]] constexpr SeedStream substream(std::uint64_t j) const noexcept {
        return {derived_seed(), j};
    }

    /// 64-bit seed unique to (master_seed, stream_index), e.g. for a SubsamplePlan.
    [[nodiscard]] constexpr std::uint64_t derived_seed() const noexcept {
        return detail::splitmix64(detail::splitmix64(master_seed_) ^ stream_index_);
    }

private:
    std::uint64_t master_seed_;
    std::uint64_t stream_index_;
};

}  // namespace twsub
