#pragma once

#include "twsub/error.hpp"
#include "twsub/panel.hpp"

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace twsub {

/// Disjoint unit blocks I_1..I_{N_b}; all of size b except possibly the last.
struct UnitPartition {
    std::vector<std::vector<std::size_t>> blocks;
    std::size_t block_size = 0;

    [[nodiscard]] std::size_t n_blocks() const noexcept { return blocks.size(); }
};

namespace detail {

/// Uniform integer in [0, bound) by rejection; identical on every platform.
template <typename Engine>
[[nodiscard]] std::uint64_t uniform_below(Engine& rng, std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x = 0;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

}  // namespace detail

/**
 * @brief Random partition of units 0..n_units-1 into consecutive chunks of b.
 *
 * The unit order is a Fisher-Yates shuffle driven by the seeded stream, so the
 * partition is uniform over orderings and fully determined by the seed.
 */
[[nodiscard]] inline UnitPartition partition_units(std::size_t n_units, std::size_t b,
                                                   const SeedStream& seed) {
    if (b < 1 || b > n_units) {
        throw Error(ErrorCode::InvalidBlockSize,
                    "b=" + std::to_string(b) + " with N=" + std::to_string(n_units));
    }
    std::vector<std::size_t> order(n_units);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = seed.engine();
    for (std::size_t i = n_units; i > 1; --i) {
        const auto j = static_cast<std::size_t>(detail::uniform_below(rng, i));
        std::swap(order[i - 1], order[j]);
    }
    UnitPartition partition;
    partition.block_size = b;
    for (std::size_t start = 0; start < n_units; start += b) {
        const std::size_t stop = std::min(start + b, n_units);
        partition.blocks.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                      order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return partition;
}

/// Consecutive window [first, last] (zero-based, inclusive).
struct TimeWindow {
    std::size_t first;
    std::size_t last;

    friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

/// All q = T - l + 1 overlapping windows of length l, by increasing start.
[[nodiscard]] inline std::vector<TimeWindow> time_windows(std::size_t n_periods, std::size_t l) {
    if (l < 1 || l > n_periods) {
        throw Error(ErrorCode::InvalidWindowLength,
                    "l=" + std::to_string(l) + " with T=" + std::to_string(n_periods));
    }
    std::vector<TimeWindow> windows;
    windows.reserve(n_periods - l + 1);
    for (std::size_t k = 0; k + l <= n_periods; ++k) windows.push_back({k, k + l - 1});
    return windows;
}

/// Read-only view of the cells {(n, t) : n in units, first <= t < first + length}.
class SubPanel {
public:
    SubPanel(const PanelData& panel, std::span<const std::size_t> units, std::size_t first,
             std::size_t length) noexcept
        : panel_(&panel), units_(units), first_(first), length_(length) {}

    [[nodiscard]] std::size_t n_units() const noexcept { return units_.size(); }
    [[nodiscard]] std::size_t n_periods() const noexcept { return length_; }
    [[nodiscard]] std::size_t dim() const noexcept { return panel_->dim(); }

    /// Local indices: i-th unit of the view, s-th period of the window.
    [[nodiscard]] double at(std::size_t i, std::size_t s, std::size_t coord = 0) const {
        return panel_->at(units_[i], first_ + s, coord);
    }
    [[nodiscard]] std::span<const double> cell(std::size_t i, std::size_t s) const {
        return panel_->cell(units_[i], first_ + s);
    }

private:
    const PanelData* panel_;
    std::span<const std::size_t> units_;
    std::size_t first_;
    std::size_t length_;
};

/// A statistic maps any sub-panel to a fixed-length real vector. Must be reentrant.
template <typename F>
concept PanelStatistic = requires(const F& f, const SubPanel& view) {
    { f(view) } -> std::convertible_to<std::vector<double>>;
};

/// Evaluates a statistic on the whole panel.
template <PanelStatistic Statistic>
[[nodiscard]] std::vector<double> full_estimate(const PanelData& panel,
                                                const Statistic& statistic) {
    std::vector<std::size_t> all(panel.n_units());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<double> value = statistic(SubPanel(panel, all, 0, panel.n_periods()));
    for (double v : value) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::StatisticFailure, "non-finite full-sample estimate");
        }
    }
    return value;
}

/// theta_{b,l,i,k} for every used block i and window start k.
class SubsampleStatistics {
public:
    SubsampleStatistics(SubsamplePlan plan, std::size_t dim, std::size_t n_blocks,
                        std::size_t n_windows, std::vector<double> values,
                        std::vector<std::size_t> block_sizes)
        : plan_(plan),
          dim_(dim),
          n_blocks_(n_blocks),
          n_windows_(n_windows),
          values_(std::move(values)),
          block_sizes_(std::move(block_sizes)) {}

    [[nodiscard]] const SubsamplePlan& plan() const noexcept { return plan_; }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t n_blocks() const noexcept { return n_blocks_; }
    [[nodiscard]] std::size_t n_windows() const noexcept { return n_windows_; }
    [[nodiscard]] std::size_t size() const noexcept { return n_blocks_ * n_windows_; }
    [[nodiscard]] bool empty() const noexcept { return size() == 0; }
    [[nodiscard]] std::size_t block_size(std::size_t i) const { return block_sizes_[i]; }

    [[nodiscard]] double value(std::size_t block, std::size_t window, std::size_t coord = 0) const {
        return values_[(block * n_windows_ + window) * dim_ + coord];
    }
    /// m-th subsample in block-major order.
    [[nodiscard]] std::span<const double> row(std::size_t m) const {
        return {values_.data() + m * dim_, dim_};
    }
    [[nodiscard]] std::vector<double> coordinate(std::size_t coord) const {
        std::vector<double> out(size());
        for (std::size_t m = 0; m < out.size(); ++m) out[m] = values_[m * dim_ + coord];
        return out;
    }

private:
    SubsamplePlan plan_;
    std::size_t dim_;
    std::size_t n_blocks_;
    std::size_t n_windows_;
    std::vector<double> values_;
    std::vector<std::size_t> block_sizes_;
};

/**
 * @brief Applies the statistic to every (unit block, time window) sub-panel.
 *
 * The remainder block (when N mod b != 0) is evaluated on its true size, or
 * dropped when plan.include_remainder_block is false.
 *
 * @throws Error StatisticFailure naming the offending (block, window) when the
 *         statistic returns a non-finite or wrongly-sized value.
 */
template <PanelStatistic Statistic>
[[nodiscard]] SubsampleStatistics evaluate_subsamples(const PanelData& panel,
                                                      const SubsamplePlan& plan,
                                                      const UnitPartition& partition,
                                                      const Statistic& statistic) {
    plan.validate_for(panel);
    if (partition.block_size != plan.b) {
        throw Error(ErrorCode::InvalidBlockSize, "partition block size differs from plan");
    }
    const std::size_t blocks = plan.used_blocks(panel.n_units());
    const std::size_t q = plan.n_windows(panel.n_periods());
    std::vector<double> values;
    std::vector<std::size_t> sizes;
    std::size_t dim = 0;
    for (std::size_t i = 0; i < blocks; ++i) {
        const auto& units = partition.blocks[i];
        sizes.push_back(units.size());
        for (std::size_t k = 0; k < q; ++k) {
            std::vector<double> value = statistic(SubPanel(panel, units, k, plan.l));
            if (i == 0 && k == 0) {
                dim = value.size();
                if (dim == 0) throw Error(ErrorCode::StatisticFailure, "empty statistic value");
                values.reserve(blocks * q * dim);
            }
            bool ok = value.size() == dim;
            for (double v : value) ok = ok && std::isfinite(v);
            if (!ok) {
                throw Error(ErrorCode::StatisticFailure,
                            "block " + std::to_string(i + 1) + ", window " + std::to_string(k + 1));
            }
            values.insert(values.end(), value.begin(), value.end());
        }
    }
    return {plan, dim, blocks, q, std::move(values), std::move(sizes)};
}

/// Same, with the unit partition drawn from plan.partition_seed.
template <PanelStatistic Statistic>
[[nodiscard]] SubsampleStatistics evaluate_subsamples(const PanelData& panel,
                                                      const SubsamplePlan& plan,
                                                      const Statistic& statistic) {
    plan.validate_for(panel);
    return evaluate_subsamples(panel, plan,
                               partition_units(panel.n_units(), plan.b,
                                               SeedStream(plan.partition_seed, 0)),
                               statistic);
}

}  // namespace twsub
