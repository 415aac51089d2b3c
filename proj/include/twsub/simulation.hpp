#pragma once

#include "twsub/bandwidth.hpp"
#include "twsub/error.hpp"
#include "twsub/panel.hpp"
#include "twsub/quantile.hpp"
#include "twsub/regression.hpp"
#include "twsub/statistics.hpp"
#include "twsub/subsample.hpp"
#include "twsub/variance.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

namespace twsub {

enum class DgpKind { linear_regression, nonseparable, projected_mean };

[[nodiscard]] inline std::string_view to_string(DgpKind kind) noexcept {
    switch (kind) {
        case DgpKind::linear_regression: return "linear_regression";
        case DgpKind::nonseparable: return "nonseparable";
        case DgpKind::projected_mean: return "projected_mean";
    }
    return "unknown";
}

/**
 * @brief Simulation design.
 *
 * linear_regression: Y = b0 + b1 X + U with X and U each
 *   unit_scale * alpha_n + time_scale * gamma_t + idio_scale * eps_nt (independent draws).
 * nonseparable:      X = interaction_scale * alpha_n * gamma_t + idio_scale * eps_nt.
 * projected_mean:    X = unit_scale * alpha_n + time_scale * gamma_t + idio_scale * eps_nt,
 *   so V_a = unit_scale^2 and V_b = time_scale^2.
 * gamma_t is a unit-variance stationary AR(1) with coefficient rho; everything
 * else is i.i.d. N(0, 1).
 */
struct DgpSpec {
    DgpKind kind = DgpKind::linear_regression;
    double rho = 0.0;
    std::size_t n_units = 100;
    std::size_t n_periods = 100;
    double unit_scale = 0.3;
    double time_scale = 0.5;
    double idio_scale = 0.2;
    double interaction_scale = 15.0;
    double beta0 = 1.0;
    double beta1 = 1.0;

    [[nodiscard]] static DgpSpec defaults(DgpKind kind, double rho, std::size_t n_units,
                                          std::size_t n_periods) {
        DgpSpec spec;
        spec.kind = kind;
        spec.rho = rho;
        spec.n_units = n_units;
        spec.n_periods = n_periods;
        if (kind == DgpKind::nonseparable) spec.idio_scale = 0.1;
        return spec;
    }

    void validate() const {
        if (!(std::abs(rho) < 1.0)) throw Error(ErrorCode::InvalidRho, "rho=" + std::to_string(rho));
        if (n_units == 0 || n_periods == 0) {
            throw Error(ErrorCode::DimensionMismatch, "panel dimensions must be positive");
        }
    }

    /// Parameter the coverage study targets: beta1, or the population mean 0.
    [[nodiscard]] double truth() const noexcept {
        return kind == DgpKind::linear_regression ? beta1 : 0.0;
    }

    /// Default normalizing rate: sqrt(NT) for the degenerate product model, sqrt(N) otherwise.
    [[nodiscard]] RateSpec default_rate() const noexcept {
        return kind == DgpKind::nonseparable ? RateSpec::sqrt_cells() : RateSpec::sqrt_units();
    }
};

namespace detail {

template <typename Engine>
[[nodiscard]] std::vector<double> ar1_draw(std::size_t length, double rho, Engine& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> g(length);
    if (length == 0) return g;
    const double innovation_sd = std::sqrt(1.0 - rho * rho);
    g[0] = z(rng);
    for (std::size_t t = 1; t < length; ++t) g[t] = rho * g[t - 1] + innovation_sd * z(rng);
    return g;
}

template <typename Engine>
[[nodiscard]] std::vector<double> normal_draws(std::size_t count, Engine& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> out(count);
    for (double& v : out) v = z(rng);
    return out;
}

}  // namespace detail

/// Stationary AR(1): gamma_1 ~ N(0, 1), gamma_{t+1} = rho gamma_t + v_t, v_t ~ N(0, 1 - rho^2).
[[nodiscard]] inline std::vector<double> ar1_series(std::size_t length, double rho,
                                                    const SeedStream& seed) {
    if (!(std::abs(rho) < 1.0)) throw Error(ErrorCode::InvalidRho, "rho=" + std::to_string(rho));
    auto rng = seed.engine();
    return detail::ar1_draw(length, rho, rng);
}

[[nodiscard]] inline RegressionPanel generate_regression(const DgpSpec& spec,
                                                         const SeedStream& seed) {
    spec.validate();
    const std::size_t n = spec.n_units;
    const std::size_t t_len = spec.n_periods;
    auto rng = seed.engine();
    const auto gamma_x = detail::ar1_draw(t_len, spec.rho, rng);
    const auto gamma_u = detail::ar1_draw(t_len, spec.rho, rng);
    const auto alpha_x = detail::normal_draws(n, rng);
    const auto alpha_u = detail::normal_draws(n, rng);
    const auto eps_x = detail::normal_draws(n * t_len, rng);
    const auto eps_u = detail::normal_draws(n * t_len, rng);

    std::vector<double> y(n * t_len);
    std::vector<double> x(n * t_len * 2);
    std::vector<double> u(n * t_len);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < t_len; ++t) {
            const std::size_t c = i * t_len + t;
            const double xv = spec.unit_scale * alpha_x[i] + spec.time_scale * gamma_x[t] +
                              spec.idio_scale * eps_x[c];
            const double uv = spec.unit_scale * alpha_u[i] + spec.time_scale * gamma_u[t] +
                              spec.idio_scale * eps_u[c];
            x[2 * c] = 1.0;
            x[2 * c + 1] = xv;
            u[c] = uv;
            y[c] = spec.beta0 + spec.beta1 * xv + uv;
        }
    }
    return {PanelData(n, t_len, 1, std::move(y)), PanelData(n, t_len, 2, std::move(x)),
            PanelData(n, t_len, 1, std::move(u))};
}

[[nodiscard]] inline PanelData generate_mean_panel(const DgpSpec& spec, const SeedStream& seed) {
    spec.validate();
    if (spec.kind == DgpKind::linear_regression) {
        throw Error(ErrorCode::InvalidConfig, "linear_regression generates a RegressionPanel");
    }
    const std::size_t n = spec.n_units;
    const std::size_t t_len = spec.n_periods;
    auto rng = seed.engine();
    const auto gamma = detail::ar1_draw(t_len, spec.rho, rng);
    const auto alpha = detail::normal_draws(n, rng);
    const auto eps = detail::normal_draws(n * t_len, rng);
    std::vector<double> values(n * t_len);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < t_len; ++t) {
            const std::size_t c = i * t_len + t;
            values[c] = spec.kind == DgpKind::nonseparable
                            ? spec.interaction_scale * alpha[i] * gamma[t] + spec.idio_scale * eps[c]
                            : spec.unit_scale * alpha[i] + spec.time_scale * gamma[t] +
                                  spec.idio_scale * eps[c];
        }
    }
    return {n, t_len, 1, std::move(values)};
}

using GeneratedData = std::variant<RegressionPanel, PanelData>;

[[nodiscard]] inline GeneratedData generate(const DgpSpec& spec, const SeedStream& seed) {
    if (spec.kind == DgpKind::linear_regression) return generate_regression(spec, seed);
    return generate_mean_panel(spec, seed);
}

/// V = V_a + c V_b (1 + rho) / (1 - rho) for the projected-mean design.
[[nodiscard]] inline double analytic_v(const DgpSpec& spec, double c) {
    if (!(std::abs(spec.rho) < 1.0)) {
        throw Error(ErrorCode::InvalidRho, "rho=" + std::to_string(spec.rho));
    }
    if (spec.kind != DgpKind::projected_mean) {
        throw Error(ErrorCode::InvalidConfig, "analytic V is defined for projected_mean");
    }
    const double va = spec.unit_scale * spec.unit_scale;
    const double vb = spec.time_scale * spec.time_scale;
    return va + c * vb * (1.0 + spec.rho) / (1.0 - spec.rho);
}

// --- Monte Carlo machinery -------------------------------------------------

/**
 * @brief results[r] = task(r) for r in [0, n), spread over worker threads.
 *
 * Each index is computed exactly once and written to its own slot, so the
 * output does not depend on the thread count. The first exception thrown by
 * a task is rethrown after all workers join.
 */
template <typename Task>
[[nodiscard]] auto run_indexed(std::size_t n, std::size_t threads, const Task& task)
    -> std::vector<decltype(task(std::size_t{0}))> {
    using Result = decltype(task(std::size_t{0}));
    std::vector<std::optional<Result>> slots(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        for (std::size_t r = next++; r < n; r = next++) {
            if (failed) return;
            try {
                slots[r].emplace(task(r));
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
                return;
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<Result> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

enum class CoverageMethod {
    quantile,
    variance,
    variance_bc,
    feasible_variance,
    feasible_variance_bc,
};

[[nodiscard]] inline std::string_view to_string(CoverageMethod m) noexcept {
    switch (m) {
        case CoverageMethod::quantile: return "quantile";
        case CoverageMethod::variance: return "variance";
        case CoverageMethod::variance_bc: return "variance_bc";
        case CoverageMethod::feasible_variance: return "feasible_variance";
        case CoverageMethod::feasible_variance_bc: return "feasible_variance_bc";
    }
    return "unknown";
}

struct FixedSizes {
    std::size_t b = 1;
    std::size_t l = 1;
};

/// One (rho, N, T) design evaluated under one or more methods.
struct StudyCell {
    DgpSpec dgp;
    std::optional<FixedSizes> sizes;  ///< empty: data-driven selection
    std::vector<CoverageMethod> methods;
    std::optional<RateSpec> rate;     ///< empty: dgp.default_rate()
    std::size_t l_min = 4;
    std::size_t iterations = kDefaultIterations;
    bool include_remainder_block = true;
    std::size_t target = 1;           ///< regression coefficient index

    [[nodiscard]] RateSpec effective_rate() const { return rate.value_or(dgp.default_rate()); }
};

struct StudyConfig {
    std::string name = "study";
    std::uint64_t master_seed = 20240611;
    std::size_t n_reps = 1000;
    std::size_t threads = 1;
    double level = 0.95;
    std::vector<StudyCell> cells;
};

/// Outcome of one method on one repetition.
struct RepOutcome {
    bool failed = false;
    bool covered = false;
    bool clipped = false;
    std::size_t b = 0;
    std::size_t l = 0;
};

struct CoverageRow {
    std::string dgp;
    double rho = 0.0;
    std::size_t n_units = 0;
    std::size_t n_periods = 0;
    std::optional<FixedSizes> fixed_sizes;
    std::string method;
    std::size_t n_reps = 0;
    std::size_t n_failed = 0;
    std::size_t n_clipped = 0;
    std::optional<double> coverage;      ///< undefined when no repetition succeeded
    std::optional<double> mc_std_error;
    double mean_b = 0.0;
    double mean_l = 0.0;
    double wall_time = 0.0;
};

struct CoverageReport {
    std::vector<CoverageRow> rows;
};

/// Aggregates per-repetition outcomes; failures are excluded from the denominator.
[[nodiscard]] inline CoverageRow summarize(std::span<const RepOutcome> outcomes) {
    CoverageRow row;
    row.n_reps = outcomes.size();
    std::size_t covered = 0;
    double sum_b = 0.0;
    double sum_l = 0.0;
    for (const auto& o : outcomes) {
        if (o.failed) {
            ++row.n_failed;
            continue;
        }
        covered += o.covered ? 1 : 0;
        row.n_clipped += o.clipped ? 1 : 0;
        sum_b += static_cast<double>(o.b);
        sum_l += static_cast<double>(o.l);
    }
    const std::size_t valid = row.n_reps - row.n_failed;
    if (valid > 0) {
        const double p = static_cast<double>(covered) / static_cast<double>(valid);
        row.coverage = p;
        row.mc_std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(valid));
        row.mean_b = sum_b / static_cast<double>(valid);
        row.mean_l = sum_l / static_cast<double>(valid);
    }
    return row;
}

namespace detail {

[[nodiscard]] inline bool is_feasible(CoverageMethod m) noexcept {
    return m == CoverageMethod::feasible_variance || m == CoverageMethod::feasible_variance_bc;
}
[[nodiscard]] inline bool is_corrected(CoverageMethod m) noexcept {
    return m == CoverageMethod::variance_bc || m == CoverageMethod::feasible_variance_bc;
}

inline void validate_cell(const StudyCell& cell) {
    cell.dgp.validate();
    cell.effective_rate().validate();
    if (cell.methods.empty()) throw Error(ErrorCode::InvalidConfig, "cell lists no methods");
    for (auto m : cell.methods) {
        if (m == CoverageMethod::quantile && !cell.sizes) {
            throw Error(ErrorCode::InvalidConfig,
                        "the quantile method needs fixed sizes; no data-driven rule exists");
        }
        if (is_feasible(m) && cell.dgp.kind != DgpKind::linear_regression) {
            throw Error(ErrorCode::InvalidConfig,
                        std::string(to_string(m)) + " applies to linear_regression only");
        }
    }
    if (cell.dgp.kind == DgpKind::linear_regression && cell.target > 1) {
        throw Error(ErrorCode::InvalidConfig, "target must be 0 or 1");
    }
}

template <typename Body>
[[nodiscard]] RepOutcome guarded(Body&& body) {
    try {
        return body();
    } catch (const Error&) {
        RepOutcome failed;
        failed.failed = true;
        return failed;
    }
}

/// b, l for a variance method: fixed or selected from the panel being subsampled.
[[nodiscard]] inline FixedSizes sizes_for(const StudyCell& cell, const PanelData& subsampled) {
    if (cell.sizes) return *cell.sizes;
    const SizeSelection s = select_sizes(subsampled, cell.l_min, cell.iterations);
    return {s.b, s.l};
}

[[nodiscard]] inline std::vector<RepOutcome> regression_rep(const StudyCell& cell, double level,
                                                            const SeedStream& rep) {
    const RegressionPanel data = generate_regression(cell.dgp, rep.substream(0));
    const std::uint64_t partition_seed = rep.substream(1).derived_seed();
    const RateSpec rate = cell.effective_rate();
    const double truth = cell.target == 1 ? cell.dgp.beta1 : cell.dgp.beta0;
    std::optional<OlsFit> fit;
    std::vector<RepOutcome> out;
    for (auto method : cell.methods) {
        out.push_back(guarded([&]() -> RepOutcome {
            if (!fit) fit = ols_fit(data);
            RepOutcome o;
            if (method == CoverageMethod::quantile) {
                const PanelData stacked = data.stacked();
                SubsamplePlan plan{cell.sizes->b, cell.sizes->l, rate, partition_seed,
                                   cell.include_remainder_block};
                const auto stats = evaluate_subsamples(stacked, plan, OlsStatistic{});
                const std::vector<double> full(fit->beta.data(),
                                               fit->beta.data() + fit->beta.size());
                const auto dist = build_root_distribution(stats, full, cell.target,
                                                          data.n_units(), data.n_periods());
                o.covered = quantile_ci(dist, level, IntervalSide::two_sided_equal_tail)
                                .contains(truth);
                o.b = plan.b;
                o.l = plan.l;
                return o;
            }
            const ScoreMode mode = is_feasible(method) ? ScoreMode::feasible : ScoreMode::infeasible;
            const FixedSizes sz = sizes_for(cell, score_panel(data, *fit, mode));
            SubsamplePlan plan{sz.b, sz.l, rate, partition_seed, cell.include_remainder_block};
            std::optional<SmallSizes> small;
            if (is_corrected(method)) small = default_small_sizes(sz.b, sz.l);
            const SandwichVariance sv = sandwich_variance(data, *fit, plan, mode, small);
            const NormalInterval ci = normal_ci(
                fit->beta(static_cast<Eigen::Index>(cell.target)), sv.variance.scalar(cell.target),
                rate.tau(data.n_units(), data.n_periods()), level);
            o.covered = ci.ci.contains(truth);
            o.clipped = ci.clipped;
            o.b = sz.b;
            o.l = sz.l;
            return o;
        }));
    }
    return out;
}

[[nodiscard]] inline std::vector<RepOutcome> mean_rep(const StudyCell& cell, double level,
                                                      const SeedStream& rep) {
    const PanelData panel = generate_mean_panel(cell.dgp, rep.substream(0));
    const std::uint64_t partition_seed = rep.substream(1).derived_seed();
    const RateSpec rate = cell.effective_rate();
    const double truth = cell.dgp.truth();
    const double estimate = full_estimate(panel, MeanStatistic{})[0];
    const double tau_full = rate.tau(panel.n_units(), panel.n_periods());
    std::vector<RepOutcome> out;
    for (auto method : cell.methods) {
        out.push_back(guarded([&]() -> RepOutcome {
            RepOutcome o;
            const FixedSizes sz = sizes_for(cell, panel);
            SubsamplePlan plan{sz.b, sz.l, rate, partition_seed, cell.include_remainder_block};
            o.b = sz.b;
            o.l = sz.l;
            const auto stats = evaluate_subsamples(panel, plan, MeanStatistic{});
            if (method == CoverageMethod::quantile) {
                const std::vector<double> full{estimate};
                const auto dist = build_root_distribution(stats, full, 0, panel.n_units(),
                                                          panel.n_periods());
                o.covered = quantile_ci(dist, level, IntervalSide::two_sided_equal_tail)
                                .contains(truth);
                return o;
            }
            VarianceEstimate v = sigma_hat(stats);
            if (is_corrected(method)) {
                const SmallSizes small = default_small_sizes(sz.b, sz.l);
                SubsamplePlan small_plan = plan;
                small_plan.b = small.b;
                small_plan.l = small.l;
                v = bias_correct(v, sigma_hat(evaluate_subsamples(panel, small_plan,
                                                                  MeanStatistic{})));
            }
            const NormalInterval ci = normal_ci(estimate, v, tau_full, level);
            o.covered = ci.ci.contains(truth);
            o.clipped = ci.clipped;
            return o;
        }));
    }
    return out;
}

}  // namespace detail

/// Per-repetition outcomes of one cell; repetition r draws from SeedStream(master_seed, r).
[[nodiscard]] inline std::vector<std::vector<RepOutcome>> run_cell(const StudyCell& cell,
                                                                   std::size_t n_reps,
                                                                   std::uint64_t master_seed,
                                                                   double level,
                                                                   std::size_t threads) {
    detail::validate_cell(cell);
    return run_indexed(n_reps, threads, [&](std::size_t r) {
        const SeedStream rep(master_seed, r);
        return cell.dgp.kind == DgpKind::linear_regression ? detail::regression_rep(cell, level, rep)
                                                            : detail::mean_rep(cell, level, rep);
    });
}

/**
 * @brief Monte Carlo coverage of every (cell, method) pair in the study.
 *
 * Rows are emitted in cell order, then method order. Everything but wall_time
 * is a deterministic function of the config.
 */
[[nodiscard]] inline CoverageReport coverage_study(const StudyConfig& config) {
    if (!(config.level > 0.0 && config.level < 1.0)) {
        throw Error(ErrorCode::InvalidLevel, "level=" + std::to_string(config.level));
    }
    for (const auto& cell : config.cells) detail::validate_cell(cell);
    CoverageReport report;
    for (const auto& cell : config.cells) {
        const auto start = std::chrono::steady_clock::now();
        const auto reps = run_cell(cell, config.n_reps, config.master_seed, config.level,
                                   config.threads);
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        for (std::size_t m = 0; m < cell.methods.size(); ++m) {
            std::vector<RepOutcome> column;
            column.reserve(reps.size());
            for (const auto& rep : reps) column.push_back(rep[m]);
            CoverageRow row = summarize(column);
            row.dgp = std::string(to_string(cell.dgp.kind));
            row.rho = cell.dgp.rho;
            row.n_units = cell.dgp.n_units;
            row.n_periods = cell.dgp.n_periods;
            row.fixed_sizes = cell.sizes;
            row.method = std::string(to_string(cell.methods[m]));
            row.wall_time = elapsed;
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

}  // namespace twsub
