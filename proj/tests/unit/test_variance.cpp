#include <catch2/catch_amalgamated.hpp>

#include "../support/expect.hpp"
#include "../support/oracles.hpp"
#include "twsub/statistics.hpp"
#include "twsub/variance.hpp"

#include <cmath>
#include <vector>

using namespace twsub;

namespace {

SubsampleStatistics scalar_stats(std::vector<double> values, std::size_t b, std::size_t l) {
    const std::size_t m = values.size();
    return {SubsamplePlan{b, l}, 1, m, 1, std::move(values), std::vector<std::size_t>(m, b)};
}

}  // namespace

TEST_CASE("sigma_hat on hand-computed inputs", "[variance]") {
    // Subsample means {0, 2}, tau_bl^2 = b = 2: 2 * ((0-1)^2 + (2-1)^2) / 2 = 2.
    CHECK(sigma_hat(scalar_stats({0, 2}, 2, 1)).scalar() == Catch::Approx(2.0));
    const PanelData flat(5, 5, 1, std::vector<double>(25, -1.0));
    CHECK(sigma_hat(evaluate_subsamples(flat, SubsamplePlan{2, 2}, MeanStatistic{})).scalar() ==
          Catch::Approx(0.0).margin(1e-30));
    CHECK(error_code_of([] { (void)sigma_hat(scalar_stats({}, 1, 1)); }) ==
          ErrorCode::EmptyStatistics);
}

TEST_CASE("sigma_hat matches the direct formula", "[variance]") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const PanelData p = oracle::random_panel(9, 8, seed);
        const SubsamplePlan plan{3, 4, RateSpec{0.5, 0.5}, seed};
        const auto stats = evaluate_subsamples(p, plan, MeanStatistic{});
        const double want = oracle::scaled_variance(stats.coordinate(0), std::sqrt(12.0));
        CHECK(oracle::rel_close(sigma_hat(stats).scalar(), want, 1e-12));
    }
}

TEST_CASE("vector statistics give a symmetric PSD matrix", "[variance]") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const PanelData p = oracle::random_panel(10, 9, seed, 3);
        const auto stats = evaluate_subsamples(p, SubsamplePlan{2, 3, {}, seed}, MeanStatistic{});
        const Matrix v = sigma_hat(stats).value;
        CHECK((v - v.transpose()).norm() == 0.0);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(v);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(oracle::rel_close(v(j, j), oracle::scaled_variance(stats.coordinate(j), std::sqrt(2.0)),
                                    1e-12));
        }
    }
}

TEST_CASE("sigma_hat shift invariance and scale equivariance", "[variance]") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const PanelData p = oracle::random_panel(12, 10, seed);
        const SubsamplePlan plan{4, 3, {}, seed};
        auto sig = [&](const PanelData& q) {
            return sigma_hat(evaluate_subsamples(q, plan, MeanStatistic{})).scalar();
        };
        const double base = sig(p);
        CHECK(base >= 0.0);
        CHECK(sig(p.map([](double x) { return x + 7.5; })) == Catch::Approx(base).epsilon(1e-9));
        CHECK(sig(p.map([](double x) { return 3.0 * x; })) == Catch::Approx(9.0 * base).epsilon(1e-12));
    }
}

TEST_CASE("sigma_hat equals the variance of the quantile roots", "[variance]") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const PanelData p = oracle::random_panel(3 + seed % 5, 3 + seed % 4, seed);
        const SubsamplePlan plan{1 + seed % 3, 1 + seed % 3, {}, seed};
        const auto stats = evaluate_subsamples(p, plan, MeanStatistic{});
        const auto dist =
            build_root_distribution(stats, full_estimate(p, MeanStatistic{}), 0, p.n_units(), p.n_periods());
        std::vector<double> roots(dist.roots().begin(), dist.roots().end());
        CHECK(oracle::rel_close(sigma_hat(stats).scalar(), oracle::scaled_variance(roots, 1.0), 1e-12));
    }
}

TEST_CASE("bias correction", "[variance]") {
    CHECK(correction_factor(9, 3) == 0.5);
    CHECK(error_code_of([] { (void)correction_factor(3, 3); }) == ErrorCode::DegenerateCorrection);
    CHECK(error_code_of([] { (void)correction_factor(3, 4); }) == ErrorCode::DegenerateCorrection);

    VarianceEstimate full{Matrix::Constant(1, 1, 4.0), SubsamplePlan{9, 9}, false, std::nullopt};
    VarianceEstimate small{Matrix::Constant(1, 1, 5.0), SubsamplePlan{3, 3}, false, std::nullopt};
    const auto bc = bias_correct(full, small);
    CHECK(bc.scalar() == Catch::Approx(3.5));
    CHECK(bc.corrected);
    REQUIRE(bc.small_plan);
    CHECK(bc.small_plan->l == 3);

    small.value(0, 0) = 4.0;
    CHECK(bias_correct(full, small).scalar() == 4.0);

    const PanelData p = oracle::random_panel(16, 16, 5);
    const auto big = evaluate_subsamples(p, SubsamplePlan{4, 9, {}, 1}, MeanStatistic{});
    const auto tiny = evaluate_subsamples(p, SubsamplePlan{2, 3, {}, 1}, MeanStatistic{});
    const double want = sigma_hat(big).scalar() -
                        0.5 * (sigma_hat(tiny).scalar() - sigma_hat(big).scalar());
    CHECK(sigma_hat_bc(big, tiny).scalar() == Catch::Approx(want));
}

TEST_CASE("default small sizes", "[variance]") {
    CHECK(default_small_sizes(9, 16).b == 3);
    CHECK(default_small_sizes(9, 16).l == 4);
    CHECK(default_small_sizes(8, 15).b == 2);
    CHECK(default_small_sizes(8, 15).l == 3);
    CHECK(default_small_sizes(1, 1).b == 1);
    CHECK(default_small_sizes(1, 3).l == 1);
}

TEST_CASE("normal intervals", "[variance]") {
    const auto ci = normal_ci(0.0, 1.0, 10.0, 0.95);
    CHECK(ci.ci.upper == Catch::Approx(0.1959964).epsilon(1e-6));
    CHECK(ci.ci.lower == Catch::Approx(-0.1959964).epsilon(1e-6));
    CHECK_FALSE(ci.clipped);
    const auto point = normal_ci(2.0, 0.0, 10.0, 0.95);
    CHECK(point.ci.lower == 2.0);
    CHECK(point.ci.upper == 2.0);
    const auto clipped = normal_ci(2.0, -0.3, 10.0, 0.95);
    CHECK(clipped.clipped);
    CHECK(clipped.ci.lower == 2.0);
    CHECK(error_code_of([] { (void)normal_ci(2.0, -0.3, 10.0, 0.95, false); }) ==
          ErrorCode::NegativeVariance);
    CHECK(error_code_of([] { (void)normal_ci(2.0, 1.0, 10.0, 1.5); }) == ErrorCode::InvalidLevel);
    CHECK(normal_quantile(0.975) == Catch::Approx(1.959963984540054).epsilon(1e-14));
}
