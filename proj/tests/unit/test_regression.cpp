#include <catch2/catch_amalgamated.hpp>

#include "../support/expect.hpp"
#include "../support/oracles.hpp"
#include "twsub/regression.hpp"
#include "twsub/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

using namespace twsub;

namespace {

RegressionPanel simulated(double rho, std::size_t n, std::uint64_t seed) {
    return generate_regression(DgpSpec::defaults(DgpKind::linear_regression, rho, n, n),
                               SeedStream(seed, 0));
}

}  // namespace

TEST_CASE("perfect fit without intercept", "[regression]") {
    const PanelData x = oracle::random_panel(4, 5, 1);
    const auto fit = ols_fit({x, x, std::nullopt});
    CHECK(fit.beta(0) == Catch::Approx(1.0));
    for (double r : fit.residuals.raw()) CHECK(r == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("intercept-only fit recovers the constant", "[regression]") {
    const PanelData y(3, 4, 1, std::vector<double>(12, 2.75));
    const PanelData ones(3, 4, 1, std::vector<double>(12, 1.0));
    CHECK(ols_fit({y, ones, std::nullopt}).beta(0) == Catch::Approx(2.75));
}

TEST_CASE("3x3 panel against hand-solved normal equations", "[regression]") {
    const std::vector<double> xs{1, 2, 4, 0, 3, 5, 2, 2, 6};
    const std::vector<double> ys{2, 3, 7, 1, 4, 9, 2, 5, 10};
    std::vector<double> design;
    for (double v : xs) {
        design.push_back(1.0);
        design.push_back(v);
    }
    const auto fit = ols_fit({PanelData(3, 3, 1, ys), PanelData(3, 3, 2, design), std::nullopt});
    // Sum x = 25, sum x^2 = 99, sum y = 43, sum xy = 167, n = 9:
    // slope = (9*167 - 25*43) / (9*99 - 25^2) = 428/266, intercept = (43 - 25*slope)/9.
    const double slope = 428.0 / 266.0;
    const double intercept = (43.0 - 25.0 * slope) / 9.0;
    CHECK(fit.beta(1) == Catch::Approx(slope).epsilon(1e-12));
    CHECK(fit.beta(0) == Catch::Approx(intercept).epsilon(1e-12));
    CHECK(fit.phi(0, 1) == fit.phi(1, 0));
    CHECK(fit.phi(1, 1) == Catch::Approx(99.0 / 9.0));
    for (std::size_t c = 0; c < 9; ++c) {
        CHECK(fit.residuals.raw()[c] == Catch::Approx(ys[c] - intercept - slope * xs[c]));
    }
    const auto stacked = RegressionPanel{PanelData(3, 3, 1, ys), PanelData(3, 3, 2, design), std::nullopt}.stacked();
    const auto sub = full_estimate(stacked, OlsStatistic{});
    CHECK(sub[1] == Catch::Approx(slope).epsilon(1e-12));
}

TEST_CASE("collinear design is rejected", "[regression]") {
    std::vector<double> design;
    for (int i = 0; i < 12; ++i) {
        design.push_back(1.0);
        design.push_back(2.0);
    }
    const PanelData y = oracle::random_panel(3, 4, 2);
    CHECK(error_code_of([&] { (void)ols_fit({y, PanelData(3, 4, 2, design), std::nullopt}); }) ==
          ErrorCode::SingularDesign);
    CHECK(error_code_of([&] { (void)ols_fit({y, oracle::random_panel(3, 5, 1), std::nullopt}); }) ==
          ErrorCode::DimensionMismatch);
}

TEST_CASE("score panels", "[regression]") {
    const auto data = simulated(0.25, 30, 4);
    const auto fit = ols_fit(data);
    const PanelData feasible = score_panel(data, fit, ScoreMode::feasible);
    const auto mean = full_estimate(feasible, MeanStatistic{});
    for (double m : mean) CHECK(m == Catch::Approx(0.0).margin(1e-12));
    const PanelData infeasible = score_panel(data, fit, ScoreMode::infeasible);
    CHECK(infeasible.at(3, 4, 1) == Catch::Approx(data.x.at(3, 4, 1) * data.u->at(3, 4)));

    RegressionPanel no_u{data.y, data.x, std::nullopt};
    CHECK(error_code_of([&] { (void)score_panel(no_u, fit, ScoreMode::infeasible); }) ==
          ErrorCode::MissingTrueErrors);
}

TEST_CASE("feasible equals infeasible when residuals use the true beta", "[regression]") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto data = simulated(0.5, 40, seed);
        const auto fit = ols_fit(data);
        OlsFit truth_fit = fit;
        truth_fit.residuals = *data.u;
        const SubsamplePlan plan{6, 6, {}, seed};
        const auto a = sandwich_variance(data, fit, plan, ScoreMode::infeasible);
        const auto b = sandwich_variance(data, truth_fit, plan, ScoreMode::feasible);
        CHECK(a.variance.value == b.variance.value);
        CHECK(a.score.value == b.score.value);
        const auto abc = sandwich_variance(data, fit, plan, ScoreMode::infeasible, SmallSizes{2, 2});
        const auto bbc = sandwich_variance(data, truth_fit, plan, ScoreMode::feasible, SmallSizes{2, 2});
        CHECK(abc.variance.value == bbc.variance.value);
    }
}

TEST_CASE("zero residuals give a zero sandwich", "[regression]") {
    const PanelData x = oracle::random_panel(6, 6, 3, 2);
    const PanelData y(6, 6, 1, std::vector<double>(36, 0.0));
    RegressionPanel data{y, x, std::nullopt};
    const auto fit = ols_fit(data);
    const auto v = sandwich_variance(data, fit, SubsamplePlan{2, 2}, ScoreMode::feasible);
    CHECK(v.variance.value.norm() == 0.0);
    CHECK(error_code_of([&] { (void)t_statistic(fit, v.variance, 0, 1.0); }) == ErrorCode::ZeroVariance);
}

TEST_CASE("sandwich is symmetric and PSD and wired through the score variance", "[regression]") {
    const auto data = simulated(0.25, 50, 8);
    const auto fit = ols_fit(data);
    const SubsamplePlan plan{7, 7, {}, 3};
    for (auto mode : {ScoreMode::infeasible, ScoreMode::feasible}) {
        const auto sv = sandwich_variance(data, fit, plan, mode);
        const Matrix& v = sv.variance.value;
        CHECK((v - v.transpose()).norm() == 0.0);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(v);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
        const auto scores = score_panel(data, fit, mode);
        const Matrix sigma = sigma_hat(evaluate_subsamples(scores, plan, MeanStatistic{})).value;
        CHECK((sv.score.value - sigma).norm() < 1e-14);
        CHECK((v - fit.phi_inv * sigma * fit.phi_inv).norm() < 1e-12);
        CHECK(sv.size_warning == false);
    }
    CHECK(sandwich_variance(data, fit, SubsamplePlan{8, 3}, ScoreMode::feasible).size_warning);
}

TEST_CASE("t statistic arithmetic", "[regression]") {
    const OlsFit fit{Vector::Constant(1, 0.6), Matrix::Identity(1, 1), Matrix::Identity(1, 1),
                     PanelData(100, 1, 1, std::vector<double>(100, 0.0))};
    const VarianceEstimate v{Matrix::Identity(1, 1), SubsamplePlan{}, false, std::nullopt};
    CHECK(t_statistic(fit, v, 0, 0.5) == Catch::Approx(1.0));
    CHECK(t_statistic(fit, v, 0, 0.6) == 0.0);
    const auto ci = regression_ci(fit, v, 0, 0.95);
    CHECK(ci.ci.upper - 0.6 == Catch::Approx(0.1959964).epsilon(1e-6));
}

TEST_CASE("t statistic is invariant to regressor scaling", "[regression]") {
    const auto data = simulated(0.25, 40, 12);
    const double s = 7.5;
    const PanelData scaled_x = data.x.map([](double v) { return v; });
    std::vector<double> xs(scaled_x.raw().begin(), scaled_x.raw().end());
    for (std::size_t c = 1; c < xs.size(); c += 2) xs[c] *= s;
    const RegressionPanel scaled{data.y, PanelData(40, 40, 2, xs), data.u};
    const SubsamplePlan plan{6, 6, {}, 1};
    for (auto mode : {ScoreMode::infeasible, ScoreMode::feasible}) {
        const auto fa = ols_fit(data);
        const auto fb = ols_fit(scaled);
        CHECK(fb.beta(1) == Catch::Approx(fa.beta(1) / s));
        const auto va = sandwich_variance(data, fa, plan, mode).variance;
        const auto vb = sandwich_variance(scaled, fb, plan, mode).variance;
        CHECK(vb.scalar(1) == Catch::Approx(va.scalar(1) / (s * s)).epsilon(1e-10));
        CHECK(t_statistic(fb, vb, 1, 0.3 / s) == Catch::Approx(t_statistic(fa, va, 1, 0.3)).epsilon(1e-10));
    }
}

TEST_CASE("feasible and infeasible score variances converge", "[regression]") {
    std::vector<double> medians;
    for (std::size_t n : {50u, 100u, 200u}) {
        const auto bl = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
        std::vector<double> gaps;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto data = simulated(0.25, n, 900 + seed);
            const auto fit = ols_fit(data);
            const SubsamplePlan plan{bl, bl, {}, seed};
            const auto a = sandwich_variance(data, fit, plan, ScoreMode::infeasible).score.value;
            const auto b = sandwich_variance(data, fit, plan, ScoreMode::feasible).score.value;
            gaps.push_back((a - b).norm());
        }
        std::nth_element(gaps.begin(), gaps.begin() + 50, gaps.end());
        medians.push_back(gaps[50]);
    }
    INFO("medians " << medians[0] << " " << medians[1] << " " << medians[2]);
    CHECK(medians[1] < medians[0]);
    CHECK(medians[2] < medians[1]);
}
