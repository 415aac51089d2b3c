// twsub: subsampling inference for two-way clustered panels.
//
//   twsub infer     --panel data.csv [--statistic mean|ols] [--method quantile|variance|variance_bc] ...
//   twsub bandwidth --panel data.csv [--l-min 4] [--iterations 20]
//   twsub simulate  --config study.json [--reps R] [--seed S] [--threads K] [--format csv|table|json]
//
// Exit status: 0 success, 1 usage error, 2 data or validation error.

#include "twsub/twsub.hpp"

#ifdef TWSUB_CLI11_SINGLE_HEADER
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using json = nlohmann::json;

// Every seeded draw in the tool derives from this value unless --seed is given.
constexpr std::uint64_t kDefaultSeed = 20240611;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InferOptions {
    std::string panel;
    std::string statistic = "mean";
    std::string method = "quantile";
    std::optional<std::size_t> b;
    std::optional<std::size_t> l;
    std::optional<std::size_t> small_b;
    std::optional<std::size_t> small_l;
    double level = 0.95;
    std::string side = "two";
    std::optional<double> unit_exponent;
    std::optional<double> period_exponent;
    bool intercept = false;
    bool exclude_remainder = false;
    std::size_t l_min = 4;
    std::size_t iterations = twsub::kDefaultIterations;
};

struct BandwidthOptions {
    std::string panel;
    std::size_t l_min = 4;
    std::size_t iterations = twsub::kDefaultIterations;
};

struct SimulateOptions {
    std::string config;
    std::optional<std::size_t> reps;
    std::optional<std::size_t> threads;
    std::string format = "csv";
};

twsub::PanelData load_panel(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw twsub::Error(twsub::ErrorCode::ParseError, path + ": cannot open");
    return twsub::io::read_panel_csv(in, path);
}

json finite_or_null(double v) {
    return std::isfinite(v) ? json(v) : json(nullptr);
}

json selection_json(const twsub::SizeSelection& s) {
    return {{"l_opt", s.l_opt},   {"l", s.l},
            {"b", s.b},           {"w_opt", s.w_opt},
            {"trace", s.w_trace}, {"coordinate", s.coordinate},
            {"degenerate", s.degenerate}, {"floor_applied", s.floor_applied}};
}

twsub::IntervalSide parse_side(const std::string& side) {
    if (side == "two") return twsub::IntervalSide::two_sided_equal_tail;
    if (side == "lower") return twsub::IntervalSide::one_sided_lower;
    return twsub::IntervalSide::one_sided_upper;
}

// Splits a long-format panel whose first value column is y and the rest are regressors.
twsub::RegressionPanel regression_data(const twsub::PanelData& panel, bool intercept) {
    if (panel.dim() < 2) {
        throw twsub::Error(twsub::ErrorCode::DimensionMismatch,
                           "--statistic ols needs columns y,x1[,x2,...]");
    }
    const std::size_t p = panel.dim() - 1 + (intercept ? 1 : 0);
    std::vector<double> y;
    std::vector<double> x;
    for (std::size_t n = 0; n < panel.n_units(); ++n) {
        for (std::size_t t = 0; t < panel.n_periods(); ++t) {
            auto c = panel.cell(n, t);
            y.push_back(c[0]);
            if (intercept) x.push_back(1.0);
            x.insert(x.end(), c.begin() + 1, c.end());
        }
    }
    return {{panel.n_units(), panel.n_periods(), 1, std::move(y)},
            {panel.n_units(), panel.n_periods(), p, std::move(x)},
            std::nullopt};
}

json run_infer(const InferOptions& o, std::uint64_t seed) {
    using namespace twsub;
    if (o.b.has_value() != o.l.has_value()) throw UsageError("--b and --l must be given together");
    if (o.small_b.has_value() != o.small_l.has_value()) {
        throw UsageError("--small-b and --small-l must be given together");
    }
    if (o.method == "quantile" && !o.b) {
        throw UsageError("--method quantile needs --b and --l");
    }
    if (o.method != "quantile" && o.side != "two") {
        throw UsageError("--side applies to --method quantile only");
    }

    const PanelData panel = load_panel(o.panel);
    const bool ols = o.statistic == "ols";
    std::optional<RegressionPanel> reg;
    std::optional<OlsFit> fit;
    if (ols) {
        reg = regression_data(panel, o.intercept);
        fit = ols_fit(*reg);
    }

    json out{{"statistic", o.statistic},
             {"method", o.method},
             {"panel", o.panel},
             {"n_units", panel.n_units()},
             {"n_periods", panel.n_periods()},
             {"level", o.level},
             {"seed", seed}};

    SubsamplePlan plan;
    plan.partition_seed = SeedStream(seed, 0).derived_seed();
    plan.include_remainder_block = !o.exclude_remainder;
    plan.rate = RateSpec::sqrt_units();
    if (o.unit_exponent) plan.rate.unit_exponent = *o.unit_exponent;
    if (o.period_exponent) plan.rate.period_exponent = *o.period_exponent;
    if (o.b) {
        plan.b = *o.b;
        plan.l = *o.l;
    } else {
        // Sizes come from the series the variance is built on: the panel itself or the scores.
        const PanelData target = ols ? score_panel(*reg, *fit, ScoreMode::feasible) : panel;
        const SizeSelection s = select_sizes(target, o.l_min, o.iterations);
        plan.b = s.b;
        plan.l = s.l;
        out["size_selection"] = selection_json(s);
    }
    out["b"] = plan.b;
    out["l"] = plan.l;
    out["rate"] = {{"unit_exponent", plan.rate.unit_exponent},
                   {"period_exponent", plan.rate.period_exponent}};
    out["include_remainder_block"] = plan.include_remainder_block;
    out["n_subsamples"] = plan.n_subsamples(panel.n_units(), panel.n_periods());

    std::optional<SmallSizes> small;
    if (o.method == "variance_bc") {
        small = o.small_b ? SmallSizes{*o.small_b, *o.small_l} : default_small_sizes(plan.b, plan.l);
        out["small_b"] = small->b;
        out["small_l"] = small->l;
    }

    json warnings = json::array();
    json estimates = json::array();
    const double tau_full = plan.rate.tau(panel.n_units(), panel.n_periods());

    if (o.method == "quantile") {
        const PanelData data = ols ? reg->stacked() : panel;
        SubsampleStatistics stats = ols ? evaluate_subsamples(data, plan, OlsStatistic{})
                                        : evaluate_subsamples(data, plan, MeanStatistic{});
        const std::vector<double> full = ols ? std::vector<double>(fit->beta.data(), fit->beta.data() + fit->beta.size())
                                             : full_estimate(data, MeanStatistic{});
        for (std::size_t j = 0; j < full.size(); ++j) {
            const auto dist = build_root_distribution(stats, full, j, panel.n_units(), panel.n_periods());
            const auto ci = quantile_ci(dist, o.level, parse_side(o.side));
            estimates.push_back({{"coordinate", j},
                                 {"estimate", full[j]},
                                 {"lower", finite_or_null(ci.lower)},
                                 {"upper", finite_or_null(ci.upper)}});
        }
        out["side"] = o.side;
    } else {
        VarianceEstimate v;
        std::vector<double> full;
        if (ols) {
            const auto sw = sandwich_variance(*reg, *fit, plan, ScoreMode::feasible, small);
            if (sw.size_warning) warnings.push_back("b > sqrt(N) or l > sqrt(T)");
            v = sw.variance;
            full.assign(fit->beta.data(), fit->beta.data() + fit->beta.size());
        } else {
            const auto stats = evaluate_subsamples(panel, plan, MeanStatistic{});
            v = sigma_hat(stats);
            if (small) {
                SubsamplePlan small_plan = plan;
                small_plan.b = small->b;
                small_plan.l = small->l;
                v = bias_correct(v, sigma_hat(evaluate_subsamples(panel, small_plan, MeanStatistic{})));
            }
            full = full_estimate(panel, MeanStatistic{});
        }
        for (std::size_t j = 0; j < full.size(); ++j) {
            const auto ci = normal_ci(full[j], v, tau_full, o.level, j);
            if (ci.clipped) warnings.push_back("negative variance clipped to zero for coordinate " + std::to_string(j));
            estimates.push_back({{"coordinate", j},
                                 {"estimate", full[j]},
                                 {"lower", ci.ci.lower},
                                 {"upper", ci.ci.upper},
                                 {"variance", v.scalar(j)},
                                 {"std_error", std::sqrt(std::max(0.0, v.scalar(j))) / tau_full}});
        }
        json matrix = json::array();
        for (Eigen::Index r = 0; r < v.value.rows(); ++r) {
            json row = json::array();
            for (Eigen::Index c = 0; c < v.value.cols(); ++c) row.push_back(v.value(r, c));
            matrix.push_back(row);
        }
        out["variance"] = matrix;
    }
    out["estimates"] = estimates;
    out["warnings"] = warnings;
    return out;
}

json run_bandwidth(const BandwidthOptions& o) {
    const twsub::PanelData panel = load_panel(o.panel);
    json out = selection_json(twsub::select_sizes(panel, o.l_min, o.iterations));
    out["panel"] = o.panel;
    out["n_units"] = panel.n_units();
    out["n_periods"] = panel.n_periods();
    return out;
}

void run_simulate(const SimulateOptions& o, std::optional<std::uint64_t> seed, std::ostream& out) {
    std::ifstream in(o.config);
    if (!in) throw twsub::Error(twsub::ErrorCode::InvalidConfig, o.config + ": cannot open");
    twsub::StudyConfig config = twsub::io::read_study_config(in);
    if (seed) config.master_seed = *seed;
    if (o.reps) config.n_reps = *o.reps;
    if (o.threads) config.threads = *o.threads;
    const twsub::CoverageReport report = twsub::coverage_study(config);
    if (o.format == "table") {
        twsub::io::write_coverage_table(out, report);
    } else if (o.format == "json") {
        json rows = json::array();
        for (const auto& r : report.rows) {
            json row{{"dgp", r.dgp}, {"rho", r.rho}, {"N", r.n_units}, {"T", r.n_periods},
                     {"method", r.method}, {"n_reps", r.n_reps}, {"n_failed", r.n_failed},
                     {"n_clipped", r.n_clipped}, {"mean_b", r.mean_b}, {"mean_l", r.mean_l},
                     {"wall_time", r.wall_time}};
            row["b"] = r.fixed_sizes ? json(r.fixed_sizes->b) : json("auto");
            row["l"] = r.fixed_sizes ? json(r.fixed_sizes->l) : json("auto");
            row["coverage"] = r.coverage ? json(*r.coverage) : json(nullptr);
            row["mc_std_error"] = r.mc_std_error ? json(*r.mc_std_error) : json(nullptr);
            rows.push_back(row);
        }
        out << json{{"name", config.name}, {"master_seed", config.master_seed},
                    {"level", config.level}, {"rows", rows}}.dump(2)
            << '\n';
    } else {
        twsub::io::write_coverage_csv(out, report);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Subsampling inference for two-way clustered panel data"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::optional<std::uint64_t> seed;
    std::string output;
    app.add_option("--seed", seed, "Master seed (default 20240611)")->capture_default_str();
    app.add_option("-o,--output", output, "Write results to this file instead of stdout");

    InferOptions infer;
    auto* infer_cmd = app.add_subcommand("infer", "Confidence intervals for the mean or OLS coefficients");
    infer_cmd->add_option("--panel", infer.panel, "Long-format CSV: unit,time,v1[,v2,...]")
        ->required()
        ->check(CLI::ExistingFile);
    infer_cmd->add_option("--statistic", infer.statistic, "mean, or ols with v1 = y and the rest regressors")
        ->check(CLI::IsMember({"mean", "ols"}))
        ->capture_default_str();
    infer_cmd->add_option("--method", infer.method, "quantile, variance or variance_bc")
        ->check(CLI::IsMember({"quantile", "variance", "variance_bc"}))
        ->capture_default_str();
    infer_cmd->add_option("--b", infer.b, "Units per block (data-driven when --b/--l are omitted)")
        ->check(CLI::PositiveNumber);
    infer_cmd->add_option("--l", infer.l, "Window length")->check(CLI::PositiveNumber);
    infer_cmd->add_option("--small-b", infer.small_b, "Block size for bias correction (default floor(sqrt(b)))")
        ->check(CLI::PositiveNumber);
    infer_cmd->add_option("--small-l", infer.small_l, "Window length for bias correction (default floor(sqrt(l)))")
        ->check(CLI::PositiveNumber);
    infer_cmd->add_option("--level", infer.level, "Confidence level")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    infer_cmd->add_option("--side", infer.side, "two, lower or upper")
        ->check(CLI::IsMember({"two", "lower", "upper"}))
        ->capture_default_str();
    infer_cmd->add_option("--rate-units", infer.unit_exponent, "Exponent p in tau = N^p T^q (default 0.5)");
    infer_cmd->add_option("--rate-periods", infer.period_exponent, "Exponent q in tau = N^p T^q (default 0)");
    infer_cmd->add_flag("--intercept", infer.intercept, "Add a constant regressor (ols)");
    infer_cmd->add_flag("--exclude-remainder", infer.exclude_remainder, "Drop the short last unit block");
    infer_cmd->add_option("--l-min", infer.l_min, "Floor on the data-driven window length")->capture_default_str();
    infer_cmd->add_option("--iterations", infer.iterations, "Plug-in iterations")->capture_default_str();

    BandwidthOptions bw;
    auto* bw_cmd = app.add_subcommand("bandwidth", "Data-driven subsample sizes");
    bw_cmd->add_option("--panel", bw.panel, "Long-format CSV")->required()->check(CLI::ExistingFile);
    bw_cmd->add_option("--l-min", bw.l_min, "Floor on l")->capture_default_str();
    bw_cmd->add_option("--iterations", bw.iterations, "Plug-in iterations")->capture_default_str();

    SimulateOptions sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo coverage study");
    sim_cmd->add_option("--config", sim.config, "Study JSON")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--reps", sim.reps, "Repetitions per cell (overrides the config)");
    sim_cmd->add_option("--threads", sim.threads, "Worker threads (overrides the config)");
    sim_cmd->add_option("--format", sim.format, "csv, table or json")
        ->check(CLI::IsMember({"csv", "table", "json"}))
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    std::ofstream file;
    if (!output.empty()) {
        file.open(output);
        if (!file) {
            std::cerr << "twsub: cannot write " << output << '\n';
            return kExitData;
        }
    }
    std::ostream& out = output.empty() ? std::cout : file;

    try {
        if (*infer_cmd) {
            out << run_infer(infer, seed.value_or(kDefaultSeed)).dump(2) << '\n';
        } else if (*bw_cmd) {
            out << run_bandwidth(bw).dump(2) << '\n';
        } else {
            // A seed in the study file is used unless --seed overrides it.
            run_simulate(sim, seed, out);
        }
    } catch (const UsageError& e) {
        std::cerr << "twsub: usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const twsub::Error& e) {
        std::cerr << "twsub: " << e.what() << '\n';
        return kExitData;
    }
    return 0;
}
