#pragma once

#include "twsub/error.hpp"
#include "twsub/panel.hpp"
#include "twsub/simulation.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace twsub::io {

namespace detail {

[[nodiscard]] inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

[[nodiscard]] inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <typename T>
[[nodiscard]] bool parse_number(std::string_view text, T& out) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc{} && ptr == end && !text.empty();
}

}  // namespace detail

/// RFC-4180 field: quoted when it contains a comma, quote, or line break.
[[nodiscard]] inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/**
 * @brief Reads a long-format panel: header `unit,time,v1[,v2,...]`, one row per cell.
 *
 * Parse failures raise ParseError with `source:line`; balance and finiteness
 * failures come from validate_panel.
 */
[[nodiscard]] inline PanelData read_panel_csv(std::istream& in, const std::string& source = "<input>") {
    std::string line;
    std::size_t line_no = 0;
    auto where = [&] { return source + ":" + std::to_string(line_no); };
    if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, source + ": empty input");
    ++line_no;
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = detail::split_csv_line(line);
    if (header.size() < 3 || detail::trim(header[0]) != "unit" || detail::trim(header[1]) != "time") {
        throw Error(ErrorCode::ParseError, where() + ": header must be unit,time,v1[,v2,...]");
    }
    const std::size_t dim = header.size() - 2;
    std::vector<PanelRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != dim + 2) {
            throw Error(ErrorCode::ParseError, where() + ": expected " + std::to_string(dim + 2) +
                                                   " fields, got " + std::to_string(fields.size()));
        }
        PanelRow row{};
        if (!detail::parse_number(fields[0], row.unit) || !detail::parse_number(fields[1], row.time)) {
            throw Error(ErrorCode::ParseError, where() + ": unit and time must be integers");
        }
        row.values.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            if (!detail::parse_number(fields[j + 2], row.values[j])) {
                throw Error(ErrorCode::ParseError,
                            where() + ": cannot parse '" + fields[j + 2] + "' as a number");
            }
            if (!std::isfinite(row.values[j])) {
                throw Error(ErrorCode::NonFiniteValue, where());
            }
        }
        rows.push_back(std::move(row));
    }
    return validate_panel(rows);
}

inline void write_panel_csv(std::ostream& out, const PanelData& panel) {
    out << "unit,time";
    for (std::size_t j = 0; j < panel.dim(); ++j) out << ",v" << (j + 1);
    out << '\n' << std::setprecision(17);
    for (const auto& row : panel_to_rows(panel)) {
        out << row.unit << ',' << row.time;
        for (double v : row.values) out << ',' << v;
        out << '\n';
    }
}

// --- coverage report --------------------------------------------------------

inline constexpr std::string_view kCoverageHeader =
    "dgp,rho,N,T,b,l,method,n_reps,n_failed,n_clipped,coverage,mc_std_error,mean_b,mean_l,wall_time";

inline void write_coverage_csv(std::ostream& out, const CoverageReport& report) {
    out << kCoverageHeader << '\n';
    for (const auto& r : report.rows) {
        std::ostringstream line;
        line << std::setprecision(10);
        line << csv_field(r.dgp) << ',' << r.rho << ',' << r.n_units << ',' << r.n_periods << ',';
        if (r.fixed_sizes) {
            line << r.fixed_sizes->b << ',' << r.fixed_sizes->l;
        } else {
            line << "auto,auto";
        }
        line << ',' << csv_field(r.method) << ',' << r.n_reps << ',' << r.n_failed << ','
             << r.n_clipped << ',';
        if (r.coverage) line << *r.coverage;
        line << ',';
        if (r.mc_std_error) line << *r.mc_std_error;
        line << ',' << r.mean_b << ',' << r.mean_l << ',' << std::fixed << std::setprecision(3)
             << r.wall_time;
        out << line.str() << '\n';
    }
}

/// Human-readable layout: one line per (rho, N, T, b, l, method).
inline void write_coverage_table(std::ostream& out, const CoverageReport& report) {
    auto fmt = [](double v, int digits) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(digits) << v;
        return s.str();
    };
    out << std::left << std::setw(18) << "dgp" << std::right << std::setw(6) << "rho"
        << std::setw(6) << "N" << std::setw(6) << "T" << std::setw(7) << "b" << std::setw(7) << "l"
        << "  " << std::left << std::setw(22) << "method" << std::right << std::setw(10)
        << "coverage" << std::setw(9) << "(se)" << std::setw(8) << "failed" << '\n';
    for (const auto& r : report.rows) {
        // Data-driven rows show the average selected sizes.
        const std::string b = r.fixed_sizes ? std::to_string(r.fixed_sizes->b) : fmt(r.mean_b, 1);
        const std::string l = r.fixed_sizes ? std::to_string(r.fixed_sizes->l) : fmt(r.mean_l, 1);
        out << std::left << std::setw(18) << r.dgp << std::right << std::setw(6) << fmt(r.rho, 2)
            << std::setw(6) << r.n_units << std::setw(6) << r.n_periods << std::setw(7) << b
            << std::setw(7) << l << "  " << std::left << std::setw(22) << r.method << std::right
            << std::setw(10) << (r.coverage ? fmt(*r.coverage, 3) : "n/a") << std::setw(9)
            << (r.mc_std_error ? "(" + fmt(*r.mc_std_error, 3) + ")" : "") << std::setw(8)
            << r.n_failed << '\n';
    }
}

/// Parses a coverage CSV back into rows (used to check the schema round trip).
[[nodiscard]] inline std::vector<std::vector<std::string>> read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) rows.push_back(detail::split_csv_line(line));
    }
    return rows;
}

// --- study configuration ----------------------------------------------------

namespace detail {

[[nodiscard]] inline DgpKind parse_dgp(const std::string& name) {
    if (name == "linear_regression") return DgpKind::linear_regression;
    if (name == "nonseparable") return DgpKind::nonseparable;
    if (name == "projected_mean") return DgpKind::projected_mean;
    throw Error(ErrorCode::InvalidConfig, "unknown dgp '" + name + "'");
}

[[nodiscard]] inline CoverageMethod parse_method(const std::string& name) {
    for (auto m : {CoverageMethod::quantile, CoverageMethod::variance, CoverageMethod::variance_bc,
                   CoverageMethod::feasible_variance, CoverageMethod::feasible_variance_bc}) {
        if (to_string(m) == name) return m;
    }
    throw Error(ErrorCode::InvalidConfig, "unknown method '" + name + "'");
}

/// One cell from a JSON object; `size` overrides N/T/b/l when given (grid expansion).
[[nodiscard]] inline StudyCell parse_cell(const nlohmann::json& j, double rho,
                                          const nlohmann::json& size) {
    auto pick = [&](const char* key) -> const nlohmann::json* {
        if (size.is_object() && size.contains(key)) return &size[key];
        if (j.contains(key)) return &j[key];
        return nullptr;
    };
    const auto* n = pick("N");
    const auto* t = pick("T");
    if (!n || !t) throw Error(ErrorCode::InvalidConfig, "cell needs N and T");
    StudyCell cell;
    cell.dgp = DgpSpec::defaults(parse_dgp(j.at("dgp").get<std::string>()), rho,
                                 n->get<std::size_t>(), t->get<std::size_t>());
    if (j.contains("loadings")) {
        const auto& ld = j["loadings"];
        cell.dgp.unit_scale = ld.value("unit", cell.dgp.unit_scale);
        cell.dgp.time_scale = ld.value("time", cell.dgp.time_scale);
        cell.dgp.idio_scale = ld.value("idio", cell.dgp.idio_scale);
        cell.dgp.interaction_scale = ld.value("interaction", cell.dgp.interaction_scale);
    }
    const auto* b = pick("b");
    const auto* l = pick("l");
    const bool data_driven = j.value("sizes", std::string("fixed")) == "data_driven";
    if (b && l && !data_driven) {
        cell.sizes = FixedSizes{b->get<std::size_t>(), l->get<std::size_t>()};
    } else if (!data_driven) {
        throw Error(ErrorCode::InvalidConfig, "cell needs b and l or \"sizes\": \"data_driven\"");
    }
    for (const auto& m : j.at("methods")) cell.methods.push_back(parse_method(m.get<std::string>()));
    if (j.contains("rate")) {
        cell.rate = RateSpec{j["rate"].at("unit_exponent").get<double>(),
                             j["rate"].at("period_exponent").get<double>()};
    }
    cell.l_min = j.value("l_min", cell.l_min);
    cell.iterations = j.value("iterations", cell.iterations);
    cell.include_remainder_block = j.value("include_remainder_block", cell.include_remainder_block);
    cell.target = j.value("target", cell.target);
    return cell;
}

}  // namespace detail

/**
 * @brief Study config from JSON.
 *
 * Top level: name, master_seed, n_reps, threads, level, and `cells`, an array
 * of cell objects. A cell whose `rho` is an array and/or that carries a
 * `grid` array of {N, T[, b, l]} objects expands to the cross product.
 */
[[nodiscard]] inline StudyConfig parse_study_config(const nlohmann::json& j) {
    try {
        StudyConfig config;
        config.name = j.value("name", config.name);
        config.master_seed = j.value("master_seed", config.master_seed);
        config.n_reps = j.value("n_reps", config.n_reps);
        config.threads = j.value("threads", config.threads);
        config.level = j.value("level", config.level);
        for (const auto& c : j.at("cells")) {
            std::vector<double> rhos;
            if (c.at("rho").is_array()) {
                rhos = c["rho"].get<std::vector<double>>();
            } else {
                rhos.push_back(c["rho"].get<double>());
            }
            const nlohmann::json sizes =
                c.contains("grid") ? c["grid"] : nlohmann::json::array({nlohmann::json()});
            for (double rho : rhos) {
                for (const auto& size : sizes) config.cells.push_back(detail::parse_cell(c, rho, size));
            }
        }
        return config;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
}

[[nodiscard]] inline StudyConfig read_study_config(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what());
    }
    return parse_study_config(j);
}

}  // namespace twsub::io
