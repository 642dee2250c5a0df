#pragma once

// CSV ingestion and emission, and JSON serialisation of results.

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "qdar/backtest.hpp"
#include "qdar/core.hpp"
#include "qdar/diagnose.hpp"
#include "qdar/errors.hpp"
#include "qdar/estimate.hpp"
#include "qdar/select.hpp"
#include "qdar/simulate.hpp"

namespace qdar::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSpecVersion = "1.0";

// ---------------------------------------------------------------------------
// CSV

struct CsvSeries {
    SeriesSample series;
    std::string column;               ///< name of the value column
    std::vector<std::string> dates;   ///< date column when present
    std::vector<std::string> notes;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = b + s.size();
    if (*b == '+') ++b;
    const auto r = std::from_chars(b, e, out);
    return r.ec == std::errc() && r.ptr == e;
}

}  // namespace detail

/// Parses CSV text with a required header row. Lines starting with '#' and blank lines
/// are skipped. With one column it is the value column; otherwise `column` selects it,
/// or the single column not named "date" is used. Non-finite values are rejected.
inline CsvSeries parse_series_csv(std::istream& in, const std::string& source = "<stream>",
                                  const std::string& column = "") {
    std::string line;
    std::vector<std::string> header;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        header = detail::split(t);
        break;
    }
    if (header.empty()) fail(ErrorKind::Parse, source + ": missing header row");

    CsvSeries out;
    int value_col = -1, date_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string h = detail::lower(header[c]);
        if (date_col < 0 && (h == "date" || h == "time" || h == "timestamp")) date_col = static_cast<int>(c);
    }
    if (!column.empty()) {
        const auto it = std::find(header.begin(), header.end(), column);
        if (it == header.end()) fail(ErrorKind::Parse, source + ": no column named '" + column + "'");
        value_col = static_cast<int>(it - header.begin());
    } else if (header.size() == 1) {
        value_col = 0;
    } else if (header.size() == 2 && date_col >= 0) {
        value_col = 1 - date_col;
    } else {
        fail(ErrorKind::Parse, source + ": expected one numeric column (plus an optional date column); "
                                        "select one with a column name");
    }
    if (date_col == value_col) date_col = -1;
    if (date_col >= 0) out.notes.push_back("date column '" + header[date_col] + "' ignored");
    out.column = header[value_col];

    int row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        ++row;
        const auto cells = detail::split(t);
        const std::string where = source + ": line " + std::to_string(line_no) + " (data row " +
                                  std::to_string(row) + "), column '" + out.column + "'";
        if (static_cast<int>(cells.size()) <= value_col) fail(ErrorKind::Parse, where + ": missing value");
        double v = 0.0;
        if (!detail::parse_double(cells[value_col], v))
            fail(ErrorKind::Parse, where + ": cannot parse '" + cells[value_col] + "' as a number");
        if (!std::isfinite(v)) fail(ErrorKind::Parse, where + ": non-finite value '" + cells[value_col] + "'");
        out.series.values.push_back(v);
        if (date_col >= 0) out.dates.push_back(static_cast<int>(cells.size()) > date_col ? cells[date_col] : "");
    }
    out.series.origin = source;
    return out;
}

inline CsvSeries read_series_csv(const std::string& path, const std::string& column = "") {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Parse, "cannot open '" + path + "'");
    return parse_series_csv(in, path, column);
}

inline std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline void write_series_csv(std::ostream& out, const SeriesSample& s, const std::string& header = "y") {
    out << header << '\n';
    for (double v : s.values) out << format_double(v) << '\n';
}

/// Writes rows of doubles under a header; NaN cells are left empty.
inline void write_table_csv(std::ostream& out, const std::vector<std::string>& header,
                            const std::vector<std::vector<double>>& rows) {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i) out << ',';
            if (std::isfinite(r[i])) out << format_double(r[i]);
        }
        out << '\n';
    }
}

/// Coefficient curves from a table with columns tau, b, phi1..phip, beta1..betap.
/// Curves are piecewise linear in tau and held constant beyond the first and last rows.
inline CoefficientFunctions read_coefficient_table(std::istream& in, const std::string& source = "<stream>") {
    std::string line;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto cells = detail::split(t);
        if (header.empty()) {
            header = cells;
            continue;
        }
        if (cells.size() != header.size())
            fail(ErrorKind::Parse, source + ": line " + std::to_string(line_no) + " has " +
                                       std::to_string(cells.size()) + " cells, header has " +
                                       std::to_string(header.size()));
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c)
            if (!detail::parse_double(cells[c], row[c]) || !std::isfinite(row[c]))
                fail(ErrorKind::Parse, source + ": line " + std::to_string(line_no) + ", column '" + header[c] +
                                           "': bad value '" + cells[c] + "'");
        rows.push_back(std::move(row));
    }
    if (header.size() < 4 || header.size() % 2 != 0 || detail::lower(header[0]) != "tau" ||
        detail::lower(header[1]) != "b")
        fail(ErrorKind::Parse, source + ": header must be tau,b,phi1..phip,beta1..betap");
    if (rows.size() < 2) fail(ErrorKind::Parse, source + ": need at least two rows");
    for (std::size_t r = 1; r < rows.size(); ++r)
        if (!(rows[r][0] > rows[r - 1][0])) fail(ErrorKind::Parse, source + ": tau column must increase");
    const int p = static_cast<int>(header.size() - 2) / 2;
    auto curve = [rows](std::size_t col) {
        return CoefFn([rows, col](double tau) {
            if (tau <= rows.front()[0]) return rows.front()[col];
            if (tau >= rows.back()[0]) return rows.back()[col];
            const auto it = std::upper_bound(rows.begin(), rows.end(), tau,
                                             [](double v, const std::vector<double>& r) { return v < r[0]; });
            const auto& hi = *it;
            const auto& lo = *(it - 1);
            const double a = (tau - lo[0]) / (hi[0] - lo[0]);
            return lo[col] + a * (hi[col] - lo[col]);
        });
    };
    CoefficientFunctions c;
    c.b_fn = curve(1);
    for (int i = 0; i < p; ++i) c.phi_fns.push_back(curve(2 + i));
    for (int j = 0; j < p; ++j) c.beta_fns.push_back(curve(2 + p + j));
    c.description = "coefficient table " + source;
    return c;
}

inline CoefficientFunctions read_coefficient_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Parse, "cannot open '" + path + "'");
    return read_coefficient_table(in, path);
}

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const Vector& v) {
    Json a = Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Json to_json(const Matrix& m) {
    Json a = Json::array();
    for (int i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        a.push_back(row);
    }
    return a;
}

inline Json to_json(const ThetaTau& t) { return Json{{"phi", t.phi}, {"b", t.b}, {"beta", t.beta}}; }

inline ThetaTau theta_from_json(double tau, const Json& j) {
    ThetaTau t;
    t.tau = tau;
    t.phi = j.at("phi").get<std::vector<double>>();
    t.b = j.at("b").get<double>();
    t.beta = j.at("beta").get<std::vector<double>>();
    t.validate();
    return t;
}

inline std::string to_string(const WeightScheme& w) {
    return w.kind == WeightKind::Unit ? "unit" : "cubic";
}

inline Json to_json(const FitResult& f) {
    Json j;
    j["tau"] = f.theta.tau;
    j["p"] = f.p;
    j["n"] = f.n;
    j["theta"] = to_json(f.theta);
    j["asd"] = f.has_covariance ? to_json(f.asd) : Json::array();
    j["covariance"] = f.has_covariance ? to_json(f.covariance) : Json::array();
    j["loss"] = f.loss;
    j["bandwidth"] = Json{{"rule", to_string(f.bandwidth.rule)}, {"value", f.bandwidth.value}};
    j["converged"] = f.converged;
    j["seed"] = f.seed;
    j["starts_tried"] = f.starts_tried;
    j["weights"] = to_string(f.weights);
    j["beta_constrained"] = f.beta_constrained;
    j["ridge"] = f.ridge;
    j["warnings"] = f.warnings;
    return j;
}

inline Json to_json(const BicTable& t) {
    Json j;
    j["p_max"] = t.p_max;
    j["n"] = t.n;
    j["levels"] = t.levels;
    j["combined"] = to_json(t.combined);
    j["chosen"] = t.chosen;
    j["degenerate"] = t.degenerate;
    Json per = Json::array();
    for (int k = 0; k < t.per_level.rows(); ++k) {
        Json row = Json::array();
        for (int p = 0; p < t.per_level.cols(); ++p) {
            const double v = t.per_level(k, p);
            row.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
        }
        per.push_back(row);
    }
    j["per_level"] = per;
    j["warnings"] = t.warnings;
    return j;
}

inline Json to_json(const QacfReport& r) {
    Json j;
    j["K"] = r.K;
    j["n"] = r.n;
    j["p"] = r.p;
    j["tau"] = r.tau;
    j["rho"] = to_json(r.rho);
    j["r"] = to_json(r.r);
    j["ci_halfwidths"] = to_json(r.ci_halfwidths);
    j["pi_hat"] = to_json(r.pi_hat);
    j["psd_deviation"] = r.psd_deviation;
    j["mu1"] = r.mu1;
    j["mu2"] = r.mu2;
    j["sigma1_sq"] = r.sigma1_sq;
    j["sigma2_sq"] = r.sigma2_sq;
    return j;
}

inline Json to_json(const PortmanteauResult& p) {
    return Json{{"K", p.K},   {"q1", p.q1}, {"q2", p.q2},         {"q", p.q},      {"p1", p.p1},
                {"p2", p.p2}, {"p", p.p_comb}, {"B", p.B}, {"seed", p.seed}};
}

inline Json to_json(const BacktestReport& r) {
    Json j;
    j["tau"] = r.tau;
    j["m"] = r.m;
    j["hits"] = r.hits;
    j["ecr"] = r.ecr;
    j["cc_stat"] = r.cc_stat;
    j["cc_pvalue"] = r.cc_pvalue;
    j["cc_degenerate"] = r.cc_degenerate;
    j["dq_stat"] = r.dq_stat;
    j["dq_pvalue"] = r.dq_pvalue;
    j["dq_df"] = r.dq_df;
    j["failed_fits"] = r.failed_fits;
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

/// Wraps a payload with the schema version and the resolved run configuration.
inline Json envelope(const std::string& command, const Json& config, const Json& result) {
    Json j;
    j["spec_version"] = kSpecVersion;
    j["command"] = command;
    j["config"] = config;
    j["result"] = result;
    return j;
}

inline void write_json(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::InvalidArgument, "cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

}  // namespace qdar::io
