#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "grade/dynamics.hpp"
#include "grade/grade.hpp"

namespace grade {

inline constexpr int kSchemaVersion = 1;

// Shortest round-trip decimal form.
inline std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const char* what, std::size_t line_no) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e)
        throw ConfigError(std::string("line ") + std::to_string(line_no) + ": cannot parse " + what + " '" + s + "'");
    return v;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    return f;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset CSV: header "experiment,time,x1,...,xp"; time in rescaled [0,1].

inline void write_dataset_csv(const std::filesystem::path& path, const TimeSeriesDataset& data) {
    auto f = detail::open_out(path);
    f << "experiment,time";
    for (int j = 1; j <= data.p; ++j) f << ",x" << j;
    f << "\n";
    for (int r = 0; r < data.R; ++r)
        for (int i = 0; i < data.n; ++i) {
            f << (r + 1) << "," << fmt_double(data.times(i));
            for (int j = 0; j < data.p; ++j) f << "," << fmt_double(data.y[r](i, j));
            f << "\n";
        }
}

inline TimeSeriesDataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open dataset: " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw ConfigError("line 1: empty dataset file");
    auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "experiment" || header[1] != "time")
        throw ConfigError("line 1: expected header 'experiment,time,x1,...'");
    const int p = static_cast<int>(header.size()) - 2;
    for (int j = 0; j < p; ++j)
        if (header[2 + j] != "x" + std::to_string(j + 1))
            throw ConfigError("line 1: variable columns must be x1..xp in order");
    struct Row {
        int exp;
        double t;
        std::vector<double> x;
    };
    std::vector<Row> rows;
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (static_cast<int>(cells.size()) != p + 2)
            throw ConfigError("line " + std::to_string(line_no) + ": expected " + std::to_string(p + 2) +
                              " fields, got " + std::to_string(cells.size()));
        Row row;
        row.exp = static_cast<int>(parse_double(cells[0], "experiment", line_no));
        row.t = parse_double(cells[1], "time", line_no);
        for (int j = 0; j < p; ++j) row.x.push_back(parse_double(cells[2 + j], "value", line_no));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("dataset has no data rows");
    int R = 0;
    for (const auto& r : rows) R = std::max(R, r.exp);
    if (R < 1) throw ConfigError("experiment indices must start at 1");
    const int n = static_cast<int>(rows.size()) / R;
    if (n * R != static_cast<int>(rows.size()))
        throw ConfigError("experiments have unequal numbers of rows");
    TimeSeriesDataset d;
    d.n = n;
    d.R = R;
    d.p = p;
    d.times.resize(n);
    d.y.assign(R, Eigen::MatrixXd(n, p));
    std::vector<int> seen(R, 0);
    for (const auto& row : rows) {
        const int r = row.exp - 1;
        const int i = seen[r]++;
        if (i >= n) throw ConfigError("experiments have unequal numbers of rows");
        if (r == 0)
            d.times(i) = row.t;
        else if (std::abs(d.times(i) - row.t) > 1e-12)
            throw ConfigError("experiments must share the identical time grid");
        for (int j = 0; j < p; ++j) d.y[r](i, j) = row.x[j];
    }
    for (int i = 1; i < n; ++i)
        if (!(d.times(i) > d.times(i - 1))) throw ConfigError("times must be strictly increasing");
    if (d.times(n - 1) > 1.0 + 1e-9 || d.times(0) < -1e-12)
        throw ConfigError("times must lie in [0,1] (rescaled)");
    return d;
}

// ---------------------------------------------------------------------------
// Edge lists: truth "from,to"; estimates "from,to,strength" (1-based).

inline void write_truth_csv(const std::filesystem::path& path, const Eigen::MatrixXd& adjacency) {
    auto f = detail::open_out(path);
    f << "from,to\n";
    for (int k = 0; k < adjacency.rows(); ++k)
        for (int j = 0; j < adjacency.cols(); ++j)
            if (adjacency(k, j) > 0.5) f << (k + 1) << "," << (j + 1) << "\n";
}

inline void write_edges_csv(const std::filesystem::path& path, const NetworkEstimate& est) {
    auto f = detail::open_out(path);
    f << "from,to,strength\n";
    for (const Edge& e : est.edges)
        f << (e.from + 1) << "," << (e.to + 1) << "," << fmt_double(e.strength) << "\n";
}

// Returns the adjacency (and strengths if present) read from an edge list.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> read_edges_csv(const std::filesystem::path& path, int p) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open edge list: " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw ConfigError("line 1: empty edge file");
    auto header = detail::split_csv_line(line);
    const bool with_strength = header.size() == 3 && header[2] == "strength";
    if (!(header.size() == 2 || with_strength) || header[0] != "from" || header[1] != "to")
        throw ConfigError("line 1: expected header 'from,to[,strength]'");
    Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd strength = Eigen::MatrixXd::Zero(p, p);
    std::size_t line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ConfigError("line " + std::to_string(line_no) + ": bad field count");
        const int from = static_cast<int>(parse_double(cells[0], "from", line_no));
        const int to = static_cast<int>(parse_double(cells[1], "to", line_no));
        if (from < 1 || from > p || to < 1 || to > p)
            throw ConfigError("line " + std::to_string(line_no) + ": vertex index out of range");
        adj(from - 1, to - 1) = 1.0;
        if (with_strength) strength(from - 1, to - 1) = parse_double(cells[2], "strength", line_no);
    }
    return {adj, strength};
}

// ---------------------------------------------------------------------------
// Design dump (debugging): group-annotated header.

inline void write_design_csv(const std::filesystem::path& path, const IntegratedDesign& d) {
    auto f = detail::open_out(path);
    f << "experiment,time";
    if (d.has_time_column) f << ",psi0";
    for (int k = 1; k <= d.p; ++k)
        for (int m = 1; m <= d.M; ++m) f << ",g" << k << "m" << m;
    f << "\n";
    for (int r = 0; r < d.R; ++r)
        for (int i = 0; i < d.n; ++i) {
            f << (r + 1) << "," << fmt_double(d.times(i));
            for (int c = 0; c < d.cols(); ++c) f << "," << fmt_double(d.X(r * d.n + i, c));
            f << "\n";
        }
}

// ---------------------------------------------------------------------------
// Path JSON

inline nlohmann::json path_to_json(const NetworkEstimate& est, int node) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["node"] = node + 1;
    j["lambdas"] = est.lambdas;
    nlohmann::json per_lambda = nlohmann::json::array();
    const auto& norms = est.path_norms[node];
    for (int g = 0; g < norms.rows(); ++g) {
        nlohmann::json entry;
        entry["lambda"] = est.lambdas[g];
        std::vector<int> active;
        std::vector<double> group_norms;
        for (int k = 0; k < norms.cols(); ++k) {
            group_norms.push_back(norms(g, k));
            if (norms(g, k) > 0.0) active.push_back(k + 1);
        }
        entry["active"] = active;
        entry["group_norms"] = group_norms;
        entry["bic"] = est.path_bic[node][g];
        entry["kkt_certified"] = static_cast<bool>(est.path_certified[node][g]);
        per_lambda.push_back(entry);
    }
    j["path"] = per_lambda;
    return j;
}

inline void write_recovery_csv(const std::filesystem::path& path, const RecoveryReport& rep) {
    auto f = detail::open_out(path);
    f << "lambda_index,total_edges,true_edges\n";
    for (std::size_t g = 0; g < rep.curve.size(); ++g)
        f << g << "," << rep.curve[g].total << "," << rep.curve[g].true_selected << "\n";
}

inline nlohmann::json smoother_diagnostics_to_json(const SmoothEstimate& s) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["bandwidth"] = s.bandwidth();
    j["degree"] = s.degree();
    j["kernel"] = kernel_name(s.kernel());
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& [h, gcv] : s.gcv_curve()) curve.push_back({{"h", h}, {"gcv", gcv}});
    j["gcv_curve"] = curve;
    return j;
}

inline nlohmann::json recovery_to_json(const RecoveryReport& rep) {
    nlohmann::json j;
    j["schema_version"] = kSchemaVersion;
    j["auc"] = rep.auc;
    j["confusion"] = {{"tp", rep.tp}, {"fp", rep.fp}, {"fn", rep.fn}, {"tn", rep.tn}};
    return j;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto f = detail::open_out(path);
    f << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open json: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

}  // namespace grade
