#pragma once

// File formats: datasets (CSV + JSON sidecar), lifted estimates, regressor
// pairs and solver reports. Needs nlohmann/json on the include path.

#include <mlr/core.hpp>
#include <mlr/solver_report.hpp>
#include <mlr/synth.hpp>

#include <nlohmann/json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mlr::io {

using json = nlohmann::json;

/// Shortest text that reads back bit-identically is at most 17 significant digits.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r' || s.back() == '\t'))
        s.remove_suffix(1);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ConfigError("parse error: '" + std::string(s) + "' is not a number");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

/// Writes through a temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path &path, const std::string &content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw ConfigError("cannot write " + tmp.string());
        out << content;
        if (!out)
            throw ConfigError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// "data" or "data.csv" -> "data".
inline std::string strip_extension(const std::string &prefix) {
    for (const char *ext : {".csv", ".json"}) {
        std::string_view e(ext);
        if (prefix.size() > e.size() && prefix.compare(prefix.size() - e.size(), e.size(), e) == 0)
            return prefix.substr(0, prefix.size() - e.size());
    }
    return prefix;
}

inline json vec_to_json(const Vec &v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Vec vec_from_json(const json &j) {
    auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(values.data(), static_cast<Index>(values.size()));
}

// ------------------------------------------------------------------ datasets

inline json meta_to_json(const MixedDataset &d) {
    json j;
    j["model"] = d.meta.model;
    j["seed"] = d.meta.seed;
    j["p"] = d.p();
    j["n"] = d.n();
    j["sigma"] = d.meta.sigma;
    j["n1"] = d.n1();
    j["n2"] = d.n2();
    if (d.meta.truth) {
        j["beta1"] = vec_to_json(d.meta.truth->beta1());
        j["beta2"] = vec_to_json(d.meta.truth->beta2());
    }
    return j;
}

/// Writes prefix.csv (header x_1..x_p,y[,z][,e]) and prefix.json.
inline void write_dataset(const std::string &prefix_in, const MixedDataset &d) {
    d.validate();
    const std::string prefix = strip_extension(prefix_in);
    std::ostringstream csv;
    for (Index j = 0; j < d.p(); ++j)
        csv << "x_" << (j + 1) << ',';
    csv << 'y';
    if (d.z)
        csv << ",z";
    if (d.e)
        csv << ",e";
    csv << '\n';
    for (Index i = 0; i < d.n(); ++i) {
        for (Index j = 0; j < d.p(); ++j)
            csv << format_double(d.X(i, j)) << ',';
        csv << format_double(d.y(i));
        if (d.z)
            csv << ',' << (*d.z)(i);
        if (d.e)
            csv << ',' << format_double((*d.e)(i));
        csv << '\n';
    }
    write_atomic(prefix + ".csv", csv.str());
    write_atomic(prefix + ".json", meta_to_json(d).dump(2) + "\n");
}

namespace detail {
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline Table read_table(const std::string &path) {
    std::istringstream in(read_file(path));
    Table t;
    std::string line;
    if (!std::getline(in, line))
        throw ConfigError(path + ": empty file");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    t.header = split_csv_line(line);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto cells = split_csv_line(line);
        if (cells.size() != t.header.size())
            throw ConfigError(path + ": row has " + std::to_string(cells.size()) + " fields, header has " +
                              std::to_string(t.header.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto &c : cells)
            row.push_back(parse_double(c));
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Number of leading x_1..x_p columns; checks their names.
inline Index design_columns(const Table &t, const std::string &path) {
    Index p = 0;
    while (p < static_cast<Index>(t.header.size()) && t.header[static_cast<std::size_t>(p)] == "x_" + std::to_string(p + 1))
        ++p;
    if (p == 0)
        throw ConfigError(path + ": header must start with x_1");
    return p;
}
} // namespace detail

inline MixedDataset read_dataset(const std::string &prefix_in) {
    const std::string prefix = strip_extension(prefix_in);
    const std::string path = prefix + ".csv";
    auto t = detail::read_table(path);
    const Index p = detail::design_columns(t, path);
    std::size_t col = static_cast<std::size_t>(p);
    if (col >= t.header.size() || t.header[col] != "y")
        throw ConfigError(path + ": expected column y after the design columns");
    int z_col = -1, e_col = -1;
    for (std::size_t k = col + 1; k < t.header.size(); ++k) {
        if (t.header[k] == "z")
            z_col = static_cast<int>(k);
        else if (t.header[k] == "e")
            e_col = static_cast<int>(k);
        else
            throw ConfigError(path + ": unexpected column " + t.header[k]);
    }
    const Index n = static_cast<Index>(t.rows.size());
    if (n == 0)
        throw ConfigError(path + ": no data rows");
    MixedDataset d;
    d.X.resize(n, p);
    d.y.resize(n);
    if (z_col >= 0)
        d.z = Labels(n);
    if (e_col >= 0)
        d.e = Vec(n);
    for (Index i = 0; i < n; ++i) {
        const auto &row = t.rows[static_cast<std::size_t>(i)];
        for (Index j = 0; j < p; ++j)
            d.X(i, j) = row[static_cast<std::size_t>(j)];
        d.y(i) = row[col];
        if (z_col >= 0)
            (*d.z)(i) = static_cast<int>(row[static_cast<std::size_t>(z_col)]);
        if (e_col >= 0)
            (*d.e)(i) = row[static_cast<std::size_t>(e_col)];
    }
    if (std::filesystem::exists(prefix + ".json")) {
        json j = json::parse(read_file(prefix + ".json"));
        d.meta.model = j.value("model", "mixed");
        d.meta.seed = j.value("seed", std::uint64_t{0});
        d.meta.sigma = j.value("sigma", 0.0);
        if (j.contains("p") && j["p"].get<Index>() != p)
            throw ConfigError(prefix + ".json: p disagrees with the CSV");
        if (j.contains("n") && j["n"].get<Index>() != n)
            throw ConfigError(prefix + ".json: n disagrees with the CSV");
        if (j.contains("beta1") && j.contains("beta2"))
            d.meta.truth = RegressorPair(vec_from_json(j["beta1"]), vec_from_json(j["beta2"]));
    }
    d.validate();
    return d;
}

// ------------------------------------------------------------ phase datasets

/// Writes prefix.csv (header x_1..x_p,zmeas[,e]) and prefix.json.
inline void write_phase_dataset(const std::string &prefix_in, const PhaseDataset &d) {
    d.validate();
    const std::string prefix = strip_extension(prefix_in);
    std::ostringstream csv;
    for (Index j = 0; j < d.p(); ++j)
        csv << "x_" << (j + 1) << ',';
    csv << "zmeas" << (d.e ? ",e" : "") << '\n';
    for (Index i = 0; i < d.n(); ++i) {
        for (Index j = 0; j < d.p(); ++j)
            csv << format_double(d.X(i, j)) << ',';
        csv << format_double(d.zmeas(i));
        if (d.e)
            csv << ',' << format_double((*d.e)(i));
        csv << '\n';
    }
    json j;
    j["model"] = to_string(d.model);
    j["seed"] = d.seed;
    j["p"] = d.p();
    j["n"] = d.n();
    j["sigma"] = d.sigma;
    if (d.truth)
        j["beta"] = vec_to_json(*d.truth);
    write_atomic(prefix + ".csv", csv.str());
    write_atomic(prefix + ".json", j.dump(2) + "\n");
}

inline PhaseDataset read_phase_dataset(const std::string &prefix_in) {
    const std::string prefix = strip_extension(prefix_in);
    const std::string path = prefix + ".csv";
    auto t = detail::read_table(path);
    const Index p = detail::design_columns(t, path);
    std::size_t col = static_cast<std::size_t>(p);
    if (col >= t.header.size() || t.header[col] != "zmeas")
        throw ConfigError(path + ": expected column zmeas after the design columns");
    bool has_e = t.header.size() == col + 2 && t.header[col + 1] == "e";
    if (t.header.size() > col + 1 && !has_e)
        throw ConfigError(path + ": unexpected trailing columns");
    const Index n = static_cast<Index>(t.rows.size());
    if (n == 0)
        throw ConfigError(path + ": no data rows");
    PhaseDataset d;
    d.X.resize(n, p);
    d.zmeas.resize(n);
    if (has_e)
        d.e = Vec(n);
    for (Index i = 0; i < n; ++i) {
        const auto &row = t.rows[static_cast<std::size_t>(i)];
        for (Index j = 0; j < p; ++j)
            d.X(i, j) = row[static_cast<std::size_t>(j)];
        d.zmeas(i) = row[col];
        if (has_e)
            (*d.e)(i) = row[col + 1];
    }
    if (std::filesystem::exists(prefix + ".json")) {
        json j = json::parse(read_file(prefix + ".json"));
        d.model = j.value("model", "noisy-phase") == "noisy-magnitude" ? PhaseModel::noisy_magnitude
                                                                          : PhaseModel::noisy_phase;
        d.seed = j.value("seed", std::uint64_t{0});
        d.sigma = j.value("sigma", 0.0);
        if (j.contains("beta"))
            d.truth = vec_from_json(j["beta"]);
    }
    d.validate();
    return d;
}

// ------------------------------------------------------- estimates and pairs

/// Header c_1..c_p, then the p rows of K, then one row holding g.
inline void write_estimate(const std::string &path, const LiftedEstimate &est) {
    std::ostringstream csv;
    const Index p = est.dim();
    for (Index j = 0; j < p; ++j)
        csv << (j ? "," : "") << "c_" << (j + 1);
    csv << '\n';
    auto row = [&](auto &&values) {
        for (Index j = 0; j < p; ++j)
            csv << (j ? "," : "") << format_double(values(j));
        csv << '\n';
    };
    for (Index i = 0; i < p; ++i)
        row(est.K().row(i));
    row(est.g());
    write_atomic(path, csv.str());
}

inline LiftedEstimate read_estimate(const std::string &path) {
    auto t = detail::read_table(path);
    const Index p = static_cast<Index>(t.header.size());
    if (static_cast<Index>(t.rows.size()) != p + 1)
        throw ConfigError(path + ": expected p rows of K followed by one row of g");
    Mat K(p, p);
    Vec g(p);
    for (Index i = 0; i < p; ++i)
        for (Index j = 0; j < p; ++j)
            K(i, j) = t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    for (Index j = 0; j < p; ++j)
        g(j) = t.rows[static_cast<std::size_t>(p)][static_cast<std::size_t>(j)];
    return {K, g};
}

/// Header beta1,beta2 and one row per coordinate.
inline void write_pair(const std::string &path, const RegressorPair &pair) {
    std::ostringstream csv;
    csv << "beta1,beta2\n";
    for (Index j = 0; j < pair.dim(); ++j)
        csv << format_double(pair.beta1()(j)) << ',' << format_double(pair.beta2()(j)) << '\n';
    write_atomic(path, csv.str());
}

inline RegressorPair read_pair(const std::string &path) {
    auto t = detail::read_table(path);
    if (t.header != std::vector<std::string>{"beta1", "beta2"})
        throw ConfigError(path + ": expected header beta1,beta2");
    const Index p = static_cast<Index>(t.rows.size());
    Vec b1(p), b2(p);
    for (Index j = 0; j < p; ++j) {
        b1(j) = t.rows[static_cast<std::size_t>(j)][0];
        b2(j) = t.rows[static_cast<std::size_t>(j)][1];
    }
    return {b1, b2};
}

inline json report_to_json(const SolverReport &r) {
    json j;
    j["program"] = r.program;
    j["iterations"] = r.iterations;
    j["stop_reason"] = to_string(r.stop_reason);
    j["wall_time"] = r.wall_time;
    j["parameter"] = r.parameter;
    j["objective_trace"] = r.objective_trace;
    j["primal_residual_trace"] = r.primal_residual_trace;
    j["dual_residual_trace"] = r.dual_residual_trace;
    return j;
}

} // namespace mlr::io
