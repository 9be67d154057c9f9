#pragma once

// CSV loading, min-max normalisation, train/test split and per-agent
// partitioning, plus a synthetic teacher-network regression generator.

#include "nextnn/common.hpp"
#include "nextnn/dataset.hpp"
#include "nextnn/nn.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace nextnn {

/// Names the target column and the task; `ignore` lists columns to drop.
struct Schema {
    std::string target;
    Task task = Task::regression;
    std::vector<std::string> ignore;
};

namespace detail {

inline std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') quoted = !quoted;
        else if (ch == ',' && !quoted) {
            cells.push_back(trim(cell));
            cell.clear();
        } else if (ch != '\r') cell.push_back(ch);
    }
    cells.push_back(trim(cell));
    return cells;
}

inline bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "?" || cell == "NA" || cell == "NaN" || cell == "nan";
}

}  // namespace detail

/// Reads "key = value" lines (# comments allowed): target, task, ignore.
inline Schema read_schema(std::istream& is) {
    Schema s;
    std::string line;
    bool have_task = false;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (detail::trim(line).empty()) continue;
        if (eq == std::string::npos) throw std::invalid_argument("schema: expected key = value, got '" + line + "'");
        const auto key = detail::trim(line.substr(0, eq));
        const auto value = detail::trim(line.substr(eq + 1));
        if (key == "target") s.target = value;
        else if (key == "task") {
            if (value == "regression") s.task = Task::regression;
            else if (value == "classification") s.task = Task::classification;
            else throw std::invalid_argument("schema: unknown task '" + value + "'");
            have_task = true;
        } else if (key == "ignore") {
            for (auto& c : detail::split_csv_line(value))
                if (!c.empty()) s.ignore.push_back(c);
        } else {
            throw std::invalid_argument("schema: unknown key '" + key + "'");
        }
    }
    if (s.target.empty()) throw std::invalid_argument("schema: missing target");
    if (!have_task) throw std::invalid_argument("schema: missing task");
    return s;
}

inline Schema read_schema_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open schema file '" + path + "'");
    return read_schema(in);
}

/// Maps every column to [0, 1] by min-max; constant columns become 0.
inline void normalize_minmax(Dataset& ds) {
    auto scale = [](auto&& col) {
        if (col.size() == 0) return;
        const double lo = col.minCoeff();
        const double hi = col.maxCoeff();
        if (hi > lo) col = (col.array() - lo) / (hi - lo);
        else col.setZero();
    };
    for (Eigen::Index c = 0; c < ds.inputs.cols(); ++c) scale(ds.inputs.col(c));
    scale(ds.targets);
}

/// Parses a headed numeric CSV. Rows with a missing cell are dropped, then
/// every column is min-max normalised over the whole file.
inline Dataset parse_dataset(std::istream& is, const Schema& schema) {
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("dataset: empty file");
    const auto header = detail::split_csv_line(line);
    std::vector<std::size_t> feature_cols;
    std::size_t target_col = header.size();
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == schema.target) target_col = c;
        else if (std::find(schema.ignore.begin(), schema.ignore.end(), header[c]) == schema.ignore.end())
            feature_cols.push_back(c);
    }
    if (target_col == header.size())
        throw std::invalid_argument("dataset: target column '" + schema.target + "' not in header");
    if (feature_cols.empty()) throw std::invalid_argument("dataset: no feature columns");

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw std::invalid_argument("dataset: line " + std::to_string(line_no) + " has " +
                                        std::to_string(cells.size()) + " cells, expected " +
                                        std::to_string(header.size()));
        bool missing = false;
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const bool used = c == target_col || std::find(feature_cols.begin(), feature_cols.end(), c) != feature_cols.end();
            if (used && detail::is_missing(cells[c])) missing = true;
        }
        if (missing) continue;
        std::vector<double> row;
        row.reserve(feature_cols.size() + 1);
        auto parse = [&](std::size_t c) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cells[c], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != cells[c].size() || !std::isfinite(v))
                throw std::invalid_argument("dataset: non-numeric cell '" + cells[c] + "' on line " +
                                            std::to_string(line_no));
            return v;
        };
        for (auto c : feature_cols) row.push_back(parse(c));
        row.push_back(parse(target_col));
        rows.push_back(std::move(row));
    }

    Dataset ds;
    ds.task = schema.task;
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto d = static_cast<Eigen::Index>(feature_cols.size());
    ds.inputs.resize(n, d);
    ds.targets.resize(n);
    for (Eigen::Index m = 0; m < n; ++m) {
        for (Eigen::Index c = 0; c < d; ++c) ds.inputs(m, c) = rows[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)];
        ds.targets(m) = rows[static_cast<std::size_t>(m)].back();
    }
    normalize_minmax(ds);
    if (ds.task == Task::classification)
        for (Eigen::Index m = 0; m < n; ++m)
            if (ds.targets(m) != 0.0 && ds.targets(m) != 1.0)
                throw std::invalid_argument("dataset: classification target is not binary");
    return ds;
}

inline Dataset load_dataset(const std::string& path, const Schema& schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
    return parse_dataset(in, schema);
}

/// Held-out test rows plus one training set per agent. The *_rows members
/// record original row indices.
struct PartitionedData {
    Dataset test;
    std::vector<Dataset> locals;
    std::vector<std::size_t> test_rows;
    std::vector<std::vector<std::size_t>> local_rows;
};

inline Dataset select_rows(const Dataset& ds, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.task = ds.task;
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), ds.inputs.cols());
    out.targets.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        out.inputs.row(static_cast<Eigen::Index>(k)) = ds.inputs.row(static_cast<Eigen::Index>(rows[k]));
        out.targets(static_cast<Eigen::Index>(k)) = ds.targets(static_cast<Eigen::Index>(rows[k]));
    }
    return out;
}

/// Seeded shuffle; the first ceil(N * test_frac) rows form the test set and the
/// rest are dealt round-robin to the agents.
inline PartitionedData split_and_partition(const Dataset& ds, double test_frac, std::size_t agents,
                                           std::uint64_t seed) {
    if (!(test_frac > 0.0 && test_frac < 1.0)) throw std::invalid_argument("test fraction must lie in (0, 1)");
    if (agents == 0) throw std::invalid_argument("need at least one agent");
    const auto n = ds.size();
    const auto n_test = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * test_frac));
    if (n_test >= n || n - n_test < agents)
        throw std::invalid_argument("too few rows (" + std::to_string(n) + ") for the split and " +
                                    std::to_string(agents) + " agents");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    PartitionedData out;
    out.test_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.local_rows.resize(agents);
    for (std::size_t k = n_test; k < n; ++k) out.local_rows[(k - n_test) % agents].push_back(order[k]);
    out.test = select_rows(ds, out.test_rows);
    for (const auto& rows : out.local_rows) out.locals.push_back(select_rows(ds, rows));
    return out;
}

/// Inputs uniform in [0, 1]^d, targets from a random teacher network plus
/// Gaussian noise, then min-max normalised.
inline Dataset synthetic_regression(const NetArch& teacher, std::size_t n, double noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Vector w = init_weights(teacher, seed ^ 0x9e3779b97f4a7c15ULL) * 2.0;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, noise);
    Dataset ds;
    ds.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(teacher.input_dim));
    ds.targets.resize(static_cast<Eigen::Index>(n));
    for (Eigen::Index m = 0; m < ds.inputs.rows(); ++m) {
        for (Eigen::Index c = 0; c < ds.inputs.cols(); ++c) ds.inputs(m, c) = unif(rng);
        ds.targets(m) = forward(teacher, w, ds.inputs.row(m).transpose()).output + gauss(rng);
    }
    normalize_minmax(ds);
    return ds;
}

}  // namespace nextnn
