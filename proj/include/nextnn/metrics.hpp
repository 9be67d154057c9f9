#pragma once

// Per-round traces: cost at the network average, test error, disagreement
// and communication accounting.

#include "nextnn/common.hpp"
#include "nextnn/dataset.hpp"
#include "nextnn/nn.hpp"
#include "nextnn/objectives.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace nextnn {

/// D = (1/I) sum_i ||w_i - w_bar||_inf.
inline double disagreement(std::span<const Vector> ws) {
    if (ws.empty()) throw std::invalid_argument("disagreement: no agents");
    const Vector mean = average(ws);
    double total = 0.0;
    for (const auto& w : ws) total += (w - mean).lpNorm<Eigen::Infinity>();
    return total / static_cast<double>(ws.size());
}

/// Mean squared error for regression; misclassification rate for
/// classification with threshold 0.5 (ties go to class 1).
inline double test_metric(const NetArch& arch, const Vector& w, const Dataset& test, Task task) {
    if (test.empty()) throw std::invalid_argument("test_metric: empty test set");
    double total = 0.0;
    for (Eigen::Index m = 0; m < test.inputs.rows(); ++m) {
        const double f = forward(arch, w, test.inputs.row(m).transpose()).output;
        const double d = test.targets(m);
        if (task == Task::regression) total += (f - d) * (f - d);
        else total += ((f >= 0.5 ? 1.0 : 0.0) != d) ? 1.0 : 0.0;
    }
    return total / static_cast<double>(test.size());
}

enum class Exchange { next, distgrad };

/// Scalars sent in one round over `directed_edges` links: NEXT ships z and y
/// (2Q per link), DistGrad ships only z (Q per link).
inline std::uint64_t comm_account(std::size_t directed_edges, std::size_t q, Exchange algo) {
    const std::uint64_t per_link = (algo == Exchange::next ? 2u : 1u) * static_cast<std::uint64_t>(q);
    return per_link * static_cast<std::uint64_t>(directed_edges);
}

struct TraceRow {
    std::size_t n = 0;
    double alpha = 0.0;
    double cost = 0.0;
    double test_metric = 0.0;
    double disagreement = 0.0;
    std::uint64_t scalars_cum = 0;
    double ms = 0.0;
};

/// Wall time of one block, summed over agents, for one round.
struct BlockTiming {
    std::size_t n = 0;
    std::size_t block = 0;
    double ms = 0.0;
};

inline constexpr const char* kTraceHeader = "n,alpha,cost,test_metric,disagreement,scalars_cum,ms";

struct TraceSet {
    std::vector<TraceRow> rows;
    std::vector<BlockTiming> block_timings;

    const TraceRow& last() const {
        if (rows.empty()) throw std::logic_error("TraceSet: no rows");
        return rows.back();
    }

    void append(const TraceRow& row) {
        if (!rows.empty() && (row.n <= rows.back().n || row.scalars_cum < rows.back().scalars_cum))
            throw std::logic_error("TraceSet: rows must increase in n with nondecreasing counters");
        rows.push_back(row);
    }

    void write_csv(std::ostream& os) const {
        os << kTraceHeader << '\n';
        os << std::setprecision(17);
        for (const auto& r : rows)
            os << r.n << ',' << r.alpha << ',' << r.cost << ',' << r.test_metric << ',' << r.disagreement << ','
               << r.scalars_cum << ',' << r.ms << '\n';
    }

    void write_block_csv(std::ostream& os) const {
        os << "n,block,ms\n" << std::setprecision(17);
        for (const auto& b : block_timings) os << b.n << ',' << b.block << ',' << b.ms << '\n';
    }

    static TraceSet read_csv(std::istream& is) {
        std::string line;
        if (!std::getline(is, line) || line != kTraceHeader)
            throw std::invalid_argument("trace CSV: unexpected header");
        TraceSet t;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            TraceRow r;
            char c1, c2, c3, c4, c5, c6;
            if (!(ls >> r.n >> c1 >> r.alpha >> c2 >> r.cost >> c3 >> r.test_metric >> c4 >> r.disagreement >> c5 >>
                  r.scalars_cum >> c6 >> r.ms))
                throw std::invalid_argument("trace CSV: malformed row '" + line + "'");
            t.append(r);
        }
        return t;
    }
};

/// Flat CSV row of a weight vector, full precision.
inline void write_weights_csv_row(std::ostream& os, const Vector& w) {
    os << std::setprecision(17);
    for (Eigen::Index k = 0; k < w.size(); ++k) os << (k ? "," : "") << w(k);
    os << '\n';
}

inline Vector read_weights_csv_row(const std::string& line) {
    std::vector<double> vals;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
    return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace nextnn
