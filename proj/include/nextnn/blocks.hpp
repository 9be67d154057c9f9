#pragma once

// Per-core decomposition of the ridge quadratic surrogate: each block of the
// weight vector is solved with the other blocks frozen at the current iterate.

#include "nextnn/common.hpp"
#include "nextnn/nn.hpp"
#include "nextnn/quadratic.hpp"

#include <chrono>
#include <vector>

namespace nextnn {

/// C contiguous, ordered ranges covering [0, Q); the first Q mod C blocks get
/// one extra index.
struct BlockPartition {
    std::vector<IndexRange> blocks;

    std::size_t num_blocks() const { return blocks.size(); }
};

inline BlockPartition block_partition(std::size_t q, std::size_t cores) {
    if (q == 0 || cores == 0) throw std::invalid_argument("block_partition: Q and C must be positive");
    if (cores > q) throw std::invalid_argument("block_partition: more blocks than weights");
    BlockPartition p;
    const std::size_t base = q / cores;
    const std::size_t extra = q % cores;
    std::size_t offset = 0;
    for (std::size_t c = 0; c < cores; ++c) {
        const std::size_t size = base + (c < extra ? 1 : 0);
        p.blocks.push_back({offset, size});
        offset += size;
    }
    return p;
}

/// Solves, for every block c,
///   (A_cc + (lambda/2) I) w_c = b_c - A_{c,-c} w_now_{-c}
/// and concatenates the results in index order. Block solves are independent
/// and run on up to `workers` threads; per-block wall time goes to `block_ms`.
inline Vector block_solve_ridge(const QuadraticModel& model, double lambda, const BlockPartition& partition,
                                const Vector& w_now, std::vector<double>* block_ms = nullptr,
                                std::size_t workers = 1) {
    if (!(lambda > 0.0)) throw std::invalid_argument("block_solve_ridge: lambda must be positive");
    const auto q = model.dim();
    if (w_now.size() != q) throw std::invalid_argument("block_solve_ridge: w_now has wrong length");
    std::size_t covered = 0;
    for (const auto& blk : partition.blocks) covered += blk.size;
    if (covered != static_cast<std::size_t>(q)) throw std::invalid_argument("block_solve_ridge: partition mismatch");

    Vector out(q);
    std::vector<double> times(partition.num_blocks(), 0.0);
    parallel_for(partition.num_blocks(), workers, [&](std::size_t c) {
        const auto start = std::chrono::steady_clock::now();
        const auto off = static_cast<Eigen::Index>(partition.blocks[c].offset);
        const auto len = static_cast<Eigen::Index>(partition.blocks[c].size);
        const auto tail = q - off - len;
        Vector rhs = model.b.segment(off, len);
        if (off > 0) rhs.noalias() -= model.A.block(off, 0, len, off) * w_now.head(off);
        if (tail > 0) rhs.noalias() -= model.A.block(off, off + len, len, tail) * w_now.tail(tail);
        Matrix M = model.A.block(off, off, len, len);
        M.diagonal().array() += 0.5 * lambda;
        out.segment(off, len) = spd_solve(M, rhs);
        times[c] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    });
    if (block_ms) *block_ms = std::move(times);
    return out;
}

}  // namespace nextnn
